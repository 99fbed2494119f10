use std::path::Path;

use vessel_cbf::ScenarioConfig;

use crate::error::CliError;

/// Reads and parses a scenario file. Validation is left to the caller so
/// command-line overrides can be applied first.
pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text, path)
}

pub fn parse(text: &str, path: &Path) -> Result<ScenarioConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let field = match err.path().to_string() {
            p if p == "." => "<root>".to_string(),
            p => p,
        };
        let inner = err.inner();
        CliError::Parse {
            path: path.to_path_buf(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })
}

pub fn validate(cfg: &ScenarioConfig, path: &Path) -> Result<(), CliError> {
    cfg.validate().map_err(|source| CliError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}
