use thiserror::Error;

/// Which singular point of the transformed tracking model a guard tripped on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularPoint {
    /// `cos(psi_l - psi_b) = 0`: stabilizing function for `u_l` is undefined.
    Sp1,
    /// `b_ul = 0`: the transformed input matrix loses rank.
    Sp2,
    /// `u_l = 0` (or `u <= 0`): sideslip angle undefined.
    Sp3,
    /// `p_e = 0`: azimuth angle undefined.
    Sp4,
}

impl std::fmt::Display for SingularPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SingularPoint::Sp1 => "SP-1",
            SingularPoint::Sp2 => "SP-2",
            SingularPoint::Sp3 => "SP-3",
            SingularPoint::Sp4 => "SP-4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sideslip angle undefined ({sp}): u = {u}, v = {v}")]
    SingularSideslip { sp: SingularPoint, u: f64, v: f64 },

    #[error("azimuth angle undefined ({sp}): p_e = {p_e:e}")]
    SingularAzimuth { sp: SingularPoint, p_e: f64 },

    #[error("stabilizing function undefined ({sp}): cos(psi_l - psi_b) = {cos:e}")]
    SingularStabilizer { sp: SingularPoint, cos: f64 },

    #[error("input matrix not invertible ({sp}): b_ul = {b_ul:e}, b_r = {b_r:e}")]
    SingularInputMatrix { sp: SingularPoint, b_ul: f64, b_r: f64 },

    #[error("integration failed at t = {t} s: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("quadratic program infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    /// The singular point behind this error, if it is a singular guard.
    pub fn singular_point(&self) -> Option<SingularPoint> {
        match self {
            Error::SingularSideslip { sp, .. }
            | Error::SingularAzimuth { sp, .. }
            | Error::SingularStabilizer { sp, .. }
            | Error::SingularInputMatrix { sp, .. } => Some(*sp),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}
