use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use vessel_cbf::controller::{decay_rate_diagnostic, min_cd, v_r};
use vessel_cbf::harness::{count_events, detect_events};
use vessel_cbf::{Outcome, ScenarioConfig, SimLog};

#[derive(Debug, Serialize)]
pub struct FinalErrors {
    pub t: f64,
    pub p_e: f64,
    pub psi_le: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub mode: &'static str,
    pub outcome: Outcome,
    pub steps_logged: usize,
    pub final_errors: Option<FinalErrors>,
    pub events: BTreeMap<&'static str, usize>,
    pub activation_fraction: f64,
    pub min_u: Option<f64>,
    pub decay_rate_diagnostic: f64,
    /// Lower bound on `c_d` from the first logged sample; absent when it
    /// cannot be evaluated (target on top of the vessel).
    pub min_cd: Option<f64>,
    pub csv: String,
}

impl RunReport {
    pub fn build(cfg: &ScenarioConfig, log: &SimLog, csv: String) -> Self {
        let events = count_events(&detect_events(log, &cfg.cbf));
        let final_errors = log.records.last().map(|r| FinalErrors {
            t: r.t,
            p_e: r.errors.p_e,
            psi_le: r.errors.psi_le,
        });
        let min_u = log
            .records
            .iter()
            .map(|r| r.state.u)
            .reduce(f64::min);
        let min_cd = log
            .records
            .first()
            .and_then(|r| min_cd(r.errors.p_e, v_r(&r.errors, &cfg.gains)).ok());
        Self {
            mode: log.mode.label(),
            outcome: log.outcome.clone(),
            steps_logged: log.records.len(),
            final_errors,
            events,
            activation_fraction: log.activation_fraction(),
            min_u,
            decay_rate_diagnostic: decay_rate_diagnostic(&cfg.gains),
            min_cd,
            csv,
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let outcome = match &self.outcome {
            Outcome::Completed => "completed".to_string(),
            Outcome::Breakdown { t, reason } => format!("breakdown at t = {t:.2} s ({reason})"),
        };
        let _ = writeln!(s, "[{}] {outcome}", self.mode);
        let _ = writeln!(s, "  samples logged:      {}", self.steps_logged);
        if let Some(f) = &self.final_errors {
            let _ = writeln!(
                s,
                "  final errors:        t = {:.2} s, p_e = {:.4} m, psi_le = {:.4} deg",
                f.t,
                f.p_e,
                f.psi_le.to_degrees()
            );
        }
        if let Some(u) = self.min_u {
            let _ = writeln!(s, "  min surge:           {u:.4} m/s");
        }
        let _ = writeln!(s, "  QP activation:       {:.2} %", 100.0 * self.activation_fraction);
        if let Some(c) = self.min_cd {
            let _ = writeln!(s, "  c_d lower bound:     {c:.4} m");
        }
        let _ = writeln!(s, "  decay rate bound:    {:.4}", self.decay_rate_diagnostic);
        if !self.events.is_empty() {
            let list: Vec<String> = self.events.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(s, "  events:              {}", list.join(", "));
        }
        let _ = writeln!(s, "  csv:                 {}", self.csv);
        s
    }
}

#[derive(Debug, Serialize)]
pub struct ModeSummary {
    pub mode: &'static str,
    pub breakdown_time: Option<f64>,
    pub completed: bool,
    pub final_p_e: Option<f64>,
    pub final_u: Option<f64>,
    /// Means over the last 20 s of logged samples.
    pub mean_p_e_last_20s: Option<f64>,
    pub mean_u_last_20s: Option<f64>,
    pub activation_fraction: f64,
}

const TAIL_WINDOW: f64 = 20.0;

impl ModeSummary {
    pub fn build(log: &SimLog) -> Self {
        let last = log.records.last();
        let (mean_p_e, mean_u) = match last {
            Some(end) => {
                let tail: Vec<_> = log
                    .records
                    .iter()
                    .filter(|r| r.t >= end.t - TAIL_WINDOW - 1e-9)
                    .collect();
                let n = tail.len() as f64;
                (
                    Some(tail.iter().map(|r| r.errors.p_e).sum::<f64>() / n),
                    Some(tail.iter().map(|r| r.state.u).sum::<f64>() / n),
                )
            }
            None => (None, None),
        };
        Self {
            mode: log.mode.label(),
            breakdown_time: log.breakdown_time(),
            completed: matches!(log.outcome, Outcome::Completed),
            final_p_e: last.map(|r| r.errors.p_e),
            final_u: last.map(|r| r.state.u),
            mean_p_e_last_20s: mean_p_e,
            mean_u_last_20s: mean_u,
            activation_fraction: log.activation_fraction(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub runs: Vec<RunReport>,
    pub summary: Vec<ModeSummary>,
}

impl CompareReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "mode", "end", "p_e final", "p_e 20s", "u 20s", "active %"
        );
        for m in &self.summary {
            let end = match m.breakdown_time {
                Some(t) => format!("bd {t:.2}"),
                None => "completed".into(),
            };
            let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<10} {:>12} {:>12} {:>12} {:>12} {:>12.2}",
                m.mode,
                end,
                f(m.final_p_e),
                f(m.mean_p_e_last_20s),
                f(m.mean_u_last_20s),
                100.0 * m.activation_fraction
            );
        }
        s
    }
}
