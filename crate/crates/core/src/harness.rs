//! Closed-loop simulation.
//!
//! [`run`] wires the plant, the jerk filter, the polar transforms, the
//! reference controller and (optionally) the QP filter into a fixed-step loop
//! and records every sample. A run that blows up is not an error: it ends with
//! [`Outcome::Breakdown`] and keeps the samples up to the last valid one.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cbf::{self, Branch, CbfParams};
use crate::controller::{self, ErrorState, Gains, ReferencePoint};
use crate::error::{Error, Result};
use crate::qp::{self, QpStatus};
use crate::transforms::{lowpass_update, wrap_angle, FilterState, PolarBundle};
use crate::vessel::{self, ControlInput, VesselParams, VesselState};

/// Any state or input component beyond this magnitude ends the run.
pub const BREAKDOWN_THRESHOLD: f64 = 1e9;

/// `|X|` above which a step counts as a QP activation.
pub const ACTIVATION_EPS: f64 = 1e-6;

/// Surge speed margin above `eps_u` that raises a surge event, m/s.
pub const SURGE_MARGIN: f64 = 0.1;

/// Error radius below which a small-radius event is raised, m.
pub const SMALL_RADIUS: f64 = 1.0;

/// One piece of the reference path: constant speed and constant turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    /// s
    pub duration: f64,
    /// m/s
    pub u_ld: f64,
    /// rad/s; zero for a straight line
    pub psi_ld_dot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Start pose of the reference point (m, m, rad).
    pub x0: f64,
    pub y0: f64,
    pub psi0: f64,
    pub segments: Vec<Segment>,
}

impl Default for TrajectorySpec {
    /// 60 s straight east from (100, 30) at 5 m/s, then a clockwise circle of
    /// radius 100 m.
    fn default() -> Self {
        Self {
            x0: 100.0,
            y0: 30.0,
            psi0: 0.0,
            segments: vec![
                Segment {
                    duration: 60.0,
                    u_ld: 5.0,
                    psi_ld_dot: 0.0,
                },
                Segment {
                    duration: 240.0,
                    u_ld: 5.0,
                    psi_ld_dot: -0.05,
                },
            ],
        }
    }
}

impl TrajectorySpec {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Start times of every segment after the first.
    pub fn joins(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for seg in self.segments.iter().take(self.segments.len().saturating_sub(1)) {
            t += seg.duration;
            out.push(t);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter {
                name: "trajectory.segments",
                reason: "at least one segment is required".into(),
            });
        }
        crate::error::ensure_finite("trajectory start pose", &[self.x0, self.y0, self.psi0])?;
        for seg in &self.segments {
            if !(seg.duration.is_finite() && seg.duration > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "trajectory.segments.duration",
                    reason: format!("must be finite and > 0, got {}", seg.duration),
                });
            }
            crate::error::ensure_finite("trajectory segment", &[seg.u_ld, seg.psi_ld_dot])?;
        }
        Ok(())
    }
}

/// Advances a pose along an arc of constant speed and turn rate.
fn advance(x: f64, y: f64, psi: f64, u: f64, w: f64, dt: f64) -> (f64, f64, f64) {
    if w.abs() < 1e-12 {
        let (s, c) = psi.sin_cos();
        (x + u * dt * c, y + u * dt * s, psi)
    } else {
        let psi1 = psi + w * dt;
        (
            x + u / w * (psi1.sin() - psi.sin()),
            y - u / w * (psi1.cos() - psi.cos()),
            psi1,
        )
    }
}

/// Reference point at time `t`.
///
/// A time exactly on a segment boundary belongs to the later segment; times
/// past the end follow the last segment. `psi_ld` is not wrapped.
pub fn reference_at(t: f64, spec: &TrajectorySpec) -> ReferencePoint {
    let (mut x, mut y, mut psi) = (spec.x0, spec.y0, spec.psi0);
    let mut start = 0.0;
    let last = spec.segments.len().saturating_sub(1);
    for (i, seg) in spec.segments.iter().enumerate() {
        let end = start + seg.duration;
        if i == last || t < end {
            let (xd, yd, pd) = advance(x, y, psi, seg.u_ld, seg.psi_ld_dot, (t - start).max(0.0));
            return ReferencePoint {
                x_d: xd,
                y_d: yd,
                psi_ld: pd,
                u_ld: seg.u_ld,
                u_ld_dot: 0.0,
                psi_ld_dot: seg.psi_ld_dot,
            };
        }
        (x, y, psi) = advance(x, y, psi, seg.u_ld, seg.psi_ld_dot, seg.duration);
        start = end;
    }
    ReferencePoint {
        x_d: x,
        y_d: y,
        psi_ld: psi,
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Apply `tau_ref` unmodified.
    #[serde(rename = "reference", alias = "ReferenceOnly")]
    ReferenceOnly,
    /// Apply `tau_ref + X` with `X` from the QP.
    #[serde(rename = "qp", alias = "QpFiltered")]
    QpFiltered,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::ReferenceOnly => "reference",
            Mode::QpFiltered => "qp",
        }
    }
}

fn default_mu() -> f64 {
    FilterState::DEFAULT_MU
}

fn default_threshold() -> f64 {
    BREAKDOWN_THRESHOLD
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub params: VesselParams,
    #[serde(default)]
    pub gains: Gains,
    #[serde(default)]
    pub cbf: CbfParams,
    #[serde(default = "ScenarioConfig::default_mode")]
    pub mode: Mode,
    /// Integration and control step, s.
    pub dt: f64,
    /// Simulated time, s.
    pub duration: f64,
    pub initial_state: VesselState,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    /// Weight of the newest sample in the jerk filter.
    #[serde(default = "default_mu")]
    pub filter_mu: f64,
    #[serde(default = "default_threshold")]
    pub breakdown_threshold: f64,
}

impl ScenarioConfig {
    fn default_mode() -> Mode {
        Mode::QpFiltered
    }

    /// The towing scenario: start at (90, 25) heading 30 deg with 1 m/s surge,
    /// 300 s at 10 ms steps.
    pub fn towing_scenario(mode: Mode) -> Self {
        Self {
            params: VesselParams::reference_vessel(),
            gains: Gains::default(),
            cbf: CbfParams::default(),
            mode,
            dt: 0.01,
            duration: 300.0,
            initial_state: VesselState {
                x: 90.0,
                y: 25.0,
                psi: 30f64.to_radians(),
                u: 1.0,
                v: 0.0,
                r: 0.0,
            },
            trajectory: TrajectorySpec::default(),
            filter_mu: FilterState::DEFAULT_MU,
            breakdown_threshold: BREAKDOWN_THRESHOLD,
        }
    }

    /// Number of steps; the log holds one more record than this.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt * (1.0 + 1e-12)).floor() as usize
    }

    /// Checks every field. A zero duration is accepted here.
    pub fn validate_for_run(&self) -> Result<()> {
        self.params.validate()?;
        self.gains.validate()?;
        self.cbf.validate()?;
        self.trajectory.validate()?;
        crate::error::ensure_positive("dt", self.dt)?;
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "duration",
                reason: format!("must be finite and >= 0, got {}", self.duration),
            });
        }
        if self.trajectory.total_duration() + 1e-9 < self.duration {
            return Err(Error::InvalidParameter {
                name: "trajectory.segments",
                reason: format!(
                    "segments cover {} s but the run lasts {} s",
                    self.trajectory.total_duration(),
                    self.duration
                ),
            });
        }
        crate::error::ensure_finite("initial_state", &self.initial_state.to_array())?;
        if !(self.initial_state.u > 0.0) {
            return Err(Error::InvalidParameter {
                name: "initial_state.u",
                reason: format!("initial surge speed must be > 0, got {}", self.initial_state.u),
            });
        }
        FilterState::new(self.filter_mu)?;
        crate::error::ensure_positive("breakdown_threshold", self.breakdown_threshold)
    }

    /// As [`validate_for_run`](Self::validate_for_run), but also requires a
    /// positive duration.
    pub fn validate(&self) -> Result<()> {
        self.validate_for_run()?;
        crate::error::ensure_positive("duration", self.duration)
    }
}

/// Everything computed at one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t: f64,
    pub state: VesselState,
    pub reference: ReferencePoint,
    pub bundle: PolarBundle,
    pub errors: ErrorState,
    pub alpha: [f64; 2],
    pub tau_ref: ControlInput,
    pub tau: ControlInput,
    /// `tau - tau_ref`.
    pub correction: ControlInput,
    pub h_cc1: f64,
    pub h_cc2: f64,
    pub branch: Branch,
    /// Whether the CC-1 row was part of the QP (outside the interior band).
    pub cc1_active: bool,
    /// Whether every assembled row holds at `X = 0`.
    pub feasible_at_zero: bool,
    /// Drift part of the CC-1 barrier's second derivative.
    pub cc1_drift: f64,
    pub m_closed_form: f64,
    /// `None` when the QP is not run.
    pub qp_status: Option<QpStatus>,
    pub slack: f64,
    pub v2: f64,
}

impl SimRecord {
    /// `wrap(psi_l - psi_b)`.
    pub fn delta(&self) -> f64 {
        self.bundle.delta()
    }

    pub fn qp_active(&self) -> bool {
        self.correction.norm() > ACTIVATION_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Breakdown { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub mode: Mode,
    pub dt: f64,
    pub records: Vec<SimRecord>,
    pub outcome: Outcome,
}

impl SimLog {
    pub fn breakdown_time(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Breakdown { t, .. } => Some(t),
            Outcome::Completed => None,
        }
    }

    pub fn activation_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let n = self.records.iter().filter(|r| r.qp_active()).count();
        n as f64 / self.records.len() as f64
    }
}

struct Controller<'a> {
    cfg: &'a ScenarioConfig,
    filter: FilterState,
    prev_alpha: Option<[f64; 2]>,
}

impl<'a> Controller<'a> {
    /// Control law at time `t`; `applied` is the input held over the previous step.
    fn sample(&mut self, t: f64, s: &VesselState, applied: ControlInput) -> Result<SimRecord> {
        let cfg = self.cfg;
        let p = &cfg.params;
        let d = vessel::eval_dynamics(s, applied, p)?;
        self.filter = lowpass_update(self.filter, d.nu_dot(), cfg.dt);
        let reference = reference_at(t, &cfg.trajectory);
        let bundle = PolarBundle::build(
            s,
            &d,
            self.filter.nu_ddot_est,
            reference.position(),
            reference.velocity(),
            p,
        )?;
        let (a_u, a_r) = controller::stabilizing_functions(&reference, &bundle, &cfg.gains)?;
        let alpha = [a_u, a_r];
        let alpha_dots = controller::stabilizer_rates(self.prev_alpha, alpha, cfg.dt);
        self.prev_alpha = Some(alpha);
        let errors = ErrorState::new(&reference, &bundle, alpha);
        let tau_ref = controller::reference_control(&errors, &bundle, alpha_dots, &cfg.gains, p.b_r)?;

        let f = vessel::drift(s, p);
        let cc1 = cbf::cc1_row(&bundle, &reference, tau_ref, p.b_r, &cfg.cbf)?;
        let cc2 = cbf::cc2_row(s.u, f.f_u, p.b_u, tau_ref.tau_u, &cfg.cbf)?;
        let set = cbf::assemble(cc1, cc2, s.u - cfg.cbf.eps_u);

        let (correction, qp_status, slack) = match cfg.mode {
            Mode::ReferenceOnly => (ControlInput::ZERO, None, 0.0),
            Mode::QpFiltered => {
                let sol = qp::solve(&set.rows)?;
                (ControlInput::from(sol.x), Some(sol.status), sol.slack)
            }
        };

        Ok(SimRecord {
            t,
            state: *s,
            reference,
            bundle,
            errors,
            alpha,
            tau_ref,
            tau: tau_ref + correction,
            correction,
            h_cc1: set.cc1.h,
            h_cc2: set.h_cc2,
            branch: set.branch,
            cc1_active: set.cc1.row.is_some(),
            feasible_at_zero: set.satisfied_at_zero(),
            cc1_drift: set.cc1.drift,
            m_closed_form: set.cc1.m_closed_form,
            qp_status,
            slack,
            v2: controller::lyapunov_v2(&errors, &cfg.gains),
        })
    }
}

fn describe(e: &Error) -> String {
    match e.singular_point() {
        Some(sp) => format!("singular point {sp}: {e}"),
        None => e.to_string(),
    }
}

/// Runs the closed loop for `cfg.duration` seconds.
///
/// Fails only on an invalid configuration. A singular guard, a non-finite
/// value, or a state/input component beyond `cfg.breakdown_threshold` ends the
/// run with [`Outcome::Breakdown`] at the time it was detected; the sample
/// that tripped it is not logged.
pub fn run(cfg: &ScenarioConfig) -> Result<SimLog> {
    cfg.validate_for_run()?;
    let n = cfg.steps();
    let mut ctl = Controller {
        cfg,
        filter: FilterState::new(cfg.filter_mu)?,
        prev_alpha: None,
    };
    let mut records = Vec::with_capacity(n + 1);
    let mut s = cfg.initial_state;
    let mut applied = ControlInput::ZERO;
    let limit = cfg.breakdown_threshold;

    let breakdown = |records: Vec<SimRecord>, t: f64, reason: String| SimLog {
        mode: cfg.mode,
        dt: cfg.dt,
        records,
        outcome: Outcome::Breakdown { t, reason },
    };

    for k in 0..=n {
        let t = k as f64 * cfg.dt;
        let rec = match ctl.sample(t, &s, applied) {
            Ok(rec) => rec,
            Err(e) => return Ok(breakdown(records, t, describe(&e))),
        };
        if !rec.tau.is_finite() || rec.tau.tau_u.abs().max(rec.tau.tau_r.abs()) > limit {
            let reason = format!(
                "input magnitude beyond {limit:e}: tau = ({:e}, {:e})",
                rec.tau.tau_u, rec.tau.tau_r
            );
            return Ok(breakdown(records, t, reason));
        }
        applied = rec.tau;
        records.push(rec);
        if k == n {
            break;
        }
        let t_next = (k + 1) as f64 * cfg.dt;
        s = match vessel::step_rk4(&s, applied, &cfg.params, cfg.dt) {
            Ok(next) => next,
            Err(e) => return Ok(breakdown(records, t_next, describe(&e))),
        };
        if s.max_abs() > limit {
            let reason = format!("state magnitude beyond {limit:e}");
            return Ok(breakdown(records, t_next, reason));
        }
    }

    Ok(SimLog {
        mode: cfg.mode,
        dt: cfg.dt,
        records,
        outcome: Outcome::Completed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// `|cos(psi_l - psi_b)|` dropped below `eps_psi`.
    ProximityEnter,
    /// `|cos(psi_l - psi_b)|` rose back to `eps_psi` or above.
    ProximityExit,
    /// `u` dropped below `eps_u + SURGE_MARGIN`.
    SurgeMargin,
    /// `p_e` dropped below `SMALL_RADIUS`.
    SmallRadius,
    /// The sign of `cos(psi_l - psi_b)` changed.
    BranchFlip,
    /// `|X|` rose above `ACTIVATION_EPS`.
    QpActivation,
    /// The QP had to relax the CC-1 row.
    Relaxed,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::ProximityEnter => "proximity_enter",
            EventKind::ProximityExit => "proximity_exit",
            EventKind::SurgeMargin => "surge_margin",
            EventKind::SmallRadius => "small_radius",
            EventKind::BranchFlip => "branch_flip",
            EventKind::QpActivation => "qp_activation",
            EventKind::Relaxed => "relaxed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

/// Scans a log for the conditions listed in [`EventKind`].
///
/// Level conditions report their rising edge only (a condition already true at
/// the first record is reported there); relaxed steps are reported one by one.
pub fn detect_events(log: &SimLog, cp: &CbfParams) -> Vec<Event> {
    let mut events = Vec::new();
    let mut near = false;
    let mut slow = false;
    let mut close = false;
    let mut active = false;
    let mut branch: Option<Branch> = None;
    for rec in &log.records {
        let t = rec.t;
        let now_near = rec.delta().cos().abs() < cp.eps_psi;
        if now_near && !near {
            events.push(Event {
                t,
                kind: EventKind::ProximityEnter,
            });
        } else if !now_near && near {
            events.push(Event {
                t,
                kind: EventKind::ProximityExit,
            });
        }
        near = now_near;

        let now_slow = rec.state.u < cp.eps_u + SURGE_MARGIN;
        if now_slow && !slow {
            events.push(Event {
                t,
                kind: EventKind::SurgeMargin,
            });
        }
        slow = now_slow;

        let now_close = rec.bundle.p_e < SMALL_RADIUS;
        if now_close && !close {
            events.push(Event {
                t,
                kind: EventKind::SmallRadius,
            });
        }
        close = now_close;

        if branch.is_some_and(|b| b != rec.branch) {
            events.push(Event {
                t,
                kind: EventKind::BranchFlip,
            });
        }
        branch = Some(rec.branch);

        let now_active = rec.qp_active();
        if now_active && !active {
            events.push(Event {
                t,
                kind: EventKind::QpActivation,
            });
        }
        active = now_active;

        if rec.qp_status == Some(QpStatus::InfeasibleRelaxed) {
            events.push(Event {
                t,
                kind: EventKind::Relaxed,
            });
        }
    }
    events
}

pub fn count_events(events: &[Event]) -> BTreeMap<&'static str, usize> {
    let mut counts = BTreeMap::new();
    for e in events {
        *counts.entry(e.kind.label()).or_insert(0) += 1;
    }
    counts
}

/// Half-open check used by the course-error reporting: `|wrap(angle)|` in degrees.
pub fn wrapped_degrees(angle: f64) -> f64 {
    wrap_angle(angle).abs() * 180.0 / PI
}
