//! Barrier constraints on the input correction `X = tau - tau_ref`.
//!
//! Two barriers keep the controller away from its singular points:
//!
//! * CC-1, `|cos(psi_l - psi_b)| >= eps_psi`: the course must not become
//!   perpendicular to the line of sight, where `alpha_ul` has a pole. The
//!   barrier `h1 = cos(delta) - eps_psi` (or `h2 = -cos(delta) - eps_psi` on the
//!   far side) has relative degree two, so it is enforced as an exponential
//!   barrier `h'' + alpha1*h + alpha2*h' >= 0`.
//! * CC-2, `u >= eps_u`: surge must stay positive so the sideslip transform
//!   and the input matrix remain valid. Relative degree one, enforced as
//!   `h' + k*h >= 0`.
//!
//! The CC-1 row is soft (the QP may relax it); CC-2 is hard.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::controller::ReferencePoint;
use crate::error::{ensure_finite, ensure_positive, Error, Result, SingularPoint};
use crate::qp::HalfPlane;
use crate::transforms::{wrap_angle, PolarBundle};
use crate::vessel::ControlInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbfParams {
    /// CC-1 margin, rad (compared against `cos(delta)` directly).
    pub eps_psi: f64,
    /// CC-2 margin, m/s.
    pub eps_u: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Slope of the linear class-K function used for CC-2, 1/s.
    pub k_class_k: f64,
    /// Half-width (rad) of the band around `delta = 0` and `delta = pi` where
    /// the CC-1 row is dropped. There `h` sits near its maximum and the row's
    /// input coefficients vanish with `sin(delta)`.
    #[serde(default = "default_interior_band")]
    pub interior_band: f64,
}

fn default_interior_band() -> f64 {
    15f64.to_radians()
}

impl Default for CbfParams {
    fn default() -> Self {
        Self {
            eps_psi: 15f64.to_radians(),
            eps_u: 0.5,
            alpha1: 0.01,
            alpha2: 0.3,
            k_class_k: 1.0,
            interior_band: default_interior_band(),
        }
    }
}

impl CbfParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("eps_psi", self.eps_psi)?;
        ensure_positive("eps_u", self.eps_u)?;
        ensure_positive("k_class_k", self.k_class_k)?;
        // s^2 + alpha2 s + alpha1 is Hurwitz iff both coefficients are positive.
        ensure_positive("alpha1", self.alpha1)?;
        ensure_positive("alpha2", self.alpha2)?;
        if !(self.interior_band.is_finite() && (0.0..FRAC_PI_2).contains(&self.interior_band)) {
            return Err(Error::InvalidParameter {
                name: "interior_band",
                reason: format!("must lie in [0, pi/2), got {}", self.interior_band),
            });
        }
        Ok(())
    }
}

/// Which side of the line of sight the course is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `cos(psi_l - psi_b) >= 0`, barrier `h1 = cos(delta) - eps_psi`.
    Case1,
    /// `cos(psi_l - psi_b) < 0`, barrier `h2 = -cos(delta) - eps_psi`.
    Case2,
}

impl Branch {
    pub fn of(delta: f64) -> Self {
        if delta.cos() >= 0.0 {
            Branch::Case1
        } else {
            Branch::Case2
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Branch::Case1 => 1.0,
            Branch::Case2 => -1.0,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Branch::Case1 => 1,
            Branch::Case2 => 2,
        }
    }
}

/// CC-1 quantities at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cc1Row {
    /// `None` inside the interior band.
    pub row: Option<HalfPlane>,
    pub branch: Branch,
    pub c1: f64,
    pub c2: f64,
    /// Drift part of `h1''`, so that `h1'' = d - c1*tau_u - c2*tau_r`.
    pub drift: f64,
    /// `sin(delta) * M`, the state-dependent right-hand side of the row
    /// before the `tau_ref` shift: `d + alpha1*cos(delta) - alpha2*sin(delta)*delta'`.
    pub sin_m: f64,
    /// Compact closed form of `M`. It agrees with `sin_m / sin(delta)` only at
    /// `delta = +-pi/2`; logged for comparison, never used in the row.
    pub m_closed_form: f64,
    /// Barrier value on the active branch.
    pub h: f64,
    pub h_dot: f64,
}

/// Builds the CC-1 row for the correction `X`. `b_r` is the plant's yaw input gain.
pub fn cc1_row(
    bundle: &PolarBundle,
    reference: &ReferencePoint,
    tau_ref: ControlInput,
    b_r: f64,
    cp: &CbfParams,
) -> Result<Cc1Row> {
    if !(bundle.p_e > 0.0) {
        return Err(Error::SingularAzimuth {
            sp: SingularPoint::Sp4,
            p_e: bundle.p_e,
        });
    }
    let p_e = bundle.p_e;
    let delta = bundle.delta();
    let (sn, cs) = delta.sin_cos();
    let delta_dot = bundle.r_l - bundle.psi_b_dot;

    let c1 = bundle.b_ul * sn * sn / p_e;
    let c2 = sn * (bundle.eps_ra * sn / p_e + b_r);

    let rel = wrap_angle(reference.psi_ld - bundle.psi_b);
    let (sr, cr) = rel.sin_cos();
    // Rate of p_e * sin(delta) without the input-dependent terms.
    let n = reference.u_ld_dot * sr + reference.u_ld * cr * (reference.psi_ld_dot - bundle.psi_b_dot)
        - bundle.u_l * cs * delta_dot
        - bundle.psi_b_dot * bundle.p_e_dot;
    let drift = -cs * delta_dot * delta_dot - sn * (bundle.f_rl - (n - sn * bundle.f_ul) / p_e);
    let sin_m = drift + cp.alpha1 * cs - cp.alpha2 * sn * delta_dot;
    let m_closed_form = (n - bundle.f_ul * sn) / p_e - bundle.f_rl + cp.alpha1 * cs
        - cp.alpha2 * sn * delta_dot;

    let branch = Branch::of(delta);
    let sign = branch.sign();
    let h = sign * cs - cp.eps_psi;
    let h_dot = -sign * sn * delta_dot;

    let active = sn.abs() >= cp.interior_band.sin();
    let row = active.then(|| {
        let c_tau = c1 * tau_ref.tau_u + c2 * tau_ref.tau_r;
        HalfPlane::soft(
            [sign * c1, sign * c2],
            sign * sin_m - cp.alpha1 * cp.eps_psi - sign * c_tau,
        )
    });

    let out = Cc1Row {
        row,
        branch,
        c1,
        c2,
        drift,
        sin_m,
        m_closed_form,
        h,
        h_dot,
    };
    ensure_finite(
        "CC-1 row",
        &[c1, c2, drift, sin_m, h, h_dot, row.map_or(0.0, |r| r.b)],
    )?;
    Ok(out)
}

/// `h2 = -cos(delta) - eps_psi` and `h1 = cos(delta) - eps_psi` for any `delta`.
pub fn cc1_barriers(delta: f64, eps_psi: f64) -> (f64, f64) {
    let c = delta.cos();
    (c - eps_psi, -c - eps_psi)
}

/// Builds the CC-2 row `[-1, 0] X <= (f_u + k*(u - eps_u)) / b_u + tau_ref_u`.
pub fn cc2_row(u: f64, f_u: f64, b_u: f64, tau_ref_u: f64, cp: &CbfParams) -> Result<HalfPlane> {
    ensure_finite("CC-2 inputs", &[u, f_u, b_u, tau_ref_u])?;
    let b = (f_u + cp.k_class_k * (u - cp.eps_u)) / b_u + tau_ref_u;
    ensure_finite("CC-2 row", &[b])?;
    Ok(HalfPlane::hard([-1.0, 0.0], b))
}

/// Stacked constraint rows for the QP, plus what produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// CC-1 row first (if active), CC-2 row last.
    pub rows: Vec<HalfPlane>,
    pub branch: Branch,
    pub cc1: Cc1Row,
    /// `u - eps_u`.
    pub h_cc2: f64,
}

impl ConstraintSet {
    /// Whether `X = 0` satisfies every row.
    pub fn satisfied_at_zero(&self) -> bool {
        self.rows.iter().all(|r| r.b >= 0.0)
    }
}

pub fn assemble(cc1: Cc1Row, cc2: HalfPlane, h_cc2: f64) -> ConstraintSet {
    let mut rows = Vec::with_capacity(2);
    if let Some(r) = cc1.row {
        rows.push(r);
    }
    rows.push(cc2);
    ConstraintSet {
        rows,
        branch: cc1.branch,
        cc1,
        h_cc2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp;
    use crate::transforms::polar_velocity;
    use crate::vessel::{eval_dynamics, step_rk4, VesselParams, VesselState};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

    fn bare_bundle(delta: f64, p_e: f64) -> PolarBundle {
        let p = VesselParams::reference_vessel();
        PolarBundle {
            u_l: 5.0,
            psi_l: delta,
            psi_b: 0.0,
            p_e,
            b_ul: p.b_u,
            ..Default::default()
        }
    }

    #[test]
    fn zero_angle_drops_row() {
        let p = VesselParams::reference_vessel();
        let cp = CbfParams::default();
        let b = bare_bundle(0.0, 6.0);
        let row = cc1_row(&b, &ReferencePoint::default(), ControlInput::ZERO, p.b_r, &cp).unwrap();
        assert_eq!(row.c1, 0.0);
        assert_eq!(row.c2, 0.0);
        assert!(row.row.is_none());
        // Kept, the degenerate row would read 0 <= -alpha1 * eps_psi.
        assert_eq!(row.sin_m - row.drift, cp.alpha1);
    }

    #[test]
    fn coefficients_at_quarter_turn() {
        let p = VesselParams::reference_vessel();
        let cp = CbfParams::default();
        let b = bare_bundle(FRAC_PI_4, 6.0);
        let row = cc1_row(&b, &ReferencePoint::default(), ControlInput::ZERO, p.b_r, &cp).unwrap();
        assert_relative_eq!(row.c1, p.b_u * 0.5 / 6.0, epsilon = 1e-20);
        assert_relative_eq!(row.c2, SQRT_2 / 2.0 * p.b_r, epsilon = 1e-22);
        assert_eq!(row.branch, Branch::Case1);
        let hp = row.row.unwrap();
        assert!(hp.soft);
        assert_eq!(hp.a, [row.c1, row.c2]);
    }

    #[test]
    fn compact_m_agrees_at_right_angle() {
        let p = VesselParams::reference_vessel();
        let cp = CbfParams::default();
        let mut b = bare_bundle(PI / 2.0 - 1e-12, 6.0);
        b.r_l = 0.07;
        b.psi_b_dot = -0.02;
        b.p_e_dot = 0.4;
        b.f_ul = -0.3;
        b.f_rl = 0.01;
        let reference = ReferencePoint {
            psi_ld: 0.4,
            u_ld: 5.0,
            psi_ld_dot: -0.05,
            ..Default::default()
        };
        let row = cc1_row(&b, &reference, ControlInput::ZERO, p.b_r, &cp).unwrap();
        assert_relative_eq!(row.sin_m, row.m_closed_form, epsilon = 1e-9);
    }

    #[test]
    fn tau_ref_shift() {
        let p = VesselParams::reference_vessel();
        let cp = CbfParams::default();
        let b = bare_bundle(1.1, 6.0);
        let tau = ControlInput::new(2e5, -4e6);
        let r0 = cc1_row(&b, &ReferencePoint::default(), ControlInput::ZERO, p.b_r, &cp).unwrap();
        let r1 = cc1_row(&b, &ReferencePoint::default(), tau, p.b_r, &cp).unwrap();
        let shift = r0.c1 * tau.tau_u + r0.c2 * tau.tau_r;
        assert_relative_eq!(r1.row.unwrap().b, r0.row.unwrap().b - shift, epsilon = 1e-12);
    }

    #[test]
    fn far_side_row_is_negated() {
        let p = VesselParams::reference_vessel();
        let cp = CbfParams::default();
        let reference = ReferencePoint {
            u_ld: 5.0,
            ..Default::default()
        };
        let a = cc1_row(&bare_bundle(1.2, 6.0), &reference, ControlInput::ZERO, p.b_r, &cp).unwrap();
        let b = cc1_row(&bare_bundle(1.2 + PI, 6.0), &reference, ControlInput::ZERO, p.b_r, &cp)
            .unwrap();
        assert_eq!(a.branch, Branch::Case1);
        assert_eq!(b.branch, Branch::Case2);
        assert_relative_eq!(a.h, b.h, epsilon = 1e-12);
        assert_relative_eq!(b.c1, a.c1, epsilon = 1e-18);
        assert_relative_eq!(b.c2, -a.c2, epsilon = 1e-18);
        assert_eq!(b.row.unwrap().a, [-b.c1, -b.c2]);
    }

    #[test]
    fn branch_at_right_angle_is_case1() {
        assert_eq!(Branch::of(PI / 2.0), Branch::Case1);
        assert_eq!(Branch::of(-PI / 2.0), Branch::Case1);
        assert_eq!(Branch::of(PI / 2.0 + 1e-9), Branch::Case2);
    }

    #[test]
    fn cc2_examples() {
        let cp = CbfParams::default();
        let r = cc2_row(cp.eps_u, 0.0, 1.0 / 1.2e5, 0.0, &cp).unwrap();
        assert_eq!(r.a, [-1.0, 0.0]);
        assert_eq!(r.b, 0.0);
        assert!(!r.soft);
        let r = cc2_row(cp.eps_u + 1.0, 0.0, 1.0, 0.0, &cp).unwrap();
        // -X_u <= 1, i.e. tau_u >= -1 with tau_ref_u = 0
        assert_eq!(r.b, 1.0);
    }

    #[test]
    fn assemble_orders_rows() {
        let p = VesselParams::reference_vessel();
        let cp = CbfParams::default();
        let cc1 = cc1_row(&bare_bundle(1.0, 6.0), &ReferencePoint::default(), ControlInput::ZERO, p.b_r, &cp)
            .unwrap();
        let cc2 = cc2_row(3.0, -0.5, p.b_u, 0.0, &cp).unwrap();
        let set = assemble(cc1, cc2, 2.5);
        assert_eq!(set.rows.len(), 2);
        assert_eq!(set.rows[1].a, [-1.0, 0.0]);
        assert_eq!(set.branch, Branch::Case1);
        let zero = assemble(
            cc1_row(&bare_bundle(0.0, 6.0), &ReferencePoint::default(), ControlInput::ZERO, p.b_r, &cp)
                .unwrap(),
            cc2,
            2.5,
        );
        assert_eq!(zero.rows.len(), 1);
    }

    #[test]
    fn params_validation() {
        assert!(CbfParams::default().validate().is_ok());
        for f in [
            |c: &mut CbfParams| c.alpha1 = 0.0,
            |c: &mut CbfParams| c.alpha2 = -0.3,
            |c: &mut CbfParams| c.eps_u = 0.0,
            |c: &mut CbfParams| c.interior_band = 2.0,
        ] {
            let mut c = CbfParams::default();
            f(&mut c);
            assert!(c.validate().is_err());
        }
    }

    /// Circle of radius 100 m traversed clockwise at 5 m/s.
    fn circle(t: f64) -> ReferencePoint {
        let w = -0.05;
        let psi = 0.3 + w * t;
        ReferencePoint {
            x_d: 400.0 + 5.0 / w * psi.sin(),
            y_d: 30.0 - 5.0 / w * (psi.cos() - 1.0),
            psi_ld: psi,
            u_ld: 5.0,
            u_ld_dot: 0.0,
            psi_ld_dot: w,
        }
    }

    fn h_at(s: &VesselState, reference: &ReferencePoint, eps: f64) -> f64 {
        let (_, psi_a) = polar_velocity(s.u, s.v).unwrap();
        let psi_b = (reference.y_d - s.y).atan2(reference.x_d - s.x);
        (s.psi + psi_a - psi_b).cos() - eps
    }

    fn check_ecbf_against_rollout(s: VesselState, tau: ControlInput, p: &VesselParams) {
        let cp = CbfParams::default();
        let dt = 1e-4;
        let sp = step_rk4(&s, tau, p, dt).unwrap();
        let sm = step_rk4(&s, tau, p, -dt).unwrap();
        let (hp, h0, hm) = (
            h_at(&sp, &circle(dt), cp.eps_psi),
            h_at(&s, &circle(0.0), cp.eps_psi),
            h_at(&sm, &circle(-dt), cp.eps_psi),
        );
        let h_ddot_fd = (hp - 2.0 * h0 + hm) / (dt * dt);
        let h_dot_fd = (hp - hm) / (2.0 * dt);

        let d = eval_dynamics(&s, tau, p).unwrap();
        let dp = eval_dynamics(&sp, tau, p).unwrap().nu_dot();
        let dm = eval_dynamics(&sm, tau, p).unwrap().nu_dot();
        let nu_ddot = std::array::from_fn(|i| (dp[i] - dm[i]) / (2.0 * dt));
        let reference = circle(0.0);
        let b = PolarBundle::build(&s, &d, nu_ddot, reference.position(), reference.velocity(), p)
            .unwrap();
        let row = cc1_row(&b, &reference, ControlInput::ZERO, p.b_r, &cp).unwrap();
        assert_eq!(row.branch, Branch::Case1);
        let h_ddot_row = row.drift - row.c1 * tau.tau_u - row.c2 * tau.tau_r;
        let rel = (h_ddot_row - h_ddot_fd).abs() / h_ddot_fd.abs();
        assert!(rel < 1e-2, "h'' row {h_ddot_row:e} vs rollout {h_ddot_fd:e} (rel {rel:e})");
        assert!((row.h - h0).abs() < 1e-12);
        assert!((row.h_dot - h_dot_fd).abs() < 1e-6 * (1.0 + h_dot_fd.abs()));

        // Whole ECBF expression: row slack at tau equals h'' + a1 h + a2 h'.
        let lhs_fd = h_ddot_fd + cp.alpha1 * h0 + cp.alpha2 * h_dot_fd;
        let lhs_row = row.sin_m - cp.alpha1 * cp.eps_psi - (row.c1 * tau.tau_u + row.c2 * tau.tau_r);
        let rel = (lhs_row - lhs_fd).abs() / lhs_fd.abs();
        assert!(rel < 1e-2, "ECBF {lhs_row:e} vs {lhs_fd:e}");
    }

    #[test]
    fn ecbf_row_matches_rollout() {
        let p = VesselParams::reference_vessel();
        let reference = circle(0.0);
        let s = VesselState {
            x: reference.x_d - 4.0,
            y: reference.y_d + 3.0,
            psi: -0.4,
            u: 4.5,
            v: 0.3,
            r: 0.08,
        };
        check_ecbf_against_rollout(s, ControlInput::new(3e5, -2e6), &p);
        check_ecbf_against_rollout(s, ControlInput::new(-1e5, 5e6), &p);
    }

    #[test]
    fn ecbf_row_matches_rollout_with_lift() {
        let mut p = VesselParams::reference_vessel();
        p.eps_r = 2e-8;
        let reference = circle(0.0);
        let s = VesselState {
            x: reference.x_d - 5.0,
            y: reference.y_d - 2.0,
            psi: 1.1,
            u: 3.0,
            v: -0.4,
            r: -0.05,
        };
        check_ecbf_against_rollout(s, ControlInput::new(1e5, 4e6), &p);
    }

    mod props {
        use super::*;
        use crate::transforms::transformed_dynamics;
        use crate::vessel::drift;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn barrier_pair_sums_to_minus_two_eps(delta in -20.0..20.0f64, eps in 0.01..1.0f64) {
                let (h1, h2) = cc1_barriers(delta, eps);
                prop_assert!((h1 + h2 + 2.0 * eps).abs() < 1e-12);
            }

            #[test]
            fn active_row_is_never_empty(delta in -3.1..3.1f64, p_e in 0.5..30.0f64, r_l in -0.3..0.3f64) {
                let p = VesselParams::reference_vessel();
                let cp = CbfParams::default();
                let mut b = bare_bundle(delta, p_e);
                b.r_l = r_l;
                let row = cc1_row(&b, &ReferencePoint::default(), ControlInput::ZERO, p.b_r, &cp).unwrap();
                if let Some(hp) = row.row {
                    prop_assert!(hp.a != [0.0, 0.0]);
                    let sol = qp::solve(&[hp]).unwrap();
                    prop_assert!(sol.status != qp::QpStatus::InfeasibleRelaxed);
                    prop_assert!(hp.violation(sol.x) <= 1e-9 * (1.0 + hp.b.abs()));
                }
            }

            #[test]
            fn surge_gain_vanishes_only_with_cos_psi_a(u in 1e-6..10.0f64, v in -10.0..10.0f64) {
                let p = VesselParams::reference_vessel();
                let s = VesselState { u, v, ..Default::default() };
                let td = transformed_dynamics(&s, &drift(&s, &p), 0.0, 0.0, &p).unwrap();
                let (_, pa) = polar_velocity(u, v).unwrap();
                prop_assert_eq!(td.b_ul == 0.0, pa.cos() == 0.0);
            }
        }
    }
}
