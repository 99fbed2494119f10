//! Three-degree-of-freedom surface vessel model.
//!
//! Kinematics rotate body velocities `(u, v, r)` into the navigation frame;
//! the dynamics are the surge/sway/yaw model with linear, quadratic and cubic
//! damping, Coriolis coupling through the inertia coefficients, and two
//! inputs (surge force `tau_u`, yaw moment `tau_r`). A non-zero `eps_r`
//! lets the yaw moment leak into sway (non-minimum-phase plant).

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// Pose in the navigation frame plus body-frame velocities.
///
/// `psi` is kept unwrapped; wrap only where angle differences are formed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl VesselState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.psi, self.u, self.v, self.r]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            psi: a[2],
            u: a[3],
            v: a[4],
            r: a[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Largest absolute component, used by the breakdown detector.
    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Plant coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VesselParams {
    pub m11: f64,
    pub m22: f64,
    pub m33: f64,
    pub d_u: f64,
    pub d_v: f64,
    pub d_r: f64,
    pub d_u2: f64,
    pub d_u3: f64,
    pub d_v2: f64,
    pub d_v3: f64,
    pub d_r2: f64,
    pub d_r3: f64,
    /// Surge input gain, `1/m11` for the reference plant.
    pub b_u: f64,
    /// Yaw input gain, `1/m33` for the reference plant.
    pub b_r: f64,
    /// Yaw-moment-to-sway lift coefficient.
    pub eps_r: f64,
}

impl VesselParams {
    /// The supply-vessel model used in the reference scenario
    /// (`d_u = 2.152e4`, `d_v = 1.47e5`, quadratic/cubic terms at 20%/10%).
    pub fn reference_vessel() -> Self {
        let (m11, m22, m33) = (1.2e5, 1.779e5, 6.36e7);
        let (d_u, d_v, d_r) = (2.152e4, 1.47e5, 8.02e6);
        Self {
            m11,
            m22,
            m33,
            d_u,
            d_v,
            d_r,
            d_u2: 0.2 * d_u,
            d_u3: 0.1 * d_u,
            d_v2: 0.2 * d_v,
            d_v3: 0.1 * d_v,
            d_r2: 0.2 * d_r,
            d_r3: 0.1 * d_r,
            b_u: 1.0 / m11,
            b_r: 1.0 / m33,
            eps_r: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("m11", self.m11)?;
        ensure_positive("m22", self.m22)?;
        ensure_positive("m33", self.m33)?;
        let damping = [
            ("d_u", self.d_u),
            ("d_v", self.d_v),
            ("d_r", self.d_r),
            ("d_u2", self.d_u2),
            ("d_u3", self.d_u3),
            ("d_v2", self.d_v2),
            ("d_v3", self.d_v3),
            ("d_r2", self.d_r2),
            ("d_r3", self.d_r3),
        ];
        for (name, d) in damping {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("damping must be finite and >= 0, got {d}"),
                });
            }
        }
        for (name, b) in [("b_u", self.b_u), ("b_r", self.b_r)] {
            if !b.is_finite() || b == 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("input gain must be finite and non-zero, got {b}"),
                });
            }
        }
        if !self.eps_r.is_finite() {
            return Err(Error::InvalidParameter {
                name: "eps_r",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

impl Default for VesselParams {
    fn default() -> Self {
        Self::reference_vessel()
    }
}

/// Surge force and yaw moment. Also used for `tau_ref` and the QP correction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub tau_u: f64,
    pub tau_r: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        tau_u: 0.0,
        tau_r: 0.0,
    };

    pub fn new(tau_u: f64, tau_r: f64) -> Self {
        Self { tau_u, tau_r }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.tau_u, self.tau_r]
    }

    pub fn norm(&self) -> f64 {
        self.tau_u.hypot(self.tau_r)
    }

    pub fn is_finite(&self) -> bool {
        self.tau_u.is_finite() && self.tau_r.is_finite()
    }
}

impl From<[f64; 2]> for ControlInput {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl Add for ControlInput {
    type Output = ControlInput;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.tau_u + rhs.tau_u, self.tau_r + rhs.tau_r)
    }
}

impl Sub for ControlInput {
    type Output = ControlInput;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.tau_u - rhs.tau_u, self.tau_r - rhs.tau_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub dx: f64,
    pub dy: f64,
    pub dpsi: f64,
    pub du: f64,
    pub dv: f64,
    pub dr: f64,
}

impl StateDerivative {
    pub fn to_array(&self) -> [f64; 6] {
        [self.dx, self.dy, self.dpsi, self.du, self.dv, self.dr]
    }

    /// Body acceleration `(du, dv, dr)`.
    pub fn nu_dot(&self) -> [f64; 3] {
        [self.du, self.dv, self.dr]
    }
}

/// Unforced part `(f_u, f_v, f_r)` of the body accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Drift {
    pub f_u: f64,
    pub f_v: f64,
    pub f_r: f64,
}

pub fn drift(s: &VesselState, p: &VesselParams) -> Drift {
    let VesselState { u, v, r, .. } = *s;
    let f_u = -(p.d_u / p.m11) * u + (p.m22 / p.m11) * v * r
        - (p.d_u2 / p.m11) * u.abs() * u
        - (p.d_u3 / p.m11) * u * u * u;
    let f_v = -(p.d_v / p.m22) * v
        - (p.m11 / p.m22) * u * r
        - (p.d_v2 / p.m22) * v.abs() * v
        - (p.d_v3 / p.m22) * v * v * v;
    let f_r = -(p.d_r / p.m33) * r + ((p.m11 - p.m22) / p.m33) * u * r
        - (p.d_r2 / p.m33) * r.abs() * r
        - (p.d_r3 / p.m33) * r * r * r;
    Drift { f_u, f_v, f_r }
}

/// Time derivative of the full state under input `tau`.
pub fn eval_dynamics(
    s: &VesselState,
    tau: ControlInput,
    p: &VesselParams,
) -> Result<StateDerivative> {
    ensure_finite("vessel state", &s.to_array())?;
    ensure_finite("control input", &tau.as_array())?;
    Ok(eval_unchecked(s, tau, p))
}

fn eval_unchecked(s: &VesselState, tau: ControlInput, p: &VesselParams) -> StateDerivative {
    let (sin_psi, cos_psi) = s.psi.sin_cos();
    let f = drift(s, p);
    StateDerivative {
        dx: s.u * cos_psi - s.v * sin_psi,
        dy: s.u * sin_psi + s.v * cos_psi,
        dpsi: s.r,
        du: f.f_u + p.b_u * tau.tau_u,
        dv: f.f_v + p.eps_r * tau.tau_r,
        dr: f.f_r + p.b_r * tau.tau_r,
    }
}

/// One classical Runge-Kutta step with `tau` held over the interval.
pub fn step_rk4(
    s: &VesselState,
    tau: ControlInput,
    p: &VesselParams,
    dt: f64,
) -> Result<VesselState> {
    if !(dt.is_finite() && dt != 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("step must be finite and non-zero, got {dt}"),
        });
    }
    let y0 = s.to_array();
    let stage = |y: [f64; 6]| -> Result<[f64; 6]> {
        let st = VesselState::from_array(y);
        Ok(eval_dynamics(&st, tau, p)?.to_array())
    };
    let offset = |k: &[f64; 6], h: f64| -> [f64; 6] { std::array::from_fn(|i| y0[i] + h * k[i]) };

    let k1 = stage(y0)?;
    let k2 = stage(offset(&k1, 0.5 * dt))?;
    let k3 = stage(offset(&k2, 0.5 * dt))?;
    let k4 = stage(offset(&k3, dt))?;
    let y1: [f64; 6] =
        std::array::from_fn(|i| y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    let next = VesselState::from_array(y1);
    if !next.is_finite() {
        return Err(Error::NonFinite {
            what: "integrated state",
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(u: f64, v: f64, r: f64) -> VesselState {
        VesselState {
            u,
            v,
            r,
            ..Default::default()
        }
    }

    #[test]
    fn equilibrium_at_origin() {
        let p = VesselParams::reference_vessel();
        let d = eval_dynamics(&VesselState::default(), ControlInput::ZERO, &p).unwrap();
        assert_eq!(d.to_array(), [0.0; 6]);
    }

    #[test]
    fn pure_surge_damping() {
        let p = VesselParams::reference_vessel();
        let d = eval_dynamics(&state(1.0, 0.0, 0.0), ControlInput::ZERO, &p).unwrap();
        // -(d_u/m11) * (1 + 0.2 + 0.1) with d_u = 2.152e4, m11 = 1.2e5
        assert_relative_eq!(d.du, -0.233_133_333_333, epsilon = 1e-9);
        assert_eq!(d.dx, 1.0);
        assert_eq!([d.dy, d.dpsi, d.dv, d.dr], [0.0; 4]);
    }

    #[test]
    fn coriolis_term_in_surge() {
        let p = VesselParams::reference_vessel();
        let d = eval_dynamics(&state(0.0, 1.0, 0.1), ControlInput::ZERO, &p).unwrap();
        assert_relative_eq!(d.du, 1.779e5 / 1.2e5 * 0.1, epsilon = 1e-12);
        assert_relative_eq!(d.du, 0.148250, epsilon = 1e-6);
    }

    #[test]
    fn lift_term_enters_sway() {
        let mut p = VesselParams::reference_vessel();
        p.eps_r = 2e-7;
        let s = state(1.0, 0.0, 0.0);
        let d0 = eval_dynamics(&s, ControlInput::ZERO, &p).unwrap();
        let d1 = eval_dynamics(&s, ControlInput::new(0.0, 1e6), &p).unwrap();
        assert_relative_eq!(d1.dv - d0.dv, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite_input() {
        let p = VesselParams::reference_vessel();
        let err = eval_dynamics(&state(f64::NAN, 0.0, 0.0), ControlInput::ZERO, &p).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        let err = eval_dynamics(&state(1.0, 0.0, 0.0), ControlInput::new(f64::INFINITY, 0.0), &p)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn params_validation() {
        assert!(VesselParams::reference_vessel().validate().is_ok());
        let mut p = VesselParams::reference_vessel();
        p.m22 = 0.0;
        assert!(p.validate().is_err());
        let mut p = VesselParams::reference_vessel();
        p.d_v3 = -1.0;
        assert!(p.validate().is_err());
        let mut p = VesselParams::reference_vessel();
        p.b_r = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rk4_keeps_equilibrium() {
        let p = VesselParams::reference_vessel();
        let s = VesselState::default();
        assert_eq!(step_rk4(&s, ControlInput::ZERO, &p, 0.01).unwrap(), s);
    }

    #[test]
    fn rk4_linear_surge_decay() {
        let mut p = VesselParams::reference_vessel();
        p.d_u2 = 0.0;
        p.d_u3 = 0.0;
        let dt = 0.01;
        let next = step_rk4(&state(1.0, 0.0, 0.0), ControlInput::ZERO, &p, dt).unwrap();
        let exact = (-(p.d_u / p.m11) * dt).exp();
        assert!((next.u - exact).abs() < 1e-10, "{} vs {}", next.u, exact);
    }

    #[test]
    fn rk4_rejects_bad_step() {
        let p = VesselParams::reference_vessel();
        assert!(step_rk4(&VesselState::default(), ControlInput::ZERO, &p, 0.0).is_err());
        assert!(step_rk4(&VesselState::default(), ControlInput::ZERO, &p, f64::NAN).is_err());
    }

    #[test]
    fn rk4_step_doubling_is_fifth_order() {
        // Local error of one step vs two half steps should shrink ~32x when dt halves.
        let p = VesselParams::reference_vessel();
        let s = VesselState {
            x: 90.0,
            y: 25.0,
            psi: 30f64.to_radians(),
            u: 5.0,
            v: 0.3,
            r: -0.2,
        };
        let tau = ControlInput::new(6e5, -3e6);
        let local_err = |dt: f64| {
            let full = step_rk4(&s, tau, &p, dt).unwrap();
            let half = step_rk4(&s, tau, &p, dt / 2.0).unwrap();
            let two = step_rk4(&half, tau, &p, dt / 2.0).unwrap();
            full.to_array()
                .iter()
                .zip(two.to_array())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (e1, e2) = (local_err(0.2), local_err(0.1));
        let order = (e1 / e2).log2();
        assert!(order > 4.5, "local order {order} (errors {e1:e}, {e2:e})");
    }

    #[test]
    fn straight_line_without_damping() {
        let mut p = VesselParams::reference_vessel();
        for d in [
            &mut p.d_u, &mut p.d_v, &mut p.d_r, &mut p.d_u2, &mut p.d_u3, &mut p.d_v2,
            &mut p.d_v3, &mut p.d_r2, &mut p.d_r3,
        ] {
            *d = 0.0;
        }
        let s0 = VesselState {
            x: 1.0,
            y: -2.0,
            psi: 0.7,
            u: 3.0,
            v: -0.4,
            r: 0.0,
        };
        let dt = 0.01;
        let mut s = s0;
        for _ in 0..1000 {
            s = step_rk4(&s, ControlInput::ZERO, &p, dt).unwrap();
        }
        let t = 1000.0 * dt;
        let (sp, cp) = s0.psi.sin_cos();
        assert!((s.u - s0.u).abs() < 1e-9 && (s.v - s0.v).abs() < 1e-9);
        assert!((s.x - (s0.x + t * (s0.u * cp - s0.v * sp))).abs() < 1e-9);
        assert!((s.y - (s0.y + t * (s0.u * sp + s0.v * cp))).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dynamics_affine_in_input(
                u in -8.0..8.0f64, v in -3.0..3.0f64, r in -1.0..1.0f64, psi in -7.0..7.0f64,
                a in -1e6..1e6f64, b in -1e8..1e8f64, c in -1e6..1e6f64, d in -1e8..1e8f64,
                eps_r in -1e-6..1e-6f64,
            ) {
                let mut p = VesselParams::reference_vessel();
                p.eps_r = eps_r;
                let s = VesselState { x: 3.0, y: -1.0, psi, u, v, r };
                let t1 = ControlInput::new(a, b);
                let t2 = ControlInput::new(c, d);
                let lhs = eval_dynamics(&s, t1 + t2, &p).unwrap().to_array();
                let e2 = eval_dynamics(&s, t2, &p).unwrap().to_array();
                let e1 = eval_dynamics(&s, t1, &p).unwrap().to_array();
                let e0 = eval_dynamics(&s, ControlInput::ZERO, &p).unwrap().to_array();
                for i in 0..6 {
                    let l = lhs[i] - e2[i];
                    let rr = e1[i] - e0[i];
                    prop_assert!((l - rr).abs() <= 1e-9 * (1.0 + l.abs().max(rr.abs())));
                }
            }
        }
    }
}
