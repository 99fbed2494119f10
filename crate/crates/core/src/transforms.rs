//! Polar reformulation of the tracking problem.
//!
//! Two changes of variables are used. The body velocity `(u, v)` becomes a
//! total speed `u_l` and a sideslip angle `psi_a`, so the vessel travels along
//! the course `psi_l = psi + psi_a`. The position error to the target becomes
//! a radius `p_e` and an azimuth `psi_b`. [`PolarBundle`] collects everything
//! the controller and the barrier rows need at one sample.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result, SingularPoint};
use crate::vessel::{Drift, StateDerivative, VesselParams, VesselState};

/// Radius below which the azimuth angle is considered undefined.
pub const AZIMUTH_EPS: f64 = 1e-9;

/// Wraps an angle into `[-pi, pi)`. `pi` itself maps to `-pi`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut w = theta - TAU * ((theta + PI) / TAU).floor();
    // floor() can land one period off when theta + pi rounds across a multiple of 2pi
    if w >= PI {
        w -= TAU;
    } else if w < -PI {
        w += TAU;
    }
    w
}

/// Total speed and sideslip angle `(u_l, psi_a)` with `psi_a = atan(v/u)`.
///
/// Requires `u > 0`; the reverse half-plane is excluded by the surge barrier.
pub fn polar_velocity(u: f64, v: f64) -> Result<(f64, f64)> {
    ensure_finite("body velocity", &[u, v])?;
    if u <= 0.0 {
        return Err(Error::SingularSideslip {
            sp: SingularPoint::Sp3,
            u,
            v,
        });
    }
    Ok((u.hypot(v), (v / u).atan()))
}

/// Error radius and azimuth `(p_e, psi_b)` for the error vector `(x_e, y_e)`.
pub fn polar_error(x_e: f64, y_e: f64) -> Result<(f64, f64)> {
    ensure_finite("position error", &[x_e, y_e])?;
    let p_e = x_e.hypot(y_e);
    if p_e < AZIMUTH_EPS {
        return Err(Error::SingularAzimuth {
            sp: SingularPoint::Sp4,
            p_e,
        });
    }
    Ok((p_e, wrap_angle(y_e.atan2(x_e))))
}

/// First and second time derivatives of the sideslip angle.
///
/// With `q = u^2 + v^2` and `n = u*v' - v*u'`:
///
/// ```text
/// psi_a'  = n / q
/// psi_a'' = (u*v'' - v*u'') / q - n * 2*(u*u' + v*v') / q^2
/// ```
///
/// (the `u'*v'` terms of `n'` cancel).
pub fn sideslip_rates(
    u: f64,
    v: f64,
    u_dot: f64,
    v_dot: f64,
    u_ddot: f64,
    v_ddot: f64,
) -> Result<(f64, f64)> {
    ensure_finite("sideslip rate inputs", &[u, v, u_dot, v_dot, u_ddot, v_ddot])?;
    let q = u * u + v * v;
    if q == 0.0 {
        return Err(Error::SingularSideslip {
            sp: SingularPoint::Sp3,
            u,
            v,
        });
    }
    let n = u * v_dot - v * u_dot;
    let psi_a_dot = n / q;
    let q_dot = 2.0 * (u * u_dot + v * v_dot);
    let psi_a_ddot = (u * v_ddot - v * u_ddot) / q - n * q_dot / (q * q);
    Ok((psi_a_dot, psi_a_ddot))
}

/// Rates `(p_e_dot, psi_b_dot)` of the polar position error.
pub fn azimuth_rates(x_e: f64, y_e: f64, x_e_dot: f64, y_e_dot: f64) -> Result<(f64, f64)> {
    ensure_finite("azimuth rate inputs", &[x_e, y_e, x_e_dot, y_e_dot])?;
    let p2 = x_e * x_e + y_e * y_e;
    let p_e = p2.sqrt();
    if p_e < AZIMUTH_EPS {
        return Err(Error::SingularAzimuth {
            sp: SingularPoint::Sp4,
            p_e,
        });
    }
    Ok((
        (x_e * x_e_dot + y_e * y_e_dot) / p_e,
        (x_e * y_e_dot - y_e * x_e_dot) / p2,
    ))
}

/// Surge/course dynamics expressed in the polar velocity coordinates:
/// `u_l' = f_ul + b_ul*tau_u + eps_ra*tau_r` and `r_l' = f_rl + b_r*tau_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedDynamics {
    pub f_ul: f64,
    pub f_rl: f64,
    pub b_ul: f64,
    pub eps_ra: f64,
    pub r_l: f64,
    pub psi_l: f64,
}

pub fn transformed_dynamics(
    s: &VesselState,
    drift: &Drift,
    psi_a_dot: f64,
    psi_a_ddot: f64,
    p: &VesselParams,
) -> Result<TransformedDynamics> {
    let (_, psi_a) = polar_velocity(s.u, s.v)?;
    let (sin_a, cos_a) = psi_a.sin_cos();
    Ok(TransformedDynamics {
        f_ul: cos_a * drift.f_u + sin_a * drift.f_v,
        f_rl: drift.f_r + psi_a_ddot,
        b_ul: cos_a * p.b_u,
        eps_ra: sin_a * p.eps_r,
        r_l: s.r + psi_a_dot,
        psi_l: s.psi + psi_a,
    })
}

/// Polar quantities at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarBundle {
    pub u_l: f64,
    pub psi_a: f64,
    pub psi_a_dot: f64,
    pub psi_a_ddot: f64,
    /// Course angle, unwrapped (follows `psi`).
    pub psi_l: f64,
    pub r_l: f64,
    pub p_e: f64,
    /// Azimuth to the target, in `[-pi, pi)`.
    pub psi_b: f64,
    pub psi_b_dot: f64,
    pub p_e_dot: f64,
    pub f_ul: f64,
    pub f_rl: f64,
    pub b_ul: f64,
    pub eps_ra: f64,
}

impl PolarBundle {
    /// Builds the bundle from the vessel state and its derivative.
    ///
    /// `deriv` supplies the kinematic rates and the body accelerations used for
    /// `psi_a_dot`; `nu_ddot` is the (filtered) body jerk used for `psi_a_ddot`.
    /// `target` and `target_vel` are the reference position and its velocity.
    pub fn build(
        s: &VesselState,
        deriv: &StateDerivative,
        nu_ddot: [f64; 3],
        target: [f64; 2],
        target_vel: [f64; 2],
        p: &VesselParams,
    ) -> Result<Self> {
        ensure_finite("vessel state", &s.to_array())?;
        let (u_l, psi_a) = polar_velocity(s.u, s.v)?;
        let (psi_a_dot, psi_a_ddot) =
            sideslip_rates(s.u, s.v, deriv.du, deriv.dv, nu_ddot[0], nu_ddot[1])?;
        let drift = crate::vessel::drift(s, p);
        let td = transformed_dynamics(s, &drift, psi_a_dot, psi_a_ddot, p)?;

        let x_e = target[0] - s.x;
        let y_e = target[1] - s.y;
        let (p_e, psi_b) = polar_error(x_e, y_e)?;
        let (p_e_dot, psi_b_dot) =
            azimuth_rates(x_e, y_e, target_vel[0] - deriv.dx, target_vel[1] - deriv.dy)?;

        Ok(Self {
            u_l,
            psi_a,
            psi_a_dot,
            psi_a_ddot,
            psi_l: td.psi_l,
            r_l: td.r_l,
            p_e,
            psi_b,
            psi_b_dot,
            p_e_dot,
            f_ul: td.f_ul,
            f_rl: td.f_rl,
            b_ul: td.b_ul,
            eps_ra: td.eps_ra,
        })
    }

    /// `wrap(psi_l - psi_b)`, the angle the course makes with the line of sight.
    pub fn delta(&self) -> f64 {
        wrap_angle(self.psi_l - self.psi_b)
    }
}

/// Discrete low-pass estimate of the body jerk `(u'', v'', r'')`.
///
/// Each update differences the current and previous body accelerations and
/// blends the result into the estimate with weight `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub nu_ddot_est: [f64; 3],
    pub prev_nu_dot: [f64; 3],
    pub mu: f64,
    pub initialized: bool,
}

impl FilterState {
    pub const DEFAULT_MU: f64 = 0.125;

    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: format!("filter coefficient must lie in (0, 1], got {mu}"),
            });
        }
        Ok(Self {
            nu_ddot_est: [0.0; 3],
            prev_nu_dot: [0.0; 3],
            mu,
            initialized: false,
        })
    }
}

impl Default for FilterState {
    fn default() -> Self {
        Self::new(Self::DEFAULT_MU).expect("default mu is valid")
    }
}

/// Feeds one body-acceleration sample into the filter.
///
/// The first call only records the sample and leaves the estimate at zero.
pub fn lowpass_update(fs: FilterState, nu_dot_now: [f64; 3], dt: f64) -> FilterState {
    if !fs.initialized {
        return FilterState {
            nu_ddot_est: [0.0; 3],
            prev_nu_dot: nu_dot_now,
            initialized: true,
            ..fs
        };
    }
    let mu = fs.mu;
    let est = std::array::from_fn(|i| {
        let measured = (nu_dot_now[i] - fs.prev_nu_dot[i]) / dt;
        (1.0 - mu) * fs.nu_ddot_est[i] + mu * measured
    });
    FilterState {
        nu_ddot_est: est,
        prev_nu_dot: nu_dot_now,
        ..fs
    }
}
