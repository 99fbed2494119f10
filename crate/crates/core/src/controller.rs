//! Backstepping reference controller in polar coordinates.
//!
//! The outer loop steers `p_e` to the towing distance `c_d` and the course
//! `psi_l` to the reference course `psi_ld` through two virtual inputs, the
//! stabilizing functions `alpha_ul` (for `u_l`) and `alpha_rl` (for `r_l`).
//! The inner loop drives the velocity errors `e = alpha - (u_l, r_l)` to zero
//! by inverting the transformed input matrix.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result, SingularPoint};
use crate::transforms::{wrap_angle, PolarBundle};
use crate::vessel::ControlInput;

/// Guard threshold for `|cos(psi_l - psi_b)|` and `|b_ul|`.
pub const SINGULAR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    pub k_p: f64,
    pub k_psi: f64,
    pub k_u: f64,
    pub k_r: f64,
    pub gamma_psi: f64,
    pub gamma_u: f64,
    pub gamma_r: f64,
    /// Towing distance in metres.
    pub c_d: f64,
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("k_p", self.k_p)?;
        ensure_positive("k_psi", self.k_psi)?;
        ensure_positive("k_u", self.k_u)?;
        ensure_positive("k_r", self.k_r)?;
        ensure_positive("gamma_psi", self.gamma_psi)?;
        ensure_positive("gamma_u", self.gamma_u)?;
        ensure_positive("gamma_r", self.gamma_r)?;
        ensure_positive("c_d", self.c_d)
    }
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            k_p: 1.0,
            k_psi: 6.0,
            k_u: 3.0,
            k_r: 1.0,
            gamma_psi: 1.0,
            gamma_u: 1.0,
            gamma_r: 1.0,
            c_d: 6.0,
        }
    }
}

/// Tracking errors fed to the inner loop and the Lyapunov monitor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    pub p_e: f64,
    /// `wrap(psi_ld - psi_l)`.
    pub psi_le: f64,
    /// `alpha_ul - u_l`.
    pub e_ul: f64,
    /// `alpha_rl - r_l`.
    pub e_rl: f64,
}

impl ErrorState {
    pub fn new(reference: &ReferencePoint, bundle: &PolarBundle, alpha: [f64; 2]) -> Self {
        Self {
            p_e: bundle.p_e,
            psi_le: wrap_angle(reference.psi_ld - bundle.psi_l),
            e_ul: alpha[0] - bundle.u_l,
            e_rl: alpha[1] - bundle.r_l,
        }
    }
}

/// Target point on the reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub x_d: f64,
    pub y_d: f64,
    pub psi_ld: f64,
    pub u_ld: f64,
    pub u_ld_dot: f64,
    pub psi_ld_dot: f64,
}

impl ReferencePoint {
    pub fn position(&self) -> [f64; 2] {
        [self.x_d, self.y_d]
    }

    /// `(x_d', y_d') = u_ld * (cos psi_ld, sin psi_ld)`.
    pub fn velocity(&self) -> [f64; 2] {
        let (s, c) = self.psi_ld.sin_cos();
        [self.u_ld * c, self.u_ld * s]
    }
}

/// Virtual inputs `(alpha_ul, alpha_rl)`.
pub fn stabilizing_functions(
    reference: &ReferencePoint,
    bundle: &PolarBundle,
    g: &Gains,
) -> Result<(f64, f64)> {
    let cos_d = bundle.delta().cos();
    if cos_d.abs() < SINGULAR_EPS {
        return Err(Error::SingularStabilizer {
            sp: SingularPoint::Sp1,
            cos: cos_d,
        });
    }
    let cos_ref = wrap_angle(reference.psi_ld - bundle.psi_b).cos();
    let alpha_ul = (reference.u_ld * cos_ref + g.k_p * (bundle.p_e - g.c_d)) / cos_d;
    let psi_le = wrap_angle(reference.psi_ld - bundle.psi_l);
    let alpha_rl = reference.psi_ld_dot + g.k_psi * psi_le / g.gamma_psi;
    Ok((alpha_ul, alpha_rl))
}

/// Backward-difference rates of the virtual inputs; zero without history.
pub fn stabilizer_rates(prev: Option<[f64; 2]>, current: [f64; 2], dt: f64) -> [f64; 2] {
    match prev {
        Some(p) => [(current[0] - p[0]) / dt, (current[1] - p[1]) / dt],
        None => [0.0; 2],
    }
}

/// Nominal input `tau_ref`.
///
/// Solves
///
/// ```text
/// [b_ul eps_ra] tau = [alpha_ul' - f_ul + (k_u e_ul + (p_e - c_d) cos(psi_l - psi_b)) / gamma_u]
/// [0    b_r   ]       [alpha_rl' - f_rl + (k_r e_rl + gamma_psi psi_le) / gamma_r           ]
/// ```
///
/// by back substitution.
pub fn reference_control(
    e: &ErrorState,
    bundle: &PolarBundle,
    alpha_dots: [f64; 2],
    g: &Gains,
    b_r: f64,
) -> Result<ControlInput> {
    if bundle.b_ul.abs() < SINGULAR_EPS {
        return Err(Error::SingularInputMatrix {
            sp: SingularPoint::Sp2,
            b_ul: bundle.b_ul,
            b_r,
        });
    }
    if b_r == 0.0 {
        return Err(Error::SingularInputMatrix {
            sp: SingularPoint::Sp2,
            b_ul: bundle.b_ul,
            b_r,
        });
    }
    let cos_d = bundle.delta().cos();
    let w_u = alpha_dots[0] - bundle.f_ul + (g.k_u * e.e_ul + (e.p_e - g.c_d) * cos_d) / g.gamma_u;
    let w_r =
        alpha_dots[1] - bundle.f_rl + (g.k_r * e.e_rl + g.gamma_psi * e.psi_le) / g.gamma_r;
    let tau_r = w_r / b_r;
    let tau_u = (w_u - bundle.eps_ra * tau_r) / bundle.b_ul;
    let tau = ControlInput::new(tau_u, tau_r);
    ensure_finite("reference control", &tau.as_array())?;
    Ok(tau)
}

/// Composite Lyapunov function of the tracking errors.
pub fn lyapunov_v2(e: &ErrorState, g: &Gains) -> f64 {
    let dp = e.p_e - g.c_d;
    0.5 * (dp * dp + g.gamma_psi * e.psi_le * e.psi_le)
        + 0.5 * (g.gamma_u * e.e_ul * e.e_ul + g.gamma_r * e.e_rl * e.e_rl)
}

/// `gamma_psi psi_le^2 + gamma_u e_ul^2 + gamma_r e_rl^2`, the initial-condition
/// term in the towing-distance bound.
pub fn v_r(e: &ErrorState, g: &Gains) -> f64 {
    g.gamma_psi * e.psi_le * e.psi_le + g.gamma_u * e.e_ul * e.e_ul + g.gamma_r * e.e_rl * e.e_rl
}

/// Smallest towing distance that keeps `p_e` away from zero for the given
/// initial radius and initial `v_r`.
pub fn min_cd(p_e0: f64, v_r0: f64) -> Result<f64> {
    ensure_positive("p_e0", p_e0)?;
    ensure_finite("v_r0", &[v_r0])?;
    Ok((0.5 * p_e0 * p_e0 + v_r0) / p_e0)
}

/// Decay-rate constant `0.5 * min{1/k_p, gamma_psi/k_psi, gamma_u/k_u, gamma_r/k_r}`.
///
/// Reported for reference only; nothing in the loop depends on it.
pub fn decay_rate_diagnostic(g: &Gains) -> f64 {
    0.5 * [
        1.0 / g.k_p,
        g.gamma_psi / g.k_psi,
        g.gamma_u / g.k_u,
        g.gamma_r / g.k_r,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}
