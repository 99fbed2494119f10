//! Minimum-norm correction `X` subject to a handful of half-planes `a.X <= b`.
//!
//! In two dimensions the minimizer of `|X|^2` over a polygon is either the
//! origin, the projection of the origin onto one boundary line, or the
//! intersection of two boundary lines. With at most four rows that is at most
//! eleven candidates, so the solver enumerates them all and keeps the feasible
//! one of least norm. No iteration, no warm start.
//!
//! Rows are normalized to unit normals before any comparison so that the
//! result does not depend on how each row is scaled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ROWS: usize = 4;

/// Feasibility slack on unit-normal rows, relative to the problem scale.
pub const FEAS_TOL: f64 = 1e-10;

/// Edge of the bounding box used by the slack LP, relative to the problem scale.
const LP_BOX: f64 = 1e6;

/// One inequality `a[0]*X_u + a[1]*X_r <= b`.
///
/// Soft rows may be relaxed by a common slack when the system is infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub a: [f64; 2],
    pub b: f64,
    pub soft: bool,
}

impl HalfPlane {
    pub fn hard(a: [f64; 2], b: f64) -> Self {
        Self { a, b, soft: false }
    }

    pub fn soft(a: [f64; 2], b: f64) -> Self {
        Self { a, b, soft: true }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.a[0] * x[0] + self.a[1] * x[1]
    }

    pub fn violation(&self, x: [f64; 2]) -> f64 {
        self.eval(x) - self.b
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    /// `X = 0` satisfies every row.
    Unconstrained,
    /// The optimum lies on the listed rows.
    ActiveSet(Vec<usize>),
    /// No `X` satisfies all rows; soft rows were shifted by `slack`.
    InfeasibleRelaxed,
}

impl QpStatus {
    pub fn label(&self) -> &'static str {
        match self {
            QpStatus::Unconstrained => "unconstrained",
            QpStatus::ActiveSet(_) => "active",
            QpStatus::InfeasibleRelaxed => "relaxed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: [f64; 2],
    pub status: QpStatus,
    /// Rows holding with equality at `x` (after relaxation, if any).
    pub active: Vec<usize>,
    /// Shift applied to the soft rows; zero unless relaxed.
    pub slack: f64,
    /// KKT multipliers, one per input row, for `x = -1/2 * sum(lambda_i a_i)`.
    pub multipliers: Vec<f64>,
}

impl QpSolution {
    pub fn norm(&self) -> f64 {
        self.x[0].hypot(self.x[1])
    }
}

/// Row with unit normal, or `None` for an all-zero row.
#[derive(Debug, Clone, Copy)]
struct Unit {
    a: [f64; 2],
    b: f64,
    scale: f64,
}

fn normalize(row: &HalfPlane) -> Option<Unit> {
    let n = row.a[0].hypot(row.a[1]);
    (n > 0.0).then(|| Unit {
        a: [row.a[0] / n, row.a[1] / n],
        b: row.b / n,
        scale: n,
    })
}

fn dot(a: [f64; 2], x: [f64; 2]) -> f64 {
    a[0] * x[0] + a[1] * x[1]
}

fn norm2(x: [f64; 2]) -> f64 {
    dot(x, x)
}

fn solve2(m: [[f64; 2]; 2], r: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m[0][0].abs().max(m[0][1].abs()) * m[1][0].abs().max(m[1][1].abs());
    if scale == 0.0 || det.abs() <= 1e-12 * scale {
        return None;
    }
    Some([
        (r[0] * m[1][1] - m[0][1] * r[1]) / det,
        (m[0][0] * r[1] - r[0] * m[1][0]) / det,
    ])
}

fn tolerance(units: &[Option<Unit>], x: [f64; 2]) -> f64 {
    let b_scale = units
        .iter()
        .flatten()
        .fold(0.0_f64, |m, u| m.max(u.b.abs()));
    FEAS_TOL * 1f64.max(b_scale).max(norm2(x).sqrt())
}

fn feasible(units: &[Option<Unit>], rows: &[HalfPlane], x: [f64; 2]) -> bool {
    let tol = tolerance(units, x);
    units.iter().zip(rows).all(|(u, r)| match u {
        Some(u) => dot(u.a, x) - u.b <= tol,
        None => r.b >= 0.0,
    })
}

/// Minimizes `|X|^2` subject to `rows`.
///
/// When the rows have no common point the soft rows are relaxed by the
/// smallest common slack that restores feasibility and the problem is solved
/// again. Fails if the hard rows alone are infeasible.
pub fn solve(rows: &[HalfPlane]) -> Result<QpSolution> {
    if rows.len() > MAX_ROWS {
        return Err(Error::InvalidParameter {
            name: "rows",
            reason: format!("at most {MAX_ROWS} rows supported, got {}", rows.len()),
        });
    }
    for r in rows {
        if !(r.a[0].is_finite() && r.a[1].is_finite() && r.b.is_finite()) {
            return Err(Error::NonFinite {
                what: "constraint row",
            });
        }
    }
    if let Some(sol) = solve_exact(rows) {
        return Ok(sol);
    }
    let slack = minimal_slack(rows)?;
    let relaxed: Vec<HalfPlane> = rows
        .iter()
        .map(|r| {
            if r.soft {
                HalfPlane { b: r.b + slack, ..*r }
            } else {
                *r
            }
        })
        .collect();
    match solve_exact(&relaxed) {
        Some(mut sol) => {
            sol.status = QpStatus::InfeasibleRelaxed;
            sol.slack = slack;
            Ok(sol)
        }
        None => Err(Error::Infeasible(format!(
            "still infeasible after relaxing soft rows by {slack:e}"
        ))),
    }
}

fn solve_exact(rows: &[HalfPlane]) -> Option<QpSolution> {
    let units: Vec<Option<Unit>> = rows.iter().map(normalize).collect();

    let mut candidates: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    for u in units.iter().flatten() {
        if u.b < 0.0 {
            candidates.push([u.b * u.a[0], u.b * u.a[1]]);
        }
    }
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            if let (Some(ui), Some(uj)) = (units[i], units[j]) {
                if let Some(x) = solve2([ui.a, uj.a], [ui.b, uj.b]) {
                    candidates.push(x);
                }
            }
        }
    }

    let best = candidates
        .into_iter()
        .filter(|&x| feasible(&units, rows, x))
        .min_by(|a, b| norm2(*a).total_cmp(&norm2(*b)))?;

    let tol = tolerance(&units, best);
    let active: Vec<usize> = units
        .iter()
        .enumerate()
        .filter_map(|(i, u)| u.filter(|u| (dot(u.a, best) - u.b).abs() <= tol).map(|_| i))
        .collect();

    let multipliers = if best == [0.0, 0.0] {
        vec![0.0; rows.len()]
    } else {
        multipliers_for(&units, &active, best)
    };
    let status = if best == [0.0, 0.0] {
        QpStatus::Unconstrained
    } else {
        QpStatus::ActiveSet(active.clone())
    };
    Some(QpSolution {
        x: best,
        status,
        active: if best == [0.0, 0.0] { Vec::new() } else { active },
        slack: 0.0,
        multipliers,
    })
}

/// Nonnegative `lambda` with `x = -1/2 * sum(lambda_i a_i)` over the active rows.
fn multipliers_for(units: &[Option<Unit>], active: &[usize], x: [f64; 2]) -> Vec<f64> {
    let mut lambda = vec![0.0; units.len()];
    let xn = norm2(x).sqrt();
    // In unit-normal terms a single active row gives x = b*a, so lambda = -2b.
    for &i in active {
        let u = units[i].expect("active rows are non-zero");
        let along = [u.b * u.a[0], u.b * u.a[1]];
        if u.b < 0.0 && norm2([x[0] - along[0], x[1] - along[1]]).sqrt() <= 1e-9 * xn.max(1.0) {
            lambda[i] = -2.0 * u.b / u.scale;
            return lambda;
        }
    }
    for (k, &i) in active.iter().enumerate() {
        for &j in &active[k + 1..] {
            let (ui, uj) = (units[i].unwrap(), units[j].unwrap());
            // -1/2 [a_i a_j] [l_i l_j]^T = x
            let m = [[ui.a[0], uj.a[0]], [ui.a[1], uj.a[1]]];
            if let Some(l) = solve2(m, [-2.0 * x[0], -2.0 * x[1]]) {
                if l[0] >= -1e-12 * xn.max(1.0) && l[1] >= -1e-12 * xn.max(1.0) {
                    lambda[i] = l[0].max(0.0) / ui.scale;
                    lambda[j] = l[1].max(0.0) / uj.scale;
                    return lambda;
                }
            }
        }
    }
    lambda
}

/// Smallest `s >= 0` such that the soft rows shifted by `s` and the hard rows
/// have a common point.
///
/// Linear program in `(X_u, X_r, s)` solved by enumerating the vertices of the
/// constraint polytope intersected with a large box.
fn minimal_slack(rows: &[HalfPlane]) -> Result<f64> {
    // Constraints g.z <= h with z = (X_u, X_r, s), rows on unit normals.
    let mut cons: Vec<([f64; 3], f64)> = Vec::new();
    let mut scale = 1.0_f64;
    for r in rows {
        match normalize(r) {
            Some(u) => {
                scale = scale.max(u.b.abs());
                let gs = if r.soft { -1.0 } else { 0.0 };
                cons.push(([u.a[0], u.a[1], gs], u.b));
            }
            None if r.b >= 0.0 => {}
            None if r.soft => cons.push(([0.0, 0.0, -1.0], r.b)),
            None => {
                return Err(Error::Infeasible(format!(
                    "hard row with zero normal and b = {:e}",
                    r.b
                )))
            }
        }
    }
    let big = LP_BOX * scale;
    cons.push(([0.0, 0.0, -1.0], 0.0));
    cons.push(([1.0, 0.0, 0.0], big));
    cons.push(([-1.0, 0.0, 0.0], big));
    cons.push(([0.0, 1.0, 0.0], big));
    cons.push(([0.0, -1.0, 0.0], big));
    cons.push(([0.0, 0.0, 1.0], big));

    let tol = FEAS_TOL * big;
    let mut best: Option<f64> = None;
    let n = cons.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let Some(z) = solve3([cons[i].0, cons[j].0, cons[k].0], [cons[i].1, cons[j].1, cons[k].1])
                else {
                    continue;
                };
                if cons.iter().all(|(g, h)| g[0] * z[0] + g[1] * z[1] + g[2] * z[2] <= h + tol)
                    && best.is_none_or(|b| z[2] < b)
                {
                    best = Some(z[2]);
                }
            }
        }
    }
    match best {
        Some(s) => {
            let s = s.max(0.0);
            // Nudge past round-off so the shifted rows certainly intersect.
            Ok(s * (1.0 + 1e-9) + FEAS_TOL * scale)
        }
        None => Err(Error::Infeasible("hard rows have no common point".into())),
    }
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][c] = r[row];
        }
        *o = det(mc) / d;
    }
    Some(out)
}

/// Largest violation among stationarity, primal feasibility, dual feasibility
/// and complementary slackness, for the original (unnormalized) rows.
pub fn kkt_residual(rows: &[HalfPlane], sol: &QpSolution) -> f64 {
    let mut g = sol.x;
    for (r, l) in rows.iter().zip(&sol.multipliers) {
        g[0] += 0.5 * l * r.a[0];
        g[1] += 0.5 * l * r.a[1];
    }
    let mut res = g[0].abs().max(g[1].abs());
    for (r, &l) in rows.iter().zip(&sol.multipliers) {
        let b = if r.soft { r.b + sol.slack } else { r.b };
        let viol = r.eval(sol.x) - b;
        res = res.max(viol.max(0.0)).max((-l).max(0.0)).max((l * viol).abs());
    }
    res
}
