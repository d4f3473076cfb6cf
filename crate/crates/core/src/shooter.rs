//! Two-dimensional radial initial-value solver for
//! `-Δu = Q(r) r^{2α} e^{2u}`, `u(0) = ρ`, `u'(0) = 0`.
//!
//! Integrates in `t = log r` the state `(u, m = r u', κ)` where `κ` is the
//! accumulated curvature `∫_0^r Q s^{2α} e^{2u} 2πs ds`:
//! `u' = m`, `m' = -S`, `κ' = 2π S`, `S = Q r^{2α+2} e^{2u}`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::spread;
use crate::error::{invalid, Error, Result};
use crate::grid::{Density, RadialField, RadialGrid};
use crate::kernel::KernelMatrix;
use crate::model::{CutoffConfig, ModelParams};
use crate::profile::QProfile;

/// `|u|` beyond which integration stops.
pub const BLOWUP_GUARD: f64 = 500.0;
const MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone)]
pub struct ShootResult {
    pub field: RadialField,
    /// `u'(r)` at the nodes.
    pub u_prime: Vec<f64>,
    /// Accumulated curvature at the nodes.
    pub accumulated: Vec<f64>,
    /// `∫_{B_{r_max}} Q |x|^{2α} e^{2u} dx`.
    pub total_curvature: f64,
    pub blowup_flag: bool,
    /// Largest `|−2π r u'(r) − κ(r)| / max(κ(r), 1e-300)` over the nodes.
    pub green_defect: f64,
    /// Node density prefactors times `e^{2u}`, ready for the kernel.
    pub density: Density,
}

type State = [f64; 3];

struct Rhs<'a> {
    profile: &'a QProfile,
    params: ModelParams,
    cutoffs: CutoffConfig,
}

impl Rhs<'_> {
    fn source(&self, t: f64, u: f64) -> f64 {
        let r = t.exp();
        let (a, b) = self.profile.split(r, 0.0, &self.cutoffs, &self.params);
        let w = self.params.weight_exponent();
        // (a + b r^{2α}) e^{2u} r²
        (a * (2.0 * t + 2.0 * u).exp()) + b * ((w + 2.0) * t + 2.0 * u).exp()
    }

    fn eval(&self, t: f64, y: &State) -> State {
        let s = self.source(t, y[0]);
        [y[1], -s, 2.0 * PI * s]
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dp_step(rhs: &Rhs, t: f64, y: &State, h: f64) -> (State, State) {
    let mut k = [[0.0; 3]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for i in 0..3 {
                ys[i] += h * A[s][j] * kj[i];
            }
        }
        k[s] = rhs.eval(t + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err = [0.0; 3];
    for s in 0..7 {
        for i in 0..3 {
            y5[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    (y5, err)
}

/// Advances `y` from `t0` to `t1` with local error control.
fn advance(rhs: &Rhs, t0: f64, t1: f64, y: &mut State, h: &mut f64, tol: f64) -> Result<()> {
    let mut t = t0;
    let mut steps = 0;
    while t < t1 {
        let hs = h.min(t1 - t);
        let (y5, e) = dp_step(rhs, t, y, hs);
        let err = (0..3)
            .map(|i| e[i].abs() / (tol + tol * y[i].abs().max(y5[i].abs())))
            .fold(0.0, f64::max);
        if err <= 1.0 || hs <= 1e-14 {
            t = if hs == t1 - t { t1 } else { t + hs };
            *y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        // Keep the natural step when it was only clipped by the segment end.
        if hs < *h && err <= 1.0 {
            *h = h.max(hs * factor);
        } else {
            *h = (hs * factor).max(1e-14);
        }
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::Precondition("shooting step budget exhausted".into()));
        }
        if y[0].abs() > BLOWUP_GUARD || !y[0].is_finite() {
            return Ok(());
        }
    }
    Ok(())
}

/// Shoots on the nodes of `grid` (`n = 2`).
pub fn shoot_on_grid(profile: &QProfile, params: &ModelParams, rho: f64, grid: &RadialGrid, tol: f64) -> Result<ShootResult> {
    if params.n != 2 {
        return Err(Error::Precondition(format!("the shooter is two-dimensional, got n = {}", params.n)));
    }
    if profile.self_weighted() {
        return Err(invalid("profile", "self-scaled curvature is not supported by the shooter"));
    }
    profile.validate()?;
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if !rho.is_finite() {
        return Err(invalid("rho", "must be finite"));
    }
    let rhs = Rhs {
        profile,
        params: *params,
        cutoffs: CutoffConfig::default(),
    };
    let a2 = 2.0 + 2.0 * params.alpha;
    let nodes = grid.nodes();
    // Series start: pick r0 so that the leading correction is below 1e-12.
    let q0 = {
        let r = nodes[0].min(1e-12);
        let (a, b) = profile.split(r, 0.0, &rhs.cutoffs, params);
        a * r.powf(-params.weight_exponent()) + b
    };
    let coef = q0.abs() * (2.0 * rho).exp();
    let r0 = if coef > 0.0 {
        nodes[0].min((1e-12 * a2 * a2 / coef).powf(1.0 / a2))
    } else {
        nodes[0]
    };
    let lead = coef.copysign(q0) * r0.powf(a2);
    let mut y: State = [rho - lead / (a2 * a2), -lead / a2, 2.0 * PI * lead / a2];
    let mut t = r0.ln();
    let mut h = 1e-3;
    let breaks: Vec<f64> = profile
        .breakpoints(&rhs.cutoffs)
        .into_iter()
        .map(f64::ln)
        .collect();
    let m = nodes.len();
    let (mut us, mut ms, mut ks) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut blowup = false;
    let mut stop = m;
    for (j, &r) in nodes.iter().enumerate() {
        let tj = r.ln();
        let t_start = t;
        for &b in breaks.iter().filter(|b| **b > t_start && **b < tj) {
            advance(&rhs, t, b, &mut y, &mut h, tol)?;
            t = b;
        }
        if tj > t {
            advance(&rhs, t, tj, &mut y, &mut h, tol)?;
            t = tj;
        }
        if y[0].abs() > BLOWUP_GUARD || !y.iter().all(|v| v.is_finite()) {
            blowup = true;
            stop = j;
            break;
        }
        (us[j], ms[j], ks[j]) = (y[0], y[1], y[2]);
    }
    if blowup {
        // Continue harmonically from the last good node.
        let (u_last, m_last, k_last, t_last) = if stop == 0 {
            (rho, 0.0, 0.0, r0.ln())
        } else {
            (us[stop - 1], ms[stop - 1], ks[stop - 1], nodes[stop - 1].ln())
        };
        for j in stop..m {
            us[j] = u_last + m_last * (nodes[j].ln() - t_last);
            ms[j] = m_last;
            ks[j] = k_last;
        }
    }
    let green_defect = (0..stop)
        .map(|j| (-2.0 * PI * ms[j] - ks[j]).abs() / ks[j].abs().max(1e-300))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let (regular, singular): (Vec<f64>, Vec<f64>) = nodes
        .iter()
        .zip(&us)
        .map(|(&r, &u)| {
            let (a, b) = profile.split(r, 0.0, &rhs.cutoffs, params);
            let e = (2.0 * u).exp();
            (a * e, b * e)
        })
        .unzip();
    let total_curvature = ks[m - 1];
    let field = RadialField {
        u0: rho,
        tail_slope: -ms[m - 1],
        values: us,
    };
    Ok(ShootResult {
        u_prime: ms.iter().zip(nodes).map(|(m, r)| m / r).collect(),
        accumulated: ks,
        total_curvature,
        blowup_flag: blowup,
        green_defect,
        density: Density { regular, singular },
        field,
    })
}

/// Shoots on a 2048-node geometric grid ending at `r_max`.
pub fn shoot(profile: &QProfile, alpha: f64, rho: f64, r_max: f64, tol: f64) -> Result<(RadialGrid, ShootResult)> {
    let params = ModelParams::new(2, alpha)?;
    let grid = RadialGrid::new(2048, r_max * 1e-11, r_max, alpha, 2)?;
    let res = shoot_on_grid(profile, &params, rho, &grid, tol)?;
    Ok((grid, res))
}

/// Which counterexample family to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemarkCase {
    /// Tent curvature with `u(0) = k`.
    Tent,
    /// Piecewise-linear family `Q_k` with `u(0) = log 2`.
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemarkRow {
    pub k: f64,
    pub total_curvature: Option<f64>,
    pub blowup: bool,
    /// `sup_{r < 1} |u - u_B1|` against the closed form inside the unit ball.
    pub interior_error: Option<f64>,
    pub error: Option<String>,
}

/// One shot per `k`, rows sorted by `k`.
pub fn remark62_scan(case: RemarkCase, k_values: &[f64], r_max: f64, tol: f64) -> Vec<RemarkRow> {
    let mut rows: Vec<RemarkRow> = k_values
        .par_iter()
        .map(|&k| {
            let (profile, rho) = match case {
                RemarkCase::Tent => (QProfile::Tent, k),
                RemarkCase::PiecewiseLinear => (QProfile::PiecewiseLinearFamily { k }, 2f64.ln()),
            };
            match shoot(&profile, 0.0, rho, r_max, tol) {
                Ok((grid, res)) => {
                    let interior = grid
                        .nodes()
                        .iter()
                        .zip(&res.field.values)
                        .filter(|(r, _)| **r < 1.0)
                        .map(|(r, u)| {
                            let exact = match case {
                                RemarkCase::Tent => k,
                                RemarkCase::PiecewiseLinear => (2.0 / (1.0 + r * r)).ln(),
                            };
                            (u - exact).abs()
                        })
                        .fold(0.0, f64::max);
                    RemarkRow {
                        k,
                        total_curvature: Some(res.total_curvature),
                        blowup: res.blowup_flag,
                        interior_error: Some(interior),
                        error: None,
                    }
                }
                Err(e) => RemarkRow {
                    k,
                    total_curvature: None,
                    blowup: false,
                    interior_error: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| a.k.total_cmp(&b.k));
    rows
}

/// `sup_j |w_j - mean(w)|` for `w = u_shoot - K[density]`; small for a
/// normal solution. The kernel must live on the grid the shot used.
pub fn cross_validate(shot: &ShootResult, kernel: &KernelMatrix) -> Result<f64> {
    let masses = kernel.grid().masses(&shot.density)?;
    let (pot, _) = kernel.apply_masses(&masses)?;
    Ok(spread(shot.field.values.iter().zip(&pot).map(|(u, v)| u - v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bubble_reproduced() {
        let (grid, res) = shoot(&QProfile::one(), 0.0, 2f64.ln(), 100.0, 1e-12).unwrap();
        let err = grid
            .nodes()
            .iter()
            .zip(&res.field.values)
            .map(|(r, u)| (u - (2.0 / (1.0 + r * r)).ln()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        let kappa = 4.0 * PI * 1e4 / (1.0 + 1e4);
        assert!((res.total_curvature - kappa).abs() < 1e-6 * kappa);
        assert!((res.total_curvature - 4.0 * PI).abs() < 1e-3 * 4.0 * PI);
        assert!(res.green_defect < 1e-8, "{}", res.green_defect);
        assert!(res.u_prime.iter().all(|d| *d <= 0.0));
    }

    #[test]
    fn tent_is_flat_inside_unit_ball() {
        let (_, res) = shoot(&QProfile::Tent, 0.0, 3.0, 0.99, 1e-10).unwrap();
        assert!(res.field.values.iter().all(|u| *u == 3.0));
        assert_eq!(res.total_curvature, 0.0);
    }

    #[test]
    fn zero_curvature_is_constant() {
        let (grid, res) = shoot(&QProfile::Constant { c: 0.0 }, -0.3, 1.7, 10.0, 1e-10).unwrap();
        assert!(res.field.values.iter().all(|u| *u == 1.7));
        let p = ModelParams::new(2, -0.3).unwrap();
        let k = crate::kernel::build_kernel(&p, &grid).unwrap();
        assert_eq!(cross_validate(&res, &k).unwrap(), 0.0);
    }

    #[test]
    fn rejects_higher_dimensions() {
        let p = ModelParams::new(4, 0.0).unwrap();
        let g = RadialGrid::new(64, 1e-2, 1e2, 0.0, 4).unwrap();
        assert!(shoot_on_grid(&QProfile::one(), &p, 0.0, &g, 1e-8).is_err());
    }
}
