//! Prescribed total curvature for `(-Δ)^{n/2} u = (1 + |x|^{nα}) e^{nu}`,
//! `α ∈ (-1, 0)`, through the self-scaled cut-off problems.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{pohozaev_singular, total_curvature, total_volume};
use crate::error::{invalid, Error, Result};
use crate::grid::{Density, RadialField};
use crate::kernel::KernelMatrix;
use crate::model::{CutoffConfig, ModelParams};
use crate::profile::QProfile;
use crate::solver::{initial_bubble, solve_normal_from, Normalization, SolverOptions};

const SECANT_MAX: usize = 60;
const SECANT_CLAMP: f64 = 3.0;
const MATCH_REL: f64 = 1e-9;
/// Tolerance on `|identity| / Λ₁` for a certified solution.
pub const SINGULAR_IDENTITY_TOL: f64 = 1e-3;

/// Cut-off parameters visited in order: every `eps` at `delta[0]`, then the
/// remaining `delta` values at the last `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            eps: vec![1e-1, 1e-2, 1e-3, 0.0],
            delta: vec![1e-1, 1e-2, 0.0],
        }
    }
}

impl Schedule {
    pub fn stages(&self) -> Result<Vec<(f64, f64)>> {
        let decreasing = |v: &[f64]| v.windows(2).all(|w| w[0] > w[1]);
        if self.eps.is_empty() || self.delta.is_empty() {
            return Err(invalid("schedule", "eps and delta need at least one value each"));
        }
        if !decreasing(&self.eps) || !decreasing(&self.delta) {
            return Err(invalid("schedule", "eps and delta must be strictly decreasing"));
        }
        if self.eps.iter().chain(&self.delta).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("schedule", "values must be finite and >= 0"));
        }
        let last_eps = *self.eps.last().expect("non-empty");
        let mut out: Vec<(f64, f64)> = self.eps.iter().map(|&e| (e, self.delta[0])).collect();
        out.extend(self.delta[1..].iter().map(|&d| (last_eps, d)));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub eps: f64,
    pub delta: f64,
    /// `u(0)` selected by the secant search.
    pub rho: f64,
    pub secant_iterations: usize,
    /// `Λ*(ρ) - target` at exit.
    pub mismatch: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub lambda_star_target: f64,
    /// `Λ*` recomputed on the rescaled field with `Q = 1 + r^{-nα}`.
    pub lambda_star: f64,
    /// `∫ |x|^{nα} e^{nũ}`.
    pub singular_volume: f64,
    pub rho: f64,
    /// `λ = e^{(p/α) u(0)}`.
    pub scale: f64,
    pub pohozaev_singular: f64,
    /// Sup over nodes of `|ũ - K[ũ] - mean|`.
    pub normality_deviation: f64,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<usize>,
    /// `Λ₁ max(-α, 1+α) < Λ* < Λ₁`.
    pub in_window: bool,
    pub converged: bool,
    pub truncation_dominated: bool,
    /// No solution was certified: outside the window, failed stage, or
    /// identity residual above tolerance.
    pub infeasible: bool,
}

/// Lower and upper ends of the existence window for `Λ*`.
pub fn existence_window(params: &ModelParams) -> (f64, f64) {
    let a = params.alpha;
    (params.lambda_1 * (-a).max(1.0 + a), params.lambda_1)
}

struct Stage<'a> {
    params: &'a ModelParams,
    kernel: &'a KernelMatrix,
    opts: SolverOptions,
    target: f64,
}

impl Stage<'_> {
    fn curvature_at(&self, rho: f64, warm: &RadialField) -> Result<Option<(RadialField, f64)>> {
        let norm = Normalization::FixedOrigin { rho };
        let (u, rep) = solve_normal_from(warm.clone(), &QProfile::SelfScaled, self.params, self.kernel, &norm, &self.opts)?;
        if !rep.converged || !rep.lambda_star.is_finite() {
            log::debug!("fixed-origin solve at rho = {rho} did not converge: {:?}", rep.cause);
            return Ok(None);
        }
        Ok(Some((u, rep.lambda_star - self.target)))
    }

    fn run(&self, rho: f64, warm: &RadialField, record: &mut StageRecord) -> Result<Option<RadialField>> {
        let Some((mut u1, mut f1)) = self.curvature_at(rho, warm)? else {
            return Ok(None);
        };
        let mut r1 = rho;
        let mut r2 = rho + 0.5;
        let Some((mut u2, mut f2)) = self.curvature_at(r2, &u1)? else {
            return Ok(None);
        };
        if f1.abs() < f2.abs() {
            std::mem::swap(&mut r1, &mut r2);
            std::mem::swap(&mut f1, &mut f2);
            std::mem::swap(&mut u1, &mut u2);
        }
        for it in 0..SECANT_MAX {
            record.secant_iterations = it;
            record.rho = r2;
            record.mismatch = f2;
            if f2.abs() < MATCH_REL * self.target {
                record.converged = true;
                return Ok(Some(u2));
            }
            if f2 == f1 {
                return Ok(None);
            }
            let step = (-f2 * (r2 - r1) / (f2 - f1)).clamp(-SECANT_CLAMP, SECANT_CLAMP);
            let r3 = r2 + step;
            let Some((u3, f3)) = self.curvature_at(r3, &u2)? else {
                return Ok(None);
            };
            (r1, f1) = (r2, f2);
            (r2, f2, u2) = (r3, f3, u3);
        }
        record.rho = r2;
        record.mismatch = f2;
        Ok(None)
    }
}

/// Runs the cut-off schedule at fixed `Λ*`, then rescales the limit to a
/// candidate solution of the `1 + |x|^{nα}` problem and re-verifies it.
///
/// `opts.cutoffs` supplies `p`; its `eps` and `delta` are overridden by the
/// schedule.
pub fn continuation_solve(
    lambda_star: f64,
    params: &ModelParams,
    kernel: &KernelMatrix,
    schedule: &Schedule,
    opts: &SolverOptions,
) -> Result<(RadialField, ContinuationReport)> {
    let alpha = params.alpha;
    let p = opts.cutoffs.p;
    if !(alpha > -1.0 && alpha < 0.0) {
        return Err(Error::Precondition(format!("continuation needs alpha in (-1, 0), got {alpha}")));
    }
    if !(p + alpha > 0.0) {
        return Err(Error::Precondition(format!("continuation needs p + alpha > 0, got p = {p}")));
    }
    if !(lambda_star > 0.0 && lambda_star.is_finite()) {
        return Err(invalid("lambda_star", format!("must be positive, got {lambda_star}")));
    }
    let stages = schedule.stages()?;
    let (lo, hi) = existence_window(params);
    let in_window = lo < lambda_star && lambda_star < hi;

    let rho0 = 2f64.ln();
    let mut u = initial_bubble(
        &params.with_alpha(0.0)?,
        kernel.grid(),
        &Normalization::FixedOrigin { rho: rho0 },
    );
    let mut rho = rho0;
    let mut records = Vec::with_capacity(stages.len());
    let mut failed_stage = None;
    for (k, &(eps, delta)) in stages.iter().enumerate() {
        let stage = Stage {
            params,
            kernel,
            opts: SolverOptions {
                cutoffs: CutoffConfig::new(eps, delta, p)?,
                ..*opts
            },
            target: lambda_star,
        };
        let mut record = StageRecord {
            eps,
            delta,
            rho,
            secant_iterations: 0,
            mismatch: f64::NAN,
            converged: false,
        };
        let out = stage.run(rho, &u, &mut record).map_err(|e| Error::Stage {
            stage: k,
            eps,
            delta,
            reason: e.to_string(),
        })?;
        log::debug!("stage {k} (eps = {eps}, delta = {delta}): {record:?}");
        let ok = record.converged;
        rho = record.rho;
        records.push(record);
        match out {
            Some(field) if ok => u = field,
            _ => {
                failed_stage = Some(k);
                break;
            }
        }
    }

    let converged = failed_stage.is_none();
    let last = *stages.last().expect("non-empty");
    let cut_free = last == (0.0, 0.0);
    // λ^{nα} e^{-np u(0)} = 1 turns the self-scaled factor into |x|^{nα}.
    let log_scale = p / alpha * u.u0;
    let scaled_kernel = kernel.rescaled(params, log_scale.exp())?;
    let grid = scaled_kernel.grid();
    let v = u.shifted(log_scale);
    let cutoffs = CutoffConfig::default();
    let curv = total_curvature(&v, &QProfile::InversePower, grid, params, &cutoffs)?;
    let vol = total_volume(&v, grid, params)?;
    let lam = curv.total();
    let identity = pohozaev_singular(&v, grid, params, lam)?;
    let normality_deviation = normality(&v, &scaled_kernel, params)?;
    let infeasible = !in_window
        || !converged
        || !cut_free
        || identity.abs() > SINGULAR_IDENTITY_TOL * params.lambda_1
        || (lam - lambda_star).abs() > 1e-3 * lambda_star;
    let report = ContinuationReport {
        lambda_star_target: lambda_star,
        lambda_star: lam,
        singular_volume: vol.total(),
        rho: u.u0,
        scale: log_scale.exp(),
        pohozaev_singular: identity,
        normality_deviation,
        stages: records,
        failed_stage,
        in_window,
        converged,
        truncation_dominated: curv.truncated || vol.truncated,
        infeasible,
    };
    Ok((v, report))
}

/// `sup_j |w_j - mean(w)|` for `w = u - K[(1 + r^{nα}) e^{nu}]`.
fn normality(u: &RadialField, kernel: &KernelMatrix, params: &ModelParams) -> Result<f64> {
    let nf = params.nf();
    let e: Vec<f64> = u.values.iter().map(|v| (nf * v).exp()).collect();
    let d = Density {
        regular: e.clone(),
        singular: e,
    };
    let masses = kernel.grid().masses(&d)?;
    let (pot, _) = kernel.apply_masses(&masses)?;
    Ok(spread(u.values.iter().zip(&pot).map(|(a, b)| a - b)))
}

/// `sup |w - mean(w)|`.
pub(crate) fn spread(w: impl Iterator<Item = f64> + Clone) -> f64 {
    let Some(first) = w.clone().next() else {
        return 0.0;
    };
    // Offsets from the first entry keep a constant sequence exact.
    let (sum, count) = w.clone().fold((0.0, 0usize), |(s, c), x| (s + (x - first), c + 1));
    let mean = first + sum / count as f64;
    w.map(|x| (x - mean).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_order() {
        let s = Schedule::default().stages().unwrap();
        assert_eq!(
            s,
            vec![(0.1, 0.1), (0.01, 0.1), (0.001, 0.1), (0.0, 0.1), (0.0, 0.01), (0.0, 0.0)]
        );
        let single = Schedule {
            eps: vec![0.0],
            delta: vec![0.0],
        };
        assert_eq!(single.stages().unwrap(), vec![(0.0, 0.0)]);
        let bad = Schedule {
            eps: vec![0.0, 0.1],
            delta: vec![0.0],
        };
        assert!(bad.stages().is_err());
    }

    #[test]
    fn window_ends() {
        let p = ModelParams::new(2, -0.3).unwrap();
        let (lo, hi) = existence_window(&p);
        assert!((lo - 0.7 * p.lambda_1).abs() < 1e-12);
        assert_eq!(hi, p.lambda_1);
    }

    #[test]
    fn preconditions() {
        let p = ModelParams::new(2, -0.3).unwrap();
        let g = crate::grid::RadialGrid::new(64, 1e-2, 1e2, -0.3, 2).unwrap();
        let k = crate::kernel::build_kernel(&p, &g).unwrap();
        let mut opts = SolverOptions::default();
        opts.cutoffs.p = 0.2;
        assert!(continuation_solve(10.0, &p, &k, &Schedule::default(), &opts).is_err());
        let p0 = ModelParams::new(2, 0.2).unwrap();
        assert!(continuation_solve(10.0, &p0, &k, &Schedule::default(), &SolverOptions::default()).is_err());
    }

    #[test]
    fn spread_of_constant_is_zero() {
        assert_eq!(spread([2.0, 2.0, 2.0].into_iter()), 0.0);
    }
}
