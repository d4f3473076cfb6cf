//! Damped Picard iteration for normal solutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    self, bol_verdict_for, farfield_slope, profile_prefactors, weighted_integral, BolVerdict, BOL_TOL,
    DENSITY_CLIP,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{Density, RadialField, RadialGrid};
use crate::kernel::KernelMatrix;
use crate::model::{CutoffConfig, ModelParams};
use crate::profile::QProfile;

/// Relative Pohozaev residual above which a prescribed-curvature run is
/// reported infeasible.
pub const POHOZAEV_TOL: f64 = 1e-3;

const DAMPING_FLOOR: f64 = 1.0 / 1024.0;
const DIVERGENCE_NORM: f64 = 1e8;
const BRACKET_HALF_WIDTH: f64 = 40.0;

/// How the additive constant of the representation is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Normalization {
    FixedConstant { c: f64 },
    /// `u(0) = rho`
    FixedOrigin { rho: f64 },
    /// `∫ Q_eff |x|^{nα} e^{nu} dx = lambda_star`
    FixedVolume { lambda_star: f64 },
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Normalization::FixedConstant { c } if !c.is_finite() => Err(invalid("c", "must be finite")),
            Normalization::FixedOrigin { rho } if !rho.is_finite() => Err(invalid("rho", "must be finite")),
            Normalization::FixedVolume { lambda_star } if !(lambda_star > 0.0 && lambda_star.is_finite()) => {
                Err(invalid("lambda_star", format!("must be positive, got {lambda_star}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Initial Picard damping `θ ∈ (0, 1]`.
    pub damping: f64,
    /// Sup-norm tolerance on `T[u] - u`.
    pub tol: f64,
    pub max_iter: usize,
    pub cutoffs: CutoffConfig,
    /// `ε` of the regularizer `e^{-ε|x|²}`; 0 disables it.
    pub gaussian_eps: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 2000,
            cutoffs: CutoffConfig::default(),
            gaussian_eps: 0.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.gaussian_eps >= 0.0 && self.gaussian_eps.is_finite()) {
            return Err(invalid("gaussian_eps", "must be finite and >= 0"));
        }
        CutoffConfig::new(self.cutoffs.eps, self.cutoffs.delta, self.cutoffs.p).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonConvergence {
    /// Successive updates kept reversing direction with damping at its floor.
    Oscillation,
    /// The update norm blew up or became non-finite.
    Divergence,
    /// The prescribed-curvature constant could not be bracketed.
    RootFind,
    MaxIterations,
    /// Density clipping was active at exit.
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub c: f64,
    pub lambda_vol: f64,
    pub lambda_star: f64,
    pub beta: f64,
    pub beta_fit: f64,
    pub pohozaev_lhs: f64,
    pub pohozaev_rhs: f64,
    pub pohozaev_residual: f64,
    pub pohozaev_flux: f64,
    #[serde(rename = "verdict")]
    pub bol_verdict: BolVerdict,
    pub cause: Option<NonConvergence>,
    pub truncation_dominated: bool,
    pub density_clipped: bool,
    /// Prescribed-curvature runs only: no normal solution was certified.
    pub infeasible: bool,
}

/// Result of one Picard update.
#[derive(Debug, Clone)]
pub struct PicardStep {
    pub field: RadialField,
    pub update_norm: f64,
    pub c: f64,
    pub clipped: bool,
    delta: Vec<f64>,
}

struct Problem<'a> {
    profile: &'a QProfile,
    params: &'a ModelParams,
    kernel: &'a KernelMatrix,
    opts: &'a SolverOptions,
    gauss: Vec<f64>,
    fixed: Option<Density>,
}

impl<'a> Problem<'a> {
    fn new(
        profile: &'a QProfile,
        params: &'a ModelParams,
        kernel: &'a KernelMatrix,
        opts: &'a SolverOptions,
    ) -> Result<Self> {
        profile.validate()?;
        opts.validate()?;
        let grid = kernel.grid();
        if grid.n() != params.n || kernel.n() != params.n {
            return Err(invalid("kernel", "dimension differs from params"));
        }
        if (grid.alpha() - params.alpha).abs() > 0.0 {
            return Err(invalid("kernel", "grid weights were built for another alpha"));
        }
        let gauss = grid
            .nodes()
            .iter()
            .map(|r| (-opts.gaussian_eps * r * r).exp())
            .collect();
        let mut p = Self {
            profile,
            params,
            kernel,
            opts,
            gauss,
            fixed: None,
        };
        if !profile.self_weighted() {
            p.fixed = Some(p.build_prefactors(0.0));
        }
        Ok(p)
    }

    fn grid(&self) -> &RadialGrid {
        self.kernel.grid()
    }

    fn build_prefactors(&self, u0: f64) -> Density {
        let mut d = profile_prefactors(u0, self.profile, self.grid(), self.params, &self.opts.cutoffs);
        for (j, g) in self.gauss.iter().enumerate() {
            d.regular[j] *= g;
            d.singular[j] *= g;
        }
        d
    }

    fn prefactors(&self, u0: f64) -> std::borrow::Cow<'_, Density> {
        match &self.fixed {
            Some(d) => std::borrow::Cow::Borrowed(d),
            None => std::borrow::Cow::Owned(self.build_prefactors(u0)),
        }
    }

    /// `∫ Q_eff |x|^{nα} e^{nu} e^{-ε_g|x|²}` of a candidate field.
    fn curvature(&self, u: &RadialField) -> Result<f64> {
        let pre = profile_prefactors(u.u0, self.profile, self.grid(), self.params, &self.opts.cutoffs);
        let tail = self.profile.tail_terms(u.u0, &self.opts.cutoffs, self.params);
        Ok(weighted_integral(u, self.grid(), self.params, &pre, &tail, self.opts.gaussian_eps)?.total())
    }

    fn step(&self, u: &RadialField, norm: &Normalization, damping: f64) -> Result<PicardStep> {
        let grid = self.grid();
        let nf = self.params.nf();
        let pre = self.prefactors(u.u0);
        let mut clipped = false;
        let mut d = pre.into_owned();
        for j in 0..grid.len() {
            let mut e = (nf * u.values[j]).exp();
            if e > DENSITY_CLIP {
                e = DENSITY_CLIP;
                clipped = true;
            }
            d.regular[j] *= e;
            d.singular[j] *= e;
        }
        let masses = grid.masses(&d)?;
        let (pot, pot0) = self.kernel.apply_masses(&masses)?;
        let beta = self.kernel.scale() * masses.iter().sum::<f64>();
        let base = RadialField {
            values: pot,
            u0: pot0,
            tail_slope: beta,
        };
        let c = match *norm {
            Normalization::FixedConstant { c } => c,
            Normalization::FixedOrigin { rho } => rho - pot0,
            Normalization::FixedVolume { lambda_star } => self.volume_constant(&base, lambda_star)?,
        };
        let target = base.shifted(c);
        let delta: Vec<f64> = target.values.iter().zip(&u.values).map(|(t, v)| t - v).collect();
        let update_norm = delta.iter().fold((target.u0 - u.u0).abs(), |m, d| m.max(d.abs()));
        let field = RadialField {
            values: u
                .values
                .iter()
                .zip(&target.values)
                .map(|(v, t)| (1.0 - damping) * v + damping * t)
                .collect(),
            u0: (1.0 - damping) * u.u0 + damping * target.u0,
            tail_slope: beta,
        };
        Ok(PicardStep {
            field,
            update_norm,
            c,
            clipped,
            delta,
        })
    }

    fn volume_constant(&self, base: &RadialField, lambda_star: f64) -> Result<f64> {
        let nf = self.params.nf();
        let g0 = self.curvature(base)?;
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(Error::Precondition(format!(
                "curvature functional is {g0} at c = 0; cannot prescribe it"
            )));
        }
        let c0 = (lambda_star / g0).ln() / nf;
        if !self.profile.self_weighted() {
            return Ok(c0);
        }
        let g = |c: f64| self.curvature(&base.shifted(c)).map(|v| v - lambda_star);
        let (mut lo, mut hi) = (c0 - BRACKET_HALF_WIDTH / nf, c0 + BRACKET_HALF_WIDTH / nf);
        let (glo, ghi) = (g(lo)?, g(hi)?);
        if !(glo < 0.0 && ghi > 0.0) {
            return Err(Error::Precondition(format!(
                "curvature root not bracketed on [{lo}, {hi}]: values {glo}, {ghi}"
            )));
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if g(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn report(
        &self,
        u: &RadialField,
        norm: &Normalization,
        state: IterationState,
    ) -> Result<SolveReport> {
        let grid = self.grid();
        let eps = self.opts.gaussian_eps;
        let vol_pre = Density::weighted(vec![1.0; grid.len()]);
        let vol_tail = [crate::profile::TailTerm {
            coef: 1.0,
            power: self.params.weight_exponent(),
        }];
        let vol = weighted_integral(u, grid, self.params, &vol_pre, &vol_tail, eps)?;
        let pre = profile_prefactors(u.u0, self.profile, grid, self.params, &self.opts.cutoffs);
        let tail = self.profile.tail_terms(u.u0, &self.opts.cutoffs, self.params);
        let curv = weighted_integral(u, grid, self.params, &pre, &tail, eps)?;
        let lambda_vol = vol.total();
        let lambda_star = curv.total();
        let poh = diagnostics::pohozaev_with(u, self.kernel, self.params, eps)?;
        let scale = 1f64.max(lambda_vol * lambda_vol / self.params.lambda_1);
        let infeasible = match *norm {
            Normalization::FixedVolume { lambda_star: target } => {
                !state.converged
                    || poh.residual.abs() > POHOZAEV_TOL * scale
                    || (lambda_star - target).abs() > 1e-6 * target
            }
            _ => !state.converged,
        };
        Ok(SolveReport {
            converged: state.converged,
            iterations: state.iterations,
            residual: state.residual,
            c: state.c,
            lambda_vol,
            lambda_star,
            beta: lambda_star / self.params.gamma_n,
            beta_fit: farfield_slope(u, grid, 1.0)?,
            pohozaev_lhs: poh.lhs,
            pohozaev_rhs: poh.rhs,
            pohozaev_residual: poh.residual,
            pohozaev_flux: poh.flux,
            bol_verdict: bol_verdict_for(lambda_vol, self.profile, self.params, &self.opts.cutoffs, BOL_TOL),
            cause: state.cause,
            truncation_dominated: vol.truncated || curv.truncated,
            density_clipped: state.clipped,
            infeasible,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct IterationState {
    converged: bool,
    iterations: usize,
    residual: f64,
    c: f64,
    cause: Option<NonConvergence>,
    clipped: bool,
}

/// One damped Picard update `(1-θ)u + θ T[u]`.
pub fn picard_step(
    u: &RadialField,
    kernel: &KernelMatrix,
    profile: &QProfile,
    params: &ModelParams,
    norm: &Normalization,
    opts: &SolverOptions,
) -> Result<PicardStep> {
    norm.validate()?;
    let problem = Problem::new(profile, params, kernel, opts)?;
    if u.len() != kernel.len() {
        return Err(Error::Shape {
            expected: kernel.len(),
            got: u.len(),
        });
    }
    problem.step(u, norm, opts.damping)
}

/// The singular bubble `log(2(1+α)λ^{1+α}/(1+(λr)^{2(1+α)}))`, shifted by
/// `log((n-1)!)/n` so that it solves the `Q ≡ 1`, `α = 0` problem in every
/// dimension, and matched to the normalization where possible.
pub fn initial_bubble(params: &ModelParams, grid: &RadialGrid, norm: &Normalization) -> RadialField {
    let a = 1.0 + params.alpha;
    let nf = params.nf();
    let shift = (1..params.n).map(|k| (k as f64).ln()).sum::<f64>() / nf;
    let log_lambda_a = match *norm {
        Normalization::FixedOrigin { rho } => rho - shift - (2.0 * a).ln(),
        _ => 0.0,
    };
    let log_lambda = log_lambda_a / a;
    let u0 = (2.0 * a).ln() + log_lambda_a + shift;
    RadialField::from_fn(grid, u0, 2.0 * a, |r| {
        let x = 2.0 * a * (log_lambda + r.ln());
        let log1p = if x > 30.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
        u0 - log1p
    })
}

/// Iterates [`picard_step`] from the bubble.
pub fn solve_normal(
    profile: &QProfile,
    params: &ModelParams,
    kernel: &KernelMatrix,
    norm: &Normalization,
    opts: &SolverOptions,
) -> Result<(RadialField, SolveReport)> {
    let mut start = initial_bubble(params, kernel.grid(), norm);
    // Steepen the bubble when its decay leaves the profile's growth
    // non-integrable, so the first iterate has finite curvature.
    let nf = params.nf();
    let growth = profile
        .tail_terms(start.u0, &opts.cutoffs, params)
        .iter()
        .filter(|t| t.coef != 0.0)
        .map(|t| t.power)
        .fold(f64::NEG_INFINITY, f64::max);
    if nf * start.tail_slope <= growth + nf {
        let s = (growth + 2.0 * nf) / (nf * start.tail_slope);
        let u0 = start.u0;
        start.values.iter_mut().for_each(|v| *v = u0 + s * (*v - u0));
        start.tail_slope *= s;
    }
    solve_normal_from(start, profile, params, kernel, norm, opts)
}

/// Iterates [`picard_step`] from a given field.
pub fn solve_normal_from(
    start: RadialField,
    profile: &QProfile,
    params: &ModelParams,
    kernel: &KernelMatrix,
    norm: &Normalization,
    opts: &SolverOptions,
) -> Result<(RadialField, SolveReport)> {
    norm.validate()?;
    let problem = Problem::new(profile, params, kernel, opts)?;
    if start.len() != kernel.len() {
        return Err(Error::Shape {
            expected: kernel.len(),
            got: start.len(),
        });
    }
    let mut u = start;
    let mut theta = opts.damping;
    let mut prev: Option<(Vec<f64>, f64)> = None;
    let mut state = IterationState {
        converged: false,
        iterations: 0,
        residual: f64::INFINITY,
        c: f64::NAN,
        cause: None,
        clipped: false,
    };
    let mut floor_hits = 0usize;
    for it in 1..=opts.max_iter {
        state.iterations = it;
        let step = match problem.step(&u, norm, theta) {
            Ok(s) => s,
            Err(Error::Precondition(msg)) => {
                log::debug!("root find failed at iteration {it}: {msg}");
                state.cause = Some(NonConvergence::RootFind);
                break;
            }
            Err(e) => return Err(e),
        };
        if !step.update_norm.is_finite()
            || step.update_norm > DIVERGENCE_NORM
            || step.field.values.iter().any(|v| !v.is_finite())
        {
            state.cause = Some(NonConvergence::Divergence);
            state.residual = step.update_norm;
            break;
        }
        state.residual = step.update_norm;
        state.c = step.c;
        state.clipped = step.clipped;
        if let Some((pd, pn)) = &prev {
            let inner: f64 = pd.iter().zip(&step.delta).map(|(a, b)| a * b).sum();
            if inner < 0.0 && step.update_norm > 0.5 * pn {
                if theta <= DAMPING_FLOOR {
                    floor_hits += 1;
                } else {
                    theta = (0.5 * theta).max(DAMPING_FLOOR);
                    log::trace!("oscillation at iteration {it}; damping now {theta}");
                }
            }
        }
        let done = step.update_norm < opts.tol;
        prev = Some((step.delta, step.update_norm));
        u = step.field;
        if done {
            state.converged = !state.clipped;
            if state.clipped {
                state.cause = Some(NonConvergence::Overflow);
            }
            break;
        }
    }
    if !state.converged && state.cause.is_none() {
        state.cause = Some(if floor_hits > 0 {
            NonConvergence::Oscillation
        } else if state.clipped {
            NonConvergence::Overflow
        } else {
            NonConvergence::MaxIterations
        });
    }
    let report = problem.report(&u, norm, state)?;
    Ok((u, report))
}

/// One converged-or-not run per origin value, in the order given.
pub type ScanPoint = (f64, Result<(RadialField, SolveReport)>);

/// Solves `FixedOrigin(ρ)` for every `ρ`. Cold starts run in parallel; a
/// point that does not converge is retried from its nearest converged
/// neighbour shifted to the new origin value, sweeping until no retry helps.
pub fn scan_origin(
    profile: &QProfile,
    params: &ModelParams,
    kernel: &KernelMatrix,
    rhos: &[f64],
    opts: &SolverOptions,
) -> Vec<ScanPoint> {
    let solve = |rho: f64| solve_normal(profile, params, kernel, &Normalization::FixedOrigin { rho }, opts);
    let mut out: Vec<ScanPoint> = rhos.par_iter().map(|&rho| (rho, solve(rho))).collect();
    let converged = |p: &ScanPoint| matches!(&p.1, Ok((_, r)) if r.converged);
    let mut tried = vec![false; out.len()];
    loop {
        let mut progress = false;
        for i in 0..out.len() {
            if converged(&out[i]) || tried[i] {
                continue;
            }
            let rho = out[i].0;
            let Some(j) = (0..out.len())
                .filter(|&j| converged(&out[j]))
                .min_by(|&a, &b| (out[a].0 - rho).abs().total_cmp(&(out[b].0 - rho).abs()))
            else {
                continue;
            };
            tried[i] = true;
            let Ok((field, _)) = &out[j].1 else { continue };
            let start = field.shifted(rho - out[j].0);
            let norm = Normalization::FixedOrigin { rho };
            let retry = solve_normal_from(start, profile, params, kernel, &norm, opts);
            if matches!(&retry, Ok((_, r)) if r.converged) {
                log::debug!("origin value {rho} converged from the run at {}", out[j].0);
                out[i].1 = retry;
                progress = true;
                tried.iter_mut().for_each(|t| *t = false);
            }
        }
        if !progress {
            return out;
        }
    }
}
