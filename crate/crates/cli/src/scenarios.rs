//! The scenario runners.

use std::path::Path;

use anyhow::{Context, Result};
use qcurv_core::diagnostics::{pointwise_bound_check, pointwise_cap, total_curvature_cap};
use qcurv_core::{
    build_kernel, continuation_solve, cross_validate, eval_q, existence_window, quad, remark62_scan, scan_origin,
    shoot_on_grid, solve_normal, BolVerdict, CutoffConfig, KernelMatrix, ModelParams, QProfile, RemarkCase,
    Schedule, SolveReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{NamedProfile, Scenario, ScenarioConfig};
use crate::output::{profile_rows, write_csv, write_json, write_profile};

const DEFAULT_SHOOT_TOL: f64 = 1e-12;
const DEFAULT_REMARK_R_MAX: f64 = 1e3;

/// One evaluated assertion.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// The mathematical statement the check refers to.
    pub anchor: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn message(&self, scenario: Scenario) -> String {
        format!(
            "{}: {} check '{}' failed: computed {:e}, tolerance {:e}",
            scenario.name(),
            self.anchor,
            self.name,
            self.value,
            self.tolerance
        )
    }
}

#[derive(Debug, Default)]
struct Checks(Vec<Check>);

impl Checks {
    /// Passes when `value <= tolerance`; NaN fails.
    fn le(&mut self, name: &str, anchor: &str, value: f64, tolerance: f64) {
        self.0.push(Check {
            name: name.into(),
            anchor: anchor.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        });
    }

    /// Passes when no item violates the statement.
    fn none(&mut self, name: &str, anchor: &str, violations: usize) {
        self.le(name, anchor, violations as f64, 0.0);
    }
}

/// What a run produced, before anything is written.
#[derive(Debug)]
pub struct Summary {
    pub scenario: Scenario,
    pub checks: Vec<Check>,
    /// Runs that returned an error or did not converge.
    pub run_failures: Vec<String>,
}

impl Summary {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    scenario: &'static str,
    n: u32,
    alpha: f64,
    #[serde(flatten)]
    body: T,
    checks: &'a [Check],
    run_failures: &'a [String],
    passed: bool,
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    out: &'a Path,
    scenario: Scenario,
    checks: Checks,
    failures: Vec<String>,
}

impl Ctx<'_> {
    fn finish<T: Serialize>(self, body: T) -> Result<Summary> {
        let report = Report {
            scenario: self.scenario.name(),
            n: self.cfg.params.n,
            alpha: self.cfg.params.alpha,
            body,
            checks: &self.checks.0,
            run_failures: &self.failures,
            passed: self.checks.0.iter().all(|c| c.pass),
        };
        write_json(&self.out.join(&self.cfg.output.report), &report)?;
        Ok(Summary {
            scenario: self.scenario,
            checks: self.checks.0,
            run_failures: self.failures,
        })
    }

    fn table<T: Serialize>(&self, rows: &[T]) -> Result<()> {
        write_csv(&self.out.join(&self.cfg.output.table), rows)
    }

    /// The kernel for `params`, through the cache file when one is configured.
    fn kernel(&self, params: &ModelParams) -> Result<KernelMatrix> {
        let grid = self.cfg.grid_at(params.alpha)?;
        let Some(path) = &self.cfg.grid.cache else {
            return Ok(build_kernel(params, &grid)?);
        };
        match KernelMatrix::load(path, params, &grid) {
            Ok(k) => {
                log::info!("kernel loaded from {}", path.display());
                Ok(k)
            }
            Err(e) => {
                log::info!("kernel cache {} not usable ({e}), rebuilding", path.display());
                let k = build_kernel(params, &grid)?;
                k.save(path).with_context(|| format!("writing kernel cache {}", path.display()))?;
                Ok(k)
            }
        }
    }
}

/// `u(0)` of the standard bubble: `log(2(1+α)) + log((n-1)!)/n`.
pub fn bubble_origin(params: &ModelParams) -> f64 {
    let shift = (1..params.n).map(|k| (k as f64).ln()).sum::<f64>() / params.nf();
    (2.0 * (1.0 + params.alpha)).ln() + shift
}

pub fn run(scenario: Scenario, cfg: &ScenarioConfig, out: &Path) -> Result<Summary> {
    cfg.validate(scenario)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = Ctx {
        cfg,
        out,
        scenario,
        checks: Checks::default(),
        failures: Vec::new(),
    };
    match scenario {
        Scenario::Solve => solve(ctx),
        Scenario::BolScan | Scenario::PohozaevCheck => profile_scan(ctx),
        Scenario::LambdaRhoCurve => lambda_rho_curve(ctx),
        Scenario::WindowScan => window_scan(ctx),
        Scenario::Remark62 => remark62(ctx),
        Scenario::TotalcurvBound => totalcurv_bound(ctx),
        Scenario::CrossValidate => cross_validate_scenario(ctx),
    }
}

/// `max(1, Λ*²/Λ₁)`, the scale of the Pohozaev residual.
fn pohozaev_scale(rep: &SolveReport, params: &ModelParams) -> f64 {
    1f64.max(rep.lambda_star * rep.lambda_star / params.lambda_1)
}

/// The assertions that apply to any single normal solution.
fn solution_checks(ctx: &mut Ctx, rows: &[&ScanRow], profiles: &[NamedProfile]) {
    let a = &ctx.cfg.assert;
    let ok: Vec<&&ScanRow> = rows.iter().filter(|r| r.converged).collect();
    if a.all_converged == Some(true) {
        let bad = rows.iter().filter(|r| !r.converged).count();
        ctx.checks.none("all_converged", "convergence of the fixed-point iteration", bad);
    }
    if let Some(tol) = a.quantized_rel {
        let worst = ok.iter().map(|r| r.quantized_rel.abs()).fold(0.0, f64::max);
        ctx.checks.le("quantized_rel", "volume quantization", worst, tol);
    }
    if a.bol_holds == Some(true) {
        let bad = ok.iter().filter(|r| r.verdict == Some(BolVerdict::Violated)).count();
        ctx.checks.none("bol_holds", "Bol's inequality", bad);
    }
    if let Some(rel) = a.bol_strict_rel {
        let cutoffs = CutoffConfig::default();
        // Strict inequality in the certified direction, away from Q ≡ 1.
        let worst = ok
            .iter()
            .filter_map(|r| {
                let q = &profiles.iter().find(|p| p.name == r.profile)?.q;
                if q.is_unit(&cutoffs) {
                    None
                } else if q.certifies_ge_one(&cutoffs) {
                    Some(r.bol_ratio - 1.0)
                } else if q.certifies_le_one() {
                    Some(1.0 - r.bol_ratio)
                } else {
                    None
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        ctx.checks.le("bol_strict_rel", "strict Bol inequality", worst, -rel);
    }
    if let Some(tol) = a.pohozaev_rel {
        let worst = ok.iter().map(|r| r.pohozaev_rel).fold(0.0, f64::max);
        ctx.checks.le("pohozaev_rel", "Pohozaev identity", worst, tol);
    }
}

/// Flat per-solve row shared by the scans.
#[derive(Debug, Clone, Serialize)]
struct ScanRow {
    profile: String,
    alpha: f64,
    rho: f64,
    converged: bool,
    iterations: usize,
    lambda_vol: f64,
    lambda_star: f64,
    beta: f64,
    beta_fit: f64,
    pohozaev_lhs: f64,
    pohozaev_rhs: f64,
    /// `|lhs - rhs| / max(1, Λ*²/Λ₁)`
    pohozaev_rel: f64,
    /// `(Λ* - Λ₁(1+α)) / (Λ₁(1+α))`
    quantized_rel: f64,
    /// `Λ / (Λ₁(1+α))`
    bol_ratio: f64,
    verdict: Option<BolVerdict>,
    truncation_dominated: bool,
    error: Option<String>,
}

impl ScanRow {
    fn new(profile: &str, params: &ModelParams, rho: f64, res: &qcurv_core::Result<SolveReport>) -> Self {
        let q = params.quantized_volume();
        match res {
            Ok(rep) => ScanRow {
                profile: profile.into(),
                alpha: params.alpha,
                rho,
                converged: rep.converged,
                iterations: rep.iterations,
                lambda_vol: rep.lambda_vol,
                lambda_star: rep.lambda_star,
                beta: rep.beta,
                beta_fit: rep.beta_fit,
                pohozaev_lhs: rep.pohozaev_lhs,
                pohozaev_rhs: rep.pohozaev_rhs,
                pohozaev_rel: rep.pohozaev_residual.abs() / pohozaev_scale(rep, params),
                quantized_rel: (rep.lambda_star - q) / q,
                bol_ratio: rep.lambda_vol / q,
                verdict: Some(rep.bol_verdict),
                truncation_dominated: rep.truncation_dominated,
                error: None,
            },
            Err(e) => ScanRow {
                profile: profile.into(),
                alpha: params.alpha,
                rho,
                converged: false,
                iterations: 0,
                lambda_vol: f64::NAN,
                lambda_star: f64::NAN,
                beta: f64::NAN,
                beta_fit: f64::NAN,
                pohozaev_lhs: f64::NAN,
                pohozaev_rhs: f64::NAN,
                pohozaev_rel: f64::NAN,
                quantized_rel: f64::NAN,
                bol_ratio: f64::NAN,
                verdict: None,
                truncation_dominated: false,
                error: Some(e.to_string()),
            },
        }
    }

    fn key(&self) -> String {
        format!("{} alpha={} rho={}", self.profile, self.alpha, self.rho)
    }
}

fn sort_rows(rows: &mut [ScanRow]) {
    rows.sort_by(|a, b| {
        a.profile
            .cmp(&b.profile)
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.rho.total_cmp(&b.rho))
    });
}

fn record_failures(ctx: &mut Ctx, rows: &[ScanRow]) {
    for r in rows.iter().filter(|r| !r.converged) {
        let why = r.error.clone().unwrap_or_else(|| "did not converge".into());
        ctx.failures.push(format!("{}: {why}", r.key()));
    }
}

/// Runs every profile at every `α` and origin value.
fn solve_grid(ctx: &Ctx, profiles: &[NamedProfile]) -> Result<Vec<(ScanRow, Option<qcurv_core::RadialField>)>> {
    let cfg = ctx.cfg;
    let opts = cfg.options()?;
    let mut out = Vec::new();
    for alpha in cfg.alphas() {
        let params = cfg.model_at(alpha)?;
        let kernel = ctx.kernel(&params)?;
        let rhos = if cfg.scan.rho.is_empty() && cfg.scan.random_rho.is_none() {
            vec![bubble_origin(&params)]
        } else {
            cfg.rho_values()
        };
        for p in profiles {
            for (rho, res) in scan_origin(&p.q, &params, &kernel, &rhos, &opts) {
                let (field, rep) = match res {
                    Ok((u, rep)) => (Some(u), Ok(rep)),
                    Err(e) => (None, Err(e)),
                };
                out.push((ScanRow::new(&p.name, &params, rho, &rep), field));
            }
        }
    }
    Ok(out)
}

fn solve(mut ctx: Ctx) -> Result<Summary> {
    let cfg = ctx.cfg;
    let params = cfg.model()?;
    let profile = cfg.profile.clone().context("solve needs [profile]")?;
    let norm = cfg.normalization();
    let opts = cfg.options()?;
    let kernel = ctx.kernel(&params)?;
    let (u, rep) = solve_normal(&profile, &params, &kernel, &norm, &opts)?;
    let rows = profile_rows(&u, kernel.grid(), &profile, &params, &opts.cutoffs)?;
    write_profile(&ctx.out.join(&cfg.output.profile), &rows)?;
    let row = ScanRow::new("q", &params, u.u0, &Ok(rep.clone()));
    record_failures(&mut ctx, std::slice::from_ref(&row));
    let named = [NamedProfile {
        name: "q".into(),
        q: profile,
    }];
    solution_checks(&mut ctx, &[&row], &named);
    #[derive(Serialize)]
    struct Body<'a> {
        normalization: qcurv_core::Normalization,
        report: &'a SolveReport,
    }
    ctx.finish(Body {
        normalization: norm,
        report: &rep,
    })
}

fn profile_scan(mut ctx: Ctx) -> Result<Summary> {
    let profiles = ctx.cfg.named_profiles();
    let mut rows: Vec<ScanRow> = solve_grid(&ctx, &profiles)?.into_iter().map(|(r, _)| r).collect();
    sort_rows(&mut rows);
    record_failures(&mut ctx, &rows);
    solution_checks(&mut ctx, &rows.iter().collect::<Vec<_>>(), &profiles);
    ctx.table(&rows)?;
    #[derive(Serialize)]
    struct Body<'a> {
        runs: &'a [ScanRow],
    }
    ctx.finish(Body { runs: &rows })
}

fn lambda_rho_curve(mut ctx: Ctx) -> Result<Summary> {
    let profiles = ctx.cfg.named_profiles();
    let mut rows: Vec<ScanRow> = solve_grid(&ctx, &profiles)?.into_iter().map(|(r, _)| r).collect();
    sort_rows(&mut rows);
    record_failures(&mut ctx, &rows);
    solution_checks(&mut ctx, &rows.iter().collect::<Vec<_>>(), &profiles);
    if let Some(tol) = ctx.cfg.assert.endpoint_rel {
        // Both ends of the ρ range, per α.
        let mut worst = 0.0f64;
        for alpha in ctx.cfg.alphas() {
            let at: Vec<&ScanRow> = rows.iter().filter(|r| r.alpha == alpha).collect();
            for r in [at.first(), at.last()].into_iter().flatten() {
                worst = worst.max(if r.converged { r.quantized_rel.abs() } else { f64::INFINITY });
            }
        }
        ctx.checks.le("endpoint_rel", "limits of the total curvature in the origin value", worst, tol);
    }
    if ctx.cfg.assert.all_converged == Some(true) {
        let bad = rows.iter().filter(|r| r.truncation_dominated).count();
        ctx.checks.none("not_truncated", "convergence of the fixed-point iteration", bad);
    }
    ctx.table(&rows)?;
    #[derive(Serialize)]
    struct Body<'a> {
        curve: &'a [ScanRow],
    }
    ctx.finish(Body { curve: &rows })
}

#[derive(Debug, Clone, Serialize)]
struct WindowRow {
    fraction: f64,
    lambda_star_target: f64,
    lambda_star: f64,
    in_window: bool,
    infeasible: bool,
    converged: bool,
    /// `|singular Pohozaev identity| / Λ₁`
    identity_rel: f64,
    rho: f64,
    scale: f64,
    failed_stage: Option<usize>,
    truncation_dominated: bool,
    error: Option<String>,
}

fn window_scan(mut ctx: Ctx) -> Result<Summary> {
    let cfg = ctx.cfg;
    let params = cfg.model()?;
    let kernel = ctx.kernel(&params)?;
    let opts = cfg.options()?;
    let schedule = cfg.scan.schedule.clone().unwrap_or_default();
    let mut rows: Vec<WindowRow> = cfg
        .scan
        .lambda_star_fracs
        .par_iter()
        .map(|&frac| {
            let target = frac * params.lambda_1;
            match continuation_solve(target, &params, &kernel, &schedule, &opts) {
                Ok((_, rep)) => WindowRow {
                    fraction: frac,
                    lambda_star_target: target,
                    lambda_star: rep.lambda_star,
                    in_window: rep.in_window,
                    infeasible: rep.infeasible,
                    converged: rep.converged,
                    identity_rel: rep.pohozaev_singular.abs() / params.lambda_1,
                    rho: rep.rho,
                    scale: rep.scale,
                    failed_stage: rep.failed_stage,
                    truncation_dominated: rep.truncation_dominated,
                    error: None,
                },
                Err(e) => WindowRow {
                    fraction: frac,
                    lambda_star_target: target,
                    lambda_star: f64::NAN,
                    in_window: false,
                    infeasible: true,
                    converged: false,
                    identity_rel: f64::NAN,
                    rho: f64::NAN,
                    scale: f64::NAN,
                    failed_stage: None,
                    truncation_dominated: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    for r in &rows {
        if let Some(e) = &r.error {
            ctx.failures.push(format!("fraction {}: {e}", r.fraction));
        }
    }
    let a = &cfg.assert;
    if a.window_consistent == Some(true) {
        let bad = rows.iter().filter(|r| r.in_window == r.infeasible).count();
        ctx.checks.none("window_consistent", "existence window", bad);
    }
    if a.all_converged == Some(true) {
        let bad = rows.iter().filter(|r| r.in_window && !r.converged).count();
        ctx.checks.none("all_converged", "convergence of the continuation", bad);
    }
    if let Some(tol) = a.identity_rel {
        let worst = rows
            .iter()
            .filter(|r| r.in_window)
            .map(|r| r.identity_rel)
            .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
        ctx.checks.le("identity_rel", "singular Pohozaev identity", worst, tol);
    }
    ctx.table(&rows)?;
    let (lo, hi) = existence_window(&params);
    #[derive(Serialize)]
    struct Body<'a> {
        window: [f64; 2],
        schedule: &'a Schedule,
        runs: &'a [WindowRow],
    }
    ctx.finish(Body {
        window: [lo, hi],
        schedule: &schedule,
        runs: &rows,
    })
}

fn remark62(mut ctx: Ctx) -> Result<Summary> {
    let cfg = ctx.cfg;
    let case = cfg.scan.case.context("remark62 needs scan.case")?;
    let r_max = cfg.scan.r_max.unwrap_or(DEFAULT_REMARK_R_MAX);
    let tol = cfg.scan.shoot_tol.unwrap_or(DEFAULT_SHOOT_TOL);
    let rows = remark62_scan(case, &cfg.scan.k, r_max, tol);
    for r in &rows {
        if let Some(e) = &r.error {
            ctx.failures.push(format!("k = {}: {e}", r.k));
        }
    }
    let lam: Vec<f64> = rows.iter().map(|r| r.total_curvature.unwrap_or(f64::NAN)).collect();
    let increasing = |v: &[f64]| v.windows(2).filter(|w| !(w[1] > w[0])).count();
    let a = &cfg.assert;
    let anchor = match case {
        RemarkCase::Tent => "tent counterexample",
        RemarkCase::PiecewiseLinear => "piecewise-linear counterexample",
    };
    if let Some(k0) = a.monotone_from {
        let from: Vec<f64> = rows.iter().zip(&lam).filter(|(r, _)| r.k >= k0).map(|(_, l)| *l).collect();
        ctx.checks.none("monotone_from", anchor, increasing(&from));
    }
    if a.increasing == Some(true) {
        ctx.checks.none("increasing", anchor, increasing(&lam));
    }
    if let Some(ratio) = a.growth_ratio {
        let g = lam.last().copied().unwrap_or(f64::NAN) / lam.first().copied().unwrap_or(f64::NAN);
        // Stored negated so that `le` expresses `growth >= ratio`.
        ctx.checks.le("growth_ratio", anchor, -g, -ratio);
    }
    if let Some(tol) = a.interior_tol {
        let worst = rows
            .iter()
            .map(|r| r.interior_error.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        ctx.checks.le("interior_tol", "closed form inside the unit ball", worst, tol);
    }
    ctx.table(&rows)?;
    #[derive(Serialize)]
    struct Body<'a> {
        case: RemarkCase,
        r_max: f64,
        rows: &'a [qcurv_core::RemarkRow],
    }
    ctx.finish(Body { case, r_max, rows: &rows })
}

/// `sup_{0 < r ≤ 1} Q(r)` sampled on a fine mesh.
fn q_sup_ball(q: &QProfile, params: &ModelParams) -> Result<f64> {
    let cutoffs = CutoffConfig::default();
    let mut sup = f64::NEG_INFINITY;
    for i in 0..=10_000 {
        let r = if i == 0 { 1e-12 } else { i as f64 / 10_000.0 };
        sup = sup.max(eval_q(q, r, 0.0, &cutoffs, params)?);
    }
    Ok(sup)
}

/// `‖(Q - M r^p)⁺‖_{L¹(B₁ᶜ)}`, integrated over doubling shells until a
/// shell contributes nothing.
fn excess_l1(q: &QProfile, params: &ModelParams, m: f64, p: f64) -> Result<f64> {
    let cutoffs = CutoffConfig::default();
    let omega = params.omega;
    let nm1 = params.n as i32 - 1;
    let f = |r: f64| {
        let v = eval_q(q, r, 0.0, &cutoffs, params).unwrap_or(f64::NAN) - m * r.powf(p);
        v.max(0.0) * omega * r.powi(nm1)
    };
    let mut total = 0.0;
    let mut a = 1.0;
    for _ in 0..60 {
        let shell = quad::integrate(f, a, 2.0 * a, 1e-12)?;
        total += shell;
        if shell == 0.0 && f(2.0 * a) == 0.0 {
            return Ok(total);
        }
        a *= 2.0;
    }
    anyhow::bail!("(Q - M r^p)+ is not integrable outside the unit ball for M = {m}")
}

#[derive(Debug, Clone, Serialize)]
struct BoundSummary {
    alpha: f64,
    cap: f64,
    max_lambda_star: f64,
    min_lambda_star: f64,
    spread: f64,
    /// `sup_{r≥1} r^{nα} e^{nu}` extremes across the origin values, `α > 0` only.
    enu_max: Option<f64>,
    enu_min: Option<f64>,
    pointwise_cap: Option<f64>,
}

fn totalcurv_bound(mut ctx: Ctx) -> Result<Summary> {
    let cfg = ctx.cfg;
    let q = cfg.profile.clone().context("totalcurv-bound needs [profile]")?;
    let QProfile::PowerSum { p, .. } = q else {
        anyhow::bail!("totalcurv-bound needs a power_sum profile");
    };
    let m = cfg.scan.m_coef.context("totalcurv-bound needs scan.m_coef")?;
    let opts = cfg.options()?;
    let rhos = cfg.rho_values();
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for alpha in cfg.alphas() {
        let params = cfg.model_at(alpha)?;
        let kernel = ctx.kernel(&params)?;
        let cap = total_curvature_cap(&params, q_sup_ball(&q, &params)?, excess_l1(&q, &params, m, p)?, m, p);
        let mut enu = Vec::new();
        for (rho, res) in scan_origin(&q, &params, &kernel, &rhos, &opts) {
            let (field, rep) = match res {
                Ok((u, rep)) => (Some(u), Ok(rep)),
                Err(e) => (None, Err(e)),
            };
            let row = ScanRow::new("q", &params, rho, &rep);
            if let (Some(u), true) = (&field, alpha > 0.0 && row.converged) {
                enu.push(pointwise_bound_check(u, kernel.grid(), &params)?);
            }
            rows.push(row);
        }
        let lam: Vec<f64> = rows
            .iter()
            .filter(|r| r.alpha == alpha && r.converged)
            .map(|r| r.lambda_star)
            .collect();
        let max = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = lam.iter().copied().fold(f64::INFINITY, f64::min);
        let (enu_max, enu_min) = if enu.is_empty() {
            (None, None)
        } else {
            (
                Some(enu.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                Some(enu.iter().copied().fold(f64::INFINITY, f64::min)),
            )
        };
        bounds.push(BoundSummary {
            alpha,
            cap,
            max_lambda_star: max,
            min_lambda_star: min,
            spread: max / min,
            enu_max,
            enu_min,
            pointwise_cap: (alpha > 0.0).then(|| pointwise_cap(&params)),
        });
    }
    sort_rows(&mut rows);
    record_failures(&mut ctx, &rows);
    let named = [NamedProfile { name: "q".into(), q }];
    solution_checks(&mut ctx, &rows.iter().collect::<Vec<_>>(), &named);
    let a = &cfg.assert;
    if a.all_converged == Some(true) {
        let bad = rows.iter().filter(|r| r.truncation_dominated).count();
        ctx.checks.none("not_truncated", "convergence of the fixed-point iteration", bad);
    }
    if a.uniform_cap == Some(true) {
        // Margin to the cap, negative when it holds.
        let worst = bounds
            .iter()
            .flat_map(|b| {
                let curv = b.max_lambda_star / b.cap - 1.0;
                let pw = match (b.enu_max, b.pointwise_cap) {
                    (Some(e), Some(c)) => e / c - 1.0,
                    _ => f64::NEG_INFINITY,
                };
                [curv, pw]
            })
            .fold(f64::NEG_INFINITY, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
        ctx.checks.le("uniform_cap", "total curvature bound", worst, 0.0);
    }
    if let Some(baseline) = a.spread_baseline {
        let worst = bounds.iter().map(|b| b.spread).fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
        ctx.checks.le("spread_baseline", "total curvature bound", worst, baseline);
    }
    if let Some(ratio) = a.enu_ratio {
        let worst = bounds
            .iter()
            .filter_map(|b| Some(b.enu_max? / b.enu_min?))
            .fold(0.0, f64::max);
        ctx.checks.le("enu_ratio", "pointwise bound", worst, ratio);
    }
    ctx.table(&rows)?;
    #[derive(Serialize)]
    struct Body<'a> {
        m_coef: f64,
        p: f64,
        bounds: &'a [BoundSummary],
        runs: &'a [ScanRow],
    }
    ctx.finish(Body {
        m_coef: m,
        p,
        bounds: &bounds,
        runs: &rows,
    })
}

#[derive(Debug, Clone, Serialize)]
struct CrossRow {
    profile: String,
    alpha: f64,
    rho: f64,
    converged: bool,
    blowup: bool,
    /// `sup |u_shoot - u_solve - mean|`
    sup_diff: f64,
    /// Spread of `u_shoot - K[u_shoot]`.
    normality: f64,
    green_defect: f64,
    error: Option<String>,
}

fn cross_validate_scenario(mut ctx: Ctx) -> Result<Summary> {
    let cfg = ctx.cfg;
    let opts = cfg.options()?;
    let tol = cfg.scan.shoot_tol.unwrap_or(DEFAULT_SHOOT_TOL);
    let profiles = cfg.named_profiles();
    let mut rows = Vec::new();
    for alpha in cfg.alphas() {
        let params = cfg.model_at(alpha)?;
        let kernel = ctx.kernel(&params)?;
        let rhos = if cfg.scan.rho.is_empty() && cfg.scan.random_rho.is_none() {
            vec![bubble_origin(&params)]
        } else {
            cfg.rho_values()
        };
        for p in &profiles {
            for &rho in &rhos {
                let norm = qcurv_core::Normalization::FixedOrigin { rho };
                let run = || -> qcurv_core::Result<CrossRow> {
                    let (u, rep) = solve_normal(&p.q, &params, &kernel, &norm, &opts)?;
                    let shot = shoot_on_grid(&p.q, &params, rho, kernel.grid(), tol)?;
                    let diff: Vec<f64> = shot.field.values.iter().zip(&u.values).map(|(a, b)| a - b).collect();
                    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
                    Ok(CrossRow {
                        profile: p.name.clone(),
                        alpha,
                        rho,
                        converged: rep.converged,
                        blowup: shot.blowup_flag,
                        sup_diff: diff.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max),
                        normality: cross_validate(&shot, &kernel)?,
                        green_defect: shot.green_defect,
                        error: None,
                    })
                };
                rows.push(run().unwrap_or_else(|e| CrossRow {
                    profile: p.name.clone(),
                    alpha,
                    rho,
                    converged: false,
                    blowup: false,
                    sup_diff: f64::NAN,
                    normality: f64::NAN,
                    green_defect: f64::NAN,
                    error: Some(e.to_string()),
                }));
            }
        }
    }
    rows.sort_by(|a, b| {
        a.profile
            .cmp(&b.profile)
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.rho.total_cmp(&b.rho))
    });
    for r in rows.iter().filter(|r| !r.converged || r.blowup) {
        let why = r.error.clone().unwrap_or_else(|| "did not converge or blew up".into());
        ctx.failures.push(format!("{} alpha={} rho={}: {why}", r.profile, r.alpha, r.rho));
    }
    let a = &cfg.assert;
    let worst = |f: fn(&CrossRow) -> f64| {
        rows.iter()
            .map(f)
            .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) })
    };
    if a.all_converged == Some(true) {
        let bad = rows.iter().filter(|r| !r.converged || r.blowup).count();
        ctx.checks.none("all_converged", "convergence of solver and shooter", bad);
    }
    if let Some(tol) = a.sup_tol {
        ctx.checks.le("sup_tol", "agreement of solver and shooter", worst(|r| r.sup_diff), tol);
    }
    if let Some(tol) = a.normality_tol {
        ctx.checks.le("normality_tol", "normality of the shooting solution", worst(|r| r.normality), tol);
    }
    ctx.table(&rows)?;
    #[derive(Serialize)]
    struct Body<'a> {
        shoot_tol: f64,
        runs: &'a [CrossRow],
    }
    ctx.finish(Body { shoot_tol: tol, runs: &rows })
}
