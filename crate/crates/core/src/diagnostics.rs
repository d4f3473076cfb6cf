//! Volume, total curvature, decay rates, Pohozaev residuals and Bol verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Density, RadialField, RadialGrid};
use crate::kernel::{apply_kernel, KernelMatrix};
use crate::model::{ball_volume, CutoffConfig, ModelParams};
use crate::profile::{QProfile, TailTerm};

/// Default relative tolerance of the Bol verdicts.
pub const BOL_TOL: f64 = 1e-2;

/// Share of the grid part above which an analytic tail counts as dominant.
const TAIL_SHARE: f64 = 1e-2;

/// Arguments beyond which `e^{nu}` is clipped.
pub const DENSITY_CLIP: f64 = 1e300;

/// A radial integral split into its grid part and its analytic tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub grid: f64,
    pub tail: f64,
    /// The tail is infinite under the log-slope model, or larger than 1%
    /// of the grid part.
    pub truncated: bool,
}

impl Integral {
    pub fn total(&self) -> f64 {
        self.grid + self.tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BolVerdict {
    /// `Q ≤ 1` and `Λ ≥ Λ₁(1+α)`.
    LowerBoundHolds,
    /// `Q ≥ 1` and `Λ ≤ Λ₁(1+α)`.
    UpperBoundHolds,
    /// `Q ≡ 1` and `Λ = Λ₁(1+α)`.
    BothHold,
    NotApplicable,
    Violated,
}

impl BolVerdict {
    pub fn holds(self) -> bool {
        !matches!(self, BolVerdict::Violated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    /// `Λ(Λ - 2γ_n)/(2γ_n)`
    pub lhs: f64,
    /// `αΛ + ∫ r h'(r) r^{nα} e^{nu} dx`
    pub rhs: f64,
    pub residual: f64,
    /// The flux integral `∫ r h' r^{nα} e^{nu} dx` on its own.
    pub flux: f64,
    pub truncation_estimate: f64,
    /// Truncation estimate exceeds ten times the residual.
    pub truncation_flag: bool,
}

/// `∫ (a + b r^{nα}) e^{nu} e^{-ε_g r²} dx` over `R^n` for node prefactors
/// `(a, b)`, with the tail past `r_max` modelled by `tail`.
pub(crate) fn weighted_integral(
    u: &RadialField,
    grid: &RadialGrid,
    params: &ModelParams,
    prefactors: &Density,
    tail: &[TailTerm],
    gaussian_eps: f64,
) -> Result<Integral> {
    let nf = params.nf();
    let mut d = prefactors.clone();
    for (j, (&r, &v)) in grid.nodes().iter().zip(&u.values).enumerate() {
        let e = (nf * v - gaussian_eps * r * r).exp().min(DENSITY_CLIP);
        d.regular[j] *= e;
        d.singular[j] *= e;
    }
    let grid_part = params.omega * grid.integrate(&d)?;
    let (tail_part, infinite) = tail_integral(u, grid.r_max(), params, tail, gaussian_eps);
    Ok(Integral {
        grid: grid_part,
        tail: tail_part,
        truncated: infinite || tail_part.abs() > TAIL_SHARE * grid_part.abs(),
    })
}

fn tail_integral(
    u: &RadialField,
    r_max: f64,
    params: &ModelParams,
    terms: &[TailTerm],
    gaussian_eps: f64,
) -> (f64, bool) {
    let nf = params.nf();
    let mut sum = 0.0;
    let mut infinite = false;
    for t in terms {
        let decay = nf * u.tail_slope - t.power - nf;
        if decay <= 0.0 {
            infinite = true;
        } else {
            sum += t.coef * r_max.powf(t.power + nf) / decay;
        }
    }
    if sum == 0.0 {
        return (0.0, infinite);
    }
    let e = (nf * u.last() - gaussian_eps * r_max * r_max).exp();
    (params.omega * e * sum, infinite)
}

fn volume_prefactors(m: usize) -> Density {
    Density::weighted(vec![1.0; m])
}

pub(crate) fn profile_prefactors(
    u0: f64,
    profile: &QProfile,
    grid: &RadialGrid,
    params: &ModelParams,
    cutoffs: &CutoffConfig,
) -> Density {
    let (regular, singular) = grid
        .nodes()
        .iter()
        .map(|&r| profile.split(r, u0, cutoffs, params))
        .unzip();
    Density { regular, singular }
}

/// `Λ = ∫ |x|^{nα} e^{nu} dx`.
pub fn total_volume(u: &RadialField, grid: &RadialGrid, params: &ModelParams) -> Result<Integral> {
    let tail = [TailTerm {
        coef: 1.0,
        power: params.weight_exponent(),
    }];
    weighted_integral(u, grid, params, &volume_prefactors(grid.len()), &tail, 0.0)
}

/// `Λ* = ∫ Q |x|^{nα} e^{nu} dx` (the self-weighted kind drops `|x|^{nα}`).
pub fn total_curvature(
    u: &RadialField,
    profile: &QProfile,
    grid: &RadialGrid,
    params: &ModelParams,
    cutoffs: &CutoffConfig,
) -> Result<Integral> {
    curvature_with(u, profile, grid, params, cutoffs, 0.0)
}

pub(crate) fn curvature_with(
    u: &RadialField,
    profile: &QProfile,
    grid: &RadialGrid,
    params: &ModelParams,
    cutoffs: &CutoffConfig,
    gaussian_eps: f64,
) -> Result<Integral> {
    let pre = profile_prefactors(u.u0, profile, grid, params, cutoffs);
    let tail = profile.tail_terms(u.u0, cutoffs, params);
    weighted_integral(u, grid, params, &pre, &tail, gaussian_eps)
}

/// `β = Λ*/γ_n`.
pub fn beta_of(
    u: &RadialField,
    profile: &QProfile,
    grid: &RadialGrid,
    params: &ModelParams,
    cutoffs: &CutoffConfig,
) -> Result<f64> {
    Ok(total_curvature(u, profile, grid, params, cutoffs)?.total() / params.gamma_n)
}

/// `-slope` of the least-squares line of `u` against `log r` over the last
/// `fit_window` decades of the grid.
pub fn farfield_slope(u: &RadialField, grid: &RadialGrid, fit_window: f64) -> Result<f64> {
    if u.len() != grid.len() {
        return Err(Error::Shape {
            expected: grid.len(),
            got: u.len(),
        });
    }
    let cut = grid.r_max() * 10f64.powf(-fit_window);
    let (xs, ys): (Vec<f64>, Vec<f64>) = grid
        .nodes()
        .iter()
        .zip(&u.values)
        .filter(|(r, _)| **r >= cut)
        .map(|(r, v)| (r.ln(), *v))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::Precondition("fit window holds fewer than two nodes".into()));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(-sxy / sxx)
}

/// Derivative in `t = log r` on the uniform `t` grid: centred inside,
/// second-order one-sided at the ends.
pub(crate) fn log_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let m = values.len();
    let mut d = vec![0.0; m];
    if m < 3 {
        return d;
    }
    for j in 1..m - 1 {
        d[j] = (values[j + 1] - values[j - 1]) / (2.0 * h);
    }
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    d[m - 1] = (3.0 * values[m - 1] - 4.0 * values[m - 2] + values[m - 3]) / (2.0 * h);
    d
}

/// Pohozaev balance with `h = u - v`, `v` the normal potential of
/// `|y|^{nα} e^{nu}`.
pub fn pohozaev_residual(
    u: &RadialField,
    kernel: &KernelMatrix,
    params: &ModelParams,
) -> Result<PohozaevReport> {
    pohozaev_with(u, kernel, params, 0.0)
}

/// [`pohozaev_residual`] for the regularized weight `|y|^{nα} e^{nu - ε|y|²}`,
/// which adds `-(2ε/n) ∫ |x|² dμ` to the right-hand side.
pub fn pohozaev_with(
    u: &RadialField,
    kernel: &KernelMatrix,
    params: &ModelParams,
    gaussian_eps: f64,
) -> Result<PohozaevReport> {
    let grid = kernel.grid();
    let nf = params.nf();
    let mut pre = volume_prefactors(grid.len());
    for (b, r) in pre.singular.iter_mut().zip(grid.nodes()) {
        *b = (-gaussian_eps * r * r).exp();
    }
    let tail = [TailTerm {
        coef: 1.0,
        power: params.weight_exponent(),
    }];
    let volume = weighted_integral(u, grid, params, &volume_prefactors(grid.len()), &tail, gaussian_eps)?;
    let lam = volume.total();
    let e: Vec<f64> = u
        .values
        .iter()
        .zip(&pre.singular)
        .map(|(v, g)| g * (nf * v).exp().min(DENSITY_CLIP))
        .collect();
    let v = apply_kernel(kernel, &Density::weighted(e.clone()))?;
    let h: Vec<f64> = u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect();
    let dh = log_derivative(&h, grid.log_step());
    let integrand = |j: usize| dh[j] - 2.0 * gaussian_eps * grid.nodes()[j].powi(2) / nf;
    let masses = grid.masses(&Density::weighted(e.clone()))?;
    let grid_flux: f64 = masses.iter().enumerate().map(|(j, m)| m * integrand(j)).sum::<f64>() * params.omega;
    let dh_end = integrand(grid.len() - 1);
    let flux = grid_flux + dh_end * volume.tail;
    let lhs = lam * (lam - 2.0 * params.gamma_n) / (2.0 * params.gamma_n);
    let rhs = params.alpha * lam + flux;
    let residual = lhs - rhs;
    let sensitivity = dh_end.abs() + params.alpha.abs() + (2.0 * lam / params.lambda_1 - 1.0).abs();
    let truncation_estimate = volume.tail.abs() * sensitivity;
    Ok(PohozaevReport {
        lhs,
        rhs,
        residual,
        flux,
        truncation_estimate,
        truncation_flag: volume.truncated || truncation_estimate > 10.0 * residual.abs(),
    })
}

/// `Λ*(Λ* - Λ₁)/Λ₁ - α ∫ |x|^{nα} e^{nu} dx`, zero for solutions of
/// `(-Δ)^{n/2} u = (1 + |x|^{nα}) e^{nu}` with total curvature `Λ*`.
pub fn pohozaev_singular(
    u: &RadialField,
    grid: &RadialGrid,
    params: &ModelParams,
    lambda_star: f64,
) -> Result<f64> {
    let vol = total_volume(u, grid, params)?.total();
    Ok(lambda_star * (lambda_star - params.lambda_1) / params.lambda_1 - params.alpha * vol)
}

/// Verdict for a computed volume `lambda_vol`.
pub fn bol_verdict_for(
    lambda_vol: f64,
    profile: &QProfile,
    params: &ModelParams,
    cutoffs: &CutoffConfig,
    tol_rel: f64,
) -> BolVerdict {
    let q = params.quantized_volume();
    let lower = lambda_vol >= q * (1.0 - tol_rel);
    let upper = lambda_vol <= q * (1.0 + tol_rel);
    let (le, ge) = (profile.certifies_le_one(), profile.certifies_ge_one(cutoffs));
    let ok = |holds: bool, v: BolVerdict| if holds { v } else { BolVerdict::Violated };
    match (le, ge) {
        (true, true) => ok(lower && upper, BolVerdict::BothHold),
        (true, false) => ok(lower, BolVerdict::LowerBoundHolds),
        (false, true) => ok(upper, BolVerdict::UpperBoundHolds),
        (false, false) => BolVerdict::NotApplicable,
    }
}

/// Bol verdict for the field `u`.
pub fn bol_verdict(
    u: &RadialField,
    profile: &QProfile,
    grid: &RadialGrid,
    params: &ModelParams,
    cutoffs: &CutoffConfig,
    tol_rel: f64,
) -> Result<BolVerdict> {
    let lam = total_volume(u, grid, params)?.total();
    Ok(bol_verdict_for(lam, profile, params, cutoffs, tol_rel))
}

/// `sup_{r ≥ 1} r^{nα} e^{nu(r)}` over the nodes; needs `α > 0`.
pub fn pointwise_bound_check(u: &RadialField, grid: &RadialGrid, params: &ModelParams) -> Result<f64> {
    if !(params.alpha > 0.0) {
        return Err(Error::Precondition(format!(
            "pointwise bound needs alpha > 0, got {}",
            params.alpha
        )));
    }
    let nf = params.nf();
    let w = params.weight_exponent();
    Ok(grid
        .nodes()
        .iter()
        .zip(&u.values)
        .filter(|(r, _)| **r >= 1.0)
        .map(|(r, v)| (w * r.ln() + nf * v).exp())
        .fold(0.0, f64::max))
}

/// `β > 1 + α` when `Q ≥ 1` is certified; vacuously true otherwise.
pub fn beta_gap_check(
    u: &RadialField,
    profile: &QProfile,
    grid: &RadialGrid,
    params: &ModelParams,
    cutoffs: &CutoffConfig,
) -> Result<bool> {
    if !profile.certifies_ge_one(cutoffs) {
        return Ok(true);
    }
    Ok(beta_of(u, profile, grid, params, cutoffs)? > 1.0 + params.alpha)
}

/// Constant `C` of `r^{nα} e^{nu} ≤ C` on `|x| ≥ 1` for `Q ≥ 1`, `α > 0`:
/// `2^{nα} Λ₁(1+α) / (|B₁|(1 - 2^{-n}))`.
pub fn pointwise_cap(params: &ModelParams) -> f64 {
    let nf = params.nf();
    2f64.powf(params.weight_exponent()) * params.quantized_volume()
        / (ball_volume(params.n) * (1.0 - 2f64.powf(-nf)))
}

/// Cap on the total curvature of normal solutions with
/// `Q ≥ 1`, `(Q - M r^p)⁺ ∈ L¹(B₁ᶜ)`:
/// `sup_{B₁} Q · Λ₁(1+α) + C · ‖(Q - M r^p)⁺‖_{L¹(B₁ᶜ)} + M Λ₁(1 + α + p/n)`,
/// with `C` bounding `|x|^{nα} e^{nu}` on `B₁ᶜ`.
pub fn total_curvature_cap(params: &ModelParams, q_sup_ball: f64, excess_l1: f64, m: f64, p: f64) -> f64 {
    let c = if params.alpha > 0.0 {
        pointwise_cap(params)
    } else {
        params.quantized_volume() / ball_volume(params.n)
    };
    q_sup_ball * params.quantized_volume()
        + c * excess_l1
        + m * params.lambda_1 * (1.0 + params.alpha + p / params.nf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bubble(grid: &RadialGrid, alpha: f64) -> RadialField {
        let a = 1.0 + alpha;
        RadialField::from_fn(grid, (2.0 * a).ln(), 2.0 * a, |r| {
            (2.0 * a).ln() - (r.powf(2.0 * a)).ln_1p()
        })
    }

    #[test]
    fn bubble_volumes() {
        for alpha in [0.0, -0.5] {
            let p = ModelParams::new(2, alpha).unwrap();
            let g = RadialGrid::standard(alpha, 2).unwrap();
            let v = total_volume(&bubble(&g, alpha), &g, &p).unwrap();
            let want = p.quantized_volume();
            assert!((v.total() - want).abs() < 1e-3 * want, "{alpha}: {v:?}");
        }
    }

    #[test]
    fn clipped_field_has_no_volume() {
        let p = ModelParams::new(2, 0.0).unwrap();
        let g = RadialGrid::new(256, 1e-4, 1e4, 0.0, 2).unwrap();
        let u = RadialField::constant(&g, -700.0);
        let v = total_volume(&u, &g, &p).unwrap();
        assert!(v.total() < 1e-300);
    }

    #[test]
    fn tent_curvature_matches_polynomial_integral() {
        let p = ModelParams::new(2, 0.0).unwrap();
        let g = RadialGrid::new(4000, 1e-3, 1e2, 0.0, 2).unwrap();
        let k = 1.5;
        let u = RadialField::constant(&g, k);
        let got = total_curvature(&u, &QProfile::Tent, &g, &p, &CutoffConfig::default()).unwrap();
        // ∫₁² (r-1)(2-r) r dr = 1/4
        let want = (2.0 * k).exp() * 2.0 * std::f64::consts::PI * 0.25;
        assert!((got.total() - want).abs() < 1e-4 * want, "{} vs {want}", got.total());
    }

    #[test]
    fn slope_of_bubbles() {
        for alpha in [0.0, -0.5] {
            let g = RadialGrid::standard(alpha, 2).unwrap();
            let b = farfield_slope(&bubble(&g, alpha), &g, 1.0).unwrap();
            assert!((b - 2.0 * (1.0 + alpha)).abs() < 0.02 * 2.0 * (1.0 + alpha));
        }
        let g = RadialGrid::standard(0.0, 2).unwrap();
        assert_eq!(farfield_slope(&RadialField::constant(&g, 3.0), &g, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn log_derivative_exact_on_quadratics() {
        let h = 0.1;
        let v: Vec<f64> = (0..10).map(|j| (j as f64 * h).powi(2)).collect();
        let d = log_derivative(&v, h);
        for (j, dj) in d.iter().enumerate() {
            assert!((dj - 2.0 * j as f64 * h).abs() < 1e-12);
        }
    }

    #[test]
    fn verdicts() {
        let p = ModelParams::new(2, 0.0).unwrap();
        let c = CutoffConfig::default();
        let q = p.quantized_volume();
        let one = QProfile::one();
        assert_eq!(bol_verdict_for(q, &one, &p, &c, BOL_TOL), BolVerdict::BothHold);
        assert_eq!(bol_verdict_for(1.2 * q, &one, &p, &c, BOL_TOL), BolVerdict::Violated);
        let up = crate::profile::gaussian_profile(1.0);
        assert_eq!(bol_verdict_for(0.9 * q, &up, &p, &c, BOL_TOL), BolVerdict::UpperBoundHolds);
        let low = crate::profile::gaussian_profile(-0.5);
        assert_eq!(bol_verdict_for(0.9 * q, &low, &p, &c, BOL_TOL), BolVerdict::Violated);
        let tab = QProfile::Tabulated { r: vec![0.0, 1.0], q: vec![0.5, 2.0] };
        assert_eq!(bol_verdict_for(q, &tab, &p, &c, BOL_TOL), BolVerdict::NotApplicable);
    }

    #[test]
    fn pointwise_check_needs_positive_alpha() {
        let p = ModelParams::new(2, 0.0).unwrap();
        let g = RadialGrid::standard(0.0, 2).unwrap();
        assert!(pointwise_bound_check(&bubble(&g, 0.0), &g, &p).is_err());
    }

    #[test]
    fn singular_identity_on_bubble() {
        let p = ModelParams::new(2, 0.0).unwrap();
        let g = RadialGrid::standard(0.0, 2).unwrap();
        assert_eq!(pohozaev_singular(&bubble(&g, 0.0), &g, &p, p.lambda_1).unwrap(), 0.0);
        let shifted = bubble(&g, 0.0).shifted(0.1);
        let p2 = ModelParams::new(2, -0.3).unwrap();
        let g2 = g.with_alpha(-0.3).unwrap();
        assert!(pohozaev_singular(&shifted, &g2, &p2, 0.85 * p2.lambda_1).unwrap().abs() > 1e-2);
    }
}
