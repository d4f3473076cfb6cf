//! Geometric radial grid, product quadrature weights, and sampled fields.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Minimum node density accepted by [`RadialGrid::new`].
pub const MIN_NODES_PER_DECADE: usize = 8;
pub const MIN_NODES: usize = 16;

pub const DEFAULT_NODES: usize = 2048;
pub const DEFAULT_R_MIN: f64 = 1e-7;
pub const DEFAULT_R_MAX: f64 = 1e4;

/// Nodes `r_j = r_min e^{j h}` with two sets of weights on `[0, r_max]`:
/// `weights` integrates against `s^{n-1} ds` and `weights_sing` against
/// `s^{n-1+nα} ds`.
///
/// Between nodes the integrand is taken linear in `log s` and the power
/// weight is integrated exactly; on `[0, r_1]` it is taken constant, so
/// both sets reproduce the moment of a constant function exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    weights_sing: Vec<f64>,
    log_r_min: f64,
    log_step: f64,
    n: u32,
    alpha: f64,
}

impl RadialGrid {
    pub fn new(m: usize, r_min: f64, r_max: f64, alpha: f64, n: u32) -> Result<Self> {
        if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
            return Err(Error::GridBounds { r_min, r_max });
        }
        let decades = (r_max / r_min).log10();
        if m < MIN_NODES || ((m - 1) as f64) < MIN_NODES_PER_DECADE as f64 * decades {
            return Err(Error::GridTooCoarse {
                nodes: m,
                decades,
                min_per_decade: MIN_NODES_PER_DECADE,
            });
        }
        if !(alpha > -1.0) {
            return Err(Error::Alpha(alpha));
        }
        if n < 2 {
            return Err(Error::Dimension(n));
        }
        let log_r_min = r_min.ln();
        let log_step = (r_max.ln() - log_r_min) / (m - 1) as f64;
        Ok(Self::from_log_spacing(m, log_r_min, log_step, alpha, n))
    }

    /// Default resolution: 2048 nodes on `[1e-7, 1e4]`.
    pub fn standard(alpha: f64, n: u32) -> Result<Self> {
        Self::new(DEFAULT_NODES, DEFAULT_R_MIN, DEFAULT_R_MAX, alpha, n)
    }

    fn from_log_spacing(m: usize, log_r_min: f64, log_step: f64, alpha: f64, n: u32) -> Self {
        let nodes: Vec<f64> = (0..m)
            .map(|j| (log_r_min + j as f64 * log_step).exp())
            .collect();
        let nf = n as f64;
        let weights = power_weights(&nodes, log_r_min, log_step, nf - 1.0);
        let weights_sing = power_weights(&nodes, log_r_min, log_step, nf - 1.0 + nf * alpha);
        Self {
            nodes,
            weights,
            weights_sing,
            log_r_min,
            log_step,
            n,
            alpha,
        }
    }

    /// Same nodes with singular weights rebuilt for another exponent.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha > -1.0) {
            return Err(Error::Alpha(alpha));
        }
        Ok(Self::from_log_spacing(
            self.len(),
            self.log_r_min,
            self.log_step,
            alpha,
            self.n,
        ))
    }

    /// The grid with every node divided by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("scale must be positive, got {lambda}")));
        }
        Ok(Self::from_log_spacing(
            self.len(),
            self.log_r_min - lambda.ln(),
            self.log_step,
            self.alpha,
            self.n,
        ))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn weights_sing(&self) -> &[f64] {
        &self.weights_sing
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }
    pub fn r_max(&self) -> f64 {
        *self.nodes.last().expect("grid is never empty")
    }
    pub fn log_step(&self) -> f64 {
        self.log_step
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Per-node quadrature masses of `regular` against `s^{n-1} ds` plus
    /// `singular` against `s^{n-1+nα} ds`.
    ///
    /// On a panel where the density is positive at both ends and changes by
    /// less than a factor of ten, `log f` is interpolated linearly in
    /// `t = log s` with a second-difference curvature correction, which
    /// integrates power laws exactly; elsewhere `f` is interpolated linearly. Either way the mass
    /// of a panel is split between its two nodes by the hat functions in `t`,
    /// so a kernel linear in `t` on the panel is integrated exactly.
    pub fn masses(&self, density: &Density) -> Result<Vec<f64>> {
        density.check_len(self.len())?;
        let nf = self.n as f64;
        let mut out = vec![0.0; self.len()];
        self.accumulate(&mut out, &density.regular, nf - 1.0);
        self.accumulate(&mut out, &density.singular, nf - 1.0 + nf * self.alpha);
        Ok(out)
    }

    fn accumulate(&self, out: &mut [f64], f: &[f64], q: f64) {
        if f.iter().all(|v| *v == 0.0) {
            return;
        }
        let m = self.len();
        let h = self.log_step;
        let (l0, r0) = {
            let (m0, m1) = exp_moments((q + 1.0) * h);
            (m0 - m1, m1)
        };
        let smooth = |a: f64, b: f64| a > 0.0 && (0.1..=10.0).contains(&(b / a));
        // Second differences of log f where three neighbours are smooth.
        let curv: Vec<Option<f64>> = (0..m)
            .map(|k| {
                (k > 0 && k + 1 < m && smooth(f[k - 1], f[k]) && smooth(f[k], f[k + 1]))
                    .then(|| (f[k + 1].ln() - 2.0 * f[k].ln() + f[k - 1].ln()) / (h * h))
            })
            .collect();
        for k in 0..m - 1 {
            let (fa, fb) = (f[k], f[k + 1]);
            if fa == 0.0 && fb == 0.0 {
                continue;
            }
            let base = h * self.nodes[k].powf(q + 1.0);
            if smooth(fa, fb) {
                let mk = exp_moments4((fb / fa).ln() + (q + 1.0) * h);
                let kappa = match (curv[k], curv[k + 1]) {
                    (Some(x), Some(y)) => 0.5 * (x + y),
                    (Some(x), None) | (None, Some(x)) => x,
                    (None, None) => 0.0,
                };
                // e^{g} ≈ e^{ĝ}(1 + κ h² τ(τ-1)/2) against the hats 1-τ and τ.
                let c = 0.5 * kappa * h * h;
                let left = (mk[0] - mk[1]) - c * (mk[1] - 2.0 * mk[2] + mk[3]);
                let right = mk[1] + c * (mk[3] - mk[2]);
                out[k] += base * fa * left;
                out[k + 1] += base * fa * right;
            } else {
                out[k] += base * l0 * fa;
                out[k + 1] += base * r0 * fb;
            }
        }
        out[0] += f[0] * self.nodes[0].powf(q + 1.0) / (q + 1.0);
    }

    /// `∫_0^{r_max} (a(s) + b(s) s^{nα}) s^{n-1} ds` on the grid.
    pub fn integrate(&self, density: &Density) -> Result<f64> {
        Ok(self.masses(density)?.iter().sum())
    }

    /// Order-independent identity of the node set.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the node bit patterns.
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for r in &self.nodes {
            for b in r.to_bits().to_le_bytes() {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        hash
    }
}

/// `M_k = ∫_0^1 τ^k e^{aτ} dτ` for `k = 0..4`.
fn exp_moments4(a: f64) -> [f64; 4] {
    let mut m = [0.0; 4];
    if a.abs() < 0.5 {
        // Σ_j a^j / (j! (j + k + 1))
        let mut term = 1.0;
        for j in 0..30 {
            let jf = j as f64;
            for (k, mk) in m.iter_mut().enumerate() {
                *mk += term / (jf + k as f64 + 1.0);
            }
            term *= a / (jf + 1.0);
        }
    } else {
        let ea = a.exp();
        m[0] = a.exp_m1() / a;
        for k in 1..4 {
            m[k] = (ea - k as f64 * m[k - 1]) / a;
        }
    }
    m
}

/// `(e^a - 1)/a` and `(e^a (a-1) + 1)/a²`, the exact moments of `1` and `τ`
/// against `e^{aτ}` on `[0, 1]`.
fn exp_moments(a: f64) -> (f64, f64) {
    let m = exp_moments4(a);
    (m[0], m[1])
}

fn power_weights(nodes: &[f64], log_r_min: f64, h: f64, q: f64) -> Vec<f64> {
    let m = nodes.len();
    let mut w = vec![0.0; m];
    let a = (q + 1.0) * h;
    let (m0, m1) = exp_moments(a);
    let (left, right) = (m0 - m1, m1);
    for k in 0..m - 1 {
        let base = h * ((q + 1.0) * (log_r_min + k as f64 * h)).exp();
        w[k] += base * left;
        w[k + 1] += base * right;
    }
    w[0] += nodes[0].powf(q + 1.0) / (q + 1.0);
    w
}

/// A density split over the two measures of the grid: `regular` against
/// `s^{n-1} ds` and `singular` against `s^{n-1+nα} ds`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Density {
    pub regular: Vec<f64>,
    pub singular: Vec<f64>,
}

impl Density {
    pub fn zeros(m: usize) -> Self {
        Self {
            regular: vec![0.0; m],
            singular: vec![0.0; m],
        }
    }

    /// Density carried entirely by the weighted measure `|x|^{nα} dx`.
    pub fn weighted(values: Vec<f64>) -> Self {
        let m = values.len();
        Self {
            regular: vec![0.0; m],
            singular: values,
        }
    }

    /// Density against plain Lebesgue measure.
    pub fn unweighted(values: Vec<f64>) -> Self {
        let m = values.len();
        Self {
            regular: values,
            singular: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.regular.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regular.is_empty()
    }

    fn check_len(&self, m: usize) -> Result<()> {
        for got in [self.regular.len(), self.singular.len()] {
            if got != m {
                return Err(Error::Shape { expected: m, got });
            }
        }
        Ok(())
    }

    /// Pointwise value `a(r) + b(r) r^{nα}` at node `j`.
    pub fn pointwise(&self, j: usize, r: f64, weight_exponent: f64) -> f64 {
        self.regular[j] + self.singular[j] * r.powf(weight_exponent)
    }
}

/// A radial function sampled on grid nodes, with its value at the origin
/// and the logarithmic slope used to extend it past `r_max`:
/// `u(r) ≈ u(r_M) - tail_slope · log(r/r_M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub values: Vec<f64>,
    pub u0: f64,
    pub tail_slope: f64,
}

impl RadialField {
    pub fn new(values: Vec<f64>, u0: f64, tail_slope: f64) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("values", format!("non-finite sample at node {j}")));
        }
        if !u0.is_finite() {
            return Err(invalid("u0", "value at the origin must be finite"));
        }
        Ok(Self {
            values,
            u0,
            tail_slope,
        })
    }

    pub fn constant(grid: &RadialGrid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            u0: c,
            tail_slope: 0.0,
        }
    }

    pub fn from_fn(grid: &RadialGrid, u0: f64, tail_slope: f64, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.nodes().iter().map(|&r| f(r)).collect(),
            u0,
            tail_slope,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("field is never empty")
    }

    /// Adds a constant everywhere.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            u0: self.u0 + c,
            tail_slope: self.tail_slope,
        }
    }

    /// Sup-norm distance over the nodes and the origin.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold((self.u0 - other.u0).abs(), f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn constant_density_integrates_exactly() {
        let g = RadialGrid::new(512, 1e-6, 1e4, 0.0, 2).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!(rel(s, 1e8 / 2.0) < 1e-10, "{}", rel(s, 1e8 / 2.0));
    }

    #[test]
    fn singular_weight_moment() {
        let g = RadialGrid::new(512, 1e-6, 10.0, -0.5, 2).unwrap();
        let s: f64 = g.weights_sing().iter().sum();
        assert!(rel(s, 10.0) < 1e-8);
    }

    #[test]
    fn gaussian_moment_is_fourth_order() {
        // ∫_0^∞ e^{-s²} s ds = 1/2
        let err = |m: usize| {
            let g = RadialGrid::new(m, 1e-6, 10.0, 0.0, 2).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
            (g.integrate(&Density::unweighted(f)).unwrap() - 0.5).abs()
        };
        let (e1, e2) = (err(200), err(400));
        assert!(e2 < 1e-6, "{e2}");
        assert!(e1 / e2 > 10.0, "{e1} {e2}");
    }

    #[test]
    fn too_coarse_is_rejected() {
        let e = RadialGrid::new(8, 1e-6, 1e4, 0.0, 2).unwrap_err();
        assert!(matches!(e, Error::GridTooCoarse { .. }));
        assert!(e.to_string().contains("grid too coarse"));
        // 16 nodes over 10 decades is below 8 per decade.
        assert!(RadialGrid::new(16, 1e-6, 1e4, 0.0, 2).is_err());
        assert!(RadialGrid::new(100, 1.0, 0.5, 0.0, 2).is_err());
    }

    #[test]
    fn series_and_closed_form_moments_agree() {
        for a in [0.499_999, -0.499_999] {
            let (s0, s1) = exp_moments(a);
            let ea = f64::exp(a);
            assert!(rel(s0, (ea - 1.0) / a) < 1e-14);
            assert!(rel(s1, (ea * (a - 1.0) + 1.0) / (a * a)) < 1e-12);
        }
    }

    #[test]
    fn scaled_grid_moves_nodes_and_weights() {
        let g = RadialGrid::new(256, 1e-4, 1e2, -0.3, 2).unwrap();
        let s = g.scaled(4.0).unwrap();
        assert!(rel(s.r_max(), 25.0) < 1e-12);
        let total: f64 = s.weights_sing().iter().sum();
        let q1 = 2.0 * (1.0 - 0.3);
        assert!(rel(total, 25f64.powf(q1) / q1) < 1e-10);
    }

    #[test]
    fn field_rejects_nan() {
        assert!(RadialField::new(vec![0.0, f64::NAN], 0.0, 0.0).is_err());
    }
}
