//! Sphere-averaged logarithmic kernel and its Nyström matrix.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Density, RadialField, RadialGrid};
use crate::model::{sphere_area, ModelParams};
use crate::quad;

const QUAD_TOL: f64 = 1e-11;
const FAIL_TOL: f64 = 1e-10;

/// `c_n = |S^{n-2}| / |S^{n-1}|`, the density of `cos θ` on the sphere.
fn angular_normalizer(n: u32) -> f64 {
    sphere_area(n - 2) / sphere_area(n - 1)
}

/// `a_n(t) = A_n(1, t)` for `0 ≤ t ≤ 1`.
pub fn angular_log_profile(n: u32, t: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Dimension(n));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Precondition(format!("ratio must lie in [0, 1], got {t}")));
    }
    if n == 2 || t == 0.0 {
        return Ok(0.0);
    }
    if n == 3 {
        return Ok(a3(t));
    }
    let cn = angular_normalizer(n);
    let e = (1.0 - t) * (1.0 - t);
    let f = |th: f64| {
        let s = (0.5 * th).sin();
        (e + 4.0 * t * s * s).ln() * th.sin().powi(n as i32 - 2)
    };
    // Near t = 1 the integrand has a near-singularity at θ = 0; splitting
    // there keeps the adaptive rule's budget local.
    let split = (4.0 * (1.0 - t)).clamp(1e-3, 0.5);
    let v = quad::integrate(f, 0.0, split, QUAD_TOL)? + quad::integrate(f, split, PI, QUAD_TOL)?;
    let v = -0.5 * cn * v;
    if !v.is_finite() {
        return Err(Error::Quadrature {
            tol: FAIL_TOL,
            estimate: f64::INFINITY,
        });
    }
    Ok(v)
}

fn a3(t: f64) -> f64 {
    if t < 0.1 {
        // Σ_{k even} t^k / (k (1 - k²))
        let mut sum = 0.0;
        let t2 = t * t;
        let mut tk = t2;
        let mut k = 2.0;
        while tk > 1e-18 * t2 {
            sum += tk / (k * (1.0 - k * k));
            tk *= t2;
            k += 2.0;
        }
        return sum;
    }
    let up = (1.0 + t) * (1.0 + t) * (2.0 * (1.0 + t).ln() - 1.0);
    let down = if t == 1.0 {
        0.0
    } else {
        (1.0 - t) * (1.0 - t) * (2.0 * (1.0 - t).ln() - 1.0)
    };
    -(up - down) / (8.0 * t)
}

/// `A_n(r, s)`, the mean of `log(1/|r e₁ - s ω|)` over `ω ∈ S^{n-1}`.
pub fn angular_log_average(n: u32, r: f64, s: f64) -> Result<f64> {
    if !(r >= 0.0 && s >= 0.0) || (r == 0.0 && s == 0.0) {
        return Err(Error::Precondition(format!(
            "angular average needs r, s >= 0 not both zero, got ({r}, {s})"
        )));
    }
    let (lo, hi) = if r < s { (r, s) } else { (s, r) };
    Ok(-hi.ln() + angular_log_profile(n, lo / hi)?)
}

/// Unweighted Nyström kernel on a geometric grid:
/// `P[i][j] = (ω/γ_n)(A_n(r_i, r_j) + log(1 + r_j))`, applied to node
/// masses from [`RadialGrid::masses`]. Row `origin` holds the `r = 0`
/// evaluation with `A_n(0, s) = -log s`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    n: u32,
    m: usize,
    grid: RadialGrid,
    scale: f64,
    profile: Arc<Vec<f64>>,
    entries: Arc<Vec<f64>>,
    origin: Vec<f64>,
}

/// Builds the kernel for `params.n` on `grid`, rows in parallel.
pub fn build_kernel(params: &ModelParams, grid: &RadialGrid) -> Result<KernelMatrix> {
    let m = grid.len();
    let h = grid.log_step();
    let profile: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|d| {
            let t = if d == 0 { 1.0 } else { (-(d as f64) * h).exp() };
            angular_log_profile(params.n, t).map_err(|e| Error::KernelEntry {
                i: 0,
                j: d,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(assemble(params, grid, Arc::new(profile)))
}

fn assemble(params: &ModelParams, grid: &RadialGrid, profile: Arc<Vec<f64>>) -> KernelMatrix {
    let m = grid.len();
    let scale = params.omega / params.gamma_n;
    let nodes = grid.nodes();
    let log_r: Vec<f64> = nodes.iter().map(|r| r.ln()).collect();
    let log_1p: Vec<f64> = nodes.iter().map(|r| r.ln_1p()).collect();
    let mut entries = vec![0.0; m * m];
    entries.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, e) in row.iter_mut().enumerate() {
            let a = -log_r[i.max(j)] + profile[i.abs_diff(j)];
            *e = scale * (a + log_1p[j]);
        }
    });
    let origin = (0..m).map(|j| scale * (log_1p[j] - log_r[j])).collect();
    KernelMatrix {
        n: params.n,
        m,
        grid: grid.clone(),
        scale,
        profile,
        entries: Arc::new(entries),
        origin,
    }
}

impl KernelMatrix {
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn len(&self) -> usize {
        self.m
    }
    pub fn is_empty(&self) -> bool {
        self.m == 0
    }
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }
    pub fn origin_row(&self) -> &[f64] {
        &self.origin
    }
    /// `ω / γ_n`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Same matrix on a grid whose singular weights use another `α`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut k = self.clone();
        k.grid = self.grid.with_alpha(alpha)?;
        Ok(k)
    }

    /// Kernel on the grid scaled by `1/lambda`, reusing the angular table.
    pub fn rescaled(&self, params: &ModelParams, lambda: f64) -> Result<Self> {
        let grid = self.grid.scaled(lambda)?;
        Ok(assemble(params, &grid, Arc::clone(&self.profile)))
    }

    /// Potentials at the nodes and at the origin for the given node masses.
    pub fn apply_masses(&self, masses: &[f64]) -> Result<(Vec<f64>, f64)> {
        if masses.len() != self.m {
            return Err(Error::Shape {
                expected: self.m,
                got: masses.len(),
            });
        }
        let values = self
            .entries
            .chunks_exact(self.m)
            .map(|row| dot(row, masses))
            .collect();
        Ok((values, dot(&self.origin, masses)))
    }

    /// Writes the matrix to `path`.
    ///
    /// Layout, all little-endian: 8-byte magic `QCRVKRN1`, `n: u32`,
    /// `m: u64`, node fingerprint `u64`, then `m` profile values, `m`
    /// origin entries and `m·m` row-major entries as `f64`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let cache = |e: std::io::Error| Error::Cache(e.to_string());
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(cache)?);
        out.write_all(CACHE_MAGIC).map_err(cache)?;
        out.write_all(&self.n.to_le_bytes()).map_err(cache)?;
        out.write_all(&(self.m as u64).to_le_bytes()).map_err(cache)?;
        out.write_all(&self.grid.fingerprint().to_le_bytes()).map_err(cache)?;
        for v in self.profile.iter().chain(&self.origin).chain(self.entries.iter()) {
            out.write_all(&v.to_le_bytes()).map_err(cache)?;
        }
        out.flush().map_err(cache)
    }

    /// Reads a matrix written by [`save`](Self::save), checking that it
    /// was built for the same dimension and nodes.
    pub fn load(path: &Path, params: &ModelParams, grid: &RadialGrid) -> Result<Self> {
        let cache = |e: std::io::Error| Error::Cache(e.to_string());
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(cache)?;
        let m = grid.len();
        let header = CACHE_MAGIC.len() + 4 + 8 + 8;
        if bytes.len() != header + 8 * (2 * m + m * m) || &bytes[..8] != CACHE_MAGIC {
            return Err(Error::Cache("bad magic or size".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        if u32_at(8) != params.n || u64_at(12) != m as u64 || u64_at(20) != grid.fingerprint() {
            return Err(Error::Cache("header does not match dimension or grid".into()));
        }
        let mut floats = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let profile: Vec<f64> = floats.by_ref().take(m).collect();
        let origin: Vec<f64> = floats.by_ref().take(m).collect();
        let entries: Vec<f64> = floats.collect();
        Ok(KernelMatrix {
            n: params.n,
            m,
            grid: grid.clone(),
            scale: params.omega / params.gamma_n,
            profile: Arc::new(profile),
            entries: Arc::new(entries),
            origin,
        })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"QCRVKRN1";

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Potential `(1/γ_n) ∫ log((1+|y|)/|x-y|) f(|y|) dy` of a radial density.
/// `tail_slope` is the far-field coefficient `ω Σ m_j / γ_n`.
pub fn apply_kernel(kernel: &KernelMatrix, density: &Density) -> Result<RadialField> {
    let masses = kernel.grid.masses(density)?;
    let (values, u0) = kernel.apply_masses(&masses)?;
    let beta = kernel.scale * masses.iter().sum::<f64>();
    Ok(RadialField {
        values,
        u0,
        tail_slope: beta,
    })
}
