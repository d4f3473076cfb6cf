//! Problem parameters and the physical constants derived from them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Surface measure of the unit `k`-sphere in `R^{k+1}`.
///
/// Uses the recursion `|S^k| = 2π/(k-1) |S^{k-2}|` from `|S^0| = 2`, `|S^1| = 2π`,
/// which is exact in the Γ-function sense `2π^{(k+1)/2} / Γ((k+1)/2)`.
pub fn sphere_area(k: u32) -> f64 {
    let (mut area, mut j) = if k.is_multiple_of(2) { (2.0, 0) } else { (2.0 * PI, 1) };
    while j < k {
        j += 2;
        area *= 2.0 * PI / (j - 1) as f64;
    }
    area
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: u32) -> f64 {
    sphere_area(n - 1) / n as f64
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Dimension, singular exponent, and the constants of the log-kernel
/// representation `(-Δ)^{n/2} log(1/|x|) = γ_n δ_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u32,
    pub alpha: f64,
    /// `γ_n = ((n-1)!/2) |S^n|`.
    pub gamma_n: f64,
    /// `Λ₁ = (n-1)! |S^n| = 2 γ_n`.
    pub lambda_1: f64,
    /// `|S^{n-1}|`.
    pub omega: f64,
}

impl ModelParams {
    pub fn new(n: u32, alpha: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension(n));
        }
        if !alpha.is_finite() || alpha <= -1.0 {
            return Err(Error::Alpha(alpha));
        }
        let lambda_1 = factorial(n - 1) * sphere_area(n);
        Ok(Self {
            n,
            alpha,
            gamma_n: 0.5 * lambda_1,
            lambda_1,
            omega: sphere_area(n - 1),
        })
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `n α`, the exponent of the singular weight `|x|^{nα}`.
    pub fn weight_exponent(&self) -> f64 {
        self.nf() * self.alpha
    }

    /// Volume of every normal solution with `Q ≡ 1`: `Λ₁ (1 + α)`.
    pub fn quantized_volume(&self) -> f64 {
        self.lambda_1 * (1.0 + self.alpha)
    }

    /// Same dimension, different exponent.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.n, alpha)
    }
}

/// The piecewise-linear ramp: 0 on `[0,1)`, `t-1` on `[1,2)`, 1 beyond.
pub fn ramp(t: f64) -> f64 {
    (t.abs() - 1.0).clamp(0.0, 1.0)
}

/// Cut-off and regularization parameters of the approximate problems.
///
/// `eps` drives both `ψ_ε(r) = 1 - ramp(ε r)` and the Gaussian factor
/// `e^{-ε r²}` when it is requested by the solver; `delta` drives
/// `φ_δ(r) = ramp(r/δ)`. Zero disables the respective cut-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffConfig {
    pub eps: f64,
    pub delta: f64,
    pub p: f64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self {
            eps: 0.0,
            delta: 0.0,
            p: 0.5,
        }
    }
}

impl CutoffConfig {
    pub fn new(eps: f64, delta: f64, p: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid("eps", format!("must be finite and >= 0, got {eps}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be finite and >= 0, got {delta}")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
        }
        Ok(Self { eps, delta, p })
    }

    /// `ψ_ε(r)`; identically 1 when `eps == 0`.
    pub fn psi(&self, r: f64) -> f64 {
        if self.eps == 0.0 {
            1.0
        } else {
            1.0 - ramp(self.eps * r)
        }
    }

    /// `φ_δ(r)`; identically 1 when `delta == 0`.
    pub fn phi(&self, r: f64) -> f64 {
        if self.delta == 0.0 {
            1.0
        } else {
            ramp(r / self.delta)
        }
    }

    /// Radius beyond which `ψ_ε` vanishes.
    pub fn support_radius(&self) -> Option<f64> {
        (self.eps > 0.0).then(|| 2.0 / self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dimensional_constants() {
        let p = ModelParams::new(2, 0.0).unwrap();
        assert!((p.gamma_n - 2.0 * PI).abs() < 1e-14);
        assert!((p.lambda_1 - 4.0 * PI).abs() < 1e-14);
        assert!((p.omega - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn four_dimensional_lambda_1() {
        let p = ModelParams::new(4, 0.0).unwrap();
        assert!((p.lambda_1 - 16.0 * PI * PI).abs() < 1e-11);
        assert!((p.lambda_1 - 157.9137).abs() < 1e-4);
    }

    #[test]
    fn domain_errors_name_the_bound() {
        assert_eq!(ModelParams::new(2, -1.0), Err(Error::Alpha(-1.0)));
        assert_eq!(ModelParams::new(1, 0.0), Err(Error::Dimension(1)));
        assert!(ModelParams::new(2, -1.0)
            .unwrap_err()
            .to_string()
            .contains("alpha > -1"));
    }

    #[test]
    fn lambda_1_is_twice_gamma_n() {
        for n in 2..12 {
            let p = ModelParams::new(n, 0.3).unwrap();
            assert!((p.lambda_1 - 2.0 * p.gamma_n).abs() <= 1e-15 * p.lambda_1);
        }
    }

    #[test]
    fn ramp_pieces() {
        assert_eq!(ramp(0.5), 0.0);
        assert_eq!(ramp(1.5), 0.5);
        assert_eq!(ramp(7.0), 1.0);
        let c = CutoffConfig::new(0.1, 0.2, 0.5).unwrap();
        assert_eq!(c.psi(5.0), 1.0);
        assert!((c.psi(15.0) - 0.5).abs() < 1e-15);
        assert_eq!(c.psi(25.0), 0.0);
        assert_eq!(c.phi(0.1), 0.0);
        assert_eq!(CutoffConfig::default().phi(1e-9), 1.0);
    }
}
