//! The family of curvature factors `Q(r)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{CutoffConfig, ModelParams};

/// Integrable radial perturbations `f(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Decay {
    /// `amp · e^{-rate r²}`
    Gaussian { amp: f64, rate: f64 },
    /// `amp · e^{-rate r}`
    Exponential { amp: f64, rate: f64 },
    /// `amp · r` on `[0,1)`, `amp · (2 - r)` on `[1,2)`, zero beyond.
    Hat { amp: f64 },
}

impl Decay {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Decay::Gaussian { amp, rate } => amp * (-rate * r * r).exp(),
            Decay::Exponential { amp, rate } => amp * (-rate * r).exp(),
            Decay::Hat { amp } => amp * (1.0 - (r - 1.0).abs()).max(0.0),
        }
    }

    pub fn amp(&self) -> f64 {
        match *self {
            Decay::Gaussian { amp, .. } | Decay::Exponential { amp, .. } | Decay::Hat { amp } => amp,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.amp().is_finite() {
            return Err(invalid("amp", "must be finite"));
        }
        match *self {
            Decay::Gaussian { rate, .. } | Decay::Exponential { rate, .. } if !(rate > 0.0 && rate.is_finite()) => {
                Err(invalid("rate", format!("must be positive, got {rate}")))
            }
            _ => Ok(()),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Decay::Hat { .. } => vec![1.0, 2.0],
            _ => Vec::new(),
        }
    }
}

/// Curvature factor of the equation `(-Δ)^{n/2} u = |x|^{nα} Q e^{nu}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QProfile {
    Constant { c: f64 },
    /// `c0 + c1 r^p + bump(r)`
    PowerSum {
        c0: f64,
        c1: f64,
        p: f64,
        #[serde(default)]
        bump: Option<Decay>,
    },
    /// `1 + r^{-nα}`
    InversePower,
    /// `1 + f(r)`
    OnePlusL1 { f: Decay },
    /// `(r-1)(2-r)` on `(1,2)`, zero elsewhere.
    Tent,
    /// 1 off the annulus `1 ≤ r < 2`, rising linearly with slope `2k` to
    /// `k + 1` at `r = 3/2` and back.
    PiecewiseLinearFamily { k: f64 },
    /// `1 + e^{-np u(0)} r^{nα} φ_δ(r)`, with `p` and `δ` taken from the
    /// cutoff configuration. This factor carries its own weight: the
    /// equation it enters has no separate `|x|^{nα}`.
    SelfScaled,
    /// Piecewise-linear interpolation of samples, constant outside.
    Tabulated { r: Vec<f64>, q: Vec<f64> },
}

/// One term `coef · r^power` of the large-`r` expansion of the density
/// prefactor `a(r) + b(r) r^{nα}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTerm {
    pub coef: f64,
    pub power: f64,
}

impl QProfile {
    pub fn one() -> Self {
        QProfile::Constant { c: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QProfile::Constant { c } if !c.is_finite() => Err(invalid("c", "must be finite")),
            QProfile::PowerSum { c0, c1, p, bump } => {
                if !(c0.is_finite() && c1.is_finite()) {
                    return Err(invalid("c0/c1", "must be finite"));
                }
                if !(*p > 0.0 && p.is_finite()) {
                    return Err(invalid("p", format!("must be positive, got {p}")));
                }
                bump.as_ref().map_or(Ok(()), Decay::validate)
            }
            QProfile::OnePlusL1 { f } => f.validate(),
            QProfile::PiecewiseLinearFamily { k } if !k.is_finite() => Err(invalid("k", "must be finite")),
            QProfile::Tabulated { r, q } => {
                if r.len() != q.len() {
                    return Err(Error::Shape {
                        expected: r.len(),
                        got: q.len(),
                    });
                }
                if r.len() < 2 {
                    return Err(invalid("r", "need at least two samples"));
                }
                if r.windows(2).any(|w| !(w[0] < w[1])) || r[0] < 0.0 {
                    return Err(invalid("r", "samples must be nonnegative and strictly increasing"));
                }
                if r.iter().chain(q).any(|v| !v.is_finite()) {
                    return Err(invalid("q", "samples must be finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether the factor already includes its singular weight.
    pub fn self_weighted(&self) -> bool {
        matches!(self, QProfile::SelfScaled)
    }

    fn base(&self, r: f64, u0: f64, cutoffs: &CutoffConfig, params: &ModelParams) -> f64 {
        match self {
            QProfile::Constant { c } => *c,
            QProfile::PowerSum { c0, c1, p, bump } => {
                c0 + c1 * r.powf(*p) + bump.map_or(0.0, |b| b.eval(r))
            }
            QProfile::InversePower => 1.0 + r.powf(-params.weight_exponent()),
            QProfile::OnePlusL1 { f } => 1.0 + f.eval(r),
            QProfile::Tent => {
                if r > 1.0 && r < 2.0 {
                    (r - 1.0) * (2.0 - r)
                } else {
                    0.0
                }
            }
            QProfile::PiecewiseLinearFamily { k } => {
                if (1.0..1.5).contains(&r) {
                    2.0 * k * (r - 1.0) + 1.0
                } else if (1.5..2.0).contains(&r) {
                    -2.0 * k * (r - 2.0) + 1.0
                } else {
                    1.0
                }
            }
            QProfile::SelfScaled => {
                1.0 + self_scale(u0, cutoffs, params) * r.powf(params.weight_exponent()) * cutoffs.phi(r)
            }
            QProfile::Tabulated { r: rs, q } => interpolate(rs, q, r),
        }
    }

    /// Density prefactors `(a, b)` with `|x|^{nα} Q_eff e^{nu} = (a + b r^{nα}) e^{nu}`
    /// (for the self-weighted kind, `Q_eff e^{nu}` itself).
    pub fn split(&self, r: f64, u0: f64, cutoffs: &CutoffConfig, params: &ModelParams) -> (f64, f64) {
        let psi = cutoffs.psi(r);
        match self {
            QProfile::InversePower => (psi, psi),
            QProfile::SelfScaled => (psi, psi * self_scale(u0, cutoffs, params) * cutoffs.phi(r)),
            _ => (0.0, psi * self.base(r, u0, cutoffs, params)),
        }
    }

    /// Leading large-`r` behaviour of `a + b r^{nα}` for `r` beyond every
    /// breakpoint. Empty when the density has compact support or decays
    /// faster than any power.
    pub fn tail_terms(&self, u0: f64, cutoffs: &CutoffConfig, params: &ModelParams) -> Vec<TailTerm> {
        if cutoffs.eps > 0.0 {
            return Vec::new();
        }
        let w = params.weight_exponent();
        let t = |coef: f64, power: f64| TailTerm { coef, power };
        match self {
            QProfile::Constant { c } => vec![t(*c, w)],
            QProfile::PowerSum { c0, c1, p, .. } => vec![t(*c0, w), t(*c1, w + p)],
            QProfile::InversePower => vec![t(1.0, 0.0), t(1.0, w)],
            QProfile::OnePlusL1 { .. } | QProfile::PiecewiseLinearFamily { .. } => vec![t(1.0, w)],
            QProfile::Tent => Vec::new(),
            QProfile::SelfScaled => vec![t(1.0, 0.0), t(self_scale(u0, cutoffs, params), w)],
            QProfile::Tabulated { q, .. } => vec![t(*q.last().expect("validated"), w)],
        }
        .into_iter()
        .filter(|t| t.coef != 0.0)
        .collect()
    }

    /// Radii where the profile or its cutoffs have kinks.
    pub fn breakpoints(&self, cutoffs: &CutoffConfig) -> Vec<f64> {
        let mut out = match self {
            QProfile::Tent => vec![1.0, 2.0],
            QProfile::PiecewiseLinearFamily { .. } => vec![1.0, 1.5, 2.0],
            QProfile::OnePlusL1 { f } => f.breakpoints(),
            QProfile::PowerSum { bump: Some(b), .. } => b.breakpoints(),
            QProfile::Tabulated { r, .. } => r.clone(),
            QProfile::SelfScaled if cutoffs.delta > 0.0 => vec![cutoffs.delta, 2.0 * cutoffs.delta],
            _ => Vec::new(),
        };
        if cutoffs.eps > 0.0 {
            out.extend([1.0 / cutoffs.eps, 2.0 / cutoffs.eps]);
        }
        out.retain(|r| *r > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// True when `Q_eff ≤ 1` everywhere follows from the parameters.
    pub fn certifies_le_one(&self) -> bool {
        match self {
            QProfile::Constant { c } => *c <= 1.0,
            QProfile::PowerSum { c0, c1, bump, .. } => {
                *c0 <= 1.0 && *c1 <= 0.0 && bump.is_none_or(|b| b.amp() <= 0.0)
            }
            QProfile::InversePower | QProfile::SelfScaled => false,
            QProfile::OnePlusL1 { f } => f.amp() <= 0.0,
            QProfile::Tent => true,
            QProfile::PiecewiseLinearFamily { k } => *k <= 0.0,
            QProfile::Tabulated { q, .. } => q.iter().all(|v| *v <= 1.0),
        }
    }

    /// True when `Q_eff ≥ 1` everywhere follows from the parameters.
    pub fn certifies_ge_one(&self, cutoffs: &CutoffConfig) -> bool {
        if cutoffs.eps > 0.0 {
            return false;
        }
        match self {
            QProfile::Constant { c } => *c >= 1.0,
            QProfile::PowerSum { c0, c1, bump, .. } => {
                *c0 >= 1.0 && *c1 >= 0.0 && bump.is_none_or(|b| b.amp() >= 0.0)
            }
            QProfile::InversePower | QProfile::SelfScaled => true,
            QProfile::OnePlusL1 { f } => f.amp() >= 0.0,
            QProfile::Tent => false,
            QProfile::PiecewiseLinearFamily { k } => *k >= 0.0,
            QProfile::Tabulated { q, .. } => q.iter().all(|v| *v >= 1.0),
        }
    }

    /// `Q_eff ≡ 1`.
    pub fn is_unit(&self, cutoffs: &CutoffConfig) -> bool {
        self.certifies_le_one() && self.certifies_ge_one(cutoffs)
    }

    /// True when the effective density is nonnegative everywhere.
    pub fn nonnegative(&self) -> bool {
        match self {
            QProfile::Constant { c } => *c >= 0.0,
            QProfile::PowerSum { c0, c1, bump, .. } => {
                *c0 + bump.map_or(0.0, |b| b.amp().min(0.0)) >= 0.0 && *c1 >= 0.0
            }
            QProfile::InversePower | QProfile::SelfScaled | QProfile::Tent => true,
            QProfile::OnePlusL1 { f } => f.amp() >= -1.0,
            QProfile::PiecewiseLinearFamily { k } => *k >= -1.0,
            QProfile::Tabulated { q, .. } => q.iter().all(|v| *v >= 0.0),
        }
    }
}

fn self_scale(u0: f64, cutoffs: &CutoffConfig, params: &ModelParams) -> f64 {
    (-params.nf() * cutoffs.p * u0).exp()
}

fn interpolate(rs: &[f64], q: &[f64], r: f64) -> f64 {
    let j = rs.partition_point(|x| *x <= r);
    if j == 0 {
        return q[0];
    }
    if j == rs.len() {
        return q[j - 1];
    }
    let t = (r - rs[j - 1]) / (rs[j] - rs[j - 1]);
    q[j - 1] + t * (q[j] - q[j - 1])
}

/// Effective curvature factor at `r > 0`, including `ψ_ε` when configured.
/// `u0` only matters for [`QProfile::SelfScaled`].
pub fn eval_q(
    profile: &QProfile,
    r: f64,
    u0: f64,
    cutoffs: &CutoffConfig,
    params: &ModelParams,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Precondition(format!("eval_q needs r > 0, got {r}")));
    }
    Ok(cutoffs.psi(r) * profile.base(r, u0, cutoffs, params))
}

/// The hat-plus-one profile `1 + r` on `[0,1)`, `3 - r` on `[1,2)`, 1 beyond.
pub fn hat_profile(amp: f64) -> QProfile {
    QProfile::OnePlusL1 {
        f: Decay::Hat { amp },
    }
}

/// `1 + amp e^{-r²}`.
pub fn gaussian_profile(amp: f64) -> QProfile {
    QProfile::OnePlusL1 {
        f: Decay::Gaussian { amp, rate: 1.0 },
    }
}
