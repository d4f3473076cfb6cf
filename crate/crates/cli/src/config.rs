//! Scenario configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use qcurv_core::{CutoffConfig, ModelParams, Normalization, QProfile, RadialGrid, RemarkCase, Schedule, SolverOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Solve,
    BolScan,
    WindowScan,
    LambdaRhoCurve,
    Remark62,
    PohozaevCheck,
    TotalcurvBound,
    CrossValidate,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Solve => "solve",
            Scenario::BolScan => "bol-scan",
            Scenario::WindowScan => "window-scan",
            Scenario::LambdaRhoCurve => "lambda-rho-curve",
            Scenario::Remark62 => "remark62",
            Scenario::PohozaevCheck => "pohozaev-check",
            Scenario::TotalcurvBound => "totalcurv-bound",
            Scenario::CrossValidate => "cross-validate",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Must match the subcommand when present.
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub seed: u64,
    pub params: ParamsSpec,
    #[serde(default)]
    pub grid: GridSpec,
    pub profile: Option<QProfile>,
    #[serde(default)]
    pub profiles: Vec<NamedProfile>,
    pub normalization: Option<Normalization>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub assert: AssertSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub n: u32,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub m: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Optional kernel cache file, read when it matches and written otherwise.
    pub cache: Option<PathBuf>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            m: 2048,
            r_min: 1e-7,
            r_max: 1e4,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedProfile {
    pub name: String,
    pub q: QProfile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub gaussian_eps: f64,
    /// Self-scaling exponent of the continuation problem.
    pub p: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            damping: d.damping,
            tol: d.tol,
            max_iter: d.max_iter,
            gaussian_eps: d.gaussian_eps,
            p: d.cutoffs.p,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomRange {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub rho: Vec<f64>,
    /// Extra origin values drawn uniformly with the config seed.
    pub random_rho: Option<RandomRange>,
    /// Overrides `params.alpha` for scans that sweep it.
    pub alphas: Vec<f64>,
    /// Prescribed `Λ*` as fractions of `Λ₁`.
    pub lambda_star_fracs: Vec<f64>,
    pub schedule: Option<Schedule>,
    pub case: Option<RemarkCase>,
    pub k: Vec<f64>,
    /// Outer radius of the shooting runs.
    pub r_max: Option<f64>,
    pub shoot_tol: Option<f64>,
    /// `M` in `(Q - M r^p)⁺ ∈ L¹`.
    pub m_coef: Option<f64>,
}

/// Assertions to evaluate. Every one is optional; a failed one makes the
/// run exit with status 2.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssertSpec {
    pub all_converged: Option<bool>,
    pub quantized_rel: Option<f64>,
    pub endpoint_rel: Option<f64>,
    pub bol_holds: Option<bool>,
    pub bol_strict_rel: Option<f64>,
    pub pohozaev_rel: Option<f64>,
    pub identity_rel: Option<f64>,
    pub window_consistent: Option<bool>,
    pub monotone_from: Option<f64>,
    pub growth_ratio: Option<f64>,
    pub interior_tol: Option<f64>,
    pub increasing: Option<bool>,
    pub uniform_cap: Option<bool>,
    pub spread_baseline: Option<f64>,
    pub enu_ratio: Option<f64>,
    pub sup_tol: Option<f64>,
    pub normality_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub report: String,
    pub table: String,
    pub profile: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            report: "report.json".into(),
            table: "table.csv".into(),
            profile: "profile.csv".into(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn model(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.params.n, self.params.alpha)?)
    }

    pub fn model_at(&self, alpha: f64) -> Result<ModelParams> {
        Ok(ModelParams::new(self.params.n, alpha)?)
    }

    pub fn grid_at(&self, alpha: f64) -> Result<RadialGrid> {
        let g = &self.grid;
        Ok(RadialGrid::new(g.m, g.r_min, g.r_max, alpha, self.params.n)?)
    }

    pub fn options(&self) -> Result<SolverOptions> {
        let s = &self.solver;
        let opts = SolverOptions {
            damping: s.damping,
            tol: s.tol,
            max_iter: s.max_iter,
            cutoffs: CutoffConfig::new(0.0, 0.0, s.p)?,
            gaussian_eps: s.gaussian_eps,
        };
        opts.validate()?;
        Ok(opts)
    }

    /// `scan.alphas`, or `params.alpha` alone.
    pub fn alphas(&self) -> Vec<f64> {
        if self.scan.alphas.is_empty() {
            vec![self.params.alpha]
        } else {
            self.scan.alphas.clone()
        }
    }

    /// `profiles`, or `profile` under the name "q".
    pub fn named_profiles(&self) -> Vec<NamedProfile> {
        if !self.profiles.is_empty() {
            return self.profiles.clone();
        }
        self.profile
            .iter()
            .map(|q| NamedProfile {
                name: "q".into(),
                q: q.clone(),
            })
            .collect()
    }

    /// Checks scenario-specific requirements before any compute.
    pub fn validate(&self, scenario: Scenario) -> Result<()> {
        if let Some(s) = self.scenario {
            ensure!(
                s == scenario,
                "config is for scenario '{}' but '{}' was requested",
                s.name(),
                scenario.name()
            );
        }
        for alpha in self.alphas() {
            self.model_at(alpha)?;
            self.grid_at(alpha)?;
        }
        self.options()?;
        for p in self.named_profiles() {
            p.q.validate().with_context(|| format!("profile '{}'", p.name))?;
        }
        if let Some(r) = self.scan.random_rho {
            ensure!(r.lo < r.hi && r.lo.is_finite() && r.hi.is_finite(), "scan.random_rho needs lo < hi");
        }
        let need_profile = || -> Result<()> {
            ensure!(self.profile.is_some(), "scenario '{}' needs [profile]", scenario.name());
            Ok(())
        };
        let need_profiles = || -> Result<()> {
            ensure!(
                !self.named_profiles().is_empty(),
                "scenario '{}' needs [profile] or [[profiles]]",
                scenario.name()
            );
            Ok(())
        };
        let need_rho = || -> Result<()> {
            ensure!(
                !self.scan.rho.is_empty() || self.scan.random_rho.is_some(),
                "scenario '{}' needs scan.rho or scan.random_rho",
                scenario.name()
            );
            Ok(())
        };
        let need_planar = || -> Result<()> {
            ensure!(self.params.n == 2, "scenario '{}' is two-dimensional", scenario.name());
            Ok(())
        };
        match scenario {
            Scenario::Solve => {
                need_profile()?;
                let norm = self.normalization.as_ref().context("scenario 'solve' needs [normalization]")?;
                norm.validate()?;
            }
            Scenario::BolScan | Scenario::PohozaevCheck => need_profiles()?,
            Scenario::LambdaRhoCurve => {
                need_profile()?;
                need_rho()?;
            }
            Scenario::WindowScan => {
                ensure!(!self.scan.lambda_star_fracs.is_empty(), "scenario 'window-scan' needs scan.lambda_star_fracs");
                if let Some(s) = &self.scan.schedule {
                    s.stages()?;
                }
            }
            Scenario::Remark62 => {
                need_planar()?;
                ensure!(self.scan.case.is_some(), "scenario 'remark62' needs scan.case");
                ensure!(!self.scan.k.is_empty(), "scenario 'remark62' needs scan.k");
            }
            Scenario::TotalcurvBound => {
                need_rho()?;
                let Some(QProfile::PowerSum { c1, p, .. }) = &self.profile else {
                    bail!("scenario 'totalcurv-bound' needs a power_sum [profile]");
                };
                ensure!(*c1 > 0.0 && *p > 0.0, "totalcurv-bound needs c1 > 0 and p > 0");
                let m = self.scan.m_coef.context("scenario 'totalcurv-bound' needs scan.m_coef")?;
                ensure!(m > 0.0, "scan.m_coef must be positive");
            }
            Scenario::CrossValidate => {
                need_planar()?;
                need_profiles()?;
            }
        }
        Ok(())
    }

    /// `scan.rho` followed by the seeded random draws.
    pub fn rho_values(&self) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut out = self.scan.rho.clone();
        if let Some(r) = self.scan.random_rho {
            let mut rng = rand::rngs::StdRng::seed_from_u64(self.seed);
            out.extend((0..r.count).map(|_| rng.gen_range(r.lo..r.hi)));
        }
        out
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization.unwrap_or(Normalization::FixedOrigin { rho: 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"
scenario = "solve"
[params]
n = 2
alpha = 0.0
[profile]
kind = "constant"
c = 1.0
[normalization]
mode = "fixed_origin"
rho = 0.0
"#;

    #[test]
    fn parses_minimal_solve() {
        let c = ScenarioConfig::from_toml(SOLVE).unwrap();
        c.validate(Scenario::Solve).unwrap();
        assert_eq!(c.grid.m, 2048);
        assert!(c.validate(Scenario::BolScan).is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = SOLVE.replace("alpha = 0.0", "alpha = 0.0\nbeta = 1.0");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
        let bad = SOLVE.replace("c = 1.0", "c = 1.0\nd = 2.0");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
        let bad = format!("{SOLVE}\n[extra]\nx = 1\n");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn missing_requirements_fail_before_compute() {
        let c = ScenarioConfig::from_toml(&SOLVE.replace("scenario = \"solve\"", "")).unwrap();
        let err = c.validate(Scenario::LambdaRhoCurve).unwrap_err();
        assert!(err.to_string().contains("scan.rho"), "{err}");
        assert!(c.validate(Scenario::Remark62).is_err());
        let c = ScenarioConfig::from_toml(&SOLVE.replace("alpha = 0.0", "alpha = -1.5")).unwrap();
        assert!(c.validate(Scenario::Solve).is_err());
    }

    #[test]
    fn seeded_draws_repeat() {
        let text = format!("{SOLVE}\nseed = 7\n[scan]\nrho = [1.0]\nrandom_rho = {{ count = 3, lo = -2.0, hi = 2.0 }}\n");
        // `seed` must sit before the first table.
        let text = text.replace("\nseed = 7\n", "\n").replacen("scenario", "seed = 7\nscenario", 1);
        let c = ScenarioConfig::from_toml(&text).unwrap();
        let a = c.rho_values();
        assert_eq!(a.len(), 4);
        assert_eq!(a, c.rho_values());
        assert!(a[1..].iter().all(|r| (-2.0..2.0).contains(r)));
    }
}
