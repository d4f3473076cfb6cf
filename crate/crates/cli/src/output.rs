//! CSV profiles and JSON reports.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use qcurv_core::{eval_q, CutoffConfig, ModelParams, QProfile, RadialField, RadialGrid};
use serde::{Deserialize, Serialize};

/// One row of a profile file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub r: f64,
    pub u: f64,
    /// `Q(r) r^{nα} e^{nu(r)}`
    pub density: f64,
    #[serde(rename = "Q")]
    pub q: f64,
}

/// Rows of a solved field in ascending `r`.
pub fn profile_rows(
    u: &RadialField,
    grid: &RadialGrid,
    profile: &QProfile,
    params: &ModelParams,
    cutoffs: &CutoffConfig,
) -> Result<Vec<ProfileRow>> {
    ensure!(!u.values.is_empty(), "refusing to write an empty field");
    ensure!(u.len() == grid.len(), "field has {} values for {} nodes", u.len(), grid.len());
    let nf = params.nf();
    let w = params.weight_exponent();
    grid.nodes()
        .iter()
        .zip(&u.values)
        .map(|(&r, &v)| {
            let q = eval_q(profile, r, u.u0, cutoffs, params)?;
            // The self-scaled factor already carries its weight.
            let weight = if profile.self_weighted() { 1.0 } else { r.powf(w) };
            Ok(ProfileRow {
                r,
                u: v,
                density: q * weight * (nf * v).exp(),
                q,
            })
        })
        .collect()
}

/// Writes `r,u,density,Q` with shortest round-trip floats.
pub fn write_profile(path: &Path, rows: &[ProfileRow]) -> Result<()> {
    ensure!(!rows.is_empty(), "refusing to write an empty profile");
    ensure!(rows.windows(2).all(|w| w[0].r < w[1].r), "profile rows must be in ascending r");
    write_csv(path, rows)
}

pub fn read_profile(path: &Path) -> Result<Vec<ProfileRow>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != ["r", "u", "density", "Q"] {
        bail!("{}: unexpected header {header:?}", path.display());
    }
    let rows = rd.deserialize().collect::<std::result::Result<Vec<ProfileRow>, _>>()?;
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let rows = vec![
            ProfileRow {
                r: 1e-7,
                u: 0.1 + 0.2,
                density: 1.0 / 3.0,
                q: 1.0,
            },
            ProfileRow {
                r: 2.5,
                u: -1e-300,
                density: 5e-324,
                q: std::f64::consts::PI,
            },
        ];
        write_profile(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("r,u,density,Q\n"), "{text}");
        assert_eq!(read_profile(&path).unwrap(), rows);
    }

    #[test]
    fn rejects_empty_and_unsorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        assert!(write_profile(&path, &[]).is_err());
        let row = ProfileRow {
            r: 1.0,
            u: 0.0,
            density: 0.0,
            q: 1.0,
        };
        assert!(write_profile(&path, &[row, row]).is_err());
    }
}
