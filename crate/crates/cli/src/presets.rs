//! Named initial data. Every preset is a base factor `U₀`, a potential `R₀`
//! and optionally a stationary comparison function `v`.

use std::path::Path;

use yamabe_core::geometry::{coupling, scalar_curvature, ConformalMetric, Domain, ScalarField};

use crate::error::{LabError, Result};
use crate::scenario::{PresetName, Profile, Scenario};

pub fn describe(p: PresetName) -> &'static str {
    match p {
        PresetName::Flat => "flat base, R0 = 0; every quantity stays trivial",
        PresetName::SphereFactor => "stereographic round-sphere factor, R0 = its computed curvature",
        PresetName::ManufacturedW => "flat base, R0 chosen so the Poisson potential is (1+r²)^(-1/2)",
        PresetName::SchrodingerPair => "flat base with a stationary solution v = (2 - (1+r²)^(-1/2))/2",
        PresetName::DivergentAverage => "flat base, c_n R0 = (1+r)^(-2); the average condition fails",
        PresetName::MisSigned => "manufactured potential times (1 - r²/4), negative beyond r = 2",
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub base: ConformalMetric,
    pub potential: ScalarField,
    pub comparison: Option<ScalarField>,
}

/// `w = (1+r²)^{-1/2}` and `-Δw` in `n` flat dimensions.
fn manufactured_w(r: f64) -> f64 {
    (1.0 + r * r).powf(-0.5)
}

fn minus_lap_w(n: f64, r: f64) -> f64 {
    (n + (n - 3.0) * r * r) * (1.0 + r * r).powf(-2.5)
}

/// Builds the model of the scenario's profile on `domain`.
pub fn build_model(sc: &Scenario, domain: Domain) -> Result<Model> {
    let n = domain.dim() as f64;
    let cn = coupling(domain.dim());
    let flat = || ConformalMetric::flat(domain);
    let radial = |f: &dyn Fn(f64) -> f64| ScalarField::from_radial_fn(domain, f);
    let model = match &sc.profile {
        Profile::Preset(p) => match p {
            PresetName::Flat => Model {
                base: flat(),
                potential: ScalarField::constant(domain, 0.0),
                comparison: None,
            },
            PresetName::SphereFactor => {
                let e = (n - 2.0) / 2.0;
                let base = ConformalMetric::new(radial(&|r| (2.0 / (1.0 + r * r)).powf(e))?)?;
                let potential = scalar_curvature(&base, &ScalarField::constant(domain, 0.0))?;
                Model {
                    base,
                    potential,
                    comparison: None,
                }
            }
            PresetName::ManufacturedW => Model {
                base: flat(),
                potential: radial(&|r| minus_lap_w(n, r) / cn)?,
                comparison: None,
            },
            PresetName::SchrodingerPair => Model {
                base: flat(),
                potential: radial(&|r| minus_lap_w(n, r) / (cn * (2.0 - manufactured_w(r))))?,
                comparison: Some(radial(&|r| 0.5 * (2.0 - manufactured_w(r)))?),
            },
            PresetName::DivergentAverage => Model {
                base: flat(),
                potential: radial(&|r| (1.0 + r).powi(-2) / cn)?,
                comparison: None,
            },
            PresetName::MisSigned => Model {
                base: flat(),
                potential: radial(&|r| minus_lap_w(n, r) / cn * (1.0 - 0.25 * r * r))?,
                comparison: None,
            },
        },
        Profile::Csv { path } => {
            let path = sc.resolve(path);
            let table = read_profile(&path)?;
            let reach = if domain.is_radial() {
                domain.r_max()
            } else {
                domain.r_max() * 3f64.sqrt()
            };
            let last = table.last().map(|row| row[0]).unwrap_or(0.0);
            if last < reach * (1.0 - 1e-12) {
                return Err(LabError::config(
                    "profile.csv.path",
                    format!("table ends at r = {last}, grid needs {reach}"),
                ));
            }
            Model {
                base: ConformalMetric::new(radial(&|r| interpolate(&table, r, 1))?)?,
                potential: radial(&|r| interpolate(&table, r, 2))?,
                comparison: None,
            }
        }
    };
    Ok(model)
}

/// Rows `[r, factor, potential]`, increasing in `r` from 0.
fn read_profile(path: &Path) -> Result<Vec<[f64; 3]>> {
    let bad = |m: String| LabError::config("profile.csv.path", format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if headers != ["r", "factor", "potential"] {
        return Err(bad(format!(
            "expected columns r,factor,potential, got {}",
            headers.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = [0.0; 3];
        for (k, v) in row.iter_mut().enumerate() {
            *v = rec
                .get(k)
                .and_then(|s| s.trim().parse().ok())
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| bad(format!("row {} column {k} is not a finite number", i + 1)))?;
        }
        rows.push(row);
    }
    if rows.len() < 2 || rows[0][0] != 0.0 {
        return Err(bad("need at least two rows starting at r = 0".into()));
    }
    if rows.windows(2).any(|w| w[1][0] <= w[0][0]) {
        return Err(bad("r must increase strictly".into()));
    }
    if rows.iter().any(|r| r[1] <= 0.0) {
        return Err(bad("factor must be positive".into()));
    }
    Ok(rows)
}

fn interpolate(table: &[[f64; 3]], r: f64, col: usize) -> f64 {
    let i = table.partition_point(|row| row[0] <= r).clamp(1, table.len() - 1);
    let (a, b) = (table[i - 1], table[i]);
    let s = ((r - a[0]) / (b[0] - a[0])).clamp(0.0, 1.0);
    a[col] + s * (b[col] - a[col])
}

#[cfg(test)]
mod tests {
    use super::*;
    use yamabe_core::geometry::laplacian_flat;

    fn model(p: PresetName) -> Model {
        let sc = Scenario::preset(p);
        build_model(&sc, Domain::radial(3, 10.0, 0.01).unwrap()).unwrap()
    }

    #[test]
    fn manufactured_potential_closed_form() {
        let m = model(PresetName::ManufacturedW);
        assert!((m.potential.values()[0] - 24.0).abs() < 1e-12);
        let d = m.potential.domain();
        let r = d.radius(100);
        assert!((m.potential.values()[100] - 24.0 * (1.0 + r * r).powf(-2.5)).abs() < 1e-12);
    }

    #[test]
    fn general_dimension_source() {
        // -Δw against the discrete Laplacian in n = 5.
        let d = Domain::radial(5, 6.0, 0.005).unwrap();
        let w = ScalarField::from_radial_fn(d, manufactured_w).unwrap();
        let lap = laplacian_flat(&w).unwrap();
        for i in [0, 40, 300, 900] {
            let r = d.radius(i);
            assert!((-lap.values()[i] - minus_lap_w(5.0, r)).abs() < 1e-3, "{r}");
        }
    }

    #[test]
    fn schrodinger_pair_is_stationary() {
        let m = model(PresetName::SchrodingerPair);
        let v = m.comparison.as_ref().unwrap();
        let res = yamabe_core::diagnostics::schrodinger_residual(v, &m.base, &m.potential).unwrap();
        assert!(res < 10.0 * 1e-4, "{res}");
        assert!(v.min() >= 0.5 - 1e-15 && v.max() < 1.0);
    }

    #[test]
    fn sphere_potential_is_six() {
        let m = model(PresetName::SphereFactor);
        let interior = &m.potential.values()[..m.potential.len() - 1];
        assert!(interior.iter().all(|v| (v - 6.0).abs() < 1e-2));
    }

    #[test]
    fn mis_signed_changes_sign() {
        let m = model(PresetName::MisSigned);
        assert!(m.potential.min() < 0.0 && m.potential.max() > 0.0);
    }

    #[test]
    fn csv_profile_interpolates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut text = String::from("r,factor,potential\n");
        for i in 0..=120 {
            let r = i as f64 * 0.1;
            text.push_str(&format!("{r},1,{}\n", 2.0 * r));
        }
        std::fs::write(&path, text).unwrap();
        let mut sc = Scenario::preset(PresetName::Flat);
        sc.profile = Profile::Csv { path: "p.csv".into() };
        sc.origin = Some(dir.path().to_path_buf());
        let m = build_model(&sc, Domain::radial(3, 10.0, 0.05).unwrap()).unwrap();
        assert!((m.potential.values()[11] - 1.1).abs() < 1e-12);
        assert!(m.base.factor().values().iter().all(|&v| v == 1.0));

        let short = build_model(&sc, Domain::radial(3, 20.0, 0.05).unwrap()).unwrap_err();
        assert!(matches!(short, LabError::Config { .. }));
        std::fs::write(&path, "r,u,potential\n0,1,0\n").unwrap();
        assert!(build_model(&sc, Domain::radial(3, 10.0, 0.05).unwrap()).is_err());
    }
}
