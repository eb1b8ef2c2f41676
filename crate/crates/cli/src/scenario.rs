//! Scenario documents: a single JSON file, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use yamabe_core::flow::DEFAULT_CHECKPOINTS;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub mode: Mode,
    pub r_max: f64,
    pub h: f64,
    /// Exhaustion radii; defaults to `(r_max/4, r_max/2, r_max)`.
    #[serde(default)]
    pub ladder: Vec<f64>,
    /// Radius of the compact ball used to compare domains; defaults to
    /// `min(5, r_1/2)` rounded to a grid node.
    #[serde(default)]
    pub compact_radius: Option<f64>,
    pub profile: Profile,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub dt_policy: DtPolicySpec,
    /// Uniform time grid for the log-integral quadrature.
    #[serde(default = "default_ledger_dt")]
    pub ledger_dt: f64,
    /// Half-width of the centred triplets used for time derivatives; defaults
    /// to `min(1e-4, h²/(8n(n-1)))`, a quarter of the fastest grid time scale.
    #[serde(default)]
    pub triplet_dt: Option<f64>,
    /// Time of the `τR(τ) ≥ √t R(√t)` comparison; defaults to 4 when `t_end ≥ 4`.
    #[serde(default)]
    pub compare_at: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub diagnostics: Toggles,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub liyau_samples: usize,
    /// Accepted steps allowed per domain. Semi-implicit runs default to 5 times
    /// the steps the nominal time step needs; explicit runs, whose CFL step
    /// follows the solution, are unbounded by default. Running out is reported
    /// like a degeneracy.
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Directory relative paths in the scenario are resolved against.
    #[serde(skip)]
    pub origin: Option<PathBuf>,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_t_end() -> f64 {
    5.0
}
fn default_checkpoints() -> Vec<f64> {
    DEFAULT_CHECKPOINTS.to_vec()
}
fn default_ledger_dt() -> f64 {
    0.01
}
fn default_samples() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    /// Radially symmetric grid in `n` dimensions; the flow always runs here.
    #[default]
    Radial,
    /// Adds a 3-D box cross-check of curvature and Ricci to the hypothesis report.
    Box { half_width: f64, h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Preset(PresetName),
    /// Columns `r, factor, potential`, linearly interpolated onto the grid.
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Flat,
    SphereFactor,
    ManufacturedW,
    SchrodingerPair,
    DivergentAverage,
    MisSigned,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::Flat,
        PresetName::SphereFactor,
        PresetName::ManufacturedW,
        PresetName::SchrodingerPair,
        PresetName::DivergentAverage,
        PresetName::MisSigned,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Flat => "flat",
            PresetName::SphereFactor => "sphere_factor",
            PresetName::ManufacturedW => "manufactured_w",
            PresetName::SchrodingerPair => "schrodinger_pair",
            PresetName::DivergentAverage => "divergent_average",
            PresetName::MisSigned => "mis_signed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicySpec {
    /// Forward Euler at `safety` times the diffusive limit.
    Explicit { safety: f64 },
    /// Fixed step of the Crank–Nicolson scheme.
    SemiImplicit { dt: f64 },
}

impl Default for DtPolicySpec {
    fn default() -> Self {
        DtPolicySpec::SemiImplicit { dt: 1e-3 }
    }
}

/// `a h² + b δ` thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaled {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Harnack, `tR` and decay checks; `δ` is the time step.
    pub curvature: Scaled,
    /// Evolution residual; `δ` is the time step.
    pub residual: Scaled,
    /// Log-integral identity and ledger; `δ` is the ledger spacing.
    pub log_identity: Scaled,
    /// Smallest Ricci eigenvalue still counted as nonnegative.
    pub ricci: f64,
    /// Relative tail tolerance of the Poisson and average integrals.
    pub tail: f64,
    /// Stationary residual gate for the comparison function, times `h²`.
    pub schrodinger_gate: f64,
    /// Relative mismatch between the potential and the base curvature
    /// below which the base counts as conformally consistent.
    pub consistency: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            curvature: Scaled { a: 5.0, b: 5.0 },
            residual: Scaled { a: 400.0, b: 5.0 },
            log_identity: Scaled { a: 5.0, b: 0.5 },
            ricci: 1e-6,
            tail: 1e-3,
            schrodinger_gate: 10.0,
            consistency: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    pub harnack: bool,
    pub traced_harnack: bool,
    pub monotone: bool,
    pub decay: bool,
    pub residual: bool,
    pub schrodinger: bool,
    pub liyau: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            harnack: true,
            traced_harnack: true,
            monotone: true,
            decay: true,
            residual: true,
            schrodinger: true,
            liyau: true,
        }
    }
}

impl Scenario {
    /// Baseline scenario for a preset: `n = 3`, `h = 0.02`, `r_max = 40`, `t_end = 5`.
    /// The round sphere dies at `t = 1/6`. On a ball the factor collapses
    /// there and then relaxes to the flat state the boundary data allows, so
    /// the sphere preset stops at `t = 0.5`.
    pub fn preset(name: PresetName) -> Self {
        let (t_end, checkpoints) = match name {
            PresetName::SphereFactor => (0.5, vec![0.01, 0.05, 0.1, 0.5]),
            _ => (default_t_end(), default_checkpoints()),
        };
        Scenario {
            name: name.as_str().into(),
            n: 3,
            mode: Mode::Radial,
            r_max: 40.0,
            h: 0.02,
            ladder: vec![10.0, 20.0, 40.0],
            compact_radius: Some(5.0),
            profile: Profile::Preset(name),
            t_end,
            checkpoints,
            dt_policy: DtPolicySpec::default(),
            ledger_dt: default_ledger_dt(),
            triplet_dt: None,
            compare_at: None,
            tolerances: Tolerances::default(),
            diagnostics: Toggles::default(),
            output_dir: None,
            seed: 0,
            liyau_samples: default_samples(),
            max_steps: None,
            origin: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            LabError::config(
                if path.is_empty() { ".".into() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        sc.check()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut sc = Self::from_json(&text)?;
        sc.origin = path.parent().map(Path::to_path_buf);
        Ok(sc)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.origin {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn ladder(&self) -> Vec<f64> {
        if self.ladder.is_empty() {
            vec![
                snap(self.r_max / 4.0, self.h),
                snap(self.r_max / 2.0, self.h),
                self.r_max,
            ]
        } else {
            self.ladder.clone()
        }
    }

    pub fn compact_radius(&self) -> f64 {
        self.compact_radius
            .unwrap_or_else(|| snap(5f64.min(self.ladder()[0] / 2.0), self.h))
    }

    pub fn compare_at(&self) -> Option<f64> {
        self.compare_at.or((self.t_end >= 4.0).then_some(4.0))
    }

    pub fn triplet_dt(&self) -> f64 {
        self.triplet_dt.unwrap_or_else(|| {
            let n = self.n as f64;
            1e-4f64.min(self.h * self.h / (8.0 * n * (n - 1.0)))
        })
    }

    /// Time step used in tolerance formulas.
    pub fn nominal_dt(&self) -> f64 {
        match self.dt_policy {
            DtPolicySpec::SemiImplicit { dt } => dt,
            DtPolicySpec::Explicit { safety } => {
                let n = self.n as f64;
                safety * self.h * self.h / (2.0 * n * (n - 1.0))
            }
        }
    }

    /// Range and consistency checks that serde cannot express.
    pub fn check(&self) -> Result<()> {
        let positive = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LabError::config(path, format!("must be positive and finite, got {v}")))
            }
        };
        if self.n < 3 {
            return Err(LabError::config(
                "n",
                format!("dimension must be at least 3, got {}", self.n),
            ));
        }
        positive("r_max", self.r_max)?;
        positive("h", self.h)?;
        if self.r_max < 10.0 * self.h {
            return Err(LabError::config("r_max", "must be at least 10 h"));
        }
        if let Mode::Box { half_width, h } = self.mode {
            positive("mode.box.half_width", half_width)?;
            positive("mode.box.h", h)?;
            if self.n != 3 {
                return Err(LabError::config("mode", "box mode needs n = 3"));
            }
        }
        let ladder = self.ladder();
        for (i, &r) in ladder.iter().enumerate() {
            let path = format!("ladder[{i}]");
            positive(&path, r)?;
            if r > self.r_max * (1.0 + 1e-12) {
                return Err(LabError::config(path, format!("{r} exceeds r_max")));
            }
            if ((r / self.h).round() * self.h - r).abs() > 1e-9 * r.max(1.0) {
                return Err(LabError::config(path, format!("{r} is not a grid node")));
            }
            if i > 0 && r <= ladder[i - 1] {
                return Err(LabError::config(path, "radii must increase strictly"));
            }
        }
        let c = self.compact_radius();
        positive("compact_radius", c)?;
        if c > ladder[0] {
            return Err(LabError::config(
                "compact_radius",
                "must not exceed the first ladder radius",
            ));
        }
        positive("t_end", self.t_end)?;
        for (i, &c) in self.checkpoints.iter().enumerate() {
            let path = format!("checkpoints[{i}]");
            positive(&path, c)?;
            if c > self.t_end * (1.0 + 1e-12) {
                return Err(LabError::config(path, format!("{c} exceeds t_end")));
            }
        }
        match self.dt_policy {
            DtPolicySpec::Explicit { safety } => {
                positive("dt_policy.safety", safety)?;
                if safety > 1.0 {
                    return Err(LabError::config("dt_policy.safety", "must not exceed 1"));
                }
            }
            DtPolicySpec::SemiImplicit { dt } => positive("dt_policy.dt", dt)?,
        }
        positive("ledger_dt", self.ledger_dt)?;
        positive("triplet_dt", self.triplet_dt())?;
        if let Some(&first) = self.checkpoints.iter().min_by(|a, b| a.total_cmp(b)) {
            if self.triplet_dt() >= first {
                return Err(LabError::config("triplet_dt", "must be below the first checkpoint"));
            }
        }
        if let Some(t) = self.compare_at {
            positive("compare_at", t)?;
            if t > self.t_end || t < 1.0 {
                return Err(LabError::config("compare_at", "must lie in [1, t_end]"));
            }
        }
        let tol = &self.tolerances;
        for (path, v) in [
            ("tolerances.curvature.a", tol.curvature.a),
            ("tolerances.curvature.b", tol.curvature.b),
            ("tolerances.residual.a", tol.residual.a),
            ("tolerances.residual.b", tol.residual.b),
            ("tolerances.log_identity.a", tol.log_identity.a),
            ("tolerances.log_identity.b", tol.log_identity.b),
            ("tolerances.ricci", tol.ricci),
            ("tolerances.schrodinger_gate", tol.schrodinger_gate),
            ("tolerances.consistency", tol.consistency),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LabError::config(path, format!("must be nonnegative, got {v}")));
            }
        }
        positive("tolerances.tail", tol.tail)?;
        if self.max_steps == Some(0) {
            return Err(LabError::config("max_steps", "must be positive"));
        }
        if self.liyau_samples == 0 && self.diagnostics.liyau {
            return Err(LabError::config(
                "liyau_samples",
                "must be positive when the check is on",
            ));
        }
        Ok(())
    }
}

fn snap(r: f64, h: f64) -> f64 {
    (r / h).round() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let sc = Scenario::from_json(r#"{"n": 3, "r_max": 8, "h": 0.1, "profile": {"preset": "flat"}}"#).unwrap();
        assert_eq!(sc.t_end, 5.0);
        assert_eq!(sc.ladder(), vec![2.0, 4.0, 8.0]);
        assert_eq!(sc.compact_radius(), 1.0);
        assert_eq!(sc.compare_at(), Some(4.0));
        assert_eq!(sc.triplet_dt(), 1e-4);
        assert_eq!(Scenario::preset(PresetName::Flat).triplet_dt(), 0.02 * 0.02 / 48.0);
        assert_eq!(sc.dt_policy, DtPolicySpec::SemiImplicit { dt: 1e-3 });
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = Scenario::from_json(
            r#"{"n": 3, "r_max": 8, "h": 0.1, "profile": {"preset": "flat"}, "tolerances": {"curvatur": 1}}"#,
        )
        .unwrap_err();
        match err {
            LabError::Config { path, message } => {
                assert_eq!(path, "tolerances.curvatur");
                assert!(message.contains("curvatur"), "{message}");
            }
            e => panic!("{e}"),
        }
        let err = Scenario::from_json(r#"{"n": 3, "r_max": 8, "h": 0.1, "profile": {"preset": "torus"}}"#).unwrap_err();
        assert!(
            matches!(err, LabError::Config { ref path, .. } if path == "profile.preset"),
            "{err}"
        );
    }

    #[test]
    fn ranges_are_checked() {
        let base = Scenario::preset(PresetName::Flat);
        let cases: Vec<(&str, Box<dyn Fn(&mut Scenario)>)> = vec![
            ("h", Box::new(|s| s.h = -1.0)),
            ("n", Box::new(|s| s.n = 2)),
            ("ladder[1]", Box::new(|s| s.ladder = vec![10.0, 10.0])),
            ("ladder[0]", Box::new(|s| s.ladder = vec![10.01])),
            ("checkpoints[0]", Box::new(|s| s.checkpoints = vec![6.0])),
            (
                "dt_policy.safety",
                Box::new(|s| s.dt_policy = DtPolicySpec::Explicit { safety: 2.0 }),
            ),
            ("triplet_dt", Box::new(|s| s.triplet_dt = Some(0.5))),
            ("compact_radius", Box::new(|s| s.compact_radius = Some(11.0))),
            ("tolerances.ricci", Box::new(|s| s.tolerances.ricci = f64::NAN)),
        ];
        for (path, edit) in cases {
            let mut s = base.clone();
            edit(&mut s);
            match s.check() {
                Err(LabError::Config { path: p, .. }) => assert_eq!(p, path),
                other => panic!("{path}: {other:?}"),
            }
        }
        assert!(base.check().is_ok());
    }

    #[test]
    fn round_trip() {
        for p in PresetName::ALL {
            let sc = Scenario::preset(p);
            let text = serde_json::to_string(&sc).unwrap();
            assert_eq!(Scenario::from_json(&text).unwrap(), sc);
            assert_eq!(PresetName::parse(p.as_str()), Some(p));
        }
    }
}
