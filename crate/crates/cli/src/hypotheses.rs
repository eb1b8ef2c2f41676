//! The hypothesis gate: nonnegative bounded Ricci, nonnegative potential,
//! the average condition and non-parabolicity. Failures make every
//! theorem-linked diagnostic report-only.

use serde::Serialize;
use yamabe_core::diagnostics::{outer_nodes, pinching_epsilon_with};
use yamabe_core::geometry::{
    coupling, ricci_conformal, scalar_curvature, Domain, RadialMeasure, RicciDiagonal, ScalarField,
};
use yamabe_core::poisson::{average_integral_with, volume_growth_integral_with, AverageConditionReport};

use crate::error::Result;
use crate::presets::{build_model, Model};
use crate::scenario::{Mode, Scenario};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Hypothesis {
    pub name: &'static str,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IntegralSummary {
    /// Upper limit, a geodesic radius.
    pub upper_limit: f64,
    pub value: Option<f64>,
    pub value_at_rmax: Option<f64>,
    pub tail_correction: Option<f64>,
    pub tail_estimate: Option<f64>,
    pub decay_exponent: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

impl IntegralSummary {
    fn from(upper_limit: f64, r: yamabe_core::Result<AverageConditionReport>) -> Self {
        match r {
            Ok(r) => IntegralSummary {
                upper_limit,
                value: Some(r.value()),
                value_at_rmax: Some(r.value_at_rmax),
                tail_correction: Some(r.tail_correction),
                tail_estimate: Some(r.tail_estimate),
                decay_exponent: Some(r.decay_exponent),
                converged: r.converged,
                error: None,
            },
            Err(e) => IntegralSummary {
                upper_limit,
                value: None,
                value_at_rmax: None,
                tail_correction: None,
                tail_estimate: None,
                decay_exponent: None,
                converged: false,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Curvature and Ricci of the same profile on a 3-D box grid.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BoxCheck {
    pub half_width: f64,
    pub h: f64,
    pub ricci_min_eigenvalue: f64,
    pub base_curvature_max_abs: f64,
    pub pinching_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct HypothesisReport {
    pub scenario: String,
    pub n: usize,
    pub h: f64,
    pub r_max: f64,
    pub hypotheses: Vec<Hypothesis>,
    /// Average condition for the Poisson source `c_n R₀`.
    pub average: IntegralSummary,
    pub volume_growth: IntegralSummary,
    pub ricci_min_eigenvalue: f64,
    pub curvature_sup: f64,
    pub potential_min: f64,
    pub potential_max: f64,
    /// Relative sup difference between `R₀` and the curvature of the base factor.
    pub consistency_gap: f64,
    pub conformally_consistent: bool,
    /// `None` stands for the `R ≡ 0` sentinel (no constraint).
    pub pinching_epsilon: Option<f64>,
    pub box_check: Option<BoxCheck>,
    pub passed: bool,
    /// Harnack, monotonicity and decay checks are asserted only when this holds.
    pub harnack_asserted: bool,
}

impl HypothesisReport {
    pub fn potential_nontrivial(&self) -> bool {
        self.potential_max > 0.0
    }

    pub fn potential_nonnegative(&self) -> bool {
        self.potential_min >= 0.0
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn inner_max_abs(values: &[f64], skip: &[usize]) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}

fn inner_min(values: &[f64], skip: &[usize]) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min)
}

/// Builds the radial model and evaluates the gate.
pub fn validate_hypotheses(sc: &Scenario) -> Result<HypothesisReport> {
    sc.check()?;
    let domain = Domain::radial(sc.n, sc.r_max, sc.h)?;
    let model = build_model(sc, domain)?;
    evaluate(sc, &model)
}

pub fn evaluate(sc: &Scenario, model: &Model) -> Result<HypothesisReport> {
    let tol = &sc.tolerances;
    let base = &model.base;
    let potential = &model.potential;
    let d = *base.domain();
    let outer = outer_nodes(base);

    let ricci = ricci_conformal(base)?;
    let ricci_min = inner_min(&ricci.min_eigenvalue(), &outer);
    let ricci_sup = match &ricci {
        RicciDiagonal::Radial { radial, tangential } => {
            inner_max_abs(radial.values(), &outer).max(inner_max_abs(tangential.values(), &outer))
        }
        RicciDiagonal::Full { .. } => unreachable!("radial model"),
    };
    let curvature_sup = ricci_sup.max(potential.max_abs());
    let own = scalar_curvature(base, &ScalarField::constant(d, 0.0))?;
    let gap = own
        .values()
        .iter()
        .zip(potential.values())
        .enumerate()
        .filter(|(i, _)| !outer.contains(i))
        .map(|(_, (a, b))| (a - b).abs())
        .fold(0.0, f64::max)
        / potential.max_abs().max(1.0);
    let consistent = gap <= tol.consistency;

    let meas = RadialMeasure::new(base)?;
    let s_max = meas.max_geodesic_radius();
    let source = potential.map(|v| coupling(sc.n) * v)?;
    let average = IntegralSummary::from(s_max, average_integral_with(base, &source, s_max, tol.tail));
    let volume = IntegralSummary::from(s_max, volume_growth_integral_with(base, s_max, tol.tail));

    let pinching = finite_or_none(pinching_epsilon_with(base, potential)?);
    let (pmin, pmax) = (potential.min(), potential.max());

    let hypotheses = vec![
        Hypothesis {
            name: "ricci_nonnegative",
            passed: ricci_min >= -tol.ricci,
            value: Some(ricci_min),
            threshold: Some(-tol.ricci),
            detail: "smallest Ricci eigenvalue of the base, outer node excluded".into(),
        },
        Hypothesis {
            name: "bounded_curvature",
            passed: curvature_sup.is_finite(),
            value: Some(curvature_sup),
            threshold: None,
            detail: "sup of |Ricci eigenvalues| and |R0| on the grid".into(),
        },
        Hypothesis {
            name: "potential_nonnegative",
            passed: pmin >= 0.0,
            value: Some(pmin),
            threshold: Some(0.0),
            detail: "minimum of R0".into(),
        },
        Hypothesis {
            name: "average_condition",
            passed: average.converged,
            value: average.value,
            threshold: None,
            detail: match &average.error {
                Some(e) => format!("not evaluated: {e}"),
                None => format!("tail estimate {:?}", average.tail_estimate),
            },
        },
        Hypothesis {
            name: "volume_growth",
            passed: volume.converged,
            value: volume.value,
            threshold: None,
            detail: match &volume.error {
                Some(e) => format!("not evaluated: {e}"),
                None => format!("tail estimate {:?}", volume.tail_estimate),
            },
        },
    ];
    let passed = hypotheses.iter().all(|h| h.passed);

    let box_check = match sc.mode {
        Mode::Radial => None,
        Mode::Box { half_width, h } => Some(box_check(sc, half_width, h)?),
    };

    Ok(HypothesisReport {
        scenario: sc.name.clone(),
        n: sc.n,
        h: sc.h,
        r_max: sc.r_max,
        hypotheses,
        average,
        volume_growth: volume,
        ricci_min_eigenvalue: ricci_min,
        curvature_sup,
        potential_min: pmin,
        potential_max: pmax,
        consistency_gap: gap,
        conformally_consistent: consistent,
        pinching_epsilon: pinching,
        box_check,
        passed,
        harnack_asserted: passed && consistent,
    })
}

fn box_check(sc: &Scenario, half_width: f64, h: f64) -> Result<BoxCheck> {
    let d = Domain::cube(half_width, h)?;
    let m = build_model(sc, d)?;
    let outer = outer_nodes(&m.base);
    let ricci = ricci_conformal(&m.base)?;
    let own = scalar_curvature(&m.base, &ScalarField::constant(d, 0.0))?;
    Ok(BoxCheck {
        half_width,
        h,
        ricci_min_eigenvalue: inner_min(&ricci.min_eigenvalue(), &outer),
        base_curvature_max_abs: inner_max_abs(own.values(), &outer),
        pinching_epsilon: finite_or_none(pinching_epsilon_with(&m.base, &m.potential)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::PresetName;

    fn small(p: PresetName) -> Scenario {
        let mut sc = Scenario::preset(p);
        sc.h = 0.05;
        sc
    }

    #[test]
    fn flat_passes_trivially() {
        let rep = validate_hypotheses(&small(PresetName::Flat)).unwrap();
        assert!(rep.passed && rep.harnack_asserted);
        assert_eq!(rep.ricci_min_eigenvalue, 0.0);
        assert_eq!(rep.pinching_epsilon, None);
        assert_eq!(rep.average.value, Some(0.0));
    }

    #[test]
    fn manufactured_gate() {
        let rep = validate_hypotheses(&small(PresetName::ManufacturedW)).unwrap();
        assert!(rep.passed);
        assert!(!rep.conformally_consistent && !rep.harnack_asserted);
        assert!((rep.average.value.unwrap() - 3.0).abs() < 5e-3);
        assert!((rep.volume_growth.value.unwrap() - 3.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-4);
        assert_eq!(rep.pinching_epsilon, Some(0.0));
    }

    #[test]
    fn failing_presets() {
        let rep = validate_hypotheses(&small(PresetName::DivergentAverage)).unwrap();
        assert!(!rep.passed);
        assert!(!rep.average.converged);
        let rep = validate_hypotheses(&small(PresetName::MisSigned)).unwrap();
        assert!(!rep.passed && !rep.potential_nonnegative());
        assert!(rep.average.error.is_some());
    }

    #[test]
    fn sphere_and_box() {
        let mut sc = small(PresetName::SphereFactor);
        sc.mode = Mode::Box {
            half_width: 1.0,
            h: 0.1,
        };
        let rep = validate_hypotheses(&sc).unwrap();
        assert!(rep.conformally_consistent);
        assert!(rep.ricci_min_eigenvalue > 0.0);
        assert!((rep.pinching_epsilon.unwrap() - 1.0 / 3.0).abs() < 1e-2);
        let b = rep.box_check.unwrap();
        assert!(b.ricci_min_eigenvalue > 0.0);
        assert!((b.pinching_epsilon.unwrap() - 1.0 / 3.0).abs() < 2e-2);
    }
}
