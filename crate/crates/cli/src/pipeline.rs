//! validate → Poisson → exhaustion flow → diagnostics → artifacts.

use std::collections::BTreeSet;
use std::f64::consts::E;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use yamabe_core::diagnostics::{
    barrier_and_logintegral_check, decay_check, harnack_z, monotone_tr_check, schrodinger_compare,
    traced_harnack_check, BarrierRecord, CheckpointRecord, ComparisonRecord, DecayRecord, DiagnosticsReport,
    HarnackForm, MinRecord, Thresholds, Violation,
};
use yamabe_core::flow::{
    run_exhaustion, scalar_evolution_residual, DtPolicy, Exhaustion, ExhaustionLadder, ResidualOperator,
    ResidualRecord, RunPlan, Trajectory,
};
use yamabe_core::geometry::{coupling, ConformalMetric, Domain, ScalarField};
use yamabe_core::poisson::{fubini_chain_check, liyau_bound_check, solve_poisson_with, PoleGreen};
use yamabe_core::Error as CoreError;

use crate::error::Result;
use crate::hypotheses::{evaluate, HypothesisReport};
use crate::output::{num, opt, ArtifactDir, Table};
use crate::presets::{build_model, Model};
use crate::scenario::{DtPolicySpec, Scenario};

pub const VERDICT_PASS: &str = "pass";
pub const VERDICT_FAIL: &str = "fail";
pub const VERDICT_UNMET: &str = "hypotheses-unmet";

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StageStatus {
    pub poisson: String,
    pub liyau: String,
    pub flow: String,
    pub decay: String,
    pub schrodinger: String,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct Highlights {
    pub w_origin: Option<f64>,
    pub fubini_ratio: Option<f64>,
    pub liyau_ratio_min: Option<f64>,
    pub liyau_ratio_max: Option<f64>,
    pub barrier_margin_min: Option<f64>,
    pub upper_excess_max: Option<f64>,
    pub log_identity_max: Option<f64>,
    pub ledger_margin_min: Option<f64>,
    pub min_interior_r: Option<f64>,
    pub evolution_residual_max: Option<f64>,
    pub harnack_z_min: Option<f64>,
    pub traced_harnack_min: Option<f64>,
    pub tr_slope_min: Option<f64>,
    pub tr_comparison_margin_min: Option<f64>,
    pub decay_excess_max: Option<f64>,
    pub schrodinger_margin_min: Option<f64>,
    pub exhaustion_differences_decrease: Option<bool>,
    pub pinching_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub verdict: String,
    /// No asserted check was violated.
    pub all_asserted_passed: bool,
    pub hypotheses_passed: bool,
    pub harnack_asserted: bool,
    pub asserted_violations: usize,
    pub report_only_violations: usize,
    /// Names of checks with at least one asserted violation.
    pub violated_checks: Vec<String>,
    pub stages: StageStatus,
    pub highlights: Highlights,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ViolationRecord {
    pub check: String,
    pub t: Option<f64>,
    pub domain_index: Option<usize>,
    pub value: f64,
    pub asserted: bool,
}

impl From<&Violation> for ViolationRecord {
    fn from(v: &Violation) -> Self {
        ViolationRecord {
            check: v.check.into(),
            t: Some(v.t),
            domain_index: Some(v.domain_index),
            value: v.value,
            asserted: v.asserted,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct CheckpointRow {
    t: f64,
    domain_index: usize,
    h: f64,
    barrier_margin_min: Option<f64>,
    upper_excess_max: f64,
    log_identity_max: f64,
    ledger_margin_min: Option<f64>,
    harnack_z_min: Option<f64>,
    traced_harnack_min: Option<f64>,
    tr_slope_min: Option<f64>,
    decay_ratio_max: Option<f64>,
    schrodinger_margin_min: Option<f64>,
    evolution_residual: Option<f64>,
    min_interior_r: f64,
}

impl From<&CheckpointRecord> for CheckpointRow {
    fn from(r: &CheckpointRecord) -> Self {
        CheckpointRow {
            t: r.t,
            domain_index: r.domain_index,
            h: r.h,
            barrier_margin_min: r.barrier_margin_min,
            upper_excess_max: r.upper_excess_max,
            log_identity_max: r.log_identity_max,
            ledger_margin_min: r.ledger_margin_min,
            harnack_z_min: r.harnack_z_min,
            traced_harnack_min: r.traced_harnack_min,
            tr_slope_min: r.tr_slope_min,
            decay_ratio_max: r.decay_ratio_max,
            schrodinger_margin_min: r.schrodinger_margin_min,
            evolution_residual: r.evolution_residual,
            min_interior_r: r.min_interior_r,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct ThresholdsRow {
    curvature: f64,
    residual: f64,
    log_identity: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct ComparisonRow {
    domain_index: usize,
    t: f64,
    min_margin: f64,
    argmin_tau: f64,
    argmin_r: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct DecayRow {
    domain_index: usize,
    t: f64,
    max_excess: f64,
    max_ratio: f64,
    chain: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct TrendRow {
    domain_index: usize,
    /// `(t, √t max R(·,√t))`.
    points: Vec<(f64, f64)>,
    decreasing: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct ReportJson {
    thresholds: ThresholdsRow,
    barrier_asserted: bool,
    harnack_asserted: bool,
    nontrivial_potential: bool,
    pinching_epsilon: Option<f64>,
    records: Vec<CheckpointRow>,
    comparisons: Vec<ComparisonRow>,
    decay: Vec<DecayRow>,
    trends: Vec<TrendRow>,
    violations: Vec<ViolationRecord>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct FubiniRow {
    w_origin: f64,
    average: f64,
    constant: f64,
    ratio: f64,
    holds: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct PoissonJson {
    status: String,
    source: &'static str,
    w_origin: Option<f64>,
    w_max: Option<f64>,
    fubini: Option<FubiniRow>,
    fubini_status: String,
    liyau_status: String,
    liyau_samples: usize,
    liyau_ratio_min: Option<f64>,
    liyau_ratio_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct TrajectoryJson {
    domain_index: usize,
    radius: f64,
    boundary_node: usize,
    t_end: f64,
    steps: usize,
    snapshots: usize,
    dt_min: f64,
    dt_max: f64,
    min_u: f64,
    max_r_final: f64,
    checkpoint_files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
struct Metadata {
    started_unix_seconds: f64,
    elapsed_seconds: f64,
    jobs: usize,
    tool_version: &'static str,
}

/// Times the decay bound is evaluated at: `e`, `e²` and checkpoints beyond `e`,
/// each needing a snapshot at `√t`.
fn decay_times(sc: &Scenario) -> Vec<f64> {
    let mut v = vec![E, E * E];
    v.extend(sc.checkpoints.iter().copied().filter(|&c| c >= E));
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    v.retain(|t| t.sqrt() <= sc.t_end);
    v
}

/// `τ` values of the trend `√t max R(·,√t)` with `t = τ²`: the last three checkpoints `≥ 1`.
fn trend_taus(sc: &Scenario) -> Vec<f64> {
    let mut v: Vec<f64> = sc.checkpoints.iter().copied().filter(|&c| c >= 1.0).collect();
    v.sort_by(f64::total_cmp);
    let k = v.len().saturating_sub(3);
    v.split_off(k)
}

fn user_checkpoints(sc: &Scenario) -> Vec<f64> {
    let mut v = sc.checkpoints.clone();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn run_plan(sc: &Scenario) -> RunPlan {
    let policy = match sc.dt_policy {
        DtPolicySpec::Explicit { safety } => DtPolicy::Explicit { safety },
        DtPolicySpec::SemiImplicit { dt } => DtPolicy::SemiImplicit { dt },
    };
    let mut plan = RunPlan::new(sc.t_end, policy);
    let mut times = user_checkpoints(sc);
    if sc.t_end >= E {
        for t in decay_times(sc) {
            times.push(t.sqrt());
            if t <= sc.t_end {
                times.push(t);
            }
        }
    }
    if let Some(c) = sc.compare_at() {
        times.extend([c.sqrt(), c]);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    plan.checkpoints = times;
    plan.ledger_dt = Some(sc.ledger_dt);
    plan.triplet_dt = Some(sc.triplet_dt());
    plan.max_steps = sc.max_steps.or_else(|| match sc.dt_policy {
        DtPolicySpec::SemiImplicit { dt } => {
            let events = plan.checkpoints.len() + (sc.t_end / sc.ledger_dt).ceil() as usize;
            Some(5 * ((sc.t_end / dt).ceil() as usize + 3 * events))
        }
        DtPolicySpec::Explicit { .. } => None,
    });
    plan
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

fn find<T: Copy>(items: &[T], t: f64, time: impl Fn(&T) -> f64) -> Option<T> {
    items.iter().copied().find(|x| same_time(time(x), t))
}

fn interior(boundary: usize) -> std::ops::RangeInclusive<usize> {
    0..=boundary.saturating_sub(2)
}

/// Validates, then runs the full pipeline and writes every artifact under `out`.
pub fn run_scenario(sc: &Scenario, out: &Path, jobs: usize) -> Result<RunOutcome> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    sc.check()?;
    let mut dir = ArtifactDir::new(out)?;
    dir.json("scenario.json", sc)?;

    let domain = Domain::radial(sc.n, sc.r_max, sc.h)?;
    let model = build_model(sc, domain)?;
    let hyp = evaluate(sc, &model)?;
    dir.json("hypotheses.json", &hyp)?;

    let mut stages = StageStatus {
        poisson: "skipped".into(),
        liyau: "skipped".into(),
        flow: "skipped".into(),
        decay: "skipped".into(),
        schrodinger: "skipped".into(),
    };
    let mut highlights = Highlights {
        pinching_epsilon: hyp.pinching_epsilon,
        ..Default::default()
    };
    let asserted = hyp.passed;
    let mut extra: Vec<ViolationRecord> = Vec::new();

    let w = poisson_stage(sc, &model, &hyp, &mut dir, &mut stages, &mut highlights, &mut extra)?;

    let mut report: Option<DiagnosticsReport> = None;
    if !hyp.potential_nonnegative() {
        stages.flow = "skipped: potential changes sign, the flow needs R0 ≥ 0".into();
    } else {
        let plan = run_plan(sc);
        let ladder = ExhaustionLadder::new(&domain, &sc.ladder())?;
        match run_exhaustion(
            &ladder,
            &model.base,
            &model.potential,
            &plan,
            sc.compact_radius(),
            jobs.max(1),
        ) {
            Ok(ex) => {
                stages.flow = "ran".into();
                write_flow(sc, &ex, &mut dir, &mut highlights, &mut extra, asserted)?;
                report = Some(diagnose(
                    sc,
                    &model,
                    &hyp,
                    w.as_ref(),
                    &ex,
                    &plan,
                    &mut dir,
                    &mut stages,
                )?);
            }
            // A collapsing solution is a finding about the data, not a crash.
            Err(e @ (CoreError::FlowDegeneracy { t, .. } | CoreError::StepBudget { t, .. })) => {
                stages.flow = format!("degenerate: {e}");
                extra.push(ViolationRecord {
                    check: "flow_degeneracy".into(),
                    t: Some(t),
                    domain_index: None,
                    value: t,
                    asserted,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut violations: Vec<ViolationRecord> = report
        .as_ref()
        .map(|r| r.violations().iter().map(ViolationRecord::from).collect())
        .unwrap_or_default();
    violations.extend(extra);
    if stages.schrodinger.starts_with("gate failed") {
        // A comparison function that fails its gate yields a flag, never a comparison verdict.
        violations.push(ViolationRecord {
            check: "schrodinger_gate".into(),
            t: None,
            domain_index: None,
            value: f64::NAN,
            asserted: hyp.passed,
        });
    }
    if let Some(r) = &report {
        fill_highlights(r, &mut highlights);
        let mut json = report_json(r, hyp.pinching_epsilon);
        json.violations = violations.clone();
        dir.json("diagnostics/report.json", &json)?;
        dir.table("diagnostics/checkpoints.csv", &checkpoint_table(&r.records))?;
    }
    let mut vt = Table::new(&["check", "domain_index", "t", "value", "asserted"]);
    for v in &violations {
        vt.push(vec![
            v.check.clone(),
            v.domain_index.map(|j| j.to_string()).unwrap_or_default(),
            opt(v.t),
            num(v.value),
            v.asserted.to_string(),
        ]);
    }
    dir.table("diagnostics/violations.csv", &vt)?;

    let n_asserted = violations.iter().filter(|v| v.asserted).count();
    let violated: BTreeSet<String> = violations
        .iter()
        .filter(|v| v.asserted)
        .map(|v| v.check.clone())
        .collect();
    let (verdict, exit_code) = if !hyp.passed {
        (VERDICT_UNMET, 0)
    } else if n_asserted > 0 {
        (VERDICT_FAIL, 1)
    } else {
        (VERDICT_PASS, 0)
    };

    dir.json(
        "run_metadata.json",
        &Metadata {
            started_unix_seconds: started,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
            jobs: jobs.max(1),
            tool_version: env!("CARGO_PKG_VERSION"),
        },
    )?;
    let mut artifacts = dir.artifacts();
    artifacts.push("summary.json".into());
    artifacts.sort();
    let summary = Summary {
        scenario: sc.name.clone(),
        verdict: verdict.into(),
        all_asserted_passed: n_asserted == 0,
        hypotheses_passed: hyp.passed,
        harnack_asserted: hyp.harnack_asserted,
        asserted_violations: n_asserted,
        report_only_violations: violations.len() - n_asserted,
        violated_checks: violated.into_iter().collect(),
        stages,
        highlights,
        artifacts,
    };
    dir.json("summary.json", &summary)?;
    Ok(RunOutcome { summary, exit_code })
}

#[allow(clippy::too_many_arguments)]
fn poisson_stage(
    sc: &Scenario,
    model: &Model,
    hyp: &HypothesisReport,
    dir: &mut ArtifactDir,
    stages: &mut StageStatus,
    hl: &mut Highlights,
    extra: &mut Vec<ViolationRecord>,
) -> Result<Option<ScalarField>> {
    let base = &model.base;
    let source = model.potential.map(|v| coupling(sc.n) * v)?;
    let mut json = PoissonJson {
        status: String::new(),
        source: "c_n R0",
        w_origin: None,
        w_max: None,
        fubini: None,
        fubini_status: "skipped".into(),
        liyau_status: "skipped".into(),
        liyau_samples: 0,
        liyau_ratio_min: None,
        liyau_ratio_max: None,
    };
    let w = if !hyp.potential_nonnegative() {
        json.status = "skipped: source changes sign".into();
        None
    } else {
        match solve_poisson_with(base, &source, sc.tolerances.tail) {
            Ok(w) => {
                json.status = "solved".into();
                Some(w)
            }
            Err(CoreError::DivergentPotential(m)) => {
                json.status = format!("divergent: {m}");
                None
            }
            Err(e) => return Err(e.into()),
        }
    };
    stages.poisson = json.status.clone();
    if let Some(w) = &w {
        let d = w.domain();
        let mut t = Table::new(&["r", "source", "w"]);
        for i in 0..w.len() {
            t.push_nums(&[d.radius(i), source.values()[i], w.values()[i]]);
        }
        dir.table("poisson/w.csv", &t)?;
        json.w_origin = Some(w.values()[0]);
        json.w_max = Some(w.max());
        hl.w_origin = json.w_origin;
        if hyp.average.converged {
            match fubini_chain_check(base, &source) {
                Ok(f) => {
                    json.fubini_status = "evaluated".into();
                    hl.fubini_ratio = Some(f.ratio);
                    if !f.holds {
                        extra.push(ViolationRecord {
                            check: "fubini_chain".into(),
                            t: None,
                            domain_index: None,
                            value: f.ratio,
                            asserted: hyp.passed,
                        });
                    }
                    json.fubini = Some(FubiniRow {
                        w_origin: f.w_origin,
                        average: f.average,
                        constant: f.constant,
                        ratio: f.ratio,
                        holds: f.holds,
                    });
                }
                Err(e) => json.fubini_status = format!("not evaluated: {e}"),
            }
        }
    }

    if sc.diagnostics.liyau {
        match liyau_samples(sc, base) {
            Ok(Some((rows, min, max))) => {
                json.liyau_status = "evaluated".into();
                json.liyau_samples = rows.len();
                json.liyau_ratio_min = Some(min);
                json.liyau_ratio_max = Some(max);
                hl.liyau_ratio_min = Some(min);
                hl.liyau_ratio_max = Some(max);
                if !(min > 0.0 && max.is_finite()) {
                    extra.push(ViolationRecord {
                        check: "liyau_ratio".into(),
                        t: None,
                        domain_index: None,
                        value: min,
                        asserted: hyp.passed,
                    });
                }
                let mut t = Table::new(&["distance", "green", "ratio"]);
                for r in rows {
                    t.push_nums(&r);
                }
                dir.table("poisson/liyau.csv", &t)?;
            }
            Ok(None) => json.liyau_status = "skipped: chart too small for distances ≥ 0.5".into(),
            Err(e) => json.liyau_status = format!("not evaluated: {e}"),
        }
    }
    stages.liyau = json.liyau_status.clone();
    dir.json("poisson/summary.json", &json)?;
    Ok(w)
}

type LiYauRows = (Vec<[f64; 3]>, f64, f64);

/// Seeded distances in `[0.5, min(20, s_max/2)]`, Green values from the pole Green function.
fn liyau_samples(sc: &Scenario, base: &ConformalMetric) -> yamabe_core::Result<Option<LiYauRows>> {
    let green = PoleGreen::new(base)?;
    let s_max = yamabe_core::geometry::RadialMeasure::new(base)?.max_geodesic_radius();
    let hi = 20f64.min(0.5 * s_max);
    if hi <= 0.5 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut ds: Vec<f64> = (0..sc.liyau_samples).map(|_| rng.random_range(0.5..=hi)).collect();
    ds.sort_by(f64::total_cmp);
    let pairs = ds
        .iter()
        .map(|&d| Ok((d, green.eval(d)?)))
        .collect::<yamabe_core::Result<Vec<_>>>()?;
    let stats = liyau_bound_check(base, &pairs)?;
    let rows = pairs.iter().zip(&stats.ratios).map(|(p, r)| [p.0, p.1, r.1]).collect();
    Ok(Some((rows, stats.min, stats.max)))
}

fn write_flow(
    sc: &Scenario,
    ex: &Exhaustion,
    dir: &mut ArtifactDir,
    hl: &mut Highlights,
    extra: &mut Vec<ViolationRecord>,
    asserted: bool,
) -> Result<()> {
    let checkpoints = user_checkpoints(sc);
    for traj in &ex.trajectories {
        let j = traj.domain_index;
        let d = traj.domain();
        let mut files = Vec::new();
        for s in traj
            .snapshots
            .iter()
            .filter(|s| s.t == 0.0 || checkpoints.iter().any(|&c| same_time(c, s.t)))
        {
            let rel = format!("flow/domain_{j}/t_{}.csv", s.t);
            let mut t = Table::new(&["r", "u", "R"]);
            for i in 0..=traj.boundary {
                t.push_nums(&[d.radius(i), s.u.values()[i], s.r.values()[i]]);
            }
            dir.table(&rel, &t)?;
            files.push(rel);
        }
        let mut st = Table::new(&["t", "dt", "min_u", "max_r"]);
        for s in &traj.steps {
            st.push_nums(&[s.t, s.dt, s.min_u, s.max_r]);
        }
        dir.table(&format!("flow/domain_{j}/steps.csv"), &st)?;
        let last = traj.snapshots.last().unwrap();
        dir.json(
            &format!("flow/domain_{j}/trajectory.json"),
            &TrajectoryJson {
                domain_index: j,
                radius: traj.radius,
                boundary_node: traj.boundary,
                t_end: traj.t_end(),
                steps: traj.steps.len(),
                snapshots: traj.snapshots.len(),
                dt_min: traj.steps.iter().map(|s| s.dt).fold(f64::INFINITY, f64::min),
                dt_max: traj.steps.iter().map(|s| s.dt).fold(0.0, f64::max),
                min_u: traj.steps.iter().map(|s| s.min_u).fold(f64::INFINITY, f64::min),
                max_r_final: last.r.values()[..traj.boundary]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max),
                checkpoint_files: files,
            },
        )?;
    }

    let mut et = Table::new(&["t", "domain_index", "difference", "max_increase"]);
    let mut lt = Table::new(&["t", "r", "u_limit"]);
    let mut decrease = true;
    let d = ex.trajectories[0].domain();
    for c in ex
        .comparisons
        .iter()
        .filter(|c| checkpoints.iter().any(|&t| same_time(t, c.t)))
    {
        for (j, (diff, inc)) in c.differences.iter().zip(&c.max_increase).enumerate() {
            et.push_nums(&[c.t, j as f64, *diff, *inc]);
        }
        for (i, u) in c.limit.iter().enumerate() {
            lt.push_nums(&[c.t, d.radius(i), *u]);
        }
        let ok = c
            .differences
            .windows(2)
            .all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
        if !ok {
            decrease = false;
            extra.push(ViolationRecord {
                check: "exhaustion_convergence".into(),
                t: Some(c.t),
                domain_index: None,
                value: c.differences.last().copied().unwrap_or(f64::NAN),
                asserted,
            });
        }
    }
    hl.exhaustion_differences_decrease = Some(decrease);
    dir.table("flow/exhaustion.csv", &et)?;
    dir.table("flow/limit.csv", &lt)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn diagnose(
    sc: &Scenario,
    model: &Model,
    hyp: &HypothesisReport,
    w: Option<&ScalarField>,
    ex: &Exhaustion,
    plan: &RunPlan,
    dir: &mut ArtifactDir,
    stages: &mut StageStatus,
) -> Result<DiagnosticsReport> {
    let base = &model.base;
    let toggles = &sc.diagnostics;
    let delta = sc.triplet_dt();
    let checkpoints = user_checkpoints(sc);
    let dt = sc.nominal_dt();
    let tol = &sc.tolerances;
    let h2 = sc.h * sc.h;
    let thresholds = Thresholds {
        curvature: tol.curvature.a * h2 + tol.curvature.b * dt,
        residual: tol.residual.a * h2 + tol.residual.b * dt,
        log_identity: tol.log_identity.a * h2 + tol.log_identity.b * sc.ledger_dt,
    };
    let mut records = Vec::new();
    let mut comparisons = Vec::new();
    let mut decay = Vec::new();
    let mut trends = Vec::new();

    let mut barrier_t = Table::new(&[
        "domain_index",
        "t",
        "barrier_margin_min",
        "upper_excess_max",
        "log_identity_max",
        "ledger_margin_min",
    ]);
    let mut z_t = Table::new(&["domain_index", "t", "min", "argmin_r"]);
    let mut traced_t = Table::new(&["domain_index", "t", "min", "argmin_r"]);
    let mut res_t = Table::new(&["domain_index", "t", "delta", "evolving", "argmax_r", "flat_control"]);
    let mut slope_t = Table::new(&["domain_index", "t1", "t2", "min_slope", "argmin_r"]);
    let mut decay_t = Table::new(&[
        "domain_index",
        "t",
        "max_excess",
        "max_ratio",
        "chain_local",
        "chain_window",
        "chain_total",
    ]);
    let mut trend_t = Table::new(&["domain_index", "t", "sqrt_t_max_r"]);
    let mut schr_t = Table::new(&["domain_index", "t", "min", "argmin_r"]);

    let zero = ScalarField::constant(*base.domain(), 0.0);
    let decay_ts = decay_times(sc);
    let can_decay = toggles.decay && w.is_some() && sc.t_end >= E;
    stages.decay = if !toggles.decay {
        "disabled".into()
    } else if w.is_none() {
        "skipped: no Poisson potential".into()
    } else if sc.t_end < E {
        format!("skipped: horizon {} < e", sc.t_end)
    } else {
        "evaluated".into()
    };

    let schrodinger_gate = tol.schrodinger_gate * h2;
    stages.schrodinger = match (&model.comparison, toggles.schrodinger) {
        (None, _) => "skipped: no comparison function".into(),
        (Some(_), false) => "disabled".into(),
        (Some(_), true) => "evaluated".into(),
    };

    for traj in &ex.trajectories {
        let j = traj.domain_index;
        let barrier: Vec<BarrierRecord> = barrier_and_logintegral_check(traj, w.unwrap_or(&zero), base)?;
        for b in &barrier {
            barrier_t.push(vec![
                j.to_string(),
                num(b.t),
                if w.is_some() {
                    num(b.barrier_margin_min)
                } else {
                    String::new()
                },
                num(b.upper_excess_max),
                num(b.log_identity_max),
                if w.is_some() {
                    num(b.ledger_margin_min)
                } else {
                    String::new()
                },
            ]);
        }
        let traced: Vec<MinRecord> = if toggles.traced_harnack {
            traced_harnack_check(traj, base, delta)?
        } else {
            Vec::new()
        };
        for r in &traced {
            traced_t.push(vec![j.to_string(), num(r.t), num(r.min), num(r.argmin_r)]);
        }
        let (residual, flat): (Vec<ResidualRecord>, Vec<ResidualRecord>) = if toggles.residual {
            (
                scalar_evolution_residual(traj, base, delta, ResidualOperator::Evolving)?,
                scalar_evolution_residual(traj, base, delta, ResidualOperator::Flat)?,
            )
        } else {
            (Vec::new(), Vec::new())
        };
        for (r, f) in residual.iter().zip(&flat) {
            res_t.push(vec![
                j.to_string(),
                num(r.t),
                num(r.delta),
                num(r.max),
                num(r.argmax_r),
                num(f.max),
            ]);
        }
        let mono = if toggles.monotone {
            let m = monotone_tr_check(traj, checkpoints[0].min(0.01), sc.compare_at())?;
            for s in &m.slopes {
                slope_t.push(vec![
                    j.to_string(),
                    num(s.t1),
                    num(s.t2),
                    num(s.min_slope),
                    num(s.argmin_r),
                ]);
            }
            if let Some(c) = m.comparison {
                comparisons.push((j, c));
            }
            Some(m)
        } else {
            None
        };
        let dec = if can_decay {
            let rep = decay_check(traj, w.unwrap(), base, &decay_ts, &trend_taus(sc))?;
            for r in &rep.records {
                let ch = r.chain.map(|c| c.map(num)).unwrap_or_default();
                decay_t.push(vec![
                    j.to_string(),
                    num(r.t),
                    num(r.max_excess),
                    num(r.max_ratio),
                    ch[0].clone(),
                    ch[1].clone(),
                    ch[2].clone(),
                ]);
                decay.push((j, *r));
            }
            for &(t, v) in &rep.trend {
                trend_t.push(vec![j.to_string(), num(t), num(v)]);
            }
            trends.push((j, rep.trend.clone()));
            Some(rep)
        } else {
            None
        };
        let schr: Vec<MinRecord> = match (&model.comparison, toggles.schrodinger) {
            (Some(v), true) => match schrodinger_compare(traj, v, base, &model.potential, schrodinger_gate) {
                Ok(r) => r,
                Err(e @ (CoreError::NotASolution { .. } | CoreError::Precondition(_))) => {
                    stages.schrodinger = format!("gate failed: {e}");
                    Vec::new()
                }
                Err(e) => return Err(e.into()),
            },
            _ => Vec::new(),
        };
        for r in &schr {
            schr_t.push(vec![j.to_string(), num(r.t), num(r.min), num(r.argmin_r)]);
        }

        let mut prev_c = 0.0;
        for &c in &checkpoints {
            let Some(s) = traj.at(c) else { continue };
            let b = find(&barrier, c, |r| r.t).expect("barrier record at every snapshot");
            let centre = plan.triplet_centre(c, delta);
            let z = if toggles.harnack {
                let z = harnack_z(s, base, &HarnackForm::NegLogGradR, s.t)?;
                let (min, arg) = interior(traj.boundary)
                    .map(|i| (z.values()[i], traj.domain().radius(i)))
                    .fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a });
                z_t.push(vec![j.to_string(), num(c), num(min), num(arg)]);
                Some(min)
            } else {
                None
            };
            let slope = mono.as_ref().and_then(|m| {
                m.slopes
                    .iter()
                    .filter(|sl| sl.t2 > prev_c + 1e-12 && sl.t2 <= c + 1e-12 && sl.t1 >= prev_c - 1e-12)
                    .map(|sl| sl.min_slope)
                    .reduce(f64::min)
            });
            let decay_ratio = dec
                .as_ref()
                .and_then(|d| find(&d.records, c, |r: &DecayRecord| r.t))
                .map(|r| r.max_ratio);
            records.push(CheckpointRecord {
                t: c,
                domain_index: j,
                h: sc.h,
                barrier_margin_min: w.map(|_| b.barrier_margin_min),
                upper_excess_max: b.upper_excess_max,
                log_identity_max: b.log_identity_max,
                ledger_margin_min: w.map(|_| b.ledger_margin_min),
                harnack_z_min: z,
                traced_harnack_min: find(&traced, centre, |r| r.t).map(|r| r.min),
                tr_slope_min: slope,
                decay_ratio_max: decay_ratio,
                schrodinger_margin_min: find(&schr, c, |r| r.t).map(|r| r.min),
                evolution_residual: find(&residual, centre, |r| r.t).map(|r| r.max),
                min_interior_r: interior(traj.boundary)
                    .map(|i| s.r.values()[i])
                    .fold(f64::INFINITY, f64::min),
            });
            prev_c = c;
        }
    }

    dir.table("diagnostics/barrier.csv", &barrier_t)?;
    for (name, t, on) in [
        ("harnack_z", &z_t, toggles.harnack),
        ("traced_harnack", &traced_t, toggles.traced_harnack),
        ("residual", &res_t, toggles.residual),
        ("tr_slopes", &slope_t, toggles.monotone),
        ("decay", &decay_t, can_decay),
        ("trend", &trend_t, can_decay),
        ("schrodinger", &schr_t, !schr_t.is_empty()),
    ] {
        if on {
            dir.table(&format!("diagnostics/{name}.csv"), t)?;
        }
    }

    Ok(DiagnosticsReport {
        records,
        comparisons,
        decay,
        trends,
        pinching_epsilon: hyp.pinching_epsilon.unwrap_or(f64::INFINITY),
        barrier_asserted: hyp.passed,
        harnack_asserted: hyp.harnack_asserted,
        nontrivial_potential: hyp.potential_nontrivial(),
        thresholds,
    })
}

fn report_json(r: &DiagnosticsReport, pinching: Option<f64>) -> ReportJson {
    ReportJson {
        thresholds: ThresholdsRow {
            curvature: r.thresholds.curvature,
            residual: r.thresholds.residual,
            log_identity: r.thresholds.log_identity,
        },
        barrier_asserted: r.barrier_asserted,
        harnack_asserted: r.harnack_asserted,
        nontrivial_potential: r.nontrivial_potential,
        pinching_epsilon: pinching,
        records: r.records.iter().map(CheckpointRow::from).collect(),
        comparisons: r
            .comparisons
            .iter()
            .map(|(j, c): &(usize, ComparisonRecord)| ComparisonRow {
                domain_index: *j,
                t: c.t,
                min_margin: c.min_margin,
                argmin_tau: c.argmin_tau,
                argmin_r: c.argmin_r,
            })
            .collect(),
        decay: r
            .decay
            .iter()
            .map(|(j, d)| DecayRow {
                domain_index: *j,
                t: d.t,
                max_excess: d.max_excess,
                max_ratio: d.max_ratio,
                chain: d.chain,
            })
            .collect(),
        trends: r
            .trends
            .iter()
            .map(|(j, p)| TrendRow {
                domain_index: *j,
                points: p.clone(),
                decreasing: yamabe_core::diagnostics::trend_decreasing(p),
            })
            .collect(),
        violations: Vec::new(),
    }
}

fn checkpoint_table(records: &[CheckpointRecord]) -> Table {
    let mut t = Table::new(&[
        "t",
        "domain_index",
        "h",
        "barrier_margin_min",
        "upper_excess_max",
        "log_identity_max",
        "ledger_margin_min",
        "harnack_z_min",
        "traced_harnack_min",
        "tr_slope_min",
        "decay_ratio_max",
        "schrodinger_margin_min",
        "evolution_residual",
        "min_interior_r",
    ]);
    for r in records {
        t.push(vec![
            num(r.t),
            r.domain_index.to_string(),
            num(r.h),
            opt(r.barrier_margin_min),
            num(r.upper_excess_max),
            num(r.log_identity_max),
            opt(r.ledger_margin_min),
            opt(r.harnack_z_min),
            opt(r.traced_harnack_min),
            opt(r.tr_slope_min),
            opt(r.decay_ratio_max),
            opt(r.schrodinger_margin_min),
            opt(r.evolution_residual),
            num(r.min_interior_r),
        ]);
    }
    t
}

fn fill_highlights(r: &DiagnosticsReport, hl: &mut Highlights) {
    fn fold(it: impl Iterator<Item = f64>, max: bool) -> Option<f64> {
        it.reduce(|a, b| if max { a.max(b) } else { a.min(b) })
    }
    let recs = &r.records;
    hl.barrier_margin_min = fold(recs.iter().filter_map(|x| x.barrier_margin_min), false);
    hl.upper_excess_max = fold(recs.iter().map(|x| x.upper_excess_max), true);
    hl.log_identity_max = fold(recs.iter().map(|x| x.log_identity_max), true);
    hl.ledger_margin_min = fold(recs.iter().filter_map(|x| x.ledger_margin_min), false);
    hl.min_interior_r = fold(recs.iter().map(|x| x.min_interior_r), false);
    hl.evolution_residual_max = fold(recs.iter().filter_map(|x| x.evolution_residual), true);
    hl.harnack_z_min = fold(recs.iter().filter_map(|x| x.harnack_z_min), false);
    hl.traced_harnack_min = fold(recs.iter().filter_map(|x| x.traced_harnack_min), false);
    hl.tr_slope_min = fold(recs.iter().filter_map(|x| x.tr_slope_min), false);
    hl.tr_comparison_margin_min = fold(r.comparisons.iter().map(|c| c.1.min_margin), false);
    hl.decay_excess_max = fold(r.decay.iter().map(|d| d.1.max_excess), true);
    hl.schrodinger_margin_min = fold(recs.iter().filter_map(|x| x.schrodinger_margin_min), false);
}

/// Trajectories are not kept in the summary; expose them for callers that
/// want to inspect a run in memory.
pub fn run_flow_only(sc: &Scenario, jobs: usize) -> Result<(Model, Exhaustion)> {
    sc.check()?;
    let domain = Domain::radial(sc.n, sc.r_max, sc.h)?;
    let model = build_model(sc, domain)?;
    let ladder = ExhaustionLadder::new(&domain, &sc.ladder())?;
    let ex = run_exhaustion(
        &ladder,
        &model.base,
        &model.potential,
        &run_plan(sc),
        sc.compact_radius(),
        jobs.max(1),
    )?;
    Ok((model, ex))
}

/// Borrowed view for tests that only need one ball.
pub fn largest(ex: &Exhaustion) -> &Trajectory {
    ex.trajectories.last().expect("ladder is non-empty")
}
