//! Curvature inequalities evaluated along flow trajectories: Chow's Harnack
//! quantity, monotonicity of `tR`, the barrier and log-integral ledger, the
//! decay bound, comparison with a stationary Schrödinger solution, and Ricci
//! pinching.
//!
//! Checks return raw margins. Whether a margin counts as a violation is
//! decided against a [`Tolerance`], and only for checks that are asserted.

use crate::error::{Error, Result};
use crate::flow::{FlowState, Trajectory};
use crate::geometry::{
    coupling, gradient_norm_sq, laplace_beltrami, radial_derivative, ricci_conformal, scalar_curvature,
    ConformalMetric, RicciDiagonal, ScalarField,
};

/// Relative floor below which `R` is treated as zero when dividing by it.
pub const R_FLOOR: f64 = 1e-12;

/// Violation threshold `a h² + b δt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub a: f64,
    pub b: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { a: 5.0, b: 5.0 }
    }
}

impl Tolerance {
    pub fn value(&self, h: f64, dt: f64) -> f64 {
        self.a * h * h + self.b * dt
    }
}

/// The 1-form `X` in Chow's Harnack quantity, given by its radial component.
#[derive(Debug, Clone, PartialEq)]
pub enum HarnackForm {
    Zero,
    /// `X = -d log R`, set to zero where `R` is below the floor.
    NegLogGradR,
    Custom(ScalarField),
}

fn floor_of(r: &ScalarField) -> f64 {
    R_FLOOR * r.max().max(0.0)
}

/// Interior nodes `0..=J-2` of a ball with boundary node `J`.
fn interior(boundary: usize) -> std::ops::RangeInclusive<usize> {
    0..=boundary.saturating_sub(2)
}

/// `Z = (n-1)Δ_g R + g(∇R, X) + Rc(X,X)/(2(n-1)) + R² + R/t` for `g = u^{4/(n-2)} g₀`.
pub fn harnack_z(state: &FlowState, base: &ConformalMetric, x: &HarnackForm, t: f64) -> Result<ScalarField> {
    if !(t > 0.0) {
        return Err(Error::InvalidTime(t));
    }
    let g = base.rescaled(&state.u)?;
    let n = base.dim() as f64;
    let r = &state.r;
    let lap = laplace_beltrami(&g, r)?;
    let dr = radial_derivative(r)?;
    let weight = g.metric_weight();
    let floor = floor_of(r);
    let xr: Vec<f64> = match x {
        HarnackForm::Zero => vec![0.0; r.len()],
        HarnackForm::NegLogGradR => r
            .values()
            .iter()
            .zip(dr.values())
            .map(|(&v, &d)| if v > floor && v > 0.0 { -d / v } else { 0.0 })
            .collect(),
        HarnackForm::Custom(f) => {
            f.same_domain(r)?;
            f.values().to_vec()
        }
    };
    let radial_ricci = match ricci_conformal(&g)? {
        RicciDiagonal::Radial { radial, .. } => radial,
        RicciDiagonal::Full { .. } => return Err(Error::RadialOnly),
    };
    let values = (0..r.len())
        .map(|i| {
            let v = r.values()[i];
            (n - 1.0) * lap.values()[i]
                + dr.values()[i] * xr[i] / weight[i]
                + radial_ricci.values()[i] * xr[i] * xr[i] / weight[i] / (2.0 * (n - 1.0))
                + v * v
                + v / t
        })
        .collect();
    ScalarField::new(*r.domain(), values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinRecord {
    pub t: f64,
    pub min: f64,
    pub argmin_r: f64,
}

fn min_over(values: impl Iterator<Item = (usize, f64)>, traj: &Trajectory, t: f64) -> MinRecord {
    let (mut min, mut arg) = (f64::INFINITY, f64::NAN);
    for (i, v) in values {
        if v < min {
            min = v;
            arg = traj.domain().radius(i);
        }
    }
    MinRecord { t, min, argmin_r: arg }
}

/// Snapshots with neighbours at `t ± delta` and `t > 0`.
fn centred(traj: &Trajectory, delta: f64) -> Vec<(&FlowState, &FlowState, &FlowState)> {
    traj.snapshots
        .iter()
        .filter(|s| s.t > 0.0)
        .filter_map(|s| Some((traj.at(s.t - delta)?, s, traj.at(s.t + delta)?)))
        .filter(|(p, s, _)| p.t < s.t)
        .collect()
}

/// Minimum of `harnack_z` over interior nodes at every snapshot with `t ≥ t_min`.
pub fn harnack_z_series(
    traj: &Trajectory,
    base: &ConformalMetric,
    x: &HarnackForm,
    t_min: f64,
) -> Result<Vec<MinRecord>> {
    traj.snapshots
        .iter()
        .filter(|s| s.t >= t_min && s.t > 0.0)
        .map(|s| {
            let z = harnack_z(s, base, x, s.t)?;
            Ok(min_over(interior(traj.boundary).map(|i| (i, z.values()[i])), traj, s.t))
        })
        .collect()
}

/// `min [∂ₜR + R/t - |∇_g R|²/(2R)]` over interior nodes with `R` above the
/// floor, with `∂ₜR` centred over `t ± delta`.
pub fn traced_harnack_check(traj: &Trajectory, base: &ConformalMetric, delta: f64) -> Result<Vec<MinRecord>> {
    let triples = centred(traj, delta);
    if triples.is_empty() {
        return Err(Error::InvalidInput(format!("no snapshot has neighbours at ±{delta}")));
    }
    triples
        .into_iter()
        .map(|(prev, s, next)| {
            let g = base.rescaled(&s.u)?;
            let grad = gradient_norm_sq(&g, &s.r)?;
            let floor = floor_of(&s.r);
            let r = s.r.values();
            let vals = interior(traj.boundary).map(|i| {
                let dt_r = (next.r.values()[i] - prev.r.values()[i]) / (next.t - prev.t);
                let quad = if r[i] > floor && r[i] > 0.0 {
                    grad.values()[i] / (2.0 * r[i])
                } else {
                    0.0
                };
                (i, dt_r + r[i] / s.t - quad)
            });
            Ok(min_over(vals, traj, s.t))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeRecord {
    pub t1: f64,
    pub t2: f64,
    pub min_slope: f64,
    pub argmin_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRecord {
    pub t: f64,
    /// `min (τ R(x,τ) - √t R(x,√t))` over snapshots `τ ∈ [√t, t]` and interior nodes.
    pub min_margin: f64,
    pub argmin_tau: f64,
    pub argmin_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub slopes: Vec<SlopeRecord>,
    pub min_slope: f64,
    pub comparison: Option<ComparisonRecord>,
}

/// Discrete slopes of `tR` between consecutive snapshots with `t ≥ t_min`,
/// and optionally the comparison `τR(τ) ≥ √t R(√t)` for `τ ∈ [√t, t]`.
pub fn monotone_tr_check(traj: &Trajectory, t_min: f64, compare_at: Option<f64>) -> Result<MonotoneReport> {
    let snaps: Vec<&FlowState> = traj.snapshots.iter().filter(|s| s.t > 0.0 && s.t >= t_min).collect();
    if snaps.len() < 2 {
        return Err(Error::InvalidInput("need two snapshots with t > 0".into()));
    }
    let nodes = interior(traj.boundary);
    let slopes: Vec<SlopeRecord> = snaps
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let rec = min_over(
                nodes
                    .clone()
                    .map(|i| (i, (b.t * b.r.values()[i] - a.t * a.r.values()[i]) / (b.t - a.t))),
                traj,
                b.t,
            );
            SlopeRecord {
                t1: a.t,
                t2: b.t,
                min_slope: rec.min,
                argmin_r: rec.argmin_r,
            }
        })
        .collect();
    let min_slope = slopes.iter().map(|s| s.min_slope).fold(f64::INFINITY, f64::min);
    let comparison = match compare_at {
        None => None,
        Some(t) => {
            let root = t.sqrt();
            let base = traj
                .at(root)
                .ok_or_else(|| Error::InvalidInput(format!("no snapshot at √t = {root}")))?;
            if traj.at(t).is_none() {
                return Err(Error::InvalidInput(format!("no snapshot at t = {t}")));
            }
            let mut rec = ComparisonRecord {
                t,
                min_margin: f64::INFINITY,
                argmin_tau: f64::NAN,
                argmin_r: f64::NAN,
            };
            for s in traj
                .snapshots
                .iter()
                .filter(|s| s.t >= base.t && s.t <= t * (1.0 + 1e-12))
            {
                for i in nodes.clone() {
                    let m = s.t * s.r.values()[i] - base.t * base.r.values()[i];
                    if m < rec.min_margin {
                        rec.min_margin = m;
                        rec.argmin_tau = s.t;
                        rec.argmin_r = traj.domain().radius(i);
                    }
                }
            }
            Some(rec)
        }
    };
    Ok(MonotoneReport {
        slopes,
        min_slope,
        comparison,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierRecord {
    pub t: f64,
    /// `min (u - e^{-w})`.
    pub barrier_margin_min: f64,
    /// `max u - 1`.
    pub upper_excess_max: f64,
    /// `max |∫₀ᵗ R dτ + C(n) log u|`, trapezoid over snapshots.
    pub log_identity_max: f64,
    /// `min (C(n) w - ∫₀ᵗ R dτ)`.
    pub ledger_margin_min: f64,
}

/// Lower barrier `u > e^{-w}` and the log-integral ledger on the active nodes.
pub fn barrier_and_logintegral_check(
    traj: &Trajectory,
    w: &ScalarField,
    base: &ConformalMetric,
) -> Result<Vec<BarrierRecord>> {
    if w.domain() != traj.domain() {
        return Err(Error::InvalidInput(
            "potential and trajectory live on different grids".into(),
        ));
    }
    let c = base.log_barrier_constant();
    let active = 0..traj.boundary;
    let mut integral = vec![0.0; traj.boundary];
    let mut out = Vec::with_capacity(traj.snapshots.len());
    let mut prev: Option<&FlowState> = None;
    for s in &traj.snapshots {
        if let Some(p) = prev {
            let dt = s.t - p.t;
            for i in active.clone() {
                integral[i] += 0.5 * dt * (p.r.values()[i] + s.r.values()[i]);
            }
        }
        prev = Some(s);
        let u = s.u.values();
        let wv = w.values();
        let mut rec = BarrierRecord {
            t: s.t,
            barrier_margin_min: f64::INFINITY,
            upper_excess_max: f64::NEG_INFINITY,
            log_identity_max: 0.0,
            ledger_margin_min: f64::INFINITY,
        };
        for i in active.clone() {
            rec.barrier_margin_min = rec.barrier_margin_min.min(u[i] - (-wv[i]).exp());
            rec.upper_excess_max = rec.upper_excess_max.max(u[i] - 1.0);
            rec.log_identity_max = rec.log_identity_max.max((integral[i] + c * u[i].ln()).abs());
            rec.ledger_margin_min = rec.ledger_margin_min.min(c * wv[i] - integral[i]);
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRecord {
    pub t: f64,
    /// `max (√t R(x,√t) log t - C(n) w(x))`.
    pub max_excess: f64,
    /// `max √t R(x,√t) log t / (C(n) w(x))` over nodes with `w > 0`.
    pub max_ratio: f64,
    /// Node-by-node chain `√t R(√t) log t ≤ ∫_{√t}^t R ≤ ∫_0^t R ≤ C(n) w`:
    /// the worst excess of each link, when `t` lies within the trajectory.
    pub chain: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub records: Vec<DecayRecord>,
    /// `(t, √t max R(·, √t))` for snapshots `√t ≥ 1`.
    pub trend: Vec<(f64, f64)>,
}

impl DecayReport {
    pub fn trend_decreasing(&self) -> bool {
        trend_decreasing(&self.trend)
    }
}

fn running_integral(traj: &Trajectory, from: f64, to: f64, i: usize) -> f64 {
    let mut total = 0.0;
    for w in traj.snapshots.windows(2) {
        if w[0].t >= from - 1e-12 && w[1].t <= to + 1e-12 {
            total += 0.5 * (w[1].t - w[0].t) * (w[0].r.values()[i] + w[1].r.values()[i]);
        }
    }
    total
}

/// The decay bound `√t R(x,√t) log t ≤ C(n) w(x)` at each `t` in `times`
/// (each `√t` must be a snapshot), and the trend over `trend_times`.
pub fn decay_check(
    traj: &Trajectory,
    w: &ScalarField,
    base: &ConformalMetric,
    times: &[f64],
    trend_times: &[f64],
) -> Result<DecayReport> {
    let e = std::f64::consts::E;
    if traj.t_end() < e * (1.0 - 1e-12) {
        return Err(Error::InsufficientHorizon {
            t_end: traj.t_end(),
            required: e,
        });
    }
    if w.domain() != traj.domain() {
        return Err(Error::InvalidInput(
            "potential and trajectory live on different grids".into(),
        ));
    }
    let c = base.log_barrier_constant();
    let nodes = interior(traj.boundary);
    let mut records = Vec::new();
    for &t in times {
        if t < e * (1.0 - 1e-12) {
            return Err(Error::InvalidInput(format!("decay bound needs t ≥ e, got {t}")));
        }
        let s = traj
            .at(t.sqrt())
            .ok_or_else(|| Error::InvalidInput(format!("no snapshot at √t = {}", t.sqrt())))?;
        let lt = t.ln();
        let mut rec = DecayRecord {
            t,
            max_excess: f64::NEG_INFINITY,
            max_ratio: 0.0,
            chain: None,
        };
        let within = traj.at(t).is_some();
        let mut chain = [f64::NEG_INFINITY; 3];
        for i in nodes.clone() {
            let lhs = s.t * s.r.values()[i] * lt;
            let bound = c * w.values()[i];
            rec.max_excess = rec.max_excess.max(lhs - bound);
            if bound > 0.0 {
                rec.max_ratio = rec.max_ratio.max(lhs / bound);
            }
            if within {
                let upper = running_integral(traj, s.t, t, i);
                let total = running_integral(traj, 0.0, t, i);
                chain[0] = chain[0].max(lhs - upper);
                chain[1] = chain[1].max(upper - total);
                chain[2] = chain[2].max(total - bound);
            }
        }
        if within {
            rec.chain = Some(chain);
        }
        records.push(rec);
    }
    let mut trend = Vec::new();
    for &tau in trend_times {
        if tau < 1.0 {
            continue;
        }
        let s = traj
            .at(tau)
            .ok_or_else(|| Error::InvalidInput(format!("no snapshot at {tau}")))?;
        let max_r = nodes.clone().map(|i| s.r.values()[i]).fold(f64::NEG_INFINITY, f64::max);
        trend.push((tau * tau, tau * max_r));
    }
    Ok(DecayReport { records, trend })
}

/// Max residual of `-Δ_{g₀}v + c_n R₀ v = 0`, excluding the outer node.
pub fn schrodinger_residual(v: &ScalarField, base: &ConformalMetric, potential: &ScalarField) -> Result<f64> {
    let cn = coupling(base.dim());
    let lap = laplace_beltrami(base, v)?;
    potential.same_domain(v)?;
    let k = v.len() - 1;
    Ok((0..k)
        .map(|i| (-lap.values()[i] + cn * potential.values()[i] * v.values()[i]).abs())
        .fold(0.0, f64::max))
}

/// `min (u - v)` per snapshot, after verifying that `v ∈ (0, 1)` solves the
/// stationary equation to within `tol`.
pub fn schrodinger_compare(
    traj: &Trajectory,
    v: &ScalarField,
    base: &ConformalMetric,
    potential: &ScalarField,
    tol: f64,
) -> Result<Vec<MinRecord>> {
    if v.domain() != traj.domain() {
        return Err(Error::InvalidInput("comparison function on a different grid".into()));
    }
    if v.min() <= 0.0 || v.max() >= 1.0 {
        return Err(Error::Precondition(format!(
            "comparison function must lie in (0, 1), range [{}, {}]",
            v.min(),
            v.max()
        )));
    }
    let residual = schrodinger_residual(v, base, potential)?;
    if !(residual <= tol) {
        return Err(Error::NotASolution {
            residual,
            tolerance: tol,
        });
    }
    Ok(traj
        .snapshots
        .iter()
        .map(|s| {
            min_over(
                s.u.values().iter().zip(v.values()).map(|(a, b)| a - b).enumerate(),
                traj,
                s.t,
            )
        })
        .collect())
}

/// Largest `ε` with `Rc ≥ ε R g` where `R` exceeds the floor; `+∞` when `R ≡ 0`.
pub fn pinching_epsilon(m: &ConformalMetric) -> Result<f64> {
    let r = scalar_curvature(m, &ScalarField::constant(*m.domain(), 0.0))?;
    pinching_epsilon_with(m, &r)
}

/// As [`pinching_epsilon`], measured against a given scalar curvature `R`
/// (for instance a potential standing in for the curvature of the base).
/// The outer node is skipped where its one-sided stencil is the only one available.
pub fn pinching_epsilon_with(m: &ConformalMetric, r: &ScalarField) -> Result<f64> {
    m.factor().same_domain(r)?;
    let max = r.max_abs();
    if max <= 1e-12 {
        return Ok(f64::INFINITY);
    }
    let lam = ricci_conformal(m)?.min_eigenvalue();
    let floor = R_FLOOR * r.max().max(0.0);
    let outer = outer_nodes(m);
    let eps = r
        .values()
        .iter()
        .zip(&lam)
        .enumerate()
        .filter(|(i, (v, _))| **v > floor && **v > 0.0 && !outer.contains(i))
        .map(|(_, (v, l))| l / v)
        .fold(f64::INFINITY, f64::min);
    Ok(eps)
}

/// Nodes whose stencils are one-sided: the outer radial node, or the box faces.
pub fn outer_nodes(m: &ConformalMetric) -> Vec<usize> {
    let d = m.domain();
    if d.is_radial() {
        vec![d.node_count() - 1]
    } else {
        (0..d.node_count())
            .filter(|&i| d.coords(i).iter().any(|c| (c.abs() - d.r_max()).abs() < 0.5 * d.h()))
            .collect()
    }
}

/// One row of the diagnostics report, at one snapshot of one ball.
/// Barrier and ledger entries are absent when no Poisson potential exists.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckpointRecord {
    pub t: f64,
    pub domain_index: usize,
    pub h: f64,
    pub barrier_margin_min: Option<f64>,
    pub upper_excess_max: f64,
    pub log_identity_max: f64,
    pub ledger_margin_min: Option<f64>,
    pub harnack_z_min: Option<f64>,
    pub traced_harnack_min: Option<f64>,
    /// Slope of `tR` on the interval ending at `t`.
    pub tr_slope_min: Option<f64>,
    pub decay_ratio_max: Option<f64>,
    pub schrodinger_margin_min: Option<f64>,
    pub evolution_residual: Option<f64>,
    pub min_interior_r: f64,
}

/// Violation thresholds, already evaluated for the run's `h` and time steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub curvature: f64,
    pub residual: f64,
    pub log_identity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub records: Vec<CheckpointRecord>,
    pub comparisons: Vec<(usize, ComparisonRecord)>,
    pub decay: Vec<(usize, DecayRecord)>,
    pub trends: Vec<(usize, Vec<(f64, f64)>)>,
    pub pinching_epsilon: f64,
    /// Barrier, ledger and comparison checks are asserted when the hypotheses hold.
    pub barrier_asserted: bool,
    /// Harnack, monotonicity and decay checks additionally need `Rc ≥ 0`
    /// and a potential equal to the curvature of the base.
    pub harnack_asserted: bool,
    /// `R₀ ≢ 0`; strict inequalities are only expected then.
    pub nontrivial_potential: bool,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: &'static str,
    pub t: f64,
    pub domain_index: usize,
    pub value: f64,
    pub asserted: bool,
}

/// Whether the last three trend entries decrease; an identically zero trend passes.
pub fn trend_decreasing(trend: &[(f64, f64)]) -> bool {
    let k = trend.len();
    k >= 3
        && trend[k - 3..]
            .windows(2)
            .all(|w| w[1].1 < w[0].1 || (w[0].1 == 0.0 && w[1].1 == 0.0))
}

impl DiagnosticsReport {
    pub fn violations(&self) -> Vec<Violation> {
        let tol = self.thresholds.curvature;
        let strict = self.nontrivial_potential;
        let (b, h) = (self.barrier_asserted, self.harnack_asserted);
        let mut out = Vec::new();
        let mut push = |check, t, domain_index, value: f64, bad: bool, asserted: bool| {
            if bad {
                out.push(Violation {
                    check,
                    t,
                    domain_index,
                    value,
                    asserted,
                });
            }
        };
        for r in &self.records {
            let (t, j) = (r.t, r.domain_index);
            push("upper_barrier", t, j, r.upper_excess_max, r.upper_excess_max > 1e-12, b);
            if let Some(v) = r.barrier_margin_min {
                let bad = if strict && t > 0.0 { !(v > 0.0) } else { !(v >= 0.0) };
                push("lower_barrier", t, j, v, bad, b);
            }
            if let Some(v) = r.ledger_margin_min {
                push("ledger", t, j, v, v < -self.thresholds.log_identity, b);
            }
            push(
                "log_identity",
                t,
                j,
                r.log_identity_max,
                !(r.log_identity_max <= self.thresholds.log_identity),
                b,
            );
            if t >= 0.01 - 1e-12 {
                let v = r.min_interior_r;
                let bad = if strict { !(v > 0.0) } else { !(v >= 0.0) };
                push("positive_r", t, j, v, bad, b);
            }
            if let Some(v) = r.evolution_residual {
                push("evolution_residual", t, j, v, !(v <= self.thresholds.residual), b);
            }
            if let Some(v) = r.schrodinger_margin_min {
                push("schrodinger", t, j, v, !(v > 0.0), b);
            }
            if let Some(v) = r.harnack_z_min {
                push("harnack_z", t, j, v, v < -tol, h);
            }
            if let Some(v) = r.traced_harnack_min {
                push("traced_harnack", t, j, v, v < -tol, h);
            }
            if let Some(v) = r.tr_slope_min {
                push("tr_slope", t, j, v, v < -tol, h);
            }
            if let Some(v) = r.decay_ratio_max {
                push("decay_ratio", t, j, v, v > 1.0 + tol, h);
            }
        }
        for (j, c) in &self.comparisons {
            push("tr_comparison", c.t, *j, c.min_margin, c.min_margin < -tol, h);
        }
        for (j, d) in &self.decay {
            push("decay_bound", d.t, *j, d.max_excess, d.max_excess > tol, h);
        }
        for (j, trend) in &self.trends {
            if !trend_decreasing(trend) {
                let last = trend.last().copied().unwrap_or((f64::NAN, f64::NAN));
                push("decay_trend", last.0, *j, last.1, true, h);
            }
        }
        out
    }

    pub fn asserted_violations(&self) -> usize {
        self.violations().iter().filter(|v| v.asserted).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use approx::assert_relative_eq;

    fn flat_state(d: Domain, t: f64) -> FlowState {
        FlowState {
            t,
            u: ScalarField::constant(d, 1.0),
            r: ScalarField::constant(d, 0.0),
            domain_index: 0,
            dt_last: 0.0,
        }
    }

    fn flat_trajectory(d: Domain) -> Trajectory {
        let snaps = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
            .iter()
            .map(|&t| flat_state(d, t))
            .collect();
        Trajectory::from_snapshots(0, d.cells(), snaps).unwrap()
    }

    /// Spatially constant `R = 1/(1 - t)` on a flat grid, the `R' = R²` ODE.
    fn homogeneous(d: Domain, times: &[f64]) -> Trajectory {
        let snaps = times
            .iter()
            .map(|&t| FlowState {
                t,
                u: ScalarField::constant(d, 1.0),
                r: ScalarField::constant(d, 1.0 / (1.0 - t)),
                domain_index: 0,
                dt_last: 0.0,
            })
            .collect();
        Trajectory::from_snapshots(0, d.cells(), snaps).unwrap()
    }

    #[test]
    fn z_vanishes_on_flat_data() {
        let d = Domain::radial(3, 2.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let s = flat_state(d, 1.0);
        for x in [HarnackForm::Zero, HarnackForm::NegLogGradR] {
            assert_eq!(harnack_z(&s, &m, &x, 1.0).unwrap().max_abs(), 0.0);
        }
        assert!(matches!(
            harnack_z(&s, &m, &HarnackForm::Zero, 0.0),
            Err(Error::InvalidTime(_))
        ));
    }

    #[test]
    fn flat_trajectory_is_neutral() {
        let d = Domain::radial(3, 2.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let traj = flat_trajectory(d);
        let w = ScalarField::constant(d, 0.0);
        for rec in traced_harnack_check(&traj, &m, 0.5).unwrap() {
            assert_eq!(rec.min, 0.0);
        }
        let mono = monotone_tr_check(&traj, 0.01, None).unwrap();
        assert_eq!(mono.min_slope, 0.0);
        for rec in barrier_and_logintegral_check(&traj, &w, &m).unwrap() {
            assert_eq!(rec.barrier_margin_min, 0.0);
            assert_eq!(rec.log_identity_max, 0.0);
        }
        let decay = decay_check(&traj, &w, &m, &[], &[1.0, 1.5]).unwrap();
        assert!(decay.trend.iter().all(|t| t.1 == 0.0));
    }

    #[test]
    fn homogeneous_ode_satisfies_traced_harnack() {
        let d = Domain::radial(3, 1.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let traj = homogeneous(d, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        for rec in traced_harnack_check(&traj, &m, 0.1).unwrap() {
            let t = rec.t;
            let exact = 1.0 / (1.0 - t).powi(2) + 1.0 / ((1.0 - t) * t);
            assert!(rec.min > 0.0);
            assert!((rec.min - exact).abs() < 0.05 * exact);
        }
    }

    #[test]
    fn decreasing_tr_is_flagged() {
        let d = Domain::radial(3, 1.0, 0.1).unwrap();
        let snaps = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&t| FlowState {
                r: ScalarField::constant(d, 1.0 / (t * t)),
                ..flat_state(d, t)
            })
            .collect();
        let traj = Trajectory::from_snapshots(0, d.cells(), snaps).unwrap();
        let rep = monotone_tr_check(&traj, 0.01, Some(4.0)).unwrap();
        assert_relative_eq!(rep.min_slope, -0.5, epsilon = 1e-12);
        let cmp = rep.comparison.unwrap();
        assert_relative_eq!(cmp.min_margin, 0.25 - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn barrier_detects_undershoot() {
        let d = Domain::radial(3, 1.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let w = ScalarField::constant(d, 0.1);
        let snaps = vec![
            flat_state(d, 0.0),
            FlowState {
                u: ScalarField::constant(d, 0.5),
                ..flat_state(d, 1.0)
            },
        ];
        let traj = Trajectory::from_snapshots(0, d.cells(), snaps).unwrap();
        let recs = barrier_and_logintegral_check(&traj, &w, &m).unwrap();
        assert!(recs[1].barrier_margin_min < 0.0);
        // ∫R = 0 but -4 log u = 4 log 2.
        assert_relative_eq!(recs[1].log_identity_max, 4.0 * 2f64.ln(), epsilon = 1e-12);
        let other = ScalarField::constant(Domain::radial(3, 2.0, 0.1).unwrap(), 0.0);
        assert!(barrier_and_logintegral_check(&traj, &other, &m).is_err());
    }

    #[test]
    fn decay_needs_horizon() {
        let d = Domain::radial(3, 1.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let traj = homogeneous(d, &[0.0, 0.5]);
        let w = ScalarField::constant(d, 1.0);
        assert!(matches!(
            decay_check(&traj, &w, &m, &[], &[]),
            Err(Error::InsufficientHorizon { .. })
        ));
    }

    #[test]
    fn schrodinger_gate() {
        let d = Domain::radial(3, 2.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let zero = ScalarField::constant(d, 0.0);
        let half = ScalarField::constant(d, 0.5);
        let traj = flat_trajectory(d);
        for rec in schrodinger_compare(&traj, &half, &m, &zero, 1e-12).unwrap() {
            assert_eq!(rec.min, 0.5);
        }
        let bent = ScalarField::from_radial_fn(d, |r| 0.5 + 0.1 * r * r).unwrap();
        assert!(matches!(
            schrodinger_compare(&traj, &bent, &m, &zero, 1e-3),
            Err(Error::NotASolution { .. })
        ));
    }

    #[test]
    fn pinching_values() {
        let d = Domain::radial(3, 10.0, 0.01).unwrap();
        assert_eq!(pinching_epsilon(&ConformalMetric::flat(d)).unwrap(), f64::INFINITY);
        let sphere =
            ConformalMetric::new(ScalarField::from_radial_fn(d, |r| 2f64.sqrt() / (1.0 + r * r).sqrt()).unwrap())
                .unwrap();
        let eps = pinching_epsilon(&sphere).unwrap();
        assert!((eps - 1.0 / 3.0).abs() < 1e-3, "{eps}");
        // A flat base forced by a positive potential has ε = 0.
        let flat = ConformalMetric::flat(d);
        let r0 = ScalarField::from_radial_fn(d, |r| 24.0 * (1.0 + r * r).powf(-2.5)).unwrap();
        assert_eq!(pinching_epsilon_with(&flat, &r0).unwrap(), 0.0);
    }

    #[test]
    fn trend_and_report_gating() {
        assert!(trend_decreasing(&[(1.0, 0.3), (4.0, 0.2), (25.0, 0.1)]));
        assert!(trend_decreasing(&[(1.0, 0.0), (4.0, 0.0), (25.0, 0.0)]));
        assert!(!trend_decreasing(&[(1.0, 0.3), (4.0, 0.3), (25.0, 0.1)]));
        assert!(!trend_decreasing(&[(1.0, 0.3), (4.0, 0.2)]));
        let rec = CheckpointRecord {
            t: 1.0,
            barrier_margin_min: Some(0.0),
            tr_slope_min: Some(-1.0),
            min_interior_r: 0.0,
            ..Default::default()
        };
        let mut rep = DiagnosticsReport {
            records: vec![rec],
            comparisons: vec![],
            decay: vec![],
            trends: vec![],
            pinching_epsilon: 0.0,
            barrier_asserted: true,
            harnack_asserted: false,
            nontrivial_potential: false,
            thresholds: Thresholds {
                curvature: 1e-3,
                residual: 1e-3,
                log_identity: 1e-3,
            },
        };
        let v = rep.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].check, "tr_slope");
        assert_eq!(rep.asserted_violations(), 0);
        rep.nontrivial_potential = true;
        let checks: Vec<_> = rep
            .violations()
            .iter()
            .filter(|v| v.asserted)
            .map(|v| v.check)
            .collect();
        assert_eq!(checks, ["lower_barrier", "positive_r"]);
    }
}
