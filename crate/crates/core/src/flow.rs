//! Yamabe flow `∂ₜu = (n-1) u^{1-p} [Δ_{g₀}u - c_n R₀ u]` on the balls of an
//! exhaustion, with `u = 1` held outside each ball.
//!
//! The base metric is `g₀ = U₀^{4/(n-2)} δ` and `R₀` the potential entering the
//! conformal Laplacian. When `R₀` is the scalar curvature of `g₀`, `u` is the
//! conformal factor of the evolving metric `u^{4/(n-2)} g₀`. The flow is
//! integrated in `u`; the curvature is always derived from `u`.

use crate::error::{Error, Result};
use crate::geometry::stencil::{radial_gradient, radial_laplacian_row};
use crate::geometry::{coupling, exponent, laplace_beltrami, laplacian_flat, ConformalMetric, Domain, ScalarField};

/// Step rejections tolerated before a step is declared a collapse.
pub const MAX_REJECTIONS: usize = 40;

/// A run whose accepted step drops below `2^-MIN_STEP_HALVINGS` of the
/// nominal step has stalled and is reported as a collapse.
pub const MIN_STEP_HALVINGS: i32 = 30;

/// Largest relative change of `u` at any node accepted in one step. A
/// collapsing solution keeps failing this, so the step shrinks until the
/// run reports the degeneracy instead of jumping past the singularity.
pub const MAX_RELATIVE_CHANGE: f64 = 0.25;

/// The semi-discrete flow reads `∂ₜ log u = -ρ(u)` with `ρ = (n-2)/4 · R`
/// in the scheme's own discretization. Over an accepted step the fall in
/// `log u` must lie between `dt ρ` at the two ends, up to this fraction of
/// their size. Near a collapse the linearly implicit stages can stall at a
/// spurious fixed point; this is the check that notices.
pub const RATE_SLACK: f64 = 0.1;

/// Absolute allowance on the change in `log u`, for nodes where R is near zero.
pub const LOG_CHANGE_FLOOR: f64 = 1e-6;

/// Stage fraction `2 - √2` of the TR-BDF2 step.
const TR_GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub u: ScalarField,
    /// Scalar curvature of `u^{4/(n-2)} g₀`.
    pub r: ScalarField,
    pub domain_index: usize,
    pub dt_last: f64,
}

/// Radii `r₁ < r₂ < ... < r_J` of the balls `Ω_j = B(0, r_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustionLadder {
    radii: Vec<f64>,
    nodes: Vec<usize>,
}

impl ExhaustionLadder {
    pub fn new(domain: &Domain, radii: &[f64]) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidInput("empty exhaustion ladder".into()));
        }
        let mut nodes = Vec::with_capacity(radii.len());
        for (j, &r) in radii.iter().enumerate() {
            if j > 0 && r <= radii[j - 1] {
                return Err(Error::InvalidInput(format!(
                    "ladder radii must increase, got {radii:?}"
                )));
            }
            match domain.node_at(r) {
                Some(i) if i >= 4 => nodes.push(i),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "ladder radius {r} is not a grid node beyond 4h within [0, {}]",
                        domain.r_max()
                    )))
                }
            }
        }
        Ok(ExhaustionLadder {
            radii: radii.to_vec(),
            nodes,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Forward Euler; the step must respect [`Flow::cfl_dt`].
    Explicit,
    /// TR-BDF2: a trapezoidal stage to `t + γ dt` with the coefficient
    /// `u^{1-p}` frozen at a half-step predictor, then a linearly implicit
    /// BDF2 stage. L-stable, so stiff modes near the origin are damped
    /// instead of ringing.
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    /// `dt = cfl_dt(state, safety)` every step.
    Explicit {
        safety: f64,
    },
    SemiImplicit {
        dt: f64,
    },
}

impl DtPolicy {
    pub fn scheme(&self) -> Scheme {
        match self {
            DtPolicy::Explicit { .. } => Scheme::Explicit,
            DtPolicy::SemiImplicit { .. } => Scheme::SemiImplicit,
        }
    }
}

/// The flow on one ball `B(0, r_j)`.
#[derive(Debug, Clone)]
pub struct Flow {
    base: ConformalMetric,
    potential: ScalarField,
    boundary: usize,
    domain_index: usize,
    initial: ScalarField,
    /// Rows of `Δ_{g₀}` on the active nodes `0..boundary`.
    rows: Vec<(f64, f64, f64)>,
}

impl Flow {
    /// Flow from `u ≡ 1` on the ball whose boundary sits at node `boundary`.
    pub fn new(base: &ConformalMetric, potential: &ScalarField, boundary: usize) -> Result<Self> {
        let d = *base.domain();
        Self::with_initial(base, potential, boundary, ScalarField::constant(d, 1.0))
    }

    /// Flow from arbitrary positive data; values at and beyond the boundary
    /// node stay frozen.
    pub fn with_initial(
        base: &ConformalMetric,
        potential: &ScalarField,
        boundary: usize,
        initial: ScalarField,
    ) -> Result<Self> {
        let d = *base.domain();
        if !d.is_radial() {
            return Err(Error::RadialOnly);
        }
        base.factor().same_domain(potential)?;
        base.factor().same_domain(&initial)?;
        if boundary < 2 || boundary >= d.node_count() {
            return Err(Error::InvalidInput(format!(
                "boundary node {boundary} outside 2..{}",
                d.node_count()
            )));
        }
        if let Some(i) = initial.values().iter().position(|&v| v <= 0.0) {
            return Err(Error::Precondition(format!("initial factor nonpositive at node {i}")));
        }
        let h = d.h();
        let u0 = base.factor().values();
        let du0 = radial_gradient(u0, h);
        let weight = base.metric_weight();
        let rows = (0..boundary)
            .map(|i| {
                let (mut sub, diag, mut sup) = radial_laplacian_row(i, h, d.dim());
                let b = du0[i] / u0[i] / h;
                sub -= b;
                sup += b;
                (sub / weight[i], diag / weight[i], sup / weight[i])
            })
            .collect();
        Ok(Flow {
            base: base.clone(),
            potential: potential.clone(),
            boundary,
            domain_index: 0,
            initial,
            rows,
        })
    }

    pub fn with_domain_index(mut self, j: usize) -> Self {
        self.domain_index = j;
        self
    }

    pub fn base(&self) -> &ConformalMetric {
        &self.base
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    pub fn boundary(&self) -> usize {
        self.boundary
    }

    pub fn radius(&self) -> f64 {
        self.base.domain().radius(self.boundary)
    }

    pub fn initial_state(&self) -> Result<FlowState> {
        Ok(FlowState {
            t: 0.0,
            r: self.curvature(&self.initial)?,
            u: self.initial.clone(),
            domain_index: self.domain_index,
            dt_last: 0.0,
        })
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `R = u^{-p} [ -(4(n-1)/(n-2)) Δ_{g₀}u + R₀ u ]`.
    pub fn curvature(&self, u: &ScalarField) -> Result<ScalarField> {
        let n = self.dim() as f64;
        let p = exponent(self.dim());
        let k = 4.0 * (n - 1.0) / (n - 2.0);
        let lap = laplace_beltrami(&self.base, u)?;
        let values = u
            .values()
            .iter()
            .zip(lap.values())
            .zip(self.potential.values())
            .map(|((&v, &l), &r0)| v.powf(-p) * (-k * l + r0 * v))
            .collect();
        ScalarField::new(*u.domain(), values)
    }

    /// `safety · h² · min(u^{p-1} U₀^{4/(n-2)}) / (2n(n-1))`.
    pub fn cfl_dt(&self, state: &FlowState, safety: f64) -> f64 {
        let n = self.dim() as f64;
        let p = exponent(self.dim());
        let h = self.base.domain().h();
        let weight = self.base.metric_weight();
        let m = state
            .u
            .values()
            .iter()
            .zip(&weight)
            .map(|(u, w)| u.powf(p - 1.0) * w)
            .fold(f64::INFINITY, f64::min);
        safety * h * h * m / (2.0 * n * (n - 1.0))
    }

    /// `Δ_{g₀}u` on the active nodes, in difference form so constants map to zero exactly.
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, &(a, _, c))| {
                let left = if i == 0 { 0.0 } else { a * (u[i - 1] - u[i]) };
                left + c * (u[i + 1] - u[i])
            })
            .collect()
    }

    /// Solves `(1 + e_i) x_i - c_i (L x)_i = rhs_i` on the active nodes with
    /// `x = 0` at the frozen boundary. Used for increments, so zero forcing
    /// gives a zero update exactly.
    fn solve(&self, c: &[f64], e: Option<&[f64]>, rhs: Vec<f64>) -> Vec<f64> {
        let m = self.boundary;
        let diag = |i: usize| 1.0 + e.map_or(0.0, |e| e[i]) - c[i] * self.rows[i].1;
        let mut sup = vec![0.0; m];
        let mut x = vec![0.0; m];
        let mut denom = diag(0);
        sup[0] = -c[0] * self.rows[0].2 / denom;
        x[0] = rhs[0] / denom;
        for i in 1..m {
            let (a, _, cc) = self.rows[i];
            let sub = -c[i] * a;
            denom = diag(i) - sub * sup[i - 1];
            sup[i] = -c[i] * cc / denom;
            x[i] = (rhs[i] - sub * x[i - 1]) / denom;
        }
        for i in (0..m - 1).rev() {
            x[i] -= sup[i] * x[i + 1];
        }
        x
    }

    /// Trapezoidal step over `dt` of `a (L - c_n R₀)` with `a` frozen at a
    /// linearly implicit half-step predictor. `None` if the predictor leaves
    /// the positive cone.
    fn trapezoid(&self, u: &[f64], dt: f64) -> Option<Vec<f64>> {
        let m = self.boundary;
        let cn = coupling(self.dim());
        let r0 = &self.potential.values()[..m];
        let lu = self.apply(u);
        let force: Vec<f64> = (0..m).map(|i| lu[i] - cn * r0[i] * u[i]).collect();
        let half_step = |a: Vec<f64>| {
            let c: Vec<f64> = a.iter().map(|x| 0.5 * dt * x).collect();
            let e: Vec<f64> = (0..m).map(|i| c[i] * cn * r0[i]).collect();
            (c, e)
        };
        let (c, e) = half_step(self.coef(u));
        let rhs = (0..m).map(|i| c[i] * force[i]).collect();
        let mut star = u.to_vec();
        for (s, d) in star.iter_mut().zip(self.solve(&c, Some(&e), rhs)) {
            *s += d;
        }
        if star[..m].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return None;
        }
        let (c, e) = half_step(self.coef(&star));
        let rhs = (0..m).map(|i| 2.0 * c[i] * force[i]).collect();
        let mut out = u.to_vec();
        for (o, d) in out.iter_mut().zip(self.solve(&c, Some(&e), rhs)) {
            *o += d;
        }
        Some(out)
    }

    fn coef(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim() as f64;
        let p = exponent(self.dim());
        v[..self.boundary].iter().map(|x| (n - 1.0) * x.powf(1.0 - p)).collect()
    }

    fn attempt(&self, u: &[f64], dt: f64, scheme: Scheme) -> Vec<f64> {
        let m = self.boundary;
        let cn = coupling(self.dim());
        let r0 = &self.potential.values()[..m];
        let failed = || {
            let mut v = u.to_vec();
            v[0] = f64::NAN;
            v
        };
        match scheme {
            Scheme::Explicit => {
                let lu = self.apply(u);
                let a = self.coef(u);
                let mut out = u.to_vec();
                for i in 0..m {
                    out[i] = u[i] + dt * a[i] * (lu[i] - cn * r0[i] * u[i]);
                }
                out
            }
            Scheme::SemiImplicit => {
                let Some(mid) = self.trapezoid(u, TR_GAMMA * dt) else {
                    return failed();
                };
                // BDF2 through (t, u), (t + γdt, mid); the coefficient is frozen at
                // the linear extrapolation to t + dt, the reaction is implicit.
                let g = TR_GAMMA;
                let w = (1.0 - g) / (2.0 - g);
                let c0 = (1.0 - g).powi(2) / (g * (2.0 - g));
                let ex: Vec<f64> = (0..m)
                    .map(|i| (mid[i] + (mid[i] - u[i]) * (1.0 - g) / g).max(0.5 * mid[i]))
                    .collect();
                let c: Vec<f64> = self.coef(&ex).iter().map(|a| w * dt * a).collect();
                let e: Vec<f64> = (0..m).map(|i| c[i] * cn * r0[i]).collect();
                let lm = self.apply(&mid);
                let rhs = (0..m)
                    .map(|i| c0 * (mid[i] - u[i]) + c[i] * (lm[i] - cn * r0[i] * mid[i]))
                    .collect();
                let mut out = mid;
                for (o, d) in out.iter_mut().zip(self.solve(&c, Some(&e), rhs)) {
                    *o += d;
                }
                out
            }
        }
    }

    /// `-∂ₜ log u` of the semi-discrete flow on the active nodes.
    fn log_rate(&self, u: &[f64]) -> Vec<f64> {
        let cn = coupling(self.dim());
        let r0 = self.potential.values();
        let lu = self.apply(u);
        self.coef(u)
            .iter()
            .enumerate()
            .map(|(i, a)| -a * (lu[i] / u[i] - cn * r0[i]))
            .collect()
    }

    fn rate_consistent(&self, u: &[f64], next: &[f64], dt: f64) -> bool {
        let (s0, s1) = (self.log_rate(u), self.log_rate(next));
        (0..self.boundary).all(|i| {
            let (lo, hi) = (dt * s0[i].min(s1[i]), dt * s0[i].max(s1[i]));
            let slack = RATE_SLACK * lo.abs().max(hi.abs()) + LOG_CHANGE_FLOOR;
            let fall = -(next[i] / u[i]).ln();
            fall >= lo - slack && fall <= hi + slack
        })
    }

    /// Advances by `dt`, halving on a nonpositive or non-finite result, a
    /// relative change above [`MAX_RELATIVE_CHANGE`] or a change in `log u` out
    /// of line with the rate at either end (see [`RATE_SLACK`]).
    pub fn step(&self, state: &FlowState, dt: f64, scheme: Scheme) -> Result<FlowState> {
        if !(dt > 0.0) {
            return Err(Error::Precondition(format!("time step {dt} must be positive")));
        }
        if let Some(i) = state.u.values().iter().position(|&v| v <= 0.0) {
            return Err(Error::Precondition(format!("u nonpositive at node {i}")));
        }
        if scheme == Scheme::Explicit {
            let limit = self.cfl_dt(state, 1.0);
            if dt > limit * (1.0 + 1e-12) {
                return Err(Error::Precondition(format!(
                    "dt = {dt:e} exceeds the CFL bound {limit:e}"
                )));
            }
        }
        let mut dt = dt;
        for _ in 0..=MAX_REJECTIONS {
            let next = self.attempt(state.u.values(), dt, scheme);
            let accepted = next
                .iter()
                .zip(state.u.values())
                .all(|(v, u)| v.is_finite() && *v > 0.0 && (v - u).abs() <= MAX_RELATIVE_CHANGE * u)
                && self.rate_consistent(state.u.values(), &next, dt);
            if accepted {
                let u = ScalarField::new(*state.u.domain(), next)?;
                return Ok(FlowState {
                    t: state.t + dt,
                    r: self.curvature(&u)?,
                    u,
                    domain_index: state.domain_index,
                    dt_last: dt,
                });
            }
            dt *= 0.5;
        }
        Err(Error::FlowDegeneracy {
            t: state.t,
            rejections: MAX_REJECTIONS,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub min_u: f64,
    /// Over the active nodes.
    pub max_r: f64,
}

/// Snapshots of one run, ordered in time and starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub domain_index: usize,
    pub radius: f64,
    /// Node index of the ball boundary.
    pub boundary: usize,
    pub snapshots: Vec<FlowState>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Wraps externally built snapshots (for synthetic and replayed data).
    pub fn from_snapshots(domain_index: usize, boundary: usize, snapshots: Vec<FlowState>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::InvalidInput("trajectory without snapshots".into()))?;
        let d = *first.u.domain();
        for w in snapshots.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidInput("snapshot times must increase".into()));
            }
            w[1].u.same_domain(&w[0].u)?;
        }
        if boundary >= d.node_count() {
            return Err(Error::InvalidInput(format!(
                "boundary node {boundary} outside the grid"
            )));
        }
        Ok(Trajectory {
            domain_index,
            radius: d.radius(boundary),
            boundary,
            snapshots,
            steps: Vec::new(),
        })
    }

    pub fn domain(&self) -> &Domain {
        self.snapshots[0].u.domain()
    }

    pub fn t_end(&self) -> f64 {
        self.snapshots.last().unwrap().t
    }

    /// Snapshot at time `t`, if one was recorded.
    pub fn at(&self, t: f64) -> Option<&FlowState> {
        let i = self.snapshots.partition_point(|s| s.t < t - time_eps(t));
        self.snapshots.get(i).filter(|s| (s.t - t).abs() <= time_eps(t))
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

fn time_eps(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

/// Which times a run must land on exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub t_end: f64,
    pub checkpoints: Vec<f64>,
    /// Spacing of the uniform grid used for time quadrature; `None` for no grid.
    pub ledger_dt: Option<f64>,
    /// Half-width of the triplets `(c - δ, c, c + δ)` around each checkpoint.
    pub triplet_dt: Option<f64>,
    pub policy: DtPolicy,
    /// Upper bound on accepted steps per domain; `None` for no bound.
    pub max_steps: Option<usize>,
}

pub const DEFAULT_CHECKPOINTS: [f64; 6] = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0];

impl RunPlan {
    pub fn new(t_end: f64, policy: DtPolicy) -> Self {
        RunPlan {
            t_end,
            checkpoints: DEFAULT_CHECKPOINTS.iter().copied().filter(|&c| c <= t_end).collect(),
            ledger_dt: None,
            triplet_dt: None,
            policy,
            max_steps: None,
        }
    }

    /// Triplet centre for checkpoint `c`; pulled inside the horizon at `t_end`.
    pub fn triplet_centre(&self, c: f64, delta: f64) -> f64 {
        c.min(self.t_end - delta).max(delta)
    }

    pub fn events(&self) -> Result<Vec<f64>> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidTime(self.t_end));
        }
        let mut ev = vec![self.t_end];
        for &c in &self.checkpoints {
            if !(c > 0.0) || c > self.t_end + time_eps(self.t_end) {
                return Err(Error::InvalidInput(format!(
                    "checkpoint {c} outside (0, {}]",
                    self.t_end
                )));
            }
            ev.push(c.min(self.t_end));
            if let Some(delta) = self.triplet_dt {
                let mid = self.triplet_centre(c, delta);
                ev.extend([mid - delta, mid, mid + delta]);
            }
        }
        if let Some(dt) = self.ledger_dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidInput(format!("ledger spacing {dt} must be positive")));
            }
            let k = (self.t_end / dt).round() as usize;
            ev.extend(
                (1..=k)
                    .map(|i| i as f64 * dt)
                    .filter(|&t| t <= self.t_end + time_eps(self.t_end)),
            );
        }
        ev.sort_by(f64::total_cmp);
        ev.dedup_by(|a, b| (*a - *b).abs() <= time_eps(*b));
        ev.retain(|&t| t > 0.0);
        Ok(ev)
    }
}

/// Integrates one ball to `plan.t_end`, landing exactly on every event time.
pub fn run_on_domain(flow: &Flow, plan: &RunPlan) -> Result<Trajectory> {
    if let Some(i) = flow.potential().values().iter().position(|&v| v < 0.0) {
        return Err(Error::Precondition(format!(
            "potential negative at node {i}; the barriers need R0 ≥ 0"
        )));
    }
    let events = plan.events()?;
    let mut state = flow.initial_state()?;
    let mut snapshots = vec![state.clone()];
    let mut steps = Vec::new();
    let m = flow.boundary();
    // Step-size memory: after a rejection the next step starts from the
    // accepted size and doubles back towards the policy step.
    let mut cap = f64::INFINITY;
    let mut floor = None;
    for &target in &events {
        while target - state.t > time_eps(target) {
            let remaining = target - state.t;
            let nominal = match plan.policy {
                DtPolicy::Explicit { safety } => flow.cfl_dt(&state, safety),
                DtPolicy::SemiImplicit { dt } => dt,
            };
            if !(nominal > 0.0) {
                return Err(Error::Precondition(format!("time step {nominal} must be positive")));
            }
            let floor = *floor.get_or_insert(nominal * 0.5f64.powi(MIN_STEP_HALVINGS));
            let dt = nominal.min(cap);
            // Avoid a sliver step just before the event.
            let dt = if dt >= remaining * (1.0 - 1e-9) { remaining } else { dt };
            state = flow.step(&state, dt, plan.policy.scheme())?;
            if state.dt_last < dt {
                if state.dt_last < floor {
                    return Err(Error::FlowDegeneracy {
                        t: state.t,
                        rejections: MAX_REJECTIONS,
                    });
                }
                cap = state.dt_last;
            } else if cap.is_finite() {
                cap *= 2.0;
                if cap >= nominal {
                    cap = f64::INFINITY;
                }
            }
            if (target - state.t).abs() <= time_eps(target) {
                state.t = target;
            }
            if plan.max_steps.is_some_and(|max| steps.len() >= max) {
                return Err(Error::StepBudget {
                    t: state.t,
                    steps: steps.len(),
                });
            }
            steps.push(StepRecord {
                t: state.t,
                dt: state.dt_last,
                min_u: state.u.min(),
                max_r: state.r.values()[..m].iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
        snapshots.push(state.clone());
    }
    Ok(Trajectory {
        domain_index: state.domain_index,
        radius: flow.radius(),
        boundary: m,
        snapshots,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointComparison {
    pub t: f64,
    /// `‖u_j - u_{j+1}‖_∞` on the compact ball, for consecutive domains.
    pub differences: Vec<f64>,
    /// Largest `u_{j+1} - u_j` on the smaller ball; positive values break
    /// pointwise monotonicity in `j`.
    pub max_increase: Vec<f64>,
    /// Extrapolated `u_∞` on the compact ball.
    pub limit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exhaustion {
    pub trajectories: Vec<Trajectory>,
    /// Radius of the fixed compact set the comparisons are made on.
    pub compact_radius: f64,
    pub comparisons: Vec<CheckpointComparison>,
}

impl Exhaustion {
    /// Whether the consecutive differences shrink in `j` at every checkpoint.
    pub fn differences_decrease(&self) -> bool {
        self.comparisons.iter().all(|c| {
            c.differences
                .windows(2)
                .all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
        })
    }
}

/// Runs every ball of the ladder and compares the solutions on `B(0, compact)`.
/// `jobs > 1` runs balls on separate threads; results do not depend on it.
pub fn run_exhaustion(
    ladder: &ExhaustionLadder,
    base: &ConformalMetric,
    potential: &ScalarField,
    plan: &RunPlan,
    compact: f64,
    jobs: usize,
) -> Result<Exhaustion> {
    let d = *base.domain();
    let k = d
        .node_at(compact)
        .filter(|&k| k <= ladder.nodes()[0])
        .ok_or_else(|| Error::InvalidInput(format!("compact radius {compact} must be a node within r_1")))?;
    let flows: Vec<Flow> = ladder
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, &b)| Flow::new(base, potential, b).map(|f| f.with_domain_index(j)))
        .collect::<Result<_>>()?;
    let trajectories: Vec<Trajectory> = if jobs > 1 {
        let mut out: Vec<Option<Result<Trajectory>>> = (0..flows.len()).map(|_| None).collect();
        for (fs, slots) in flows.chunks(jobs).zip(out.chunks_mut(jobs)) {
            std::thread::scope(|s| {
                for (flow, slot) in fs.iter().zip(slots.iter_mut()) {
                    s.spawn(move || *slot = Some(run_on_domain(flow, plan)));
                }
            });
        }
        out.into_iter().map(|r| r.unwrap()).collect::<Result<_>>()?
    } else {
        flows.iter().map(|f| run_on_domain(f, plan)).collect::<Result<_>>()?
    };

    let mut comparisons = Vec::new();
    for snap in &trajectories[0].snapshots {
        let t = snap.t;
        let fields: Vec<&[f64]> = trajectories
            .iter()
            .map(|tr| tr.at(t).map(|s| s.u.values()))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidInput(format!("snapshot at t = {t} missing on some domain")))?;
        let mut differences = Vec::new();
        let mut max_increase = Vec::new();
        for j in 0..fields.len().saturating_sub(1) {
            let diff = (0..=k)
                .map(|i| (fields[j][i] - fields[j + 1][i]).abs())
                .fold(0.0, f64::max);
            differences.push(diff);
            let common = ladder.nodes()[j];
            max_increase.push(
                (0..=common)
                    .map(|i| fields[j + 1][i] - fields[j][i])
                    .fold(f64::NEG_INFINITY, f64::max),
            );
        }
        let last = fields.len() - 1;
        let limit = if last >= 2 && differences[last - 2] > 0.0 {
            // Geometric extrapolation with the observed contraction ratio.
            let rho = (differences[last - 1] / differences[last - 2]).min(0.9);
            (0..=k)
                .map(|i| fields[last][i] + (fields[last][i] - fields[last - 1][i]) * rho / (1.0 - rho))
                .collect()
        } else {
            fields[last][..=k].to_vec()
        };
        comparisons.push(CheckpointComparison {
            t,
            differences,
            max_increase,
            limit,
        });
    }
    Ok(Exhaustion {
        trajectories,
        compact_radius: compact,
        comparisons,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualOperator {
    /// `Δ_{g(t)}`, the correct operator.
    Evolving,
    /// The flat Laplacian; a deliberately wrong operator for negative controls.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRecord {
    pub t: f64,
    pub delta: f64,
    /// `max |∂ₜR - (n-1)Δ_g R - R²|` over interior nodes.
    pub max: f64,
    pub argmax_r: f64,
}

/// Residual of `∂ₜR = (n-1)Δ_{g(t)}R + R²` at every snapshot that has
/// neighbours at `t ± delta`, on interior nodes `i ≤ J - 2`.
pub fn scalar_evolution_residual(
    traj: &Trajectory,
    base: &ConformalMetric,
    delta: f64,
    operator: ResidualOperator,
) -> Result<Vec<ResidualRecord>> {
    let n = base.dim() as f64;
    let d = *traj.domain();
    let mut out = Vec::new();
    for s in &traj.snapshots {
        let (Some(prev), Some(next)) = (traj.at(s.t - delta), traj.at(s.t + delta)) else {
            continue;
        };
        if s.t - delta < -time_eps(s.t) {
            continue;
        }
        let lap = match operator {
            ResidualOperator::Evolving => laplace_beltrami(&base.rescaled(&s.u)?, &s.r)?,
            ResidualOperator::Flat => laplacian_flat(&s.r)?,
        };
        let r = s.r.values();
        let (mut max, mut arg) = (0.0f64, 0.0);
        for i in 0..=traj.boundary.saturating_sub(2) {
            let dr = (next.r.values()[i] - prev.r.values()[i]) / (next.t - prev.t);
            let e = (dr - (n - 1.0) * lap.values()[i] - r[i] * r[i]).abs();
            if e > max {
                max = e;
                arg = d.radius(i);
            }
        }
        out.push(ResidualRecord {
            t: s.t,
            delta,
            max,
            argmax_r: arg,
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no snapshot has neighbours at ±{delta}; need three equally spaced checkpoints"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn manufactured(r_max: f64, h: f64) -> (ConformalMetric, ScalarField) {
        let d = Domain::radial(3, r_max, h).unwrap();
        let r0 = ScalarField::from_radial_fn(d, |r| 24.0 * (1.0 + r * r).powf(-2.5)).unwrap();
        (ConformalMetric::flat(d), r0)
    }

    #[test]
    fn flat_fixed_point() {
        let d = Domain::radial(3, 4.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let flow = Flow::new(&m, &ScalarField::constant(d, 0.0), 40).unwrap();
        let s0 = flow.initial_state().unwrap();
        for scheme in [Scheme::Explicit, Scheme::SemiImplicit] {
            let s1 = flow.step(&s0, flow.cfl_dt(&s0, 0.5), scheme).unwrap();
            assert!(s1.u.values().iter().all(|&v| v == 1.0));
            assert_eq!(s1.r.max_abs(), 0.0);
        }
        let s1 = flow.step(&s0, 10.0, Scheme::SemiImplicit).unwrap();
        assert!(s1.u.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cfl_formula() {
        let d = Domain::radial(3, 1.0, 0.01).unwrap();
        let m = ConformalMetric::flat(d);
        let flow = Flow::new(&m, &ScalarField::constant(d, 0.0), 100).unwrap();
        let s = flow.initial_state().unwrap();
        assert_relative_eq!(flow.cfl_dt(&s, 0.5), 0.5e-4 / 12.0, max_relative = 1e-14);
        assert_eq!(flow.cfl_dt(&s, 0.0), 0.0);
        let half = FlowState {
            u: ScalarField::constant(d, 0.5),
            ..s.clone()
        };
        assert_relative_eq!(
            flow.cfl_dt(&half, 0.5) / flow.cfl_dt(&s, 0.5),
            0.5f64.powf(4.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn explicit_step_respects_cfl() {
        let (m, r0) = manufactured(4.0, 0.05);
        let flow = Flow::new(&m, &r0, 80).unwrap();
        let s = flow.initial_state().unwrap();
        let too_big = 2.0 * flow.cfl_dt(&s, 1.0);
        assert!(matches!(
            flow.step(&s, too_big, Scheme::Explicit),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn initial_slope() {
        // u(0, dt) = 1 - 6 dt + O(dt²) for R0(0) = 24.
        let (m, r0) = manufactured(4.0, 0.02);
        let flow = Flow::new(&m, &r0, 200).unwrap();
        let s = flow.initial_state().unwrap();
        for scheme in [Scheme::Explicit, Scheme::SemiImplicit] {
            let dt = flow.cfl_dt(&s, 0.5);
            let s1 = flow.step(&s, dt, scheme).unwrap();
            let slope = (s1.u.values()[0] - 1.0) / dt;
            assert!((slope + 6.0).abs() < 1e-2, "{scheme:?}: {slope}");
        }
    }

    #[test]
    fn exterior_is_frozen() {
        let (m, r0) = manufactured(4.0, 0.05);
        let flow = Flow::new(&m, &r0, 40).unwrap();
        let s = flow.initial_state().unwrap();
        let s1 = flow.step(&s, 1e-3, Scheme::SemiImplicit).unwrap();
        assert!(s1.u.values()[40..].iter().all(|&v| v == 1.0));
        assert!(s1.u.values()[..40].iter().all(|&v| v < 1.0));
    }

    #[test]
    fn semi_implicit_is_second_order_in_time() {
        let (m, r0) = manufactured(4.0, 0.05);
        let flow = Flow::new(&m, &r0, 80).unwrap();
        let run = |dt: f64| {
            let plan = RunPlan {
                t_end: 0.2,
                checkpoints: vec![0.2],
                ledger_dt: None,
                triplet_dt: None,
                policy: DtPolicy::SemiImplicit { dt },
                max_steps: None,
            };
            run_on_domain(&flow, &plan)
                .unwrap()
                .snapshots
                .last()
                .unwrap()
                .u
                .values()[0]
        };
        // The ratio approaches 4 from above; first order would give 2, third 8.
        let (a, b, c) = (run(5e-4), run(2.5e-4), run(1.25e-4));
        let ratio = (a - b) / (b - c);
        assert!(ratio > 3.5 && ratio < 5.0, "{ratio}");
    }

    #[test]
    fn events_merge_and_land_exactly() {
        let mut plan = RunPlan::new(1.0, DtPolicy::SemiImplicit { dt: 0.03 });
        plan.ledger_dt = Some(0.25);
        plan.triplet_dt = Some(0.01);
        let ev = plan.events().unwrap();
        assert!(ev.windows(2).all(|w| w[1] > w[0]));
        for t in [0.01, 0.02, 0.09, 0.1, 0.11, 0.25, 0.5, 0.98, 0.99, 1.0] {
            assert!(ev.iter().any(|&e| (e - t).abs() < 1e-12), "{t} missing from {ev:?}");
        }
        let (m, r0) = manufactured(2.0, 0.1);
        let traj = run_on_domain(&Flow::new(&m, &r0, 20).unwrap(), &plan).unwrap();
        assert_eq!(traj.times()[1..], ev[..]);
    }

    #[test]
    fn ladder_validation() {
        let d = Domain::radial(3, 10.0, 0.1).unwrap();
        assert!(ExhaustionLadder::new(&d, &[2.0, 5.0, 10.0]).is_ok());
        assert!(ExhaustionLadder::new(&d, &[5.0, 2.0]).is_err());
        assert!(ExhaustionLadder::new(&d, &[2.05]).is_err());
        assert!(ExhaustionLadder::new(&d, &[11.0]).is_err());
        assert!(ExhaustionLadder::new(&d, &[]).is_err());
    }

    #[test]
    fn residual_needs_triplets() {
        let (m, r0) = manufactured(2.0, 0.1);
        let plan = RunPlan {
            t_end: 0.1,
            checkpoints: vec![0.1],
            ledger_dt: None,
            triplet_dt: None,
            max_steps: None,
            policy: DtPolicy::SemiImplicit { dt: 0.01 },
        };
        let traj = run_on_domain(&Flow::new(&m, &r0, 20).unwrap(), &plan).unwrap();
        assert!(matches!(
            scalar_evolution_residual(&traj, &m, 0.01, ResidualOperator::Evolving),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn negative_potential_is_refused() {
        let d = Domain::radial(3, 2.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let r0 = ScalarField::from_radial_fn(d, |r| 1.0 - r).unwrap();
        let flow = Flow::new(&m, &r0, 20).unwrap();
        let plan = RunPlan::new(0.1, DtPolicy::SemiImplicit { dt: 0.01 });
        assert!(matches!(run_on_domain(&flow, &plan), Err(Error::Precondition(_))));
    }

    #[test]
    fn extinction_is_reported() {
        // Constant R0 = 10 far from the boundary: u⁴ ≈ 1 - 10 t at the centre,
        // so the solution dies near t = 0.1.
        let d = Domain::radial(3, 20.0, 0.1).unwrap();
        let m = ConformalMetric::flat(d);
        let flow = Flow::new(&m, &ScalarField::constant(d, 10.0), 200).unwrap();
        let plan = RunPlan::new(1.0, DtPolicy::SemiImplicit { dt: 1e-3 });
        match run_on_domain(&flow, &plan) {
            Err(Error::FlowDegeneracy { t, .. }) => assert!((t - 0.1).abs() < 0.01, "{t}"),
            other => panic!("{:?}", other.map(|t| t.t_end())),
        }
    }

    #[test]
    fn step_budget_stops_the_run() {
        let (m, r0) = manufactured(2.0, 0.1);
        let mut plan = RunPlan::new(0.1, DtPolicy::SemiImplicit { dt: 1e-3 });
        plan.max_steps = Some(50);
        match run_on_domain(&Flow::new(&m, &r0, 20).unwrap(), &plan) {
            Err(Error::StepBudget { t, steps }) => {
                assert_eq!(steps, 50);
                assert!(t < 0.1);
            }
            other => panic!("{:?}", other.map(|t| t.t_end())),
        }
        plan.max_steps = Some(100);
        assert!(run_on_domain(&Flow::new(&m, &r0, 20).unwrap(), &plan).is_ok());
    }
}
