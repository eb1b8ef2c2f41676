//! Green kernels, radial Poisson potentials and the integrals of the average
//! and volume growth conditions.
//!
//! Everything is measured from the origin of a radial domain. Integrals that
//! run to infinity are split at the edge of the chart: the computed part uses
//! the grid quadrature of [`RadialMeasure`], the remainder is an analytic
//! power-law tail fitted to the outer octave of samples.

use crate::error::{Error, Result};
use crate::geometry::measure::CubicProfile;
use crate::geometry::{unit_sphere_area, ConformalMetric, RadialMeasure, ScalarField};

/// Relative tail uncertainty below which an integral counts as converged.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-3;

/// The flat Green function `G(x, y) = c |x - y|^{2-n}` of `-Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenKernel {
    n: usize,
    c: f64,
}

impl GreenKernel {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput(format!("dimension {n} < 3")));
        }
        Ok(GreenKernel {
            n,
            c: 1.0 / ((n as f64 - 2.0) * unit_sphere_area(n - 1)),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `1/((n-2) ω_{n-1})`.
    pub fn normalization(&self) -> f64 {
        self.c
    }

    pub fn eval(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::Singularity(d));
        }
        Ok(self.c * d.powf(2.0 - self.n as f64))
    }
}

pub fn green_kernel(n: usize, d: f64) -> Result<f64> {
    GreenKernel::new(n)?.eval(d)
}

/// Outcome of a half-line integral with a fitted tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageConditionReport {
    /// The integral up to the requested radius.
    pub value_at_rmax: f64,
    /// Analytic continuation of the fitted tail; infinite when the fit diverges.
    pub tail_correction: f64,
    /// Spread between tails fitted on the outer octave and the outer half octave.
    pub tail_estimate: f64,
    /// Fitted decay exponent `q` of the integrand `~ s^{-q}`.
    pub decay_exponent: f64,
    pub converged: bool,
}

impl AverageConditionReport {
    pub fn value(&self) -> f64 {
        self.value_at_rmax + self.tail_correction
    }
}

/// Least-squares slope of `log y` against `log x`.
fn log_slope(samples: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Samples with abscissa in `[end/ratio, end]`.
fn outer(samples: &[(f64, f64)], end: f64, ratio: f64) -> Vec<(f64, f64)> {
    samples.iter().copied().filter(|(x, _)| *x >= end / ratio).collect()
}

/// Tail `∫_S^∞ g` for `g ~ s^{-q}`, anchored at the computed end value.
fn tail_report(partial: f64, samples: &[(f64, f64)], end: f64, g_end: f64, tol: f64) -> AverageConditionReport {
    if g_end == 0.0 && samples.iter().all(|s| s.1 == 0.0) {
        return AverageConditionReport {
            value_at_rmax: partial,
            tail_correction: 0.0,
            tail_estimate: 0.0,
            decay_exponent: f64::INFINITY,
            converged: partial.is_finite(),
        };
    }
    let q_oct = log_slope(&outer(samples, end, 2.0)).map(|e| -e);
    let q_half = log_slope(&outer(samples, end, std::f64::consts::SQRT_2)).map(|e| -e);
    let (q, tail, estimate) = match (q_oct, q_half) {
        (Some(q), Some(q2)) if q > 1.0 && q2 > 1.0 => {
            let t = g_end * end / (q - 1.0);
            let t2 = g_end * end / (q2 - 1.0);
            (q, t, (t - t2).abs())
        }
        (q, _) => (q.unwrap_or(f64::NAN), f64::INFINITY, f64::INFINITY),
    };
    let total = partial + tail;
    AverageConditionReport {
        value_at_rmax: partial,
        tail_correction: tail,
        tail_estimate: estimate,
        decay_exponent: q,
        converged: estimate.is_finite() && estimate <= tol * total.abs(),
    }
}

fn require_radial(m: &ConformalMetric) -> Result<RadialMeasure> {
    let meas = RadialMeasure::new(m)?;
    if let Some((node, _)) = meas.volumes().iter().enumerate().skip(1).find(|(_, v)| **v <= 0.0) {
        return Err(Error::DegenerateMetric { node, value: 0.0 });
    }
    Ok(meas)
}

fn require_nonnegative(f: &ScalarField) -> Result<()> {
    match f.values().iter().position(|&v| v < 0.0) {
        Some(i) => Err(Error::Precondition(format!(
            "source must be nonnegative, f = {} at node {i}",
            f.values()[i]
        ))),
        None => Ok(()),
    }
}

/// Enclosed mass `∫_{B(r)} f dv` for arbitrary chart radius `r`.
struct Mass<'a> {
    meas: &'a RadialMeasure,
    f: CubicProfile,
    nodal: Vec<f64>,
}

impl<'a> Mass<'a> {
    fn new(meas: &'a RadialMeasure, f: &ScalarField) -> Self {
        let f = meas.profile(f.values());
        let nodal = meas.cumulative(|x| f.eval(x) * meas.volume_density(x));
        Mass { meas, f, nodal }
    }

    fn at(&self, x: f64) -> f64 {
        self.meas
            .running(&self.nodal, x, |y| self.f.eval(y) * self.meas.volume_density(y))
    }
}

fn chart_limit(meas: &RadialMeasure, s: f64) -> Result<f64> {
    let s_max = meas.max_geodesic_radius();
    if s > s_max * (1.0 + 1e-12) {
        return Err(Error::OutOfChart {
            requested: s,
            available: s_max,
        });
    }
    meas.chart_radius(s)
}

/// `∫_0^S (s/Vol(s)) ∫_{B(s)} f dv ds`, `S` a geodesic radius within the chart.
pub fn average_integral(m: &ConformalMetric, f: &ScalarField, r_max_int: f64) -> Result<AverageConditionReport> {
    average_integral_with(m, f, r_max_int, DEFAULT_TAIL_TOLERANCE)
}

pub fn average_integral_with(
    m: &ConformalMetric,
    f: &ScalarField,
    r_max_int: f64,
    tol: f64,
) -> Result<AverageConditionReport> {
    m.factor().same_domain(f)?;
    require_nonnegative(f)?;
    let meas = require_radial(m)?;
    if !(r_max_int > 0.0) {
        return Err(Error::InvalidRange(format!("upper limit {r_max_int} must be positive")));
    }
    let b = chart_limit(&meas, r_max_int)?;
    let mass = Mass::new(&meas, f);
    let g = |x: f64| meas.geodesic_radius(x) * mass.at(x) / meas.volume(x);
    let partial = meas.integrate(0.0, b, |x| g(x) * meas.length_density(x));
    let mut samples: Vec<(f64, f64)> = (1..meas.nodes())
        .map(|i| (meas.geodesic_radii()[i], i))
        .filter(|(s, _)| *s < r_max_int)
        .map(|(s, i)| (s, s * mass.nodal[i] / meas.volumes()[i]))
        .collect();
    let g_end = g(b);
    samples.push((r_max_int, g_end));
    Ok(tail_report(partial, &samples, r_max_int, g_end, tol))
}

/// `∫_1^S s/Vol(s) ds`; convergence as `S → ∞` certifies non-parabolicity.
pub fn volume_growth_integral(m: &ConformalMetric, r_max_int: f64) -> Result<AverageConditionReport> {
    volume_growth_integral_with(m, r_max_int, DEFAULT_TAIL_TOLERANCE)
}

pub fn volume_growth_integral_with(m: &ConformalMetric, r_max_int: f64, tol: f64) -> Result<AverageConditionReport> {
    if !(r_max_int > 1.0) {
        return Err(Error::InvalidRange(format!("upper limit {r_max_int} must exceed 1")));
    }
    let meas = require_radial(m)?;
    let b = chart_limit(&meas, r_max_int)?;
    let a = meas.chart_radius(1.0)?;
    let g = |x: f64| meas.geodesic_radius(x) / meas.volume(x);
    let partial = meas.integrate(a, b, |x| g(x) * meas.length_density(x));
    let mut samples: Vec<(f64, f64)> = (1..meas.nodes())
        .map(|i| (meas.geodesic_radii()[i], meas.volumes()[i]))
        .filter(|(s, _)| *s < r_max_int)
        .map(|(s, v)| (s, s / v))
        .collect();
    let g_end = g(b);
    samples.push((r_max_int, g_end));
    Ok(tail_report(partial, &samples, r_max_int, g_end, tol))
}

/// Solves `-Δ_g w = f` for radial `f ≥ 0`, with `w → 0` at infinity.
///
/// In the chart the equation reads `(ω r^{n-1} U² w')' = -ω r^{n-1} U^{2n/(n-2)} f`,
/// so `w(r) = ∫_r^∞ M(σ) / (ω σ^{n-1} U(σ)²) dσ` with `M` the enclosed mass.
/// Beyond the chart both the mass density and the flux coefficient are
/// continued as power laws fitted to the outer octave.
pub fn solve_poisson(m: &ConformalMetric, f: &ScalarField) -> Result<ScalarField> {
    solve_poisson_with(m, f, DEFAULT_TAIL_TOLERANCE)
}

pub fn solve_poisson_with(m: &ConformalMetric, f: &ScalarField, tol: f64) -> Result<ScalarField> {
    m.factor().same_domain(f)?;
    require_nonnegative(f)?;
    let meas = require_radial(m)?;
    let d = *m.domain();
    if f.values().iter().all(|&v| v == 0.0) {
        return Ok(ScalarField::constant(d, 0.0));
    }
    let n = d.dim() as f64;
    let omega = unit_sphere_area(d.dim() - 1);
    let u = meas.profile(m.factor().values());
    let mass = Mass::new(&meas, f);
    let flux = |x: f64| omega * x.powf(n - 1.0) * u.eval(x).powi(2);
    let slope = |x: f64| mass.at(x) / flux(x);

    let nodes = meas.nodes();
    let h = d.h();
    let mut w = vec![0.0; nodes];
    for i in (0..nodes - 1).rev() {
        let a = i as f64 * h;
        w[i] = w[i + 1] + crate::geometry::measure::gauss(a, a + h, slope);
    }

    let r_end = d.r_max();
    let fv: Vec<(f64, f64)> = (1..nodes)
        .map(|i| {
            let r = d.radius(i);
            (r, f.values()[i] * meas.volume_density(r))
        })
        .collect();
    let area: Vec<(f64, f64)> = (1..nodes).map(|i| (d.radius(i), flux(d.radius(i)))).collect();
    let tail = |ratio: f64| -> Result<f64> {
        potential_tail(
            &outer(&fv, r_end, ratio),
            &outer(&area, r_end, ratio),
            r_end,
            mass.nodal[nodes - 1],
        )
    };
    let t = tail(2.0)?;
    let t2 = tail(std::f64::consts::SQRT_2)?;
    let w0 = w[0] + t;
    if (t - t2).abs() > tol * w0 {
        return Err(Error::DivergentPotential(format!(
            "tail {t:.6e} unstable under refit ({t2:.6e})"
        )));
    }
    for v in w.iter_mut() {
        *v += t;
    }
    ScalarField::new(d, w)
}

/// `∫_R^∞ M(σ)/A(σ) dσ` for a mass density `~ σ^α` and flux coefficient
/// `A ~ σ^β`, both anchored at their values at `R`.
fn potential_tail(density: &[(f64, f64)], area: &[(f64, f64)], r: f64, mass_r: f64) -> Result<f64> {
    let beta = log_slope(area).ok_or_else(|| Error::DivergentPotential("area fit failed".into()))?;
    let a_end = area.last().unwrap().1;
    let c2 = a_end / r.powf(beta);
    if beta <= 1.0 {
        return Err(Error::DivergentPotential(format!("area exponent {beta:.4} ≤ 1")));
    }
    let d_end = density.last().unwrap().1;
    if d_end == 0.0 {
        return Ok(mass_r * r.powf(1.0 - beta) / (c2 * (beta - 1.0)));
    }
    let alpha = log_slope(density).ok_or_else(|| Error::DivergentPotential("density fit failed".into()))?;
    if beta - alpha - 2.0 <= 0.0 {
        return Err(Error::DivergentPotential(format!(
            "source decays too slowly (density exponent {alpha:.4}, area exponent {beta:.4})"
        )));
    }
    let c1 = d_end / r.powf(alpha);
    let k0 = mass_r - c1 * r.powf(alpha + 1.0) / (alpha + 1.0);
    Ok(k0 * r.powf(1.0 - beta) / (c2 * (beta - 1.0))
        + c1 * r.powf(alpha + 2.0 - beta) / ((alpha + 1.0) * c2 * (beta - alpha - 2.0)))
}

/// Tabulated `∫_d^∞ s/Vol(s) ds` on the chart, with fitted tail.
pub struct GreenComparison {
    meas: RadialMeasure,
    from_node: Vec<f64>,
    tail: f64,
}

impl GreenComparison {
    pub fn new(m: &ConformalMetric) -> Result<Self> {
        let meas = require_radial(m)?;
        let nodes = meas.nodes();
        let h = meas.h();
        let g = |x: f64| meas.geodesic_radius(x) / meas.volume(x) * meas.length_density(x);
        let mut from_node = vec![0.0; nodes];
        for i in (1..nodes - 1).rev() {
            let a = i as f64 * h;
            from_node[i] = from_node[i + 1] + crate::geometry::measure::gauss(a, a + h, g);
        }
        let end = meas.max_geodesic_radius();
        let samples: Vec<(f64, f64)> = (1..nodes)
            .map(|i| (meas.geodesic_radii()[i], meas.geodesic_radii()[i] / meas.volumes()[i]))
            .collect();
        let g_end = samples.last().unwrap().1;
        let report = tail_report(0.0, &samples, end, g_end, f64::INFINITY);
        if !report.tail_correction.is_finite() {
            return Err(Error::DivergentPotential(format!(
                "s/Vol(s) decays like s^-{:.4}, not integrable",
                report.decay_exponent
            )));
        }
        Ok(GreenComparison {
            meas,
            from_node,
            tail: report.tail_correction,
        })
    }

    pub fn eval(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::Singularity(d));
        }
        let x = chart_limit(&self.meas, d)?;
        let i = self.meas.cell_of(x);
        let hi = (i + 1) as f64 * self.meas.h();
        let g = |y: f64| self.meas.geodesic_radius(y) / self.meas.volume(y) * self.meas.length_density(y);
        Ok(self.tail + self.from_node[i + 1] + crate::geometry::measure::gauss(x, hi, g))
    }
}

/// Green function of `-Δ_g` with pole at the origin,
/// `G(r) = ∫_r^∞ dσ / (ω σ^{n-1} U(σ)²)`, as a function of geodesic distance.
/// On a flat base it is the flat kernel.
pub struct PoleGreen {
    meas: RadialMeasure,
    omega: f64,
    u: CubicProfile,
    from_node: Vec<f64>,
    tail: f64,
}

impl PoleGreen {
    pub fn new(m: &ConformalMetric) -> Result<Self> {
        let meas = require_radial(m)?;
        let d = *m.domain();
        let n = d.dim() as f64;
        let omega = unit_sphere_area(d.dim() - 1);
        let u = meas.profile(m.factor().values());
        let nodes = meas.nodes();
        let h = d.h();
        let flux = |x: f64| omega * x.powf(n - 1.0) * u.eval(x).powi(2);
        let mut from_node = vec![0.0; nodes];
        for i in (1..nodes - 1).rev() {
            let a = i as f64 * h;
            from_node[i] = from_node[i + 1] + crate::geometry::measure::gauss(a, a + h, |x| 1.0 / flux(x));
        }
        let area: Vec<(f64, f64)> = (1..nodes).map(|i| (d.radius(i), flux(d.radius(i)))).collect();
        let end = d.r_max();
        let beta =
            log_slope(&outer(&area, end, 2.0)).ok_or_else(|| Error::DivergentPotential("area fit failed".into()))?;
        if beta <= 1.0 {
            return Err(Error::DivergentPotential(format!(
                "area exponent {beta:.4} ≤ 1, no positive Green function"
            )));
        }
        let tail = end / (flux(end) * (beta - 1.0));
        Ok(PoleGreen {
            meas,
            omega,
            u,
            from_node,
            tail,
        })
    }

    pub fn eval(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::Singularity(d));
        }
        let x = chart_limit(&self.meas, d)?;
        let i = self.meas.cell_of(x);
        let hi = (i + 1) as f64 * self.meas.h();
        let n = self.meas.dim() as f64;
        let g = |y: f64| 1.0 / (self.omega * y.powf(n - 1.0) * self.u.eval(y).powi(2));
        Ok(self.tail + self.from_node[i + 1] + crate::geometry::measure::gauss(x, hi, g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiYauStats {
    /// `(d, G / ∫_d^∞ s/Vol)` per sample.
    pub ratios: Vec<(f64, f64)>,
    pub min: f64,
    pub max: f64,
}

/// Ratios of Green values against the volume comparison integral.
pub fn liyau_bound_check(m: &ConformalMetric, pairs: &[(f64, f64)]) -> Result<LiYauStats> {
    let cmp = GreenComparison::new(m)?;
    let mut ratios = Vec::with_capacity(pairs.len());
    for &(d, g) in pairs {
        ratios.push((d, g / cmp.eval(d)?));
    }
    let min = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max = ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(LiYauStats { ratios, min, max })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FubiniChain {
    pub w_origin: f64,
    pub average: f64,
    /// Constant `C` in `w(0) ≤ C · average`.
    pub constant: f64,
    /// Measured `w(0) / average`; the flat value is `1/n`.
    pub ratio: f64,
    pub holds: bool,
}

/// Compares the potential at the origin with the average-condition integral.
pub fn fubini_chain_check(m: &ConformalMetric, f: &ScalarField) -> Result<FubiniChain> {
    let report = average_integral(m, f, RadialMeasure::new(m)?.max_geodesic_radius())?;
    if !report.converged {
        return Err(Error::DivergentPotential(format!(
            "average integral not converged (tail estimate {:.3e})",
            report.tail_estimate
        )));
    }
    let w = solve_poisson(m, f)?;
    let w0 = w.values()[0];
    let average = report.value();
    let constant = 1.0;
    Ok(FubiniChain {
        w_origin: w0,
        average,
        constant,
        ratio: if average > 0.0 { w0 / average } else { 0.0 },
        holds: w0 <= constant * average * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{laplace_beltrami, Domain};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn flat(r_max: f64, h: f64) -> ConformalMetric {
        ConformalMetric::flat(Domain::radial(3, r_max, h).unwrap())
    }

    fn bump(d: Domain) -> ScalarField {
        ScalarField::from_radial_fn(d, |r| 3.0 * (1.0 + r * r).powf(-2.5)).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_relative_eq!(green_kernel(3, 1.0).unwrap(), 0.0795775, epsilon = 1e-7);
        assert_relative_eq!(green_kernel(3, 2.0).unwrap(), 0.0397887, epsilon = 1e-7);
        assert!(matches!(green_kernel(3, 0.0), Err(Error::Singularity(_))));
        assert_relative_eq!(green_kernel(4, 1.0).unwrap(), 1.0 / (4.0 * PI * PI), epsilon = 1e-15);
    }

    #[test]
    fn manufactured_potential() {
        let m = flat(40.0, 0.01);
        let w = solve_poisson(&m, &bump(*m.domain())).unwrap();
        let mut err: f64 = 0.0;
        for (i, v) in w.values().iter().enumerate() {
            let r = m.domain().radius(i);
            err = err.max((v - (1.0 + r * r).powf(-0.5)).abs());
        }
        assert!(err < 1e-4, "{err}");
        assert_relative_eq!(w.values()[100], 0.5f64.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn zero_source_and_negative_source() {
        let m = flat(10.0, 0.1);
        let d = *m.domain();
        let w = solve_poisson(&m, &ScalarField::constant(d, 0.0)).unwrap();
        assert_eq!(w.max_abs(), 0.0);
        let f = ScalarField::from_radial_fn(d, |r| 1.0 - r).unwrap();
        assert!(matches!(solve_poisson(&m, &f), Err(Error::Precondition(_))));
    }

    #[test]
    fn shell_theorem() {
        // Uniform ball of radius 1 and mass 1: w = 1/(4π r) outside.
        let m = flat(20.0, 0.01);
        let rho = 3.0 / (4.0 * PI);
        // The jump is interpolated, so compare against the mass the quadrature sees.
        let f = ScalarField::from_radial_fn(*m.domain(), |r| if r <= 1.0 { rho } else { 0.0 }).unwrap();
        let w = solve_poisson(&m, &f).unwrap();
        let meas = RadialMeasure::new(&m).unwrap();
        let mass = Mass::new(&meas, &f).at(20.0);
        for r in [2.0, 5.0, 10.0, 20.0] {
            let i = m.domain().node_at(r).unwrap();
            assert_relative_eq!(w.values()[i], mass / (4.0 * PI * r), max_relative = 1e-9);
        }
        // The interpolated edge adds O(h) mass.
        assert!((mass - 1.0).abs() < 3.0 * 0.01, "{mass}");
    }

    #[test]
    fn potential_residual() {
        let m = flat(40.0, 0.02);
        let f = bump(*m.domain());
        let w = solve_poisson(&m, &f).unwrap();
        let lap = laplace_beltrami(&m, &w).unwrap();
        let res = lap
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a + b).abs())
            .fold(0.0, f64::max);
        assert!(res / f.max_abs() <= 10.0 * 0.02 * 0.02, "{res}");
    }

    #[test]
    fn slow_source_is_divergent() {
        let m = flat(40.0, 0.05);
        let f = ScalarField::from_radial_fn(*m.domain(), |r| (1.0 + r).powi(-2)).unwrap();
        assert!(matches!(solve_poisson(&m, &f), Err(Error::DivergentPotential(_))));
    }

    #[test]
    fn average_integral_closed_form() {
        let m = flat(40.0, 0.01);
        let rep = average_integral(&m, &bump(*m.domain()), 40.0).unwrap();
        // ∫_0^S 3r(1+r²)^{-3/2} dr = 3 (1 - (1+S²)^{-1/2})
        assert_relative_eq!(
            rep.value_at_rmax,
            3.0 * (1.0 - (1.0 + 1600.0f64).powf(-0.5)),
            epsilon = 1e-6
        );
        assert!((rep.value() - 3.0).abs() < 5e-4, "{:?}", rep);
        assert!(rep.converged);
        let zero = average_integral(&m, &ScalarField::constant(*m.domain(), 0.0), 40.0).unwrap();
        assert_eq!(zero.value(), 0.0);
        assert!(zero.converged);
    }

    #[test]
    fn average_integral_divergent_source() {
        let m = flat(40.0, 0.02);
        let f = ScalarField::from_radial_fn(*m.domain(), |r| (1.0 + r).powi(-2)).unwrap();
        let rep = average_integral(&m, &f, 40.0).unwrap();
        assert!(!rep.converged, "{rep:?}");
    }

    #[test]
    fn volume_growth() {
        let m = flat(40.0, 0.02);
        let rep = volume_growth_integral(&m, 40.0).unwrap();
        assert!((rep.value() - 3.0 / (4.0 * PI)).abs() < 1e-6, "{rep:?}");
        assert!(rep.converged);
        assert!(matches!(volume_growth_integral(&m, 1.0), Err(Error::InvalidRange(_))));
        assert!(matches!(
            volume_growth_integral(&m, 41.0),
            Err(Error::OutOfChart { .. })
        ));
    }

    #[test]
    fn liyau_flat_ratio() {
        for n in [3usize, 4] {
            let m = ConformalMetric::flat(Domain::radial(n, 40.0, 0.02).unwrap());
            let pairs: Vec<(f64, f64)> = [0.5, 1.0, 7.3, 20.0]
                .iter()
                .map(|&d| (d, green_kernel(n, d).unwrap()))
                .collect();
            let stats = liyau_bound_check(&m, &pairs).unwrap();
            assert!((stats.min - 1.0 / n as f64).abs() < 1e-6, "{stats:?}");
            assert!((stats.max - 1.0 / n as f64).abs() < 1e-6, "{stats:?}");
        }
    }

    #[test]
    fn pole_green_matches_flat_kernel() {
        let m = flat(40.0, 0.02);
        let g = PoleGreen::new(&m).unwrap();
        for d in [0.01, 0.5, 3.3, 20.0, 40.0] {
            assert_relative_eq!(g.eval(d).unwrap(), green_kernel(3, d).unwrap(), max_relative = 1e-6);
        }
        assert!(g.eval(0.0).is_err());
    }

    #[test]
    fn fubini_chain() {
        let m = flat(40.0, 0.02);
        let chain = fubini_chain_check(&m, &bump(*m.domain())).unwrap();
        assert!(chain.holds);
        assert!((chain.ratio - 1.0 / 3.0).abs() < 1e-3, "{chain:?}");
        let zero = fubini_chain_check(&m, &ScalarField::constant(*m.domain(), 0.0)).unwrap();
        assert_eq!((zero.w_origin, zero.average), (0.0, 0.0));
        assert!(zero.holds);
    }
}
