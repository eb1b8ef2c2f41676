//! Grids, grid functions and the conformal calculus of metrics `g = U^{4/(n-2)} δ`.
//!
//! Two discretizations are supported. Radial mode samples a rotationally
//! symmetric field on `r = 0, h, 2h, ..., r_max` and is the production path.
//! Box mode samples on the cube `[-r_max, r_max]^3` (n = 3 only) and exists to
//! cross-check the radial formulas against a genuinely three dimensional
//! stencil.

pub(crate) mod measure;
pub(crate) mod stencil;

pub use measure::RadialMeasure;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};

/// Area of the unit `(k)`-sphere embedded in `R^{k+1}`, i.e. `ω_k`.
pub fn unit_sphere_area(k: usize) -> f64 {
    // ω_{k+2} = 2π ω_k / (k+1)
    let mut area = if k.is_multiple_of(2) {
        2.0
    } else {
        2.0 * std::f64::consts::PI
    };
    let mut j = if k.is_multiple_of(2) { 0 } else { 1 };
    while j < k {
        area *= 2.0 * std::f64::consts::PI / (j + 1) as f64;
        j += 2;
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Radial,
    Box,
}

/// Discretization descriptor.
///
/// `cells` counts grid spacings along one radius, so a radial domain has
/// `cells + 1` nodes and a box domain `(2 cells + 1)^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    mode: Mode,
    n: usize,
    r_max: f64,
    h: f64,
    cells: usize,
}

impl Domain {
    pub fn radial(n: usize, r_max: f64, h: f64) -> Result<Self> {
        Self::build(Mode::Radial, n, r_max, h)
    }

    /// Cube `[-r_max, r_max]^3`. Box mode is only implemented for `n = 3`.
    pub fn cube(r_max: f64, h: f64) -> Result<Self> {
        Self::build(Mode::Box, 3, r_max, h)
    }

    fn build(mode: Mode, n: usize, r_max: f64, h: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidDomain(format!("dimension {n} < 3")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidDomain(format!("spacing h = {h} must be positive")));
        }
        if !(r_max >= 10.0 * h * (1.0 - 1e-12)) || !r_max.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "r_max = {r_max} must be at least 10 h = {}",
                10.0 * h
            )));
        }
        let ratio = r_max / h;
        let cells = ratio.round();
        if (ratio - cells).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidDomain(format!(
                "r_max = {r_max} is not a multiple of h = {h}"
            )));
        }
        Ok(Domain {
            mode,
            n,
            r_max,
            h,
            cells: cells as usize,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Nodes along one axis.
    pub fn axis_nodes(&self) -> usize {
        match self.mode {
            Mode::Radial => self.cells + 1,
            Mode::Box => 2 * self.cells + 1,
        }
    }

    pub fn node_count(&self) -> usize {
        match self.mode {
            Mode::Radial => self.cells + 1,
            Mode::Box => self.axis_nodes().pow(3),
        }
    }

    pub fn is_radial(&self) -> bool {
        self.mode == Mode::Radial
    }

    /// Radial coordinate of node `i` (radial mode) or distance of node `i`
    /// from the centre of the cube (box mode).
    pub fn radius(&self, i: usize) -> f64 {
        match self.mode {
            Mode::Radial => i as f64 * self.h,
            Mode::Box => {
                let x = self.coords(i);
                (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
            }
        }
    }

    /// Node index of radius `r`, if `r` is a grid node.
    pub fn node_at(&self, r: f64) -> Option<usize> {
        let x = r / self.h;
        let i = x.round();
        if i < 0.0 || i > self.cells as f64 || (x - i).abs() > 1e-9 * x.max(1.0) {
            return None;
        }
        Some(i as usize)
    }

    /// Cartesian coordinates of a box node.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let m = self.axis_nodes();
        let (i, j, k) = (idx / (m * m), (idx / m) % m, idx % m);
        let c = self.cells as f64;
        [
            (i as f64 - c) * self.h,
            (j as f64 - c) * self.h,
            (k as f64 - c) * self.h,
        ]
    }

    pub(crate) fn box_index(&self, i: usize, j: usize, k: usize) -> usize {
        let m = self.axis_nodes();
        (i * m + j) * m + k
    }
}

/// Real values sampled on the nodes of a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    domain: Domain,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} nodes",
                values.len(),
                domain.node_count()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(ScalarField { domain, values })
    }

    pub fn constant(domain: Domain, value: f64) -> Self {
        ScalarField {
            domain,
            values: vec![value; domain.node_count()],
        }
    }

    /// Samples a radial profile `f(|x|)`; in box mode the profile is evaluated
    /// at the Euclidean distance of each node from the centre.
    pub fn from_radial_fn(domain: Domain, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..domain.node_count()).map(|i| f(domain.radius(i))).collect();
        Self::new(domain, values)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.domain, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_domain(other)?;
        Self::new(
            self.domain,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn same_domain(&self, other: &ScalarField) -> Result<()> {
        if self.domain == other.domain {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A metric `g = U^{4/(n-2)} δ` conformal to the flat metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalMetric {
    factor: ScalarField,
}

impl ConformalMetric {
    pub fn new(factor: ScalarField) -> Result<Self> {
        check_positive(&factor)?;
        Ok(ConformalMetric { factor })
    }

    pub fn flat(domain: Domain) -> Self {
        ConformalMetric {
            factor: ScalarField::constant(domain, 1.0),
        }
    }

    pub fn factor(&self) -> &ScalarField {
        &self.factor
    }

    pub fn domain(&self) -> &Domain {
        self.factor.domain()
    }

    pub fn dim(&self) -> usize {
        self.factor.domain().dim()
    }

    /// `p = (n+2)/(n-2)`.
    pub fn exponent(&self) -> f64 {
        exponent(self.dim())
    }

    /// `c_n = (n-2)/(4(n-1))`.
    pub fn coupling(&self) -> f64 {
        coupling(self.dim())
    }

    /// `C(n) = 4/(n-2)`, the constant relating `∫R dt` to `-log u`.
    pub fn log_barrier_constant(&self) -> f64 {
        log_barrier_constant(self.dim())
    }

    /// The metric `(u U)^{4/(n-2)} δ`, i.e. `u^{4/(n-2)} g`.
    pub fn rescaled(&self, u: &ScalarField) -> Result<ConformalMetric> {
        ConformalMetric::new(self.factor.zip_map(u, |a, b| a * b)?)
    }

    /// Pointwise `U^{4/(n-2)}`, the conformal factor of `g` itself.
    pub fn metric_weight(&self) -> Vec<f64> {
        let q = 4.0 / (self.dim() as f64 - 2.0);
        self.factor.values().iter().map(|u| u.powf(q)).collect()
    }
}

pub fn exponent(n: usize) -> f64 {
    (n as f64 + 2.0) / (n as f64 - 2.0)
}

pub fn coupling(n: usize) -> f64 {
    (n as f64 - 2.0) / (4.0 * (n as f64 - 1.0))
}

pub fn log_barrier_constant(n: usize) -> f64 {
    4.0 / (n as f64 - 2.0)
}

fn check_positive(f: &ScalarField) -> Result<()> {
    match f.values().iter().position(|&v| v <= 0.0) {
        Some(node) => Err(Error::DegenerateMetric {
            node,
            value: f.values()[node],
        }),
        None => Ok(()),
    }
}

/// Ricci curvature of a conformally flat metric, as eigenvalues of `g^{-1} Ric`.
#[derive(Debug, Clone, PartialEq)]
pub enum RicciDiagonal {
    /// Radial mode: the radial eigenvalue and the `(n-1)`-fold tangential one.
    Radial {
        radial: ScalarField,
        tangential: ScalarField,
    },
    /// Box mode: the full mixed tensor `g^{-1} Ric` per node (symmetric).
    Full { domain: Domain, tensors: Vec<Matrix3<f64>> },
}

impl RicciDiagonal {
    /// `tr_g Ric` per node.
    pub fn trace(&self) -> Vec<f64> {
        match self {
            RicciDiagonal::Radial { radial, tangential } => {
                let k = (radial.domain().dim() - 1) as f64;
                radial
                    .values()
                    .iter()
                    .zip(tangential.values())
                    .map(|(a, b)| a + k * b)
                    .collect()
            }
            RicciDiagonal::Full { tensors, .. } => tensors.iter().map(|m| m.trace()).collect(),
        }
    }

    /// Smallest eigenvalue of `g^{-1} Ric` per node.
    pub fn min_eigenvalue(&self) -> Vec<f64> {
        match self {
            RicciDiagonal::Radial { radial, tangential } => radial
                .values()
                .iter()
                .zip(tangential.values())
                .map(|(a, b)| a.min(*b))
                .collect(),
            RicciDiagonal::Full { tensors, .. } => tensors
                .iter()
                .map(|m| SymmetricEigen::new(*m).eigenvalues.min())
                .collect(),
        }
    }
}

/// Discrete flat Laplacian.
///
/// Radial mode uses `f'' + (n-1) f'/r` with central differences and the limit
/// `n f''(0) ≈ 2n (f_1 - f_0)/h²` at the origin; the outer node uses one-sided
/// second-order stencils. Box mode is the 7-point Laplacian with one-sided
/// closures on the faces.
pub fn laplacian_flat(f: &ScalarField) -> Result<ScalarField> {
    let d = *f.domain();
    if d.axis_nodes() < 5 {
        return Err(Error::InvalidDomain(format!(
            "{} nodes per axis, need at least 5",
            d.axis_nodes()
        )));
    }
    let values = match d.mode() {
        Mode::Radial => stencil::radial_laplacian(f.values(), d.h(), d.dim()),
        Mode::Box => stencil::box_laplacian(&d, f.values()),
    };
    ScalarField::new(d, values)
}

/// `R = U^{-p} [ -(4(n-1)/(n-2)) ΔU + R_base U ]`, the scalar curvature of
/// `U^{4/(n-2)} g_base` where `g_base` is the flat metric carrying the
/// potential `R_base` (zero for a genuinely flat base).
pub fn scalar_curvature(m: &ConformalMetric, r0_base: &ScalarField) -> Result<ScalarField> {
    m.factor().same_domain(r0_base)?;
    let n = m.dim() as f64;
    let p = m.exponent();
    let k = 4.0 * (n - 1.0) / (n - 2.0);
    let lap = laplacian_flat(m.factor())?;
    let values = m
        .factor()
        .values()
        .iter()
        .zip(lap.values())
        .zip(r0_base.values())
        .map(|((&u, &du), &r0)| u.powf(-p) * (-k * du + r0 * u))
        .collect();
    ScalarField::new(*m.domain(), values)
}

/// Laplace–Beltrami operator of `g = U^{4/(n-2)} δ`:
/// `Δ_g f = U^{-4/(n-2)} (Δf + 2 ∇U/U · ∇f)`.
pub fn laplace_beltrami(m: &ConformalMetric, f: &ScalarField) -> Result<ScalarField> {
    m.factor().same_domain(f)?;
    let d = *f.domain();
    let lap = laplacian_flat(f)?;
    let weight = m.metric_weight();
    let u = m.factor().values();
    let values = match d.mode() {
        Mode::Radial => {
            let du = stencil::radial_gradient(u, d.h());
            let df = stencil::radial_gradient(f.values(), d.h());
            (0..d.node_count())
                .map(|i| (lap.values()[i] + 2.0 * du[i] / u[i] * df[i]) / weight[i])
                .collect()
        }
        Mode::Box => {
            let du = stencil::box_gradient(&d, u);
            let df = stencil::box_gradient(&d, f.values());
            (0..d.node_count())
                .map(|i| {
                    let dot: f64 = (0..3).map(|a| du[a][i] * df[a][i]).sum();
                    (lap.values()[i] + 2.0 * dot / u[i]) / weight[i]
                })
                .collect()
        }
    };
    ScalarField::new(d, values)
}

/// Squared gradient norm `|∇f|²_g = U^{-4/(n-2)} |∇f|²` and the (radial)
/// derivative `f'`. Box mode returns the Euclidean norm of the gradient in
/// place of `f'`.
pub fn gradient_norm_sq(m: &ConformalMetric, f: &ScalarField) -> Result<ScalarField> {
    m.factor().same_domain(f)?;
    let d = *f.domain();
    let weight = m.metric_weight();
    let values = match d.mode() {
        Mode::Radial => stencil::radial_gradient(f.values(), d.h())
            .iter()
            .zip(&weight)
            .map(|(g, w)| g * g / w)
            .collect(),
        Mode::Box => {
            let g = stencil::box_gradient(&d, f.values());
            (0..d.node_count())
                .map(|i| (g[0][i].powi(2) + g[1][i].powi(2) + g[2][i].powi(2)) / weight[i])
                .collect()
        }
    };
    ScalarField::new(d, values)
}

/// Radial derivative `f'` (radial mode only).
pub fn radial_derivative(f: &ScalarField) -> Result<ScalarField> {
    let d = *f.domain();
    if !d.is_radial() {
        return Err(Error::RadialOnly);
    }
    ScalarField::new(d, stencil::radial_gradient(f.values(), d.h()))
}

/// Ricci tensor of `g = e^{2φ} δ`, `φ = (2/(n-2)) log U`:
/// `Ric = -(n-2)(∇²φ - dφ⊗dφ) - (Δφ + (n-2)|∇φ|²) δ`,
/// reported as eigenvalues relative to `g`.
pub fn ricci_conformal(m: &ConformalMetric) -> Result<RicciDiagonal> {
    let d = *m.domain();
    let n = d.dim() as f64;
    let s = 2.0 / (n - 2.0);
    let u = m.factor().values();
    let weight = m.metric_weight();
    match d.mode() {
        Mode::Radial => {
            let h = d.h();
            let du = stencil::radial_gradient(u, h);
            let ddu = stencil::radial_second(u, h);
            let mut radial = Vec::with_capacity(u.len());
            let mut tangential = Vec::with_capacity(u.len());
            for i in 0..u.len() {
                let q = du[i] / u[i];
                let dphi = s * q;
                let ddphi = s * (ddu[i] / u[i] - q * q);
                let dphi_over_r = if i == 0 { ddphi } else { dphi / d.radius(i) };
                let lap_phi = ddphi + (n - 1.0) * dphi_over_r;
                let ric_rr = -(n - 2.0) * ddphi - lap_phi;
                let ric_tt = -(n - 2.0) * dphi_over_r - lap_phi - (n - 2.0) * dphi * dphi;
                radial.push(ric_rr / weight[i]);
                tangential.push(ric_tt / weight[i]);
            }
            Ok(RicciDiagonal::Radial {
                radial: ScalarField::new(d, radial)?,
                tangential: ScalarField::new(d, tangential)?,
            })
        }
        Mode::Box => {
            let log_u: Vec<f64> = u.iter().map(|v| s * v.ln()).collect();
            // dφ from ∇U/U; the Hessian from differencing that gradient.
            let grad_u = stencil::box_gradient(&d, u);
            let dphi: Vec<Vec<f64>> = grad_u
                .iter()
                .map(|g| g.iter().zip(u).map(|(a, b)| s * a / b).collect())
                .collect();
            let second = stencil::box_second_diagonal(&d, &log_u);
            let cross: Vec<[Vec<f64>; 3]> = dphi.iter().map(|c| stencil::box_gradient(&d, c)).collect();
            let tensors = (0..d.node_count())
                .map(|i| {
                    let mut hess = Matrix3::zeros();
                    for a in 0..3 {
                        for b in 0..3 {
                            hess[(a, b)] = if a == b {
                                second[a][i]
                            } else {
                                0.5 * (cross[a][b][i] + cross[b][a][i])
                            };
                        }
                    }
                    let g = nalgebra::Vector3::new(dphi[0][i], dphi[1][i], dphi[2][i]);
                    let lap_phi = hess.trace();
                    let ric = -(n - 2.0) * (hess - g * g.transpose())
                        - Matrix3::identity() * (lap_phi + (n - 2.0) * g.norm_squared());
                    ric / weight[i]
                })
                .collect();
            Ok(RicciDiagonal::Full { domain: d, tensors })
        }
    }
}

/// Volume of the geodesic ball of radius `r_geodesic` about the origin.
pub fn ball_volume(m: &ConformalMetric, r_geodesic: f64) -> Result<f64> {
    RadialMeasure::new(m)?.ball_volume(r_geodesic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sphere(d: Domain) -> ConformalMetric {
        ConformalMetric::new(ScalarField::from_radial_fn(d, |r| 2f64.sqrt() / (1.0 + r * r).sqrt()).unwrap()).unwrap()
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(unit_sphere_area(1), 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(unit_sphere_area(2), 4.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(unit_sphere_area(3), 2.0 * PI * PI, epsilon = 1e-13);
        assert_relative_eq!(unit_sphere_area(4), 8.0 * PI * PI / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn domain_validation() {
        assert!(matches!(Domain::radial(2, 1.0, 0.1), Err(Error::InvalidDomain(_))));
        assert!(matches!(Domain::radial(3, 0.5, 0.1), Err(Error::InvalidDomain(_))));
        assert!(matches!(Domain::radial(3, 1.05, 0.1), Err(Error::InvalidDomain(_))));
        assert!(matches!(Domain::radial(3, 1.0, 0.0), Err(Error::InvalidDomain(_))));
        let d = Domain::radial(3, 1.0, 0.1).unwrap();
        assert_eq!(d.node_count(), 11);
        assert_eq!(d.node_at(0.5), Some(5));
        assert_eq!(d.node_at(0.55), None);
        assert_eq!(Domain::cube(1.0, 0.1).unwrap().node_count(), 21 * 21 * 21);
    }

    #[test]
    fn field_rejects_non_finite() {
        let d = Domain::radial(3, 1.0, 0.1).unwrap();
        let mut v = vec![0.0; 11];
        v[4] = f64::NAN;
        assert_eq!(ScalarField::new(d, v), Err(Error::NonFinite { node: 4 }));
        assert!(ScalarField::new(d, vec![0.0; 3]).is_err());
    }

    #[test]
    fn laplacian_of_constant_and_quadratic() {
        let d = Domain::radial(3, 2.0, 0.05).unwrap();
        let one = laplacian_flat(&ScalarField::constant(d, 1.0)).unwrap();
        assert!(one.max_abs() < 1e-12);
        let q = laplacian_flat(&ScalarField::from_radial_fn(d, |r| r * r).unwrap()).unwrap();
        for v in q.values() {
            assert_relative_eq!(*v, 6.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn laplacian_matches_symbolic_profile() {
        // Δ(1+r²)^{-1/2} = -3 (1+r²)^{-5/2} in three dimensions.
        let d = Domain::radial(3, 5.0, 0.01).unwrap();
        let f = ScalarField::from_radial_fn(d, |r| (1.0 + r * r).powf(-0.5)).unwrap();
        let lap = laplacian_flat(&f).unwrap();
        assert_relative_eq!(lap.values()[0], -3.0, epsilon = 1e-3);
        for i in 0..d.node_count() {
            let r = d.radius(i);
            let exact = -3.0 * (1.0 + r * r).powf(-2.5);
            assert!((lap.values()[i] - exact).abs() < 1e-3, "node {i}");
        }
    }

    #[test]
    fn constant_factor_is_scalar_flat() {
        let d = Domain::radial(4, 3.0, 0.1).unwrap();
        for c in [0.3, 1.0, 7.5] {
            let m = ConformalMetric::new(ScalarField::constant(d, c)).unwrap();
            let r = scalar_curvature(&m, &ScalarField::constant(d, 0.0)).unwrap();
            assert!(r.max_abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_factor_is_rejected() {
        let d = Domain::radial(3, 1.0, 0.1).unwrap();
        let mut v = vec![1.0; 11];
        v[7] = 0.0;
        let f = ScalarField::new(d, v).unwrap();
        assert_eq!(
            ConformalMetric::new(f).unwrap_err(),
            Error::DegenerateMetric { node: 7, value: 0.0 }
        );
    }

    #[test]
    fn round_sphere_curvature_and_ricci() {
        let d = Domain::radial(3, 10.0, 0.01).unwrap();
        let m = sphere(d);
        let r = scalar_curvature(&m, &ScalarField::constant(d, 0.0)).unwrap();
        for v in &r.values()[..d.node_count() - 1] {
            assert!((v - 6.0).abs() < 1e-3);
        }
        let ric = ricci_conformal(&m).unwrap();
        let trace = ric.trace();
        let eig = ric.min_eigenvalue();
        for i in 0..d.node_count() - 1 {
            assert!((eig[i] - 2.0).abs() < 1e-3, "node {i}: {}", eig[i]);
            assert!((trace[i] - r.values()[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn flat_ricci_vanishes() {
        let d = Domain::radial(5, 2.0, 0.1).unwrap();
        let ric = ricci_conformal(&ConformalMetric::flat(d)).unwrap();
        assert!(ric.trace().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn laplace_beltrami_reduces_to_flat() {
        let d = Domain::radial(3, 4.0, 0.02).unwrap();
        let f = ScalarField::from_radial_fn(d, |r| (-r * r).exp()).unwrap();
        let flat = laplacian_flat(&f).unwrap();
        let lb = laplace_beltrami(&ConformalMetric::flat(d), &f).unwrap();
        assert_eq!(flat, lb);

        let c = ScalarField::constant(d, 2.5);
        let lb = laplace_beltrami(&sphere(d), &c).unwrap();
        assert!(lb.max_abs() < 1e-12);
    }

    #[test]
    fn laplace_beltrami_on_the_sphere() {
        // On the unit 3-sphere the height function x₄ = (1-r²)/(1+r²) is a
        // first eigenfunction: Δ_g x₄ = -3 x₄.
        let d = Domain::radial(3, 8.0, 0.01).unwrap();
        let f = ScalarField::from_radial_fn(d, |r| (1.0 - r * r) / (1.0 + r * r)).unwrap();
        let lb = laplace_beltrami(&sphere(d), &f).unwrap();
        for i in 0..d.node_count() - 1 {
            let exact = -3.0 * f.values()[i];
            assert!((lb.values()[i] - exact).abs() < 2e-3, "node {i}");
        }
    }

    #[test]
    fn box_mode_agrees_with_radial() {
        let b = Domain::cube(2.0, 0.1).unwrap();
        let r = Domain::radial(3, 2.0, 0.1).unwrap();
        let prof = |x: f64| 1.0 + 0.5 / (1.0 + x * x).sqrt();
        let mb = ConformalMetric::new(ScalarField::from_radial_fn(b, prof).unwrap()).unwrap();
        let mr = ConformalMetric::new(ScalarField::from_radial_fn(r, prof).unwrap()).unwrap();
        let rb = scalar_curvature(&mb, &ScalarField::constant(b, 0.0)).unwrap();
        let rr = scalar_curvature(&mr, &ScalarField::constant(r, 0.0)).unwrap();
        let ricb = ricci_conformal(&mb).unwrap();
        let ricr = ricci_conformal(&mr).unwrap();
        let (tb, tr) = (ricb.trace(), ricr.trace());
        let exact = |x: f64| 12.0 * (1.0 + x * x).powf(-2.5) / prof(x).powi(5);
        // Nodes on the positive x axis; both discretizations are O(h²).
        for i in 0..=10 {
            let idx = b.box_index(20 + i, 20, 20);
            let x = i as f64 * 0.1;
            assert!((rb.values()[idx] - exact(x)).abs() < 2e-2, "box R at {i}");
            assert!((rr.values()[i] - exact(x)).abs() < 2e-2, "radial R at {i}");
            assert!((tb[idx] - rb.values()[idx]).abs() < 2e-2, "box trace at {i}");
            assert!((tr[i] - rr.values()[i]).abs() < 2e-2, "radial trace at {i}");
            assert!((rb.values()[idx] - rr.values()[i]).abs() < 2e-2);
        }
    }

    #[test]
    fn ball_volumes() {
        let d = Domain::radial(3, 2.0, 0.01).unwrap();
        let v = ball_volume(&ConformalMetric::flat(d), 1.0).unwrap();
        assert_relative_eq!(v, 4.0 * PI / 3.0, epsilon = 1e-12);
        let d5 = Domain::radial(5, 2.0, 0.01).unwrap();
        let v = ball_volume(&ConformalMetric::flat(d5), 1.3).unwrap();
        assert_relative_eq!(v, unit_sphere_area(4) * 1.3f64.powi(5) / 5.0, max_relative = 1e-12);
        assert!(matches!(
            ball_volume(&ConformalMetric::flat(d), 2.5),
            Err(Error::OutOfChart { .. })
        ));
    }

    #[test]
    fn hemisphere_volume() {
        let d = Domain::radial(3, 10.0, 0.01).unwrap();
        let v = ball_volume(&sphere(d), PI / 2.0).unwrap();
        assert_relative_eq!(v, PI * PI, max_relative = 1e-8);
    }
}
