//! Radial quadrature for geodesic lengths, ball volumes and enclosed masses.
//!
//! Grid data are interpolated by local cubics (even reflection at the
//! origin) and integrated cell by cell with 5-point Gauss–Legendre, which is
//! exact whenever the interpolated factor times `r^{n-1}` is a polynomial of
//! degree at most nine. Summation runs outward in a fixed order.

use super::{unit_sphere_area, ConformalMetric};
use crate::error::{Error, Result};

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// `∫_a^b g` by one 5-point Gauss–Legendre panel.
pub(crate) fn gauss(a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GAUSS_NODES
        .iter()
        .zip(GAUSS_WEIGHTS)
        .map(|(x, w)| w * g(mid + half * x))
        .sum::<f64>()
        * half
}

/// Piecewise-cubic interpolant of grid samples on `0, h, ..., N h`.
#[derive(Debug, Clone)]
pub(crate) struct CubicProfile {
    values: Vec<f64>,
    h: f64,
}

impl CubicProfile {
    pub(crate) fn new(values: Vec<f64>, h: f64) -> Self {
        CubicProfile { values, h }
    }

    fn at(&self, j: isize) -> f64 {
        self.values[j.unsigned_abs()]
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        let last = self.values.len() as isize - 1;
        let cell = ((x / self.h).floor() as isize).clamp(0, last - 1);
        let start = (cell - 1).min(last - 3);
        let t = x / self.h - start as f64;
        let (f0, f1, f2, f3) = (
            self.at(start),
            self.at(start + 1),
            self.at(start + 2),
            self.at(start + 3),
        );
        // Lagrange basis on nodes 0, 1, 2, 3.
        -f0 * (t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0 + f1 * t * (t - 2.0) * (t - 3.0) / 2.0
            - f2 * t * (t - 1.0) * (t - 3.0) / 2.0
            + f3 * t * (t - 1.0) * (t - 2.0) / 6.0
    }
}

/// Radial volume calculus of a metric `U^{4/(n-2)} δ` about the origin.
#[derive(Debug, Clone)]
pub struct RadialMeasure {
    n: usize,
    h: f64,
    count: usize,
    omega: f64,
    factor: CubicProfile,
    /// Geodesic radius `s(r_i)`.
    length: Vec<f64>,
    /// Ball volume `V(r_i)`.
    volume: Vec<f64>,
}

impl RadialMeasure {
    pub fn new(m: &ConformalMetric) -> Result<Self> {
        let d = m.domain();
        if !d.is_radial() {
            return Err(Error::RadialOnly);
        }
        let n = d.dim();
        let mut me = RadialMeasure {
            n,
            h: d.h(),
            count: d.node_count(),
            omega: unit_sphere_area(n - 1),
            factor: CubicProfile::new(m.factor().values().to_vec(), d.h()),
            length: Vec::new(),
            volume: Vec::new(),
        };
        me.length = me.cumulative(|x| me.length_density(x));
        me.volume = me.cumulative(|x| me.volume_density(x));
        Ok(me)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> usize {
        self.count
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn chart_max(&self) -> f64 {
        (self.nodes() - 1) as f64 * self.h
    }

    fn factor_at(&self, x: f64) -> f64 {
        self.factor.eval(x)
    }

    /// `ds/dr = U^{2/(n-2)}`.
    pub fn length_density(&self, x: f64) -> f64 {
        self.factor_at(x).powf(2.0 / (self.n as f64 - 2.0))
    }

    /// `dV/dr = ω r^{n-1} U^{2n/(n-2)}`.
    pub fn volume_density(&self, x: f64) -> f64 {
        self.omega * x.powi(self.n as i32 - 1) * self.factor_at(x).powf(2.0 * self.n as f64 / (self.n as f64 - 2.0))
    }

    /// Area of the geodesic sphere through chart radius `x`.
    pub fn area(&self, x: f64) -> f64 {
        self.omega
            * x.powi(self.n as i32 - 1)
            * self
                .factor_at(x)
                .powf(2.0 * (self.n as f64 - 1.0) / (self.n as f64 - 2.0))
    }

    pub(crate) fn cell_of(&self, x: f64) -> usize {
        ((x / self.h).floor() as usize).min(self.nodes() - 2)
    }

    /// Node-wise running integral `∫_0^{r_i} g`.
    pub(crate) fn cumulative(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.nodes());
        let mut total = 0.0;
        acc.push(0.0);
        for i in 0..self.nodes() - 1 {
            let a = i as f64 * self.h;
            total += gauss(a, a + self.h, &g);
            acc.push(total);
        }
        acc
    }

    /// `∫_0^x g` given the node-wise running integral of `g`.
    pub(crate) fn running(&self, cumulative: &[f64], x: f64, g: impl Fn(f64) -> f64) -> f64 {
        let i = self.cell_of(x);
        let a = i as f64 * self.h;
        cumulative[i] + gauss(a, x, g)
    }

    /// `∫_a^b g` over chart radii, one Gauss panel per grid cell (or part of one).
    pub(crate) fn integrate(&self, a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = a;
        let mut cell = self.cell_of(a);
        while lo < b {
            let hi = (((cell + 1) as f64) * self.h).min(b);
            if hi > lo {
                total += gauss(lo, hi, &g);
            }
            lo = hi;
            cell += 1;
            if cell >= self.nodes() - 1 {
                if b > lo {
                    total += gauss(lo, b, &g);
                }
                break;
            }
        }
        total
    }

    /// Cubic interpolant of nodal values on this grid.
    pub(crate) fn profile(&self, values: &[f64]) -> CubicProfile {
        CubicProfile::new(values.to_vec(), self.h)
    }

    /// Geodesic distance from the origin to chart radius `x`.
    pub fn geodesic_radius(&self, x: f64) -> f64 {
        self.running(&self.length, x, |y| self.length_density(y))
    }

    /// Volume of the ball of chart radius `x`.
    pub fn volume(&self, x: f64) -> f64 {
        self.running(&self.volume, x, |y| self.volume_density(y))
    }

    pub fn geodesic_radii(&self) -> &[f64] {
        &self.length
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volume
    }

    pub fn max_geodesic_radius(&self) -> f64 {
        *self.length.last().unwrap()
    }

    /// Chart radius at geodesic distance `s` from the origin.
    pub fn chart_radius(&self, s: f64) -> Result<f64> {
        let s_max = self.max_geodesic_radius();
        if s < 0.0 || s > s_max * (1.0 + 1e-12) {
            return Err(Error::OutOfChart {
                requested: s,
                available: s_max,
            });
        }
        let s = s.min(s_max);
        let i = self
            .length
            .partition_point(|&v| v <= s)
            .saturating_sub(1)
            .min(self.nodes() - 2);
        let (mut lo, mut hi) = (i as f64 * self.h, (i + 1) as f64 * self.h);
        if (self.length[i] - s).abs() == 0.0 {
            return Ok(lo);
        }
        let mut x = lo + self.h * (s - self.length[i]) / (self.length[i + 1] - self.length[i]);
        for _ in 0..60 {
            let err = self.geodesic_radius(x) - s;
            if err.abs() <= 1e-15 * s.max(1.0) {
                break;
            }
            if err > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - err / self.length_density(x);
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(x)
    }

    pub fn ball_volume(&self, s: f64) -> Result<f64> {
        Ok(self.volume(self.chart_radius(s)?))
    }
}
