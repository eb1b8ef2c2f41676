//! Second-order finite-difference stencils.

use super::Domain;

/// `f'` on the radial grid; zero at the origin by symmetry.
pub(crate) fn radial_gradient(f: &[f64], h: f64) -> Vec<f64> {
    let last = f.len() - 1;
    let mut g = vec![0.0; f.len()];
    for i in 1..last {
        g[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    g[last] = (3.0 * f[last] - 4.0 * f[last - 1] + f[last - 2]) / (2.0 * h);
    g
}

/// `f''` on the radial grid, using the even extension `f(-h) = f(h)` at the origin.
pub(crate) fn radial_second(f: &[f64], h: f64) -> Vec<f64> {
    let last = f.len() - 1;
    let h2 = h * h;
    let mut g = vec![0.0; f.len()];
    g[0] = 2.0 * (f[1] - f[0]) / h2;
    for i in 1..last {
        g[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    g[last] = (2.0 * f[last] - 5.0 * f[last - 1] + 4.0 * f[last - 2] - f[last - 3]) / h2;
    g
}

pub(crate) fn radial_laplacian(f: &[f64], h: f64, n: usize) -> Vec<f64> {
    let k = (n - 1) as f64;
    let d1 = radial_gradient(f, h);
    let mut lap = radial_second(f, h);
    lap[0] *= n as f64;
    for (i, l) in lap.iter_mut().enumerate().skip(1) {
        *l += k * d1[i] / (i as f64 * h);
    }
    lap
}

/// Coefficients `(sub, diag, sup)` of the radial Laplacian at interior node
/// `i < last`, so that `Δf_i = sub f_{i-1} + diag f_i + sup f_{i+1}`.
pub(crate) fn radial_laplacian_row(i: usize, h: f64, n: usize) -> (f64, f64, f64) {
    let h2 = h * h;
    if i == 0 {
        let c = 2.0 * n as f64 / h2;
        return (0.0, -c, c);
    }
    let adv = (n - 1) as f64 / (2.0 * h * i as f64 * h);
    (1.0 / h2 - adv, -2.0 / h2, 1.0 / h2 + adv)
}

fn axis_derivatives(values: &[f64], h: f64, out1: &mut [f64], out2: &mut [f64]) {
    let last = values.len() - 1;
    let h2 = h * h;
    out1[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    out2[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h2;
    for i in 1..last {
        out1[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
        out2[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h2;
    }
    out1[last] = (3.0 * values[last] - 4.0 * values[last - 1] + values[last - 2]) / (2.0 * h);
    out2[last] = (2.0 * values[last] - 5.0 * values[last - 1] + 4.0 * values[last - 2] - values[last - 3]) / h2;
}

/// First and second derivatives along each axis of a box field.
fn box_axis_derivatives(d: &Domain, f: &[f64]) -> ([Vec<f64>; 3], [Vec<f64>; 3]) {
    let m = d.axis_nodes();
    let n = d.node_count();
    let mut first = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut second = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut line = vec![0.0; m];
    let mut d1 = vec![0.0; m];
    let mut d2 = vec![0.0; m];
    for axis in 0..3 {
        for a in 0..m {
            for b in 0..m {
                let index = |c: usize| match axis {
                    0 => d.box_index(c, a, b),
                    1 => d.box_index(a, c, b),
                    _ => d.box_index(a, b, c),
                };
                for (c, slot) in line.iter_mut().enumerate() {
                    *slot = f[index(c)];
                }
                axis_derivatives(&line, d.h(), &mut d1, &mut d2);
                for c in 0..m {
                    first[axis][index(c)] = d1[c];
                    second[axis][index(c)] = d2[c];
                }
            }
        }
    }
    (first, second)
}

pub(crate) fn box_gradient(d: &Domain, f: &[f64]) -> [Vec<f64>; 3] {
    box_axis_derivatives(d, f).0
}

pub(crate) fn box_second_diagonal(d: &Domain, f: &[f64]) -> [Vec<f64>; 3] {
    box_axis_derivatives(d, f).1
}

pub(crate) fn box_laplacian(d: &Domain, f: &[f64]) -> Vec<f64> {
    let [a, b, c] = box_second_diagonal(d, f);
    a.iter().zip(&b).zip(&c).map(|((x, y), z)| x + y + z).collect()
}
