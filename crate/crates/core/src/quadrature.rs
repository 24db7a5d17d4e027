//! Gauss-Lobatto rules on `[-1, 1]` and the composite angular quadratures
//! attached to each moment basis.
//!
//! All composite rules keep the endpoints of every sub-interval, so the
//! numerically realizable set agrees with the analytic one for the
//! piecewise-linear bases. Nodes shared by two sub-intervals appear once per
//! sub-interval; per-interval integrals are then plain sub-sums.

use std::f64::consts::PI;

use crate::basis::BasisKind;
use crate::error::{Error, Result};

/// Quadrature order used on each partition interval of the hat-function and
/// partial-moment bases.
pub const PIECEWISE_ORDER: usize = 15;

/// Extra order added to `2N` on each half-range for the full-moment basis.
pub const FULL_MOMENT_EXTRA_ORDER: usize = 40;

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// A composite quadrature on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    points: Vec<f64>,
    weights: Vec<f64>,
    /// Partition interval (or half-range for the full-moment basis) of each point.
    intervals: Vec<usize>,
}

impl Quadrature {
    pub fn new(points: Vec<f64>, weights: Vec<f64>, intervals: Vec<usize>) -> Self {
        assert_eq!(points.len(), weights.len());
        assert_eq!(points.len(), intervals.len());
        Self {
            points,
            weights,
            intervals,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intervals(&self) -> &[usize] {
        &self.intervals
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&mu, &w)| w * f(mu))
            .sum()
    }

    /// Integral over the points with `μ > 0` (`positive == true`) or `μ < 0`.
    pub fn integrate_half<F: FnMut(f64) -> f64>(&self, positive: bool, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(&mu, _)| if positive { mu > 0.0 } else { mu < 0.0 })
            .map(|(&mu, &w)| w * f(mu))
            .sum()
    }

    /// Maps a rule on `[-1, 1]` onto `[a, b]` and appends it with the given interval tag.
    fn push_mapped(&mut self, ref_points: &[f64], ref_weights: &[f64], a: f64, b: f64, tag: usize) {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (i, (&x, &w)) in ref_points.iter().zip(ref_weights).enumerate() {
            // pin the endpoints so shared nodes are bit-identical across intervals
            let mu = if i == 0 {
                a
            } else if i + 1 == ref_points.len() {
                b
            } else {
                mid + half * x
            };
            self.points.push(mu);
            self.weights.push(half * w);
            self.intervals.push(tag);
        }
    }
}

/// Number of Gauss-Lobatto points needed to integrate polynomials of degree
/// `order` exactly (`m` points are exact up to degree `2m - 3`).
pub fn lobatto_points_for_order(order: usize) -> usize {
    (order + 4) / 2
}

/// Legendre values `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p = x;
    for l in 1..n {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * x * p - lf * p_prev) / (lf + 1.0);
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Gauss-Lobatto nodes and weights with `npoints >= 2` points on `[-1, 1]`,
/// sorted ascending. Interior nodes are the roots of `P'_{npoints-1}`, found
/// by Newton iteration from Chebyshev-Gauss-Lobatto initial guesses.
pub fn gauss_lobatto(npoints: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(npoints >= 2, "Gauss-Lobatto rules need at least two points");
    let degree = npoints - 1;
    let m = npoints as f64;
    let mut points = Vec::with_capacity(npoints);
    for i in 0..npoints {
        let mut x = -(PI * i as f64 / degree as f64).cos();
        if i == 0 {
            x = -1.0;
        } else if i == degree {
            x = 1.0;
        } else {
            for _ in 0..NEWTON_MAX_ITER {
                let (p_n, p_nm1) = legendre_pair(degree, x);
                let dx = (x * p_n - p_nm1) / (m * p_n);
                x -= dx;
                if dx.abs() < NEWTON_TOL {
                    break;
                }
            }
        }
        points.push(x);
    }
    // enforce exact symmetry
    for i in 0..npoints / 2 {
        let j = npoints - 1 - i;
        let avg = 0.5 * (points[j] - points[i]);
        points[i] = -avg;
        points[j] = avg;
    }
    if npoints % 2 == 1 {
        points[npoints / 2] = 0.0;
    }
    let scale = 2.0 / (degree as f64 * (degree as f64 + 1.0));
    let weights = points
        .iter()
        .map(|&x| {
            let (p_n, _) = legendre_pair(degree, x);
            scale / (p_n * p_n)
        })
        .collect();
    (points, weights)
}

/// Gauss-Lobatto rule exact for polynomials of degree `order >= 1`.
pub fn gauss_lobatto_nodes(order: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_lobatto(lobatto_points_for_order(order.max(1)))
}

/// Uniform partition `-1 = μ_0 < … < μ_k = 1`.
pub fn uniform_partition(intervals: usize) -> Vec<f64> {
    let h = 2.0 / intervals as f64;
    (0..=intervals)
        .map(|i| {
            if i == intervals {
                1.0
            } else {
                -1.0 + i as f64 * h
            }
        })
        .collect()
}

/// Full angular quadrature for a basis.
///
/// Full moments: two Gauss-Lobatto rules of order `2N + 40` on `[-1, 0]` and
/// `[0, 1]`. Piecewise bases: a Gauss-Lobatto rule of order 15 on every
/// partition interval; an interval with `0` in its interior (odd interval
/// count) is split at `0` so half-range integrals stay exact sub-sums.
pub fn build_quadrature(kind: BasisKind) -> Quadrature {
    let mut quad = Quadrature::new(Vec::new(), Vec::new(), Vec::new());
    match kind {
        BasisKind::FullMoment { order } => {
            let (x, w) = gauss_lobatto_nodes(2 * order + FULL_MOMENT_EXTRA_ORDER);
            quad.push_mapped(&x, &w, -1.0, 0.0, 0);
            quad.push_mapped(&x, &w, 0.0, 1.0, 1);
        }
        BasisKind::HatFunction { intervals } | BasisKind::PartialMoment { intervals } => {
            let (x, w) = gauss_lobatto_nodes(PIECEWISE_ORDER);
            let partition = uniform_partition(intervals);
            for (j, pair) in partition.windows(2).enumerate() {
                let (a, b) = (pair[0], pair[1]);
                if a < 0.0 && b > 0.0 {
                    quad.push_mapped(&x, &w, a, 0.0, j);
                    quad.push_mapped(&x, &w, 0.0, b, j);
                } else {
                    quad.push_mapped(&x, &w, a, b, j);
                }
            }
        }
    }
    quad
}

/// Nodal (masslumping) quadrature for the hat-function basis: one merged
/// point per partition node carrying the trapezoidal weight.
pub fn nodal_quadrature(kind: BasisKind) -> Result<Quadrature> {
    let BasisKind::HatFunction { intervals } = kind else {
        return Err(Error::Unsupported(format!(
            "nodal quadrature is only defined for hat functions, got {kind}"
        )));
    };
    let points = uniform_partition(intervals);
    let half = 1.0 / intervals as f64;
    let weights = (0..=intervals)
        .map(|i| if i == 0 || i == intervals { half } else { 2.0 * half })
        .collect();
    let tags = (0..=intervals).map(|i| i.min(intervals - 1)).collect();
    Ok(Quadrature::new(points, weights, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Solves the moment conditions Σ w_i x_i^j = ∫ x^j for the weights of a
    /// rule with the given nodes (Vandermonde system, Gaussian elimination).
    fn moment_condition_weights(nodes: &[f64]) -> Vec<f64> {
        let m = nodes.len();
        let mut a = vec![vec![0.0; m + 1]; m];
        for (j, row) in a.iter_mut().enumerate() {
            for (i, &x) in nodes.iter().enumerate() {
                row[i] = x.powi(j as i32);
            }
            row[m] = if j % 2 == 0 { 2.0 / (j as f64 + 1.0) } else { 0.0 };
        }
        for c in 0..m {
            let p = (c..m).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
            a.swap(c, p);
            for r in 0..m {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=m {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..m).map(|i| a[i][m] / a[i][i]).collect()
    }

    #[test]
    fn two_and_three_point_rules() {
        let (x, w) = gauss_lobatto(2);
        assert_eq!(x, vec![-1.0, 1.0]);
        let oracle = moment_condition_weights(&x);
        for (a, b) in w.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);

        let (x, w) = gauss_lobatto(3);
        assert_eq!(x, vec![-1.0, 0.0, 1.0]);
        let oracle = moment_condition_weights(&x);
        for (a, b) in w.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(w[1], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn five_points_integrate_sixth_power() {
        let (x, w) = gauss_lobatto(5);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert_abs_diff_eq!(integral, 2.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn order_to_points_mapping() {
        assert_eq!(lobatto_points_for_order(1), 2);
        assert_eq!(lobatto_points_for_order(3), 3);
        assert_eq!(lobatto_points_for_order(15), 9);
        assert_eq!(lobatto_points_for_order(60), 32);
    }

    #[test]
    fn monomials_exact_up_to_order() {
        for order in [1usize, 3, 7, 15, 25, 60] {
            let (x, w) = gauss_lobatto_nodes(order);
            assert_eq!(x[0], -1.0);
            assert_eq!(*x.last().unwrap(), 1.0);
            assert!(w.iter().all(|&w| w > 0.0));
            for j in 0..=order {
                let exact = if j % 2 == 0 { 2.0 / (j as f64 + 1.0) } else { 0.0 };
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(j as i32)).sum();
                assert_abs_diff_eq!(approx, exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn composite_weights_sum_to_two() {
        for kind in [
            BasisKind::FullMoment { order: 10 },
            BasisKind::HatFunction { intervals: 2 },
            BasisKind::HatFunction { intervals: 9 },
            BasisKind::PartialMoment { intervals: 5 },
        ] {
            let q = build_quadrature(kind);
            assert!(q.weights().iter().all(|&w| w > 0.0));
            assert_abs_diff_eq!(q.weights().iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn half_range_first_moment() {
        let q = build_quadrature(BasisKind::PartialMoment { intervals: 4 });
        assert_abs_diff_eq!(q.integrate_half(true, |mu| mu), 0.5, epsilon = 1e-13);
        let q = build_quadrature(BasisKind::HatFunction { intervals: 9 });
        assert_abs_diff_eq!(q.integrate_half(false, |mu| mu), -0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(q.integrate_half(true, |mu| mu * mu * mu), 0.25, epsilon = 1e-13);
    }

    #[test]
    fn nodal_weights() {
        let q = nodal_quadrature(BasisKind::HatFunction { intervals: 2 }).unwrap();
        assert_eq!(q.weights(), &[0.5, 1.0, 0.5]);
        let q = nodal_quadrature(BasisKind::HatFunction { intervals: 4 }).unwrap();
        assert_eq!(q.weights(), &[0.25, 0.5, 0.5, 0.5, 0.25]);
        for k in [3, 7, 10, 80] {
            let q = nodal_quadrature(BasisKind::HatFunction { intervals: k }).unwrap();
            assert_abs_diff_eq!(q.integrate(|_| 1.0), 2.0, epsilon = 1e-14);
        }
        assert!(nodal_quadrature(BasisKind::FullMoment { order: 2 }).is_err());
    }
}
