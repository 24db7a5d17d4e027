//! Maxwell-Boltzmann closure: ansatz `exp(α·b)` and its angular integrals.
//!
//! The `*_from_values` kernels work on precomputed ansatz values at the
//! quadrature points of an [`EvalTable`]; the basis-level functions wrap them.

use crate::basis::{EvalTable, MomentBasis};
use crate::error::{Error, Result};
use crate::linalg::{HessianFormat, HessianMatrix};

/// Largest admissible exponent `α·b` before `exp` leaves double range.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Writes `exp(α·b(μ_q))` for every quadrature point into `out`.
pub fn ansatz_values_into(table: &EvalTable, alpha: &[f64], out: &mut [f64]) -> Result<()> {
    debug_assert_eq!(out.len(), table.len());
    for (q, e) in out.iter_mut().enumerate() {
        let p = table.dot(q, alpha);
        if p > MAX_EXPONENT {
            return Err(Error::Overflow { exponent: p });
        }
        if p.is_nan() {
            return Err(Error::NonFinite("ansatz exponent"));
        }
        *e = p.exp();
    }
    Ok(())
}

pub fn ansatz_values(table: &EvalTable, alpha: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; table.len()];
    ansatz_values_into(table, alpha, &mut out)?;
    Ok(out)
}

/// `⟨b ψ⟩` for arbitrary values `ψ_q` at the quadrature points.
pub fn moments_from_values(table: &EvalTable, psi: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; table.n];
    for (q, &e) in psi.iter().enumerate() {
        let c = table.weights[q] * e;
        let s = table.starts[q];
        for (acc, b) in u[s..s + table.width].iter_mut().zip(table.row(q)) {
            *acc += c * b;
        }
    }
    u
}

/// `⟨b bᵀ ψ⟩` in the table's storage format.
pub fn hessian_from_values(table: &EvalTable, psi: &[f64]) -> HessianMatrix {
    let mut h = HessianMatrix::zeros(table.format, table.n);
    for (q, &e) in psi.iter().enumerate() {
        h.add_outer(table.starts[q], table.row(q), table.weights[q] * e);
    }
    h
}

/// Half-range fluxes `(⟨μ⁺ ψ b⟩, ⟨μ⁻ ψ b⟩)` with `μ⁻ = min(μ, 0)`.
pub fn half_fluxes_from_values(table: &EvalTable, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut plus = vec![0.0; table.n];
    let mut minus = vec![0.0; table.n];
    for (q, &e) in psi.iter().enumerate() {
        let mu = table.mus[q];
        if mu == 0.0 {
            continue;
        }
        let target = if mu > 0.0 { &mut plus } else { &mut minus };
        let c = table.weights[q] * e * mu;
        let s = table.starts[q];
        for (acc, b) in target[s..s + table.width].iter_mut().zip(table.row(q)) {
            *acc += c * b;
        }
    }
    (plus, minus)
}

/// `⟨ψ⟩`.
pub fn integral_from_values(table: &EvalTable, psi: &[f64]) -> f64 {
    psi.iter().zip(&table.weights).map(|(e, w)| e * w).sum()
}

/// Moments, Hessian and both half fluxes of `exp(α·b)` in one pass.
#[derive(Debug, Clone)]
pub struct CellQuantities {
    pub moments: Vec<f64>,
    pub hessian: HessianMatrix,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

pub fn cell_quantities(table: &EvalTable, alpha: &[f64], scratch: &mut Vec<f64>) -> Result<CellQuantities> {
    scratch.resize(table.len(), 0.0);
    ansatz_values_into(table, alpha, scratch)?;
    let n = table.n;
    let mut moments = vec![0.0; n];
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut hessian = HessianMatrix::zeros(table.format, n);
    for (q, &e) in scratch.iter().enumerate() {
        let we = table.weights[q] * e;
        let s = table.starts[q];
        let row = table.row(q);
        for (acc, b) in moments[s..s + table.width].iter_mut().zip(row) {
            *acc += we * b;
        }
        hessian.add_outer(s, row, we);
        let mu = table.mus[q];
        if mu != 0.0 {
            let target = if mu > 0.0 { &mut plus } else { &mut minus };
            let c = we * mu;
            for (acc, b) in target[s..s + table.width].iter_mut().zip(row) {
                *acc += c * b;
            }
        }
    }
    Ok(CellQuantities {
        moments,
        hessian,
        plus,
        minus,
    })
}

/// `⟨exp(p)(p − 1)⟩` with `p = α·b`.
pub fn entropy_from_table(table: &EvalTable, alpha: &[f64]) -> Result<f64> {
    let mut h = 0.0;
    for q in 0..table.len() {
        let p = table.dot(q, alpha);
        if p > MAX_EXPONENT {
            return Err(Error::Overflow { exponent: p });
        }
        if p.is_nan() {
            return Err(Error::NonFinite("ansatz exponent"));
        }
        h += table.weights[q] * p.exp() * (p - 1.0);
    }
    Ok(h)
}

/// `ψ̂(μ) = exp(α·b(μ))`.
pub fn ansatz(basis: &MomentBasis, alpha: &[f64], mu: f64) -> Result<f64> {
    let b = basis.evaluate(mu)?;
    let p: f64 = alpha.iter().zip(&b).map(|(a, b)| a * b).sum();
    if p > MAX_EXPONENT {
        return Err(Error::Overflow { exponent: p });
    }
    if p.is_nan() {
        return Err(Error::NonFinite("ansatz exponent"));
    }
    Ok(p.exp())
}

pub fn moments_of(basis: &MomentBasis, alpha: &[f64]) -> Result<Vec<f64>> {
    let e = ansatz_values(basis.table(), alpha)?;
    Ok(moments_from_values(basis.table(), &e))
}

pub fn hessian(basis: &MomentBasis, alpha: &[f64]) -> Result<HessianMatrix> {
    let e = ansatz_values(basis.table(), alpha)?;
    Ok(hessian_from_values(basis.table(), &e))
}

/// `q = moments_of(α) − u`.
pub fn dual_gradient(basis: &MomentBasis, alpha: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let mut m = moments_of(basis, alpha)?;
    m.iter_mut().zip(u).for_each(|(m, u)| *m -= u);
    Ok(m)
}

/// `p(α) = ⟨exp(α·b)⟩ − α·u`.
pub fn dual_objective(basis: &MomentBasis, alpha: &[f64], u: &[f64]) -> Result<f64> {
    let e = ansatz_values(basis.table(), alpha)?;
    let au: f64 = alpha.iter().zip(u).map(|(a, u)| a * u).sum();
    Ok(integral_from_values(basis.table(), &e) - au)
}

/// `⟨μ b bᵀ exp(α·b)⟩` as a dense row-major matrix.
pub fn flux_jacobian(basis: &MomentBasis, alpha: &[f64]) -> Result<Vec<f64>> {
    let table = basis.table();
    let e = ansatz_values(table, alpha)?;
    let n = basis.n();
    let mut j = HessianMatrix::zeros(HessianFormat::Dense, n);
    for (q, &e) in e.iter().enumerate() {
        j.add_outer(table.starts[q], table.row(q), table.weights[q] * table.mus[q] * e);
    }
    Ok(j.to_dense())
}

/// `⟨μ b exp(α·b)⟩`.
pub fn full_flux(basis: &MomentBasis, alpha: &[f64]) -> Result<Vec<f64>> {
    let e = ansatz_values(basis.table(), alpha)?;
    let (mut p, m) = half_fluxes_from_values(basis.table(), &e);
    p.iter_mut().zip(m).for_each(|(p, m)| *p += m);
    Ok(p)
}

pub fn half_flux(basis: &MomentBasis, alpha: &[f64], side: Side) -> Result<Vec<f64>> {
    let e = ansatz_values(basis.table(), alpha)?;
    let (p, m) = half_fluxes_from_values(basis.table(), &e);
    Ok(match side {
        Side::Plus => p,
        Side::Minus => m,
    })
}

/// `⟨b bᵀ⟩`.
pub fn mass_matrix(basis: &MomentBasis) -> HessianMatrix {
    let ones = vec![1.0; basis.table().len()];
    hessian_from_values(basis.table(), &ones)
}

pub fn cell_entropy(basis: &MomentBasis, alpha: &[f64]) -> Result<f64> {
    entropy_from_table(basis.table(), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisKind;
    use crate::quadrature::{gauss_lobatto_nodes, Quadrature};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn kinds() -> Vec<BasisKind> {
        vec![
            BasisKind::FullMoment { order: 3 },
            BasisKind::FullMoment { order: 10 },
            BasisKind::HatFunction { intervals: 4 },
            BasisKind::HatFunction { intervals: 9 },
            BasisKind::PartialMoment { intervals: 3 },
            BasisKind::PartialMoment { intervals: 5 },
        ]
    }

    fn random_alpha(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rel(a: f64, b: f64, scale: f64) -> f64 {
        (a - b).abs() / scale.max(1e-300)
    }

    #[test]
    fn ansatz_examples() {
        let fm = MomentBasis::new(BasisKind::FullMoment { order: 1 }).unwrap();
        assert_eq!(ansatz(&fm, &[0.0, 0.0], 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(ansatz(&fm, &[0.0, 1.0], 0.5).unwrap(), 0.5f64.exp(), epsilon = 1e-15);
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            let a: Vec<f64> = b.unit_multiplier().iter().map(|x| 0.7 * x).collect();
            for mu in [-1.0, -0.3, 0.0, 0.45, 1.0] {
                assert_abs_diff_eq!(ansatz(&b, &a, mu).unwrap(), 0.7f64.exp(), epsilon = 1e-13);
            }
        }
        let big = vec![800.0, 0.0];
        assert!(matches!(ansatz(&fm, &big, 0.0), Err(Error::Overflow { .. })));
        assert!(matches!(moments_of(&fm, &big), Err(Error::Overflow { .. })));
        assert!(matches!(moments_of(&fm, &[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn moments_of_zero_and_scaled() {
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            let iso = b.isotropic_moment();
            let m0 = moments_of(&b, &vec![0.0; b.n()]).unwrap();
            for (a, e) in m0.iter().zip(&iso) {
                assert_abs_diff_eq!(a, e, epsilon = 1e-12);
            }
            let c = -0.8;
            let a: Vec<f64> = b.unit_multiplier().iter().map(|x| c * x).collect();
            let m = moments_of(&b, &a).unwrap();
            for (a, e) in m.iter().zip(&iso) {
                assert_abs_diff_eq!(*a, c.exp() * e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn moments_of_matches_refined_quadrature() {
        let kind = BasisKind::FullMoment { order: 3 };
        let coarse = MomentBasis::new(kind).unwrap();
        // 10 sub-intervals per half with the same rule on each
        let (x, w) = gauss_lobatto_nodes(2 * 3 + 40);
        let (mut pts, mut wts, mut tags) = (Vec::new(), Vec::new(), Vec::new());
        for s in 0..20 {
            let a = -1.0 + 0.1 * s as f64;
            let b = a + 0.1;
            for (xi, wi) in x.iter().zip(&w) {
                pts.push(0.5 * (a + b) + 0.05 * xi);
                wts.push(0.05 * wi);
                tags.push(if s < 10 { 0 } else { 1 });
            }
        }
        let fine = MomentBasis::with_quadrature(kind, Quadrature::new(pts, wts, tags)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_alpha(&mut rng, 4);
            let m1 = moments_of(&coarse, &a).unwrap();
            let m2 = moments_of(&fine, &a).unwrap();
            let scale = m2.iter().map(|x| x.abs()).fold(0.0, f64::max);
            for (x, y) in m1.iter().zip(&m2) {
                assert!(rel(*x, *y, scale) <= 1e-10);
            }
        }
    }

    #[test]
    fn hessian_examples() {
        let fm = MomentBasis::new(BasisKind::FullMoment { order: 2 }).unwrap();
        let h = hessian(&fm, &[0.0; 3]).unwrap().to_dense();
        let expect = [2.0, 0.0, 0.0, 0.0, 2.0 / 3.0, 0.0, 0.0, 0.0, 0.4];
        for (a, e) in h.iter().zip(expect) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-13);
        }
        let hf = MomentBasis::new(BasisKind::HatFunction { intervals: 5 }).unwrap();
        let h = hessian(&hf, &[0.0; 6]).unwrap();
        assert_eq!(h.format(), HessianFormat::Tridiagonal);
        let iso = hf.isotropic_moment();
        let dense = h.to_dense();
        for i in 0..6 {
            let row: f64 = dense[i * 6..(i + 1) * 6].iter().sum();
            assert_abs_diff_eq!(row, iso[i], epsilon = 1e-13);
        }
        assert_eq!(mass_matrix(&hf), h);
    }

    #[test]
    fn derivative_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-5;
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            let n = b.n();
            for _ in 0..5 {
                let a = random_alpha(&mut rng, n);
                let u: Vec<f64> = moments_of(&b, &random_alpha(&mut rng, n)).unwrap();
                let hess = hessian(&b, &a).unwrap().to_dense();
                let jac = flux_jacobian(&b, &a).unwrap();
                let grad = dual_gradient(&b, &a, &u).unwrap();
                let hscale = hess.iter().map(|x| x.abs()).fold(0.0, f64::max);
                let jscale = jac.iter().map(|x| x.abs()).fold(0.0, f64::max);
                let gscale = grad.iter().map(|x| x.abs()).fold(0.0, f64::max);
                for j in 0..n {
                    let mut ap = a.clone();
                    let mut am = a.clone();
                    ap[j] += h;
                    am[j] -= h;
                    let mp = moments_of(&b, &ap).unwrap();
                    let mm = moments_of(&b, &am).unwrap();
                    let fp = full_flux(&b, &ap).unwrap();
                    let fm = full_flux(&b, &am).unwrap();
                    for i in 0..n {
                        assert!(rel((mp[i] - mm[i]) / (2.0 * h), hess[i * n + j], hscale) <= 1e-5);
                        assert!(rel((fp[i] - fm[i]) / (2.0 * h), jac[i * n + j], jscale) <= 1e-5);
                    }
                    let pp = dual_objective(&b, &ap, &u).unwrap();
                    let pm = dual_objective(&b, &am, &u).unwrap();
                    assert!(rel((pp - pm) / (2.0 * h), grad[j], gscale) <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn gradient_and_objective_examples() {
        let fm = MomentBasis::new(BasisKind::FullMoment { order: 2 }).unwrap();
        let q = dual_gradient(&fm, &[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        for (a, e) in q.iter().zip([1.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-13);
        }
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            let iso = b.isotropic_moment();
            assert!(dual_gradient(&b, &vec![0.0; b.n()], &iso).unwrap().iter().all(|x| x.abs() < 1e-12));
            assert_abs_diff_eq!(dual_objective(&b, &vec![0.0; b.n()], &iso).unwrap(), 2.0, epsilon = 1e-12);
            let c = 0.6;
            let a: Vec<f64> = b.unit_multiplier().iter().map(|x| c * x).collect();
            let u: Vec<f64> = iso.iter().map(|x| c.exp() * x).collect();
            let p = dual_objective(&b, &a, &u).unwrap();
            assert_abs_diff_eq!(p, 2.0 * c.exp() - 2.0 * c * c.exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn dual_objective_is_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            let u = moments_of(&b, &random_alpha(&mut rng, b.n())).unwrap();
            for _ in 0..50 {
                let a1 = random_alpha(&mut rng, b.n());
                let a2 = random_alpha(&mut rng, b.n());
                let mid: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| 0.5 * (x + y)).collect();
                let lhs = dual_objective(&b, &mid, &u).unwrap();
                let rhs = 0.5 * (dual_objective(&b, &a1, &u).unwrap() + dual_objective(&b, &a2, &u).unwrap());
                assert!(lhs <= rhs + 1e-12);
            }
        }
    }

    #[test]
    fn flux_jacobian_example_and_symmetry() {
        let fm = MomentBasis::new(BasisKind::FullMoment { order: 1 }).unwrap();
        let j = flux_jacobian(&fm, &[0.0, 0.0]).unwrap();
        for (a, e) in j.iter().zip([0.0, 2.0 / 3.0, 2.0 / 3.0, 0.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-13);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            let n = b.n();
            let j = flux_jacobian(&b, &random_alpha(&mut rng, n)).unwrap();
            for r in 0..n {
                for c in 0..n {
                    assert!((j[r * n + c] - j[c * n + r]).abs() <= 1e-13);
                }
            }
        }
    }

    #[test]
    fn half_flux_properties() {
        let fm = MomentBasis::new(BasisKind::FullMoment { order: 4 }).unwrap();
        let p = half_flux(&fm, &[0.0; 5], Side::Plus).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            let a = random_alpha(&mut rng, b.n());
            let plus = half_flux(&b, &a, Side::Plus).unwrap();
            let minus = half_flux(&b, &a, Side::Minus).unwrap();
            let full = full_flux(&b, &a).unwrap();
            for i in 0..b.n() {
                assert!((plus[i] + minus[i] - full[i]).abs() <= 1e-12);
            }
            let c = 0.9;
            let shifted: Vec<f64> = a.iter().zip(b.unit_multiplier()).map(|(x, o)| x + c * o).collect();
            let plus_c = half_flux(&b, &shifted, Side::Plus).unwrap();
            for (x, y) in plus_c.iter().zip(&plus) {
                assert!((x - c.exp() * y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn cell_entropy_examples() {
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            assert_abs_diff_eq!(cell_entropy(&b, &vec![0.0; b.n()]).unwrap(), -2.0, epsilon = 1e-12);
            let one = b.unit_multiplier();
            assert_abs_diff_eq!(cell_entropy(&b, &one).unwrap(), 0.0, epsilon = 1e-12);
            let two: Vec<f64> = one.iter().map(|x| 2.0 * x).collect();
            assert_abs_diff_eq!(cell_entropy(&b, &two).unwrap(), 2.0 * E * E, epsilon = 1e-11);
        }
    }

    #[test]
    fn nodal_hessian_is_diagonal() {
        let b = MomentBasis::masslumped(BasisKind::HatFunction { intervals: 8 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_alpha(&mut rng, 9);
        let h = hessian(&b, &a).unwrap();
        let HessianMatrix::Diagonal(d) = &h else {
            panic!("expected diagonal storage")
        };
        let w = b.quadrature().weights();
        for i in 0..9 {
            assert_eq!(d[i], w[i] * a[i].exp());
        }
        let dense = h.to_dense();
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    assert_eq!(dense[i * 9 + j], 0.0);
                }
            }
        }
    }

    #[test]
    fn combined_pass_matches_separate_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut scratch = Vec::new();
        for kind in kinds() {
            let b = MomentBasis::new(kind).unwrap();
            let a = random_alpha(&mut rng, b.n());
            let cq = cell_quantities(b.table(), &a, &mut scratch).unwrap();
            assert_eq!(cq.moments, moments_of(&b, &a).unwrap());
            assert_eq!(cq.hessian, hessian(&b, &a).unwrap());
            assert_eq!(cq.plus, half_flux(&b, &a, Side::Plus).unwrap());
            assert_eq!(cq.minus, half_flux(&b, &a, Side::Minus).unwrap());
        }
    }

    proptest::proptest! {
        #[test]
        fn scaling_identity(kind_idx in 0usize..6, seed in 0u64..1000, c in -3.0f64..3.0) {
            let b = MomentBasis::new(kinds()[kind_idx]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_alpha(&mut rng, b.n());
            let shifted: Vec<f64> = a.iter().zip(b.unit_multiplier()).map(|(x, o)| x + c * o).collect();
            let m = moments_of(&b, &a).unwrap();
            let ms = moments_of(&b, &shifted).unwrap();
            let scale = m.iter().map(|x| x.abs()).fold(0.0, f64::max);
            for (x, y) in ms.iter().zip(&m) {
                proptest::prop_assert!((x - c.exp() * y).abs() <= 1e-12 * c.exp() * scale);
            }
            let rho = b.density(&m);
            let zeroth = integral_from_values(b.table(), &ansatz_values(b.table(), &a).unwrap());
            proptest::prop_assert!((rho - zeroth).abs() <= 1e-12 * zeroth);
        }

        #[test]
        fn hessian_is_symmetric_positive_definite(kind_idx in 0usize..6, seed in 0u64..1000) {
            let b = MomentBasis::new(kinds()[kind_idx]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = b.n();
            let h = hessian(&b, &random_alpha(&mut rng, n)).unwrap().to_dense();
            for r in 0..n {
                for c in 0..n {
                    proptest::prop_assert!((h[r * n + c] - h[c * n + r]).abs() <= 1e-13);
                }
            }
            let x = random_alpha(&mut rng, n);
            let xhx: f64 = (0..n).map(|r| x[r] * (0..n).map(|c| h[r * n + c] * x[c]).sum::<f64>()).sum();
            proptest::prop_assert!(xhx > 0.0);
        }
    }
}
