//! Direct symmetric positive-definite solvers for the Hessian storage formats
//! that occur in slab geometry: dense (full moments), tridiagonal (hat
//! functions), diagonal (masslumped hat functions) and 2×2 block-diagonal
//! (partial moments).

use thiserror::Error;

/// Pivots at or below this value are treated as numerically singular.
pub const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SpdFailure {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is numerically singular")]
    NumericallySingular,
}

/// Result of an SPD solve: the solution vector or the failure reason.
pub type SpdSolveOutcome = Result<Vec<f64>, SpdFailure>;

#[inline]
fn check_pivot(p: f64) -> Result<f64, SpdFailure> {
    if !(p > 0.0) {
        Err(SpdFailure::NotPositiveDefinite)
    } else if p <= PIVOT_FLOOR {
        Err(SpdFailure::NumericallySingular)
    } else {
        Ok(p)
    }
}

/// Cholesky factor `L` (row-major, lower triangle filled, upper zero) of a
/// dense symmetric `n×n` matrix given row-major.
pub fn cholesky_factor_dense(h: &[f64], n: usize) -> Result<Vec<f64>, SpdFailure> {
    assert_eq!(h.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = h[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        let d = check_pivot(diag)?.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = h[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L y = b` in place for row-major lower-triangular `L`.
pub fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ x = y` in place for row-major lower-triangular `L`.
pub fn backward_substitute_transpose(l: &[f64], n: usize, y: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
}

pub fn cholesky_solve_dense(h: &[f64], n: usize, rhs: &[f64]) -> SpdSolveOutcome {
    let l = cholesky_factor_dense(h, n)?;
    let mut x = rhs.to_vec();
    forward_substitute(&l, n, &mut x);
    backward_substitute_transpose(&l, n, &mut x);
    Ok(x)
}

/// `LDLᵀ` solve of a symmetric tridiagonal system in `O(n)`.
pub fn cholesky_solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> SpdSolveOutcome {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    assert_eq!(off.len(), n.saturating_sub(1));
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    d[0] = check_pivot(diag[0])?;
    for i in 0..n - 1 {
        l[i] = off[i] / d[i];
        d[i + 1] = check_pivot(diag[i + 1] - l[i] * off[i])?;
    }
    let mut x = rhs.to_vec();
    for i in 1..n {
        x[i] -= l[i - 1] * x[i - 1];
    }
    for i in 0..n {
        x[i] /= d[i];
    }
    for i in (0..n - 1).rev() {
        x[i] -= l[i] * x[i + 1];
    }
    Ok(x)
}

/// Factor of a 2×2 SPD block `[[a, b], [b, c]]` as `(l11, l21, l22)`.
fn factor_block(block: &[f64; 3]) -> Result<[f64; 3], SpdFailure> {
    let l11 = check_pivot(block[0])?.sqrt();
    let l21 = block[1] / l11;
    let l22 = check_pivot(block[2] - l21 * l21)?.sqrt();
    Ok([l11, l21, l22])
}

/// Solves a block-diagonal system with 2×2 SPD blocks `[a, b, c]`.
pub fn cholesky_solve_blocks(blocks: &[[f64; 3]], rhs: &[f64]) -> SpdSolveOutcome {
    assert_eq!(rhs.len(), 2 * blocks.len());
    let mut x = rhs.to_vec();
    for (block, x) in blocks.iter().zip(x.chunks_exact_mut(2)) {
        let [l11, l21, l22] = factor_block(block)?;
        let y0 = x[0] / l11;
        let y1 = (x[1] - l21 * y0) / l22;
        x[1] = y1 / l22;
        x[0] = (y0 - l21 * x[1]) / l11;
    }
    Ok(x)
}

pub fn cholesky_solve_diagonal(diag: &[f64], rhs: &[f64]) -> SpdSolveOutcome {
    diag.iter()
        .zip(rhs)
        .map(|(&d, &r)| check_pivot(d).map(|d| r / d))
        .collect()
}

/// Storage format of a Hessian, fixed by the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianFormat {
    Dense,
    Tridiagonal,
    Diagonal,
    Blocks2,
}

/// Symmetric positive-definite matrix in one of the structured formats.
#[derive(Debug, Clone, PartialEq)]
pub enum HessianMatrix {
    /// Row-major full storage.
    Dense { n: usize, data: Vec<f64> },
    Tridiagonal { diag: Vec<f64>, off: Vec<f64> },
    Diagonal(Vec<f64>),
    /// `[a, b, c]` per block, representing `[[a, b], [b, c]]`.
    Blocks2(Vec<[f64; 3]>),
}

impl HessianMatrix {
    pub fn zeros(format: HessianFormat, n: usize) -> Self {
        match format {
            HessianFormat::Dense => HessianMatrix::Dense {
                n,
                data: vec![0.0; n * n],
            },
            HessianFormat::Tridiagonal => HessianMatrix::Tridiagonal {
                diag: vec![0.0; n],
                off: vec![0.0; n.saturating_sub(1)],
            },
            HessianFormat::Diagonal => HessianMatrix::Diagonal(vec![0.0; n]),
            HessianFormat::Blocks2 => {
                assert!(n % 2 == 0, "block format needs an even dimension");
                HessianMatrix::Blocks2(vec![[0.0; 3]; n / 2])
            }
        }
    }

    pub fn format(&self) -> HessianFormat {
        match self {
            HessianMatrix::Dense { .. } => HessianFormat::Dense,
            HessianMatrix::Tridiagonal { .. } => HessianFormat::Tridiagonal,
            HessianMatrix::Diagonal(_) => HessianFormat::Diagonal,
            HessianMatrix::Blocks2(_) => HessianFormat::Blocks2,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HessianMatrix::Dense { n, .. } => *n,
            HessianMatrix::Tridiagonal { diag, .. } => diag.len(),
            HessianMatrix::Diagonal(d) => d.len(),
            HessianMatrix::Blocks2(b) => 2 * b.len(),
        }
    }

    /// Adds `c · v vᵀ` where `v` is supported on `start..start + v.len()`.
    ///
    /// The support must fit the format: anything for dense, at most two
    /// consecutive entries for tridiagonal, one entry for diagonal, and one
    /// aligned pair for blocks.
    #[inline]
    pub fn add_outer(&mut self, start: usize, v: &[f64], c: f64) {
        match self {
            HessianMatrix::Dense { n, data } => {
                for (a, &va) in v.iter().enumerate() {
                    let cva = c * va;
                    let row = &mut data[(start + a) * *n + start..(start + a) * *n + start + v.len()];
                    for (entry, &vb) in row.iter_mut().zip(v) {
                        *entry += cva * vb;
                    }
                }
            }
            HessianMatrix::Tridiagonal { diag, off } => match v.len() {
                1 => diag[start] += c * v[0] * v[0],
                2 => {
                    diag[start] += c * v[0] * v[0];
                    diag[start + 1] += c * v[1] * v[1];
                    off[start] += c * v[0] * v[1];
                }
                w => panic!("support width {w} does not fit a tridiagonal matrix"),
            },
            HessianMatrix::Diagonal(d) => {
                debug_assert_eq!(v.len(), 1);
                d[start] += c * v[0] * v[0];
            }
            HessianMatrix::Blocks2(blocks) => {
                debug_assert!(v.len() == 2 && start % 2 == 0);
                let b = &mut blocks[start / 2];
                b[0] += c * v[0] * v[0];
                b[1] += c * v[0] * v[1];
                b[2] += c * v[1] * v[1];
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            HessianMatrix::Dense { n, data } => data[i * n + j],
            HessianMatrix::Tridiagonal { diag, off } => {
                if i == j {
                    diag[i]
                } else if i.abs_diff(j) == 1 {
                    off[i.min(j)]
                } else {
                    0.0
                }
            }
            HessianMatrix::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            HessianMatrix::Blocks2(blocks) => {
                if i / 2 != j / 2 {
                    return 0.0;
                }
                let b = &blocks[i / 2];
                match (i % 2, j % 2) {
                    (0, 0) => b[0],
                    (1, 1) => b[2],
                    _ => b[1],
                }
            }
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.get(i, j);
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            HessianMatrix::Dense { n, data } => data
                .chunks_exact(*n)
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
            HessianMatrix::Tridiagonal { diag, off } => {
                let n = diag.len();
                (0..n)
                    .map(|i| {
                        let mut s = diag[i] * x[i];
                        if i > 0 {
                            s += off[i - 1] * x[i - 1];
                        }
                        if i + 1 < n {
                            s += off[i] * x[i + 1];
                        }
                        s
                    })
                    .collect()
            }
            HessianMatrix::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            HessianMatrix::Blocks2(blocks) => blocks
                .iter()
                .zip(x.chunks_exact(2))
                .flat_map(|(b, x)| [b[0] * x[0] + b[1] * x[1], b[1] * x[0] + b[2] * x[1]])
                .collect(),
        }
    }

    /// `self += s · other`; both must share the format.
    pub fn add_scaled(&mut self, other: &HessianMatrix, s: f64) {
        match (self, other) {
            (HessianMatrix::Dense { data: a, .. }, HessianMatrix::Dense { data: b, .. }) => {
                a.iter_mut().zip(b).for_each(|(a, b)| *a += s * b)
            }
            (
                HessianMatrix::Tridiagonal { diag: a, off: ao },
                HessianMatrix::Tridiagonal { diag: b, off: bo },
            ) => {
                a.iter_mut().zip(b).for_each(|(a, b)| *a += s * b);
                ao.iter_mut().zip(bo).for_each(|(a, b)| *a += s * b);
            }
            (HessianMatrix::Diagonal(a), HessianMatrix::Diagonal(b)) => {
                a.iter_mut().zip(b).for_each(|(a, b)| *a += s * b)
            }
            (HessianMatrix::Blocks2(a), HessianMatrix::Blocks2(b)) => {
                for (a, b) in a.iter_mut().zip(b) {
                    for k in 0..3 {
                        a[k] += s * b[k];
                    }
                }
            }
            (a, b) => panic!("format mismatch: {:?} vs {:?}", a.format(), b.format()),
        }
    }

    pub fn scale(&mut self, s: f64) {
        match self {
            HessianMatrix::Dense { data, .. } => data.iter_mut().for_each(|a| *a *= s),
            HessianMatrix::Tridiagonal { diag, off } => {
                diag.iter_mut().for_each(|a| *a *= s);
                off.iter_mut().for_each(|a| *a *= s);
            }
            HessianMatrix::Diagonal(d) => d.iter_mut().for_each(|a| *a *= s),
            HessianMatrix::Blocks2(b) => b.iter_mut().flatten().for_each(|a| *a *= s),
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> SpdSolveOutcome {
        match self {
            HessianMatrix::Dense { n, data } => cholesky_solve_dense(data, *n, rhs),
            HessianMatrix::Tridiagonal { diag, off } => cholesky_solve_tridiagonal(diag, off, rhs),
            HessianMatrix::Diagonal(d) => cholesky_solve_diagonal(d, rhs),
            HessianMatrix::Blocks2(b) => cholesky_solve_blocks(b, rhs),
        }
    }

    /// Cholesky factor in the matching lower-triangular format. Only the
    /// dense, diagonal and block formats are supported.
    pub fn cholesky(&self) -> Result<LowerFactor, SpdFailure> {
        match self {
            HessianMatrix::Dense { n, data } => Ok(LowerFactor::Dense {
                n: *n,
                data: cholesky_factor_dense(data, *n)?,
            }),
            HessianMatrix::Diagonal(d) => Ok(LowerFactor::Diagonal(
                d.iter()
                    .map(|&d| check_pivot(d).map(f64::sqrt))
                    .collect::<Result<_, _>>()?,
            )),
            HessianMatrix::Blocks2(b) => Ok(LowerFactor::Blocks2(
                b.iter().map(factor_block).collect::<Result<_, _>>()?,
            )),
            HessianMatrix::Tridiagonal { .. } => {
                panic!("tridiagonal Hessians are solved with LDLᵀ, not factored into a transform")
            }
        }
    }
}

/// Lower-triangular matrix sharing the sparsity of a Hessian format. Used
/// both for Cholesky factors and for accumulated change-of-basis transforms.
#[derive(Debug, Clone, PartialEq)]
pub enum LowerFactor {
    Dense { n: usize, data: Vec<f64> },
    Diagonal(Vec<f64>),
    /// `[l11, l21, l22]` per block.
    Blocks2(Vec<[f64; 3]>),
}

impl LowerFactor {
    pub fn identity(format: HessianFormat, n: usize) -> Self {
        match format {
            HessianFormat::Dense => {
                let mut data = vec![0.0; n * n];
                for i in 0..n {
                    data[i * n + i] = 1.0;
                }
                LowerFactor::Dense { n, data }
            }
            HessianFormat::Diagonal => LowerFactor::Diagonal(vec![1.0; n]),
            HessianFormat::Blocks2 => LowerFactor::Blocks2(vec![[1.0, 0.0, 1.0]; n / 2]),
            HessianFormat::Tridiagonal => panic!("no lower-triangular transform for tridiagonal format"),
        }
    }

    /// `L⁻¹ v` for a segment `v` supported on `start..start + v.len()`.
    /// Dense factors require the full vector (`start == 0`).
    #[inline]
    pub fn solve_segment(&self, start: usize, v: &mut [f64]) {
        match self {
            LowerFactor::Dense { n, data } => {
                debug_assert!(start == 0 && v.len() == *n);
                forward_substitute(data, *n, v);
            }
            LowerFactor::Diagonal(d) => {
                for (k, x) in v.iter_mut().enumerate() {
                    *x /= d[start + k];
                }
            }
            LowerFactor::Blocks2(blocks) => {
                for (b, x) in blocks[start / 2..].iter().zip(v.chunks_exact_mut(2)) {
                    let [l11, l21, l22] = *b;
                    x[0] /= l11;
                    x[1] = (x[1] - l21 * x[0]) / l22;
                }
            }
        }
    }

    /// `L⁻¹ v` for a full vector.
    pub fn solve(&self, v: &mut [f64]) {
        self.solve_segment(0, v)
    }

    /// `L v`.
    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        match self {
            LowerFactor::Dense { n, data } => (0..*n)
                .map(|i| (0..=i).map(|k| data[i * n + k] * v[k]).sum())
                .collect(),
            LowerFactor::Diagonal(d) => d.iter().zip(v).map(|(a, b)| a * b).collect(),
            LowerFactor::Blocks2(blocks) => blocks
                .iter()
                .zip(v.chunks_exact(2))
                .flat_map(|(b, x)| [b[0] * x[0], b[1] * x[0] + b[2] * x[1]])
                .collect(),
        }
    }

    /// `Lᵀ v`.
    pub fn mul_transpose(&self, v: &[f64]) -> Vec<f64> {
        match self {
            LowerFactor::Dense { n, data } => (0..*n)
                .map(|i| (i..*n).map(|k| data[k * n + i] * v[k]).sum())
                .collect(),
            LowerFactor::Diagonal(d) => d.iter().zip(v).map(|(a, b)| a * b).collect(),
            LowerFactor::Blocks2(blocks) => blocks
                .iter()
                .zip(v.chunks_exact(2))
                .flat_map(|(b, x)| [b[0] * x[0] + b[1] * x[1], b[2] * x[1]])
                .collect(),
        }
    }

    /// Replaces `self` (call it `T`) by `L⁻¹ T` where `L = factor`.
    pub fn left_solve_by(&mut self, factor: &LowerFactor) {
        match (self, factor) {
            (LowerFactor::Dense { n, data }, LowerFactor::Dense { data: l, .. }) => {
                let n = *n;
                let mut col = vec![0.0; n];
                for j in 0..n {
                    for i in 0..n {
                        col[i] = data[i * n + j];
                    }
                    forward_substitute(l, n, &mut col);
                    for i in 0..n {
                        data[i * n + j] = col[i];
                    }
                }
            }
            (LowerFactor::Diagonal(t), LowerFactor::Diagonal(l)) => {
                t.iter_mut().zip(l).for_each(|(t, l)| *t /= l)
            }
            (LowerFactor::Blocks2(t), LowerFactor::Blocks2(l)) => {
                for (t, l) in t.iter_mut().zip(l) {
                    // T = [[t11, 0], [t21, t22]], L⁻¹ T stays lower triangular
                    let [l11, l21, l22] = *l;
                    let n11 = t[0] / l11;
                    let n21 = (t[1] - l21 * n11) / l22;
                    let n22 = t[2] / l22;
                    *t = [n11, n21, n22];
                }
            }
            _ => panic!("transform format mismatch"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum::<f64>();
            }
            h[i * n + i] += 1.0;
        }
        h
    }

    fn residual(h: &HessianMatrix, x: &[f64], rhs: &[f64]) -> f64 {
        let hx = h.mul_vec(x);
        let num: f64 = hx.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
        num / den
    }

    #[test]
    fn dense_small_cases() {
        let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(cholesky_solve_dense(&id, 3, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let d = [2.0, 0.0, 0.0, 0.0, 2.0 / 3.0, 0.0, 0.0, 0.0, 0.4];
        let x = cholesky_solve_dense(&d, 3, &[2.0, 2.0, 2.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 3.0, 5.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn dense_random_residual_and_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(1..12);
            let h = random_spd(&mut rng, n);
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = cholesky_solve_dense(&h, n, &rhs).unwrap();
            let hm = HessianMatrix::Dense { n, data: h.clone() };
            assert!(residual(&hm, &x, &rhs) <= 1e-10);

            let l = cholesky_factor_dense(&h, n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let llt: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                    assert_abs_diff_eq!(llt, h[i * n + j], epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn factor_of_identity_and_diagonal() {
        let id = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(cholesky_factor_dense(&id, 2).unwrap(), id.to_vec());
        let d = [4.0, 0.0, 0.0, 9.0];
        assert_eq!(cholesky_factor_dense(&d, 2).unwrap(), vec![2.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn failures_are_reported() {
        let not_pd = [1.0, 2.0, 2.0, 1.0];
        assert_eq!(
            cholesky_solve_dense(&not_pd, 2, &[1.0, 1.0]),
            Err(SpdFailure::NotPositiveDefinite)
        );
        let tiny = [1e-301, 0.0, 0.0, 1.0];
        assert_eq!(
            cholesky_solve_dense(&tiny, 2, &[1.0, 1.0]),
            Err(SpdFailure::NumericallySingular)
        );
        assert_eq!(
            cholesky_solve_tridiagonal(&[1.0, f64::NAN], &[0.0], &[1.0, 1.0]),
            Err(SpdFailure::NotPositiveDefinite)
        );
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(
            cholesky_solve_tridiagonal(&[2.0; 4], &[0.0; 3], &[2.0, 4.0, 6.0, 8.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        for _ in 0..30 {
            let n = rng.gen_range(2..40);
            let off: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // diagonal dominance makes it SPD
            let diag: Vec<f64> = (0..n).map(|_| 2.5 + rng.gen_range(0.0..1.0)).collect();
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = HessianMatrix::Tridiagonal { diag: diag.clone(), off: off.clone() };
            let x = t.solve(&rhs).unwrap();
            let xd = cholesky_solve_dense(&t.to_dense(), n, &rhs).unwrap();
            for (a, b) in x.iter().zip(&xd) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn blocks_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ident = vec![[1.0, 0.0, 1.0]; 3];
        assert_eq!(cholesky_solve_blocks(&ident, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), vec![
            1.0, 2.0, 3.0, 4.0, 5.0, 6.0
        ]);
        for _ in 0..30 {
            let nb = rng.gen_range(1..10);
            let blocks: Vec<[f64; 3]> = (0..nb)
                .map(|_| {
                    let a: f64 = rng.gen_range(0.5..2.0);
                    let c: f64 = rng.gen_range(0.5..2.0);
                    let b = rng.gen_range(-0.9..0.9) * (a * c).sqrt();
                    [a, b, c]
                })
                .collect();
            let h = HessianMatrix::Blocks2(blocks);
            let rhs: Vec<f64> = (0..2 * nb).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = h.solve(&rhs).unwrap();
            let xd = cholesky_solve_dense(&h.to_dense(), 2 * nb, &rhs).unwrap();
            for (a, b) in x.iter().zip(&xd) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn transform_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let h1 = HessianMatrix::Dense { n, data: random_spd(&mut rng, n) };
        let h2 = HessianMatrix::Dense { n, data: random_spd(&mut rng, n) };
        let l1 = h1.cholesky().unwrap();
        let l2 = h2.cholesky().unwrap();
        let mut t = LowerFactor::identity(HessianFormat::Dense, n);
        t.left_solve_by(&l1);
        t.left_solve_by(&l2);
        // T v == L2⁻¹ L1⁻¹ v
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tv = t.mul(&v);
        let mut expect = v.clone();
        l1.solve(&mut expect);
        l2.solve(&mut expect);
        for (a, b) in tv.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn solve_recovers_x_for_every_format(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2 * rng.gen_range(1..8);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mats = [
                HessianMatrix::Dense { n, data: random_spd(&mut rng, n) },
                HessianMatrix::Tridiagonal {
                    diag: (0..n).map(|_| rng.gen_range(2.1..3.0)).collect(),
                    off: (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                },
                HessianMatrix::Diagonal((0..n).map(|_| rng.gen_range(0.1..3.0)).collect()),
                HessianMatrix::Blocks2((0..n / 2).map(|_| [2.0, rng.gen_range(-1.0..1.0), 2.0]).collect()),
            ];
            for h in &mats {
                let y = h.solve(&h.mul_vec(&x)).unwrap();
                let err: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                proptest::prop_assert!(err <= 1e-9 * nx);
            }
        }
    }
}
