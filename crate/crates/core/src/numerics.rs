//! Dense row-major matrices and the two direct solvers used throughout the
//! crate: a Cholesky factorization for symmetric positive-definite systems
//! and a row-pivoted LU factorization for everything else.

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`solve_spd`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// LU pivots smaller than this fraction of `max |A|` are treated as zero.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting size mismatches and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    /// Single-column matrix holding `v`.
    pub fn column(v: &[f64]) -> Result<Self> {
        Matrix::new(v.len(), 1, v.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn col_values(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Matrix formed by the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Submatrix `A[rows, cols]`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Matrix {
            rows: rows.len(),
            cols: cols.len(),
            data,
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, &bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `XᵀWX` for a diagonal weight vector `w`.
    pub fn weighted_gram(&self, w: &[f64]) -> Result<Matrix> {
        if w.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: w.len(),
            });
        }
        let p = self.cols;
        let mut out = Matrix::zeros(p, p);
        for (r, &wi) in self.row_iter().zip(w) {
            for a in 0..p {
                let s = wi * r[a];
                if s == 0.0 {
                    continue;
                }
                let o = &mut out.data[a * p..a * p + a + 1];
                for (oab, &rb) in o.iter_mut().zip(&r[..=a]) {
                    *oab += s * rb;
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                out.data[b * p + a] = out.data[a * p + b];
            }
        }
        Ok(out)
    }

    /// `Xᵀv`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vi) in self.row_iter().zip(v) {
            for (o, &x) in out.iter_mut().zip(r) {
                *o += vi * x;
            }
        }
        Ok(out)
    }

    /// Adds `c` to every diagonal entry.
    pub fn add_diag(&mut self, c: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += c;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let tol = rel_tol * self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in 0..i {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Inner product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖Ax − b‖∞`.
pub fn residual_inf(a: &Matrix, x: &[f64], b: &[f64]) -> Result<f64> {
    let ax = a.mul_vec(x)?;
    Ok(ax.iter().zip(b).fold(0.0, |m, (u, v)| m.max((u - v).abs())))
}

/// Lower-triangular Cholesky factor `A = LLᵀ`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows,
                found: a.cols,
            });
        }
        if !a.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::InvalidArgument("matrix is not symmetric".into()));
        }
        let n = a.rows;
        let mut l = Matrix::zeros(n, n);
        let floor = f64::EPSILON * n.max(1) as f64;
        for i in 0..n {
            for j in 0..=i {
                let s = a.get(i, j) - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                if j == i {
                    if !(s > floor * a.get(i, i).abs()) {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l.data[i * n + i] = s.sqrt();
                } else {
                    l.data[i * n + j] = s / l.data[j * n + j];
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.l.rows;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        // Forward: L y = b.
        let mut y = b.to_vec();
        for i in 0..n {
            let r = self.l.row(i);
            y[i] = (y[i] - dot(&r[..i], &y[..i])) / r[i];
        }
        // Backward: Lᵀ x = y, sweeping rows of L.
        for i in (0..n).rev() {
            let r = self.l.row(i);
            let xi = y[i] / r[i];
            y[i] = xi;
            for (yk, &lik) in y[..i].iter_mut().zip(&r[..i]) {
                *yk -= lik * xi;
            }
        }
        Ok(y)
    }
}

/// Row-pivoted LU factorization `PA = LU`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows,
                found: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let tol = PIVOT_TOL * a.max_abs();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu.get(i, k).abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pmax > tol) || pmax == 0.0 {
                return Err(Error::Singular { col: k, pivot: pmax });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    lu.data.swap(p * n + j, k * n + j);
                }
            }
            let (head, tail) = lu.data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..];
            let pivot = pivot_row[k];
            for row in tail.chunks_exact_mut(n) {
                let f = row[k] / pivot;
                row[k] = f;
                if f == 0.0 {
                    continue;
                }
                for (r, &u) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                    *r -= f * u;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lu.rows;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let r = self.lu.row(i);
            x[i] -= dot(&r[..i], &x[..i]);
        }
        for i in (0..n).rev() {
            let r = self.lu.row(i);
            x[i] = (x[i] - dot(&r[i + 1..], &x[i + 1..])) / r[i];
        }
        Ok(x)
    }
}

/// Solves `Ax = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: b.len(),
        });
    }
    Cholesky::factor(a)?.solve(b)
}

/// Solves `Ax = b` for a general square `A`.
pub fn solve_general(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: b.len(),
        });
    }
    Lu::factor(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn spd_identity() {
        let x = solve_spd(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn spd_two_by_two_matches_cramer() {
        // det = 8; x = (4*3 - 2*5)/8, y = (4*5 - 2*4)/8
        let a = m(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let x = solve_spd(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 0.25).abs() < 1e-14);
        assert!((x[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn spd_rank_deficient() {
        let a = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let err = solve_spd(&a, &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn spd_rejects_asymmetric_and_bad_rhs() {
        let a = m(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert!(matches!(solve_spd(&a, &[1.0, 1.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            solve_spd(&Matrix::identity(2), &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn general_identity_and_permutation() {
        assert_eq!(solve_general(&Matrix::identity(2), &[7.0, -1.0]).unwrap(), vec![7.0, -1.0]);
        let p = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(solve_general(&p, &[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn general_singular() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(solve_general(&a, &[1.0, 1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn new_rejects_nan_and_bad_len() {
        assert!(matches!(Matrix::new(1, 2, vec![1.0, f64::NAN]), Err(Error::NonFinite { index: 1 })));
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn weighted_gram_matches_explicit_product() {
        let x = m(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.5]]);
        let w = [2.0, 1.0, 4.0];
        let g = x.weighted_gram(&w).unwrap();
        let explicit = x.transpose().mul(&Matrix::from_diag(&w)).unwrap().mul(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((g.get(i, j) - explicit.get(i, j)).abs() < 1e-12);
            }
        }
    }

    fn spd_from(g: &[f64], n: usize) -> Matrix {
        let g = Matrix::new(n, n, g.to_vec()).unwrap();
        let mut a = g.transpose().mul(&g).unwrap();
        a.add_diag(1.0);
        a
    }

    proptest! {
        #[test]
        fn spd_solve_residual_small(
            (n, g, b) in (1usize..12).prop_flat_map(|n| (
                Just(n),
                prop::collection::vec(-3.0f64..3.0, n * n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let a = spd_from(&g, n);
            let x = solve_spd(&a, &b).unwrap();
            let r = residual_inf(&a, &x, &b).unwrap();
            prop_assert!(r <= 1e-8 * (1.0 + norm_inf(&b)));
        }

        #[test]
        fn general_agrees_with_spd(
            (n, g, b) in (1usize..12).prop_flat_map(|n| (
                Just(n),
                prop::collection::vec(-3.0f64..3.0, n * n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let a = spd_from(&g, n);
            let x1 = solve_spd(&a, &b).unwrap();
            let x2 = solve_general(&a, &b).unwrap();
            for (u, v) in x1.iter().zip(&x2) {
                prop_assert!((u - v).abs() <= 1e-9);
            }
            prop_assert!(residual_inf(&a, &x2, &b).unwrap() <= 1e-8 * (1.0 + norm_inf(&b)));
        }
    }
}
