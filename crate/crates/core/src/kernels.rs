//! Kernel functions and Gram matrices.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

/// Row cap for the pairwise-distance scan in [`median_bandwidth`].
pub const BANDWIDTH_SUBSAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-gamma * |x - z|^2)`; bounded by 1.
    Rbf { gamma: f64 },
    /// `<x, z>`; unbounded, kept for tests.
    Linear,
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("rbf gamma must be positive, got {gamma}")));
        }
        Ok(KernelSpec::Rbf { gamma })
    }

    /// RBF with the median-heuristic width fitted on `x`.
    pub fn rbf_median(x: &Matrix) -> Result<Self> {
        KernelSpec::rbf(median_bandwidth(x)?)
    }

    /// True iff `sup k(x, x) <= 1`.
    pub fn is_bounded(&self) -> bool {
        matches!(self, KernelSpec::Rbf { .. })
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { gamma } => (-gamma * sq_dist(x, z)).exp(),
            KernelSpec::Linear => dot(x, z),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { gamma } => write!(f, "rbf:{gamma:.16e}"),
            KernelSpec::Linear => f.write_str("linear"),
        }
    }
}

/// Parses `linear`, `rbf:<gamma>`. A bare `rbf` has no width and is rejected
/// here; callers resolve it against data with [`KernelSpec::rbf_median`].
impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "linear" => Ok(KernelSpec::Linear),
            Some(("rbf", g)) => {
                let gamma: f64 = g
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad rbf gamma '{g}'")))?;
                KernelSpec::rbf(gamma)
            }
            _ => Err(Error::InvalidArgument(format!("unknown kernel '{s}'"))),
        }
    }
}

#[inline]
fn sq_dist(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.len(),
        });
    }
    Ok(spec.eval_unchecked(x, z))
}

/// Cross-kernel matrix `K[i][j] = k(a_i, b_j)` over row points.
pub fn gram(spec: &KernelSpec, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            found: b.cols(),
        });
    }
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for (o, bj) in out.row_mut(i).iter_mut().zip(b.row_iter()) {
            *o = spec.eval_unchecked(ai, bj);
        }
    }
    Ok(out)
}

/// Symmetric Gram matrix of `a` with itself; each pair is evaluated once.
pub fn gram_sym(spec: &KernelSpec, a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval_unchecked(a.row(i), a.row(j));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// `1 / median` of squared pairwise distances over distinct row pairs. Only
/// the first [`BANDWIDTH_SUBSAMPLE`] rows are scanned.
pub fn median_bandwidth(a: &Matrix) -> Result<f64> {
    let n = a.rows().min(BANDWIDTH_SUBSAMPLE);
    let mut d2 = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in 0..i {
            d2.push(sq_dist(a.row(i), a.row(j)));
        }
    }
    if d2.is_empty() {
        return Err(Error::DegenerateData("need at least two rows".into()));
    }
    d2.sort_by(f64::total_cmp);
    let k = d2.len();
    let med = if k % 2 == 1 {
        d2[k / 2]
    } else {
        0.5 * (d2[k / 2 - 1] + d2[k / 2])
    };
    if med > 0.0 {
        return Ok(1.0 / med);
    }
    // More than half the pairs coincide; fall back to the median of the
    // nonzero distances so near-duplicate designs still get a width.
    let nonzero: Vec<f64> = d2.into_iter().filter(|&v| v > 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::DegenerateData("all rows identical".into()));
    }
    let k = nonzero.len();
    let med = if k % 2 == 1 {
        nonzero[k / 2]
    } else {
        0.5 * (nonzero[k / 2 - 1] + nonzero[k / 2])
    };
    Ok(1.0 / med)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Cholesky;
    use proptest::prelude::*;

    #[test]
    fn rbf_self_similarity_is_one() {
        let k = KernelSpec::rbf(0.5).unwrap();
        assert_eq!(eval_kernel(&k, &[3.0, -1.0], &[3.0, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn rbf_unit_offset() {
        let k = KernelSpec::rbf(0.5).unwrap();
        let v = eval_kernel(&k, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn linear_is_dot_product() {
        assert_eq!(eval_kernel(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(!KernelSpec::Linear.is_bounded());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            eval_kernel(&KernelSpec::Linear, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let a = Matrix::zeros(2, 1);
        let b = Matrix::zeros(2, 3);
        assert!(gram(&KernelSpec::Linear, &a, &b).is_err());
    }

    #[test]
    fn duplicated_point_gram() {
        let k = KernelSpec::rbf(1.0).unwrap();
        let a = Matrix::from_rows(&[[0.3, 0.1], [0.3, 0.1]]).unwrap();
        assert_eq!(gram(&k, &a, &a).unwrap().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn cross_gram_shape_and_entries() {
        let k = KernelSpec::rbf(0.7).unwrap();
        let a = Matrix::from_rows(&[[0.0, 1.0], [2.0, -1.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0], [-1.0, 3.0]]).unwrap();
        let g = gram(&k, &a, &b).unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 3));
        for i in 0..2 {
            for j in 0..3 {
                let d2: f64 = a.row(i).iter().zip(b.row(j)).map(|(u, v)| (u - v).powi(2)).sum();
                assert!((g.get(i, j) - (-0.7 * d2).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn median_bandwidth_examples() {
        let two = Matrix::column(&[0.0, 1.0]).unwrap();
        assert_eq!(median_bandwidth(&two).unwrap(), 1.0);
        let three = Matrix::column(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(median_bandwidth(&three).unwrap(), 1.0);
        let same = Matrix::column(&[4.0, 4.0, 4.0]).unwrap();
        assert!(matches!(median_bandwidth(&same), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn parse_kernel_spec() {
        assert_eq!("linear".parse::<KernelSpec>().unwrap(), KernelSpec::Linear);
        assert_eq!("rbf:0.25".parse::<KernelSpec>().unwrap(), KernelSpec::Rbf { gamma: 0.25 });
        assert!("rbf:-1".parse::<KernelSpec>().is_err());
        assert!("poly".parse::<KernelSpec>().is_err());
    }

    proptest! {
        #[test]
        fn rbf_gram_properties(
            (n, pts, gamma) in (1usize..15).prop_flat_map(|n| (
                Just(n),
                prop::collection::vec(-4.0f64..4.0, n * 3),
                0.01f64..5.0,
            ))
        ) {
            let k = KernelSpec::rbf(gamma).unwrap();
            let a = Matrix::new(n, 3, pts).unwrap();
            let g = gram(&k, &a, &a).unwrap();
            for i in 0..n {
                prop_assert_eq!(g.get(i, i), 1.0);
                for j in 0..n {
                    prop_assert_eq!(g.get(i, j), g.get(j, i));
                    prop_assert!(g.get(i, j) > 0.0 && g.get(i, j) <= 1.0);
                }
            }
            prop_assert_eq!(&g, &gram_sym(&k, &a));
            let mut jittered = g.clone();
            jittered.add_diag(1e-8);
            prop_assert!(Cholesky::factor(&jittered).is_ok());
        }

        #[test]
        fn kernel_is_symmetric(x in prop::collection::vec(-5.0f64..5.0, 4),
                               z in prop::collection::vec(-5.0f64..5.0, 4),
                               gamma in 0.01f64..3.0) {
            for k in [KernelSpec::rbf(gamma).unwrap(), KernelSpec::Linear] {
                prop_assert_eq!(eval_kernel(&k, &x, &z).unwrap(), eval_kernel(&k, &z, &x).unwrap());
            }
        }
    }
}
