//! Observation-probability models `π(x) = P(m = 1 | x)`.
//!
//! Estimated fits are logit or probit GLMs in the raw covariates plus an
//! intercept. Every prediction is clamped to `[clamp_lo, clamp_hi]` so the
//! inverse weights `1/π` stay bounded. Probabilities that are known by design
//! can be wrapped instead of estimated.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{self, with_intercept, Link};
use crate::numerics::{dot, Matrix};

pub const DEFAULT_CLAMP_LO: f64 = 0.01;
pub const DEFAULT_CLAMP_HI: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub enum PropensityModel {
    /// GLM with coefficients `beta`, intercept first.
    Glm {
        link: Link,
        beta: Vec<f64>,
        converged: bool,
        iterations: usize,
    },
    /// Per-row probabilities carried by the dataset (`pi` column).
    Known,
    /// The same probability for every row.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    pub model: PropensityModel,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl PropensityFit {
    /// Wraps the dataset's known probabilities. The upper clamp is 1 since
    /// design probabilities are exact.
    pub fn known() -> Self {
        PropensityFit {
            model: PropensityModel::Known,
            clamp_lo: DEFAULT_CLAMP_LO,
            clamp_hi: 1.0,
        }
    }

    /// `π ≡ p`, unclamped. `p = 1` turns the weighted estimators into their
    /// unweighted counterparts.
    pub fn constant(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("constant propensity {p} outside (0, 1]")));
        }
        Ok(PropensityFit {
            model: PropensityModel::Constant(p),
            clamp_lo: p,
            clamp_hi: p,
        })
    }

    pub fn with_clamps(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidArgument(format!("bad clamps [{lo}, {hi}]")));
        }
        self.clamp_lo = lo;
        self.clamp_hi = hi;
        Ok(self)
    }

    pub fn converged(&self) -> bool {
        match &self.model {
            PropensityModel::Glm { converged, .. } => *converged,
            _ => true,
        }
    }

    pub fn link(&self) -> Option<Link> {
        match &self.model {
            PropensityModel::Glm { link, .. } => Some(*link),
            _ => None,
        }
    }

    /// Fails with `NoConvergence` for a GLM that did not converge.
    pub fn require_converged(self) -> Result<Self> {
        match &self.model {
            PropensityModel::Glm { converged: false, iterations, .. } => {
                Err(Error::NoConvergence { iterations: *iterations })
            }
            _ => Ok(self),
        }
    }

    fn clamp(&self, p: f64) -> f64 {
        p.max(self.clamp_lo).min(self.clamp_hi)
    }

    /// Clamped probabilities at the rows of `x`. Known-by-design fits have no
    /// covariate form and need [`PropensityFit::pi_for`].
    pub fn predict_pi(&self, x: &Matrix) -> Result<Vec<f64>> {
        match &self.model {
            PropensityModel::Glm { link, beta, .. } => {
                if x.cols() + 1 != beta.len() {
                    return Err(Error::DimensionMismatch { expected: beta.len() - 1, found: x.cols() });
                }
                Ok(x.row_iter()
                    .map(|r| self.clamp(link.inverse(beta[0] + dot(&beta[1..], r))))
                    .collect())
            }
            PropensityModel::Constant(p) => Ok(vec![*p; x.rows()]),
            PropensityModel::Known => Err(Error::MissingPropensity(
                "known propensities are only available through a dataset".into(),
            )),
        }
    }

    /// Clamped probabilities for every row of `ds`.
    pub fn pi_for(&self, ds: &Dataset) -> Result<Vec<f64>> {
        match &self.model {
            PropensityModel::Known => {
                let pi = ds
                    .true_pi()
                    .ok_or_else(|| Error::MissingPropensity("dataset has no pi column".into()))?;
                Ok(pi.iter().map(|&p| self.clamp(p)).collect())
            }
            _ => self.predict_pi(ds.x()),
        }
    }
}

pub fn predict_pi(fit: &PropensityFit, x: &Matrix) -> Result<Vec<f64>> {
    fit.predict_pi(x)
}

/// Maximum-likelihood GLM for the indicator with default clamps.
pub fn fit_glm(x: &Matrix, m: &[bool], link: Link) -> Result<PropensityFit> {
    fit_glm_clamped(x, m, link, DEFAULT_CLAMP_LO, DEFAULT_CLAMP_HI)
}

pub fn fit_glm_clamped(x: &Matrix, m: &[bool], link: Link, lo: f64, hi: f64) -> Result<PropensityFit> {
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::InvalidArgument(format!("bad clamps [{lo}, {hi}]")));
    }
    let n = x.rows();
    if m.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.len() });
    }
    if n < x.cols() + 2 {
        return Err(Error::BadSize(format!("{n} rows for {} covariates", x.cols())));
    }
    let observed = m.iter().filter(|&&b| b).count();
    if observed == 0 || observed == n {
        return Err(Error::AllObservedOrAllMissing { observed, n });
    }
    let y: Vec<f64> = m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let fit = glm::fit_binary(&with_intercept(x), &y, link)?;
    Ok(PropensityFit {
        model: PropensityModel::Glm {
            link,
            beta: fit.beta,
            converged: fit.converged,
            iterations: fit.iterations,
        },
        clamp_lo: lo,
        clamp_hi: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::logistic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn independent_indicator_gives_sample_proportion() {
        // Each covariate value appears once observed and once missing, so the
        // slope score vanishes and the MLE is the intercept-only one: 50/100.
        let xs: Vec<f64> = (0..100).map(|i| f64::from(i / 2)).collect();
        let m: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let x = Matrix::column(&xs).unwrap();
        for link in [Link::Logit, Link::Probit] {
            let fit = fit_glm(&x, &m, link).unwrap();
            assert!(fit.converged());
            for p in fit.predict_pi(&x).unwrap() {
                assert!((p - 0.5).abs() < 1e-9, "{p}");
            }
        }
    }

    #[test]
    fn all_observed_is_rejected() {
        let x = Matrix::column(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let err = fit_glm(&x, &[true; 4], Link::Logit).unwrap_err();
        assert!(matches!(err, Error::AllObservedOrAllMissing { observed: 4, n: 4 }));
    }

    #[test]
    fn separated_data_is_flagged_and_clamped() {
        let x = Matrix::column(&[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        let m = [false, false, false, true, true, true];
        for link in [Link::Logit, Link::Probit] {
            let fit = fit_glm(&x, &m, link).unwrap();
            assert!(!fit.converged());
            let pi = fit.predict_pi(&x).unwrap();
            assert_eq!(pi[0], DEFAULT_CLAMP_LO);
            assert_eq!(pi[5], DEFAULT_CLAMP_HI);
            assert!(matches!(fit.require_converged(), Err(Error::NoConvergence { .. })));
        }
    }

    #[test]
    fn clamp_floor_and_ceiling() {
        let x = Matrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        // logistic(-6.9) ~ 0.001, logistic(6.9) ~ 0.999
        let fit = PropensityFit {
            model: PropensityModel::Glm { link: Link::Logit, beta: vec![0.0, 6.9], converged: true, iterations: 1 },
            clamp_lo: 0.05,
            clamp_hi: 0.95,
        };
        assert!((logistic(-6.9) - 0.001).abs() < 1e-4);
        assert_eq!(fit.predict_pi(&x).unwrap(), vec![0.05, 0.95]);
    }

    #[test]
    fn zero_coefficients_give_one_half() {
        let x = Matrix::from_rows(&[[3.0, -2.0], [0.0, 7.0]]).unwrap();
        let fit = PropensityFit {
            model: PropensityModel::Glm { link: Link::Logit, beta: vec![0.0; 3], converged: true, iterations: 1 },
            clamp_lo: DEFAULT_CLAMP_LO,
            clamp_hi: DEFAULT_CLAMP_HI,
        };
        assert_eq!(fit.predict_pi(&x).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(
            fit.predict_pi(&Matrix::zeros(1, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn known_and_constant_propensities() {
        let x = Matrix::column(&[0.0, 1.0]).unwrap();
        let ds = Dataset::complete(x.clone(), vec![1.0, 2.0]).unwrap();
        assert!(matches!(PropensityFit::known().pi_for(&ds), Err(Error::MissingPropensity(_))));
        let ds = ds.with_true_pi(vec![0.001, 1.0]).unwrap();
        assert_eq!(PropensityFit::known().pi_for(&ds).unwrap(), vec![DEFAULT_CLAMP_LO, 1.0]);
        assert_eq!(PropensityFit::constant(1.0).unwrap().predict_pi(&x).unwrap(), vec![1.0, 1.0]);
        assert!(PropensityFit::constant(0.0).is_err());
    }

    #[test]
    fn probit_and_logit_rank_agree_on_monotone_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..400).map(|i| f64::from(i) / 100.0 - 2.0).collect();
        let m: Vec<bool> = xs.iter().map(|&v| rng.random::<f64>() < logistic(1.2 * v)).collect();
        let x = Matrix::column(&xs).unwrap();
        let a = fit_glm(&x, &m, Link::Logit).unwrap().predict_pi(&x).unwrap();
        let b = fit_glm(&x, &m, Link::Probit).unwrap().predict_pi(&x).unwrap();
        let ord = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]).then(i.cmp(&j)));
            idx
        };
        assert_eq!(ord(&a), ord(&b));
    }
}
