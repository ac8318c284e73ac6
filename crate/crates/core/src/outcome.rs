//! Conditional outcome models used by the augmentation term of the
//! doubly-robust loss.
//!
//! Regression uses the location-shift model `y = μ(x, β) + ε`, fitted by least
//! squares on complete cases, with `σ² = E ε²` estimated by the complete-case
//! mean squared residual. Classification (`y ∈ {-1, 1}`) uses a binary GLM
//! on complete cases. In both cases `Ĥ(x, t)` estimates `E[(y - t)² | x]`.

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{self, Link};
use crate::numerics::{dot, solve_spd, Matrix};

/// Feature map from raw covariates to outcome-model regressors. An
/// intercept is always prepended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSpec {
    /// Raw covariates, any arity.
    Linear,
    /// `(exp(x), u2, u3, u4, u5)` from `(x, u2..u5)`.
    Setting1,
    /// `(x1², x2)` from `(x1, x2)`.
    Setting2,
    /// `z` and the five terms of the 5-covariate signal, from `(z, x1..x5)`.
    Setting3,
    /// `z` and the eleven terms of the 10-covariate signal, from `(z, x1..x10)`.
    Setting4,
}

impl BasisSpec {
    pub fn input_arity(&self) -> Option<usize> {
        match self {
            BasisSpec::Linear => None,
            BasisSpec::Setting1 => Some(5),
            BasisSpec::Setting2 => Some(2),
            BasisSpec::Setting3 => Some(6),
            BasisSpec::Setting4 => Some(11),
        }
    }

    /// Number of regressors, excluding the intercept.
    pub fn output_cols(&self, d: usize) -> usize {
        match self {
            BasisSpec::Linear => d,
            BasisSpec::Setting1 => 5,
            BasisSpec::Setting2 => 2,
            BasisSpec::Setting3 => 6,
            BasisSpec::Setting4 => 12,
        }
    }

    /// The basis under which the given simulation setting's outcome model is
    /// correctly specified.
    pub fn correct_for_setting(id: u32) -> Result<Self> {
        match id {
            1 => Ok(BasisSpec::Setting1),
            2 => Ok(BasisSpec::Setting2),
            3 => Ok(BasisSpec::Setting3),
            4 => Ok(BasisSpec::Setting4),
            _ => Err(Error::BadSettingId(id)),
        }
    }

    fn expand_row(&self, r: &[f64], out: &mut Vec<f64>) {
        out.push(1.0);
        match self {
            BasisSpec::Linear => out.extend_from_slice(r),
            BasisSpec::Setting1 => {
                out.push(r[0].exp());
                out.extend_from_slice(&r[1..5]);
            }
            BasisSpec::Setting2 => out.extend_from_slice(&[r[0] * r[0], r[1]]),
            BasisSpec::Setting3 | BasisSpec::Setting4 => {
                let z = r[0];
                let x = |j: usize| r[j];
                out.extend_from_slice(&[
                    z,
                    x(1).cos(),
                    x(2) * x(2),
                    (-x(3)).exp() * x(4),
                    x(5).sin() * x(3).cos(),
                    x(1) * x(5),
                ]);
                if *self == BasisSpec::Setting4 {
                    out.extend_from_slice(&[
                        x(6) * x(7).sin(),
                        x(6).cos() * x(7),
                        x(8) * x(9).sin() * x(10).sin(),
                        x(8).powi(3),
                        x(8) * x(9),
                        x(10).exp() * x(10).cos(),
                    ]);
                }
            }
        }
    }

    /// Design matrix `[1, φ(x)]`.
    pub fn design(&self, x: &Matrix) -> Result<Matrix> {
        if let Some(a) = self.input_arity() {
            if x.cols() != a {
                return Err(Error::DimensionMismatch { expected: a, found: x.cols() });
            }
        }
        let p = self.output_cols(x.cols()) + 1;
        let mut data = Vec::with_capacity(x.rows() * p);
        for r in x.row_iter() {
            self.expand_row(r, &mut data);
        }
        Matrix::new(x.rows(), p, data)
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisSpec::Linear => "linear",
            BasisSpec::Setting1 => "setting1",
            BasisSpec::Setting2 => "setting2",
            BasisSpec::Setting3 => "setting3",
            BasisSpec::Setting4 => "setting4",
        })
    }
}

impl FromStr for BasisSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BasisSpec::Linear),
            "setting1" => Ok(BasisSpec::Setting1),
            "setting2" => Ok(BasisSpec::Setting2),
            "setting3" => Ok(BasisSpec::Setting3),
            "setting4" => Ok(BasisSpec::Setting4),
            _ => Err(Error::InvalidArgument(format!("unknown outcome basis '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    /// Labels in `{-1, 1}`, modeled by a binary GLM with this link.
    Classification(Link),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeFit {
    pub task: Task,
    pub basis: BasisSpec,
    pub beta: Vec<f64>,
    /// Residual variance estimate; zero for classification.
    pub sigma2: f64,
    pub converged: bool,
}

impl OutcomeFit {
    fn linear_predictor(&self, x_row: &[f64]) -> Result<f64> {
        if let Some(a) = self.basis.input_arity() {
            if x_row.len() != a {
                return Err(Error::DimensionMismatch { expected: a, found: x_row.len() });
            }
        } else if x_row.len() + 1 != self.beta.len() {
            return Err(Error::DimensionMismatch { expected: self.beta.len() - 1, found: x_row.len() });
        }
        let mut buf = Vec::with_capacity(self.beta.len());
        self.basis.expand_row(x_row, &mut buf);
        Ok(dot(&buf, &self.beta))
    }

    /// Regression mean, or `2 P(y = 1 | x) - 1` for classification.
    pub fn mean_at(&self, x_row: &[f64]) -> Result<f64> {
        let eta = self.linear_predictor(x_row)?;
        Ok(match self.task {
            Task::Regression => eta,
            Task::Classification(link) => 2.0 * class_prob(link, eta) - 1.0,
        })
    }

    /// Estimated `E[(y - t)² | x]`.
    pub fn h_hat(&self, x_row: &[f64], t: f64) -> Result<f64> {
        let eta = self.linear_predictor(x_row)?;
        Ok(match self.task {
            Task::Regression => (eta - t).powi(2) + self.sigma2,
            Task::Classification(link) => {
                let p = class_prob(link, eta);
                1.0 + t * t + 2.0 * t - 4.0 * t * p
            }
        })
    }
}

/// `P(y = 1 | x)`, kept strictly inside (0, 1).
fn class_prob(link: Link, eta: f64) -> f64 {
    link.inverse(eta).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

const PROB_EPS: f64 = 1e-15;

pub fn mu_vector(fit: &OutcomeFit, x: &Matrix) -> Result<Vec<f64>> {
    x.row_iter().map(|r| fit.mean_at(r)).collect()
}

pub fn h_hat(fit: &OutcomeFit, x_row: &[f64], t: f64) -> Result<f64> {
    fit.h_hat(x_row, t)
}

fn complete_design(ds: &Dataset, basis: BasisSpec) -> Result<(Matrix, Vec<f64>)> {
    let cc = ds.complete_indices();
    let design = basis.design(&ds.x().select_rows(&cc))?;
    let y = cc.iter().map(|&i| ds.y()[i].unwrap_or(0.0)).collect();
    Ok((design, y))
}

/// Least squares of observed responses on `basis(x)`.
pub fn fit_regression_outcome(ds: &Dataset, basis: BasisSpec) -> Result<OutcomeFit> {
    let needed = basis.output_cols(ds.d()) + 2;
    let found = ds.observed_count();
    if found < needed {
        return Err(Error::TooFewCompleteCases { needed, found });
    }
    let (design, y) = complete_design(ds, basis)?;
    let xtx = design.weighted_gram(&vec![1.0; y.len()])?;
    let xty = design.tr_mul_vec(&y)?;
    let beta = match solve_spd(&xtx, &xty) {
        Ok(b) => b,
        Err(Error::NotPositiveDefinite { .. }) => return Err(Error::RankDeficientBasis),
        Err(e) => return Err(e),
    };
    let fitted = design.mul_vec(&beta)?;
    let sigma2 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(OutcomeFit {
        task: Task::Regression,
        basis,
        beta,
        sigma2,
        converged: true,
    })
}

/// Binary GLM of observed labels `(y + 1)/2` on `basis(x)`.
pub fn fit_classification_outcome(ds: &Dataset, basis: BasisSpec, link: Link) -> Result<OutcomeFit> {
    let (design, y) = complete_design(ds, basis)?;
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument(format!("classification label {bad} not in {{-1, 1}}")));
    }
    let pos = y.iter().filter(|&&v| v == 1.0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    let y01: Vec<f64> = y.iter().map(|v| (v + 1.0) / 2.0).collect();
    let fit = glm::fit_binary(&design, &y01, link)?;
    Ok(OutcomeFit {
        task: Task::Classification(link),
        basis,
        beta: fit.beta,
        sigma2: 0.0,
        converged: fit.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{generate, SettingSpec};

    fn line_data() -> Dataset {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let x = Matrix::column(&xs).unwrap();
        let y = xs.iter().map(|v| Some(2.0 * v)).collect();
        Dataset::new(x, y, vec![true, true, false, true, true, false]).unwrap()
    }

    #[test]
    fn noiseless_line() {
        let fit = fit_regression_outcome(&line_data(), BasisSpec::Linear).unwrap();
        assert!(fit.beta[0].abs() < 1e-12 && (fit.beta[1] - 2.0).abs() < 1e-12);
        assert!(fit.sigma2 < 1e-24);
    }

    #[test]
    fn unobserved_responses_are_ignored() {
        let ds = line_data();
        let mut full: Vec<f64> = (0..6).map(|i| 2.0 * f64::from(i)).collect();
        full[2] = 1e6;
        full[5] = -40.0;
        let perturbed = ds.clone().with_full_response(full).unwrap().with_indicator(ds.m().to_vec()).unwrap();
        let a = fit_regression_outcome(&ds, BasisSpec::Linear).unwrap();
        let b = fit_regression_outcome(&perturbed, BasisSpec::Linear).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_and_rank_deficient() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0], [5.0, 10.0]]).unwrap();
        let ds = Dataset::complete(x.clone(), vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(matches!(fit_regression_outcome(&ds, BasisSpec::Linear), Err(Error::RankDeficientBasis)));
        let ds = Dataset::new(x, vec![Some(1.0), Some(2.0), Some(3.0), None, None], vec![true, true, true, false, false])
            .unwrap();
        assert!(matches!(
            fit_regression_outcome(&ds, BasisSpec::Linear),
            Err(Error::TooFewCompleteCases { needed: 4, found: 3 })
        ));
    }

    #[test]
    fn setting1_correct_basis_recovers_generating_model() {
        let ds = generate(&SettingSpec::new(1, 2000, 17)).unwrap();
        let fit = fit_regression_outcome(&ds, BasisSpec::Setting1).unwrap();
        let design = BasisSpec::Setting1.design(&ds.complete_cases().x().clone()).unwrap();
        let xtx = design.weighted_gram(&vec![1.0; design.rows()]).unwrap();
        let truth = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        for (j, &b) in truth.iter().enumerate() {
            let mut e = vec![0.0; truth.len()];
            e[j] = 1.0;
            let var = fit.sigma2 * solve_spd(&xtx, &e).unwrap()[j];
            assert!((fit.beta[j] - b).abs() < 3.0 * var.sqrt(), "coef {j}: {} vs {b}", fit.beta[j]);
        }
        assert!((fit.sigma2 - 1.0).abs() < 0.15, "sigma2 {}", fit.sigma2);
    }

    #[test]
    fn mean_vectors() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        let reg = OutcomeFit {
            task: Task::Regression,
            basis: BasisSpec::Linear,
            beta: vec![1.0, 0.0, 0.0],
            sigma2: 0.3,
            converged: true,
        };
        assert_eq!(mu_vector(&reg, &x).unwrap(), vec![1.0, 1.0]);
        let cls = OutcomeFit {
            task: Task::Classification(Link::Logit),
            basis: BasisSpec::Linear,
            beta: vec![0.0; 3],
            sigma2: 0.0,
            converged: true,
        };
        assert_eq!(mu_vector(&cls, &x).unwrap(), vec![0.0, 0.0]);
        let steep = OutcomeFit { beta: vec![0.0, 50.0, -50.0], ..cls.clone() };
        for v in mu_vector(&steep, &x).unwrap() {
            assert!(v > -1.0 && v < 1.0, "{v}");
        }
        assert!(matches!(mu_vector(&reg, &Matrix::zeros(1, 3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn h_hat_values() {
        let reg = OutcomeFit {
            task: Task::Regression,
            basis: BasisSpec::Linear,
            beta: vec![0.5, 2.0],
            sigma2: 0.7,
            converged: true,
        };
        assert_eq!(reg.h_hat(&[1.0], 2.5).unwrap(), 0.7);
        let cls = OutcomeFit {
            task: Task::Classification(Link::Logit),
            basis: BasisSpec::Linear,
            beta: vec![0.3, -1.0],
            sigma2: 0.0,
            converged: true,
        };
        assert_eq!(cls.h_hat(&[2.0], 0.0).unwrap(), 1.0);
        // P(y = 1 | x) saturates to 1 for a huge linear predictor.
        let sure = OutcomeFit { beta: vec![800.0, 0.0], ..cls };
        assert!(sure.h_hat(&[0.0], 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn h_hat_has_unit_curvature() {
        let reg = OutcomeFit {
            task: Task::Regression,
            basis: BasisSpec::Linear,
            beta: vec![0.2, -1.3, 0.4],
            sigma2: 1.9,
            converged: true,
        };
        let cls = OutcomeFit {
            task: Task::Classification(Link::Probit),
            basis: BasisSpec::Linear,
            beta: vec![0.1, 0.7, -0.2],
            sigma2: 0.0,
            converged: true,
        };
        let delta = 0.25;
        for fit in [&reg, &cls] {
            for &t in &[-2.0, -0.1, 0.0, 0.8, 3.0] {
                let x = [0.4, -1.2];
                let h = |s: f64| fit.h_hat(&x, s).unwrap();
                let second = h(t + delta) - 2.0 * h(t) + h(t - delta);
                assert!((second - 2.0 * delta * delta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn regression_h_hat_is_gaussian_expectation() {
        let fit = OutcomeFit {
            task: Task::Regression,
            basis: BasisSpec::Linear,
            beta: vec![1.0, 0.5],
            sigma2: 0.8,
            converged: true,
        };
        let sd = fit.sigma2.sqrt();
        for &(x, t) in &[(0.0, 0.0), (1.0, 3.0), (-2.0, 0.5), (4.0, -1.0), (0.3, 1.15)] {
            let mu = 1.0 + 0.5 * x;
            // Composite Simpson over mu ± 12 sd.
            let (a, b, k) = (mu - 12.0 * sd, mu + 12.0 * sd, 20_000usize);
            let h = (b - a) / k as f64;
            let f = |y: f64| (y - t).powi(2) * (-(y - mu).powi(2) / (2.0 * fit.sigma2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            let mut s = f(a) + f(b);
            for i in 1..k {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = s * h / 3.0;
            assert!((integral - fit.h_hat(&[x], t).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn sigma2_invariant_to_row_order() {
        let ds = generate(&SettingSpec::new(3, 300, 4)).unwrap();
        let mut idx: Vec<usize> = (0..ds.n()).rev().collect();
        idx.rotate_left(37);
        let a = fit_regression_outcome(&ds, BasisSpec::Linear).unwrap();
        let b = fit_regression_outcome(&ds.subset(&idx), BasisSpec::Linear).unwrap();
        assert!((a.sigma2 - b.sigma2).abs() < 1e-10 * a.sigma2);
    }

    fn labels(ys: &[f64], m: &[bool]) -> Dataset {
        let x = Matrix::column(&(0..ys.len()).map(|i| f64::from(i as u32 / 2)).collect::<Vec<_>>()).unwrap();
        Dataset::new(x, ys.iter().map(|&v| Some(v)).collect(), m.to_vec()).unwrap()
    }

    #[test]
    fn balanced_labels_give_one_half() {
        let ys: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let ds = labels(&ys, &[true; 40]);
        let fit = fit_classification_outcome(&ds, BasisSpec::Linear, Link::Logit).unwrap();
        for v in mu_vector(&fit, ds.x()).unwrap() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn single_class_and_complete_case_contract() {
        let ds = labels(&[1.0, 1.0, 1.0, -1.0], &[true, true, true, false]);
        assert!(matches!(
            fit_classification_outcome(&ds, BasisSpec::Linear, Link::Logit),
            Err(Error::SingleClass)
        ));
        let m = [true, true, false, true, true, false, true, true];
        let a = labels(&[1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0], &m);
        let b = labels(&[1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0], &m);
        assert_eq!(
            fit_classification_outcome(&a, BasisSpec::Linear, Link::Logit).unwrap(),
            fit_classification_outcome(&b, BasisSpec::Linear, Link::Logit).unwrap()
        );
    }
}
