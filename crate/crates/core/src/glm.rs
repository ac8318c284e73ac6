//! Binary-response GLM fitting by iteratively reweighted least squares,
//! shared by the propensity and classification-outcome models.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{solve_spd, Matrix};

pub const MAX_ITERATIONS: usize = 100;
pub const COEF_TOL: f64 = 1e-8;
/// Floor on IRLS working weights.
pub const WEIGHT_FLOOR: f64 = 1e-10;
const MU_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Logit,
    Probit,
}

impl Link {
    /// Inverse link, mapping a linear predictor to a probability.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => logistic(eta),
            Link::Probit => normal_cdf(eta),
        }
    }

    /// d mu / d eta.
    fn derivative(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
            Link::Probit => normal_pdf(eta),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
        })
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            _ => Err(Error::InvalidArgument(format!("unknown link '{s}'"))),
        }
    }
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Prepends an intercept column.
pub fn with_intercept(x: &Matrix) -> Matrix {
    let (n, d) = (x.rows(), x.cols());
    let mut out = Matrix::zeros(n, d + 1);
    for i in 0..n {
        let r = out.row_mut(i);
        r[0] = 1.0;
        r[1..].copy_from_slice(x.row(i));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub link: Link,
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl GlmFit {
    pub fn linear_predictor(&self, design_row: &[f64]) -> f64 {
        crate::numerics::dot(&self.beta, design_row)
    }
}

/// Maximum-likelihood fit of `P(y = 1) = link⁻¹(Xβ)` for `y ∈ {0, 1}`.
/// `design` must already contain any intercept column.
///
/// Stops when `max |Δβ| <= COEF_TOL` or after `MAX_ITERATIONS`; a fit that
/// runs out of iterations, or whose next step is not finite, is returned with
/// `converged = false` and the last finite iterate.
pub fn fit_binary(design: &Matrix, y: &[f64], link: Link) -> Result<GlmFit> {
    let (n, p) = (design.rows(), design.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    let mut beta = vec![0.0; p];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    for iter in 1..=MAX_ITERATIONS {
        for (i, row) in design.row_iter().enumerate() {
            let eta = crate::numerics::dot(row, &beta);
            let mu = link.inverse(eta).clamp(MU_EPS, 1.0 - MU_EPS);
            let dmu = link.derivative(eta).max(f64::MIN_POSITIVE);
            w[i] = (dmu * dmu / (mu * (1.0 - mu))).max(WEIGHT_FLOOR);
            z[i] = eta + (y[i] - mu) / dmu;
        }
        let xtwx = design.weighted_gram(&w)?;
        let wz: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a * b).collect();
        let xtwz = design.tr_mul_vec(&wz)?;
        let next = match xtwz.iter().all(|v| v.is_finite()).then(|| solve_spd(&xtwx, &xtwz)) {
            Some(Ok(b)) if b.iter().all(|v| v.is_finite()) => b,
            _ => {
                return Ok(GlmFit { link, beta, converged: false, iterations: iter - 1 });
            }
        };
        let delta = next.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next;
        if delta <= COEF_TOL {
            return Ok(GlmFit { link, beta, converged: true, iterations: iter });
        }
    }
    Ok(GlmFit { link, beta, converged: false, iterations: MAX_ITERATIONS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_functions() {
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
        assert!((logistic(2.0) + logistic(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn probit_derivative_matches_finite_difference() {
        for &t in &[-2.0, -0.3, 0.0, 1.1] {
            let h = 1e-6;
            let fd = (normal_cdf(t + h) - normal_cdf(t - h)) / (2.0 * h);
            assert!((fd - Link::Probit.derivative(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn intercept_only_mle_is_sample_proportion() {
        let design = Matrix::column(&[1.0; 10]).unwrap();
        let y = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for link in [Link::Logit, Link::Probit] {
            let fit = fit_binary(&design, &y, link).unwrap();
            assert!(fit.converged);
            assert!((link.inverse(fit.beta[0]) - 0.3).abs() < 1e-10);
        }
    }
}
