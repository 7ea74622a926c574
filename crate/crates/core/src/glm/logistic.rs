use serde::{Deserialize, Serialize};

use super::kernel::{cross_products, dot, map_chunks};
use super::{newton, retained_design, sigmoid, softplus, FitOptions, Likelihood, Newton, SEPARATION_RIDGE};
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{expand_square, expand_vector, LowerTriangular};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub covariance: LowerTriangular,
    pub converged: bool,
    pub iterations: usize,
    /// Ridge applied after separation was detected; 0 otherwise.
    pub penalty: f64,
    pub n: usize,
    pub k: usize,
    pub dropped: Vec<usize>,
    pub log_likelihood: f64,
}

struct Bernoulli<'a> {
    x: &'a DesignMatrix,
    y: &'a [f64],
}

impl Likelihood for Bernoulli<'_> {
    fn dim(&self) -> usize {
        self.x.k
    }

    fn value(&self, beta: &[f64]) -> (f64, f64) {
        let parts = map_chunks(self.x.n, |range| {
            let mut ll = 0.0;
            let mut max_eta = 0.0f64;
            for i in range {
                let eta = dot(self.x.row(i), beta);
                ll += self.y[i] * eta - softplus(eta);
                max_eta = max_eta.max(eta.abs());
            }
            (ll, max_eta)
        });
        parts
            .into_iter()
            .fold((0.0, 0.0), |(a, m), (b, e)| (a + b, m.max(e)))
    }

    fn derivatives(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let cp = cross_products(self.x, |i| {
            let p = sigmoid(dot(self.x.row(i), beta));
            (p * (1.0 - p), self.y[i] - p, 0.0)
        });
        (cp.rhs, cp.gram)
    }
}

/// Binary logistic regression by Newton/IRLS with step halving. Separation
/// switches to a small ridge penalty instead of failing.
pub fn fit_logistic(x: &DesignMatrix, y: &[f64], opts: FitOptions) -> Result<LogisticFit> {
    if y.len() != x.n {
        return Err(Error::Dimension(format!(
            "{} responses for {} design rows",
            y.len(),
            x.n
        )));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("logistic response must be 0 or 1".into()));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::SingleClass);
    }
    let (kept, reduced) = retained_design(x);
    let xr = reduced.as_ref().unwrap_or(x);
    if x.n <= kept.len() {
        return Err(Error::InsufficientData { n: x.n, k: kept.len() });
    }
    let problem = Bernoulli { x: xr, y };
    let mut penalty = 0.0;
    let mut outcome = newton(&problem, 0.0, None, opts)?;
    if let Newton::Separated(last) = outcome {
        penalty = SEPARATION_RIDGE;
        outcome = newton(&problem, penalty, Some(last), opts)?;
    }
    match outcome {
        Newton::Converged {
            beta,
            covariance,
            iterations,
            log_likelihood,
        } => Ok(LogisticFit {
            coefficients: expand_vector(&beta, &kept, x.k),
            covariance: LowerTriangular::from_full(&expand_square(&covariance, &kept, x.k), x.k),
            converged: true,
            iterations,
            penalty,
            n: x.n,
            k: x.k,
            dropped: (0..x.k).filter(|j| kept.binary_search(j).is_err()).collect(),
            log_likelihood,
        }),
        Newton::NotConverged { iterations, step } => Err(Error::NoConvergence {
            iterations,
            last_step: step,
        }),
        Newton::Separated(_) => Err(Error::Numeric("separation persists under ridge".into())),
    }
}

pub fn logistic_log_likelihood(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> f64 {
    Bernoulli { x, y }.value(beta).0
}

pub fn logistic_gradient(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    cross_products(x, |i| (0.0, y[i] - sigmoid(dot(x.row(i), beta)), 0.0)).rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ColumnDescriptor;

    fn intercept_only(n: usize) -> DesignMatrix {
        DesignMatrix::from_rows(&vec![vec![1.0]; n], vec![ColumnDescriptor::Intercept]).unwrap()
    }

    #[test]
    fn balanced_intercept_is_zero() {
        let y: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let fit = fit_logistic(&intercept_only(10), &y, FitOptions::default()).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-8);
        assert_eq!(fit.penalty, 0.0);
    }

    #[test]
    fn quarter_ones_gives_logit() {
        let y: Vec<f64> = (0..100).map(|i| (i % 4 == 0) as u8 as f64).collect();
        let fit = fit_logistic(&intercept_only(100), &y, FitOptions::default()).unwrap();
        assert!((fit.coefficients[0] - (1.0f64 / 3.0).ln()).abs() < 1e-10);
        assert!((fit.coefficients[0] + 1.0986).abs() < 1e-4);
        // variance of the intercept: 1 / (n p (1 - p))
        assert!((fit.covariance.get(0, 0) - 1.0 / (100.0 * 0.25 * 0.75)).abs() < 1e-10);
    }

    #[test]
    fn separation_uses_ridge() {
        let x = DesignMatrix::with_intercept(&[("x", &[-2.0, -1.0, 1.0, 2.0])]).unwrap();
        let fit = fit_logistic(&x, &[0.0, 0.0, 1.0, 1.0], FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.penalty, SEPARATION_RIDGE);
        assert!(fit.coefficients[1] > 1.0);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            fit_logistic(&intercept_only(4), &[1.0; 4], FitOptions::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &v)| ((v * 1.3 + ((i * 7919) % 13) as f64 / 13.0 - 0.5) > 0.0) as u8 as f64)
            .collect();
        let x = DesignMatrix::with_intercept(&[("x", &xs)]).unwrap();
        let fit = fit_logistic(&x, &y, FitOptions::default()).unwrap();
        let g = logistic_gradient(&x, &y, &fit.coefficients);
        assert!(g.iter().all(|v| v.abs() < 1e-6 * 200.0));
    }
}
