//! Regression engines: least squares, binary logistic and multinomial logit.

pub mod kernel;
mod linear;
mod logistic;
mod multinomial;

pub use linear::{fit_linear, LinearFit};
pub use logistic::{fit_logistic, logistic_gradient, logistic_log_likelihood, LogisticFit};
pub use multinomial::{
    fit_multinomial, multinomial_gradient, multinomial_log_likelihood, MultinomialFit,
};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_in_order, cholesky_inverse, RANK_TOL};

/// Ridge added to every coefficient when separation is detected.
pub const SEPARATION_RIDGE: f64 = 1e-6;

/// Linear predictors beyond this magnitude are taken as a sign of separation.
const SEPARATION_ETA: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Class probabilities from non-reference linear predictors; the reference
/// class has predictor 0. `out` has one more entry than `eta`.
pub fn softmax_with_reference(eta: &[f64], out: &mut [f64]) {
    let m = eta.iter().fold(0.0f64, |a, &b| a.max(b));
    out[0] = (-m).exp();
    let mut total = out[0];
    for (o, &e) in out[1..].iter_mut().zip(eta) {
        *o = (e - m).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

pub fn predict_linear(coefficients: &[f64], x: &DesignMatrix) -> Result<Vec<f64>> {
    check_columns(coefficients.len(), x)?;
    Ok(kernel::linear_predictor(x, coefficients))
}

pub fn predict_logistic(coefficients: &[f64], x: &DesignMatrix) -> Result<Vec<f64>> {
    check_columns(coefficients.len(), x)?;
    Ok(kernel::linear_predictor(x, coefficients)
        .into_iter()
        .map(sigmoid)
        .collect())
}

/// Row-major `n x J` probabilities; `coefficients` holds one vector per
/// non-reference level.
pub fn predict_multinomial(coefficients: &[Vec<f64>], x: &DesignMatrix) -> Result<Vec<f64>> {
    for c in coefficients {
        check_columns(c.len(), x)?;
    }
    let j = coefficients.len() + 1;
    let mut out = vec![0.0; x.n * j];
    let mut eta = vec![0.0; j - 1];
    for i in 0..x.n {
        for (e, c) in eta.iter_mut().zip(coefficients) {
            *e = kernel::dot(x.row(i), c);
        }
        softmax_with_reference(&eta, &mut out[i * j..(i + 1) * j]);
    }
    Ok(out)
}

fn check_columns(len: usize, x: &DesignMatrix) -> Result<()> {
    if len != x.k {
        return Err(Error::Dimension(format!(
            "{len} coefficients for {} design columns",
            x.k
        )));
    }
    Ok(())
}

/// Columns kept after in-order rank dropping on `XᵀX`, and the design
/// restricted to them (borrowed when nothing is dropped).
pub(crate) fn retained_design(x: &DesignMatrix) -> (Vec<usize>, Option<DesignMatrix>) {
    let cp = kernel::cross_products(x, |_| (1.0, 0.0, 0.0));
    let kept = cholesky_in_order(&cp.gram, x.k, RANK_TOL).kept;
    if kept.len() == x.k {
        return (kept, None);
    }
    let mut data = Vec::with_capacity(x.n * kept.len());
    for i in 0..x.n {
        let row = x.row(i);
        data.extend(kept.iter().map(|&j| row[j]));
    }
    let reduced = DesignMatrix {
        n: x.n,
        k: kept.len(),
        data,
        descriptors: kept.iter().map(|&j| x.descriptors[j].clone()).collect(),
    };
    (kept, Some(reduced))
}

/// Penalised log-likelihood problem for the shared Newton driver.
pub(crate) trait Likelihood: Sync {
    fn dim(&self) -> usize;
    /// Log-likelihood and max |linear predictor|.
    fn value(&self, beta: &[f64]) -> (f64, f64);
    /// Gradient and negative Hessian (row-major) of the log-likelihood.
    fn derivatives(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>);
}

pub(crate) enum Newton {
    Converged {
        beta: Vec<f64>,
        covariance: Vec<f64>,
        iterations: usize,
        log_likelihood: f64,
    },
    /// Carries the last iterate, a warm start for the ridge refit.
    Separated(Vec<f64>),
    NotConverged {
        iterations: usize,
        step: f64,
    },
}

pub(crate) fn newton<L: Likelihood>(problem: &L, ridge: f64, start: Option<Vec<f64>>, opts: FitOptions) -> Result<Newton> {
    let p = problem.dim();
    let penalised = |beta: &[f64]| {
        let (ll, eta) = problem.value(beta);
        (ll - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>(), eta)
    };
    let mut beta = start.unwrap_or_else(|| vec![0.0; p]);
    let (mut ll, _) = penalised(&beta);
    let mut step = f64::INFINITY;
    let mut norms: Vec<f64> = Vec::new();
    for iteration in 1..=opts.max_iter {
        let (mut grad, mut hess) = problem.derivatives(&beta);
        for a in 0..p {
            grad[a] -= ridge * beta[a];
            hess[a * p + a] += ridge;
        }
        let Some(lower) = cholesky(&hess, p) else {
            if ridge == 0.0 {
                return Ok(Newton::Separated(beta));
            }
            return Err(Error::Numeric("information matrix not positive definite".into()));
        };
        let delta = crate::linalg::cholesky_solve(&lower, p, &grad);
        let previous = ll;
        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_eta;
        loop {
            candidate = beta.iter().zip(&delta).map(|(b, d)| b + scale * d).collect();
            let (cll, ceta) = penalised(&candidate);
            cand_eta = ceta;
            if cll.is_finite() && cll >= ll - 1e-12 * (1.0 + ll.abs()) || scale < 1e-4 {
                ll = cll;
                break;
            }
            scale *= 0.5;
        }
        step = delta.iter().fold(0.0f64, |m, d| m.max((scale * d).abs()));
        beta = candidate;
        if ridge == 0.0 && cand_eta > SEPARATION_ETA {
            return Ok(Newton::Separated(beta));
        }
        // Steps are judged relative to the coefficient scale; a step that no
        // longer moves the likelihood has hit the rounding floor.
        let size = 1.0 + beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let stalled = (ll - previous).abs() <= 1e-14 * (1.0 + ll.abs()) && step < opts.tol.sqrt();
        if step < opts.tol * size || stalled {
            let (_, mut hess) = problem.derivatives(&beta);
            for a in 0..p {
                hess[a * p + a] += ridge;
            }
            let lower = cholesky(&hess, p).ok_or_else(|| {
                Error::Numeric("information matrix not positive definite at optimum".into())
            })?;
            let log_likelihood = problem.value(&beta).0;
            return Ok(Newton::Converged {
                beta,
                covariance: cholesky_inverse(&lower, p),
                iterations: iteration,
                log_likelihood,
            });
        }
        norms.push(beta.iter().fold(0.0f64, |m, b| m.max(b.abs())));
    }
    let diverging = norms.len() >= 3 && norms.windows(2).rev().take(3).all(|w| w[1] > w[0]);
    if ridge == 0.0 && diverging {
        return Ok(Newton::Separated(beta));
    }
    Ok(Newton::NotConverged {
        iterations: opts.max_iter,
        step,
    })
}
