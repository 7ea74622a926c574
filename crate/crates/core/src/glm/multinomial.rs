use serde::{Deserialize, Serialize};

use super::kernel::{dot, map_chunks};
use super::{
    newton, retained_design, softmax_with_reference, FitOptions, Likelihood, Newton,
    SEPARATION_RIDGE,
};
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{expand_square, LowerTriangular};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialFit {
    /// Number of outcome levels, reference included.
    pub levels: usize,
    /// One coefficient vector per non-reference level.
    pub coefficients: Vec<Vec<f64>>,
    /// Joint covariance over `(level, column)` with level-major ordering.
    pub covariance: LowerTriangular,
    pub converged: bool,
    pub iterations: usize,
    pub penalty: f64,
    pub n: usize,
    pub k: usize,
    pub dropped: Vec<usize>,
    pub log_likelihood: f64,
}

struct Categorical<'a> {
    x: &'a DesignMatrix,
    y: &'a [u32],
    levels: usize,
}

impl Categorical<'_> {
    fn etas(&self, i: usize, beta: &[f64], eta: &mut [f64]) {
        let k = self.x.k;
        let row = self.x.row(i);
        for (j, e) in eta.iter_mut().enumerate() {
            *e = dot(row, &beta[j * k..(j + 1) * k]);
        }
    }
}

fn tri(a: usize, b: usize) -> usize {
    b * (b + 1) / 2 + a
}

impl Likelihood for Categorical<'_> {
    fn dim(&self) -> usize {
        (self.levels - 1) * self.x.k
    }

    fn value(&self, beta: &[f64]) -> (f64, f64) {
        let m = self.levels - 1;
        let parts = map_chunks(self.x.n, |range| {
            let mut eta = vec![0.0; m];
            let mut ll = 0.0;
            let mut max_eta = 0.0f64;
            for i in range {
                self.etas(i, beta, &mut eta);
                let top = eta.iter().fold(0.0f64, |a, &b| a.max(b));
                let lse = top + ((-top).exp() + eta.iter().map(|e| (e - top).exp()).sum::<f64>()).ln();
                let yi = self.y[i] as usize;
                ll += if yi == 0 { 0.0 } else { eta[yi - 1] } - lse;
                max_eta = eta.iter().fold(max_eta, |a, &b| a.max(b.abs()));
            }
            (ll, max_eta)
        });
        parts
            .into_iter()
            .fold((0.0, 0.0), |(a, mx), (b, e)| (a + b, mx.max(e)))
    }

    fn derivatives(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.x.k;
        let m = self.levels - 1;
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|j| (j..m).map(move |l| (j, l))).collect();
        let np = pairs.len();
        let ntri = k * (k + 1) / 2;
        let parts = map_chunks(self.x.n, |range| {
            let mut grad = vec![0.0; m * k];
            let mut buf = vec![0.0; ntri * np];
            let mut eta = vec![0.0; m];
            let mut prob = vec![0.0; m + 1];
            let mut w = vec![0.0; np];
            let mut nz: Vec<(usize, f64)> = Vec::with_capacity(k);
            for i in range {
                self.etas(i, beta, &mut eta);
                softmax_with_reference(&eta, &mut prob);
                let p = &prob[1..];
                for (q, &(j, l)) in pairs.iter().enumerate() {
                    w[q] = if j == l { p[j] * (1.0 - p[j]) } else { -p[j] * p[l] };
                }
                nz.clear();
                nz.extend(
                    self.x
                        .row(i)
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(j, v)| (j, *v)),
                );
                let yi = self.y[i] as usize;
                for j in 0..m {
                    let r = (yi == j + 1) as u8 as f64 - p[j];
                    for &(a, xa) in &nz {
                        grad[j * k + a] += r * xa;
                    }
                }
                for (s, &(a, xa)) in nz.iter().enumerate() {
                    for &(b, xb) in &nz[s..] {
                        let xab = xa * xb;
                        let cell = &mut buf[tri(a, b) * np..(tri(a, b) + 1) * np];
                        for (c, &wq) in cell.iter_mut().zip(&w) {
                            *c += wq * xab;
                        }
                    }
                }
            }
            (grad, buf)
        });
        let mut grad = vec![0.0; m * k];
        let mut buf = vec![0.0; ntri * np];
        for (g, b) in parts {
            grad.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
            buf.iter_mut().zip(&b).for_each(|(a, v)| *a += v);
        }
        let p = m * k;
        let mut hess = vec![0.0; p * p];
        for (q, &(j, l)) in pairs.iter().enumerate() {
            for a in 0..k {
                for b in 0..k {
                    let v = buf[tri(a.min(b), a.max(b)) * np + q];
                    hess[(j * k + a) * p + l * k + b] = v;
                    hess[(l * k + b) * p + j * k + a] = v;
                }
            }
        }
        (grad, hess)
    }
}

fn validate(x: &DesignMatrix, y: &[u32], levels: usize) -> Result<()> {
    if y.len() != x.n {
        return Err(Error::Dimension(format!(
            "{} responses for {} design rows",
            y.len(),
            x.n
        )));
    }
    if levels < 2 {
        return Err(Error::InvalidArgument("multinomial needs at least 2 levels".into()));
    }
    let mut counts = vec![0usize; levels];
    for &v in y {
        let v = v as usize;
        if v >= levels {
            return Err(Error::InvalidArgument(format!("outcome code {v} out of range")));
        }
        counts[v] += 1;
    }
    if let Some(absent) = counts.iter().position(|&c| c == 0) {
        return Err(Error::AbsentLevel(absent));
    }
    Ok(())
}

/// Multinomial logit with level 0 as reference, fitted by full Newton.
pub fn fit_multinomial(
    x: &DesignMatrix,
    y: &[u32],
    levels: usize,
    opts: FitOptions,
) -> Result<MultinomialFit> {
    validate(x, y, levels)?;
    let (kept, reduced) = retained_design(x);
    let xr = reduced.as_ref().unwrap_or(x);
    if x.n <= kept.len() {
        return Err(Error::InsufficientData { n: x.n, k: kept.len() });
    }
    let problem = Categorical { x: xr, y, levels };
    let mut penalty = 0.0;
    let mut outcome = newton(&problem, 0.0, None, opts)?;
    if let Newton::Separated(last) = outcome {
        penalty = SEPARATION_RIDGE;
        outcome = newton(&problem, penalty, Some(last), opts)?;
    }
    let m = levels - 1;
    let kk = kept.len();
    match outcome {
        Newton::Converged {
            beta,
            covariance,
            iterations,
            log_likelihood,
        } => {
            let coefficients = (0..m)
                .map(|j| {
                    let mut full = vec![0.0; x.k];
                    for (a, &c) in kept.iter().enumerate() {
                        full[c] = beta[j * kk + a];
                    }
                    full
                })
                .collect();
            let joint: Vec<usize> = (0..m)
                .flat_map(|j| kept.iter().map(move |&c| j * x.k + c))
                .collect();
            let cov = expand_square(&covariance, &joint, m * x.k);
            Ok(MultinomialFit {
                levels,
                coefficients,
                covariance: LowerTriangular::from_full(&cov, m * x.k),
                converged: true,
                iterations,
                penalty,
                n: x.n,
                k: x.k,
                dropped: (0..x.k).filter(|j| kept.binary_search(j).is_err()).collect(),
                log_likelihood,
            })
        }
        Newton::NotConverged { iterations, step } => Err(Error::NoConvergence {
            iterations,
            last_step: step,
        }),
        Newton::Separated(_) => Err(Error::Numeric("separation persists under ridge".into())),
    }
}

/// Log-likelihood at level-major stacked coefficients.
pub fn multinomial_log_likelihood(x: &DesignMatrix, y: &[u32], levels: usize, beta: &[f64]) -> f64 {
    Categorical { x, y, levels }.value(beta).0
}

pub fn multinomial_gradient(x: &DesignMatrix, y: &[u32], levels: usize, beta: &[f64]) -> Vec<f64> {
    let k = x.k;
    let m = levels - 1;
    let problem = Categorical { x, y, levels };
    let mut grad = vec![0.0; m * k];
    let mut eta = vec![0.0; m];
    let mut prob = vec![0.0; levels];
    for i in 0..x.n {
        problem.etas(i, beta, &mut eta);
        softmax_with_reference(&eta, &mut prob);
        for j in 0..m {
            let r = (y[i] as usize == j + 1) as u8 as f64 - prob[j + 1];
            for (a, &xa) in x.row(i).iter().enumerate() {
                grad[j * k + a] += r * xa;
            }
        }
    }
    grad
}
