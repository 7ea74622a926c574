use serde::{Deserialize, Serialize};

use super::kernel::{cross_products, dot, sum_rows};
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_in_order, cholesky_inverse, cholesky_solve, expand_square, expand_vector,
    LowerTriangular, RANK_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub sigma: f64,
    pub covariance: LowerTriangular,
    pub n: usize,
    pub k: usize,
    pub dropped: Vec<usize>,
    /// Set when the residuals vanish and `sigma` was forced to zero.
    pub degenerate: bool,
}

/// Ordinary least squares via normal equations with in-order rank dropping.
pub fn fit_linear(x: &DesignMatrix, y: &[f64]) -> Result<LinearFit> {
    if y.len() != x.n {
        return Err(Error::Dimension(format!(
            "{} responses for {} design rows",
            y.len(),
            x.n
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite response".into()));
    }
    let k = x.k;
    let cp = cross_products(x, |i| (1.0, y[i], 0.0));
    let chol = cholesky_in_order(&cp.gram, k, RANK_TOL);
    let kk = chol.dim();
    if x.n <= kk {
        return Err(Error::InsufficientData { n: x.n, k: kk });
    }
    let rhs: Vec<f64> = chol.kept.iter().map(|&j| cp.rhs[j]).collect();
    let beta_kept = cholesky_solve(&chol.lower, kk, &rhs);
    let coefficients = expand_vector(&beta_kept, &chol.kept, k);

    let rss = sum_rows(x.n, |i| {
        let r = y[i] - dot(x.row(i), &coefficients);
        r * r
    });
    let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let floor = (x.n as f64 * f64::EPSILON * ymax).powi(2);
    let degenerate = rss <= floor;
    let sigma2 = if degenerate {
        0.0
    } else {
        rss / (x.n - kk) as f64
    };
    let inv = cholesky_inverse(&chol.lower, kk);
    let cov: Vec<f64> = inv.iter().map(|v| v * sigma2).collect();
    let full = expand_square(&cov, &chol.kept, k);
    Ok(LinearFit {
        coefficients,
        sigma: sigma2.sqrt(),
        covariance: LowerTriangular::from_full(&full, k),
        n: x.n,
        k,
        dropped: chol.dropped(k),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ColumnDescriptor;

    #[test]
    fn exact_line() {
        let x = DesignMatrix::with_intercept(&[("x", &[0.0, 1.0, 2.0])]).unwrap();
        let fit = fit_linear(&x, &[1.0, 3.0, 5.0]).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert_eq!(fit.sigma, 0.0);
        assert!(fit.degenerate);
        assert!(fit.covariance.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicate_column_dropped() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [1.1, 2.9, 5.2, 6.8, 9.1];
        let single = DesignMatrix::with_intercept(&[("x", &xs)]).unwrap();
        let double = DesignMatrix::with_intercept(&[("x", &xs), ("x2", &xs)]).unwrap();
        let a = fit_linear(&single, &y).unwrap();
        let b = fit_linear(&double, &y).unwrap();
        assert_eq!(b.dropped, vec![2]);
        assert_eq!(b.coefficients[2], 0.0);
        assert!((a.coefficients[1] - b.coefficients[1]).abs() < 1e-12);
        assert!((a.sigma - b.sigma).abs() < 1e-12);
        assert_eq!(b.covariance.get(2, 2), 0.0);
    }

    #[test]
    fn too_few_rows() {
        let x = DesignMatrix::with_intercept(&[("x", &[0.0, 1.0])]).unwrap();
        assert!(matches!(
            fit_linear(&x, &[1.0, 2.0]),
            Err(Error::InsufficientData { .. })
        ));
        let bad = DesignMatrix::from_rows(&[vec![1.0]], vec![ColumnDescriptor::Intercept]).unwrap();
        assert!(fit_linear(&bad, &[1.0, 2.0]).is_err());
    }
}
