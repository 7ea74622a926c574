use crate::error::{Error, Result};
use crate::linalg::LowerTriangular;

/// Rubin's rules: the mean of the estimates, and mean within-imputation
/// covariance plus `(1 + 1/m)` times the between-imputation covariance.
pub fn pool_rubin(
    estimates: &[Vec<f64>],
    covariances: &[LowerTriangular],
) -> Result<(Vec<f64>, LowerTriangular)> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "pooling needs at least 2 replicates, got {m}"
        )));
    }
    if covariances.len() != m {
        return Err(Error::Dimension(format!(
            "{m} estimates but {} covariances",
            covariances.len()
        )));
    }
    let p = estimates[0].len();
    if estimates.iter().any(|e| e.len() != p) || covariances.iter().any(|c| c.dim != p) {
        return Err(Error::Dimension("replicates are not conformable".into()));
    }
    let mf = m as f64;
    let mean: Vec<f64> = (0..p)
        .map(|j| estimates.iter().map(|e| e[j]).sum::<f64>() / mf)
        .collect();
    let mut pooled = LowerTriangular::zeros(p);
    let inflate = 1.0 + 1.0 / mf;
    let mut idx = 0;
    for i in 0..p {
        for j in 0..=i {
            let within = covariances.iter().map(|c| c.values[idx]).sum::<f64>() / mf;
            let between = estimates
                .iter()
                .map(|e| (e[i] - mean[i]) * (e[j] - mean[j]))
                .sum::<f64>()
                / (mf - 1.0);
            pooled.values[idx] = within + inflate * between;
            idx += 1;
        }
    }
    Ok((mean, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_fixture() {
        let est: Vec<Vec<f64>> = (1..=5).map(|v| vec![v as f64]).collect();
        let cov = vec![LowerTriangular { dim: 1, values: vec![0.5] }; 5];
        let (b, t) = pool_rubin(&est, &cov).unwrap();
        assert_eq!(b, vec![3.0]);
        assert!((t.values[0] - 3.5).abs() < 1e-15);
    }

    #[test]
    fn identical_replicates_are_identity() {
        let est = vec![vec![1.5, -2.0]; 4];
        let cov = vec![LowerTriangular { dim: 2, values: vec![1.0, 0.2, 2.0] }; 4];
        let (b, t) = pool_rubin(&est, &cov).unwrap();
        assert_eq!(b, est[0]);
        assert_eq!(t, cov[0]);
    }

    #[test]
    fn rejects_bad_input() {
        let cov = LowerTriangular::zeros(1);
        assert!(pool_rubin(&[vec![1.0]], &[cov.clone()]).is_err());
        assert!(pool_rubin(&[vec![1.0], vec![1.0, 2.0]], &[cov.clone(), cov]).is_err());
    }
}
