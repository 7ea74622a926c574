use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use synthpop::design::DesignMatrix;
use synthpop::glm::{
    fit_linear, fit_logistic, fit_multinomial, logistic_gradient, multinomial_gradient, sigmoid, FitOptions,
};

#[test]
fn six_point_ols_matches_closed_form() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = [1.1, 1.9, 3.2, 3.8, 5.3, 5.9];
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let s2 = rss / (n - 2.0);

    let fit = fit_linear(&DesignMatrix::with_intercept(&[("x", &x)]).unwrap(), &y).unwrap();
    assert!((fit.coefficients[0] - intercept).abs() < 1e-12);
    assert!((fit.coefficients[1] - slope).abs() < 1e-12);
    assert!((fit.sigma - s2.sqrt()).abs() < 1e-12);
    assert!((fit.covariance.get(1, 1) - s2 / sxx).abs() < 1e-12);
    assert!((fit.covariance.get(0, 0) - s2 * (1.0 / n + mx * mx / sxx)).abs() < 1e-12);
    assert!((fit.covariance.get(1, 0) + s2 * mx / sxx).abs() < 1e-12);
}

fn covariates(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, DesignMatrix) {
    let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x2: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.4))).collect();
    let x = DesignMatrix::with_intercept(&[("x1", &x1), ("x2", &x2)]).unwrap();
    (x1, x2, x)
}

fn within(est: &[f64], truth: &[f64], se: &[f64], z: f64) -> bool {
    est.iter()
        .zip(truth)
        .zip(se)
        .all(|((e, t), s)| (e - t).abs() < z * s)
}

const N: usize = 50_000;
const RUNS: u64 = 20;

#[test]
fn ols_recovers_truth() {
    let truth = [1.0, 0.5, -0.8];
    let mut hits = 0;
    for seed in 0..RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (x1, x2, x) = covariates(N, &mut rng);
        let y: Vec<f64> = (0..N)
            .map(|i| truth[0] + truth[1] * x1[i] + truth[2] * x2[i] + 1.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = fit_linear(&x, &y).unwrap();
        let se: Vec<f64> = fit.covariance.diagonal().iter().map(|v| v.sqrt()).collect();
        hits += usize::from(within(&fit.coefficients, &truth, &se, 3.0));
        assert!((fit.sigma - 1.5).abs() < 0.05);
    }
    assert!(hits >= 19, "{hits}/20 runs within 3 SE");
}

#[test]
fn logistic_recovers_truth() {
    let truth = [-0.5, 0.8, 0.6];
    let mut hits = 0;
    for seed in 0..RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (x1, x2, x) = covariates(N, &mut rng);
        let y: Vec<f64> = (0..N)
            .map(|i| {
                let p = sigmoid(truth[0] + truth[1] * x1[i] + truth[2] * x2[i]);
                f64::from(u8::from(rng.random::<f64>() < p))
            })
            .collect();
        let fit = fit_logistic(&x, &y, FitOptions::default()).unwrap();
        assert!(fit.converged && fit.penalty == 0.0);
        let g = logistic_gradient(&x, &y, &fit.coefficients);
        assert!(g.iter().all(|v| v.abs() < 1e-6 * N as f64));
        let se: Vec<f64> = fit.covariance.diagonal().iter().map(|v| v.sqrt()).collect();
        hits += usize::from(within(&fit.coefficients, &truth, &se, 3.0));
    }
    assert!(hits >= 19, "{hits}/20 runs within 3 SE");
}

#[test]
fn multinomial_recovers_truth() {
    let truth = [[0.2, 0.5, -0.3], [-0.4, -0.7, 0.9]];
    let mut hits = 0;
    for seed in 0..RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (x1, x2, x) = covariates(N, &mut rng);
        let y: Vec<u32> = (0..N)
            .map(|i| {
                let e: Vec<f64> = truth
                    .iter()
                    .map(|b| (b[0] + b[1] * x1[i] + b[2] * x2[i]).exp())
                    .collect();
                let total = 1.0 + e[0] + e[1];
                let u = rng.random::<f64>() * total;
                if u < 1.0 {
                    0
                } else if u < 1.0 + e[0] {
                    1
                } else {
                    2
                }
            })
            .collect();
        let fit = fit_multinomial(&x, &y, 3, FitOptions::default()).unwrap();
        assert!(fit.converged && fit.penalty == 0.0);
        let stacked: Vec<f64> = fit.coefficients.concat();
        let g = multinomial_gradient(&x, &y, 3, &stacked);
        assert!(g.iter().all(|v| v.abs() < 1e-6 * N as f64));
        let se: Vec<f64> = fit.covariance.diagonal().iter().map(|v| v.sqrt()).collect();
        let flat: Vec<f64> = truth.concat();
        hits += usize::from(within(&stacked, &flat, &se, 3.0));
    }
    assert!(hits >= 19, "{hits}/20 runs within 3 SE");
}

#[test]
fn two_level_multinomial_is_logistic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x1, _, x) = covariates(5_000, &mut rng);
    let y: Vec<f64> = x1
        .iter()
        .map(|v| f64::from(u8::from(rng.random::<f64>() < sigmoid(0.3 - 1.1 * v))))
        .collect();
    let codes: Vec<u32> = y.iter().map(|&v| v as u32).collect();
    let lg = fit_logistic(&x, &y, FitOptions::default()).unwrap();
    let mn = fit_multinomial(&x, &codes, 2, FitOptions::default()).unwrap();
    for (a, b) in lg.coefficients.iter().zip(&mn.coefficients[0]) {
        assert!((a - b).abs() < 1e-6);
    }
    for (a, b) in lg.covariance.values.iter().zip(&mn.covariance.values) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!((lg.log_likelihood - mn.log_likelihood).abs() < 1e-6);
}
