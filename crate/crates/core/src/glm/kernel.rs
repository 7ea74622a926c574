//! Deterministic parallel reductions over design rows.
//!
//! Rows are split into chunks whose size depends only on `n`, partial sums
//! are computed in parallel and folded in chunk order, so results do not
//! depend on the number of worker threads.

use std::ops::Range;

use rayon::prelude::*;

use crate::design::DesignMatrix;

pub fn chunk_len(n: usize) -> usize {
    n.div_ceil(32).max(8192)
}

/// Maps every chunk of `0..n` in parallel and returns the partials in order.
pub fn map_chunks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let len = chunk_len(n);
    let chunks = n.div_ceil(len);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * len..((c + 1) * len).min(n)))
        .collect()
}

/// Weighted cross products: `Σ w xxᵀ`, `Σ r x` and `Σ s` where
/// `(w, r, s) = row_fn(i)`. The gram matrix is full and symmetric.
pub struct CrossProducts {
    pub gram: Vec<f64>,
    pub rhs: Vec<f64>,
    pub scalar: f64,
}

pub fn cross_products<F>(x: &DesignMatrix, row_fn: F) -> CrossProducts
where
    F: Fn(usize) -> (f64, f64, f64) + Sync + Send,
{
    let k = x.k;
    let parts = map_chunks(x.n, |range| {
        let mut gram = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        let mut scalar = 0.0;
        let mut nz: Vec<(usize, f64)> = Vec::with_capacity(k);
        for i in range {
            let (w, r, s) = row_fn(i);
            scalar += s;
            nz.clear();
            nz.extend(
                x.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v)),
            );
            for (p, &(a, xa)) in nz.iter().enumerate() {
                rhs[a] += r * xa;
                if w != 0.0 {
                    let wa = w * xa;
                    let g = &mut gram[a * k..(a + 1) * k];
                    for &(b, xb) in &nz[p..] {
                        g[b] += wa * xb;
                    }
                }
            }
        }
        (gram, rhs, scalar)
    });
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut scalar = 0.0;
    for (g, r, s) in parts {
        gram.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        rhs.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
        scalar += s;
    }
    for a in 0..k {
        for b in 0..a {
            gram[a * k + b] = gram[b * k + a];
        }
    }
    CrossProducts { gram, rhs, scalar }
}

/// Ordered parallel sum of `f(i)` over `0..n`.
pub fn sum_rows<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(n, |range| range.map(&f).sum::<f64>())
        .into_iter()
        .sum()
}

/// `Xb` for every row, in parallel.
pub fn linear_predictor(x: &DesignMatrix, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.n];
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        *o = dot(x.row(i), b);
    });
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_covers_rows_once() {
        for n in [0, 1, 8191, 8192, 8193, 300_001] {
            let parts = map_chunks(n, |r| r.len());
            assert_eq!(parts.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn cross_products_match_naive() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64;
                vec![1.0, t, if i % 3 == 0 { 0.0 } else { t.sin() }]
            })
            .collect();
        let x = DesignMatrix::from_rows(
            &rows,
            vec![crate::design::ColumnDescriptor::Intercept; 3],
        )
        .unwrap();
        let cp = cross_products(&x, |i| (0.5 + i as f64 / 100.0, i as f64, 1.0));
        for a in 0..3 {
            let r: f64 = (0..50).map(|i| i as f64 * rows[i][a]).sum();
            assert!((cp.rhs[a] - r).abs() < 1e-9);
            for b in 0..3 {
                let g: f64 = (0..50)
                    .map(|i| (0.5 + i as f64 / 100.0) * rows[i][a] * rows[i][b])
                    .sum();
                assert!((cp.gram[a * 3 + b] - g).abs() < 1e-9);
            }
        }
        assert_eq!(cp.scalar, 50.0);
    }
}
