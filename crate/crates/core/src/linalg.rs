//! Small dense kernels: in-order pivoted Cholesky, triangular solves,
//! symmetric storage and a Householder null-space helper.
//!
//! Matrices are row-major `Vec<f64>` with an explicit dimension.

use serde::{Deserialize, Serialize};

/// Relative tolerance below which a column's residual squared norm marks
/// it as linearly dependent on the columns before it.
pub const RANK_TOL: f64 = 1e-10;

/// Cholesky factor restricted to the retained columns.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// Indices (into the original matrix) of retained columns, ascending.
    pub kept: Vec<usize>,
    /// Lower factor, `kept.len()` squared, row-major.
    pub lower: Vec<f64>,
}

impl PivotedCholesky {
    pub fn dim(&self) -> usize {
        self.kept.len()
    }

    pub fn dropped(&self, p: usize) -> Vec<usize> {
        (0..p).filter(|j| self.kept.binary_search(j).is_err()).collect()
    }
}

/// Factors the symmetric matrix `a` (p x p) column by column, dropping any
/// column whose residual diagonal falls below `rel_tol` times its original
/// diagonal. Earlier columns always win over later ones.
pub fn cholesky_in_order(a: &[f64], p: usize, rel_tol: f64) -> PivotedCholesky {
    debug_assert_eq!(a.len(), p * p);
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    // Rows of L for kept columns, each stored densely over kept positions.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut row = Vec::with_capacity(p);
    for j in 0..p {
        let ajj = a[j * p + j];
        if !(ajj > 0.0) || !ajj.is_finite() {
            continue;
        }
        row.clear();
        for (m, &cm) in kept.iter().enumerate() {
            let lm = &rows[m];
            let mut s = a[j * p + cm];
            for t in 0..m {
                s -= row[t] * lm[t];
            }
            row.push(s / lm[m]);
        }
        let d = ajj - row.iter().map(|v| v * v).sum::<f64>();
        if d > rel_tol * ajj {
            let mut r = row.clone();
            r.push(d.sqrt());
            rows.push(r);
            kept.push(j);
        }
    }
    let kk = kept.len();
    let mut lower = vec![0.0; kk * kk];
    for (i, r) in rows.iter().enumerate() {
        lower[i * kk..i * kk + r.len()].copy_from_slice(r);
    }
    PivotedCholesky { kept, lower }
}

/// Plain Cholesky; `None` when the matrix is not numerically positive definite.
pub fn cholesky(a: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = a[j * p + j];
        for t in 0..j {
            d -= l[j * p + t] * l[j * p + t];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for t in 0..j {
                s -= l[i * p + t] * l[j * p + t];
            }
            l[i * p + j] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b`.
pub fn cholesky_solve(lower: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..p {
        let mut s = y[i];
        for t in 0..i {
            s -= lower[i * p + t] * y[t];
        }
        y[i] = s / lower[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = y[i];
        for t in i + 1..p {
            s -= lower[t * p + i] * y[t];
        }
        y[i] = s / lower[i * p + i];
    }
    y
}

/// Inverse of `L Lᵀ`, symmetrised.
pub fn cholesky_inverse(lower: &[f64], p: usize) -> Vec<f64> {
    // Invert L (lower triangular) then form L⁻ᵀ L⁻¹.
    let mut li = vec![0.0; p * p];
    for j in 0..p {
        li[j * p + j] = 1.0 / lower[j * p + j];
        for i in j + 1..p {
            let mut s = 0.0;
            for t in j..i {
                s -= lower[i * p + t] * li[t * p + j];
            }
            li[i * p + j] = s / lower[i * p + i];
        }
    }
    let mut inv = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = 0.0;
            for t in i..p {
                s += li[t * p + i] * li[t * p + j];
            }
            inv[i * p + j] = s;
            inv[j * p + i] = s;
        }
    }
    inv
}

/// Scatters a matrix over retained indices back into a `p x p` matrix with
/// zeros in dropped rows and columns.
pub fn expand_square(compact: &[f64], kept: &[usize], p: usize) -> Vec<f64> {
    let kk = kept.len();
    let mut full = vec![0.0; p * p];
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept.iter().enumerate() {
            full[i * p + j] = compact[a * kk + b];
        }
    }
    full
}

pub fn expand_vector(compact: &[f64], kept: &[usize], p: usize) -> Vec<f64> {
    let mut full = vec![0.0; p];
    for (a, &i) in kept.iter().enumerate() {
        full[i] = compact[a];
    }
    full
}

/// Symmetric matrix stored as its lower triangle, row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerTriangular {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl LowerTriangular {
    pub fn from_full(full: &[f64], dim: usize) -> Self {
        let mut values = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                values.push(0.5 * (full[i * dim + j] + full[j * dim + i]));
            }
        }
        Self { dim, values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.values[i * (i + 1) / 2 + j]
    }

    pub fn to_full(&self) -> Vec<f64> {
        let d = self.dim;
        let mut full = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let v = self.values[i * (i + 1) / 2 + j];
                full[i * d + j] = v;
                full[j * d + i] = v;
            }
        }
        full
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Smallest eigenvalue, via nalgebra's symmetric eigensolver.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        let m = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.to_full());
        m.symmetric_eigenvalues().min()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Orthonormal basis of the null space of the `m x p` matrix `c` (m < p),
/// returned as a `p x (p - m)` row-major matrix. Uses Householder QR of `cᵀ`.
pub fn null_space(c: &[f64], m: usize, p: usize) -> Vec<f64> {
    assert!(m < p);
    // a = cᵀ, p x m
    let mut a = vec![0.0; p * m];
    for i in 0..m {
        for j in 0..p {
            a[j * m + i] = c[i * p + j];
        }
    }
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(m);
    for col in 0..m {
        let norm: f64 = (col..p).map(|r| a[r * m + col].powi(2)).sum::<f64>().sqrt();
        let mut v = vec![0.0; p];
        if norm > 0.0 {
            let alpha = if a[col * m + col] > 0.0 { -norm } else { norm };
            for r in col..p {
                v[r] = a[r * m + col];
            }
            v[col] -= alpha;
            let vnorm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if vnorm > 0.0 {
                v.iter_mut().for_each(|x| *x /= vnorm);
            }
            for cc in col..m {
                let dot: f64 = (col..p).map(|r| v[r] * a[r * m + cc]).sum();
                for r in col..p {
                    a[r * m + cc] -= 2.0 * v[r] * dot;
                }
            }
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{m-1}; the trailing p - m columns span the null space.
    let q_cols = p - m;
    let mut q = vec![0.0; p * q_cols];
    for k in 0..q_cols {
        q[(m + k) * q_cols + k] = 1.0;
    }
    for v in reflectors.iter().rev() {
        for k in 0..q_cols {
            let dot: f64 = (0..p).map(|r| v[r] * q[r * q_cols + k]).sum();
            if dot != 0.0 {
                for r in 0..p {
                    q[r * q_cols + k] -= 2.0 * v[r] * dot;
                }
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_order_cholesky_drops_duplicate_column() {
        // Gram matrix of columns [1, x, x] with x = (0, 1, 2).
        let a = [3.0, 3.0, 3.0, 3.0, 5.0, 5.0, 3.0, 5.0, 5.0];
        let f = cholesky_in_order(&a, 3, RANK_TOL);
        assert_eq!(f.kept, vec![0, 1]);
        assert_eq!(f.dropped(3), vec![2]);
        let inv = cholesky_inverse(&f.lower, 2);
        // inverse of [[3,3],[3,5]] = 1/6 [[5,-3],[-3,3]]
        assert!((inv[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((inv[1] + 0.5).abs() < 1e-14);
        assert!((inv[3] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn solve_matches_direct() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = cholesky_solve(&l, 3, &b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-13);
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn lower_triangular_round_trip() {
        let full = [2.0, 0.5, 0.1, 0.5, 3.0, -0.2, 0.1, -0.2, 1.0];
        let lt = LowerTriangular::from_full(&full, 3);
        assert_eq!(lt.values.len(), 6);
        assert_eq!(lt.to_full(), full.to_vec());
        assert!(lt.min_eigenvalue() > 0.0);
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated() {
        let c = [1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 1.0, 3.0, 1.0, -2.0];
        let (m, p) = (2, 5);
        let q = null_space(&c, m, p);
        let k = p - m;
        for a in 0..k {
            for b in 0..k {
                let d: f64 = (0..p).map(|r| q[r * k + a] * q[r * k + b]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
            for i in 0..m {
                let d: f64 = (0..p).map(|r| c[i * p + r] * q[r * k + a]).sum();
                assert!(d.abs() < 1e-13);
            }
        }
    }
}
