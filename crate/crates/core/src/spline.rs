//! Natural cubic spline bases.
//!
//! The basis is built from cubic B-splines on the given knots with the first
//! B-spline dropped, then projected onto the null space of the two boundary
//! second-derivative constraints (the same construction as R's `ns()`).
//! Outside the boundary knots the basis continues linearly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::null_space;

/// Knot positions for the default age splines.
pub const AGE_KNOTS: [f64; 14] = [
    0.0, 10.0, 17.0, 20.0, 25.0, 30.0, 50.0, 55.0, 60.0, 66.0, 70.0, 80.0, 90.0, 100.0,
];

/// Knot positions for splines of z-scored percentiles.
pub const ZSCORE_KNOTS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineDef {
    /// Strictly ascending; first and last are the boundary knots.
    pub knots: Vec<f64>,
}

impl SplineDef {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        let def = Self { knots };
        def.validate()?;
        Ok(def)
    }

    pub fn age() -> Self {
        Self {
            knots: AGE_KNOTS.to_vec(),
        }
    }

    pub fn zscore() -> Self {
        Self {
            knots: ZSCORE_KNOTS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "natural spline needs at least 3 knots, got {}",
                self.knots.len()
            )));
        }
        if self.knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidArgument("non-finite knot".into()));
        }
        if self.knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("knots must be strictly ascending".into()));
        }
        Ok(())
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    pub fn internal_knots(&self) -> &[f64] {
        &self.knots[1..self.knots.len() - 1]
    }

    /// Number of basis columns (intercept excluded).
    pub fn dim(&self) -> usize {
        self.internal_knots().len() + 1
    }
}

/// Precomputed evaluator for a [`SplineDef`].
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    def: SplineDef,
    /// Full cubic B-spline knot vector.
    t: Vec<f64>,
    /// (nb - 1) x dim projection, row-major.
    proj: Vec<f64>,
    dim: usize,
    left_value: Vec<f64>,
    left_slope: Vec<f64>,
    right_value: Vec<f64>,
    right_slope: Vec<f64>,
}

const DEGREE: usize = 3;

impl NaturalSpline {
    pub fn new(def: &SplineDef) -> Result<Self> {
        def.validate()?;
        let (lo, hi) = def.boundary();
        let mut t = vec![lo; DEGREE + 1];
        t.extend_from_slice(def.internal_knots());
        t.extend(std::iter::repeat(hi).take(DEGREE + 1));
        let nb = t.len() - DEGREE - 1;
        let p = nb - 1;
        // Constraint rows: second derivatives at both boundaries, first B-spline dropped.
        let mut c = Vec::with_capacity(2 * p);
        c.extend_from_slice(&bspline_derivatives(&t, DEGREE, lo, 2)[1..]);
        c.extend_from_slice(&bspline_derivatives(&t, DEGREE, hi, 2)[1..]);
        let proj = null_space(&c, 2, p);
        let dim = p - 2;
        debug_assert_eq!(dim, def.dim());

        let mut s = Self {
            def: def.clone(),
            t,
            proj,
            dim,
            left_value: Vec::new(),
            left_slope: Vec::new(),
            right_value: Vec::new(),
            right_slope: Vec::new(),
        };
        s.left_value = s.project(&bspline_derivatives(&s.t, DEGREE, lo, 0));
        s.left_slope = s.project(&bspline_derivatives(&s.t, DEGREE, lo, 1));
        s.right_value = s.project(&bspline_derivatives(&s.t, DEGREE, hi, 0));
        s.right_slope = s.project(&bspline_derivatives(&s.t, DEGREE, hi, 1));
        Ok(s)
    }

    pub fn def(&self) -> &SplineDef {
        &self.def
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn project(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.project_into(b, &mut out);
        out
    }

    fn project_into(&self, b: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &bv) in b[1..].iter().enumerate() {
            if bv != 0.0 {
                let row = &self.proj[r * self.dim..(r + 1) * self.dim];
                for (o, &q) in out.iter_mut().zip(row) {
                    *o += bv * q;
                }
            }
        }
    }

    /// Writes the basis values at `x` into `out` (length [`Self::dim`]).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let (lo, hi) = self.def.boundary();
        if x < lo {
            for i in 0..self.dim {
                out[i] = self.left_value[i] + (x - lo) * self.left_slope[i];
            }
        } else if x > hi {
            for i in 0..self.dim {
                out[i] = self.right_value[i] + (x - hi) * self.right_slope[i];
            }
        } else {
            let b = bspline_derivatives(&self.t, DEGREE, x, 0);
            self.project_into(&b, out);
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }
}

/// Basis columns for every value; row-major `values.len() x dim`.
pub fn spline_basis(values: &[f64], def: &SplineDef) -> Result<Vec<f64>> {
    let s = NaturalSpline::new(def)?;
    let mut out = vec![0.0; values.len() * s.dim()];
    for (row, &x) in values.iter().enumerate() {
        s.eval_into(x, &mut out[row * s.dim()..(row + 1) * s.dim()]);
    }
    Ok(out)
}

/// Values (deriv = 0) or derivatives of all B-splines of `degree` on knot
/// vector `t` at `x`, which must lie within the knot span.
fn bspline_derivatives(t: &[f64], degree: usize, x: f64, deriv: usize) -> Vec<f64> {
    let n = t.len() - degree - 1;
    if deriv == 0 {
        return bspline_values(t, degree, x);
    }
    if deriv > degree {
        return vec![0.0; n];
    }
    let lower = bspline_derivatives(t, degree - 1, x, deriv - 1);
    let k = degree as f64;
    (0..n)
        .map(|i| {
            let d1 = t[i + degree] - t[i];
            let d2 = t[i + degree + 1] - t[i + 1];
            let a = if d1 > 0.0 { lower[i] / d1 } else { 0.0 };
            let b = if d2 > 0.0 { lower[i + 1] / d2 } else { 0.0 };
            k * (a - b)
        })
        .collect()
}

fn bspline_values(t: &[f64], degree: usize, x: f64) -> Vec<f64> {
    let m = t.len() - 1;
    // Locate the span; the right end belongs to the last non-empty span.
    let last = t[m];
    let span = if x == last {
        (0..m).rev().find(|&i| t[i] < t[i + 1])
    } else {
        (0..m).find(|&i| t[i] <= x && x < t[i + 1])
    };
    let mut n: Vec<f64> = (0..m).map(|i| if Some(i) == span { 1.0 } else { 0.0 }).collect();
    for k in 1..=degree {
        let count = m - k;
        let mut next = vec![0.0; count];
        for i in 0..count {
            let d1 = t[i + k] - t[i];
            let d2 = t[i + k + 1] - t[i + 1];
            let a = if d1 > 0.0 { (x - t[i]) / d1 * n[i] } else { 0.0 };
            let b = if d2 > 0.0 { (t[i + k + 1] - x) / d2 * n[i + 1] } else { 0.0 };
            next[i] = a + b;
        }
        n = next;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_knots() {
        assert!(SplineDef::new(vec![0.0, 1.0]).is_err());
        assert!(SplineDef::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(SplineDef::new(vec![0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn dimensions() {
        assert_eq!(SplineDef::age().dim(), 13);
        assert_eq!(SplineDef::zscore().dim(), 4);
        assert_eq!(NaturalSpline::new(&SplineDef::age()).unwrap().dim(), 13);
    }

    #[test]
    fn bsplines_partition_unity() {
        let s = NaturalSpline::new(&SplineDef::age()).unwrap();
        for x in [0.0, 3.3, 17.0, 50.5, 99.9, 100.0] {
            let b = bspline_values(&s.t, 3, x);
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn constant_input_gives_constant_columns() {
        let xs = vec![42.0; 7];
        let basis = spline_basis(&xs, &SplineDef::age()).unwrap();
        for row in 1..7 {
            assert_eq!(&basis[row * 13..(row + 1) * 13], &basis[0..13]);
        }
    }

    #[test]
    fn linear_beyond_boundaries() {
        for def in [SplineDef::age(), SplineDef::zscore()] {
            let s = NaturalSpline::new(&def).unwrap();
            let (lo, hi) = def.boundary();
            let h = 0.01;
            for step in 0..200 {
                for x in [hi + h + step as f64 * 0.05, lo - h - step as f64 * 0.05] {
                    let a = s.eval(x - h);
                    let b = s.eval(x);
                    let c = s.eval(x + h);
                    for j in 0..s.dim() {
                        assert!((a[j] - 2.0 * b[j] + c[j]).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn smooth_at_knots() {
        let def = SplineDef::zscore();
        let s = NaturalSpline::new(&def).unwrap();
        let h = 1e-4;
        for &k in &def.knots {
            let (l2, l1, m, r1, r2) = (
                s.eval(k - 2.0 * h),
                s.eval(k - h),
                s.eval(k),
                s.eval(k + h),
                s.eval(k + 2.0 * h),
            );
            for j in 0..s.dim() {
                // value continuity
                assert!((l1[j] - m[j]).abs() < 1e-3 && (r1[j] - m[j]).abs() < 1e-3);
                // one-sided first derivatives agree
                let dl = (m[j] - l1[j]) / h;
                let dr = (r1[j] - m[j]) / h;
                assert!((dl - dr).abs() < 1e-2, "slope jump at {k}");
                // one-sided second derivatives agree
                let sl = (m[j] - 2.0 * l1[j] + l2[j]) / (h * h);
                let sr = (r2[j] - 2.0 * r1[j] + m[j]) / (h * h);
                assert!((sl - sr).abs() < 5e-2, "curvature jump at {k}: {sl} vs {sr}");
            }
        }
    }
}
