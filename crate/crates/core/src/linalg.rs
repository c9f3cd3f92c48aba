//! Dense complex vectors and matrices.
//!
//! Matrices store the real and imaginary parts in separate row-major planes
//! so that the matrix-vector products in the hot training loops vectorize.

use crate::error::{Error, Result};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Dense complex matrix, row-major, split into real/imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            re: vec![0.0; rows * cols],
            im: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let z = f(i, j);
                m.re[i * cols + j] = z.re;
                m.im[i * cols + j] = z.im;
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let k = i * self.cols + j;
        C64::new(self.re[k], self.im[k])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        let k = i * self.cols + j;
        self.re[k] = z.re;
        self.im[k] = z.im;
    }

    pub fn set_col(&mut self, j: usize, col: &[C64]) {
        assert_eq!(col.len(), self.rows);
        for (i, z) in col.iter().enumerate() {
            self.set(i, j, *z);
        }
    }

    /// `out = self * x`.
    pub fn matvec_into(&self, x: &[C64], out: &mut [C64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            let rr = &self.re[i * self.cols..(i + 1) * self.cols];
            let ri = &self.im[i * self.cols..(i + 1) * self.cols];
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for j in 0..self.cols {
                let xr = x[j].re;
                let xi = x[j].im;
                acc_re += rr[j] * xr - ri[j] * xi;
                acc_im += rr[j] * xi + ri[j] * xr;
            }
            out[i] = C64::new(acc_re, acc_im);
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = self^H * x` (conjugate transpose product).
    pub fn adjoint_matvec_into(&self, x: &[C64], out: &mut [C64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        for v in out.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        // Accumulate row by row to keep memory access contiguous.
        for i in 0..self.rows {
            let rr = &self.re[i * self.cols..(i + 1) * self.cols];
            let ri = &self.im[i * self.cols..(i + 1) * self.cols];
            let xr = x[i].re;
            let xi = x[i].im;
            for j in 0..self.cols {
                // conj(a[i][j]) * x[i]
                let ar = rr[j];
                let ai = -ri[j];
                out[j].re += ar * xr - ai * xi;
                out[j].im += ar * xi + ai * xr;
            }
        }
    }

    pub fn adjoint_matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        self.adjoint_matvec_into(x, &mut out);
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.re.iter_mut() {
            *v *= s;
        }
        for v in self.im.iter_mut() {
            *v *= s;
        }
    }

    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self.get(i, j) - other.get(i, j)).norm());
            }
        }
        worst
    }
}

#[inline]
pub fn l2_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[inline]
pub fn l2_norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

#[inline]
pub fn l1_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm()).sum::<f64>()
}

/// `sum_i conj(a_i) * b_i`.
#[inline]
pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = C64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc
}

pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
}

pub fn rel_err(approx: &[C64], exact: &[C64]) -> f64 {
    let denom = l2_norm(exact).max(f64::MIN_POSITIVE);
    l2_norm(&sub(approx, exact)) / denom
}

/// LU factorization with partial pivoting for dense complex systems.
///
/// Used for the unstructured (W + rho I) solves of ADMM-Net, where no
/// Toeplitz structure is available.
pub struct CLu {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
    max_pivot: f64,
    min_pivot: f64,
}

impl CLu {
    pub fn factor(a: &CMat) -> Result<CLu> {
        if a.rows() != a.cols() {
            return Err(Error::ShapeMismatch(format!(
                "LU requires a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu: Vec<C64> = (0..n * n).map(|k| a.get(k / n, k % n)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut max_pivot = 0.0f64;
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            // Pivot search on column k.
            let mut p = k;
            let mut best = lu[k * n + k].norm();
            for i in (k + 1)..n {
                let mag = lu[i * n + k].norm();
                if mag > best {
                    best = mag;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::IllConditioned { cond: f64::INFINITY });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            max_pivot = max_pivot.max(best);
            min_pivot = min_pivot.min(best);
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                for j in (k + 1)..n {
                    let sub = factor * lu[k * n + j];
                    lu[i * n + j] -= sub;
                }
            }
        }
        Ok(CLu {
            n,
            lu,
            perm,
            max_pivot,
            min_pivot,
        })
    }

    /// Crude condition estimate from the pivot spread.
    pub fn condition_estimate(&self) -> f64 {
        if self.min_pivot == 0.0 {
            f64::INFINITY
        } else {
            self.max_pivot / self.min_pivot
        }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        // Forward substitution with unit lower triangle.
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }

    /// Dense inverse, column by column.
    pub fn inverse(&self) -> CMat {
        let n = self.n;
        let mut inv = CMat::zeros(n, n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            let col = self.solve(&e);
            inv.set_col(j, &col);
            e[j] = C64::new(0.0, 0.0);
        }
        inv
    }
}
