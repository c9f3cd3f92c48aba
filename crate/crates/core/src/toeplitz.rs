//! Hermitian Toeplitz matrices: generator representation, Levinson solves,
//! Gram construction, minimum-eigenvalue computation, and the PSD lift.

use crate::array::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{dot_conj, l2_norm, C64, CMat};
use std::f64::consts::PI;

/// Reflection coefficients at or beyond this magnitude signal a system that
/// is not positive definite.
const BREAKDOWN_TOL: f64 = 1.0 - 1e-12;

/// Hermitian Toeplitz matrix stored as its first column t_0..t_{N-1}
/// (t_0 real). Entry (i, j) is gen[i-j] for i >= j and conj(gen[j-i]) above
/// the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct HermToeplitz {
    gen: Vec<C64>,
}

impl HermToeplitz {
    pub fn new(gen: Vec<C64>) -> Result<Self> {
        if gen.is_empty() {
            return Err(Error::InvalidArgument("generator must be non-empty".into()));
        }
        if gen[0].im != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Hermitian diagonal must be real, got imaginary part {}",
                gen[0].im
            )));
        }
        Ok(HermToeplitz { gen })
    }

    pub fn identity(n: usize) -> Self {
        let mut gen = vec![C64::new(0.0, 0.0); n];
        gen[0] = C64::new(1.0, 0.0);
        HermToeplitz { gen }
    }

    pub fn n(&self) -> usize {
        self.gen.len()
    }

    pub fn gen(&self) -> &[C64] {
        &self.gen
    }

    /// Lag `d` entry for d in -(N-1)..N-1.
    #[inline]
    pub fn lag(&self, d: isize) -> C64 {
        if d >= 0 {
            self.gen[d as usize]
        } else {
            self.gen[(-d) as usize].conj()
        }
    }

    /// Generator scaled by -1 (negates the matrix).
    pub fn negated(&self) -> HermToeplitz {
        HermToeplitz {
            gen: self.gen.iter().map(|z| -z).collect(),
        }
    }

    /// Same matrix with `shift` added to the diagonal.
    pub fn shifted(&self, shift: f64) -> HermToeplitz {
        let mut gen = self.gen.clone();
        gen[0] = C64::new(gen[0].re + shift, 0.0);
        HermToeplitz { gen }
    }

    pub fn to_dense(&self) -> CMat {
        let n = self.n();
        CMat::from_fn(n, n, |i, j| self.lag(i as isize - j as isize))
    }

    /// `T v` by direct summation over lags.
    pub fn matvec(&self, v: &[C64]) -> Result<Vec<C64>> {
        let n = self.n();
        if v.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "matvec expects length {n}, got {}",
                v.len()
            )));
        }
        let mut out = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += self.lag(i as isize - j as isize) * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn gen_norm(&self) -> f64 {
        l2_norm(&self.gen)
    }
}

/// Gram generator of a dictionary over a uniform grid:
/// gen[d] = sum_m exp(-j 2 pi p_m d / N), so that to_dense() == A^H A.
pub fn gram_generator(dict: &Dictionary) -> Result<HermToeplitz> {
    if !dict.grid().is_uniform() {
        return Err(Error::InvalidArgument(
            "Gram is Toeplitz only for uniform frequency grids".into(),
        ));
    }
    let n = dict.n();
    let positions = dict.layout().positions();
    let mut gen = Vec::with_capacity(n);
    for d in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for &p in positions {
            let phase = -2.0 * PI * p as f64 * d as f64 / n as f64;
            let (s, c) = phase.sin_cos();
            acc += C64::new(c, s);
        }
        if d == 0 {
            acc = C64::new(dict.m() as f64, 0.0);
        }
        gen.push(acc);
    }
    HermToeplitz::new(gen)
}

/// Levinson-Durbin factorization of a Hermitian Toeplitz system, retaining
/// the predictor vectors of every order so that repeated right-hand sides
/// amortize the recursion.
pub struct ToeplitzSolver {
    n: usize,
    /// Effective first column (diagonal shift folded in).
    t: Vec<C64>,
    /// Predictor vectors: predictors[m] has length m+2 and solves order m+2.
    /// Stored flattened; predictor for step m lives at offsets[m]..offsets[m]+m+2.
    predictors: Vec<C64>,
    offsets: Vec<usize>,
    /// Prediction error at every order (all positive for PD input).
    errors: Vec<f64>,
}

impl ToeplitzSolver {
    /// Factor `T + shift I`. Fails with `Error::Singular` when the shifted
    /// matrix is not positive definite.
    pub fn new(t: &HermToeplitz, shift: f64) -> Result<Self> {
        let n = t.n();
        let mut col = t.gen().to_vec();
        col[0] = C64::new(col[0].re + shift, 0.0);
        let t0 = col[0].re;
        if t0 <= 0.0 {
            return Err(Error::Singular { order: 0 });
        }
        let mut errors = Vec::with_capacity(n);
        errors.push(t0);
        let mut offsets = Vec::with_capacity(n.saturating_sub(1));
        let mut predictors: Vec<C64> = Vec::new();
        // a holds the current predictor (a_0 = 1) for the current order m+1.
        let mut a: Vec<C64> = vec![C64::new(1.0, 0.0)];
        let mut next: Vec<C64> = Vec::with_capacity(n);
        for m in 1..n {
            // gamma = sum_j a_j t_{m-j}
            let mut gamma = C64::new(0.0, 0.0);
            for (j, aj) in a.iter().enumerate() {
                gamma += aj * col[m - j];
            }
            let e = errors[m - 1];
            let kappa = -gamma / e;
            if !kappa.is_finite() || kappa.norm() >= BREAKDOWN_TOL {
                return Err(Error::Singular { order: m });
            }
            next.clear();
            next.extend_from_slice(&a);
            next.push(C64::new(0.0, 0.0));
            for j in 0..=m {
                let mirrored = a.get(m - j).copied().unwrap_or(C64::new(0.0, 0.0));
                next[j] += kappa * mirrored.conj();
            }
            std::mem::swap(&mut a, &mut next);
            let e_next = e * (1.0 - kappa.norm_sqr());
            if e_next <= 0.0 {
                return Err(Error::Singular { order: m });
            }
            errors.push(e_next);
            offsets.push(predictors.len());
            predictors.extend_from_slice(&a);
        }
        Ok(ToeplitzSolver {
            n,
            t: col,
            predictors,
            offsets,
            errors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn predictor(&self, m: usize) -> &[C64] {
        let start = self.offsets[m - 1];
        &self.predictors[start..start + m + 1]
    }

    /// Solve `(T + shift I) x = b` using the stored recursion.
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        if b.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "solver dimension {} but rhs has length {}",
                self.n,
                b.len()
            )));
        }
        let mut x = vec![C64::new(0.0, 0.0); self.n];
        x[0] = b[0] / self.t[0];
        for m in 1..self.n {
            // Residual of row m against the current partial solution.
            let mut mu = b[m];
            for j in 0..m {
                mu -= self.t[m - j] * x[j];
            }
            let scale = mu / self.errors[m];
            // Backward vector is the reversed conjugate predictor of order m+1.
            let a = self.predictor(m);
            for j in 0..=m {
                x[j] += scale * a[m - j].conj();
            }
        }
        Ok(x)
    }

    /// Dense inverse of the factored matrix, column by column.
    pub fn inverse(&self) -> Result<CMat> {
        let mut inv = CMat::zeros(self.n, self.n);
        let mut e = vec![C64::new(0.0, 0.0); self.n];
        for j in 0..self.n {
            e[j] = C64::new(1.0, 0.0);
            let col = self.solve(&e)?;
            inv.set_col(j, &col);
            e[j] = C64::new(0.0, 0.0);
        }
        Ok(inv)
    }
}

/// Solve `(T + shift I) x = b` in O(N^2).
pub fn levinson_solve(t: &HermToeplitz, shift: f64, b: &[C64]) -> Result<Vec<C64>> {
    ToeplitzSolver::new(t, shift)?.solve(b)
}

/// True iff `T - shift I` is positive definite, decided by running the
/// predictor recursion and watching the reflection coefficients.
fn is_pd_minus_shift(t: &HermToeplitz, shift: f64) -> bool {
    let n = t.n();
    let t0 = t.gen()[0].re - shift;
    if t0 <= 0.0 {
        return false;
    }
    let gen = t.gen();
    let mut e = t0;
    let mut a: Vec<C64> = vec![C64::new(1.0, 0.0)];
    let mut next: Vec<C64> = Vec::with_capacity(n);
    for m in 1..n {
        let mut gamma = C64::new(0.0, 0.0);
        for (j, aj) in a.iter().enumerate() {
            gamma += aj * gen[m - j];
        }
        let kappa = -gamma / e;
        if !kappa.is_finite() || kappa.norm() >= BREAKDOWN_TOL {
            return false;
        }
        next.clear();
        next.extend_from_slice(&a);
        next.push(C64::new(0.0, 0.0));
        for j in 0..=m {
            let mirrored = a.get(m - j).copied().unwrap_or(C64::new(0.0, 0.0));
            next[j] += kappa * mirrored.conj();
        }
        std::mem::swap(&mut a, &mut next);
        e *= 1.0 - kappa.norm_sqr();
        if e <= 0.0 {
            return false;
        }
    }
    true
}

/// Result of the minimum-eigenvalue computation and the Eq.-style PSD lift.
#[derive(Debug, Clone)]
pub struct PsdLiftResult {
    pub lambda_min: f64,
    /// max(-lambda_min, 0).
    pub lifted_shift: f64,
    /// Unit-norm eigenvector for lambda_min.
    pub eigvec_min: Vec<C64>,
}

const EIG_MAX_INVERSE_ITERS: usize = 80;

/// Smallest eigenvalue of a Hermitian Toeplitz matrix with its eigenvector.
///
/// Bisection on the diagonal shift (positive definiteness tested through the
/// Levinson recursion) brackets lambda_min; shifted inverse iteration then
/// refines the pair with a Rayleigh quotient.
pub fn min_eigenvalue(t: &HermToeplitz) -> Result<PsdLiftResult> {
    let n = t.n();
    let scale = t.gen_norm().max(1.0);
    let t0 = t.gen()[0].re;
    let off_radius: f64 = 2.0 * t.gen()[1..].iter().map(|z| z.norm()).sum::<f64>();

    if off_radius == 0.0 {
        // Diagonal matrix t0 * I.
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[0] = C64::new(1.0, 0.0);
        return Ok(finish_lift(t0, v));
    }

    // lambda_min lies in [t0 - R, t0] by Gershgorin and the Rayleigh quotient
    // at a unit basis vector.
    let mut lo = t0 - off_radius - 1e-6 * scale;
    let mut hi = t0;
    debug_assert!(is_pd_minus_shift(t, lo));
    let tol = 1e-11 * scale;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if is_pd_minus_shift(t, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let width = (hi - lo).max(1e-13 * scale);

    // Inverse iteration with a shift safely below the bracket.
    let mut sigma = lo - 3.0 * width;
    let solver = loop {
        match ToeplitzSolver::new(t, -sigma) {
            Ok(s) => break s,
            Err(_) => {
                sigma -= 10.0 * width + 1e-9 * scale;
                if sigma < lo - scale {
                    return Err(Error::NonConvergence {
                        what: "minimum eigenvalue shift selection".into(),
                        iterations: 0,
                        residual: f64::NAN,
                    });
                }
            }
        }
    };

    // Deterministic pseudo-random start vector avoids accidental
    // orthogonality to the eigenspace.
    let mut v: Vec<C64> = (0..n)
        .map(|i| {
            let a = ((i as u64).wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407) >> 33) as f64;
            let b = ((i as u64 + 17).wrapping_mul(2862933555777941757).wrapping_add(3037000493) >> 33) as f64;
            C64::new(a / 2f64.powi(31) - 1.0, b / 2f64.powi(31) - 1.0)
        })
        .collect();
    normalize(&mut v);

    let mut residual = f64::INFINITY;
    let mut best: Option<(f64, Vec<C64>, f64)> = None;
    let mut polish_left = 2;
    for _ in 0..EIG_MAX_INVERSE_ITERS {
        let w = solver.solve(&v)?;
        v = w;
        normalize(&mut v);
        let tv = t.matvec(&v)?;
        let lambda = dot_conj(&v, &tv).re;
        residual = residual_norm(&tv, lambda, &v);
        if best.as_ref().is_none_or(|b| residual < b.2) {
            best = Some((lambda, v.clone(), residual));
        }
        if residual <= 1e-9 * scale {
            // A couple of extra sweeps drive the eigenvector to the round-off
            // floor; near-degenerate spectra need that margin for the v v^H
            // gradient rule downstream.
            if polish_left == 0 {
                break;
            }
            polish_left -= 1;
        }
    }
    if let Some((lambda, v, residual)) = best {
        if residual <= 1e-6 * scale {
            return Ok(finish_lift(lambda, v));
        }
    }
    Err(Error::NonConvergence {
        what: "minimum eigenvalue inverse iteration".into(),
        iterations: EIG_MAX_INVERSE_ITERS,
        residual,
    })
}

fn normalize(v: &mut [C64]) {
    let norm = l2_norm(v);
    if norm > 0.0 {
        for z in v.iter_mut() {
            *z /= norm;
        }
    }
}

fn residual_norm(tv: &[C64], lambda: f64, v: &[C64]) -> f64 {
    tv.iter()
        .zip(v.iter())
        .map(|(a, b)| (a - lambda * b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn finish_lift(lambda_min: f64, eigvec_min: Vec<C64>) -> PsdLiftResult {
    PsdLiftResult {
        lambda_min,
        lifted_shift: (-lambda_min).max(0.0),
        eigvec_min,
    }
}

/// Lift a Hermitian Toeplitz matrix onto the PSD cone:
/// W = T + max(-lambda_min(T), 0) I. A matrix that is already PSD is
/// returned unchanged.
pub fn psd_lift(t: &HermToeplitz) -> Result<(HermToeplitz, PsdLiftResult)> {
    let lift = min_eigenvalue(t)?;
    let lifted = if lift.lifted_shift == 0.0 {
        t.clone()
    } else {
        t.shifted(lift.lifted_shift)
    };
    Ok((lifted, lift))
}

/// Estimate the gap between the smallest and second-smallest eigenvalues by
/// inverse iteration deflated against the known eigenvector. An estimate is
/// all that is needed: callers use it to detect (near-)degenerate lambda_min,
/// where the eigenvalue derivative degrades to a subgradient, and a
/// contaminated estimate only makes the reported gap smaller.
pub fn eigen_gap_estimate(t: &HermToeplitz, first: &PsdLiftResult) -> Result<f64> {
    let n = t.n();
    if n < 2 {
        return Ok(f64::INFINITY);
    }
    let scale = t.gen_norm().max(1.0);
    if 2.0 * t.gen()[1..].iter().map(|z| z.norm()).sum::<f64>() == 0.0 {
        return Ok(0.0); // scalar matrix: fully degenerate
    }
    let sigma = first.lambda_min - 1e-7 * scale;
    let solver = match ToeplitzSolver::new(t, -sigma) {
        Ok(s) => s,
        Err(_) => return Ok(0.0),
    };
    let v1 = &first.eigvec_min;
    let mut v: Vec<C64> = (0..n)
        .map(|i| {
            let a = ((i as u64 + 3).wrapping_mul(0x9e3779b97f4a7c15) >> 33) as f64;
            let b = ((i as u64 + 11).wrapping_mul(0xbf58476d1ce4e5b9) >> 33) as f64;
            C64::new(a / 2f64.powi(31) - 1.0, b / 2f64.powi(31) - 1.0)
        })
        .collect();
    let deflate = |v: &mut Vec<C64>| {
        let overlap = dot_conj(v1, v);
        for (vi, ui) in v.iter_mut().zip(v1.iter()) {
            *vi -= overlap * ui;
        }
    };
    deflate(&mut v);
    normalize(&mut v);
    let mut lambda2 = first.lambda_min;
    for _ in 0..40 {
        let mut w = solver.solve(&v)?;
        deflate(&mut w);
        v = w;
        normalize(&mut v);
        let tv = t.matvec(&v)?;
        let new_lambda = dot_conj(&v, &tv).re;
        let settled = (new_lambda - lambda2).abs() <= 1e-10 * scale;
        lambda2 = new_lambda;
        if settled {
            break;
        }
    }
    Ok((lambda2 - first.lambda_min).max(0.0))
}
