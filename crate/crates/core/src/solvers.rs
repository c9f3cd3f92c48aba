//! Classic iterative solvers for the complex LASSO: soft thresholding, ISTA,
//! and ADMM. These double as oracles for the untrained unfolded networks.

use crate::array::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{l1_norm, C64, CMat};
use crate::toeplitz::{gram_generator, min_eigenvalue, ToeplitzSolver};

/// Complex soft threshold S_kappa(z) = e^{j arg z} max(|z| - kappa, 0).
#[inline]
pub fn soft_threshold(z: C64, kappa: f64) -> C64 {
    debug_assert!(kappa >= 0.0);
    let r = z.norm();
    if r <= kappa || r == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        z * (1.0 - kappa / r)
    }
}

pub fn soft_threshold_vec(z: &[C64], kappa: f64) -> Vec<C64> {
    z.iter().map(|&v| soft_threshold(v, kappa)).collect()
}

/// Largest singular value of the dictionary.
///
/// For a uniform grid the Gram A^H A is Hermitian Toeplitz, so
/// sigma_max^2 = lambda_max(A^H A) = -lambda_min(-A^H A), computed by the
/// bisection eigenvalue routine.
pub fn max_singular_value(dict: &Dictionary) -> Result<f64> {
    let gram = gram_generator(dict)?;
    let neg = gram.negated();
    let r = min_eigenvalue(&neg)?;
    let lambda_max = -r.lambda_min;
    if lambda_max < 0.0 {
        return Err(Error::NonFinite("negative largest Gram eigenvalue".into()));
    }
    Ok(lambda_max.sqrt())
}

/// LASSO objective 0.5 ||y - A x||^2 + tau ||x||_1.
pub fn lasso_objective(dict: &Dictionary, y: &[C64], x: &[C64], tau: f64) -> Result<f64> {
    if y.len() != dict.m() || x.len() != dict.n() {
        return Err(Error::ShapeMismatch(format!(
            "objective expects y of length {} and x of length {}",
            dict.m(),
            dict.n()
        )));
    }
    let ax = dict.matrix().matvec(x);
    let resid: f64 = y
        .iter()
        .zip(ax.iter())
        .map(|(yi, ai)| (yi - ai).norm_sqr())
        .sum();
    Ok(0.5 * resid + tau * l1_norm(x))
}

/// ISTA configuration. `mu` is the gradient step 1 / sigma_max(A)^2 and the
/// threshold applied per iteration is kappa_1 = mu * tau.
#[derive(Debug, Clone)]
pub struct IstaConfig {
    pub mu: f64,
    pub tau: f64,
    pub iterations: usize,
}

impl IstaConfig {
    pub fn new(mu: f64, tau: f64, iterations: usize) -> Result<Self> {
        if mu <= 0.0 || tau <= 0.0 {
            return Err(Error::InvalidArgument(
                "ISTA requires mu > 0 and tau > 0".into(),
            ));
        }
        Ok(IstaConfig { mu, tau, iterations })
    }

    /// mu fixed to 1 / sigma_max(A)^2.
    pub fn for_dictionary(dict: &Dictionary, tau: f64, iterations: usize) -> Result<Self> {
        let smax = max_singular_value(dict)?;
        Self::new(1.0 / (smax * smax), tau, iterations)
    }

    pub fn kappa1(&self) -> f64 {
        self.mu * self.tau
    }
}

/// Which threshold level the ADMM z-update uses.
///
/// The reference formulation sets kappa_2 = rho * tau; the textbook
/// ADMM-LASSO derivation yields tau / rho. Both coincide at rho = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdConvention {
    RhoTau,
    TauOverRho,
}

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    pub rho: f64,
    pub tau: f64,
    pub iterations: usize,
    pub convention: ThresholdConvention,
}

impl AdmmConfig {
    pub fn new(rho: f64, tau: f64, iterations: usize, convention: ThresholdConvention) -> Result<Self> {
        if rho <= 0.0 || tau <= 0.0 {
            return Err(Error::InvalidArgument(
                "ADMM requires rho > 0 and tau > 0".into(),
            ));
        }
        Ok(AdmmConfig {
            rho,
            tau,
            iterations,
            convention,
        })
    }

    pub fn kappa2(&self) -> f64 {
        match self.convention {
            ThresholdConvention::RhoTau => self.rho * self.tau,
            ThresholdConvention::TauOverRho => self.tau / self.rho,
        }
    }
}

/// Matrices of the ISTA fixed-point map: W1 = I - mu A^H A (dense expansion
/// of the Toeplitz Gram) and W2 = mu A^H.
pub fn ista_operators(dict: &Dictionary, mu: f64) -> Result<(CMat, CMat)> {
    let n = dict.n();
    let gram = gram_generator(dict)?.to_dense();
    let w1 = CMat::from_fn(n, n, |i, j| {
        let eye = if i == j { 1.0 } else { 0.0 };
        C64::new(eye, 0.0) - mu * gram.get(i, j)
    });
    let mut w2 = dict.matrix().adjoint();
    w2.scale(mu);
    Ok((w1, w2))
}

/// Run ISTA, returning every iterate x^(1)..x^(T) (`keep_trace`) or only the
/// final one.
pub fn ista_run(
    dict: &Dictionary,
    y: &[C64],
    cfg: &IstaConfig,
    x0: &[C64],
    keep_trace: bool,
) -> Result<Vec<Vec<C64>>> {
    if y.len() != dict.m() || x0.len() != dict.n() {
        return Err(Error::ShapeMismatch("ista_run input dimensions".into()));
    }
    let (w1, w2) = ista_operators(dict, cfg.mu)?;
    let w2y = w2.matvec(y);
    let kappa = cfg.kappa1();
    let n = dict.n();
    let mut x = x0.to_vec();
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut trace = Vec::with_capacity(if keep_trace { cfg.iterations } else { 1 });
    for _ in 0..cfg.iterations {
        w1.matvec_into(&x, &mut buf);
        for (b, q) in buf.iter_mut().zip(w2y.iter()) {
            *b += q;
        }
        x = buf.iter().map(|&z| soft_threshold(z, kappa)).collect();
        if keep_trace {
            trace.push(x.clone());
        }
    }
    if !keep_trace {
        trace.push(x);
    }
    Ok(trace)
}

/// One ADMM iterate triple.
#[derive(Debug, Clone)]
pub struct AdmmIterate {
    pub x: Vec<C64>,
    pub z: Vec<C64>,
    pub v: Vec<C64>,
}

/// Run ADMM. The x-update solves (A^H A + rho I) x = A^H y + rho (z - v)
/// through a single Levinson factorization reused across iterations.
pub fn admm_run(
    dict: &Dictionary,
    y: &[C64],
    cfg: &AdmmConfig,
    x0: &[C64],
    z0: &[C64],
    v0: &[C64],
    keep_trace: bool,
) -> Result<Vec<AdmmIterate>> {
    let n = dict.n();
    if y.len() != dict.m() || x0.len() != n || z0.len() != n || v0.len() != n {
        return Err(Error::ShapeMismatch("admm_run input dimensions".into()));
    }
    let gram = gram_generator(dict)?;
    let solver = ToeplitzSolver::new(&gram, cfg.rho).expect("A^H A + rho I is positive definite");
    let q = dict.adjoint_apply(y);
    let kappa = cfg.kappa2();
    let mut z = z0.to_vec();
    let mut v = v0.to_vec();
    let mut x = x0.to_vec();
    let mut rhs = vec![C64::new(0.0, 0.0); n];
    let mut trace = Vec::with_capacity(if keep_trace { cfg.iterations } else { 1 });
    for _ in 0..cfg.iterations {
        for i in 0..n {
            rhs[i] = q[i] + cfg.rho * (z[i] - v[i]);
        }
        x = solver.solve(&rhs)?;
        let mut w = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            w[i] = x[i] + v[i];
        }
        z = w.iter().map(|&t| soft_threshold(t, kappa)).collect();
        for i in 0..n {
            v[i] = w[i] - z[i];
        }
        if keep_trace {
            trace.push(AdmmIterate {
                x: x.clone(),
                z: z.clone(),
                v: v.clone(),
            });
        }
    }
    if !keep_trace {
        trace.push(AdmmIterate { x, z, v });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_dictionary, subsample_positions, ArrayLayout, FrequencyGrid};
    use crate::linalg::{l2_norm, l2_norm_sqr, rel_err, sub};
    use nalgebra::{Complex, DMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn small_dict(m: usize, n: usize, seed: u64) -> Dictionary {
        let layout = subsample_positions(3 * m as u32, m, 0.5, seed).unwrap();
        let grid = FrequencyGrid::uniform(n, 0.5).unwrap();
        build_dictionary(&layout, &grid)
    }

    fn random_y(rng: &mut ChaCha8Rng, m: usize) -> Vec<C64> {
        (0..m)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    #[test]
    fn soft_threshold_known_values() {
        assert_eq!(soft_threshold(c(0.0, 0.0), 1.0), c(0.0, 0.0));
        assert_eq!(soft_threshold(c(3.0, 0.0), 1.0), c(2.0, 0.0));
        let z = C64::from_polar(1.0, PI / 3.0);
        let got = soft_threshold(z, 0.5);
        let want = C64::from_polar(0.5, PI / 3.0);
        assert!((got - want).norm() < 1e-14);
        // Dead zone boundary collapses to zero.
        assert_eq!(soft_threshold(c(0.3, 0.4), 0.5), c(0.0, 0.0));
    }

    proptest! {
        #[test]
        fn soft_threshold_contracts(re in -10.0f64..10.0, im in -10.0f64..10.0, kappa in 0.0f64..5.0) {
            let z = c(re, im);
            let s = soft_threshold(z, kappa);
            prop_assert!(s.norm() <= z.norm() + 1e-12);
        }

        #[test]
        fn soft_threshold_phase_equivariant(
            re in -10.0f64..10.0,
            im in -10.0f64..10.0,
            kappa in 0.0f64..5.0,
            phi in 0.0f64..(2.0 * PI),
        ) {
            let z = c(re, im);
            let rot = C64::from_polar(1.0, phi);
            let a = soft_threshold(rot * z, kappa);
            let b = rot * soft_threshold(z, kappa);
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + z.norm()));
        }
    }

    #[test]
    fn sigma_max_dft_case() {
        let m = 8;
        let layout = ArrayLayout::ula(m, 0.5).unwrap();
        let grid = FrequencyGrid::uniform(m, 0.5).unwrap();
        let dict = build_dictionary(&layout, &grid);
        let smax = max_singular_value(&dict).unwrap();
        assert!((smax - (m as f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn sigma_max_matches_dense_svd() {
        let dict = small_dict(4, 16, 77);
        let smax = max_singular_value(&dict).unwrap();
        let a = DMatrix::from_fn(4, 16, |i, j| {
            let z = dict.matrix().get(i, j);
            Complex::new(z.re, z.im)
        });
        let svd = a.svd(false, false);
        let oracle = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        assert!((smax - oracle).abs() / oracle < 1e-6);
        // Frobenius bound for unit-modulus dictionaries.
        assert!(smax <= (4.0 * 16.0f64).sqrt() + 1e-9);
    }

    #[test]
    fn objective_zero_cases() {
        let dict = small_dict(4, 8, 5);
        let y = vec![c(1.0, 1.0); 4];
        let x = vec![c(0.0, 0.0); 8];
        let f = lasso_objective(&dict, &y, &x, 0.7).unwrap();
        assert!((f - 0.5 * l2_norm_sqr(&y)).abs() < 1e-12);
        let zero_y = vec![c(0.0, 0.0); 4];
        assert_eq!(lasso_objective(&dict, &zero_y, &x, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dict = small_dict(3, 6, 8);
        let y = random_y(&mut rng, 3);
        let x: Vec<C64> = (0..6)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let tau = 0.3;
        let f = lasso_objective(&dict, &y, &x, tau).unwrap();
        // Independent recomputation, scalar by scalar.
        let mut resid = 0.0;
        for i in 0..3 {
            let mut ax = c(0.0, 0.0);
            for j in 0..6 {
                ax += dict.matrix().get(i, j) * x[j];
            }
            resid += (y[i] - ax).norm_sqr();
        }
        let l1: f64 = x.iter().map(|z| (z.re * z.re + z.im * z.im).sqrt()).sum();
        assert!((f - (0.5 * resid + tau * l1)).abs() < 1e-12);
    }

    #[test]
    fn ista_zero_input_stays_zero() {
        let dict = small_dict(4, 12, 3);
        let cfg = IstaConfig::for_dictionary(&dict, 0.1, 20).unwrap();
        let y = vec![c(0.0, 0.0); 4];
        let x0 = vec![c(0.0, 0.0); 12];
        let trace = ista_run(&dict, &y, &cfg, &x0, true).unwrap();
        for x in trace {
            assert!(l2_norm(&x) == 0.0);
        }
    }

    #[test]
    fn ista_recovers_single_on_grid_target() {
        let layout = ArrayLayout::ula(8, 0.5).unwrap();
        let grid = FrequencyGrid::uniform(32, 0.5).unwrap();
        let dict = build_dictionary(&layout, &grid);
        let bin = 11;
        let amp = c(0.9, 0.4);
        let y: Vec<C64> = (0..8).map(|i| amp * dict.matrix().get(i, bin)).collect();
        let cfg = IstaConfig::for_dictionary(&dict, 0.01, 100).unwrap();
        let x0 = vec![c(0.0, 0.0); 32];
        let xs = ista_run(&dict, &y, &cfg, &x0, false).unwrap();
        let x = xs.last().unwrap();
        let peak = x
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(peak, bin);
        assert!(x[bin].norm() > 0.1);
    }

    #[test]
    fn ista_objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for trial in 0..50 {
            let dict = small_dict(8, 32, 100 + trial);
            let y = random_y(&mut rng, 8);
            let tau = 0.05 + rng.random::<f64>() * 0.5;
            let cfg = IstaConfig::for_dictionary(&dict, tau, 30).unwrap();
            let x0 = vec![c(0.0, 0.0); 32];
            let trace = ista_run(&dict, &y, &cfg, &x0, true).unwrap();
            let mut prev = lasso_objective(&dict, &y, &x0, tau).unwrap();
            for x in &trace {
                let f = lasso_objective(&dict, &y, x, tau).unwrap();
                assert!(f <= prev + 1e-10, "objective rose: {prev} -> {f}");
                prev = f;
            }
        }
    }

    #[test]
    fn admm_zero_input_stays_zero() {
        let dict = small_dict(4, 12, 4);
        let cfg = AdmmConfig::new(1.0, 0.1, 25, ThresholdConvention::RhoTau).unwrap();
        let zeros = vec![c(0.0, 0.0); 12];
        let y = vec![c(0.0, 0.0); 4];
        let trace = admm_run(&dict, &y, &cfg, &zeros, &zeros, &zeros, true).unwrap();
        for it in trace {
            assert_eq!(l2_norm(&it.x), 0.0);
            assert_eq!(l2_norm(&it.z), 0.0);
            assert_eq!(l2_norm(&it.v), 0.0);
        }
    }

    #[test]
    fn admm_primal_residual_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for trial in 0..5 {
            let dict = small_dict(8, 32, 200 + trial);
            // Two on-grid targets plus mild noise.
            let grid_freqs = dict.grid().freqs().to_vec();
            let b1 = (rng.random::<f64>() * 32.0) as usize % 32;
            let b2 = (b1 + 9) % 32;
            let a1 = crate::array::steering_vector(dict.layout(), grid_freqs[b1]);
            let a2 = crate::array::steering_vector(dict.layout(), grid_freqs[b2]);
            let mut y: Vec<C64> = (0..8)
                .map(|i| a1[i] * c(0.9, 0.2) + a2[i] * c(-0.4, 0.6))
                .collect();
            for yi in y.iter_mut() {
                *yi += c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.05;
            }
            let cfg = AdmmConfig::new(4.0, 0.1, 200, ThresholdConvention::RhoTau).unwrap();
            let zeros = vec![c(0.0, 0.0); 32];
            let trace = admm_run(&dict, &y, &cfg, &zeros, &zeros, &zeros, false).unwrap();
            let last = trace.last().unwrap();
            let resid = l2_norm(&sub(&last.x, &last.z));
            assert!(resid < 1e-6, "primal residual {resid}");
        }
    }

    #[test]
    fn admm_recovers_support_on_noiseless_instances() {
        // Noiseless on-grid targets with small tau: the z-iterate support
        // settles on the true support.
        for trial in 0..3u64 {
            let dict = small_dict(8, 32, 400 + trial);
            let bins = [5 + 2 * trial as usize, 20 + trial as usize];
            let amps = [c(1.0, 0.3), c(-0.6, 0.8)];
            let mut y = vec![c(0.0, 0.0); 8];
            for (b, a) in bins.iter().zip(amps.iter()) {
                for i in 0..8 {
                    y[i] += a * dict.matrix().get(i, *b);
                }
            }
            let cfg = AdmmConfig::new(1.0, 0.02, 500, ThresholdConvention::RhoTau).unwrap();
            let zeros = vec![c(0.0, 0.0); 32];
            let trace = admm_run(&dict, &y, &cfg, &zeros, &zeros, &zeros, false).unwrap();
            let z = &trace.last().unwrap().z;
            let max_mag = z.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
            let support: Vec<usize> = z
                .iter()
                .enumerate()
                .filter(|(_, v)| v.norm() > 0.05 * max_mag)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(support, bins.to_vec(), "trial {trial}");
        }
    }

    #[test]
    fn admm_matches_long_ista() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let dict = small_dict(8, 32, 300);
        let y = random_y(&mut rng, 8);
        let tau = 0.4;
        let ista_cfg = IstaConfig::for_dictionary(&dict, tau, 1000).unwrap();
        let zeros = vec![c(0.0, 0.0); 32];
        let ista_x = ista_run(&dict, &y, &ista_cfg, &zeros, false).unwrap();
        let admm_cfg = AdmmConfig::new(1.0, tau, 2000, ThresholdConvention::RhoTau).unwrap();
        let admm = admm_run(&dict, &y, &admm_cfg, &zeros, &zeros, &zeros, false).unwrap();
        let err = rel_err(&admm.last().unwrap().z, ista_x.last().unwrap());
        assert!(err < 1e-4, "solver disagreement {err}");
    }

    #[test]
    fn admm_threshold_conventions() {
        let paper = AdmmConfig::new(2.0, 0.3, 1, ThresholdConvention::RhoTau).unwrap();
        assert!((paper.kappa2() - 0.6).abs() < 1e-15);
        let standard = AdmmConfig::new(2.0, 0.3, 1, ThresholdConvention::TauOverRho).unwrap();
        assert!((standard.kappa2() - 0.15).abs() < 1e-15);
    }
}

