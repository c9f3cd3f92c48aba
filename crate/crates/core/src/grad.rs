//! Reverse-mode differentiation of the unfolded networks.
//!
//! Complex quantities carry a packed adjoint ubar = dL/dRe(u) + j dL/dIm(u).
//! With that convention the needed rules are:
//!   u = W x           ->  xbar = W^H ubar,  Gbar_W = ubar x^H
//!   x = B^{-1} r      ->  g = B^{-H} xbar,  rbar = g,  Gbar_B = -g x^H
//!   u = S_kappa(z)    ->  dead zone passes nothing; otherwise the
//!                         derivative of z (1 - kappa/|z|)
//!   u = alpha w       ->  (alpha real) wbar += alpha ubar,
//!                         alphabar += Re(w^H ubar)
//! Structured weights collect their outer-product gradients diagonal by
//! diagonal onto the generators, with conjugate pairing for the Hermitian
//! variant; lambda_min contributes through the v v^H rule computed at
//! compile time. Every formula here is accepted against the central
//! finite-difference harness, not trusted from derivation.

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::nets::{
    compile_with, field_offset, Activations, Arch, CompiledLayer, CompiledNet, Field, ListaKind,
    Network,
};
use crate::train::{nmse_loss, nmse_loss_grad};

/// Flat gradients over every raw real degree of freedom, aligned with
/// `Network::params()`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    values: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(n_dof: usize) -> Self {
        GradientSet {
            values: vec![0.0; n_dof],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn add(&mut self, other: &GradientSet) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn re_dot(a: C64, b: C64) -> f64 {
    a.re * b.re + a.im * b.im
}

/// Adjoint of the complex soft threshold at input `z` with threshold
/// `kappa`: returns the packed contribution to zbar and the scalar
/// contribution to kappabar. The dead zone (|z| <= kappa) passes nothing.
#[inline]
fn soft_threshold_adjoint(z: C64, kappa: f64, ubar: C64) -> (C64, f64) {
    let r = z.norm();
    if r <= kappa || r == 0.0 {
        return (C64::new(0.0, 0.0), 0.0);
    }
    let s = re_dot(z, ubar); // Re(conj(z) ubar)
    let zbar = ubar * (1.0 - kappa / r) + z * (kappa * s / (r * r * r));
    let kbar = -s / r;
    (zbar, kbar)
}

/// Accumulate Gbar = alpha u v^H onto Hermitian Toeplitz generator dofs
/// (layout: [gen0.re, gen1.re, gen1.im, ...]).
fn herm_gen_project(out: &mut [f64], alpha: f64, u: &[C64], v: &[C64]) {
    let n = u.len();
    let mut diag = 0.0;
    for i in 0..n {
        diag += re_dot(v[i], u[i]);
    }
    out[0] += alpha * diag;
    for d in 1..n {
        let mut s_plus = C64::new(0.0, 0.0);
        for i in d..n {
            s_plus += u[i] * v[i - d].conj();
        }
        let mut s_minus = C64::new(0.0, 0.0);
        for i in 0..n - d {
            s_minus += u[i] * v[i + d].conj();
        }
        let g = s_plus + s_minus.conj();
        out[2 * d - 1] += alpha * g.re;
        out[2 * d] += alpha * g.im;
    }
}

/// Accumulate Gbar = u v^H onto general Toeplitz generators (first column,
/// then row lags 1..N-1).
fn toeplitz_project(col_out: &mut [f64], row_out: &mut [f64], u: &[C64], v: &[C64]) {
    let n = u.len();
    for d in 0..n {
        let mut s = C64::new(0.0, 0.0);
        for i in d..n {
            s += u[i] * v[i - d].conj();
        }
        col_out[2 * d] += s.re;
        col_out[2 * d + 1] += s.im;
    }
    for d in 1..n {
        let mut s = C64::new(0.0, 0.0);
        for i in 0..n - d {
            s += u[i] * v[i + d].conj();
        }
        row_out[2 * (d - 1)] += s.re;
        row_out[2 * (d - 1) + 1] += s.im;
    }
}

/// Accumulate Gbar = alpha u v^H onto a dense complex matrix's interleaved
/// raw dofs (rows = len(u), cols = len(v)).
fn dense_outer_project(out: &mut [f64], alpha: f64, u: &[C64], v: &[C64]) {
    let cols = v.len();
    for (i, ui) in u.iter().enumerate() {
        let row = &mut out[2 * i * cols..2 * (i + 1) * cols];
        for (j, vj) in v.iter().enumerate() {
            // alpha * u_i * conj(v_j)
            row[2 * j] += alpha * (ui.re * vj.re + ui.im * vj.im);
            row[2 * j + 1] += alpha * (ui.im * vj.re - ui.re * vj.im);
        }
    }
}

/// Backward pass: accumulate dL/d(raw params) into `out` given the packed
/// loss gradient with respect to the network output.
pub fn backward_into(
    net: &CompiledNet,
    acts: &Activations,
    loss_grad: &[C64],
    out: &mut [f64],
) -> Result<()> {
    let n = net.n;
    if loss_grad.len() != n {
        return Err(Error::ShapeMismatch("loss gradient length".into()));
    }
    let (m, arch) = (net.m, net.arch);
    match (acts, arch.is_lista_family()) {
        (Activations::Lista(a), true) => {
            if a.xs.len() != net.t {
                return Err(Error::ShapeMismatch(
                    "activations do not match network depth".into(),
                ));
            }
            let mut xbar = loss_grad.to_vec();
            let mut wbar = vec![C64::new(0.0, 0.0); n];
            for (t, layer) in net.layers.iter().enumerate().rev() {
                let CompiledLayer::Lista(l) = layer else { unreachable!() };
                let w = &a.ws[t];
                let x_in = &a.xs[t];
                let mut kappa_bar = 0.0;
                for i in 0..n {
                    let (zb, kb) = soft_threshold_adjoint(w[i], l.beta, xbar[i]);
                    wbar[i] = zb;
                    kappa_bar += kb;
                }
                let boff = field_offset(arch, m, n, t, Field::BetaRaw);
                out[boff] += kappa_bar * l.beta_sig;

                match l.kind {
                    ListaKind::Dense => {
                        let off = field_offset(arch, m, n, t, Field::WDense);
                        dense_outer_project(&mut out[off..off + 2 * n * n], 1.0, &wbar, x_in);
                    }
                    ListaKind::Toeplitz => {
                        let coff = field_offset(arch, m, n, t, Field::W1Col);
                        let roff = field_offset(arch, m, n, t, Field::W1Row);
                        let (head, tail) = out.split_at_mut(roff);
                        toeplitz_project(
                            &mut head[coff..coff + 2 * n],
                            &mut tail[..2 * (n - 1)],
                            &wbar,
                            x_in,
                        );
                    }
                    ListaKind::Herm => {
                        let off = field_offset(arch, m, n, t, Field::HermGen);
                        herm_gen_project(&mut out[off..off + 2 * n - 1], 1.0, &wbar, x_in);
                    }
                }
                let w2off = field_offset(arch, m, n, t, Field::W2);
                dense_outer_project(&mut out[w2off..w2off + 2 * n * m], 1.0, &wbar, &a.y);

                // Adjoint entering the layer below.
                l.w1.adjoint_matvec_into(&wbar, &mut xbar);
            }
        }
        (Activations::Admm(a), false) => {
            if a.xs.len() != net.t {
                return Err(Error::ShapeMismatch(
                    "activations do not match network depth".into(),
                ));
            }
            let mut zbar = loss_grad.to_vec();
            let mut vbar = vec![C64::new(0.0, 0.0); n];
            let mut wbar = vec![C64::new(0.0, 0.0); n];
            let mut g = vec![C64::new(0.0, 0.0); n];
            for (t, layer) in net.layers.iter().enumerate().rev() {
                let CompiledLayer::Admm(l) = layer else { unreachable!() };
                let x = &a.xs[t];
                let w = &a.ws[t];
                let z_in = &a.zs[t];
                let v_in = &a.vs[t];

                // Layer: w = x + v_in; z_out = S_beta(w); v_out = w - z_out.
                let mut kappa_bar = 0.0;
                for i in 0..n {
                    let z_local = zbar[i] - vbar[i];
                    let (zb, kb) = soft_threshold_adjoint(w[i], l.beta, z_local);
                    wbar[i] = vbar[i] + zb;
                    kappa_bar += kb;
                }
                let boff = field_offset(arch, m, n, t, Field::BetaRaw);
                out[boff] += kappa_bar * l.beta_sig;

                // x = B^{-1} rhs with xbar = wbar.
                if l.dense {
                    l.binv.adjoint_matvec_into(&wbar, &mut g);
                } else {
                    // Hermitian operator: B^{-H} = B^{-1}.
                    l.binv.matvec_into(&wbar, &mut g);
                }

                let mut eta_bar = 0.0;
                // Diagonal of Gbar_B = -g x^H.
                for i in 0..n {
                    eta_bar -= re_dot(x[i], g[i]);
                }
                // rhs = q + eta (z_in - v_in): eta path through the rhs.
                for i in 0..n {
                    eta_bar += re_dot(z_in[i] - v_in[i], g[i]);
                }

                if l.dense {
                    let woff = field_offset(arch, m, n, t, Field::WDense);
                    dense_outer_project(&mut out[woff..woff + 2 * n * n], -1.0, &g, x);
                } else {
                    let goff = field_offset(arch, m, n, t, Field::HermGen);
                    let gslice = &mut out[goff..goff + 2 * n - 1];
                    herm_gen_project(gslice, -1.0, &g, x);
                    if let Some(dlam) = &l.dlambda_dgen {
                        // eta = rho + max(-lambda_min, 0), active branch:
                        // d eta / d gen = -d lambda_min / d gen.
                        for (o, d) in gslice.iter_mut().zip(dlam.iter()) {
                            *o -= eta_bar * d;
                        }
                    }
                }
                let roff = field_offset(arch, m, n, t, Field::RhoRaw);
                out[roff] += eta_bar * l.rho_sig;

                // Adjoints entering the layer below: wbar reaches v_in
                // directly, the rhs path reaches z_in and v_in through g.
                for i in 0..n {
                    let rhs_flow = l.eta * g[i];
                    zbar[i] = rhs_flow;
                    vbar[i] = wbar[i] - rhs_flow;
                }
            }
        }
        _ => {
            return Err(Error::ShapeMismatch(
                "activations do not match the network family".into(),
            ))
        }
    }
    Ok(())
}

/// Backward pass returning a fresh `GradientSet`.
pub fn backward(net: &CompiledNet, acts: &Activations, loss_grad: &[C64]) -> Result<GradientSet> {
    let per_layer = crate::nets::layer_dof(net.arch, net.m, net.n);
    let mut grads = GradientSet::zeros(net.t * per_layer);
    backward_into(net, acts, loss_grad, &mut grads.values)?;
    Ok(grads)
}

/// One finite-difference disagreement above tolerance.
#[derive(Debug, Clone)]
pub struct FdFailure {
    pub dof: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel: f64,
}

/// Report of a finite-difference gradient check on one sample.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Sample sits within 10*step of a nondifferentiable point and was not
    /// checked.
    pub excluded: bool,
    pub n_checked: usize,
    pub worst_rel: f64,
    pub worst_dof: Option<String>,
    pub failures: Vec<FdFailure>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        !self.excluded && self.failures.is_empty()
    }
}

/// Relative error with a floor that turns into an absolute criterion for
/// tiny gradients. Some derivatives are exactly zero (the diagonal of an
/// active lift cancels against it) while central differences still see the
/// round-off of the loss itself, about eps * |L| / (2 step); the floor
/// scales with the loss so those honest zeros pass and a genuinely wrong
/// formula still trips the relative test.
fn rel_gap(a: f64, b: f64, loss_scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4 * loss_scale)
}

/// Central finite-difference check of `backward` on a single sample, using
/// the per-sample NMSE loss. Perturbs every raw real degree of freedom by
/// +/- step and compares against the analytic gradient.
///
/// Samples where any soft-threshold input sits within 10*step of its dead
/// zone boundary, or where any lambda_min sits within 10*step of zero, are
/// excluded (reported, not checked): the subgradient convention is not a
/// derivative there.
pub fn finite_diff_check(
    net: &Network,
    dict: &crate::array::Dictionary,
    y: &[C64],
    x_true: &[C64],
    step: f64,
    tolerance: f64,
    stop_gradient_eta: bool,
) -> Result<FdReport> {
    if step <= 0.0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let compiled = compile_with(net, stop_gradient_eta)?;
    let (x_hat, acts) = crate::nets::forward(&compiled, dict, y)?;

    // Exclusion scan on the unperturbed activations.
    let margin = 10.0 * step;
    let mut excluded = false;
    let ws = match &acts {
        Activations::Lista(a) => &a.ws,
        Activations::Admm(a) => &a.ws,
    };
    for (t, w) in ws.iter().enumerate() {
        let beta = match &compiled.layers[t] {
            CompiledLayer::Lista(l) => l.beta,
            CompiledLayer::Admm(l) => l.beta,
        };
        if w.iter().any(|z| (z.norm() - beta).abs() < margin) {
            excluded = true;
        }
    }
    if net.arch == Arch::ThadmmNet {
        for (t, layer) in compiled.layers.iter().enumerate() {
            let CompiledLayer::Admm(l) = layer else { unreachable!() };
            if l.lambda_min.abs() < margin {
                excluded = true;
            }
            // A (near-)degenerate lambda_min only has a subgradient; the
            // v v^H rule and the finite difference may legitimately differ.
            let gen = crate::nets::read_herm_gen(net.field(t, Field::HermGen));
            let w = crate::toeplitz::HermToeplitz::new(gen)?;
            let lift = crate::toeplitz::min_eigenvalue(&w)?;
            let gap = crate::toeplitz::eigen_gap_estimate(&w, &lift)?;
            if gap < margin.max(1e-6 * w.gen_norm().max(1.0)) {
                excluded = true;
            }
        }
    }
    if excluded {
        return Ok(FdReport {
            excluded: true,
            n_checked: 0,
            worst_rel: 0.0,
            worst_dof: None,
            failures: Vec::new(),
        });
    }

    let loss_grad = nmse_loss_grad(&x_hat, x_true)?;
    let analytic = backward(&compiled, &acts, &loss_grad)?;
    let loss_scale = nmse_loss(&x_hat, x_true)?.abs().max(1.0);

    let mut worst_rel = 0.0;
    let mut worst_dof = None;
    let mut failures = Vec::new();
    let mut probe = net.clone();
    for k in 0..net.n_dof() {
        let orig = probe.params()[k];
        probe.params_mut()[k] = orig + step;
        let plus = sample_loss(&probe, dict, y, x_true, stop_gradient_eta)?;
        probe.params_mut()[k] = orig - step;
        let minus = sample_loss(&probe, dict, y, x_true, stop_gradient_eta)?;
        probe.params_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic.values()[k];
        let rel = rel_gap(a, numeric, loss_scale);
        if rel > worst_rel {
            worst_rel = rel;
            worst_dof = Some(net.dof_name(k));
        }
        if rel > tolerance {
            failures.push(FdFailure {
                dof: net.dof_name(k),
                analytic: a,
                numeric,
                rel,
            });
        }
    }
    Ok(FdReport {
        excluded: false,
        n_checked: net.n_dof(),
        worst_rel,
        worst_dof,
        failures,
    })
}

fn sample_loss(
    net: &Network,
    dict: &crate::array::Dictionary,
    y: &[C64],
    x_true: &[C64],
    stop_gradient_eta: bool,
) -> Result<f64> {
    let compiled = compile_with(net, stop_gradient_eta)?;
    let (x_hat, _) = crate::nets::forward(&compiled, dict, y)?;
    nmse_loss(&x_hat, x_true)
}

/// Build a network for gradient checking: initialization plus seeded
/// parameter jitter. THADMM-Net additionally gets its generator pushed to an
/// indefinite matrix with a verifiably simple smallest eigenvalue, so the
/// active PSD-lift path is exercised where its derivative actually exists.
pub fn fd_test_network(
    arch: Arch,
    t: usize,
    dict: &crate::array::Dictionary,
    seed: u64,
) -> Result<Network> {
    use crate::nets::{init_network, read_herm_gen};
    use crate::toeplitz::{eigen_gap_estimate, min_eigenvalue, HermToeplitz};

    let mut jitter_state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
    let mut next_unit = move || {
        // xorshift64*
        jitter_state ^= jitter_state >> 12;
        jitter_state ^= jitter_state << 25;
        jitter_state ^= jitter_state >> 27;
        (jitter_state.wrapping_mul(0x2545f4914f6cdd1d) >> 11) as f64 / (1u64 << 53) as f64
    };

    for _ in 0..32 {
        let mut net = init_network(arch, t, dict)?;
        for v in net.params_mut().iter_mut() {
            *v += 0.2 * (next_unit() - 0.5);
        }
        if arch != Arch::ThadmmNet {
            return Ok(net);
        }
        let m = dict.m() as f64;
        for layer in 0..t {
            let gen = net.field_mut(layer, Field::HermGen);
            gen[0] -= 1.5 * m; // push lambda_min well below zero
            gen[1] -= 0.5 * m; // strong first lag splits the spectrum
        }
        let simple = (0..t).try_fold(true, |ok, layer| -> Result<bool> {
            let gen = read_herm_gen(net.field(layer, Field::HermGen));
            let w = HermToeplitz::new(gen)?;
            let lift = min_eigenvalue(&w)?;
            let gap = eigen_gap_estimate(&w, &lift)?;
            Ok(ok && lift.lambda_min < -1e-2 && gap > 2e-3)
        })?;
        if simple {
            return Ok(net);
        }
    }
    Err(Error::NonConvergence {
        what: "gradient-check network construction (simple spectrum)".into(),
        iterations: 32,
        residual: f64::NAN,
    })
}
