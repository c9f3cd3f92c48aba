//! The five unfolded architectures: LISTA, TLISTA, THLISTA, ADMM-Net, and
//! THADMM-Net.
//!
//! Parameters live in a flat vector of raw real degrees of freedom; complex
//! entries are (re, im) pairs and the positive scalars rho/beta are stored
//! through a softplus reparametrization. `compile` turns the raw vector into
//! per-layer operators (dense expansions, factorized solves, PSD lift data)
//! that the forward and backward passes consume.

use crate::array::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{CLu, C64, CMat};
use crate::solvers::{ista_operators, max_singular_value, soft_threshold};
use crate::toeplitz::{gram_generator, min_eigenvalue, HermToeplitz, ToeplitzSolver};

/// Architecture tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Lista,
    Tlista,
    Thlista,
    AdmmNet,
    ThadmmNet,
}

impl Arch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arch::Lista => "LISTA",
            Arch::Tlista => "TLISTA",
            Arch::Thlista => "THLISTA",
            Arch::AdmmNet => "ADMM-Net",
            Arch::ThadmmNet => "THADMM-Net",
        }
    }

    pub fn parse(s: &str) -> Result<Arch> {
        let canon: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match canon.as_str() {
            "lista" => Ok(Arch::Lista),
            "tlista" => Ok(Arch::Tlista),
            "thlista" => Ok(Arch::Thlista),
            "admmnet" => Ok(Arch::AdmmNet),
            "thadmmnet" => Ok(Arch::ThadmmNet),
            _ => Err(Error::InvalidArgument(format!("unknown architecture '{s}'"))),
        }
    }

    pub fn is_lista_family(&self) -> bool {
        matches!(self, Arch::Lista | Arch::Tlista | Arch::Thlista)
    }

    pub fn all() -> [Arch; 5] {
        [
            Arch::Lista,
            Arch::Tlista,
            Arch::Thlista,
            Arch::AdmmNet,
            Arch::ThadmmNet,
        ]
    }
}

/// Named per-layer parameter fields, in their serialized order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    /// Dense N x N complex matrix (LISTA W1 or ADMM-Net W).
    WDense,
    /// First column of a general Toeplitz W1 (N complex).
    W1Col,
    /// First row of a general Toeplitz W1, lags 1..N-1 (N-1 complex).
    W1Row,
    /// Hermitian Toeplitz generator (1 real + N-1 complex = 2N-1 reals).
    HermGen,
    /// Dense N x M complex matrix (LISTA-family W2).
    W2,
    RhoRaw,
    BetaRaw,
}

impl Field {
    fn name(&self) -> &'static str {
        match self {
            Field::WDense => "w",
            Field::W1Col => "w1_col",
            Field::W1Row => "w1_row",
            Field::HermGen => "gen",
            Field::W2 => "w2",
            Field::RhoRaw => "rho_raw",
            Field::BetaRaw => "beta_raw",
        }
    }

    fn len(&self, m: usize, n: usize) -> usize {
        match self {
            Field::WDense => 2 * n * n,
            Field::W1Col => 2 * n,
            Field::W1Row => 2 * (n - 1),
            Field::HermGen => 2 * n - 1,
            Field::W2 => 2 * n * m,
            Field::RhoRaw | Field::BetaRaw => 1,
        }
    }
}

/// Fields of one layer for the given architecture, in order.
pub fn layer_fields(arch: Arch) -> &'static [Field] {
    match arch {
        Arch::Lista => &[Field::WDense, Field::W2, Field::BetaRaw],
        Arch::Tlista => &[Field::W1Col, Field::W1Row, Field::W2, Field::BetaRaw],
        Arch::Thlista => &[Field::HermGen, Field::W2, Field::BetaRaw],
        Arch::AdmmNet => &[Field::WDense, Field::RhoRaw, Field::BetaRaw],
        Arch::ThadmmNet => &[Field::HermGen, Field::RhoRaw, Field::BetaRaw],
    }
}

/// Raw real degrees of freedom per layer.
pub fn layer_dof(arch: Arch, m: usize, n: usize) -> usize {
    layer_fields(arch).iter().map(|f| f.len(m, n)).sum()
}

/// Offset of a field's raw dofs within the flat parameter vector.
pub fn field_offset(arch: Arch, m: usize, n: usize, layer: usize, field: Field) -> usize {
    let mut off = layer * layer_dof(arch, m, n);
    for f in layer_fields(arch) {
        if *f == field {
            return off;
        }
        off += f.len(m, n);
    }
    panic!("field {field:?} not present in {arch:?}");
}

/// Length of a field's raw dof segment.
pub fn field_len(field: Field, m: usize, n: usize) -> usize {
    field.len(m, n)
}

/// Parameter count in the reporting convention of the architecture
/// comparison (complex matrices count N^2 or N entries, thresholds count 1;
/// TLISTA reports 2N + MN per layer).
pub fn param_count(arch: Arch, t: usize, m: usize, n: usize) -> u64 {
    let per_layer = match arch {
        Arch::Lista => n * n + m * n + 1,
        Arch::Tlista => 2 * n + m * n,
        Arch::Thlista => n + m * n + 1,
        Arch::AdmmNet => n * n + 2,
        Arch::ThadmmNet => n + 2,
    };
    (t as u64) * (per_layer as u64)
}

/// Numerically stable softplus: ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse softplus, nudged so the round trip through `softplus` reproduces
/// `target` exactly where an f64 preimage exists, and to within one ulp
/// otherwise (the softplus image skips some representable values).
pub fn softplus_inv_exact(target: f64) -> f64 {
    assert!(target > 0.0);
    // ln(e^y - 1) = y + ln(1 - e^-y)
    let raw = target + (-(-target).exp()).ln_1p();
    if softplus(raw) == target {
        return raw;
    }
    let mut best = raw;
    let mut best_err = (softplus(raw) - target).abs();
    for dir in [1i64, -1] {
        let mut cand = raw;
        for _ in 0..64 {
            cand = if dir > 0 {
                f64::from_bits(cand.to_bits().wrapping_add(1))
            } else {
                f64::from_bits(cand.to_bits().wrapping_sub(1))
            };
            let err = (softplus(cand) - target).abs();
            if err == 0.0 {
                return cand;
            }
            if err < best_err {
                best_err = err;
                best = cand;
            }
        }
    }
    best
}

/// An unfolded network: architecture, depth, problem dimensions, and the
/// flat vector of raw parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: Arch,
    pub t: usize,
    pub m: usize,
    pub n: usize,
    params: Vec<f64>,
}

impl Network {
    /// Network with all-zero raw parameters (used by tests and loaders).
    pub fn zeroed(arch: Arch, t: usize, m: usize, n: usize) -> Network {
        Network {
            arch,
            t,
            m,
            n,
            params: vec![0.0; t * layer_dof(arch, m, n)],
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_dof(&self) -> usize {
        self.params.len()
    }

    pub fn field(&self, layer: usize, field: Field) -> &[f64] {
        let off = field_offset(self.arch, self.m, self.n, layer, field);
        &self.params[off..off + field.len(self.m, self.n)]
    }

    pub fn field_mut(&mut self, layer: usize, field: Field) -> &mut [f64] {
        let off = field_offset(self.arch, self.m, self.n, layer, field);
        let len = field.len(self.m, self.n);
        &mut self.params[off..off + len]
    }

    /// Human-readable name of one raw degree of freedom, e.g.
    /// `layer2.gen[5].im` or `layer0.rho_raw`.
    pub fn dof_name(&self, index: usize) -> String {
        let per_layer = layer_dof(self.arch, self.m, self.n);
        let layer = index / per_layer;
        let mut rest = index - layer * per_layer;
        for field in layer_fields(self.arch) {
            let len = field.len(self.m, self.n);
            if rest >= len {
                rest -= len;
                continue;
            }
            let name = field.name();
            return match field {
                Field::RhoRaw | Field::BetaRaw => format!("layer{layer}.{name}"),
                Field::HermGen => {
                    if rest == 0 {
                        format!("layer{layer}.{name}[0].re")
                    } else {
                        let d = (rest - 1) / 2 + 1;
                        let part = if (rest - 1).is_multiple_of(2) { "re" } else { "im" };
                        format!("layer{layer}.{name}[{d}].{part}")
                    }
                }
                Field::W1Col => {
                    let d = rest / 2;
                    let part = if rest.is_multiple_of(2) { "re" } else { "im" };
                    format!("layer{layer}.{name}[{d}].{part}")
                }
                Field::W1Row => {
                    let d = rest / 2 + 1;
                    let part = if rest.is_multiple_of(2) { "re" } else { "im" };
                    format!("layer{layer}.{name}[{d}].{part}")
                }
                Field::WDense => {
                    let entry = rest / 2;
                    let part = if rest.is_multiple_of(2) { "re" } else { "im" };
                    format!(
                        "layer{layer}.{name}[{},{}].{part}",
                        entry / self.n,
                        entry % self.n
                    )
                }
                Field::W2 => {
                    let entry = rest / 2;
                    let part = if rest.is_multiple_of(2) { "re" } else { "im" };
                    format!(
                        "layer{layer}.{name}[{},{}].{part}",
                        entry / self.m,
                        entry % self.m
                    )
                }
            };
        }
        unreachable!("index out of range");
    }
}

fn write_complex_interleaved(dst: &mut [f64], src: impl Iterator<Item = C64>) {
    for (k, z) in src.enumerate() {
        dst[2 * k] = z.re;
        dst[2 * k + 1] = z.im;
    }
}

pub fn read_complex_vec(raw: &[f64]) -> Vec<C64> {
    raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
}

/// Hermitian generator from its 2N-1 raw reals.
pub fn read_herm_gen(raw: &[f64]) -> Vec<C64> {
    let n = raw.len().div_ceil(2);
    let mut gen = Vec::with_capacity(n);
    gen.push(C64::new(raw[0], 0.0));
    for d in 1..n {
        gen.push(C64::new(raw[2 * d - 1], raw[2 * d]));
    }
    gen
}

pub fn read_cmat(raw: &[f64], rows: usize, cols: usize) -> CMat {
    debug_assert_eq!(raw.len(), 2 * rows * cols);
    CMat::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        C64::new(raw[k], raw[k + 1])
    })
}

/// Initialize a network at the parameters of its parent iterative algorithm:
/// the LISTA family gets (W1, W2, beta) = (I - mu A^H A, mu A^H, 0.1); the
/// ADMM family gets (W, rho, beta) = (A^H A, 1, 0.1). Raw scalars are set
/// through the inverse softplus so the effective values are exact.
pub fn init_network(arch: Arch, t: usize, dict: &Dictionary) -> Result<Network> {
    if t == 0 {
        return Err(Error::InvalidArgument("network depth must be at least 1".into()));
    }
    let (m, n) = (dict.m(), dict.n());
    let mut net = Network::zeroed(arch, t, m, n);
    let beta_raw = softplus_inv_exact(0.1);
    let rho_raw = softplus_inv_exact(1.0);
    let gram = gram_generator(dict)?;

    match arch {
        Arch::Lista | Arch::Tlista | Arch::Thlista => {
            let smax = max_singular_value(dict)?;
            let mu = 1.0 / (smax * smax);
            let (w1, w2) = ista_operators(dict, mu)?;
            for layer in 0..t {
                match arch {
                    Arch::Lista => {
                        let dst = net.field_mut(layer, Field::WDense);
                        write_complex_interleaved(dst, (0..n * n).map(|k| w1.get(k / n, k % n)));
                    }
                    Arch::Tlista => {
                        // I - mu A^H A is Hermitian Toeplitz; its first column
                        // and row seed the two generators.
                        let col: Vec<C64> = (0..n).map(|i| w1.get(i, 0)).collect();
                        write_complex_interleaved(net.field_mut(layer, Field::W1Col), col.into_iter());
                        let row: Vec<C64> = (1..n).map(|j| w1.get(0, j)).collect();
                        write_complex_interleaved(net.field_mut(layer, Field::W1Row), row.into_iter());
                    }
                    Arch::Thlista => {
                        let dst = net.field_mut(layer, Field::HermGen);
                        dst[0] = 1.0 - mu * gram.gen()[0].re;
                        for d in 1..n {
                            let z = -mu * gram.gen()[d];
                            dst[2 * d - 1] = z.re;
                            dst[2 * d] = z.im;
                        }
                    }
                    _ => unreachable!(),
                }
                write_complex_interleaved(
                    net.field_mut(layer, Field::W2),
                    (0..n * m).map(|k| w2.get(k / m, k % m)),
                );
                net.field_mut(layer, Field::BetaRaw)[0] = beta_raw;
            }
        }
        Arch::AdmmNet => {
            let dense = gram.to_dense();
            for layer in 0..t {
                let dst = net.field_mut(layer, Field::WDense);
                write_complex_interleaved(dst, (0..n * n).map(|k| dense.get(k / n, k % n)));
                net.field_mut(layer, Field::RhoRaw)[0] = rho_raw;
                net.field_mut(layer, Field::BetaRaw)[0] = beta_raw;
            }
        }
        Arch::ThadmmNet => {
            for layer in 0..t {
                let dst = net.field_mut(layer, Field::HermGen);
                dst[0] = gram.gen()[0].re;
                for d in 1..n {
                    dst[2 * d - 1] = gram.gen()[d].re;
                    dst[2 * d] = gram.gen()[d].im;
                }
                net.field_mut(layer, Field::RhoRaw)[0] = rho_raw;
                net.field_mut(layer, Field::BetaRaw)[0] = beta_raw;
            }
        }
    }
    Ok(net)
}

/// Structural tag of a compiled LISTA-family W1 (drives the gradient
/// projection in the backward pass).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListaKind {
    Dense,
    Toeplitz,
    Herm,
}

pub struct CompiledLista {
    pub w1: CMat,
    pub kind: ListaKind,
    pub w2: CMat,
    pub beta: f64,
    pub beta_sig: f64,
}

pub struct CompiledAdmm {
    /// Inverse of (W_TH + eta I) (Hermitian case) or (W + rho I) (dense case).
    pub binv: CMat,
    pub dense: bool,
    pub eta: f64,
    pub rho_sig: f64,
    pub beta: f64,
    pub beta_sig: f64,
    /// Smallest eigenvalue of W_TH (NaN for the dense variant).
    pub lambda_min: f64,
    /// d(lambda_min)/d(gen) over the raw generator dofs, present only when
    /// the PSD lift is active and eta gradients are enabled.
    pub dlambda_dgen: Option<Vec<f64>>,
}

pub enum CompiledLayer {
    Lista(CompiledLista),
    Admm(CompiledAdmm),
}

/// Per-step compiled form of a network; read-only during forward/backward,
/// safe to share across worker threads.
pub struct CompiledNet {
    pub arch: Arch,
    pub t: usize,
    pub m: usize,
    pub n: usize,
    pub layers: Vec<CompiledLayer>,
}

/// PSD margin of one THADMM-Net layer: lambda_min(W_TH + eta I) with
/// eta = max(-lambda_min, 0) + rho, i.e. max(lambda_min, 0) + rho, but
/// recomputed from a fresh eigensolve so numerical drift is visible.
pub fn min_eig_margin(gen: &[C64], rho: f64) -> Result<f64> {
    let w = HermToeplitz::new(gen.to_vec())?;
    let lift = min_eigenvalue(&w)?;
    Ok(lift.lambda_min + lift.lifted_shift + rho)
}

/// Gradient of lambda_min with respect to the raw generator dofs, given the
/// unit eigenvector: the v v^H rule accumulated along diagonals.
pub fn lambda_gen_gradient(v: &[C64]) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; 2 * n - 1];
    out[0] = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
    for d in 1..n {
        let mut s = C64::new(0.0, 0.0);
        for i in d..n {
            s += v[i].conj() * v[i - d];
        }
        out[2 * d - 1] = 2.0 * s.re;
        out[2 * d] = -2.0 * s.im;
    }
    out
}

fn toeplitz_dense(col: &[C64], row: &[C64]) -> CMat {
    let n = col.len();
    CMat::from_fn(n, n, |i, j| {
        if i >= j {
            col[i - j]
        } else {
            row[j - i - 1]
        }
    })
}

/// Compile a network into per-layer operators. `stop_gradient_eta` drops the
/// lambda_min gradient path (the lift still applies in the forward pass).
pub fn compile_with(net: &Network, stop_gradient_eta: bool) -> Result<CompiledNet> {
    let (m, n) = (net.m, net.n);
    let mut layers = Vec::with_capacity(net.t);
    for layer in 0..net.t {
        let beta_raw = net.field(layer, Field::BetaRaw)[0];
        let beta = softplus(beta_raw);
        let beta_sig = sigmoid(beta_raw);
        match net.arch {
            Arch::Lista | Arch::Tlista | Arch::Thlista => {
                let (w1, kind) = match net.arch {
                    Arch::Lista => (
                        read_cmat(net.field(layer, Field::WDense), n, n),
                        ListaKind::Dense,
                    ),
                    Arch::Tlista => {
                        let col = read_complex_vec(net.field(layer, Field::W1Col));
                        let row = read_complex_vec(net.field(layer, Field::W1Row));
                        (toeplitz_dense(&col, &row), ListaKind::Toeplitz)
                    }
                    Arch::Thlista => {
                        let gen = read_herm_gen(net.field(layer, Field::HermGen));
                        let t = HermToeplitz::new(gen)?;
                        (t.to_dense(), ListaKind::Herm)
                    }
                    _ => unreachable!(),
                };
                let w2 = read_cmat(net.field(layer, Field::W2), n, m);
                layers.push(CompiledLayer::Lista(CompiledLista {
                    w1,
                    kind,
                    w2,
                    beta,
                    beta_sig,
                }));
            }
            Arch::AdmmNet => {
                let rho_raw = net.field(layer, Field::RhoRaw)[0];
                let rho = softplus(rho_raw);
                let w = read_cmat(net.field(layer, Field::WDense), n, n);
                let shifted = CMat::from_fn(n, n, |i, j| {
                    let mut z = w.get(i, j);
                    if i == j {
                        z += rho;
                    }
                    z
                });
                let lu = CLu::factor(&shifted)?;
                let cond = lu.condition_estimate();
                if !cond.is_finite() || cond > 1e14 {
                    return Err(Error::IllConditioned { cond });
                }
                layers.push(CompiledLayer::Admm(CompiledAdmm {
                    binv: lu.inverse(),
                    dense: true,
                    eta: rho,
                    rho_sig: sigmoid(rho_raw),
                    beta,
                    beta_sig,
                    lambda_min: f64::NAN,
                    dlambda_dgen: None,
                }));
            }
            Arch::ThadmmNet => {
                let rho_raw = net.field(layer, Field::RhoRaw)[0];
                let rho = softplus(rho_raw);
                let gen = read_herm_gen(net.field(layer, Field::HermGen));
                let w = HermToeplitz::new(gen)?;
                let lift = min_eigenvalue(&w)?;
                let eta = lift.lifted_shift + rho;
                debug_assert!(
                    lift.lambda_min + eta > 0.0,
                    "layer operator must be positive definite"
                );
                let solver = ToeplitzSolver::new(&w, eta)?;
                // Lifts at the eigensolver noise floor are the inactive
                // subgradient branch: a PSD matrix whose lambda_min computes
                // to -1e-15 must not leak gradient through the lift.
                let active = lift.lifted_shift > 1e-12 * w.gen_norm().max(1.0);
                let dlambda_dgen = if active && !stop_gradient_eta {
                    Some(lambda_gen_gradient(&lift.eigvec_min))
                } else {
                    None
                };
                layers.push(CompiledLayer::Admm(CompiledAdmm {
                    binv: solver.inverse()?,
                    dense: false,
                    eta,
                    rho_sig: sigmoid(rho_raw),
                    beta,
                    beta_sig,
                    lambda_min: lift.lambda_min,
                    dlambda_dgen,
                }));
            }
        }
    }
    Ok(CompiledNet {
        arch: net.arch,
        t: net.t,
        m,
        n,
        layers,
    })
}

pub fn compile(net: &Network) -> Result<CompiledNet> {
    compile_with(net, false)
}

/// Intermediate values recorded by a LISTA-family forward pass.
pub struct ListaActs {
    pub y: Vec<C64>,
    /// Input to each layer: xs[t] = x^(t), with xs[0] = 0.
    pub xs: Vec<Vec<C64>>,
    /// Pre-threshold values per layer.
    pub ws: Vec<Vec<C64>>,
}

/// Intermediate values recorded by an ADMM-family forward pass.
pub struct AdmmActs {
    pub q: Vec<C64>,
    /// x^(t+1) per layer.
    pub xs: Vec<Vec<C64>>,
    /// Pre-threshold w^(t+1) = x^(t+1) + v^(t) per layer.
    pub ws: Vec<Vec<C64>>,
    /// z^(0)..z^(T).
    pub zs: Vec<Vec<C64>>,
    /// v^(0)..v^(T).
    pub vs: Vec<Vec<C64>>,
}

pub enum Activations {
    Lista(ListaActs),
    Admm(AdmmActs),
}

/// Forward pass. `q` must be the precomputed A^H y for the ADMM family and
/// is ignored by the LISTA family.
pub fn forward_precomputed(
    net: &CompiledNet,
    y: &[C64],
    q: Option<&[C64]>,
) -> Result<(Vec<C64>, Activations)> {
    if y.len() != net.m {
        return Err(Error::ShapeMismatch(format!(
            "measurement length {} but network expects {}",
            y.len(),
            net.m
        )));
    }
    let n = net.n;
    if net.arch.is_lista_family() {
        let mut xs = Vec::with_capacity(net.t);
        let mut ws = Vec::with_capacity(net.t);
        let mut x = vec![C64::new(0.0, 0.0); n];
        let mut w = vec![C64::new(0.0, 0.0); n];
        let mut w2y = vec![C64::new(0.0, 0.0); n];
        for layer in &net.layers {
            let CompiledLayer::Lista(l) = layer else { unreachable!() };
            l.w2.matvec_into(y, &mut w2y);
            l.w1.matvec_into(&x, &mut w);
            for (wi, qi) in w.iter_mut().zip(w2y.iter()) {
                *wi += qi;
            }
            let x_next = w.iter().map(|&z| soft_threshold(z, l.beta)).collect();
            xs.push(std::mem::replace(&mut x, x_next));
            ws.push(w.clone());
        }
        let out = x.clone();
        Ok((
            out,
            Activations::Lista(ListaActs {
                y: y.to_vec(),
                xs,
                ws,
            }),
        ))
    } else {
        let q = q.ok_or_else(|| {
            Error::InvalidArgument("ADMM-family forward requires the precomputed A^H y".into())
        })?;
        if q.len() != n {
            return Err(Error::ShapeMismatch("query vector length".into()));
        }
        let mut xs = Vec::with_capacity(net.t);
        let mut ws = Vec::with_capacity(net.t);
        let mut zs = Vec::with_capacity(net.t + 1);
        let mut vs = Vec::with_capacity(net.t + 1);
        zs.push(vec![C64::new(0.0, 0.0); n]);
        vs.push(vec![C64::new(0.0, 0.0); n]);
        let mut rhs = vec![C64::new(0.0, 0.0); n];
        let mut x = vec![C64::new(0.0, 0.0); n];
        for layer in &net.layers {
            let CompiledLayer::Admm(l) = layer else { unreachable!() };
            let z = zs.last().unwrap();
            let v = vs.last().unwrap();
            for i in 0..n {
                rhs[i] = q[i] + l.eta * (z[i] - v[i]);
            }
            l.binv.matvec_into(&rhs, &mut x);
            let mut w = vec![C64::new(0.0, 0.0); n];
            for i in 0..n {
                w[i] = x[i] + v[i];
            }
            let z_next: Vec<C64> = w.iter().map(|&t| soft_threshold(t, l.beta)).collect();
            let v_next: Vec<C64> = w.iter().zip(z_next.iter()).map(|(wi, zi)| wi - zi).collect();
            xs.push(x.clone());
            ws.push(w);
            zs.push(z_next);
            vs.push(v_next);
        }
        let out = zs.last().unwrap().clone();
        Ok((
            out,
            Activations::Admm(AdmmActs {
                q: q.to_vec(),
                xs,
                ws,
                zs,
                vs,
            }),
        ))
    }
}

/// Forward pass computing A^H y internally when needed.
pub fn forward(net: &CompiledNet, dict: &Dictionary, y: &[C64]) -> Result<(Vec<C64>, Activations)> {
    if net.arch.is_lista_family() {
        forward_precomputed(net, y, None)
    } else {
        let q = dict.adjoint_apply(y);
        forward_precomputed(net, y, Some(&q))
    }
}

/// LISTA-family forward pass: x <- S_beta(W1 x + W2 y), T layers.
pub fn forward_lista(net: &Network, dict: &Dictionary, y: &[C64]) -> Result<(Vec<C64>, Activations)> {
    if !net.arch.is_lista_family() {
        return Err(Error::InvalidArgument(format!(
            "forward_lista called on {}",
            net.arch.as_str()
        )));
    }
    forward(&compile(net)?, dict, y)
}

/// ADMM-Net forward pass (dense learnable W).
pub fn forward_admmnet(net: &Network, dict: &Dictionary, y: &[C64]) -> Result<(Vec<C64>, Activations)> {
    if net.arch != Arch::AdmmNet {
        return Err(Error::InvalidArgument(format!(
            "forward_admmnet called on {}",
            net.arch.as_str()
        )));
    }
    forward(&compile(net)?, dict, y)
}

/// THADMM-Net forward pass (Toeplitz-Hermitian W with PSD lift).
pub fn forward_thadmm(net: &Network, dict: &Dictionary, y: &[C64]) -> Result<(Vec<C64>, Activations)> {
    if net.arch != Arch::ThadmmNet {
        return Err(Error::InvalidArgument(format!(
            "forward_thadmm called on {}",
            net.arch.as_str()
        )));
    }
    forward(&compile(net)?, dict, y)
}
