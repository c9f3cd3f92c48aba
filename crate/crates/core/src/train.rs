//! NMSE loss, Adam, the epoch loop, and checkpointing.
//!
//! Batch gradients are accumulated in fixed-size sample chunks that run in
//! parallel and reduce in index order, so results are bitwise reproducible
//! regardless of thread count.

use crate::array::Dictionary;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::grad::backward_into;
use crate::linalg::{l2_norm_sqr, C64};
use crate::nets::{
    compile_with, forward_precomputed, min_eig_margin, read_herm_gen, softplus, Arch, Field,
    Network,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Samples per deterministic accumulation chunk.
const GRAD_CHUNK: usize = 64;

/// Normalized mean-squared error ||x_hat - x||^2 / ||x||^2.
pub fn nmse_loss(x_hat: &[C64], x: &[C64]) -> Result<f64> {
    if x_hat.len() != x.len() {
        return Err(Error::ShapeMismatch("nmse operands differ in length".into()));
    }
    let denom = l2_norm_sqr(x);
    if denom == 0.0 {
        return Err(Error::InvalidArgument("NMSE undefined for zero ground truth".into()));
    }
    let num: f64 = x_hat
        .iter()
        .zip(x.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(num / denom)
}

/// Packed gradient of the per-sample NMSE with respect to x_hat:
/// 2 (x_hat - x) / ||x||^2.
pub fn nmse_loss_grad(x_hat: &[C64], x: &[C64]) -> Result<Vec<C64>> {
    if x_hat.len() != x.len() {
        return Err(Error::ShapeMismatch("nmse operands differ in length".into()));
    }
    let denom = l2_norm_sqr(x);
    if denom == 0.0 {
        return Err(Error::InvalidArgument("NMSE undefined for zero ground truth".into()));
    }
    Ok(x_hat
        .iter()
        .zip(x.iter())
        .map(|(a, b)| 2.0 * (a - b) / denom)
        .collect())
}

/// Mean NMSE in dB with a -100 dB floor for exact recovery.
pub fn nmse_db(mean_nmse: f64) -> f64 {
    10.0 * mean_nmse.max(1e-10).log10()
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Save a checkpoint every this many epochs into `checkpoint_dir`
    /// (0 disables cadence checkpoints).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Optional global-norm gradient clip; off by default.
    pub clip_grad: Option<f64>,
    /// Drop the lambda_min gradient path of THADMM-Net.
    pub stop_gradient_eta: bool,
    /// Recompute and assert the PSD margin of every THADMM-Net layer after
    /// each optimizer step.
    pub assert_psd: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 2048,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 1,
            checkpoint_every: 0,
            checkpoint_dir: None,
            clip_grad: None,
            stop_gradient_eta: false,
            assert_psd: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be positive".into()));
        }
        if self.learning_rate < 0.0 || self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("bad optimizer constants".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-epoch loss record (dB values).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_nmse_db: f64,
    pub val_nmse_db: f64,
    pub wall_seconds: f64,
}

/// PSD margin bookkeeping for THADMM-Net training runs.
#[derive(Debug, Clone, Copy)]
pub struct PsdCheckStats {
    pub steps_checked: u64,
    pub min_margin: f64,
}

/// Optimizer state plus the network being trained.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub net: Network,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: u64,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    pub psd_checks: Option<PsdCheckStats>,
}

impl TrainState {
    pub fn new(net: Network) -> TrainState {
        let n = net.n_dof();
        TrainState {
            net,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
            epoch: 0,
            history: Vec::new(),
            psd_checks: None,
        }
    }
}

/// One bias-corrected Adam update over every raw degree of freedom.
pub fn adam_step(state: &mut TrainState, grads: &[f64], cfg: &TrainConfig) -> Result<()> {
    if grads.len() != state.net.n_dof() {
        return Err(Error::ShapeMismatch("gradient length != parameter count".into()));
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient at {}",
            state.net.dof_name(bad)
        )));
    }
    let mut scale = 1.0;
    if let Some(max_norm) = cfg.clip_grad {
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > max_norm {
            scale = max_norm / norm;
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let params = state.net.params_mut();
    for k in 0..grads.len() {
        let g = grads[k] * scale;
        state.adam_m[k] = cfg.beta1 * state.adam_m[k] + (1.0 - cfg.beta1) * g;
        state.adam_v[k] = cfg.beta2 * state.adam_v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.adam_m[k] / bc1;
        let v_hat = state.adam_v[k] / bc2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Precompute A^H y for every sample (ADMM-family input).
fn precompute_queries(dict: &Dictionary, ds: &Dataset) -> Vec<Vec<C64>> {
    ds.samples
        .par_iter()
        .map(|s| dict.adjoint_apply(&s.y))
        .collect()
}

/// Mean NMSE of a compiled network over a set of sample indices.
fn mean_nmse_over(
    compiled: &crate::nets::CompiledNet,
    ds: &Dataset,
    queries: Option<&[Vec<C64>]>,
    indices: Option<&[usize]>,
) -> Result<f64> {
    let idx: Vec<usize> = match indices {
        Some(list) => list.to_vec(),
        None => (0..ds.len()).collect(),
    };
    let total: Result<f64> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            for &i in chunk {
                let s = &ds.samples[i];
                let q = queries.map(|qs| qs[i].as_slice());
                let (x_hat, _) = forward_precomputed(compiled, &s.y, q)?;
                acc += nmse_loss(&x_hat, &s.x)?;
            }
            Ok(acc)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a + b));
    Ok(total? / idx.len() as f64)
}

/// Mean NMSE of a network over a dataset (compiles once).
pub fn evaluate_nmse(net: &Network, dict: &Dictionary, ds: &Dataset) -> Result<f64> {
    let compiled = compile_with(net, false)?;
    let queries = if net.arch.is_lista_family() {
        None
    } else {
        Some(precompute_queries(dict, ds))
    };
    mean_nmse_over(&compiled, ds, queries.as_deref(), None)
}

fn psd_margin_of(net: &Network) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for layer in 0..net.t {
        let gen = read_herm_gen(net.field(layer, Field::HermGen));
        let rho = softplus(net.field(layer, Field::RhoRaw)[0]);
        let margin = min_eig_margin(&gen, rho)?;
        worst = worst.min(margin);
    }
    Ok(worst)
}

/// Train a network. Shuffling, batching, and gradient reduction are all
/// deterministic in (seed, data); `on_epoch` fires after each epoch with the
/// freshly appended stats row.
pub fn train(
    net: Network,
    dict: &Dictionary,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainState> {
    cfg.validate()?;
    if train_set.m != net.m || train_set.n != net.n || val_set.m != net.m || val_set.n != net.n {
        return Err(Error::ShapeMismatch(
            "dataset dimensions do not match the network".into(),
        ));
    }
    if cfg.batch_size > train_set.len() {
        return Err(Error::InvalidArgument(
            "batch size exceeds the training set".into(),
        ));
    }
    let is_admm = !net.arch.is_lista_family();
    let train_q = if is_admm {
        Some(precompute_queries(dict, train_set))
    } else {
        None
    };
    let val_q = if is_admm {
        Some(precompute_queries(dict, val_set))
    } else {
        None
    };

    let mut state = TrainState::new(net);
    if cfg.assert_psd && state.net.arch == Arch::ThadmmNet {
        state.psd_checks = Some(PsdCheckStats {
            steps_checked: 0,
            min_margin: f64::INFINITY,
        });
    }
    let n_dof = state.net.n_dof();
    let mut indices: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1 + epoch as u64);
        indices.shuffle(&mut rng);

        let mut epoch_loss_sum = 0.0;
        for batch in indices.chunks(cfg.batch_size) {
            let compiled = compile_with(&state.net, cfg.stop_gradient_eta)?;
            let batch_len = batch.len() as f64;
            // Parallel map over fixed chunks, then an in-order reduction.
            let partials: Result<Vec<(Vec<f64>, f64)>> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grad = vec![0.0; n_dof];
                    let mut loss_sum = 0.0;
                    for &i in chunk {
                        let s = &train_set.samples[i];
                        let q = train_q.as_ref().map(|qs| qs[i].as_slice());
                        let (x_hat, acts) = forward_precomputed(&compiled, &s.y, q)?;
                        loss_sum += nmse_loss(&x_hat, &s.x)?;
                        let mut lg = nmse_loss_grad(&x_hat, &s.x)?;
                        for g in lg.iter_mut() {
                            *g /= batch_len;
                        }
                        backward_into(&compiled, &acts, &lg, &mut grad)?;
                    }
                    Ok((grad, loss_sum))
                })
                .collect();
            let mut grads = vec![0.0; n_dof];
            for (g, loss) in partials? {
                for (a, b) in grads.iter_mut().zip(g.iter()) {
                    *a += b;
                }
                epoch_loss_sum += loss;
            }
            adam_step(&mut state, &grads, cfg)?;
            if let Some(stats) = state.psd_checks.as_mut() {
                let margin = psd_margin_of(&state.net)?;
                if margin <= 0.0 {
                    return Err(Error::NonFinite(format!(
                        "PSD margin {margin} at step {}",
                        state.step
                    )));
                }
                stats.steps_checked += 1;
                stats.min_margin = stats.min_margin.min(margin);
            }
        }

        let train_mean = epoch_loss_sum / train_set.len() as f64;
        let compiled = compile_with(&state.net, cfg.stop_gradient_eta)?;
        let val_mean = mean_nmse_over(&compiled, val_set, val_q.as_deref(), None)?;
        let stats = EpochStats {
            epoch,
            train_nmse_db: nmse_db(train_mean),
            val_nmse_db: nmse_db(val_mean),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if !stats.train_nmse_db.is_finite() || !stats.val_nmse_db.is_finite() {
            return Err(Error::NonFinite("epoch loss".into()));
        }
        state.epoch = epoch + 1;
        state.history.push(stats);
        on_epoch(state.history.last().unwrap());

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            if let Some(dir) = &cfg.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                save_checkpoint(&state, &dir.join(format!("checkpoint_epoch{:03}.json", epoch + 1)))?;
            }
        }
    }
    Ok(state)
}

/// Write the loss history as CSV: epoch, train_nmse_db, val_nmse_db,
/// wall_seconds.
pub fn write_history_csv(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,train_nmse_db,val_nmse_db,wall_seconds")?;
    for h in history {
        writeln!(
            f,
            "{},{},{},{:.3}",
            h.epoch, h.train_nmse_db, h.val_nmse_db, h.wall_seconds
        )?;
    }
    Ok(())
}

// --- Checkpoint format -----------------------------------------------------
//
// Self-describing JSON: {format_version, arch, t, m, n, layers, optimizer,
// epoch}. Complex values are [re, im] pairs; per-layer field order is the
// weight operator first, then w2 when present, then rho_raw, beta_raw.

#[derive(Serialize, Deserialize)]
struct LayerDto {
    #[serde(skip_serializing_if = "Option::is_none")]
    w: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w1_col: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w1_row: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gen: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w2: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_raw: Option<f64>,
    beta_raw: f64,
}

#[derive(Serialize, Deserialize)]
struct OptimizerDto {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDto {
    format_version: u32,
    arch: String,
    t: usize,
    m: usize,
    n: usize,
    layers: Vec<LayerDto>,
    optimizer: OptimizerDto,
    epoch: usize,
}

const CHECKPOINT_VERSION: u32 = 1;

fn complex_pairs(raw: &[f64]) -> Vec<[f64; 2]> {
    raw.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

fn matrix_pairs(raw: &[f64], rows: usize, cols: usize) -> Vec<Vec<[f64; 2]>> {
    (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| {
                    let k = 2 * (i * cols + j);
                    [raw[k], raw[k + 1]]
                })
                .collect()
        })
        .collect()
}

fn gen_pairs(raw: &[f64]) -> Vec<[f64; 2]> {
    let n = raw.len().div_ceil(2);
    let mut out = Vec::with_capacity(n);
    out.push([raw[0], 0.0]);
    for d in 1..n {
        out.push([raw[2 * d - 1], raw[2 * d]]);
    }
    out
}

fn layer_to_dto(net: &Network, layer: usize) -> LayerDto {
    let (m, n) = (net.m, net.n);
    let mut dto = LayerDto {
        w: None,
        w1_col: None,
        w1_row: None,
        gen: None,
        w2: None,
        rho_raw: None,
        beta_raw: net.field(layer, Field::BetaRaw)[0],
    };
    match net.arch {
        Arch::Lista => {
            dto.w = Some(matrix_pairs(net.field(layer, Field::WDense), n, n));
            dto.w2 = Some(matrix_pairs(net.field(layer, Field::W2), n, m));
        }
        Arch::Tlista => {
            dto.w1_col = Some(complex_pairs(net.field(layer, Field::W1Col)));
            dto.w1_row = Some(complex_pairs(net.field(layer, Field::W1Row)));
            dto.w2 = Some(matrix_pairs(net.field(layer, Field::W2), n, m));
        }
        Arch::Thlista => {
            dto.gen = Some(gen_pairs(net.field(layer, Field::HermGen)));
            dto.w2 = Some(matrix_pairs(net.field(layer, Field::W2), n, m));
        }
        Arch::AdmmNet => {
            dto.w = Some(matrix_pairs(net.field(layer, Field::WDense), n, n));
            dto.rho_raw = Some(net.field(layer, Field::RhoRaw)[0]);
        }
        Arch::ThadmmNet => {
            dto.gen = Some(gen_pairs(net.field(layer, Field::HermGen)));
            dto.rho_raw = Some(net.field(layer, Field::RhoRaw)[0]);
        }
    }
    dto
}

fn require<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Format(format!("checkpoint layer is missing '{what}'")))
}

fn write_matrix(dst: &mut [f64], mat: &[Vec<[f64; 2]>], rows: usize, cols: usize, what: &str) -> Result<()> {
    if mat.len() != rows || mat.iter().any(|r| r.len() != cols) {
        return Err(Error::Format(format!("'{what}' has the wrong shape")));
    }
    for (i, row) in mat.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            let k = 2 * (i * cols + j);
            dst[k] = z[0];
            dst[k + 1] = z[1];
        }
    }
    Ok(())
}

fn write_pairs(dst: &mut [f64], pairs: &[[f64; 2]], len: usize, what: &str) -> Result<()> {
    if pairs.len() != len {
        return Err(Error::Format(format!("'{what}' has the wrong length")));
    }
    for (k, z) in pairs.iter().enumerate() {
        dst[2 * k] = z[0];
        dst[2 * k + 1] = z[1];
    }
    Ok(())
}

fn write_gen(dst: &mut [f64], pairs: &[[f64; 2]], n: usize) -> Result<()> {
    if pairs.len() != n {
        return Err(Error::Format("'gen' has the wrong length".into()));
    }
    if pairs[0][1] != 0.0 {
        return Err(Error::Format("'gen[0]' must be real".into()));
    }
    dst[0] = pairs[0][0];
    for d in 1..n {
        dst[2 * d - 1] = pairs[d][0];
        dst[2 * d] = pairs[d][1];
    }
    Ok(())
}

fn dto_to_network(dto: &CheckpointDto) -> Result<Network> {
    let arch = Arch::parse(&dto.arch)?;
    let (m, n) = (dto.m, dto.n);
    if dto.layers.len() != dto.t {
        return Err(Error::Format("layer count does not match depth".into()));
    }
    let mut net = Network::zeroed(arch, dto.t, m, n);
    for (layer, l) in dto.layers.iter().enumerate() {
        net.field_mut(layer, Field::BetaRaw)[0] = l.beta_raw;
        match arch {
            Arch::Lista => {
                write_matrix(net.field_mut(layer, Field::WDense), require(l.w.as_ref(), "w")?, n, n, "w")?;
                write_matrix(net.field_mut(layer, Field::W2), require(l.w2.as_ref(), "w2")?, n, m, "w2")?;
            }
            Arch::Tlista => {
                write_pairs(net.field_mut(layer, Field::W1Col), require(l.w1_col.as_ref(), "w1_col")?, n, "w1_col")?;
                write_pairs(net.field_mut(layer, Field::W1Row), require(l.w1_row.as_ref(), "w1_row")?, n - 1, "w1_row")?;
                write_matrix(net.field_mut(layer, Field::W2), require(l.w2.as_ref(), "w2")?, n, m, "w2")?;
            }
            Arch::Thlista => {
                write_gen(net.field_mut(layer, Field::HermGen), require(l.gen.as_ref(), "gen")?, n)?;
                write_matrix(net.field_mut(layer, Field::W2), require(l.w2.as_ref(), "w2")?, n, m, "w2")?;
            }
            Arch::AdmmNet => {
                write_matrix(net.field_mut(layer, Field::WDense), require(l.w.as_ref(), "w")?, n, n, "w")?;
                net.field_mut(layer, Field::RhoRaw)[0] = require(l.rho_raw, "rho_raw")?;
            }
            Arch::ThadmmNet => {
                write_gen(net.field_mut(layer, Field::HermGen), require(l.gen.as_ref(), "gen")?, n)?;
                net.field_mut(layer, Field::RhoRaw)[0] = require(l.rho_raw, "rho_raw")?;
            }
        }
    }
    Ok(net)
}

/// Save the full training state (parameters plus Adam moments).
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let net = &state.net;
    let dto = CheckpointDto {
        format_version: CHECKPOINT_VERSION,
        arch: net.arch.as_str().to_string(),
        t: net.t,
        m: net.m,
        n: net.n,
        layers: (0..net.t).map(|l| layer_to_dto(net, l)).collect(),
        optimizer: OptimizerDto {
            step: state.step,
            m: state.adam_m.clone(),
            v: state.adam_v.clone(),
        },
        epoch: state.epoch,
    };
    let json = serde_json::to_string_pretty(&dto)
        .map_err(|e| Error::Format(format!("checkpoint serialization: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a checkpoint. The loss history is not part of the format; it lives
/// in the training-log CSV.
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let text = std::fs::read_to_string(path)?;
    let dto: CheckpointDto =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("checkpoint parse: {e}")))?;
    if dto.format_version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            dto.format_version
        )));
    }
    let net = dto_to_network(&dto)?;
    let n_dof = net.n_dof();
    if dto.optimizer.m.len() != n_dof || dto.optimizer.v.len() != n_dof {
        return Err(Error::Format("optimizer buffers do not match parameters".into()));
    }
    Ok(TrainState {
        net,
        adam_m: dto.optimizer.m,
        adam_v: dto.optimizer.v,
        step: dto.optimizer.step,
        epoch: dto.epoch,
        history: Vec::new(),
        psd_checks: None,
    })
}

/// Load a checkpoint and require a specific architecture.
pub fn load_checkpoint_expect(path: &Path, arch: Arch) -> Result<TrainState> {
    let state = load_checkpoint(path)?;
    if state.net.arch != arch {
        return Err(Error::Mismatch(format!(
            "checkpoint holds {} but {} was expected",
            state.net.arch.as_str(),
            arch.as_str()
        )));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_dictionary, subsample_positions, FrequencyGrid};
    use crate::datagen::{generate_in_memory, DatasetSpec, SnrPolicy};
    use crate::nets::init_network;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn small_setup(n_train: usize) -> (Dictionary, Dataset, Dataset) {
        let layout = subsample_positions(20, 8, 0.5, 3).unwrap();
        let grid = FrequencyGrid::uniform(32, 0.5).unwrap();
        let dict = build_dictionary(&layout, &grid);
        let spec = DatasetSpec {
            count: n_train,
            snr: SnrPolicy::Fixed(15.0),
            min_sep: 1.0 / 8.0,
            k_min: 1,
            k_max: 3,
            seed: 21,
            noise_per_component: false,
        };
        let train = generate_in_memory(dict.layout(), dict.grid(), &spec).unwrap();
        let val_spec = DatasetSpec {
            seed: 22,
            count: 32,
            ..spec
        };
        let val = generate_in_memory(dict.layout(), dict.grid(), &val_spec).unwrap();
        (dict, train, val)
    }

    #[test]
    fn nmse_known_values() {
        let x = vec![c(1.0, 0.0), c(0.0, 2.0)];
        assert_eq!(nmse_loss(&x, &x).unwrap(), 0.0);
        let zero = vec![c(0.0, 0.0); 2];
        assert_eq!(nmse_loss(&zero, &x).unwrap(), 1.0);
        let double: Vec<C64> = x.iter().map(|z| z * 2.0).collect();
        assert!((nmse_loss(&double, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse_loss(&x, &zero).is_err());
    }

    #[test]
    fn adam_scalar_oracle() {
        // One parameter, constant gradient 1: first bias-corrected update
        // moves by about -lr.
        let mut net = Network::zeroed(Arch::ThadmmNet, 1, 1, 1);
        // dof layout: gen0.re, rho_raw, beta_raw
        net.params_mut()[0] = 5.0;
        let mut state = TrainState::new(net);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let before = state.net.params()[0];
        adam_step(&mut state, &[1.0, 0.0, 0.0], &cfg).unwrap();
        let delta = state.net.params()[0] - before;
        assert!((delta + 1e-2).abs() < 1e-9, "delta {delta}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let (dict, _, _) = small_setup(8);
        let net = init_network(Arch::ThadmmNet, 2, &dict).unwrap();
        let before = net.params().to_vec();
        let mut state = TrainState::new(net);
        let cfg = TrainConfig::default();
        adam_step(&mut state, &vec![0.0; before.len()], &cfg).unwrap();
        assert_eq!(state.net.params(), before.as_slice());
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let (dict, _, _) = small_setup(8);
        let net = init_network(Arch::ThadmmNet, 1, &dict).unwrap();
        let mut grads = vec![0.0; net.n_dof()];
        grads[3] = f64::NAN;
        let mut state = TrainState::new(net);
        match adam_step(&mut state, &grads, &TrainConfig::default()) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("layer0")),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn zero_learning_rate_trains_to_identical_parameters() {
        let (dict, train_set, val_set) = small_setup(64);
        let net = init_network(Arch::ThadmmNet, 3, &dict).unwrap();
        let before = net.params().to_vec();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 32,
            learning_rate: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        let state = train(net, &dict, &train_set, &val_set, &cfg, |_| {}).unwrap();
        assert_eq!(state.net.params(), before.as_slice());
        assert_eq!(state.history.len(), 2);
        // Flat loss curve.
        assert_eq!(
            state.history[0].val_nmse_db,
            state.history[1].val_nmse_db
        );
    }

    #[test]
    fn training_is_reproducible() {
        let (dict, train_set, val_set) = small_setup(64);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let net = init_network(Arch::Thlista, 2, &dict).unwrap();
            train(net, &dict, &train_set, &val_set, &cfg, |_| {}).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.net.params(), b.net.params());
        for (x, y) in a.history.iter().zip(b.history.iter()) {
            assert_eq!(x.train_nmse_db.to_bits(), y.train_nmse_db.to_bits());
            assert_eq!(x.val_nmse_db.to_bits(), y.val_nmse_db.to_bits());
        }
    }

    #[test]
    fn overfits_a_tiny_dataset() {
        let (dict, train_set, _) = small_setup(4);
        let tiny = Dataset {
            m: train_set.m,
            n: train_set.n,
            flags: 0,
            samples: train_set.samples[..1].to_vec(),
        };
        let net = init_network(Arch::ThadmmNet, 3, &dict).unwrap();
        let initial = evaluate_nmse(&net, &dict, &tiny).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 1,
            learning_rate: 1e-2,
            seed: 2,
            ..TrainConfig::default()
        };
        let state = train(net, &dict, &tiny, &tiny, &cfg, |_| {}).unwrap();
        let trained = evaluate_nmse(&state.net, &dict, &tiny).unwrap();
        assert!(
            trained < initial,
            "training NMSE did not improve: {initial} -> {trained}"
        );
    }

    #[test]
    fn psd_margin_is_tracked_when_enabled() {
        let (dict, train_set, val_set) = small_setup(32);
        let net = init_network(Arch::ThadmmNet, 2, &dict).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 16,
            learning_rate: 1e-3,
            assert_psd: true,
            seed: 3,
            ..TrainConfig::default()
        };
        let state = train(net, &dict, &train_set, &val_set, &cfg, |_| {}).unwrap();
        let checks = state.psd_checks.expect("psd checks enabled");
        assert_eq!(checks.steps_checked, 2);
        assert!(checks.min_margin > 0.0);
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let (dict, train_set, val_set) = small_setup(32);
        for arch in Arch::all() {
            let net = init_network(arch, 2, &dict).unwrap();
            let cfg = TrainConfig {
                epochs: 1,
                batch_size: 16,
                learning_rate: 1e-3,
                seed: 7,
                ..TrainConfig::default()
            };
            let state = train(net, &dict, &train_set, &val_set, &cfg, |_| {}).unwrap();
            let path = std::env::temp_dir().join(format!("doa_unfold_ckpt_{}.json", arch.as_str()));
            save_checkpoint(&state, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back.net.arch, arch);
            assert_eq!(back.net.params(), state.net.params());
            assert_eq!(back.adam_m, state.adam_m);
            assert_eq!(back.adam_v, state.adam_v);
            assert_eq!(back.step, state.step);
            std::fs::remove_file(&path).ok();
        }
    }

    #[test]
    fn checkpoint_arch_mismatch_is_an_error() {
        let (dict, _, _) = small_setup(8);
        let net = init_network(Arch::Tlista, 1, &dict).unwrap();
        let state = TrainState::new(net);
        let path = std::env::temp_dir().join("doa_unfold_ckpt_mismatch.json");
        save_checkpoint(&state, &path).unwrap();
        match load_checkpoint_expect(&path, Arch::ThadmmNet) {
            Err(Error::Mismatch(_)) => {}
            other => panic!("expected mismatch, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_checkpoint_is_a_parse_error() {
        let (dict, _, _) = small_setup(8);
        let net = init_network(Arch::ThadmmNet, 1, &dict).unwrap();
        let state = TrainState::new(net);
        let path = std::env::temp_dir().join("doa_unfold_ckpt_trunc.json");
        save_checkpoint(&state, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Format(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }
}
