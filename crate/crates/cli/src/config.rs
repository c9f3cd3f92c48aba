//! Run configuration: plain-text key-value format with dotted sections,
//! plus the built-in "paper" and "desk" profiles.

use doa_unfold::nets::Arch;
use doa_unfold::solvers::ThresholdConvention;
use doa_unfold::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment_name: String,

    pub array_gamma: f64,
    pub array_full_aperture: u32,
    pub array_m: usize,
    pub array_seed: u64,

    pub grid_n: usize,

    pub data_train_count: usize,
    pub data_val_count: usize,
    pub data_test_per_snr: usize,
    pub data_train_snr_db: f64,
    pub data_test_snr_start: f64,
    pub data_test_snr_step: f64,
    pub data_test_snr_levels: usize,
    pub data_min_sep_train: f64,
    pub data_min_sep_test: f64,
    pub data_k_min: usize,
    pub data_k_max: usize,
    pub data_train_seed: u64,
    pub data_val_seed: u64,
    pub data_test_seed: u64,
    pub data_noise_per_component: bool,

    pub train_arch: String,
    pub train_depth: usize,
    pub train_epochs: usize,
    pub train_batch_size: usize,
    pub train_learning_rate: f64,
    pub train_beta1: f64,
    pub train_beta2: f64,
    pub train_epsilon: f64,
    pub train_seed: u64,
    pub train_checkpoint_every: usize,
    pub train_clip_grad: f64,
    pub train_stop_gradient_eta: bool,
    pub train_assert_psd: bool,

    pub eval_delta1: usize,
    pub eval_delta2: f64,
    pub eval_tau: f64,
    pub eval_rho: f64,
    pub eval_ista_iters: usize,
    pub eval_admm_iters: usize,
    pub eval_threshold_convention: String,
    pub eval_spectra_count: usize,
    pub eval_spectra_snr_db: f64,
}

impl RunConfig {
    /// Full-scale protocol: M = 20 from a 50-lattice aperture, N = 256 bins,
    /// 1e5 / 2e4 / 8e3 samples, 30 epochs.
    pub fn paper() -> RunConfig {
        let m = 20usize;
        RunConfig {
            experiment_name: "paper".into(),
            array_gamma: 0.5,
            array_full_aperture: 50,
            array_m: m,
            array_seed: 1,
            grid_n: 256,
            data_train_count: 100_000,
            data_val_count: 20_000,
            data_test_per_snr: 1000,
            data_train_snr_db: 15.0,
            data_test_snr_start: 0.0,
            data_test_snr_step: 5.0,
            data_test_snr_levels: 8,
            data_min_sep_train: 1.0 / m as f64,
            data_min_sep_test: 1.0 / (3.0 * m as f64),
            data_k_min: 1,
            data_k_max: 8,
            data_train_seed: 1001,
            data_val_seed: 1002,
            data_test_seed: 1003,
            data_noise_per_component: false,
            train_arch: "thadmm-net".into(),
            train_depth: 15,
            train_epochs: 30,
            train_batch_size: 2048,
            train_learning_rate: 1e-4,
            train_beta1: 0.9,
            train_beta2: 0.999,
            train_epsilon: 1e-8,
            train_seed: 1,
            train_checkpoint_every: 0,
            train_clip_grad: 0.0,
            train_stop_gradient_eta: false,
            train_assert_psd: false,
            eval_delta1: 2,
            eval_delta2: 0.4,
            eval_tau: 0.1,
            eval_rho: 1.0,
            eval_ista_iters: 100,
            eval_admm_iters: 50,
            eval_threshold_convention: "paper".into(),
            eval_spectra_count: 0,
            eval_spectra_snr_db: 15.0,
        }
    }

    /// Scaled-down protocol that runs on a desktop CPU: N = 128 bins,
    /// 2e4 / 4e3 / 8x800 samples, 20 epochs, otherwise paper hyperparameters.
    pub fn desk() -> RunConfig {
        RunConfig {
            experiment_name: "desk".into(),
            grid_n: 128,
            data_train_count: 20_000,
            data_val_count: 4_000,
            data_test_per_snr: 800,
            train_epochs: 20,
            ..RunConfig::paper()
        }
    }

    pub fn profile(name: &str) -> Result<RunConfig> {
        match name {
            "paper" => Ok(RunConfig::paper()),
            "desk" => Ok(RunConfig::desk()),
            other => Err(Error::InvalidArgument(format!(
                "unknown profile '{other}' (expected 'paper' or 'desk')"
            ))),
        }
    }

    pub fn arch(&self) -> Result<Arch> {
        Arch::parse(&self.train_arch)
    }

    pub fn threshold_convention(&self) -> Result<ThresholdConvention> {
        match self.eval_threshold_convention.as_str() {
            "paper" => Ok(ThresholdConvention::RhoTau),
            "standard" => Ok(ThresholdConvention::TauOverRho),
            other => Err(Error::InvalidArgument(format!(
                "unknown threshold convention '{other}'"
            ))),
        }
    }

    /// Override every seed from one master value.
    pub fn reseed(&mut self, seed: u64) {
        self.array_seed = seed;
        self.data_train_seed = seed.wrapping_mul(1000).wrapping_add(1);
        self.data_val_seed = seed.wrapping_mul(1000).wrapping_add(2);
        self.data_test_seed = seed.wrapping_mul(1000).wrapping_add(3);
        self.train_seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n == 0 || self.array_m == 0 || self.train_depth == 0 {
            return Err(Error::InvalidArgument(
                "grid.n, array.m, and train.depth must be positive".into(),
            ));
        }
        if !(self.array_gamma > 0.0 && self.array_gamma < 1.0) {
            return Err(Error::InvalidArgument("array.gamma must lie in (0, 1)".into()));
        }
        self.arch()?;
        self.threshold_convention()?;
        Ok(())
    }
}

macro_rules! config_keys {
    ($cfg:ident, $action:ident) => {
        $action!("experiment.name", experiment_name, string);
        $action!("array.gamma", array_gamma, f64);
        $action!("array.full_aperture", array_full_aperture, u32);
        $action!("array.m", array_m, usize);
        $action!("array.seed", array_seed, u64);
        $action!("grid.n", grid_n, usize);
        $action!("data.train_count", data_train_count, usize);
        $action!("data.val_count", data_val_count, usize);
        $action!("data.test_per_snr", data_test_per_snr, usize);
        $action!("data.train_snr_db", data_train_snr_db, f64);
        $action!("data.test_snr_start", data_test_snr_start, f64);
        $action!("data.test_snr_step", data_test_snr_step, f64);
        $action!("data.test_snr_levels", data_test_snr_levels, usize);
        $action!("data.min_sep_train", data_min_sep_train, f64);
        $action!("data.min_sep_test", data_min_sep_test, f64);
        $action!("data.k_min", data_k_min, usize);
        $action!("data.k_max", data_k_max, usize);
        $action!("data.train_seed", data_train_seed, u64);
        $action!("data.val_seed", data_val_seed, u64);
        $action!("data.test_seed", data_test_seed, u64);
        $action!("data.noise_per_component", data_noise_per_component, bool);
        $action!("train.arch", train_arch, string);
        $action!("train.depth", train_depth, usize);
        $action!("train.epochs", train_epochs, usize);
        $action!("train.batch_size", train_batch_size, usize);
        $action!("train.learning_rate", train_learning_rate, f64);
        $action!("train.beta1", train_beta1, f64);
        $action!("train.beta2", train_beta2, f64);
        $action!("train.epsilon", train_epsilon, f64);
        $action!("train.seed", train_seed, u64);
        $action!("train.checkpoint_every", train_checkpoint_every, usize);
        $action!("train.clip_grad", train_clip_grad, f64);
        $action!("train.stop_gradient_eta", train_stop_gradient_eta, bool);
        $action!("train.assert_psd", train_assert_psd, bool);
        $action!("eval.delta1", eval_delta1, usize);
        $action!("eval.delta2", eval_delta2, f64);
        $action!("eval.tau", eval_tau, f64);
        $action!("eval.rho", eval_rho, f64);
        $action!("eval.ista_iters", eval_ista_iters, usize);
        $action!("eval.admm_iters", eval_admm_iters, usize);
        $action!(
            "eval.threshold_convention",
            eval_threshold_convention,
            string
        );
        $action!("eval.spectra_count", eval_spectra_count, usize);
        $action!("eval.spectra_snr_db", eval_spectra_snr_db, f64);
    };
}

/// Apply `key = value` overrides from a config file onto `cfg`.
pub fn apply_config_text(cfg: &mut RunConfig, text: &str) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Format(format!(
                "config line {}: expected 'key = value', got '{raw}'",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        set_key(cfg, key, value).map_err(|e| {
            Error::Format(format!("config line {}: {e}", lineno + 1))
        })?;
    }
    Ok(())
}

fn set_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    macro_rules! setter {
        ($name:literal, $field:ident, string) => {
            if key == $name {
                cfg.$field = value.to_string();
                return Ok(());
            }
        };
        ($name:literal, $field:ident, bool) => {
            if key == $name {
                cfg.$field = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => {
                        return Err(Error::Format(format!(
                            "'{}' expects true/false, got '{value}'",
                            $name
                        )))
                    }
                };
                return Ok(());
            }
        };
        ($name:literal, $field:ident, $ty:ident) => {
            if key == $name {
                cfg.$field = value.parse::<$ty>().map_err(|_| {
                    Error::Format(format!("'{}' expects a {}, got '{value}'", $name, stringify!($ty)))
                })?;
                return Ok(());
            }
        };
    }
    config_keys!(cfg, setter);
    Err(Error::Format(format!("unknown config key '{key}'")))
}

/// Canonical serialization: every key, fixed order, shortest-roundtrip
/// numbers. `parse(serialize(c)) == c`.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    macro_rules! emitter {
        ($name:literal, $field:ident, string) => {
            out.push_str(&format!("{} = {}\n", $name, cfg.$field));
        };
        ($name:literal, $field:ident, $ty:ident) => {
            out.push_str(&format!("{} = {}\n", $name, cfg.$field));
        };
    }
    config_keys!(cfg, emitter);
    out
}
