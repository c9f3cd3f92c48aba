//! Subcommand implementations: data generation, training, evaluation,
//! inference, and the gradient check.

use crate::config::RunConfig;
use doa_unfold::array::{build_dictionary, subsample_positions, Dictionary, FrequencyGrid};
use doa_unfold::datagen::{
    generate_dataset, generate_in_memory, read_dataset, Dataset, DatasetSpec, SnrPolicy,
};
use doa_unfold::grad::finite_diff_check;
use doa_unfold::linalg::C64;
use doa_unfold::metrics::{
    evaluate_sweep, AdmmEstimator, Estimator, IstaEstimator, NetworkEstimator,
    OracleEstimator, ZeroEstimator,
};
use doa_unfold::nets::{init_network, param_count, Arch};
use doa_unfold::train::{
    load_checkpoint, nmse_loss, save_checkpoint, train, write_history_csv, TrainConfig,
};
use doa_unfold::{Error, Result};
use std::path::{Path, PathBuf};

pub fn dictionary_for(cfg: &RunConfig) -> Result<Dictionary> {
    let layout = subsample_positions(
        cfg.array_full_aperture,
        cfg.array_m,
        cfg.array_gamma,
        cfg.array_seed,
    )?;
    let grid = FrequencyGrid::uniform(cfg.grid_n, cfg.array_gamma)?;
    Ok(build_dictionary(&layout, &grid))
}

fn train_spec(cfg: &RunConfig) -> DatasetSpec {
    DatasetSpec {
        count: cfg.data_train_count,
        snr: SnrPolicy::Fixed(cfg.data_train_snr_db),
        min_sep: cfg.data_min_sep_train,
        k_min: cfg.data_k_min,
        k_max: cfg.data_k_max,
        seed: cfg.data_train_seed,
        noise_per_component: cfg.data_noise_per_component,
    }
}

fn val_spec(cfg: &RunConfig) -> DatasetSpec {
    DatasetSpec {
        count: cfg.data_val_count,
        seed: cfg.data_val_seed,
        ..train_spec(cfg)
    }
}

fn test_spec(cfg: &RunConfig) -> DatasetSpec {
    DatasetSpec {
        count: cfg.data_test_snr_levels * cfg.data_test_per_snr,
        snr: SnrPolicy::Sweep {
            start_db: cfg.data_test_snr_start,
            step_db: cfg.data_test_snr_step,
            levels: cfg.data_test_snr_levels,
            per_level: cfg.data_test_per_snr,
        },
        min_sep: cfg.data_min_sep_test,
        k_min: cfg.data_k_min,
        k_max: cfg.data_k_max,
        seed: cfg.data_test_seed,
        noise_per_component: cfg.data_noise_per_component,
    }
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let dict = dictionary_for(cfg)?;
    for (name, spec) in [
        ("train", train_spec(cfg)),
        ("val", val_spec(cfg)),
        ("test", test_spec(cfg)),
    ] {
        let path = out.join(format!("{name}.thdn"));
        let ds = generate_dataset(dict.layout(), dict.grid(), &spec, &path)?;
        let snr_desc = match &spec.snr {
            SnrPolicy::Fixed(db) => format!("fixed {db} dB"),
            SnrPolicy::Sweep {
                start_db,
                step_db,
                levels,
                per_level,
            } => format!("{levels} levels from {start_db} dB step {step_db} dB, {per_level} each"),
        };
        println!(
            "wrote {}: {} samples, M={}, N={}, snr: {}, min_sep: {}",
            path.display(),
            ds.len(),
            ds.m,
            ds.n,
            snr_desc,
            spec.min_sep
        );
    }
    Ok(())
}

fn load_required(out: &Path, name: &str) -> Result<Dataset> {
    let path = out.join(format!("{name}.thdn"));
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "{} not found; run gen-data first",
            path.display()
        )));
    }
    read_dataset(&path)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let dict = dictionary_for(cfg)?;
    let arch = cfg.arch()?;
    let train_set = load_required(out, "train")?;
    let val_set = load_required(out, "val")?;
    let net = init_network(arch, cfg.train_depth, &dict)?;
    println!(
        "training {} with {} layers: {} parameters ({} raw dof)",
        arch.as_str(),
        cfg.train_depth,
        param_count(arch, cfg.train_depth, dict.m(), dict.n()),
        net.n_dof()
    );
    let tc = TrainConfig {
        epochs: cfg.train_epochs,
        batch_size: cfg.train_batch_size,
        learning_rate: cfg.train_learning_rate,
        beta1: cfg.train_beta1,
        beta2: cfg.train_beta2,
        epsilon: cfg.train_epsilon,
        seed: cfg.train_seed,
        checkpoint_every: cfg.train_checkpoint_every,
        checkpoint_dir: Some(out.to_path_buf()),
        clip_grad: (cfg.train_clip_grad > 0.0).then_some(cfg.train_clip_grad),
        stop_gradient_eta: cfg.train_stop_gradient_eta,
        assert_psd: cfg.train_assert_psd,
    };
    let state = train(net, &dict, &train_set, &val_set, &tc, |s| {
        println!(
            "epoch {:3}: train {:.3} dB, val {:.3} dB ({:.1}s)",
            s.epoch, s.train_nmse_db, s.val_nmse_db, s.wall_seconds
        );
    })?;
    let tag = arch_tag(arch);
    let ckpt = out.join(format!("{tag}_checkpoint.json"));
    save_checkpoint(&state, &ckpt)?;
    let losses = out.join(format!("{tag}_loss.csv"));
    write_history_csv(&state.history, &losses)?;
    println!("wrote {} and {}", ckpt.display(), losses.display());
    Ok(())
}

pub fn arch_tag(arch: Arch) -> String {
    arch.as_str().to_ascii_lowercase().replace('-', "_")
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path, checkpoints: &[PathBuf], methods: &[String]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let dict = dictionary_for(cfg)?;
    let test_set = load_required(out, "test")?;
    let convention = cfg.threshold_convention()?;

    let mut estimators: Vec<Box<dyn Estimator>> = Vec::new();
    for m in methods {
        match m.as_str() {
            "oracle" => estimators.push(Box::new(OracleEstimator)),
            "zero" => estimators.push(Box::new(ZeroEstimator)),
            "ista" => estimators.push(Box::new(IstaEstimator::new(
                &dict,
                cfg.eval_tau,
                cfg.eval_ista_iters,
            )?)),
            "admm" => estimators.push(Box::new(AdmmEstimator::new(
                &dict,
                cfg.eval_rho,
                cfg.eval_tau,
                cfg.eval_admm_iters,
                convention,
            )?)),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown method '{other}' (expected oracle|zero|ista|admm)"
                )))
            }
        }
    }
    for path in checkpoints {
        let state = load_checkpoint(path)?;
        if state.net.m != dict.m() || state.net.n != dict.n() {
            return Err(Error::Mismatch(format!(
                "checkpoint {} is {}x{} but the config dictionary is {}x{}",
                path.display(),
                state.net.m,
                state.net.n,
                dict.m(),
                dict.n()
            )));
        }
        let name = format!(
            "{}-{}L",
            arch_tag(state.net.arch),
            state.net.t
        );
        estimators.push(Box::new(NetworkEstimator::new(name, &state.net, &dict)?));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to evaluate: pass --methods and/or --ckpt".into(),
        ));
    }

    let mut all = doa_unfold::metrics::MetricsReport::default();
    for est in &estimators {
        let report = evaluate_sweep(est.as_ref(), &test_set, dict.grid(), cfg.eval_delta1, cfg.eval_delta2)?;
        for row in &report.rows {
            println!(
                "{:>10} @ {:5.1} dB: Pd {:.3}, NMSE {:7.3} dB, RMSE {}",
                row.method,
                row.snr_db,
                row.detection_rate,
                row.nmse_db,
                row.rmse_deg
                    .map(|v| format!("{v:.4} deg"))
                    .unwrap_or_else(|| "n/a".into())
            );
        }
        all.rows.extend(report.rows);
    }
    let results = out.join("results.csv");
    let mut f = std::fs::File::create(&results)?;
    all.write_csv(&mut f)?;
    println!("wrote {}", results.display());

    if cfg.eval_spectra_count > 0 {
        dump_spectra(cfg, out, &dict, &test_set, &estimators)?;
    }
    Ok(())
}

/// Per-sample spectrum dumps: bin, freq, angle, truth magnitude, one column
/// per method.
fn dump_spectra(
    cfg: &RunConfig,
    out: &Path,
    dict: &Dictionary,
    test_set: &Dataset,
    estimators: &[Box<dyn Estimator>],
) -> Result<()> {
    use std::io::Write;
    let picks: Vec<(usize, &doa_unfold::datagen::Sample)> = test_set
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.snr_db == cfg.eval_spectra_snr_db)
        .take(cfg.eval_spectra_count)
        .collect();
    if picks.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no test samples at {} dB for spectra dumps",
            cfg.eval_spectra_snr_db
        )));
    }
    for (idx, sample) in picks {
        let estimates: Result<Vec<Vec<C64>>> =
            estimators.iter().map(|e| e.estimate(sample)).collect();
        let estimates = estimates?;
        let path = out.join(format!(
            "spectrum_sample{idx}_snr{}.csv",
            cfg.eval_spectra_snr_db
        ));
        let mut f = std::fs::File::create(&path)?;
        write!(f, "bin,freq,angle_deg,truth_mag")?;
        for e in estimators {
            write!(f, ",{}_mag", e.name())?;
        }
        writeln!(f)?;
        let grid = dict.grid();
        for bin in 0..test_set.n {
            let freq = grid.freqs()[bin];
            write!(
                f,
                "{},{},{},{}",
                bin,
                freq,
                grid.angle_deg(bin)?,
                sample.x[bin].norm()
            )?;
            for est in &estimates {
                write!(f, ",{}", est[bin].norm())?;
            }
            writeln!(f)?;
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_infer(cfg: &RunConfig, out: &Path, ckpt: &Path, index: usize) -> Result<()> {
    use std::io::Write;
    let dict = dictionary_for(cfg)?;
    let test_set = load_required(out, "test")?;
    if index >= test_set.len() {
        return Err(Error::InvalidArgument(format!(
            "sample index {index} out of range ({} samples)",
            test_set.len()
        )));
    }
    let state = load_checkpoint(ckpt)?;
    let est = NetworkEstimator::new(arch_tag(state.net.arch), &state.net, &dict)?;
    let sample = &test_set.samples[index];
    let x_hat = est.estimate(sample)?;
    let nmse = nmse_loss(&x_hat, &sample.x)?;
    println!(
        "sample {index} (snr {} dB, K={}): NMSE {:.4} dB",
        sample.snr_db,
        sample.k,
        doa_unfold::train::nmse_db(nmse)
    );
    let path = out.join(format!("infer_sample{index}.csv"));
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "bin,freq,angle_deg,truth_re,truth_im,estimate_re,estimate_im")?;
    let grid = dict.grid();
    for (bin, est) in x_hat.iter().enumerate() {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            bin,
            grid.freqs()[bin],
            grid.angle_deg(bin)?,
            sample.x[bin].re,
            sample.x[bin].im,
            est.re,
            est.im
        )?;
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// Finite-difference gradient check over all five architectures at a small
/// problem size. Returns an error when any checked sample exceeds the
/// tolerance.
pub fn cmd_check_grad(step: f64, tolerance: f64) -> Result<()> {
    use doa_unfold::grad::fd_test_network;

    let layout = subsample_positions(18, 6, 0.5, 7)?;
    let grid = FrequencyGrid::uniform(16, 0.5)?;
    let dict = build_dictionary(&layout, &grid);
    let spec = DatasetSpec {
        count: 24,
        snr: SnrPolicy::Fixed(15.0),
        min_sep: 1.0 / 6.0,
        k_min: 1,
        k_max: 3,
        seed: 77,
        noise_per_component: false,
    };
    let samples = generate_in_memory(dict.layout(), dict.grid(), &spec)?;

    let mut all_ok = true;
    for arch in Arch::all() {
        let net = fd_test_network(arch, 3, &dict, 40 + arch as u64)?;
        let mut checked = 0;
        let mut excluded = 0;
        let mut worst = 0.0f64;
        let mut worst_dof = String::new();
        let mut failures = 0usize;
        for sample in &samples.samples {
            if checked == 10 {
                break;
            }
            let report = finite_diff_check(&net, &dict, &sample.y, &sample.x, step, tolerance, false)?;
            if report.excluded {
                excluded += 1;
                continue;
            }
            checked += 1;
            if report.worst_rel > worst {
                worst = report.worst_rel;
                worst_dof = report.worst_dof.clone().unwrap_or_default();
            }
            failures += report.failures.len();
        }
        let status = if failures == 0 { "ok" } else { "FAIL" };
        println!(
            "{:>11}: {status} ({checked} samples checked, {excluded} excluded, worst rel {worst:.3e} at {worst_dof})",
            arch.as_str()
        );
        all_ok &= failures == 0;
    }
    if all_ok {
        Ok(())
    } else {
        Err(Error::NonFinite("gradient check failed".into()))
    }
}
