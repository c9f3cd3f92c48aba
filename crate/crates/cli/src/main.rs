//! Command-line harness: gen-data | train | eval | infer | check-grad.

mod commands;
mod config;

use config::RunConfig;
use doa_unfold::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "\
usage: doa-unfold <command> [options]

commands:
  gen-data     generate train/val/test dataset files
  train        train the configured architecture
  eval         evaluate baselines and checkpoints on the test set
  infer        run one checkpoint on one test sample
  check-grad   finite-difference check of the gradient engine

options:
  --profile {paper|desk}   base configuration (default: desk)
  --config PATH            key-value overrides applied on top of the profile
  --seed U64               override every seed from one master seed
  --out DIR                working directory for datasets and results
                           (default: ./runs/<experiment-name>)
  --print-config           dump the effective configuration and exit

eval options:
  --methods LIST           comma list of oracle,zero,ista,admm
  --ckpt PATH              checkpoint to evaluate (repeatable)

infer options:
  --ckpt PATH              checkpoint to run
  --index I                test-sample index (default 0)

check-grad options:
  --step H                 finite-difference step (default 1e-5)
  --tol T                  relative tolerance (default 1e-4)
";

struct Cli {
    command: String,
    profile: String,
    config_path: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    print_config: bool,
    methods: Vec<String>,
    checkpoints: Vec<PathBuf>,
    index: usize,
    step: f64,
    tol: f64,
}

fn parse_args(argv: &[String]) -> Result<Cli> {
    if argv.is_empty() {
        return Err(Error::InvalidArgument("missing command".into()));
    }
    let mut cli = Cli {
        command: argv[0].clone(),
        profile: "desk".into(),
        config_path: None,
        seed: None,
        out: None,
        print_config: false,
        methods: Vec::new(),
        checkpoints: Vec::new(),
        index: 0,
        step: 1e-5,
        tol: 1e-4,
    };
    let mut it = argv[1..].iter();
    while let Some(flag) = it.next() {
        let mut take = || {
            it.next()
                .ok_or_else(|| Error::InvalidArgument(format!("{flag} needs a value")))
        };
        match flag.as_str() {
            "--profile" => cli.profile = take()?.clone(),
            "--config" => cli.config_path = Some(PathBuf::from(take()?)),
            "--seed" => {
                cli.seed = Some(take()?.parse().map_err(|_| {
                    Error::InvalidArgument("--seed expects an unsigned integer".into())
                })?)
            }
            "--out" => cli.out = Some(PathBuf::from(take()?)),
            "--print-config" => cli.print_config = true,
            "--methods" => {
                cli.methods = take()?
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "--ckpt" => cli.checkpoints.push(PathBuf::from(take()?)),
            "--index" => {
                cli.index = take()?.parse().map_err(|_| {
                    Error::InvalidArgument("--index expects an unsigned integer".into())
                })?
            }
            "--step" => {
                cli.step = take()?.parse().map_err(|_| {
                    Error::InvalidArgument("--step expects a number".into())
                })?
            }
            "--tol" => {
                cli.tol = take()?.parse().map_err(|_| {
                    Error::InvalidArgument("--tol expects a number".into())
                })?
            }
            other => {
                return Err(Error::InvalidArgument(format!("unknown flag '{other}'")));
            }
        }
    }
    Ok(cli)
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::profile(&cli.profile)?;
    if let Some(path) = &cli.config_path {
        let text = std::fs::read_to_string(path)?;
        config::apply_config_text(&mut cfg, &text)?;
    }
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    cfg.validate()?;
    if cli.print_config {
        print!("{}", config::serialize_config(&cfg));
        return Ok(());
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.experiment_name));

    match cli.command.as_str() {
        "gen-data" => commands::cmd_gen_data(&cfg, &out),
        "train" => commands::cmd_train(&cfg, &out),
        "eval" => commands::cmd_eval(&cfg, &out, &cli.checkpoints, &cli.methods),
        "infer" => {
            let ckpt = cli.checkpoints.first().ok_or_else(|| {
                Error::InvalidArgument("infer requires --ckpt PATH".into())
            })?;
            commands::cmd_infer(&cfg, &out, ckpt, cli.index)
        }
        "check-grad" => commands::cmd_check_grad(cli.step, cli.tol),
        other => Err(Error::InvalidArgument(format!(
            "unknown command '{other}'"
        ))),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if argv.is_empty() || argv[0] == "--help" || argv[0] == "-h" || argv[0] == "help" {
        print!("{USAGE}");
        return ExitCode::SUCCESS;
    }
    match parse_args(&argv).and_then(|cli| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
