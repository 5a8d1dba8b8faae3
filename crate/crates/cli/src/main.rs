//! `octonet` command-line tool: verification suites, parameter counts,
//! training and evaluation of hypercomplex residual networks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use octonet::harness::checkpoint;
use octonet::harness::cifar::{Variant, DATA_ENV};
use octonet::harness::verify::{gradcheck_config, gradcheck_suite};
use octonet::harness::{self, RunReport, SuiteReport};
use octonet::network::{GradcheckOptions, ScheduleKind};
use octonet::{Network, NetworkConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "octonet", version, about = "Hypercomplex residual networks: verification, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multiplication table, algebra identities and convolution equivalences.
    VerifyAlgebra {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random convolution instances to compare.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
    /// Weight initialization statistics.
    VerifyInit {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Whitening batch normalization properties and gradients.
    VerifyBn {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-layer and total parameter counts of a configuration.
    ParamCount {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Train a network and write a run report.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Directory for report.csv, summary.json, timing.csv and the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Checkpoint path (defaults to OUT/model.ckpt when --out is given).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on held-out data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference gradient check of the micro network.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = ["1", "2", "4", "8"], default_value = "8")]
        algebra: String,
        /// Check at most this many entries per parameter tensor.
        #[arg(long)]
        max_per_tensor: Option<usize>,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML file with NetworkConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["1", "2", "4", "8"])]
    algebra: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CIFAR batch directory or single batch file; the bundled synthetic set
    /// when absent.
    #[arg(long, env = DATA_ENV)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VariantArg::C10)]
    variant: VariantArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScheduleArg {
    Convex,
    Smooth,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    C10,
    C100,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::C10 => Variant::C10,
            VariantArg::C100 => Variant::C100,
        }
    }
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<NetworkConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                NetworkConfig::from_toml(&text)?
            }
            None => NetworkConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = &self.algebra {
            cfg.algebra_dim = a.parse()?;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
            // explicit segments are refit to the new length
            if let Some(seg) = &cfg.schedule {
                let fitted = octonet::network::Schedule::new(seg.clone())?.fit_to(e);
                cfg.schedule = Some(fitted.segments().to_vec());
            }
        }
        if let Some(s) = self.schedule {
            cfg.schedule_kind = match s {
                ScheduleArg::Convex => ScheduleKind::Convex,
                ScheduleArg::Smooth => ScheduleKind::Smooth,
            };
            cfg.schedule = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of a command that may fail its checks without erroring.
enum Outcome {
    Ok,
    ChecksFailed,
}

fn suite(report: SuiteReport) -> Outcome {
    println!("{report}");
    if report.passed() {
        Outcome::Ok
    } else {
        Outcome::ChecksFailed
    }
}

fn param_count(cfg: &NetworkConfig, json: bool) -> anyhow::Result<()> {
    let net = Network::<f64>::build(cfg)?;
    let layers = net.layer_info();
    let counts = net.param_counts();
    if json {
        let v = serde_json::json!({ "layers": layers, "counts": counts });
        println!("{}", serde_json::to_string_pretty(&v)?);
        return Ok(());
    }
    println!("{:<28} {:<12} {:>7} {:>7} {:>10} {:>8}", "layer", "kind", "in", "out", "params", "buffers");
    for l in &layers {
        println!(
            "{:<28} {:<12} {:>7} {:>7} {:>10} {:>8}",
            l.name,
            format!("{:?}", l.kind).to_lowercase(),
            l.channels.0,
            l.channels.1,
            l.params,
            l.buffers
        );
    }
    println!("algebra dimension: {}", cfg.algebra_dim);
    println!("trainable: {}", counts.trainable);
    println!("running statistics: {}", counts.buffers);
    println!("hypercomplex conv: {}", counts.hconv);
    println!("total: {}", counts.total);
    Ok(())
}

fn emit(report: &RunReport, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(dir) => {
            report.write_dir(dir)?;
            eprintln!("report written to {}", dir.display());
        }
        None => {
            print!("{}", report.to_csv()?);
            print!("{}", report.summary_json()?);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::VerifyAlgebra { seed, instances } => Ok(suite(harness::verify_algebra(seed, instances)?)),
        Command::VerifyInit { seed } => Ok(suite(harness::verify_init(seed)?)),
        Command::VerifyBn { seed } => Ok(suite(harness::verify_bn(seed)?)),
        Command::ParamCount { config, json } => {
            param_count(&config.resolve()?, json)?;
            Ok(Outcome::Ok)
        }
        Command::Train {
            config,
            data,
            out,
            checkpoint: ckpt,
        } => {
            let cfg = config.resolve()?;
            let mut splits = harness::load_splits(data.data.as_deref(), data.variant.into())?;
            splits.standardize()?;
            eprintln!(
                "training d={} on {} examples for {} epochs (config {})",
                cfg.algebra_dim,
                splits.train.len(),
                cfg.epochs,
                &cfg.config_hash()[..12]
            );
            let (mut net, report) = harness::train(&cfg, &splits, &mut |r| {
                let val = r.val_error.map(|v| format!(" val_error {v:.4}")).unwrap_or_default();
                eprintln!(
                    "epoch {:>3} lr {} loss {:.5} train_error {:.4}{val} ({:.1} s)",
                    r.epoch, r.lr, r.train_loss, r.train_error, r.wall_time_s
                );
            })?;
            emit(&report, out.as_deref())?;
            if let Some(path) = ckpt.or_else(|| out.as_ref().map(|d| d.join("model.ckpt"))) {
                checkpoint::save(&mut net, &path)?;
                eprintln!("checkpoint written to {}", path.display());
            }
            Ok(Outcome::Ok)
        }
        Command::Eval {
            checkpoint: ckpt,
            data,
            out,
        } => {
            let mut net = checkpoint::load::<f64>(&ckpt)?;
            let mut splits = harness::load_splits(data.data.as_deref(), data.variant.into())?;
            splits.standardize()?;
            let set = splits.held_out.as_ref().unwrap_or(&splits.train);
            let report = harness::eval(&mut net, set)?;
            emit(&report, out.as_deref())?;
            Ok(Outcome::Ok)
        }
        Command::Gradcheck {
            seed,
            algebra,
            max_per_tensor,
            tolerance,
        } => {
            let d: usize = algebra.parse()?;
            let cfg = NetworkConfig {
                seed,
                algebra_dim: d,
                ..gradcheck_config()
            };
            if cfg.stage_filters.iter().any(|f| f % d != 0) {
                bail!("stage widths must be divisible by {d}");
            }
            let opts = GradcheckOptions {
                max_per_tensor,
                tolerance,
                ..GradcheckOptions::default()
            };
            let report = gradcheck_suite(&cfg, &opts)?;
            for c in &report.classes {
                println!(
                    "{} {:?}: checked {}, skipped {}, max relative error {:.2e}",
                    if c.checked > 0 && c.max_rel_err <= report.tolerance { "PASS" } else { "FAIL" },
                    c.class,
                    c.checked,
                    c.skipped,
                    c.max_rel_err
                );
            }
            Ok(if report.passed() { Outcome::Ok } else { Outcome::ChecksFailed })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(EXIT_CHECK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
