//! `afu`: run the AFU experiments and sample activation curves.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use afu_core::afu::{sample_curve, Afu};
use afu_core::config::{ExperimentConfig, ExperimentKind};
use afu_core::data::{gen_xor_toy, ToyConfig};
use afu_core::experiments::report::curve_to_csv;
use afu_core::experiments::{run_mnist, run_toy, smoothness_analysis, EpochRecord, RunReport};
use afu_core::ActivationSpec;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "afu",
    version,
    about = "Learnable activation function experiments"
)]
struct Cli {
    /// Experiment config file (TOML). Defaults to the built-in config of the
    /// chosen experiment.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for data, initialisation and shuffling; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Directory for every emitted file; overrides the config.
    #[arg(long, global = true, value_name = "PATH")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the XOR toy dataset as CSV (x0,x1,label).
    GenData,
    /// Train the 2-4-1 toy network and emit its score field, boundary, AFU
    /// curves, neuron maps and report.
    TrainToy,
    /// Train the dense MNIST network and emit losses, accuracies and AFU curves.
    TrainMnist {
        /// Directory holding the uncompressed IDX files. Falls back to the
        /// config, then to $AFU_MNIST_DIR.
        #[arg(long, value_name = "PATH")]
        mnist_dir: Option<PathBuf>,
    },
    /// Compare score fields of a random deep network with ReLU and with an AFU.
    Smoothness {
        /// AFU parameter file. Defaults to the toy run's AFU in the output
        /// directory.
        #[arg(long, value_name = "PATH", conflicts_with = "random_afu")]
        afu: Option<PathBuf>,
        /// Use a freshly initialised AFU instead of a trained one.
        #[arg(long)]
        random_afu: bool,
    },
    /// Sample a saved AFU as z,g CSV.
    SampleAfu {
        /// AFU parameter file.
        #[arg(long, value_name = "PATH")]
        afu: PathBuf,
        #[command(flatten)]
        curve: CurveArgs,
    },
    /// Sample a canonical activation as z,g CSV.
    SampleActivation {
        /// One of linear, relu, leaky_relu, sigmoid, tanh, swish, mish.
        #[arg(long)]
        name: String,
        #[command(flatten)]
        curve: CurveArgs,
    },
}

#[derive(Args, Debug)]
struct CurveArgs {
    /// Sampling interval.
    #[arg(
        long,
        num_args = 2,
        value_names = ["MIN", "MAX"],
        allow_negative_numbers = true,
        default_values_t = [-5.0, 5.0]
    )]
    range: Vec<f64>,
    /// Number of evenly spaced samples, endpoints included.
    #[arg(long, default_value_t = 201)]
    points: usize,
}

fn load_config(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_for(kind),
    };
    if cfg.experiment != kind {
        bail!(
            "config describes a {} experiment, this command runs {}",
            cfg.experiment.name(),
            kind.name()
        );
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn print_epoch(r: &EpochRecord) {
    let test = r
        .test_accuracy
        .map(|t| format!(" test_acc {t:.4}"))
        .unwrap_or_default();
    eprintln!(
        "epoch {:>3}  loss {:.6}  train_acc {:.4}{test}",
        r.epoch, r.train_loss, r.train_accuracy
    );
}

fn summarise(report: &RunReport) {
    println!("{}", report.experiment);
    if let Some(a) = report.final_train_accuracy {
        println!("  train accuracy  {a:.4}");
    }
    if let Some(a) = report.final_test_accuracy {
        println!("  test accuracy   {a:.4}");
    }
    for (k, v) in &report.metrics {
        if !k.starts_with("dead_fraction") {
            println!("  {k:<22}{v}");
        }
    }
    println!(
        "  wrote {} files to {}",
        report.files.len(),
        report.out_dir.display()
    );
    println!("  ({:.1} s)", report.wall_clock.as_secs_f64());
}

/// Write to `<out-dir>/<file>` when an output directory was given, else stdout.
fn write_curve(cli: &Cli, file: &str, points: &[(f64, f64)]) -> Result<()> {
    let csv = curve_to_csv(points);
    match &cli.out_dir {
        Some(dir) => write_file(dir, file, &csv),
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
            Ok(())
        }
    }
}

fn write_file(dir: &Path, file: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(file);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData => {
            let cfg = load_config(cli, ExperimentKind::Toy)?;
            let data = gen_xor_toy(&ToyConfig {
                n_per_cluster: cfg.toy.n_per_cluster,
                sigma: cfg.toy.sigma,
                seed: cfg.seed,
            })?;
            write_file(
                &cfg.out_dir,
                &format!("{}data.csv", cfg.file_prefix()),
                &data.to_csv(),
            )?;
        }
        Command::TrainToy => {
            let cfg = load_config(cli, ExperimentKind::Toy)?;
            summarise(&run_toy(&cfg, |_| {})?);
        }
        Command::TrainMnist { mnist_dir } => {
            let mut cfg = load_config(cli, ExperimentKind::Mnist)?;
            if let Some(d) = mnist_dir {
                cfg.mnist.data_dir = Some(d.clone());
            }
            summarise(&run_mnist(&cfg, print_epoch)?);
        }
        Command::Smoothness { afu, random_afu } => {
            let mut cfg = load_config(cli, ExperimentKind::Smoothness)?;
            if let Some(p) = afu {
                cfg.smoothness.afu_file = Some(p.clone());
                cfg.smoothness.random_afu = false;
            }
            if *random_afu {
                cfg.smoothness.random_afu = true;
            }
            summarise(&smoothness_analysis(&cfg)?);
        }
        Command::SampleAfu { afu, curve } => {
            let unit = Afu::load(afu)?;
            let points = unit.sample(curve.range[0], curve.range[1], curve.points)?;
            let stem = afu
                .file_stem()
                .map_or("afu".into(), |s| s.to_string_lossy().into_owned());
            write_curve(cli, &format!("{stem}_curve.csv"), &points)?;
        }
        Command::SampleActivation { name, curve } => {
            let spec: ActivationSpec = name.parse()?;
            let points = sample_curve(
                |z| afu_core::activations::act_forward(spec, z),
                curve.range[0],
                curve.range[1],
                curve.points,
            )?;
            write_curve(cli, &format!("activation_{}.csv", spec.name()), &points)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
