//! `oodann`: ground truth, index builds, search sweeps and shift
//! diagnostics driven by a `key = value` experiment config.

mod commands;
mod config;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use oodann::data::DatasetFormat;
use oodann::par::with_threads;
use oodann::synth::SynthConfig;
use oodann::Metric;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "oodann", version, about = "Out-of-distribution aware ANN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert an fvecs/ibin/fbin file to fbin.
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Input format; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<DatasetFormat>,
    },
    /// Generate a synthetic workload and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// `default` (10K base) or `strong` (50K base, far shifted queries).
        #[arg(long, default_value = "default")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        base_count: Option<usize>,
        #[arg(long)]
        query_count: Option<usize>,
        #[arg(long)]
        sample_count: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        metric: Option<Metric>,
    },
    /// Exact top-k of every query by brute force.
    Groundtruth(ConfigArgs),
    /// Build the graph plus optional codebook and sector layout.
    Build(ConfigArgs),
    /// Sweep search list sizes and write a recall / latency / IO curve.
    Search(ConfigArgs),
    /// Compare shift diagnostics of two evaluation sets.
    Diagnose(ConfigArgs),
    /// Print a CSV written by `search` or `diagnose`.
    Report { csv: PathBuf },
}

fn threads(cfg: &ExperimentConfig) -> usize {
    if cfg.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.threads
    }
}

fn with_config<T: Send>(
    args: &ConfigArgs,
    f: impl FnOnce(&ExperimentConfig) -> Result<T> + Send,
) -> Result<T> {
    let cfg = args.load()?;
    with_threads(threads(&cfg), || f(&cfg))
}

fn synth_config(preset: &str, seed: u64) -> Result<SynthConfig> {
    Ok(match preset {
        "default" => SynthConfig {
            seed,
            ..Default::default()
        },
        "strong" => SynthConfig::strong_ood(seed),
        other => anyhow::bail!("unknown preset {other:?}; expected default or strong"),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert {
            input,
            output,
            format,
        } => commands::cmd_convert(&input, &output, format),
        Command::Synth {
            out,
            preset,
            seed,
            base_count,
            query_count,
            sample_count,
            dim,
            metric,
        } => {
            let mut s = synth_config(&preset, seed)?;
            s.base_count = base_count.unwrap_or(s.base_count);
            s.query_count = query_count.unwrap_or(s.query_count);
            s.sample_count = sample_count.unwrap_or(s.sample_count);
            s.dim = dim.unwrap_or(s.dim);
            s.metric = metric.unwrap_or(s.metric);
            let path = commands::cmd_synth(&out, &s)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Groundtruth(args) => with_config(&args, |cfg| {
            let gt = commands::cmd_groundtruth(cfg)?;
            eprintln!("ground truth for {} queries, k = {}", gt.query_count(), gt.k());
            Ok(())
        }),
        Command::Build(args) => with_config(&args, |cfg| {
            let m = commands::cmd_build(cfg)?;
            for (k, v) in &m.entries {
                println!("{k}={v}");
            }
            Ok(())
        }),
        Command::Search(args) => with_config(&args, |cfg| {
            let points = commands::cmd_search(cfg)?;
            print!("{}", report::format_curve(&points));
            Ok(())
        }),
        Command::Diagnose(args) => with_config(&args, |cfg| {
            let rows = commands::cmd_diagnose(cfg)?;
            print!("{}", report::format_diagnostics(&rows));
            Ok(())
        }),
        Command::Report { csv } => {
            print!("{}", commands::cmd_report(&csv)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
