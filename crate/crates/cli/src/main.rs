use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use peb_pinn::harness::{self, RunConfig, SweepSpec};
use peb_pinn::Result;

/// Physics-informed networks for the post-exposure-bake disk heat problem.
#[derive(Parser)]
#[command(name = "peb-pinn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and export its artifacts.
    Train(RunArgs),
    /// Train every (backbone, learning rate) pair of a sweep spec.
    Sweep(RunArgs),
    /// Evaluate a checkpoint against the exact solution.
    Eval(CheckpointArgs),
    /// Export the exact field and the radial finite-volume oracle.
    Reference(RunArgs),
    /// Local indicators, alignment checks, smoothed maps and operator bounds of a checkpoint.
    Diagnose(CheckpointArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Initialisation seed; the sampling seed becomes `seed + 1`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for sequential deterministic mode.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CheckpointArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, String, PathBuf)> {
        let (mut cfg, text) = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.train.init_seed = s;
            cfg.train.sample_seed = s.wrapping_add(1);
        }
        if let Some(t) = self.threads {
            cfg.train.threads = t;
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
        Ok((cfg, text, out))
    }
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let (cfg, text, out) = a.load()?;
            let art = harness::cmd_train(&cfg, &text, &out)?;
            report(&art.files);
            eprintln!("rmse_u {:e}", art.metrics.rmse_u);
        }
        Command::Sweep(a) => {
            let (mut spec, text) = SweepSpec::load(&a.config)?;
            if let Some(s) = a.seed {
                spec.init_seed = s;
                spec.sample_seed = s.wrapping_add(1);
            }
            if let Some(t) = a.threads {
                spec.threads = t;
            }
            spec.validate()?;
            let out = a.out.unwrap_or_else(|| Path::new("sweep").to_path_buf());
            let (rows, files) = harness::cmd_sweep(&spec, &text, &out)?;
            report(&files);
            for r in rows.iter().filter_map(|r| r.failure.as_ref().map(|f| (r, f))) {
                eprintln!("{} lr {:e} FAILED: {}", r.0.backbone.tag(), r.0.lr, r.1);
            }
        }
        Command::Eval(a) => {
            let (cfg, _, out) = a.run.load()?;
            let (m, files) = harness::cmd_eval(&cfg, &a.checkpoint, &out)?;
            report(&files);
            eprintln!("rmse_u {:e}", m.rmse_u);
        }
        Command::Reference(a) => {
            let (cfg, _, out) = a.load()?;
            report(&harness::cmd_reference(&cfg, &out)?);
        }
        Command::Diagnose(a) => {
            let (cfg, _, out) = a.run.load()?;
            let (d, files) = harness::cmd_diagnose(&cfg, &a.checkpoint, &out)?;
            report(&files);
            let rho = d.two_sided.spearman.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
            eprintln!("spearman {rho} passed {}", d.two_sided.passed);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}

