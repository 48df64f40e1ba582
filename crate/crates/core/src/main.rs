use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pnp_ista::experiment::{self, ExperimentConfig, EXIT_OK, EXIT_USAGE};

/// PnP-ISTA with a non-local means denoiser, and stability analysis of the
/// resulting affine iteration.
#[derive(Parser)]
#[command(name = "pnp-ista", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degrade the input, restore it, write trace.csv, output.pgm and meta.txt.
    Run(Common),
    /// One run per --gamma on a shared instance, plus a combined CSV and plot.
    Sweep(Common),
    /// Assumption check, Gershgorin disks, spectrum and certified step size.
    Analyze(Common),
    /// Fixed against iteration-adaptive NLM weights.
    AdaptiveCompare(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config; the 64x64 inpainting preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Step size; repeat for sweeps.
    #[arg(long = "gamma")]
    gamma: Vec<f64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mask seed; the noise seed becomes N+1.
    #[arg(long)]
    seed: Option<u64>,
    /// Downscale to NxN before the dense analysis.
    #[arg(long)]
    analysis_size: Option<usize>,
}

impl Common {
    fn config(&self) -> pnp_ista::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::inpainting_preset(),
        };
        if let Some(s) = self.seed {
            cfg.reseed(s);
        }
        if let Some(n) = self.analysis_size {
            cfg.analysis_size = Some(n);
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        Ok(cfg)
    }

    fn single_gamma(&self, cfg: &mut ExperimentConfig) -> pnp_ista::Result<()> {
        match self.gamma.as_slice() {
            [] => Ok(()),
            [g] => {
                cfg.run.gamma = *g;
                Ok(())
            }
            _ => Err(pnp_ista::Error::InvalidArgument(
                "--gamma may be given once here; use `sweep` for several".into(),
            )),
        }
    }
}

fn dispatch(command: Command) -> pnp_ista::Result<i32> {
    match command {
        Command::Run(c) => {
            let mut cfg = c.config()?;
            c.single_gamma(&mut cfg)?;
            let out = experiment::cmd_run(&cfg, &cfg.output)?;
            println!(
                "{}: {} after {} iterations, final residual {:e}",
                out.dir.display(),
                out.trace.termination,
                out.trace.records.len(),
                out.trace.last_residual().unwrap_or(f64::NAN)
            );
            Ok(experiment::run_exit_code(&out.trace))
        }
        Command::Sweep(c) => {
            let cfg = c.config()?;
            let gammas = if c.gamma.is_empty() {
                vec![cfg.run.gamma]
            } else {
                c.gamma.clone()
            };
            let out = experiment::cmd_sweep(&cfg, &gammas, &cfg.output)?;
            for (g, r) in out.gammas.iter().zip(&out.runs) {
                println!(
                    "gamma = {g}: {} after {} iterations",
                    r.trace.termination,
                    r.trace.records.len()
                );
            }
            Ok(EXIT_OK)
        }
        Command::Analyze(c) => {
            let mut cfg = c.config()?;
            c.single_gamma(&mut cfg)?;
            let out = experiment::cmd_analyze(&cfg, cfg.run.gamma, &cfg.output)?;
            print!("{}", out.report.to_text());
            Ok(out.exit_code())
        }
        Command::AdaptiveCompare(c) => {
            let mut cfg = c.config()?;
            c.single_gamma(&mut cfg)?;
            let out = experiment::cmd_adaptive_compare(&cfg, &cfg.output)?;
            for (name, r) in [("fixed", &out.fixed), ("adaptive", &out.adaptive)] {
                println!(
                    "{name}: {} after {} iterations",
                    r.trace.termination,
                    r.trace.records.len()
                );
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}
