use std::path::PathBuf;
use std::process::ExitCode;

use capinn_cli::{
    compare_dirs, dump_samples, run_experiment, run_landscape, CliError, ExperimentConfig,
    RunOptions, EXIT_DIVERGED,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "capinn",
    version,
    about = "Run and compare PINN optimizer experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Overrides {
    /// Comma-separated seeds replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output root replacing the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seeds concurrently on this many threads.
    #[arg(long)]
    threads: Option<usize>,
}

impl Overrides {
    fn options(self) -> RunOptions {
        RunOptions {
            seeds: self.seeds,
            out: self.out,
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed of a config and write metrics, checkpoints and a summary.
    Run {
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Tabulate mean errors of two finished experiments and the reduction from A to B.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train the first seed and project the full and data-only loss around it.
    Landscape {
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Write the sampled training and test points as CSV.
    DumpSamples {
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
}

fn dispatch(cmd: Cmd) -> Result<i32, CliError> {
    match cmd {
        Cmd::Run { config, o } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_experiment(&cfg, &o.options())?;
            let s = &out.summary;
            println!(
                "{} ({}, {} seeds) -> {}",
                s.experiment,
                s.optimizer,
                s.seeds.len(),
                out.dir.display()
            );
            for (c, name) in s.components.iter().enumerate() {
                if let (Some(m), Some(b)) = (s.mean_rel_l2.get(c), s.best_rel_l2.get(c)) {
                    println!("  rel_l2_{name}: mean {m:.3e}, best {b:.3e}");
                }
            }
            if s.violations.total() > 0 {
                eprintln!("warning: {} monitor violations", s.violations.total());
            }
            if s.diverged > 0 {
                for r in s.runs.iter().filter(|r| r.status == "diverged") {
                    if let Some((w, i, l)) = r.diverged_at {
                        eprintln!(
                            "seed {} diverged in window {w} at iteration {i} (loss {l:e})",
                            r.seed
                        );
                    }
                }
                return Ok(EXIT_DIVERGED);
            }
            Ok(0)
        }
        Cmd::Compare { dir_a, dir_b, csv } => {
            let c = compare_dirs(&dir_a, &dir_b)?;
            print!("{}", c.to_text());
            if let Some(path) = csv {
                std::fs::write(path, c.to_csv()?)?;
            }
            Ok(0)
        }
        Cmd::Landscape { config, o } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_landscape(&cfg, &o.options())?;
            println!(
                "log10 loss range: full {:.3}, data-only {:.3} -> {}",
                out.full.range(),
                out.data_only.range(),
                out.dir.display()
            );
            Ok(0)
        }
        Cmd::DumpSamples { config, o } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = dump_samples(&cfg, &o.options())?;
            println!("{}", dir.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
