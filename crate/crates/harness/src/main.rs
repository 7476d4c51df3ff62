use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use seqcopy_harness::config::ExperimentConfig;
use seqcopy_harness::experiment::run_experiment;
use seqcopy_harness::report::{emit, ReportFormat};
use seqcopy_harness::Result;

#[derive(Parser)]
#[command(
    name = "seqcopy-harness",
    version,
    about = "Seeded copying experiments: runs, sweeps, and reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for repetitions (default: one per core).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (default: config, then $SEQCOPY_OUT, then ./results).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment with one parameter replaced by a value grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Parameter to sweep; `delta` is supported.
        #[arg(long)]
        param: String,
        /// Grid values, comma-separated or repeated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render plot-data CSVs and a table from a finished experiment.
    Report {
        /// Directory holding report.json.
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Table)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Table,
}

fn execute(
    config: PathBuf,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    deltas: Option<Vec<f64>>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(deltas) = deltas {
        cfg.run.deltas = deltas;
        cfg.validate()?;
    }
    let out_dir = cfg.resolve_out_dir(out);
    let report = run_experiment(&cfg, &out_dir, workers)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let runs: usize = report.cells.iter().map(|c| c.successes).sum();
    let failed: usize = report.cells.iter().map(|c| c.failures).sum();
    println!(
        "{}: {} cells, {} runs ok, {} failed -> {}",
        report.dataset,
        report.cells.len(),
        runs,
        failed,
        out_dir.display()
    );
    Ok(())
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => execute(config, seed, workers, out, None),
        Command::Sweep {
            config,
            param,
            values,
            seed,
            workers,
            out,
        } => {
            if param != "delta" {
                return Err(seqcopy_harness::Error::Config(format!(
                    "unsupported sweep parameter \"{param}\"; supported: delta"
                )));
            }
            if values.is_empty() {
                return Err(seqcopy_harness::Error::Config(
                    "sweep needs at least one value".into(),
                ));
            }
            execute(config, seed, workers, out, Some(values))
        }
        Command::Report { in_dir, format } => {
            let rendered = emit(
                &in_dir,
                match format {
                    FormatArg::Csv => ReportFormat::Csv,
                    FormatArg::Table => ReportFormat::Table,
                },
            )?;
            match format {
                FormatArg::Csv => {
                    for path in &rendered.plot_files {
                        println!("{}", path.display());
                    }
                }
                FormatArg::Table => print!("{}", rendered.table),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
