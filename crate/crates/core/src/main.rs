use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fusedfno::bench::{self, ExperimentGrid};
use fusedfno::gpu_model::{layout_pattern, simulate, SwizzleLayout};
use fusedfno::pipeline::{run_layer, PipelineMode};
use fusedfno::rawio;
use fusedfno::spectral::LayerSetup;

#[derive(Parser)]
#[command(
    name = "fusedfno",
    version,
    about = "Pruned FFT, tiled CGEMM and fused spectral-layer experiments"
)]
struct Cli {
    /// JSON config: an experiment grid (verify, report) or a layer setup (fno-run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Pipeline mode: staged, fft_optimized, fused_fft_gemm, fused_gemm_ifft, fully_fused.
    #[arg(long, global = true)]
    mode: Option<PipelineMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every verification suite over the grid.
    Verify,
    /// Write the CSV report (and a JSON mirror) for the grid.
    Report,
    /// Print the pruned forward-FFT op budget against the full count.
    CountOps {
        n: usize,
        keep: usize,
        src_len: Option<usize>,
    },
    /// Simulate one shared-memory write phase of a layout.
    SimulateBanks {
        #[arg(long)]
        layout: SwizzleLayout,
        #[arg(long)]
        fft_size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        step: usize,
    },
    /// Run a single layer on raw complex f32 data.
    FnoRun {
        /// Input tensor; seeded random data when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Weights stored as [1, 1, output_dim, hidden_dim]; seeded random when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Write the traffic ledger as JSON here.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
}

fn load_grids(config: Option<&Path>) -> Result<Vec<ExperimentGrid>> {
    match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(bench::parse_grids(&text)?)
        }
        None => Ok(bench::default_grids()),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify => {
            let grids = match load_grids(cli.config.as_deref()) {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return Ok(ExitCode::from(bench::EXIT_CONFIG as u8));
                }
            };
            let summary = bench::cmd_verify(&grids, cli.seed);
            print!("{}", summary.render());
            if let Some(out) = &cli.out {
                fs::write(out, serde_json::to_string_pretty(&summary)? + "\n")?;
            }
            Ok(ExitCode::from(summary.exit_code() as u8))
        }
        Command::Report => {
            let grids = load_grids(cli.config.as_deref())?;
            let out = cli.out.unwrap_or_else(|| PathBuf::from("report.csv"));
            let rows = bench::cmd_report(&grids, cli.seed, &out)?;
            println!(
                "wrote {} rows to {} and {}",
                rows.len(),
                out.display(),
                bench::json_path(&out).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::CountOps { n, keep, src_len } => {
            let report = bench::count_ops(n, keep, src_len.unwrap_or(n))?;
            println!("{report}");
            Ok(ExitCode::SUCCESS)
        }
        Command::SimulateBanks { layout, fft_size, step } => {
            let size = fft_size.unwrap_or(layout.default_fft_size());
            let report = simulate(&layout_pattern(layout, size, step)?);
            println!("{}", serde_json::to_string_pretty(&report)?);
            println!("{}", report.strip());
            Ok(ExitCode::SUCCESS)
        }
        Command::FnoRun { input, weights, ledger } => {
            let Some(config) = cli.config else {
                bail!("fno-run needs --config <layer setup json>");
            };
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let setup: LayerSetup = serde_json::from_str(&text).context("parsing layer setup")?;
            let (mut x, mut w) = bench::random_operands(&setup.layer, cli.seed);
            if let Some(path) = input {
                x = rawio::read_tensor(&path)?;
            }
            if let Some(path) = weights {
                w = rawio::read_weights(&path)?;
            }
            let mode = cli.mode.unwrap_or(PipelineMode::FullyFused);
            let (y, l) = run_layer(&setup, mode, &x, &w)?;
            if let Some(out) = &cli.out {
                rawio::write_tensor(out, &y)?;
            }
            if let Some(path) = ledger {
                fs::write(path, serde_json::to_string_pretty(&l)? + "\n")?;
            }
            println!(
                "{mode}: {} launches, {} bytes, {} butterflies",
                l.kernel_launches,
                l.total_bytes(),
                l.fft_ops.butterflies
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(bench::EXIT_FAILURE as u8)
        }
    }
}
