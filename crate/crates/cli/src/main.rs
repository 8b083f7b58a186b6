use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use vmint_core::config::{parse_config, WORKERS_ENV};
use vmint_core::experiments::schedule_point;
use vmint_core::harness::{emit_plot_data, read_records, run_all, PlotKind, RECORDS_FILE};
use vmint_core::suite::{run_criterion, suite_ids, DEFAULT_SEED};
use vmint_core::{build_kernel, KernelSpec};

#[derive(Parser)]
#[command(name = "vmint", version, about = "Voter model interface experiments")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config file.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Output directory (run) or output file (plot-data).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file.
    Run { config: PathBuf },
    /// Run a built-in suite: acceptance, fast, or a criterion id.
    Verify { suite: String },
    /// Kernel utilities.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Reshape a record file into a plotting table.
    PlotData {
        /// A records.jsonl file, or a run directory containing one.
        records: PathBuf,
        /// survival, density, or schedule.
        #[arg(long)]
        kind: String,
    },
}

#[derive(Subcommand)]
enum KernelAction {
    /// Print moments and tails of a kernel.
    Inspect {
        spec: String,
        /// Also write the kernel as a "site mass" table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn init_pool(workers: usize) -> Result<()> {
    anyhow::ensure!(workers >= 1, "--workers must be at least 1");
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("starting worker pool")
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let mut config = parse_config(&config)?;
            if let Some(seed) = cli.seed {
                config.master_seed = seed;
            }
            if let Some(w) = cli.workers {
                anyhow::ensure!(w >= 1, "--workers must be at least 1");
                config.workers = w;
            }
            if let Some(out) = cli.out {
                config.output_dir = out;
            }
            let summary = run_all(&config)?;
            for o in &summary.outcomes {
                println!("{:<24} {:<18} {} ({:.1} s)", o.name, o.kind, o.verdict, o.duration_seconds);
            }
            if !summary.outcomes.is_empty() {
                println!("results in {}", config.output_dir.display());
            }
            Ok(ExitCode::from(summary.exit_code() as u8))
        }
        Command::Verify { suite } => {
            let ids = suite_ids(&suite)?;
            if let Some(w) = cli.workers {
                init_pool(w)?;
            }
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let mut all = true;
            for id in ids {
                let r = run_criterion(id, seed)?;
                println!("{r}");
                all &= r.passed;
            }
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Kernel { action: KernelAction::Inspect { spec, table } } => {
            let spec: KernelSpec = spec.parse()?;
            let k = build_kernel(&spec)?;
            let mut out = io::stdout().lock();
            writeln!(out, "kernel      {spec}")?;
            writeln!(out, "radius      {}", k.radius())?;
            writeln!(out, "support     {} sites", k.sites().len())?;
            writeln!(out, "mean        {:e}", k.mean())?;
            writeln!(out, "symmetric   {}", k.is_symmetric())?;
            writeln!(out, "E|X|        {}", k.abs_mean())?;
            writeln!(out, "E|X|^2      {}", k.moment(2.0))?;
            writeln!(out, "E|X|^3      {}", k.moment(3.0))?;
            writeln!(out, "tails       m  P(|X| >= m)  P(X >= m)")?;
            let mut m = 1u64;
            while m as i64 <= k.radius() {
                writeln!(out, "            {m:<3}{:<13.6e}{:.6e}", k.tail_mass(m), k.right_tail_mass(m))?;
                m *= 2;
            }
            if k.family().power_law_alpha().is_some_and(|a| a < 2.0) {
                writeln!(out, "schedule    k  M_k  t_k (C = 0.25)")?;
                for kk in 1..=20u32 {
                    if k.radius() < 1i64 << (kk + 2) {
                        break;
                    }
                    let (mk, tk) = schedule_point(&k, 0.25, kk)?;
                    writeln!(out, "            {kk:<3}{mk:<5}{tk:.4}")?;
                }
            }
            if let Some(path) = table {
                k.write_table(&path)?;
                writeln!(out, "table written to {}", path.display())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::PlotData { records, kind } => {
            let kind: PlotKind = kind.parse()?;
            let path = if records.is_dir() { records.join(RECORDS_FILE) } else { records };
            let recs = read_records(&path).with_context(|| format!("reading {}", path.display()))?;
            match cli.out {
                Some(file) => emit_plot_data(&recs, kind, BufWriter::new(File::create(&file)?))?,
                None => emit_plot_data(&recs, kind, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
