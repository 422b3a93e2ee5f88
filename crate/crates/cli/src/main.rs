//! `overbeam`: runs the experiments described by a configuration file.
//!
//! Exit codes: 0 on success, 1 on a runtime failure or a failed output check,
//! 2 on a usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use overbeam::codebook::BeamSet;
use overbeam::config::{OutputKind, RunConfig};
use overbeam::estimator::{Algorithm, Estimator, EstimatorConfig};
use overbeam::io::{write_codebook, write_csv, write_jsonl, CodebookFile};
use overbeam::montecarlo::{bound_curve, run_sweep, run_traces, BoundRow, ResultTable};
use overbeam::parallel::Execution;
use overbeam::report;

#[derive(Parser)]
#[command(name = "overbeam", version, about = "Hierarchical mmWave channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment description (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Export the description matrix, per-stage beams and a flatness report.
    Codebook,
    /// Monte Carlo sweep over total pilot energy.
    Sweep,
    /// Analytical failure bound over the energy grid.
    Bound,
    /// Per-trial records as JSON lines.
    Trace,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Codebook => "codebook",
            Command::Sweep => "sweep",
            Command::Bound => "bound",
            Command::Trace => "trace",
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_path: String,
    config: &'a RunConfig,
    seed: u64,
    workers: Option<usize>,
    elapsed_seconds: f64,
    outputs: Vec<String>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    quiet: bool,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        if !self.quiet {
            eprintln!("wrote {}", path.display());
        }
        self.files.push(name.to_string());
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config_path) = cli.config.clone() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    let mut cfg = match RunConfig::load(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Err(e) = check_design(&cfg) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if cli.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(2);
    }
    match run(&cli, &config_path, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Rejects `(n, k)` pairs the estimator cannot run before any work starts.
fn check_design(cfg: &RunConfig) -> overbeam::Result<()> {
    cfg.experiment().validate()?;
    for [n, k] in cfg.bound_designs() {
        EstimatorConfig::new(n, k, Algorithm::Overlapped).validate()?;
    }
    Ok(())
}

fn run(cli: &Cli, config_path: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let mut out = Outputs { dir: cli.out.clone(), files: Vec::new(), quiet: cli.quiet };
    let start = Instant::now();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build()?;
    pool.install(|| match cli.command {
        Command::Codebook => cmd_codebook(cfg, &mut out),
        Command::Sweep => cmd_sweep(cfg, &mut out),
        Command::Bound => cmd_bound(cfg, &mut out),
        Command::Trace => cmd_trace(cfg, &mut out),
    })?;

    let manifest = RunManifest {
        tool: "overbeam",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config_path: config_path.display().to_string(),
        config: cfg,
        seed: cfg.seed,
        workers: cli.workers,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
    };
    let path = cli.out.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    if !cli.quiet {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Residual above which a synthesized codebook is rejected.
const CODEBOOK_TOLERANCE: f64 = 1e-6;

#[derive(Serialize)]
struct FlatnessRecord {
    stage: usize,
    gain: f64,
    gain_spread: f64,
    max_relative_residual: f64,
    max_in_range_error: f64,
    max_out_of_range_gain: f64,
    w_equals_f: bool,
}

fn cmd_codebook(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let est = Estimator::new(EstimatorConfig {
        grid_law: cfg.grid_law,
        ..EstimatorConfig::new(cfg.n, cfg.k, Algorithm::Overlapped)
    })?;
    let b = est.description_matrix();

    let header: Vec<String> = std::iter::once("pattern".to_string())
        .chain((0..b.subranges()).map(|k| format!("subrange_{k}")))
        .collect();
    let rows: Vec<Vec<String>> = (0..b.patterns())
        .map(|m| std::iter::once(m.to_string()).chain(b.row(m).iter().map(|v| v.to_string())).collect())
        .collect();
    let mut buf = Vec::new();
    overbeam::io::write_csv_records(&mut buf, &header, &rows)?;
    out.write("b.csv", &buf)?;

    let mut report_rows = Vec::new();
    for s in 0..est.stages() {
        let set: &BeamSet = est.beam_set(s, 0)?;
        let flat = set.flatness(b, est.solver());
        if set.max_relative_residual > CODEBOOK_TOLERANCE || flat.max_in_range_error > CODEBOOK_TOLERANCE {
            bail!(
                "stage {} codebook misses the tolerance: residual {:.3e}, in-range error {:.3e}",
                s + 1,
                set.max_relative_residual,
                flat.max_in_range_error
            );
        }
        let mut buf = Vec::new();
        write_codebook(&mut buf, &CodebookFile { stage: s + 1, gain: set.gain, beams: set.beams.clone() })?;
        out.write(&format!("stage_{}.txt", s + 1), &buf)?;
        report_rows.push(FlatnessRecord {
            stage: s + 1,
            gain: set.gain,
            gain_spread: set.gain_spread,
            max_relative_residual: set.max_relative_residual,
            max_in_range_error: flat.max_in_range_error,
            max_out_of_range_gain: flat.max_out_of_range_gain,
            w_equals_f: true,
        });
    }
    let mut buf = Vec::new();
    write_csv(&mut buf, &report_rows)?;
    out.write("flatness.csv", &buf)
}

fn check_table(table: &ResultTable) -> anyhow::Result<()> {
    for r in &table.rows {
        let e = &r.estimate;
        if !(0.0..=1.0).contains(&e.pcef) || e.ci_low > e.pcef || e.pcef > e.ci_high {
            bail!("inconsistent estimate for {} at {} dB", r.algorithm, r.et_db);
        }
        if r.et_db.is_infinite() && e.failures > 0 {
            bail!("{} failed {} noiseless trials", r.algorithm, e.failures);
        }
    }
    Ok(())
}

fn bound_rows(cfg: &RunConfig) -> anyhow::Result<Vec<BoundRow>> {
    let grid = cfg.et_grid();
    let mut rows = Vec::new();
    for [n, k] in cfg.bound_designs() {
        let variance = cfg.alpha_variance.unwrap_or((n * n) as f64);
        rows.extend(bound_curve(n, k, &grid, variance, cfg.grid_law, cfg.zero_energy_row)?);
    }
    if rows.iter().any(|r| !(0.0..=1.0).contains(&r.bound)) {
        bail!("bound outside [0, 1]");
    }
    Ok(rows)
}

fn cmd_sweep(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    if cfg.wants(OutputKind::Slots) {
        out.write("slots.csv", &report::slot_table_csv(&cfg.table_k, cfg.table_stages)?)?;
    }
    if cfg.wants(OutputKind::Pcef) || cfg.wants(OutputKind::AlphaError) {
        let exp = cfg.experiment();
        if !out.quiet {
            eprintln!(
                "sweep: N={} K={} {} points x {} trials x {} variants",
                exp.n,
                exp.k,
                exp.et_db.len(),
                exp.trials,
                exp.algorithms.len()
            );
        }
        let table = run_sweep(&exp, Execution::default())?;
        check_table(&table)?;
        for &alg in &exp.algorithms {
            if cfg.wants(OutputKind::Pcef) {
                out.write(&format!("pcef_{}.csv", alg.name()), &report::pcef_curve(&table, alg)?)?;
            }
            if cfg.wants(OutputKind::AlphaError) {
                for &est in &cfg.alpha_estimators {
                    out.write(
                        &format!("alpha_error_{}_{}.csv", alg.name(), est.name()),
                        &report::alpha_error_curve(&table, alg, est)?,
                    )?;
                }
            }
        }
    }
    if cfg.wants(OutputKind::Bound) {
        out.write("bound.csv", &report::bound_table(&bound_rows(cfg)?)?)?;
    }
    Ok(())
}

fn cmd_bound(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    out.write("bound.csv", &report::bound_table(&bound_rows(cfg)?)?)
}

fn cmd_trace(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let records = run_traces(&cfg.experiment(), Execution::default())?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records)?;
    out.write("trace.jsonl", &buf)
}
