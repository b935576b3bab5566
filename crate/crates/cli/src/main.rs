use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use minstab::experiment::{self, CellSummary, ExperimentConfig, TrialOutcome, TrialSetup};
use minstab::lti::{self, InitialState};
use minstab::{gain, identify, pe, rng};
use minstab::{Estimate, LtiSystem, OnlineDataset, RiccatiConfig, SystemKind, Tolerance, Vector};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "minstab",
    version,
    about = "Minimum-time identification and stabilization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore, identify, synthesize and certify a single system.
    Pipeline(PipelineArgs),
    /// Seeded trials over a grid of noise levels and repeat counts.
    Sweep(SweepArgs),
    /// Compare exploration length against random open-loop signals.
    ComparePe(ComparePeArgs),
    /// Pseudo estimate from one or more dataset files.
    Identify(IdentifyArgs),
    /// Stabilizing gain for an estimate file.
    Synthesize(SynthesizeArgs),
}

#[derive(Args)]
struct SystemArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value = "controllable")]
    kind: SystemKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial state draw: generic, zero or controllable.
    #[arg(long, default_value = "generic")]
    x0_kind: InitialState,
    /// Relative rank tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// System JSON file; overrides --n, --m and --kind.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Initial state as comma-separated values; overrides --x0-kind.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    noise_std: Vec<f64>,
    /// Comma-separated repeat counts.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    repeats: Vec<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ComparePeArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// Number of random signals.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    estimate: PathBuf,
    /// True system, for certifying the gain.
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Algorithm(serde_json::Value),
}

impl From<minstab::Error> for Failure {
    fn from(e: minstab::Error) -> Self {
        match e {
            minstab::Error::InvalidArgument(_) | minstab::Error::DimensionMismatch(_) => {
                Failure::Usage(e.to_string())
            }
            minstab::Error::Io(_) | minstab::Error::Json(_) | minstab::Error::Csv(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Algorithm(json!({ "error": other.to_string() })),
        }
    }
}

type CliResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))
}

fn tolerance(rel: f64) -> Result<Tolerance, Failure> {
    Ok(Tolerance::with_rel(rel)?)
}

fn pipeline(args: PipelineArgs) -> CliResult {
    let tol = tolerance(args.sys.tol)?;
    let riccati = RiccatiConfig::default();
    let sys = match &args.system {
        Some(p) => LtiSystem::from_json(&read(p)?)?,
        None => lti::random_system(args.sys.n, args.sys.m, args.sys.kind, args.sys.seed)?,
    };
    let x0 = match &args.x0 {
        Some(v) => Vector::from_vec(v.clone()),
        None => lti::initial_state(&sys, args.sys.x0_kind, args.sys.seed)?,
    };
    if x0.len() != sys.n() {
        return Err(Failure::Usage(format!(
            "x0 has {} entries, system has n = {}",
            x0.len(),
            sys.n()
        )));
    }
    if args.repeats == 0 || !(args.noise_std.is_finite() && args.noise_std >= 0.0) {
        return Err(Failure::Usage(
            "repeats must be >= 1 and noise-std finite and >= 0".into(),
        ));
    }
    let outcome = experiment::run_pipeline(
        &sys,
        &x0,
        &TrialSetup {
            seed: args.sys.seed,
            noise_std: args.noise_std,
            repeats: args.repeats,
            tol: &tol,
            riccati: &riccati,
        },
    )?;
    write_pipeline_artifacts(&args.out_dir, &outcome)?;

    let inconsistent = outcome.fit.as_ref().is_some_and(|f| f.inconsistent);
    let summary = json!({
        "record": outcome.record,
        "inconsistent": inconsistent,
        "max_residual": outcome.fit.as_ref().map(|f| f.max_residual),
        "error": outcome.error,
    });
    if outcome.error.is_some() {
        return Err(Failure::Algorithm(summary));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("serializable")
    );
    Ok(())
}

fn write_pipeline_artifacts(dir: &Path, outcome: &TrialOutcome) -> CliResult {
    out_dir(dir)?;
    write(&dir.join("system.json"), &outcome.system.to_json()?)?;
    match outcome.datasets.as_slice() {
        [one] => write(&dir.join("dataset.json"), &one.to_json()?)?,
        many => {
            for (i, ds) in many.iter().enumerate() {
                write(&dir.join(format!("dataset_{}.json", i + 1)), &ds.to_json()?)?;
            }
        }
    }
    if let Some(fit) = &outcome.fit {
        write(&dir.join("estimate.json"), &fit.estimate.to_json()?)?;
    }
    if let Some(g) = &outcome.gain {
        write(&dir.join("gain.json"), &g.to_json()?)?;
    }
    write(
        &dir.join("record.csv"),
        &experiment::records_csv_string(std::slice::from_ref(&outcome.record))?,
    )
}

fn cell_file(noise_std: f64, repeats: usize) -> String {
    format!("records_noise{noise_std}_l{repeats}.csv")
}

fn sweep(args: SweepArgs) -> CliResult {
    let config = ExperimentConfig {
        n: args.sys.n,
        m: args.sys.m,
        kind: args.sys.kind,
        initial_state: args.sys.x0_kind,
        trials: args.trials,
        seed: args.sys.seed,
        tol: tolerance(args.sys.tol)?,
        ..ExperimentConfig::default()
    };
    let cells = experiment::sweep(&config, &args.noise_std, &args.repeats)?;
    out_dir(&args.out_dir)?;
    let mut summaries: Vec<CellSummary> = Vec::with_capacity(cells.len());
    for cell in cells {
        let s = cell.summary;
        write(
            &args.out_dir.join(cell_file(s.noise_std, s.repeats)),
            &experiment::records_csv_string(&cell.records)?,
        )?;
        summaries.push(s);
    }
    let aggregate = serde_json::to_string_pretty(&json!({
        "n": config.n,
        "m": config.m,
        "kind": config.kind,
        "initial_state": config.initial_state,
        "seed": config.seed,
        "cells": summaries,
    }))
    .expect("serializable");
    write(&args.out_dir.join("aggregate.json"), &aggregate)?;
    println!("{aggregate}");
    Ok(())
}

fn compare_pe(args: ComparePeArgs) -> CliResult {
    if args.trials == 0 {
        return Err(Failure::Usage("trials must be >= 1".into()));
    }
    let tol = tolerance(args.sys.tol)?;
    let s = &args.sys;
    let sys = lti::random_system(s.n, s.m, s.kind, s.seed)?;
    let x0 = lti::initial_state(&sys, s.x0_kind, s.seed)?;
    let seeds: Vec<u64> = (0..args.trials)
        .map(|i| rng::trial_seed(s.seed, i))
        .collect();
    let summary = pe::minimal_length_comparison(&sys, &x0, &seeds, &tol)?;
    out_dir(&args.out_dir)?;
    let mut csv = Vec::new();
    pe::write_comparison_csv(&summary.rows, &mut csv)?;
    write(
        &args.out_dir.join("pe_comparison.csv"),
        &String::from_utf8(csv).expect("CSV is UTF-8"),
    )?;
    let report = json!({
        "n": s.n,
        "m": s.m,
        "n_tilde": summary.rows[0].n_tilde,
        "alg1_steps": summary.alg1_steps,
        "pe_min_length_min": summary.pe_min_length_min,
        "pe_min_length_median": summary.pe_min_length_median,
        "bound_paper": summary.bound_paper,
        "bound_hankel": summary.bound_hankel,
    });
    let violations: Vec<u64> = summary
        .rows
        .iter()
        .filter(|r| r.alg1_steps > r.pe_min_length)
        .map(|r| r.seed)
        .collect();
    if !violations.is_empty() {
        return Err(Failure::Algorithm(json!({
            "error": "exploration took longer than a random signal",
            "seeds": violations,
            "summary": report,
        })));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("serializable")
    );
    Ok(())
}

fn identify_cmd(args: IdentifyArgs) -> CliResult {
    let tol = tolerance(args.tol)?;
    let datasets = args
        .datasets
        .iter()
        .map(|p| Ok(OnlineDataset::from_json(&read(p)?)?))
        .collect::<Result<Vec<_>, Failure>>()?;
    let refs: Vec<&OnlineDataset> = datasets.iter().collect();
    let fit = identify::pseudo_estimate_stacked(&refs, &tol)?;
    write(&args.out, &fit.estimate.to_json()?)?;
    println!(
        "{}",
        json!({ "max_residual": fit.max_residual, "inconsistent": fit.inconsistent })
    );
    Ok(())
}

fn synthesize_cmd(args: SynthesizeArgs) -> CliResult {
    let est = Estimate::from_json(&read(&args.estimate)?)?;
    let mut g = gain::synthesize(&est, &RiccatiConfig::default())?;
    if let Some(p) = &args.system {
        let sys = LtiSystem::from_json(&read(p)?)?;
        g.closed_loop_radius_true = Some(gain::certify(&sys, &g.k)?);
    }
    write(&args.out, &g.to_json()?)?;
    println!(
        "{}",
        json!({
            "closed_loop_radius_est": g.closed_loop_radius_est,
            "closed_loop_radius_true": g.closed_loop_radius_true,
        })
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pipeline(a) => pipeline(a),
        Command::Sweep(a) => sweep(a),
        Command::ComparePe(a) => compare_pe(a),
        Command::Identify(a) => identify_cmd(a),
        Command::Synthesize(a) => synthesize_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Algorithm(diag)) => {
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&diag).expect("serializable")
            );
            ExitCode::from(1)
        }
    }
}
