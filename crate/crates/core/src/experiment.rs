//! Seeded end-to-end experiments: explore, identify, synthesize, certify.
//!
//! A trial draws a system and an initial state from its seed, explores the
//! plant `repeats` times along one trajectory (each run starts where the
//! previous one stopped), fits one joint pseudo estimate, and certifies the
//! resulting gain on the true system. Sweeps run independent trials in
//! parallel and report them in seed order.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::{self, OnlineDataset};
use crate::gain::{self, GainResult, RiccatiConfig};
use crate::identify::{self, PseudoEstimate};
use crate::lti::{self, InitialState, LtiSystem, NoiseSpec, SimulatedPlant, SystemKind};
use crate::matops::{Tolerance, Vector};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub kind: SystemKind,
    pub initial_state: InitialState,
    pub trials: usize,
    pub seed: u64,
    pub noise_std: f64,
    pub repeats: usize,
    pub tol: Tolerance,
    pub riccati: RiccatiConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 2,
            m: 1,
            kind: SystemKind::Controllable,
            initial_state: InitialState::Generic,
            trials: 1,
            seed: 0,
            noise_std: 0.0,
            repeats: 1,
            tol: Tolerance::default(),
            riccati: RiccatiConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 || self.m == 0 {
            return bad(format!(
                "n and m must be >= 1, got n = {}, m = {}",
                self.n, self.m
            ));
        }
        if self.kind == SystemKind::StabilizableUncontrollable && self.n < 2 {
            return bad("an uncontrollable system needs n >= 2".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be >= 1".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            ));
        }
        Ok(())
    }
}

/// One CSV row: `seed,n,m,n_tilde,steps,est_error,rho_est,rho_true,success`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub n_tilde: usize,
    pub steps: usize,
    /// `|(A_hat - A) T1|_F + |B_hat - B|_F`, `T1` an orthonormal basis of the
    /// true explorable subspace. NaN when no estimate was produced.
    pub est_error: f64,
    pub rho_est: f64,
    pub rho_true: f64,
    pub success: bool,
}

/// Everything a trial produced, including partial results on failure.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub system: LtiSystem,
    pub x0: Vector,
    pub datasets: Vec<OnlineDataset>,
    pub fit: Option<PseudoEstimate>,
    pub gain: Option<GainResult>,
    pub error: Option<String>,
}

pub struct TrialSetup<'a> {
    pub seed: u64,
    pub noise_std: f64,
    pub repeats: usize,
    pub tol: &'a Tolerance,
    pub riccati: &'a RiccatiConfig,
}

/// Runs the pipeline on a given system. Module failures end the trial early
/// and are reported in `error`, with an unsuccessful record.
pub fn run_pipeline(sys: &LtiSystem, x0: &Vector, setup: &TrialSetup) -> Result<TrialOutcome> {
    let (n, m) = (sys.n(), sys.m());
    let v_exp = lti::explorable_subspace_with_tol(sys, x0, setup.tol)?;
    let noise = if setup.noise_std > 0.0 {
        Some(NoiseSpec::new(setup.noise_std, setup.seed)?)
    } else {
        None
    };
    let mut out = TrialOutcome {
        record: TrialRecord {
            seed: setup.seed,
            n,
            m,
            n_tilde: v_exp.dim(),
            steps: 0,
            est_error: f64::NAN,
            rho_est: f64::NAN,
            rho_true: f64::NAN,
            success: false,
        },
        system: sys.clone(),
        x0: x0.clone(),
        datasets: Vec::with_capacity(setup.repeats),
        fit: None,
        gain: None,
        error: None,
    };

    let mut plant = SimulatedPlant::new(sys.clone(), noise);
    let mut start = x0.clone();
    for _ in 0..setup.repeats {
        match explorer::explore(&mut plant, &start, m, setup.tol) {
            Ok(rep) => {
                out.record.steps += rep.steps;
                if let Some(last) = rep.dataset.last_x_plus() {
                    start = last.clone();
                }
                out.datasets.push(rep.dataset);
            }
            Err(e) => {
                out.error = Some(e.to_string());
                return Ok(out);
            }
        }
    }

    let refs: Vec<&OnlineDataset> = out.datasets.iter().collect();
    let fit = match identify::pseudo_estimate_stacked(&refs, setup.tol) {
        Ok(f) => f,
        Err(e) => {
            out.error = Some(e.to_string());
            return Ok(out);
        }
    };
    let est = &fit.estimate;
    out.record.est_error =
        ((&est.a_hat - sys.a()) * v_exp.basis()).norm() + (&est.b_hat - sys.b()).norm();
    let synth = gain::synthesize(est, setup.riccati);
    out.fit = Some(fit);
    let mut g = match synth {
        Ok(g) => g,
        Err(e) => {
            out.error = Some(e.to_string());
            return Ok(out);
        }
    };
    let rho_true = gain::certify(sys, &g.k)?;
    g.closed_loop_radius_true = Some(rho_true);
    out.record.rho_est = g.closed_loop_radius_est;
    out.record.rho_true = rho_true;
    out.record.success = rho_true < 1.0;
    out.gain = Some(g);
    Ok(out)
}

/// Draws the system and initial state for `seed` and runs the pipeline.
pub fn run_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialOutcome> {
    let sys = lti::random_system(config.n, config.m, config.kind, seed)?;
    let x0 = lti::initial_state(&sys, config.initial_state, seed)?;
    run_pipeline(
        &sys,
        &x0,
        &TrialSetup {
            seed,
            noise_std: config.noise_std,
            repeats: config.repeats,
            tol: &config.tol,
            riccati: &config.riccati,
        },
    )
}

fn failed_record(config: &ExperimentConfig, seed: u64) -> TrialRecord {
    TrialRecord {
        seed,
        n: config.n,
        m: config.m,
        n_tilde: 0,
        steps: 0,
        est_error: f64::NAN,
        rho_est: f64::NAN,
        rho_true: f64::NAN,
        success: false,
    }
}

/// Independent trials with seeds `seed, seed + 1, ...`, in seed order.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    Ok((0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = rng::trial_seed(config.seed, i);
            run_trial(config, seed)
                .map(|o| o.record)
                .unwrap_or_else(|_| failed_record(config, seed))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub noise_std: f64,
    pub repeats: usize,
    pub trials: usize,
    pub success_rate: f64,
    /// Mean over trials that produced an estimate.
    pub mean_est_error: f64,
    pub failures: usize,
}

impl CellSummary {
    pub fn from_records(noise_std: f64, repeats: usize, records: &[TrialRecord]) -> Self {
        let errs: Vec<f64> = records
            .iter()
            .map(|r| r.est_error)
            .filter(|e| e.is_finite())
            .collect();
        let successes = records.iter().filter(|r| r.success).count();
        Self {
            noise_std,
            repeats,
            trials: records.len(),
            success_rate: successes as f64 / records.len().max(1) as f64,
            mean_est_error: if errs.is_empty() {
                f64::NAN
            } else {
                errs.iter().sum::<f64>() / errs.len() as f64
            },
            failures: records.len() - errs.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub summary: CellSummary,
    pub records: Vec<TrialRecord>,
}

/// Grid of `(noise_std, repeats)` cells; every cell reuses the same trial
/// seeds, so cells differ only in noise level and number of explorations.
pub fn sweep(
    config: &ExperimentConfig,
    noise_levels: &[f64],
    repeats: &[usize],
) -> Result<Vec<SweepCell>> {
    config.validate()?;
    if noise_levels.is_empty() || repeats.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one noise level and one repeat count".into(),
        ));
    }
    let mut cells = Vec::with_capacity(noise_levels.len() * repeats.len());
    for &noise_std in noise_levels {
        for &l in repeats {
            let cell_cfg = ExperimentConfig {
                noise_std,
                repeats: l,
                ..config.clone()
            };
            let records = run_trials(&cell_cfg)?;
            cells.push(SweepCell {
                summary: CellSummary::from_records(noise_std, l, &records),
                records,
            });
        }
    }
    Ok(cells)
}

pub fn write_records_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_csv_string(records: &[TrialRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_records_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
