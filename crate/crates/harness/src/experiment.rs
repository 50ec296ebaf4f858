//! Replicate runner and result emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use steel_core::{steel_learn, CoordinateClass, PhaseSteps, TraceEvent};

use crate::config::ExperimentConfig;
use crate::eval::{audit_trace, classifiers_match_indicators, evaluate_dynamics, evaluate_encoder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub replicate: usize,
    pub param_seed: u64,
    pub noise_seed: u64,
    /// Isomorphic dynamics and every per-state accuracy at least 1 - epsilon.
    pub success: bool,
    pub isomorphic: bool,
    pub min_accuracy: f64,
    pub accuracies: Vec<f64>,
    pub accuracy_vacuous: bool,
    pub classifiers_match: bool,
    pub trace_clean: bool,
    /// States whose committed samples are closer than the mixing bound.
    pub spacing_violations: usize,
    pub learned_states: usize,
    pub true_states: usize,
    pub total_steps: u64,
    pub phase_steps: PhaseSteps,
    pub invocations: usize,
    pub d: u64,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

/// A record plus the decision trace it came from.
pub struct ReplicateOutcome {
    pub record: ExperimentRecord,
    pub trace: Vec<TraceEvent>,
}

pub fn success_rule(isomorphic: bool, min_accuracy: f64, epsilon: f64) -> bool {
    isomorphic && min_accuracy >= 1.0 - epsilon
}

pub fn run_replicate(config: &ExperimentConfig, replicate: usize) -> ReplicateOutcome {
    let (param_seed, noise_seed) = config.replicate_seeds(replicate);
    let started = Instant::now();
    let mut record = ExperimentRecord {
        replicate,
        param_seed,
        noise_seed,
        success: false,
        isomorphic: false,
        min_accuracy: 0.0,
        accuracies: Vec::new(),
        accuracy_vacuous: false,
        classifiers_match: false,
        trace_clean: false,
        spacing_violations: 0,
        learned_states: 0,
        true_states: 0,
        total_steps: 0,
        phase_steps: PhaseSteps::default(),
        invocations: 0,
        d: 0,
        wall_seconds: 0.0,
        error: None,
    };
    let mut built = match config.env.build(param_seed, noise_seed) {
        Ok(b) => b,
        Err(e) => {
            record.error = Some(e.to_string());
            return ReplicateOutcome {
                record,
                trace: Vec::new(),
            };
        }
    };
    let env = built.env.as_mut();
    record.true_states = env.latent_count();
    let oracle = CoordinateClass::new(env.obs_width());
    let result = match steel_learn(env, &config.params, &oracle) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("replicate {replicate}: {e}");
            record.error = Some(e.to_string());
            record.total_steps = env.clock();
            record.wall_seconds = started.elapsed().as_secs_f64();
            return ReplicateOutcome {
                record,
                trace: Vec::new(),
            };
        }
    };

    let dynamics = evaluate_dynamics(&result.dynamics, env, &result.datasets);
    record.isomorphic = dynamics.isomorphic;
    if let Some(inverse) = dynamics.inverse() {
        let enc = evaluate_encoder(
            &result.encoder,
            &inverse,
            env,
            config.eval_samples,
            config.eval_seed,
        );
        record.min_accuracy = enc.min_accuracy;
        record.accuracies = enc.accuracies;
        record.accuracy_vacuous = enc.vacuous;
    }
    record.success = success_rule(
        record.isomorphic,
        record.min_accuracy,
        config.params.epsilon,
    );
    record.classifiers_match = classifiers_match_indicators(&result.encoder, &dynamics.sigma, env);
    record.trace_clean = audit_trace(&result.trace, env.action_count()).clean();
    record.spacing_violations = result
        .datasets
        .spacing_violations(config.params.mixing_time_bound)
        .len();
    record.learned_states = result.state_count();
    record.total_steps = result.total_steps;
    record.phase_steps = result.phase_steps;
    record.invocations = result
        .trace
        .iter()
        .filter(|e| matches!(e, TraceEvent::CycleFind { .. }))
        .count();
    record.d = result.d;
    record.wall_seconds = started.elapsed().as_secs_f64();
    log::info!(
        "replicate {replicate}: success = {}, {} steps, {:.1} s",
        record.success,
        record.total_steps,
        record.wall_seconds
    );
    ReplicateOutcome {
        record,
        trace: result.trace,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub replicates: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub steps_mean: f64,
    /// Population standard deviation of the total step counts.
    pub steps_std: f64,
    pub passed: bool,
}

impl Summary {
    pub fn from_records(config: &ExperimentConfig, records: &[ExperimentRecord]) -> Self {
        let n = records.len();
        let successes = records.iter().filter(|r| r.success).count();
        let steps: Vec<f64> = records.iter().map(|r| r.total_steps as f64).collect();
        let mean = steps.iter().sum::<f64>() / n.max(1) as f64;
        let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
        let success_rate = successes as f64 / n.max(1) as f64;
        Self {
            name: config.name.clone(),
            replicates: n,
            successes,
            success_rate,
            steps_mean: mean,
            steps_std: var.sqrt(),
            passed: success_rate >= config.success_target,
        }
    }
}

/// One CSV row; the column names are the field names.
#[derive(Serialize)]
struct CsvRow {
    replicate: usize,
    param_seed: u64,
    noise_seed: u64,
    success: bool,
    isomorphic: bool,
    min_accuracy: f64,
    classifiers_match: bool,
    trace_clean: bool,
    spacing_violations: usize,
    learned_states: usize,
    true_states: usize,
    total_steps: u64,
    phase1_steps: u64,
    phase2_steps: u64,
    phase3_steps: u64,
    invocations: usize,
    d: u64,
    wall_seconds: f64,
    error: String,
}

impl From<&ExperimentRecord> for CsvRow {
    fn from(r: &ExperimentRecord) -> Self {
        Self {
            replicate: r.replicate,
            param_seed: r.param_seed,
            noise_seed: r.noise_seed,
            success: r.success,
            isomorphic: r.isomorphic,
            min_accuracy: r.min_accuracy,
            classifiers_match: r.classifiers_match,
            trace_clean: r.trace_clean,
            spacing_violations: r.spacing_violations,
            learned_states: r.learned_states,
            true_states: r.true_states,
            total_steps: r.total_steps,
            phase1_steps: r.phase_steps.phase1,
            phase2_steps: r.phase_steps.phase2,
            phase3_steps: r.phase_steps.phase3,
            invocations: r.invocations,
            d: r.d,
            wall_seconds: r.wall_seconds,
            error: r.error.clone().unwrap_or_default(),
        }
    }
}

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> anyhow::Result<()> {
    let mut out = BufWriter::new(create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, records: &[ExperimentRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &[TraceEvent]) -> anyhow::Result<()> {
    let mut out = BufWriter::new(create(path)?);
    for e in trace {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// Runs every replicate, in parallel, and writes the configured outputs.
/// Records come back in replicate order.
pub fn run_experiment(
    config: &ExperimentConfig,
) -> anyhow::Result<(Vec<ExperimentRecord>, Summary)> {
    let outcomes: Vec<ReplicateOutcome> = (0..config.replicates)
        .into_par_iter()
        .map(|i| run_replicate(config, i))
        .collect();
    if let Some(dir) = &config.output.traces {
        for o in &outcomes {
            let file = dir.join(format!("trace_{:03}.jsonl", o.record.replicate));
            write_trace(&file, &o.trace)?;
        }
    }
    let records: Vec<ExperimentRecord> = outcomes.into_iter().map(|o| o.record).collect();
    if let Some(path) = &config.output.records {
        write_records(path, &records)?;
    }
    if let Some(path) = &config.output.summary {
        write_csv(path, &records)?;
    }
    let summary = Summary::from_records(config, &records);
    Ok((records, summary))
}
