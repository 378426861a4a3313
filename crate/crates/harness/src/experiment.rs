//! Trial execution and artifact writing.
//!
//! A trial is one `(inputs, schedule)` pair. Input draw `t` is paired with
//! every schedule the adversary emits for those inputs, and trials are
//! numbered in that order. Trials run on a rayon pool; results are collected
//! by trial index, so output does not depend on the worker count.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sleepy_consensus::binary::Binary;
use sleepy_consensus::check::{AnalysisFlag, CheckContext, TraceChecker, Violation};
use sleepy_consensus::engine::{self, RoundTrace, RunMetrics};
use sleepy_consensus::multivalue::MultiValue;
use sleepy_consensus::schedule::CrashSchedule;
use sleepy_consensus::trace::{to_jsonl, TraceHeader};
use sleepy_consensus::{ceil_sqrt, ProtocolKind, Value};

use crate::config::{workers_from_env, ExperimentConfig};
use crate::HarnessError;

/// A configured protocol instance of either kind.
#[derive(Debug, Clone)]
pub enum ProtocolInstance {
    Multi(MultiValue),
    Binary(Binary),
}

impl ProtocolInstance {
    pub fn build(kind: ProtocolKind, n: u32, f: u32, k: Option<u32>) -> Result<Self, HarnessError> {
        Ok(match (kind, k) {
            (ProtocolKind::Multi, _) => ProtocolInstance::Multi(MultiValue::new(n, f)?),
            (ProtocolKind::Binary, None) => ProtocolInstance::Binary(Binary::new(n, f)?),
            (ProtocolKind::Binary, Some(k)) => {
                ProtocolInstance::Binary(Binary::with_committee_size(n, f, k)?)
            }
        })
    }

    pub fn kind(&self) -> ProtocolKind {
        match self {
            ProtocolInstance::Multi(_) => ProtocolKind::Multi,
            ProtocolInstance::Binary(_) => ProtocolKind::Binary,
        }
    }

    pub fn committee_size(&self) -> u32 {
        match self {
            ProtocolInstance::Multi(p) => p.committees().size(),
            ProtocolInstance::Binary(p) => p.committee_size(),
        }
    }

    /// Smallest spacing between one player's committees that the assignment
    /// guarantees, `⌊n/k⌋`.
    pub fn guaranteed_gap(&self) -> u32 {
        match self {
            ProtocolInstance::Multi(p) => p.committees().guaranteed_gap(),
            ProtocolInstance::Binary(p) => p.committees().guaranteed_gap(),
        }
    }

    pub fn run_observed(
        &self,
        n: u32,
        f: u32,
        inputs: &[Value],
        schedule: &CrashSchedule,
        observe: impl FnMut(RoundTrace),
    ) -> Result<RunMetrics, HarnessError> {
        Ok(match self {
            ProtocolInstance::Multi(p) => engine::run_observed(p, n, f, inputs, schedule, observe)?,
            ProtocolInstance::Binary(p) => {
                engine::run_observed(p, n, f, inputs, schedule, observe)?
            }
        })
    }

    pub fn schedules(
        &self,
        strategy: &sleepy_consensus::adversary::AdversaryStrategy,
        f: u32,
        inputs: &[Value],
    ) -> Result<Vec<CrashSchedule>, HarnessError> {
        let kind = self.kind();
        Ok(match self {
            ProtocolInstance::Multi(p) => strategy.schedules(p, kind, f, inputs)?,
            ProtocolInstance::Binary(p) => strategy.schedules(p, kind, f, inputs)?,
        })
    }
}

/// One CSV row. Column order is part of the output contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    pub n: u32,
    pub f: u32,
    pub k: u32,
    pub protocol: ProtocolKind,
    pub adversary: String,
    pub max_awake: u32,
    pub mean_awake: f64,
    pub messages: u64,
    pub rounds: u32,
    pub decision_agree: bool,
    pub decision_value: Option<Value>,
    pub violations: usize,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "trial",
    "n",
    "f",
    "k",
    "protocol",
    "adversary",
    "max_awake",
    "mean_awake",
    "messages",
    "rounds",
    "decision_agree",
    "decision_value",
    "violations",
];

/// Full result of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub row: TrialRow,
    pub inputs: Vec<Value>,
    pub schedule: CrashSchedule,
    pub metrics: RunMetrics,
    pub flags: Vec<AnalysisFlag>,
    /// JSONL text of the run when tracing is on.
    pub trace: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protocol: Option<ProtocolKind>,
    pub n: u32,
    pub f: u32,
    pub k: u32,
    pub adversary: String,
    pub trials: u64,
    /// Worst per-player awake rounds over all trials.
    pub max_energy: u32,
    /// Mean over trials of the per-trial worst awake rounds.
    pub mean_energy: f64,
    /// Mean over trials of the per-trial mean awake rounds.
    pub mean_awake: f64,
    pub max_messages: u64,
    pub energy_cap: u64,
    pub message_cap: u64,
    pub violations: u64,
    pub violations_by_kind: BTreeMap<String, u64>,
    pub flags_by_kind: BTreeMap<String, u64>,
    /// All trials ran exactly `f+1` rounds.
    pub exact_rounds: bool,
    /// The committee spacing guarantee `⌊n/k⌋` is below `⌈√n⌉` (binary only).
    pub weak_spacing: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub trials: Vec<TrialResult>,
    pub summary: Summary,
}

impl ExperimentOutcome {
    pub fn exit_code(&self) -> i32 {
        (self.summary.violations > 0) as i32
    }
}

struct WorkUnit {
    inputs: Vec<Value>,
    schedule: CrashSchedule,
}

fn work_units(
    cfg: &ExperimentConfig,
    proto: &ProtocolInstance,
) -> Result<Vec<WorkUnit>, HarnessError> {
    let fixed = match &cfg.schedule {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            Some(text.parse::<CrashSchedule>()?)
        }
        None => None,
    };
    let strategy = cfg.adversary.strategy();
    let mut units = Vec::new();
    for t in 0..cfg.trials {
        let inputs = cfg.inputs.generate(cfg.protocol, cfg.n, t)?;
        let schedules = match &fixed {
            Some(s) => vec![s.clone()],
            None => proto.schedules(&strategy, cfg.f, &inputs)?,
        };
        units.extend(schedules.into_iter().map(|schedule| WorkUnit {
            inputs: inputs.clone(),
            schedule,
        }));
    }
    Ok(units)
}

fn run_unit(
    cfg: &ExperimentConfig,
    proto: &ProtocolInstance,
    trial: u64,
    unit: &WorkUnit,
) -> Result<TrialResult, HarnessError> {
    let ctx = CheckContext::new(cfg.protocol, cfg.n, cfg.f, unit.inputs.clone())
        .with_committee_size(cfg.k);
    let mut checker = cfg.check.then(|| TraceChecker::new(ctx));
    let mut recorded = Vec::new();
    let keep = cfg.trace.is_some();
    let mut metrics = proto.run_observed(cfg.n, cfg.f, &unit.inputs, &unit.schedule, |t| {
        if let Some(c) = checker.as_mut() {
            c.observe(&t);
        }
        if keep {
            recorded.push(t);
        }
    })?;
    let mut flags = Vec::new();
    if let Some(c) = checker {
        let report = c.finish(&metrics.decisions);
        metrics.violations = report.violations;
        flags = report.flags;
    }

    let trace = keep.then(|| {
        let header = TraceHeader {
            protocol: cfg.protocol,
            n: cfg.n,
            f: cfg.f,
            committee_size: cfg.k,
            inputs: unit.inputs.clone(),
            schedule: unit.schedule.clone(),
            trial: Some(trial),
        };
        to_jsonl(&header, &recorded, &metrics.decisions)
    });

    let decided: Vec<Value> = metrics.decisions.iter().flatten().copied().collect();
    let agree = decided.windows(2).all(|w| w[0] == w[1]);
    let row = TrialRow {
        trial,
        n: cfg.n,
        f: cfg.f,
        k: proto.committee_size(),
        protocol: cfg.protocol,
        adversary: cfg.adversary.to_string(),
        max_awake: metrics.max_awake,
        mean_awake: metrics.awake_rounds.iter().map(|&a| a as f64).sum::<f64>() / cfg.n as f64,
        messages: metrics.total_messages,
        rounds: metrics.rounds,
        decision_agree: agree,
        decision_value: if agree {
            decided.first().copied()
        } else {
            None
        },
        violations: metrics.violations.len(),
    };
    Ok(TrialResult {
        row,
        inputs: unit.inputs.clone(),
        schedule: unit.schedule.clone(),
        metrics,
        flags,
        trace,
    })
}

fn summarize(cfg: &ExperimentConfig, proto: &ProtocolInstance, trials: &[TrialResult]) -> Summary {
    let ctx = CheckContext::new(cfg.protocol, cfg.n, cfg.f, Vec::new()).with_committee_size(cfg.k);
    let count = trials.len().max(1) as f64;
    let mut violations_by_kind = BTreeMap::new();
    let mut flags_by_kind = BTreeMap::new();
    for t in trials {
        for v in &t.metrics.violations {
            *violations_by_kind.entry(v.name().to_string()).or_insert(0) += 1;
        }
        for fl in &t.flags {
            *flags_by_kind.entry(fl.name().to_string()).or_insert(0) += 1;
        }
    }
    Summary {
        protocol: Some(cfg.protocol),
        n: cfg.n,
        f: cfg.f,
        k: proto.committee_size(),
        adversary: cfg.adversary.to_string(),
        trials: trials.len() as u64,
        max_energy: trials.iter().map(|t| t.row.max_awake).max().unwrap_or(0),
        mean_energy: trials.iter().map(|t| t.row.max_awake as f64).sum::<f64>() / count,
        mean_awake: trials.iter().map(|t| t.row.mean_awake).sum::<f64>() / count,
        max_messages: trials.iter().map(|t| t.row.messages).max().unwrap_or(0),
        energy_cap: ctx.energy_cap(),
        message_cap: ctx.message_cap(),
        violations: trials
            .iter()
            .map(|t| t.metrics.violations.len() as u64)
            .sum(),
        violations_by_kind,
        flags_by_kind,
        exact_rounds: trials.iter().all(|t| t.row.rounds == cfg.f + 1),
        weak_spacing: cfg.protocol == ProtocolKind::Binary
            && cfg.f > 0
            && (proto.guaranteed_gap() as u64) < ceil_sqrt(cfg.n as u64),
    }
}

/// Runs every trial of `cfg` and writes whichever artifacts it names.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    let proto = ProtocolInstance::build(cfg.protocol, cfg.n, cfg.f, cfg.k)?;
    let units = work_units(cfg, &proto)?;

    let workers = cfg.workers.or_else(workers_from_env);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::config(format!("worker pool: {e}")))?;
    let trials: Vec<TrialResult> = pool.install(|| {
        units
            .par_iter()
            .enumerate()
            .map(|(i, u)| run_unit(cfg, &proto, i as u64, u))
            .collect::<Result<_, _>>()
    })?;

    let summary = summarize(cfg, &proto, &trials);
    if let Some(path) = &cfg.metrics {
        write_csv(path, trials.iter().map(|t| &t.row))?;
    }
    if let Some(path) = &cfg.trace {
        let mut w = create(path)?;
        for t in &trials {
            if let Some(text) = &t.trace {
                w.write_all(text.as_bytes())
                    .map_err(|e| HarnessError::io(path, e))?;
            }
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
    }
    if let Some(path) = &cfg.summary {
        write_json(path, &summary)?;
    }
    Ok(ExperimentOutcome { trials, summary })
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_csv<'a, T: Serialize + 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Violations found in a recorded trial, recomputed from its JSONL trace.
pub fn recheck_trace(text: &str) -> Result<Vec<Vec<Violation>>, HarnessError> {
    let runs = sleepy_consensus::trace::read_runs(text.as_bytes())?;
    Ok(runs
        .iter()
        .map(|r| {
            sleepy_consensus::check::check_run(&r.rounds, &r.decisions, &r.header.check_context())
        })
        .collect())
}
