//! Parameter grids over `n`, `f`, committee size and adversary.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sleepy_consensus::ProtocolKind;

use crate::config::{AdversarySpec, ExperimentConfig, InputSpec};
use crate::experiment::{run_experiment, write_csv, write_json, Summary};
use crate::HarnessError;

/// A value of `f` that may depend on `n`: `7`, `n-1` or `n/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FExpr {
    Const(u32),
    NMinus(u32),
    NDiv(u32),
}

impl FExpr {
    pub fn eval(self, n: u32) -> Option<u32> {
        match self {
            FExpr::Const(f) => Some(f),
            FExpr::NMinus(d) => n.checked_sub(d),
            FExpr::NDiv(d) => n.checked_div(d),
        }
    }
}

impl FromStr for FExpr {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::config(format!("unrecognised f expression `{s}`"));
        let t = s.trim();
        if t == "n" {
            return Ok(FExpr::NMinus(0));
        }
        if let Some(d) = t.strip_prefix("n-") {
            return d.parse().map(FExpr::NMinus).map_err(|_| bad());
        }
        if let Some(d) = t.strip_prefix("n/") {
            return match d.parse() {
                Ok(0) | Err(_) => Err(bad()),
                Ok(d) => Ok(FExpr::NDiv(d)),
            };
        }
        t.parse().map(FExpr::Const).map_err(|_| bad())
    }
}

impl fmt::Display for FExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FExpr::Const(c) => write!(f, "{c}"),
            FExpr::NMinus(d) => write!(f, "n-{d}"),
            FExpr::NDiv(d) => write!(f, "n/{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepConfig {
    pub protocols: Vec<ProtocolKind>,
    pub ns: Vec<u32>,
    pub fs: Vec<FExpr>,
    /// Binary committee sizes; empty means the default `⌈√n⌉` only.
    pub ks: Vec<u32>,
    pub adversaries: Vec<AdversarySpec>,
    pub inputs: InputSpec,
    pub trials: u64,
    pub check: bool,
    pub workers: Option<usize>,
    pub metrics: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(protocols: Vec<ProtocolKind>, ns: Vec<u32>, fs: Vec<FExpr>) -> Self {
        SweepConfig {
            protocols,
            ns,
            fs,
            ks: Vec::new(),
            adversaries: vec![AdversarySpec::None],
            inputs: InputSpec::AllOne,
            trials: 1,
            check: true,
            workers: None,
            metrics: None,
            summary: None,
        }
    }

    /// Grid points in row order. Points with `f >= n` or `k > n` are left out.
    pub fn points(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &protocol in &self.protocols {
            for &n in &self.ns {
                let mut fs: Vec<u32> = self.fs.iter().filter_map(|e| e.eval(n)).collect();
                fs.retain(|&f| f < n);
                fs.dedup();
                let ks: Vec<Option<u32>> = match protocol {
                    ProtocolKind::Binary if !self.ks.is_empty() => self
                        .ks
                        .iter()
                        .filter(|&&k| k >= 1 && k <= n)
                        .map(|&k| Some(k))
                        .collect(),
                    _ => vec![None],
                };
                for &f in &fs {
                    for &k in &ks {
                        for &adversary in &self.adversaries {
                            let mut cfg =
                                ExperimentConfig::new(protocol, n, f, self.inputs.clone());
                            cfg.k = k;
                            cfg.adversary = adversary;
                            cfg.trials = self.trials;
                            cfg.check = self.check;
                            cfg.workers = self.workers;
                            out.push(cfg);
                        }
                    }
                }
            }
        }
        out
    }
}

/// One aggregated row per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub protocol: ProtocolKind,
    pub n: u32,
    pub f: u32,
    pub k: u32,
    pub adversary: String,
    pub trials: u64,
    pub max_energy: u32,
    pub mean_energy: f64,
    pub mean_awake: f64,
    pub max_messages: u64,
    pub energy_cap: u64,
    pub message_cap: u64,
    pub violations: u64,
    pub exact_rounds: bool,
    pub weak_spacing: bool,
}

impl From<&Summary> for SweepRow {
    fn from(s: &Summary) -> Self {
        SweepRow {
            protocol: s.protocol.unwrap_or(ProtocolKind::Multi),
            n: s.n,
            f: s.f,
            k: s.k,
            adversary: s.adversary.clone(),
            trials: s.trials,
            max_energy: s.max_energy,
            mean_energy: s.mean_energy,
            mean_awake: s.mean_awake,
            max_messages: s.max_messages,
            energy_cap: s.energy_cap,
            message_cap: s.message_cap,
            violations: s.violations,
            exact_rounds: s.exact_rounds,
            weak_spacing: s.weak_spacing,
        }
    }
}

/// Committee size with the lowest worst-case energy at one `(n, f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestK {
    pub n: u32,
    pub f: u32,
    pub k: u32,
    pub max_energy: u32,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Binary rows only; ties go to the lower mean, then the smaller `k`.
    pub best_k: Vec<BestK>,
    pub violations: u64,
}

impl SweepOutcome {
    pub fn exit_code(&self) -> i32 {
        (self.violations > 0) as i32
    }
}

fn best_k(rows: &[SweepRow]) -> Vec<BestK> {
    let mut best: BTreeMap<(u32, u32), BestK> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.protocol == ProtocolKind::Binary) {
        let cand = BestK {
            n: r.n,
            f: r.f,
            k: r.k,
            max_energy: r.max_energy,
            mean_energy: r.mean_energy,
        };
        let key = |b: &BestK| (b.max_energy, b.mean_energy, b.k);
        best.entry((r.n, r.f))
            .and_modify(|b| {
                if key(&cand).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Less) {
                    *b = cand.clone();
                }
            })
            .or_insert_with(|| cand.clone());
    }
    best.into_values().collect()
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, HarnessError> {
    if cfg.protocols.is_empty() || cfg.ns.is_empty() || cfg.fs.is_empty() {
        return Err(HarnessError::config(
            "sweep needs at least one protocol, n and f",
        ));
    }
    let points = cfg.points();
    if points.is_empty() {
        return Err(HarnessError::config("sweep grid has no valid point"));
    }
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        let out = run_experiment(p)?;
        rows.push(SweepRow::from(&out.summary));
    }
    let outcome = SweepOutcome {
        best_k: best_k(&rows),
        violations: rows.iter().map(|r| r.violations).sum(),
        rows,
    };
    if let Some(path) = &cfg.metrics {
        write_csv(path, outcome.rows.iter())?;
    }
    if let Some(path) = &cfg.summary {
        write_json(path, &outcome)?;
    }
    Ok(outcome)
}
