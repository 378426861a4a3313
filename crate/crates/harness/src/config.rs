use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepy_consensus::adversary::{AdversaryStrategy, CrashCount, ExhaustiveCaps};
use sleepy_consensus::{ProtocolKind, Value};

use crate::HarnessError;

/// Where a trial's inputs come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSpec {
    Explicit(Vec<Value>),
    AllZero,
    AllOne,
    /// Input 1 at one player, 0 elsewhere.
    OneHot(u32),
    /// Seeded draw per trial: bits for the binary protocol, `[0, n³]` otherwise.
    Random(u64),
}

impl InputSpec {
    pub fn generate(
        &self,
        protocol: ProtocolKind,
        n: u32,
        trial: u64,
    ) -> Result<Vec<Value>, HarnessError> {
        let inputs = match self {
            InputSpec::Explicit(v) => {
                if v.len() != n as usize {
                    return Err(HarnessError::config(format!(
                        "{} inputs given for n={n}",
                        v.len()
                    )));
                }
                v.clone()
            }
            InputSpec::AllZero => vec![0; n as usize],
            InputSpec::AllOne => vec![1; n as usize],
            InputSpec::OneHot(i) => {
                if *i >= n {
                    return Err(HarnessError::config(format!(
                        "one-hot index {i} out of range for n={n}"
                    )));
                }
                (0..n).map(|p| (p == *i) as Value).collect()
            }
            InputSpec::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial));
                let top = match protocol {
                    ProtocolKind::Binary => 1,
                    ProtocolKind::Multi => (n as Value).pow(3),
                };
                (0..n).map(|_| rng.gen_range(0..=top)).collect()
            }
        };
        Ok(inputs)
    }
}

impl FromStr for InputSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::config(format!("unrecognised input spec `{s}`"));
        match s {
            "all0" => return Ok(InputSpec::AllZero),
            "all1" => return Ok(InputSpec::AllOne),
            _ => {}
        }
        if let Some(i) = s.strip_prefix("onehot:") {
            return i.parse().map(InputSpec::OneHot).map_err(|_| bad());
        }
        if let Some(seed) = s.strip_prefix("rand:") {
            return seed.parse().map(InputSpec::Random).map_err(|_| bad());
        }
        s.split(',')
            .map(|t| t.trim().parse::<Value>())
            .collect::<Result<Vec<_>, _>>()
            .map(InputSpec::Explicit)
            .map_err(|_| bad())
    }
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSpec::Explicit(v) => {
                let parts: Vec<String> = v.iter().map(Value::to_string).collect();
                f.write_str(&parts.join(","))
            }
            InputSpec::AllZero => f.write_str("all0"),
            InputSpec::AllOne => f.write_str("all1"),
            InputSpec::OneHot(i) => write!(f, "onehot:{i}"),
            InputSpec::Random(s) => write!(f, "rand:{s}"),
        }
    }
}

/// `--adversary` values: `none`, `rand:SEED:COUNT`, `chain`, `exhaustive:BUDGET`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversarySpec {
    None,
    Random { seed: u64, count: usize },
    Chain,
    Exhaustive { budget: u64 },
}

impl AdversarySpec {
    pub fn strategy(&self) -> AdversaryStrategy {
        match *self {
            AdversarySpec::None => AdversaryStrategy::CrashFree,
            AdversarySpec::Random { seed, count } => AdversaryStrategy::Random {
                seed,
                count,
                profile: CrashCount::Uniform,
            },
            AdversarySpec::Chain => AdversaryStrategy::ChainCutter,
            AdversarySpec::Exhaustive { budget } => {
                AdversaryStrategy::Exhaustive(ExhaustiveCaps::with_budget(budget))
            }
        }
    }
}

impl FromStr for AdversarySpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::config(format!("unrecognised adversary `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["none"] => Ok(AdversarySpec::None),
            ["chain"] => Ok(AdversarySpec::Chain),
            ["rand", seed, count] => Ok(AdversarySpec::Random {
                seed: seed.parse().map_err(|_| bad())?,
                count: count.parse().map_err(|_| bad())?,
            }),
            ["exhaustive", budget] => Ok(AdversarySpec::Exhaustive {
                budget: budget.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversarySpec::None => f.write_str("none"),
            AdversarySpec::Random { seed, count } => write!(f, "rand:{seed}:{count}"),
            AdversarySpec::Chain => f.write_str("chain"),
            AdversarySpec::Exhaustive { budget } => write!(f, "exhaustive:{budget}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub n: u32,
    pub f: u32,
    pub inputs: InputSpec,
    pub adversary: AdversarySpec,
    /// Committee size override; binary protocol only.
    pub k: Option<u32>,
    /// Number of input draws; each is run against every schedule of the adversary.
    pub trials: u64,
    /// Replay this schedule instead of consulting the adversary.
    pub schedule: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub check: bool,
    /// Worker threads; `None` reads `SLEEPY_WORKERS`, falling back to the rayon default.
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(protocol: ProtocolKind, n: u32, f: u32, inputs: InputSpec) -> Self {
        ExperimentConfig {
            protocol,
            n,
            f,
            inputs,
            adversary: AdversarySpec::None,
            k: None,
            trials: 1,
            schedule: None,
            trace: None,
            metrics: None,
            summary: None,
            check: true,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n == 0 {
            return Err(HarnessError::config("n must be positive"));
        }
        if self.f >= self.n {
            return Err(HarnessError::config(format!(
                "f={} must be smaller than n={}",
                self.f, self.n
            )));
        }
        if self.trials == 0 {
            return Err(HarnessError::config("trials must be at least 1"));
        }
        if self.k.is_some() && self.protocol != ProtocolKind::Binary {
            return Err(HarnessError::config(
                "committee size override applies to the binary protocol only",
            ));
        }
        if let Some(k) = self.k {
            if k == 0 || k > self.n {
                return Err(HarnessError::config(format!(
                    "committee size {k} outside [1, {}]",
                    self.n
                )));
            }
        }
        if let AdversarySpec::Random { count: 0, .. } = self.adversary {
            return Err(HarnessError::config("random adversary needs count >= 1"));
        }
        Ok(())
    }
}

/// Worker count from `SLEEPY_WORKERS`, if set and valid.
pub fn workers_from_env() -> Option<usize> {
    std::env::var("SLEEPY_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
}
