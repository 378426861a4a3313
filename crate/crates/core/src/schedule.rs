//! Crash schedules and their canonical text form.
//!
//! Text form, one crash per line, sorted by `(round, victim)`:
//!
//! ```text
//! # round victim mask
//! 1 2 [1]
//! 2 1 []
//! ```
//!
//! Blank lines and lines starting with `#` are ignored when parsing.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, PlayerId, Result, Round};

/// One crash: `victim` stops in `round`, and of its round-`round` messages only
/// those addressed to a member of `mask` are delivered.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Crash {
    pub round: Round,
    pub victim: PlayerId,
    pub mask: BTreeSet<PlayerId>,
}

impl Crash {
    pub fn new(round: Round, victim: PlayerId, mask: impl IntoIterator<Item = PlayerId>) -> Self {
        Crash {
            round,
            victim,
            mask: mask.into_iter().collect(),
        }
    }

    /// Crash in `round` with none of the victim's messages delivered.
    pub fn silent(round: Round, victim: PlayerId) -> Self {
        Crash::new(round, victim, [])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrashSchedule {
    crashes: Vec<Crash>,
}

impl CrashSchedule {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a schedule, sorting crashes into canonical order.
    pub fn new(mut crashes: Vec<Crash>) -> Self {
        crashes.sort_by_key(|c| (c.round, c.victim));
        CrashSchedule { crashes }
    }

    pub fn crashes(&self) -> &[Crash] {
        &self.crashes
    }

    pub fn len(&self) -> usize {
        self.crashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crashes.is_empty()
    }

    /// Crashes taking effect in `round`.
    pub fn in_round(&self, round: Round) -> impl Iterator<Item = &Crash> {
        self.crashes.iter().filter(move |c| c.round == round)
    }

    pub fn crash_of(&self, victim: PlayerId) -> Option<&Crash> {
        self.crashes.iter().find(|c| c.victim == victim)
    }

    /// Checks the schedule against a run with `n` players, crash budget `f`
    /// and `horizon` rounds.
    pub fn validate(&self, n: u32, f: u32, horizon: Round) -> Result<()> {
        if self.crashes.len() > f as usize {
            return Err(Error::config(format!(
                "schedule crashes {} players but the budget is f={f}",
                self.crashes.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &self.crashes {
            if c.victim.0 >= n {
                return Err(Error::config(format!("victim {} out of range", c.victim)));
            }
            if !seen.insert(c.victim) {
                return Err(Error::config(format!("victim {} crashes twice", c.victim)));
            }
            if c.round == 0 || c.round > horizon {
                return Err(Error::config(format!(
                    "crash round {} outside [1, {horizon}]",
                    c.round
                )));
            }
            if let Some(bad) = c.mask.iter().find(|p| p.0 >= n) {
                return Err(Error::config(format!("mask entry {bad} out of range")));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for CrashSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.crashes {
            let mask: Vec<String> = c.mask.iter().map(|p| p.0.to_string()).collect();
            writeln!(f, "{} {} [{}]", c.round, c.victim.0, mask.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for CrashSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut crashes = Vec::new();
        for (idx, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| Error::Parse {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (head, mask) = line
                .split_once('[')
                .ok_or_else(|| err("expected `round victim [mask]`"))?;
            let mask = mask
                .strip_suffix(']')
                .ok_or_else(|| err("unterminated mask"))?;
            let mut fields = head.split_whitespace();
            let round = fields
                .next()
                .and_then(|t| t.parse::<Round>().ok())
                .ok_or_else(|| err("bad round"))?;
            let victim = fields
                .next()
                .and_then(|t| t.parse::<u32>().ok())
                .ok_or_else(|| err("bad victim"))?;
            if fields.next().is_some() {
                return Err(err("trailing fields before mask"));
            }
            let mask = mask
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<u32>().map(PlayerId))
                .collect::<std::result::Result<BTreeSet<_>, _>>()
                .map_err(|_| err("bad mask entry"))?;
            crashes.push(Crash {
                round,
                victim: PlayerId(victim),
                mask,
            });
        }
        Ok(CrashSchedule::new(crashes))
    }
}
