use std::fmt;

use serde::{Deserialize, Serialize};

/// Round number, starting at 1.
pub type Round = u32;

/// Message payload and input/decision value.
pub type Value = u64;

/// Identifier of a player, in `[0, n)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PlayerId(pub u32);

impl PlayerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for PlayerId {
    fn from(i: usize) -> Self {
        PlayerId(i as u32)
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// A point-to-point message. Messages never outlive the round they were sent in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Message {
    pub sender: PlayerId,
    pub recipient: PlayerId,
    pub round: Round,
    pub payload: Value,
}

/// Why a sent message was not delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossReason {
    RecipientAsleep,
    SenderCrashMask,
    SenderAlreadyCrashed,
}

/// Which consensus protocol a run used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Multi,
    Binary,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Multi => "multi",
            ProtocolKind::Binary => "binary",
        })
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "multi" => Ok(ProtocolKind::Multi),
            "binary" => Ok(ProtocolKind::Binary),
            other => Err(crate::Error::config(format!("unknown protocol `{other}`"))),
        }
    }
}
