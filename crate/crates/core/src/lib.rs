//! Crash-tolerant consensus in the synchronous sleeping model.
//!
//! Players execute in lock-step rounds and may sleep through any round; a
//! message addressed to a sleeping player is dropped. Up to `f` players may
//! crash, and a crashing player's final-round messages reach only the subset
//! of recipients chosen by the adversary.
//!
//! The crate provides:
//!
//! - [`engine`]: the round loop, sleep/crash delivery semantics and traces,
//! - [`committees`]: static committee assignment shared by both protocols,
//! - [`multivalue`] and [`binary`]: the two consensus protocols,
//! - [`adversary`]: crash schedule generators (random, chain cutting, exhaustive),
//! - [`check`]: trace checkers for the consensus properties and complexity caps,
//! - [`trace`]: the JSONL trace format.

pub mod adversary;
pub mod binary;
pub mod check;
pub mod committees;
pub mod engine;
mod error;
pub mod multivalue;
pub mod schedule;
pub mod trace;
mod types;

pub use error::{Error, Result};
pub use types::{LossReason, Message, PlayerId, ProtocolKind, Round, Value};

/// `⌈√n⌉`, computed exactly on integers.
pub fn ceil_sqrt(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while r * r < n {
        r += 1;
    }
    r
}

pub(crate) fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}
