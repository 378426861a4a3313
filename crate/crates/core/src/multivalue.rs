//! Multi-value consensus by max-relay through `f` committees of size `f+1`.
//!
//! - Round 1: everyone wakes and sends its input to `C_1`.
//! - Round `h ∈ [2, f]`: members of `C_{h-1}` forward their maximum to `C_h`;
//!   only members of `C_{h-1}` and `C_h` are awake.
//! - Round `f+1`: everyone wakes, `C_f` broadcasts, and all decide the maximum seen.
//!
//! With `f = 0` there is a single round, in which every player broadcasts its
//! input and decides the maximum.

use crate::committees::{join_committees, CommitteeTable};
use crate::engine::{Outbox, Protocol};
use crate::{ceil_div, Error, PlayerId, Result, Round, Value};

#[derive(Debug, Clone)]
pub struct MultiValue {
    n: u32,
    f: u32,
    table: CommitteeTable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiValueState {
    pub me: PlayerId,
    pub input: Value,
    /// Largest value seen so far.
    pub estimate: Value,
}

impl MultiValue {
    pub fn new(n: u32, f: u32) -> Result<Self> {
        if f >= n {
            return Err(Error::config(format!("f={f} must be smaller than n={n}")));
        }
        Ok(MultiValue {
            n,
            f,
            table: join_committees(n, f, f + 1)?,
        })
    }

    pub fn committees(&self) -> &CommitteeTable {
        &self.table
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn f(&self) -> u32 {
        self.f
    }
}

impl Protocol for MultiValue {
    type State = MultiValueState;

    fn player_count(&self) -> u32 {
        self.n
    }

    fn horizon(&self) -> Round {
        self.f + 1
    }

    fn init(&self, me: PlayerId, input: Value) -> MultiValueState {
        MultiValueState {
            me,
            input,
            estimate: input,
        }
    }

    fn on_round_start(&self, s: &MultiValueState, round: Round) -> bool {
        round == 1
            || round == self.f + 1
            || self.table.is_member(round - 1, s.me)
            || self.table.is_member(round, s.me)
    }

    fn on_wake(&self, s: &mut MultiValueState, round: Round, out: &mut Outbox) {
        if self.f == 0 {
            out.broadcast(self.n, s.estimate);
        } else if round == 1 {
            s.estimate = s.input;
            out.send_all(self.table.committee(1), s.estimate);
        } else if round <= self.f {
            if self.table.is_member(round - 1, s.me) {
                out.send_all(self.table.committee(round), s.estimate);
            }
        } else if self.table.is_member(self.f, s.me) {
            out.broadcast(self.n, s.estimate);
        }
    }

    fn on_receive(&self, s: &mut MultiValueState, _round: Round, payloads: &[Value]) {
        s.estimate = payloads.iter().copied().fold(s.estimate, Value::max);
    }

    fn on_terminate(&self, s: &MultiValueState) -> Value {
        s.estimate
    }

    fn estimate(&self, s: &MultiValueState) -> Value {
        s.estimate
    }
}

/// Per-player awake-round cap: rounds 1 and `f+1`, plus two rounds per
/// committee membership, `2 + 2·⌈f(f+1)/n⌉`.
pub fn mv_energy_bound(n: u32, f: u32) -> u64 {
    let (n, f) = (n as u64, f as u64);
    2 + 2 * ceil_div(f * (f + 1), n)
}

/// Message count of a crash-free run; crashes only lower it.
///
/// `n(f+1)` in round 1, `(f+1)²` in each of the `f-1` relay rounds, and
/// `(f+1)n` in the final broadcast. For `f = 0` the single all-to-all round
/// sends `n²`.
pub fn mv_message_cap(n: u32, f: u32) -> u64 {
    let (n, f) = (n as u64, f as u64);
    if f == 0 {
        return n * n;
    }
    n * (f + 1) + (f - 1) * (f + 1) * (f + 1) + (f + 1) * n
}
