//! Binary consensus by forwarding 1-valued messages through `f` committees of
//! size `k` (default `⌈√n⌉`).
//!
//! Only the bit 1 is ever sent. A player becomes *active* when it holds input 1
//! in round 1, or when it first receives a 1 while its estimate is still 0. An
//! active player stays awake for the next `⌈(f+1)/k⌉` rounds and sends 1 to the
//! committee whose awake round it is. In round `f+1` everyone wakes, holders of
//! a 1 (estimate or input) broadcast, and all decide their estimate.

use crate::committees::{join_committees, CommitteeTable};
use crate::engine::{Outbox, Protocol};
use crate::{ceil_div, ceil_sqrt, Error, PlayerId, Result, Round, Value};

#[derive(Debug, Clone)]
pub struct Binary {
    n: u32,
    f: u32,
    burst: u32,
    table: CommitteeTable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryState {
    pub me: PlayerId,
    pub input: bool,
    pub estimate: bool,
    /// Remaining forwarding rounds.
    pub remaining: u32,
    pub activations: u32,
}

impl Binary {
    /// Committees of size `⌈√n⌉`.
    pub fn new(n: u32, f: u32) -> Result<Self> {
        Self::with_committee_size(n, f, ceil_sqrt(n as u64) as u32)
    }

    /// Committees of size `k`; an active player forwards for `⌈(f+1)/k⌉` rounds.
    pub fn with_committee_size(n: u32, f: u32, k: u32) -> Result<Self> {
        if f >= n {
            return Err(Error::config(format!("f={f} must be smaller than n={n}")));
        }
        let table = join_committees(n, f, k)?;
        Ok(Binary {
            n,
            f,
            burst: ceil_div(f as u64 + 1, k as u64) as u32,
            table,
        })
    }

    pub fn committees(&self) -> &CommitteeTable {
        &self.table
    }

    /// Length of one forwarding burst, `⌈(f+1)/k⌉`.
    pub fn burst(&self) -> u32 {
        self.burst
    }

    pub fn committee_size(&self) -> u32 {
        self.table.size()
    }

    fn activate(&self, s: &mut BinaryState) {
        s.remaining = self.burst;
        s.activations += 1;
    }
}

impl Protocol for Binary {
    type State = BinaryState;

    fn player_count(&self) -> u32 {
        self.n
    }

    fn horizon(&self) -> Round {
        self.f + 1
    }

    fn validate_inputs(&self, inputs: &[Value]) -> Result<()> {
        match inputs.iter().position(|&x| x > 1) {
            Some(i) => Err(Error::config(format!(
                "binary protocol input of p{i} is {}, expected 0 or 1",
                inputs[i]
            ))),
            None => Ok(()),
        }
    }

    fn init(&self, me: PlayerId, input: Value) -> BinaryState {
        BinaryState {
            me,
            input: input == 1,
            estimate: false,
            remaining: 0,
            activations: 0,
        }
    }

    fn on_round_start(&self, s: &BinaryState, round: Round) -> bool {
        round == 1 || round == self.f + 1 || s.remaining > 0 || self.table.is_member(round, s.me)
    }

    fn on_wake(&self, s: &mut BinaryState, round: Round, out: &mut Outbox) {
        if round == self.f + 1 {
            if s.estimate || s.input {
                out.broadcast(self.n, 1);
            }
        } else if round == 1 {
            if s.input {
                self.activate(s);
                out.send_all(self.table.committee(1), 1);
            }
        } else if s.remaining > 0 {
            s.remaining -= 1;
            out.send_all(self.table.committee(round), 1);
        }
    }

    fn on_receive(&self, s: &mut BinaryState, round: Round, payloads: &[Value]) {
        let got_one = payloads.contains(&1);
        if round == self.f + 1 {
            if got_one || s.input {
                s.estimate = true;
            }
        } else if got_one && !s.estimate && (round == 1 || self.table.is_member(round, s.me)) {
            s.estimate = true;
            self.activate(s);
        }
    }

    fn on_terminate(&self, s: &BinaryState) -> Value {
        s.estimate as Value
    }

    fn estimate(&self, s: &BinaryState) -> Value {
        s.estimate as Value
    }

    fn activations(&self, s: &BinaryState) -> u32 {
        s.activations
    }
}

/// Per-player awake-round cap with committees of size `⌈√n⌉`:
/// `2 + ⌈f·⌈√n⌉/n⌉ + 2·⌈(f+1)/⌈√n⌉⌉`.
pub fn bin_energy_bound(n: u32, f: u32) -> u64 {
    bin_energy_bound_with(n, f, ceil_sqrt(n as u64) as u32)
}

/// Same cap for committee size `k`: first and last round, one round per
/// committee membership, and at most two forwarding bursts.
pub fn bin_energy_bound_with(n: u32, f: u32, k: u32) -> u64 {
    let (n, f, k) = (n as u64, f as u64, k as u64);
    2 + ceil_div(f * k, n) + 2 * ceil_div(f + 1, k)
}

/// Total message cap `4n²`.
pub fn bin_message_cap(n: u32) -> u64 {
    4 * n as u64 * n as u64
}
