//! Trace checkers.
//!
//! [`TraceChecker`] consumes a run one round at a time, so traces with
//! hundreds of thousands of messages never have to be held in memory, and
//! [`check_run`] wraps it for a recorded trace. Every check is a pure function
//! of the trace, the decisions and the run configuration.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binary::{bin_energy_bound_with, bin_message_cap};
use crate::engine::RoundTrace;
use crate::multivalue::{mv_energy_bound, mv_message_cap};
use crate::{ceil_sqrt, LossReason, Message, PlayerId, ProtocolKind, Round, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    /// Two surviving players decided differently.
    Agreement {
        values: Vec<Value>,
    },
    /// A decision is nobody's input.
    Validity {
        player: PlayerId,
        value: Value,
    },
    /// A surviving player has no decision, or a crashed one has.
    Termination {
        player: PlayerId,
    },
    /// The run did not last exactly `f+1` rounds.
    RoundCount {
        expected: Round,
        actual: Round,
    },
    /// A crash-free run decided something other than the exact oracle.
    CrashFreeOracle {
        expected: Value,
        actual: Value,
    },
    EnergyCap {
        player: PlayerId,
        awake: u64,
        cap: u64,
    },
    MessageCap {
        messages: u64,
        cap: u64,
    },
    /// A crash-free multi-value run's message count differs from the formula.
    MessageCount {
        messages: u64,
        expected: u64,
    },
    PostCrashSilence {
        round: Round,
        player: PlayerId,
    },
    SleepIsolation {
        round: Round,
        sender: PlayerId,
        recipient: PlayerId,
    },
    /// `sent` is not the disjoint union of `delivered` and `lost`.
    Conservation {
        round: Round,
    },
    /// A loss reason contradicts the awake set or the crash record.
    LossReason {
        round: Round,
        sender: PlayerId,
        recipient: PlayerId,
    },
    CrashBudget {
        crashed: u32,
        budget: u32,
    },
    EstimateDecreased {
        player: PlayerId,
        round: Round,
    },
    NonOnePayload {
        round: Round,
        payload: Value,
    },
    ExcessActivations {
        player: PlayerId,
        activations: u32,
    },
    /// Round numbers are missing, repeated or out of order.
    MalformedTrace {
        round: Round,
    },
}

impl Violation {
    /// Short stable name, used in CSV and summaries.
    pub fn name(&self) -> &'static str {
        match self {
            Violation::Agreement { .. } => "agreement",
            Violation::Validity { .. } => "validity",
            Violation::Termination { .. } => "termination",
            Violation::RoundCount { .. } => "round_count",
            Violation::CrashFreeOracle { .. } => "crash_free_oracle",
            Violation::EnergyCap { .. } => "energy_cap",
            Violation::MessageCap { .. } => "message_cap",
            Violation::MessageCount { .. } => "message_count",
            Violation::PostCrashSilence { .. } => "post_crash_silence",
            Violation::SleepIsolation { .. } => "sleep_isolation",
            Violation::Conservation { .. } => "conservation",
            Violation::LossReason { .. } => "loss_reason",
            Violation::CrashBudget { .. } => "crash_budget",
            Violation::EstimateDecreased { .. } => "estimate_decreased",
            Violation::NonOnePayload { .. } => "non_one_payload",
            Violation::ExcessActivations { .. } => "excess_activations",
            Violation::MalformedTrace { .. } => "malformed_trace",
        }
    }

    /// Whether this is one of the three consensus properties.
    pub fn is_consensus(&self) -> bool {
        matches!(
            self,
            Violation::Agreement { .. }
                | Violation::Validity { .. }
                | Violation::Termination { .. }
                | Violation::RoundCount { .. }
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {self:?}", self.name())
    }
}

/// Observations about a run that contradict a step of the binary protocol's
/// agreement argument without breaking any consensus property.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AnalysisFlag {
    /// Someone decided 1 although the tracked set of 1-holders (the largest-id
    /// input-1 player plus everyone who received a 1 in rounds `1..=f`) has at
    /// most `f` members.
    OneHolderGrowth { holders: u32, f: u32 },
}

impl AnalysisFlag {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisFlag::OneHolderGrowth { .. } => "one_holder_growth",
        }
    }
}

/// Everything the checker found in one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub violations: Vec<Violation>,
    pub flags: Vec<AnalysisFlag>,
}

/// What the checker needs to know about the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckContext {
    pub protocol: ProtocolKind,
    pub n: u32,
    pub f: u32,
    /// Binary committee size; `None` means `⌈√n⌉`.
    pub committee_size: Option<u32>,
    pub inputs: Vec<Value>,
}

impl CheckContext {
    pub fn new(protocol: ProtocolKind, n: u32, f: u32, inputs: Vec<Value>) -> Self {
        CheckContext {
            protocol,
            n,
            f,
            committee_size: None,
            inputs,
        }
    }

    pub fn with_committee_size(mut self, k: Option<u32>) -> Self {
        self.committee_size = k;
        self
    }

    pub fn energy_cap(&self) -> u64 {
        match self.protocol {
            ProtocolKind::Multi => mv_energy_bound(self.n, self.f),
            ProtocolKind::Binary => {
                let k = self
                    .committee_size
                    .unwrap_or_else(|| ceil_sqrt(self.n as u64) as u32);
                bin_energy_bound_with(self.n, self.f, k)
            }
        }
    }

    pub fn message_cap(&self) -> u64 {
        match self.protocol {
            ProtocolKind::Multi => mv_message_cap(self.n, self.f),
            ProtocolKind::Binary => bin_message_cap(self.n),
        }
    }

    fn crash_free_decision(&self) -> Option<Value> {
        match self.protocol {
            ProtocolKind::Multi => self.inputs.iter().copied().max(),
            ProtocolKind::Binary => Some(self.inputs.contains(&1) as Value),
        }
    }
}

/// Incremental checker fed one [`RoundTrace`] at a time.
pub struct TraceChecker {
    ctx: CheckContext,
    violations: Vec<Violation>,
    flags: Vec<AnalysisFlag>,
    rounds_seen: Round,
    crashed_at: Vec<Option<Round>>,
    awake_rounds: Vec<u64>,
    total_messages: u64,
    last_estimate: Vec<Option<Value>>,
    max_activations: Vec<u32>,
    one_holders: BTreeSet<PlayerId>,
}

impl TraceChecker {
    pub fn new(ctx: CheckContext) -> Self {
        let n = ctx.n as usize;
        let mut one_holders = BTreeSet::new();
        if ctx.protocol == ProtocolKind::Binary {
            if let Some(top) = ctx.inputs.iter().rposition(|&x| x == 1) {
                one_holders.insert(PlayerId::from(top));
            }
        }
        TraceChecker {
            ctx,
            violations: Vec::new(),
            flags: Vec::new(),
            rounds_seen: 0,
            crashed_at: vec![None; n],
            awake_rounds: vec![0; n],
            total_messages: 0,
            last_estimate: vec![None; n],
            max_activations: vec![0; n],
            one_holders,
        }
    }

    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    fn crashed_before(&self, p: PlayerId, round: Round) -> bool {
        self.crashed_at
            .get(p.index())
            .copied()
            .flatten()
            .is_some_and(|r| r < round)
    }

    pub fn observe(&mut self, t: &RoundTrace) {
        let round = t.round;
        let n = self.ctx.n as usize;
        if round != self.rounds_seen + 1 {
            self.push(Violation::MalformedTrace { round });
        }
        self.rounds_seen = self.rounds_seen.max(round);

        for &p in &t.crashes {
            match self.crashed_at.get_mut(p.index()) {
                Some(slot @ None) => *slot = Some(round),
                _ => self.push(Violation::MalformedTrace { round }),
            }
        }

        let mut awake = vec![false; n];
        for &p in &t.awake {
            if p.index() >= n {
                self.push(Violation::MalformedTrace { round });
                continue;
            }
            awake[p.index()] = true;
            self.awake_rounds[p.index()] += 1;
            if self.crashed_before(p, round) {
                self.push(Violation::PostCrashSilence { round, player: p });
            }
        }

        for m in &t.sent {
            if self.crashed_before(m.sender, round) {
                self.push(Violation::PostCrashSilence {
                    round,
                    player: m.sender,
                });
            }
            if self.ctx.protocol == ProtocolKind::Binary && m.payload != 1 {
                self.push(Violation::NonOnePayload {
                    round,
                    payload: m.payload,
                });
            }
        }
        self.total_messages += t.sent.len() as u64;

        for m in &t.delivered {
            if !awake.get(m.recipient.index()).copied().unwrap_or(false) {
                self.push(Violation::SleepIsolation {
                    round,
                    sender: m.sender,
                    recipient: m.recipient,
                });
            }
            if self.ctx.protocol == ProtocolKind::Binary
                && m.payload == 1
                && (round as u64) <= self.ctx.f as u64
            {
                self.one_holders.insert(m.recipient);
            }
        }

        for (m, reason) in &t.lost {
            let recipient_awake = awake.get(m.recipient.index()).copied().unwrap_or(false);
            let sender_crash = self.crashed_at.get(m.sender.index()).copied().flatten();
            let consistent = match reason {
                LossReason::RecipientAsleep => !recipient_awake,
                LossReason::SenderCrashMask => sender_crash == Some(round),
                LossReason::SenderAlreadyCrashed => sender_crash.is_some_and(|r| r < round),
            };
            if !consistent {
                self.push(Violation::LossReason {
                    round,
                    sender: m.sender,
                    recipient: m.recipient,
                });
            }
        }

        if !conserved(&t.sent, &t.delivered, &t.lost) {
            self.push(Violation::Conservation { round });
        }

        for (i, est) in t.estimates.iter().enumerate().take(n) {
            if let (Some(prev), Some(now)) = (self.last_estimate[i], *est) {
                if now < prev {
                    self.push(Violation::EstimateDecreased {
                        player: PlayerId::from(i),
                        round,
                    });
                }
            }
            if est.is_some() {
                self.last_estimate[i] = *est;
            }
        }
        for (i, &a) in t.activations.iter().enumerate().take(n) {
            self.max_activations[i] = self.max_activations[i].max(a);
        }
    }

    pub fn finish(mut self, decisions: &[Option<Value>]) -> CheckReport {
        let ctx = self.ctx.clone();
        let expected_rounds = ctx.f + 1;
        if self.rounds_seen != expected_rounds {
            self.push(Violation::RoundCount {
                expected: expected_rounds,
                actual: self.rounds_seen,
            });
        }

        let crashed = self.crashed_at.iter().filter(|c| c.is_some()).count() as u32;
        if crashed > ctx.f {
            self.push(Violation::CrashBudget {
                crashed,
                budget: ctx.f,
            });
        }

        for i in 0..ctx.n as usize {
            let alive = self.crashed_at[i].is_none();
            let decided = decisions.get(i).copied().flatten();
            if alive != decided.is_some() {
                self.push(Violation::Termination {
                    player: PlayerId::from(i),
                });
            }
        }

        let decided: BTreeSet<Value> = decisions.iter().flatten().copied().collect();
        if decided.len() > 1 {
            self.push(Violation::Agreement {
                values: decided.iter().copied().collect(),
            });
        }
        for (i, d) in decisions.iter().enumerate() {
            if let Some(v) = d {
                if !ctx.inputs.contains(v) {
                    self.push(Violation::Validity {
                        player: PlayerId::from(i),
                        value: *v,
                    });
                }
            }
        }

        if crashed == 0 {
            if let Some(expected) = ctx.crash_free_decision() {
                for &actual in &decided {
                    if actual != expected {
                        self.push(Violation::CrashFreeOracle { expected, actual });
                    }
                }
            }
            if ctx.protocol == ProtocolKind::Multi && self.total_messages != ctx.message_cap() {
                self.push(Violation::MessageCount {
                    messages: self.total_messages,
                    expected: ctx.message_cap(),
                });
            }
        }

        let cap = ctx.energy_cap();
        for i in 0..ctx.n as usize {
            if self.awake_rounds[i] > cap {
                self.push(Violation::EnergyCap {
                    player: PlayerId::from(i),
                    awake: self.awake_rounds[i],
                    cap,
                });
            }
        }
        if self.total_messages > ctx.message_cap() {
            self.push(Violation::MessageCap {
                messages: self.total_messages,
                cap: ctx.message_cap(),
            });
        }

        if ctx.protocol == ProtocolKind::Binary {
            for i in 0..ctx.n as usize {
                if self.max_activations[i] > 2 {
                    self.push(Violation::ExcessActivations {
                        player: PlayerId::from(i),
                        activations: self.max_activations[i],
                    });
                }
            }
            let holders = self.one_holders.len() as u32;
            if decided.contains(&1) && holders <= ctx.f {
                self.flags
                    .push(AnalysisFlag::OneHolderGrowth { holders, f: ctx.f });
            }
        }

        CheckReport {
            violations: self.violations,
            flags: self.flags,
        }
    }
}

/// `delivered ⊎ lost = sent` as multisets.
fn conserved(sent: &[Message], delivered: &[Message], lost: &[(Message, LossReason)]) -> bool {
    if sent.len() != delivered.len() + lost.len() {
        return false;
    }
    // Traces keep delivered and lost in send order, so a merge usually suffices.
    let (mut i, mut j) = (0, 0);
    let merged = sent.iter().all(|m| {
        if delivered.get(i) == Some(m) {
            i += 1;
            true
        } else if lost.get(j).map(|(l, _)| l) == Some(m) {
            j += 1;
            true
        } else {
            false
        }
    });
    if merged {
        return true;
    }
    let mut a = sent.to_vec();
    let mut b: Vec<Message> = delivered
        .iter()
        .copied()
        .chain(lost.iter().map(|(m, _)| *m))
        .collect();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// Violations in a complete recorded run.
pub fn check_run(
    traces: &[RoundTrace],
    decisions: &[Option<Value>],
    ctx: &CheckContext,
) -> Vec<Violation> {
    check_run_report(traces, decisions, ctx).violations
}

/// Violations and analysis flags in a complete recorded run.
pub fn check_run_report(
    traces: &[RoundTrace],
    decisions: &[Option<Value>],
    ctx: &CheckContext,
) -> CheckReport {
    let mut checker = TraceChecker::new(ctx.clone());
    for t in traces {
        checker.observe(t);
    }
    checker.finish(decisions)
}
