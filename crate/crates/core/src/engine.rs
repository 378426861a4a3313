//! Lock-step round engine with sleeping-model and crash semantics.
//!
//! Each round `r`:
//!
//! 1. every player alive at the start of `r` is asked whether it wakes;
//! 2. awake players emit their messages for `r`;
//! 3. the schedule's round-`r` crashes take effect;
//! 4. each message is delivered or lost (see [`loss_reason`]);
//! 5. awake players that did not crash in `r` fold in their delivered payloads.
//!
//! A player crashing in `r` still appears in the round-`r` awake set and sends
//! according to its mask, but never computes again. Execution is single
//! threaded and fully deterministic.

use serde::{Deserialize, Serialize};

use crate::check::Violation;
use crate::schedule::{Crash, CrashSchedule};
use crate::{Error, LossReason, Message, PlayerId, Result, Round, Value};

/// A consensus protocol expressed as per-player round hooks.
///
/// Hooks see only the player's own state, the round number and the payloads
/// delivered to it; there is no other channel between players.
pub trait Protocol {
    type State: Clone;

    fn player_count(&self) -> u32;

    /// Number of rounds the protocol runs; every player decides after the last one.
    fn horizon(&self) -> Round;

    /// Rejects inputs outside the protocol's value domain.
    fn validate_inputs(&self, _inputs: &[Value]) -> Result<()> {
        Ok(())
    }

    fn init(&self, me: PlayerId, input: Value) -> Self::State;

    /// Whether the player is awake in `round`. Evaluated at the start of the round.
    fn on_round_start(&self, state: &Self::State, round: Round) -> bool;

    /// Messages of an awake player for `round`.
    fn on_wake(&self, state: &mut Self::State, round: Round, out: &mut Outbox);

    /// Payloads delivered in `round`, in sender order. Called for every awake,
    /// non-crashing player, even when nothing arrived.
    fn on_receive(&self, state: &mut Self::State, round: Round, payloads: &[Value]);

    fn on_terminate(&self, state: &Self::State) -> Value;

    /// Current estimate, exposed to the trace for monotonicity checks.
    fn estimate(&self, state: &Self::State) -> Value;

    /// How many times the player has (re)started forwarding. Zero for protocols
    /// without that notion.
    fn activations(&self, _state: &Self::State) -> u32 {
        0
    }
}

/// Collects `(recipient, payload)` pairs from one player in one round.
#[derive(Debug, Default)]
pub struct Outbox {
    msgs: Vec<(PlayerId, Value)>,
}

impl Outbox {
    pub fn send(&mut self, to: PlayerId, payload: Value) {
        self.msgs.push((to, payload));
    }

    pub fn send_all<'a>(&mut self, to: impl IntoIterator<Item = &'a PlayerId>, payload: Value) {
        self.msgs.extend(to.into_iter().map(|&p| (p, payload)));
    }

    pub fn broadcast(&mut self, n: u32, payload: Value) {
        self.msgs.extend((0..n).map(|p| (PlayerId(p), payload)));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoundTrace {
    pub round: Round,
    /// Ascending.
    pub awake: Vec<PlayerId>,
    pub sent: Vec<Message>,
    pub delivered: Vec<Message>,
    pub lost: Vec<(Message, LossReason)>,
    /// Players whose crash takes effect this round, ascending.
    pub crashes: Vec<PlayerId>,
    /// End-of-round estimate per player; `None` once crashed.
    pub estimates: Vec<Option<Value>>,
    /// Cumulative activation count per player at the end of the round.
    pub activations: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub awake_rounds: Vec<u32>,
    pub max_awake: u32,
    pub total_messages: u64,
    /// Sum over sent messages of the payload's bit width.
    pub payload_bits: u64,
    pub rounds: Round,
    pub decisions: Vec<Option<Value>>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    /// `None` for crashed players.
    pub decisions: Vec<Option<Value>>,
    pub traces: Vec<RoundTrace>,
    pub metrics: RunMetrics,
}

/// Classifies one message sent in `round`. `None` means delivered.
///
/// Precedence: a sender that crashed earlier cannot have sent at all, so that
/// wins; a sleeping recipient loses the message regardless of the sender; only
/// then does the crashing sender's mask apply.
pub fn loss_reason(
    msg: &Message,
    round: Round,
    recipient_awake: bool,
    sender_crash: Option<&Crash>,
) -> Option<LossReason> {
    match sender_crash {
        Some(c) if c.round < round => Some(LossReason::SenderAlreadyCrashed),
        _ if !recipient_awake => Some(LossReason::RecipientAsleep),
        Some(c) if c.round == round && !c.mask.contains(&msg.recipient) => {
            Some(LossReason::SenderCrashMask)
        }
        _ => None,
    }
}

/// Splits the messages sent in `round` into delivered and lost ones.
pub fn apply_crash_semantics(
    sent: &[Message],
    schedule: &CrashSchedule,
    round: Round,
    awake: &[PlayerId],
) -> (Vec<Message>, Vec<(Message, LossReason)>) {
    let mut delivered = Vec::new();
    let mut lost = Vec::new();
    for msg in sent {
        debug_assert_eq!(msg.round, round);
        let crash = schedule.crash_of(msg.sender).filter(|c| c.round <= round);
        let awake = awake.binary_search(&msg.recipient).is_ok();
        match loss_reason(msg, round, awake, crash) {
            None => delivered.push(*msg),
            Some(r) => lost.push((*msg, r)),
        }
    }
    (delivered, lost)
}

struct Pending {
    round: Round,
    awake: Vec<PlayerId>,
    sent: Vec<Message>,
}

/// A run in progress. Rounds are driven by [`prepare_round`](Self::prepare_round)
/// followed by [`commit_round`](Self::commit_round); cloning between the two
/// lets a caller branch on the crashes applied to the same sent messages.
pub struct Simulation<'p, P: Protocol> {
    protocol: &'p P,
    n: u32,
    horizon: Round,
    states: Vec<P::State>,
    crashed_at: Vec<Option<Round>>,
    next_round: Round,
    awake_rounds: Vec<u32>,
    total_messages: u64,
    payload_bits: u64,
    pending: Option<Pending>,
    inbox: Vec<Vec<Value>>,
}

impl<P: Protocol> Clone for Simulation<'_, P> {
    fn clone(&self) -> Self {
        Simulation {
            protocol: self.protocol,
            n: self.n,
            horizon: self.horizon,
            states: self.states.clone(),
            crashed_at: self.crashed_at.clone(),
            next_round: self.next_round,
            awake_rounds: self.awake_rounds.clone(),
            total_messages: self.total_messages,
            payload_bits: self.payload_bits,
            pending: self.pending.as_ref().map(|p| Pending {
                round: p.round,
                awake: p.awake.clone(),
                sent: p.sent.clone(),
            }),
            inbox: vec![Vec::new(); self.n as usize],
        }
    }
}

fn payload_width(v: Value) -> u64 {
    (64 - v.leading_zeros()).max(1) as u64
}

impl<'p, P: Protocol> Simulation<'p, P> {
    pub fn new(protocol: &'p P, n: u32, f: u32, inputs: &[Value]) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n must be positive"));
        }
        if f >= n {
            return Err(Error::config(format!("f={f} must be smaller than n={n}")));
        }
        if inputs.len() != n as usize {
            return Err(Error::config(format!(
                "expected {n} inputs, got {}",
                inputs.len()
            )));
        }
        if protocol.player_count() != n {
            return Err(Error::config(format!(
                "protocol configured for {} players, run requested {n}",
                protocol.player_count()
            )));
        }
        protocol.validate_inputs(inputs)?;
        let states = inputs
            .iter()
            .enumerate()
            .map(|(i, &x)| protocol.init(PlayerId::from(i), x))
            .collect();
        Ok(Simulation {
            protocol,
            n,
            horizon: protocol.horizon(),
            states,
            crashed_at: vec![None; n as usize],
            next_round: 1,
            awake_rounds: vec![0; n as usize],
            total_messages: 0,
            payload_bits: 0,
            pending: None,
            inbox: vec![Vec::new(); n as usize],
        })
    }

    pub fn player_count(&self) -> u32 {
        self.n
    }

    pub fn horizon(&self) -> Round {
        self.horizon
    }

    pub fn is_finished(&self) -> bool {
        self.pending.is_none() && self.next_round > self.horizon
    }

    pub fn is_alive(&self, p: PlayerId) -> bool {
        self.crashed_at[p.index()].is_none()
    }

    pub fn state(&self, p: PlayerId) -> &P::State {
        &self.states[p.index()]
    }

    /// Runs the wake and send steps of the next round and returns the messages
    /// sent. Idempotent until the round is committed.
    pub fn prepare_round(&mut self) -> &[Message] {
        if self.pending.is_none() {
            assert!(self.next_round <= self.horizon, "run already finished");
            let round = self.next_round;
            let mut awake = Vec::new();
            let mut sent = Vec::new();
            let mut out = Outbox::default();
            for i in 0..self.n as usize {
                if self.crashed_at[i].is_some() {
                    continue;
                }
                if !self.protocol.on_round_start(&self.states[i], round) {
                    continue;
                }
                let me = PlayerId::from(i);
                awake.push(me);
                self.protocol.on_wake(&mut self.states[i], round, &mut out);
                sent.extend(out.msgs.drain(..).map(|(recipient, payload)| Message {
                    sender: me,
                    recipient,
                    round,
                    payload,
                }));
            }
            self.pending = Some(Pending { round, awake, sent });
        }
        &self.pending.as_ref().unwrap().sent
    }

    /// The awake set of the prepared round.
    pub fn pending_awake(&self) -> &[PlayerId] {
        self.pending
            .as_ref()
            .map(|p| p.awake.as_slice())
            .unwrap_or(&[])
    }

    /// Applies `crashes` (all for the current round, distinct alive victims),
    /// delivers messages and runs the receive step.
    pub fn commit_round<'c>(&mut self, crashes: impl IntoIterator<Item = &'c Crash>) -> RoundTrace {
        self.prepare_round();
        let Pending { round, awake, sent } = self.pending.take().unwrap();
        let n = self.n as usize;

        let mut crash_here: Vec<Option<&Crash>> = vec![None; n];
        let mut crashed_ids = Vec::new();
        for c in crashes {
            debug_assert_eq!(c.round, round);
            debug_assert!(self.crashed_at[c.victim.index()].is_none());
            crash_here[c.victim.index()] = Some(c);
            self.crashed_at[c.victim.index()] = Some(round);
            crashed_ids.push(c.victim);
        }
        crashed_ids.sort_unstable();

        let mut is_awake = vec![false; n];
        for p in &awake {
            is_awake[p.index()] = true;
            self.awake_rounds[p.index()] += 1;
        }

        let mut delivered = Vec::with_capacity(sent.len());
        let mut lost = Vec::new();
        for msg in &sent {
            self.total_messages += 1;
            self.payload_bits += payload_width(msg.payload);
            let recipient_awake = is_awake
                .get(msg.recipient.index())
                .copied()
                .unwrap_or(false);
            match loss_reason(msg, round, recipient_awake, crash_here[msg.sender.index()]) {
                None => {
                    self.inbox[msg.recipient.index()].push(msg.payload);
                    delivered.push(*msg);
                }
                Some(reason) => lost.push((*msg, reason)),
            }
        }

        for p in &awake {
            let i = p.index();
            if crash_here[i].is_none() {
                self.protocol
                    .on_receive(&mut self.states[i], round, &self.inbox[i]);
            }
            self.inbox[i].clear();
        }
        for inbox in &mut self.inbox {
            inbox.clear();
        }

        let estimates = (0..n)
            .map(|i| {
                self.crashed_at[i]
                    .is_none()
                    .then(|| self.protocol.estimate(&self.states[i]))
            })
            .collect();
        let activations = self
            .states
            .iter()
            .map(|s| self.protocol.activations(s))
            .collect();

        self.next_round = round + 1;
        RoundTrace {
            round,
            awake,
            sent,
            delivered,
            lost,
            crashes: crashed_ids,
            estimates,
            activations,
        }
    }

    /// Decisions of surviving players and the run's metrics. Violations are
    /// left empty; the checker fills them in.
    pub fn finish(self) -> RunMetrics {
        assert!(self.is_finished(), "run not finished");
        let decisions: Vec<Option<Value>> = self
            .states
            .iter()
            .zip(&self.crashed_at)
            .map(|(s, c)| c.is_none().then(|| self.protocol.on_terminate(s)))
            .collect();
        RunMetrics {
            max_awake: self.awake_rounds.iter().copied().max().unwrap_or(0),
            awake_rounds: self.awake_rounds,
            total_messages: self.total_messages,
            payload_bits: self.payload_bits,
            rounds: self.next_round - 1,
            decisions,
            violations: Vec::new(),
        }
    }
}

/// Runs `protocol` to completion under `schedule`, recording every round.
pub fn run<P: Protocol>(
    protocol: &P,
    n: u32,
    f: u32,
    inputs: &[Value],
    schedule: &CrashSchedule,
) -> Result<RunOutcome> {
    let mut traces = Vec::with_capacity(protocol.horizon() as usize);
    let metrics = run_observed(protocol, n, f, inputs, schedule, |t| traces.push(t))?;
    Ok(RunOutcome {
        decisions: metrics.decisions.clone(),
        traces,
        metrics,
    })
}

/// Like [`run`], but hands each round's trace to `observe` instead of keeping it.
pub fn run_observed<P: Protocol>(
    protocol: &P,
    n: u32,
    f: u32,
    inputs: &[Value],
    schedule: &CrashSchedule,
    mut observe: impl FnMut(RoundTrace),
) -> Result<RunMetrics> {
    let mut sim = Simulation::new(protocol, n, f, inputs)?;
    schedule.validate(n, f, sim.horizon())?;
    for round in 1..=sim.horizon() {
        sim.prepare_round();
        let trace = sim.commit_round(schedule.in_round(round));
        observe(trace);
    }
    Ok(sim.finish())
}
