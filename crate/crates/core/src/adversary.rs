//! Crash schedule generators.
//!
//! The protocols are deterministic, so for fixed inputs any adaptive adversary
//! is matched by some precomputed schedule; every strategy here therefore
//! emits plain [`CrashSchedule`]s.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Protocol, Simulation};
use crate::schedule::{Crash, CrashSchedule};
use crate::{Error, Message, PlayerId, ProtocolKind, Result, Round, Value};

/// How many crashes a random schedule contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrashCount {
    /// Uniform in `[0, f]`.
    #[default]
    Uniform,
    /// Always `min(k, f)`.
    Exactly(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryStrategy {
    CrashFree,
    Random {
        seed: u64,
        count: usize,
        profile: CrashCount,
    },
    ChainCutter,
    Exhaustive(ExhaustiveCaps),
}

impl AdversaryStrategy {
    /// All schedules this strategy emits against `protocol` on `inputs`.
    pub fn schedules<P: Protocol>(
        &self,
        protocol: &P,
        kind: ProtocolKind,
        f: u32,
        inputs: &[Value],
    ) -> Result<Vec<CrashSchedule>> {
        let n = protocol.player_count();
        match self {
            AdversaryStrategy::CrashFree => Ok(vec![CrashSchedule::empty()]),
            AdversaryStrategy::Random {
                seed,
                count,
                profile,
            } => Ok(RandomSchedules::with_profile(n, f, *seed, *count, *profile)?.collect()),
            AdversaryStrategy::ChainCutter => chain_cutter(protocol, kind, f, inputs),
            AdversaryStrategy::Exhaustive(caps) => exhaustive_schedules(protocol, f, inputs, caps),
        }
    }
}

/// Seeded stream of random schedules.
///
/// Each schedule draws its crash count from the profile, victims uniformly
/// without replacement, rounds uniformly in `[1, f+1]`, and each player into
/// the mask independently with probability 1/2. Restricted to the recipients a
/// victim actually addresses, that mask is uniform over their subsets.
#[derive(Debug, Clone)]
pub struct RandomSchedules {
    n: u32,
    f: u32,
    remaining: usize,
    profile: CrashCount,
    rng: ChaCha8Rng,
}

pub fn random_schedules(n: u32, f: u32, seed: u64, count: usize) -> Result<RandomSchedules> {
    RandomSchedules::with_profile(n, f, seed, count, CrashCount::Uniform)
}

impl RandomSchedules {
    pub fn with_profile(
        n: u32,
        f: u32,
        seed: u64,
        count: usize,
        profile: CrashCount,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("random schedule count must be at least 1"));
        }
        if f >= n {
            return Err(Error::config(format!("f={f} must be smaller than n={n}")));
        }
        Ok(RandomSchedules {
            n,
            f,
            remaining: count,
            profile,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Iterator for RandomSchedules {
    type Item = CrashSchedule;

    fn next(&mut self) -> Option<CrashSchedule> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let k = match self.profile {
            CrashCount::Uniform => self.rng.gen_range(0..=self.f),
            CrashCount::Exactly(k) => k.min(self.f),
        };
        let victims = sample(&mut self.rng, self.n as usize, k as usize);
        let crashes = victims
            .into_iter()
            .map(|v| {
                let round = self.rng.gen_range(1..=self.f + 1);
                let mask: Vec<PlayerId> = (0..self.n)
                    .filter(|_| self.rng.gen_bool(0.5))
                    .map(PlayerId)
                    .collect();
                Crash::new(round, PlayerId::from(v), mask)
            })
            .collect();
        Some(CrashSchedule::new(crashes))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Distinct recipients of `sender`'s messages, excluding itself, ascending.
fn addressed(sent: &[Message], sender: PlayerId, payload: Option<Value>) -> Vec<PlayerId> {
    let set: BTreeSet<PlayerId> = sent
        .iter()
        .filter(|m| m.sender == sender && m.recipient != sender)
        .filter(|m| payload.is_none_or(|v| m.payload == v))
        .map(|m| m.recipient)
        .collect();
    set.into_iter().collect()
}

/// Schedules that kill each successive relay of the extremal value (the
/// maximum input, or the bit 1) right as it forwards, letting the value
/// through to exactly one recipient, who becomes the next relay.
///
/// For every initial holder `h` of the extremal value this emits one schedule
/// that crashes `h` silently in round 1, plus one schedule per witness rank
/// `j < |C_1|`: in every round the current relay crashes with its mask set to
/// the `j`-th (mod count) recipient it addresses. A relay that sends nothing
/// in a round is left alone until it does. At most one crash per round; at
/// most `f` in total.
pub fn chain_cutter<P: Protocol>(
    protocol: &P,
    kind: ProtocolKind,
    f: u32,
    inputs: &[Value],
) -> Result<Vec<CrashSchedule>> {
    let n = protocol.player_count();
    // validate once up front
    Simulation::new(protocol, n, f, inputs)?;
    if f == 0 {
        return Ok(Vec::new());
    }
    let extremal = match kind {
        ProtocolKind::Multi => *inputs.iter().max().expect("n >= 1"),
        ProtocolKind::Binary => 1,
    };
    let holders: Vec<PlayerId> = inputs
        .iter()
        .enumerate()
        .filter(|(_, &x)| x == extremal)
        .map(|(i, _)| PlayerId::from(i))
        .collect();

    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for &h in &holders {
        let mut first = Simulation::new(protocol, n, f, inputs)?;
        let width = addressed(first.prepare_round(), h, Some(extremal)).len();
        let ranks = std::iter::once(None).chain((0..width).map(Some));
        for rank in ranks {
            let sched = cut_chain(protocol, f, inputs, extremal, h, rank)?;
            if seen.insert(sched.clone()) {
                out.push(sched);
            }
        }
    }
    Ok(out)
}

fn cut_chain<P: Protocol>(
    protocol: &P,
    f: u32,
    inputs: &[Value],
    extremal: Value,
    holder: PlayerId,
    rank: Option<usize>,
) -> Result<CrashSchedule> {
    let n = protocol.player_count();
    let mut sim = Simulation::new(protocol, n, f, inputs)?;
    let mut relay = Some(holder);
    let mut crashes = Vec::new();
    for round in 1..=sim.horizon() {
        let sent = sim.prepare_round();
        let mut crash = None;
        if let Some(r) = relay.filter(|_| (crashes.len() as u32) < f) {
            let targets = addressed(sent, r, Some(extremal));
            if !targets.is_empty() {
                let c = match rank {
                    None => {
                        relay = None;
                        Crash::silent(round, r)
                    }
                    Some(j) => {
                        let w = targets[j % targets.len()];
                        relay = Some(w);
                        Crash::new(round, r, [w])
                    }
                };
                crash = Some(c);
            }
        }
        sim.commit_round(crash.iter());
        crashes.extend(crash);
    }
    Ok(CrashSchedule::new(crashes))
}

/// Limits on the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExhaustiveCaps {
    /// Most crashes per schedule; clamped to `f`.
    pub max_victims: u32,
    /// Most schedules to enumerate before giving up with [`Error::SpaceTooLarge`].
    pub budget: u64,
}

impl ExhaustiveCaps {
    pub fn new(max_victims: u32, budget: u64) -> Self {
        ExhaustiveCaps {
            max_victims,
            budget,
        }
    }

    /// Full crash budget with the given schedule budget.
    pub fn with_budget(budget: u64) -> Self {
        Self::new(u32::MAX, budget)
    }
}

/// Every schedule of at most `caps.max_victims` crashes against `protocol` on
/// `inputs`, exactly once, in canonical order.
///
/// Round by round, the search branches on which alive players crash (fewer
/// first, then lexicographically) and, for each victim, on every subset of the
/// players it actually addresses that round in the execution shaped by the
/// crashes chosen so far. Messages a victim sends to itself are never
/// delivered. Rounds are explored in order, so each schedule's prefix fixes the
/// message pattern the next choice is enumerated against.
pub fn exhaustive_schedules<P: Protocol>(
    protocol: &P,
    f: u32,
    inputs: &[Value],
    caps: &ExhaustiveCaps,
) -> Result<Vec<CrashSchedule>> {
    let mut out = Vec::new();
    visit_exhaustive(protocol, f, inputs, caps, |s| out.push(s.clone()))?;
    Ok(out)
}

/// Streaming form of [`exhaustive_schedules`]; returns the schedule count.
pub fn visit_exhaustive<P: Protocol>(
    protocol: &P,
    f: u32,
    inputs: &[Value],
    caps: &ExhaustiveCaps,
    mut visit: impl FnMut(&CrashSchedule),
) -> Result<u64> {
    let n = protocol.player_count();
    let sim = Simulation::new(protocol, n, f, inputs)?;
    let mut search = Search {
        horizon: sim.horizon(),
        budget: caps.budget,
        emitted: 0,
        prefix: Vec::new(),
        visit: &mut visit,
    };
    search.round(sim, 1, caps.max_victims.min(f))?;
    Ok(search.emitted)
}

struct Search<'v, V: FnMut(&CrashSchedule)> {
    horizon: Round,
    budget: u64,
    emitted: u64,
    prefix: Vec<Crash>,
    visit: &'v mut V,
}

impl<V: FnMut(&CrashSchedule)> Search<'_, V> {
    fn round<P: Protocol>(
        &mut self,
        mut sim: Simulation<'_, P>,
        round: Round,
        left: u32,
    ) -> Result<()> {
        if round > self.horizon {
            if self.emitted >= self.budget {
                return Err(Error::SpaceTooLarge {
                    budget: self.budget,
                });
            }
            self.emitted += 1;
            let sched = CrashSchedule::new(self.prefix.clone());
            (self.visit)(&sched);
            return Ok(());
        }
        let sent = sim.prepare_round().to_vec();
        let alive: Vec<PlayerId> = (0..sim.player_count())
            .map(PlayerId)
            .filter(|&p| sim.is_alive(p))
            .collect();
        for size in 0..=left.min(alive.len() as u32) as usize {
            let mut combos = Vec::new();
            combinations(&alive, size, &mut Vec::new(), 0, &mut combos);
            for victims in combos {
                let targets: Vec<Vec<PlayerId>> =
                    victims.iter().map(|&v| addressed(&sent, v, None)).collect();
                self.masks(&sim, round, left - size as u32, &victims, &targets, 0)?;
            }
        }
        Ok(())
    }

    /// Enumerates masks for `victims[i..]`, then descends into the next round.
    fn masks<P: Protocol>(
        &mut self,
        sim: &Simulation<'_, P>,
        round: Round,
        left: u32,
        victims: &[PlayerId],
        targets: &[Vec<PlayerId>],
        i: usize,
    ) -> Result<()> {
        if i == victims.len() {
            let mut next = sim.clone();
            let start = self.prefix.len() - victims.len();
            next.commit_round(self.prefix[start..].iter());
            return self.round(next, round + 1, left);
        }
        let t = &targets[i];
        assert!(t.len() < 64, "mask enumeration over {} recipients", t.len());
        for bits in 0..(1u64 << t.len()) {
            let mask = t
                .iter()
                .enumerate()
                .filter(|(b, _)| bits >> b & 1 == 1)
                .map(|(_, &p)| p);
            self.prefix.push(Crash::new(round, victims[i], mask));
            let res = self.masks(sim, round, left, victims, targets, i + 1);
            self.prefix.pop();
            res?;
        }
        Ok(())
    }
}

fn combinations(
    items: &[PlayerId],
    k: usize,
    cur: &mut Vec<PlayerId>,
    start: usize,
    out: &mut Vec<Vec<PlayerId>>,
) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..items.len() {
        cur.push(items[i]);
        combinations(items, k, cur, i + 1, out);
        cur.pop();
    }
}
