use std::collections::BTreeSet;

use sleepy_consensus::adversary::{
    chain_cutter, exhaustive_schedules, random_schedules, visit_exhaustive, ExhaustiveCaps,
};
use sleepy_consensus::binary::Binary;
use sleepy_consensus::check::{check_run, CheckContext};
use sleepy_consensus::engine::{run, Protocol};
use sleepy_consensus::multivalue::MultiValue;
use sleepy_consensus::schedule::CrashSchedule;
use sleepy_consensus::{Error, ProtocolKind, Value};

fn vectors(n: u32, base: u64) -> impl Iterator<Item = Vec<Value>> {
    (0..base.pow(n)).map(move |mut c| {
        (0..n)
            .map(|_| {
                let d = c % base;
                c /= base;
                d
            })
            .collect()
    })
}

/// With one crash allowed the search never branches on a crashed prefix, so
/// the schedule count follows from the crash-free trace alone: the empty
/// schedule plus, for every round and every player, one schedule per subset
/// of the other players it addresses in that round.
fn single_crash_count<P: Protocol>(p: &P, n: u32, inputs: &[Value]) -> u64 {
    let out = run(p, n, 1, inputs, &CrashSchedule::empty()).unwrap();
    let mut total = 1;
    for t in &out.traces {
        for v in 0..n {
            let targets: BTreeSet<u32> = t
                .sent
                .iter()
                .filter(|m| m.sender.0 == v && m.recipient.0 != v)
                .map(|m| m.recipient.0)
                .collect();
            total += 1u64 << targets.len();
        }
    }
    total
}

#[test]
fn single_crash_space_matches_trace_count() {
    for n in 2..=5u32 {
        let caps = ExhaustiveCaps::with_budget(1_000_000);
        let m = MultiValue::new(n, 1).unwrap();
        let b = Binary::new(n, 1).unwrap();
        for inputs in vectors(n, 3) {
            let got = visit_exhaustive(&m, 1, &inputs, &caps, |_| {}).unwrap();
            assert_eq!(got, single_crash_count(&m, n, &inputs), "multi {inputs:?}");
            if inputs.iter().all(|&x| x <= 1) {
                let got = visit_exhaustive(&b, 1, &inputs, &caps, |_| {}).unwrap();
                assert_eq!(got, single_crash_count(&b, n, &inputs), "binary {inputs:?}");
            }
        }
    }
}

#[test]
fn exhaustive_is_canonical_and_valid() {
    let p = MultiValue::new(4, 2).unwrap();
    let inputs = [2, 0, 1, 2];
    let caps = ExhaustiveCaps::with_budget(1_000_000);
    let first = exhaustive_schedules(&p, 2, &inputs, &caps).unwrap();
    let second = exhaustive_schedules(&p, 2, &inputs, &caps).unwrap();
    assert_eq!(first, second);
    let distinct: BTreeSet<&CrashSchedule> = first.iter().collect();
    assert_eq!(distinct.len(), first.len());
    for s in &first {
        s.validate(4, 2, 3).unwrap();
    }
}

#[test]
fn budget_outcome_is_deterministic() {
    let p = Binary::new(4, 2).unwrap();
    let inputs = [1, 0, 1, 0];
    let caps = ExhaustiveCaps::with_budget(1_000_000);
    let full = visit_exhaustive(&p, 2, &inputs, &caps, |_| {});
    assert_eq!(
        full.as_ref().ok(),
        visit_exhaustive(&p, 2, &inputs, &caps, |_| {})
            .as_ref()
            .ok()
    );
    let total = full.unwrap();
    let tight = ExhaustiveCaps::with_budget(total - 1);
    for _ in 0..2 {
        assert!(matches!(
            visit_exhaustive(&p, 2, &inputs, &tight, |_| {}),
            Err(Error::SpaceTooLarge { .. })
        ));
    }
    assert_eq!(
        visit_exhaustive(&p, 2, &inputs, &ExhaustiveCaps::with_budget(total), |_| {}).unwrap(),
        total
    );
}

#[test]
fn fewer_victims_shrinks_the_space() {
    let p = MultiValue::new(4, 2).unwrap();
    let inputs = [0, 1, 2, 0];
    let one = visit_exhaustive(&p, 2, &inputs, &ExhaustiveCaps::new(1, 1_000_000), |_| {}).unwrap();
    let mut max_crashes = 0;
    let two = visit_exhaustive(&p, 2, &inputs, &ExhaustiveCaps::new(2, 1_000_000), |s| {
        max_crashes = max_crashes.max(s.len());
    })
    .unwrap();
    assert!(one < two);
    assert_eq!(max_crashes, 2);
}

#[test]
fn random_streams_are_seed_stable_and_valid() {
    let a: Vec<_> = random_schedules(16, 8, 42, 500).unwrap().collect();
    let b: Vec<_> = random_schedules(16, 8, 42, 500).unwrap().collect();
    let c: Vec<_> = random_schedules(16, 8, 43, 500).unwrap().collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let mut counts = BTreeSet::new();
    for s in &a {
        s.validate(16, 8, 9).unwrap();
        counts.insert(s.len());
        assert_eq!(s.to_text().parse::<CrashSchedule>().unwrap(), *s);
    }
    assert_eq!(counts, (0..=8).collect());
    assert!(random_schedules(16, 8, 1, 0).is_err());
}

#[test]
fn chain_cutter_keeps_agreement() {
    for (n, f) in [(4, 2), (9, 4), (16, 8), (16, 15), (25, 24)] {
        let m = MultiValue::new(n, f).unwrap();
        let b = Binary::new(n, f).unwrap();
        for h in [0, n / 2, n - 1] {
            let multi_in: Vec<Value> = (0..n)
                .map(|p| if p == h { 99 } else { p as Value })
                .collect();
            let bin_in: Vec<Value> = (0..n).map(|p| (p == h) as Value).collect();
            let cm = chain_cutter(&m, ProtocolKind::Multi, f, &multi_in).unwrap();
            let cb = chain_cutter(&b, ProtocolKind::Binary, f, &bin_in).unwrap();
            assert!(!cm.is_empty() && !cb.is_empty());
            for (sched, kind, inputs) in cm
                .iter()
                .map(|s| (s, ProtocolKind::Multi, &multi_in))
                .chain(cb.iter().map(|s| (s, ProtocolKind::Binary, &bin_in)))
            {
                sched.validate(n, f, f + 1).unwrap();
                let rounds: BTreeSet<u32> = sched.crashes().iter().map(|c| c.round).collect();
                assert_eq!(rounds.len(), sched.len(), "two crashes in one round");
                let out = match kind {
                    ProtocolKind::Multi => run(&m, n, f, inputs, sched).unwrap(),
                    ProtocolKind::Binary => run(&b, n, f, inputs, sched).unwrap(),
                };
                let ctx = CheckContext::new(kind, n, f, inputs.clone());
                let v = check_run(&out.traces, &out.decisions, &ctx);
                assert!(v.is_empty(), "{kind} n={n} f={f} {sched:?}: {v:?}");
            }
        }
    }
}
