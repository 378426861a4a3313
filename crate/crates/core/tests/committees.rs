use sleepy_consensus::committees::{check_spacing, join_committees};
use sleepy_consensus::PlayerId;

#[test]
fn structural_bounds_for_every_small_table() {
    for n in 1..=64u32 {
        for b in 1..=n {
            let gap = n / b;
            for a in 0..=n {
                let t = join_committees(n, a, b).unwrap();
                let cap = (a as u64 * b as u64).div_ceil(n as u64);
                assert!(t.max_memberships() as u64 <= cap, "n={n} a={a} b={b}");
                assert_eq!(t.membership_cap(), cap);
                assert_eq!(t.guaranteed_gap(), gap);
                assert!(check_spacing(&t, gap), "n={n} a={a} b={b}");
                if let Some(g) = t.min_gap() {
                    assert!(g >= gap, "n={n} a={a} b={b} gap {g}");
                }
                for d in 1..=a {
                    let mut m: Vec<PlayerId> = t.committee(d).to_vec();
                    assert_eq!(m.len(), b as usize);
                    m.sort();
                    m.dedup();
                    assert_eq!(m.len(), b as usize, "committee {d} repeats a player");
                }
            }
        }
    }
}

#[test]
fn memberships_match_slot_arithmetic() {
    for (n, a, b) in [(7, 6, 7), (10, 9, 4), (16, 15, 4), (5, 2, 3), (13, 12, 13)] {
        let t = join_committees(n, a, b).unwrap();
        for p in 0..n {
            let expected: Vec<u32> = (1..=a * b)
                .filter(|i| i % n == p)
                .map(|i| i.div_ceil(b))
                .collect();
            assert_eq!(t.memberships(PlayerId(p)), expected.as_slice());
            for d in 1..=a {
                assert_eq!(t.is_member(d, PlayerId(p)), expected.contains(&d));
            }
        }
    }
}

#[test]
fn construction_is_pure() {
    for (n, a, b) in [(9, 8, 3), (64, 63, 8), (20, 19, 20)] {
        assert_eq!(
            join_committees(n, a, b).unwrap(),
            join_committees(n, a, b).unwrap()
        );
    }
}

#[test]
fn invalid_shapes() {
    assert!(join_committees(0, 1, 1).is_err());
    assert!(join_committees(4, 2, 0).is_err());
    assert!(join_committees(4, 2, 5).is_err());
    let empty = join_committees(4, 0, 2).unwrap();
    assert!(empty.committee(1).is_empty());
    assert_eq!(empty.max_memberships(), 0);
}
