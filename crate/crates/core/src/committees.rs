//! Static committee assignment.
//!
//! Slot `i ∈ [1, a·b]` puts player `i mod n` into committee `⌈i/b⌉`. Committee
//! indices are 1-based, player ids 0-based. Because consecutive slots walk the
//! ids cyclically, a player reappears only every `n` slots, which bounds both
//! the number of committees it joins and the spacing between them.

use crate::{ceil_div, Error, PlayerId, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitteeTable {
    n: u32,
    a: u32,
    b: u32,
    /// `members[d - 1]` lists committee `d` in slot order.
    members: Vec<Vec<PlayerId>>,
    /// Ascending committee indices per player.
    memberships: Vec<Vec<u32>>,
}

/// Builds `a` committees of size `b` over `n` players.
///
/// `a = 0` yields an empty table; every committee lookup then returns the empty set.
pub fn join_committees(n: u32, a: u32, b: u32) -> Result<CommitteeTable> {
    if n == 0 {
        return Err(Error::config("n must be positive"));
    }
    if b == 0 {
        return Err(Error::config("committee size must be positive"));
    }
    if b > n {
        return Err(Error::config(format!(
            "committee size {b} exceeds player count {n}; a committee would repeat a player"
        )));
    }
    let mut members = vec![Vec::with_capacity(b as usize); a as usize];
    let mut memberships = vec![Vec::new(); n as usize];
    for i in 1..=(a as u64 * b as u64) {
        let c = (i % n as u64) as u32;
        let d = ceil_div(i, b as u64) as u32;
        members[(d - 1) as usize].push(PlayerId(c));
        memberships[c as usize].push(d);
    }
    Ok(CommitteeTable {
        n,
        a,
        b,
        members,
        memberships,
    })
}

impl CommitteeTable {
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Number of committees.
    pub fn count(&self) -> u32 {
        self.a
    }

    /// Size of every committee.
    pub fn size(&self) -> u32 {
        self.b
    }

    /// Members of committee `d`; empty when `d` is outside `[1, a]`.
    pub fn committee(&self, d: u32) -> &[PlayerId] {
        if d == 0 || d > self.a {
            &[]
        } else {
            &self.members[(d - 1) as usize]
        }
    }

    pub fn is_member(&self, d: u32, p: PlayerId) -> bool {
        self.memberships
            .get(p.index())
            .is_some_and(|m| m.binary_search(&d).is_ok())
    }

    /// Committees containing `p`, ascending.
    pub fn memberships(&self, p: PlayerId) -> &[u32] {
        self.memberships
            .get(p.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Largest number of committees any single player belongs to.
    pub fn max_memberships(&self) -> usize {
        self.memberships.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Smallest gap between two consecutive memberships of the same player,
    /// or `None` if nobody is in two committees.
    pub fn min_gap(&self) -> Option<u32> {
        self.memberships
            .iter()
            .flat_map(|m| m.windows(2).map(|w| w[1] - w[0]))
            .min()
    }

    /// Membership cap `⌈a·b/n⌉`.
    pub fn membership_cap(&self) -> u64 {
        ceil_div(self.a as u64 * self.b as u64, self.n as u64)
    }

    /// Spacing guaranteed by construction, `⌊n/b⌋`.
    pub fn guaranteed_gap(&self) -> u32 {
        self.n / self.b
    }
}

/// True iff every player's consecutive membership indices differ by at least `min_gap`.
pub fn check_spacing(table: &CommitteeTable, min_gap: u32) -> bool {
    table.min_gap().is_none_or(|g| g >= min_gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<PlayerId> {
        v.iter().copied().map(PlayerId).collect()
    }

    #[test]
    fn eight_players_three_committees_of_four() {
        let t = join_committees(8, 3, 4).unwrap();
        assert_eq!(t.committee(1), ids(&[1, 2, 3, 4]).as_slice());
        assert_eq!(t.committee(2), ids(&[5, 6, 7, 0]).as_slice());
        assert_eq!(t.committee(3), ids(&[1, 2, 3, 4]).as_slice());
        assert_eq!(t.memberships(PlayerId(1)), &[1, 3]);
        assert_eq!(t.memberships(PlayerId(6)), &[2]);
        assert!(!check_spacing(&t, 3));
        assert!(check_spacing(&t, 2));
    }

    #[test]
    fn four_players() {
        let t = join_committees(4, 2, 2).unwrap();
        assert_eq!(t.committee(1), ids(&[1, 2]).as_slice());
        assert_eq!(t.committee(2), ids(&[3, 0]).as_slice());
        assert_eq!(t.memberships(PlayerId(0)), &[2]);

        let t = join_committees(4, 1, 4).unwrap();
        assert_eq!(t.committee(1), ids(&[1, 2, 3, 0]).as_slice());
    }

    #[test]
    fn nine_players_spacing() {
        let t = join_committees(9, 6, 3).unwrap();
        assert!(check_spacing(&t, 3));
        assert_eq!(t.min_gap(), Some(3));
    }

    #[test]
    fn out_of_range_committees_are_empty() {
        let t = join_committees(4, 2, 2).unwrap();
        assert!(t.committee(0).is_empty());
        assert!(t.committee(3).is_empty());
        assert!(!t.is_member(3, PlayerId(1)));
        let empty = join_committees(4, 0, 2).unwrap();
        assert_eq!(empty.max_memberships(), 0);
        assert!(check_spacing(&empty, 100));
    }

    #[test]
    fn oversized_committee_rejected() {
        assert!(matches!(
            join_committees(4, 2, 5),
            Err(Error::InvalidConfig(_))
        ));
        assert!(join_committees(4, 2, 0).is_err());
        assert!(join_committees(0, 1, 1).is_err());
    }

    #[test]
    fn min_gap_one_always_holds() {
        for n in 1..12 {
            for b in 1..=n {
                let t = join_committees(n, 2 * n, b).unwrap();
                assert!(check_spacing(&t, 1));
            }
        }
    }
}
