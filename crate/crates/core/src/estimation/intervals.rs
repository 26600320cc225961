use std::collections::BTreeMap;

/// Disjoint, merged half-open byte ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalSet {
    ranges: BTreeMap<u64, u64>,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Whether any byte of `[start, end)` is already covered.
    pub fn overlaps(&self, start: u64, end: u64) -> bool {
        if start >= end {
            return false;
        }
        self.ranges
            .range(..end)
            .next_back()
            .is_some_and(|(_, &e)| e > start)
    }

    pub fn insert(&mut self, start: u64, end: u64) {
        if start >= end {
            return;
        }
        let mut new_start = start;
        let mut new_end = end;
        // Absorb every range touching [start, end].
        let touching: Vec<(u64, u64)> = self
            .ranges
            .range(..=end)
            .rev()
            .take_while(|(_, &e)| e >= start)
            .map(|(&s, &e)| (s, e))
            .collect();
        for (s, e) in touching {
            self.ranges.remove(&s);
            new_start = new_start.min(s);
            new_end = new_end.max(e);
        }
        self.ranges.insert(new_start, new_end);
    }

    /// Total bytes covered.
    pub fn covered(&self) -> u64 {
        self.ranges.iter().map(|(s, e)| e - s).sum()
    }

    pub fn max_end(&self) -> Option<u64> {
        self.ranges.values().next_back().copied()
    }

    pub fn ranges(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.ranges.iter().map(|(&s, &e)| (s, e))
    }
}

/// Incremental form of the overlap rule used by the prober while
/// collecting: a segment is terminal when it repeats any byte already seen.
#[derive(Debug, Clone, Default)]
pub struct RetransmissionDetector {
    seen: IntervalSet,
}

impl RetransmissionDetector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one inbound payload range; returns `true` if it is the
    /// retransmission that ends the first flight. Terminal segments are not
    /// added to the seen set.
    pub fn observe(&mut self, offset: u64, len: u64) -> bool {
        if len == 0 {
            return false;
        }
        if self.seen.overlaps(offset, offset + len) {
            return true;
        }
        self.seen.insert(offset, offset + len);
        false
    }

    pub fn seen(&self) -> &IntervalSet {
        &self.seen
    }
}

/// Index of the first segment whose byte range intersects the union of all
/// earlier segments. Segments that only fill gaps are not terminal.
pub fn find_first_retransmission(segments: &[(u64, u64)]) -> Option<usize> {
    let mut detector = RetransmissionDetector::new();
    segments
        .iter()
        .position(|&(offset, len)| detector.observe(offset, len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force: materialise every byte.
    fn oracle_first_retx(segs: &[(u64, u64)]) -> Option<usize> {
        let mut seen = std::collections::HashSet::new();
        for (i, &(o, l)) in segs.iter().enumerate() {
            if (o..o + l).any(|b| seen.contains(&b)) {
                return Some(i);
            }
            seen.extend(o..o + l);
        }
        None
    }

    #[test]
    fn exact_repeat() {
        let segs = [(0, 1460), (1460, 1460), (0, 1460)];
        assert_eq!(find_first_retransmission(&segs), Some(2));
    }

    #[test]
    fn gap_fill_is_not_terminal() {
        let segs = [(1460, 1460), (2920, 1460), (0, 1460), (0, 1460)];
        assert_eq!(oracle_first_retx(&segs), Some(3));
        assert_eq!(find_first_retransmission(&segs), Some(3));
    }

    #[test]
    fn increasing_ranges_never_terminal() {
        let segs: Vec<_> = (0..20).map(|i| (i * 100, 100)).collect();
        assert_eq!(find_first_retransmission(&segs), None);
    }

    #[test]
    fn partial_overlap_counts() {
        assert_eq!(find_first_retransmission(&[(0, 100), (50, 100)]), Some(1));
        // touching but not overlapping
        assert_eq!(find_first_retransmission(&[(0, 100), (100, 100)]), None);
        assert_eq!(
            find_first_retransmission(&[(0, 100), (0, 0), (100, 1)]),
            None
        );
    }

    #[test]
    fn set_merges_adjacent() {
        let mut s = IntervalSet::new();
        s.insert(10, 20);
        s.insert(30, 40);
        s.insert(20, 30);
        assert_eq!(s.ranges().collect::<Vec<_>>(), vec![(10, 40)]);
        s.insert(0, 5);
        s.insert(3, 12);
        assert_eq!(s.ranges().collect::<Vec<_>>(), vec![(0, 40)]);
        assert_eq!(s.covered(), 40);
        assert_eq!(s.max_end(), Some(40));
    }

    proptest! {
        #[test]
        fn matches_brute_force(segs in proptest::collection::vec((0u64..400, 0u64..60), 0..30)) {
            prop_assert_eq!(find_first_retransmission(&segs), oracle_first_retx(&segs));
        }

        #[test]
        fn union_size_matches_brute_force(segs in proptest::collection::vec((0u64..400, 0u64..60), 0..30)) {
            let mut set = IntervalSet::new();
            let mut bytes = std::collections::HashSet::new();
            for &(o, l) in &segs {
                set.insert(o, o + l);
                bytes.extend(o..o + l);
            }
            prop_assert_eq!(set.covered(), bytes.len() as u64);
            prop_assert_eq!(set.max_end().unwrap_or(0), bytes.iter().max().map_or(0, |m| m + 1));
        }
    }
}
