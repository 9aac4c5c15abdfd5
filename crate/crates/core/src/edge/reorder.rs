use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Holds items until the newest timestamp seen is at least `window_s` ahead
/// of them, then releases them in timestamp order. Equal timestamps leave in
/// arrival order.
#[derive(Debug)]
pub struct ReorderBuffer<T> {
    window_s: i64,
    heap: BinaryHeap<Reverse<Entry<T>>>,
    seq: u64,
    max_seen: Option<i64>,
    released_up_to: Option<i64>,
}

#[derive(Debug)]
struct Entry<T> {
    ts: i64,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        (self.ts, self.seq) == (other.ts, other.seq)
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.ts, self.seq).cmp(&(other.ts, other.seq))
    }
}

/// The item arrived after a later timestamp had already been released.
#[derive(Debug, PartialEq, Eq)]
pub struct Late<T>(pub T);

impl<T> ReorderBuffer<T> {
    pub fn new(window_s: i64) -> Self {
        Self {
            window_s,
            heap: BinaryHeap::new(),
            seq: 0,
            max_seen: None,
            released_up_to: None,
        }
    }

    pub fn push(&mut self, ts: i64, item: T) -> Result<(), Late<T>> {
        if self.released_up_to.is_some_and(|r| ts < r) {
            return Err(Late(item));
        }
        self.max_seen = Some(self.max_seen.map_or(ts, |m| m.max(ts)));
        self.heap.push(Reverse(Entry {
            ts,
            seq: self.seq,
            item,
        }));
        self.seq += 1;
        Ok(())
    }

    /// Next item whose timestamp has fallen out of the window.
    pub fn pop_ready(&mut self) -> Option<T> {
        let horizon = self.max_seen? - self.window_s;
        if self.heap.peek().is_some_and(|Reverse(e)| e.ts <= horizon) {
            self.pop()
        } else {
            None
        }
    }

    /// Next item regardless of the window.
    pub fn pop(&mut self) -> Option<T> {
        let Reverse(entry) = self.heap.pop()?;
        self.released_up_to = Some(entry.ts);
        Some(entry.item)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn drain_ready(buf: &mut ReorderBuffer<i64>) -> Vec<i64> {
        std::iter::from_fn(|| buf.pop_ready()).collect()
    }

    #[test]
    fn releases_after_window() {
        let mut buf = ReorderBuffer::new(15);
        buf.push(0, 0).unwrap();
        buf.push(10, 10).unwrap();
        buf.push(5, 5).unwrap();
        assert!(drain_ready(&mut buf).is_empty());
        buf.push(15, 15).unwrap();
        assert_eq!(drain_ready(&mut buf), vec![0]);
        buf.push(25, 25).unwrap();
        assert_eq!(drain_ready(&mut buf), vec![5, 10]);
        assert_eq!(std::iter::from_fn(|| buf.pop()).collect::<Vec<_>>(), vec![15, 25]);
    }

    #[test]
    fn late_items_are_refused() {
        let mut buf = ReorderBuffer::new(15);
        buf.push(0, 0).unwrap();
        buf.push(20, 20).unwrap();
        assert_eq!(buf.pop_ready(), Some(0));
        buf.push(10, 10).unwrap();
        buf.push(40, 40).unwrap();
        assert_eq!(drain_ready(&mut buf), vec![10, 20]);
        assert_eq!(buf.push(15, 15), Err(Late(15)));
        // equal to the last released timestamp is still accepted
        buf.push(20, 21).unwrap();
    }

    #[test]
    fn ties_keep_arrival_order() {
        let mut buf = ReorderBuffer::new(5);
        buf.push(3, 1).unwrap();
        buf.push(3, 2).unwrap();
        buf.push(3, 3).unwrap();
        assert_eq!(std::iter::from_fn(|| buf.pop()).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    proptest! {
        #[test]
        fn bounded_disorder_is_fully_repaired(jitter in prop::collection::vec(0i64..15, 1..300)) {
            // item i has timestamp 5i and arrives as if sent at 5i + jitter
            let mut arrivals: Vec<(i64, i64)> = jitter.iter().enumerate().map(|(i, j)| (5 * i as i64 + j, 5 * i as i64)).collect();
            arrivals.sort();
            let mut buf = ReorderBuffer::new(15);
            let mut out = Vec::new();
            for (_, ts) in arrivals {
                prop_assert!(buf.push(ts, ts).is_ok());
                out.extend(drain_ready(&mut buf));
            }
            out.extend(std::iter::from_fn(|| buf.pop()));
            let expected: Vec<i64> = (0..jitter.len() as i64).map(|i| 5 * i).collect();
            prop_assert_eq!(out, expected);
        }
    }
}
