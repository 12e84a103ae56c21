//! Counter cache for out-of-order ticket redemption.

use std::collections::BTreeSet;

/// Default validity distance.
pub const DEFAULT_DELTA_I: u16 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Admit {
    Accept,
    /// Counter already in the cache.
    Replayed,
    /// Counter lags the highest one seen by more than `delta_i`.
    OutsideWindow,
}

/// Accepts each counter at most once while it is within `delta_i` of the
/// highest counter seen; anything older is refused outright.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayCache {
    seen: BTreeSet<u16>,
    max_seen: Option<u16>,
    delta_i: u16,
}

impl ReplayCache {
    pub fn new(delta_i: u16) -> Self {
        assert!(delta_i > 0, "validity distance must be positive");
        ReplayCache { seen: BTreeSet::new(), max_seen: None, delta_i }
    }

    pub fn delta_i(&self) -> u16 {
        self.delta_i
    }

    pub fn max_seen(&self) -> Option<u16> {
        self.max_seen
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn contains(&self, i: u16) -> bool {
        self.seen.contains(&i)
    }

    pub fn admit(&mut self, i: u16) -> Admit {
        if self.seen.contains(&i) {
            return Admit::Replayed;
        }
        if let Some(max) = self.max_seen {
            if max > i && max - i > self.delta_i {
                return Admit::OutsideWindow;
            }
        }
        self.seen.insert(i);
        let max = self.max_seen.map_or(i, |m| m.max(i));
        self.max_seen = Some(max);
        let floor = max.saturating_sub(self.delta_i);
        self.seen = self.seen.split_off(&floor);
        Admit::Accept
    }
}

impl Default for ReplayCache {
    fn default() -> Self {
        Self::new(DEFAULT_DELTA_I)
    }
}
