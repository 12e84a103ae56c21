//! Lossless FIFO links with a fixed data rate and propagation delay.

use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// Bytes per second.
    pub data_rate: f64,
    pub base_delay: SimDuration,
}

impl LinkSpec {
    /// The Provider's radio: 20 bytes of payload per second.
    pub fn constrained() -> Self {
        LinkSpec { data_rate: 20.0, base_delay: SimDuration::ZERO }
    }

    /// Wired/IP path between Requesters, attacker and Backend.
    pub fn backbone() -> Self {
        LinkSpec { data_rate: 1.0e6, base_delay: SimDuration::from_millis(10) }
    }

    /// Time on the wire for `size` bytes, rounded to the millisecond.
    pub fn serialization(&self, size: usize) -> SimDuration {
        SimDuration::from_secs_f64(size as f64 / self.data_rate)
    }
}

/// `size / data_rate + base_delay` on an idle link.
pub fn transmit_latency(link: &LinkSpec, size: usize) -> SimDuration {
    link.serialization(size) + link.base_delay
}

/// A link in use. Messages are serialized one after another, so a message
/// sent while the link is busy waits for the ones ahead of it.
#[derive(Debug, Clone, Copy)]
pub struct Link {
    spec: LinkSpec,
    free_at: SimTime,
}

impl Link {
    pub fn new(spec: LinkSpec) -> Self {
        Link { spec, free_at: SimTime::ZERO }
    }

    pub fn spec(&self) -> &LinkSpec {
        &self.spec
    }

    /// Queues `size` bytes at `now` and returns the arrival time.
    pub fn send(&mut self, now: SimTime, size: usize) -> SimTime {
        let start = now.max(self.free_at);
        self.free_at = start + self.spec.serialization(size);
        self.free_at + self.spec.base_delay
    }

    /// How long a message queued at `now` would wait before its first byte.
    pub fn backlog(&self, now: SimTime) -> SimDuration {
        self.free_at.checked_since(now).unwrap_or(SimDuration::ZERO)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_examples() {
        let c = LinkSpec::constrained();
        assert_eq!(transmit_latency(&c, 532).millis(), 26_600);
        assert_eq!(transmit_latency(&c, 9).millis(), 450);
        assert_eq!(transmit_latency(&c, 15).millis(), 750);
        assert_eq!(transmit_latency(&c, 0), SimDuration::ZERO);
        let b = LinkSpec::backbone();
        assert_eq!(transmit_latency(&b, 0), b.base_delay);
    }

    #[test]
    fn fifo_serialization() {
        let mut l = Link::new(LinkSpec::constrained());
        assert_eq!(l.send(SimTime(0), 20), SimTime(1_000));
        // Queued behind the first message.
        assert_eq!(l.send(SimTime(100), 20), SimTime(2_000));
        assert_eq!(l.backlog(SimTime(500)), SimDuration(1_500));
        // Idle again later.
        assert_eq!(l.send(SimTime(5_000), 10), SimTime(5_500));
    }
}
