//! Integer simulation clock.
//!
//! All timestamps and durations are whole milliseconds so that event ordering
//! never depends on floating-point rounding. Energies stay `f64`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

pub const MILLIS_PER_SECOND: u64 = 1_000;
pub const MILLIS_PER_MINUTE: u64 = 60 * MILLIS_PER_SECOND;
pub const MILLIS_PER_DAY: u64 = 24 * 60 * MILLIS_PER_MINUTE;

/// A point on the simulation clock, in milliseconds since the run started.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

/// A span of simulation time in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimDuration(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_days(days: u64) -> Self {
        SimTime(days * MILLIS_PER_DAY)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    /// Whole simulation day this instant falls into.
    pub fn day(self) -> u64 {
        self.0 / MILLIS_PER_DAY
    }

    pub fn checked_since(self, earlier: SimTime) -> Option<SimDuration> {
        self.0.checked_sub(earlier.0).map(SimDuration)
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub fn from_millis(ms: u64) -> Self {
        SimDuration(ms)
    }

    pub fn from_secs(s: u64) -> Self {
        SimDuration(s * MILLIS_PER_SECOND)
    }

    pub fn from_minutes(m: u64) -> Self {
        SimDuration(m * MILLIS_PER_MINUTE)
    }

    pub fn from_days(d: u64) -> Self {
        SimDuration(d * MILLIS_PER_DAY)
    }

    /// Rounds to the nearest millisecond; negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimDuration::ZERO;
        }
        SimDuration((s * MILLIS_PER_SECOND as f64).round() as u64)
    }

    pub fn from_days_f64(d: f64) -> Self {
        Self::from_secs_f64(d * 86_400.0)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MILLIS_PER_SECOND as f64
    }

    pub fn as_days_f64(self) -> f64 {
        self.0 as f64 / MILLIS_PER_DAY as f64
    }

    /// `self / unit` as a real number, e.g. elapsed ticks.
    pub fn ratio(self, unit: SimDuration) -> f64 {
        self.0 as f64 / unit.0 as f64
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimDuration;
    /// Panics if `rhs` is later than `self`; use [`SimTime::checked_since`] otherwise.
    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(self.0.checked_sub(rhs.0).expect("time went backwards"))
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl Mul<u64> for SimDuration {
    type Output = SimDuration;
    fn mul(self, rhs: u64) -> SimDuration {
        SimDuration(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}s", self.0 as f64 / 1000.0)
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}s", self.as_secs_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn day_index() {
        assert_eq!(SimTime(MILLIS_PER_DAY - 1).day(), 0);
        assert_eq!(SimTime::from_days(3).day(), 3);
    }

    #[test]
    fn float_conversion_rounds() {
        assert_eq!(SimDuration::from_secs_f64(26.6).millis(), 26_600);
        assert_eq!(SimDuration::from_secs_f64(-1.0), SimDuration::ZERO);
        assert_eq!(SimDuration::from_days_f64(1.0).millis(), MILLIS_PER_DAY);
    }

    #[test]
    fn checked_since_rejects_backwards() {
        assert_eq!(SimTime(5).checked_since(SimTime(7)), None);
        assert_eq!(SimTime(7).checked_since(SimTime(5)), Some(SimDuration(2)));
    }
}
