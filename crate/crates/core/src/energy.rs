//! Provider battery budget and attack-severity arithmetic.
//!
//! Energies are joules (`f64`), the deployment lifetime is expressed in days.
//! The budget left for requestable services is
//! `E_tot = E_bat - E_rx - else_fraction * E_bat` with `E_rx = u * i_rx * T`.
//! For the coin-cell reference deployment this evaluates to roughly 451 J
//! (rounded to 452 J in the parameter table); a value of 425 J printed in some
//! write-ups of the same setup does not follow from the formula and is not used.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ServiceId;
use crate::time::SimDuration;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("invalid deployment config: {0}")]
    InvalidConfig(String),
    #[error("no energy left for services: E_rx {rx:.3} J + other {other:.3} J >= E_bat {battery:.3} J")]
    NonPositiveBudget { battery: f64, rx: f64, other: f64 },
    #[error("unknown service {0}")]
    UnknownService(ServiceId),
    #[error("invalid burst: {0}")]
    InvalidBurst(String),
}

/// Physical parameters of one Provider deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeploymentFile", into = "DeploymentFile")]
pub struct DeploymentConfig {
    /// `E_bat`, joules.
    pub battery_energy_j: f64,
    /// Share of `E_bat` reserved for non-service purposes, in `[0, 1)`.
    pub else_fraction: f64,
    /// Supply voltage `u`, volts.
    pub supply_voltage_v: f64,
    /// Average receive current, amperes.
    pub rx_current_a: f64,
    /// Desired lifetime `T`, days.
    pub lifetime_days: f64,
    /// Number of concurrently active legit Requesters `N`.
    pub requesters: u32,
    /// Energy per service invocation `E_s`, joules.
    pub services: BTreeMap<ServiceId, f64>,
}

/// On-disk shape of [`DeploymentConfig`]. Every key carries its unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeploymentFile {
    battery_energy_j: f64,
    else_fraction: f64,
    supply_voltage_v: f64,
    rx_current_a: f64,
    lifetime_days: f64,
    requesters: u32,
    services: Vec<ServiceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceEntry {
    id: u8,
    energy_j: f64,
}

impl TryFrom<DeploymentFile> for DeploymentConfig {
    type Error = EnergyError;

    fn try_from(f: DeploymentFile) -> Result<Self, Self::Error> {
        let mut services = BTreeMap::new();
        for s in f.services {
            if services.insert(ServiceId(s.id), s.energy_j).is_some() {
                return Err(EnergyError::InvalidConfig(format!("duplicate service id {}", s.id)));
            }
        }
        let cfg = DeploymentConfig {
            battery_energy_j: f.battery_energy_j,
            else_fraction: f.else_fraction,
            supply_voltage_v: f.supply_voltage_v,
            rx_current_a: f.rx_current_a,
            lifetime_days: f.lifetime_days,
            requesters: f.requesters,
            services,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<DeploymentConfig> for DeploymentFile {
    fn from(c: DeploymentConfig) -> Self {
        DeploymentFile {
            battery_energy_j: c.battery_energy_j,
            else_fraction: c.else_fraction,
            supply_voltage_v: c.supply_voltage_v,
            rx_current_a: c.rx_current_a,
            lifetime_days: c.lifetime_days,
            requesters: c.requesters,
            services: c
                .services
                .into_iter()
                .map(|(id, energy_j)| ServiceEntry { id: id.0, energy_j })
                .collect(),
        }
    }
}

impl DeploymentConfig {
    /// Service id of the single LED-flash service in [`DeploymentConfig::coin_cell_tag`].
    pub const LED_FLASH: ServiceId = ServiceId(1);

    /// RTLS localization tag on a CR2430 coin cell: 3024 J, 10 % reserved,
    /// 3 V at 24 µA average RX current, one year, 100 Requesters, one 45 mJ service.
    pub fn coin_cell_tag() -> Self {
        DeploymentConfig {
            battery_energy_j: 3024.0,
            else_fraction: 0.1,
            supply_voltage_v: 3.0,
            rx_current_a: 24e-6,
            lifetime_days: 365.0,
            requesters: 100,
            services: BTreeMap::from([(Self::LED_FLASH, 0.045)]),
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let bad = |m: &str| Err(EnergyError::InvalidConfig(m.to_owned()));
        if !(self.battery_energy_j > 0.0 && self.battery_energy_j.is_finite()) {
            return bad("battery_energy_j must be > 0");
        }
        if !(0.0..1.0).contains(&self.else_fraction) {
            return bad("else_fraction must be in [0, 1)");
        }
        if !(self.supply_voltage_v >= 0.0 && self.supply_voltage_v.is_finite()) {
            return bad("supply_voltage_v must be >= 0");
        }
        if !(self.rx_current_a >= 0.0 && self.rx_current_a.is_finite()) {
            return bad("rx_current_a must be >= 0");
        }
        if !(self.lifetime_days > 0.0 && self.lifetime_days.is_finite()) {
            return bad("lifetime_days must be > 0");
        }
        if self.requesters == 0 {
            return bad("requesters must be >= 1");
        }
        if self.services.is_empty() {
            return bad("at least one service is required");
        }
        if self.services.values().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("every service energy_j must be > 0");
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, EnergyError> {
        toml::from_str(s).map_err(|e| EnergyError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnergyError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| EnergyError::InvalidConfig(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn service_energy(&self, service: ServiceId) -> Result<f64, EnergyError> {
        self.services
            .get(&service)
            .copied()
            .ok_or(EnergyError::UnknownService(service))
    }

    pub fn lifetime_secs(&self) -> f64 {
        self.lifetime_days * SECONDS_PER_DAY
    }

    /// Average RX power in joules per day.
    pub fn rx_power_per_day(&self) -> f64 {
        self.supply_voltage_v * self.rx_current_a * SECONDS_PER_DAY
    }

    /// `E_rx = u * i_rx * T` with `T` in seconds.
    pub fn rx_baseline_energy(&self) -> f64 {
        self.supply_voltage_v * self.rx_current_a * self.lifetime_secs()
    }

    /// `E_tot = E_bat - E_rx - else_fraction * E_bat`.
    pub fn usable_service_energy(&self) -> Result<f64, EnergyError> {
        let rx = self.rx_baseline_energy();
        let other = self.else_fraction * self.battery_energy_j;
        let total = self.battery_energy_j - rx - other;
        if total > 0.0 {
            Ok(total)
        } else {
            Err(EnergyError::NonPositiveBudget { battery: self.battery_energy_j, rx, other })
        }
    }

    /// `lambda_th = E_tot / (T * N)` in joules per day.
    pub fn threshold_depletion_rate(&self) -> Result<f64, EnergyError> {
        Ok(self.usable_service_energy()? / (self.lifetime_days * self.requesters as f64))
    }

    /// Nominal battery content after `day` days of planned operation, assuming
    /// the whole battery is spent linearly over the lifetime.
    pub fn nominal_remaining(&self, day: f64) -> f64 {
        (self.battery_energy_j * (1.0 - day / self.lifetime_days)).max(0.0)
    }
}

/// `requests` invocations of `service` spread uniformly over `window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub requests: u32,
    pub service: ServiceId,
    pub window: SimDuration,
}

impl Burst {
    pub fn new(requests: u32, service: ServiceId, window: SimDuration) -> Self {
        Burst { requests, service, window }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.requests == 0 {
            return Err(EnergyError::InvalidBurst("requests must be >= 1".into()));
        }
        if self.window == SimDuration::ZERO {
            return Err(EnergyError::InvalidBurst("window must be > 0".into()));
        }
        Ok(())
    }

    /// Offset of the `k`-th request (0-based) from the burst start: `k * window / requests`,
    /// rounded to the millisecond. Chaining bursts back to back keeps this spacing.
    pub fn offset(&self, k: u32) -> SimDuration {
        let ms = (k as u128 * self.window.millis() as u128 + self.requests as u128 / 2)
            / self.requests as u128;
        SimDuration(ms as u64)
    }

    /// Spacing between consecutive requests when bursts are chained.
    pub fn period(&self) -> SimDuration {
        SimDuration((self.window.millis() / self.requests as u64).max(1))
    }
}

/// Days until `remaining` joules are gone when an attacker chains `burst`
/// back to back, with the RX baseline draining concurrently.
///
/// Uses the average drain rate; a per-burst stepping evaluation agrees to
/// within one request spacing.
pub fn time_to_exhaustion(
    cfg: &DeploymentConfig,
    remaining: f64,
    burst: &Burst,
) -> Result<f64, EnergyError> {
    burst.validate()?;
    if !(remaining > 0.0) {
        return Err(EnergyError::InvalidBurst("remaining energy must be > 0".into()));
    }
    let e_s = cfg.service_energy(burst.service)?;
    let attack_per_day = burst.requests as f64 * e_s / burst.window.as_days_f64();
    Ok(remaining / (attack_per_day + cfg.rx_power_per_day()))
}

/// Energy drained from a Provider battery against its budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    drained: f64,
    budget: f64,
}

impl EnergyLedger {
    pub fn new(budget: f64) -> Self {
        EnergyLedger { drained: 0.0, budget }
    }

    /// Adds `amount` joules. Draining past the budget is allowed.
    pub fn drain(&mut self, amount: f64) {
        debug_assert!(amount >= 0.0, "negative drain");
        self.drained += amount.max(0.0);
    }

    /// Value-style variant of [`EnergyLedger::drain`].
    pub fn drained_by(mut self, amount: f64) -> Self {
        self.drain(amount);
        self
    }

    pub fn drained(&self) -> f64 {
        self.drained
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn remaining(&self) -> f64 {
        (self.budget - self.drained).max(0.0)
    }

    pub fn is_exhausted(&self) -> bool {
        self.drained >= self.budget
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
    }

    fn cfg_with(f: impl FnOnce(&mut DeploymentConfig)) -> DeploymentConfig {
        let mut c = DeploymentConfig::coin_cell_tag();
        f(&mut c);
        c
    }

    #[test]
    fn rx_baseline_reference() {
        let c = DeploymentConfig::coin_cell_tag();
        assert!(rel(c.rx_baseline_energy(), 2270.0, 0.01));
    }

    #[test]
    fn rx_baseline_zero_current() {
        let c = cfg_with(|c| c.rx_current_a = 0.0);
        assert_eq!(c.rx_baseline_energy(), 0.0);
    }

    #[test]
    fn rx_baseline_one_day() {
        let c = cfg_with(|c| c.lifetime_days = 1.0);
        assert!(rel(c.rx_baseline_energy(), 6.2208, 1e-12));
    }

    #[test]
    fn usable_energy_reference() {
        let e = DeploymentConfig::coin_cell_tag().usable_service_energy().unwrap();
        assert!(rel(e, 452.0, 0.01), "{e}");
    }

    #[test]
    fn usable_energy_without_deductions() {
        let c = cfg_with(|c| {
            c.else_fraction = 0.0;
            c.rx_current_a = 0.0;
        });
        assert_eq!(c.usable_service_energy().unwrap(), c.battery_energy_j);
    }

    #[test]
    fn usable_energy_non_positive() {
        // E_rx = 95 J: u=1 V, one day, i = 95/86400 A.
        let c = cfg_with(|c| {
            c.battery_energy_j = 100.0;
            c.supply_voltage_v = 1.0;
            c.lifetime_days = 1.0;
            c.rx_current_a = 95.0 / SECONDS_PER_DAY;
        });
        assert!(matches!(
            c.usable_service_energy(),
            Err(EnergyError::NonPositiveBudget { .. })
        ));
        assert!(c.threshold_depletion_rate().is_err());
    }

    #[test]
    fn threshold_rate_reference() {
        let l = DeploymentConfig::coin_cell_tag().threshold_depletion_rate().unwrap();
        assert!(rel(l * 1e3, 12.38, 0.01), "{l}");
    }

    #[test]
    fn threshold_rate_trivial_cases() {
        let c = cfg_with(|c| {
            c.requesters = 1;
            c.lifetime_days = 1.0;
        });
        assert!(rel(c.threshold_depletion_rate().unwrap(), c.usable_service_energy().unwrap(), 1e-15));

        let c = cfg_with(|c| {
            c.requesters = 1;
            c.rx_current_a = 0.0;
            c.else_fraction = 0.0;
            c.battery_energy_j = 365.0;
        });
        assert!(rel(c.threshold_depletion_rate().unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn exhaustion_reference_points() {
        let c = DeploymentConfig::coin_cell_tag();
        let fast = Burst::new(1000, DeploymentConfig::LED_FLASH, SimDuration::from_minutes(10));
        let slow = Burst::new(10, DeploymentConfig::LED_FLASH, SimDuration::from_minutes(10));
        assert!(time_to_exhaustion(&c, c.battery_energy_j, &fast).unwrap() < 1.0);
        let t = time_to_exhaustion(&c, c.battery_energy_j, &slow).unwrap();
        assert!((36.0..=54.0).contains(&t), "{t}");
    }

    #[test]
    fn exhaustion_rejects_bad_input() {
        let c = DeploymentConfig::coin_cell_tag();
        let b = Burst::new(0, DeploymentConfig::LED_FLASH, SimDuration::from_minutes(10));
        assert!(time_to_exhaustion(&c, 1.0, &b).is_err());
        let b = Burst::new(1, DeploymentConfig::LED_FLASH, SimDuration::ZERO);
        assert!(time_to_exhaustion(&c, 1.0, &b).is_err());
        let b = Burst::new(1, ServiceId(9), SimDuration::from_minutes(1));
        assert!(time_to_exhaustion(&c, 1.0, &b).is_err());
    }

    #[test]
    fn ledger_zero_drain() {
        let l = EnergyLedger::new(1.0).drained_by(0.0);
        assert_eq!(l.drained(), 0.0);
        assert!(!l.is_exhausted());
    }

    #[test]
    fn ledger_two_halves_exhaust() {
        let l = EnergyLedger::new(1.0).drained_by(0.5).drained_by(0.5);
        assert!(l.is_exhausted());
        let l = l.drained_by(3.0);
        assert!(l.is_exhausted());
        assert_eq!(l.remaining(), 0.0);
    }

    #[test]
    fn ledger_reference_requests_to_exhaustion() {
        let c = DeploymentConfig::coin_cell_tag();
        let budget = c.usable_service_energy().unwrap();
        let e_s = 0.045;
        // ceil(E_tot / E_s) oracle.
        let needed = (budget / e_s).ceil() as u64;
        assert_eq!(needed, 10_023);
        let mut l = EnergyLedger::new(budget);
        for _ in 0..10_000 {
            l.drain(e_s);
        }
        assert!(!l.is_exhausted());
        let mut extra = 0;
        while !l.is_exhausted() {
            l.drain(e_s);
            extra += 1;
        }
        assert_eq!(10_000 + extra, needed);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = DeploymentConfig::coin_cell_tag();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(DeploymentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn config_rejects_invalid_values() {
        let text = toml::to_string(&cfg_with(|c| c.else_fraction = 1.0));
        // Serialization bypasses validation; parsing must catch it.
        assert!(DeploymentConfig::from_toml_str(&text.unwrap()).is_err());
        let text = toml::to_string(&cfg_with(|c| c.requesters = 0)).unwrap();
        assert!(DeploymentConfig::from_toml_str(&text).is_err());
    }
}
