//! Per-Requester rate limitation of requested service energy.
//!
//! Two detectors are provided, both keyed by authenticated Requester id and
//! both holding a single `f64` of state per Requester:
//!
//! * **Leaky bucket**: the counter grows by `E_s` per served request and
//!   drains by `D = lambda_th * tick` per tick, never below zero.
//! * **EWMA**: the counter decays by `d = exp(-1/T)` per tick (`T` = lifetime
//!   in ticks) and grows by `(1 - d) * E_s` per served request, starting at
//!   `e0 = lambda_th * tick`.
//!
//! Decay is continuous: an update after a gap of `x` ticks (fractional `x`
//! allowed) drains `D * x`, or multiplies by `d^x`. Requests are admitted when
//! the decayed counter does not exceed the threshold `K`, and only admitted
//! requests add to the counter.
//!
//! The thresholds are sized from a tolerated burst: the burst is replayed
//! through the same update rules from a fresh state, and `K` is the counter
//! value seen just before the last request of the burst. A Requester that
//! repeats the tolerated burst from a fresh state is therefore never dropped,
//! while one extra request inside the window is.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{Burst, DeploymentConfig, EnergyError};
use crate::ids::{RequesterId, ServiceId};
use crate::time::{SimDuration, SimTime, MILLIS_PER_DAY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimiterError {
    #[error("clock went backwards: update at {now} before last update {last}")]
    ClockWentBackwards { now: SimTime, last: SimTime },
    #[error("unknown service {0}")]
    UnknownService(ServiceId),
    #[error("tolerated burst is degenerate: threshold {threshold:e} J <= 0")]
    DegenerateBurst { threshold: f64 },
    #[error("tick must be > 0")]
    ZeroTick,
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "lb")]
    LeakyBucket,
    #[serde(rename = "ewma")]
    Ewma,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::LeakyBucket => "lb",
            Algorithm::Ewma => "ewma",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lb" | "leaky-bucket" => Ok(Algorithm::LeakyBucket),
            "ewma" => Ok(Algorithm::Ewma),
            other => Err(format!("unknown limiter `{other}` (expected lb or ewma)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Served,
    Dropped,
}

/// One limiter decision, as logged by whoever runs the limiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub at: SimTime,
    pub requester: RequesterId,
    pub service: ServiceId,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakyBucketParams {
    /// `D`, joules drained per tick.
    pub drain_per_tick: f64,
    /// `K_lb`, joules.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaParams {
    /// `d = exp(-1/T)`, per tick.
    pub decay: f64,
    /// `e0`, joules.
    pub initial: f64,
    /// `K_ewma`, joules.
    pub threshold: f64,
}

impl EwmaParams {
    /// Weight `1 - d` given to a served request.
    pub fn gain(&self) -> f64 {
        1.0 - self.decay
    }
}

/// Constants of both detectors for one deployment and tick length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimiterParams {
    pub tick: SimDuration,
    /// `lambda_th`, joules per day.
    pub lambda_th: f64,
    pub leaky_bucket: LeakyBucketParams,
    pub ewma: EwmaParams,
}

fn tick_days(tick: SimDuration) -> f64 {
    tick.millis() as f64 / MILLIS_PER_DAY as f64
}

fn check_tick(tick: SimDuration) -> Result<(), LimiterError> {
    if tick == SimDuration::ZERO {
        Err(LimiterError::ZeroTick)
    } else {
        Ok(())
    }
}

/// `D = lambda_th * tick`, and `K_lb` from the tolerated burst.
pub fn derive_lb_params(
    cfg: &DeploymentConfig,
    tick: SimDuration,
    burst: &Burst,
) -> Result<LeakyBucketParams, LimiterError> {
    check_tick(tick)?;
    burst.validate()?;
    let e_s = cfg.service_energy(burst.service)?;
    let drain_per_tick = cfg.threshold_depletion_rate()? * tick_days(tick);
    let mut probe = LeakyBucketParams { drain_per_tick, threshold: f64::INFINITY };
    let threshold = burst_level(burst, |k, t, state: &mut Option<LeakyBucketState>| {
        let s = state.get_or_insert_with(|| LeakyBucketState::new(t));
        s.decay_to(&probe, tick, t).expect("burst offsets are monotone");
        if k + 1 < burst.requests {
            s.level += e_s;
        }
        s.level
    });
    if !(threshold > 0.0) {
        return Err(LimiterError::DegenerateBurst { threshold });
    }
    probe.threshold = threshold;
    Ok(probe)
}

/// `d = exp(-1/T)` with `T` in ticks, `e0 = lambda_th * tick`, and `K_ewma`
/// from the tolerated burst.
pub fn derive_ewma_params(
    cfg: &DeploymentConfig,
    tick: SimDuration,
    burst: &Burst,
) -> Result<EwmaParams, LimiterError> {
    check_tick(tick)?;
    burst.validate()?;
    let e_s = cfg.service_energy(burst.service)?;
    let lifetime_ticks = cfg.lifetime_days / tick_days(tick);
    let decay = (-1.0 / lifetime_ticks).exp();
    let initial = cfg.threshold_depletion_rate()? * tick_days(tick);
    let mut probe = EwmaParams { decay, initial, threshold: f64::INFINITY };
    let threshold = burst_level(burst, |k, t, state: &mut Option<EwmaState>| {
        let s = state.get_or_insert_with(|| EwmaState::new(&probe, t));
        s.decay_to(&probe, tick, t).expect("burst offsets are monotone");
        if k + 1 < burst.requests {
            s.level += probe.gain() * e_s;
        }
        s.level
    });
    if !(threshold > 0.0) {
        return Err(LimiterError::DegenerateBurst { threshold });
    }
    probe.threshold = threshold;
    Ok(probe)
}

/// Feeds the burst schedule to `step` and returns the value it reports at the
/// last request (the level just before that request's increment).
fn burst_level<S>(burst: &Burst, mut step: impl FnMut(u32, SimTime, &mut Option<S>) -> f64) -> f64 {
    let mut state = None;
    let mut level = 0.0;
    for k in 0..burst.requests {
        level = step(k, SimTime::ZERO + burst.offset(k), &mut state);
    }
    level
}

impl LimiterParams {
    pub fn derive(cfg: &DeploymentConfig, tick: SimDuration, burst: &Burst) -> Result<Self, LimiterError> {
        Ok(LimiterParams {
            tick,
            lambda_th: cfg.threshold_depletion_rate()?,
            leaky_bucket: derive_lb_params(cfg, tick, burst)?,
            ewma: derive_ewma_params(cfg, tick, burst)?,
        })
    }

    pub fn threshold(&self, algorithm: Algorithm) -> f64 {
        match algorithm {
            Algorithm::LeakyBucket => self.leaky_bucket.threshold,
            Algorithm::Ewma => self.ewma.threshold,
        }
    }
}

fn elapsed_ticks(last: SimTime, now: SimTime, tick: SimDuration) -> Result<f64, LimiterError> {
    now.checked_since(last)
        .map(|d| d.ratio(tick))
        .ok_or(LimiterError::ClockWentBackwards { now, last })
}

/// Leaky bucket counter `e_lb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakyBucketState {
    pub level: f64,
    pub last_update: SimTime,
}

impl LeakyBucketState {
    pub fn new(now: SimTime) -> Self {
        LeakyBucketState { level: 0.0, last_update: now }
    }

    fn decay_to(&mut self, p: &LeakyBucketParams, tick: SimDuration, now: SimTime) -> Result<(), LimiterError> {
        let ticks = elapsed_ticks(self.last_update, now, tick)?;
        self.level = (self.level - p.drain_per_tick * ticks).max(0.0);
        self.last_update = now;
        Ok(())
    }

    /// Drains up to `now`, then applies `request` (service energy) if present.
    pub fn update(
        &mut self,
        params: &LimiterParams,
        now: SimTime,
        request: Option<f64>,
    ) -> Result<Option<Decision>, LimiterError> {
        let p = &params.leaky_bucket;
        self.decay_to(p, params.tick, now)?;
        Ok(request.map(|e_s| {
            if self.level > p.threshold {
                Decision::Dropped
            } else {
                self.level += e_s;
                Decision::Served
            }
        }))
    }
}

/// EWMA counter `e_ewma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaState {
    pub level: f64,
    pub last_update: SimTime,
}

impl EwmaState {
    pub fn new(params: &EwmaParams, now: SimTime) -> Self {
        EwmaState { level: params.initial, last_update: now }
    }

    fn decay_to(&mut self, p: &EwmaParams, tick: SimDuration, now: SimTime) -> Result<(), LimiterError> {
        let ticks = elapsed_ticks(self.last_update, now, tick)?;
        if ticks > 0.0 {
            self.level *= p.decay.powf(ticks);
        }
        self.last_update = now;
        Ok(())
    }

    /// Decays up to `now`, then applies `request` (service energy) if present.
    pub fn update(
        &mut self,
        params: &LimiterParams,
        now: SimTime,
        request: Option<f64>,
    ) -> Result<Option<Decision>, LimiterError> {
        let p = &params.ewma;
        self.decay_to(p, params.tick, now)?;
        Ok(request.map(|e_s| {
            if self.level > p.threshold {
                Decision::Dropped
            } else {
                self.level += p.gain() * e_s;
                Decision::Served
            }
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimiterState {
    LeakyBucket(LeakyBucketState),
    Ewma(EwmaState),
}

impl LimiterState {
    pub fn new(algorithm: Algorithm, params: &LimiterParams, now: SimTime) -> Self {
        match algorithm {
            Algorithm::LeakyBucket => LimiterState::LeakyBucket(LeakyBucketState::new(now)),
            Algorithm::Ewma => LimiterState::Ewma(EwmaState::new(&params.ewma, now)),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            LimiterState::LeakyBucket(_) => Algorithm::LeakyBucket,
            LimiterState::Ewma(_) => Algorithm::Ewma,
        }
    }

    pub fn level(&self) -> f64 {
        match self {
            LimiterState::LeakyBucket(s) => s.level,
            LimiterState::Ewma(s) => s.level,
        }
    }

    pub fn last_update(&self) -> SimTime {
        match self {
            LimiterState::LeakyBucket(s) => s.last_update,
            LimiterState::Ewma(s) => s.last_update,
        }
    }

    pub fn update(
        &mut self,
        params: &LimiterParams,
        now: SimTime,
        request: Option<f64>,
    ) -> Result<Option<Decision>, LimiterError> {
        match self {
            LimiterState::LeakyBucket(s) => s.update(params, now, request),
            LimiterState::Ewma(s) => s.update(params, now, request),
        }
    }

    /// Counter value as it would read at `now`, without mutating the state.
    pub fn level_at(&self, params: &LimiterParams, now: SimTime) -> Result<f64, LimiterError> {
        let mut copy = *self;
        copy.update(params, now, None)?;
        Ok(copy.level())
    }
}

/// Limiter state for every known Requester.
///
/// Entries are created lazily at a Requester's first request. Updates take
/// `&mut self`, so read-modify-write per Requester is serialized by the borrow.
#[derive(Debug, Clone)]
pub struct LimiterTable {
    algorithm: Algorithm,
    params: LimiterParams,
    services: BTreeMap<ServiceId, f64>,
    states: BTreeMap<RequesterId, LimiterState>,
}

impl LimiterTable {
    pub fn new(algorithm: Algorithm, params: LimiterParams, services: BTreeMap<ServiceId, f64>) -> Self {
        LimiterTable { algorithm, params, services, states: BTreeMap::new() }
    }

    pub fn for_deployment(
        algorithm: Algorithm,
        cfg: &DeploymentConfig,
        tick: SimDuration,
        burst: &Burst,
    ) -> Result<Self, LimiterError> {
        Ok(Self::new(algorithm, LimiterParams::derive(cfg, tick, burst)?, cfg.services.clone()))
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn params(&self) -> &LimiterParams {
        &self.params
    }

    pub fn state(&self, requester: RequesterId) -> Option<&LimiterState> {
        self.states.get(&requester)
    }

    pub fn requesters(&self) -> impl Iterator<Item = (&RequesterId, &LimiterState)> {
        self.states.iter()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Runs the selected detector for one request of `service` by `requester`.
    pub fn check_and_update(
        &mut self,
        requester: RequesterId,
        service: ServiceId,
        now: SimTime,
    ) -> Result<Decision, LimiterError> {
        let e_s = *self.services.get(&service).ok_or(LimiterError::UnknownService(service))?;
        let (algorithm, params) = (self.algorithm, &self.params);
        let state = self
            .states
            .entry(requester)
            .or_insert_with(|| LimiterState::new(algorithm, params, now));
        let decision = state.update(params, now, Some(e_s))?;
        Ok(decision.expect("request present"))
    }

    /// Current counter of `requester` decayed to `now`; `None` if never seen.
    pub fn level_at(&self, requester: RequesterId, now: SimTime) -> Option<f64> {
        self.states
            .get(&requester)
            .and_then(|s| s.level_at(&self.params, now).ok())
    }

    /// CSV dump: `requester_id,algorithm,counter_j,last_update_ms`, sorted by id.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["requester_id", "algorithm", "counter_j", "last_update_ms"])?;
        for (id, s) in &self.states {
            w.write_record([
                id.0.to_string(),
                s.algorithm().to_string(),
                format!("{:e}", s.level()),
                s.last_update().millis().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_S: f64 = 0.045;

    fn reference() -> (DeploymentConfig, Burst) {
        (
            DeploymentConfig::coin_cell_tag(),
            Burst::new(10, DeploymentConfig::LED_FLASH, SimDuration::from_minutes(10)),
        )
    }

    fn params() -> LimiterParams {
        let (cfg, burst) = reference();
        LimiterParams::derive(&cfg, SimDuration::from_minutes(1), &burst).unwrap()
    }

    #[test]
    fn lb_empty_bucket_stays_empty() {
        let p = params();
        let mut s = LeakyBucketState::new(SimTime::ZERO);
        assert_eq!(s.update(&p, SimTime::from_days(3), None).unwrap(), None);
        assert_eq!(s.level, 0.0);
    }

    #[test]
    fn lb_first_request_served() {
        let p = params();
        let mut s = LeakyBucketState::new(SimTime::ZERO);
        assert_eq!(s.update(&p, SimTime::ZERO, Some(E_S)).unwrap(), Some(Decision::Served));
        assert_eq!(s.level, 0.045);
    }

    #[test]
    fn lb_over_threshold_drops_without_increment() {
        let p = params();
        let k = p.leaky_bucket.threshold;
        let mut s = LeakyBucketState { level: k + 1e-6, last_update: SimTime::ZERO };
        let now = SimTime(1);
        let decayed = (k + 1e-6) - p.leaky_bucket.drain_per_tick / 60_000.0;
        assert_eq!(s.update(&p, now, Some(E_S)).unwrap(), Some(Decision::Dropped));
        assert!((s.level - decayed).abs() < 1e-15);
    }

    #[test]
    fn lb_clock_backwards() {
        let p = params();
        let mut s = LeakyBucketState::new(SimTime(10));
        assert!(matches!(
            s.update(&p, SimTime(9), None),
            Err(LimiterError::ClockWentBackwards { .. })
        ));
    }

    #[test]
    fn ewma_fresh_state_is_e0() {
        let p = params();
        let s = EwmaState::new(&p.ewma, SimTime(5));
        assert_eq!(s.level, p.ewma.initial);
    }

    #[test]
    fn ewma_pure_decay() {
        let p = params();
        let mut s = EwmaState::new(&p.ewma, SimTime::ZERO);
        let k = 1_000;
        s.update(&p, SimTime::ZERO + SimDuration::from_minutes(k), None).unwrap();
        let expected = p.ewma.initial * p.ewma.decay.powi(k as i32);
        assert!((s.level - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn ewma_single_request_increment() {
        let p = params();
        // e0 at minute tick.
        assert!((p.ewma.initial - 8.6e-6).abs() < 0.05e-6, "{}", p.ewma.initial);
        let mut s = EwmaState::new(&p.ewma, SimTime::ZERO);
        assert_eq!(s.update(&p, SimTime::ZERO, Some(E_S)).unwrap(), Some(Decision::Served));
        let inc = s.level - p.ewma.initial;
        // (1 - exp(-1/525600)) * 0.045
        let oracle = -(-1.0f64 / 525_600.0).exp_m1() * 0.045;
        assert!((inc - oracle).abs() < 1e-9 * oracle, "{inc} vs {oracle}");
        assert!((inc - 8.56e-8).abs() < 0.01e-8);
    }

    #[test]
    fn reference_thresholds() {
        let p = params();
        let k_lb = p.leaky_bucket.threshold;
        assert!((k_lb - 0.4049).abs() <= 0.01 * 0.4049, "{k_lb}");
        let k_ewma = p.ewma.threshold;
        assert!((k_ewma - 9.332e-6).abs() <= 0.05 * 9.332e-6, "{k_ewma}");
        let d = p.leaky_bucket.drain_per_tick;
        assert!((d - p.lambda_th / 1440.0).abs() < 1e-18);
    }

    #[test]
    fn single_request_burst_is_degenerate_for_lb() {
        let (cfg, _) = reference();
        let b = Burst::new(1, DeploymentConfig::LED_FLASH, SimDuration::from_minutes(10));
        assert!(matches!(
            derive_lb_params(&cfg, SimDuration::from_minutes(1), &b),
            Err(LimiterError::DegenerateBurst { .. })
        ));
    }

    #[test]
    fn instantaneous_pair_gives_one_service_of_depth() {
        let mut cfg = DeploymentConfig::coin_cell_tag();
        cfg.services.insert(ServiceId(2), 1.0);
        let b = Burst::new(2, ServiceId(2), SimDuration::from_millis(1));
        let lb = derive_lb_params(&cfg, SimDuration::from_minutes(1), &b).unwrap();
        assert!((lb.threshold - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tick_equal_to_lifetime_gives_inverse_e() {
        let (cfg, burst) = reference();
        let p = derive_ewma_params(&cfg, SimDuration::from_days(365), &burst).unwrap();
        assert!((p.decay - (-1.0f64).exp()).abs() < 1e-15);
        assert!((p.decay - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn ewma_single_request_burst_equals_initial() {
        let (cfg, _) = reference();
        let b = Burst::new(1, DeploymentConfig::LED_FLASH, SimDuration::from_minutes(10));
        let p = derive_ewma_params(&cfg, SimDuration::from_minutes(1), &b).unwrap();
        assert_eq!(p.threshold, p.initial);
    }

    #[test]
    fn zero_tick_rejected() {
        let (cfg, burst) = reference();
        assert_eq!(
            LimiterParams::derive(&cfg, SimDuration::ZERO, &burst),
            Err(LimiterError::ZeroTick)
        );
    }

    #[test]
    fn table_unknown_service() {
        let mut t = LimiterTable::new(Algorithm::LeakyBucket, params(), DeploymentConfig::coin_cell_tag().services);
        assert_eq!(
            t.check_and_update(RequesterId(1), ServiceId(7), SimTime::ZERO),
            Err(LimiterError::UnknownService(ServiceId(7)))
        );
        assert!(t.is_empty());
    }

    #[test]
    fn table_new_requester_served() {
        for alg in [Algorithm::LeakyBucket, Algorithm::Ewma] {
            let mut t = LimiterTable::new(alg, params(), DeploymentConfig::coin_cell_tag().services);
            let d = t.check_and_update(RequesterId(1), DeploymentConfig::LED_FLASH, SimTime(123));
            assert_eq!(d, Ok(Decision::Served));
            assert_eq!(t.state(RequesterId(1)).unwrap().last_update(), SimTime(123));
        }
    }

    #[test]
    fn table_csv_dump() {
        let mut t = LimiterTable::new(Algorithm::Ewma, params(), DeploymentConfig::coin_cell_tag().services);
        t.check_and_update(RequesterId(2), DeploymentConfig::LED_FLASH, SimTime(5)).unwrap();
        t.check_and_update(RequesterId(1), DeploymentConfig::LED_FLASH, SimTime(7)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "requester_id,algorithm,counter_j,last_update_ms");
        assert!(lines[1].starts_with("1,ewma,"));
        assert!(lines[2].starts_with("2,ewma,"));
        assert!(lines[2].ends_with(",5"));
    }

    #[test]
    fn algorithm_parse() {
        assert_eq!("lb".parse::<Algorithm>(), Ok(Algorithm::LeakyBucket));
        assert_eq!("ewma".parse::<Algorithm>(), Ok(Algorithm::Ewma));
        assert!("jw".parse::<Algorithm>().is_err());
    }
}
