//! The experiments behind the `drainguard` command line: parameter table,
//! attack severity, detection runs, request latency and injection drain.
//!
//! Every function is deterministic in its [`ScenarioSpec`] and seeds, and
//! returns plain rows plus a list of [`Check`]s that `--check` turns into an
//! exit code.

mod checks;
mod spec;

use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{time_to_exhaustion, Burst, EnergyError};
use crate::ids::RequesterId;
use crate::limiter::{Algorithm, LimiterError, LimiterParams};
use crate::protocol::ProtocolKind;
use crate::sim::{transmit_latency, Attack, AuthMode, BenignProfile, LinkSpec, SimError, Simulation, SimulationReport};
use crate::time::{SimDuration, SimTime};

pub use checks::{Check, Checks};
pub use spec::{
    AttackSection, ConfigError, InjectionSection, KeySection, LimiterSection, LinkSection, ProtocolSection,
    ScenarioSpec, SeveritySection, SimulationSection,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write output: {0}")]
    Output(#[from] io::Error),
}

impl From<EnergyError> for ScenarioError {
    fn from(e: EnergyError) -> Self {
        ScenarioError::Config(e.into())
    }
}

impl From<LimiterError> for ScenarioError {
    fn from(e: LimiterError) -> Self {
        ScenarioError::Config(ConfigError::Invalid(e.to_string()))
    }
}

impl ScenarioError {
    /// Whether the failure is the user's configuration rather than I/O.
    pub fn is_config(&self) -> bool {
        !matches!(self, ScenarioError::Output(_))
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io::Error::other)?;
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.flush()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value).map_err(io::Error::other)? + "\n")
}

// ---------------------------------------------------------------- parametrize

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub symbol: String,
    pub value: f64,
    pub unit: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parametrization {
    pub rx_energy_j: f64,
    pub usable_energy_j: f64,
    pub lambda_th_j_per_day: f64,
    pub benign_probability: f64,
    pub params: LimiterParams,
}

impl Parametrization {
    pub fn rows(&self) -> Vec<ParameterRow> {
        let row = |symbol: &str, value: f64, unit: &str, description: &str| ParameterRow {
            symbol: symbol.into(),
            value,
            unit: unit.into(),
            description: description.into(),
        };
        let p = &self.params;
        vec![
            row("E_rx", self.rx_energy_j, "J", "receive baseline over the lifetime"),
            row("E_tot", self.usable_energy_j, "J", "energy left for services"),
            row("lambda_th", self.lambda_th_j_per_day, "J/day", "threshold depletion rate per requester"),
            row("P", self.benign_probability, "1/day", "benign request probability per requester"),
            row("tick", p.tick.as_secs_f64(), "s", "limiter tick"),
            row("D", p.leaky_bucket.drain_per_tick, "J/tick", "leaky bucket drain"),
            row("K_lb", p.leaky_bucket.threshold, "J", "leaky bucket threshold"),
            row("e0", p.ewma.initial, "J", "initial EWMA value"),
            row("d", p.ewma.decay, "1", "EWMA decay per tick"),
            row("K_ewma", p.ewma.threshold, "J", "EWMA threshold"),
        ]
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<10} {:>16} {:<7} {}\n", "symbol", "value", "unit", "description");
        for r in self.rows() {
            s += &format!("{:<10} {:>16.9e} {:<7} {}\n", r.symbol, r.value, r.unit, r.description);
        }
        s
    }
}

pub fn parametrize(spec: &ScenarioSpec) -> Result<Parametrization, ScenarioError> {
    let d = &spec.deployment;
    let params = LimiterParams::derive(d, spec.tick(), &spec.tolerated_burst()?)?;
    Ok(Parametrization {
        rx_energy_j: d.rx_baseline_energy(),
        usable_energy_j: d.usable_service_energy()?,
        lambda_th_j_per_day: d.threshold_depletion_rate()?,
        benign_probability: benign_profile(spec).probability,
        params,
    })
}

pub fn write_parametrization(p: &Parametrization, dir: &Path) -> io::Result<()> {
    write_csv(&dir.join("parameters.csv"), &p.rows())?;
    write_json(&dir.join("parameters.json"), p)
}

// ------------------------------------------------------------------- severity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityRow {
    pub start_day: f64,
    pub remaining_j: f64,
    pub burst_requests: u32,
    pub window_ms: u64,
    pub attack_j_per_day: f64,
    pub exhaustion_days: f64,
}

/// Days to exhaustion for every burst size and attack start in `[severity]`.
/// Attacks starting on day `t` face the nominally remaining battery; day 0
/// is the full battery.
pub fn severity(spec: &ScenarioSpec) -> Result<Vec<SeverityRow>, ScenarioError> {
    let cfg = &spec.deployment;
    let service = spec.service()?;
    let e_s = cfg.service_energy(service)?;
    let sv = &spec.severity;
    let mut rows = Vec::new();
    for &start_day in &sv.start_days {
        let remaining = cfg.nominal_remaining(start_day);
        for &m in &sv.burst_requests {
            let burst = Burst::new(m, service, SimDuration(sv.window_ms));
            rows.push(SeverityRow {
                start_day,
                remaining_j: remaining,
                burst_requests: m,
                window_ms: sv.window_ms,
                attack_j_per_day: m as f64 * e_s / burst.window.as_days_f64(),
                exhaustion_days: time_to_exhaustion(cfg, remaining, &burst)?,
            });
        }
    }
    Ok(rows)
}

// ------------------------------------------------------------------ detection

pub fn benign_profile(spec: &ScenarioSpec) -> BenignProfile {
    let mut p = BenignProfile::for_deployment(&spec.deployment);
    if let Some(prob) = spec.simulation.benign_probability {
        p.probability = prob;
    }
    p
}

/// One seeded year: benign traffic for every Requester plus the `[attack]`.
pub fn run_detection(
    spec: &ScenarioSpec,
    protocol: ProtocolKind,
    algorithm: Algorithm,
    seed: u64,
) -> Result<SimulationReport, ScenarioError> {
    let cfg = spec.sim_config(protocol, algorithm)?;
    let mut sim = match spec.key_material()? {
        Some(keys) => Simulation::with_keys(cfg, seed, keys)?,
        None => Simulation::new(cfg, seed)?,
    };
    let days = spec.simulation.days;
    sim.spawn_benign_traffic(&benign_profile(spec), days)?;
    if let Some(attack) = spec.attack(days)? {
        sim.spawn_attack(attack)?;
    }
    Ok(sim.run_until(SimTime::from_days(days)))
}

/// Seed-averaged detection figures of one limiter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    /// Benign phase: every Requester, days before the attack starts.
    pub benign_requests: f64,
    pub benign_dropped: f64,
    pub false_drop_rate: f64,
    /// Attack phase, after the transient, per attacking Requester.
    pub attack_served_per_day: Option<f64>,
    /// Attack phase from its first day, summed over attacking Requesters.
    pub attack_served_total: Option<f64>,
    pub attack_dropped_total: Option<f64>,
    /// Largest served energy of any single Requester over the whole run.
    pub max_requester_energy_j: f64,
    /// `K + E_s + lambda_th * days`.
    pub requester_energy_bound_j: f64,
    pub drained_j: f64,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub metrics: Vec<DetectionMetrics>,
    pub reports: Vec<SimulationReport>,
    pub attackers: Vec<RequesterId>,
    pub transient_days: u64,
}

/// Days after the attack starts that are left out of the served rate.
pub const ATTACK_TRANSIENT_DAYS: u64 = 5;

pub fn detect(
    spec: &ScenarioSpec,
    protocol: ProtocolKind,
    algorithms: &[Algorithm],
    seeds: &[u64],
) -> Result<Detection, ScenarioError> {
    spec.validate()?;
    let jobs: Vec<(Algorithm, u64)> =
        algorithms.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(a, s)| run_detection(spec, protocol, a, s))
        .collect::<Result<Vec<_>, _>>()?;

    let days = spec.simulation.days;
    let attackers = spec.attack(days)?.map(|a| a.requesters()).unwrap_or_default();
    let start = spec.attack_start_day().unwrap_or(days).min(days);
    let params = LimiterParams::derive(&spec.deployment, spec.tick(), &spec.tolerated_burst()?)?;
    let e_s = spec.deployment.service_energy(spec.service()?)?;

    let metrics = algorithms
        .iter()
        .map(|&alg| {
            let runs: Vec<&SimulationReport> = reports.iter().filter(|r| r.algorithm == alg).collect();
            let n = runs.len().max(1) as f64;
            let mean = |f: &dyn Fn(&SimulationReport) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
            let (benign_requests, benign_dropped) = (
                mean(&|r| r.others_served_dropped(&[], 0, start).0 as f64 + r.others_served_dropped(&[], 0, start).1 as f64),
                mean(&|r| r.others_served_dropped(&[], 0, start).1 as f64),
            );
            let has_attack = !attackers.is_empty() && start < days;
            let from = (start + ATTACK_TRANSIENT_DAYS).min(days);
            let per_day = has_attack.then(|| {
                let span = (days - from).max(1) as f64 * attackers.len() as f64;
                mean(&|r| attackers.iter().map(|&a| r.served_dropped(a, from, days).0 as f64).sum::<f64>()) / span
            });
            let served_total = has_attack
                .then(|| mean(&|r| attackers.iter().map(|&a| r.served_dropped(a, start, days).0 as f64).sum()));
            let dropped_total = has_attack
                .then(|| mean(&|r| attackers.iter().map(|&a| r.served_dropped(a, start, days).1 as f64).sum()));
            let max_energy = runs
                .iter()
                .flat_map(|r| {
                    let mut per: std::collections::BTreeMap<u32, u64> = Default::default();
                    for row in &r.daily {
                        *per.entry(row.requester_id).or_default() += row.served;
                    }
                    per.into_values()
                })
                .max()
                .unwrap_or(0) as f64
                * e_s;
            DetectionMetrics {
                algorithm: alg,
                seeds: seeds.to_vec(),
                benign_requests,
                benign_dropped,
                false_drop_rate: if benign_requests > 0.0 { benign_dropped / benign_requests } else { 0.0 },
                attack_served_per_day: per_day,
                attack_served_total: served_total,
                attack_dropped_total: dropped_total,
                max_requester_energy_j: max_energy,
                requester_energy_bound_j: params.threshold(alg) + e_s + params.lambda_th * days as f64,
                drained_j: mean(&|r| r.totals.drained_j),
            }
        })
        .collect();
    Ok(Detection { metrics, reports, attackers, transient_days: ATTACK_TRANSIENT_DAYS })
}

pub fn write_detection(d: &Detection, dir: &Path) -> io::Result<()> {
    for r in &d.reports {
        r.write_to_dir(dir, &format!("{}_seed{}_", r.algorithm, r.seed))?;
    }
    write_csv(&dir.join("detection.csv"), &d.metrics.iter().map(MetricsRow::from).collect::<Vec<_>>())?;
    write_json(&dir.join("detection.json"), &d.metrics)
}

#[derive(Serialize)]
struct MetricsRow {
    algorithm: Algorithm,
    seeds: usize,
    benign_requests: f64,
    benign_dropped: f64,
    false_drop_rate: f64,
    attack_served_per_day: Option<f64>,
    attack_served_total: Option<f64>,
    attack_dropped_total: Option<f64>,
    max_requester_energy_j: f64,
    requester_energy_bound_j: f64,
    drained_j: f64,
}

impl From<&DetectionMetrics> for MetricsRow {
    fn from(m: &DetectionMetrics) -> Self {
        MetricsRow {
            algorithm: m.algorithm,
            seeds: m.seeds.len(),
            benign_requests: m.benign_requests,
            benign_dropped: m.benign_dropped,
            false_drop_rate: m.false_drop_rate,
            attack_served_per_day: m.attack_served_per_day,
            attack_served_total: m.attack_served_total,
            attack_dropped_total: m.attack_dropped_total,
            max_requester_energy_j: m.max_requester_energy_j,
            requester_energy_bound_j: m.requester_energy_bound_j,
            drained_j: m.drained_j,
        }
    }
}

// -------------------------------------------------------------------- latency

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub protocol: ProtocolKind,
    pub request_bytes: usize,
    /// Serialization plus propagation on the constrained link.
    pub transfer_s: f64,
    /// From the Requester's decision to the Provider serving it, full
    /// handshake included.
    pub simulated_s: Option<f64>,
}

pub fn request_size(spec: &ScenarioSpec, protocol: ProtocolKind) -> usize {
    match protocol {
        ProtocolKind::Proxy => crate::protocol::wire::MSG_D_LEN,
        ProtocolKind::Ticket => crate::protocol::wire::MSG_E_LEN,
        ProtocolKind::Asymmetric => spec.protocol_params.asym_request_bytes,
    }
}

/// One request through an otherwise idle network.
pub fn simulated_latency(spec: &ScenarioSpec, protocol: ProtocolKind, seed: u64) -> Result<Option<SimDuration>, ScenarioError> {
    let mut cfg = spec.sim_config(protocol, spec.limiter)?;
    cfg.auth = AuthMode::Handshake;
    let mut sim = Simulation::new(cfg, seed)?;
    let t0 = SimTime::from_days(0);
    sim.schedule_request(RequesterId(1), t0)?;
    sim.run_until(SimTime::from_days(1));
    Ok(sim.provider().served().first().map(|s| s.at - t0))
}

pub fn latency(spec: &ScenarioSpec, seed: u64) -> Result<Vec<LatencyRow>, ScenarioError> {
    let link = LinkSpec {
        data_rate: spec.links.constrained_bytes_per_s,
        base_delay: SimDuration(spec.links.constrained_delay_ms),
    };
    ProtocolKind::ALL
        .iter()
        .map(|&p| {
            let size = request_size(spec, p);
            Ok(LatencyRow {
                protocol: p,
                request_bytes: size,
                transfer_s: transmit_latency(&link, size).as_secs_f64(),
                simulated_s: simulated_latency(spec, p, seed)?.map(SimDuration::as_secs_f64),
            })
        })
        .collect()
}

// ------------------------------------------------------------------ injection

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionOutcome {
    pub protocol: ProtocolKind,
    pub per_second: f64,
    pub days: u64,
    pub injected: u64,
    pub skipped: u64,
    pub handled: u64,
    pub served: u64,
    pub verification_cost_j: f64,
    pub drained_j: f64,
    pub battery_share: f64,
    /// `rate * duration * cost`, for comparison.
    pub expected_j: f64,
}

/// Garbage requests at `[injection].per_second` straight to the Provider,
/// with no other traffic.
pub fn injection_drain(spec: &ScenarioSpec, protocol: ProtocolKind, seed: u64) -> Result<InjectionOutcome, ScenarioError> {
    let inj = &spec.injection;
    let mut sim = Simulation::new(spec.sim_config(protocol, spec.limiter)?, seed)?;
    sim.spawn_attack(Attack::GarbageInjection { per_second: inj.per_second, start_day: 0, end_day: Some(inj.days) })?;
    let report = sim.run_until(SimTime::from_days(inj.days));
    let cost = spec.protocol_params.verification_cost(protocol);
    Ok(InjectionOutcome {
        protocol,
        per_second: inj.per_second,
        days: inj.days,
        injected: report.totals.injected,
        skipped: report.totals.injections_skipped,
        handled: report.totals.provider_handled,
        served: report.totals.provider_served,
        verification_cost_j: cost,
        drained_j: report.totals.drained_j,
        battery_share: report.totals.drained_j / spec.deployment.battery_energy_j,
        expected_j: inj.per_second * SimDuration::from_days(inj.days).as_secs_f64() * cost,
    })
}
