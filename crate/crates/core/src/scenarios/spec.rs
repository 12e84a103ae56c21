//! Scenario files.
//!
//! A scenario is a TOML document. Only `[deployment]` is required; every
//! other table falls back to the coin-cell reference setup. Units are part
//! of every key name.
//!
//! ```toml
//! name = "coin-cell"
//! seed = 1
//! protocol = "p1"          # p1 | p2 | asym
//! limiter = "lb"           # lb | ewma
//! out = "out/coin-cell"
//!
//! [deployment]
//! battery_energy_j = 3024.0
//! else_fraction = 0.1
//! supply_voltage_v = 3.0
//! rx_current_a = 24e-6
//! lifetime_days = 365.0
//! requesters = 100
//! [[deployment.services]]
//! id = 1
//! energy_j = 0.045
//!
//! [limiter_params]
//! tick_ms = 60000
//! burst_requests = 10
//! burst_window_ms = 600000
//!
//! [attack]
//! kind = "chained_bursts"  # chained_bursts | compromised_flood | garbage_injection | none
//! requester = 1
//! start_day = 200
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{keyfile, CertificateAuthority, CryptoError, SigningKey, SymKey};
use crate::energy::{Burst, DeploymentConfig, EnergyError};
use crate::ids::{RequesterId, ServiceId};
use crate::limiter::Algorithm;
use crate::protocol::replay::DEFAULT_DELTA_I;
use crate::protocol::ProtocolKind;
use crate::sim::{default_verification_cost, Attack, AuthMode, KeyMaterial, LinkSpec, SimConfig, ASYM_REQUEST_SIZE};
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Key(#[from] CryptoError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimiterSection {
    pub tick_ms: u64,
    pub burst_requests: u32,
    pub burst_window_ms: u64,
    /// Service the tolerated burst consists of; defaults to the first one.
    pub burst_service: Option<u8>,
}

impl Default for LimiterSection {
    fn default() -> Self {
        LimiterSection { tick_ms: 60_000, burst_requests: 10, burst_window_ms: 600_000, burst_service: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub delta_i: u16,
    pub lookahead: u16,
    pub verification_cost_p1_j: f64,
    pub verification_cost_p2_j: f64,
    pub verification_cost_asym_j: f64,
    pub asym_request_bytes: usize,
    pub asym_local_limiter: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            delta_i: DEFAULT_DELTA_I,
            lookahead: DEFAULT_DELTA_I,
            verification_cost_p1_j: default_verification_cost(ProtocolKind::Proxy),
            verification_cost_p2_j: default_verification_cost(ProtocolKind::Ticket),
            verification_cost_asym_j: default_verification_cost(ProtocolKind::Asymmetric),
            asym_request_bytes: ASYM_REQUEST_SIZE,
            asym_local_limiter: true,
        }
    }
}

impl ProtocolSection {
    pub fn verification_cost(&self, p: ProtocolKind) -> f64 {
        match p {
            ProtocolKind::Proxy => self.verification_cost_p1_j,
            ProtocolKind::Ticket => self.verification_cost_p2_j,
            ProtocolKind::Asymmetric => self.verification_cost_asym_j,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub constrained_bytes_per_s: f64,
    pub constrained_delay_ms: u64,
    pub backbone_bytes_per_s: f64,
    pub backbone_delay_ms: u64,
}

impl Default for LinkSection {
    fn default() -> Self {
        let (c, b) = (LinkSpec::constrained(), LinkSpec::backbone());
        LinkSection {
            constrained_bytes_per_s: c.data_rate,
            constrained_delay_ms: c.base_delay.millis(),
            backbone_bytes_per_s: b.data_rate,
            backbone_delay_ms: b.base_delay.millis(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub auth: AuthMode,
    pub days: u64,
    /// Per-Requester daily request probability; defaults to `N / T`.
    pub benign_probability: Option<f64>,
    /// Seeds used by `--seeds` when no count is given on the command line.
    pub seeds: u32,
    pub observation_capacity: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            auth: AuthMode::PreAuthenticated,
            days: 365,
            benign_probability: None,
            seeds: 5,
            observation_capacity: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSection {
    None,
    ChainedBursts {
        #[serde(default = "one")]
        requester: u32,
        /// Defaults to the tolerated burst.
        requests: Option<u32>,
        window_ms: Option<u64>,
        #[serde(default = "attack_day")]
        start_day: u64,
        end_day: Option<u64>,
    },
    CompromisedFlood {
        requesters: Vec<u32>,
        per_day: f64,
        #[serde(default)]
        start_day: u64,
        end_day: Option<u64>,
    },
    GarbageInjection {
        per_second: f64,
        #[serde(default)]
        start_day: u64,
        end_day: Option<u64>,
    },
}

fn one() -> u32 {
    1
}

fn attack_day() -> u64 {
    200
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection::ChainedBursts { requester: 1, requests: None, window_ms: None, start_day: 200, end_day: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeveritySection {
    pub burst_requests: Vec<u32>,
    pub window_ms: u64,
    pub start_days: Vec<f64>,
}

impl Default for SeveritySection {
    fn default() -> Self {
        SeveritySection {
            burst_requests: vec![10, 20, 50, 100, 200, 500, 1000],
            window_ms: 600_000,
            start_days: vec![0.0, 60.0, 120.0, 180.0, 240.0, 300.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InjectionSection {
    pub per_second: f64,
    pub days: u64,
}

impl Default for InjectionSection {
    fn default() -> Self {
        InjectionSection { per_second: 1.0, days: 365 }
    }
}

/// Hex key files, relative to the scenario file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeySection {
    /// 32-byte CA signing seed.
    pub ca_seed: Option<PathBuf>,
    /// 16-byte Provider-Backend key.
    pub provider_key: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default = "default_protocol")]
    pub protocol: ProtocolKind,
    #[serde(default = "default_limiter")]
    pub limiter: Algorithm,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub deployment: DeploymentConfig,
    #[serde(default)]
    pub limiter_params: LimiterSection,
    #[serde(default)]
    pub protocol_params: ProtocolSection,
    #[serde(default)]
    pub links: LinkSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub severity: SeveritySection,
    #[serde(default)]
    pub injection: InjectionSection,
    #[serde(default)]
    pub keys: KeySection,
    /// Directory key paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "scenario".into()
}

fn one_u64() -> u64 {
    1
}

fn default_protocol() -> ProtocolKind {
    ProtocolKind::Proxy
}

fn default_limiter() -> Algorithm {
    Algorithm::LeakyBucket
}

impl ScenarioSpec {
    /// The coin-cell reference setup with every default filled in.
    pub fn reference() -> Self {
        ScenarioSpec {
            name: "coin-cell".into(),
            seed: 1,
            protocol: ProtocolKind::Proxy,
            limiter: Algorithm::LeakyBucket,
            out: None,
            deployment: DeploymentConfig::coin_cell_tag(),
            limiter_params: LimiterSection::default(),
            protocol_params: ProtocolSection::default(),
            links: LinkSection::default(),
            simulation: SimulationSection::default(),
            attack: AttackSection::default(),
            severity: SeveritySection::default(),
            injection: InjectionSection::default(),
            keys: KeySection::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml_str(s: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut spec: ScenarioSpec =
            toml::from_str(s).map_err(|e| ConfigError::Parse { path: origin.to_owned(), message: e.to_string() })?;
        spec.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.deployment.validate()?;
        self.tolerated_burst()?.validate()?;
        let l = &self.limiter_params;
        if l.tick_ms == 0 {
            return Err(ConfigError::Invalid("limiter_params.tick_ms must be > 0".into()));
        }
        let p = &self.protocol_params;
        if p.delta_i == 0 {
            return Err(ConfigError::Invalid("protocol_params.delta_i must be > 0".into()));
        }
        for p in ProtocolKind::ALL {
            if !(self.protocol_params.verification_cost(p) >= 0.0) {
                return Err(ConfigError::Invalid(format!("verification cost for {p} must be >= 0")));
            }
        }
        let k = &self.links;
        if !(k.constrained_bytes_per_s > 0.0 && k.backbone_bytes_per_s > 0.0) {
            return Err(ConfigError::Invalid("link rates must be > 0".into()));
        }
        if let Some(prob) = self.simulation.benign_probability {
            if !(0.0..=1.0).contains(&prob) {
                return Err(ConfigError::Invalid("simulation.benign_probability must be in [0, 1]".into()));
            }
        }
        if self.severity.window_ms == 0 || self.severity.burst_requests.contains(&0) {
            return Err(ConfigError::Invalid("severity bursts need >= 1 request and a window > 0".into()));
        }
        if !(self.injection.per_second >= 0.0) {
            return Err(ConfigError::Invalid("injection.per_second must be >= 0".into()));
        }
        self.attack(self.simulation.days)?;
        Ok(())
    }

    pub fn tick(&self) -> SimDuration {
        SimDuration(self.limiter_params.tick_ms)
    }

    pub fn service(&self) -> Result<ServiceId, ConfigError> {
        let id = match self.limiter_params.burst_service {
            Some(s) => ServiceId(s),
            None => *self
                .deployment
                .services
                .keys()
                .next()
                .ok_or_else(|| ConfigError::Invalid("deployment has no services".into()))?,
        };
        self.deployment.service_energy(id)?;
        Ok(id)
    }

    pub fn tolerated_burst(&self) -> Result<Burst, ConfigError> {
        let l = &self.limiter_params;
        Ok(Burst::new(l.burst_requests, self.service()?, SimDuration(l.burst_window_ms)))
    }

    /// The attack of `[attack]`, if any.
    pub fn attack(&self, _days: u64) -> Result<Option<Attack>, ConfigError> {
        let check_id = |r: u32| {
            if r == 0 || r > self.deployment.requesters {
                Err(ConfigError::Invalid(format!("attack references unknown requester {r}")))
            } else {
                Ok(RequesterId(r))
            }
        };
        let burst = self.tolerated_burst()?;
        Ok(match &self.attack {
            AttackSection::None => None,
            AttackSection::ChainedBursts { requester, requests, window_ms, start_day, end_day } => {
                let b = Burst::new(
                    requests.unwrap_or(burst.requests),
                    burst.service,
                    window_ms.map(SimDuration).unwrap_or(burst.window),
                );
                b.validate()?;
                Some(Attack::ChainedBursts {
                    requester: check_id(*requester)?,
                    burst: b,
                    start_day: *start_day,
                    end_day: *end_day,
                })
            }
            AttackSection::CompromisedFlood { requesters, per_day, start_day, end_day } => {
                if requesters.is_empty() || !(*per_day >= 0.0) {
                    return Err(ConfigError::Invalid("flood needs requesters and a rate >= 0".into()));
                }
                Some(Attack::CompromisedFlood {
                    requesters: requesters.iter().map(|&r| check_id(r)).collect::<Result<_, _>>()?,
                    service: burst.service,
                    per_day: *per_day,
                    start_day: *start_day,
                    end_day: *end_day,
                })
            }
            AttackSection::GarbageInjection { per_second, start_day, end_day } => {
                if !(*per_second >= 0.0) {
                    return Err(ConfigError::Invalid("injection rate must be >= 0".into()));
                }
                Some(Attack::GarbageInjection { per_second: *per_second, start_day: *start_day, end_day: *end_day })
            }
        })
    }

    /// Day the configured attack starts, if it has one.
    pub fn attack_start_day(&self) -> Option<u64> {
        match &self.attack {
            AttackSection::None => None,
            AttackSection::ChainedBursts { start_day, .. }
            | AttackSection::CompromisedFlood { start_day, .. }
            | AttackSection::GarbageInjection { start_day, .. } => Some(*start_day),
        }
    }

    pub fn sim_config(&self, protocol: ProtocolKind, algorithm: Algorithm) -> Result<SimConfig, ConfigError> {
        let mut c = SimConfig::new(self.deployment.clone(), protocol, algorithm);
        c.tick = self.tick();
        c.tolerated_burst = self.tolerated_burst()?;
        c.service = c.tolerated_burst.service;
        c.auth = self.simulation.auth;
        c.constrained_link = LinkSpec {
            data_rate: self.links.constrained_bytes_per_s,
            base_delay: SimDuration(self.links.constrained_delay_ms),
        };
        c.backbone_link =
            LinkSpec { data_rate: self.links.backbone_bytes_per_s, base_delay: SimDuration(self.links.backbone_delay_ms) };
        c.verification_cost = self.protocol_params.verification_cost(protocol);
        c.asym_request_size = self.protocol_params.asym_request_bytes;
        c.asym_local_limiter = self.protocol_params.asym_local_limiter;
        c.delta_i = self.protocol_params.delta_i;
        c.lookahead = self.protocol_params.lookahead;
        c.observation_capacity = self.simulation.observation_capacity;
        Ok(c)
    }

    /// Key material from `[keys]`, or `None` to draw it from the seed.
    pub fn key_material(&self) -> Result<Option<KeyMaterial>, ConfigError> {
        let k = &self.keys;
        match (&k.ca_seed, &k.provider_key) {
            (None, None) => Ok(None),
            (Some(ca), Some(kpb)) => {
                let seed: [u8; 32] = keyfile::read_hex(self.base_dir.join(ca))?;
                let kpb: [u8; 16] = keyfile::read_hex(self.base_dir.join(kpb))?;
                Ok(Some(KeyMaterial {
                    ca: CertificateAuthority::new(SigningKey::from_seed(seed)),
                    provider_key: SymKey::from_bytes(kpb),
                }))
            }
            _ => Err(ConfigError::Invalid("keys.ca_seed and keys.provider_key must be given together".into())),
        }
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::from_days(self.simulation.days)
    }
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::reference()
    }
}
