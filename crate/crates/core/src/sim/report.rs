//! Results of a simulation run and their CSV / JSON export.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::ids::RequesterId;
use crate::limiter::Algorithm;
use crate::protocol::ProtocolKind;

/// Limiter activity of one Requester on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DailyRow {
    pub day: u64,
    pub requester_id: u32,
    pub requests: u64,
    pub served: u64,
    pub dropped: u64,
    /// Limiter counter at the end of the day; empty if the Requester has
    /// not been seen yet.
    pub counter_j: Option<f64>,
}

/// Provider ledger at the end of one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub day: u64,
    pub drained_j: f64,
    pub verification_j: f64,
    pub service_j: f64,
    pub remaining_j: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Totals {
    pub events: u64,
    pub provider_handled: u64,
    pub provider_served: u64,
    pub limiter_served: u64,
    pub limiter_dropped: u64,
    pub drained_j: f64,
    pub verification_j: f64,
    pub service_j: f64,
    pub budget_j: f64,
    pub injected: u64,
    /// Injections the attacker skipped because the Provider link was saturated.
    pub injections_skipped: u64,
    pub observed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub protocol: ProtocolKind,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub end_ms: u64,
    pub days: u64,
    pub totals: Totals,
    /// Counts keyed `actor.outcome`, e.g. `provider.reject.BadMac`.
    pub tallies: BTreeMap<String, u64>,
    #[serde(skip)]
    pub daily: Vec<DailyRow>,
    #[serde(skip)]
    pub ledger: Vec<LedgerRow>,
}

impl SimulationReport {
    pub fn tally(&self, key: &str) -> u64 {
        self.tallies.get(key).copied().unwrap_or(0)
    }

    /// Rows of one Requester, in day order.
    pub fn requester_days(&self, requester: RequesterId) -> impl Iterator<Item = &DailyRow> {
        self.daily.iter().filter(move |r| r.requester_id == requester.0)
    }

    /// `(served, dropped)` of one Requester over days `[from, to)`.
    pub fn served_dropped(&self, requester: RequesterId, from: u64, to: u64) -> (u64, u64) {
        self.requester_days(requester)
            .filter(|r| r.day >= from && r.day < to)
            .fold((0, 0), |(s, d), r| (s + r.served, d + r.dropped))
    }

    /// `(served, dropped)` of all Requesters except `exclude` over `[from, to)`.
    pub fn others_served_dropped(&self, exclude: &[RequesterId], from: u64, to: u64) -> (u64, u64) {
        self.daily
            .iter()
            .filter(|r| r.day >= from && r.day < to && !exclude.iter().any(|e| e.0 == r.requester_id))
            .fold((0, 0), |(s, d), r| (s + r.served, d + r.dropped))
    }

    pub fn write_daily_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.daily {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_ledger_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.ledger {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<prefix>daily.csv`, `<prefix>ledger.csv` and `<prefix>summary.json`.
    pub fn write_to_dir(&self, dir: &Path, prefix: &str) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let daily = fs::File::create(dir.join(format!("{prefix}daily.csv")))?;
        self.write_daily_csv(io::BufWriter::new(daily)).map_err(io::Error::other)?;
        let ledger = fs::File::create(dir.join(format!("{prefix}ledger.csv")))?;
        self.write_ledger_csv(io::BufWriter::new(ledger)).map_err(io::Error::other)?;
        fs::write(dir.join(format!("{prefix}summary.json")), self.summary_json() + "\n")
    }
}
