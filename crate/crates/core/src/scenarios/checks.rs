//! Acceptance thresholds for `--check`.
//!
//! The bounds belong to the coin-cell reference deployment; checking another
//! deployment against them reports violations, which is the point.

use serde::{Deserialize, Serialize};

use super::{Detection, InjectionOutcome, LatencyRow, Parametrization, SeverityRow};
use crate::limiter::Algorithm;
use crate::protocol::ProtocolKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Checks(pub Vec<Check>);

impl Checks {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: String) {
        self.0.push(Check { name: name.into(), passed, detail });
    }

    fn within(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        self.push(name, (lo..=hi).contains(&value), format!("{value:.6e} in [{lo:.6e}, {hi:.6e}]"));
    }

    pub fn all_passed(&self) -> bool {
        self.0.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }

    pub fn parametrization(p: &Parametrization) -> Self {
        let mut c = Checks::default();
        c.within("E_rx", p.rx_energy_j, 2248.0, 2293.0);
        c.within("E_tot", p.usable_energy_j, 447.0, 457.0);
        c.within("lambda_th", p.lambda_th_j_per_day, 12.26e-3, 12.51e-3);
        c.within("K_lb", p.params.leaky_bucket.threshold, 0.4009, 0.4090);
        c.within("K_ewma", p.params.ewma.threshold, 9.332e-6 * 0.95, 9.332e-6 * 1.05);
        c
    }

    /// Full-battery rows of the 10- and 1000-request bursts, if the grid has them.
    pub fn severity(rows: &[SeverityRow]) -> Self {
        let mut c = Checks::default();
        let find = |m: u32| {
            rows.iter().find(|r| r.start_day == 0.0 && r.burst_requests == m && r.window_ms == 600_000)
        };
        match find(1000) {
            Some(r) => c.push("severity 1000/10min", r.exhaustion_days < 1.0, format!("{:.4} days < 1", r.exhaustion_days)),
            None => c.push("severity 1000/10min", false, "grid lacks the full-battery 1000/10 min point".into()),
        }
        match find(10) {
            Some(r) => c.within("severity 10/10min", r.exhaustion_days, 45.0 * 0.8, 45.0 * 1.2),
            None => c.push("severity 10/10min", false, "grid lacks the full-battery 10/10 min point".into()),
        }
        c
    }

    pub fn detection(d: &Detection) -> Self {
        let mut c = Checks::default();
        for m in &d.metrics {
            let alg = m.algorithm;
            c.push(
                format!("{alg} seeds"),
                m.seeds.len() >= 5,
                format!("{} seeds >= 5", m.seeds.len()),
            );
            c.push(
                format!("{alg} benign false drops"),
                m.false_drop_rate < 0.01,
                format!("{:.4}% of {:.1} benign requests < 1%", m.false_drop_rate * 100.0, m.benign_requests),
            );
            match m.attack_served_per_day {
                Some(rate) => c.within(&format!("{alg} attack served/day"), rate, 0.20, 0.35),
                None => c.push(format!("{alg} attack served/day"), false, "scenario has no attack".into()),
            }
            c.push(
                format!("{alg} requester energy bound"),
                m.max_requester_energy_j <= m.requester_energy_bound_j,
                format!("{:.4} J <= {:.4} J", m.max_requester_energy_j, m.requester_energy_bound_j),
            );
        }
        let total = |a: Algorithm| d.metrics.iter().find(|m| m.algorithm == a).and_then(|m| m.attack_served_total);
        if let (Some(lb), Some(ewma)) = (total(Algorithm::LeakyBucket), total(Algorithm::Ewma)) {
            let gap = (lb - ewma).abs() / lb.max(ewma);
            c.push(
                "lb vs ewma attack served",
                gap <= 0.02,
                format!("lb {lb:.2} vs ewma {ewma:.2}: {:.2}% <= 2%", gap * 100.0),
            );
        }
        c
    }

    pub fn latency(rows: &[LatencyRow]) -> Self {
        let mut c = Checks::default();
        for r in rows {
            match r.protocol {
                ProtocolKind::Asymmetric => c.within("asym transfer time", r.transfer_s, 25.0, 28.0),
                ProtocolKind::Proxy => {
                    c.push("p1 transfer time", r.transfer_s <= 1.0, format!("{:.3} s <= 1 s", r.transfer_s))
                }
                ProtocolKind::Ticket => {}
            }
        }
        c
    }

    pub fn injection(o: &InjectionOutcome) -> Self {
        let mut c = Checks::default();
        let target = match o.protocol {
            ProtocolKind::Proxy => 38.2,
            ProtocolKind::Ticket => 73.8,
            ProtocolKind::Asymmetric => {
                c.push("injection drain", true, format!("{:.3} J (no threshold for asym)", o.drained_j));
                return c;
            }
        };
        c.within(&format!("{} injection drain", o.protocol), o.drained_j, target * 0.99, target * 1.01);
        c
    }
}
