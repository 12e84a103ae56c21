//! Garbage requests at one per second for a year: what verification alone costs.
//! Pass a number of days to shorten the run.
use drainguard::protocol::ProtocolKind;
use drainguard::scenarios::{injection_drain, ScenarioSpec};

fn main() {
    let mut spec = ScenarioSpec::reference();
    if let Some(days) = std::env::args().nth(1) {
        spec.injection.days = days.parse().expect("days");
    }
    for p in [ProtocolKind::Proxy, ProtocolKind::Ticket] {
        let o = injection_drain(&spec, p, 1).expect("runs");
        println!(
            "{p}: {} requests, {:.2} J drained ({:.2}% of the battery), {:.2} J expected",
            o.handled,
            o.drained_j,
            o.battery_share * 100.0,
            o.expected_j
        );
    }
}
