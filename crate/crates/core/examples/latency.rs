//! Request sizes on the 20 B/s link and the resulting latency per protocol.
use drainguard::scenarios::{latency, ScenarioSpec};

fn main() {
    println!("{:<5} {:>6} {:>11} {:>12}", "proto", "bytes", "transfer_s", "end_to_end_s");
    for r in latency(&ScenarioSpec::reference(), 1).expect("runs") {
        let e2e = r.simulated_s.map(|s| format!("{s:.3}")).unwrap_or_default();
        println!("{:<5} {:>6} {:>11.3} {:>12}", r.protocol.to_string(), r.request_bytes, r.transfer_s, e2e);
    }
}
