//! How fast chained bursts of different sizes empty the battery.
use drainguard::scenarios::{severity, ScenarioSpec};

fn main() {
    let rows = severity(&ScenarioSpec::reference()).expect("reference setup is valid");
    println!("{:>9} {:>10} {:>8} {:>14}", "start_day", "remain_J", "burst", "days_to_empty");
    for r in rows {
        println!("{:>9.0} {:>10.1} {:>8} {:>14.3}", r.start_day, r.remaining_j, r.burst_requests, r.exhaustion_days);
    }
}
