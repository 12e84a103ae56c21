//! A year of benign traffic with one Requester chaining tolerated bursts
//! from day 200, under both limiters.
use drainguard::ids::RequesterId;
use drainguard::limiter::Algorithm;
use drainguard::protocol::ProtocolKind;
use drainguard::scenarios::{run_detection, ScenarioSpec};

fn main() {
    let spec = ScenarioSpec::reference();
    for alg in [Algorithm::LeakyBucket, Algorithm::Ewma] {
        let r = run_detection(&spec, ProtocolKind::Proxy, alg, 7).expect("runs");
        let attacker = RequesterId(1);
        println!("{alg}:");
        for from in (190..365).step_by(15) {
            let (s, d) = r.served_dropped(attacker, from, from + 15);
            let (os, od) = r.others_served_dropped(&[attacker], from, from + 15);
            println!("  days {from:>3}-{:>3}  attacker {s:>3} served {d:>6} dropped   others {os:>4}/{od:<3}", from + 14);
        }
        println!("  drained {:.2} J of {:.2} J", r.totals.drained_j, r.totals.budget_j);
    }
}
