//! Derived energy budget and limiter constants of the coin-cell tag.
use drainguard::scenarios::{parametrize, ScenarioSpec};

fn main() {
    let p = parametrize(&ScenarioSpec::reference()).expect("reference setup is valid");
    print!("{}", p.render());
}
