use std::collections::BTreeMap;

use drainguard::energy::{Burst, DeploymentConfig};
use drainguard::ids::{RequesterId, ServiceId};
use drainguard::limiter::{Algorithm, Decision, LimiterParams, LimiterState, LimiterTable};
use drainguard::time::{SimDuration, SimTime, MILLIS_PER_MINUTE};
use proptest::prelude::*;

const S: ServiceId = DeploymentConfig::LED_FLASH;
const E_S: f64 = 0.045;

fn minute() -> SimDuration {
    SimDuration::from_minutes(1)
}

fn tolerated() -> Burst {
    Burst::new(10, S, SimDuration::from_minutes(10))
}

fn params() -> LimiterParams {
    LimiterParams::derive(&DeploymentConfig::coin_cell_tag(), minute(), &tolerated()).unwrap()
}

/// lambda_th from first principles, joules per day.
fn lambda_oracle() -> f64 {
    let e_rx = 3.0 * 24e-6 * 365.0 * 86_400.0;
    (3024.0 - e_rx - 0.1 * 3024.0) / (365.0 * 100.0)
}

#[test]
fn leaky_bucket_threshold_matches_closed_form() {
    // Nine served requests one minute apart, drained for nine minutes.
    let d = lambda_oracle() / 1440.0;
    let k = 9.0 * E_S - 9.0 * d;
    let p = params();
    assert!((p.leaky_bucket.drain_per_tick - d).abs() < 1e-15);
    assert!((p.leaky_bucket.threshold - k).abs() < 1e-12, "{} vs {k}", p.leaky_bucket.threshold);
}

#[test]
fn ewma_threshold_matches_closed_form() {
    let d = (-1.0 / (365.0 * 1440.0f64)).exp();
    let e0 = lambda_oracle() / 1440.0;
    let k = e0 * d.powi(9) + (1.0 - d) * E_S * (0..9).map(|j| d.powi(9 - j)).sum::<f64>();
    let p = params();
    assert!((p.ewma.decay - d).abs() < 1e-15);
    assert!((p.ewma.initial - e0).abs() < 1e-15);
    assert!((p.ewma.threshold - k).abs() < 1e-15, "{} vs {k}", p.ewma.threshold);
}

fn run_schedule(alg: Algorithm, p: &LimiterParams, minutes: &[u64]) -> Vec<Decision> {
    let mut services = BTreeMap::new();
    services.insert(S, E_S);
    let mut t = LimiterTable::new(alg, *p, services);
    minutes
        .iter()
        .map(|&m| t.check_and_update(RequesterId(1), S, SimTime(m * MILLIS_PER_MINUTE)).unwrap())
        .collect()
}

#[test]
fn tolerated_burst_passes_and_one_more_is_dropped() {
    let p = params();
    for alg in [Algorithm::LeakyBucket, Algorithm::Ewma] {
        let burst: Vec<u64> = (0..10).collect();
        assert!(run_schedule(alg, &p, &burst).iter().all(|d| *d == Decision::Served), "{alg}");
        let plus_one: Vec<u64> = (0..11).collect();
        assert_eq!(run_schedule(alg, &p, &plus_one)[10], Decision::Dropped, "{alg}");
    }
}

/// Minute-by-minute reference implementation of both counters. Returns the
/// counter just before each request and the decision taken.
fn tick_oracle(alg: Algorithm, p: &LimiterParams, requests: &[u64]) -> Vec<(f64, Decision)> {
    let mut level = match alg {
        Algorithm::LeakyBucket => 0.0,
        Algorithm::Ewma => p.ewma.initial,
    };
    let mut out = Vec::new();
    let mut next = 0;
    for tick in 0..=requests.last().copied().unwrap_or(0) {
        if tick > 0 {
            level = match alg {
                Algorithm::LeakyBucket => (level - p.leaky_bucket.drain_per_tick).max(0.0),
                Algorithm::Ewma => level * p.ewma.decay,
            };
        }
        while next < requests.len() && requests[next] == tick {
            if level > p.threshold(alg) {
                out.push((level, Decision::Dropped));
            } else {
                out.push((level, Decision::Served));
                level += match alg {
                    Algorithm::LeakyBucket => E_S,
                    Algorithm::Ewma => (1.0 - p.ewma.decay) * E_S,
                };
            }
            next += 1;
        }
    }
    out
}

fn schedule() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..3, 1..300).prop_map(|gaps| {
        let mut t = 0;
        gaps.into_iter()
            .map(|g| {
                t += g;
                t
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn event_driven_matches_tick_by_tick(reqs in schedule(), ewma in any::<bool>()) {
        let alg = if ewma { Algorithm::Ewma } else { Algorithm::LeakyBucket };
        let p = params();
        let k = p.threshold(alg);
        let oracle = tick_oracle(alg, &p, &reqs);
        let mut st = LimiterState::new(alg, &p, SimTime::ZERO);
        for (&m, &(want_level, want)) in reqs.iter().zip(&oracle) {
            let now = SimTime(m * MILLIS_PER_MINUTE);
            let level = st.level_at(&p, now).unwrap();
            prop_assert!((level - want_level).abs() < 1e-9, "{} vs {}", level, want_level);
            let got = st.update(&p, now, Some(E_S)).unwrap().unwrap();
            if got != want {
                // Only a counter sitting on the threshold may round either way;
                // past that point the two runs legitimately diverge.
                prop_assert!((want_level - k).abs() < 1e-9, "decision differs away from K at {}", m);
                break;
            }
        }
    }

    #[test]
    fn leaky_bucket_bounds_served_energy(gaps in prop::collection::vec(0u64..120_000, 1..400)) {
        let p = params();
        let mut st = LimiterState::new(Algorithm::LeakyBucket, &p, SimTime::ZERO);
        let (mut t, mut served) = (0u64, 0.0);
        for g in gaps {
            t += g;
            if st.update(&p, SimTime(t), Some(E_S)).unwrap() == Some(Decision::Served) {
                served += E_S;
            }
            prop_assert!(st.level() >= 0.0);
            let bound = p.leaky_bucket.threshold + E_S + p.leaky_bucket.drain_per_tick * (t as f64 / 60_000.0);
            prop_assert!(served <= bound + 1e-12, "served {} > bound {}", served, bound);
        }
    }

    #[test]
    fn quiet_requesters_recover(burst in 1u32..200, ewma in any::<bool>()) {
        let alg = if ewma { Algorithm::Ewma } else { Algorithm::LeakyBucket };
        let p = params();
        let mut st = LimiterState::new(alg, &p, SimTime::ZERO);
        for k in 0..burst {
            st.update(&p, SimTime(k as u64), Some(E_S)).unwrap();
        }
        // Worst case: every request served. The bucket needs `level / D`
        // ticks, the EWMA `ln(K / level) / ln d` ticks to fall back under K.
        let level = st.level();
        let wait = match alg {
            Algorithm::LeakyBucket => level / p.leaky_bucket.drain_per_tick,
            Algorithm::Ewma => ((p.ewma.threshold / level).ln() / p.ewma.decay.ln()).max(0.0),
        };
        let later = SimTime(burst as u64 + ((wait + 1.0) * 60_000.0).ceil() as u64);
        prop_assert_eq!(st.update(&p, later, Some(E_S)).unwrap(), Some(Decision::Served));
    }

    #[test]
    fn requesters_are_isolated(flood in 1u32..500, honest in prop::collection::vec(0u64..2_000, 1..40), ewma in any::<bool>()) {
        let alg = if ewma { Algorithm::Ewma } else { Algorithm::LeakyBucket };
        let p = params();
        let services: BTreeMap<_, _> = [(S, E_S)].into();
        let mut shared = LimiterTable::new(alg, p, services.clone());
        let mut alone = LimiterTable::new(alg, p, services);
        let mut honest: Vec<u64> = honest.into_iter().map(|m| m * MILLIS_PER_MINUTE).collect();
        honest.sort();
        let mut f = 0;
        for &t in &honest {
            while f < flood && (f as u64) * 1000 <= t {
                shared.check_and_update(RequesterId(666), S, SimTime(f as u64 * 1000)).unwrap();
                f += 1;
            }
            let a = shared.check_and_update(RequesterId(7), S, SimTime(t)).unwrap();
            let b = alone.check_and_update(RequesterId(7), S, SimTime(t)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn clock_going_backwards_is_an_error() {
    let p = params();
    let mut st = LimiterState::new(Algorithm::LeakyBucket, &p, SimTime(10));
    assert!(st.update(&p, SimTime(5), Some(E_S)).is_err());
}
