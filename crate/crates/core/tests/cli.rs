use std::path::PathBuf;
use std::process::Command;

use drainguard::scenarios::{self, AttackSection, ScenarioSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drainguard"))
}

fn sample_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/coin_cell.toml")
}

#[test]
fn sample_config_is_the_reference_setup() {
    let mut spec = ScenarioSpec::load(sample_config()).unwrap();
    let reference = ScenarioSpec::reference();
    spec.out = None;
    spec.base_dir = reference.base_dir.clone();
    assert_eq!(spec, reference);
}

#[test]
fn scenario_toml_round_trips() {
    let spec = ScenarioSpec::reference();
    let back = ScenarioSpec::from_toml_str(&spec.to_toml(), std::path::Path::new("x.toml")).unwrap();
    assert_eq!(back.deployment, spec.deployment);
    assert_eq!(back.attack, spec.attack);
    assert_eq!(back.severity, spec.severity);
}

#[test]
fn invalid_scenarios_are_config_errors() {
    let base = std::fs::read_to_string(sample_config()).unwrap();
    for (from, to) in [
        ("requesters = 100", "requesters = 0"),
        ("tick_ms = 60000", "tick_ms = 0"),
        ("delta_i = 16", "delta_i = 0"),
        ("requester = 1", "requester = 101"),
        ("kind = \"chained_bursts\"", "kind = \"meteor\""),
        ("energy_j = 0.045", "energy_j = 0.045\nbogus = 1"),
    ] {
        let text = base.replace(from, to);
        assert_ne!(text, base);
        assert!(ScenarioSpec::from_toml_str(&text, std::path::Path::new("c.toml")).is_err(), "{to}");
    }
}

#[test]
fn exit_codes() {
    let ok = bin().args(["parametrize", "--check"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = 'x'\n").unwrap();
    let out = bin().args(["parametrize", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["parametrize", "--protocol", "p9"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // A deployment with twice the Requesters halves lambda_th and misses the thresholds.
    let text = std::fs::read_to_string(sample_config()).unwrap().replace("requesters = 100", "requesters = 200");
    let other = dir.path().join("other.toml");
    std::fs::write(&other, text).unwrap();
    let out = bin().args(["parametrize", "--check", "--config"]).arg(&other).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL lambda_th"));
}

#[test]
fn keygen_files_drive_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let keys = dir.path().join("keys");
    let out = bin().args(["keygen", "--seed", "4", "--out"]).arg(&keys).output().unwrap();
    assert!(out.status.success());
    for f in ["ca_seed.hex", "ca_public.hex", "provider_key.hex"] {
        let text = std::fs::read_to_string(keys.join(f)).unwrap();
        assert!(text.trim().chars().all(|c| c.is_ascii_hexdigit()), "{f}");
    }
    let text = std::fs::read_to_string(sample_config())
        .unwrap()
        .replace("# [keys]", "[keys]")
        .replace("# ca_seed", "ca_seed")
        .replace("# provider_key", "provider_key");
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, text).unwrap();
    let spec = ScenarioSpec::load(&cfg).unwrap();
    let km = spec.key_material().unwrap().unwrap();
    let seed = drainguard::crypto::keyfile::read_hex::<32>(keys.join("ca_seed.hex")).unwrap();
    assert_eq!(km.ca.signing_key().expose_seed(), seed);

    std::fs::remove_file(keys.join("provider_key.hex")).unwrap();
    assert!(spec.key_material().is_err());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(sample_config()).unwrap().replace("days = 365\nseeds", "days = 40\nseeds").replace("start_day = 200", "start_day = 20");
    let cfg = dir.path().join("short.toml");
    std::fs::write(&cfg, text).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let s = bin().args(["detect", "--seeds", "2", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
        assert!(s.status.success());
        let mut files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|f| (f.file_name().unwrap().to_owned(), std::fs::read(f).unwrap())).collect::<Vec<_>>()
    };
    let (a, b) = (run("a"), run("b"));
    assert!(a.len() >= 2 * 2 * 3 + 2);
    assert_eq!(a, b);
}

#[test]
fn severity_grid_is_monotone() {
    let rows = scenarios::severity(&ScenarioSpec::reference()).unwrap();
    for w in rows.windows(2) {
        if w[0].start_day == w[1].start_day {
            assert!(w[1].exhaustion_days < w[0].exhaustion_days);
        } else {
            assert!(w[1].remaining_j < w[0].remaining_j);
        }
    }
}

#[test]
fn no_attack_scenario_has_no_attack_metrics() {
    let mut spec = ScenarioSpec::reference();
    spec.attack = AttackSection::None;
    spec.simulation.days = 10;
    let d = scenarios::detect(&spec, drainguard::protocol::ProtocolKind::Proxy, &[drainguard::limiter::Algorithm::Ewma], &[1])
        .unwrap();
    assert!(d.metrics[0].attack_served_per_day.is_none());
    assert!(d.metrics[0].benign_requests > 0.0);
}

#[test]
fn injection_at_rate_zero_drains_nothing() {
    let mut spec = ScenarioSpec::reference();
    spec.injection.per_second = 0.0;
    spec.injection.days = 3;
    let o = scenarios::injection_drain(&spec, drainguard::protocol::ProtocolKind::Proxy, 1).unwrap();
    assert_eq!(o.drained_j, 0.0);
    assert_eq!(o.injected, 0);
}
