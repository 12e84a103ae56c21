use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use drainguard::crypto::{keyfile, CertificateAuthority, SymKey};
use drainguard::limiter::Algorithm;
use drainguard::protocol::ProtocolKind;
use drainguard::scenarios::{self, Checks, ScenarioError, ScenarioSpec};

#[derive(Parser)]
#[command(name = "drainguard", version, about = "Battery exhaustion experiments for a Backend-guarded IoT Provider")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; the built-in coin-cell setup when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// p1, p2 or asym; overrides the scenario.
    #[arg(long, global = true)]
    protocol: Option<ProtocolKind>,
    /// lb or ewma; overrides the scenario. `detect` runs both when omitted.
    #[arg(long, global = true)]
    limiter: Option<Algorithm>,
    /// First seed; overrides the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of consecutive seeds to sweep, run in parallel.
    #[arg(long, global = true, value_name = "N")]
    seeds: Option<u32>,
    /// Output directory; overrides the scenario.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Compare results with the acceptance thresholds; exit 3 on violation.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Derived energy and limiter parameters.
    Parametrize,
    /// Days to exhaustion for chained bursts.
    Severity,
    /// Year-long detection and throttling runs.
    Detect,
    /// Request sizes and constrained-link latency per protocol.
    Latency,
    /// Energy drained by garbage requests sent straight to the Provider.
    Inject {
        /// Messages per second; overrides the scenario.
        #[arg(long)]
        rate: Option<f64>,
        /// Duration in days; overrides the scenario.
        #[arg(long)]
        days: Option<u64>,
    },
    /// Write a CA signing seed, its public key and a Provider-Backend key as hex files.
    Keygen {
        /// Skip the Provider-Backend key.
        #[arg(long)]
        no_provider_key: bool,
    },
}

enum Failure {
    Config(String),
    Io(String),
    Check,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Check) => ExitCode::from(3),
    }
}

fn load(common: &Common) -> Result<ScenarioSpec, Failure> {
    let mut spec = match &common.config {
        Some(p) => ScenarioSpec::load(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => ScenarioSpec::reference(),
    };
    if let Some(p) = common.protocol {
        spec.protocol = p;
    }
    if let Some(l) = common.limiter {
        spec.limiter = l;
    }
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    if let Some(o) = &common.out {
        spec.out = Some(o.clone());
    }
    spec.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(spec)
}

fn seeds(common: &Common, spec: &ScenarioSpec) -> Vec<u64> {
    let n = common.seeds.unwrap_or(spec.simulation.seeds).max(1) as u64;
    (spec.seed..spec.seed + n).collect()
}

fn finish(checks: Checks, common: &Common, out: Option<&Path>) -> Result<(), Failure> {
    if !common.check {
        return Ok(());
    }
    print!("{}", checks.render());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("checks.json"), serde_json::to_string_pretty(&checks).expect("serializes") + "\n")?;
    }
    if checks.all_passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = &cli.common;
    if let Command::Keygen { no_provider_key } = cli.command {
        let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
        return keygen(&dir, common.seed, !no_provider_key);
    }
    let spec = load(common)?;
    let out = spec.out.clone();
    match cli.command {
        Command::Parametrize => {
            let p = scenarios::parametrize(&spec)?;
            print!("{}", p.render());
            if let Some(dir) = &out {
                scenarios::write_parametrization(&p, dir)?;
            }
            finish(Checks::parametrization(&p), common, out.as_deref())
        }
        Command::Severity => {
            let rows = scenarios::severity(&spec)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r).map_err(|e| Failure::Io(e.to_string()))?;
            }
            w.flush()?;
            if let Some(dir) = &out {
                write_rows(&dir.join("severity.csv"), &rows)?;
            }
            finish(Checks::severity(&rows), common, out.as_deref())
        }
        Command::Detect => {
            let algorithms = match common.limiter {
                Some(a) => vec![a],
                None => vec![Algorithm::LeakyBucket, Algorithm::Ewma],
            };
            let d = scenarios::detect(&spec, spec.protocol, &algorithms, &seeds(common, &spec))?;
            println!("{}", serde_json::to_string_pretty(&d.metrics).expect("serializes"));
            if let Some(dir) = &out {
                scenarios::write_detection(&d, dir)?;
            }
            finish(Checks::detection(&d), common, out.as_deref())
        }
        Command::Latency => {
            let rows = scenarios::latency(&spec, spec.seed)?;
            println!("{:<6} {:>6} {:>12} {:>12}", "proto", "bytes", "transfer_s", "simulated_s");
            for r in &rows {
                let sim = r.simulated_s.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
                println!("{:<6} {:>6} {:>12.3} {:>12}", r.protocol.to_string(), r.request_bytes, r.transfer_s, sim);
            }
            if let Some(dir) = &out {
                write_rows(&dir.join("latency.csv"), &rows)?;
            }
            finish(Checks::latency(&rows), common, out.as_deref())
        }
        Command::Inject { rate, days } => {
            let mut spec = spec;
            if let Some(r) = rate {
                spec.injection.per_second = r;
            }
            if let Some(d) = days {
                spec.injection.days = d;
            }
            spec.validate().map_err(|e| Failure::Config(e.to_string()))?;
            let o = scenarios::injection_drain(&spec, spec.protocol, spec.seed)?;
            println!("{}", serde_json::to_string_pretty(&o).expect("serializes"));
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(
                    dir.join(format!("injection_{}.json", o.protocol)),
                    serde_json::to_string_pretty(&o).expect("serializes") + "\n",
                )?;
            }
            finish(Checks::injection(&o), common, out.as_deref())
        }
        Command::Keygen { .. } => unreachable!(),
    }
}

fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn keygen(dir: &Path, seed: Option<u64>, provider_key: bool) -> Result<(), Failure> {
    let mut rng = match seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::from_entropy(),
    };
    std::fs::create_dir_all(dir)?;
    let ca = CertificateAuthority::generate(&mut rng);
    let io = |e: drainguard::crypto::CryptoError| Failure::Io(e.to_string());
    keyfile::write_hex(dir.join("ca_seed.hex"), &ca.signing_key().expose_seed()).map_err(io)?;
    keyfile::write_hex(dir.join("ca_public.hex"), &ca.public_key().0).map_err(io)?;
    if provider_key {
        keyfile::write_hex(dir.join("provider_key.hex"), SymKey::generate(&mut rng).expose_bytes()).map_err(io)?;
    }
    println!("wrote keys to {}", dir.display());
    Ok(())
}
