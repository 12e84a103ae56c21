//! One request through the Backend acting as a proxy, message by message.
use drainguard::crypto::{CertificateAuthority, SymKey};
use drainguard::energy::DeploymentConfig;
use drainguard::ids::{ProviderId, RequesterId};
use drainguard::limiter::{Algorithm, LimiterTable};
use drainguard::protocol::backend::{BackendCore, BackendOutput};
use drainguard::protocol::provider::{ProviderConfig, ProviderCore};
use drainguard::protocol::requester::{RequesterCore, RequesterOutput};
use drainguard::protocol::{codec, ConnId, ProtocolKind, ProtocolMessage, BACKEND_SUBJECT};
use drainguard::sim::SimConfig;
use drainguard::time::SimTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dep = DeploymentConfig::coin_cell_tag();
    let sim = SimConfig::new(dep.clone(), ProtocolKind::Proxy, Algorithm::LeakyBucket);
    let ca = CertificateAuthority::generate(&mut rng);
    let kpb = SymKey::generate(&mut rng);
    let provider_id = ProviderId(1);
    let service = DeploymentConfig::LED_FLASH;

    let limiter = LimiterTable::for_deployment(Algorithm::LeakyBucket, &dep, sim.tick, &sim.tolerated_burst).unwrap();
    let mut backend = BackendCore::new(ca.enroll(BACKEND_SUBJECT, &mut rng), ca.public_key(), limiter, 2);
    backend.add_provider(provider_id, kpb.clone());
    let mut requester = RequesterCore::new(RequesterId(1), ca.enroll(1, &mut rng), ca.public_key(), BACKEND_SUBJECT, 3);
    let cfg = ProviderConfig::new(provider_id, ProtocolKind::Proxy, dep.services.clone(), 451.0);
    let mut provider = ProviderCore::symmetric(cfg, kpb);

    let conn = ConnId(0);
    let now = SimTime::ZERO;
    let a = ProtocolMessage::Hello(requester.start(conn, ProtocolKind::Proxy, service, provider_id).unwrap());
    println!("(a) R -> B  {:>4} bytes", codec::encoded_len(&a));
    let BackendOutput::Challenge(b) = backend.handle(conn, &a, now).unwrap() else { unreachable!() };
    let b = ProtocolMessage::Challenge(b);
    println!("(b) B -> R  {:>4} bytes", codec::encoded_len(&b));
    let RequesterOutput::ToBackend(c) = requester.handle(conn, &b).unwrap() else { unreachable!() };
    println!("(c) R -> B  {:>4} bytes", codec::encoded_len(&c));
    let BackendOutput::Proxy { msg: d, .. } = backend.handle(conn, &c, now).unwrap() else { unreachable!() };
    println!("(d) B -> P  {:>4} bytes  {:02x?}", d.to_bytes().len(), d.to_bytes());
    println!("provider: {:?}", provider.handle_bytes(&d.to_bytes(), now));
    println!("replayed: {:?}", provider.handle_bytes(&d.to_bytes(), now));
}
