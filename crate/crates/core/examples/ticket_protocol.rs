//! The Backend as ticket issuer: obtain a ticket, redeem it, try it twice.
use drainguard::crypto::{CertificateAuthority, SymKey};
use drainguard::energy::DeploymentConfig;
use drainguard::ids::{ProviderId, RequesterId};
use drainguard::limiter::{Algorithm, LimiterTable};
use drainguard::protocol::backend::{BackendCore, BackendOutput};
use drainguard::protocol::provider::{ProviderConfig, ProviderCore};
use drainguard::protocol::requester::{RequesterCore, RequesterOutput};
use drainguard::protocol::{ConnId, ProtocolKind, ProtocolMessage, BACKEND_SUBJECT};
use drainguard::sim::SimConfig;
use drainguard::time::SimTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dep = DeploymentConfig::coin_cell_tag();
    let sim = SimConfig::new(dep.clone(), ProtocolKind::Ticket, Algorithm::Ewma);
    let ca = CertificateAuthority::generate(&mut rng);
    let kpb = SymKey::generate(&mut rng);
    let pid = ProviderId(1);
    let service = DeploymentConfig::LED_FLASH;

    let limiter = LimiterTable::for_deployment(Algorithm::Ewma, &dep, sim.tick, &sim.tolerated_burst).unwrap();
    let mut backend = BackendCore::new(ca.enroll(BACKEND_SUBJECT, &mut rng), ca.public_key(), limiter, 2);
    backend.add_provider(pid, kpb.clone());
    let mut requester = RequesterCore::new(RequesterId(1), ca.enroll(1, &mut rng), ca.public_key(), BACKEND_SUBJECT, 3);
    let mut provider = ProviderCore::symmetric(ProviderConfig::new(pid, ProtocolKind::Ticket, dep.services.clone(), 451.0), kpb);

    let mut tickets = Vec::new();
    for k in 0..3u64 {
        let conn = ConnId(k);
        let now = SimTime(k * 3_600_000);
        let a = ProtocolMessage::Hello(requester.start(conn, ProtocolKind::Ticket, service, pid).unwrap());
        let BackendOutput::Challenge(b) = backend.handle(conn, &a, now).unwrap() else { unreachable!() };
        let RequesterOutput::ToBackend(c2) = requester.handle(conn, &ProtocolMessage::Challenge(b)).unwrap() else {
            unreachable!()
        };
        let BackendOutput::Ticket(d2) = backend.handle(conn, &c2, now).unwrap() else { unreachable!() };
        let RequesterOutput::Redeem { msg, .. } = requester.handle(conn, &ProtocolMessage::TicketGrant(d2)).unwrap() else {
            unreachable!()
        };
        println!("ticket {k}: counter {} -> (e) {:02x?}", msg.ticket.counter, msg.to_bytes());
        tickets.push(msg);
    }
    // Redeemed newest first: the validity window admits the older ones.
    for e in tickets.iter().rev() {
        println!("redeem counter {}: {:?}", e.ticket.counter, provider.handle_ticket(e, SimTime(10_000_000)));
    }
    println!("again counter {}: {:?}", tickets[0].ticket.counter, provider.handle_ticket(&tickets[0], SimTime(10_000_001)));
}
