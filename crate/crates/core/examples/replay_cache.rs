//! Out-of-order counters against a validity distance of 4.
use drainguard::protocol::replay::ReplayCache;

fn main() {
    let mut cache = ReplayCache::new(4);
    for i in [10u16, 8, 12, 8, 7, 9, 13, 9, 16, 11] {
        println!("{i:>3} -> {:?} (max {:?}, cached {})", cache.admit(i), cache.max_seen(), cache.len());
    }
}
