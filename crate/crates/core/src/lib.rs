pub mod energy;
pub mod ids;
pub mod time;
pub mod limiter;
pub mod crypto;
pub mod protocol;
pub mod sim;
pub mod scenarios;
