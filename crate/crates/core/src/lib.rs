//! Secured PTP engine and an adversarial network simulator.

pub mod attacks;
pub mod bmc;
pub mod identity;
pub mod node;
pub mod rng;
pub mod scenario;
pub mod security;
pub mod session;
pub mod simnet;
pub mod timemath;
pub mod wire;
