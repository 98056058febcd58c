//! Attack-graph simulation and benchmarking for lateral-movement studies:
//! a declarative scenario catalog, a deterministic environment, six attacker
//! policies (from random search to deep Q-learning), a brute-force
//! optimal-path oracle, and a seeded benchmark harness.
//!
//! The crate is organized around one flow: a [`scenario::Scenario`] compiles
//! into an [`env::AttackEnv`] with a fixed, enumerated action space; policies
//! in [`agent`] pick action indices; [`bench`] runs seeded episodes and
//! aggregates speed- and depth-of-conquest metrics. Everything is
//! deterministic under a seed — repeated runs produce identical artifacts.

#![forbid(unsafe_code)]

pub mod agent;
pub mod bench;
pub mod env;
pub mod nn;
pub mod scenario;
