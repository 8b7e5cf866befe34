//! Task-constraint selection for CBF-QP controllers.
//!
//! A [`scenario::Scenario`] lists hard obstacles and timed soft waypoints for
//! a single-integrator robot. The per-step controller in [`policy`] imposes a
//! chosen subset of the soft constraints as control barrier rows of a small
//! QP ([`qp`]); [`rollout`] runs it closed-loop, and [`selector`] searches
//! for a subset that keeps the QP feasible while visiting as many waypoints
//! as possible.

pub mod mask;
pub mod oracles;
pub mod policy;
pub mod qp;
pub mod report;
pub mod rollout;
pub mod scenario;
pub mod selector;
pub mod tasks;
pub mod world;
