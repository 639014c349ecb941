//! Biased random walk on supercritical Galton-Watson trees with leaves.
//!
//! The crate builds the random environment lazily, runs the `beta`-biased walk
//! on it, analyses the traps it falls into and evaluates the infinitely
//! divisible laws that describe the rescaled hitting times.

pub mod environment;
pub mod iidsum;
pub mod limitlaw;
pub mod offspring;
pub mod parallel;
pub mod rng;
pub mod stats;
pub mod trap;
pub mod walk;
