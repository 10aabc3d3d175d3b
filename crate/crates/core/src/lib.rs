//! Motion-flow recognition and cooperative trajectory planning.
//!
//! The pipeline learns one Gaussian-process flow per cluster of human
//! demonstrations ([`flow`]), maps any observed prefix of a human motion to a
//! descriptor on the simplex, learns a reward over `(descriptor, robot
//! position)` from interacting demonstrations ([`reward`]) and plans a robot
//! arm trajectory by reward-weighted averaging of joint-space Gaussian random
//! path samples ([`planner`]).

pub mod arm;
pub mod artifact;
pub mod cluster;
pub mod datagen;
pub mod error;
pub mod flow;
pub mod gp;
pub mod harness;
pub mod pipeline;
pub mod planner;
pub mod reward;
pub mod session;
pub mod trajectory;

pub use error::{Error, Result};
