//! Curriculum reinforcement-learning engine for knowledge-base question
//! answering: controllable retrieval difficulty, gap-level scheduling,
//! Gaussian curriculum sampling and label-propagation difficulty estimates,
//! driven end to end by a simulated policy.

pub mod corpus;
pub mod curriculum;
pub mod error;
pub mod graph;
pub mod retrieval;
pub mod rl;
pub mod rng;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
