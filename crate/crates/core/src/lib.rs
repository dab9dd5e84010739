//! Tsetlin machine simulator for hardware design-space studies.

pub mod automata;
pub mod config;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod feedback;
pub mod game;
pub mod machine;
pub mod model;
pub mod rng;
pub mod trace;

pub use error::{Error, Result};
