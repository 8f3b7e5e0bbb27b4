//! Stability certification and simulation of distributed averaging integral
//! (DAI) secondary frequency control under communication delays and
//! switching topologies.

pub mod certify;
pub mod config;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod lyapunov;
pub mod netmodel;
pub mod reduction;
pub mod simulate;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{Channel, Graph, TopologySet};
pub use netmodel::{DaiParams, GridState, PowerNetwork};
pub use reduction::{ErrorState, ReducedSystem};
