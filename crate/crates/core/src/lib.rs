//! Simulation of locally addressed Rydberg spin arrays with dipolar XY
//! exchange: Hamiltonian construction, addressing-beam physics, propagation,
//! readout models, canned experiments and experiment configuration files.

pub mod error;
pub mod evolve;
pub mod optics;
pub mod protocols;
pub mod readout;
pub mod seqfile;
pub mod spinmodel;

pub use error::{Error, Result};
