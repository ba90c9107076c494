//! Simulation and analysis toolkit for entanglement teleportation along
//! linear paths of superconducting qubits.
//!
//! The crate covers path graph-state preparation, measurement-based
//! teleportation in three circuit styles, two-qubit tomography with readout
//! mitigation, and a path finder over weighted device graphs.

pub mod channels;
pub mod circuit;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod mitigation;
pub mod pathfinder;
pub mod protocols;
pub mod sim;
pub mod tomography;

pub use error::{Error, Result};
