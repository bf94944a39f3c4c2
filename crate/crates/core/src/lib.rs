//! Quantum baker's map on N qubits, hierarchical coarse-grainings of its
//! symbolic string, and the decoherence functional of coarse-grained histories.

pub mod analytic;
pub mod bakermap;
pub mod bitcore;
pub mod error;
pub mod experiment;
pub mod hilbert;
pub mod histories;
pub mod partitions;
pub mod refcheck;

pub use error::{BakerError, BakerResult};
