//! Simulation of phonon NOON-state generation and measurement on a trapped
//! ion with two motional modes.

pub mod cli;
pub mod config;
pub mod error;
pub mod evolve;
pub mod hamiltonians;
pub mod hilbert;
pub mod io;
pub mod measure;
pub mod metrology;
pub mod noise;
pub mod optim;
pub mod pulses;

pub use error::{Error, Result};
pub use hilbert::{BasisState, DensityMatrix, HilbertSpace, Mode, Operator, QuantumState, Qubit, StateVector};
