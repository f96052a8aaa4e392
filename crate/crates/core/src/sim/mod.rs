//! Dense statevector simulation.
//!
//! Basis ordering is fixed crate-wide: basis index `i` is the bitstring of
//! the register with qubit 0 as the least significant bit, so qubit `q` is
//! set in basis state `i` iff `i >> q & 1 == 1`.

mod circuit;
mod gate;
mod state;

pub use circuit::QuantumCircuit;
pub use gate::{Gate, GateOp};
pub use state::{Statevector, MAX_QUBITS};

use crate::error::Result;

/// `|0…0⟩` on `n_qubits` qubits.
pub fn zero_state(n_qubits: usize) -> Result<Statevector> {
    Statevector::zero(n_qubits)
}

/// Exact `⟨Z_q⟩`.
pub fn expectation_z(state: &Statevector, qubit: usize) -> Result<f64> {
    state.expectation_z(qubit)
}

pub fn probabilities(state: &Statevector) -> Vec<f64> {
    state.probabilities()
}
