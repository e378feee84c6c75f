//! Noiseless state-vector simulation of the Hadamard / RY / CNOT ansatz.
//!
//! Qubit `q` is bit `q` of an amplitude index; qubit 0 is the least
//! significant bit. Gate kernels mutate in place. The free functions below
//! take and return states by value for callers that prefer that style.

mod circuit;
pub mod oracle;
mod state;

pub use circuit::{prepare_state, run_ansatz, CircuitSpec, Entangler, Expectations, Gate, Param};
pub use oracle::dense_oracle;
pub use state::{
    gate_passes, reset_gate_passes, state_bytes, StateVector, AMPLITUDE_BYTES, MAX_QUBITS,
};

pub(crate) use circuit::simulate;
pub(crate) use state::{adjoint_ry_layer, check_capacity, CnotPermutation};

use crate::Result;

pub fn init_zero_state(num_qubits: usize) -> Result<StateVector> {
    StateVector::zero(num_qubits)
}

pub fn apply_hadamard(mut state: StateVector, q: usize) -> Result<StateVector> {
    state.hadamard(q)?;
    Ok(state)
}

pub fn apply_ry(mut state: StateVector, q: usize, angle: f64) -> Result<StateVector> {
    state.ry(q, angle)?;
    Ok(state)
}

pub fn apply_cnot(mut state: StateVector, control: usize, target: usize) -> Result<StateVector> {
    state.cnot(control, target)?;
    Ok(state)
}

pub fn expval_z(state: &StateVector, q: usize) -> Result<f64> {
    state.expval_z(q)
}
