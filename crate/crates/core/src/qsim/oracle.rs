//! Dense-matrix reference for small circuits.
//!
//! Every gate is expanded to a full `2^n x 2^n` operator with Kronecker
//! products. The factor for qubit `n - 1` is leftmost, which places qubit 0 on
//! the least significant bit of the row index. Nothing here shares code with
//! the strided kernels in `state`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::circuit::{CircuitSpec, Expectations};
use super::state::check_capacity;
use crate::Result;

/// Largest register the oracle accepts.
pub const ORACLE_MAX_QUBITS: usize = 6;

fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[a, b, c, d].map(|x| Complex64::new(x, 0.0)))
}

fn embed(factors: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    // factors[q] acts on qubit q.
    let mut op = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for f in factors.iter().rev() {
        op = op.kronecker(f);
    }
    op
}

/// Full operator for a single-qubit gate on qubit `q`.
pub fn single_qubit_operator(n: usize, q: usize, gate: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let factors: Vec<_> = (0..n)
        .map(|k| if k == q { gate.clone() } else { m2(1.0, 0.0, 0.0, 1.0) })
        .collect();
    embed(&factors)
}

/// `|0><0|_c (x) I + |1><1|_c (x) X_t`.
pub fn cnot_operator(n: usize, control: usize, target: usize) -> DMatrix<Complex64> {
    let id = m2(1.0, 0.0, 0.0, 1.0);
    let p0 = m2(1.0, 0.0, 0.0, 0.0);
    let p1 = m2(0.0, 0.0, 0.0, 1.0);
    let x = m2(0.0, 1.0, 1.0, 0.0);
    let keep: Vec<_> = (0..n).map(|k| if k == control { p0.clone() } else { id.clone() }).collect();
    let flip: Vec<_> = (0..n)
        .map(|k| match k {
            _ if k == control => p1.clone(),
            _ if k == target => x.clone(),
            _ => id.clone(),
        })
        .collect();
    embed(&keep) + embed(&flip)
}

pub fn hadamard_matrix() -> DMatrix<Complex64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    m2(h, h, h, -h)
}

pub fn ry_matrix(angle: f64) -> DMatrix<Complex64> {
    let c = (angle / 2.0).cos();
    let s = (angle / 2.0).sin();
    m2(c, -s, s, c)
}

/// Final state vector of `spec`, computed by dense operator products.
pub fn dense_state(spec: &CircuitSpec) -> Result<DVector<Complex64>> {
    let n = spec.num_qubits();
    check_capacity(n, ORACLE_MAX_QUBITS, "dense oracle")?;
    let dim = 1 << n;
    let mut psi = DVector::from_element(dim, Complex64::new(0.0, 0.0));
    psi[0] = Complex64::new(1.0, 0.0);

    if spec.hadamard_prefix() {
        for q in 0..n {
            psi = single_qubit_operator(n, q, &hadamard_matrix()) * psi;
        }
    }
    for q in 0..n {
        psi = single_qubit_operator(n, q, &ry_matrix(spec.embedding()[q])) * psi;
    }
    let pairs = spec.entangler().pairs(n);
    for layer in 0..spec.depth() {
        for q in 0..n {
            let angle = spec.variational_angle(q, layer);
            psi = single_qubit_operator(n, q, &ry_matrix(angle)) * psi;
        }
        for &(c, t) in &pairs {
            psi = cnot_operator(n, c, t) * psi;
        }
    }
    Ok(psi)
}

/// `<Z_q>` computed as `psi^dagger Z_q psi` with dense `Z_q`.
pub fn dense_oracle(spec: &CircuitSpec) -> Result<Expectations> {
    let n = spec.num_qubits();
    let psi = dense_state(spec)?;
    let z = m2(1.0, 0.0, 0.0, -1.0);
    let values = (0..n)
        .map(|q| {
            let zq = single_qubit_operator(n, q, &z);
            psi.dotc(&(zq * &psi)).re
        })
        .collect();
    Ok(Expectations::from_values(values))
}
