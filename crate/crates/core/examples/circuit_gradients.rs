//! Gradients of a weighted sum of qubit expectations by the adjoint method
//! and by the parameter-shift rule, side by side, with the number of state
//! passes each one needed.

use std::time::Instant;

use dqclab::qgrad::{circuit_vjp, parameter_shift_grad};
use dqclab::qsim::{gate_passes, reset_gate_passes, CircuitSpec, Param};

fn main() -> dqclab::Result<()> {
    let (n, depth) = (5, 3);
    let embedding: Vec<f64> = (0..n).map(|q| 0.2 * q as f64 - 0.4).collect();
    let variational: Vec<f64> = (0..n * depth).map(|i| (i as f64 * 1.3).sin() * 3.0).collect();
    let spec = CircuitSpec::new(n, depth, embedding, variational)?;
    let upstream: Vec<f64> = (0..n).map(|q| 1.0 - 0.25 * q as f64).collect();

    reset_gate_passes();
    let started = Instant::now();
    let adjoint = circuit_vjp(&spec, &upstream)?;
    let (adjoint_time, adjoint_passes) = (started.elapsed(), gate_passes());

    reset_gate_passes();
    let started = Instant::now();
    let shift = parameter_shift_grad(&spec, &upstream)?;
    let (shift_time, shift_passes) = (started.elapsed(), gate_passes());

    println!("param\tadjoint\tshift");
    for p in spec.params() {
        let name = match p {
            Param::Embedding(q) => format!("embed[{q}]"),
            Param::Variational(q, l) => format!("theta[{q},{l}]"),
        };
        println!("{name}\t{:+.12}\t{:+.12}", adjoint.get(p, depth), shift.get(p, depth));
    }
    println!("adjoint: {adjoint_passes} passes in {adjoint_time:?}");
    println!("parameter shift: {shift_passes} passes in {shift_time:?}");
    Ok(())
}
