//! Runs the ansatz on a few qubits and compares the state-vector result with
//! the dense Kronecker-product oracle.
//!
//! `cargo run --release --example simulate_circuit -- [qubits] [depth]`

use dqclab::qsim::{dense_oracle, prepare_state, run_ansatz, state_bytes, CircuitSpec};

fn main() -> dqclab::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(4);
    let depth = args.get(1).copied().unwrap_or(3);

    let embedding: Vec<f64> = (0..n).map(|q| 0.3 * q as f64 - 0.5).collect();
    let variational: Vec<f64> = (0..n * depth).map(|i| 0.7 * i as f64).collect();
    let spec = CircuitSpec::new(n, depth, embedding, variational)?;

    let state = prepare_state(&spec)?;
    println!("{n} qubits, depth {depth}: {} gates, {} bytes of state", spec.gates().len(), state_bytes(n));
    println!("norm^2 = {:.15}", state.norm_sqr());

    let fast = run_ansatz(&spec)?;
    println!("qubit\t<Z>\toracle");
    if n <= dqclab::qsim::oracle::ORACLE_MAX_QUBITS {
        let dense = dense_oracle(&spec)?;
        for (q, (z, o)) in fast.values().iter().zip(dense.values()).enumerate() {
            println!("{q}\t{z:+.12}\t{o:+.12}");
        }
    } else {
        for (q, z) in fast.values().iter().enumerate() {
            println!("{q}\t{z:+.12}\t-");
        }
    }
    Ok(())
}
