//! Hybrid quantum-classical classification heads for long-tailed multi-label
//! problems.
//!
//! The crate contains everything needed to train and compare a classical
//! linear head (CDL) against a dressed quantum circuit head (DQC) on top of a
//! frozen feature extractor:
//!
//! - [`qsim`]: a state-vector simulator for the Hadamard / RY / CNOT ansatz,
//!   with a dense Kronecker-product oracle for small registers.
//! - [`qgrad`]: adjoint (reverse-sweep) gradients of qubit expectations, plus
//!   the parameter-shift rule as an independent check.
//! - [`mlcore`]: linear layers, activations, binary cross-entropy, Adam and
//!   the seeded initializers.
//! - [`model`]: the two heads and the frozen feature extractor.
//! - [`datapipe`]: synthetic long-tailed data, preprocessing, augmentation and
//!   the compressed on-disk tensor cache.
//! - [`trainer`]: seeded training with early stopping and checkpoints.
//! - [`analytics`]: AUROC, paired t-tests, percent differences and volcano
//!   tables.
//! - [`bench`]: the zero-batch wall-clock training-step benchmark.
//! - [`cli`]: the command implementations behind the `dqclab` binary.
//!
//! Qubit `q` is bit `q` of an amplitude index (qubit 0 is the least
//! significant bit) everywhere in the crate.
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --release --example
//! <name>` runs one.

pub mod analytics;
pub mod bench;
pub mod cli;
pub mod datapipe;
mod error;
pub mod mlcore;
pub mod model;
pub mod qgrad;
pub mod qsim;
pub mod trainer;

pub use error::{Error, Result};
