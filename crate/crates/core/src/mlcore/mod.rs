//! Classical building blocks: linear layers, activations, binary
//! cross-entropy, Adam, initializers and the seeded generator.

mod activation;
mod adam;
mod init;
mod linear;
mod loss;
mod rng;

pub use activation::{sigmoid, sigmoid_scalar, tanh_rescale, tanh_rescale_backward};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use init::{init_lecun_normal, init_variational_angles, ANGLE_STD};
pub use linear::{linear_forward, Linear, LinearGrads};
pub use loss::{bce, bce_logits_sum_and_grad, bce_with_logits, PROB_CLAMP};
pub use rng::{id_key, Rng};
