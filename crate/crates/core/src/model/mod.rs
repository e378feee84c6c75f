//! The two classification heads and the frozen feature extractor in front of
//! them.
//!
//! CDL: `sigmoid(W x + b)`. DQC: `sigmoid(w_out(Z(theta, (pi/2) tanh(w_in x))))`
//! where `Z` runs the Hadamard-prefixed RY ansatz and returns `<Z_q>` per
//! qubit. Both heads expose logits so the loss can be computed in the stable
//! logits form; probabilities remain the public prediction.

mod extractor;
mod heads;

pub use extractor::{
    extract_features, ExtractorInput, FeatureExtractor, PrecomputedFeatures, ProjectionConfig, RandomProjection,
    DEFAULT_FEATURE_DIM,
};
pub use heads::{
    cdl_backward, cdl_forward, count_parameters, dqc_backward, dqc_backward_taped, dqc_forward, dqc_forward_taped,
    CdlParams, DqcParams, DqcTape, Head, HeadGradients, HeadKind, ParameterCounts, Prediction,
};
