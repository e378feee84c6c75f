use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mlcore::{
    init_lecun_normal, init_variational_angles, sigmoid, ANGLE_STD, tanh_rescale, tanh_rescale_backward, Linear, Rng,
};
use crate::qgrad::vjp_from_state;
use crate::qsim::{check_capacity, simulate, CircuitSpec, Entangler, StateVector, MAX_QUBITS};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Linear layer plus sigmoid.
    Cdl,
    /// Linear preprocessing, variational circuit, linear postprocessing, sigmoid.
    Dqc,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Cdl => "cdl",
            HeadKind::Dqc => "dqc",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cdl" => Ok(HeadKind::Cdl),
            "dqc" => Ok(HeadKind::Dqc),
            other => Err(Error::Config(format!("unknown head {other:?} (expected cdl or dqc)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CdlParams {
    pub head: Linear,
}

/// Trainable state of the dressed circuit head.
#[derive(Clone, Debug, PartialEq)]
pub struct DqcParams {
    /// Features to one pre-activation per qubit.
    pub w_in: Linear,
    /// `n x depth` rotation angles, qubit-major.
    pub theta: Vec<f64>,
    /// Expectations to logits.
    pub w_out: Linear,
    pub depth: usize,
    pub entangler: Entangler,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    fn from_logits(logits: Vec<f64>) -> Self {
        let probabilities = sigmoid(&logits);
        Prediction { logits, probabilities }
    }
}

/// Per-group parameter gradients (same order as [`Head::param_groups`]) and
/// the gradient with respect to the input features.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGradients {
    pub groups: Vec<Vec<f64>>,
    pub features: Vec<f64>,
}

/// Trainable parameter counts split the way the architecture is usually
/// reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    /// Classical layer on the features (the whole CDL head).
    pub preprocess: usize,
    /// Variational rotation angles.
    pub quantum: usize,
    /// Classical layer on the expectations.
    pub postprocess: usize,
}

impl ParameterCounts {
    pub fn closed_form(kind: HeadKind, feature_dim: usize, num_labels: usize, depth: usize) -> Self {
        let (m, n) = (feature_dim, num_labels);
        match kind {
            HeadKind::Cdl => ParameterCounts {
                preprocess: m * n + n,
                ..Default::default()
            },
            HeadKind::Dqc => ParameterCounts {
                preprocess: m * n + n,
                quantum: n * depth,
                postprocess: n * n + n,
            },
        }
    }

    pub fn total(&self) -> usize {
        self.preprocess + self.quantum + self.postprocess
    }
}

const CDL_GROUPS: &[&str] = &["head.weight", "head.bias"];
const DQC_GROUPS: &[&str] = &["w_in.weight", "w_in.bias", "theta", "w_out.weight", "w_out.bias"];

impl DqcParams {
    fn circuit(&self, embedding: Vec<f64>) -> Result<CircuitSpec> {
        let n = self.w_in.out_dim();
        Ok(CircuitSpec::new(n, self.depth, embedding, self.theta.clone())?.with_entangler(self.entangler))
    }
}

/// Intermediate values of one DQC forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct DqcTape {
    pre_activation: Vec<f64>,
    circuit: CircuitSpec,
    state: StateVector,
    expectations: Vec<f64>,
}

impl DqcTape {
    pub fn embedding(&self) -> &[f64] {
        self.circuit.embedding()
    }

    pub fn expectations(&self) -> &[f64] {
        &self.expectations
    }
}

pub fn cdl_forward(params: &CdlParams, features: &[f64]) -> Result<Prediction> {
    Ok(Prediction::from_logits(params.head.forward(features)?))
}

pub fn cdl_backward(params: &CdlParams, features: &[f64], upstream: &[f64]) -> Result<HeadGradients> {
    let g = params.head.backward(features, upstream)?;
    Ok(HeadGradients {
        groups: vec![g.weight, g.bias],
        features: g.input,
    })
}

pub fn dqc_forward_taped(params: &DqcParams, features: &[f64]) -> Result<(Prediction, DqcTape)> {
    let pre_activation = params.w_in.forward(features)?;
    let circuit = params.circuit(tanh_rescale(&pre_activation))?;
    let state = simulate(&circuit)?;
    let expectations = state.expvals_z();
    let logits = params.w_out.forward(&expectations)?;
    Ok((
        Prediction::from_logits(logits),
        DqcTape {
            pre_activation,
            circuit,
            state,
            expectations,
        },
    ))
}

pub fn dqc_forward(params: &DqcParams, features: &[f64]) -> Result<Prediction> {
    Ok(dqc_forward_taped(params, features)?.0)
}

/// Backward pass reusing a tape from [`dqc_forward_taped`] on the same
/// features. `upstream` is `dL/d(logits)`.
pub fn dqc_backward_taped(
    params: &DqcParams,
    tape: &DqcTape,
    features: &[f64],
    upstream: &[f64],
) -> Result<HeadGradients> {
    let post = params.w_out.backward(&tape.expectations, upstream)?;
    let circuit = vjp_from_state(&tape.circuit, tape.state.clone(), &post.input)?;
    let grad_pre = tanh_rescale_backward(&tape.pre_activation, &circuit.embedding);
    let pre = params.w_in.backward(features, &grad_pre)?;
    Ok(HeadGradients {
        groups: vec![pre.weight, pre.bias, circuit.variational, post.weight, post.bias],
        features: pre.input,
    })
}

pub fn dqc_backward(params: &DqcParams, features: &[f64], upstream: &[f64]) -> Result<HeadGradients> {
    let (_, tape) = dqc_forward_taped(params, features)?;
    dqc_backward_taped(params, &tape, features, upstream)
}

/// Either classification head behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Cdl(CdlParams),
    Dqc(DqcParams),
}

impl Head {
    /// Lecun-normal linear layers and `Normal(0, (2 pi)^2)` angles.
    pub fn init(kind: HeadKind, rng: &mut Rng, feature_dim: usize, num_labels: usize, depth: usize) -> Result<Self> {
        Self::init_with_angle_std(kind, rng, feature_dim, num_labels, depth, ANGLE_STD)
    }

    pub fn init_with_angle_std(
        kind: HeadKind,
        rng: &mut Rng,
        feature_dim: usize,
        num_labels: usize,
        depth: usize,
        angle_std: f64,
    ) -> Result<Self> {
        if !(angle_std.is_finite() && angle_std >= 0.0) {
            return Err(Error::Argument(format!("angle std {angle_std} must be finite and non-negative")));
        }
        if feature_dim == 0 || num_labels == 0 {
            return Err(Error::Argument("feature_dim and num_labels must be positive".into()));
        }
        match kind {
            HeadKind::Cdl => Ok(Head::Cdl(CdlParams {
                head: init_lecun_normal(rng, feature_dim, num_labels),
            })),
            HeadKind::Dqc => {
                check_capacity(num_labels, MAX_QUBITS, "DQC head")?;
                if depth == 0 {
                    return Err(Error::Argument("DQC depth must be at least 1".into()));
                }
                let w_in = init_lecun_normal(rng, feature_dim, num_labels);
                let theta = init_variational_angles(rng, num_labels, depth, angle_std);
                let w_out = init_lecun_normal(rng, num_labels, num_labels);
                Ok(Head::Dqc(DqcParams {
                    w_in,
                    theta,
                    w_out,
                    depth,
                    entangler: Entangler::Ring,
                }))
            }
        }
    }

    /// Builds a head from parameter groups in [`Head::group_names`] order.
    pub fn from_groups(
        kind: HeadKind,
        feature_dim: usize,
        num_labels: usize,
        depth: usize,
        groups: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let (m, n) = (feature_dim, num_labels);
        let mut it = groups.into_iter();
        let mut next = |what: &'static str| it.next().ok_or_else(|| Error::Argument(format!("missing group {what}")));
        match kind {
            HeadKind::Cdl => Ok(Head::Cdl(CdlParams {
                head: Linear::from_parts(m, n, next("head.weight")?, next("head.bias")?)?,
            })),
            HeadKind::Dqc => {
                let w_in = Linear::from_parts(m, n, next("w_in.weight")?, next("w_in.bias")?)?;
                let theta = next("theta")?;
                if theta.len() != n * depth {
                    return Err(Error::shape("theta", n * depth, theta.len()));
                }
                let w_out = Linear::from_parts(n, n, next("w_out.weight")?, next("w_out.bias")?)?;
                Ok(Head::Dqc(DqcParams {
                    w_in,
                    theta,
                    w_out,
                    depth,
                    entangler: Entangler::Ring,
                }))
            }
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Cdl(_) => HeadKind::Cdl,
            Head::Dqc(_) => HeadKind::Dqc,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Head::Cdl(p) => p.head.in_dim(),
            Head::Dqc(p) => p.w_in.in_dim(),
        }
    }

    pub fn num_labels(&self) -> usize {
        match self {
            Head::Cdl(p) => p.head.out_dim(),
            Head::Dqc(p) => p.w_out.out_dim(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Head::Cdl(_) => 0,
            Head::Dqc(p) => p.depth,
        }
    }

    pub fn group_names(&self) -> &'static [&'static str] {
        match self {
            Head::Cdl(_) => CDL_GROUPS,
            Head::Dqc(_) => DQC_GROUPS,
        }
    }

    pub fn param_groups(&self) -> Vec<&[f64]> {
        match self {
            Head::Cdl(p) => vec![p.head.weight(), p.head.bias()],
            Head::Dqc(p) => vec![p.w_in.weight(), p.w_in.bias(), &p.theta, p.w_out.weight(), p.w_out.bias()],
        }
    }

    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Head::Cdl(p) => {
                let (w, b) = p.head.parts_mut();
                vec![w, b]
            }
            Head::Dqc(p) => {
                let (wi, bi) = p.w_in.parts_mut();
                let (wo, bo) = p.w_out.parts_mut();
                vec![wi, bi, &mut p.theta, wo, bo]
            }
        }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.param_groups().iter().map(|g| g.len()).collect()
    }

    pub fn forward(&self, features: &[f64]) -> Result<Prediction> {
        match self {
            Head::Cdl(p) => cdl_forward(p, features),
            Head::Dqc(p) => dqc_forward(p, features),
        }
    }

    pub fn backward(&self, features: &[f64], upstream: &[f64]) -> Result<HeadGradients> {
        match self {
            Head::Cdl(p) => cdl_backward(p, features, upstream),
            Head::Dqc(p) => dqc_backward(p, features, upstream),
        }
    }

    /// Forward pass, summed BCE against `targets`, and the gradient of that
    /// sum. One circuit forward is shared between prediction and backward.
    pub fn loss_and_gradients(&self, features: &[f64], targets: &[f64]) -> Result<(f64, HeadGradients)> {
        match self {
            Head::Cdl(p) => {
                let pred = cdl_forward(p, features)?;
                let (loss, up) = crate::mlcore::bce_logits_sum_and_grad(&pred.logits, targets)?;
                Ok((loss, cdl_backward(p, features, &up)?))
            }
            Head::Dqc(p) => {
                let (pred, tape) = dqc_forward_taped(p, features)?;
                let (loss, up) = crate::mlcore::bce_logits_sum_and_grad(&pred.logits, targets)?;
                Ok((loss, dqc_backward_taped(p, &tape, features, &up)?))
            }
        }
    }

    /// Summed BCE over a batch and its gradient for every parameter group,
    /// in [`Head::param_groups`] order. Feature gradients are not formed.
    /// The result does not depend on how samples are scheduled over threads.
    pub fn batch_loss_and_gradients(&self, features: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
        if features.len() != targets.len() {
            return Err(Error::shape("batch targets", features.len(), targets.len()));
        }
        match self {
            Head::Cdl(p) => {
                let per_sample = features
                    .par_iter()
                    .zip(targets)
                    .map(|(x, y)| crate::mlcore::bce_logits_sum_and_grad(&p.head.forward(x)?, y))
                    .collect::<Result<Vec<_>>>()?;
                let out = p.head.out_dim();
                // dL/dW[i][j] = sum over samples of x[i] * u[j], rows in parallel,
                // samples always summed in batch order.
                let mut weight = vec![0.0; p.head.weight().len()];
                weight.par_chunks_mut(out).enumerate().for_each(|(i, row)| {
                    for (x, (_, u)) in features.iter().zip(&per_sample) {
                        let xi = x[i];
                        if xi != 0.0 {
                            for (g, uj) in row.iter_mut().zip(u) {
                                *g += xi * uj;
                            }
                        }
                    }
                });
                let mut bias = vec![0.0; out];
                let mut loss = 0.0;
                for (l, u) in &per_sample {
                    loss += l;
                    for (b, uj) in bias.iter_mut().zip(u) {
                        *b += uj;
                    }
                }
                Ok((loss, vec![weight, bias]))
            }
            Head::Dqc(_) => {
                let per_sample = features
                    .par_iter()
                    .zip(targets)
                    .map(|(x, y)| {
                        let (loss, g) = self.loss_and_gradients(x, y)?;
                        Ok((loss, g.groups))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(pairwise_reduce(per_sample).unwrap_or_else(|| (0.0, self.group_sizes().iter().map(|&n| vec![0.0; n]).collect())))
            }
        }
    }

    pub fn count_parameters(&self) -> ParameterCounts {
        count_parameters(self)
    }
}

/// Sums per-sample results with a fixed pairwise tree, independent of how
/// the samples were scheduled.
fn pairwise_reduce(mut items: Vec<(f64, Vec<Vec<f64>>)>) -> Option<(f64, Vec<Vec<f64>>)> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some((mut la, mut ga)) = it.next() {
            if let Some((lb, gb)) = it.next() {
                la += lb;
                for (a, b) in ga.iter_mut().zip(&gb) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                }
            }
            next.push((la, ga));
        }
        items = next;
    }
    items.pop()
}

pub fn count_parameters(head: &Head) -> ParameterCounts {
    match head {
        Head::Cdl(p) => ParameterCounts {
            preprocess: p.head.parameter_count(),
            ..Default::default()
        },
        Head::Dqc(p) => ParameterCounts {
            preprocess: p.w_in.parameter_count(),
            quantum: p.theta.len(),
            postprocess: p.w_out.parameter_count(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlcore::{bce_with_logits, sigmoid_scalar};
    use crate::model::DEFAULT_FEATURE_DIM;
    use crate::qgrad::parameter_shift_grad;
    use rand_distr::{Distribution, StandardNormal};

    fn random_vec(rng: &mut Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn small_dqc(seed: u64) -> (Head, Vec<f64>, Vec<f64>) {
        let mut rng = Rng::new(seed);
        let head = Head::init(HeadKind::Dqc, &mut rng, 5, 3, 2).unwrap();
        let x = random_vec(&mut rng, 5);
        (head, x, vec![1.0, 0.0, 1.0])
    }

    fn loss(head: &Head, x: &[f64], y: &[f64]) -> f64 {
        bce_with_logits(&head.forward(x).unwrap().logits, y).unwrap() * y.len() as f64
    }

    /// Central differences of the summed BCE for every parameter, group by group.
    fn finite_differences(head: &Head, x: &[f64], y: &[f64], h: f64) -> Vec<Vec<f64>> {
        let sizes = head.group_sizes();
        let mut out = Vec::new();
        for (g, &size) in sizes.iter().enumerate() {
            let mut grads = Vec::with_capacity(size);
            for i in 0..size {
                let mut plus = head.clone();
                plus.param_groups_mut()[g][i] += h;
                let mut minus = head.clone();
                minus.param_groups_mut()[g][i] -= h;
                grads.push((loss(&plus, x, y) - loss(&minus, x, y)) / (2.0 * h));
            }
            out.push(grads);
        }
        out
    }

    #[test]
    fn batch_gradients_equal_sum_of_sample_gradients() {
        let mut rng = Rng::new(21);
        for kind in [HeadKind::Cdl, HeadKind::Dqc] {
            let head = Head::init(kind, &mut rng, 6, 3, 2).unwrap();
            let xs: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 6)).collect();
            let ys: Vec<Vec<f64>> = (0..5).map(|i| vec![(i % 2) as f64, 1.0, 0.0]).collect();
            let (loss, groups) = head.batch_loss_and_gradients(&xs, &ys).unwrap();
            let mut want_loss = 0.0;
            let mut want: Vec<Vec<f64>> = head.group_sizes().iter().map(|&n| vec![0.0; n]).collect();
            for (x, y) in xs.iter().zip(&ys) {
                let (l, g) = head.loss_and_gradients(x, y).unwrap();
                want_loss += l;
                for (w, gg) in want.iter_mut().zip(&g.groups) {
                    w.iter_mut().zip(gg).for_each(|(a, b)| *a += b);
                }
            }
            assert!((loss - want_loss).abs() < 1e-12);
            for (a, b) in groups.iter().flatten().zip(want.iter().flatten()) {
                assert!((a - b).abs() < 1e-12, "{kind}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn table_counts() {
        let expected = [(8, 16392, 24, 72), (14, 28686, 42, 210), (19, 38931, 57, 380)];
        for (n, pre, quantum, post) in expected {
            let dqc = ParameterCounts::closed_form(HeadKind::Dqc, DEFAULT_FEATURE_DIM, n, 3);
            assert_eq!((dqc.preprocess, dqc.quantum, dqc.postprocess), (pre, quantum, post));
            let cdl = ParameterCounts::closed_form(HeadKind::Cdl, DEFAULT_FEATURE_DIM, n, 3);
            assert_eq!(cdl.total(), pre);
        }
    }

    #[test]
    fn counts_match_allocated_parameters() {
        for kind in [HeadKind::Cdl, HeadKind::Dqc] {
            let head = Head::init(kind, &mut Rng::new(0), 64, 6, 3).unwrap();
            let allocated: usize = head.group_sizes().iter().sum();
            assert_eq!(head.count_parameters().total(), allocated);
            assert_eq!(head.count_parameters(), ParameterCounts::closed_form(kind, 64, 6, 3));
        }
    }

    #[test]
    fn zero_parameters_predict_one_half() {
        let zero = Head::from_groups(
            HeadKind::Dqc,
            4,
            2,
            3,
            vec![vec![0.0; 8], vec![0.0; 2], vec![0.0; 6], vec![0.0; 4], vec![0.0; 2]],
        )
        .unwrap();
        let Head::Dqc(p) = &zero else { unreachable!() };
        let (pred, tape) = dqc_forward_taped(p, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert!(tape.embedding().iter().all(|&e| e == 0.0));
        assert!(tape.expectations().iter().all(|&z| z.abs() < 1e-12));
        assert_eq!(pred.probabilities, vec![0.5, 0.5]);
        let cdl = Head::from_groups(HeadKind::Cdl, 4, 2, 0, vec![vec![0.0; 8], vec![0.0; 2]]).unwrap();
        assert_eq!(cdl.forward(&[1.0; 4]).unwrap().probabilities, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let (head, x, _) = small_dqc(4);
        let g = head.backward(&x, &[0.0; 3]).unwrap();
        assert!(g.groups.iter().flatten().chain(&g.features).all(|&v| v == 0.0));
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        for seed in 0..3 {
            let (head, x, y) = small_dqc(seed);
            let (_, grads) = head.loss_and_gradients(&x, &y).unwrap();
            let fd = finite_differences(&head, &x, &y, 1e-6);
            for (g, (an, num)) in grads.groups.iter().zip(&fd).enumerate() {
                for (i, (a, f)) in an.iter().zip(num).enumerate() {
                    assert!((a - f).abs() <= 1e-4 * f.abs() + 1e-8, "group {g} index {i}: {a} vs {f}");
                }
            }
        }
    }

    #[test]
    fn theta_gradient_matches_parameter_shift_chain() {
        let (head, x, y) = small_dqc(11);
        let Head::Dqc(p) = &head else { unreachable!() };
        let (pred, tape) = dqc_forward_taped(p, &x).unwrap();
        let upstream: Vec<f64> = pred.logits.iter().zip(&y).map(|(z, t)| sigmoid_scalar(*z) - t).collect();
        let n = p.w_out.out_dim();
        let dz: Vec<f64> = (0..p.w_out.in_dim())
            .map(|q| (0..n).map(|k| p.w_out.weight()[q * n + k] * upstream[k]).sum())
            .collect();
        let spec = CircuitSpec::new(3, 2, tape.embedding().to_vec(), p.theta.clone()).unwrap();
        let shift = parameter_shift_grad(&spec, &dz).unwrap();
        let grads = dqc_backward(p, &x, &upstream).unwrap();
        for (a, b) in grads.groups[2].iter().zip(&shift.variational) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn every_parameter_moves_the_loss() {
        let (head, x, y) = small_dqc(21);
        let fd = finite_differences(&head, &x, &y, 1e-5);
        let total = fd.iter().map(Vec::len).sum::<usize>();
        let live = fd.iter().flatten().filter(|g| g.abs() > 1e-12).count();
        assert!(live * 100 >= total * 99, "{live}/{total} parameters affect the loss");
    }

    #[test]
    fn predictions_are_deterministic_and_bounded() {
        let (head, x, _) = small_dqc(5);
        let a = head.forward(&x).unwrap();
        let b = head.forward(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.probabilities.iter().all(|&p| p > 0.0 && p < 1.0));
        let Head::Dqc(p) = &head else { unreachable!() };
        let (_, tape) = dqc_forward_taped(p, &x).unwrap();
        assert!(tape.expectations().iter().all(|z| z.abs() <= 1.0));
    }

    #[test]
    fn capacity_and_shape_errors() {
        let mut rng = Rng::new(0);
        assert!(matches!(Head::init(HeadKind::Dqc, &mut rng, 8, 30, 3), Err(Error::Capacity { .. })));
        let (head, _, _) = small_dqc(0);
        assert!(head.forward(&[0.0; 4]).is_err());
        assert!(head.backward(&[0.0; 5], &[0.0; 2]).is_err());
    }
}
