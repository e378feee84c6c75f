//! Gradients of `L = sum_q upstream[q] * <Z_q>` with respect to every circuit
//! angle.
//!
//! [`circuit_vjp`] is the training path: one forward run, then a single
//! reverse sweep that rewinds the state and an adjoint state layer by layer.
//! [`parameter_shift_grad`] re-runs the circuit twice per angle and exists to
//! check it.

use std::f64::consts::FRAC_PI_2;

use crate::qsim::{adjoint_ry_layer, run_ansatz, simulate, CircuitSpec, CnotPermutation, Param, StateVector};
use crate::{Error, Result};

/// `dL/d(angle)` for every angle of a [`CircuitSpec`].
///
/// `variational` uses the qubit-major layout of [`CircuitSpec::variational`].
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGradients {
    pub embedding: Vec<f64>,
    pub variational: Vec<f64>,
}

impl CircuitGradients {
    fn zeros(spec: &CircuitSpec) -> Self {
        CircuitGradients {
            embedding: vec![0.0; spec.num_qubits()],
            variational: vec![0.0; spec.variational().len()],
        }
    }

    fn slot(&mut self, param: Param, depth: usize) -> &mut f64 {
        match param {
            Param::Embedding(q) => &mut self.embedding[q],
            Param::Variational(q, l) => &mut self.variational[q * depth + l],
        }
    }

    pub fn get(&self, param: Param, depth: usize) -> f64 {
        match param {
            Param::Embedding(q) => self.embedding[q],
            Param::Variational(q, l) => self.variational[q * depth + l],
        }
    }
}

fn check_upstream(spec: &CircuitSpec, upstream: &[f64]) -> Result<()> {
    if upstream.len() != spec.num_qubits() {
        return Err(Error::shape("circuit upstream gradient", spec.num_qubits(), upstream.len()));
    }
    if let Some(u) = upstream.iter().find(|u| !u.is_finite()) {
        return Err(Error::Argument(format!("upstream gradient {u} is not finite")));
    }
    Ok(())
}

/// Vector-Jacobian product of the circuit by adjoint differentiation.
///
/// Costs one forward run plus one reverse sweep regardless of how many angles
/// the circuit has.
pub fn circuit_vjp(spec: &CircuitSpec, upstream: &[f64]) -> Result<CircuitGradients> {
    check_upstream(spec, upstream)?;
    if upstream.iter().all(|&u| u == 0.0) {
        return Ok(CircuitGradients::zeros(spec));
    }
    vjp_from_state(spec, simulate(spec)?, upstream)
}

/// [`circuit_vjp`] starting from the already computed final state of `spec`.
pub(crate) fn vjp_from_state(spec: &CircuitSpec, mut psi: StateVector, upstream: &[f64]) -> Result<CircuitGradients> {
    check_upstream(spec, upstream)?;
    let mut grads = CircuitGradients::zeros(spec);
    if upstream.iter().all(|&u| u == 0.0) {
        return Ok(grads);
    }
    let (n, d) = (spec.num_qubits(), spec.depth());
    let mut lambda = psi.clone();
    lambda.apply_z_observable(upstream);

    let perm = CnotPermutation::new(n, &spec.entangler().pairs(n));
    let mut scratch = Vec::new();
    let mut angles = vec![0.0; n];
    let mut layer_grads = vec![0.0; n];
    for l in (0..d).rev() {
        if !perm.is_identity() {
            psi.permute(&perm, true, &mut scratch);
            lambda.permute(&perm, true, &mut scratch);
        }
        for (q, a) in angles.iter_mut().enumerate() {
            *a = spec.variational_angle(q, l);
        }
        adjoint_ry_layer(&mut psi, &mut lambda, &angles, true, &mut layer_grads);
        for (q, g) in layer_grads.iter().enumerate() {
            grads.variational[q * d + l] = *g;
        }
    }
    // The embedding layer is the first thing with parameters; its gradients
    // need no rewind.
    adjoint_ry_layer(&mut psi, &mut lambda, spec.embedding(), false, &mut grads.embedding);
    Ok(grads)
}

fn weighted_objective(spec: &CircuitSpec, upstream: &[f64]) -> Result<f64> {
    let e = run_ansatz(spec)?;
    Ok(e.values().iter().zip(upstream).map(|(z, u)| z * u).sum())
}

/// Parameter-shift rule: `dL/dphi = (L(phi + pi/2) - L(phi - pi/2)) / 2`,
/// exact for RY rotations.
pub fn parameter_shift_grad(spec: &CircuitSpec, upstream: &[f64]) -> Result<CircuitGradients> {
    check_upstream(spec, upstream)?;
    let mut grads = CircuitGradients::zeros(spec);
    let params: Vec<Param> = spec.params().collect();
    let mut shifted = spec.clone();
    for param in params {
        let original = *shifted.angle_mut(param);
        *shifted.angle_mut(param) = original + FRAC_PI_2;
        let plus = weighted_objective(&shifted, upstream)?;
        *shifted.angle_mut(param) = original - FRAC_PI_2;
        let minus = weighted_objective(&shifted, upstream)?;
        *shifted.angle_mut(param) = original;
        *grads.slot(param, spec.depth()) = 0.5 * (plus - minus);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{gate_passes, reset_gate_passes};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = CircuitSpec::new(3, 2, vec![0.1, -0.2, 0.3], vec![0.5; 6]).unwrap();
        let g = circuit_vjp(&spec, &[0.0; 3]).unwrap();
        assert!(g.embedding.iter().chain(&g.variational).all(|&x| x == 0.0));
    }

    #[test]
    fn closed_form_without_hadamard() {
        // <Z> = cos(x + theta), so dL/dtheta = -sin(x + theta).
        let spec = CircuitSpec::new(1, 1, vec![0.0], vec![PI / 2.0])
            .unwrap()
            .without_hadamard();
        let g = circuit_vjp(&spec, &[1.0]).unwrap();
        assert!((g.variational[0] + 1.0).abs() < 1e-12);
        assert!((g.embedding[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let spec = CircuitSpec::zeros(2, 1).unwrap();
        assert!(matches!(circuit_vjp(&spec, &[1.0]), Err(Error::Shape { .. })));
        assert!(matches!(parameter_shift_grad(&spec, &[1.0; 3]), Err(Error::Shape { .. })));
        assert!(matches!(circuit_vjp(&spec, &[1.0, f64::NAN]), Err(Error::Argument(_))));
    }

    #[test]
    fn symmetric_point_matches_hand_unrolled_shift() {
        let spec = CircuitSpec::zeros(2, 3).unwrap();
        let up = [1.0, 1.0];
        let ps = parameter_shift_grad(&spec, &up).unwrap();
        let vjp = circuit_vjp(&spec, &up).unwrap();
        for q in 0..2 {
            for l in 0..3 {
                let mut plus = spec.clone();
                *plus.angle_mut(Param::Variational(q, l)) = PI / 2.0;
                let mut minus = spec.clone();
                *minus.angle_mut(Param::Variational(q, l)) = -PI / 2.0;
                let lp: f64 = run_ansatz(&plus).unwrap().values().iter().sum();
                let lm: f64 = run_ansatz(&minus).unwrap().values().iter().sum();
                let expected = 0.5 * (lp - lm);
                assert!((ps.variational[q * 3 + l] - expected).abs() < 1e-14);
                assert!((vjp.variational[q * 3 + l] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vjp_matches_parameter_shift() {
        use crate::qsim::Entangler;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // 13 qubits spans both the tiled and the whole-state kernels.
        for (n, d) in [(1, 1), (2, 2), (4, 3), (6, 2), (13, 1)] {
            for entangler in [Entangler::Ring, Entangler::Chain, Entangler::None] {
                let spec = CircuitSpec::new(
                    n,
                    d,
                    (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
                    (0..n * d).map(|_| rng.random_range(-PI..PI)).collect(),
                )
                .unwrap()
                .with_entangler(entangler);
                let up: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let adj = circuit_vjp(&spec, &up).unwrap();
                let shift = parameter_shift_grad(&spec, &up).unwrap();
                for p in spec.params() {
                    let (a, b) = (adj.get(p, d), shift.get(p, d));
                    assert!((a - b).abs() < 1e-10, "n={n} {entangler:?} {p:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn vjp_is_linear_in_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..=4);
            let d = rng.random_range(0..=3);
            let spec = CircuitSpec::new(
                n,
                d,
                (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
                (0..n * d).map(|_| rng.random_range(-6.0..6.0)).collect(),
            )
            .unwrap();
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (a, b) = (0.7, -1.3);
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let gu = circuit_vjp(&spec, &u).unwrap();
            let gv = circuit_vjp(&spec, &v).unwrap();
            let gm = circuit_vjp(&spec, &mix).unwrap();
            for p in spec.params() {
                let lhs = gm.get(p, d);
                let rhs = a * gu.get(p, d) + b * gv.get(p, d);
                assert!((lhs - rhs).abs() < 1e-10, "{p:?}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn vjp_pass_count_is_independent_of_parameter_count() {
        for (n, d) in [(3, 1), (3, 3), (5, 3), (6, 6)] {
            let spec = CircuitSpec::zeros(n, d).unwrap();
            let gates = spec.gates().len() as u64;
            let params = spec.params().count() as u64;
            let up = vec![1.0; n];

            reset_gate_passes();
            circuit_vjp(&spec, &up).unwrap();
            let adjoint = gate_passes();

            reset_gate_passes();
            parameter_shift_grad(&spec, &up).unwrap();
            let shift = gate_passes();

            // forward + observable + at most three passes per gate on the way back
            assert!(adjoint <= 4 * gates + 1, "n={n} d={d}: {adjoint} passes for {gates} gates");
            // each shifted run executes every gate and one measurement pass
            assert_eq!(shift, 2 * params * (gates + 1));
        }
    }
}
