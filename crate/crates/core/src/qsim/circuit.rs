use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::state::{ry_matrix, CnotPermutation, StateVector};
use crate::{Error, Result};

/// CNOT wiring applied after each variational layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entangler {
    /// `q -> (q + 1) mod n` for every qubit.
    #[default]
    Ring,
    /// `q -> q + 1` for `q < n - 1`.
    Chain,
    None,
}

impl Entangler {
    /// `(control, target)` pairs in application order. A single qubit has no
    /// pairs for any topology.
    pub fn pairs(self, num_qubits: usize) -> Vec<(usize, usize)> {
        if num_qubits < 2 {
            return Vec::new();
        }
        match self {
            Entangler::Ring => (0..num_qubits).map(|q| (q, (q + 1) % num_qubits)).collect(),
            Entangler::Chain => (0..num_qubits - 1).map(|q| (q, q + 1)).collect(),
            Entangler::None => Vec::new(),
        }
    }
}

/// Which trainable angle a rotation reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    Embedding(usize),
    /// `(qubit, layer)`
    Variational(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    H(usize),
    Ry { qubit: usize, angle: f64, param: Param },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub(crate) fn apply(&self, state: &mut StateVector) {
        match *self {
            Gate::H(q) => state.apply_real(q, super::state::HADAMARD),
            Gate::Ry { qubit, angle, .. } => state.apply_real(qubit, super::state::ry_matrix(angle)),
            Gate::Cnot { control, target } => state.apply_cnot(control, target),
        }
    }
}

/// The ansatz: optional Hadamard on every qubit, RY angle embedding, then
/// `depth` layers of per-qubit RY rotations each followed by the entangler.
///
/// Variational angles are stored qubit-major: the angle of qubit `q` in layer
/// `l` is `variational[q * depth + l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitSpec {
    num_qubits: usize,
    depth: usize,
    entangler: Entangler,
    hadamard_prefix: bool,
    embedding: Vec<f64>,
    variational: Vec<f64>,
}

impl CircuitSpec {
    /// Ring-entangled, Hadamard-prefixed circuit. Embedding angles must lie in
    /// `[-pi/2, pi/2]`.
    pub fn new(
        num_qubits: usize,
        depth: usize,
        embedding: Vec<f64>,
        variational: Vec<f64>,
    ) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::Argument("circuit needs at least one qubit".into()));
        }
        if embedding.len() != num_qubits {
            return Err(Error::shape("embedding angles", num_qubits, embedding.len()));
        }
        if variational.len() != num_qubits * depth {
            return Err(Error::shape("variational angles", num_qubits * depth, variational.len()));
        }
        if let Some((q, a)) = embedding
            .iter()
            .enumerate()
            .find(|(_, a)| !(-FRAC_PI_2..=FRAC_PI_2).contains(*a))
        {
            return Err(Error::Argument(format!(
                "embedding angle {a} on qubit {q} outside [-pi/2, pi/2]"
            )));
        }
        if let Some(a) = variational.iter().find(|a| !a.is_finite()) {
            return Err(Error::Argument(format!("variational angle {a} is not finite")));
        }
        Ok(CircuitSpec {
            num_qubits,
            depth,
            entangler: Entangler::Ring,
            hadamard_prefix: true,
            embedding,
            variational,
        })
    }

    /// All angles zero.
    pub fn zeros(num_qubits: usize, depth: usize) -> Result<Self> {
        Self::new(num_qubits, depth, vec![0.0; num_qubits], vec![0.0; num_qubits * depth])
    }

    pub fn with_entangler(mut self, entangler: Entangler) -> Self {
        self.entangler = entangler;
        self
    }

    /// Drops the leading Hadamard layer, so the register starts the embedding
    /// in `|0...0>`.
    pub fn without_hadamard(mut self) -> Self {
        self.hadamard_prefix = false;
        self
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn entangler(&self) -> Entangler {
        self.entangler
    }

    pub fn hadamard_prefix(&self) -> bool {
        self.hadamard_prefix
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn variational(&self) -> &[f64] {
        &self.variational
    }

    pub fn variational_angle(&self, qubit: usize, layer: usize) -> f64 {
        self.variational[qubit * self.depth + layer]
    }

    /// Mutable access to one angle, bypassing the embedding range check. Used
    /// for shifted evaluations.
    pub(crate) fn angle_mut(&mut self, param: Param) -> &mut f64 {
        match param {
            Param::Embedding(q) => &mut self.embedding[q],
            Param::Variational(q, l) => &mut self.variational[q * self.depth + l],
        }
    }

    /// Every trainable angle, embedding first, then variational in storage order.
    pub fn params(&self) -> impl Iterator<Item = Param> + '_ {
        let n = self.num_qubits;
        let d = self.depth;
        (0..n)
            .map(Param::Embedding)
            .chain((0..n).flat_map(move |q| (0..d).map(move |l| Param::Variational(q, l))))
    }

    /// The flattened gate sequence, in application order.
    pub fn gates(&self) -> Vec<Gate> {
        let n = self.num_qubits;
        let pairs = self.entangler.pairs(n);
        let mut gates = Vec::with_capacity(n * (2 + self.depth) + pairs.len() * self.depth);
        if self.hadamard_prefix {
            gates.extend((0..n).map(Gate::H));
        }
        gates.extend((0..n).map(|q| Gate::Ry {
            qubit: q,
            angle: self.embedding[q],
            param: Param::Embedding(q),
        }));
        for l in 0..self.depth {
            gates.extend((0..n).map(|q| Gate::Ry {
                qubit: q,
                angle: self.variational_angle(q, l),
                param: Param::Variational(q, l),
            }));
            gates.extend(pairs.iter().map(|&(control, target)| Gate::Cnot { control, target }));
        }
        gates
    }
}

/// `<Z_q>` for each qubit of a finished circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct Expectations(Vec<f64>);

impl Expectations {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_values(values: Vec<f64>) -> Self {
        Expectations(values)
    }
}

/// Runs the circuit from `|0...0>` and returns the final state.
pub fn prepare_state(spec: &CircuitSpec) -> Result<StateVector> {
    let mut state = StateVector::zero(spec.num_qubits)?;
    for gate in spec.gates() {
        gate.apply(&mut state);
    }
    Ok(state)
}

/// The state of [`prepare_state`], computed with fewer passes: the Hadamard
/// and embedding layers form one product state and each entangler layer is
/// applied as a single permutation.
pub(crate) fn simulate(spec: &CircuitSpec) -> Result<StateVector> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let start = if spec.hadamard_prefix { [h, h] } else { [1.0, 0.0] };
    let factors: Vec<[f64; 2]> = spec
        .embedding
        .iter()
        .map(|&e| {
            let m = ry_matrix(e);
            [m[0][0] * start[0] + m[0][1] * start[1], m[1][0] * start[0] + m[1][1] * start[1]]
        })
        .collect();
    let mut state = StateVector::product(&factors)?;
    let perm = CnotPermutation::new(spec.num_qubits, &spec.entangler.pairs(spec.num_qubits));
    let mut scratch = Vec::new();
    let mut angles = vec![0.0; spec.num_qubits];
    for l in 0..spec.depth {
        for (q, a) in angles.iter_mut().enumerate() {
            *a = spec.variational_angle(q, l);
        }
        state.apply_ry_layer(&angles);
        if !perm.is_identity() {
            state.permute(&perm, false, &mut scratch);
        }
    }
    Ok(state)
}

/// Runs the circuit and measures `<Z_q>` on every qubit.
pub fn run_ansatz(spec: &CircuitSpec) -> Result<Expectations> {
    Ok(Expectations(prepare_state(spec)?.expvals_z()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_angles_keep_uniform_superposition() {
        let spec = CircuitSpec::zeros(2, 3).unwrap();
        let state = prepare_state(&spec).unwrap();
        for a in state.amplitudes() {
            assert!((a.re - 0.5).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
        let e = run_ansatz(&spec).unwrap();
        for z in e.values() {
            assert!(z.abs() < 1e-12);
        }
    }

    #[test]
    fn single_qubit_plus_state_rotation() {
        // H then RY(pi/2): 2x2 products by hand give amplitudes (0, 1), so the
        // register ends in |1> and <Z> = -1.
        let spec = CircuitSpec::new(1, 1, vec![0.0], vec![PI / 2.0]).unwrap();
        let state = prepare_state(&spec).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (s, c) = (PI / 4.0).sin_cos();
        let expected = [c * h - s * h, s * h + c * h];
        for (a, e) in state.amplitudes().iter().zip(expected) {
            assert!((a.re - e).abs() < 1e-12);
        }
        let z = run_ansatz(&spec).unwrap().values()[0];
        assert!((z + 1.0).abs() < 1e-12, "{z}");
    }

    #[test]
    fn ring_pairs() {
        assert_eq!(Entangler::Ring.pairs(1), vec![]);
        assert_eq!(Entangler::Ring.pairs(3), vec![(0, 1), (1, 2), (2, 0)]);
        assert_eq!(Entangler::Chain.pairs(3), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            CircuitSpec::new(2, 3, vec![0.0, 2.0], vec![0.0; 6]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            CircuitSpec::new(2, 3, vec![0.0, 0.0], vec![0.0; 5]),
            Err(Error::Shape { .. })
        ));
        assert!(CircuitSpec::new(2, 3, vec![FRAC_PI_2, -FRAC_PI_2], vec![7.0; 6]).is_ok());
    }

    #[test]
    fn gate_count() {
        let spec = CircuitSpec::zeros(19, 3).unwrap();
        // 19 H + 19 embedding + 3 * (19 RY + 19 CNOT)
        assert_eq!(spec.gates().len(), 152);
        assert_eq!(spec.params().count(), 19 + 57);
    }

    #[test]
    fn fused_simulation_matches_gate_by_gate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (n, d) in [(1, 2), (3, 2), (8, 1), (10, 3), (13, 2)] {
            for entangler in [Entangler::Ring, Entangler::Chain, Entangler::None] {
                for hadamard in [true, false] {
                    let emb = (0..n).map(|_| rng.random_range(-FRAC_PI_2..=FRAC_PI_2)).collect();
                    let var = (0..n * d).map(|_| rng.random_range(-PI..PI)).collect();
                    let mut spec = CircuitSpec::new(n, d, emb, var).unwrap().with_entangler(entangler);
                    if !hadamard {
                        spec = spec.without_hadamard();
                    }
                    let slow = prepare_state(&spec).unwrap();
                    let fast = simulate(&spec).unwrap();
                    for (a, b) in slow.amplitudes().iter().zip(fast.amplitudes()) {
                        assert!((a - b).norm() < 1e-12, "n={n} d={d} {entangler:?} h={hadamard}");
                    }
                }
            }
        }
    }
}
