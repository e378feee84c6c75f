use std::cell::Cell;

use num_complex::Complex64;

use crate::{Error, Result};

/// Hard cap on register size. A state of `n` qubits holds `2^n` amplitudes of
/// [`AMPLITUDE_BYTES`] each.
pub const MAX_QUBITS: usize = 24;

/// Storage per amplitude: two `f64` components.
pub const AMPLITUDE_BYTES: usize = std::mem::size_of::<Complex64>();

thread_local! {
    static GATE_PASSES: Cell<u64> = const { Cell::new(0) };
}

/// Number of full-state passes performed by gate kernels on this thread since
/// the last [`reset_gate_passes`].
pub fn gate_passes() -> u64 {
    GATE_PASSES.with(Cell::get)
}

pub fn reset_gate_passes() {
    GATE_PASSES.with(|c| c.set(0));
}

pub(crate) fn count_passes(k: u64) {
    GATE_PASSES.with(|c| c.set(c.get() + k));
}

/// Bytes needed to hold an `n`-qubit state.
pub fn state_bytes(num_qubits: usize) -> u128 {
    (1u128 << num_qubits) * AMPLITUDE_BYTES as u128
}

pub(crate) fn check_capacity(num_qubits: usize, cap: usize, what: &str) -> Result<()> {
    if num_qubits == 0 || num_qubits > cap {
        return Err(Error::Capacity {
            what: format!("{what} with {num_qubits} qubits"),
            required_bytes: if num_qubits < 128 { state_bytes(num_qubits) } else { u128::MAX },
            detail: format!("2^{num_qubits} x {AMPLITUDE_BYTES} bytes; supported range is 1..={cap}"),
        });
    }
    Ok(())
}

/// Real 2x2 single-qubit matrix, row-major.
pub(crate) type Real2x2 = [[f64; 2]; 2];

pub(crate) const HADAMARD: Real2x2 = {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [[h, h], [h, -h]]
};

pub(crate) fn ry_matrix(angle: f64) -> Real2x2 {
    let (s, c) = (angle / 2.0).sin_cos();
    [[c, -s], [s, c]]
}

/// Pure state of an `n`-qubit register.
///
/// Amplitude `k` is the coefficient of the basis state whose bit `q` is the
/// value of qubit `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        check_capacity(num_qubits, MAX_QUBITS, "state vector")?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The length must be a power of two; the vector is
    /// taken as given, without normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Argument(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        check_capacity(num_qubits, MAX_QUBITS, "state vector")?;
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Bytes used by the amplitude buffer.
    pub fn amplitude_bytes(&self) -> usize {
        self.amplitudes.len() * AMPLITUDE_BYTES
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(Error::Index {
                what: "qubit",
                index: q,
                len: self.num_qubits,
            });
        }
        Ok(())
    }

    pub fn hadamard(&mut self, q: usize) -> Result<()> {
        self.check_qubit(q)?;
        self.apply_real(q, HADAMARD);
        Ok(())
    }

    /// `RY(angle) = [[cos(a/2), -sin(a/2)], [sin(a/2), cos(a/2)]]` on qubit `q`.
    pub fn ry(&mut self, q: usize, angle: f64) -> Result<()> {
        self.check_qubit(q)?;
        if !angle.is_finite() {
            return Err(Error::Argument(format!("RY angle must be finite, got {angle}")));
        }
        self.apply_real(q, ry_matrix(angle));
        Ok(())
    }

    pub fn cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Argument(format!(
                "CNOT control and target are both qubit {control}"
            )));
        }
        self.apply_cnot(control, target);
        Ok(())
    }

    /// `<Z_q>`: probability of bit `q` being 0 minus probability of it being 1.
    pub fn expval_z(&self, q: usize) -> Result<f64> {
        self.check_qubit(q)?;
        let stride = 1 << q;
        let mut z = 0.0;
        for block in self.amplitudes.chunks_exact(stride << 1) {
            let (lo, hi) = block.split_at(stride);
            z += lo.iter().map(Complex64::norm_sqr).sum::<f64>();
            z -= hi.iter().map(Complex64::norm_sqr).sum::<f64>();
        }
        Ok(z)
    }

    /// `<Z_q>` for every qubit, in one pass over the amplitudes.
    pub fn expvals_z(&self) -> Vec<f64> {
        let n = self.num_qubits;
        let low = n.min(TILE_QUBITS);
        let mut total = 0.0;
        let mut ones = vec![0.0; n];
        let mut probs = vec![0.0; 1 << low];
        for (t, tile) in self.amplitudes.chunks_exact(1 << low).enumerate() {
            for (p, a) in probs.iter_mut().zip(tile) {
                *p = a.norm_sqr();
            }
            // Fold the tile in half on its top bit until one value is left.
            let mut len = probs.len();
            while len > 1 {
                let half = len / 2;
                let (lo, hi) = probs[..len].split_at_mut(half);
                ones[half.trailing_zeros() as usize] += hi.iter().sum::<f64>();
                lo.iter_mut().zip(hi.iter()).for_each(|(l, h)| *l += h);
                len = half;
            }
            let mass = probs[0];
            total += mass;
            for (b, o) in ones[low..].iter_mut().enumerate() {
                if (t >> b) & 1 == 1 {
                    *o += mass;
                }
            }
        }
        count_passes(1);
        ones.into_iter().map(|o| total - 2.0 * o).collect()
    }

    pub(crate) fn apply_real(&mut self, q: usize, m: Real2x2) {
        real_kernel(&mut self.amplitudes, q, m);
        count_passes(1);
    }

    /// One RY per qubit, `angles[q]` on qubit `q`. Rotations on the low
    /// qubits are applied tile by tile so each tile stays in cache.
    pub(crate) fn apply_ry_layer(&mut self, angles: &[f64]) {
        debug_assert_eq!(angles.len(), self.num_qubits);
        let low = self.num_qubits.min(TILE_QUBITS);
        for tile in self.amplitudes.chunks_exact_mut(1 << low) {
            for (q, &a) in angles[..low].iter().enumerate() {
                real_kernel(tile, q, ry_matrix(a));
            }
        }
        if let Some(tiles) = HighTiles::new(self.num_qubits) {
            let mats: Vec<Real2x2> = angles[low..].iter().map(|&a| ry_matrix(a)).collect();
            let mut buf = vec![Complex64::new(0.0, 0.0); tiles.tile_len()];
            for offset in tiles.offsets() {
                tiles.gather(&self.amplitudes, offset, &mut buf);
                for (k, m) in mats.iter().enumerate() {
                    real_kernel(&mut buf, tiles.local(low + k), *m);
                }
                tiles.scatter(&mut self.amplitudes, offset, &buf);
            }
        }
        count_passes(angles.len() as u64);
    }

    pub(crate) fn apply_cnot(&mut self, control: usize, target: usize) {
        let ts = 1usize << target;
        let cs = 1usize << control;
        if control > target {
            // The control bit is constant across each target block.
            for (bi, block) in self.amplitudes.chunks_exact_mut(ts << 1).enumerate() {
                if (bi * (ts << 1)) & cs != 0 {
                    let (lo, hi) = block.split_at_mut(ts);
                    lo.swap_with_slice(hi);
                }
            }
        } else {
            for block in self.amplitudes.chunks_exact_mut(ts << 1) {
                let (lo, hi) = block.split_at_mut(ts);
                for (l, h) in lo.chunks_exact_mut(cs << 1).zip(hi.chunks_exact_mut(cs << 1)) {
                    l[cs..].swap_with_slice(&mut h[cs..]);
                }
            }
        }
        count_passes(1);
    }

    /// Product state with qubit `q` in `factors[q][0] |0> + factors[q][1] |1>`,
    /// built in one pass.
    pub(crate) fn product(factors: &[[f64; 2]]) -> Result<Self> {
        check_capacity(factors.len(), MAX_QUBITS, "state vector")?;
        let mut amplitudes = Vec::with_capacity(1 << factors.len());
        amplitudes.push(Complex64::new(1.0, 0.0));
        for f in factors {
            let len = amplitudes.len();
            amplitudes.resize(len << 1, Complex64::new(0.0, 0.0));
            let (lo, hi) = amplitudes.split_at_mut(len);
            for (x, y) in lo.iter_mut().zip(hi) {
                *y = *x * f[1];
                *x *= f[0];
            }
        }
        count_passes(1);
        Ok(StateVector {
            num_qubits: factors.len(),
            amplitudes,
        })
    }

    /// Applies a CNOT sequence, or its inverse, as a single permutation pass.
    /// `scratch` is resized as needed and left holding the previous amplitudes.
    pub(crate) fn permute(&mut self, perm: &CnotPermutation, inverse: bool, scratch: &mut Vec<Complex64>) {
        let tables = if inverse { &perm.inverse } else { &perm.forward };
        scratch.resize(self.amplitudes.len(), Complex64::new(0.0, 0.0));
        for (i, a) in self.amplitudes.iter().enumerate() {
            scratch[table_image(tables, i)] = *a;
        }
        std::mem::swap(&mut self.amplitudes, scratch);
        count_passes(1);
    }

    /// Multiplies every amplitude by the eigenvalue of `sum_q weights[q] Z_q`.
    pub(crate) fn apply_z_observable(&mut self, weights: &[f64]) {
        debug_assert_eq!(weights.len(), self.num_qubits);
        // The eigenvalue splits into a low-bit part and a high-bit part.
        let low = self.num_qubits.min(TILE_QUBITS);
        let eigen = |ws: &[f64], k: usize| -> f64 {
            ws.iter()
                .enumerate()
                .map(|(q, w)| if (k >> q) & 1 == 1 { -w } else { *w })
                .sum()
        };
        let low_eigen: Vec<f64> = (0..1usize << low).map(|k| eigen(&weights[..low], k)).collect();
        for (t, tile) in self.amplitudes.chunks_exact_mut(1 << low).enumerate() {
            let high = eigen(&weights[low..], t);
            for (a, e) in tile.iter_mut().zip(&low_eigen) {
                *a *= e + high;
            }
        }
        count_passes(1);
    }
}

/// Basis permutation performed by a sequence of CNOTs.
///
/// A CNOT XORs one index bit into another, so the image of an index is the
/// XOR of the images of its set bits. Images are tabulated a byte at a time,
/// for the sequence and for its inverse (the same CNOTs in reverse order).
#[derive(Clone, Debug)]
pub(crate) struct CnotPermutation {
    forward: Vec<Vec<usize>>,
    inverse: Vec<Vec<usize>>,
    identity: bool,
}

fn byte_tables(num_qubits: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> Vec<Vec<usize>> {
    let image = |mut x: usize| {
        for (c, t) in pairs.clone() {
            if (x >> c) & 1 == 1 {
                x ^= 1 << t;
            }
        }
        x
    };
    (0..num_qubits.div_ceil(8))
        .map(|byte| {
            let bits = (num_qubits - 8 * byte).min(8);
            let mut table = vec![0usize; 1 << bits];
            for v in 1..table.len() {
                let low = v & v.wrapping_neg();
                table[v] = table[v ^ low] ^ image(low << (8 * byte));
            }
            table
        })
        .collect()
}

impl CnotPermutation {
    pub(crate) fn new(num_qubits: usize, pairs: &[(usize, usize)]) -> Self {
        CnotPermutation {
            forward: byte_tables(num_qubits, pairs.iter().copied()),
            inverse: byte_tables(num_qubits, pairs.iter().rev().copied()),
            identity: pairs.is_empty(),
        }
    }

    pub(crate) fn is_identity(&self) -> bool {
        self.identity
    }
}

#[inline]
fn table_image(tables: &[Vec<usize>], i: usize) -> usize {
    tables
        .iter()
        .enumerate()
        .fold(0, |acc, (b, t)| acc ^ t[(i >> (8 * b)) & (t.len() - 1)])
}

/// Qubits below this index are handled tile-wise by the layer kernels.
const TILE_QUBITS: usize = 11;

/// Strided tiles for the qubits at and above [`TILE_QUBITS`]. A tile holds a
/// run of `2^run_bits` consecutive low indices for every combination of the
/// high bits, so high qubit `q` sits at bit `run_bits + q - low` of a tile.
struct HighTiles {
    low: usize,
    high: usize,
    run_bits: usize,
}

impl HighTiles {
    fn new(num_qubits: usize) -> Option<Self> {
        let low = num_qubits.min(TILE_QUBITS);
        let high = num_qubits - low;
        (high > 0).then(|| HighTiles {
            low,
            high,
            run_bits: TILE_QUBITS.saturating_sub(high).max(2).min(low),
        })
    }

    fn local(&self, q: usize) -> usize {
        self.run_bits + q - self.low
    }

    fn tile_len(&self) -> usize {
        1 << (self.high + self.run_bits)
    }

    fn offsets(&self) -> impl Iterator<Item = usize> {
        (0..1usize << self.low).step_by(1 << self.run_bits)
    }

    fn gather(&self, amps: &[Complex64], offset: usize, tile: &mut [Complex64]) {
        for (h, run) in tile.chunks_exact_mut(1 << self.run_bits).enumerate() {
            let start = (h << self.low) + offset;
            run.copy_from_slice(&amps[start..start + run.len()]);
        }
    }

    fn scatter(&self, amps: &mut [Complex64], offset: usize, tile: &[Complex64]) {
        for (h, run) in tile.chunks_exact(1 << self.run_bits).enumerate() {
            let start = (h << self.low) + offset;
            amps[start..start + run.len()].copy_from_slice(run);
        }
    }
}

fn real_kernel(amps: &mut [Complex64], q: usize, m: Real2x2) {
    let stride = 1 << q;
    for block in amps.chunks_exact_mut(stride << 1) {
        let (lo, hi) = block.split_at_mut(stride);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = x * m[0][0] + y * m[0][1];
            *b = x * m[1][0] + y * m[1][1];
        }
    }
}

// Re(conj(u) * (-b) + conj(v) * a): twice Re<lambda| G |psi> on one amplitude
// pair, with G = [[0, -1/2], [1/2, 0]]. With REWIND both pairs are then moved
// back through the rotation whose inverse is `inv`.
#[inline(always)]
fn adjoint_pair<const REWIND: bool>(
    p0: &mut Complex64,
    p1: &mut Complex64,
    l0: &mut Complex64,
    l1: &mut Complex64,
    inv: &Real2x2,
) -> f64 {
    let (a, b) = (*p0, *p1);
    let (u, v) = (*l0, *l1);
    if REWIND {
        *p0 = a * inv[0][0] + b * inv[0][1];
        *p1 = a * inv[1][0] + b * inv[1][1];
        *l0 = u * inv[0][0] + v * inv[0][1];
        *l1 = u * inv[1][0] + v * inv[1][1];
    }
    v.re * a.re + v.im * a.im - (u.re * b.re + u.im * b.im)
}

fn adjoint_kernel<const REWIND: bool>(psi: &mut [Complex64], lambda: &mut [Complex64], q: usize, inv: Real2x2) -> f64 {
    let stride = 1 << q;
    // Four partial sums keep the reduction from serializing on one register.
    let mut acc = [0.0; 4];
    for (pb, lb) in psi.chunks_exact_mut(stride << 1).zip(lambda.chunks_exact_mut(stride << 1)) {
        let (plo, phi) = pb.split_at_mut(stride);
        let (llo, lhi) = lb.split_at_mut(stride);
        if stride >= 4 {
            for (((p0, p1), l0), l1) in plo
                .chunks_exact_mut(4)
                .zip(phi.chunks_exact_mut(4))
                .zip(llo.chunks_exact_mut(4))
                .zip(lhi.chunks_exact_mut(4))
            {
                for k in 0..4 {
                    acc[k] += adjoint_pair::<REWIND>(&mut p0[k], &mut p1[k], &mut l0[k], &mut l1[k], &inv);
                }
            }
        } else {
            for k in 0..stride {
                acc[k] += adjoint_pair::<REWIND>(&mut plo[k], &mut phi[k], &mut llo[k], &mut lhi[k], &inv);
            }
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

fn adjoint_kernel_dyn(psi: &mut [Complex64], lambda: &mut [Complex64], q: usize, rewind: Option<Real2x2>) -> f64 {
    match rewind {
        Some(inv) => adjoint_kernel::<true>(psi, lambda, q, inv),
        None => adjoint_kernel::<false>(psi, lambda, q, [[1.0, 0.0], [0.0, 1.0]]),
    }
}

/// Reverse step of the adjoint sweep through a layer of rotations,
/// `RY(angles[q])` on qubit `q`.
///
/// On entry `psi` is the state just after the layer and `lambda` the adjoint
/// state at the same point. Writes `dL/d(angles[q])` to `grads[q]` using
/// `dRY(a)/da * RY(-a) = [[0, -1/2], [1/2, 0]]`; rotations on distinct qubits
/// commute, so every gradient can be read at the same point. With `rewind`
/// both states are moved back to just before the layer. Counted as three
/// passes per rotation when rewinding (derivative, `psi`, `lambda`), one
/// otherwise.
pub(crate) fn adjoint_ry_layer(
    psi: &mut StateVector,
    lambda: &mut StateVector,
    angles: &[f64],
    rewind: bool,
    grads: &mut [f64],
) {
    let n = psi.num_qubits;
    debug_assert_eq!(angles.len(), n);
    grads.iter_mut().for_each(|g| *g = 0.0);
    let inv = |q: usize| rewind.then(|| ry_matrix(-angles[q]));
    let low = n.min(TILE_QUBITS);
    if let Some(tiles) = HighTiles::new(n) {
        let mut pbuf = vec![Complex64::new(0.0, 0.0); tiles.tile_len()];
        let mut lbuf = pbuf.clone();
        for offset in tiles.offsets() {
            tiles.gather(&psi.amplitudes, offset, &mut pbuf);
            tiles.gather(&lambda.amplitudes, offset, &mut lbuf);
            for q in (low..n).rev() {
                grads[q] += adjoint_kernel_dyn(&mut pbuf, &mut lbuf, tiles.local(q), inv(q));
            }
            if rewind {
                tiles.scatter(&mut psi.amplitudes, offset, &pbuf);
                tiles.scatter(&mut lambda.amplitudes, offset, &lbuf);
            }
        }
    }
    for (pt, lt) in psi
        .amplitudes
        .chunks_exact_mut(1 << low)
        .zip(lambda.amplitudes.chunks_exact_mut(1 << low))
    {
        for q in (0..low).rev() {
            grads[q] += adjoint_kernel_dyn(pt, lt, q, inv(q));
        }
    }
    count_passes(if rewind { 3 } else { 1 } * n as u64);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn assert_state(s: &StateVector, expected: &[Complex64], tol: f64) {
        assert_eq!(s.amplitudes().len(), expected.len());
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert!((a - e).norm() <= tol, "{a} vs {e}");
        }
    }

    #[test]
    fn zero_state_basics() {
        assert_state(&StateVector::zero(1).unwrap(), &[c(1.0), c(0.0)], 0.0);
        assert_state(&StateVector::zero(2).unwrap(), &[c(1.0), c(0.0), c(0.0), c(0.0)], 0.0);
        let s = StateVector::zero(19).unwrap();
        assert_eq!(s.amplitudes().len(), 524_288);
        assert_eq!(s.amplitude_bytes(), 8 * 1024 * 1024);
    }

    #[test]
    fn capacity_errors_name_requirement() {
        for n in [0, MAX_QUBITS + 1] {
            match StateVector::zero(n) {
                Err(Error::Capacity { required_bytes, detail, .. }) => {
                    assert_eq!(required_bytes, state_bytes(n));
                    assert!(detail.contains("16 bytes"), "{detail}");
                }
                other => panic!("expected capacity error, got {other:?}"),
            }
        }
    }

    #[test]
    fn hadamard_cases() {
        let mut s = StateVector::zero(1).unwrap();
        s.hadamard(0).unwrap();
        assert_state(&s, &[c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)], 1e-15);

        let mut s = StateVector::zero(2).unwrap();
        s.hadamard(0).unwrap();
        s.hadamard(1).unwrap();
        assert_state(&s, &[c(0.5); 4], 1e-15);

        assert!(matches!(s.hadamard(2), Err(Error::Index { .. })));
    }

    #[test]
    fn ry_cases() {
        let mut s = StateVector::zero(1).unwrap();
        s.ry(0, PI).unwrap();
        assert_state(&s, &[c(0.0), c(1.0)], 1e-12);

        let mut s = StateVector::zero(1).unwrap();
        s.ry(0, PI / 2.0).unwrap();
        let h = (PI / 4.0).cos();
        assert_state(&s, &[c(h), c((PI / 4.0).sin())], 1e-15);

        let mut s = StateVector::zero(2).unwrap();
        s.hadamard(1).unwrap();
        let before = s.clone();
        s.ry(0, 0.0).unwrap();
        assert_state(&s, before.amplitudes(), 1e-12);

        assert!(matches!(s.ry(0, f64::NAN), Err(Error::Argument(_))));
        assert!(matches!(s.ry(0, f64::INFINITY), Err(Error::Argument(_))));
    }

    #[test]
    fn cnot_truth_table() {
        // |10>: qubit 1 set, index 2.
        let mut s = StateVector::from_amplitudes(vec![c(0.0), c(0.0), c(1.0), c(0.0)]).unwrap();
        s.cnot(1, 0).unwrap();
        assert_state(&s, &[c(0.0), c(0.0), c(0.0), c(1.0)], 0.0);

        let mut s = StateVector::zero(2).unwrap();
        s.cnot(1, 0).unwrap();
        assert_state(&s, &[c(1.0), c(0.0), c(0.0), c(0.0)], 0.0);

        assert!(matches!(s.cnot(1, 1), Err(Error::Argument(_))));
        assert!(matches!(s.cnot(0, 5), Err(Error::Index { .. })));
    }

    #[test]
    fn cnot_matches_bitwise_definition() {
        let n = 4;
        for control in 0..n {
            for target in 0..n {
                if control == target {
                    continue;
                }
                let amps: Vec<_> = (0..16).map(|k| Complex64::new(k as f64, -(k as f64))).collect();
                let mut s = StateVector::from_amplitudes(amps.clone()).unwrap();
                s.cnot(control, target).unwrap();
                for k in 0..16usize {
                    let src = if k >> control & 1 == 1 { k ^ (1 << target) } else { k };
                    assert_eq!(s.amplitudes()[k], amps[src], "c={control} t={target} k={k}");
                }
            }
        }
    }

    #[test]
    fn expval_cases() {
        let s = StateVector::zero(1).unwrap();
        assert_eq!(s.expval_z(0).unwrap(), 1.0);
        let mut s = StateVector::zero(1).unwrap();
        s.hadamard(0).unwrap();
        assert!(s.expval_z(0).unwrap().abs() < 1e-12);
        for theta in [-2.0, -0.3, 0.0, 0.7, 1.9, 3.1] {
            let mut s = StateVector::zero(1).unwrap();
            s.ry(0, theta).unwrap();
            assert!((s.expval_z(0).unwrap() - f64::cos(theta)).abs() < 1e-12);
        }
        assert!(matches!(s.expval_z(1), Err(Error::Index { .. })));
    }

    #[test]
    fn expvals_agree_with_single_qubit_expval() {
        let mut s = StateVector::zero(3).unwrap();
        s.ry(0, 0.4).unwrap();
        s.ry(1, -1.3).unwrap();
        s.ry(2, 2.2).unwrap();
        s.cnot(0, 2).unwrap();
        let all = s.expvals_z();
        for q in 0..3 {
            assert!((all[q] - s.expval_z(q).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn memory_scaling_is_sixteen_bytes_per_amplitude() {
        for n in [8usize, 14, 19] {
            let s = StateVector::zero(n).unwrap();
            assert_eq!(s.amplitude_bytes() as u128, state_bytes(n));
            assert_eq!(s.amplitude_bytes(), (1 << n) * 16);
            assert!(s.amplitudes.capacity() * 16 >= s.amplitude_bytes());
        }
    }
}
