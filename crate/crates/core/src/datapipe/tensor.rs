//! Dense `f32` tensors and their on-disk byte layout.
//!
//! Serialized form, all integers little-endian:
//!
//! | offset | size        | field                                  |
//! |--------|-------------|----------------------------------------|
//! | 0      | 4           | magic `b"DQTN"`                        |
//! | 4      | 2           | format version, currently 1            |
//! | 6      | 1           | dtype code (1 = f32)                   |
//! | 7      | 1           | rank `r`                               |
//! | 8      | 8 * r       | dimensions as u64, outermost first     |
//! | 8 + 8r | 4 * product | elements, row-major, IEEE-754 LE       |
//!
//! The layout carries only numbers; decoding never evaluates anything.

use crate::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"DQTN";
pub const TENSOR_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape("tensor data", expected, data.len()));
        }
        if shape.len() > u8::MAX as usize {
            return Err(Error::Argument(format!("tensor rank {} too large", shape.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(&TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "tensor",
            reason,
        };
        if bytes.len() < 8 || bytes[..4] != TENSOR_MAGIC {
            return Err(bad("missing magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != TENSOR_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        if bytes[6] != DTYPE_F32 {
            return Err(bad(format!("unsupported dtype code {}", bytes[6])));
        }
        let rank = bytes[7] as usize;
        let header = 8 + 8 * rank;
        if bytes.len() < header {
            return Err(bad("truncated header".into()));
        }
        let shape: Vec<usize> = bytes[8..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("dimension product overflows".into()))?;
        let body = &bytes[header..];
        if body.len() != count * 4 {
            return Err(bad(format!("expected {} payload bytes, found {}", count * 4, body.len())));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -0.5]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"DQTN");
        assert_eq!(&b[4..8], &[1, 0, 1, 2]);
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &1u64.to_le_bytes());
        assert_eq!(&b[24..28], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 32);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Tensor::from_bytes(b"nope").is_err());
        let mut b = Tensor::zeros(vec![3]).to_bytes();
        b.pop();
        assert!(Tensor::from_bytes(&b).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(dims in prop::collection::vec(1usize..5, 0..4), seed in any::<u32>()) {
            let len: usize = dims.iter().product();
            let data: Vec<f32> = (0..len).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff)).collect();
            let t = Tensor::new(dims, data).unwrap();
            let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
