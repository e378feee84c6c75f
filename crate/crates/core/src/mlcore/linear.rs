use crate::{Error, Result};

/// Fully connected layer `y = W^T x + b` with `W` stored input-major
/// (`weight[i * out_dim + j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

/// Gradients of a scalar loss through one [`Linear`] application.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != in_dim * out_dim {
            return Err(Error::shape("linear weight", in_dim * out_dim, weight.len()));
        }
        if bias.len() != out_dim {
            return Err(Error::shape("linear bias", out_dim, bias.len()));
        }
        Ok(Linear {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weight, &mut self.bias)
    }

    pub fn parameter_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::shape("linear input", self.in_dim, x.len()));
        }
        let mut y = self.bias.clone();
        for (xi, row) in x.iter().zip(self.weight.chunks_exact(self.out_dim)) {
            if *xi == 0.0 {
                continue;
            }
            for (yj, w) in y.iter_mut().zip(row) {
                *yj += xi * w;
            }
        }
        Ok(y)
    }

    /// Backward pass for input `x` given `dL/dy`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<LinearGrads> {
        if x.len() != self.in_dim {
            return Err(Error::shape("linear input", self.in_dim, x.len()));
        }
        if grad_out.len() != self.out_dim {
            return Err(Error::shape("linear output gradient", self.out_dim, grad_out.len()));
        }
        let mut weight = vec![0.0; self.weight.len()];
        let mut input = vec![0.0; self.in_dim];
        for ((xi, gi), (grow, wrow)) in x.iter().zip(input.iter_mut()).zip(
            weight
                .chunks_exact_mut(self.out_dim)
                .zip(self.weight.chunks_exact(self.out_dim)),
        ) {
            let mut acc = 0.0;
            for ((gw, w), g) in grow.iter_mut().zip(wrow).zip(grad_out) {
                *gw = xi * g;
                acc += w * g;
            }
            *gi = acc;
        }
        Ok(LinearGrads {
            weight,
            bias: grad_out.to_vec(),
            input,
        })
    }
}

pub fn linear_forward(layer: &Linear, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_cases() {
        assert_eq!(Linear::zeros(3, 2).forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let id = Linear::from_parts(1, 1, vec![1.0], vec![0.0]).unwrap();
        assert_eq!(id.forward(&[2.5]).unwrap(), vec![2.5]);
        assert_eq!(Linear::zeros(2048, 8).parameter_count(), 16392);
        assert!(matches!(id.forward(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn forward_is_transpose_product() {
        // W = [[1, 2], [3, 4], [5, 6]] (3 x 2), b = [0.5, -1]
        let l = Linear::from_parts(3, 2, vec![1., 2., 3., 4., 5., 6.], vec![0.5, -1.0]).unwrap();
        let y = l.forward(&[1.0, -1.0, 2.0]).unwrap();
        assert_eq!(y, vec![1. - 3. + 10. + 0.5, 2. - 4. + 12. - 1.0]);
    }
}
