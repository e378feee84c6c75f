use std::f64::consts::TAU;

use rand_distr::{Distribution, Normal};

use super::linear::Linear;
use super::rng::Rng;

/// Weights drawn from `Normal(0, 1/fan_in)`, zero bias.
pub fn init_lecun_normal(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Linear {
    assert!(fan_in >= 1 && fan_out >= 1, "layer dimensions must be positive");
    let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).unwrap();
    let weight = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
    Linear::from_parts(fan_in, fan_out, weight, vec![0.0; fan_out]).unwrap()
}

/// Standard deviation of the initial rotation angles.
pub const ANGLE_STD: f64 = TAU;

/// `n x depth` rotation angles from `Normal(0, std^2)`, qubit-major.
pub fn init_variational_angles(rng: &mut Rng, num_qubits: usize, depth: usize, std: f64) -> Vec<f64> {
    assert!(num_qubits >= 1 && depth >= 1, "circuit dimensions must be positive");
    let normal = Normal::new(0.0, std).expect("angle std must be finite and non-negative");
    (0..num_qubits * depth).map(|_| normal.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn lecun_variance() {
        // 2048 x 489 = 1,001,472 draws
        let layer = init_lecun_normal(&mut Rng::new(3), 2048, 489);
        let (_, var) = mean_var(layer.weight());
        let target = 1.0 / 2048.0;
        assert!((var - target).abs() < 0.1 * target, "{var} vs {target}");
        assert!(layer.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn lecun_is_deterministic() {
        let a = init_lecun_normal(&mut Rng::new(9), 16, 4);
        let b = init_lecun_normal(&mut Rng::new(9), 16, 4);
        assert_eq!(a, b);
    }

    #[test]
    fn variational_std() {
        let angles = init_variational_angles(&mut Rng::new(4), 1000, 1000, ANGLE_STD);
        let (_, var) = mean_var(&angles);
        let std = var.sqrt();
        assert!((std - TAU).abs() < 0.05 * TAU, "{std}");
        assert_eq!(init_variational_angles(&mut Rng::new(1), 19, 3, ANGLE_STD).len(), 57);
        assert_eq!(
            init_variational_angles(&mut Rng::new(1), 3, 2, ANGLE_STD),
            init_variational_angles(&mut Rng::new(1), 3, 2, ANGLE_STD)
        );
    }
}
