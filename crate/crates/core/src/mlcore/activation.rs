use std::f64::consts::FRAC_PI_2;

/// `(pi/2) * tanh(x)`, mapping any real onto `[-pi/2, pi/2]`.
pub fn tanh_rescale(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| FRAC_PI_2 * v.tanh()).collect()
}

/// Chain rule through [`tanh_rescale`] evaluated at `x`.
pub fn tanh_rescale_backward(x: &[f64], grad_out: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(grad_out)
        .map(|(v, g)| {
            let t = v.tanh();
            g * FRAC_PI_2 * (1.0 - t * t)
        })
        .collect()
}

/// Largest `f64` strictly below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept strictly inside `(0, 1)` even where the exact
/// value is not representable.
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().copied().map(sigmoid_scalar).collect()
}
