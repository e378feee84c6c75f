use super::activation::sigmoid_scalar;
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking
/// logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape("bce targets", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::Argument("bce of an empty batch".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy from probabilities.
pub fn bce(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / pred.len() as f64)
}

fn bce_logit_term(z: f64, y: f64) -> f64 {
    // log(1 + e^z) - y z, written to avoid overflow
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy from logits.
pub fn bce_with_logits(logits: &[f64], target: &[f64]) -> Result<f64> {
    check(logits, target)?;
    let total: f64 = logits.iter().zip(target).map(|(&z, &y)| bce_logit_term(z, y)).sum();
    Ok(total / logits.len() as f64)
}

/// Sum of per-element BCE terms and `d(term)/d(logit) = sigmoid(z) - y`.
///
/// The caller divides by the element count of the full batch so per-sample
/// calls compose into a batch mean.
pub fn bce_logits_sum_and_grad(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check(logits, target)?;
    let sum = logits.iter().zip(target).map(|(&z, &y)| bce_logit_term(z, y)).sum();
    let grad = logits
        .iter()
        .zip(target)
        .map(|(&z, &y)| sigmoid_scalar(z) - y)
        .collect();
    Ok((sum, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn cases() {
        assert!((bce(&[0.5], &[1.0]).unwrap() - LN_2).abs() < 1e-12);
        assert!((bce(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - LN_2).abs() < 1e-12);
        let exact = bce(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(exact >= 0.0 && exact <= -(1.0 - PROB_CLAMP).ln() + 1e-15);
        assert!(matches!(bce(&[0.5], &[1.0, 0.0]), Err(Error::Shape { .. })));
        assert!((bce_with_logits(&[0.0], &[1.0]).unwrap() - LN_2).abs() < 1e-12);
    }

    #[test]
    fn logits_form_is_stable() {
        let l = bce_with_logits(&[800.0, -800.0], &[0.0, 1.0]).unwrap();
        assert!((l - 800.0).abs() < 1e-9);
        assert!(bce_with_logits(&[800.0, -800.0], &[1.0, 0.0]).unwrap() < 1e-300);
    }

    proptest::proptest! {
        // The clamp starts to bite near |z| = ln(1e7), about 16.1.
        #[test]
        fn logit_and_probability_forms_agree(z in -15.0f64..15.0, y in proptest::bool::ANY) {
            let y = if y { 1.0 } else { 0.0 };
            let p = sigmoid_scalar(z);
            let a = bce_with_logits(&[z], &[y]).unwrap();
            let b = bce(&[p], &[y]).unwrap();
            proptest::prop_assert!((a - b).abs() <= 1e-9, "z {z} y {y}: {a} vs {b}");
        }
    }
}
