use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }
}

/// Moment estimates for a list of parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(group_sizes: &[usize]) -> Self {
        AdamState {
            step: 0,
            first_moment: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn from_parts(step: u64, first_moment: Vec<Vec<f64>>, second_moment: Vec<Vec<f64>>) -> Result<Self> {
        if first_moment.len() != second_moment.len()
            || first_moment.iter().zip(&second_moment).any(|(m, v)| m.len() != v.len())
        {
            return Err(Error::Argument("adam moment shapes disagree".into()));
        }
        Ok(AdamState {
            step,
            first_moment,
            second_moment,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    config: &AdamConfig,
    params: &mut [&mut [f64]],
    grads: &[Vec<f64>],
    state: &mut AdamState,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::shape("adam parameter groups", state.first_moment.len(), params.len()));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::shape("adam parameter group", m.len(), g.len().max(p.len())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        for (((pi, gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let cfg = AdamConfig::default();
        let mut w = vec![1.0, -2.0];
        let mut state = AdamState::new(&[2]);
        adam_step(&cfg, &mut [&mut w], &[vec![0.0, 0.0]], &mut state).unwrap();
        assert_eq!(w, vec![1.0, -2.0]);
        assert_eq!(state.first_moment(), &[vec![0.0, 0.0]]);
        assert_eq!(state.second_moment(), &[vec![0.0, 0.0]]);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut w = vec![0.0];
        let mut state = AdamState::new(&[1]);
        adam_step(&cfg, &mut [&mut w], &[vec![0.5]], &mut state).unwrap();
        assert!((w[0] + 1e-4).abs() < 1e-9, "{}", w[0]);
    }

    #[test]
    fn descends_a_quadratic() {
        let cfg = AdamConfig::with_lr(0.1);
        let mut w = vec![1.0];
        let mut state = AdamState::new(&[1]);
        for _ in 0..100 {
            let g = vec![2.0 * w[0]];
            adam_step(&cfg, &mut [&mut w], &[g], &mut state).unwrap();
        }
        assert!(w[0].abs() < 0.5, "{}", w[0]);
    }

    #[test]
    fn shape_mismatch() {
        let cfg = AdamConfig::default();
        let mut w = vec![0.0; 2];
        let mut state = AdamState::new(&[2]);
        assert!(adam_step(&cfg, &mut [&mut w], &[vec![1.0]], &mut state).is_err());
        assert_eq!(state.step(), 0);
    }
}
