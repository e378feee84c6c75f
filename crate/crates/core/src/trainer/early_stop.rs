/// What the stopping rule says after one validation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on validation loss.
///
/// A loss improves only if it is strictly below the best so far. Training
/// stops once `patience` consecutive epochs pass without improvement.
/// Epochs are counted from 1.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Verdict {
        self.epoch += 1;
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = self.epoch;
            self.since_best = 0;
            Verdict::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }
}

/// Replays a validation series: returns `(epochs run, best epoch)` under the
/// rule above, capped at `max_epochs`.
pub fn replay(series: &[f64], patience: usize, max_epochs: usize) -> (usize, usize) {
    let mut es = EarlyStopping::new(patience);
    for &loss in series.iter().take(max_epochs) {
        if es.observe(loss) == Verdict::Stop {
            break;
        }
    }
    (es.epoch(), es.best_epoch())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Straight-line reading of "stop after `patience` epochs without a new
    /// minimum".
    fn reference(series: &[f64], patience: usize, max_epochs: usize) -> (usize, usize) {
        let (mut best, mut best_at) = (f64::INFINITY, 0);
        for (i, &v) in series.iter().take(max_epochs).enumerate() {
            if v < best {
                (best, best_at) = (v, i + 1);
            }
            if i + 1 - best_at >= patience {
                return (i + 1, best_at);
            }
        }
        (series.len().min(max_epochs), best_at)
    }

    #[test]
    fn worked_series() {
        let series = [0.5, 0.4, 0.41, 0.42, 0.43, 0.44, 0.45];
        assert_eq!(replay(&series, 5, 50), (7, 2));
        assert_eq!(replay(&series[..6], 5, 50), (6, 2));
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        assert_eq!(replay(&[1.0, 1.0, 1.0], 2, 50), (3, 1));
    }

    #[test]
    fn max_epochs_caps_the_run() {
        let series: Vec<f64> = (0..60).map(|i| 1.0 / (i + 1) as f64).collect();
        assert_eq!(replay(&series, 5, 50), (50, 50));
    }

    proptest! {
        #[test]
        fn matches_reference(
            series in proptest::collection::vec(0.0f64..1.0, 1..60),
            patience in 1usize..8,
        ) {
            prop_assert_eq!(replay(&series, patience, 50), reference(&series, patience, 50));
        }

        #[test]
        fn best_is_argmin_of_the_prefix(series in proptest::collection::vec(0.0f64..1.0, 1..60)) {
            let (run, best) = replay(&series, 5, 50);
            let prefix = &series[..run];
            let min = prefix.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(prefix[best - 1], min);
            prop_assert!(prefix[..best - 1].iter().all(|&v| v > min));
        }
    }
}
