/// Multiplies `lr` by `factor` when the last `patience` entries of `history`
/// contain no new minimum relative to everything before them.
///
/// `history` should start at the last decay (the caller resets it), so a
/// plateau triggers one decay per `patience` epochs. Histories no longer than
/// `patience` never decay.
pub fn decay_on_plateau(lr: f64, history: &[f64], patience: usize, factor: f64) -> f64 {
    assert!(patience >= 1, "patience must be >= 1");
    assert!(factor > 0.0 && factor < 1.0, "factor must be in (0, 1)");
    if history.len() <= patience {
        return lr;
    }
    let split = history.len() - patience;
    let best_before = history[..split].iter().copied().fold(f64::INFINITY, f64::min);
    let best_recent = history[split..].iter().copied().fold(f64::INFINITY, f64::min);
    if best_recent < best_before {
        lr
    } else {
        lr * factor
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn twenty_flat_epochs_decay_by_point_eight() {
        let mut h = vec![1.0];
        h.extend(std::iter::repeat(1.5).take(20));
        assert_eq!(decay_on_plateau(1e-3, &h, 20, 0.8), 1e-3 * 0.8);
    }

    #[test]
    fn decreasing_history_keeps_rate() {
        let h: Vec<f64> = (0..40).map(|i| 10.0 - i as f64).collect();
        assert_eq!(decay_on_plateau(1e-3, &h, 20, 0.8), 1e-3);
    }

    #[test]
    fn empty_history_keeps_rate() {
        assert_eq!(decay_on_plateau(1e-3, &[], 20, 0.8), 1e-3);
    }

    #[test]
    fn one_improvement_in_window_prevents_decay() {
        let mut h = vec![1.0];
        h.extend(std::iter::repeat(1.5).take(19));
        h.push(0.9);
        assert_eq!(decay_on_plateau(1e-3, &h, 20, 0.8), 1e-3);
    }

    proptest! {
        #[test]
        fn never_increases(h in proptest::collection::vec(0.0f64..10.0, 0..60), p in 1usize..25, f in 0.05f64..0.95) {
            let lr = decay_on_plateau(1e-3, &h, p, f);
            prop_assert!(lr <= 1e-3);
            prop_assert!(lr == 1e-3 || lr == 1e-3 * f);
        }
    }
}
