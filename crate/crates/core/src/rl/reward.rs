/// Upper clamp on rewards; the logarithmic branch diverges as the loss
/// approaches the threshold from above.
pub const REWARD_MAX: f64 = 10.0;

/// `-ln(L - eps)` above the threshold, `exp(eps - L)` at or below it, clamped
/// to at most `r_max`.
pub fn shaped_reward(loss: f64, threshold: f64, r_max: f64) -> f64 {
    let gap = loss - threshold;
    let r = if gap > 0.0 { -gap.ln() } else { (-gap).exp() };
    r.min(r_max)
}

pub fn reward(loss: f64, threshold: f64) -> f64 {
    shaped_reward(loss, threshold, REWARD_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values() {
        assert_eq!(reward(2.0, 1.0), 0.0);
        assert_eq!(reward(1.0, 1.0), 1.0);
        assert!((reward(1.0 + (-2f64).exp(), 1.0) - 2.0).abs() < 1e-12);
        assert!((reward(0.0, 1.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn clamp_applies_near_threshold() {
        assert_eq!(reward(1.0 + 1e-9, 1.0), REWARD_MAX);
        assert_eq!(shaped_reward(-10.0, 1.0, 5.0), 5.0);
    }

    #[test]
    fn piecewise_strictly_decreasing() {
        let eps = 1.0;
        let lo = eps + (-REWARD_MAX).exp() * 1.01;
        let above: Vec<f64> = (0..1000).map(|i| reward(lo + i as f64 * 0.05, eps)).collect();
        assert!(above.windows(2).all(|w| w[1] < w[0]));
        let below: Vec<f64> = (0..1000).map(|i| reward(i as f64 / 999.0 * eps, eps)).collect();
        assert!(below.windows(2).all(|w| w[1] < w[0]));
        assert!(below.iter().all(|&r| r >= 1.0));
    }
}
