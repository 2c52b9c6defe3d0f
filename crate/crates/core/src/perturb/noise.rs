use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::EmbeddingMatrix;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    /// Uniform with the same mean and variance as the Gaussian at (mu, sigma).
    Uniform,
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "uniform" => Ok(NoiseFamily::Uniform),
            other => Err(Error::invalid(format!("unknown noise family {other:?} (expected gaussian|uniform)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBounds {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl Default for NoiseBounds {
    fn default() -> Self {
        NoiseBounds {
            mu_lo: -0.5,
            mu_hi: 0.5,
            sigma_lo: 0.01,
            sigma_hi: 1.0,
        }
    }
}

impl NoiseBounds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mu_lo, self.mu_hi, self.sigma_lo, self.sigma_hi];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("noise bounds must be finite"));
        }
        if self.sigma_lo <= 0.0 {
            return Err(Error::invalid("sigma lower bound must be positive"));
        }
        if self.mu_lo >= self.mu_hi || self.sigma_lo >= self.sigma_hi {
            return Err(Error::invalid("noise bounds must satisfy lo < hi"));
        }
        Ok(())
    }
}

/// Parameters of the perturbation distribution; the controller's state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseState {
    pub mu: f64,
    pub sigma: f64,
    pub family: NoiseFamily,
    pub bounds: NoiseBounds,
}

impl NoiseState {
    pub fn new(mu: f64, sigma: f64, family: NoiseFamily, bounds: NoiseBounds) -> Result<Self> {
        bounds.validate()?;
        if !(bounds.mu_lo..=bounds.mu_hi).contains(&mu) || !(bounds.sigma_lo..=bounds.sigma_hi).contains(&sigma) {
            return Err(Error::invalid(format!(
                "noise state ({mu}, {sigma}) outside bounds mu in [{}, {}], sigma in [{}, {}]",
                bounds.mu_lo, bounds.mu_hi, bounds.sigma_lo, bounds.sigma_hi
            )));
        }
        Ok(NoiseState { mu, sigma, family, bounds })
    }

    pub fn is_valid(&self) -> bool {
        self.bounds.validate().is_ok()
            && (self.bounds.mu_lo..=self.bounds.mu_hi).contains(&self.mu)
            && (self.bounds.sigma_lo..=self.bounds.sigma_hi).contains(&self.sigma)
    }

    /// Same family and bounds, parameters clipped into the bounds.
    pub fn with_clipped(&self, mu: f64, sigma: f64) -> Self {
        NoiseState {
            mu: mu.clamp(self.bounds.mu_lo, self.bounds.mu_hi),
            sigma: sigma.clamp(self.bounds.sigma_lo, self.bounds.sigma_hi),
            ..*self
        }
    }

    /// (mu, sigma) mapped affinely onto [-1, 1] by the bounds.
    pub fn normalized(&self) -> [f64; 2] {
        let b = &self.bounds;
        [
            2.0 * (self.mu - b.mu_lo) / (b.mu_hi - b.mu_lo) - 1.0,
            2.0 * (self.sigma - b.sigma_lo) / (b.sigma_hi - b.sigma_lo) - 1.0,
        ]
    }
}

/// i.i.d. `rows x cols` draws from the state's distribution.
pub fn sample_noise(state: &NoiseState, rows: usize, cols: usize, rng: &mut Stream) -> Result<EmbeddingMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("noise matrix must be non-empty, got {rows}x{cols}")));
    }
    if !state.is_valid() {
        return Err(Error::invalid(format!("invalid noise state {state:?}")));
    }
    let n = rows * cols;
    let values: Vec<f64> = match state.family {
        NoiseFamily::Gaussian => {
            let dist = Normal::new(state.mu, state.sigma).map_err(|e| Error::invalid(e.to_string()))?;
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        NoiseFamily::Uniform => {
            let half = 3f64.sqrt() * state.sigma;
            let dist = Uniform::new_inclusive(state.mu - half, state.mu + half)
                .map_err(|e| Error::invalid(e.to_string()))?;
            (0..n).map(|_| dist.sample(rng)).collect()
        }
    };
    EmbeddingMatrix::from_vec(rows, cols, values)
}

/// Elementwise sum; the clean embedding is left untouched.
pub fn inject(e_x: &EmbeddingMatrix, noise: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if (e_x.rows(), e_x.cols()) != (noise.rows(), noise.cols()) {
        return Err(Error::Dimension(format!(
            "embedding is {}x{}, noise is {}x{}",
            e_x.rows(),
            e_x.cols(),
            noise.rows(),
            noise.cols()
        )));
    }
    let values = e_x.values().iter().zip(noise.values()).map(|(a, b)| a + b).collect();
    EmbeddingMatrix::from_vec(e_x.rows(), e_x.cols(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn state(mu: f64, sigma: f64, family: NoiseFamily) -> NoiseState {
        NoiseState::new(mu, sigma, family, NoiseBounds::default()).unwrap()
    }

    fn moments(m: &EmbeddingMatrix) -> (f64, f64) {
        let n = m.values().len() as f64;
        let mean = m.values().iter().sum::<f64>() / n;
        let var = m.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn gaussian_mean_within_four_sigma_of_target() {
        let s = state(0.2, 0.01, NoiseFamily::Gaussian);
        let m = sample_noise(&s, 1000, 100, &mut substream(1, "noise")).unwrap();
        let (mean, _) = moments(&m);
        assert!((mean - 0.2).abs() <= 4.0 * 0.01 / (1e5f64).sqrt());
    }

    #[test]
    fn uniform_support_and_moment_match() {
        let sigma = 0.3;
        let s = state(-0.1, sigma, NoiseFamily::Uniform);
        let m = sample_noise(&s, 1000, 100, &mut substream(2, "noise")).unwrap();
        let half = 3f64.sqrt() * sigma;
        assert!(m.values().iter().all(|v| (-0.1 - half..=-0.1 + half).contains(v)));
        let g = sample_noise(&state(-0.1, sigma, NoiseFamily::Gaussian), 1000, 100, &mut substream(2, "noise")).unwrap();
        let n = 1e5f64;
        let (mu_u, var_u) = moments(&m);
        let (mu_g, var_g) = moments(&g);
        let se_mean = sigma / n.sqrt();
        assert!((mu_u - mu_g).abs() <= 4.0 * se_mean * 2f64.sqrt());
        // var-of-sample-variance: 2 sigma^4/n (gaussian), 0.8 sigma^4/n (uniform)
        let se_var = (sigma.powi(4) * (2.0 + 0.8) / n).sqrt();
        assert!((var_u - var_g).abs() <= 4.0 * se_var, "{var_u} {var_g}");
    }

    #[test]
    fn sampling_is_deterministic_and_guarded() {
        let s = state(0.0, 0.5, NoiseFamily::Gaussian);
        let a = sample_noise(&s, 3, 4, &mut substream(3, "noise")).unwrap();
        let b = sample_noise(&s, 3, 4, &mut substream(3, "noise")).unwrap();
        assert_eq!(a, b);
        assert!(sample_noise(&s, 0, 4, &mut substream(3, "noise")).is_err());
        assert!(NoiseState::new(0.0, 2.0, NoiseFamily::Gaussian, NoiseBounds::default()).is_err());
        let bad = NoiseBounds { sigma_lo: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn inject_examples() {
        let e = EmbeddingMatrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let zero = EmbeddingMatrix::zeros(1, 2).unwrap();
        assert_eq!(inject(&e, &zero).unwrap(), e);
        let n = EmbeddingMatrix::from_vec(1, 2, vec![0.5, -0.5]).unwrap();
        assert_eq!(inject(&e, &n).unwrap().values(), &[1.5, 1.5]);
        assert!(inject(&e, &EmbeddingMatrix::zeros(2, 2).unwrap()).is_err());
    }

    #[test]
    fn normalization_maps_bounds_to_unit_box() {
        let lo = state(-0.5, 0.01, NoiseFamily::Gaussian).normalized();
        let hi = state(0.5, 1.0, NoiseFamily::Gaussian).normalized();
        assert_eq!(lo, [-1.0, -1.0]);
        assert_eq!(hi, [1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn inject_then_subtract_restores(vals in proptest::collection::vec(-10.0f64..10.0, 6), noise in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let e = EmbeddingMatrix::from_vec(2, 3, vals.clone()).unwrap();
            let n = EmbeddingMatrix::from_vec(2, 3, noise.clone()).unwrap();
            let neg = EmbeddingMatrix::from_vec(2, 3, noise.iter().map(|v| -v).collect()).unwrap();
            let back = inject(&inject(&e, &n).unwrap(), &neg).unwrap();
            prop_assert_eq!(e.values(), &vals[..]);
            for (a, b) in back.values().iter().zip(&vals) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
