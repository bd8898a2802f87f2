//! Surface EMG synthesized from muscle activations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmgModel {
    /// Low-pass time constant in seconds.
    pub time_constant: f64,
    pub multiplicative_sigma: f64,
    pub additive_sigma: f64,
}

impl Default for EmgModel {
    fn default() -> Self {
        EmgModel {
            time_constant: 0.04,
            multiplicative_sigma: 0.1,
            additive_sigma: 0.02,
        }
    }
}

/// Default model; `noise_seed = None` disables both noise terms.
pub fn synth_emg(activations: &[Vec<f64>], fps: f64, noise_seed: Option<u64>) -> Vec<Vec<f64>> {
    EmgModel::default().synthesize(activations, fps, noise_seed)
}

impl EmgModel {
    /// `activations` is frame-major. The filter is the exact zero-order-hold
    /// discretization of `τ ẏ = a − y`, started at rest on the first sample.
    pub fn synthesize(&self, activations: &[Vec<f64>], fps: f64, noise_seed: Option<u64>) -> Vec<Vec<f64>> {
        let Some(first) = activations.first() else {
            return Vec::new();
        };
        let alpha = (-1.0 / (fps * self.time_constant)).exp();
        let mut y = first.clone();
        let mut out = Vec::with_capacity(activations.len());
        out.push(y.clone());
        for prev in &activations[..activations.len() - 1] {
            for (yc, &a) in y.iter_mut().zip(prev) {
                *yc = alpha * *yc + (1.0 - alpha) * a;
            }
            out.push(y.clone());
        }
        if let Some(seed) = noise_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, 1.0).expect("unit normal");
            for frame in &mut out {
                for v in frame.iter_mut() {
                    let m = 1.0 + self.multiplicative_sigma * n.sample(&mut rng);
                    let e = self.additive_sigma * n.sample(&mut rng);
                    *v = (*v * m + e).max(0.0);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_input_is_silent() {
        let a = vec![vec![0.0; 3]; 50];
        assert!(synth_emg(&a, 90.0, None).iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn step_reaches_one_time_constant() {
        let fps = 1000.0;
        let t0 = 100;
        let a: Vec<Vec<f64>> = (0..300).map(|i| vec![if i >= t0 { 1.0 } else { 0.0 }]).collect();
        let y = synth_emg(&a, fps, None);
        assert_eq!(y[t0][0], 0.0);
        let at = y[t0 + 40][0];
        assert!((at - (1.0 - (-1.0f64).exp())).abs() < 1e-12, "{at}");
        assert!(y.windows(2).all(|w| w[1][0] >= w[0][0]));
    }

    #[test]
    fn seeded_noise_is_reproducible_and_nonnegative() {
        let a: Vec<Vec<f64>> = (0..120).map(|i| vec![(i as f64 * 0.05).sin().abs(), 0.0]).collect();
        let x = synth_emg(&a, 90.0, Some(7));
        assert_eq!(x, synth_emg(&a, 90.0, Some(7)));
        assert_ne!(x, synth_emg(&a, 90.0, Some(8)));
        assert!(x.iter().flatten().all(|&v| v >= 0.0));
    }
}
