//! Seeded Gaussian noise sources.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// White phase noise on the beat, level in rad/sqrt(Hz) (one-sided).
    WhitePhase,
    /// White frequency noise on the beat, level in Hz/sqrt(Hz) (one-sided).
    WhiteFrequency,
    /// Additive converter noise, level is the time-domain SNR in dB relative
    /// to the carrier amplitude.
    AdcSnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

/// Standard normal deviates via the polar Box-Muller method on a ChaCha8
/// stream (counter-based, so a seed fixes the whole sequence).
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    #[inline]
    fn uniform_pm1(&mut self) -> f64 {
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        2.0 * u - 1.0
    }

    #[inline]
    pub fn next_standard(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = self.uniform_pm1();
            let v = self.uniform_pm1();
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * m);
                return u * m;
            }
        }
    }
}

/// A configured noise generator producing one sample per call.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    spec: NoiseSpec,
    sigma: f64,
    gauss: GaussianStream,
}

impl NoiseSource {
    /// `carrier_amplitude` only matters for [`NoiseKind::AdcSnr`].
    pub fn new(spec: NoiseSpec, fs: f64, carrier_amplitude: f64) -> Self {
        let sigma = match spec.kind {
            NoiseKind::WhitePhase | NoiseKind::WhiteFrequency => spec.level * (fs / 2.0).sqrt(),
            NoiseKind::AdcSnr => {
                if spec.level.is_infinite() && spec.level > 0.0 {
                    0.0
                } else {
                    carrier_amplitude / std::f64::consts::SQRT_2 * 10f64.powf(-spec.level / 20.0)
                }
            }
        };
        Self {
            spec,
            sigma,
            gauss: GaussianStream::new(spec.seed),
        }
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Per-sample standard deviation.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn next_sample(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        self.sigma * self.gauss.next_standard()
    }
}

/// One sample from `source`.
#[inline]
pub fn noise_step(source: &mut NoiseSource) -> f64 {
    source.next_sample()
}
