//! Time signals for parameters and disturbances.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sinusoids summed by [`SignalSpec::SeededNoise`].
const NOISE_TONES: usize = 32;

/// Scalar signal primitive; frequencies are angular (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `offset + amplitude sin(frequency t + phase)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `level` on `[t0, t1)`, zero elsewhere.
    Pulse {
        t0: f64,
        t1: f64,
        level: f64,
    },
    /// Sum of sinusoids with random frequencies in `(0, band]` and random
    /// phases, scaled to the requested RMS.
    SeededNoise {
        band: f64,
        rms: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl SignalSpec {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite"))
            }
        };
        match *self {
            SignalSpec::Zero => Ok(()),
            SignalSpec::Constant { value } => finite("value", value),
            SignalSpec::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => {
                finite("amplitude", amplitude)?;
                finite("frequency", frequency)?;
                finite("phase", phase)?;
                finite("offset", offset)
            }
            SignalSpec::Pulse { t0, t1, level } => {
                finite("level", level)?;
                if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
                    return Err(format!("pulse needs t0 < t1, got [{t0}, {t1})"));
                }
                Ok(())
            }
            SignalSpec::SeededNoise { band, rms, .. } => {
                if !(band > 0.0 && band.is_finite()) {
                    return Err(format!("noise band must be positive, got {band}"));
                }
                if !(rms >= 0.0 && rms.is_finite()) {
                    return Err(format!("noise rms must be nonnegative, got {rms}"));
                }
                Ok(())
            }
        }
    }

    fn sampler(&self, component: u64) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        match *self {
            SignalSpec::Zero => Arc::new(|_| 0.0),
            SignalSpec::Constant { value } => Arc::new(move |_| value),
            SignalSpec::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => Arc::new(move |t| offset + amplitude * (frequency * t + phase).sin()),
            SignalSpec::Pulse { t0, t1, level } => {
                Arc::new(move |t| if t >= t0 && t < t1 { level } else { 0.0 })
            }
            SignalSpec::SeededNoise { band, rms, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(component));
                let tones: Vec<(f64, f64)> = (0..NOISE_TONES)
                    .map(|_| {
                        let omega = band * (1.0 - rng.gen::<f64>());
                        (omega, rng.gen_range(0.0..2.0 * PI))
                    })
                    .collect();
                let amplitude = rms * (2.0 / NOISE_TONES as f64).sqrt();
                Arc::new(move |t| {
                    amplitude * tones.iter().map(|(w, p)| (w * t + p).sin()).sum::<f64>()
                })
            }
        }
    }
}

type Sampler = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Vector-valued signal `t -> R^dim`.
#[derive(Clone)]
pub struct Signal {
    dim: usize,
    description: String,
    sampler: Sampler,
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Signal")
            .field("dim", &self.dim)
            .field("description", &self.description)
            .finish()
    }
}

impl Signal {
    pub fn new(
        dim: usize,
        description: impl Into<String>,
        sampler: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Signal {
            dim,
            description: description.into(),
            sampler: Arc::new(sampler),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Signal::new(dim, "zero", move |_| vec![0.0; dim])
    }

    /// Applies one primitive to every component; noise components draw
    /// from consecutive seeds.
    pub fn from_spec(spec: &SignalSpec, dim: usize) -> Self {
        let samplers: Vec<_> = (0..dim as u64).map(|k| spec.sampler(k)).collect();
        Signal::new(dim, format!("{spec:?}"), move |t| {
            samplers.iter().map(|s| s(t)).collect()
        })
    }

    /// One primitive per component.
    pub fn from_components(specs: &[SignalSpec]) -> Self {
        let samplers: Vec<_> = specs
            .iter()
            .enumerate()
            .map(|(k, s)| s.sampler(k as u64))
            .collect();
        Signal::new(specs.len(), format!("{specs:?}"), move |t| {
            samplers.iter().map(|s| s(t)).collect()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn sample(&self, t: f64) -> Vec<f64> {
        (self.sampler)(t)
    }
}
