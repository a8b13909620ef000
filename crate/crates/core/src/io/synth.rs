//! Synthetic motor-imagery-like EEG for desk-scale verification.
//!
//! Every trial carries one oscillatory burst per informative channel of its
//! class: a Hann-tapered sinusoid at the class frequency with a random phase
//! and a random onset shared by the trial. The bursts are mixed by a fixed
//! random orthonormal matrix over the informative channels (standing in for
//! volume conduction), then white Gaussian noise is added to every channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::TrialDataset;
use crate::error::{Error, Result};

/// Class-specific signal: an oscillation on a set of channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSignal {
    pub channels: Vec<usize>,
    pub center_hz: f32,
    pub amplitude: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_ch: usize,
    pub n_samples: usize,
    pub sample_rate_hz: f32,
    pub classes: Vec<ClassSignal>,
    pub noise_sigma: f32,
    pub mixing_seed: u64,
}

impl Default for SynthSpec {
    /// 8 channels, 2 s at 128 Hz, two classes (10 Hz vs 22 Hz) on channels
    /// 2 and 5 with amplitude 2 over unit noise.
    fn default() -> Self {
        let informative = vec![2, 5];
        Self {
            n_ch: 8,
            n_samples: 256,
            sample_rate_hz: 128.0,
            classes: vec![
                ClassSignal {
                    channels: informative.clone(),
                    center_hz: 10.0,
                    amplitude: 2.0,
                },
                ClassSignal {
                    channels: informative,
                    center_hz: 22.0,
                    amplitude: 2.0,
                },
            ],
            noise_sigma: 1.0,
            mixing_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_ch == 0 || self.n_samples == 0 {
            return bad("synthetic spec needs at least one channel and one sample".into());
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad(format!("sample rate {} must be positive", self.sample_rate_hz));
        }
        if self.classes.len() < 2 {
            return bad("synthetic spec needs at least two classes".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        for (c, class) in self.classes.iter().enumerate() {
            if class.channels.is_empty() {
                return bad(format!("class {c} has no informative channel"));
            }
            if let Some(&ch) = class.channels.iter().find(|&&ch| ch >= self.n_ch) {
                return bad(format!(
                    "class {c}: informative channel {ch} is outside [0, {})",
                    self.n_ch
                ));
            }
            let mut sorted = class.channels.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != class.channels.len() {
                return bad(format!("class {c} lists an informative channel twice"));
            }
            if !(class.center_hz > 0.0 && class.center_hz < self.sample_rate_hz / 2.0) {
                return bad(format!(
                    "class {c}: frequency {} Hz must lie in (0, Nyquist = {} Hz)",
                    class.center_hz,
                    self.sample_rate_hz / 2.0
                ));
            }
            if !(class.amplitude.is_finite() && class.amplitude >= 0.0) {
                return bad(format!("class {c}: amplitude must be non-negative"));
            }
        }
        Ok(())
    }

    /// Channels carrying signal for any class, ascending.
    pub fn informative_channels(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.classes.iter().flat_map(|c| c.channels.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Burst length in samples: half the trial, at least one sample.
    pub fn burst_len(&self) -> usize {
        (self.n_samples / 2).max(1)
    }
}

/// Random `n × n` orthonormal matrix (Gram–Schmidt on Gaussian columns),
/// row-major.
fn orthonormal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut degenerate = false;
        for _ in 0..n {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            for u in &cols {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-6 {
                degenerate = true;
                break;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
        if !degenerate {
            return (0..n * n).map(|k| cols[k % n][k / n]).collect();
        }
    }
}

/// Generate `n_per_class` trials per class; trials are interleaved by class
/// (`0, 1, …, 0, 1, …`). Deterministic per `(spec, seed)`.
pub fn synth(spec: &SynthSpec, n_per_class: usize, seed: u64) -> Result<TrialDataset> {
    spec.validate()?;
    let mut mix_rng = ChaCha8Rng::seed_from_u64(spec.mixing_seed);
    let mixing: Vec<Vec<f64>> = spec
        .classes
        .iter()
        .map(|c| orthonormal(c.channels.len(), &mut mix_rng))
        .collect();

    let (n_ch, n_s) = (spec.n_ch, spec.n_samples);
    let burst = spec.burst_len();
    let window: Vec<f64> = (0..burst)
        .map(|t| {
            if burst == 1 {
                1.0
            } else {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * t as f64 / (burst - 1) as f64).cos()
            }
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma as f64).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cl = spec.classes.len();
    let mut labels = Vec::with_capacity(n_per_class * n_cl);
    let mut data = Vec::with_capacity(n_per_class * n_cl * n_ch * n_s);
    let mut trial = vec![0.0f64; n_ch * n_s];
    for _ in 0..n_per_class {
        for (c, class) in spec.classes.iter().enumerate() {
            trial.iter_mut().for_each(|v| *v = 0.0);
            let k = class.channels.len();
            let onset = rng.random_range(0..=n_s - burst);
            let omega = 2.0 * std::f64::consts::PI * class.center_hz as f64 / spec.sample_rate_hz as f64;
            for j in 0..k {
                let phase: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                for (t, w) in window.iter().enumerate() {
                    let s = class.amplitude as f64 * w * (omega * t as f64 + phase).sin();
                    for (i, &ch) in class.channels.iter().enumerate() {
                        trial[ch * n_s + onset + t] += mixing[c][i * k + j] * s;
                    }
                }
            }
            for v in trial.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            data.extend(trial.iter().map(|&v| v as f32));
            labels.push(c as u16);
        }
    }
    let names = (1..=n_ch).map(|i| format!("CH{i}")).collect();
    TrialDataset::new(names, n_s, n_cl, spec.sample_rate_hz, labels, data)
}
