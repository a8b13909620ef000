use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bin::{narrow, Reader, Writer};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"MIBT";
const VERSION: u16 = 1;

/// Labelled EEG trials, `[trial][channel][sample]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDataset {
    n_ch: usize,
    n_samples: usize,
    n_classes: usize,
    sample_rate_hz: f32,
    channel_names: Vec<String>,
    labels: Vec<u16>,
    data: Vec<f32>,
}

impl TrialDataset {
    /// Build a dataset, checking every invariant.
    pub fn new(
        channel_names: Vec<String>,
        n_samples: usize,
        n_classes: usize,
        sample_rate_hz: f32,
        labels: Vec<u16>,
        data: Vec<f32>,
    ) -> Result<Self> {
        let n_ch = channel_names.len();
        if n_ch == 0 || n_samples == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one channel and one sample".into(),
            ));
        }
        if n_classes == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one class".into()));
        }
        // Names resolve electrodes case-insensitively, so they must differ
        // ignoring case.
        let mut upper: Vec<String> = channel_names.iter().map(|n| n.to_ascii_uppercase()).collect();
        upper.sort();
        if let Some(w) = upper.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("channel name {} appears twice", w[0])));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} of trial {i} is out of range for {n_classes} classes"
            )));
        }
        let expected = labels.len() * n_ch * n_samples;
        if data.len() != expected {
            return Err(Error::shape(&[labels.len(), n_ch, n_samples], &[data.len()]));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let per = n_ch * n_samples;
            return Err(Error::InvalidArgument(format!(
                "non-finite sample in trial {}, channel {}",
                i / per,
                i % per / n_samples
            )));
        }
        Ok(Self {
            n_ch,
            n_samples,
            n_classes,
            sample_rate_hz,
            channel_names,
            labels,
            data,
        })
    }

    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn n_ch(&self) -> usize {
        self.n_ch
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn sample_rate_hz(&self) -> f32 {
        self.sample_rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One trial as a flat `[channel][sample]` slice.
    pub fn trial(&self, i: usize) -> &[f32] {
        let n = self.n_ch * self.n_samples;
        &self.data[i * n..(i + 1) * n]
    }

    /// One trial as a `[n_ch, n_samples]` tensor.
    pub fn trial_tensor(&self, i: usize) -> Tensor<f32> {
        Tensor::new(vec![self.n_ch, self.n_samples], self.trial(i).to_vec()).expect("shape is consistent")
    }

    /// Trials `indices` stacked into `[batch, n_ch, n_samples]`.
    pub fn batch(&self, indices: &[usize]) -> Tensor<f32> {
        let mut data = Vec::with_capacity(indices.len() * self.n_ch * self.n_samples);
        for &i in indices {
            data.extend_from_slice(self.trial(i));
        }
        Tensor::new(vec![indices.len(), self.n_ch, self.n_samples], data).expect("shape is consistent")
    }

    /// The trials at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.n_trials()) {
            return Err(Error::InvalidArgument(format!(
                "trial index {i} out of range for {} trials",
                self.n_trials()
            )));
        }
        Ok(Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            data: self.batch(indices).into_data(),
            ..self.clone_header()
        })
    }

    /// Keep only `channels`, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument("channel selection is empty".into()));
        }
        if let Some(&c) = channels.iter().find(|&&c| c >= self.n_ch) {
            return Err(Error::InvalidArgument(format!(
                "channel index {c} out of range for {} channels",
                self.n_ch
            )));
        }
        let mut sorted = channels.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("channel index {} selected twice", w[0])));
        }
        let mut data = Vec::with_capacity(self.n_trials() * channels.len() * self.n_samples);
        for t in 0..self.n_trials() {
            let trial = self.trial(t);
            for &c in channels {
                data.extend_from_slice(&trial[c * self.n_samples..(c + 1) * self.n_samples]);
            }
        }
        Ok(Self {
            n_ch: channels.len(),
            channel_names: channels.iter().map(|&c| self.channel_names[c].clone()).collect(),
            data,
            labels: self.labels.clone(),
            ..self.clone_header()
        })
    }

    /// Resolve electrode names (case-insensitive) to channel indices.
    pub fn channel_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.channel_names
                    .iter()
                    .position(|c| c.eq_ignore_ascii_case(n))
                    .ok_or_else(|| Error::InvalidArgument(format!("electrode {n:?} is not in the dataset montage")))
            })
            .collect()
    }

    /// Class-stratified shuffled split; `test_fraction` of each class goes to
    /// the second set.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidArgument(format!(
                "test fraction {test_fraction} must be in [0, 1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for c in 0..self.n_classes {
            let mut idx: Vec<usize> = (0..self.n_trials()).filter(|&i| self.label(i) == c).collect();
            idx.shuffle(&mut rng);
            let n_test = (idx.len() as f64 * test_fraction).round() as usize;
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train)?, self.subset(&test)?))
    }

    fn clone_header(&self) -> Self {
        Self {
            n_ch: self.n_ch,
            n_samples: self.n_samples,
            n_classes: self.n_classes,
            sample_rate_hz: self.sample_rate_hz,
            channel_names: self.channel_names.clone(),
            labels: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Serialize to the MIBT layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.u32(narrow(self.n_trials(), "n_trials")?);
        w.u16(narrow(self.n_ch, "n_ch")?);
        w.u32(narrow(self.n_samples, "n_samples")?);
        w.f32(self.sample_rate_hz);
        w.u16(narrow(self.n_classes, "n_classes")?);
        for name in &self.channel_names {
            w.short_str(name)?;
        }
        for &l in &self.labels {
            w.u16(l);
        }
        w.f32_slice(&self.data);
        Ok(w.buf)
    }

    /// Parse the MIBT layout, validating every invariant.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("trial file", bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let n_trials = r.u32()? as usize;
        let n_ch = r.u16()? as usize;
        let n_samples = r.u32()? as usize;
        let sample_rate = r.f32()?;
        let n_classes = r.u16()? as usize;
        let names = (0..n_ch).map(|_| r.short_str()).collect::<Result<Vec<_>>>()?;
        let labels = (0..n_trials).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= n_classes) {
            return Err(r.err(format!("label {l} of trial {i} is >= N_cl = {n_classes}")));
        }
        let count = n_trials
            .checked_mul(n_ch)
            .and_then(|v| v.checked_mul(n_samples))
            .ok_or_else(|| r.err("data size overflows"))?;
        let data = r.f32_vec(count)?;
        r.finish()?;
        Self::new(names, n_samples, n_classes, sample_rate, labels, data).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::format("trial file", m),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
