use std::path::Path;

use super::bin::{narrow, Reader, Writer};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Network, QuantPoint};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"MIBC";
const VERSION: u16 = 1;
const WHAT: &str = "checkpoint";

/// Training provenance stored with the weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: u32,
    /// SHA-256 of the canonical training-hyperparameter document.
    pub hyper_digest: [u8; 32],
}

/// A float network plus its provenance.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub meta: CheckpointMeta,
}

/// Named tensors in file order.
fn tensors(net: &Network<f32>) -> Vec<(&'static str, &Tensor<f32>)> {
    let [b1, b2, b3] = net.batch_norms();
    vec![
        ("spatial.weight", &net.spatial.weight.value),
        ("bn1.gamma", &b1.gamma.value),
        ("bn1.beta", &b1.beta.value),
        ("bn1.running_mean", &b1.running_mean),
        ("bn1.running_var", &b1.running_var),
        ("temporal.weight", &net.temporal.weight.value),
        ("bn2.gamma", &b2.gamma.value),
        ("bn2.beta", &b2.beta.value),
        ("bn2.running_mean", &b2.running_mean),
        ("bn2.running_var", &b2.running_var),
        ("depthwise.weight", &net.depthwise.weight.value),
        ("pointwise.weight", &net.pointwise.weight.value),
        ("bn3.gamma", &b3.gamma.value),
        ("bn3.beta", &b3.beta.value),
        ("bn3.running_mean", &b3.running_mean),
        ("bn3.running_var", &b3.running_var),
        ("fc.weight", &net.fc.weight.value),
        ("fc.bias", &net.fc.bias.value),
    ]
}

fn tensors_mut(net: &mut Network<f32>) -> Vec<&mut Tensor<f32>> {
    let Network {
        spatial,
        bn1,
        temporal,
        bn2,
        depthwise,
        pointwise,
        bn3,
        fc,
        ..
    } = net;
    vec![
        &mut spatial.weight.value,
        &mut bn1.gamma.value,
        &mut bn1.beta.value,
        &mut bn1.running_mean,
        &mut bn1.running_var,
        &mut temporal.weight.value,
        &mut bn2.gamma.value,
        &mut bn2.beta.value,
        &mut bn2.running_mean,
        &mut bn2.running_var,
        &mut depthwise.weight.value,
        &mut pointwise.weight.value,
        &mut bn3.gamma.value,
        &mut bn3.beta.value,
        &mut bn3.running_mean,
        &mut bn3.running_var,
        &mut fc.weight.value,
        &mut fc.bias.value,
    ]
}

impl Checkpoint {
    pub fn new(network: Network<f32>, meta: CheckpointMeta) -> Self {
        Self { network, meta }
    }

    pub fn config(&self) -> &ModelConfig {
        self.network.config()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let net = &self.network;
        let c = net.config();
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u16(VERSION);
        for v in [c.n_ch, c.n_s, c.n_k, c.n_f, c.n_cl] {
            w.u32(narrow(v, "model dimension")?);
        }
        w.u64(self.meta.seed);
        w.u32(self.meta.epoch);
        w.bytes(&self.meta.hyper_digest);
        for s in net.activation_scales() {
            w.u8(s.is_some() as u8);
            w.i32(s.unwrap_or(0));
        }
        for bn in net.batch_norms() {
            w.f32(bn.eps);
            w.f32(bn.momentum);
        }
        let list = tensors(net);
        w.u16(list.len() as u16);
        for (name, t) in list {
            w.short_str(name)?;
            w.u8(t.rank() as u8);
            for &d in t.shape() {
                w.u32(narrow(d, "tensor dimension")?);
            }
            w.f32_slice(t.data());
        }
        Ok(w.buf)
    }

    /// Parse and validate: config, tensor names and shapes against a freshly
    /// built network, finiteness and non-negative running variances.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(WHAT, bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        let config = ModelConfig {
            n_ch: dims[0],
            n_s: dims[1],
            n_k: dims[2],
            n_f: dims[3],
            n_cl: dims[4],
        };
        let mut net = Network::<f32>::build(config, 0).map_err(|e| r.err(format!("invalid model config: {e}")))?;
        let seed = r.u64()?;
        let epoch = r.u32()?;
        let hyper_digest: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
        let mut scales = [None; 5];
        for (p, s) in QuantPoint::ALL.iter().zip(scales.iter_mut()) {
            let present = r.u8()?;
            let v = r.i32()?;
            *s = match present {
                0 => None,
                1 => Some(v),
                other => return Err(r.err(format!("scale flag {other} for {} must be 0 or 1", p.name()))),
            };
        }
        net.set_activation_scales(scales);
        for bn in net.batch_norms_mut() {
            bn.eps = r.f32()?;
            bn.momentum = r.f32()?;
            if !(bn.eps.is_finite() && bn.eps >= 0.0 && bn.momentum.is_finite()) {
                return Err(r.err("batch-norm eps/momentum out of range"));
            }
        }
        let expected: Vec<(&'static str, Vec<usize>)> = tensors(&net)
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let count = r.u16()? as usize;
        if count != expected.len() {
            return Err(r.err(format!("{count} tensors, expected {}", expected.len())));
        }
        let mut loaded = Vec::with_capacity(count);
        for (name, shape) in &expected {
            let got = r.short_str()?;
            if got != *name {
                return Err(r.err(format!("tensor {got:?} where {name:?} was expected")));
            }
            let rank = r.u8()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if dims != *shape {
                return Err(r.err(format!("{name}: shape {dims:?}, expected {shape:?}")));
            }
            let data = r.f32_vec(dims.iter().product())?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(r.err(format!("{name}: non-finite value")));
            }
            if name.ends_with("running_var") && data.iter().any(|&v| v < 0.0) {
                return Err(r.err(format!("{name}: negative variance")));
            }
            loaded.push(data);
        }
        r.finish()?;
        for (t, data) in tensors_mut(&mut net).into_iter().zip(loaded) {
            *t = Tensor::new(t.shape().to_vec(), data)?;
        }
        Ok(Self {
            network: net,
            meta: CheckpointMeta {
                seed,
                epoch,
                hyper_digest,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Reject a checkpoint whose config differs from `expected`.
pub fn expect_config(ckpt: &Checkpoint, expected: &ModelConfig) -> Result<()> {
    if ckpt.config() != expected {
        return Err(Error::InvalidConfig(format!(
            "checkpoint config {} does not match {}",
            ckpt.config(),
            expected
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig::new(3, 64, 4, 5, 2).unwrap();
        let mut net = Network::<f32>::build(cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bn in net.batch_norms_mut() {
            for v in bn.running_mean.data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            for v in bn.running_var.data_mut() {
                *v = rng.random_range(0.1..2.0);
            }
        }
        net.set_activation_scales([Some(4), None, Some(-2), Some(0), Some(7)]);
        Checkpoint::new(
            net,
            CheckpointMeta {
                seed: 42,
                epoch: 17,
                hyper_digest: [7; 32],
            },
        )
    }

    #[test]
    fn round_trip_is_byte_exact_and_forward_identical() {
        let mut a = sample();
        let bytes = a.to_bytes().unwrap();
        let mut b = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(b.to_bytes().unwrap(), bytes);
        assert_eq!(b.meta, a.meta);
        assert_eq!(b.network.activation_scales(), a.network.activation_scales());
        let x = Tensor::from_fn(&[2, 3, 64], |i| (i as f32 * 0.37).sin());
        let ya = a.network.forward(&x, Mode::Infer).unwrap();
        let yb = b.network.forward(&x, Mode::Infer).unwrap();
        assert_eq!(
            ya.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            yb.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Version { .. })));
    }

    #[test]
    fn corrupt_content_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(Checkpoint::from_bytes(&nan)
            .unwrap_err()
            .to_string()
            .contains("non-finite"));
        let mut bad_cfg = bytes;
        bad_cfg[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert!(Checkpoint::from_bytes(&bad_cfg).is_err());
    }
}
