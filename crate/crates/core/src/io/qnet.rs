use std::path::Path;

use super::bin::{narrow, Reader, Writer};
use super::write_atomic;
use crate::error::Result;
use crate::model::ModelConfig;
use crate::numerics::QuantTensor;
use crate::quant::{QuantNetwork, Requant};

const MAGIC: &[u8; 4] = b"MIBQ";
const VERSION: u16 = 1;
const WHAT: &str = "quantized network";
const MAX_COUNT: usize = u16::MAX as usize;

fn put_tensor(w: &mut Writer, t: &QuantTensor) -> Result<()> {
    let exp = i8::try_from(t.scale_exp())
        .map_err(|_| crate::Error::InvalidArgument(format!("scale exponent {} does not fit i8", t.scale_exp())))?;
    w.i8(exp);
    w.u8(t.shape().len() as u8);
    for &d in t.shape() {
        w.u32(narrow(d, "tensor dimension")?);
    }
    for &v in t.data() {
        w.i8(v);
    }
    Ok(())
}

fn get_tensor(r: &mut Reader) -> Result<QuantTensor> {
    let exp = r.i8()? as i32;
    let rank = r.u8()? as usize;
    let dims = (0..rank)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| r.err("tensor size overflows"))?;
    let data = r.bytes(n)?.iter().map(|&b| b as i8).collect();
    QuantTensor::new(dims, data, exp)
}

fn put_requants(w: &mut Writer, rq: &[Requant]) -> Result<()> {
    w.u32(narrow(rq.len(), "requantization count")?);
    for r in rq {
        w.i32(r.mult);
        w.u8(narrow(r.shift as usize, "shift")?);
        w.i32(r.bias);
    }
    Ok(())
}

fn get_requants(r: &mut Reader) -> Result<Vec<Requant>> {
    let n = r.u32()? as usize;
    // One record per feature map; reject absurd counts before allocating.
    if n > MAX_COUNT {
        return Err(r.err("requantization count is implausible"));
    }
    (0..n)
        .map(|_| {
            Ok(Requant {
                mult: r.i32()?,
                shift: r.u8()? as u32,
                bias: r.i32()?,
            })
        })
        .collect()
}

impl QuantNetwork {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u16(VERSION);
        for v in [c.n_ch, c.n_s, c.n_k, c.n_f, c.n_cl] {
            w.u32(narrow(v, "model dimension")?);
        }
        for &e in &self.act_exps {
            w.i32(e);
        }
        for (_, t) in self.weights() {
            put_tensor(&mut w, t)?;
        }
        for (_, rq) in self.requants() {
            put_requants(&mut w, rq)?;
        }
        w.u32(narrow(self.fc_bias.len(), "bias count")?);
        for &b in &self.fc_bias {
            w.i32(b);
        }
        Ok(w.buf)
    }

    /// Parse and run [`QuantNetwork::validate`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(WHAT, bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let mut d = [0usize; 5];
        for v in d.iter_mut() {
            *v = r.u32()? as usize;
        }
        let config = ModelConfig {
            n_ch: d[0],
            n_s: d[1],
            n_k: d[2],
            n_f: d[3],
            n_cl: d[4],
        };
        let mut act_exps = [0i32; 5];
        for e in act_exps.iter_mut() {
            *e = r.i32()?;
        }
        let spatial_w = get_tensor(&mut r)?;
        let temporal_w = get_tensor(&mut r)?;
        let depthwise_w = get_tensor(&mut r)?;
        let pointwise_w = get_tensor(&mut r)?;
        let fc_w = get_tensor(&mut r)?;
        let spatial_rq = get_requants(&mut r)?;
        let temporal_rq = get_requants(&mut r)?;
        let depthwise_rq = get_requants(&mut r)?;
        let pointwise_rq = get_requants(&mut r)?;
        let n_bias = r.u32()? as usize;
        if n_bias > MAX_COUNT {
            return Err(r.err("bias count is implausible"));
        }
        let fc_bias = (0..n_bias).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        let q = QuantNetwork {
            config,
            act_exps,
            spatial_w,
            temporal_w,
            depthwise_w,
            pointwise_w,
            fc_w,
            spatial_rq,
            temporal_rq,
            depthwise_rq,
            pointwise_rq,
            fc_bias,
        };
        q.validate().map_err(|e| crate::Error::format(WHAT, e.to_string()))?;
        Ok(q)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{synth, SynthSpec};
    use crate::model::Network;
    use crate::quant::export;

    fn sample() -> QuantNetwork {
        let spec = SynthSpec {
            n_samples: 128,
            ..SynthSpec::default()
        };
        let data = synth(&spec, 3, 0).unwrap();
        let net = Network::<f32>::build(ModelConfig::new(8, 128, 4, 8, 2).unwrap(), 2).unwrap();
        export(&net, &data).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let q = sample();
        let bytes = q.to_bytes().unwrap();
        let back = QuantNetwork::from_bytes(&bytes).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn version_and_truncation_errors() {
        let bytes = sample().to_bytes().unwrap();
        let mut v = bytes.clone();
        v[4] = 7;
        assert!(matches!(
            QuantNetwork::from_bytes(&v),
            Err(crate::Error::Version { .. })
        ));
        assert!(QuantNetwork::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn invalid_content_rejected() {
        let q = sample();
        let mut bad = q.clone();
        bad.fc_bias.pop();
        let bytes = bad.to_bytes().unwrap();
        assert!(QuantNetwork::from_bytes(&bytes).is_err());
    }
}
