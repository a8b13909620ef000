//! Post-training export: power-of-two scales, percentile calibration,
//! batch-norm folding into integer requantization, kernel reversal.

mod export;
mod network;
mod requant;

pub use export::{abs_percentile, calibrate, export, export_with_report, ExportReport, CALIBRATION_PERCENTILE};
pub use network::{quantize_input, AccumulatorBound, QuantNetwork};
pub use requant::{fold_affine, fold_bn, requantize, requantize_relu, Requant, MAX_SHIFT};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{synth, SynthSpec};
    use crate::model::{ModelConfig, Network};
    use crate::numerics::Tensor;

    fn small() -> (Network<f32>, crate::io::TrialDataset) {
        let spec = SynthSpec {
            n_samples: 128,
            ..SynthSpec::default()
        };
        let data = synth(&spec, 4, 0).unwrap();
        let net = Network::build(ModelConfig::new(8, 128, 4, 8, 2).unwrap(), 1).unwrap();
        (net, data)
    }

    #[test]
    fn percentile_nearest_rank() {
        let mut v: Vec<f64> = (1..=1000).map(|i| -(i as f64)).collect();
        assert_eq!(abs_percentile(&mut v, 0.999), 999.0);
        assert_eq!(abs_percentile(&mut [3.0, -5.0], 1.0), 5.0);
        assert_eq!(abs_percentile(&mut [], 0.999), 0.0);
    }

    #[test]
    fn temporal_kernels_are_stored_reversed() {
        let (mut net, data) = small();
        let cfg = *net.config();
        let mut w = vec![0.0f32; cfg.n_k * cfg.n_f];
        w[..3].copy_from_slice(&[1.0, 2.0, 3.0]);
        net.temporal.weight.value = Tensor::new(vec![cfg.n_k, cfg.n_f], w).unwrap();
        let q = export(&net, &data).unwrap();
        // max |w| = 3 -> exponent 5, codes 32, 64, 96 reversed within the row.
        let row = q.temporal_w.row(0);
        assert_eq!(&row[cfg.n_f - 3..], &[96, 64, 32]);
        assert!(row[..cfg.n_f - 3].iter().all(|&v| v == 0));
        // Reversing again recovers the quantized float kernel.
        assert_eq!(&q.temporal_w.reversed_rows().row(0)[..3], &[32, 64, 96]);
    }

    #[test]
    fn export_is_deterministic_and_valid() {
        let (net, data) = small();
        let a = export(&net, &data).unwrap();
        let b = export(&net, &data).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(
            a.weight_bytes(),
            crate::estimate::estimate(net.config()).unwrap().params_total
        );
    }

    #[test]
    fn dequantized_weights_within_one_step() {
        let (net, data) = small();
        let (q, _) = export_with_report(&net, &data).unwrap();
        let back = q.spatial_w.dequantize();
        let step = crate::numerics::pow2(-q.spatial_w.scale_exp()) as f32;
        for (a, b) in back.data().iter().zip(net.spatial.weight.value.data()) {
            assert!((a - b).abs() <= step * 0.5 + 1e-7);
        }
    }

    #[test]
    fn empty_calibration_rejected() {
        let (net, data) = small();
        let empty = data.subset(&[]).unwrap();
        assert!(matches!(export(&net, &empty), Err(crate::Error::Empty(_))));
    }

    #[test]
    fn overflow_bound_rejects_huge_fan_in() {
        let (net, data) = small();
        let mut q = export(&net, &data).unwrap();
        q.config.n_ch = 200_000;
        assert!(q.accumulator_bounds()[0].bound > i32::MAX as u64);
        assert!(q.validate().is_err());
    }
}
