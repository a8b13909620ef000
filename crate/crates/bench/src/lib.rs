//! Shared fixtures for the benchmarks.

use mibmi::io::{synth, ClassSignal, SynthSpec, TrialDataset};
use mibmi::quant::{export, QuantNetwork};
use mibmi::{ModelConfig, Network};

/// Synthetic trials shaped for `config`: one 8–26 Hz class signal per class
/// on the first two channels.
pub fn dataset_for(config: &ModelConfig, per_class: usize, seed: u64) -> TrialDataset {
    let spec = SynthSpec {
        n_ch: config.n_ch,
        n_samples: config.n_s,
        classes: (0..config.n_cl)
            .map(|c| ClassSignal {
                channels: vec![0, 1.min(config.n_ch - 1)],
                center_hz: 8.0 + 6.0 * c as f32,
                amplitude: 2.0,
            })
            .collect(),
        ..SynthSpec::default()
    };
    synth(&spec, per_class, seed).expect("valid synthetic spec")
}

/// An untrained network for `config`, exported to int8 with calibration on
/// synthetic data.
pub fn qnet_for(config: ModelConfig) -> (QuantNetwork, TrialDataset) {
    let data = dataset_for(&config, 4, 0);
    let net = Network::<f32>::build(config, 0).expect("valid config");
    (export(&net, &data).expect("export"), data)
}
