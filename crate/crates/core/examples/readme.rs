//! The README library example.

use mibmi::engine::Engine;
use mibmi::estimate::{estimate, Precision};
use mibmi::io::{synth, SynthSpec};
use mibmi::quant::export;
use mibmi::train::{train, QatSchedule, TrainHyper};
use mibmi::{ModelConfig, Network};

fn main() -> mibmi::Result<()> {
    let data = synth(&SynthSpec::default(), 200, 1)?;
    let config = ModelConfig::new(8, 256, 8, 16, 2)?;
    let hyper = TrainHyper::default().with_qat(QatSchedule::new(20, 25, 45)?);
    let ckpt = train(Network::build(config, 1)?, &data, &hyper)?.checkpoint;
    let engine = Engine::load(export(&ckpt.network, &data)?)?;
    let (logits, trace) = engine.run_f32(data.trial(0))?;
    assert_eq!(trace.total_memory_bytes(), estimate(&config)?.memory_bytes(Precision::Int8));
    println!("logits {logits:?}, label {}", data.label(0));
    Ok(())
}
