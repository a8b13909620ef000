use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mibmi::engine::Engine;
use mibmi::ModelConfig;
use mibmi_bench::qnet_for;

/// One int8 trial through the engine for each published configuration.
fn bench(c: &mut Criterion) {
    let configs = [
        ("bci-iv2a", ModelConfig::bci_iv2a()),
        ("physionet-mmmi", ModelConfig::physionet_mmmi()),
        ("physionet 10ch 2cl", ModelConfig::physionet_mmmi().with_channels(10).with_classes(2)),
    ];
    for (name, config) in configs {
        let (qnet, data) = qnet_for(config);
        let engine = Engine::load(qnet).unwrap();
        let trial = data.trial(0);
        c.bench_function(&format!("engine/{name}"), |b| b.iter(|| engine.run_f32(black_box(trial)).unwrap()));
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
