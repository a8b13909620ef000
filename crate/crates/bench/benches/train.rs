use criterion::{criterion_group, criterion_main, Criterion};
use mibmi::train::{train, TrainHyper};
use mibmi::{ModelConfig, Network};
use mibmi_bench::dataset_for;

/// One training epoch on the default synthetic task geometry.
fn bench(c: &mut Criterion) {
    let config = ModelConfig::new(8, 256, 8, 16, 2).unwrap();
    let data = dataset_for(&config, 64, 0);
    let hyper = TrainHyper {
        epochs: 1,
        ..TrainHyper::default()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch 128 trials (8, 256, 8, 16, 2)", |b| {
        b.iter(|| train(Network::build(config, 0).unwrap(), &data, &hyper).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
