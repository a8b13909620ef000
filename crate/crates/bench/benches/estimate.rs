use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mibmi::estimate::{discrepancy_report, estimate};
use mibmi::ModelConfig;

fn bench(c: &mut Criterion) {
    let bci = ModelConfig::bci_iv2a();
    c.bench_function("estimate/bci-iv2a", |b| b.iter(|| estimate(black_box(&bci)).unwrap()));
    let report = estimate(&bci).unwrap();
    c.bench_function("estimate/discrepancies", |b| b.iter(|| discrepancy_report(black_box(&report))));
}

criterion_group!(benches, bench);
criterion_main!(benches);
