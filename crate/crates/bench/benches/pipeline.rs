use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use difflight::scheduler::replay_error;
use difflight::{aggregate, compile, preset, ArchConfig, Optimizations, Platform};

fn pipeline(c: &mut Criterion) {
    let platform = Platform::default();
    let arch = ArchConfig::default();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for name in ["ldm-toy", "sdm-toy"] {
        let graph = preset(name).unwrap();
        group.bench_function(format!("compile/{name}"), |b| {
            b.iter(|| compile(black_box(&graph), &arch, Optimizations::ALL, &platform).unwrap())
        });
        let schedule = compile(&graph, &arch, Optimizations::ALL, &platform).unwrap();
        group.bench_function(format!("aggregate/{name}"), |b| {
            b.iter(|| aggregate(black_box(&schedule), &platform).unwrap())
        });
        group.bench_function(format!("replay/{name}"), |b| {
            b.iter(|| replay_error(black_box(&schedule), &graph, 7).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
