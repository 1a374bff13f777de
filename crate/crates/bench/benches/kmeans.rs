//! Benchmarks for the clustering heuristic, the exact search, the block
//! lower bound, and the model export.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use pbskit_bench::blob_points;
use pbskit_core::{
    det_partition, exact_kmeans, export_miqcp, kmeans_lower_bound, lloyd, ExportOpts,
    KMeansProblem, Limits, MiqcpFormat,
};

fn heuristic(c: &mut Criterion) {
    let problem = KMeansProblem::new(blob_points(100), 3).unwrap();
    c.bench_function("lloyd/100x2_k3_10reps", |b| {
        b.iter(|| lloyd(black_box(&problem), 10, 1).sse)
    });
}

fn exact(c: &mut Criterion) {
    let problem = KMeansProblem::new(blob_points(12), 3).unwrap();
    let mut group = c.benchmark_group("exact");
    group.sample_size(20);
    group.bench_function("exact_kmeans/12x2_k3", |b| {
        b.iter(|| exact_kmeans(black_box(&problem), &Limits::default()).unwrap().ub)
    });
    group.finish();
}

fn block_bound(c: &mut Criterion) {
    let problem = KMeansProblem::new(blob_points(60), 3).unwrap();
    let warm = lloyd(&problem, 10, 1);
    let partition = det_partition(&warm, 5);
    let mut group = c.benchmark_group("bounds");
    group.sample_size(10);
    group.bench_function("kmeans_lower_bound/60x2_blocks_of_12", |b| {
        b.iter(|| {
            kmeans_lower_bound(&problem, &partition, &Limits::default())
                .unwrap()
                .lb
        })
    });
    group.finish();
}

fn export(c: &mut Criterion) {
    let problem = KMeansProblem::new(blob_points(40), 3).unwrap();
    c.bench_function("export_miqcp/hull_40x2", |b| {
        b.iter(|| {
            export_miqcp(black_box(&problem), MiqcpFormat::Hull, &ExportOpts::default())
                .text
                .len()
        })
    });
}

criterion_group!(benches, heuristic, exact, block_bound, export);
criterion_main!(benches);
