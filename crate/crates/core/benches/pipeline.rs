//! Single-thread versus full-pool timings of the main pipeline stages.
//!
//! Build with `--no-default-features` to time the sequential fallback;
//! both variants then run the same code path.

use std::hint::black_box;

use aerofuse::cnn::{self, VggWeights};
use aerofuse::filter::{self, FilterParams};
use aerofuse::fusion::{fuse, Channel, FusionConfig, FusionJob};
use aerofuse::image::{Acquisition, ChannelDescriptor, Modality, PlanarImage};
use aerofuse::{metrics, par};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const SIZE: usize = 256;

fn texture(seed: usize, planes: usize) -> PlanarImage {
    PlanarImage::from_fn(SIZE, SIZE, planes, |x, y, p| {
        let v = ((x * 7919 + y * 104_729 + p * 31 + seed * 17) % 1009) as f64 / 1008.0;
        0.5 * v + 0.25 * (1.0 + ((x as f64) / 9.0).sin() * ((y as f64) / 13.0).cos())
    })
    .unwrap()
}

fn job() -> FusionJob {
    FusionJob {
        basis: Channel {
            name: "basis".into(),
            image: texture(1, 3),
            descriptor: ChannelDescriptor::basis(Modality::Rgb, Acquisition::Single),
        },
        features: vec![Channel {
            name: "thermal".into(),
            image: texture(2, 1),
            descriptor: ChannelDescriptor::feature(Modality::Thermal, Acquisition::Integral),
        }],
        config: FusionConfig::default(),
    }
}

fn pools() -> Vec<(String, usize)> {
    let full = par::current_threads();
    let mut out = vec![("threads=1".to_string(), 1)];
    if full > 1 {
        out.push((format!("threads={full}"), full));
    }
    out
}

fn bench(c: &mut Criterion) {
    let weights = VggWeights::random(7);
    let gray = texture(3, 1);
    let rgb = texture(4, 3);
    let job = job();
    let fused = fuse(&job, Some(&weights)).unwrap();
    let sources = [("basis", &job.basis.image), ("thermal", &job.features[0].image)];

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for (label, threads) in pools() {
        group.bench_function(BenchmarkId::new("filter", &label), |b| {
            b.iter(|| par::with_threads(threads, || filter::high_detail(black_box(&gray), &FilterParams::default())))
        });
        group.bench_function(BenchmarkId::new("forward", &label), |b| {
            b.iter(|| par::with_threads(threads, || cnn::forward(black_box(&rgb), &weights)))
        });
        group.bench_function(BenchmarkId::new("fuse", &label), |b| {
            b.iter(|| par::with_threads(threads, || fuse(black_box(&job), Some(&weights))))
        });
        group.bench_function(BenchmarkId::new("metrics", &label), |b| {
            b.iter(|| par::with_threads(threads, || metrics::evaluate(black_box(&fused), &sources)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
