use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmcse::metrics::{evaluate, extract_events, Stream};
use mmcse::{Annotations, Protocol};
use mmcse_bench::metric_fixture;

fn evaluate_videos(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    for videos in [16, 256] {
        let (preds, truth) = metric_fixture(videos, 10, 25);
        let truth: Vec<(&str, &Annotations)> = truth.iter().map(|(id, a)| (id.as_str(), a)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(videos), &videos, |b, _| {
            b.iter(|| evaluate(black_box(&preds), &truth, &Protocol::default()).unwrap())
        });
    }
    group.finish();
}

fn event_extraction(c: &mut Criterion) {
    let (preds, _) = metric_fixture(1, 10, 25);
    c.bench_function("extract_events/10x25", |b| b.iter(|| extract_events(black_box(&preds[0].audio), Stream::A)));
}

criterion_group!(benches, evaluate_videos, event_extraction);
criterion_main!(benches);
