//! Benchmarks for everything on the 300 ms online budget: acquisition
//! filters, Welch spectra, grid projection, and the forward pass.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use smallnet::features::{chunk_tensor, welch_psd, ElectrodeGrid};
use smallnet::ica::CorrectionMatrix;
use smallnet::network::{forward, init, Architecture};
use smallnet::signal::{FilterSpec, StreamingFilter};
use std::hint::black_box;

fn synth_chunk() -> Array2<f64> {
    Array2::from_shape_fn((64, 600), |(c, t)| {
        let f = 6.0 + c as f64 * 0.3;
        (std::f64::consts::TAU * f * t as f64 / 500.0).sin() + 0.1 * ((c * t) % 17) as f64
    })
}

fn bench_welch(c: &mut Criterion) {
    let chunk = synth_chunk();
    let row: Vec<f64> = chunk.row(0).to_vec();
    c.bench_function("welch_psd_single_channel", |b| {
        b.iter(|| welch_psd(black_box(&row)).unwrap())
    });
}

fn bench_chunk_tensor(c: &mut Criterion) {
    let chunk = synth_chunk();
    let grid = ElectrodeGrid::default_table();
    let correction = CorrectionMatrix::identity();
    c.bench_function("chunk_tensor_64ch", |b| {
        b.iter(|| chunk_tensor(black_box(chunk.view()), &grid, &correction).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let chunk = synth_chunk();
    let grid = ElectrodeGrid::default_table();
    let correction = CorrectionMatrix::identity();
    let tensor = chunk_tensor(chunk.view(), &grid, &correction).unwrap();
    let arch = Architecture::small_net();
    let params = init(&arch, 7);
    c.bench_function("forward_smallnet", |b| {
        b.iter(|| forward(black_box(&params), black_box(&tensor)).unwrap())
    });
}

fn bench_full_decode(c: &mut Criterion) {
    let chunk = synth_chunk();
    let grid = ElectrodeGrid::default_table();
    let correction = CorrectionMatrix::identity();
    let arch = Architecture::small_net();
    let params = init(&arch, 7);
    c.bench_function("decode_one_chunk", |b| {
        b.iter(|| {
            let tensor = chunk_tensor(black_box(chunk.view()), &grid, &correction).unwrap();
            forward(&params, &tensor).unwrap()
        })
    });
}

fn bench_filters(c: &mut Criterion) {
    let spec = FilterSpec::notch(50.0, 30.0, 500).unwrap();
    let chunk = synth_chunk();
    c.bench_function("notch_filter_64ch_chunk", |b| {
        b.iter_batched(
            || (StreamingFilter::new(&spec, 64).unwrap(), chunk.clone()),
            |(mut filter, mut data)| {
                filter.process_in_place(&mut data.view_mut()).unwrap();
                data
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_welch,
    bench_chunk_tensor,
    bench_forward,
    bench_full_decode,
    bench_filters
);
criterion_main!(benches);
