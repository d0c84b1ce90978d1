use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedlearn_core::data::{gen_blobs, vertical_split, LabelKind};
use fedlearn_core::forest::{encrypted_stats, sample_features, ForestConfig, ForestTrainer};
use fedlearn_core::he::{max_scale_bits, KeyPair};
use fedlearn_core::kernel::{local_solve, sample_rff, KernelConfig, KernelTrainer, Normalization};
use fedlearn_core::party::loopback;
use fedlearn_core::wire::{decode_message, encode_message};
use fedlearn_core::{run_pipeline, Body, EngineOptions, Message, Party};
use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn codec(c: &mut Criterion) {
    let mut g = c.benchmark_group("codec");
    for n in [1_000usize, 10_000] {
        let v: Vec<f64> = (0..n).map(|i| i as f64 * 0.37).collect();
        let m = Message::request("master", "p1", 1, Body::new().with("v", v).with("selected", 2i64));
        let bytes = encode_message(&m).unwrap();
        g.bench_with_input(BenchmarkId::new("encode_floatvec", n), &m, |b, m| {
            b.iter(|| encode_message(black_box(m)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("decode_floatvec", n), &bytes, |b, bytes| {
            b.iter(|| decode_message(black_box(bytes)).unwrap())
        });
    }
    let cts: Vec<BigUint> = (0..1_000u32).map(|i| (BigUint::from(i + 1) << 2040u32) + 7u32).collect();
    let m = Message::request("master", "p1", 10, Body::new().with("y", cts));
    g.bench_function("encode_bigintvec_1000x2048", |b| b.iter(|| encode_message(black_box(&m)).unwrap()));
    g.finish();
}

fn paillier(c: &mut Criterion) {
    let mut g = c.benchmark_group("paillier");
    g.sample_size(20);
    for bits in [1024u32, 2048] {
        let kp = KeyPair::generate(bits, Some(1), false).unwrap();
        let pk = kp.public().clone();
        let scale = max_scale_bits(pk.n(), 1.0);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a = pk.encrypt_real(0.75, scale, &mut rng).unwrap();
        let b2 = pk.encrypt_real(-0.25, scale, &mut rng).unwrap();
        g.bench_function(BenchmarkId::new("encrypt", bits), |b| {
            b.iter(|| pk.encrypt_real(black_box(0.5), scale, &mut rng).unwrap())
        });
        g.bench_function(BenchmarkId::new("add", bits), |b| b.iter(|| pk.add(black_box(&a), black_box(&b2)).unwrap()));
        g.bench_function(BenchmarkId::new("decrypt", bits), |b| b.iter(|| kp.decrypt_real(black_box(&a)).unwrap()));
    }
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel");
    let n = 1_000;
    let x = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
    for features in [256usize, 1024] {
        let map = sample_rff(2, features, 1.0, 3, Normalization::Standard).unwrap();
        g.bench_with_input(BenchmarkId::new("rff_apply_n1000", features), &map, |b, map| {
            b.iter(|| map.apply(black_box(&x)).unwrap())
        });
        let phi = map.apply(&x).unwrap();
        let s = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        g.bench_with_input(BenchmarkId::new("local_solve_n1000", features), &phi, |b, phi| {
            b.iter(|| local_solve(black_box(phi), black_box(&s), 1e-3).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    let data = gen_blobs(400, 6, 4.0, 1, LabelKind::PlusMinusOne).unwrap();
    let tables = vertical_split(&data, 3, 1).unwrap();
    let names: Vec<String> = tables.iter().map(|t| t.name().to_owned()).collect();
    g.bench_function("kernel_p3_n400_d256_t30", |b| {
        b.iter(|| {
            let (transport, _) = loopback(tables.iter().map(|t| Party::new(t.clone(), None)).collect()).unwrap();
            let config = KernelConfig {
                t_max: 30,
                ..KernelConfig::default()
            };
            let mut trainer = KernelTrainer::new(names.clone(), config).unwrap();
            run_pipeline(&mut trainer, &transport, &EngineOptions::default()).unwrap()
        })
    });
    let data = gen_blobs(200, 6, 4.0, 1, LabelKind::ZeroOne).unwrap();
    let tables = vertical_split(&data, 3, 1).unwrap();
    g.bench_function("forest_p3_n200_1024bit_1tree", |b| {
        b.iter(|| {
            let (transport, _) = loopback(tables.iter().map(|t| Party::new(t.clone(), None)).collect()).unwrap();
            let config = ForestConfig {
                n_trees: 1,
                max_depth: 3,
                ..ForestConfig::default()
            };
            let mut trainer = ForestTrainer::new(names.clone(), 0, config).unwrap();
            run_pipeline(&mut trainer, &transport, &EngineOptions::default()).unwrap()
        })
    });
    let kp = KeyPair::generate(1024, Some(4), false).unwrap();
    let pk = kp.public();
    let scale = max_scale_bits(pk.n(), 1.0);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let labels: Vec<_> = data.labels().unwrap().iter().map(|&y| pk.encrypt_real(y, scale, &mut rng).unwrap()).collect();
    let rows: Vec<usize> = (0..tables[1].n_rows()).collect();
    let features = sample_features(tables[1].n_features(), 1);
    g.bench_function("encrypted_stats_n200_1024bit", |b| {
        b.iter(|| encrypted_stats(&tables[1], &rows, &labels, pk, &features, 32).unwrap())
    });
    g.finish();
}

criterion_group!(benches, codec, paillier, kernel, training);
criterion_main!(benches);
