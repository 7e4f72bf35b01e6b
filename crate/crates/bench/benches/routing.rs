use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dmrf_bench::grid;
use dmrf_core::protocol::{choose_jump_target, jump_probabilities};
use dmrf_core::topology::disjoint_paths;
use dmrf_core::{build_fcs, CandidateEntry, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn candidates(n: usize, rng: &mut ChaCha8Rng) -> Vec<CandidateEntry> {
    (0..n)
        .map(|i| CandidateEntry { suc: rng.random::<f64>(), ..CandidateEntry::new(NodeId(i as u32)) })
        .collect()
}

fn jump_tables(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    c.bench_function("jump_probabilities/64", |b| {
        b.iter_batched(|| candidates(64, &mut rng), |mut es| jump_probabilities(black_box(&mut es)), BatchSize::SmallInput)
    });
    let mut es = candidates(64, &mut ChaCha8Rng::seed_from_u64(6));
    jump_probabilities(&mut es);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    c.bench_function("choose_jump_target/64", |b| b.iter(|| choose_jump_target(black_box(&es), &mut rng, None)));
}

fn topology(c: &mut Criterion) {
    let (topo, scenario) = grid(0.0);
    let mu = scenario.radio.mean_delay;
    c.bench_function("build_fcs/grid", |b| {
        b.iter(|| topo.node_ids().map(|n| build_fcs(&topo, n).unwrap().members.len()).sum::<usize>())
    });
    c.bench_function("disjoint_paths/grid/m4", |b| b.iter(|| disjoint_paths(black_box(&topo), 4, mu)));
}

criterion_group!(benches, jump_tables, topology);
criterion_main!(benches);
