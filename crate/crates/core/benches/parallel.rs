//! Rayon pool against a single-thread pool on the parallel hot paths.
//!
//! `cargo bench --no-default-features` builds the plain sequential loops;
//! both arms then measure the same code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPool;

use loadvine::clustering::{select_k, DensityGrid, KMeansConfig};
use loadvine::copula::{fit_dvine, pit, CandidateSet};
use loadvine::pipeline::{fit_household, fit_slot_densities, FitConfig};
use loadvine::simulate::assemble_day;
use loadvine::synthetic::TwoRegime;
use loadvine::validate::{features, permutation_test, PermutationConfig};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn benches(c: &mut Criterion) {
    let matrix = TwoRegime::default().matrix(156, 1).unwrap();
    let cfg = FitConfig { seed: 1, ..FitConfig::default() };
    let densities = fit_slot_densities(&matrix, &cfg).unwrap();
    let grid = DensityGrid::from_models(&densities, cfg.grid_points).unwrap();
    let model = fit_household(&matrix, 1, &cfg).unwrap();
    let slots: Vec<usize> = (12..28).collect();
    let columns: Vec<Vec<f64>> = slots.iter().map(|&s| matrix.slot_column(s).unwrap()).collect();
    let pseudo = pit(
        &columns.iter().map(Vec::as_slice).collect::<Vec<_>>(),
        &slots.iter().map(|&s| &densities[s]).collect::<Vec<_>>(),
    )
    .unwrap();
    let real: Vec<_> = matrix.rows().iter().map(|r| features(r).unwrap()).collect();
    let sim: Vec<_> = assemble_day(&model, real.len(), 2).unwrap().iter().map(|p| features(&p.values).unwrap()).collect();
    let perm = PermutationConfig { permutations: 2000, ..PermutationConfig::default() };

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("distance_matrix", name), |b| b.iter(|| pool.install(|| grid.distance_matrix())));
        g.bench_function(BenchmarkId::new("select_k", name), |b| {
            b.iter(|| pool.install(|| select_k(&grid, 2..=8, &KMeansConfig::default(), 3).unwrap()))
        });
        g.bench_function(BenchmarkId::new("fit_dvine_16", name), |b| {
            b.iter(|| pool.install(|| fit_dvine(&pseudo, &slots, None, &CandidateSet::default()).unwrap()))
        });
        g.bench_function(BenchmarkId::new("assemble_day_1000", name), |b| b.iter(|| pool.install(|| assemble_day(&model, 1000, 4).unwrap())));
        g.bench_function(BenchmarkId::new("permutation_test_2000", name), |b| {
            b.iter(|| pool.install(|| permutation_test(&real, &sim, &perm, 5).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
