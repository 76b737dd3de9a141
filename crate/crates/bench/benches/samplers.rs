use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gaussdiff::rng;
use gaussdiff::sampler::{heun_sample, teleport_sample};
use gaussdiff::schedule::karras_grid;
use gaussdiff::solution::{solve_state, SolutionContext};
use gaussdiff::spectrum::spectrum_from_cloud;
use gaussdiff::{ScoreModel, SkipMode};
use gaussdiff_bench::clustered;
use std::hint::black_box;

fn sampling(c: &mut Criterion) {
    let cloud = clustered(128, 1000, 5);
    let spec = spectrum_from_cloud(&cloud, usize::MAX).unwrap();
    let model = ScoreModel::delta(cloud);
    let grid = karras_grid(0.002, 80.0, 7.0, 18).unwrap().with_zero();
    let mut r = rng::stream_rng(0, 3);
    let x = rng::normal_vector(&mut r, 128, 80.0);
    let mut g = c.benchmark_group("delta_d128_n1000");
    g.bench_function("heun_18", |b| b.iter(|| heun_sample(&model, &grid, black_box(&x)).unwrap()));
    for skip in [5usize, 7] {
        let s = grid.levels()[skip];
        g.bench_with_input(BenchmarkId::new("teleport", skip), &s, |b, &s| {
            b.iter(|| teleport_sample(&model, &spec, &grid, s, black_box(&x), SkipMode::GridAligned).unwrap())
        });
    }
    g.finish();
}

fn closed_form(c: &mut Criterion) {
    let cloud = clustered(512, 600, 3);
    let spec = spectrum_from_cloud(&cloud, usize::MAX).unwrap();
    let mut r = rng::stream_rng(0, 3);
    let x = rng::normal_vector(&mut r, 512, 80.0);
    let ctx = SolutionContext::new(spec, x, 80.0).unwrap();
    c.bench_function("closed_form_state_d512", |b| b.iter(|| solve_state(&ctx, black_box(1.3)).unwrap()));
}

criterion_group!(benches, sampling, closed_form);
criterion_main!(benches);
