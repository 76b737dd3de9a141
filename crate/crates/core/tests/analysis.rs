mod common;

use common::*;
use gaussdiff::analysis::*;
use gaussdiff::rng;
use gaussdiff::sampler::{heun_sample, rk4_sample_at};
use gaussdiff::schedule::{karras_grid, vp_schedule};
use gaussdiff::solution::solve_state;
use gaussdiff::{PointCloud, ScoreModel, SolutionContext, Trajectory};
use nalgebra::DVector;
use proptest::prelude::*;

fn closed_form_on(ctx: &SolutionContext, levels: &[f64]) -> Trajectory {
    let mut t = Trajectory::new("closed-form");
    for &s in levels {
        t.push(s, s, 1.0, solve_state(ctx, s).unwrap(), None);
    }
    t
}

#[test]
fn heun_tracks_the_closed_form_per_level() {
    let mut r = rng::stream_rng(1, 0);
    let spec = random_spectrum(&mut r, 6, 2, 0.1, 1.0, 0.5);
    let x_t = spec.mean() + rng::normal_vector(&mut r, 6, 80.0);
    let ctx = SolutionContext::new(spec.clone(), x_t.clone(), 80.0).unwrap();
    let grid = karras_grid(0.002, 80.0, 7.0, 400).unwrap();
    let heun = heun_sample(&ScoreModel::Gaussian(spec), &grid, &x_t).unwrap();
    let exact = closed_form_on(&ctx, grid.levels());
    let dev = trajectory_deviation(&heun, &exact, DeviationMode::State).unwrap();
    assert_eq!(dev.len(), 400);
    assert!(dev.iter().all(|p| p.mse < 1e-8));
}

#[test]
fn delta_deviation_from_gaussian_grows_at_low_noise() {
    let mut r = rng::stream_rng(2, 0);
    let cloud = PointCloud::new(rng::normal_matrix(&mut r, 20, 3, 1.0)).unwrap();
    let spec = gaussdiff::spectrum::spectrum_from_cloud(&cloud, 3).unwrap();
    let x_t = rng::normal_vector(&mut r, 3, 80.0);
    let levels = karras_grid(0.01, 80.0, 7.0, 30).unwrap().levels().to_vec();
    let a = rk4_sample_at(&ScoreModel::delta(cloud), &levels, 50, &x_t).unwrap();
    let b = rk4_sample_at(&ScoreModel::Gaussian(spec), &levels, 50, &x_t).unwrap();
    let dev = trajectory_deviation(&a, &b, DeviationMode::State).unwrap();
    assert!(dev[0].mse == 0.0);
    assert!(dev.last().unwrap().mse > dev[5].mse);
}

#[test]
fn deviation_requires_matching_grids() {
    let x = DVector::zeros(2);
    let mut a = Trajectory::new("a");
    let mut b = Trajectory::new("b");
    a.push(1.0, 1.0, 1.0, x.clone(), None);
    b.push(2.0, 2.0, 1.0, x.clone(), None);
    assert!(trajectory_deviation(&a, &b, DeviationMode::State).is_err());
    b.push(1.0, 1.0, 1.0, x, None);
    assert!(trajectory_deviation(&a, &b, DeviationMode::State).is_err());
    assert!(trajectory_deviation(&a, &a, DeviationMode::Denoiser).is_err());
}

#[test]
fn ensemble_quartiles_bracket_the_median_run() {
    let mk = |v: f64| {
        let mut t = Trajectory::new("x");
        t.push(1.0, 1.0, 1.0, DVector::from_element(1, v), None);
        t
    };
    let zero = mk(0.0);
    let pairs: Vec<_> = (0..5).map(|i| (mk(i as f64), zero.clone())).collect();
    let e = ensemble_deviation(&pairs, DeviationMode::State).unwrap();
    assert_eq!(e.len(), 1);
    assert!((e[0].mean - 6.0).abs() < 1e-12);
    assert!((e[0].q25 - 1.0).abs() < 1e-12 && (e[0].q75 - 9.0).abs() < 1e-12);
}

#[test]
fn curves_have_a_single_peak_ordered_by_lambda() {
    let sched = vp_schedule(0.1, 20.0, 1.0).unwrap();
    let t = linspace(0.0, 1.0, 1001);
    let lambdas = [0.04, 1.0, 25.0];
    let rows = analytical_curves(&sched, &lambdas, &t).unwrap();
    let tc: Vec<f64> = lambdas.iter().map(|&l| critical_time(&rows, l).unwrap()).collect();
    assert!(tc[0] < tc[1] && tc[1] < tc[2]);
    assert!(rows.iter().all(|r| r.psi_bar > 0.0));
    for r in rows.iter().filter(|r| r.t == 1.0) {
        assert!((r.psi_bar - 1.0).abs() < 1e-12);
    }
}

#[test]
fn slice_contains_anchors_and_matches_full_score_in_plane() {
    let anchors = [
        DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 2.0, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 0.0, 3.0, 0.0]),
    ];
    let mut r = rng::stream_rng(4, 0);
    let cloud = PointCloud::new(rng::normal_matrix(&mut r, 10, 4, 1.0)).unwrap();
    let delta = ScoreModel::delta(cloud);
    let iso = ScoreModel::isotropic(DVector::zeros(4));
    let res = slice_field(&[&delta, &iso], &anchors, 0.5, 9, 4.0).unwrap();
    assert_eq!(res.fields.len(), 2);
    assert_eq!(res.fields[0].len(), 81);
    for (a, c) in anchors.iter().zip(res.anchor_coords) {
        assert!((res.plane.point(c.0, c.1) - a).norm() < 1e-12);
    }
    let cell = res.fields[0][40];
    assert!(cell.norm >= 0.0 && (cell.norm - cell.s_u.hypot(cell.s_v)).abs() < 1e-15);
    let bad = [anchors[0].clone(), anchors[0].clone() * 2.0, anchors[0].clone() * 3.0];
    assert!(slice_field(&[&iso], &bad, 0.5, 3, 1.0).is_err());
}

#[test]
fn bimodal_quadrature_approaches_monte_carlo_in_high_dimension() {
    let gap = |d: usize, s: f64| {
        let e = bimodal_error_curve(1.0, 0.2, d, &[s], 128).unwrap()[0];
        let mc = bimodal_error_monte_carlo(1.0, 0.2, d, s, 100_000, 7).unwrap();
        (e / mc - 1.0).abs()
    };
    for s in [0.3, 1.0] {
        let (g16, g256) = (gap(16, s), gap(256, s));
        assert!(g256 < 0.02, "sigma {s}: gap {g256}");
        assert!(g256 < g16);
    }
    assert!(bimodal_error_curve(1.0, 0.2, 16, &[1.0], 8).is_err());
}

#[test]
fn bimodal_error_vanishes_at_high_noise() {
    let g = [0.5, 2.0, 10.0, 100.0];
    let e = bimodal_error_curve(1.0, 0.2, 16, &g, 128).unwrap();
    assert!(e[3] < e[1]);
    assert!(e[3] < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unexplained_variance_is_scale_invariant(seed in 0u64..1000, c in 0.1f64..10.0) {
        let mut r = rng::stream_rng(seed, 0);
        let cloud = PointCloud::new(rng::normal_matrix(&mut r, 15, 3, 1.0)).unwrap();
        let delta = ScoreModel::delta(cloud.clone());
        let approx = ScoreModel::isotropic(DVector::zeros(3));
        let probes = draw_probes(&ProbeDist::NoisedCloud(&cloud), 3, 1.0, 40, &mut r).unwrap();
        let a = unexplained_variance_on(&delta, &approx, 1.0, &probes).unwrap();
        let sc = PointCloud::new(cloud.data() * c).unwrap();
        let b = unexplained_variance_on(
            &ScoreModel::delta(sc), &ScoreModel::isotropic(DVector::zeros(3)), c, &(probes * c),
        ).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-9 * (1.0 + a.mean));
    }

    #[test]
    fn quantiles_are_ordered(mut v in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
        v.sort_by(f64::total_cmp);
        let (q25, q50, q75) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75));
        prop_assert!(v[0] <= q25 && q25 <= q50 && q50 <= q75 && q75 <= v[v.len() - 1]);
    }
}
