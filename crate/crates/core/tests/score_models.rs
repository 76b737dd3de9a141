mod common;

use common::*;
use gaussdiff::rng;
use gaussdiff::score::{gaussian_score, mixture_weights};
use gaussdiff::spectrum::spectrum_from_cloud;
use gaussdiff::{CompactSpectrum, GaussianComponent, Mixture, PointCloud, ScoreField, ScoreModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

type Dense = Vec<(f64, DVector<f64>, DMatrix<f64>)>;

fn mixture(seed: u64, d: usize) -> (Mixture, Dense) {
    let mut r = rng::stream_rng(seed, 0);
    let comps: Vec<GaussianComponent> = [0.3, 0.7]
        .iter()
        .map(|&w| GaussianComponent {
            weight: w,
            spectrum: random_spectrum(&mut r, d, 2.min(d), 0.2, 3.0, 2.0),
        })
        .collect();
    let dense = comps
        .iter()
        .map(|c| (c.weight, c.spectrum.mean().clone(), c.spectrum.covariance()))
        .collect();
    (Mixture::new(comps).unwrap(), dense)
}

#[test]
fn low_rank_gaussian_matches_dense_inverse() {
    let mut r = rng::stream_rng(1, 0);
    let spec = random_spectrum(&mut r, 12, 4, 0.01, 10.0, 1.0);
    let cov = spec.covariance();
    for _ in 0..50 {
        let sigma = log_uniform(&mut r, 0.01, 50.0);
        let x = rng::normal_vector(&mut r, 12, 1.0 + sigma);
        let a = gaussian_score(&spec, &x, sigma).unwrap();
        let b = dense_gaussian_score(spec.mean(), &cov, &x, sigma);
        assert!(rel_err(&a, &b) < 1e-10);
    }
}

#[test]
fn mixture_matches_dense_oracle() {
    let (mix, dense) = mixture(2, 5);
    let model = ScoreModel::Mixture(mix);
    let mut r = rng::stream_rng(2, 1);
    for _ in 0..50 {
        let sigma = log_uniform(&mut r, 0.05, 30.0);
        let x = rng::normal_vector(&mut r, 5, 2.0 + sigma);
        let a = model.score(&x, sigma).unwrap();
        assert!(rel_err(&a, &dense_mixture_score(&dense, &x, sigma)) < 1e-9);
    }
}

#[test]
fn delta_weights_stay_finite_at_tiny_sigma() {
    let cloud = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 5.0]]).unwrap();
    let model = ScoreModel::delta(cloud.clone());
    let x = DVector::from_vec(vec![0.9, 0.1]);
    let w = mixture_weights(&model, &x, 1e-4).unwrap();
    assert!((w[1] - 1.0).abs() < 1e-12);
    let d = model.denoise(&x, 1e-4).unwrap();
    assert!((d - cloud.point(1)).norm() < 1e-12);
}

#[test]
fn batch_evaluation_matches_pointwise() {
    let (mix, _) = mixture(3, 4);
    let model = ScoreModel::Mixture(mix);
    let mut r = rng::stream_rng(3, 0);
    let xs = rng::normal_matrix(&mut r, 33, 4, 3.0);
    let serial = model.score_batch(&xs, 0.7, false).unwrap();
    let parallel = model.score_batch(&xs, 0.7, true).unwrap();
    assert_eq!(serial, parallel);
    for i in 0..33 {
        let s = model.score(&xs.row(i).transpose(), 0.7).unwrap();
        assert_eq!(serial.row(i).transpose(), s);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let model = ScoreModel::isotropic(DVector::zeros(3));
    assert!(model.score(&DVector::zeros(3), 0.0).is_err());
    assert!(model.score(&DVector::zeros(2), 1.0).is_err());
    assert!(mixture_weights(&model, &DVector::zeros(3), 1.0).is_err());
    let c = GaussianComponent {
        weight: 0.5,
        spectrum: CompactSpectrum::point_mass(DVector::zeros(3)),
    };
    assert!(Mixture::new(vec![c.clone()]).is_err());
    assert!(Mixture::normalized(vec![c]).is_ok());
}

#[test]
fn mixture_json_round_trip() {
    let (mix, _) = mixture(4, 3);
    let text = serde_json::to_string(&mix).unwrap();
    let back: Mixture = serde_json::from_str(&text).unwrap();
    assert_eq!(back.len(), mix.len());
    let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
    let a = gaussdiff::score::gmm_score(&mix, &x, 0.8).unwrap();
    let b = gaussdiff::score::gmm_score(&back, &x, 0.8).unwrap();
    assert!(rel_err(&a, &b) < 1e-12);
}

#[test]
fn mixture_moments_match_cloud_of_components() {
    let (mix, dense) = mixture(5, 4);
    let m = mix.moments().unwrap();
    let mean: DVector<f64> = dense.iter().map(|(w, mu, _)| mu * *w).sum();
    let mut cov = DMatrix::zeros(4, 4);
    for (w, mu, c) in &dense {
        let dm = mu - &mean;
        cov += (c + &dm * dm.transpose()) * *w;
    }
    assert!((m.mean() - &mean).norm() < 1e-12);
    assert!((m.covariance() - cov).abs().max() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn denoiser_duality_holds(seed in 0u64..1000, log_sigma in -2.0f64..2.0, scale in 0.1f64..5.0) {
        let sigma = 10f64.powf(log_sigma);
        let (mix, _) = mixture(seed, 3);
        let mut r = rng::stream_rng(seed, 9);
        let cloud = PointCloud::new(rng::normal_matrix(&mut r, 15, 3, 2.0)).unwrap();
        let spec = spectrum_from_cloud(&cloud, 2).unwrap();
        let x = rng::normal_vector(&mut r, 3, scale * (1.0 + sigma));
        for model in [
            ScoreModel::isotropic(spec.mean().clone()),
            ScoreModel::Gaussian(spec.clone()),
            ScoreModel::Mixture(mix.clone()),
            ScoreModel::delta(cloud.clone()),
        ] {
            let d = model.denoise(&x, sigma).unwrap();
            let s = model.score(&x, sigma).unwrap();
            prop_assert!(rel_err(&d, &(&x + s * (sigma * sigma))) < 1e-10);
        }
    }

    #[test]
    fn mixture_weights_form_a_distribution(seed in 0u64..1000, log_sigma in -3.0f64..2.0) {
        let sigma = 10f64.powf(log_sigma);
        let mut r = rng::stream_rng(seed, 0);
        let cloud = PointCloud::new(rng::normal_matrix(&mut r, 20, 4, 3.0)).unwrap();
        let x = rng::normal_vector(&mut r, 4, 5.0);
        let w = mixture_weights(&ScoreModel::delta(cloud), &x, sigma).unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_denoiser_lies_on_the_affine_span(seed in 0u64..1000, log_sigma in -2.0f64..2.0) {
        let sigma = 10f64.powf(log_sigma);
        let mut r = rng::stream_rng(seed, 0);
        let spec = random_spectrum(&mut r, 6, 2, 0.1, 5.0, 1.0);
        let x = rng::normal_vector(&mut r, 6, 3.0);
        let d = ScoreModel::Gaussian(spec.clone()).denoise(&x, sigma).unwrap();
        let (_, resid) = gaussdiff::spectrum::manifold_split(&spec, &d).unwrap();
        prop_assert!(resid.norm() < 1e-10 * (1.0 + d.norm()));
    }
}
