use std::sync::OnceLock;

use latentvar::autoencoders::{
    pca_oracle, split_dataset, train_ae, train_linear_ae, train_vae, Autoencoder, DatasetSplit, TrainConfig, TrainReport, VaeModel,
};
use latentvar::corrdata::{generate_synthetic_market, rolling_correlations, SyntheticMarketConfig};
use latentvar::latent::{build_grid, eigen_features, generate_synthetic_panel, latent_eigen_correlation, LatentGrid, LatentSeries};
use latentvar::linalg::repair_to_correlation;
use latentvar::neural::Activation;
use latentvar::stats::pearson;
use latentvar::{CorrelationMatrix, MatrixPanel};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

fn regime_panel(m: usize, months: usize, window: usize, stride: usize) -> MatrixPanel {
    let cfg = SyntheticMarketConfig::regime_switching(m, months);
    let returns = generate_synthetic_market(&cfg, 1).unwrap();
    rolling_correlations(&returns, window, stride).unwrap()
}

fn panel10() -> &'static MatrixPanel {
    static P: OnceLock<MatrixPanel> = OnceLock::new();
    P.get_or_init(|| regime_panel(10, 305, 100, 1))
}

fn trained_vae() -> &'static (VaeModel, TrainReport, DatasetSplit) {
    static V: OnceLock<(VaeModel, TrainReport, DatasetSplit)> = OnceLock::new();
    V.get_or_init(|| {
        let split = split_dataset(panel10(), 0.3, 0).unwrap();
        let (model, report) = train_vae(&split, &TrainConfig::default()).unwrap();
        (model, report, split)
    })
}

fn mean_baseline(split: &DatasetSplit) -> f64 {
    let d = split.train[0].len();
    let mean = split.train.iter().fold(DVector::zeros(d), |a, v| a + v) / split.train.len() as f64;
    split.validation.iter().map(|v| (v - &mean).norm_squared() / d as f64).sum::<f64>() / split.validation.len() as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn linear_cfg(latent_dim: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 8000,
        learning_rate: 1e-3,
        batch_size: 4,
        seed,
        hidden: vec![],
        hidden_activation: Activation::Linear,
        latent_dim,
        ..TrainConfig::default()
    }
}

#[test]
fn vae_beats_mean_matrix_with_nonnegative_kl() {
    let (_, report, split) = trained_vae();
    let last = report.final_epoch();
    assert_eq!(report.epochs.len(), 80);
    assert!(last.validation_mse.unwrap() < mean_baseline(split));
    assert!(report.epochs.iter().all(|e| e.train_kl >= 0.0 && e.validation_kl.unwrap() >= 0.0));
    assert!(report.epochs[0].train_mse > last.train_mse);
}

#[test]
fn training_is_deterministic() {
    let split = split_dataset(&regime_panel(6, 140, 60, 2), 0.3, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        hidden: vec![16, 8],
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, ra) = train_vae(&split, &cfg).unwrap();
    let (b, rb) = train_vae(&split, &cfg).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.encoder.params(), b.encoder.params());
    assert_eq!(a.decoder.params(), b.decoder.params());
}

#[test]
fn memorizes_a_repeated_matrix() {
    let s = regime_panel(5, 120, 100, 5).matrices[0].clone();
    let x = latentvar::autoencoders::flatten(s.entries());
    let split = DatasetSplit {
        train_indices: (0..8).collect(),
        validation_indices: vec![8, 9],
        train: vec![x.clone(); 8],
        validation: vec![x.clone(); 2],
    };
    let cfg = TrainConfig {
        epochs: 3000,
        learning_rate: 1e-3,
        batch_size: 2,
        hidden: vec![32, 16],
        ..TrainConfig::default()
    };
    let (vae, report) = train_vae(&split, &cfg).unwrap();
    // sampling noise keeps the VAE slightly above the deterministic model
    assert!(report.final_epoch().validation_mse.unwrap() < 1e-4, "{:?}", report.final_epoch());
    let decoded = vae.decode(vae.encode(&s).unwrap().mu).unwrap();
    assert!((decoded - s.entries()).abs().max() < 5e-2);
    let (_, report) = train_ae(&split, &cfg).unwrap();
    assert!(report.final_epoch().validation_mse.unwrap() < 1e-6, "{:?}", report.final_epoch());
}

#[test]
fn deterministic_ae_beats_vae_on_median() {
    let panel = panel10();
    let runs: Vec<(f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let split = split_dataset(panel, 0.3, seed).unwrap();
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let vae = train_vae(&split, &cfg).unwrap().1.final_epoch().validation_mse.unwrap();
            let report = train_ae(&split, &cfg).unwrap().1;
            let first = report.epochs[0].train_mse;
            assert!(report.final_epoch().train_mse < first);
            (report.final_epoch().validation_mse.unwrap(), vae)
        })
        .collect();
    let ae = median(runs.iter().map(|r| r.0).collect());
    let vae = median(runs.iter().map(|r| r.1).collect());
    assert!(ae <= vae, "AE {ae} vs VAE {vae}");
}

#[test]
fn linear_autoencoder_matches_pca() {
    let panel = regime_panel(10, 155, 60, 5);
    assert_eq!(panel.len(), 20);
    let split = DatasetSplit::all_train(panel.flattened());
    let p2 = pca_oracle(&split.train, 2).unwrap();
    let (_, r2) = train_linear_ae(&split, &linear_cfg(2, 1)).unwrap();
    let (_, r3) = train_linear_ae(&split, &linear_cfg(3, 1)).unwrap();
    let m2 = r2.final_epoch().train_mse;
    assert!((m2 - p2).abs() <= 0.05 * p2, "{m2} vs {p2}");
    assert!(r3.final_epoch().train_mse <= m2);
    // no linear map beats the PCA subspace at any epoch
    assert!(r2.epochs.iter().all(|e| e.train_mse >= p2 - 1e-9));
    let p3 = pca_oracle(&split.train, 3).unwrap();
    assert!(r3.epochs.iter().all(|e| e.train_mse >= p3 - 1e-9));
}

#[test]
fn linear_validation_error_shrinks_with_dimension() {
    let split = split_dataset(panel10(), 0.3, 2).unwrap();
    let (_, r2) = train_linear_ae(&split, &linear_cfg(2, 2)).unwrap();
    let (_, r3) = train_linear_ae(&split, &linear_cfg(3, 2)).unwrap();
    assert!(r3.final_epoch().validation_mse.unwrap() <= r2.final_epoch().validation_mse.unwrap());
}

#[test]
fn rank_one_data_is_reconstructed() {
    let d = 16;
    let base = DVector::from_fn(d, |i, _| (i as f64 * 0.3).cos());
    let dir = DVector::from_fn(d, |i, _| (i as f64 * 0.7).sin() * 0.2);
    let data: Vec<DVector<f64>> = (0..24).map(|t| &base + &dir * ((t as f64) * 0.4).sin()).collect();
    let split = DatasetSplit::all_train(data.clone());
    let cfg = TrainConfig {
        epochs: 20_000,
        learning_rate: 2e-4,
        ..linear_cfg(2, 3)
    };
    let (_, report) = train_linear_ae(&split, &cfg).unwrap();
    let variance = pca_oracle(&data, 0).unwrap();
    assert!(report.final_epoch().train_mse < 1e-6 * variance);
}

#[test]
fn latent_means_track_top_eigenvalue() {
    let (vae, _, _) = trained_vae();
    let panel = panel10();
    let enc = vae.encode_panel(panel).unwrap();
    assert_eq!(enc.len(), panel.len());
    let series = LatentSeries::from_encodings(panel.dates.clone(), &enc).unwrap();
    let feats = eigen_features(panel).unwrap();
    let corr = latent_eigen_correlation(&series, &feats).unwrap();
    assert!(corr.max_abs_lambda1 > 0.5, "{corr:?}");

    let mut shuffled = feats.lambda1.clone();
    shuffled.shuffle(&mut latentvar::rng::substream(5, "shuffle-lambda"));
    let destroyed = pearson(&series.mu1, &shuffled)
        .unwrap()
        .abs()
        .max(pearson(&series.mu2, &shuffled).unwrap().abs());
    assert!(destroyed < 0.2, "{destroyed}");
}

#[test]
fn encoding_is_repeatable() {
    let (vae, _, _) = trained_vae();
    let s = &panel10().matrices[17];
    assert_eq!(vae.encode(s).unwrap(), vae.encode(s).unwrap());
    assert!(vae.encode(s).unwrap().sigma.iter().all(|&v| v > 0.0));
}

#[test]
fn origin_and_grid_decode_to_valid_matrices() {
    let (vae, _, _) = trained_vae();
    let origin = repair_to_correlation(&vae.decode([0.0, 0.0]).unwrap()).unwrap();
    origin.validate().unwrap();

    let panel = panel10();
    let points = LatentSeries::from_encodings(panel.dates.clone(), &vae.encode_panel(panel).unwrap())
        .unwrap()
        .points();
    let grid = build_grid(&points, 132, 0.2, 7).unwrap();
    assert_eq!(grid.len(), 132);
    let synthetic = generate_synthetic_panel(vae, &grid, panel.labels()).unwrap();
    assert_eq!(synthetic.len(), 132);
    assert!(synthetic.matrices.iter().all(|m| m.validate().is_ok()));

    let single = LatentGrid {
        points: vec![[0.0, 0.0]],
        lower: [-1.0, -1.0],
        upper: [1.0, 1.0],
    };
    assert_eq!(generate_synthetic_panel(vae, &single, panel.labels()).unwrap().len(), 1);
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain, counter-clockwise.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

#[test]
fn grid_hull_contains_historical_points() {
    let (vae, _, _) = trained_vae();
    let panel = panel10();
    let points = LatentSeries::from_encodings(panel.dates.clone(), &vae.encode_panel(panel).unwrap())
        .unwrap()
        .points();
    for seed in 0..10 {
        let grid = build_grid(&points, 132, 0.2, seed).unwrap();
        let hull = convex_hull(grid.points.clone());
        for p in &points {
            for k in 0..hull.len() {
                assert!(cross(hull[k], hull[(k + 1) % hull.len()], *p) >= 0.0);
            }
        }
    }
}

#[test]
fn decoded_encodings_reproduce_training_error() {
    let (vae, report, split) = trained_vae();
    let x = DMatrix::from_fn(split.train[0].len(), split.train.len(), |i, j| split.train[j][i]);
    let z = vae.latent_means(&x).unwrap();
    let grid = LatentGrid {
        points: (0..z.ncols()).map(|j| [z[(0, j)], z[(1, j)]]).collect(),
        lower: [f64::NEG_INFINITY; 2],
        upper: [f64::INFINITY; 2],
    };
    let decoded = generate_synthetic_panel(vae, &grid, panel10().labels()).unwrap();
    let mse: f64 = decoded
        .matrices
        .iter()
        .zip(&split.train)
        .map(|(m, x)| (latentvar::autoencoders::flatten(m.entries()) - x).norm_squared() / x.len() as f64)
        .sum::<f64>()
        / split.train.len() as f64;
    // repair moves decoded matrices towards valid ones, so it cannot be much worse
    let reported = report.final_epoch().train_mse;
    assert!(mse <= 1.5 * reported, "{mse} vs {reported}");
}

#[test]
fn repaired_matrix_type_is_shared() {
    let m: CorrelationMatrix = repair_to_correlation(&DMatrix::identity(3, 3)).unwrap();
    assert_eq!(m.dim(), 3);
}
