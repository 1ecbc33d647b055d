use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2t_core::geometry::{build_default_layout, PixelGrid, TaxelLayout};
use t2t_core::interp::{phi, phi_inv, ArraySample, TactileImage};
use t2t_core::metrics::rmse;
use t2t_core::translate::*;
use t2t_core::{Error, FULLSCALE};

fn sensor(rows: usize, cols: usize) -> (TaxelLayout, PixelGrid) {
    let layout = build_default_layout();
    let tactile = PixelGrid::tactile(&layout).unwrap();
    (layout, PixelGrid::covering(&tactile, rows, cols).unwrap())
}

fn random_image(grid: PixelGrid, rng: &mut ChaCha8Rng) -> TactileImage {
    TactileImage::new(grid, (0..grid.len()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn random_array(n: usize, rng: &mut ChaCha8Rng) -> ArraySample {
    ArraySample::new((0..n).map(|_| rng.random_range(0.0..FULLSCALE)).collect()).unwrap()
}

/// Largest relative error between the analytic gradient and central
/// differences with step `1e-3`.
fn max_fd_error(model: &TranslatorModel, params: &[f64], x: &TactileImage, y: &ArraySample, recon: f64) -> f64 {
    let (_, grad) = model.loss_and_gradient(params, x, y, recon).unwrap();
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for i in 0..params.len() {
        p[i] = params[i] + h;
        let up = model.loss_at(&p, x, y, recon).unwrap();
        p[i] = params[i] - h;
        let down = model.loss_at(&p, x, y, recon).unwrap();
        p[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}

fn toy_array_model(seed: u64) -> TranslatorModel {
    let (layout, grid) = sensor(10, 12);
    let arch = Architecture {
        channels: vec![3],
        pool: [2, 3],
    };
    TranslatorModel::initialized(TranslatorKind::ArraySpace, arch, grid, 1, layout, seed).unwrap()
}

#[test]
fn l3_examples() {
    let y = ArraySample::new(vec![3.0, 0.0, 0.0]).unwrap();
    let zero = ArraySample::zeros(3);
    assert_eq!(l3_loss(&y, &zero).unwrap(), 9.0);
    assert_eq!(l3_loss(&y, &y).unwrap(), 0.0);
    assert!(matches!(
        l3_loss(&y, &ArraySample::zeros(4)).unwrap_err(),
        Error::LengthMismatch { .. }
    ));
}

#[test]
fn l3_agrees_with_rmse() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = random_array(20, &mut rng);
        let b = random_array(20, &mut rng);
        let l3 = l3_loss(&a, &b).unwrap();
        assert!(((l3 / 20.0).sqrt() - rmse(&a, &b).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn gradient_matches_finite_differences_on_toy_regressor() {
    for seed in 0..5 {
        let model = toy_array_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let params: Vec<f64> = model.params().iter().map(|&v| v as f64).collect();
        let x = random_image(*model.camera_grid(), &mut rng);
        let y = random_array(20, &mut rng);
        let err = max_fd_error(&model, &params, &x, &y, 0.0);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn gradient_matches_finite_differences_on_toy_generator() {
    let (layout, grid) = sensor(9, 12);
    let arch = Architecture {
        channels: vec![2, 3],
        pool: [0, 0],
    };
    for seed in 0..2 {
        let model =
            TranslatorModel::initialized(TranslatorKind::ImageSpace, arch.clone(), grid, 1, layout.clone(), seed)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let params: Vec<f64> = model.params().iter().map(|&v| v as f64).collect();
        let x = random_image(grid, &mut rng);
        let y = random_array(20, &mut rng);
        let err = max_fd_error(&model, &params, &x, &y, 0.7);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn backward_semantics() {
    let model = toy_array_model(1);
    let grid = *model.camera_grid();
    let x = TactileImage::zeros(grid);
    let y = ArraySample::zeros(20);
    let zero = TranslatorModel::zeros(
        TranslatorKind::ArraySpace,
        model.architecture().clone(),
        grid,
        1,
        model.layout().clone(),
    )
    .unwrap();
    assert!(backward(&zero, &x, &y).unwrap().iter().all(|&g| g == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_image(grid, &mut rng);
    let y = random_array(20, &mut rng);
    let mask: Vec<bool> = (0..model.param_count()).map(|i| i % 3 == 0).collect();
    let g = backward_masked(&model, &x, &y, Some(&mask)).unwrap();
    let full = backward(&model, &x, &y).unwrap();
    for i in 0..g.len() {
        if mask[i] {
            assert_eq!(g[i], 0.0);
        } else {
            assert_eq!(g[i], full[i]);
        }
    }

    let linear = TranslatorModel::zeros(
        TranslatorKind::LinearBaseline,
        Architecture::default_for(TranslatorKind::LinearBaseline),
        grid,
        1,
        model.layout().clone(),
    )
    .unwrap();
    assert!(matches!(
        backward(&linear, &x, &y).unwrap_err(),
        Error::NonDifferentiableKind(_)
    ));
}

#[test]
fn zero_model_predicts_zero_and_forward_is_pure() {
    let (layout, grid) = sensor(16, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_image(grid, &mut rng);
    for kind in TranslatorKind::ALL {
        let z = TranslatorModel::zeros(kind, Architecture::default_for(kind), grid, 1, layout.clone()).unwrap();
        assert!(z.predict(&x).unwrap().values().iter().all(|&v| v == 0.0), "{kind}");
    }
    let m = TranslatorModel::initialized(
        TranslatorKind::ImageSpace,
        Architecture::default_for(TranslatorKind::ImageSpace),
        grid,
        1,
        layout,
        9,
    )
    .unwrap();
    let a = m.forward(&x).unwrap();
    let b = m.forward(&x).unwrap();
    assert_eq!(a, b);
    match a {
        Prediction::Image(img) => assert_eq!((img.cols(), img.rows()), (396, 240)),
        Prediction::Array(_) => panic!("image model returned an array"),
    }
}

#[test]
fn image_prediction_is_phi_inv_of_forward() {
    let (layout, grid) = sensor(16, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = TranslatorModel::initialized(
        TranslatorKind::ImageSpace,
        Architecture::default_for(TranslatorKind::ImageSpace),
        grid,
        1,
        layout.clone(),
        4,
    )
    .unwrap();
    let x = random_image(grid, &mut rng);
    let Prediction::Image(img) = m.forward(&x).unwrap() else {
        panic!("expected image")
    };
    assert_eq!(m.predict(&x).unwrap(), phi_inv(&img, &layout).unwrap());

    // Outside the taxel hull the image is 0; inside it stays in sensor range.
    let hull = phi(
        &ArraySample::new(vec![1.0; layout.n_taxels()]).unwrap(),
        &layout,
        img.grid(),
    )
    .unwrap();
    for (v, h) in img.data().iter().zip(hull.data()) {
        if *h < 0.5 {
            assert_eq!(*v, 0.0);
        }
        assert!((0.0..=40000.0).contains(v));
    }
}

#[test]
fn forward_rejects_wrong_shape_and_accepts_full_resolution() {
    let (layout, grid) = sensor(16, 20);
    let m = TranslatorModel::zeros(
        TranslatorKind::ArraySpace,
        Architecture::default_for(TranslatorKind::ArraySpace),
        grid,
        2,
        layout,
    )
    .unwrap();
    assert_eq!(m.input_shape(), (8, 10));
    assert!(m.predict(&TactileImage::zeros(grid)).is_ok());
    assert!(m.predict(&TactileImage::zeros(grid.downsampled(2).unwrap())).is_ok());
    let bad = PixelGrid::centered(7, 7, [0.0, 0.0], 1.0).unwrap();
    assert!(matches!(
        m.predict(&TactileImage::zeros(bad)).unwrap_err(),
        Error::ShapeMismatch(_)
    ));
}

fn linear_data(
    grid: PixelGrid,
    n: usize,
    noise: f64,
    seed: u64,
) -> (Vec<(TactileImage, ArraySample)>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.len();
    let w: Vec<f64> = (0..20 * d)
        .map(|_| rng.random_range(-1.0..1.0) * 4000.0 / (d as f64).sqrt())
        .collect();
    let b: Vec<f64> = (0..20).map(|_| rng.random_range(15000.0..25000.0)).collect();
    let pairs = (0..n)
        .map(|_| {
            let x = random_image(grid, &mut rng);
            let y: Vec<f64> = (0..20)
                .map(|o| {
                    let clean = b[o]
                        + w[o * d..(o + 1) * d]
                            .iter()
                            .zip(x.data())
                            .map(|(a, c)| a * c)
                            .sum::<f64>();
                    clean + noise * (rng.random::<f64>() - 0.5) * 2.0
                })
                .collect();
            (x, ArraySample::new(y).unwrap())
        })
        .collect();
    (pairs, w, b)
}

#[test]
fn ridge_recovers_exact_linear_map() {
    let (layout, grid) = sensor(5, 6);
    let (pairs, w, b) = linear_data(grid, 80, 0.0, 1);
    let features: Vec<&[f64]> = pairs.iter().map(|(x, _)| x.data()).collect();
    let targets: Vec<&[f64]> = pairs.iter().map(|(_, y)| y.values()).collect();
    let (w_hat, b_hat) = fit_ridge(&features, &targets, 0.0).unwrap();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = w.iter().zip(&w_hat).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
    assert!(err / norm < 1e-6, "relative error {err}");
    for (a, c) in b.iter().zip(&b_hat) {
        assert!((a - c).abs() / a.abs() < 1e-6);
    }
    let template = TranslatorModel::zeros(
        TranslatorKind::LinearBaseline,
        Architecture::default_for(TranslatorKind::LinearBaseline),
        grid,
        1,
        layout,
    )
    .unwrap();
    let model = fit_linear_baseline(&template, &pairs, 0.0).unwrap();
    let again = fit_linear_baseline(&template, &pairs, 0.0).unwrap();
    assert_eq!(model, again);
    assert!(rmse(&pairs[0].1, &model.predict(&pairs[0].0).unwrap()).unwrap() < 1.0);
}

#[test]
fn ridge_limits_and_degenerate_inputs() {
    let (_, grid) = sensor(4, 5);
    let (pairs, _, _) = linear_data(grid, 40, 0.0, 2);
    let features: Vec<&[f64]> = pairs.iter().map(|(x, _)| x.data()).collect();
    let zeros = vec![0.0; 20];
    let zero_targets: Vec<&[f64]> = pairs.iter().map(|_| zeros.as_slice()).collect();
    let (w, b) = fit_ridge(&features, &zero_targets, 1.0).unwrap();
    assert!(w.iter().chain(&b).all(|&v| v == 0.0));

    let targets: Vec<&[f64]> = pairs.iter().map(|(_, y)| y.values()).collect();
    let (w, b) = fit_ridge(&features, &targets, 1e14).unwrap();
    assert!(w.iter().all(|v| v.abs() < 1e-4));
    for o in 0..20 {
        let mean = targets.iter().map(|t| t[o]).sum::<f64>() / targets.len() as f64;
        assert!((b[o] - mean).abs() < 1e-4, "{} vs {mean}", b[o]);
    }

    let dup: Vec<Vec<f64>> = features.iter().map(|f| [*f, *f].concat()).collect();
    let dup_refs: Vec<&[f64]> = dup.iter().map(|v| v.as_slice()).collect();
    assert!(matches!(
        fit_ridge(&dup_refs, &targets, 0.0).unwrap_err(),
        Error::SingularSystem(_)
    ));
    assert!(fit_ridge(&dup_refs, &targets, 1e-3).is_ok());
}

#[test]
fn dual_and_primal_ridge_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, d) = (30, 12);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let wide: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| [x.as_slice(), x.as_slice(), x.as_slice()].concat())
        .collect();
    let f: Vec<&[f64]> = wide.iter().map(|v| v.as_slice()).collect();
    let t: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
    // 36 features > 30 samples takes the dual path; recompute the primal
    // solution on the same data for comparison.
    let (w_dual, b_dual) = fit_ridge(&f, &t, 0.5).unwrap();
    let f_extra: Vec<&[f64]> = f.iter().chain(f.iter()).copied().collect();
    let t_extra: Vec<&[f64]> = t.iter().chain(t.iter()).copied().collect();
    // Duplicating every sample doubles the Gram matrix; doubling the ridge
    // keeps the same minimizer while n ≥ d selects the primal path.
    let (w_primal, b_primal) = fit_ridge(&f_extra, &t_extra, 1.0).unwrap();
    for (a, b) in w_dual.iter().zip(&w_primal).chain(b_dual.iter().zip(&b_primal)) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

fn small_cfg(kind: TranslatorKind, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        max_epochs: 4,
        patience: 2,
        seed,
        downsample: 1,
        architecture: Some(match kind {
            TranslatorKind::ImageSpace => Architecture {
                channels: vec![3, 4],
                pool: [0, 0],
            },
            _ => Architecture {
                channels: vec![4],
                pool: [2, 3],
            },
        }),
        ..TrainConfig::for_kind(kind)
    }
}

#[test]
fn training_is_deterministic_and_bookkeeping_holds() {
    let (layout, grid) = sensor(10, 12);
    let (pairs, _, _) = linear_data(grid, 48, 500.0, 3);
    let (train_set, val_set) = pairs.split_at(36);
    for kind in [TranslatorKind::ArraySpace, TranslatorKind::ImageSpace] {
        let cfg = small_cfg(kind, 7);
        let (a, log_a) = train_logged(kind, &cfg, &layout, &grid, train_set, val_set).unwrap();
        let (b, log_b) = train_logged(kind, &cfg, &layout, &grid, train_set, val_set).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        assert_eq!(encode_model(&a), encode_model(&b));
        let min_val = log_a.iter().map(|r| r.val_l3).fold(f64::INFINITY, f64::min);
        assert_eq!(a.meta.best_val_l3, min_val);
        assert_eq!(a.meta.epochs_run as usize, log_a.len());
        assert_eq!(a.meta.config_hash, cfg.config_hash());
        // Sanity envelope on the training inputs.
        let train_l3 = train_set
            .iter()
            .map(|(x, y)| l3_loss(y, &a.predict(x).unwrap()).unwrap())
            .sum::<f64>()
            / train_set.len() as f64;
        assert!(train_l3 < 10.0 * a.meta.best_val_l3);
        assert!(a.params().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn early_stopping_returns_first_epoch_when_validation_worsens() {
    let (layout, grid) = sensor(10, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xs: Vec<TactileImage> = (0..16).map(|_| random_image(grid, &mut rng)).collect();
    let full = ArraySample::new(vec![FULLSCALE; 20]).unwrap();
    let train_set: Vec<_> = xs.iter().map(|x| (x.clone(), full.clone())).collect();
    let val_set: Vec<_> = xs.iter().map(|x| (x.clone(), ArraySample::zeros(20))).collect();
    let mut cfg = small_cfg(TranslatorKind::ArraySpace, 1);
    cfg.patience = 1;
    cfg.max_epochs = 10;
    cfg.learning_rate = 1e-2;
    let (model, log) = train_logged(TranslatorKind::ArraySpace, &cfg, &layout, &grid, &train_set, &val_set).unwrap();
    assert!(log[1].val_l3 > log[0].val_l3, "{log:?}");
    assert_eq!(model.meta.best_epoch, 1);
    assert_eq!(model.meta.epochs_run, 2);
    cfg.max_epochs = 1;
    let one = train(TranslatorKind::ArraySpace, &cfg, &layout, &grid, &train_set, &val_set).unwrap();
    assert_eq!(one.params(), model.params());
}

#[test]
fn trained_regressor_tracks_linear_oracle() {
    let (layout, grid) = sensor(6, 8);
    let (pairs, _, _) = linear_data(grid, 400, 3000.0, 5);
    let (train_set, val_set) = pairs.split_at(300);
    let linear_cfg = TrainConfig {
        ridge: Some(1e-6),
        downsample: 1,
        ..TrainConfig::for_kind(TranslatorKind::LinearBaseline)
    };
    let lin = train(
        TranslatorKind::LinearBaseline,
        &linear_cfg,
        &layout,
        &grid,
        train_set,
        val_set,
    )
    .unwrap();
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        max_epochs: 60,
        patience: 8,
        seed: 2,
        downsample: 1,
        architecture: Some(Architecture {
            channels: vec![8],
            pool: [3, 4],
        }),
        ..TrainConfig::for_kind(TranslatorKind::ArraySpace)
    };
    let net = train(TranslatorKind::ArraySpace, &cfg, &layout, &grid, train_set, val_set).unwrap();
    let val_rmse = |m: &TranslatorModel| {
        val_set
            .iter()
            .map(|(x, y)| rmse(y, &m.predict(x).unwrap()).unwrap())
            .sum::<f64>()
            / val_set.len() as f64
    };
    let (r_lin, r_net) = (val_rmse(&lin), val_rmse(&net));
    assert!(r_net < 2.0 * r_lin, "network {r_net:.1} vs linear {r_lin:.1}");
}

#[test]
fn model_file_round_trip_and_corruption() {
    let (layout, grid) = sensor(10, 12);
    for kind in TranslatorKind::ALL {
        let arch = small_cfg(kind, 0).architecture_for(kind);
        let arch = if kind == TranslatorKind::LinearBaseline {
            Architecture::default_for(kind)
        } else {
            arch
        };
        let mut m = TranslatorModel::initialized(kind, arch, grid, 2, layout.clone(), 3).unwrap();
        m.meta = TrainingMeta {
            epochs_run: 7,
            best_epoch: 4,
            best_val_l3: 1234.5,
            seed: 99,
            config_hash: 0xdead_beef,
        };
        let bytes = encode_model(&m);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_model(&back), bytes);

        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 9]).unwrap_err(),
            Error::Format { .. }
        ));
        let mut flipped = bytes.clone();
        let last = flipped.len() - 20;
        flipped[last] ^= 1;
        assert!(matches!(decode_model(&flipped).unwrap_err(), Error::Format { .. }));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(
            decode_model(&magic).unwrap_err(),
            Error::Format { offset: 0, .. }
        ));
    }
}

#[test]
fn parameter_count_must_match_descriptor() {
    let (layout, grid) = sensor(10, 12);
    let kind = TranslatorKind::ArraySpace;
    let arch = small_cfg(kind, 0).architecture_for(kind);
    let ok = TranslatorModel::zeros(kind, arch.clone(), grid, 1, layout.clone()).unwrap();
    let n = ok.param_count();
    let err = TranslatorModel::new(
        kind,
        arch.clone(),
        grid,
        1,
        layout.clone(),
        vec![0.0; n + 1],
        Default::default(),
    );
    assert!(matches!(err.unwrap_err(), Error::LengthMismatch { .. }));
    let mut bad = vec![0.0; n];
    bad[3] = f32::NAN;
    assert!(TranslatorModel::new(kind, arch, grid, 1, layout, bad, Default::default()).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let base = TrainConfig::for_kind(TranslatorKind::ArraySpace);
    for cfg in [
        TrainConfig {
            learning_rate: 0.0,
            ..base.clone()
        },
        TrainConfig {
            batch_size: 0,
            ..base.clone()
        },
        TrainConfig {
            patience: 0,
            ..base.clone()
        },
    ] {
        assert!(matches!(cfg.validate().unwrap_err(), Error::InvalidConfig(_)));
    }
    assert!(base.validate().is_ok());
}
