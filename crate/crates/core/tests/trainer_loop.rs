use dcseg::crf_proposal::{crf_unaries, proposal_energy};
use dcseg::data::{Dataset, DatasetSpec, GeneratorConfig, Sample, ShapeFamily};
use dcseg::grid::{GridImage, GridShape, Mask};
use dcseg::maxflow::energy_value;
use dcseg::network::{admm_loss_and_grad, AdmmItem, NetArch, NetParams, Optimizer};
use dcseg::seg::WeakAnnotation;
use dcseg::size_proposal::make_bounds;
use dcseg::trainer::*;
use rand::seq::index;

fn tiny_dataset(family: ShapeFamily, seed: u64) -> Dataset {
    let spec = DatasetSpec {
        generator: GeneratorConfig {
            family,
            height: 16,
            width: 16,
            ..GeneratorConfig::default()
        },
        n_train: 6,
        n_val: 2,
        seed,
        jitter: 0,
    };
    Dataset::generate(&spec).unwrap().0
}

fn tiny_config(method: Method) -> TrainConfig {
    TrainConfig {
        method,
        epochs: 3,
        iters_per_epoch: 3,
        batch_size: 2,
        lr: 1e-2,
        lr_decay: 0.5,
        decay_period: 2,
        crf_lambda: 1.0,
        arch: NetArch::new(vec![1, 4, 1]).unwrap(),
        seed: 5,
        record_timing: false,
        ..TrainConfig::default()
    }
}

#[test]
fn initial_state() {
    let ds = tiny_dataset(ShapeFamily::Disk, 1);
    let cfg = tiny_config(Method::CrfPlusSize);
    let a = initialize(&ds.train, &cfg).unwrap();
    let b = initialize(&ds.train, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    for v in a.u_hat.iter().chain(&a.u_tilde) {
        assert!(v.iter().all(|&u| u == 0.0));
    }
    for y in a.y_hat.iter().chain(&a.y_tilde) {
        assert!(y.iter().all(|&y| y == 0.5));
    }
    assert_eq!(a.lr, cfg.lr);
}

#[test]
fn multiplier_update_examples() {
    let ds = tiny_dataset(ShapeFamily::Disk, 1);
    let cfg = tiny_config(Method::CrfOnly);
    let mut state = initialize(&ds.train, &cfg).unwrap();
    let n = ds.train[0].image.len();
    for (i, y) in state.y_hat.iter_mut().enumerate() {
        y.0 = vec![if i == 0 { 1.0 } else { 0.0 }; n];
    }
    let outputs: Vec<Vec<f64>> = (0..ds.train.len())
        .map(|i| vec![if i == 0 { 0.8 } else { 0.0 }; n])
        .collect();
    update_multipliers(&mut state, &cfg, &outputs);
    assert!(state.u_hat[0].iter().all(|&u| (u + 0.2).abs() < 1e-15));
    // zero residual leaves the multiplier untouched
    assert!(state.u_hat[1].iter().all(|&u| u == 0.0));
    // crf_only never touches the size multiplier
    assert!(state.u_tilde[0].iter().all(|&u| u == 0.0));

    // constant residual accumulates linearly: -0.2, -0.4, -0.6
    update_multipliers(&mut state, &cfg, &outputs);
    update_multipliers(&mut state, &cfg, &outputs);
    let expect = -0.2 + -0.2 + -0.2;
    assert!(state.u_hat[0].iter().all(|&u| (u - expect).abs() < 1e-12));
}

/// Drives the loop by hand and checks, after every proposal update, the
/// solver postconditions and the multiplier recursion against a copy.
#[test]
fn loop_invariants_hold_every_epoch() {
    for (family, seed) in [(ShapeFamily::Disk, 3), (ShapeFamily::Crescent, 4)] {
        let ds = tiny_dataset(family, seed);
        let cfg = tiny_config(Method::CrfPlusSize);
        let mut state = initialize(&ds.train, &cfg).unwrap();
        let ctx = TrainContext::new(&ds.train, &cfg).unwrap();
        let mut u_hat_copy: Vec<Vec<f64>> = state.u_hat.iter().map(|u| u.0.clone()).collect();
        let mut u_tilde_copy: Vec<Vec<f64>> = state.u_tilde.iter().map(|u| u.0.clone()).collect();
        for epoch in 0..4 {
            sgd_phase(&mut state, &ctx, &cfg).unwrap();
            let outputs = predict_all(&state.params, &ds.train).unwrap();
            let u_before = state.u_hat.clone();
            update_proposals(&mut state, &ctx, &cfg, &outputs).unwrap();

            let crf = cfg.crf_config(state.mu_hat);
            for (i, s) in outputs.iter().enumerate() {
                let y = &state.y_tilde[i];
                assert!(y.is_binary());
                assert!(ctx.bounds[i].contains(y.count_ones()), "epoch {epoch} image {i}");

                let energy = proposal_energy(s, &u_before[i], &ctx.pairwise[i], &crf).unwrap();
                let got = energy_value(&energy, &state.y_hat[i].to_labels()).unwrap();
                let unary = crf_unaries(s, &u_before[i]).unwrap();
                let tau: Vec<u8> = unary.iter().map(|&a| u8::from(a < 0.0)).collect();
                let witness = energy_value(&energy, &tau).unwrap();
                assert!(got <= witness + 1e-9, "epoch {epoch} image {i}: {got} > {witness}");
            }

            update_multipliers(&mut state, &cfg, &outputs);
            for (i, s) in outputs.iter().enumerate() {
                for p in 0..s.len() {
                    u_hat_copy[i][p] += s[p] - state.y_hat[i][p];
                    u_tilde_copy[i][p] += s[p] - state.y_tilde[i][p];
                }
                assert_eq!(state.u_hat[i].0, u_hat_copy[i]);
                assert_eq!(state.u_tilde[i].0, u_tilde_copy[i]);
            }
        }
    }
}

#[test]
fn one_image_epoch_respects_bounds() {
    let ds = tiny_dataset(ShapeFamily::Ellipse, 8);
    let train = &ds.train[..1];
    let cfg = TrainConfig {
        epsilon: 0.0,
        ..tiny_config(Method::CrfPlusSize)
    };
    let mut state = initialize(train, &cfg).unwrap();
    let ctx = TrainContext::new(train, &cfg).unwrap();
    run_epoch(&mut state, &ctx, &cfg).unwrap();
    assert_eq!(state.y_tilde[0].count_ones(), train[0].true_size);
}

fn one_pixel_sample() -> Sample {
    let shape = GridShape::new_2d(1, 1);
    Sample {
        image: GridImage::new(shape, vec![0.5]).unwrap(),
        gt: Mask::new(shape, vec![true]).unwrap(),
        annotation: WeakAnnotation::empty(),
        true_size: 1,
        centroid: (0.0, 0.0),
    }
}

/// Scalar model of the same loop: one logit `z`, `s = σ(z)`, gradient steps
/// on `μ/2 (s - 1 + u)²` followed by `u += s - 1`.
fn scalar_closed_loop(z0: f64, mu: f64, lr: f64, steps: usize, epochs: usize) -> Vec<f64> {
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let (mut z, mut u) = (z0, 0.0);
    let mut trace = Vec::new();
    for _ in 0..epochs {
        for _ in 0..steps {
            let s = sig(z);
            z -= lr * mu * (s - 1.0 + u) * s * (1.0 - s);
        }
        let s = sig(z);
        u += s - 1.0;
        trace.push(s);
    }
    trace
}

#[test]
fn one_pixel_closed_loop_turns_foreground() {
    let oracle = scalar_closed_loop(-2.0, 1.0, 0.5, 5, 60);
    assert!(oracle[0] < 0.5);
    assert!(*oracle.last().unwrap() > 0.5);

    let train = vec![one_pixel_sample()];
    let cfg = TrainConfig {
        method: Method::SizeOnly,
        epochs: 60,
        iters_per_epoch: 5,
        batch_size: 1,
        lr: 0.05,
        lr_decay: 1.0,
        epsilon: 0.0,
        optimizer: dcseg::network::OptimizerKind::Sgd,
        arch: NetArch::new(vec![1, 2, 1]).unwrap(),
        seed: 0,
        record_timing: false,
        ..TrainConfig::default()
    };
    assert_eq!(make_bounds(1, 0.0).unwrap().s_max, 1);
    let mut state = initialize(&train, &cfg).unwrap();
    // start from a confidently background output
    let len = state.params.len();
    state.params.flat_mut()[len - 1] = -2.0;
    let ctx = TrainContext::new(&train, &cfg).unwrap();
    let s0 = predict_all(&state.params, &train).unwrap()[0][0];
    assert!(s0 < 0.5);
    for _ in 0..cfg.epochs {
        run_epoch(&mut state, &ctx, &cfg).unwrap();
        assert_eq!(state.y_tilde[0].0, vec![1.0]);
    }
    let s = predict_all(&state.params, &train).unwrap()[0][0];
    assert!(s > 0.5, "s = {s}");
    assert!(state.u_tilde[0][0] < 0.0);
}

#[test]
fn zero_coupling_matches_pure_cross_entropy() {
    let ds = tiny_dataset(ShapeFamily::Disk, 11);
    let cfg = TrainConfig {
        mu_hat: 0.0,
        mu_tilde: 0.0,
        ..tiny_config(Method::CrfPlusSize)
    };
    let (admm, _) = train(&ds.train, &ds.val, &cfg).unwrap();

    let mut params = NetParams::random(cfg.arch.clone(), cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, params.len());
    let mut rng = sampling_rng(cfg.seed);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        for _ in 0..cfg.iters_per_epoch {
            let batch = index::sample(&mut rng, ds.train.len(), cfg.batch_size).into_vec();
            let items: Vec<AdmmItem> = batch
                .iter()
                .map(|&i| AdmmItem {
                    image: &ds.train[i].image,
                    annotation: &ds.train[i].annotation,
                    hat: None,
                    tilde: None,
                })
                .collect();
            let (_, grad) = admm_loss_and_grad(&items, &params).unwrap();
            opt.step(&mut params, &grad, lr).unwrap();
        }
    }
    assert!(admm.flat().iter().zip(params.flat()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let pen = TrainConfig {
        method: Method::Penalty,
        penalty_mu: 0.0,
        ..cfg.clone()
    };
    let (pen_params, _) = train(&ds.train, &ds.val, &pen).unwrap();
    assert_eq!(pen_params, admm);
}

#[test]
fn zero_epochs_returns_initial_params() {
    let ds = tiny_dataset(ShapeFamily::Disk, 2);
    let cfg = TrainConfig {
        epochs: 0,
        ..tiny_config(Method::CrfPlusSize)
    };
    let (params, history) = train(&ds.train, &ds.val, &cfg).unwrap();
    assert_eq!(params, NetParams::random(cfg.arch.clone(), cfg.seed));
    assert!(history.records.is_empty());
}

#[test]
fn learning_rate_follows_schedule() {
    let ds = tiny_dataset(ShapeFamily::Disk, 2);
    let cfg = TrainConfig {
        lr: 0.1,
        lr_decay: 0.5,
        decay_period: 2,
        ..tiny_config(Method::SizeOnly)
    };
    let mut state = initialize(&ds.train, &cfg).unwrap();
    let ctx = TrainContext::new(&ds.train, &cfg).unwrap();
    let mut seen = vec![state.lr];
    for _ in 0..5 {
        run_epoch(&mut state, &ctx, &cfg).unwrap();
        seen.push(state.lr);
    }
    assert_eq!(seen, vec![0.1, 0.1, 0.05, 0.05, 0.025, 0.025]);
}

#[test]
fn identical_runs_give_identical_histories() {
    let ds = tiny_dataset(ShapeFamily::Crescent, 6);
    for method in Method::ALL {
        let cfg = tiny_config(method);
        let (pa, ha) = train(&ds.train, &ds.val, &cfg).unwrap();
        let (pb, hb) = train(&ds.train, &ds.val, &cfg).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ha.to_csv(), hb.to_csv());
        assert_eq!(ha.records.len(), cfg.epochs);
    }
}

#[test]
fn empty_training_set_is_an_error() {
    assert!(train(&[], &[], &tiny_config(Method::Penalty)).is_err());
}
