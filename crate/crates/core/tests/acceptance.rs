//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line to
//! stderr (outside the test harness capture) before asserting.

mod common;

use std::io::Write as _;
use std::process::Command;
use std::time::Instant;

use common::{
    admm_batch, brute_force_knapsack, brute_force_min_energy, central_differences,
    max_relative_error, random_case, random_grid_energy,
};
use dcseg::config::Config;
use dcseg::crf_proposal::{crf_unaries, solve_crf_proposal, CrfConfig, compute_pairwise};
use dcseg::data::Dataset;
use dcseg::grid::{GridImage, GridShape, Neighborhood};
use dcseg::maxflow::energy_value;
use dcseg::network::{
    admm_loss_and_grad, penalty_loss_and_grad, AdmmItem, NetParams, Optimizer, PenaltyItem,
};
use dcseg::size_proposal::{solve_size_knapsack, SizeBounds};
use dcseg::trainer::{self, Method, TrainConfig};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, pass: bool, detail: &str) {
    let line = format!(
        "criterion {n}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_1_knapsack_optimality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=15);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lo = rng.gen_range(0..=n);
        let hi = rng.gen_range(lo..=n);
        let y = solve_size_knapsack(&u, SizeBounds::new(lo, hi).unwrap()).unwrap();
        let got: f64 = u.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let best = brute_force_knapsack(&u, lo, hi).unwrap();
        let k = y.count_ones();
        if got != best && (got - best).abs() > 1e-12 || k < lo || k > hi {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        mismatches == 0 && secs < 10.0,
        &format!("1000 instances, {mismatches} mismatches, {secs:.2}s"),
    );
}

#[test]
fn criterion_2_ranking_table() {
    let ranked = [0.95, 0.88, 0.52, -0.11, -0.64, -0.79];
    let rows: [((usize, usize), [f64; 6]); 3] = [
        ((2, 5), [1., 1., 1., 0., 0., 0.]),
        ((3, 5), [1., 1., 1., 0., 0., 0.]),
        ((4, 5), [1., 1., 1., 1., 0., 0.]),
    ];
    let mut ok = 0;
    for ((lo, hi), expect) in rows {
        let y = solve_size_knapsack(&ranked, SizeBounds::new(lo, hi).unwrap()).unwrap();
        ok += usize::from(y.0 == expect);
    }
    verdict(2, ok == 3, &format!("{ok}/3 rows exact"));
}

#[test]
fn criterion_3_min_cut_optimality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let h = rng.gen_range(1..=4);
        let w = rng.gen_range(1..=(16 / h).min(4));
        let e = random_grid_energy(&mut rng, h, w);
        let labels = e.minimize().unwrap().labels;
        let got = energy_value(&e, &labels).unwrap();
        worst = worst.max((got - brute_force_min_energy(&e)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        worst <= 1e-9 && secs < 60.0,
        &format!("200 grids, worst gap {worst:.1e}, {secs:.2}s"),
    );
}

#[test]
fn criterion_4_gradient_fidelity() {
    const STEP: f64 = 1e-5;
    let mut worst_admm: f64 = 0.0;
    let mut worst_pen: f64 = 0.0;
    let mut max_params = 0;
    for trial in 0..20 {
        let c = random_case(5000 + trial);
        max_params = max_params.max(c.params.len());
        let arch = c.params.arch().clone();
        let at = |x: &[f64]| NetParams::from_flat(arch.clone(), x.to_vec()).unwrap();

        let batch = admm_batch(&c, 0.9, 1.7);
        let (_, grad) = admm_loss_and_grad(&batch, &c.params).unwrap();
        let fd = central_differences(
            |x| admm_loss_and_grad(&batch, &at(x)).unwrap().0.total(),
            c.params.flat(),
            STEP,
        );
        worst_admm = worst_admm.max(max_relative_error(&grad, &fd, 1e-6));

        let n = c.images[0].len();
        let bounds = [
            SizeBounds::new(0, n / 6).unwrap(),
            SizeBounds::new(n - 1, n).unwrap(),
            SizeBounds::new(0, n).unwrap(),
        ][trial as usize % 3];
        let items: Vec<PenaltyItem> = (0..c.images.len())
            .map(|i| PenaltyItem {
                image: &c.images[i],
                annotation: &c.annotations[i],
                bounds,
            })
            .collect();
        let (_, grad) = penalty_loss_and_grad(&items, &c.params, 0.3).unwrap();
        let fd = central_differences(
            |x| penalty_loss_and_grad(&items, &at(x), 0.3).unwrap().0.total(),
            c.params.flat(),
            STEP,
        );
        worst_pen = worst_pen.max(max_relative_error(&grad, &fd, 1e-6));
    }
    verdict(
        4,
        worst_admm <= 1e-4 && worst_pen <= 1e-4 && max_params <= 500,
        &format!(
            "20 trials, <= {max_params} params, worst relative error admm {worst_admm:.1e}, penalty {worst_pen:.1e}"
        ),
    );
}

fn train_preset(cfg: &Config, data: &Dataset) -> NetParams {
    trainer::train(&data.train, &data.val, &cfg.train).unwrap().0
}

#[test]
fn criterion_5_constraint_satisfaction() {
    let base = Config::preset("disk-small").unwrap();
    assert_eq!(base.train.epsilon, 0.1);
    let (data, _) = Dataset::generate(&base.data).unwrap();
    let mut rates = Vec::new();
    let mut slowest: f64 = 0.0;
    for method in [Method::CrfPlusSize, Method::Penalty] {
        let mut cfg = base.clone();
        cfg.train.method = method;
        let t = Instant::now();
        let params = train_preset(&cfg, &data);
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let v = trainer::validate(&params, &data.val, cfg.train.epsilon).unwrap();
        rates.push(v.within_bounds_rate);
    }
    verdict(
        5,
        rates[0] >= 0.95 && rates[1] < rates[0] && slowest < 900.0,
        &format!(
            "within bounds: crf_plus_size {:.0}%, penalty {:.0}% ({} val images, slowest run {slowest:.0}s)",
            100.0 * rates[0],
            100.0 * rates[1],
            data.val.len()
        ),
    );
}

#[test]
fn criterion_6_method_ordering() {
    const SEEDS: u64 = 5;
    let base = Config::preset("crescent-small").unwrap();
    let methods = [Method::CrfPlusSize, Method::SizeOnly, Method::Penalty];
    // dice[eps][method] summed over seeds
    let mut dice = [[0.0f64; 3]; 2];
    for k in 0..SEEDS {
        let mut data_cfg = base.data.clone();
        data_cfg.seed = base.data.seed + 100 * k;
        let (data, _) = Dataset::generate(&data_cfg).unwrap();
        for (ei, eps) in [0.0, 0.1].into_iter().enumerate() {
            for (mi, &method) in methods.iter().enumerate() {
                let cfg = TrainConfig {
                    method,
                    epsilon: eps,
                    seed: k,
                    ..base.train.clone()
                };
                let (params, _) = trainer::train(&data.train, &data.val, &cfg).unwrap();
                dice[ei][mi] += trainer::validate(&params, &data.val, eps).unwrap().dice_mean;
            }
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (ei, eps) in ["0", "0.1"].iter().enumerate() {
        let m: Vec<f64> = dice[ei].iter().map(|d| d / SEEDS as f64).collect();
        pass &= m[0] - m[1] >= 0.02 && m[0] - m[2] >= 0.02;
        parts.push(format!(
            "eps {eps}: crf_plus_size {:.4}, size_only {:.4}, penalty {:.4}",
            m[0], m[1], m[2]
        ));
    }
    verdict(6, pass, &format!("{SEEDS} seeds; {}", parts.join("; ")));
}

#[test]
fn criterion_7_ablation_degeneracies() {
    // zero coupling weights reproduce partial cross-entropy training bit for bit
    let mut base = Config::preset("disk-small").unwrap();
    base.train.epochs = 4;
    base.train.decay_period = 2;
    let (data, _) = Dataset::generate(&base.data).unwrap();
    let cfg = TrainConfig {
        method: Method::CrfPlusSize,
        mu_hat: 0.0,
        mu_tilde: 0.0,
        ..base.train.clone()
    };
    let admm = trainer::train(&data.train, &data.val, &cfg).unwrap().0;

    let mut params = NetParams::random(cfg.arch.clone(), cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, params.len());
    let mut rng = trainer::sampling_rng(cfg.seed);
    for epoch in 0..cfg.epochs {
        for _ in 0..cfg.iters_per_epoch {
            let batch = index::sample(&mut rng, data.train.len(), cfg.batch_size).into_vec();
            let items: Vec<AdmmItem> = batch
                .iter()
                .map(|&i| AdmmItem {
                    image: &data.train[i].image,
                    annotation: &data.train[i].annotation,
                    hat: None,
                    tilde: None,
                })
                .collect();
            let (_, grad) = admm_loss_and_grad(&items, &params).unwrap();
            opt.step(&mut params, &grad, cfg.lr_at(epoch)).unwrap();
        }
    }
    let identical = admm
        .flat()
        .iter()
        .zip(params.flat())
        .all(|(a, b)| a.to_bits() == b.to_bits());

    // λ = 0 turns the CRF proposal into per-pixel thresholding
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut threshold_mismatch = 0;
    for _ in 0..50 {
        let (h, w) = (rng.gen_range(2..12), rng.gen_range(2..12));
        let n = h * w;
        let img = GridImage::new(
            GridShape::new_2d(h, w),
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let crf = CrfConfig {
            lambda: 0.0,
            mu_hat: rng.gen_range(0.01..10.0),
            sigma: 0.1,
            neighborhood: Neighborhood::Grid8,
        };
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let weights = compute_pairwise(&img, &crf).unwrap();
        let y = solve_crf_proposal(&s, &u, &weights, &crf).unwrap();
        let a = crf_unaries(&s, &u).unwrap();
        threshold_mismatch += a
            .iter()
            .zip(y.iter())
            .filter(|(a, y)| (**a < 0.0) != (**y == 1.0))
            .count();
    }
    verdict(
        7,
        identical && threshold_mismatch == 0,
        &format!(
            "zero-coupling trajectory bit-identical: {identical}; lambda=0 thresholding mismatches: {threshold_mismatch}"
        ),
    );
}

#[test]
fn criterion_8_proposal_overhead() {
    let cfg = Config::preset("overhead-64").unwrap();
    let (data, _) = Dataset::generate(&cfg.data).unwrap();
    assert_eq!(data.train.len(), 40);
    assert_eq!((cfg.data.generator.height, cfg.data.generator.width), (64, 64));
    let (_, history) = trainer::train(&data.train, &data.val, &cfg.train).unwrap();
    let worst = history
        .records
        .iter()
        .map(|r| r.proposal_seconds / r.sgd_seconds)
        .fold(0.0, f64::max);
    let csv = history.to_csv();
    let reported = csv.lines().skip(1).all(|l| {
        l.split(',')
            .nth(8)
            .and_then(|v| v.parse::<f64>().ok())
            .is_some_and(|v| v > 0.0)
    });
    verdict(
        8,
        worst <= 0.25 && reported,
        &format!(
            "worst per-epoch proposal/sgd time ratio {:.1}% over {} epochs (overall {:.1}%)",
            100.0 * worst,
            history.records.len(),
            100.0 * history.overhead_ratio()
        ),
    );
}

#[test]
fn criterion_9_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_dcseg"))
            .args(["train", "--preset", "disk-small", "--set", "train.record_timing=false", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        csvs.push(std::fs::read(out.join("history.csv")).unwrap());
    }
    let lines = String::from_utf8_lossy(&csvs[0]).lines().count();
    verdict(
        9,
        csvs[0] == csvs[1] && lines > 1,
        &format!("two disk-small runs, {} bytes / {lines} lines, identical: {}", csvs[0].len(), csvs[0] == csvs[1]),
    );
}
