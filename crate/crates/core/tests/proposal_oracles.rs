mod common;

use common::{brute_force_knapsack, brute_force_min_energy};
use dcseg::crf_proposal::{compute_pairwise, proposal_energy, update_crf_proposal, CrfConfig};
use dcseg::grid::{GridImage, GridShape};
use dcseg::maxflow::energy_value;
use dcseg::seg::{Multiplier, SoftSeg};
use dcseg::size_proposal::{size_utilities, solve_size_knapsack, SizeBounds};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn objective(utilities: &[f64], y: &[f64]) -> f64 {
    utilities.iter().zip(y).map(|(a, y)| a * y).sum()
}

#[test]
fn knapsack_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.gen_range(1..=12);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lo = rng.gen_range(0..=n);
        let hi = rng.gen_range(lo..=n);
        let y = solve_size_knapsack(&u, SizeBounds::new(lo, hi).unwrap()).unwrap();
        let best = brute_force_knapsack(&u, lo, hi).unwrap();
        assert!((objective(&u, &y) - best).abs() < 1e-12);
        assert!((lo..=hi).contains(&y.count_ones()));
    }
}

fn random_instance(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (SoftSeg, Multiplier, GridImage) {
    let shape = GridShape::new_2d(h, w);
    let s = SoftSeg::new(shape, (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let u = Multiplier((0..h * w).map(|_| rng.gen_range(-0.5..0.5)).collect());
    let img = GridImage::new(shape, (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    (s, u, img)
}

#[test]
fn crf_proposal_is_globally_optimal_on_4x4() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let (s, u, img) = random_instance(&mut rng, 4, 4);
        let cfg = CrfConfig {
            lambda: rng.gen_range(0.0..2.0),
            mu_hat: rng.gen_range(0.5..2.0),
            sigma: rng.gen_range(0.05..0.5),
            ..CrfConfig::default()
        };
        let y = update_crf_proposal(&s, &u, &img, &cfg).unwrap();
        let e = proposal_energy(s.values(), &u, &compute_pairwise(&img, &cfg).unwrap(), &cfg).unwrap();
        let v = energy_value(&e, &y.to_labels()).unwrap();
        assert!((v - brute_force_min_energy(&e)).abs() <= 1e-9);
        // never worse than thresholding the shifted network output
        let tau: Vec<u8> = s.values().iter().zip(u.iter()).map(|(s, u)| u8::from(s + u >= 0.5)).collect();
        assert!(v <= energy_value(&e, &tau).unwrap() + 1e-12);
    }
}

#[test]
fn uniform_image_strong_coupling_goes_all_ones() {
    // 6 of 9 unaries negative; a huge Potts weight makes a uniform labeling optimal
    let shape = GridShape::new_2d(3, 3);
    let s = SoftSeg::new(shape, vec![0.9, 0.8, 0.7, 0.9, 0.2, 0.8, 0.1, 0.6, 0.3]).unwrap();
    let u = Multiplier::filled(9, 0.0);
    let img = GridImage::new(shape, vec![0.4; 9]).unwrap();
    let cfg = CrfConfig {
        lambda: 1e4,
        mu_hat: 1.0,
        ..CrfConfig::default()
    };
    let y = update_crf_proposal(&s, &u, &img, &cfg).unwrap();
    let e = proposal_energy(s.values(), &u, &compute_pairwise(&img, &cfg).unwrap(), &cfg).unwrap();
    assert_eq!(energy_value(&e, &y.to_labels()).unwrap(), brute_force_min_energy(&e));
    assert_eq!(y.count_ones(), 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn cardinality_law(u in proptest::collection::vec(-1.0f64..1.0, 1..40), a in any::<usize>(), b in any::<usize>()) {
        let n = u.len();
        let lo = a % (n + 1);
        let hi = lo + b % (n + 1 - lo);
        let y = solve_size_knapsack(&u, SizeBounds::new(lo, hi).unwrap()).unwrap();
        let positives = u.iter().filter(|&&v| v > 0.0).count();
        prop_assert_eq!(y.count_ones(), lo.max(positives).min(hi));
    }

    #[test]
    fn knapsack_permutation_equivariant(
        u in proptest::collection::vec(-1.0f64..1.0, 1..30),
        seed in any::<u64>(),
        a in any::<usize>(),
    ) {
        let n = u.len();
        let bounds = SizeBounds::new(a % (n + 1), n).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<f64> = perm.iter().map(|&i| u[i]).collect();
        let y = solve_size_knapsack(&u, bounds).unwrap();
        let yp = solve_size_knapsack(&permuted, bounds).unwrap();
        // distinct utilities make the optimum unique
        let mut sorted = u.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(yp[k], y[i]);
        }
    }

    #[test]
    fn crf_argmin_scale_invariant(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, u, img) = random_instance(&mut rng, 4, 5);
        let cfg = CrfConfig { lambda: 0.7, mu_hat: 1.0, sigma: 0.3, ..CrfConfig::default() };
        let pw = compute_pairwise(&img, &cfg).unwrap();
        let e = proposal_energy(s.values(), &u, &pw, &cfg).unwrap();
        let mut scaled = dcseg::maxflow::BinaryEnergy::from_unary(e.unary().iter().map(|a| a * c).collect());
        for &(p, q, w) in e.pairwise() {
            scaled.add_pairwise(p, q, w * c).unwrap();
        }
        let y = e.minimize().unwrap();
        let ys = scaled.minimize().unwrap();
        let v = energy_value(&e, &y.labels).unwrap();
        let vs = energy_value(&e, &ys.labels).unwrap();
        prop_assert!((v - vs).abs() < 1e-9);
    }

    #[test]
    fn lambda_zero_is_sign_test(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, u, img) = random_instance(&mut rng, 5, 5);
        let cfg = CrfConfig { lambda: 0.0, ..CrfConfig::default() };
        let y = update_crf_proposal(&s, &u, &img, &cfg).unwrap();
        for p in 0..25 {
            let a = 0.5 - s.values()[p] - u[p];
            prop_assert_eq!(y[p], if a <= 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn pairwise_weights_in_range(seed in any::<u64>(), sigma in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, _, img) = random_instance(&mut rng, 4, 4);
        let cfg = CrfConfig { sigma, ..CrfConfig::default() };
        let pw = compute_pairwise(&img, &cfg).unwrap();
        for &(p, q, w) in &pw.weights {
            prop_assert!(p < q);
            prop_assert!(w > 0.0 && w <= 1.0);
            let x = img.values();
            let expect = (-(x[p] - x[q]).powi(2) / (2.0 * sigma * sigma)).exp();
            prop_assert!((w - expect.max(f64::MIN_POSITIVE)).abs() < 1e-15);
        }
    }
}

#[test]
fn size_utilities_feed_knapsack() {
    let s = [0.9, 0.2, 0.6, 0.55];
    let u = [0.0, 0.0, 0.2, -0.1];
    let a = size_utilities(&s, &u).unwrap();
    let y = solve_size_knapsack(&a, SizeBounds::new(1, 4).unwrap()).unwrap();
    // utilities: 0.4, -0.3, -0.1, 0.15
    assert_eq!(y.0, vec![1.0, 0.0, 0.0, 1.0]);
}
