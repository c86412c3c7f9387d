//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use dcseg::grid::{GridImage, GridShape};
use dcseg::maxflow::BinaryEnergy;
use dcseg::network::{AdmmItem, Coupling, NetArch, NetParams};
use dcseg::seg::WeakAnnotation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum energy over all 2^n labelings, evaluated directly from the terms.
pub fn brute_force_min_energy(e: &BinaryEnergy) -> f64 {
    let n = e.node_count();
    assert!(n <= 20);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << n) {
        let bit = |p: usize| (mask >> p) & 1;
        let mut v = 0.0;
        for (p, a) in e.unary().iter().enumerate() {
            if bit(p) == 1 {
                v += a;
            }
        }
        for &(p, q, w) in e.pairwise() {
            if bit(p) != bit(q) {
                v += w;
            }
        }
        best = best.min(v);
    }
    best
}

/// Best objective of `Σ a_p y_p` over all subsets with `s_min <= |y| <= s_max`.
pub fn brute_force_knapsack(utilities: &[f64], s_min: usize, s_max: usize) -> Option<f64> {
    let n = utilities.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << n) {
        let k = mask.count_ones() as usize;
        if k < s_min || k > s_max {
            continue;
        }
        let v: f64 = (0..n)
            .filter(|p| (mask >> p) & 1 == 1)
            .map(|p| utilities[p])
            .sum();
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    best
}

/// Random submodular energy on an `h x w` 4-connected grid.
pub fn random_grid_energy<R: Rng>(rng: &mut R, h: usize, w: usize) -> BinaryEnergy {
    let n = h * w;
    let unary = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut e = BinaryEnergy::from_unary(unary);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                e.add_pairwise(p, p + 1, rng.gen_range(0.0..1.5)).unwrap();
            }
            if y + 1 < h {
                e.add_pairwise(p, p + w, rng.gen_range(0.0..1.5)).unwrap();
            }
        }
    }
    e
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub struct Case {
    pub params: NetParams,
    pub images: Vec<GridImage>,
    pub annotations: Vec<WeakAnnotation>,
    pub proposals: Vec<(Vec<f64>, Vec<f64>)>,
    pub multipliers: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Small random network (at most 500 parameters) with a random batch of
/// images, partial annotations, binary proposals and real multipliers.
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = rng.gen_range(2..=4);
    let arch = NetArch::new(vec![1, hidden, hidden + 1, 1]).unwrap();
    assert!(arch.param_count() <= 500);
    let mut params = NetParams::random(arch, seed);
    for b in params.flat_mut().iter_mut() {
        *b += rng.gen_range(-0.1..0.1);
    }
    let (h, w) = (rng.gen_range(3..=6), rng.gen_range(3..=6));
    let n = h * w;
    let batch = rng.gen_range(1..=3);
    let mut case = Case {
        params,
        images: vec![],
        annotations: vec![],
        proposals: vec![],
        multipliers: vec![],
    };
    for _ in 0..batch {
        let img = GridImage::new(
            GridShape::new_2d(h, w),
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let mut labelled: Vec<(usize, u8)> = Vec::new();
        for p in 0..n {
            if rng.gen_bool(0.4) {
                labelled.push((p, rng.gen_range(0..=1)));
            }
        }
        case.images.push(img);
        case.annotations.push(WeakAnnotation::new(n, labelled).unwrap());
        let binary = |rng: &mut ChaCha8Rng| (0..n).map(|_| f64::from(rng.gen_range(0..=1u8))).collect::<Vec<_>>();
        let real = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<_>>();
        case.proposals.push((binary(&mut rng), binary(&mut rng)));
        case.multipliers.push((real(&mut rng), real(&mut rng)));
    }
    case
}

pub fn admm_batch<'a>(c: &'a Case, mu_hat: f64, mu_tilde: f64) -> Vec<AdmmItem<'a>> {
    (0..c.images.len())
        .map(|i| AdmmItem {
            image: &c.images[i],
            annotation: &c.annotations[i],
            hat: Some(Coupling {
                proposal: &c.proposals[i].0,
                multiplier: &c.multipliers[i].0,
                mu: mu_hat,
            }),
            tilde: Some(Coupling {
                proposal: &c.proposals[i].1,
                multiplier: &c.multipliers[i].1,
                mu: mu_tilde,
            }),
        })
        .collect()
}
