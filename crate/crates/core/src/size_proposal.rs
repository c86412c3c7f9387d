//! Size-constrained proposal: maximize `Σ ã_p ỹ_p` subject to
//! `s_min <= Σ ỹ_p <= s_max`, a unit-weight knapsack solved by ranking.

use crate::error::{Error, Result};
use crate::seg::{check_len, Proposal};

/// Inclusive bounds on the foreground pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeBounds {
    pub s_min: usize,
    pub s_max: usize,
}

impl SizeBounds {
    pub fn new(s_min: usize, s_max: usize) -> Result<Self> {
        if s_min > s_max {
            return Err(Error::Bounds { s_min, s_max });
        }
        Ok(SizeBounds { s_min, s_max })
    }

    pub fn contains(&self, size: usize) -> bool {
        self.s_min <= size && size <= self.s_max
    }
}

/// Bounds `[floor((1-ε) n), ceil((1+ε) n)]` around a known size `n`.
pub fn make_bounds(true_size: usize, epsilon: f64) -> Result<SizeBounds> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::config("size.epsilon", "must lie in [0, 1]"));
    }
    if true_size == 0 {
        return Err(Error::config("size.epsilon", "true size must be >= 1"));
    }
    let n = true_size as f64;
    // guard against representation error, e.g. (1 - 0.1) * 100 = 89.999...
    let lo = snap((1.0 - epsilon) * n).floor();
    let hi = snap((1.0 + epsilon) * n).ceil();
    SizeBounds::new(lo as usize, hi as usize)
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// `ã_p = s_p - ũ_p - ½`.
pub fn size_utilities(s: &[f64], u_tilde: &[f64]) -> Result<Vec<f64>> {
    check_len("size_utilities", s.len(), u_tilde.len())?;
    Ok(s.iter().zip(u_tilde).map(|(s, u)| s - u - 0.5).collect())
}

/// Takes the `s_min` highest-utility pixels, then keeps adding pixels with
/// strictly positive utility until `s_max` is reached. Equal utilities are
/// ranked by ascending pixel index.
pub fn solve_size_knapsack(utilities: &[f64], bounds: SizeBounds) -> Result<Proposal> {
    let n = utilities.len();
    if bounds.s_min > bounds.s_max {
        return Err(Error::Bounds {
            s_min: bounds.s_min,
            s_max: bounds.s_max,
        });
    }
    if bounds.s_min > n {
        return Err(Error::Infeasible {
            s_min: bounds.s_min,
            pixels: n,
        });
    }
    if let Some(u) = utilities.iter().find(|u| u.is_nan()) {
        return Err(Error::Numerical(format!("utility {u}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| utilities[b].total_cmp(&utilities[a]).then(a.cmp(&b)));

    let cap = bounds.s_max.min(n);
    let mut selected = vec![0.0; n];
    for (rank, &p) in order.iter().enumerate().take(cap) {
        if rank < bounds.s_min || utilities[p] > 0.0 {
            selected[p] = 1.0;
        } else {
            break;
        }
    }
    Ok(Proposal(selected))
}
