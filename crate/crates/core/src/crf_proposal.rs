//! CRF-regularized proposal: the binary segmentation closest to the network
//! output (shifted by its multiplier) under a contrast-sensitive Potts prior.
//!
//! Because `ŷ² = ŷ` for binary labels, the proximal problem
//! `½‖ŷ - (s + û)‖² + (λ/μ̂) Σ w_pq |ŷ_p - ŷ_q|` reduces to unaries
//! `â_p = ½ - s_p - û_p` plus Potts weights `(λ/μ̂) w_pq`, which is solved
//! exactly by min-cut.

use crate::error::{Error, Result};
use crate::grid::{GridImage, GridShape, Neighborhood};
use crate::maxflow::{self, BinaryEnergy};
use crate::seg::{check_len, Multiplier, Proposal, SoftSeg};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfConfig {
    /// Regularization trade-off λ.
    pub lambda: f64,
    /// ADMM penalty μ̂ of the CRF branch.
    pub mu_hat: f64,
    /// Intensity bandwidth σ, on intensities normalized to `[0, 1]`.
    pub sigma: f64,
    pub neighborhood: Neighborhood,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            lambda: 1.0,
            mu_hat: 1.0,
            sigma: 0.1,
            neighborhood: Neighborhood::Grid4,
        }
    }
}

impl CrfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("crf.lambda", "must be finite and >= 0"));
        }
        if !(self.mu_hat > 0.0) || !self.mu_hat.is_finite() {
            return Err(Error::config("train.mu_hat", "must be finite and > 0"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config("crf.sigma", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Effective Potts multiplier λ/μ̂.
    pub fn pairwise_scale(&self) -> f64 {
        self.lambda / self.mu_hat
    }
}

/// Contrast-sensitive neighbour weights `exp(-|x_p - x_q|² / 2σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseWeights {
    pub neighborhood: Neighborhood,
    pub sigma: f64,
    pub shape: GridShape,
    /// `(p, q, w)` with `p < q` and `w` in `(0, 1]`.
    pub weights: Vec<(usize, usize, f64)>,
}

impl PairwiseWeights {
    pub fn get(&self, p: usize, q: usize) -> Option<f64> {
        let (p, q) = (p.min(q), p.max(q));
        self.weights
            .iter()
            .find(|&&(a, b, _)| a == p && b == q)
            .map(|&(_, _, w)| w)
    }
}

pub fn compute_pairwise(img: &GridImage, cfg: &CrfConfig) -> Result<PairwiseWeights> {
    if !(cfg.sigma > 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::config("crf.sigma", "must be finite and > 0"));
    }
    let x = img.values();
    let inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    let mut weights = Vec::new();
    img.shape().for_each_neighbor_pair(cfg.neighborhood, |p, q| {
        let d = x[p] - x[q];
        // extreme contrast can underflow; keep the entry strictly positive
        let w = (-d * d * inv).exp().max(f64::MIN_POSITIVE);
        weights.push((p, q, w));
    })?;
    Ok(PairwiseWeights {
        neighborhood: cfg.neighborhood,
        sigma: cfg.sigma,
        shape: img.shape(),
        weights,
    })
}

/// `â_p = ½ - s_p - û_p`.
pub fn crf_unaries(s: &[f64], u_hat: &[f64]) -> Result<Vec<f64>> {
    check_len("crf_unaries", s.len(), u_hat.len())?;
    Ok(s.iter().zip(u_hat).map(|(s, u)| 0.5 - s - u).collect())
}

/// The discrete energy minimized by the CRF proposal update.
pub fn proposal_energy(
    s: &[f64],
    u_hat: &[f64],
    weights: &PairwiseWeights,
    cfg: &CrfConfig,
) -> Result<BinaryEnergy> {
    check_len("proposal_energy", weights.shape.len(), s.len())?;
    let mut energy = BinaryEnergy::from_unary(crf_unaries(s, u_hat)?);
    let scale = cfg.pairwise_scale();
    if scale > 0.0 {
        for &(p, q, w) in &weights.weights {
            energy.add_pairwise(p, q, scale * w)?;
        }
    }
    Ok(energy)
}

/// Solves the proposal problem with precomputed pairwise weights.
pub fn solve_crf_proposal(
    s: &[f64],
    u_hat: &[f64],
    weights: &PairwiseWeights,
    cfg: &CrfConfig,
) -> Result<Proposal> {
    cfg.validate()?;
    let energy = proposal_energy(s, u_hat, weights, cfg)?;
    let cut = maxflow::min_cut(&maxflow::build_network(&energy)?);
    Ok(Proposal::from_labels(&cut.labels))
}

pub fn update_crf_proposal(
    s: &SoftSeg,
    u_hat: &Multiplier,
    img: &GridImage,
    cfg: &CrfConfig,
) -> Result<Proposal> {
    if s.shape() != img.shape() {
        return Err(Error::dim("update_crf_proposal", img.len(), s.len()));
    }
    let weights = compute_pairwise(img, cfg)?;
    solve_crf_proposal(s.values(), u_hat, &weights, cfg)
}
