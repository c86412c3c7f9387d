//! ADMM training loop alternating network updates with discrete proposals.
//!
//! One epoch runs `iters_per_epoch` batch descent steps on the augmented
//! loss, then recomputes every image's CRF and size proposals from a fresh
//! forward pass, moves the scaled multipliers by the residual `s - y`, and
//! finally decays the learning rate on its schedule. The penalty baseline
//! only runs the batch steps, with a squared hinge on the probability sum.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crf_proposal::{compute_pairwise, solve_crf_proposal, CrfConfig, PairwiseWeights};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::grid::{Mask, Neighborhood};
use crate::metrics::{mean_std, size_stats};
use crate::network::{
    self, admm_loss_and_grad, penalty_loss_and_grad, AdmmItem, Coupling, LossParts, NetArch,
    NetParams, Optimizer, OptimizerKind, PenaltyItem,
};
use crate::seg::{Multiplier, Proposal};
use crate::size_proposal::{make_bounds, size_utilities, solve_size_knapsack, SizeBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Squared-hinge penalty on the sum of probabilities.
    Penalty,
    CrfOnly,
    SizeOnly,
    #[default]
    CrfPlusSize,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Penalty,
        Method::CrfOnly,
        Method::SizeOnly,
        Method::CrfPlusSize,
    ];

    pub fn uses_crf(self) -> bool {
        matches!(self, Method::CrfOnly | Method::CrfPlusSize)
    }

    pub fn uses_size(self) -> bool {
        matches!(self, Method::SizeOnly | Method::CrfPlusSize)
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalty" => Ok(Method::Penalty),
            "crf_only" | "crf" => Ok(Method::CrfOnly),
            "size_only" | "size" => Ok(Method::SizeOnly),
            "crf_plus_size" | "crf_size" | "crf+size" => Ok(Method::CrfPlusSize),
            other => Err(Error::config(
                "train.method",
                format!("unknown method `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Penalty => "penalty",
            Method::CrfOnly => "crf_only",
            Method::SizeOnly => "size_only",
            Method::CrfPlusSize => "crf_plus_size",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplicative decay applied every `decay_period` epochs.
    pub lr_decay: f64,
    pub decay_period: usize,
    pub mu_hat: f64,
    pub mu_tilde: f64,
    pub penalty_mu: f64,
    /// Per-epoch multiplicative growth of μ̂ and μ̃; 1 disables it.
    pub mu_growth: f64,
    pub crf_lambda: f64,
    pub crf_sigma: f64,
    pub crf_neighborhood: Neighborhood,
    pub epsilon: f64,
    pub optimizer: OptimizerKind,
    pub arch: NetArch,
    pub seed: u64,
    /// When false, timing columns are written as zero so histories are reproducible byte-for-byte.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    /// Schedule of the medical-image setting: Adam at 5e-4, divided by 4
    /// every 50 of 250 epochs, batch 8, λ = 100.
    fn default() -> Self {
        TrainConfig {
            method: Method::CrfPlusSize,
            epochs: 250,
            iters_per_epoch: 10,
            batch_size: 8,
            lr: 5e-4,
            lr_decay: 0.25,
            decay_period: 50,
            mu_hat: 1.0,
            mu_tilde: 1.0,
            penalty_mu: 1.0,
            mu_growth: 1.0,
            crf_lambda: 100.0,
            crf_sigma: 0.1,
            crf_neighborhood: Neighborhood::Grid4,
            epsilon: 0.1,
            optimizer: OptimizerKind::Adam,
            arch: NetArch::default(),
            seed: 0,
            record_timing: true,
        }
    }
}

impl TrainConfig {
    /// Short schedule sized for the synthetic presets.
    pub fn desk_defaults() -> Self {
        TrainConfig {
            epochs: 30,
            iters_per_epoch: 20,
            batch_size: 4,
            lr: 5e-3,
            lr_decay: 0.5,
            decay_period: 10,
            mu_hat: 1.0,
            mu_tilde: 1.0,
            penalty_mu: 0.01,
            crf_lambda: 3.0,
            crf_sigma: 0.1,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, "must be finite and > 0"))
            }
        };
        let nonneg = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, "must be finite and >= 0"))
            }
        };
        if self.iters_per_epoch == 0 {
            return Err(Error::config("train.iters_per_epoch", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        if self.decay_period == 0 {
            return Err(Error::config("train.decay_period", "must be >= 1"));
        }
        nonneg("train.lr", self.lr)?;
        if !(0.0..=1.0).contains(&self.lr_decay) {
            return Err(Error::config("train.lr_decay", "must lie in [0, 1]"));
        }
        nonneg("train.mu_hat", self.mu_hat)?;
        nonneg("train.mu_tilde", self.mu_tilde)?;
        nonneg("train.penalty_mu", self.penalty_mu)?;
        positive("train.mu_growth", self.mu_growth)?;
        nonneg("crf.lambda", self.crf_lambda)?;
        positive("crf.sigma", self.crf_sigma)?;
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("size.epsilon", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Learning rate in effect after `epochs_done` completed epochs.
    pub fn lr_at(&self, epochs_done: usize) -> f64 {
        self.lr * self.lr_decay.powi((epochs_done / self.decay_period) as i32)
    }

    /// CRF settings for a given μ̂. A zero μ̂ leaves λ/μ̂ undefined, so the
    /// Potts term is dropped and the proposal reduces to thresholding.
    pub fn crf_config(&self, mu_hat: f64) -> CrfConfig {
        if mu_hat > 0.0 {
            CrfConfig {
                lambda: self.crf_lambda,
                mu_hat,
                sigma: self.crf_sigma,
                neighborhood: self.crf_neighborhood,
            }
        } else {
            CrfConfig {
                lambda: 0.0,
                mu_hat: 1.0,
                sigma: self.crf_sigma,
                neighborhood: self.crf_neighborhood,
            }
        }
    }
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: NetParams,
    pub optimizer: Optimizer,
    pub y_hat: Vec<Proposal>,
    pub y_tilde: Vec<Proposal>,
    pub u_hat: Vec<Multiplier>,
    pub u_tilde: Vec<Multiplier>,
    pub epoch: usize,
    pub lr: f64,
    pub mu_hat: f64,
    pub mu_tilde: f64,
    rng: ChaCha8Rng,
}

/// Random parameters, proposals at 1/2, multipliers at 0.
pub fn initialize(train: &[Sample], cfg: &TrainConfig) -> Result<TrainState> {
    if train.is_empty() {
        return Err(Error::config("data.n_train", "training set is empty"));
    }
    cfg.validate()?;
    let params = NetParams::random(cfg.arch.clone(), cfg.seed);
    let optimizer = Optimizer::new(cfg.optimizer, params.len());
    let sizes: Vec<usize> = train.iter().map(|s| s.image.len()).collect();
    Ok(TrainState {
        params,
        optimizer,
        y_hat: sizes.iter().map(|&n| Proposal::filled(n, 0.5)).collect(),
        y_tilde: sizes.iter().map(|&n| Proposal::filled(n, 0.5)).collect(),
        u_hat: sizes.iter().map(|&n| Multiplier::filled(n, 0.0)).collect(),
        u_tilde: sizes.iter().map(|&n| Multiplier::filled(n, 0.0)).collect(),
        epoch: 0,
        lr: cfg.lr,
        mu_hat: cfg.mu_hat,
        mu_tilde: cfg.mu_tilde,
        rng: sampling_rng(cfg.seed),
    })
}

/// Generator used for batch sampling in a run with the given seed.
pub fn sampling_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1))
}

/// Per-image quantities that stay fixed during training.
pub struct TrainContext<'a> {
    pub samples: &'a [Sample],
    pub bounds: Vec<SizeBounds>,
    pub pairwise: Vec<PairwiseWeights>,
}

impl<'a> TrainContext<'a> {
    pub fn new(samples: &'a [Sample], cfg: &TrainConfig) -> Result<Self> {
        let bounds = samples
            .iter()
            .enumerate()
            .map(|(i, s)| make_bounds(s.true_size, cfg.epsilon).map_err(|e| e.for_image(i)))
            .collect::<Result<_>>()?;
        let pairwise = if cfg.method.uses_crf() {
            let crf = cfg.crf_config(1.0);
            samples
                .iter()
                .enumerate()
                .map(|(i, s)| compute_pairwise(&s.image, &crf).map_err(|e| e.for_image(i)))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(TrainContext {
            samples,
            bounds,
            pairwise,
        })
    }
}

/// Mean per-image loss terms of one epoch's batch steps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochLoss {
    pub ce: f64,
    pub hat: f64,
    pub tilde: f64,
}

/// Runs the batch descent steps of one epoch.
pub fn sgd_phase(state: &mut TrainState, ctx: &TrainContext<'_>, cfg: &TrainConfig) -> Result<EpochLoss> {
    let n = ctx.samples.len();
    let k = cfg.batch_size.min(n);
    let mut acc = LossParts::default();
    let mut seen = 0usize;
    for iter in 0..cfg.iters_per_epoch {
        let batch = index::sample(&mut state.rng, n, k).into_vec();
        let (parts, grad) = match cfg.method {
            Method::Penalty => {
                let items: Vec<PenaltyItem> = batch
                    .iter()
                    .map(|&i| PenaltyItem {
                        image: &ctx.samples[i].image,
                        annotation: &ctx.samples[i].annotation,
                        bounds: ctx.bounds[i],
                    })
                    .collect();
                penalty_loss_and_grad(&items, &state.params, cfg.penalty_mu)?
            }
            method => {
                let items: Vec<AdmmItem> = batch
                    .iter()
                    .map(|&i| AdmmItem {
                        image: &ctx.samples[i].image,
                        annotation: &ctx.samples[i].annotation,
                        hat: method.uses_crf().then(|| Coupling {
                            proposal: &state.y_hat[i],
                            multiplier: &state.u_hat[i],
                            mu: state.mu_hat,
                        }),
                        tilde: method.uses_size().then(|| Coupling {
                            proposal: &state.y_tilde[i],
                            multiplier: &state.u_tilde[i],
                            mu: state.mu_tilde,
                        }),
                    })
                    .collect();
                admm_loss_and_grad(&items, &state.params)?
            }
        };
        if !parts.total().is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss {} at epoch {} batch {iter}",
                parts.total(),
                state.epoch + 1
            )));
        }
        state
            .optimizer
            .step(&mut state.params, &grad, state.lr)
            .map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!(
                    "{m} at epoch {} batch {iter}",
                    state.epoch + 1
                )),
                other => other,
            })?;
        acc += parts;
        seen += k;
    }
    let d = seen.max(1) as f64;
    Ok(EpochLoss {
        ce: acc.ce / d,
        hat: acc.hat / d,
        tilde: acc.tilde / d,
    })
}

/// Fresh network outputs on every training image.
pub fn predict_all(params: &NetParams, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            network::forward(&s.image, params)
                .map(|o| o.into_values())
                .map_err(|e| e.for_image(i))
        })
        .collect()
}

/// Recomputes the enabled proposals from the given network outputs.
pub fn update_proposals(
    state: &mut TrainState,
    ctx: &TrainContext<'_>,
    cfg: &TrainConfig,
    outputs: &[Vec<f64>],
) -> Result<()> {
    let crf = cfg.crf_config(state.mu_hat);
    for (i, s) in outputs.iter().enumerate() {
        if cfg.method.uses_crf() {
            state.y_hat[i] = solve_crf_proposal(s, &state.u_hat[i], &ctx.pairwise[i], &crf)
                .map_err(|e| e.for_image(i))?;
        }
        if cfg.method.uses_size() {
            // The knapsack step minimizes μ̃/2 ‖s - ỹ + ũ‖² over binary ỹ, whose
            // per-pixel gain for ỹ_p = 1 is s_p + ũ_p - ½.
            let neg_u: Vec<f64> = state.u_tilde[i].iter().map(|u| -u).collect();
            let utilities = size_utilities(s, &neg_u).map_err(|e| e.for_image(i))?;
            state.y_tilde[i] =
                solve_size_knapsack(&utilities, ctx.bounds[i]).map_err(|e| e.for_image(i))?;
        }
    }
    Ok(())
}

/// Scaled dual ascent `u += s - y` for every enabled proposal.
pub fn update_multipliers(state: &mut TrainState, cfg: &TrainConfig, outputs: &[Vec<f64>]) {
    for (i, s) in outputs.iter().enumerate() {
        if cfg.method.uses_crf() {
            for ((u, y), s) in state.u_hat[i].iter_mut().zip(state.y_hat[i].iter()).zip(s) {
                *u += s - y;
            }
        }
        if cfg.method.uses_size() {
            for ((u, y), s) in state.u_tilde[i].iter_mut().zip(state.y_tilde[i].iter()).zip(s) {
                *u += s - y;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochTiming {
    pub sgd_seconds: f64,
    /// Fresh forward pass, both proposal solves and the multiplier update.
    pub proposal_seconds: f64,
}

/// One full epoch: batch steps, proposals, multipliers, schedule.
pub fn run_epoch(
    state: &mut TrainState,
    ctx: &TrainContext<'_>,
    cfg: &TrainConfig,
) -> Result<(EpochLoss, EpochTiming)> {
    let t0 = Instant::now();
    let loss = sgd_phase(state, ctx, cfg)?;
    let sgd_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    if cfg.method != Method::Penalty {
        let outputs = predict_all(&state.params, ctx.samples)?;
        update_proposals(state, ctx, cfg, &outputs)?;
        update_multipliers(state, cfg, &outputs);
    }
    let proposal_seconds = t1.elapsed().as_secs_f64();

    state.epoch += 1;
    state.lr = cfg.lr_at(state.epoch);
    state.mu_hat *= cfg.mu_growth;
    state.mu_tilde *= cfg.mu_growth;
    Ok((
        loss,
        EpochTiming {
            sgd_seconds,
            proposal_seconds,
        },
    ))
}

/// Validation summary of one network state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub dice_mean: f64,
    pub size_ratio_mean: f64,
    pub size_ratio_std: f64,
    pub violations: usize,
    pub within_bounds_rate: f64,
}

pub fn validate(params: &NetParams, samples: &[Sample], epsilon: f64) -> Result<Validation> {
    if samples.is_empty() {
        return Ok(Validation {
            dice_mean: f64::NAN,
            size_ratio_mean: f64::NAN,
            size_ratio_std: f64::NAN,
            violations: 0,
            within_bounds_rate: f64::NAN,
        });
    }
    let mut dices = Vec::with_capacity(samples.len());
    let mut ratios = Vec::with_capacity(samples.len());
    let mut violations = 0;
    for (i, s) in samples.iter().enumerate() {
        let out = network::forward(&s.image, params).map_err(|e| e.for_image(i))?;
        let pred = Mask::threshold(out.shape(), out.values())?;
        let bounds = make_bounds(s.true_size, epsilon).map_err(|e| e.for_image(i))?;
        let rec = size_stats(&pred, &s.gt, bounds).map_err(|e| e.for_image(i))?;
        dices.push(rec.dice);
        ratios.push(rec.size_ratio);
        violations += usize::from(!rec.within_bounds);
    }
    let (dice_mean, _) = mean_std(&dices);
    let (size_ratio_mean, size_ratio_std) = mean_std(&ratios);
    Ok(Validation {
        dice_mean,
        size_ratio_mean,
        size_ratio_std,
        violations,
        within_bounds_rate: 1.0 - violations as f64 / samples.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_ce: f64,
    pub loss_admm_hat: f64,
    pub loss_admm_tilde: f64,
    pub val_dice_mean: f64,
    pub size_ratio_mean: f64,
    pub size_ratio_std: f64,
    pub violations: usize,
    pub proposal_seconds: f64,
    pub epoch_seconds: f64,
    /// Not part of the CSV; kept for overhead reporting.
    pub sgd_seconds: f64,
}

pub const HISTORY_HEADER: &str = "epoch,loss_ce,loss_admm_hat,loss_admm_tilde,val_dice_mean,size_ratio_mean,size_ratio_std,violations,proposal_seconds,epoch_seconds";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.6},{:.6}\n",
                r.epoch,
                r.loss_ce,
                r.loss_admm_hat,
                r.loss_admm_tilde,
                r.val_dice_mean,
                r.size_ratio_mean,
                r.size_ratio_std,
                r.violations,
                r.proposal_seconds,
                r.epoch_seconds
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<History> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::Format(e.to_string()))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != HISTORY_HEADER {
            return Err(Error::Format(format!("unexpected history header `{header}`")));
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::Format(e.to_string()))?;
            let f = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number `{}`", &row[i])))
            };
            let u = |i: usize| -> Result<usize> {
                row[i]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad integer `{}`", &row[i])))
            };
            records.push(EpochRecord {
                epoch: u(0)?,
                loss_ce: f(1)?,
                loss_admm_hat: f(2)?,
                loss_admm_tilde: f(3)?,
                val_dice_mean: f(4)?,
                size_ratio_mean: f(5)?,
                size_ratio_std: f(6)?,
                violations: u(7)?,
                proposal_seconds: f(8)?,
                epoch_seconds: f(9)?,
                sgd_seconds: f64::NAN,
            });
        }
        Ok(History { records })
    }

    /// Total proposal time over total batch-step time.
    pub fn overhead_ratio(&self) -> f64 {
        let p: f64 = self.records.iter().map(|r| r.proposal_seconds).sum();
        let s: f64 = self.records.iter().map(|r| r.sgd_seconds).sum();
        p / s
    }
}

/// Runs all epochs, validating after each one.
pub fn train(train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<(NetParams, History)> {
    train_with(train, val, cfg, |_, _| {})
}

/// Like [`train`], calling `observe` after every epoch.
pub fn train_with(
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&TrainState, &EpochRecord),
) -> Result<(NetParams, History)> {
    let mut state = initialize(train, cfg)?;
    let ctx = TrainContext::new(train, cfg)?;
    let mut history = History::default();
    for _ in 0..cfg.epochs {
        let t0 = Instant::now();
        let (loss, timing) = run_epoch(&mut state, &ctx, cfg)?;
        let v = validate(&state.params, val, cfg.epsilon)?;
        let epoch_seconds = t0.elapsed().as_secs_f64();
        let timed = |x: f64| if cfg.record_timing { x } else { 0.0 };
        let rec = EpochRecord {
            epoch: state.epoch,
            loss_ce: loss.ce,
            loss_admm_hat: loss.hat,
            loss_admm_tilde: loss.tilde,
            val_dice_mean: v.dice_mean,
            size_ratio_mean: v.size_ratio_mean,
            size_ratio_std: v.size_ratio_std,
            violations: v.violations,
            proposal_seconds: timed(timing.proposal_seconds),
            epoch_seconds: timed(epoch_seconds),
            sgd_seconds: timed(timing.sgd_seconds),
        };
        observe(&state, &rec);
        history.records.push(rec);
    }
    Ok((state.params, history))
}
