//! Small fully-convolutional segmentation network with hand-written
//! reverse-mode gradients.
//!
//! Every layer is a 3×3 "same" convolution. Hidden layers use ELU and the
//! single-channel head is a sigmoid, so the output is one foreground
//! probability per pixel at full resolution.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{GridImage, GridShape};
use crate::seg::{check_len, SoftSeg, WeakAnnotation};
use crate::size_proposal::SizeBounds;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Lower/upper clamp applied to probabilities inside logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

/// Channel widths from input to output, e.g. `[1, 8, 16, 8, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetArch {
    widths: Vec<usize>,
}

impl Default for NetArch {
    fn default() -> Self {
        NetArch {
            widths: vec![1, 8, 16, 8, 1],
        }
    }
}

impl NetArch {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("net.widths", "need at least one layer"));
        }
        if widths[0] != 1 || *widths.last().unwrap() != 1 {
            return Err(Error::config(
                "net.widths",
                "input and output must have one channel",
            ));
        }
        if widths.contains(&0) {
            return Err(Error::config("net.widths", "zero-width layer"));
        }
        Ok(NetArch { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    c_in: w[0],
                    c_out: w[1],
                    w_off: offset,
                    b_off: offset + w[0] * w[1] * TAPS,
                };
                offset = layer.b_off + w[1];
                layer
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] * TAPS + w[1])
            .sum()
    }
}

impl fmt::Display for NetArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        f.write_str(&s.join(","))
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    c_in: usize,
    c_out: usize,
    w_off: usize,
    b_off: usize,
}

/// Network parameters θ as one flat vector. Per layer: weights laid out
/// `[out][in][ky][kx]`, then one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    arch: NetArch,
    data: Vec<f64>,
}

impl NetParams {
    pub fn zeros(arch: NetArch) -> Self {
        let n = arch.param_count();
        NetParams {
            arch,
            data: vec![0.0; n],
        }
    }

    /// He-normal weights, zero biases.
    pub fn random(arch: NetArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = NetParams::zeros(arch);
        for layer in params.arch.layers() {
            let std = (2.0 / (layer.c_in * TAPS) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in &mut params.data[layer.w_off..layer.b_off] {
                *v = normal.sample(&mut rng);
            }
        }
        params
    }

    pub fn from_flat(arch: NetArch, data: Vec<f64>) -> Result<Self> {
        check_len("NetParams::from_flat", arch.param_count(), data.len())?;
        Ok(NetParams { arch, data })
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[inline]
fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Half-open range of output rows (or columns) whose tap at `d` stays inside.
#[inline]
fn valid(d: isize, n: usize) -> (usize, usize) {
    ((-d).max(0) as usize, (n as isize - d.max(0)) as usize)
}

fn conv_forward(layer: Layer, params: &[f64], input: &[f64], h: usize, w: usize, out: &mut [f64]) {
    let hw = h * w;
    let weights = &params[layer.w_off..layer.b_off];
    for co in 0..layer.c_out {
        let dst = &mut out[co * hw..(co + 1) * hw];
        dst.fill(params[layer.b_off + co]);
        for ci in 0..layer.c_in {
            let src = &input[ci * hw..(ci + 1) * hw];
            let k = &weights[(co * layer.c_in + ci) * TAPS..][..TAPS];
            for (t, &wv) in k.iter().enumerate() {
                let (dy, dx) = ((t / KERNEL) as isize - 1, (t % KERNEL) as isize - 1);
                let (y0, y1) = valid(dy, h);
                let (x0, x1) = valid(dx, w);
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let s = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    let d = &mut dst[y * w + x0..y * w + x1];
                    for (d, s) in d.iter_mut().zip(s) {
                        *d += wv * s;
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and, when `d_input` is given, the
/// gradient with respect to the layer input.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    layer: Layer,
    params: &[f64],
    input: &[f64],
    d_out: &[f64],
    h: usize,
    w: usize,
    grad: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    let hw = h * w;
    if let Some(di) = d_input.as_deref_mut() {
        di.fill(0.0);
    }
    for co in 0..layer.c_out {
        let g = &d_out[co * hw..(co + 1) * hw];
        grad[layer.b_off + co] += g.iter().sum::<f64>();
        for ci in 0..layer.c_in {
            let src = &input[ci * hw..(ci + 1) * hw];
            let base = layer.w_off + (co * layer.c_in + ci) * TAPS;
            for t in 0..TAPS {
                let (dy, dx) = ((t / KERNEL) as isize - 1, (t % KERNEL) as isize - 1);
                let (y0, y1) = valid(dy, h);
                let (x0, x1) = valid(dx, w);
                let len = x1 - x0;
                let mut acc = 0.0;
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let s = &src[sy * w + sx0..][..len];
                    let gg = &g[y * w + x0..][..len];
                    acc += s.iter().zip(gg).map(|(a, b)| a * b).sum::<f64>();
                }
                grad[base + t] += acc;
                if let Some(di) = d_input.as_deref_mut() {
                    let wv = params[base + t];
                    let dplane = &mut di[ci * hw..(ci + 1) * hw];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let d = &mut dplane[sy * w + sx0..][..len];
                        let gg = &g[y * w + x0..][..len];
                        for (d, gv) in d.iter_mut().zip(gg) {
                            *d += wv * gv;
                        }
                    }
                }
            }
        }
    }
}

/// Activations retained for the backward pass.
pub struct ForwardCache {
    shape: GridShape,
    /// Layer inputs: `inputs[0]` is the image, `inputs[l]` the ELU output of layer `l-1`.
    inputs: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl ForwardCache {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn soft_seg(&self) -> SoftSeg {
        SoftSeg::new(self.shape, self.probs.clone()).expect("sigmoid output lies in [0, 1]")
    }
}

fn check_image(img: &GridImage) -> Result<()> {
    if !img.shape().is_2d() {
        return Err(Error::dim("network input depth", 1, img.shape().depth));
    }
    if img.is_empty() {
        return Err(Error::dim("network input", 1, 0));
    }
    Ok(())
}

pub fn forward_cached(img: &GridImage, params: &NetParams) -> Result<ForwardCache> {
    check_image(img)?;
    let shape = img.shape();
    let (h, w) = (shape.height, shape.width);
    let hw = h * w;
    let layers = params.arch.layers();
    let mut inputs = Vec::with_capacity(layers.len());
    inputs.push(img.values().to_vec());
    let mut probs = Vec::new();
    for (l, &layer) in layers.iter().enumerate() {
        let mut out = vec![0.0; layer.c_out * hw];
        conv_forward(layer, &params.data, &inputs[l], h, w, &mut out);
        if l + 1 == layers.len() {
            probs = out.into_iter().map(sigmoid).collect();
        } else {
            out.iter_mut().for_each(|z| *z = elu(*z));
            inputs.push(out);
        }
    }
    Ok(ForwardCache {
        shape,
        inputs,
        probs,
    })
}

/// Per-pixel foreground probabilities `s = f(x; θ)`.
pub fn forward(img: &GridImage, params: &NetParams) -> Result<SoftSeg> {
    Ok(forward_cached(img, params)?.soft_seg())
}

/// Backpropagates `∂L/∂s` through the network, adding `∂L/∂θ` into `grad`.
pub fn backward(cache: &ForwardCache, params: &NetParams, d_probs: &[f64], grad: &mut [f64]) -> Result<()> {
    check_len("backward", cache.probs.len(), d_probs.len())?;
    check_len("backward grad", params.len(), grad.len())?;
    let (h, w) = (cache.shape.height, cache.shape.width);
    let layers = params.arch.layers();
    // through the sigmoid head
    let mut d_out: Vec<f64> = cache
        .probs
        .iter()
        .zip(d_probs)
        .map(|(s, g)| g * s * (1.0 - s))
        .collect();
    for l in (0..layers.len()).rev() {
        let layer = layers[l];
        let input = &cache.inputs[l];
        if l == 0 {
            conv_backward(layer, &params.data, input, &d_out, h, w, grad, None);
        } else {
            let mut d_in = vec![0.0; input.len()];
            conv_backward(layer, &params.data, input, &d_out, h, w, grad, Some(&mut d_in));
            // through ELU: derivative is 1 above zero, exp(z) = a + 1 below
            for (d, &a) in d_in.iter_mut().zip(input) {
                if a <= 0.0 {
                    *d *= a + 1.0;
                }
            }
            d_out = d_in;
        }
    }
    Ok(())
}

#[inline]
fn clamp_prob(s: f64) -> f64 {
    s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Partial cross-entropy over the annotated pixels.
pub fn partial_ce_loss(s: &[f64], ann: &WeakAnnotation) -> Result<f64> {
    if let Some(&p) = ann.omega().last() {
        if p >= s.len() {
            return Err(Error::dim("partial_ce_loss", s.len(), p));
        }
    }
    Ok(ann
        .iter()
        .map(|(p, y)| {
            let sp = clamp_prob(s[p]);
            if y == 1 {
                -sp.ln()
            } else {
                -(1.0 - sp).ln()
            }
        })
        .sum())
}

/// Adds `∂CE/∂s` into `d_s`. Zero where the clamp is active.
fn partial_ce_grad(s: &[f64], ann: &WeakAnnotation, d_s: &mut [f64]) {
    for (p, y) in ann.iter() {
        let sp = s[p];
        if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&sp) {
            continue;
        }
        d_s[p] += if y == 1 { -1.0 / sp } else { 1.0 / (1.0 - sp) };
    }
}

/// One quadratic coupling `μ/2 ‖s - y + u‖²` between the network output and
/// a proposal `y` with scaled multiplier `u`.
#[derive(Debug, Clone, Copy)]
pub struct Coupling<'a> {
    pub proposal: &'a [f64],
    pub multiplier: &'a [f64],
    pub mu: f64,
}

impl Coupling<'_> {
    fn check(&self, n: usize) -> Result<()> {
        check_len("coupling proposal", n, self.proposal.len())?;
        check_len("coupling multiplier", n, self.multiplier.len())
    }

    /// Adds the loss and its `∂/∂s` contribution; a zero `μ` contributes nothing.
    fn accumulate(&self, s: &[f64], d_s: &mut [f64]) -> f64 {
        if self.mu == 0.0 {
            return 0.0;
        }
        let mut loss = 0.0;
        for p in 0..s.len() {
            let r = s[p] - self.proposal[p] + self.multiplier[p];
            loss += r * r;
            d_s[p] += self.mu * r;
        }
        0.5 * self.mu * loss
    }
}

/// One image of an ADMM batch.
#[derive(Debug, Clone, Copy)]
pub struct AdmmItem<'a> {
    pub image: &'a GridImage,
    pub annotation: &'a WeakAnnotation,
    pub hat: Option<Coupling<'a>>,
    pub tilde: Option<Coupling<'a>>,
}

/// One image of a penalty-baseline batch.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyItem<'a> {
    pub image: &'a GridImage,
    pub annotation: &'a WeakAnnotation,
    pub bounds: SizeBounds,
}

/// Batch loss split into its terms. For the penalty baseline the size
/// penalty is reported in `tilde`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub ce: f64,
    pub hat: f64,
    pub tilde: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.ce + self.hat + self.tilde
    }
}

impl std::ops::AddAssign for LossParts {
    fn add_assign(&mut self, o: Self) {
        self.ce += o.ce;
        self.hat += o.hat;
        self.tilde += o.tilde;
    }
}

/// Partial CE plus both quadratic couplings, summed over the batch, and the
/// gradient `Σ ∇CE + Σ_p (μ̂ r̂_p + μ̃ r̃_p) ∇s_p`.
pub fn admm_loss_and_grad(batch: &[AdmmItem<'_>], params: &NetParams) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let mut parts = LossParts::default();
    for item in batch {
        let cache = forward_cached(item.image, params)?;
        let s = cache.probs();
        let mut d_s = vec![0.0; s.len()];
        parts.ce += partial_ce_loss(s, item.annotation)?;
        partial_ce_grad(s, item.annotation, &mut d_s);
        if let Some(c) = item.hat {
            c.check(s.len())?;
            parts.hat += c.accumulate(s, &mut d_s);
        }
        if let Some(c) = item.tilde {
            c.check(s.len())?;
            parts.tilde += c.accumulate(s, &mut d_s);
        }
        backward(&cache, params, &d_s, &mut grad)?;
    }
    Ok((parts, grad))
}

/// Squared-hinge size penalty on `Σ_p s_p` for both bounds, and its uniform
/// per-pixel derivative `F`.
pub fn size_penalty(sum: f64, bounds: SizeBounds, mu: f64) -> (f64, f64) {
    let over = (sum - bounds.s_max as f64).max(0.0);
    let under = (bounds.s_min as f64 - sum).max(0.0);
    (0.5 * mu * (over * over + under * under), mu * (over - under))
}

/// Partial CE plus the squared-hinge size penalty, summed over the batch.
pub fn penalty_loss_and_grad(
    batch: &[PenaltyItem<'_>],
    params: &NetParams,
    mu: f64,
) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let mut parts = LossParts::default();
    for item in batch {
        let cache = forward_cached(item.image, params)?;
        let s = cache.probs();
        let mut d_s = vec![0.0; s.len()];
        parts.ce += partial_ce_loss(s, item.annotation)?;
        partial_ce_grad(s, item.annotation, &mut d_s);
        if mu != 0.0 {
            let (pen, f) = size_penalty(s.iter().sum(), item.bounds, mu);
            parts.tilde += pen;
            if f != 0.0 {
                d_s.iter_mut().for_each(|d| *d += f);
            }
        }
        backward(&cache, params, &d_s, &mut grad)?;
    }
    Ok((parts, grad))
}

fn check_finite(grad: &[f64]) -> Result<()> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::Numerical(format!(
            "non-finite gradient entry {} at parameter {i}",
            grad[i]
        ))),
        None => Ok(()),
    }
}

/// Plain gradient descent `θ ← θ - η g`.
pub fn sgd_step(params: &mut NetParams, grad: &[f64], lr: f64) -> Result<()> {
    check_len("sgd_step", params.len(), grad.len())?;
    check_finite(grad)?;
    for (p, g) in params.data.iter_mut().zip(grad) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config(
                "train.optimizer",
                format!("unknown optimizer `{other}`"),
            )),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Descent step state. Adam uses β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        t: u32,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: vec![0.0; param_count],
                v: vec![0.0; param_count],
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut NetParams, grad: &[f64], lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd => sgd_step(params, grad, lr),
            Optimizer::Adam { m, v, t } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                check_len("adam step", params.len(), grad.len())?;
                check_finite(grad)?;
                *t += 1;
                let c1 = 1.0 - B1.powi(*t as i32);
                let c2 = 1.0 - B2.powi(*t as i32);
                for i in 0..grad.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * grad[i] * grad[i];
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    params.data[i] -= lr * mh / (vh.sqrt() + EPS);
                }
                Ok(())
            }
        }
    }
}
