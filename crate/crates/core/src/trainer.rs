//! Stochastic gradient descent for the sequential predictor.
//!
//! One step runs a forward sweep over an image, keeping the hidden
//! activations of every position, then walks the positions backwards. The
//! gradient reaching `U[:, p]` is the sum of the hidden-layer errors of all
//! predictions made after `p` was consumed; it is carried as a running sum
//! `dacc` while walking back, and what is left of it at the end belongs to
//! `b_h`.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{BinaryImage, Dataset};
use crate::model::{clamp_prob, code_length, forward_trace, sigmoid, Model, ModelError, Variant, PROB_CLAMP};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("update produced a non-finite parameter at iteration {iteration}")]
    NonFiniteGradient { iteration: u64 },
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationStrategy {
    /// A fresh random order for every step; inference uses raster order.
    PerIterationRandom,
    /// One random order drawn at initialization and kept.
    FixedRandom,
    Raster,
}

impl PermutationStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per_iter" | "per_iteration_random" => Some(Self::PerIterationRandom),
            "fixed" | "fixed_random" => Some(Self::FixedRandom),
            "raster" => Some(Self::Raster),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PerIterationRandom => "per_iter",
            Self::FixedRandom => "fixed",
            Self::Raster => "raster",
        }
    }
}

pub fn parse_variant(s: &str) -> Option<Variant> {
    match s {
        "full" => Some(Variant::FULL),
        "uv_only" => Some(Variant::UV_ONLY),
        "r_only" => Some(Variant::R_ONLY),
        _ => None,
    }
}

pub fn variant_name(v: Variant) -> &'static str {
    match (v.use_uv, v.use_r) {
        (true, true) => "full",
        (true, false) => "uv_only",
        _ => "r_only",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub variant: Variant,
    pub eta0: f64,
    /// Decay constant of `η(t) = η₀ / (1 + t / t0)`; `None` means ten passes
    /// over the training portion.
    pub t0: Option<f64>,
    pub l2_lambda: f64,
    pub regularize_biases: bool,
    pub strategy: PermutationStrategy,
    pub max_iterations: u64,
    pub eval_every: u64,
    /// Evaluations without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Recompute hidden activations in the backward pass instead of storing them.
    pub low_memory: bool,
    pub fast_sigmoid: bool,
    pub time_budget: Option<Duration>,
    /// Number of training images scored for the training curve.
    pub train_eval_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 200,
            variant: Variant::FULL,
            eta0: 0.05,
            t0: None,
            l2_lambda: 0.0,
            regularize_biases: false,
            strategy: PermutationStrategy::FixedRandom,
            max_iterations: 200_000,
            eval_every: 10_000,
            patience: 5,
            seed: 1,
            low_memory: false,
            fast_sigmoid: false,
            time_budget: None,
            train_eval_size: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad("eta0 must be positive");
        }
        if self.t0.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return bad("t0 must be positive");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if !self.variant.use_uv && !self.variant.use_r {
            return bad("variant disables both prediction paths");
        }
        if self.variant.use_uv && self.hidden == 0 {
            return bad("hidden path needs at least one hidden unit");
        }
        Ok(())
    }

    /// Sets one option from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, TrainError> {
            v.parse().map_err(|_| TrainError::Config(format!("bad value {v:?} for {key}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool, TrainError> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(TrainError::Config(format!("bad value {v:?} for {key}"))),
            }
        }
        match key {
            "hidden" => self.hidden = num(key, value)?,
            "variant" => {
                self.variant = parse_variant(value).ok_or_else(|| TrainError::Config(format!("unknown variant {value:?}")))?
            }
            "subtract_mean" => self.variant.subtract_mean = flag(key, value)?,
            "eta0" => self.eta0 = num(key, value)?,
            "t0" => self.t0 = Some(num(key, value)?),
            "l2" | "l2_lambda" => self.l2_lambda = num(key, value)?,
            "regularize_biases" => self.regularize_biases = flag(key, value)?,
            "perm" | "permutation_strategy" => {
                self.strategy = PermutationStrategy::parse(value)
                    .ok_or_else(|| TrainError::Config(format!("unknown permutation strategy {value:?}")))?
            }
            "max_iterations" => self.max_iterations = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "low_memory" => self.low_memory = flag(key, value)?,
            "fast_sigmoid" => self.fast_sigmoid = flag(key, value)?,
            "time_budget_secs" => self.time_budget = Some(Duration::from_secs_f64(num(key, value)?)),
            "train_eval_size" => self.train_eval_size = num(key, value)?,
            _ => return Err(TrainError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), TrainError> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("expected key = value, got {line:?}")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub iteration: u64,
    pub train_bits: f64,
    pub val_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub iterations: u64,
    pub curve: Vec<EvalPoint>,
    pub best_val_bits: Option<f64>,
    pub best_iteration: Option<u64>,
    pub stopped_early: bool,
}

impl TrainReport {
    /// One `{"iteration":…,"train_bits":…,"val_bits":…}` line per evaluation.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for p in &self.curve {
            let _ = writeln!(
                out,
                "{{\"iteration\":{},\"train_bits\":{:.6},\"val_bits\":{:.6}}}",
                p.iteration, p.train_bits, p.val_bits
            );
        }
        out
    }
}

/// Gradients of the natural-log loss, in the same layouts as [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub r: Vec<f64>,
    pub b_h: Vec<f64>,
    pub b_y: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients {
            u: vec![0.0; model.u.len()],
            v: vec![0.0; model.v.len()],
            r: vec![0.0; model.r.len()],
            b_h: vec![0.0; model.n_h],
            b_y: vec![0.0; model.n_x],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub l2_lambda: f64,
    pub regularize_biases: bool,
    pub low_memory: bool,
}

impl StepOptions {
    pub fn plain(l2_lambda: f64) -> Self {
        StepOptions { l2_lambda, regularize_biases: false, low_memory: false }
    }
}

enum Sink<'a> {
    Apply { eta: f64, decay: f64, bias_decay: f64 },
    Collect(&'a mut Gradients),
}

/// Buffers reused across steps.
#[derive(Debug, Default)]
pub struct Scratch {
    h_save: Vec<f64>,
    h: Vec<f64>,
    h_u: Vec<f64>,
    r_acc: Vec<f64>,
    y: Vec<f64>,
    g: Vec<f64>,
    xb: Vec<f64>,
    dacc: Vec<f64>,
}

fn is_identity(order: &[usize]) -> bool {
    order.iter().enumerate().all(|(i, &p)| i == p)
}

/// Forward + backward pass over one image in visiting `order`. Returns the
/// image's code length in bits before the update.
fn step_kernel(
    model: &mut Model,
    image: &BinaryImage,
    order: &[usize],
    low_memory: bool,
    sink: &mut Sink<'_>,
    s: &mut Scratch,
) -> Result<f64, ModelError> {
    let (n_x, n_h) = (model.n_x, model.n_h);
    if image.pixels.len() != n_x {
        return Err(ModelError::SizeMismatch { expected: n_x, got: image.pixels.len() });
    }
    crate::model::validate_permutation(order, n_x)?;
    let raster = if order == model.permutation() { model.is_raster() } else { is_identity(order) };
    let Variant { use_uv, use_r, .. } = model.variant;
    let x = &image.pixels;

    s.h_save.resize(if low_memory { 0 } else { n_x * n_h }, 0.0);
    s.h.resize(n_h, 0.0);
    s.h_u.clear();
    s.h_u.extend_from_slice(&model.b_h);
    s.r_acc.clear();
    s.r_acc.resize(n_x, 0.0);
    s.y.resize(n_x, 0.0);
    s.g.resize(n_x, 0.0);
    s.xb.resize(n_x, 0.0);

    let mut bits = 0.0;
    // σ(h_u) only changes after a pixel with nonzero centered value.
    let mut h_stale = true;
    for t in 0..n_x {
        let q = order[t];
        if use_uv {
            if h_stale {
                model.hidden_into(&s.h_u, &mut s.h);
                h_stale = false;
            }
            if !low_memory {
                s.h_save[t * n_h..(t + 1) * n_h].copy_from_slice(&s.h);
            }
        }
        let y = sigmoid(model.output_logit(q, &s.h, &s.r_acc));
        s.y[t] = y;
        s.g[t] = y - f64::from(x[q]);
        bits += code_length(x[q], y);
        let xb = model.centered(q, x[q]);
        s.xb[t] = xb;
        if xb != 0.0 {
            if use_uv {
                for (acc, w) in s.h_u.iter_mut().zip(&model.u[q * n_h..(q + 1) * n_h]) {
                    *acc += w * xb;
                }
                h_stale = true;
            }
            if use_r {
                model.spread_direct(order, raster, t, xb, &mut s.r_acc);
            }
        }
    }

    s.dacc.clear();
    s.dacc.resize(n_h, 0.0);
    for t in (0..n_x).rev() {
        let q = order[t];
        let g = s.g[t];
        let xb = s.xb[t];
        if use_uv {
            let u_col = &mut model.u[q * n_h..(q + 1) * n_h];
            let h_t: &[f64] = if low_memory {
                if xb != 0.0 {
                    for (acc, w) in s.h_u.iter_mut().zip(u_col.iter()) {
                        *acc -= w * xb;
                    }
                }
                model_hidden(model.fast_sigmoid, &s.h_u, &mut s.h);
                &s.h
            } else {
                &s.h_save[t * n_h..(t + 1) * n_h]
            };
            let u_col = &mut model.u[q * n_h..(q + 1) * n_h];
            match sink {
                Sink::Apply { eta, decay, .. } => {
                    for (w, d) in u_col.iter_mut().zip(&s.dacc) {
                        *w -= *eta * (d * xb + *decay * *w);
                    }
                }
                Sink::Collect(gr) => {
                    for (o, d) in gr.u[q * n_h..(q + 1) * n_h].iter_mut().zip(&s.dacc) {
                        *o += d * xb;
                    }
                }
            }
            let v_row = &mut model.v[q * n_h..(q + 1) * n_h];
            for ((acc, &w), &h) in s.dacc.iter_mut().zip(v_row.iter()).zip(h_t) {
                *acc += g * w * h * (1.0 - h);
            }
            match sink {
                Sink::Apply { eta, decay, .. } => {
                    for (w, &h) in v_row.iter_mut().zip(h_t) {
                        *w -= *eta * (g * h + *decay * *w);
                    }
                }
                Sink::Collect(gr) => {
                    for (o, &h) in gr.v[q * n_h..(q + 1) * n_h].iter_mut().zip(h_t) {
                        *o += g * h;
                    }
                }
            }
        }
        match sink {
            Sink::Apply { eta, bias_decay, .. } => {
                let b = &mut model.b_y[q];
                *b -= *eta * (g + *bias_decay * *b);
            }
            Sink::Collect(gr) => gr.b_y[q] += g,
        }
    }
    if use_uv {
        match sink {
            Sink::Apply { eta, bias_decay, .. } => {
                for (b, d) in model.b_h.iter_mut().zip(&s.dacc) {
                    *b -= *eta * (d + *bias_decay * *b);
                }
            }
            Sink::Collect(gr) => {
                for (o, d) in gr.b_h.iter_mut().zip(&s.dacc) {
                    *o += d;
                }
            }
        }
    }

    // R[q][src] for every q visited after src: gradient g_q · x̄_src.
    if use_r {
        for t in 0..n_x {
            let src = order[t];
            let xb = s.xb[t];
            let row = src * n_x..(src + 1) * n_x;
            match sink {
                Sink::Apply { eta, decay, .. } => {
                    let row = &mut model.r[row];
                    if raster {
                        for (w, g) in row[t + 1..].iter_mut().zip(&s.g[t + 1..]) {
                            *w -= *eta * (g * xb + *decay * *w);
                        }
                    } else {
                        for (&q, g) in order[t + 1..].iter().zip(&s.g[t + 1..]) {
                            let w = &mut row[q];
                            *w -= *eta * (g * xb + *decay * *w);
                        }
                    }
                }
                Sink::Collect(gr) => {
                    let row = &mut gr.r[row];
                    for (&q, g) in order[t + 1..].iter().zip(&s.g[t + 1..]) {
                        row[q] += g * xb;
                    }
                }
            }
        }
    }
    Ok(bits)
}

fn model_hidden(fast: bool, h_u: &[f64], h: &mut [f64]) {
    if fast {
        for (o, &a) in h.iter_mut().zip(h_u) {
            *o = crate::model::sigmoid_lut(a);
        }
    } else {
        for (o, &a) in h.iter_mut().zip(h_u) {
            *o = sigmoid(a);
        }
    }
}

/// Gradient of the image's natural-log loss with respect to every parameter.
pub fn gradients(model: &Model, image: &BinaryImage, order: &[usize], low_memory: bool) -> Result<(f64, Gradients), ModelError> {
    let mut grads = Gradients::zeros_like(model);
    let mut work = model.clone();
    let bits = step_kernel(&mut work, image, order, low_memory, &mut Sink::Collect(&mut grads), &mut Scratch::default())?;
    Ok((bits, grads))
}

fn all_finite(model: &Model) -> bool {
    [&model.u, &model.v, &model.r, &model.b_h, &model.b_y]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
}

/// One SGD step on `image` visited in `permutation` order. L2 shrinkage
/// `η·λ·w` is added to the U, V and R updates (and to the biases when
/// `regularize_biases` is set). Returns the image's bits before the update.
pub fn train_step_with(
    model: &mut Model,
    image: &BinaryImage,
    permutation: &[usize],
    eta: f64,
    opts: &StepOptions,
    scratch: &mut Scratch,
) -> Result<f64, TrainError> {
    let bias_decay = if opts.regularize_biases { opts.l2_lambda } else { 0.0 };
    let mut sink = Sink::Apply { eta, decay: opts.l2_lambda, bias_decay };
    let bits = step_kernel(model, image, permutation, opts.low_memory, &mut sink, scratch)?;
    let sentinel = model.b_h.iter().chain(&model.b_y).sum::<f64>() + scratch.dacc.iter().sum::<f64>();
    if !sentinel.is_finite() || !bits.is_finite() {
        return Err(TrainError::NonFiniteGradient { iteration: 0 });
    }
    Ok(bits)
}

pub fn train_step(
    model: &mut Model,
    image: &BinaryImage,
    permutation: &[usize],
    eta: f64,
    l2_lambda: f64,
) -> Result<f64, TrainError> {
    let bits = train_step_with(model, image, permutation, eta, &StepOptions::plain(l2_lambda), &mut Scratch::default())?;
    if !all_finite(model) {
        return Err(TrainError::NonFiniteGradient { iteration: 0 });
    }
    Ok(bits)
}

/// Mean code length in bits per image. Images are scored in parallel and
/// summed in input order.
pub fn evaluate(model: &Model, images: &[BinaryImage]) -> Result<f64, ModelError> {
    if images.is_empty() {
        return Ok(0.0);
    }
    let totals = images
        .par_iter()
        .map(|im| forward_trace(model, im).map(|t| t.total_bits))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(totals.iter().sum::<f64>() / images.len() as f64)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fresh parameters: U, V, R uniform in ±1/√fan-in, `b_h = 0`, `b_y` the
/// logit of the clamped training mean. Only R entries reachable under
/// `causal_order` are drawn; pass `None` to draw every off-diagonal entry.
pub fn init_model<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    hidden: usize,
    variant: Variant,
    mean_image: &[f64],
    causal_order: Option<&[usize]>,
    rng: &mut R,
) -> Model {
    let n_h = if variant.use_uv { hidden } else { 0 };
    let mut m = Model::zeros(width, height, n_h, variant);
    let n_x = m.n_x;
    m.x_ave = mean_image.to_vec();
    m.b_y = mean_image.iter().map(|&p| logit(clamp_prob(p))).collect();
    if variant.use_uv {
        let a = 1.0 / (n_x as f64).sqrt();
        m.u.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        let a = 1.0 / (n_h as f64).sqrt();
        m.v.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
    }
    if variant.use_r {
        let a = 1.0 / (n_x as f64).sqrt();
        match causal_order {
            Some(order) => {
                for (t, &src) in order.iter().enumerate() {
                    for &dst in &order[t + 1..] {
                        *m.r_at_mut(dst, src) = rng.random_range(-a..a);
                    }
                }
            }
            None => {
                for src in 0..n_x {
                    for dst in (0..n_x).filter(|&d| d != src) {
                        *m.r_at_mut(dst, src) = rng.random_range(-a..a);
                    }
                }
            }
        }
    }
    debug_assert!(PROB_CLAMP > 0.0);
    m
}

/// Trains a model on `dataset` (a training split). The last tenth of the
/// split is held out for validation; the returned model is the snapshot
/// with the lowest validation bits.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(Model, TrainReport), TrainError> {
    train_with_progress(dataset, config, |_| {})
}

pub fn train_with_progress<F: FnMut(&EvalPoint)>(
    dataset: &Dataset,
    config: &TrainConfig,
    mut progress: F,
) -> Result<(Model, TrainReport), TrainError> {
    config.validate()?;
    if dataset.images.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_x = dataset.width * dataset.height;
    let fixed_order: Vec<usize> = match config.strategy {
        PermutationStrategy::FixedRandom => {
            let mut p: Vec<usize> = (0..n_x).collect();
            p.shuffle(&mut rng);
            p
        }
        _ => (0..n_x).collect(),
    };
    let causal = match config.strategy {
        PermutationStrategy::PerIterationRandom => None,
        _ => Some(fixed_order.as_slice()),
    };
    let mut model = init_model(
        dataset.width,
        dataset.height,
        config.hidden,
        config.variant,
        &dataset.mean_image,
        causal,
        &mut rng,
    );
    model.set_permutation(fixed_order.clone())?;
    model.fast_sigmoid = config.fast_sigmoid;

    // Under a fixed random order, train on pixels renamed by visiting
    // position: every loop over later pixels then runs over contiguous
    // memory. Predictions are unchanged; the result is renamed back.
    let relabel = config.strategy == PermutationStrategy::FixedRandom;
    let renamed: Vec<BinaryImage>;
    let images: &[BinaryImage] = if relabel {
        let mut to_visit = vec![0; n_x];
        for (t, &p) in fixed_order.iter().enumerate() {
            to_visit[p] = t;
        }
        model = model.relabeled(&to_visit);
        renamed = dataset
            .images
            .iter()
            .map(|im| BinaryImage { pixels: fixed_order.iter().map(|&p| im.pixels[p]).collect(), ..im.clone() })
            .collect();
        &renamed
    } else {
        &dataset.images
    };
    let restore = |m: Model| if relabel { m.relabeled(&fixed_order) } else { m };
    let n = images.len();
    let n_val = if n >= 2 { (n / 10).max(1) } else { 1 };
    let (fit, val) = if n >= 2 { images.split_at(n - n_val) } else { (images, images) };
    let train_probe = &fit[..config.train_eval_size.clamp(1, fit.len())];

    let mut report = TrainReport::default();
    let t0 = config.t0.unwrap_or(10.0 * fit.len() as f64);
    let opts = StepOptions {
        l2_lambda: config.l2_lambda,
        regularize_biases: config.regularize_biases,
        low_memory: config.low_memory,
    };
    let started = Instant::now();
    let mut scratch = Scratch::default();
    let mut order: Vec<usize> = if relabel { (0..n_x).collect() } else { fixed_order.clone() };
    let mut best = model.clone();
    let mut since_best = 0usize;

    let mut record = |model: &Model, iteration: u64, report: &mut TrainReport| -> Result<bool, TrainError> {
        let point = EvalPoint {
            iteration,
            train_bits: evaluate(model, train_probe)?,
            val_bits: evaluate(model, val)?,
        };
        progress(&point);
        report.curve.push(point);
        let improved = report.best_val_bits.is_none_or(|b| point.val_bits < b);
        if improved {
            report.best_val_bits = Some(point.val_bits);
            report.best_iteration = Some(iteration);
        }
        Ok(improved)
    };

    if record(&model, 0, &mut report)? {
        best = model.clone();
    }
    if config.max_iterations == 0 {
        return Ok((restore(best), report));
    }
    let mut t = 0u64;
    while t < config.max_iterations {
        let idx = rng.random_range(0..fit.len());
        if config.strategy == PermutationStrategy::PerIterationRandom {
            order.shuffle(&mut rng);
        }
        let eta = config.eta0 / (1.0 + t as f64 / t0);
        train_step_with(&mut model, &fit[idx], &order, eta, &opts, &mut scratch)
            .map_err(|_| TrainError::NonFiniteGradient { iteration: t })?;
        t += 1;

        let out_of_time = config.time_budget.is_some_and(|b| started.elapsed() >= b);
        if t % config.eval_every == 0 || t == config.max_iterations || out_of_time {
            if !all_finite(&model) {
                return Err(TrainError::NonFiniteGradient { iteration: t });
            }
            if record(&model, t, &mut report)? {
                best = model.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
        if out_of_time {
            break;
        }
    }
    report.iterations = t;
    Ok((restore(best), report))
}
