//! The sequential pixel predictor.
//!
//! Pixels are visited in the order given by the model's permutation. After
//! `k` pixels have been seen the hidden pre-activation is
//! `b_h + Σ U[:, p] · x̄_p` over the seen pixels `p`, and the next pixel `q`
//! is predicted as `σ(V[q]·σ(h_u) + Σ R[q][p] · x̄_p + b_y[q])`. Both sums are
//! kept as running accumulators, so consuming a pixel costs `O(n_h + n_x)`.
//!
//! All parameters are indexed by raster pixel position; the permutation only
//! decides the visiting order.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use thiserror::Error;

use crate::dataset::{BinaryImage, GrayImage};
use crate::wire::{fingerprint, Reader, Writer};

/// Probabilities are clipped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before code
/// lengths are computed or the coder sees them.
pub const PROB_CLAMP: f64 = 1e-6;

const MODEL_MAGIC: &[u8; 4] = b"SPPM";
pub const MODEL_VERSION: u32 = 1;

const FLAG_USE_UV: u32 = 1;
const FLAG_USE_R: u32 = 2;
const FLAG_SUBTRACT_MEAN: u32 = 4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("pixel {got} consumed while the sweep expects position {expected}")]
    OutOfOrderPixel { expected: usize, got: usize },
    #[error("sweep already consumed every pixel")]
    SweepComplete,
    #[error("image has {got} pixels, model expects {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("model file truncated")]
    Truncated,
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which prediction paths are active and whether inputs are mean-centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub use_uv: bool,
    pub use_r: bool,
    pub subtract_mean: bool,
}

impl Variant {
    pub const FULL: Variant = Variant { use_uv: true, use_r: true, subtract_mean: true };
    pub const UV_ONLY: Variant = Variant { use_uv: true, use_r: false, subtract_mean: true };
    pub const R_ONLY: Variant = Variant { use_uv: false, use_r: true, subtract_mean: true };

    fn flags(self) -> u32 {
        (if self.use_uv { FLAG_USE_UV } else { 0 })
            | (if self.use_r { FLAG_USE_R } else { 0 })
            | (if self.subtract_mean { FLAG_SUBTRACT_MEAN } else { 0 })
    }

    fn from_flags(flags: u32) -> Result<Self, ModelError> {
        if flags & !(FLAG_USE_UV | FLAG_USE_R | FLAG_SUBTRACT_MEAN) != 0 {
            return Err(ModelError::Invalid(format!("unknown flag bits {flags:#x}")));
        }
        Ok(Variant {
            use_uv: flags & FLAG_USE_UV != 0,
            use_r: flags & FLAG_USE_R != 0,
            subtract_mean: flags & FLAG_SUBTRACT_MEAN != 0,
        })
    }
}

/// Which weight matrix [`export_filters`] renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    U,
    V,
    R,
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

const TABLE_LIMIT: f64 = 20.0;
const TABLE_STEPS: usize = 8192;

fn sigmoid_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=TABLE_STEPS)
            .map(|i| sigmoid(-TABLE_LIMIT + 2.0 * TABLE_LIMIT * i as f64 / TABLE_STEPS as f64))
            .collect()
    })
}

/// Precomputed sigmoid with linear interpolation; saturates outside ±20.
#[inline]
pub fn sigmoid_lut(t: f64) -> f64 {
    let table = sigmoid_table();
    let pos = (t + TABLE_LIMIT) * (TABLE_STEPS as f64 / (2.0 * TABLE_LIMIT));
    if pos <= 0.0 {
        return table[0];
    }
    if pos >= TABLE_STEPS as f64 {
        return table[TABLE_STEPS];
    }
    let i = pos as usize;
    let frac = pos - i as f64;
    table[i] + frac * (table[i + 1] - table[i])
}

#[inline]
pub fn clamp_prob(y: f64) -> f64 {
    y.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Code length in bits of `bit` under `P(1) = y`, with `y` clamped.
#[inline]
pub fn code_length(bit: u8, y: f64) -> f64 {
    let y = clamp_prob(y);
    if bit == 1 {
        -y.log2()
    } else {
        -(1.0 - y).log2()
    }
}

/// Parameters of the predictor.
///
/// Storage layouts (all row-major, raster pixel indices):
/// - `u[p * n_h + i]` is `U[i][p]`, the weight from pixel `p` to hidden unit `i`;
/// - `v[p * n_h + i]` is `V[p][i]`, the weight from hidden unit `i` to the
///   prediction of pixel `p`;
/// - `r[src * n_x + dst]` is `R[dst][src]`.
///
/// Only `R` entries whose source precedes the destination in the permutation
/// are ever read.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub n_x: usize,
    pub n_h: usize,
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub r: Vec<f64>,
    pub b_h: Vec<f64>,
    pub b_y: Vec<f64>,
    pub x_ave: Vec<f64>,
    permutation: Vec<usize>,
    raster: bool,
    pub variant: Variant,
    /// Evaluate the hidden-layer sigmoid from a lookup table. Not persisted.
    pub fast_sigmoid: bool,
}

/// Running state of one sweep over an image.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepState {
    /// Hidden pre-activation, `b_h + U·x̄ᵏ`.
    pub h_u: Vec<f64>,
    /// `R·x̄ᵏ`, indexed by destination pixel.
    pub r_acc: Vec<f64>,
    /// Number of pixels consumed so far.
    pub k: usize,
}

/// Per-position predictions and code lengths of one sweep, in visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    pub y: Vec<f64>,
    pub bits: Vec<f64>,
    pub total_bits: f64,
}

fn is_identity(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(i, &p)| i == p)
}

pub fn validate_permutation(perm: &[usize], n: usize) -> Result<(), ModelError> {
    if perm.len() != n {
        return Err(ModelError::Invalid(format!("permutation has {} entries, expected {n}", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(ModelError::Invalid("permutation is not a bijection".into()));
        }
    }
    Ok(())
}

impl Model {
    /// A model with every parameter and the mean image at zero, raster order.
    pub fn zeros(width: usize, height: usize, n_h: usize, variant: Variant) -> Self {
        let n_x = width * height;
        Model {
            n_x,
            n_h,
            width,
            height,
            u: vec![0.0; n_x * n_h],
            v: vec![0.0; n_x * n_h],
            r: vec![0.0; n_x * n_x],
            b_h: vec![0.0; n_h],
            b_y: vec![0.0; n_x],
            x_ave: vec![0.0; n_x],
            permutation: (0..n_x).collect(),
            raster: true,
            variant,
            fast_sigmoid: false,
        }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn is_raster(&self) -> bool {
        self.raster
    }

    pub fn set_permutation(&mut self, perm: Vec<usize>) -> Result<(), ModelError> {
        validate_permutation(&perm, self.n_x)?;
        self.raster = is_identity(&perm);
        self.permutation = perm;
        Ok(())
    }

    pub fn u_at(&self, hidden: usize, pixel: usize) -> f64 {
        self.u[pixel * self.n_h + hidden]
    }

    pub fn v_at(&self, pixel: usize, hidden: usize) -> f64 {
        self.v[pixel * self.n_h + hidden]
    }

    pub fn r_at(&self, dst: usize, src: usize) -> f64 {
        self.r[src * self.n_x + dst]
    }

    pub fn r_at_mut(&mut self, dst: usize, src: usize) -> &mut f64 {
        &mut self.r[src * self.n_x + dst]
    }

    /// The same predictor with pixel `p` renamed `sigma[p]`. Images renamed
    /// the same way get identical predictions.
    pub(crate) fn relabeled(&self, sigma: &[usize]) -> Model {
        let (n_x, n_h) = (self.n_x, self.n_h);
        let mut m = self.clone();
        for p in 0..n_x {
            let s = sigma[p];
            m.u[s * n_h..(s + 1) * n_h].copy_from_slice(&self.u[p * n_h..(p + 1) * n_h]);
            m.v[s * n_h..(s + 1) * n_h].copy_from_slice(&self.v[p * n_h..(p + 1) * n_h]);
            m.b_y[s] = self.b_y[p];
            m.x_ave[s] = self.x_ave[p];
            let (src, dst) = (&self.r[p * n_x..(p + 1) * n_x], s * n_x);
            for (q, &w) in src.iter().enumerate() {
                m.r[dst + sigma[q]] = w;
            }
        }
        m.permutation = self.permutation.iter().map(|&p| sigma[p]).collect();
        m.raster = is_identity(&m.permutation);
        m
    }

    /// Checks shapes, finiteness and the permutation.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (n_x, n_h) = (self.n_x, self.n_h);
        if n_x == 0 || n_x != self.width * self.height {
            return Err(ModelError::Invalid(format!("n_x = {n_x} does not match {}x{}", self.width, self.height)));
        }
        if !self.variant.use_uv && !self.variant.use_r {
            return Err(ModelError::Invalid("both prediction paths disabled".into()));
        }
        if self.variant.use_uv && n_h == 0 {
            return Err(ModelError::Invalid("hidden path enabled with zero hidden units".into()));
        }
        let shapes = [
            ("U", self.u.len(), n_x * n_h),
            ("V", self.v.len(), n_x * n_h),
            ("R", self.r.len(), n_x * n_x),
            ("b_h", self.b_h.len(), n_h),
            ("b_y", self.b_y.len(), n_x),
            ("x_ave", self.x_ave.len(), n_x),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(ModelError::Invalid(format!("{name} has {got} entries, expected {want}")));
            }
        }
        let all = [&self.u, &self.v, &self.r, &self.b_h, &self.b_y, &self.x_ave];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(ModelError::Invalid("non-finite parameter".into()));
        }
        if self.x_ave.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(ModelError::Invalid("mean image outside [0, 1]".into()));
        }
        validate_permutation(&self.permutation, n_x)
    }

    #[inline]
    pub fn centered(&self, pixel: usize, x: u8) -> f64 {
        if self.variant.subtract_mean {
            f64::from(x) - self.x_ave[pixel]
        } else {
            f64::from(x)
        }
    }

    /// Writes `σ(h_u)` into `h`.
    #[inline]
    pub fn hidden_into(&self, h_u: &[f64], h: &mut [f64]) {
        if self.fast_sigmoid {
            for (o, &a) in h.iter_mut().zip(h_u) {
                *o = sigmoid_lut(a);
            }
        } else {
            for (o, &a) in h.iter_mut().zip(h_u) {
                *o = sigmoid(a);
            }
        }
    }

    /// Output pre-activation for `pixel` given the hidden activations.
    #[inline]
    pub fn output_logit(&self, pixel: usize, h: &[f64], r_acc: &[f64]) -> f64 {
        let mut z = 0.0;
        if self.variant.use_uv {
            let row = &self.v[pixel * self.n_h..(pixel + 1) * self.n_h];
            z += row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        }
        if self.variant.use_r {
            z += r_acc[pixel];
        }
        z + self.b_y[pixel]
    }

    /// Adds `x̄ · R[q][src]` to `r_acc[q]` for every pixel `q` visited after
    /// position `pos`.
    #[inline]
    pub(crate) fn spread_direct(&self, order: &[usize], raster: bool, pos: usize, xb: f64, r_acc: &mut [f64]) {
        let src = order[pos];
        let row = &self.r[src * self.n_x..(src + 1) * self.n_x];
        if raster {
            for (acc, w) in r_acc[pos + 1..].iter_mut().zip(&row[pos + 1..]) {
                *acc += w * xb;
            }
        } else {
            for &q in &order[pos + 1..] {
                r_acc[q] += row[q] * xb;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MODEL_MAGIC)
            .u32(MODEL_VERSION)
            .u32(self.variant.flags())
            .u32(self.n_x as u32)
            .u32(self.n_h as u32)
            .u32(self.width as u32)
            .u32(self.height as u32);
        for &p in &self.permutation {
            w.u32(p as u32);
        }
        w.f64s(&self.x_ave).f64s(&self.b_h).f64s(&self.b_y);
        // U is written as n_h x n_x, R as n_x x n_x with rows = destinations.
        let mut u_rows = Vec::with_capacity(self.u.len());
        for i in 0..self.n_h {
            u_rows.extend((0..self.n_x).map(|p| self.u_at(i, p)));
        }
        w.f64s(&u_rows).f64s(&self.v);
        let mut r_rows = Vec::with_capacity(self.r.len());
        for dst in 0..self.n_x {
            r_rows.extend((0..self.n_x).map(|src| self.r_at(dst, src)));
        }
        w.f64s(&r_rows);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut rd = Reader::new(bytes);
        if rd.bytes(4) != Some(MODEL_MAGIC.as_slice()) {
            return Err(ModelError::BadMagic);
        }
        let version = rd.u32().ok_or(ModelError::Truncated)?;
        if version != MODEL_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let mut header = [0u32; 5];
        for h in &mut header {
            *h = rd.u32().ok_or(ModelError::Truncated)?;
        }
        let variant = Variant::from_flags(header[0])?;
        let [_, n_x, n_h, width, height] = header.map(|v| v as usize);
        if n_x.checked_mul(n_x).and_then(|nn| nn.checked_mul(8)).is_none_or(|b| b > rd.remaining()) {
            return Err(ModelError::Truncated);
        }
        if n_x.checked_mul(n_h).is_none_or(|b| b.saturating_mul(16) > rd.remaining()) {
            return Err(ModelError::Truncated);
        }
        let permutation = (0..n_x)
            .map(|_| rd.u32().map(|p| p as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or(ModelError::Truncated)?;
        let x_ave = rd.f64s(n_x).ok_or(ModelError::Truncated)?;
        let b_h = rd.f64s(n_h).ok_or(ModelError::Truncated)?;
        let b_y = rd.f64s(n_x).ok_or(ModelError::Truncated)?;
        let u_rows = rd.f64s(n_h * n_x).ok_or(ModelError::Truncated)?;
        let v = rd.f64s(n_x * n_h).ok_or(ModelError::Truncated)?;
        let r_rows = rd.f64s(n_x * n_x).ok_or(ModelError::Truncated)?;
        if rd.remaining() != 0 {
            return Err(ModelError::Invalid(format!("{} trailing bytes", rd.remaining())));
        }
        let mut u = vec![0.0; n_x * n_h];
        for i in 0..n_h {
            for p in 0..n_x {
                u[p * n_h + i] = u_rows[i * n_x + p];
            }
        }
        let mut r = vec![0.0; n_x * n_x];
        for dst in 0..n_x {
            for src in 0..n_x {
                r[src * n_x + dst] = r_rows[dst * n_x + src];
            }
        }
        validate_permutation(&permutation, n_x)?;
        let model = Model {
            n_x,
            n_h,
            width,
            height,
            u,
            v,
            r,
            b_h,
            b_y,
            x_ave,
            raster: is_identity(&permutation),
            permutation,
            variant,
            fast_sigmoid: false,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Model::from_bytes(&fs::read(path)?)
    }

    /// 64-bit identifier of the serialized parameters.
    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.to_bytes())
    }
}

pub fn init_sweep(model: &Model) -> SweepState {
    SweepState { h_u: model.b_h.clone(), r_acc: vec![0.0; model.n_x], k: 0 }
}

/// Feeds the pixel at visiting position `j` (value `x`) into the sweep.
pub fn consume_pixel(model: &Model, state: &mut SweepState, j: usize, x: u8) -> Result<(), ModelError> {
    if j >= model.n_x {
        return Err(ModelError::SweepComplete);
    }
    if state.k != j {
        return Err(ModelError::OutOfOrderPixel { expected: state.k, got: j });
    }
    let pixel = model.permutation[j];
    let xb = model.centered(pixel, x);
    if xb != 0.0 {
        if model.variant.use_uv {
            let col = &model.u[pixel * model.n_h..(pixel + 1) * model.n_h];
            for (acc, w) in state.h_u.iter_mut().zip(col) {
                *acc += w * xb;
            }
        }
        if model.variant.use_r {
            model.spread_direct(&model.permutation, model.raster, j, xb, &mut state.r_acc);
        }
    }
    state.k = j + 1;
    Ok(())
}

/// Probability that the pixel at position `state.k` is 1.
pub fn predict_next(model: &Model, state: &SweepState) -> Result<f64, ModelError> {
    let mut h = vec![0.0; model.n_h];
    predict_next_with(model, state, &mut h)
}

/// As [`predict_next`], reusing `h` as scratch (left holding `σ(h_u)`).
pub fn predict_next_with(model: &Model, state: &SweepState, h: &mut [f64]) -> Result<f64, ModelError> {
    if state.k >= model.n_x {
        return Err(ModelError::SweepComplete);
    }
    let pixel = model.permutation[state.k];
    if model.variant.use_uv {
        model.hidden_into(&state.h_u, h);
    }
    Ok(sigmoid(model.output_logit(pixel, h, &state.r_acc)))
}

pub fn forward_trace(model: &Model, image: &BinaryImage) -> Result<PredictionTrace, ModelError> {
    if image.pixels.len() != model.n_x {
        return Err(ModelError::SizeMismatch { expected: model.n_x, got: image.pixels.len() });
    }
    let mut state = init_sweep(model);
    let mut h = vec![0.0; model.n_h];
    let mut y = Vec::with_capacity(model.n_x);
    let mut bits = Vec::with_capacity(model.n_x);
    let mut h_stale = true;
    for j in 0..model.n_x {
        let pixel = model.permutation[j];
        if model.variant.use_uv && h_stale {
            model.hidden_into(&state.h_u, &mut h);
        }
        let p = sigmoid(model.output_logit(pixel, &h, &state.r_acc));
        let x = image.pixels[pixel];
        y.push(p);
        bits.push(code_length(x, p));
        h_stale = model.centered(pixel, x) != 0.0;
        consume_pixel(model, &mut state, j, x)?;
    }
    let total_bits = bits.iter().sum();
    Ok(PredictionTrace { y, bits, total_bits })
}

/// Draws one image by a single sweep, sampling each pixel from its predicted
/// probability before feeding it back in.
pub fn sample_image<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> BinaryImage {
    let mut state = init_sweep(model);
    let mut h = vec![0.0; model.n_h];
    let mut pixels = vec![0u8; model.n_x];
    for j in 0..model.n_x {
        let p = predict_next_with(model, &state, &mut h).expect("sweep position in range");
        let bit = u8::from(rng.random::<f64>() < p);
        pixels[model.permutation[j]] = bit;
        consume_pixel(model, &mut state, j, bit).expect("sweep position in range");
    }
    BinaryImage { pixels, width: model.width, height: model.height, label: 0 }
}

/// Linear rescale to [0, 255] with min ↦ 0 and max ↦ 255. A constant input
/// maps to all zeros.
pub fn rescale_to_gray(values: &[f64], width: usize, height: usize) -> GrayImage {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let pixels = values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    GrayImage { pixels, width, height, label: 0 }
}

/// Renders weight filters in raster space: one image per hidden unit for
/// `U` (incoming weights) and `V` (outgoing weights), one per destination
/// pixel for `R`.
pub fn export_filters(model: &Model, which: FilterKind) -> Vec<GrayImage> {
    let (w, h) = (model.width, model.height);
    match which {
        FilterKind::U => (0..model.n_h)
            .map(|i| rescale_to_gray(&(0..model.n_x).map(|p| model.u_at(i, p)).collect::<Vec<_>>(), w, h))
            .collect(),
        FilterKind::V => (0..model.n_h)
            .map(|i| rescale_to_gray(&(0..model.n_x).map(|p| model.v_at(p, i)).collect::<Vec<_>>(), w, h))
            .collect(),
        FilterKind::R => (0..model.n_x)
            .map(|dst| rescale_to_gray(&(0..model.n_x).map(|src| model.r_at(dst, src)).collect::<Vec<_>>(), w, h))
            .collect(),
    }
}
