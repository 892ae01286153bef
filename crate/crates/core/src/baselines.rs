//! Non-neural reference coders: a single global probability, a per-pixel
//! probability, nearest-center difference coding, and a ten-pixel causal
//! context model.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coder::BitProbabilityStream;
use crate::dataset::BinaryImage;
use crate::wire::{fingerprint, Reader, Writer};

/// Clamp used when a caller does not pick one.
pub const DEFAULT_EPSILON: f64 = 1e-4;

const TABLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("requested {requested} centers from {available} training images")]
    TooManyCenters { requested: usize, available: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("image shape {got:?} does not match the table's {expected:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("cross-validation grid is empty or unusable: {0}")]
    BadGrid(String),
    #[error("not a baseline table (bad magic)")]
    BadMagic,
    #[error("unsupported table version {0}")]
    UnsupportedVersion(u32),
    #[error("table file truncated")]
    Truncated,
    #[error("invalid table: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn clamp_eps(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

fn cost(bit: u8, p_one: f64) -> f64 {
    if bit == 1 {
        -p_one.log2()
    } else {
        -(1.0 - p_one).log2()
    }
}

fn shape_of(train: &[BinaryImage]) -> Result<(usize, usize), BaselineError> {
    let first = train.first().ok_or(BaselineError::EmptyTrainingSet)?;
    let shape = (first.width, first.height);
    if let Some(bad) = train.iter().find(|im| (im.width, im.height) != shape) {
        return Err(BaselineError::ShapeMismatch { expected: shape, got: (bad.width, bad.height) });
    }
    Ok(shape)
}

fn check_shape(expected: (usize, usize), image: &BinaryImage) -> Result<(), BaselineError> {
    let got = (image.width, image.height);
    if got != expected || image.pixels.len() != got.0 * got.1 {
        return Err(BaselineError::ShapeMismatch { expected, got });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Constant and per-pixel probabilities

/// One probability shared by every pixel of every image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantP {
    pub p: f64,
    pub epsilon: f64,
    pub width: usize,
    pub height: usize,
}

impl ConstantP {
    pub fn bits(&self, image: &BinaryImage) -> f64 {
        let ones = image.ones();
        let zeros = image.pixels.len() - ones;
        ones as f64 * cost(1, self.p) + zeros as f64 * cost(0, self.p)
    }
}

/// Global fraction of ones over the training pixels, clamped to `[ε, 1 − ε]`.
pub fn fit_constant_p(train: &[BinaryImage], epsilon: f64) -> Result<ConstantP, BaselineError> {
    let (width, height) = shape_of(train)?;
    let ones: usize = train.iter().map(BinaryImage::ones).sum();
    let total = train.len() * width * height;
    Ok(ConstantP { p: clamp_eps(ones as f64 / total as f64, epsilon), epsilon, width, height })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelProbTable {
    pub p: Vec<f64>,
    pub epsilon: f64,
    pub width: usize,
    pub height: usize,
}

impl PixelProbTable {
    pub fn bits(&self, image: &BinaryImage) -> f64 {
        image.pixels.iter().zip(&self.p).map(|(&x, &p)| cost(x, p)).sum()
    }
}

pub fn fit_pixel_p(train: &[BinaryImage], epsilon: f64) -> Result<PixelProbTable, BaselineError> {
    let (width, height) = shape_of(train)?;
    let mut ones = vec![0usize; width * height];
    for im in train {
        for (c, &x) in ones.iter_mut().zip(&im.pixels) {
            *c += usize::from(x);
        }
    }
    let n = train.len() as f64;
    Ok(PixelProbTable {
        p: ones.into_iter().map(|c| clamp_eps(c as f64 / n, epsilon)).collect(),
        epsilon,
        width,
        height,
    })
}

// ---------------------------------------------------------------------------
// Nearest-center difference coding

/// An image packed 64 pixels per word for Hamming distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedImage(Vec<u64>);

impl PackedImage {
    pub fn pack(image: &BinaryImage) -> Self {
        let mut words = vec![0u64; image.pixels.len().div_ceil(64)];
        for (i, &x) in image.pixels.iter().enumerate() {
            words[i / 64] |= u64::from(x) << (i % 64);
        }
        PackedImage(words)
    }

    pub fn hamming(&self, other: &PackedImage) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }
}

/// Index of the nearest center; ties go to the lowest index.
fn nearest(centers: &[PackedImage], image: &PackedImage) -> (usize, u32) {
    let mut best = (0, u32::MAX);
    for (i, c) in centers.iter().enumerate() {
        let d = c.hamming(image);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Centers plus, for each center, the clamped probability that a pixel of an
/// assigned image differs from the center.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterCodebook {
    pub centers: Vec<BinaryImage>,
    packed: Vec<PackedImage>,
    /// `mismatch[c * n_x + i]`.
    pub mismatch: Vec<f64>,
    pub epsilon: f64,
    pub width: usize,
    pub height: usize,
}

/// Result of coding one image against a codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterEncoding {
    pub center: usize,
    /// `log2 N` plus the cost of the difference bits.
    pub analytic_bits: f64,
    /// Width of the raw center-index field, `⌈log2 N⌉`.
    pub index_bits: u32,
    /// Difference bits `x ⊕ center` with their mismatch probabilities.
    pub stream: BitProbabilityStream,
}

pub fn index_field_bits(n_centers: usize) -> u32 {
    if n_centers <= 1 {
        0
    } else {
        usize::BITS - (n_centers - 1).leading_zeros()
    }
}

struct CenterCounts {
    chosen: Vec<usize>,
    packed: Vec<PackedImage>,
    diffs: Vec<u32>,
    assigned: Vec<u32>,
}

fn count_mismatches(train: &[&BinaryImage], packed_train: &[&PackedImage], n_centers: usize, rng: &mut ChaCha8Rng) -> CenterCounts {
    let n_x = train[0].pixels.len();
    let chosen = index::sample(rng, train.len(), n_centers).into_vec();
    let packed: Vec<PackedImage> = chosen.iter().map(|&i| packed_train[i].clone()).collect();
    let assignment: Vec<usize> = packed_train.par_iter().map(|im| nearest(&packed, im).0).collect();
    let mut diffs = vec![0u32; n_centers * n_x];
    let mut assigned = vec![0u32; n_centers];
    for (im, &c) in train.iter().zip(&assignment) {
        assigned[c] += 1;
        let center = &train[chosen[c]].pixels;
        for ((d, &x), &y) in diffs[c * n_x..(c + 1) * n_x].iter_mut().zip(&im.pixels).zip(center) {
            *d += u32::from(x ^ y);
        }
    }
    CenterCounts { chosen, packed, diffs, assigned }
}

fn mismatch_prob(counts: &CenterCounts, c: usize, i: usize, n_x: usize, eps: f64) -> f64 {
    match counts.assigned[c] {
        0 => eps,
        a => clamp_eps(f64::from(counts.diffs[c * n_x + i]) / f64::from(a), eps),
    }
}

/// Samples `n_centers` training images as centers, assigns every training
/// image to its nearest center and estimates the mismatch tables. Centers
/// that receive no images get an all-ε table.
pub fn fit_centers(train: &[BinaryImage], n_centers: usize, epsilon: f64, seed: u64) -> Result<CenterCodebook, BaselineError> {
    let (width, height) = shape_of(train)?;
    if n_centers == 0 || n_centers > train.len() {
        return Err(BaselineError::TooManyCenters { requested: n_centers, available: train.len() });
    }
    let n_x = width * height;
    let refs: Vec<&BinaryImage> = train.iter().collect();
    let packed: Vec<PackedImage> = train.par_iter().map(PackedImage::pack).collect();
    let packed_refs: Vec<&PackedImage> = packed.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = count_mismatches(&refs, &packed_refs, n_centers, &mut rng);
    let mismatch = (0..n_centers)
        .flat_map(|c| (0..n_x).map(move |i| (c, i)))
        .map(|(c, i)| mismatch_prob(&counts, c, i, n_x, epsilon))
        .collect();
    Ok(CenterCodebook {
        centers: counts.chosen.iter().map(|&i| train[i].clone()).collect(),
        packed: counts.packed,
        mismatch,
        epsilon,
        width,
        height,
    })
}

impl CenterCodebook {
    fn from_parts(centers: Vec<BinaryImage>, mismatch: Vec<f64>, epsilon: f64, width: usize, height: usize) -> Self {
        let packed = centers.iter().map(PackedImage::pack).collect();
        CenterCodebook { centers, packed, mismatch, epsilon, width, height }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn nearest(&self, image: &BinaryImage) -> (usize, u32) {
        nearest(&self.packed, &PackedImage::pack(image))
    }

    pub fn mismatch_row(&self, center: usize) -> &[f64] {
        let n_x = self.width * self.height;
        &self.mismatch[center * n_x..(center + 1) * n_x]
    }
}

pub fn encode_with_centers(codebook: &CenterCodebook, image: &BinaryImage) -> Result<CenterEncoding, BaselineError> {
    check_shape((codebook.width, codebook.height), image)?;
    let (center, _) = codebook.nearest(image);
    let row = codebook.mismatch_row(center);
    let c_px = &codebook.centers[center].pixels;
    let stream: BitProbabilityStream =
        image.pixels.iter().zip(c_px).zip(row).map(|((&x, &c), &p)| (x ^ c, p)).collect();
    let diff_bits: f64 = stream.pairs.iter().map(|&(d, p)| cost(d, p)).sum();
    Ok(CenterEncoding {
        center,
        analytic_bits: (codebook.len() as f64).log2() + diff_bits,
        index_bits: index_field_bits(codebook.len()),
        stream,
    })
}

/// Mean held-out bits for every `(N, ε)` grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub best_n: usize,
    pub best_epsilon: f64,
    pub best_bits: f64,
    pub scores: Vec<(usize, f64, f64)>,
}

pub const CV_FOLDS: usize = 5;

/// Five-fold cross-validation of the center count and the clamp, inside
/// the training split. Ties keep the earliest grid point.
pub fn crossvalidate_epsilon(
    train: &[BinaryImage],
    n_centers_grid: &[usize],
    epsilon_grid: &[f64],
    seed: u64,
) -> Result<CrossValidation, BaselineError> {
    let (width, height) = shape_of(train)?;
    let n_x = width * height;
    if n_centers_grid.is_empty() || epsilon_grid.is_empty() {
        return Err(BaselineError::BadGrid("empty grid".into()));
    }
    if train.len() < 2 {
        return Err(BaselineError::BadGrid("need at least two training images".into()));
    }
    let folds = CV_FOLDS.min(train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let bounds: Vec<usize> = (0..=folds).map(|f| f * train.len() / folds).collect();
    let packed: Vec<PackedImage> = train.par_iter().map(PackedImage::pack).collect();

    let mut totals = vec![0.0; n_centers_grid.len() * epsilon_grid.len()];
    for f in 0..folds {
        let held: Vec<usize> = order[bounds[f]..bounds[f + 1]].to_vec();
        let fit: Vec<usize> = order[..bounds[f]].iter().chain(&order[bounds[f + 1]..]).copied().collect();
        let fit_imgs: Vec<&BinaryImage> = fit.iter().map(|&i| &train[i]).collect();
        let fit_packed: Vec<&PackedImage> = fit.iter().map(|&i| &packed[i]).collect();
        for (ni, &n) in n_centers_grid.iter().enumerate() {
            if n == 0 || n > fit.len() {
                return Err(BaselineError::TooManyCenters { requested: n, available: fit.len() });
            }
            let mut fold_rng = ChaCha8Rng::seed_from_u64(seed ^ ((f as u64) << 32) ^ n as u64);
            let counts = count_mismatches(&fit_imgs, &fit_packed, n, &mut fold_rng);
            let index_cost = (n as f64).log2();
            let per_image: Vec<Vec<f64>> = held
                .par_iter()
                .map(|&i| {
                    let (c, _) = nearest(&counts.packed, &packed[i]);
                    let center = &fit_imgs[counts.chosen[c]].pixels;
                    epsilon_grid
                        .iter()
                        .map(|&eps| {
                            index_cost
                                + train[i]
                                    .pixels
                                    .iter()
                                    .zip(center)
                                    .enumerate()
                                    .map(|(px, (&x, &y))| cost(x ^ y, mismatch_prob(&counts, c, px, n_x, eps)))
                                    .sum::<f64>()
                        })
                        .collect()
                })
                .collect();
            for bits in per_image {
                for (ei, b) in bits.into_iter().enumerate() {
                    totals[ni * epsilon_grid.len() + ei] += b;
                }
            }
        }
    }
    let scores: Vec<(usize, f64, f64)> = n_centers_grid
        .iter()
        .enumerate()
        .flat_map(|(ni, &n)| {
            let totals = &totals;
            epsilon_grid
                .iter()
                .enumerate()
                .map(move |(ei, &e)| (n, e, totals[ni * epsilon_grid.len() + ei] / train.len() as f64))
        })
        .collect();
    let &(best_n, best_epsilon, best_bits) = scores
        .iter()
        .fold(None, |acc: Option<&(usize, f64, f64)>, s| match acc {
            Some(b) if b.2 <= s.2 => Some(b),
            _ => Some(s),
        })
        .expect("nonempty grid");
    Ok(CrossValidation { best_n, best_epsilon, best_bits, scores })
}

// ---------------------------------------------------------------------------
// Ten-pixel context model

/// Causal neighbourhood as `(dy, dx)`; entry `i` sets bit `i` of the context.
pub const CONTEXT_TEMPLATE: [(isize, isize); 10] =
    [(0, -1), (0, -2), (-1, -2), (-1, -1), (-1, 0), (-1, 1), (-1, 2), (-2, -1), (-2, 0), (-2, 1)];

pub const CONTEXTS: usize = 1 << CONTEXT_TEMPLATE.len();

/// Context of pixel `(y, x)` given the pixels decoded so far; positions
/// outside the image read as 0.
pub fn context_at(pixels: &[u8], width: usize, height: usize, y: usize, x: usize) -> usize {
    CONTEXT_TEMPLATE.iter().enumerate().fold(0, |ctx, (bit, &(dy, dx))| {
        let (yy, xx) = (y as isize + dy, x as isize + dx);
        let inside = yy >= 0 && xx >= 0 && (yy as usize) < height && (xx as usize) < width;
        if inside && pixels[yy as usize * width + xx as usize] == 1 {
            ctx | (1 << bit)
        } else {
            ctx
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextTable {
    pub p: Vec<f64>,
    pub epsilon: f64,
    pub width: usize,
    pub height: usize,
}

/// Average outcome per context over all training pixels; contexts never seen
/// predict 1/2.
pub fn fit_context(train: &[BinaryImage], epsilon: f64) -> Result<ContextTable, BaselineError> {
    let (width, height) = shape_of(train)?;
    let per_image: Vec<(Vec<u32>, Vec<u32>)> = train
        .par_iter()
        .map(|im| {
            let mut ones = vec![0u32; CONTEXTS];
            let mut seen = vec![0u32; CONTEXTS];
            for y in 0..height {
                for x in 0..width {
                    let c = context_at(&im.pixels, width, height, y, x);
                    seen[c] += 1;
                    ones[c] += u32::from(im.pixels[y * width + x]);
                }
            }
            (ones, seen)
        })
        .collect();
    let mut ones = vec![0u64; CONTEXTS];
    let mut seen = vec![0u64; CONTEXTS];
    for (o, s) in per_image {
        for c in 0..CONTEXTS {
            ones[c] += u64::from(o[c]);
            seen[c] += u64::from(s[c]);
        }
    }
    let p = ones
        .iter()
        .zip(&seen)
        .map(|(&o, &s)| clamp_eps(if s == 0 { 0.5 } else { o as f64 / s as f64 }, epsilon))
        .collect();
    Ok(ContextTable { p, epsilon, width, height })
}

/// Raster-order code length and the coder stream for one image.
pub fn encode_with_context(table: &ContextTable, image: &BinaryImage) -> Result<(f64, BitProbabilityStream), BaselineError> {
    check_shape((table.width, table.height), image)?;
    let mut stream = BitProbabilityStream::new();
    let mut bits = 0.0;
    for y in 0..table.height {
        for x in 0..table.width {
            let p = table.p[context_at(&image.pixels, table.width, table.height, y, x)];
            let v = image.pixels[y * table.width + x];
            bits += cost(v, p);
            stream.push(v, p);
        }
    }
    Ok((bits, stream))
}

// ---------------------------------------------------------------------------
// Table files

/// Any fitted baseline, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineTable {
    Constant(ConstantP),
    Pixel(PixelProbTable),
    Centers(CenterCodebook),
    Context(ContextTable),
}

const TAGS: [&[u8]; 4] = [b"CNSTP", b"PIXP", b"CENTR", b"CTX10"];

impl BaselineTable {
    pub fn tag(&self) -> &'static [u8] {
        match self {
            BaselineTable::Constant(_) => TAGS[0],
            BaselineTable::Pixel(_) => TAGS[1],
            BaselineTable::Centers(_) => TAGS[2],
            BaselineTable::Context(_) => TAGS[3],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            BaselineTable::Constant(t) => (t.width, t.height),
            BaselineTable::Pixel(t) => (t.width, t.height),
            BaselineTable::Centers(t) => (t.width, t.height),
            BaselineTable::Context(t) => (t.width, t.height),
        }
    }

    fn epsilon(&self) -> f64 {
        match self {
            BaselineTable::Constant(t) => t.epsilon,
            BaselineTable::Pixel(t) => t.epsilon,
            BaselineTable::Centers(t) => t.epsilon,
            BaselineTable::Context(t) => t.epsilon,
        }
    }

    /// Tag, version, width, height, ε, then the table body (little-endian).
    pub fn to_bytes(&self) -> Vec<u8> {
        let (w, h) = self.shape();
        let mut out = Writer::new();
        out.bytes(self.tag()).u32(TABLE_VERSION).u32(w as u32).u32(h as u32).f64s(&[self.epsilon()]);
        match self {
            BaselineTable::Constant(t) => {
                out.f64s(&[t.p]);
            }
            BaselineTable::Pixel(t) => {
                out.f64s(&t.p);
            }
            BaselineTable::Centers(t) => {
                out.u32(t.centers.len() as u32);
                for c in &t.centers {
                    out.bytes(&c.pixels);
                }
                out.f64s(&t.mismatch);
            }
            BaselineTable::Context(t) => {
                out.f64s(&t.p);
            }
        }
        out.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BaselineError> {
        let tag = TAGS.iter().position(|t| bytes.starts_with(t)).ok_or(BaselineError::BadMagic)?;
        let mut rd = Reader::new(&bytes[TAGS[tag].len()..]);
        let version = rd.u32().ok_or(BaselineError::Truncated)?;
        if version != TABLE_VERSION {
            return Err(BaselineError::UnsupportedVersion(version));
        }
        let width = rd.u32().ok_or(BaselineError::Truncated)? as usize;
        let height = rd.u32().ok_or(BaselineError::Truncated)? as usize;
        let epsilon = rd.f64s(1).ok_or(BaselineError::Truncated)?[0];
        let n_x = width.checked_mul(height).ok_or(BaselineError::Truncated)?;
        let floats = |rd: &mut Reader<'_>, n: usize| rd.f64s(n).ok_or(BaselineError::Truncated);
        let table = match tag {
            0 => BaselineTable::Constant(ConstantP { p: floats(&mut rd, 1)?[0], epsilon, width, height }),
            1 => BaselineTable::Pixel(PixelProbTable { p: floats(&mut rd, n_x)?, epsilon, width, height }),
            2 => {
                let n = rd.u32().ok_or(BaselineError::Truncated)? as usize;
                let raw = rd.bytes(n.checked_mul(n_x).ok_or(BaselineError::Truncated)?).ok_or(BaselineError::Truncated)?;
                if raw.iter().any(|&b| b > 1) {
                    return Err(BaselineError::Invalid("center pixel not binary".into()));
                }
                let centers = raw.chunks_exact(n_x.max(1)).take(n).map(|c| BinaryImage::new(c.to_vec(), width, height, 0)).collect();
                let mismatch = floats(&mut rd, n * n_x)?;
                BaselineTable::Centers(CenterCodebook::from_parts(centers, mismatch, epsilon, width, height))
            }
            _ => BaselineTable::Context(ContextTable { p: floats(&mut rd, CONTEXTS)?, epsilon, width, height }),
        };
        if rd.remaining() != 0 {
            return Err(BaselineError::Invalid(format!("{} trailing bytes", rd.remaining())));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        BaselineTable::from_bytes(&fs::read(path)?)
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.to_bytes())
    }
}
