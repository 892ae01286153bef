//! Couples predictors to the arithmetic coder: dataset containers, bit
//! accounting and the benchmark table.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{
    context_at, crossvalidate_epsilon, fit_centers, fit_constant_p, fit_context, fit_pixel_p,
    index_field_bits, BaselineError, BaselineTable,
};
use crate::coder::{BitProbabilityStream, CoderError, Decoder, Encoder};
use crate::dataset::{BinaryImage, DataSplits};
use crate::model::{clamp_prob, consume_pixel, init_sweep, predict_next_with, Model, ModelError, SweepState};
use crate::trainer::{self, TrainConfig, TrainError};
use crate::wire::{Reader, Writer};

const MAGIC: &[u8; 4] = b"SPPC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("image shape {got:?} does not match the predictor's {expected:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("container was written with predictor {expected:016x}, got {found:016x}")]
    HashMismatch { expected: u64, found: u64 },
    #[error("container was written by a different predictor kind (tag {expected}, got {found})")]
    PredictorMismatch { expected: u8, found: u8 },
    #[error("record {index} is corrupt: {reason}")]
    CorruptRecord { index: usize, reason: String },
    #[error("not a compressed container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("container header truncated")]
    Truncated,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// One pass over an image in a predictor's coding order. The same sweep
/// drives both the encoder and the decoder, so it may only look at pixels
/// already committed.
pub trait Sweep {
    /// Raster index of the pixel coded next.
    fn next_pixel(&self) -> usize;
    /// Probability that the next coded bit is 1, strictly inside (0, 1).
    fn prob_one(&mut self) -> f64;
    /// The bit actually coded for `value` at the next pixel.
    fn to_coded(&self, value: u8) -> u8 {
        value
    }
    /// Records the coded bit for the pixel given by [`Sweep::next_pixel`].
    fn commit(&mut self, coded: u8);
    /// Pixel values committed so far, raster order.
    fn pixels(&self) -> &[u8];
}

/// Anything that can code an image pixel by pixel.
pub trait Predictor: Sync {
    fn shape(&self) -> (usize, usize);
    fn tag(&self) -> u8;
    fn fingerprint(&self) -> u64;
    /// Width of a raw side field written ahead of the payload.
    fn side_bits(&self) -> u32 {
        0
    }
    /// Analytic cost charged for the side field.
    fn side_cost(&self) -> f64 {
        0.0
    }
    /// Number of valid side values.
    fn side_values(&self) -> u64 {
        1
    }
    fn choose_side(&self, _image: &BinaryImage) -> u64 {
        0
    }
    fn begin(&self, side: u64) -> Box<dyn Sweep + '_>;
}

pub const TAG_NEURAL: u8 = 0;

struct NeuralSweep<'a> {
    model: &'a Model,
    state: SweepState,
    h: Vec<f64>,
    pixels: Vec<u8>,
}

impl Sweep for NeuralSweep<'_> {
    fn next_pixel(&self) -> usize {
        self.model.permutation()[self.state.k]
    }

    fn prob_one(&mut self) -> f64 {
        clamp_prob(predict_next_with(self.model, &self.state, &mut self.h).expect("sweep in range"))
    }

    fn commit(&mut self, coded: u8) {
        let pixel = self.next_pixel();
        self.pixels[pixel] = coded;
        let k = self.state.k;
        consume_pixel(self.model, &mut self.state, k, coded).expect("sweep in range");
    }

    fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

impl Predictor for Model {
    fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn tag(&self) -> u8 {
        TAG_NEURAL
    }

    fn fingerprint(&self) -> u64 {
        Model::fingerprint(self)
    }

    fn begin(&self, _side: u64) -> Box<dyn Sweep + '_> {
        Box::new(NeuralSweep { model: self, state: init_sweep(self), h: vec![0.0; self.n_h], pixels: vec![0; self.n_x] })
    }
}

/// Raster-order sweep shared by all baseline tables.
struct TableSweep<'a> {
    table: &'a BaselineTable,
    center: usize,
    k: usize,
    pixels: Vec<u8>,
}

impl Sweep for TableSweep<'_> {
    fn next_pixel(&self) -> usize {
        self.k
    }

    fn prob_one(&mut self) -> f64 {
        match self.table {
            BaselineTable::Constant(t) => t.p,
            BaselineTable::Pixel(t) => t.p[self.k],
            BaselineTable::Centers(t) => t.mismatch_row(self.center)[self.k],
            BaselineTable::Context(t) => t.p[context_at(&self.pixels, t.width, t.height, self.k / t.width, self.k % t.width)],
        }
    }

    fn to_coded(&self, value: u8) -> u8 {
        match self.table {
            BaselineTable::Centers(t) => value ^ t.centers[self.center].pixels[self.k],
            _ => value,
        }
    }

    fn commit(&mut self, coded: u8) {
        self.pixels[self.k] = match self.table {
            BaselineTable::Centers(t) => coded ^ t.centers[self.center].pixels[self.k],
            _ => coded,
        };
        self.k += 1;
    }

    fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

impl Predictor for BaselineTable {
    fn shape(&self) -> (usize, usize) {
        BaselineTable::shape(self)
    }

    fn tag(&self) -> u8 {
        match self {
            BaselineTable::Constant(_) => 1,
            BaselineTable::Pixel(_) => 2,
            BaselineTable::Centers(_) => 3,
            BaselineTable::Context(_) => 4,
        }
    }

    fn fingerprint(&self) -> u64 {
        BaselineTable::fingerprint(self)
    }

    fn side_bits(&self) -> u32 {
        match self {
            BaselineTable::Centers(t) => index_field_bits(t.len()),
            _ => 0,
        }
    }

    fn side_cost(&self) -> f64 {
        match self {
            BaselineTable::Centers(t) => (t.len() as f64).log2(),
            _ => 0.0,
        }
    }

    fn side_values(&self) -> u64 {
        match self {
            BaselineTable::Centers(t) => t.len() as u64,
            _ => 1,
        }
    }

    fn choose_side(&self, image: &BinaryImage) -> u64 {
        match self {
            BaselineTable::Centers(t) => t.nearest(image).0 as u64,
            _ => 0,
        }
    }

    fn begin(&self, side: u64) -> Box<dyn Sweep + '_> {
        let (w, h) = BaselineTable::shape(self);
        Box::new(TableSweep { table: self, center: side as usize, k: 0, pixels: vec![0; w * h] })
    }
}

fn check_shape(pred: &dyn Predictor, image: &BinaryImage) -> Result<(), CodecError> {
    let expected = pred.shape();
    let got = (image.width, image.height);
    if got != expected || image.pixels.len() != got.0 * got.1 {
        return Err(CodecError::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// The coded bits and their probabilities for one image, in coding order.
pub fn probability_stream(pred: &dyn Predictor, image: &BinaryImage, side: u64) -> Result<BitProbabilityStream, CodecError> {
    check_shape(pred, image)?;
    let mut sweep = pred.begin(side);
    let mut stream = BitProbabilityStream::new();
    for _ in 0..image.pixels.len() {
        let coded = sweep.to_coded(image.pixels[sweep.next_pixel()]);
        stream.push(coded, sweep.prob_one());
        sweep.commit(coded);
    }
    Ok(stream)
}

/// One compressed image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub bit_count: u64,
    pub side: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecContainer {
    pub tag: u8,
    pub hash: u64,
    pub width: usize,
    pub height: usize,
    pub side_bits: u32,
    pub records: Vec<Record>,
}

impl CodecContainer {
    /// Coded size of record `i`, side field included.
    pub fn record_bits(&self, i: usize) -> u64 {
        self.records[i].bit_count + u64::from(self.side_bits)
    }

    fn side_bytes(&self) -> usize {
        self.side_bits.div_ceil(8) as usize
    }

    /// Header, then per record: `u32` length, `u64` bit count, the side field
    /// in `⌈side_bits/8⌉` little-endian bytes, and the payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MAGIC)
            .u32(VERSION)
            .u8(self.tag)
            .u64(self.hash)
            .u32(self.records.len() as u32)
            .u32(self.width as u32)
            .u32(self.height as u32)
            .u8(self.side_bits as u8);
        let sb = self.side_bytes();
        for r in &self.records {
            w.u32((8 + sb + r.payload.len()) as u32).u64(r.bit_count).bytes(&r.side.to_le_bytes()[..sb]).bytes(&r.payload);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if !bytes.starts_with(MAGIC) {
            return Err(CodecError::BadMagic);
        }
        let mut rd = Reader::new(&bytes[MAGIC.len()..]);
        let version = rd.u32().ok_or(CodecError::Truncated)?;
        if version != VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let tag = rd.u8().ok_or(CodecError::Truncated)?;
        let hash = rd.u64().ok_or(CodecError::Truncated)?;
        let count = rd.u32().ok_or(CodecError::Truncated)? as usize;
        let width = rd.u32().ok_or(CodecError::Truncated)? as usize;
        let height = rd.u32().ok_or(CodecError::Truncated)? as usize;
        let side_bits = u32::from(rd.u8().ok_or(CodecError::Truncated)?);
        if side_bits > 64 {
            return Err(CodecError::CorruptRecord { index: 0, reason: format!("side field of {side_bits} bits") });
        }
        let mut c = CodecContainer { tag, hash, width, height, side_bits, records: Vec::with_capacity(count.min(1 << 20)) };
        let sb = c.side_bytes();
        for index in 0..count {
            let corrupt = |reason: &str| CodecError::CorruptRecord { index, reason: reason.into() };
            let len = rd.u32().ok_or_else(|| corrupt("missing length"))? as usize;
            let body = rd.bytes(len).ok_or_else(|| corrupt("record extends past end of file"))?;
            if len < 8 + sb {
                return Err(corrupt("record shorter than its fixed fields"));
            }
            let bit_count = u64::from_le_bytes(body[..8].try_into().expect("8 bytes"));
            let mut side = [0u8; 8];
            side[..sb].copy_from_slice(&body[8..8 + sb]);
            c.records.push(Record { bit_count, side: u64::from_le_bytes(side), payload: body[8 + sb..].to_vec() });
        }
        if rd.remaining() != 0 {
            return Err(CodecError::CorruptRecord { index: count, reason: "trailing bytes after last record".into() });
        }
        Ok(c)
    }
}

/// A container plus the model's ideal code length for each image.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressed {
    pub container: CodecContainer,
    pub analytic_bits: Vec<f64>,
}

impl Compressed {
    pub fn actual_bits(&self) -> Vec<f64> {
        (0..self.container.records.len()).map(|i| self.container.record_bits(i) as f64).collect()
    }
}

pub fn compress_dataset(pred: &dyn Predictor, images: &[BinaryImage]) -> Result<Compressed, CodecError> {
    let coded: Vec<(Record, f64)> = images
        .par_iter()
        .map(|image| {
            let side = pred.choose_side(image);
            let stream = probability_stream(pred, image, side)?;
            let mut enc = Encoder::new();
            for &(bit, p) in &stream.pairs {
                enc.encode_bit(bit, p);
            }
            let buf = enc.finish();
            let analytic = pred.side_cost() + stream.ideal_bits();
            Ok((Record { bit_count: buf.bit_count, side, payload: buf.payload }, analytic))
        })
        .collect::<Result<_, CodecError>>()?;
    let (width, height) = pred.shape();
    let (records, analytic_bits) = coded.into_iter().unzip();
    Ok(Compressed {
        container: CodecContainer { tag: pred.tag(), hash: pred.fingerprint(), width, height, side_bits: pred.side_bits(), records },
        analytic_bits,
    })
}

pub fn decompress_dataset(container: &CodecContainer, pred: &dyn Predictor) -> Result<Vec<BinaryImage>, CodecError> {
    if container.tag != pred.tag() {
        return Err(CodecError::PredictorMismatch { expected: container.tag, found: pred.tag() });
    }
    let found = pred.fingerprint();
    if container.hash != found {
        return Err(CodecError::HashMismatch { expected: container.hash, found });
    }
    let (width, height) = pred.shape();
    if (container.width, container.height) != (width, height) || container.side_bits != pred.side_bits() {
        return Err(CodecError::ShapeMismatch { expected: (width, height), got: (container.width, container.height) });
    }
    container
        .records
        .par_iter()
        .enumerate()
        .map(|(index, r)| {
            if r.side >= pred.side_values() {
                return Err(CodecError::CorruptRecord { index, reason: format!("side value {} out of range", r.side) });
            }
            let mut dec = Decoder::from_parts(&r.payload, r.bit_count).map_err(|e: CoderError| CodecError::CorruptRecord {
                index,
                reason: e.to_string(),
            })?;
            let mut sweep = pred.begin(r.side);
            for _ in 0..width * height {
                let p = sweep.prob_one();
                let bit = dec.decode_bit(p);
                sweep.commit(bit);
            }
            Ok(BinaryImage::new(sweep.pixels().to_vec(), width, height, 0))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Benchmark table

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub dataset: String,
    pub split: String,
    pub images: usize,
    /// Mean ideal code length per image.
    pub analytic: f64,
    /// Mean coded size per image, side field included.
    pub actual: f64,
    /// Largest per-image `actual − analytic`.
    pub worst_overhead: f64,
    pub note: String,
}

impl BenchRow {
    /// Coder overhead bound: at most 64 bits plus 0.2% of the ideal length
    /// per image, and never below the ideal on average.
    pub fn overhead_ok(&self) -> bool {
        self.actual + 1e-9 >= self.analytic && self.worst_overhead <= 64.0 + 0.002 * self.analytic.max(0.0) + 1.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
}

impl BenchmarkReport {
    pub fn row(&self, dataset: &str, method: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.dataset == dataset && r.method == method)
    }

    pub fn to_text(&self) -> String {
        let header = ["method", "dataset", "split", "images", "analytic", "actual", "note"];
        let cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    r.dataset.clone(),
                    r.split.clone(),
                    r.images.to_string(),
                    format!("{:.2}", r.analytic),
                    format!("{:.2}", r.actual),
                    r.note.clone(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            let cols: Vec<String> = row
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if (3..6).contains(&i) { format!("{c:>w$}") } else { format!("{c:<w$}") })
                .collect();
            let _ = writeln!(out, "{}", cols.join("  ").trim_end());
        };
        line(&mut out, &header);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,dataset,split,images,analytic_bits,actual_bits,worst_overhead,note\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4},{:.4},{:.4},{}",
                r.method,
                r.dataset,
                r.split,
                r.images,
                r.analytic,
                r.actual,
                r.worst_overhead,
                r.note.replace(',', ";")
            );
        }
        out
    }
}

/// Benchmarks one predictor on `images`, verifying losslessness on the way.
pub fn bench_predictor(pred: &dyn Predictor, images: &[BinaryImage]) -> Result<(f64, f64, f64), CodecError> {
    let compressed = compress_dataset(pred, images)?;
    let decoded = decompress_dataset(&compressed.container, pred)?;
    if let Some(i) = decoded.iter().zip(images).position(|(a, b)| a.pixels != b.pixels) {
        return Err(CodecError::CorruptRecord { index: i, reason: "decoded image differs from the original".into() });
    }
    let actual = compressed.actual_bits();
    let n = images.len().max(1) as f64;
    let worst = actual.iter().zip(&compressed.analytic_bits).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    Ok((compressed.analytic_bits.iter().sum::<f64>() / n, actual.iter().sum::<f64>() / n, worst.max(0.0)))
}

/// Non-neural rows of the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Constant,
    Pixel,
    Centers,
    Context,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 4] =
        [BaselineMethod::Constant, BaselineMethod::Pixel, BaselineMethod::Centers, BaselineMethod::Context];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(BaselineMethod::Constant),
            "pixel" => Some(BaselineMethod::Pixel),
            "centers" => Some(BaselineMethod::Centers),
            "context" => Some(BaselineMethod::Context),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Constant => "constant",
            BaselineMethod::Pixel => "pixel",
            BaselineMethod::Centers => "centers",
            BaselineMethod::Context => "context",
        }
    }
}

/// How the nearest-center coder picks its size and clamp.
#[derive(Debug, Clone, PartialEq)]
pub enum CenterSetting {
    Fixed { n_centers: usize, epsilon: f64 },
    CrossValidate { n_grid: Vec<usize>, epsilon_grid: Vec<f64> },
}

/// The clamp grid searched when cross-validating the nearest-center coder.
pub const CENTER_EPSILON_GRID: [f64; 6] = [0.2, 0.1, 0.05, 0.02, 0.01, 0.005];

/// A neural row: a trained model, or a configuration to train one.
#[derive(Debug, Clone)]
pub enum NeuralSource {
    Trained(Model),
    Train(TrainConfig),
}

#[derive(Debug, Clone)]
pub struct NeuralRow {
    pub label: String,
    pub source: NeuralSource,
}

#[derive(Debug, Clone)]
pub struct BenchDataset {
    pub name: String,
    pub splits: DataSplits,
    pub centers: CenterSetting,
    pub neural: Vec<NeuralRow>,
}

#[derive(Debug, Clone)]
pub struct Table1Config {
    pub baselines: Vec<BaselineMethod>,
    /// Clamp for the constant, per-pixel and context tables.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config { baselines: BaselineMethod::ALL.to_vec(), epsilon: crate::baselines::DEFAULT_EPSILON, seed: 1 }
    }
}

/// Fits one baseline on the training split.
pub fn fit_baseline(
    method: BaselineMethod,
    train: &[BinaryImage],
    epsilon: f64,
    centers: &CenterSetting,
    seed: u64,
) -> Result<(BaselineTable, String), CodecError> {
    Ok(match method {
        BaselineMethod::Constant => {
            let t = fit_constant_p(train, epsilon)?;
            let note = format!("p={:.5}", t.p);
            (BaselineTable::Constant(t), note)
        }
        BaselineMethod::Pixel => (BaselineTable::Pixel(fit_pixel_p(train, epsilon)?), format!("eps={epsilon}")),
        BaselineMethod::Context => (BaselineTable::Context(fit_context(train, epsilon)?), format!("eps={epsilon}")),
        BaselineMethod::Centers => {
            let (n, eps, how) = match centers {
                CenterSetting::Fixed { n_centers, epsilon } => (*n_centers, *epsilon, "fixed"),
                CenterSetting::CrossValidate { n_grid, epsilon_grid } => {
                    let cv = crossvalidate_epsilon(train, n_grid, epsilon_grid, seed)?;
                    (cv.best_n, cv.best_epsilon, "cross-validated")
                }
            };
            let cb = fit_centers(train, n, eps, seed)?;
            (BaselineTable::Centers(cb), format!("N={n} eps={eps} ({how}, index {} raw bits)", index_field_bits(n)))
        }
    })
}

fn original_row(name: &str, splits: &DataSplits) -> BenchRow {
    let n_x = splits.test.n_pixels() as f64;
    BenchRow {
        method: "original".into(),
        dataset: name.into(),
        split: "test".into(),
        images: splits.test.len(),
        analytic: n_x,
        actual: n_x,
        worst_overhead: 0.0,
        note: "one bit per pixel".into(),
    }
}

/// Regenerates the comparison table: the uncoded size, every requested
/// baseline, and every neural row, all on each dataset's test split.
pub fn run_table1(datasets: &[BenchDataset], config: &Table1Config) -> Result<BenchmarkReport, CodecError> {
    let mut report = BenchmarkReport::default();
    for ds in datasets {
        report.rows.push(original_row(&ds.name, &ds.splits));
        let train = &ds.splits.train.images;
        let test = &ds.splits.test.images;
        for &method in &config.baselines {
            let (table, note) = fit_baseline(method, train, config.epsilon, &ds.centers, config.seed)?;
            let (analytic, actual, worst) = bench_predictor(&table, test)?;
            report.rows.push(BenchRow {
                method: method.name().into(),
                dataset: ds.name.clone(),
                split: "test".into(),
                images: test.len(),
                analytic,
                actual,
                worst_overhead: worst,
                note,
            });
        }
        for row in &ds.neural {
            let (model, note) = match &row.source {
                NeuralSource::Trained(m) => (m.clone(), format!("{} hidden, pretrained", m.n_h)),
                NeuralSource::Train(cfg) => {
                    let (m, rep) = trainer::train(&ds.splits.train, cfg)?;
                    let note = format!(
                        "{} hidden, {} iterations{}",
                        m.n_h,
                        rep.iterations,
                        if rep.stopped_early { ", early stop" } else { "" }
                    );
                    (m, note)
                }
            };
            let (analytic, actual, worst) = bench_predictor(&model, test)?;
            report.rows.push(BenchRow {
                method: row.label.clone(),
                dataset: ds.name.clone(),
                split: "test".into(),
                images: test.len(),
                analytic,
                actual,
                worst_overhead: worst,
                note,
            });
        }
    }
    Ok(report)
}
