//! Loading and preparing the digit datasets.
//!
//! MNIST ships as IDX files (optionally gzip-compressed); USPS as plain text
//! with one image per line. Both are binarized with a fixed threshold before
//! any modeling happens.

use std::fs;
use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const MNIST_THRESHOLD: u8 = 128;
pub const USPS_THRESHOLD: u8 = 50;

pub const USPS_SIDE: usize = 16;
pub const USPS_TRAIN_PER_CLASS: usize = 700;
pub const USPS_TEST_PER_CLASS: usize = 300;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated file: need {needed} bytes, have {have}")]
    TruncatedFile { needed: usize, have: usize },
    #[error("image dimensions overflow ({count} x {rows} x {cols})")]
    DimensionOverflow { count: u32, rows: u32, cols: u32 },
    #[error("label {0} outside [0, 9]")]
    LabelOutOfRange(u8),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: value {value} outside the accepted pixel range")]
    ValueOutOfRange { line: usize, value: f64 },
    #[error("class {class} has {count} images, need {needed}")]
    InsufficientClassCount { class: u8, count: usize, needed: usize },
    #[error("mean image of an empty set")]
    EmptySet,
    #[error("{images} images but {labels} labels")]
    LabelCountMismatch { images: usize, labels: usize },
    #[error("images do not share one shape")]
    ShapeMismatch,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub pixels: Vec<u8>,
    pub width: usize,
    pub height: usize,
    pub label: u8,
}

/// A bilevel image; every pixel is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    pub pixels: Vec<u8>,
    pub width: usize,
    pub height: usize,
    pub label: u8,
}

impl BinaryImage {
    /// Builds an image, panicking if the buffer does not match the shape or
    /// holds values other than 0/1.
    pub fn new(pixels: Vec<u8>, width: usize, height: usize, label: u8) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer does not match shape");
        assert!(pixels.iter().all(|&p| p <= 1), "binary image holds a non-binary value");
        BinaryImage { pixels, width, height, label }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    /// Gray rendering with 1 ↦ 255.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            pixels: self.pixels.iter().map(|&p| p * 255).collect(),
            width: self.width,
            height: self.height,
            label: self.label,
        }
    }
}

pub trait Labeled {
    fn label(&self) -> u8;
}

impl Labeled for GrayImage {
    fn label(&self) -> u8 {
        self.label
    }
}

impl Labeled for BinaryImage {
    fn label(&self) -> u8 {
        self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A binarized split together with the mean image of the *training* split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<BinaryImage>,
    pub split: Split,
    pub mean_image: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

impl Dataset {
    pub fn new(images: Vec<BinaryImage>, split: Split, mean_image: Vec<f64>) -> Result<Self, DatasetError> {
        let (width, height) = common_shape(&images)?.unwrap_or((0, 0));
        if !images.is_empty() && mean_image.len() != width * height {
            return Err(DatasetError::ShapeMismatch);
        }
        Ok(Dataset { images, split, mean_image, width, height })
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Train and test splits sharing the training mean image.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Dataset,
    pub test: Dataset,
}

impl DataSplits {
    pub fn from_binary(train: Vec<BinaryImage>, test: Vec<BinaryImage>) -> Result<Self, DatasetError> {
        let mean = mean_image(&train)?;
        Ok(DataSplits {
            train: Dataset::new(train, Split::Train, mean.clone())?,
            test: Dataset::new(test, Split::Test, mean)?,
        })
    }
}

fn common_shape(images: &[BinaryImage]) -> Result<Option<(usize, usize)>, DatasetError> {
    let Some(first) = images.first() else {
        return Ok(None);
    };
    if images.iter().any(|im| im.width != first.width || im.height != first.height) {
        return Err(DatasetError::ShapeMismatch);
    }
    Ok(Some((first.width, first.height)))
}

fn read_header(bytes: &[u8], words: usize, expected_magic: u32) -> Result<Vec<u32>, DatasetError> {
    let needed = 4 * words;
    if bytes.len() < 4 {
        return Err(DatasetError::TruncatedFile { needed, have: bytes.len() });
    }
    let magic = BigEndian::read_u32(&bytes[0..4]);
    if magic != expected_magic {
        return Err(DatasetError::BadMagic { found: magic, expected: expected_magic });
    }
    if bytes.len() < needed {
        return Err(DatasetError::TruncatedFile { needed, have: bytes.len() });
    }
    Ok((1..words).map(|i| BigEndian::read_u32(&bytes[4 * i..4 * i + 4])).collect())
}

/// Parses an IDX rank-3 unsigned-byte file. Labels are left at 0; see
/// [`attach_labels`].
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>, DatasetError> {
    let header = read_header(bytes, 4, IDX_IMAGES_MAGIC)?;
    let (count, rows, cols) = (header[0], header[1], header[2]);
    let per_image = (rows as usize)
        .checked_mul(cols as usize)
        .ok_or(DatasetError::DimensionOverflow { count, rows, cols })?;
    let payload = per_image
        .checked_mul(count as usize)
        .and_then(|n| n.checked_add(16))
        .ok_or(DatasetError::DimensionOverflow { count, rows, cols })?;
    if count > 0 && per_image == 0 {
        return Err(DatasetError::DimensionOverflow { count, rows, cols });
    }
    if bytes.len() < payload {
        return Err(DatasetError::TruncatedFile { needed: payload, have: bytes.len() });
    }
    Ok(bytes[16..payload]
        .chunks_exact(per_image.max(1))
        .take(count as usize)
        .map(|chunk| GrayImage {
            pixels: chunk.to_vec(),
            width: cols as usize,
            height: rows as usize,
            label: 0,
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DatasetError> {
    let header = read_header(bytes, 2, IDX_LABELS_MAGIC)?;
    let count = header[0] as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(DatasetError::TruncatedFile { needed, have: bytes.len() });
    }
    let labels = &bytes[8..needed];
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(DatasetError::LabelOutOfRange(bad));
    }
    Ok(labels.to_vec())
}

pub fn attach_labels(images: &mut [GrayImage], labels: &[u8]) -> Result<(), DatasetError> {
    if images.len() != labels.len() {
        return Err(DatasetError::LabelCountMismatch { images: images.len(), labels: labels.len() });
    }
    for (im, &l) in images.iter_mut().zip(labels) {
        im.label = l;
    }
    Ok(())
}

/// Serializes gray images as an IDX rank-3 file.
pub fn write_idx_images(images: &[GrayImage]) -> Vec<u8> {
    let (rows, cols) = images.first().map_or((0, 0), |im| (im.height, im.width));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for word in [IDX_IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for im in images {
        out.extend_from_slice(&im.pixels);
    }
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads a file, transparently inflating gzip content.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let raw = fs::read(path).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses the USPS text layout: each nonblank line is a label followed by
/// 256 pixel values. The value range is detected over the whole text: if
/// every pixel lies in [-1, 1] the values are rescaled to [0, 255].
pub fn parse_usps_text(text: &str) -> Result<Vec<GrayImage>, DatasetError> {
    let n_pixels = USPS_SIDE * USPS_SIDE;
    let mut rows: Vec<(usize, u8, Vec<f64>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DatasetError::MalformedLine {
                    line: line_no,
                    reason: format!("cannot parse {tok:?} as a number"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != 1 + n_pixels {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                reason: format!("expected {} numbers, found {}", 1 + n_pixels, values.len()),
            });
        }
        let label = values[0];
        if label.fract() != 0.0 || !(0.0..=9.0).contains(&label) {
            return Err(DatasetError::MalformedLine { line: line_no, reason: format!("bad label {label}") });
        }
        rows.push((line_no, label as u8, values[1..].to_vec()));
    }

    let signed_unit = rows.iter().all(|(_, _, px)| px.iter().all(|v| (-1.0..=1.0).contains(v)));
    rows.into_iter()
        .map(|(line, label, px)| {
            let pixels = px
                .into_iter()
                .map(|v| {
                    let scaled = if signed_unit { ((v + 1.0) * 127.5).round() } else { v.round() };
                    if (0.0..=255.0).contains(&scaled) {
                        Ok(scaled as u8)
                    } else {
                        Err(DatasetError::ValueOutOfRange { line, value: v })
                    }
                })
                .collect::<Result<Vec<u8>, _>>()?;
            Ok(GrayImage { pixels, width: USPS_SIDE, height: USPS_SIDE, label })
        })
        .collect()
}

/// Pixels at or above `threshold` become 1.
pub fn binarize(img: &GrayImage, threshold: u8) -> BinaryImage {
    BinaryImage {
        pixels: img.pixels.iter().map(|&v| u8::from(v >= threshold)).collect(),
        width: img.width,
        height: img.height,
        label: img.label,
    }
}

pub fn binarize_all(images: &[GrayImage], threshold: u8) -> Vec<BinaryImage> {
    images.iter().map(|im| binarize(im, threshold)).collect()
}

/// Random per-class split into 700 training and 300 test images. Classes
/// absent from the input are skipped; surplus images of a class are dropped.
/// Both outputs keep the input order.
pub fn split_usps<T: Labeled + Clone>(images: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    let needed = USPS_TRAIN_PER_CLASS + USPS_TEST_PER_CLASS;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (i, im) in images.iter().enumerate() {
        let label = im.label();
        if label > 9 {
            return Err(DatasetError::LabelOutOfRange(label));
        }
        by_class[label as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < needed {
            return Err(DatasetError::InsufficientClassCount { class: class as u8, count: members.len(), needed });
        }
        members.shuffle(&mut rng);
        train_idx.extend_from_slice(&members[..USPS_TRAIN_PER_CLASS]);
        test_idx.extend_from_slice(&members[USPS_TRAIN_PER_CLASS..needed]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        train_idx.into_iter().map(|i| images[i].clone()).collect(),
        test_idx.into_iter().map(|i| images[i].clone()).collect(),
    ))
}

/// Per-pixel average of binarized training images.
pub fn mean_image(train: &[BinaryImage]) -> Result<Vec<f64>, DatasetError> {
    let (w, h) = common_shape(train)?.ok_or(DatasetError::EmptySet)?;
    let mut counts = vec![0u64; w * h];
    for im in train {
        for (c, &p) in counts.iter_mut().zip(&im.pixels) {
            *c += u64::from(p);
        }
    }
    let n = train.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

fn find_file(dir: &Path, stem: &str) -> Option<std::path::PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

fn missing(dir: &Path, stem: &str) -> DatasetError {
    DatasetError::Io {
        path: dir.join(stem).display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
    }
}

fn load_idx_pair(dir: &Path, images: &str, labels: &str) -> Result<Vec<GrayImage>, DatasetError> {
    let img_path = find_file(dir, images).ok_or_else(|| missing(dir, images))?;
    let mut imgs = parse_idx_images(&read_maybe_gzip(&img_path)?)?;
    if let Some(lbl_path) = find_file(dir, labels) {
        let lbls = parse_idx_labels(&read_maybe_gzip(&lbl_path)?)?;
        attach_labels(&mut imgs, &lbls)?;
    }
    Ok(imgs)
}

/// True if `dir` holds the MNIST image files (plain or gzipped); label files
/// are optional.
pub fn mnist_present(dir: &Path) -> bool {
    ["train-images-idx3-ubyte", "t10k-images-idx3-ubyte"]
        .iter()
        .all(|stem| find_file(dir, stem).is_some())
}

pub fn usps_path(dir: &Path) -> Option<std::path::PathBuf> {
    find_file(dir, "usps.txt")
}

/// Loads the official MNIST split from `dir` and binarizes it.
pub fn load_mnist(dir: &Path, threshold: u8) -> Result<DataSplits, DatasetError> {
    let train = load_idx_pair(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    let test = load_idx_pair(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    DataSplits::from_binary(binarize_all(&train, threshold), binarize_all(&test, threshold))
}

/// Loads `usps.txt` from `dir`, splits it 700/300 per class and binarizes.
pub fn load_usps(dir: &Path, threshold: u8, seed: u64) -> Result<DataSplits, DatasetError> {
    let path = usps_path(dir).ok_or_else(|| missing(dir, "usps.txt"))?;
    let bytes = read_maybe_gzip(&path)?;
    let text = String::from_utf8_lossy(&bytes);
    let gray = parse_usps_text(&text)?;
    let (train, test) = split_usps(&gray, seed)?;
    DataSplits::from_binary(binarize_all(&train, threshold), binarize_all(&test, threshold))
}

/// Tiles equally sized images row-major into a grid of `cols` columns with a
/// one-pixel dark border between cells. No images gives a 0×0 image.
pub fn tile_grid(images: &[GrayImage], cols: usize) -> GrayImage {
    let Some(first) = images.first() else {
        return GrayImage { pixels: Vec::new(), width: 0, height: 0, label: 0 };
    };
    let cols = cols.clamp(1, images.len());
    let rows = images.len().div_ceil(cols);
    let (w, h) = (first.width, first.height);
    let width = cols * (w + 1) + 1;
    let height = rows * (h + 1) + 1;
    let mut pixels = vec![0u8; width * height];
    for (i, im) in images.iter().enumerate() {
        let (oy, ox) = ((i / cols) * (h + 1) + 1, (i % cols) * (w + 1) + 1);
        for y in 0..h {
            pixels[(oy + y) * width + ox..(oy + y) * width + ox + w].copy_from_slice(&im.pixels[y * w..(y + 1) * w]);
        }
    }
    GrayImage { pixels, width, height, label: 0 }
}

/// Binary portable graymap (P5), maxval 255.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, rows: u32, cols: u32, payload: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for w in [2051u32, count, rows, cols] {
            b.extend_from_slice(&w.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn idx_single_image() {
        let imgs = parse_idx_images(&idx_images(1, 2, 2, &[0, 128, 255, 7])).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].pixels, vec![0, 128, 255, 7]);
        assert_eq!((imgs[0].width, imgs[0].height), (2, 2));
    }

    #[test]
    fn idx_zero_count() {
        assert!(parse_idx_images(&idx_images(0, 28, 28, &[])).unwrap().is_empty());
    }

    #[test]
    fn idx_label_magic_rejected_as_images() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[..4].copy_from_slice(&2049u32.to_be_bytes());
        assert!(matches!(parse_idx_images(&bytes), Err(DatasetError::BadMagic { found: 2049, .. })));
    }

    #[test]
    fn idx_truncated_and_overflow() {
        assert!(matches!(
            parse_idx_images(&idx_images(2, 2, 2, &[1, 2, 3, 4, 5])),
            Err(DatasetError::TruncatedFile { .. })
        ));
        assert!(matches!(parse_idx_images(&[0, 0, 8, 3, 0]), Err(DatasetError::TruncatedFile { .. })));
        assert!(matches!(
            parse_idx_images(&idx_images(u32::MAX, u32::MAX, u32::MAX, &[])),
            Err(DatasetError::DimensionOverflow { .. }) | Err(DatasetError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn idx_labels() {
        let mut b = Vec::new();
        b.extend_from_slice(&2049u32.to_be_bytes());
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend_from_slice(&[5, 0, 4]);
        assert_eq!(parse_idx_labels(&b).unwrap(), vec![5, 0, 4]);

        assert!(parse_idx_labels(&write_idx_labels(&[])).unwrap().is_empty());
        assert!(matches!(parse_idx_labels(&write_idx_labels(&[3, 17])), Err(DatasetError::LabelOutOfRange(17))));
        assert!(matches!(parse_idx_labels(&idx_images(0, 1, 1, &[])), Err(DatasetError::BadMagic { .. })));
    }

    #[test]
    fn idx_write_parse_roundtrip() {
        let imgs = vec![
            GrayImage { pixels: vec![1, 2, 3, 4, 5, 6], width: 3, height: 2, label: 0 },
            GrayImage { pixels: vec![9, 8, 7, 6, 5, 4], width: 3, height: 2, label: 0 },
        ];
        assert_eq!(parse_idx_images(&write_idx_images(&imgs)).unwrap(), imgs);
    }

    fn usps_line(label: &str, value: &str, n: usize) -> String {
        let mut s = label.to_string();
        for _ in 0..n {
            s.push(' ');
            s.push_str(value);
        }
        s
    }

    #[test]
    fn usps_signed_unit_range() {
        let imgs = parse_usps_text(&usps_line("3", "-1", 256)).unwrap();
        assert_eq!(imgs[0].label, 3);
        assert!(imgs[0].pixels.iter().all(|&p| p == 0));

        let imgs = parse_usps_text(&usps_line("7", "1", 256)).unwrap();
        assert!(imgs[0].pixels.iter().all(|&p| p == 255));

        let text = format!("{}\n\n{}\n", usps_line("1", "0", 256), usps_line("2.0000", "-1", 256));
        let imgs = parse_usps_text(&text).unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0].pixels[0], 128);
        assert_eq!(imgs[1].label, 2);
    }

    #[test]
    fn usps_byte_range_and_errors() {
        let imgs = parse_usps_text(&usps_line("0", "200", 256)).unwrap();
        assert!(imgs[0].pixels.iter().all(|&p| p == 200));
        assert!(matches!(parse_usps_text(&usps_line("3", "0", 255)), Err(DatasetError::MalformedLine { line: 1, .. })));
        assert!(matches!(parse_usps_text(&usps_line("3", "300", 256)), Err(DatasetError::ValueOutOfRange { .. })));
        assert!(matches!(parse_usps_text(&usps_line("3", "-5", 256)), Err(DatasetError::ValueOutOfRange { .. })));
        assert!(matches!(parse_usps_text(&usps_line("x", "0", 256)), Err(DatasetError::MalformedLine { .. })));
        assert!(matches!(parse_usps_text(&usps_line("12", "0", 256)), Err(DatasetError::MalformedLine { .. })));
    }

    #[test]
    fn binarize_boundaries() {
        let g = GrayImage { pixels: vec![128, 127, 49, 50, 255, 0], width: 6, height: 1, label: 1 };
        assert_eq!(binarize(&g, 128).pixels, vec![1, 0, 0, 0, 1, 0]);
        assert_eq!(binarize(&g, 50).pixels, vec![1, 1, 0, 1, 1, 0]);
        let white = GrayImage { pixels: vec![255; 9], width: 3, height: 3, label: 0 };
        assert!(binarize(&white, MNIST_THRESHOLD).pixels.iter().all(|&p| p == 1));
    }

    #[test]
    fn binarize_idempotent_on_binary_grays() {
        let g = GrayImage { pixels: vec![0, 255, 255, 0], width: 2, height: 2, label: 0 };
        for t in 1..=255u8 {
            let once = binarize(&g, t);
            assert_eq!(binarize(&once.to_gray(), t), once);
        }
    }

    fn labeled(label: u8, tag: u8) -> GrayImage {
        GrayImage { pixels: vec![tag], width: 1, height: 1, label }
    }

    #[test]
    fn usps_split_counts_and_determinism() {
        let imgs: Vec<GrayImage> = (0..1000).map(|i| labeled(0, (i % 251) as u8)).collect();
        let (train, test) = split_usps(&imgs, 9).unwrap();
        assert_eq!((train.len(), test.len()), (700, 300));
        let again = split_usps(&imgs, 9).unwrap();
        assert_eq!((train.clone(), test.clone()), again);
        let other = split_usps(&imgs, 10).unwrap();
        assert_ne!(train, other.0);

        let short: Vec<GrayImage> = (0..999).map(|_| labeled(4, 0)).collect();
        assert!(matches!(
            split_usps(&short, 1),
            Err(DatasetError::InsufficientClassCount { class: 4, count: 999, .. })
        ));
    }

    #[test]
    fn usps_split_all_classes_disjoint() {
        let imgs: Vec<GrayImage> = (0..11_000u32)
            .map(|i| GrayImage { pixels: i.to_le_bytes().to_vec(), width: 4, height: 1, label: (i % 10) as u8 })
            .collect();
        let (train, test) = split_usps(&imgs, 1).unwrap();
        for class in 0..10u8 {
            assert_eq!(train.iter().filter(|im| im.label == class).count(), 700);
            assert_eq!(test.iter().filter(|im| im.label == class).count(), 300);
        }
        let train_ids: std::collections::HashSet<_> = train.iter().map(|im| im.pixels.clone()).collect();
        assert!(test.iter().all(|im| !train_ids.contains(&im.pixels)));
    }

    #[test]
    fn mean_image_examples() {
        let a = BinaryImage::new(vec![0, 1], 2, 1, 0);
        let b = BinaryImage::new(vec![1, 1], 2, 1, 0);
        assert_eq!(mean_image(&[a.clone(), b]).unwrap(), vec![0.5, 1.0]);
        assert_eq!(mean_image(&[a]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(mean_image(&[]), Err(DatasetError::EmptySet)));
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let raw = write_idx_labels(&[1, 2, 3]);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.gz");
        fs::write(&path, enc.finish().unwrap()).unwrap();
        assert_eq!(read_maybe_gzip(&path).unwrap(), raw);
    }

    #[test]
    fn grid_and_pgm() {
        let a = GrayImage { pixels: vec![255, 0, 0, 255], width: 2, height: 2, label: 0 };
        let g = tile_grid(&[a.clone(), a.clone(), a], 2);
        assert_eq!((g.width, g.height), (7, 7));
        assert_eq!(g.pixels[7 + 1], 255);
        assert_eq!(g.pixels[7 + 4], 255);
        assert_eq!(g.pixels[4 * 7 + 4], 0);
        let empty = tile_grid(&[], 10);
        assert_eq!(encode_pgm(&empty), b"P5\n0 0\n255\n");
        assert_eq!(encode_pgm(&g).len(), "P5\n7 7\n255\n".len() + 49);
    }
}
