//! Binary arithmetic coder driven by external per-bit probabilities.
//!
//! 32-bit low/high registers with underflow ("pending bit") counting and
//! 16-bit probabilities. For a bit with `P(1) = q / 2^16` the interval splits
//! into a low part for 0 and a high part for 1 of width
//! `⌊range · q / 2^16⌋`. Termination emits the pending bits plus two more,
//! which pins the final value inside the last interval whatever bits a
//! decoder reads past the end.
//!
//! Encoder and decoder are streaming: the decoder yields bit `k` before it
//! needs the probability of bit `k + 1`.

use thiserror::Error;

pub const PROB_BITS: u32 = 16;
pub const PROB_SCALE: u32 = 1 << PROB_BITS;

const TOP: u64 = 1 << 32;
const HALF: u64 = 1 << 31;
const QUARTER: u64 = 1 << 30;
const THREE_QUARTERS: u64 = 3 * QUARTER;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoderError {
    #[error("buffer holds {have} bytes but claims {bit_count} bits")]
    TruncatedBuffer { bit_count: u64, have: usize },
}

/// `round(p · 2^16)` clamped to `[1, 2^16 − 1]`.
pub fn quantize_prob(p: f64) -> u32 {
    let q = (p * f64::from(PROB_SCALE)).round();
    if q.is_nan() {
        return PROB_SCALE / 2;
    }
    q.clamp(1.0, f64::from(PROB_SCALE - 1)) as u32
}

/// Ideal code length in bits of `bit` under the quantized probability.
pub fn quantized_cost(bit: u8, p_one: f64) -> f64 {
    let q = f64::from(quantize_prob(p_one)) / f64::from(PROB_SCALE);
    if bit == 1 {
        -q.log2()
    } else {
        -(1.0 - q).log2()
    }
}

/// Ordered `(bit, P(bit = 1))` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BitProbabilityStream {
    pub pairs: Vec<(u8, f64)>,
}

impl BitProbabilityStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: u8, p_one: f64) {
        debug_assert!(bit <= 1);
        self.pairs.push((bit, p_one));
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn bits(&self) -> Vec<u8> {
        self.pairs.iter().map(|&(b, _)| b).collect()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.pairs.iter().map(|&(_, p)| p).collect()
    }

    /// Σ −log2 of the realized bit's probability, after quantization.
    pub fn ideal_bits_quantized(&self) -> f64 {
        self.pairs.iter().map(|&(b, p)| quantized_cost(b, p)).sum()
    }

    pub fn ideal_bits(&self) -> f64 {
        self.pairs.iter().map(|&(b, p)| if b == 1 { -p.log2() } else { -(1.0 - p).log2() }).sum()
    }
}

impl FromIterator<(u8, f64)> for BitProbabilityStream {
    fn from_iter<I: IntoIterator<Item = (u8, f64)>>(iter: I) -> Self {
        BitProbabilityStream { pairs: iter.into_iter().collect() }
    }
}

/// Coded payload; bits are packed MSB first and the last byte is zero padded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeBuffer {
    pub payload: Vec<u8>,
    pub bit_count: u64,
}

#[derive(Debug, Default)]
struct BitSink {
    bytes: Vec<u8>,
    count: u64,
}

impl BitSink {
    #[inline]
    fn put(&mut self, bit: bool) {
        let off = (self.count % 8) as u32;
        if off == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> off;
        }
        self.count += 1;
    }

    #[inline]
    fn put_with_pending(&mut self, bit: bool, pending: &mut u64) {
        self.put(bit);
        for _ in 0..*pending {
            self.put(!bit);
        }
        *pending = 0;
    }
}

#[derive(Debug)]
pub struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    out: BitSink,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn one_width(range: u64, q: u32) -> u64 {
    (range * u64::from(q)) >> PROB_BITS
}

impl Encoder {
    pub fn new() -> Self {
        Encoder { low: 0, high: TOP - 1, pending: 0, out: BitSink::default() }
    }

    pub fn encode_bit(&mut self, bit: u8, p_one: f64) {
        self.encode_quantized(bit, quantize_prob(p_one));
    }

    pub fn encode_quantized(&mut self, bit: u8, q: u32) {
        let range = self.high - self.low + 1;
        let split = self.high + 1 - one_width(range, q);
        if bit == 0 {
            self.high = split - 1;
        } else {
            self.low = split;
        }
        loop {
            if self.high < HALF {
                self.out.put_with_pending(false, &mut self.pending);
            } else if self.low >= HALF {
                self.out.put_with_pending(true, &mut self.pending);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
    }

    /// Bits emitted so far, counting pending bits.
    pub fn bits_so_far(&self) -> u64 {
        self.out.count + self.pending
    }

    pub fn finish(mut self) -> CodeBuffer {
        self.pending += 1;
        let bit = self.low >= QUARTER;
        self.out.put_with_pending(bit, &mut self.pending);
        CodeBuffer { bit_count: self.out.count, payload: self.out.bytes }
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    bit_count: u64,
    pos: u64,
    low: u64,
    high: u64,
    value: u64,
}

impl<'a> Decoder<'a> {
    pub fn new(buffer: &'a CodeBuffer) -> Result<Self, CoderError> {
        Self::from_parts(&buffer.payload, buffer.bit_count)
    }

    pub fn from_parts(payload: &'a [u8], bit_count: u64) -> Result<Self, CoderError> {
        if bit_count.div_ceil(8) > payload.len() as u64 {
            return Err(CoderError::TruncatedBuffer { bit_count, have: payload.len() });
        }
        let mut d = Decoder { buf: payload, bit_count, pos: 0, low: 0, high: TOP - 1, value: 0 };
        for _ in 0..32 {
            d.value = (d.value << 1) | d.next_bit();
        }
        Ok(d)
    }

    /// Bits past the end of the payload read as zero.
    #[inline]
    fn next_bit(&mut self) -> u64 {
        let bit = if self.pos < self.bit_count {
            let byte = self.buf[(self.pos / 8) as usize];
            u64::from((byte >> (7 - (self.pos % 8))) & 1)
        } else {
            0
        };
        self.pos += 1;
        bit
    }

    pub fn decode_bit(&mut self, p_one: f64) -> u8 {
        self.decode_quantized(quantize_prob(p_one))
    }

    pub fn decode_quantized(&mut self, q: u32) -> u8 {
        let range = self.high - self.low + 1;
        let split = self.high + 1 - one_width(range, q);
        let bit = if self.value >= split {
            self.low = split;
            1
        } else {
            self.high = split - 1;
            0
        };
        loop {
            let shift = if self.high < HALF {
                0
            } else if self.low >= HALF {
                HALF
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                QUARTER
            } else {
                break;
            };
            self.low -= shift;
            self.high -= shift;
            self.value -= shift;
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | self.next_bit();
        }
        bit
    }
}

pub fn encode(stream: &BitProbabilityStream) -> CodeBuffer {
    let mut enc = Encoder::new();
    for &(bit, p) in &stream.pairs {
        enc.encode_bit(bit, p);
    }
    enc.finish()
}

pub fn decode(buffer: &CodeBuffer, probs: &[f64]) -> Result<Vec<u8>, CoderError> {
    let mut dec = Decoder::new(buffer)?;
    Ok(probs.iter().map(|&p| dec.decode_bit(p)).collect())
}
