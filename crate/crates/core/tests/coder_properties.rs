use std::fmt::Write as _;
use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqpix::coder::{decode, encode, quantize_prob, BitProbabilityStream, CodeBuffer, CoderError};

fn random_stream(rng: &mut ChaCha8Rng, max_len: usize) -> BitProbabilityStream {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| {
            let p: f64 = rng.random_range(0.001..0.999);
            (u8::from(rng.random::<f64>() < p), p)
        })
        .collect()
}

#[test]
fn ten_thousand_random_streams_roundtrip_within_overhead() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let mut worst_overhead: f64 = 0.0;
    let mut least_overhead = f64::INFINITY;
    for _ in 0..10_000 {
        let s = random_stream(&mut rng, 4096);
        let buf = encode(&s);
        assert_eq!(decode(&buf, &s.probs()).unwrap(), s.bits());
        let over = buf.bit_count as f64 - s.ideal_bits_quantized();
        worst_overhead = worst_overhead.max(over);
        least_overhead = least_overhead.min(over);
        assert!((0.0..=64.0).contains(&over), "overhead {over}");
        let raw = s.ideal_bits();
        assert!(buf.bit_count as f64 - raw <= 0.002 * raw + 64.0);
    }
    assert!(least_overhead >= 0.0 && worst_overhead <= 64.0);
}

proptest! {
    #[test]
    fn any_stream_roundtrips(bits in prop::collection::vec(0u8..2, 0..600), ps in prop::collection::vec(1e-7f64..(1.0 - 1e-7), 600)) {
        let s: BitProbabilityStream = bits.iter().zip(&ps).map(|(&b, &p)| (b, p)).collect();
        let buf = encode(&s);
        prop_assert_eq!(decode(&buf, &s.probs()).unwrap(), s.bits());
        let over = buf.bit_count as f64 - s.ideal_bits_quantized();
        prop_assert!((0.0..=64.0).contains(&over));
    }

    #[test]
    fn damaged_buffers_never_panic(seed in any::<u64>(), cut in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stream(&mut rng, 300);
        let mut buf = encode(&s);
        let keep = buf.payload.len().saturating_sub(cut);
        buf.payload.truncate(keep);
        match decode(&buf, &s.probs()) {
            Err(CoderError::TruncatedBuffer { .. }) => {}
            Ok(_) => prop_assert!(false, "truncation went unnoticed"),
        }
        // Lying about the length decodes to something, without panicking.
        buf.bit_count = 8 * buf.payload.len() as u64;
        let _ = decode(&buf, &s.probs());
    }
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/coder_golden.txt")
}

fn hex(bytes: &[u8]) -> String {
    if bytes.is_empty() {
        return "-".into();
    }
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn unhex(s: &str) -> Vec<u8> {
    if s == "-" {
        return Vec::new();
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap()).collect()
}

fn golden_streams() -> Vec<Vec<(u8, u32)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut out = vec![Vec::new(), vec![(1, 32768)], vec![(0, 1), (1, 65535), (1, 1), (0, 65535)]];
    for len in [8usize, 31, 64, 200, 784] {
        out.push(
            (0..len)
                .map(|_| {
                    let q = rng.random_range(1..65536u32);
                    (u8::from(rng.random_range(0..65536u32) < q), q)
                })
                .collect(),
        );
    }
    out.push((0..300).map(|i| ((i % 2) as u8, 32768)).collect());
    out.push(std::iter::repeat((1u8, 65000u32)).take(500).collect());
    out
}

fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= b << (7 - i % 8);
    }
    out
}

/// Lines of `probs_hex bits_hex payload_hex`; probabilities are 16-bit
/// big-endian quantized values, bits are packed MSB first.
#[test]
fn golden_vectors() {
    let mut text = String::new();
    for stream in golden_streams() {
        let probs: Vec<u8> = stream.iter().flat_map(|&(_, q)| (q as u16).to_be_bytes()).collect();
        let bits: Vec<u8> = stream.iter().map(|&(b, _)| b).collect();
        let s: BitProbabilityStream = stream.iter().map(|&(b, q)| (b, f64::from(q) / 65536.0)).collect();
        for &(_, q) in &stream {
            assert_eq!(quantize_prob(f64::from(q) / 65536.0), q);
        }
        let buf = encode(&s);
        let _ = writeln!(text, "{} {} {}", hex(&probs), hex(&pack_bits(&bits)), hex(&buf.payload));
    }
    if std::env::var_os("SEQPIX_REGEN_GOLDEN").is_some() {
        std::fs::write(golden_path(), &text).unwrap();
    }
    let stored = std::fs::read_to_string(golden_path()).expect("golden vector file");
    assert_eq!(stored.lines().count(), golden_streams().len());
    for (line, fresh) in stored.lines().zip(text.lines()) {
        assert_eq!(line, fresh, "payload differs from the checked-in golden vector");
        let mut fields = line.split(' ');
        let probs = unhex(fields.next().unwrap());
        let bits = unhex(fields.next().unwrap());
        let payload = unhex(fields.next().unwrap());
        let qs: Vec<f64> = probs.chunks(2).map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / 65536.0).collect();
        let n = qs.len();
        let buf = CodeBuffer { bit_count: 8 * payload.len() as u64, payload };
        let decoded = decode(&buf, &qs).unwrap();
        assert_eq!(pack_bits(&decoded), bits);
        assert_eq!(decoded.len(), n);
    }
}
