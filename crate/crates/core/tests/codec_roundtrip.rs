//! Losslessness, decoder causality and bit accounting of the codec for every
//! predictor class.

mod common;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::stroke_images;
use seqpix::baselines::{
    encode_with_centers, encode_with_context, fit_centers, fit_constant_p, fit_context, fit_pixel_p, BaselineTable,
};
use seqpix::codec::{compress_dataset, decompress_dataset, probability_stream, CodecContainer, CodecError, Predictor};
use seqpix::dataset::{mean_image, BinaryImage};
use seqpix::model::{forward_trace, Model, Variant};
use seqpix::trainer::init_model;

const W: usize = 12;
const H: usize = 10;

fn shuffled_model(seed: u64, variant: Variant, train: &[BinaryImage]) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..W * H).collect();
    perm.shuffle(&mut rng);
    let mean = mean_image(train).unwrap();
    let mut m = init_model(W, H, 8, variant, &mean, Some(&perm), &mut rng);
    m.set_permutation(perm).unwrap();
    // Larger weights than the initializer so that probabilities move far
    // from one half and actually depend on the context.
    for w in m.u.iter_mut().chain(m.v.iter_mut()).chain(m.r.iter_mut()) {
        *w *= 4.0;
    }
    m
}

fn predictors(train: &[BinaryImage]) -> Vec<(&'static str, Box<dyn Predictor>)> {
    vec![
        ("neural-full", Box::new(shuffled_model(1, Variant::FULL, train))),
        ("neural-uv", Box::new(shuffled_model(2, Variant::UV_ONLY, train))),
        ("neural-r", Box::new(shuffled_model(3, Variant::R_ONLY, train))),
        ("constant", Box::new(BaselineTable::Constant(fit_constant_p(train, 1e-3).unwrap()))),
        ("pixel", Box::new(BaselineTable::Pixel(fit_pixel_p(train, 1e-3).unwrap()))),
        ("centers", Box::new(BaselineTable::Centers(fit_centers(train, 16, 0.02, 5).unwrap()))),
        ("context", Box::new(BaselineTable::Context(fit_context(train, 1e-3).unwrap()))),
    ]
}

#[test]
fn hundred_images_roundtrip_for_every_predictor() {
    let train = stroke_images(300, W, H, 10);
    let test = stroke_images(100, W, H, 11);
    for (name, pred) in predictors(&train) {
        let c = compress_dataset(pred.as_ref(), &test).unwrap();
        let bytes = c.container.to_bytes();
        let back = CodecContainer::from_bytes(&bytes).unwrap();
        assert_eq!(back, c.container, "{name}");
        let decoded = decompress_dataset(&back, pred.as_ref()).unwrap();
        for (a, b) in decoded.iter().zip(&test) {
            assert_eq!(a.pixels, b.pixels, "{name}");
        }
        for (i, &analytic) in c.analytic_bits.iter().enumerate() {
            let actual = c.container.record_bits(i) as f64;
            assert!(analytic.is_finite(), "{name}");
            assert!(actual - analytic <= 64.0 + 0.002 * analytic + 1.0, "{name}: {actual} vs {analytic}");
        }
        let mean_a: f64 = c.analytic_bits.iter().sum::<f64>() / 100.0;
        let mean_c: f64 = (0..100).map(|i| c.container.record_bits(i) as f64).sum::<f64>() / 100.0;
        assert!(mean_c >= mean_a, "{name}: mean actual {mean_c} below analytic {mean_a}");
    }
}

#[test]
fn decoder_never_depends_on_undecoded_pixels() {
    let train = stroke_images(200, W, H, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (name, pred) in predictors(&train) {
        for image in stroke_images(5, W, H, rng.random()) {
            let side = pred.choose_side(&image);
            let base = probability_stream(pred.as_ref(), &image, side).unwrap().probs();
            let order: Vec<usize> = {
                let mut sweep = pred.begin(side);
                (0..W * H)
                    .map(|_| {
                        let p = sweep.next_pixel();
                        let bit = sweep.to_coded(image.pixels[p]);
                        sweep.prob_one();
                        sweep.commit(bit);
                        p
                    })
                    .collect()
            };
            for k in (0..W * H).step_by(7) {
                let mut changed = image.clone();
                for &p in &order[k..] {
                    changed.pixels[p] = rng.random_range(0..2);
                }
                let probs = probability_stream(pred.as_ref(), &changed, side).unwrap().probs();
                assert_eq!(&probs[..=k], &base[..=k], "{name} at position {k}");
            }
        }
    }
}

#[test]
fn analytic_bits_agree_with_direct_accounting() {
    let train = stroke_images(200, W, H, 30);
    let test = stroke_images(20, W, H, 31);
    let m = shuffled_model(4, Variant::FULL, &train);
    let c = compress_dataset(&m, &test).unwrap();
    for (im, a) in test.iter().zip(&c.analytic_bits) {
        assert!((forward_trace(&m, im).unwrap().total_bits - a).abs() < 1e-6);
    }

    let cb = fit_centers(&train, 10, 0.05, 2).unwrap();
    let table = BaselineTable::Centers(cb.clone());
    let c = compress_dataset(&table, &test).unwrap();
    for (i, im) in test.iter().enumerate() {
        let direct = encode_with_centers(&cb, im).unwrap();
        assert!((direct.analytic_bits - c.analytic_bits[i]).abs() < 1e-6);
        assert_eq!(c.container.records[i].side, direct.center as u64);
        assert_eq!(c.container.side_bits, direct.index_bits);
    }

    let ctx = fit_context(&train, 1e-3).unwrap();
    let c = compress_dataset(&BaselineTable::Context(ctx.clone()), &test).unwrap();
    for (im, a) in test.iter().zip(&c.analytic_bits) {
        assert!((encode_with_context(&ctx, im).unwrap().0 - a).abs() < 1e-6);
    }
}

#[test]
fn mismatched_predictor_is_rejected() {
    let train = stroke_images(50, W, H, 40);
    let pixel = BaselineTable::Pixel(fit_pixel_p(&train, 1e-3).unwrap());
    let c = compress_dataset(&pixel, &train[..3]).unwrap();
    let other = BaselineTable::Pixel(fit_pixel_p(&train[..10], 1e-3).unwrap());
    assert!(matches!(decompress_dataset(&c.container, &other), Err(CodecError::HashMismatch { .. })));
    let ctx = BaselineTable::Context(fit_context(&train, 1e-3).unwrap());
    assert!(matches!(decompress_dataset(&c.container, &ctx), Err(CodecError::PredictorMismatch { .. })));
}
