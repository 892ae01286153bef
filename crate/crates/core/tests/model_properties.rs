//! Properties of the predictor checked against a from-scratch evaluation that
//! shares no code with the incremental sweep.

mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{check_gradients, naive_predictions, random_model, random_pixels, VARIANTS};
use seqpix::dataset::BinaryImage;
use seqpix::model::{forward_trace, Variant};

#[test]
fn tiny_model_matches_naive_recompute() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let m = random_model(&mut rng, 2, 2, 2, Variant::FULL, 1.0);
    let x = random_pixels(&mut rng, 4);
    let img = BinaryImage::new(x.clone(), 2, 2, 0);
    let trace = forward_trace(&m, &img).unwrap();
    for (a, b) in trace.y.iter().zip(naive_predictions(&m, &x)) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incremental_equals_naive(seed in any::<u64>(), w in 1usize..6, h in 1usize..6, n_h in 1usize..5, vi in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, w, h, n_h, VARIANTS[vi], 1.5);
        let x = random_pixels(&mut rng, w * h);
        let trace = forward_trace(&m, &BinaryImage::new(x.clone(), w, h, 0)).unwrap();
        for (a, b) in trace.y.iter().zip(naive_predictions(&m, &x)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let recomputed: f64 = trace.bits.iter().sum();
        prop_assert!((recomputed - trace.total_bits).abs() < 1e-9);
        prop_assert!(trace.bits.iter().all(|&b| b >= 0.0));
    }

    #[test]
    fn future_pixels_never_change_current_prediction(seed in any::<u64>(), vi in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, 4, 3, 3, VARIANTS[vi], 2.0);
        let x = random_pixels(&mut rng, 12);
        let base = forward_trace(&m, &BinaryImage::new(x.clone(), 4, 3, 0)).unwrap();
        for pos in 0..12 {
            let mut flipped = x.clone();
            let p = m.permutation()[pos];
            flipped[p] ^= 1;
            let t = forward_trace(&m, &BinaryImage::new(flipped, 4, 3, 0)).unwrap();
            // Predictions up to and including the flipped position see only
            // pixels visited before it.
            prop_assert_eq!(&t.y[..=pos], &base.y[..=pos]);
        }
    }

    #[test]
    fn relabelling_pixels_preserves_code_length(seed in any::<u64>(), vi in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h, n_h) = (3, 3, 3);
        let m = random_model(&mut rng, w, h, n_h, VARIANTS[vi], 1.0);
        let x = random_pixels(&mut rng, w * h);
        let n = w * h;
        let mut sigma: Vec<usize> = (0..n).collect();
        sigma.shuffle(&mut rng);

        let mut m2 = m.clone();
        let mut x2 = vec![0u8; n];
        for p in 0..n {
            let s = sigma[p];
            x2[s] = x[p];
            m2.b_y[s] = m.b_y[p];
            m2.x_ave[s] = m.x_ave[p];
            for j in 0..m.n_h {
                m2.u[s * n_h + j] = m.u_at(j, p);
                m2.v[s * n_h + j] = m.v_at(p, j);
            }
            for p2 in 0..n {
                *m2.r_at_mut(sigma[p2], s) = m.r_at(p2, p);
            }
        }
        m2.set_permutation(m.permutation().iter().map(|&p| sigma[p]).collect()).unwrap();

        let a = forward_trace(&m, &BinaryImage::new(x, w, h, 0)).unwrap().total_bits;
        let b = forward_trace(&m2, &BinaryImage::new(x2, w, h, 0)).unwrap().total_bits;
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn unread_direct_weights_are_never_touched() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let m = random_model(&mut rng, 3, 3, 2, Variant::FULL, 1.0);
    let mut poisoned = m.clone();
    let perm = m.permutation().to_vec();
    for (t, &dst) in perm.iter().enumerate() {
        for &src in &perm[t..] {
            *poisoned.r_at_mut(dst, src) = f64::NAN;
        }
    }
    for _ in 0..10 {
        let img = BinaryImage::new(random_pixels(&mut rng, 9), 3, 3, 0);
        let a = forward_trace(&m, &img).unwrap();
        let b = forward_trace(&poisoned, &img).unwrap();
        assert!(b.total_bits.is_finite());
        assert_eq!(a, b);
    }
}

#[test]
fn gradient_matches_finite_differences_over_twenty_seeds() {
    for seed in 0..20u64 {
        for (vi, variant) in VARIANTS.iter().enumerate() {
            let worst = check_gradients(seed * 7 + vi as u64, 3, 1, 2, *variant, false);
            assert!(worst < 1e-5, "seed {seed} variant {variant:?}: rel err {worst:e}");
        }
        let worst = check_gradients(1000 + seed, 2, 2, 3, Variant::FULL, true);
        assert!(worst < 1e-5, "low-memory seed {seed}: rel err {worst:e}");
    }
}
