#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqpix::dataset::BinaryImage;
use seqpix::model::{Model, Variant};
use seqpix::trainer::gradients;

pub const VARIANTS: [Variant; 4] = [
    Variant::FULL,
    Variant::UV_ONLY,
    Variant::R_ONLY,
    Variant { use_uv: true, use_r: true, subtract_mean: false },
];

/// Digit-like images: a few thick random strokes on a blank canvas.
pub fn stroke_images(n: usize, width: usize, height: usize, seed: u64) -> Vec<BinaryImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut px = vec![0u8; width * height];
            for _ in 0..rng.random_range(1..4) {
                let (mut y, mut x) = (rng.random_range(0.2..0.8) * height as f64, rng.random_range(0.2..0.8) * width as f64);
                let (dy, dx) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
                for _ in 0..(width + height) / 2 {
                    for (oy, ox) in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5)] {
                        let (yy, xx) = ((y + oy) as isize, (x + ox) as isize);
                        if yy >= 0 && xx >= 0 && (yy as usize) < height && (xx as usize) < width {
                            px[yy as usize * width + xx as usize] = 1;
                        }
                    }
                    y += dy;
                    x += dx;
                }
            }
            BinaryImage::new(px, width, height, (i % 10) as u8)
        })
        .collect()
}

fn sig(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Predictions recomputed from scratch at every position; shares no code
/// with the incremental sweep.
pub fn naive_predictions(m: &Model, x: &[u8]) -> Vec<f64> {
    let perm = m.permutation();
    let xbar = |p: usize| {
        let v = f64::from(x[p]);
        if m.variant.subtract_mean {
            v - m.x_ave[p]
        } else {
            v
        }
    };
    (0..m.n_x)
        .map(|k| {
            let q = perm[k];
            let seen = &perm[..k];
            let mut z = m.b_y[q];
            if m.variant.use_uv {
                for j in 0..m.n_h {
                    let a = m.b_h[j] + seen.iter().map(|&p| m.u_at(j, p) * xbar(p)).sum::<f64>();
                    z += m.v_at(q, j) * sig(a);
                }
            }
            if m.variant.use_r {
                z += seen.iter().map(|&p| m.r_at(q, p) * xbar(p)).sum::<f64>();
            }
            sig(z)
        })
        .collect()
}

pub fn naive_loss_nats(m: &Model, x: &[u8]) -> f64 {
    let ys = naive_predictions(m, x);
    m.permutation()
        .iter()
        .zip(ys)
        .map(|(&q, y)| if x[q] == 1 { -y.ln() } else { -(1.0 - y).ln() })
        .sum()
}

pub fn random_model(rng: &mut ChaCha8Rng, w: usize, h: usize, n_h: usize, variant: Variant, scale: f64) -> Model {
    let mut m = Model::zeros(w, h, if variant.use_uv { n_h } else { 0 }, variant);
    for p in m.u.iter_mut().chain(m.v.iter_mut()).chain(m.r.iter_mut()).chain(m.b_h.iter_mut()).chain(m.b_y.iter_mut()) {
        *p = rng.random_range(-scale..scale);
    }
    m.x_ave = (0..m.n_x).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut perm: Vec<usize> = (0..m.n_x).collect();
    perm.shuffle(rng);
    m.set_permutation(perm).unwrap();
    m
}

pub fn random_pixels(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2)).collect()
}

fn param_count(m: &Model) -> usize {
    m.u.len() + m.v.len() + m.r.len() + m.b_h.len() + m.b_y.len()
}

fn param_mut(m: &mut Model, mut i: usize) -> &mut f64 {
    for v in [&mut m.u, &mut m.v, &mut m.r, &mut m.b_h, &mut m.b_y] {
        if i < v.len() {
            return &mut v[i];
        }
        i -= v.len();
    }
    unreachable!()
}

/// Central finite differences of the naive natural-log loss against the
/// analytic gradient, for every parameter.
pub fn check_gradients(seed: u64, w: usize, h: usize, n_h: usize, variant: Variant, low_memory: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_model(&mut rng, w, h, n_h, variant, 1.0);
    let x = random_pixels(&mut rng, w * h);
    let img = BinaryImage::new(x.clone(), w, h, 0);
    let (_, g) = gradients(&m, &img, m.permutation(), low_memory).unwrap();
    let analytic: Vec<f64> = [&g.u, &g.v, &g.r, &g.b_h, &g.b_y].into_iter().flatten().copied().collect();
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..param_count(&m) {
        let mut plus = m.clone();
        *param_mut(&mut plus, i) += step;
        let mut minus = m.clone();
        *param_mut(&mut minus, i) -= step;
        let numeric = (naive_loss_nats(&plus, &x) - naive_loss_nats(&minus, &x)) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
