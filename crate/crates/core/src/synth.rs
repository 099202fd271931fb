//! Procedural textured test images: smooth shading, oriented gratings, and
//! soft-edged shapes. Deterministic per seed, noise-free, with edge energy
//! at many orientations so the whole dictionary key space sees traffic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

/// Generate a reproducible textured image with natural-ish statistics.
pub fn textured_image(seed: u64, width: usize, height: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = vec![0.0f64; width * height];
    let diag = ((width * width + height * height) as f64).sqrt();

    // low-frequency shading
    for _ in 0..3 {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let freq = rng.gen_range(0.5..2.0) / diag * std::f64::consts::TAU;
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp = rng.gen_range(0.02..0.06);
        let (ca, sa) = (angle.cos(), angle.sin());
        for y in 0..height {
            for x in 0..width {
                let u = ca * x as f64 + sa * y as f64;
                field[y * width + x] += amp * (u * freq + phase).sin();
            }
        }
    }

    // oriented gratings, some localized by a Gaussian envelope
    let gratings = rng.gen_range(4..9);
    for _ in 0..gratings {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let freq = rng.gen_range(0.3..1.1);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp = rng.gen_range(0.05..0.18);
        let (ca, sa) = (angle.cos(), angle.sin());
        let localized = rng.gen_bool(0.6);
        let (cx, cy, radius) = (
            rng.gen_range(0.0..width as f64),
            rng.gen_range(0.0..height as f64),
            rng.gen_range(0.1..0.35) * diag,
        );
        for y in 0..height {
            for x in 0..width {
                let u = ca * x as f64 + sa * y as f64;
                let mut v = amp * (u * freq + phase).sin();
                if localized {
                    let dx = x as f64 - cx;
                    let dy = y as f64 - cy;
                    v *= (-(dx * dx + dy * dy) / (2.0 * radius * radius)).exp();
                }
                field[y * width + x] += v;
            }
        }
    }

    // soft-edged ellipses and rotated bars: strong step edges at random
    // orientations
    let shapes = rng.gen_range(5..11);
    for _ in 0..shapes {
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let a = rng.gen_range(0.04..0.3) * width as f64;
        let b = rng.gen_range(0.04..0.3) * height as f64;
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let step = rng.gen_range(-0.35..0.35);
        let softness = rng.gen_range(0.5..2.0);
        let (ca, sa) = (angle.cos(), angle.sin());
        for y in 0..height {
            for x in 0..width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let u = (ca * dx + sa * dy) / a;
                let v = (-sa * dx + ca * dy) / b;
                let d = (u * u + v * v).sqrt() - 1.0;
                // smooth indicator of the ellipse interior
                let ind = 0.5 * (1.0 - (d * a.min(b) / softness).tanh());
                field[y * width + x] += step * ind;
            }
        }
    }

    // affinely squeeze into [0.03, 0.97] so blur cannot clip
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in &field {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let span = (hi - lo).max(1e-12);
    let data = field
        .iter()
        .map(|v| 0.03 + 0.94 * (v - lo) / span)
        .collect();
    Image::new(width, height, data).expect("dimensions are positive")
}

/// A deterministic corpus of distinct textured images.
pub fn corpus(base_seed: u64, count: usize, width: usize, height: usize) -> Vec<Image> {
    (0..count)
        .map(|i| textured_image(base_seed.wrapping_add(i as u64), width, height))
        .collect()
}
