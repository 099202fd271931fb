//! No-reference sharpness metric Q over anisotropic tiles, and the bounded
//! reference index J = 1 / (1 + V).

use crate::error::{DeblurError, Result};
use crate::image::Image;
use crate::structure_tensor::{eigen, StructureTensor};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QConfig {
    /// Side of the non-overlapping tiles; partial edge tiles are discarded.
    pub patch_size: usize,
    /// Anisotropy threshold on local coherence R.
    pub tau: f64,
    /// Output multiplier applied to the per-tile mean.
    pub scale: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            patch_size: 8,
            tau: 0.10,
            scale: 64.0,
        }
    }
}

/// Q = scale * mean over all tiles of s1 * (s1 - s2) / (s1 + s2), counting
/// only tiles whose local coherence exceeds tau. s1 >= s2 are the singular
/// values of the tile's gradient matrix (square roots of the GtG
/// eigenvalues).
pub fn metric_q(image: &Image, config: &QConfig) -> Result<f64> {
    let ps = config.patch_size.max(2);
    let (w, h) = (image.width(), image.height());
    if w < ps || h < ps {
        return Err(DeblurError::ImageTooSmall(w, h, ps));
    }
    let tiles_x = w / ps;
    let tiles_y = h / ps;
    let mut sum = 0.0;
    let mut tile = vec![0.0f64; ps * ps];
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            for r in 0..ps {
                let src = image.row(ty * ps + r);
                tile[r * ps..(r + 1) * ps].copy_from_slice(&src[tx * ps..(tx + 1) * ps]);
            }
            let t = tile_tensor(&tile, ps);
            let (l1, l2, _) = eigen(&t);
            let (s1, s2) = (l1.sqrt(), l2.sqrt());
            let r = if s1 + s2 > 0.0 { (s1 - s2) / (s1 + s2) } else { 0.0 };
            if r > config.tau {
                sum += s1 * r;
            }
        }
    }
    Ok(config.scale * sum / (tiles_x * tiles_y) as f64)
}

// Central differences inside the tile, one-sided on its edges; works for
// tiles down to 2x2.
fn tile_tensor(tile: &[f64], ps: usize) -> StructureTensor {
    let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
    for r in 0..ps {
        let row = &tile[r * ps..(r + 1) * ps];
        let up = r.saturating_sub(1);
        let down = (r + 1).min(ps - 1);
        let ys = if r == 0 || r == ps - 1 { 1.0 } else { 0.5 };
        let rup = &tile[up * ps..(up + 1) * ps];
        let rdn = &tile[down * ps..(down + 1) * ps];
        for c in 0..ps {
            let left = c.saturating_sub(1);
            let right = (c + 1).min(ps - 1);
            let xs = if c == 0 || c == ps - 1 { 1.0 } else { 0.5 };
            let gx = (row[right] - row[left]) * xs;
            let gy = (rdn[c] - rup[c]) * ys;
            gxx += gx * gx;
            gxy += gx * gy;
            gyy += gy * gy;
        }
    }
    StructureTensor { gxx, gxy, gyy }
}

/// Deviation V = |(Q_rest - Q_orig) / (Q_rest - Q_degr)|. A zero denominator
/// with a nonzero numerator yields the infinity sentinel; all three equal
/// yields 0.
pub fn deviation_v(q_restored: f64, q_original: f64, q_degraded: f64) -> f64 {
    let num = q_restored - q_original;
    let den = q_restored - q_degraded;
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).abs()
    }
}

/// J = 1 / (1 + V) in [0, 1]; the infinity sentinel maps to 0.
pub fn index_j(v: f64) -> f64 {
    if v.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SharpnessReport {
    pub q_original: f64,
    pub q_degraded: f64,
    pub q_restored: f64,
    pub v: f64,
    pub j: f64,
    /// Q_restored landed between Q_degraded and Q_original.
    pub well_behaved: bool,
}

/// Q values of the triple, their relative position V, and the bounded J.
pub fn sharpness_report(
    original: &Image,
    degraded: &Image,
    restored: &Image,
    config: &QConfig,
) -> Result<SharpnessReport> {
    original.same_dims(degraded)?;
    original.same_dims(restored)?;
    let q_original = metric_q(original, config)?;
    let q_degraded = metric_q(degraded, config)?;
    let q_restored = metric_q(restored, config)?;
    let v = deviation_v(q_restored, q_original, q_degraded);
    let j = index_j(v);
    let lo = q_degraded.min(q_original);
    let hi = q_degraded.max(q_original);
    Ok(SharpnessReport {
        q_original,
        q_degraded,
        q_restored,
        v,
        j,
        well_behaved: (lo..=hi).contains(&q_restored),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{convolve, gaussian_kernel};
    use proptest::prelude::*;

    fn textured(seed: u64, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let fx = x as f64;
            let fy = y as f64;
            let s = seed as f64;
            0.5 + 0.25 * (fx * 0.8 + s).sin() * (fy * 0.5 + 0.3 * s).cos()
                + 0.2 * ((fx * 0.31 + fy * 0.47).sin())
        })
        .unwrap()
    }

    #[test]
    fn constant_image_has_zero_q() {
        let c = Image::constant(32, 32, 0.5).unwrap();
        assert_eq!(metric_q(&c, &QConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn image_smaller_than_tile_rejected() {
        let c = Image::constant(4, 4, 0.5).unwrap();
        assert!(metric_q(&c, &QConfig::default()).is_err());
    }

    #[test]
    fn oriented_edge_increases_q() {
        let flat = Image::constant(64, 64, 0.5).unwrap();
        let edged = Image::from_fn(64, 64, |x, _| if x < 35 { 0.2 } else { 0.8 }).unwrap();
        let cfg = QConfig::default();
        assert!(metric_q(&edged, &cfg).unwrap() > metric_q(&flat, &cfg).unwrap());
    }

    #[test]
    fn q_decreases_under_increasing_blur() {
        let img = crate::synth::textured_image(5, 96, 96);
        let cfg = QConfig::default();
        let mut prev = metric_q(&img, &cfg).unwrap();
        for sigma in [0.5f64, 1.0, 2.0, 4.0] {
            let size = ((sigma * 6.0).ceil() as usize) | 1;
            let blurred = convolve(&img, &gaussian_kernel(size, sigma).unwrap());
            let q = metric_q(&blurred, &cfg).unwrap();
            assert!(q < prev, "sigma {sigma}: {q} !< {prev}");
            prev = q;
        }
    }

    #[test]
    fn q_translation_invariance_on_periodic_pattern() {
        // 8-periodic pattern shifted by the tile size sees identical tiles
        let f = |x: usize, y: usize| {
            0.5 + 0.3 * ((x % 8) as f64 * 0.7).sin() + 0.2 * ((y % 8) as f64 * 0.9).cos()
        };
        let a = Image::from_fn(64, 64, f).unwrap();
        let b = Image::from_fn(64, 64, |x, y| f(x + 8, y + 8)).unwrap();
        let cfg = QConfig::default();
        assert!(
            (metric_q(&a, &cfg).unwrap() - metric_q(&b, &cfg).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn deviation_sentinels() {
        assert_eq!(deviation_v(11.9, 11.9, 5.6), 0.0);
        assert!(deviation_v(5.6, 11.9, 5.6).is_infinite());
        assert_eq!(deviation_v(7.0, 7.0, 7.0), 0.0);
    }

    #[test]
    fn barbara_figures() {
        // V for (Q_rest, Q_orig, Q_degr) = (10.055, 11.901, 5.638)
        let v = deviation_v(10.055, 11.901, 5.638);
        assert!((v - ((10.055f64 - 11.901) / (10.055 - 5.638)).abs()).abs() < 1e-12);
        assert!((v - 0.41795).abs() < 1e-4);
        // consistency with the published J = 0.703 within 0.01
        assert!((index_j(v) - 0.703).abs() < 0.01);
    }

    #[test]
    fn index_j_values() {
        assert_eq!(index_j(0.0), 1.0);
        assert_eq!(index_j(f64::INFINITY), 0.0);
        assert_eq!(index_j(1.0), 0.5);
    }

    #[test]
    fn report_on_identical_triple() {
        let x = textured(9, 32, 32);
        let r = sharpness_report(&x, &x, &x, &QConfig::default()).unwrap();
        assert_eq!(r.j, 1.0);
        assert!(r.well_behaved);
    }

    #[test]
    fn oversharpened_restoration_flags_not_well_behaved() {
        let img = textured(11, 64, 64);
        let blurred = convolve(&img, &gaussian_kernel(9, 1.5).unwrap());
        // unsharp mask overshoot: original + 2 * (original - blurred)
        let over = Image::from_fn(64, 64, |x, y| {
            img.get(x, y) + 2.0 * (img.get(x, y) - blurred.get(x, y))
        })
        .unwrap();
        let r = sharpness_report(&img, &blurred, &over, &QConfig::default()).unwrap();
        assert!(r.q_restored > r.q_original);
        assert!(!r.well_behaved);
        assert!(r.j.is_finite() && (0.0..=1.0).contains(&r.j));
    }

    proptest! {
        #[test]
        fn j_bounded_and_decreasing_in_v(v1 in 0.0f64..100.0, v2 in 0.0f64..100.0) {
            let (j1, j2) = (index_j(v1), index_j(v2));
            prop_assert!((0.0..=1.0).contains(&j1));
            if v1 < v2 {
                prop_assert!(j1 > j2);
            }
        }

        #[test]
        fn v_invariant_under_common_scaling(
            qr in 0.1f64..20.0, qo in 0.1f64..20.0, qd in 0.1f64..20.0, c in 0.01f64..100.0
        ) {
            let a = deviation_v(qr, qo, qd);
            let b = deviation_v(c * qr, c * qo, c * qd);
            if a.is_finite() {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            } else {
                prop_assert!(b.is_infinite() || (qr - qd).abs() < 1e-12);
            }
        }

        #[test]
        fn j_monotone_in_q_restored_between_endpoints(
            qd in 0.1f64..10.0, spread in 0.1f64..10.0, t1 in 0.01f64..0.99, t2 in 0.01f64..0.99
        ) {
            let qi = qd + spread;
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let q1 = qd + lo * spread;
            let q2 = qd + hi * spread;
            let j1 = index_j(deviation_v(q1, qi, qd));
            let j2 = index_j(deviation_v(q2, qi, qd));
            prop_assert!(j2 >= j1 - 1e-12);
        }
    }
}
