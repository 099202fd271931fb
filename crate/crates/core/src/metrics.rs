//! Full-reference quality metrics over [0, 1] luminance planes.

use crate::error::{DeblurError, Result};
use crate::image::Image;

/// 10 * log10(1 / MSE); identical images return `f64::INFINITY`.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    reference.same_dims(test)?;
    let n = reference.data().len() as f64;
    let mse: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01; // (K1 * L)^2, L = 1
const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range 1.
///
/// The window slides over every position where it fits entirely; partial
/// windows at the border are not evaluated.
pub fn ssim(reference: &Image, test: &Image) -> Result<f64> {
    reference.same_dims(test)?;
    let (w, h) = (reference.width(), reference.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(DeblurError::ImageTooSmall(w, h, SSIM_WINDOW));
    }

    // normalized separable Gaussian window
    let mut win = [0.0f64; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in win.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut win {
        *v /= sum;
    }

    // horizontal pass over the five product planes
    let planes: [&dyn Fn(f64, f64) -> f64; 5] = [
        &|a, _| a,
        &|_, b| b,
        &|a, _| a * a,
        &|_, b| b * b,
        &|a, b| a * b,
    ];
    let cols = w - SSIM_WINDOW + 1;
    let rows = h - SSIM_WINDOW + 1;
    let mut tmp = vec![vec![0.0f64; cols * h]; 5];
    for y in 0..h {
        for x in 0..cols {
            let mut acc = [0.0f64; 5];
            for (dx, &wt) in win.iter().enumerate() {
                let a = reference.get(x + dx, y);
                let b = test.get(x + dx, y);
                for (p, f) in planes.iter().enumerate() {
                    acc[p] += wt * f(a, b);
                }
            }
            for p in 0..5 {
                tmp[p][y * cols + x] = acc[p];
            }
        }
    }

    let mut total = 0.0;
    for y in 0..rows {
        for x in 0..cols {
            let mut m = [0.0f64; 5];
            for (dy, &wt) in win.iter().enumerate() {
                for p in 0..5 {
                    m[p] += wt * tmp[p][(y + dy) * cols + x];
                }
            }
            let (mu_x, mu_y) = (m[0], m[1]);
            let var_x = m[2] - mu_x * mu_x;
            let var_y = m[3] - mu_y * mu_y;
            let cov = m[4] - mu_x * mu_y;
            let num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2);
            total += num / den;
        }
    }
    Ok(total / (rows * cols) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| ((x / 2 + y / 2) % 2) as f64).unwrap()
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let x = checker(16, 16);
        assert!(psnr(&x, &x).unwrap().is_infinite());
    }

    #[test]
    fn psnr_constant_offset_is_twenty_db() {
        // MSE = 0.01 -> 10 log10(100) = 20
        let a = Image::constant(10, 10, 0.0).unwrap();
        let b = Image::constant(10, 10, 0.1).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_is_symmetric() {
        let a = checker(20, 20);
        let b = Image::from_fn(20, 20, |x, y| (x as f64 * 0.03 + y as f64 * 0.02) % 1.0).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn psnr_dimension_mismatch() {
        let a = checker(8, 8);
        let b = checker(8, 9);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn ssim_self_is_one() {
        let x = checker(24, 17);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_inverted_binary_is_negative() {
        let x = checker(32, 32);
        let inv = Image::from_fn(32, 32, |a, b| 1.0 - x.get(a, b)).unwrap();
        assert!(ssim(&x, &inv).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let x = checker(10, 10);
        assert!(matches!(ssim(&x, &x), Err(DeblurError::ImageTooSmall(..))));
    }
}
