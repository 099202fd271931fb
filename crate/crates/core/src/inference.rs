//! Restoration by per-pixel patch hashing: every output pixel is the dot
//! product of its keyed filter with the flattened k x k input patch.

use rayon::prelude::*;

use crate::error::{DeblurError, Result};
use crate::filterbank::FilterBank;
use crate::image::Image;
use crate::learning::{extract_patch, key_of_patch};

/// Restore a degraded image with one bank. Output dimensions equal input;
/// borders use replicate padding; each filtered pixel clamps to [0, 1].
pub fn restore(degraded: &Image, bank: &FilterBank) -> Result<Image> {
    let k = bank.patch_size();
    let (w, h) = (degraded.width(), degraded.height());
    if w < k || h < k {
        return Err(DeblurError::ImageTooSmall(w, h, k));
    }
    let mut out = vec![0.0f64; w * h];
    out.par_chunks_mut(w)
        .enumerate()
        .for_each_init(
            || vec![0.0f64; k * k],
            |patch, (y, row)| {
                for (x, px) in row.iter_mut().enumerate() {
                    extract_patch(degraded, x, y, k, patch);
                    let key = key_of_patch(patch, k, bank.quant());
                    let taps = bank.filter(key);
                    let v: f64 = taps.iter().zip(patch.iter()).map(|(t, p)| t * p).sum();
                    *px = v.clamp(0.0, 1.0);
                }
            },
        );
    Image::new(w, h, out)
}

/// One restoration per bank, order preserved; the blending candidates.
pub fn restore_multi(degraded: &Image, banks: &[FilterBank]) -> Result<Vec<Image>> {
    banks.iter().map(|b| restore(degraded, b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::structure_tensor::QuantConfig;

    fn textured(seed: u64, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let fx = x as f64;
            let fy = y as f64;
            0.5 + 0.2 * (fx * 0.9 + seed as f64).sin()
                + 0.2 * (fy * 0.6 + fx * 0.2).cos()
                + 0.1 * ((fx * fy * 0.05).sin())
        })
        .unwrap()
    }

    fn identity_bank(k: usize) -> FilterBank {
        FilterBank::all_identity(k, QuantConfig::default(), KernelSpec::Identity.to_string())
    }

    #[test]
    fn identity_bank_is_exact_identity() {
        let img = textured(1, 24, 18);
        let out = restore(&img, &identity_bank(5)).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn too_small_image_rejected() {
        let img = textured(2, 4, 4);
        assert!(restore(&img, &identity_bank(5)).is_err());
    }

    #[test]
    fn deterministic_and_multi_consistent() {
        let img = textured(3, 20, 20);
        let bank = identity_bank(7);
        let a = restore(&img, &bank).unwrap();
        let b = restore(&img, &bank).unwrap();
        assert_eq!(a, b);
        let multi = restore_multi(&img, &[bank]).unwrap();
        assert_eq!(multi.len(), 1);
        assert_eq!(multi[0], a);
    }

    #[test]
    fn locality_single_pixel_perturbation() {
        let img = textured(4, 30, 30);
        let mut data = img.data().to_vec();
        data[15 * 30 + 15] = (data[15 * 30 + 15] + 0.5) % 1.0;
        let perturbed = Image::new(30, 30, data).unwrap();

        // a non-trivial bank so filtered outputs actually depend on the patch
        let corpus: Vec<Image> = (0..4).map(|i| textured(10 + i, 40, 40)).collect();
        let config = crate::learning::TrainConfig::new(5, KernelSpec::Box { size: 3 });
        let bank = crate::learning::train(&corpus, &config).unwrap();

        let a = restore(&img, &bank).unwrap();
        let b = restore(&perturbed, &bank).unwrap();
        let k = 5isize;
        for y in 0..30isize {
            for x in 0..30isize {
                let cheb = (x - 15).abs().max((y - 15).abs());
                if cheb >= k {
                    assert_eq!(
                        a.get(x as usize, y as usize),
                        b.get(x as usize, y as usize),
                        "({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn trained_bank_preserves_constants_within_tap_sum_tolerance() {
        let corpus: Vec<Image> = (0..4).map(|i| textured(20 + i, 40, 40)).collect();
        let config = crate::learning::TrainConfig::new(5, KernelSpec::Box { size: 3 });
        let bank = crate::learning::train(&corpus, &config).unwrap();
        let c = Image::constant(16, 16, 0.4).unwrap();
        let out = restore(&c, &bank).unwrap();
        for v in out.data() {
            assert!((v - 0.4).abs() < 0.05);
        }
    }
}
