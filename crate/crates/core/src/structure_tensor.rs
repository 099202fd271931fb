//! Per-patch gradient statistics (angle, strength, coherence) and their
//! quantization into a 24 x 3 x 3 dictionary key, plus the exact lattice
//! symmetries used for dictionary augmentation.

use crate::error::{DeblurError, Result};

pub const ANGLE_BINS: usize = 24;
pub const STRENGTH_BINS: usize = 3;
pub const COHERENCE_BINS: usize = 3;
pub const NUM_BUCKETS: usize = ANGLE_BINS * STRENGTH_BINS * COHERENCE_BINS;

/// 2x2 symmetric matrix GtG of summed gradient products over a patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureTensor {
    pub gxx: f64,
    pub gxy: f64,
    pub gyy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchFeatures {
    /// Dominant gradient orientation in [0, pi).
    pub angle: f64,
    /// RMS gradient energy along the dominant orientation: sqrt(lambda1 / n).
    pub strength: f64,
    /// Normalized eigenvalue gap in [0, 1]; 0 = isotropic.
    pub coherence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchKey {
    pub angle_bin: u8,
    pub strength_bin: u8,
    pub coherence_bin: u8,
}

impl PatchKey {
    #[inline]
    pub fn index(&self) -> usize {
        (self.angle_bin as usize * STRENGTH_BINS + self.strength_bin as usize) * COHERENCE_BINS
            + self.coherence_bin as usize
    }

    pub fn from_index(i: usize) -> PatchKey {
        assert!(i < NUM_BUCKETS);
        PatchKey {
            angle_bin: (i / (STRENGTH_BINS * COHERENCE_BINS)) as u8,
            strength_bin: (i / COHERENCE_BINS % STRENGTH_BINS) as u8,
            coherence_bin: (i % COHERENCE_BINS) as u8,
        }
    }
}

/// Two-threshold bucketing config for strength and coherence. Stored in the
/// filterbank header so training and inference always agree.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantConfig {
    /// Thresholds on RMS strength (see [`PatchFeatures::strength`]).
    pub strength_thresholds: [f64; 2],
    pub coherence_thresholds: [f64; 2],
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            strength_thresholds: [0.01, 0.06],
            coherence_thresholds: [0.25, 0.5],
        }
    }
}

/// Per-pixel (gx, gy): central differences in the interior, one-sided on the
/// patch edges.
pub fn gradients(patch: &[f64], k: usize) -> Result<Vec<(f64, f64)>> {
    if k < 3 {
        return Err(DeblurError::PatchTooSmall(k, k));
    }
    assert_eq!(patch.len(), k * k);
    let mut out = Vec::with_capacity(k * k);
    for r in 0..k {
        for c in 0..k {
            out.push((grad_x(patch, k, r, c), grad_y(patch, k, r, c)));
        }
    }
    Ok(out)
}

#[inline]
fn grad_x(p: &[f64], k: usize, r: usize, c: usize) -> f64 {
    let row = &p[r * k..(r + 1) * k];
    if c == 0 {
        row[1] - row[0]
    } else if c == k - 1 {
        row[k - 1] - row[k - 2]
    } else {
        (row[c + 1] - row[c - 1]) * 0.5
    }
}

#[inline]
fn grad_y(p: &[f64], k: usize, r: usize, c: usize) -> f64 {
    if r == 0 {
        p[k + c] - p[c]
    } else if r == k - 1 {
        p[(k - 1) * k + c] - p[(k - 2) * k + c]
    } else {
        (p[(r + 1) * k + c] - p[(r - 1) * k + c]) * 0.5
    }
}

/// Gradient-product sums over all patch pixels, without windowing.
pub fn tensor(patch: &[f64], k: usize) -> Result<StructureTensor> {
    if k < 3 {
        return Err(DeblurError::PatchTooSmall(k, k));
    }
    assert_eq!(patch.len(), k * k);
    let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
    for r in 0..k {
        for c in 0..k {
            let gx = grad_x(patch, k, r, c);
            let gy = grad_y(patch, k, r, c);
            gxx += gx * gx;
            gxy += gx * gy;
            gyy += gy * gy;
        }
    }
    Ok(StructureTensor { gxx, gxy, gyy })
}

/// Closed-form 2x2 eigendecomposition. Returns (lambda1 >= lambda2 >= 0,
/// unit eigenvector of lambda1). The degenerate zero tensor maps to (1, 0).
pub fn eigen(t: &StructureTensor) -> (f64, f64, [f64; 2]) {
    let half_tr = 0.5 * (t.gxx + t.gyy);
    let half_d = 0.5 * (t.gxx - t.gyy);
    let disc = (half_d * half_d + t.gxy * t.gxy).sqrt();
    let l1 = (half_tr + disc).max(0.0);
    let l2 = (half_tr - disc).max(0.0);

    let scale = t.gxx.abs().max(t.gyy.abs()).max(t.gxy.abs());
    let v = if scale == 0.0 || t.gxy.abs() <= 1e-14 * scale {
        if t.gxx >= t.gyy {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    } else {
        let a = [l1 - t.gyy, t.gxy];
        let b = [t.gxy, l1 - t.gxx];
        let pick = if a[0] * a[0] + a[1] * a[1] >= b[0] * b[0] + b[1] * b[1] {
            a
        } else {
            b
        };
        let n = (pick[0] * pick[0] + pick[1] * pick[1]).sqrt();
        [pick[0] / n, pick[1] / n]
    };
    (l1, l2, v)
}

/// Angle/strength/coherence of a k x k patch.
pub fn features(patch: &[f64], k: usize) -> Result<PatchFeatures> {
    let t = tensor(patch, k)?;
    Ok(features_of_tensor(&t, k))
}

pub fn features_of_tensor(t: &StructureTensor, k: usize) -> PatchFeatures {
    let (l1, l2, v) = eigen(t);
    let (s1, s2) = (l1.sqrt(), l2.sqrt());
    let mut angle = v[1].atan2(v[0]);
    if angle < 0.0 {
        angle += std::f64::consts::PI;
    }
    if angle >= std::f64::consts::PI {
        angle = 0.0;
    }
    let coherence = if s1 + s2 > 0.0 { (s1 - s2) / (s1 + s2) } else { 0.0 };
    PatchFeatures {
        angle,
        strength: s1 / k as f64,
        coherence,
    }
}

#[inline]
fn bucket(v: f64, thresholds: &[f64; 2]) -> u8 {
    if v < thresholds[0] {
        0
    } else if v < thresholds[1] {
        1
    } else {
        2
    }
}

/// Total map: every finite feature triple lands in one of the 216 keys.
pub fn quantize(f: &PatchFeatures, q: &QuantConfig) -> PatchKey {
    let raw = (f.angle / std::f64::consts::PI * ANGLE_BINS as f64).floor() as i64;
    let angle_bin = raw.clamp(0, ANGLE_BINS as i64 - 1) as u8;
    PatchKey {
        angle_bin,
        strength_bin: bucket(f.strength, &q.strength_thresholds),
        coherence_bin: bucket(f.coherence, &q.coherence_thresholds),
    }
}

/// The seven non-identity symmetries of a square lattice patch. Each is an
/// exact pixel-index permutation, so training contributions transform by
/// conjugation rather than resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dihedral {
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 7] = [
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipH,
        Dihedral::FlipV,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    /// Source (row, col) feeding target (r, c) in the transformed patch.
    #[inline]
    pub fn source(self, r: usize, c: usize, k: usize) -> (usize, usize) {
        let m = k - 1;
        match self {
            Dihedral::Rot90 => (c, m - r),
            Dihedral::Rot180 => (m - r, m - c),
            Dihedral::Rot270 => (m - c, r),
            Dihedral::FlipH => (r, m - c),
            Dihedral::FlipV => (m - r, c),
            Dihedral::Transpose => (c, r),
            Dihedral::AntiTranspose => (m - c, m - r),
        }
    }

    /// Flat permutation: `perm[target] = source`, so `a'[i] = a[perm[i]]`.
    pub fn permutation(self, k: usize) -> Vec<usize> {
        let mut perm = Vec::with_capacity(k * k);
        for r in 0..k {
            for c in 0..k {
                let (sr, sc) = self.source(r, c, k);
                perm.push(sr * k + sc);
            }
        }
        perm
    }

    pub fn apply_patch(self, patch: &[f64], k: usize) -> Vec<f64> {
        self.permutation(k).iter().map(|&s| patch[s]).collect()
    }

    /// How the transform moves a gradient orientation bin. Exact for angles
    /// strictly inside a bin: rotations shift theta by pi/2, axis reflections
    /// send theta to pi - theta, diagonal reflections to pi/2 - theta.
    pub fn map_angle_bin(self, bin: u8) -> u8 {
        let b = bin as i64;
        let n = ANGLE_BINS as i64;
        let mapped = match self {
            Dihedral::Rot90 | Dihedral::Rot270 => b + n / 2,
            Dihedral::Rot180 => b,
            Dihedral::FlipH | Dihedral::FlipV => n - 1 - b,
            Dihedral::Transpose | Dihedral::AntiTranspose => n / 2 - 1 - b,
        };
        mapped.rem_euclid(n) as u8
    }

    pub fn map_key(self, key: PatchKey) -> PatchKey {
        PatchKey {
            angle_bin: self.map_angle_bin(key.angle_bin),
            ..key
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ramp_x(k: usize) -> Vec<f64> {
        (0..k * k).map(|i| (i % k) as f64).collect()
    }

    #[test]
    fn gradients_reject_small_patch() {
        assert!(gradients(&[0.0; 4], 2).is_err());
    }

    #[test]
    fn gradients_constant_patch_all_zero() {
        let g = gradients(&vec![0.7; 25], 5).unwrap();
        assert!(g.iter().all(|&(x, y)| x == 0.0 && y == 0.0));
    }

    #[test]
    fn gradients_column_ramp() {
        let g = gradients(&ramp_x(5), 5).unwrap();
        assert!(g.iter().all(|&(x, y)| x == 1.0 && y == 0.0));
    }

    #[test]
    fn gradients_bilinear_xy() {
        // values = x * y: interior gx = y, gy = x
        let k = 5;
        let p: Vec<f64> = (0..k * k).map(|i| ((i % k) * (i / k)) as f64).collect();
        let g = gradients(&p, k).unwrap();
        for r in 1..k - 1 {
            for c in 1..k - 1 {
                let (gx, gy) = g[r * k + c];
                assert!((gx - r as f64).abs() < 1e-12);
                assert!((gy - c as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_of_horizontal_ramp() {
        let k = 5;
        let t = tensor(&ramp_x(k), k).unwrap();
        assert!((t.gxx - (k * k) as f64).abs() < 1e-12);
        assert_eq!(t.gxy, 0.0);
        assert_eq!(t.gyy, 0.0);
    }

    #[test]
    fn eigen_cases() {
        let (l1, l2, v) = eigen(&StructureTensor { gxx: 0.0, gxy: 0.0, gyy: 0.0 });
        assert_eq!((l1, l2), (0.0, 0.0));
        assert_eq!(v, [1.0, 0.0]);

        let (l1, l2, v) = eigen(&StructureTensor { gxx: 4.0, gxy: 0.0, gyy: 1.0 });
        assert_eq!((l1, l2), (4.0, 1.0));
        assert_eq!(v, [1.0, 0.0]);

        // [[2,1],[1,2]]: characteristic polynomial gives 3 and 1, v ~ (1,1)
        let (l1, l2, v) = eigen(&StructureTensor { gxx: 2.0, gxy: 1.0, gyy: 2.0 });
        assert!((l1 - 3.0).abs() < 1e-12);
        assert!((l2 - 1.0).abs() < 1e-12);
        assert!((v[0] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn features_degenerate_and_ramp() {
        let f = features(&vec![0.5; 49], 7).unwrap();
        assert_eq!((f.angle, f.strength, f.coherence), (0.0, 0.0, 0.0));

        let f = features(&ramp_x(7), 7).unwrap();
        assert!((f.coherence - 1.0).abs() < 1e-12);
        assert!(f.angle.abs() < 1e-12); // pure-x gradient
    }

    #[test]
    fn features_isotropic_patch_has_zero_coherence() {
        // equal axis energies, no cross term: values = x^2/2 + y^2/2 gives
        // gx ~ x, gy ~ y over a centered patch, so gxx = gyy and gxy = 0.
        let k = 7;
        let h = (k / 2) as f64;
        let p: Vec<f64> = (0..k * k)
            .map(|i| {
                let x = (i % k) as f64 - h;
                let y = (i / k) as f64 - h;
                (x * x + y * y) / 2.0
            })
            .collect();
        let t = tensor(&p, k).unwrap();
        assert!((t.gxx - t.gyy).abs() < 1e-9);
        assert!(t.gxy.abs() < 1e-9);
        let f = features_of_tensor(&t, k);
        assert!(f.coherence.abs() < 1e-9);
    }

    #[test]
    fn quantize_examples() {
        let q = QuantConfig::default();
        let key = quantize(
            &PatchFeatures { angle: 0.0, strength: 0.0, coherence: 0.0 },
            &q,
        );
        assert_eq!(key, PatchKey { angle_bin: 0, strength_bin: 0, coherence_bin: 0 });

        // angle just below pi clamps into the last bin
        let key = quantize(
            &PatchFeatures { angle: PI - 1e-9, strength: 0.0, coherence: 0.0 },
            &q,
        );
        assert_eq!(key.angle_bin, 23);

        // (pi/2, above upper strength threshold, coherence 0.6) -> (12, 2, 2)
        let key = quantize(
            &PatchFeatures { angle: PI / 2.0, strength: 0.1, coherence: 0.6 },
            &q,
        );
        assert_eq!(key, PatchKey { angle_bin: 12, strength_bin: 2, coherence_bin: 2 });
    }

    #[test]
    fn key_index_round_trip() {
        for i in 0..NUM_BUCKETS {
            assert_eq!(PatchKey::from_index(i).index(), i);
        }
    }

    fn random_patch(seed: u64, k: usize) -> Vec<f64> {
        // xorshift-ish deterministic filler
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        (0..k * k)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s % 10_000) as f64 / 10_000.0
            })
            .collect()
    }

    /// Reject patches whose features sit near a quantization boundary, where
    /// the exact symmetry maps legitimately disagree with requantization.
    fn off_boundary(f: &PatchFeatures, q: &QuantConfig) -> bool {
        let a = f.angle / PI * ANGLE_BINS as f64;
        if (a - a.round()).abs() < 0.05 {
            return false;
        }
        for t in q.strength_thresholds {
            if (f.strength - t).abs() < 1e-4 {
                return false;
            }
        }
        for t in q.coherence_thresholds {
            if (f.coherence - t).abs() < 1e-4 {
                return false;
            }
        }
        true
    }

    #[test]
    fn dihedral_maps_agree_with_requantization() {
        let q = QuantConfig::default();
        let k = 9;
        let mut tested = 0;
        for seed in 0..400u64 {
            let p = random_patch(seed, k);
            let f = features(&p, k).unwrap();
            if !off_boundary(&f, &q) {
                continue;
            }
            tested += 1;
            let key = quantize(&f, &q);
            for d in Dihedral::ALL {
                let tp = d.apply_patch(&p, k);
                let tf = features(&tp, k).unwrap();
                let tkey = quantize(&tf, &q);
                assert_eq!(tkey, d.map_key(key), "{d:?} seed {seed}");
            }
        }
        assert!(tested > 100);
    }

    #[test]
    fn dihedral_permutations_fix_center() {
        for k in [5usize, 7, 21] {
            let center = (k / 2) * k + k / 2;
            for d in Dihedral::ALL {
                assert_eq!(d.permutation(k)[center], center);
            }
        }
    }

    proptest! {
        #[test]
        fn tensor_is_positive_semidefinite(seed in 0u64..5000) {
            let p = random_patch(seed, 7);
            let t = tensor(&p, 7).unwrap();
            prop_assert!(t.gxx >= 0.0 && t.gyy >= 0.0);
            prop_assert!(t.gxy * t.gxy <= t.gxx * t.gyy + 1e-9 * (1.0 + t.gxx * t.gyy));
        }

        #[test]
        fn intensity_scaling_scales_strength_only(seed in 0u64..1000, c in 0.05f64..5.0) {
            let p = random_patch(seed, 7);
            let scaled: Vec<f64> = p.iter().map(|v| v * c).collect();
            let f = features(&p, 7).unwrap();
            let fs = features(&scaled, 7).unwrap();
            prop_assert!((fs.strength - c * f.strength).abs() < 1e-9 * (1.0 + f.strength));
            prop_assert!((fs.coherence - f.coherence).abs() < 1e-9);
            if f.strength > 1e-9 {
                prop_assert!((fs.angle - f.angle).abs() < 1e-9);
            }
        }

        #[test]
        fn quantize_is_total(angle in 0.0..PI, strength in 0.0f64..100.0, coh in 0.0f64..1.0) {
            let f = PatchFeatures { angle, strength, coherence: coh };
            let key = quantize(&f, &QuantConfig::default());
            prop_assert!(key.index() < NUM_BUCKETS);
        }
    }
}
