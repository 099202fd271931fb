//! Filter learning: per-bucket normal equations accumulated from
//! sharp-blurry pairs, dihedral dictionary augmentation, and pseudoinverse
//! solves.
//!
//! The training target is the single center pixel of the sharp patch, so the
//! per-patch design row `a` is the flattened blurred patch and W = sum a a^T
//! is exactly k^2 x k^2.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{DeblurError, Result};
use crate::filterbank::FilterBank;
use crate::image::Image;
use crate::kernel::{degrade, KernelSpec, NoiseSpec};
use crate::structure_tensor::{
    features_of_tensor, quantize, Dihedral, PatchKey, QuantConfig, StructureTensor, NUM_BUCKETS,
};

/// Normal-equation sums for one bucket: W = sum a a^T, V = sum a b.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub w: DMatrix<f64>,
    pub v: DVector<f64>,
    pub count: u64,
}

impl Accumulator {
    fn zero(taps: usize) -> Self {
        Accumulator {
            w: DMatrix::zeros(taps, taps),
            v: DVector::zeros(taps),
            count: 0,
        }
    }
}

/// The full 216-bucket accumulator set for one training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators {
    patch_size: usize,
    quant: QuantConfig,
    buckets: Vec<Accumulator>,
}

impl Accumulators {
    pub fn new(patch_size: usize, quant: QuantConfig) -> Self {
        let taps = patch_size * patch_size;
        Accumulators {
            patch_size,
            quant,
            buckets: (0..NUM_BUCKETS).map(|_| Accumulator::zero(taps)).collect(),
        }
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn quant(&self) -> &QuantConfig {
        &self.quant
    }

    pub fn bucket(&self, key: PatchKey) -> &Accumulator {
        &self.buckets[key.index()]
    }

    pub fn bucket_at(&self, index: usize) -> &Accumulator {
        &self.buckets[index]
    }

    pub fn total_count(&self) -> u64 {
        self.buckets.iter().map(|b| b.count).sum()
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub patch_size: usize,
    /// Stride between training patch centers; `None` picks 1 for corpora of
    /// up to 100 images and 2 for larger ones.
    pub stride: Option<usize>,
    pub kernel: KernelSpec,
    pub quant: QuantConfig,
    /// Singular values below `tolerance * sigma_max` are treated as zero.
    pub pinv_tolerance: f64,
}

impl TrainConfig {
    pub fn new(patch_size: usize, kernel: KernelSpec) -> Self {
        TrainConfig {
            patch_size,
            stride: None,
            kernel,
            quant: QuantConfig::default(),
            pinv_tolerance: 1e-8,
        }
    }

    pub fn effective_stride(&self, corpus_len: usize) -> usize {
        self.stride
            .unwrap_or(if corpus_len <= 100 { 1 } else { 2 })
            .max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.patch_size < 5 || self.patch_size % 2 == 0 {
            return Err(DeblurError::PatchTooSmall(self.patch_size, self.patch_size));
        }
        Ok(())
    }
}

/// Copy the k x k patch centered at (cx, cy) with replicate-edge padding.
pub(crate) fn extract_patch(img: &Image, cx: usize, cy: usize, k: usize, buf: &mut [f64]) {
    let r = (k / 2) as isize;
    let mut idx = 0;
    for dy in -r..=r {
        for dx in -r..=r {
            buf[idx] = img.get_replicate(cx as isize + dx, cy as isize + dy);
            idx += 1;
        }
    }
}

/// Structure tensor straight off a flattened patch buffer (no allocation).
pub(crate) fn tensor_of_buf(patch: &[f64], k: usize) -> StructureTensor {
    let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
    for r in 0..k {
        let row = &patch[r * k..(r + 1) * k];
        let up = if r == 0 { 0 } else { r - 1 };
        let down = if r == k - 1 { k - 1 } else { r + 1 };
        let yscale = if r == 0 || r == k - 1 { 1.0 } else { 0.5 };
        let rup = &patch[up * k..(up + 1) * k];
        let rdn = &patch[down * k..(down + 1) * k];
        for c in 0..k {
            let gx = if c == 0 {
                row[1] - row[0]
            } else if c == k - 1 {
                row[k - 1] - row[k - 2]
            } else {
                (row[c + 1] - row[c - 1]) * 0.5
            };
            let gy = (rdn[c] - rup[c]) * yscale;
            gxx += gx * gx;
            gxy += gx * gy;
            gyy += gy * gy;
        }
    }
    StructureTensor { gxx, gxy, gyy }
}

pub(crate) fn key_of_patch(patch: &[f64], k: usize, quant: &QuantConfig) -> PatchKey {
    let t = tensor_of_buf(patch, k);
    quantize(&features_of_tensor(&t, k), quant)
}

/// Walk the stride grid of one sharp-blurry pair and update the bucket
/// normal equations. Patch centers cover every grid pixel; borders use
/// replicate padding, matching inference.
pub fn accumulate_pair(
    sharp: &Image,
    blurred: &Image,
    config: &TrainConfig,
    stride: usize,
    acc: &mut Accumulators,
) -> Result<()> {
    sharp.same_dims(blurred)?;
    config.validate()?;
    assert_eq!(acc.patch_size, config.patch_size);
    let k = config.patch_size;
    let n = k * k;
    let mut patch = vec![0.0f64; n];
    for cy in (0..sharp.height()).step_by(stride) {
        for cx in (0..sharp.width()).step_by(stride) {
            extract_patch(blurred, cx, cy, k, &mut patch);
            let key = key_of_patch(&patch, k, &acc.quant);
            let bucket = &mut acc.buckets[key.index()];
            let target = sharp.get(cx, cy);
            let w = bucket.w.as_mut_slice();
            for i in 0..n {
                let ai = patch[i];
                if ai == 0.0 {
                    continue;
                }
                let col = &mut w[i * n..(i + 1) * n];
                for (wj, aj) in col.iter_mut().zip(&patch) {
                    *wj += ai * aj;
                }
            }
            let v = bucket.v.as_mut_slice();
            for (vi, ai) in v.iter_mut().zip(&patch) {
                *vi += ai * target;
            }
            bucket.count += 1;
        }
    }
    Ok(())
}

/// Element-wise sum of two accumulator sets (enables parallel training).
pub fn merge(a: &Accumulators, b: &Accumulators) -> Result<Accumulators> {
    if a.patch_size != b.patch_size {
        return Err(DeblurError::ConfigMismatch(format!(
            "patch sizes {} vs {}",
            a.patch_size, b.patch_size
        )));
    }
    if a.quant != b.quant {
        return Err(DeblurError::ConfigMismatch("quant thresholds differ".into()));
    }
    let mut out = a.clone();
    for (ob, bb) in out.buckets.iter_mut().zip(&b.buckets) {
        ob.w += &bb.w;
        ob.v += &bb.v;
        ob.count += bb.count;
    }
    Ok(out)
}

/// Extend the dictionary with the 7 non-identity square-lattice symmetries.
/// Contributions move by exact index permutation of the design rows (W is
/// conjugated, V permuted) into the bucket with the transformed key; the
/// total patch count is multiplied by exactly 8.
pub fn augment(acc: &Accumulators) -> Accumulators {
    let k = acc.patch_size;
    let n = k * k;
    let mut out = acc.clone();
    for d in Dihedral::ALL {
        let perm = d.permutation(k);
        for (src_idx, bucket) in acc.buckets.iter().enumerate() {
            if bucket.count == 0 {
                continue;
            }
            let dst_idx = d.map_key(PatchKey::from_index(src_idx)).index();
            let dst = &mut out.buckets[dst_idx];
            let src_w = bucket.w.as_slice();
            let dst_w = dst.w.as_mut_slice();
            for j in 0..n {
                let pj = perm[j] * n;
                let col = &mut dst_w[j * n..(j + 1) * n];
                for (i, c) in col.iter_mut().enumerate() {
                    *c += src_w[pj + perm[i]];
                }
            }
            for (i, vi) in dst.v.as_mut_slice().iter_mut().enumerate() {
                *vi += bucket.v[perm[i]];
            }
            dst.count += bucket.count;
        }
    }
    out
}

/// Moore-Penrose pseudoinverse solve of W h = V via SVD; empty buckets fall
/// back to the identity filter.
pub fn solve(acc: &Accumulator, patch_size: usize, tolerance: f64) -> Result<Vec<f64>> {
    if acc.count == 0 {
        return Ok(FilterBank::identity_filter(patch_size));
    }
    let svd = acc.w.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.max();
    let cutoff = tolerance * smax;
    let mut ub = u.transpose() * &acc.v;
    for (i, s) in svd.singular_values.iter().enumerate() {
        ub[i] = if *s > cutoff { ub[i] / s } else { 0.0 };
    }
    let h = vt.transpose() * ub;
    if h.iter().any(|t| !t.is_finite()) {
        return Err(DeblurError::NonFiniteFilter(0));
    }
    Ok(h.as_slice().to_vec())
}

/// Full training pass: degrade every corpus image with the configured kernel
/// (noise-free), accumulate, augment, and solve every bucket.
pub fn train(corpus: &[Image], config: &TrainConfig) -> Result<FilterBank> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(DeblurError::EmptyCorpus);
    }
    let stride = config.effective_stride(corpus.len());
    let kernel = config
        .kernel
        .to_kernel()
        .map_err(|_| DeblurError::EvenKernelSize(0))?;

    // Thread-private accumulation over deterministic chunks, merged in chunk
    // order so repeated runs produce bit-identical banks.
    let threads = rayon::current_num_threads().max(1);
    let chunk_size = corpus.len().div_ceil(threads);
    let partials: Vec<Result<Accumulators>> = corpus
        .par_chunks(chunk_size)
        .map(|chunk| {
            let mut acc = Accumulators::new(config.patch_size, config.quant);
            for sharp in chunk {
                let blurred = degrade(sharp, &kernel, &NoiseSpec::none());
                accumulate_pair(sharp, &blurred, config, stride, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut iter = partials.into_iter();
    let mut acc = iter.next().expect("non-empty corpus")?;
    for p in iter {
        acc = merge(&acc, &p?)?;
    }

    let acc = augment(&acc);
    finalize(&acc, config)
}

/// Solve every bucket of an accumulator set into a bank.
pub fn finalize(acc: &Accumulators, config: &TrainConfig) -> Result<FilterBank> {
    let filters: Vec<Result<Vec<f64>>> = acc
        .buckets
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            solve(b, config.patch_size, config.pinv_tolerance)
                .map_err(|_| DeblurError::NonFiniteFilter(i))
        })
        .collect();
    let filters = filters.into_iter().collect::<Result<Vec<_>>>()?;
    let counts = acc.buckets.iter().map(|b| b.count).collect();
    FilterBank::new(
        config.patch_size,
        config.quant,
        config.kernel.to_string(),
        filters,
        counts,
    )
}
