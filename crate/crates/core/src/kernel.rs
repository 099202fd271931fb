//! Blur kernels and degradation synthesis: G = I * H_K + eps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DeblurError, Result};
use crate::image::Image;

/// Normalized 2-D convolution kernel of odd side length.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    size: usize,
    taps: Vec<f64>,
}

impl BlurKernel {
    pub fn new(size: usize, taps: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 || size == 0 {
            return Err(DeblurError::EvenKernelSize(size));
        }
        assert_eq!(taps.len(), size * size);
        let sum: f64 = taps.iter().sum();
        assert!(sum > 0.0, "kernel taps must not all be zero");
        let taps = taps.iter().map(|t| t / sum).collect();
        Ok(BlurKernel { size, taps })
    }

    pub fn identity() -> Self {
        BlurKernel {
            size: 1,
            taps: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    #[inline]
    pub fn tap(&self, kx: usize, ky: usize) -> f64 {
        self.taps[ky * self.size + kx]
    }
}

/// Isotropic 2-D Gaussian sampled at integer offsets, normalized to sum 1.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<BlurKernel> {
    if size % 2 == 0 || size == 0 {
        return Err(DeblurError::EvenKernelSize(size));
    }
    if sigma <= 0.0 {
        return Err(DeblurError::NonPositiveSigma(sigma));
    }
    let r = (size / 2) as isize;
    let mut taps = Vec::with_capacity(size * size);
    for y in -r..=r {
        for x in -r..=r {
            let d2 = (x * x + y * y) as f64;
            taps.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    BlurKernel::new(size, taps)
}

/// All taps equal 1 / size^2.
pub fn box_kernel(size: usize) -> Result<BlurKernel> {
    if size % 2 == 0 || size == 0 {
        return Err(DeblurError::EvenKernelSize(size));
    }
    BlurKernel::new(size, vec![1.0; size * size])
}

/// Kernel spec grammar used by the CLI and echoed into bank metadata:
/// `gaussian:K:SIGMA`, `box:K`, or `identity`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelSpec {
    Identity,
    Gaussian { size: usize, sigma: f64 },
    Box { size: usize },
}

impl KernelSpec {
    pub fn to_kernel(&self) -> Result<BlurKernel> {
        match *self {
            KernelSpec::Identity => Ok(BlurKernel::identity()),
            KernelSpec::Gaussian { size, sigma } => gaussian_kernel(size, sigma),
            KernelSpec::Box { size } => box_kernel(size),
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelSpec::Identity => write!(f, "identity"),
            KernelSpec::Gaussian { size, sigma } => write!(f, "gaussian:{size}:{sigma}"),
            KernelSpec::Box { size } => write!(f, "box:{size}"),
        }
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["identity"] => Ok(KernelSpec::Identity),
            ["box", k] => {
                let size = k.parse().map_err(|_| format!("bad box size: {k}"))?;
                Ok(KernelSpec::Box { size })
            }
            ["gaussian", k, s] => {
                let size = k.parse().map_err(|_| format!("bad gaussian size: {k}"))?;
                let sigma = s.parse().map_err(|_| format!("bad sigma: {s}"))?;
                Ok(KernelSpec::Gaussian { size, sigma })
            }
            _ => Err(format!(
                "kernel spec must be gaussian:K:SIGMA, box:K or identity, got {s}"
            )),
        }
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

/// Additive Gaussian noise specification; deterministic for a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec { sigma: 0.0, seed: 0 }
    }
}

/// Spatial convolution with replicate-edge padding; output clamped to [0, 1].
pub fn convolve(image: &Image, kernel: &BlurKernel) -> Image {
    let (w, h) = (image.width(), image.height());
    let r = (kernel.size() / 2) as isize;
    let k = kernel.size();
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..k {
                let sy = y as isize - (ky as isize - r);
                for kx in 0..k {
                    let sx = x as isize - (kx as isize - r);
                    acc += kernel.tap(kx, ky) * image.get_replicate(sx, sy);
                }
            }
            out[y * w + x] = acc;
        }
    }
    Image::new(w, h, out).expect("convolve preserves dimensions")
}

/// Eq.-1 style degradation: convolve then add seeded Gaussian noise, clamped.
pub fn degrade(image: &Image, kernel: &BlurKernel, noise: &NoiseSpec) -> Image {
    let blurred = convolve(image, kernel);
    if noise.sigma <= 0.0 {
        return blurred;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let dist = Normal::new(0.0, noise.sigma).expect("sigma validated above");
    let data = blurred
        .data()
        .iter()
        .map(|v| v + dist.sample(&mut rng))
        .collect();
    Image::new(blurred.width(), blurred.height(), data).expect("dimensions preserved")
}
