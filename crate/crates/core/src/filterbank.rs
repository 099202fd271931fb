//! The learned filter dictionary and its on-disk DFBK format.
//!
//! Layout (little-endian): magic `DFBK`, version u16, patch_size u16,
//! bin counts 3 x u16, quant thresholds 4 x f64, length-prefixed (u32)
//! UTF-8 kernel tag, then 216 records of (count u64, k^2 x f64 taps).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{DeblurError, Result};
use crate::structure_tensor::{
    PatchKey, QuantConfig, ANGLE_BINS, COHERENCE_BINS, NUM_BUCKETS, STRENGTH_BINS,
};

const MAGIC: &[u8; 4] = b"DFBK";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    patch_size: usize,
    quant: QuantConfig,
    kernel_tag: String,
    filters: Vec<Vec<f64>>,
    counts: Vec<u64>,
}

impl FilterBank {
    pub fn new(
        patch_size: usize,
        quant: QuantConfig,
        kernel_tag: String,
        filters: Vec<Vec<f64>>,
        counts: Vec<u64>,
    ) -> Result<Self> {
        if filters.len() != NUM_BUCKETS || counts.len() != NUM_BUCKETS {
            return Err(DeblurError::CorruptBank(format!(
                "expected {NUM_BUCKETS} buckets, got {}",
                filters.len()
            )));
        }
        let taps = patch_size * patch_size;
        for (i, f) in filters.iter().enumerate() {
            if f.len() != taps {
                return Err(DeblurError::CorruptBank(format!(
                    "bucket {i} has {} taps, expected {taps}",
                    f.len()
                )));
            }
            if f.iter().any(|t| !t.is_finite()) {
                return Err(DeblurError::NonFiniteFilter(i));
            }
        }
        Ok(FilterBank {
            patch_size,
            quant,
            kernel_tag,
            filters,
            counts,
        })
    }

    /// Center tap 1, everything else 0: the fallback for empty buckets.
    pub fn identity_filter(patch_size: usize) -> Vec<f64> {
        let mut f = vec![0.0; patch_size * patch_size];
        f[(patch_size / 2) * patch_size + patch_size / 2] = 1.0;
        f
    }

    pub fn all_identity(patch_size: usize, quant: QuantConfig, kernel_tag: String) -> Self {
        FilterBank {
            patch_size,
            quant,
            kernel_tag,
            filters: vec![Self::identity_filter(patch_size); NUM_BUCKETS],
            counts: vec![0; NUM_BUCKETS],
        }
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn quant(&self) -> &QuantConfig {
        &self.quant
    }

    pub fn kernel_tag(&self) -> &str {
        &self.kernel_tag
    }

    pub fn filter(&self, key: PatchKey) -> &[f64] {
        &self.filters[key.index()]
    }

    pub fn filter_at(&self, index: usize) -> &[f64] {
        &self.filters[index]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| DeblurError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| DeblurError::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_u16::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
        w.write_u16::<LittleEndian>(self.patch_size as u16).map_err(io)?;
        for bins in [ANGLE_BINS, STRENGTH_BINS, COHERENCE_BINS] {
            w.write_u16::<LittleEndian>(bins as u16).map_err(io)?;
        }
        for t in self
            .quant
            .strength_thresholds
            .iter()
            .chain(&self.quant.coherence_thresholds)
        {
            w.write_f64::<LittleEndian>(*t).map_err(io)?;
        }
        let tag = self.kernel_tag.as_bytes();
        w.write_u32::<LittleEndian>(tag.len() as u32).map_err(io)?;
        w.write_all(tag).map_err(io)?;
        for (count, taps) in self.counts.iter().zip(&self.filters) {
            w.write_u64::<LittleEndian>(*count).map_err(io)?;
            for t in taps {
                w.write_f64::<LittleEndian>(*t).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| DeblurError::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| DeblurError::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(DeblurError::BadMagic(path.to_path_buf()));
        }
        let version = r.read_u16::<LittleEndian>().map_err(io)?;
        if version != FORMAT_VERSION {
            return Err(DeblurError::UnsupportedVersion(version));
        }
        let patch_size = r.read_u16::<LittleEndian>().map_err(io)? as usize;
        if patch_size == 0 || patch_size % 2 == 0 {
            return Err(DeblurError::CorruptBank(format!(
                "patch size {patch_size} not odd"
            )));
        }
        for expected in [ANGLE_BINS, STRENGTH_BINS, COHERENCE_BINS] {
            let got = r.read_u16::<LittleEndian>().map_err(io)? as usize;
            if got != expected {
                return Err(DeblurError::CorruptBank(format!(
                    "bin count {got}, expected {expected}"
                )));
            }
        }
        let mut th = [0.0f64; 4];
        for t in &mut th {
            *t = r.read_f64::<LittleEndian>().map_err(io)?;
        }
        let quant = QuantConfig {
            strength_thresholds: [th[0], th[1]],
            coherence_thresholds: [th[2], th[3]],
        };
        let tag_len = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag).map_err(io)?;
        let kernel_tag = String::from_utf8(tag)
            .map_err(|_| DeblurError::CorruptBank("kernel tag is not UTF-8".into()))?;
        let taps = patch_size * patch_size;
        let mut filters = Vec::with_capacity(NUM_BUCKETS);
        let mut counts = Vec::with_capacity(NUM_BUCKETS);
        for _ in 0..NUM_BUCKETS {
            counts.push(r.read_u64::<LittleEndian>().map_err(io)?);
            let mut f = vec![0.0f64; taps];
            for t in &mut f {
                *t = r.read_f64::<LittleEndian>().map_err(io)?;
            }
            filters.push(f);
        }
        FilterBank::new(patch_size, quant, kernel_tag, filters, counts)
    }
}
