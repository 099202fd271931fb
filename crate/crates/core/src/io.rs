//! Image file IO: PNG (8/16-bit gray and RGB) and binary PGM in, 8-bit
//! grayscale PNG out. Color inputs collapse to luminance with BT.601 weights.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{DeblurError, Result};
use crate::image::Image;

const BT601: [f64; 3] = [0.299, 0.587, 0.114];

pub fn load_image(path: &Path) -> Result<Image> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => load_pgm(path),
        _ => load_png(path),
    }
}

fn load_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| DeblurError::Decode {
        path: path.to_path_buf(),
        source: e,
    })?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let data: Vec<f64> = match dynimg {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b.pixels().map(|p| luma8(&p.0)).collect(),
        DynamicImage::ImageRgba8(b) => b.pixels().map(|p| luma8(&p.0[..3])).collect(),
        DynamicImage::ImageRgb16(b) => b.pixels().map(|p| luma16(&p.0)).collect(),
        DynamicImage::ImageRgba16(b) => b.pixels().map(|p| luma16(&p.0[..3])).collect(),
        other => {
            let b = other.to_rgb8();
            b.pixels().map(|p| luma8(&p.0)).collect::<Vec<_>>()
        }
    };
    Image::new(w, h, data)
}

fn luma8(rgb: &[u8]) -> f64 {
    rgb.iter()
        .zip(BT601)
        .map(|(c, w)| *c as f64 / 255.0 * w)
        .sum()
}

fn luma16(rgb: &[u16]) -> f64 {
    rgb.iter()
        .zip(BT601)
        .map(|(c, w)| *c as f64 / 65535.0 * w)
        .sum()
}

/// Binary (P5) PGM, 8- or 16-bit (16-bit samples are big-endian per the spec).
fn load_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| DeblurError::io(path, e))?;
    if !bytes.starts_with(b"P5") {
        return Err(DeblurError::UnsupportedFormat(path.to_path_buf()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3]; // width, height, maxval
    for field in fields.iter_mut() {
        // skip whitespace and '#' comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DeblurError::UnsupportedFormat(path.to_path_buf()))?;
    }
    pos += 1; // single whitespace after maxval
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(DeblurError::UnsupportedFormat(path.to_path_buf()));
    }
    let n = w * h;
    let data = if maxval < 256 {
        if bytes.len() < pos + n {
            return Err(DeblurError::UnsupportedFormat(path.to_path_buf()));
        }
        bytes[pos..pos + n]
            .iter()
            .map(|b| *b as f64 / maxval as f64)
            .collect()
    } else {
        if bytes.len() < pos + 2 * n {
            return Err(DeblurError::UnsupportedFormat(path.to_path_buf()));
        }
        bytes[pos..pos + 2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
            .collect()
    };
    Image::new(w, h, data)
}

/// Write 8-bit grayscale PNG with round-half-up quantization.
pub fn save_image(image: &Image, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(
        image.width() as u32,
        image.height() as u32,
        |x, y| {
            let v = image.get(x as usize, y as usize);
            Luma([(v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8])
        },
    );
    buf.save(path).map_err(|e| DeblurError::Decode {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn png_round_trip_within_8bit_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Image::from_fn(19, 13, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pure_red_maps_to_bt601_weight() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        let buf = image::RgbImage::from_pixel(4, 4, image::Rgb([255, 0, 0]));
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        for v in img.data() {
            assert!((v - 0.299).abs() < 1e-12);
        }
    }

    #[test]
    fn sixteen_bit_png_scales_by_65535() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g16.png");
        let buf = image::ImageBuffer::<Luma<u16>, Vec<u16>>::from_pixel(3, 3, Luma([13107u16]));
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        for v in img.data() {
            assert!((v - 13107.0 / 65535.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_pgm_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let mut f = std::fs::File::create(&path).unwrap();
        write!(f, "P5\n# comment line\n3 2\n255\n").unwrap();
        f.write_all(&[0u8, 51, 102, 153, 204, 255]).unwrap();
        drop(f);
        let img = load_image(&path).unwrap();
        assert_eq!(img.width(), 3);
        assert_eq!(img.height(), 2);
        assert!((img.get(1, 0) - 51.0 / 255.0).abs() < 1e-12);
        assert!((img.get(2, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreadable_file_errors() {
        assert!(load_image(Path::new("/nonexistent/nope.png")).is_err());
        assert!(load_image(Path::new("/nonexistent/nope.pgm")).is_err());
    }
}
