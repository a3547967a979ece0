//! PNG / TIFF decoding and encoding for [`PlanarImage`].
//!
//! Integer inputs are divided by their maximum code value. Integer outputs
//! are clamped to `[0, 1]` and quantized round-half-up.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use tiff::encoder::{colortype, TiffEncoder};

use crate::error::{Error, Result};
use crate::image::PlanarImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

pub fn load(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::from(e).at(path))?;
    from_dynamic(&img).map_err(|e| e.at(path))
}

pub fn from_dynamic(img: &DynamicImage) -> Result<PlanarImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let buf = img.to_luma8();
            planar(w, h, 1, buf.as_raw(), |v| v as f64 / 255.0)
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            let buf = img.to_luma16();
            planar(w, h, 1, buf.as_raw(), |v| v as f64 / 65535.0)
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let buf = img.to_rgb16();
            planar(w, h, 3, buf.as_raw(), |v| v as f64 / 65535.0)
        }
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => {
            let buf = img.to_rgb32f();
            let rgb = planar(w, h, 3, buf.as_raw(), |v| v as f64)?;
            if gray {
                Ok(PlanarImage::new(w, h, 1, rgb.plane(0).to_vec())?)
            } else {
                Ok(rgb)
            }
        }
        _ => {
            let buf = img.to_rgb8();
            planar(w, h, 3, buf.as_raw(), |v| v as f64 / 255.0)
        }
    }
}

fn planar<T: Copy>(
    w: usize,
    h: usize,
    planes: usize,
    interleaved: &[T],
    conv: impl Fn(T) -> f64,
) -> Result<PlanarImage> {
    let n = w * h;
    let mut data = vec![0.0; n * planes];
    for (i, px) in interleaved.chunks_exact(planes).enumerate() {
        for (p, &v) in px.iter().enumerate() {
            data[p * n + i] = conv(v);
        }
    }
    PlanarImage::new(w, h, planes, data)
}

/// Quantizes a normalized sample to `max` code values, round-half-up.
pub fn quantize(v: f64, max: u32) -> u32 {
    let c = v.clamp(0.0, 1.0) * max as f64;
    ((c + 0.5).floor() as u32).min(max)
}

fn interleave<T>(img: &PlanarImage, conv: impl Fn(f64) -> T) -> Vec<T> {
    let n = img.plane_len();
    let planes = img.planes();
    let mut out = Vec::with_capacity(n * planes);
    for i in 0..n {
        for p in 0..planes {
            out.push(conv(img.plane(p)[i]));
        }
    }
    out
}

pub fn to_dynamic(img: &PlanarImage, depth: BitDepth) -> Result<DynamicImage> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bad = || Error::InvalidImage("buffer size".into());
    Ok(match (img.planes(), depth) {
        (1, BitDepth::Eight) => {
            let raw = interleave(img, |v| quantize(v, 255) as u8);
            DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).ok_or_else(bad)?)
        }
        (3, BitDepth::Eight) => {
            let raw = interleave(img, |v| quantize(v, 255) as u8);
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).ok_or_else(bad)?)
        }
        (1, BitDepth::Sixteen) => {
            let raw = interleave(img, |v| quantize(v, 65535) as u16);
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).ok_or_else(bad)?)
        }
        (3, BitDepth::Sixteen) => {
            let raw = interleave(img, |v| quantize(v, 65535) as u16);
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).ok_or_else(bad)?)
        }
        (n, _) => return Err(Error::UnsupportedPlaneCount(n)),
    })
}

/// Saves as PNG (8-bit) or TIFF (8- or 16-bit), chosen by extension.
pub fn save(img: &PlanarImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let is_tiff = matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("tif" | "tiff")
    );
    let depth = if is_tiff { depth } else { BitDepth::Eight };
    let dynimg = to_dynamic(img, depth)?;
    dynimg.save(path).map_err(|e| Error::from(e).at(path))
}

/// Writes raw (unclamped) samples as a 32-bit float TIFF.
pub fn save_f32_tiff(img: &PlanarImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = TiffEncoder::new(file)?;
        let (w, h) = (img.width() as u32, img.height() as u32);
        let raw = interleave(img, |v| v as f32);
        match img.planes() {
            1 => enc.write_image::<colortype::Gray32Float>(w, h, &raw)?,
            3 => enc.write_image::<colortype::RGB32Float>(w, h, &raw)?,
            n => return Err(Error::UnsupportedPlaneCount(n)),
        }
        Ok(())
    };
    write().map_err(|e| e.at(path))
}
