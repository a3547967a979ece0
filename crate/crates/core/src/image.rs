//! Planar raster type and channel conversions.

use serde::{Deserialize, Serialize};

use crate::colormap::Colormap;
use crate::error::{Error, Result};

/// Rec.601 luminance weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Normalized multi-plane raster, planar row-major, nominal range `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    width: usize,
    height: usize,
    planes: usize,
    data: Vec<f64>,
}

impl PlanarImage {
    pub fn new(width: usize, height: usize, planes: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || planes == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension {width}x{height}x{planes}"
            )));
        }
        if data.len() != width * height * planes {
            return Err(Error::InvalidImage(format!(
                "data length {} != {width}x{height}x{planes}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            width,
            height,
            planes,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, planes: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && planes > 0 && value.is_finite());
        Self {
            width,
            height,
            planes,
            data: vec![value; width * height * planes],
        }
    }

    pub fn zeros(width: usize, height: usize, planes: usize) -> Self {
        Self::filled(width, height, planes, 0.0)
    }

    /// Builds an image from `f(x, y, plane)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        planes: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * planes);
        for p in 0..planes {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, p));
                }
            }
        }
        Self::new(width, height, planes, data)
    }

    /// Stacks single-plane rasters of equal size.
    pub fn from_planes(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        let n = planes.len();
        let data = planes.into_iter().flatten().collect();
        Self::new(width, height, n, data)
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, planes: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * planes);
        Self {
            width,
            height,
            planes,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, p: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[p * n..(p + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, p: usize) -> f64 {
        self.data[p * self.plane_len() + y * self.width + x]
    }

    pub fn same_size(&self, other: &PlanarImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_size(&self, other: &PlanarImage, what: &str) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::SizeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Elementwise map; non-finite results are replaced with 0.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> PlanarImage {
        let data = self
            .data
            .iter()
            .map(|&v| {
                let r = f(v);
                if r.is_finite() {
                    r
                } else {
                    0.0
                }
            })
            .collect();
        Self::from_raw_unchecked(self.width, self.height, self.planes, data)
    }

    pub fn clamped(&self) -> PlanarImage {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Repeats a single plane (or passes a matching image through) to reach `planes`.
    pub fn broadcast_to(&self, planes: usize) -> Result<PlanarImage> {
        if self.planes == planes {
            return Ok(self.clone());
        }
        if self.planes != 1 {
            return Err(Error::UnsupportedPlaneCount(self.planes));
        }
        let mut data = Vec::with_capacity(self.data.len() * planes);
        for _ in 0..planes {
            data.extend_from_slice(&self.data);
        }
        Ok(Self::from_raw_unchecked(self.width, self.height, planes, data))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Swaps x and y.
    pub fn transposed(&self) -> PlanarImage {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; self.data.len()];
        for p in 0..self.planes {
            let src = self.plane(p);
            let dst = &mut data[p * w * h..(p + 1) * w * h];
            for y in 0..h {
                for x in 0..w {
                    dst[x * h + y] = src[y * w + x];
                }
            }
        }
        Self::from_raw_unchecked(h, w, self.planes, data)
    }

    /// Linear min-max stretch to `[0, 1]`; a constant image maps to 0.
    pub fn stretched(&self) -> PlanarImage {
        let (lo, hi) = self.min_max();
        let range = hi - lo;
        if range <= 0.0 {
            return PlanarImage::zeros(self.width, self.height, self.planes);
        }
        self.map(|v| (v - lo) / range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Basis,
    Feature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Thermal,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acquisition {
    Single,
    Integral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChannelDescriptor {
    pub role: Role,
    pub modality: Modality,
    pub acquisition: Acquisition,
    #[serde(default)]
    pub color_coded: bool,
}

impl ChannelDescriptor {
    pub fn basis(modality: Modality, acquisition: Acquisition) -> Self {
        Self {
            role: Role::Basis,
            modality,
            acquisition,
            color_coded: false,
        }
    }

    pub fn feature(modality: Modality, acquisition: Acquisition) -> Self {
        Self {
            role: Role::Feature,
            modality,
            acquisition,
            color_coded: false,
        }
    }
}

pub fn to_grayscale(img: &PlanarImage) -> Result<PlanarImage> {
    match img.planes() {
        1 => Ok(img.clone()),
        3 => {
            let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
            let data = r
                .iter()
                .zip(g)
                .zip(b)
                .map(|((&r, &g), &b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
                .collect();
            Ok(PlanarImage::from_raw_unchecked(img.width(), img.height(), 1, data))
        }
        n => Err(Error::UnsupportedPlaneCount(n)),
    }
}

pub fn color_code(img: &PlanarImage, map: Colormap) -> Result<PlanarImage> {
    if img.planes() != 1 {
        return Err(Error::UnsupportedPlaneCount(img.planes()));
    }
    let n = img.plane_len();
    let mut data = vec![0.0; 3 * n];
    for (i, &v) in img.plane(0).iter().enumerate() {
        let rgb = map.lookup(v);
        for (p, c) in rgb.into_iter().enumerate() {
            data[p * n + i] = c;
        }
    }
    Ok(PlanarImage::from_raw_unchecked(img.width(), img.height(), 3, data))
}

pub fn replicate_planes(img: &PlanarImage) -> Result<PlanarImage> {
    if img.planes() != 1 {
        return Err(Error::UnsupportedPlaneCount(img.planes()));
    }
    img.broadcast_to(3)
}
