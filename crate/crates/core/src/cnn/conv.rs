//! Convolution and pooling on channel-major feature volumes.
//!
//! Convolutions lower a band of output rows to a column matrix and hand
//! it to `sgemm`. Bands have a fixed height derived from the image width
//! only, so results do not depend on how bands are scheduled.

use crate::cnn::weights::ConvLayerWeights;
use crate::par;

/// Output pixels per lowered band.
const BAND_PIXELS: usize = 4096;

/// `channels × height × width` volume, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureVolume {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// 3×3 (or any odd square) convolution, stride 1, zero padding to keep
/// the spatial size, followed by bias and ReLU.
pub fn conv_relu(input: &FeatureVolume, layer: &ConvLayerWeights) -> FeatureVolume {
    assert_eq!(input.channels, layer.in_channels, "{}: channel mismatch", layer.name);
    let (w, h) = (input.width, input.height);
    let (kh, kw) = (layer.kernel_h, layer.kernel_w);
    let k = layer.in_channels * kh * kw;
    let m = layer.out_channels;
    let band_rows = (BAND_PIXELS / w).max(1);
    let bands = h.div_ceil(band_rows);

    let results = par::map_range(bands, |b| {
        let y0 = b * band_rows;
        let y1 = (y0 + band_rows).min(h);
        let n = (y1 - y0) * w;
        let cols = lower_band(input, y0, y1, kh, kw);
        let mut out = vec![0.0f32; m * n];
        // SAFETY: every pointer/stride pair below describes a dense
        // row-major matrix lying fully inside its backing Vec:
        // kernel is m×k, cols is k×n, out is m×n.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                layer.kernel.as_ptr(),
                k as isize,
                1,
                cols.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        for (row, &bias) in out.chunks_exact_mut(n).zip(&layer.bias) {
            for v in row {
                *v = (*v + bias).max(0.0);
            }
        }
        out
    });

    let mut output = FeatureVolume::zeros(w, h, m);
    let plane = w * h;
    for (b, band) in results.iter().enumerate() {
        let y0 = b * band_rows;
        let n = band.len() / m;
        for (c, row) in band.chunks_exact(n).enumerate() {
            let start = c * plane + y0 * w;
            output.data[start..start + n].copy_from_slice(row);
        }
    }
    output
}

/// Column matrix for output rows `y0..y1`: row index `(ic·kh + ky)·kw + kx`,
/// column index `(y − y0)·w + x`.
fn lower_band(input: &FeatureVolume, y0: usize, y1: usize, kh: usize, kw: usize) -> Vec<f32> {
    let (w, h) = (input.width as isize, input.height as isize);
    let n = (y1 - y0) * input.width;
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut cols = vec![0.0f32; input.channels * kh * kw * n];
    for ic in 0..input.channels {
        let src = input.channel(ic);
        for ky in 0..kh {
            for kx in 0..kw {
                let r = (ic * kh + ky) * kw + kx;
                let dst = &mut cols[r * n..(r + 1) * n];
                let dx = kx as isize - rx;
                for y in y0..y1 {
                    let sy = y as isize + ky as isize - ry;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    let src_row = &src[(sy * w) as usize..((sy + 1) * w) as usize];
                    let dst_row = &mut dst[(y - y0) * w as usize..(y - y0 + 1) * w as usize];
                    // dst[x] = src[x + dx] where in range
                    let x_lo = (-dx).max(0);
                    let x_hi = (w - dx).min(w);
                    if x_lo < x_hi {
                        dst_row[x_lo as usize..x_hi as usize]
                            .copy_from_slice(&src_row[(x_lo + dx) as usize..(x_hi + dx) as usize]);
                    }
                }
            }
        }
    }
    cols
}

/// 2×2 max pooling, stride 2, no padding; odd trailing rows/columns drop.
pub fn max_pool2(input: &FeatureVolume) -> FeatureVolume {
    let (w, h) = (input.width / 2, input.height / 2);
    let mut out = FeatureVolume::zeros(w, h, input.channels);
    let plane = w * h;
    par::for_each_chunk_mut(&mut out.data, plane.max(1), |c, dst| {
        let src = input.channel(c);
        let sw = input.width;
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * sw + 2 * x;
                dst[y * w + x] = src[i].max(src[i + 1]).max(src[i + sw]).max(src[i + sw + 1]);
            }
        }
    });
    out
}
