//! Shallow VGG-19 feature extraction (relu_1_1, relu_2_1), activity maps
//! and weight maps.

pub mod conv;
pub mod weights;

use serde::{Deserialize, Serialize};

pub use conv::FeatureVolume;
pub use weights::{load_weights, save_weights, ConvLayerWeights, Preprocess, VggWeights};

use crate::error::{Error, Result};
use crate::image::PlanarImage;

/// Guards every normalization against division by zero.
pub const EPSILON: f64 = 1e-12;

/// Per-layer feature volumes, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub layers: Vec<FeatureVolume>,
}

/// Per-pixel channel-wise l1 magnitude of one feature volume.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Saliency weights in `[0, 1]` at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ActivityMap {
    pub fn to_image(&self) -> PlanarImage {
        PlanarImage::from_raw_unchecked(self.width, self.height, 1, self.values.clone())
    }
}

impl WeightMap {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn to_image(&self) -> PlanarImage {
        PlanarImage::from_raw_unchecked(self.width, self.height, 1, self.values.clone())
    }
}

/// How per-layer activity maps become a channel's weight map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum WeightRule {
    /// Each layer max-normalized, then averaged across layers.
    #[default]
    NormalizedAverage,
    /// Summed layer activity of a channel over the sum across all channels.
    CrossChannelSoftmax,
}

/// Standardizes a 3-plane `[0, 1]` image into the network's input volume.
pub fn preprocess(img: &PlanarImage, pre: &Preprocess) -> Result<FeatureVolume> {
    if img.planes() != 3 {
        return Err(Error::UnsupportedPlaneCount(img.planes()));
    }
    let (w, h) = (img.width(), img.height());
    let mut vol = FeatureVolume::zeros(w, h, 3);
    for p in 0..3 {
        let (mean, std) = (pre.mean[p], pre.std[p]);
        for (dst, &src) in vol.data[p * w * h..(p + 1) * w * h].iter_mut().zip(img.plane(p)) {
            *dst = (src as f32 - mean) / std;
        }
    }
    Ok(vol)
}

/// Runs the network on an already standardized input volume.
pub fn forward_volume(input: &FeatureVolume, weights: &VggWeights) -> FeatureStack {
    let relu1_1 = conv::conv_relu(input, &weights.conv1_1);
    let relu1_2 = conv::conv_relu(&relu1_1, &weights.conv1_2);
    let pooled = conv::max_pool2(&relu1_2);
    let relu2_1 = conv::conv_relu(&pooled, &weights.conv2_1);
    FeatureStack {
        layers: vec![relu1_1, relu2_1],
    }
}

/// relu_1_1 at full resolution and relu_2_1 at half resolution (floored).
pub fn forward(img: &PlanarImage, weights: &VggWeights) -> Result<FeatureStack> {
    if img.width() < 2 || img.height() < 2 {
        return Err(Error::InvalidImage(format!(
            "{}x{} is too small to pool",
            img.width(),
            img.height()
        )));
    }
    let input = preprocess(img, &weights.preprocess)?;
    Ok(forward_volume(&input, weights))
}

/// `A(x, y) = Σ_c |ϕ(x, y, c)|` for the 1-based `layer`.
pub fn activity_map(stack: &FeatureStack, layer: usize) -> Result<ActivityMap> {
    let vol = layer
        .checked_sub(1)
        .and_then(|i| stack.layers.get(i))
        .ok_or_else(|| Error::InvalidParameter(format!("no feature layer {layer}")))?;
    Ok(volume_activity(vol))
}

pub fn volume_activity(vol: &FeatureVolume) -> ActivityMap {
    let mut values = vec![0.0f64; vol.width * vol.height];
    for c in 0..vol.channels {
        for (acc, &v) in values.iter_mut().zip(vol.channel(c)) {
            *acc += v.abs() as f64;
        }
    }
    ActivityMap {
        width: vol.width,
        height: vol.height,
        values,
    }
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let axis = |d: usize, s: usize, n: usize| -> (usize, usize, f64) {
        let pos = ((d as f64 + 0.5) * s as f64 / n as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, pos - i0 as f64)
    };
    let xs: Vec<_> = (0..dw).map(|x| axis(x, sw, dw)).collect();
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, fy) = axis(y, sh, dh);
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn upsample(map: &ActivityMap, width: usize, height: usize) -> Vec<f64> {
    resize_bilinear(&map.values, map.width, map.height, width, height)
}

/// Upsamples each layer's map to `width × height`, max-normalizes it and
/// averages across layers.
pub fn weight_map(activities: &[ActivityMap], width: usize, height: usize) -> Result<WeightMap> {
    if activities.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut values = vec![0.0; width * height];
    for a in activities {
        let up = upsample(a, width, height);
        let max = up.iter().copied().fold(0.0f64, f64::max).max(EPSILON);
        for (acc, v) in values.iter_mut().zip(&up) {
            *acc += v / max;
        }
    }
    let k = activities.len() as f64;
    values.iter_mut().for_each(|v| *v = (*v / k).clamp(0.0, 1.0));
    Ok(WeightMap { width, height, values })
}

/// `W_n = Σ_i A_n^i / Σ_m Σ_i A_m^i`, per pixel, across feature channels.
pub fn cross_channel_weights(
    per_channel: &[Vec<ActivityMap>],
    width: usize,
    height: usize,
) -> Result<Vec<WeightMap>> {
    if per_channel.is_empty() || per_channel.iter().any(|a| a.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let sums: Vec<Vec<f64>> = per_channel
        .iter()
        .map(|layers| {
            let mut s = vec![0.0; width * height];
            for a in layers {
                for (acc, v) in s.iter_mut().zip(upsample(a, width, height)) {
                    *acc += v;
                }
            }
            s
        })
        .collect();
    let mut total = vec![0.0; width * height];
    for s in &sums {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    Ok(sums
        .into_iter()
        .map(|s| WeightMap {
            width,
            height,
            values: s
                .iter()
                .zip(&total)
                .map(|(v, t)| (v / t.max(EPSILON)).clamp(0.0, 1.0))
                .collect(),
        })
        .collect())
}
