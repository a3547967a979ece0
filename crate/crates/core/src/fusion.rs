//! Feature masks, feature maps and additive fusion with the basis channel.
//!
//! Each feature channel `F_n` yields a high-detail layer `H_n` (unified
//! filter) and a saliency weight map `W_n` (shallow CNN). The mask
//! `FM_n = W_n ⊙ H_n` is optionally min-max normalized, the feature map is
//! `G_n = FM_n ⊙ F_n`, and the result is `B + Σ_n G_n`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cnn::{self, ActivityMap, VggWeights, WeightMap, WeightRule};
use crate::colormap::Colormap;
use crate::error::{Error, Result};
use crate::filter::{self, FilterParams, Solver};
use crate::image::{self, ChannelDescriptor, PlanarImage, Role};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MaskNormalization {
    #[default]
    Minmax,
    None,
}

/// Which extractor branches contribute to the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Ablation {
    #[default]
    Full,
    /// `W_n ≡ 1`: the mask is the high-detail layer alone.
    FilterOnly,
    /// `H_n ≡ 1`: the mask is the CNN weight map alone.
    CnnOnly,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "filterOnly" | "filter-only" => Ok(Ablation::FilterOnly),
            "cnnOnly" | "cnn-only" => Ok(Ablation::CnnOnly),
            _ => Err(Error::InvalidParameter(format!("unknown ablation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct FusionConfig {
    pub lambda: f64,
    /// 1-based CNN layers (1 = relu_1_1, 2 = relu_2_1).
    pub layers: Vec<usize>,
    pub weight_rule: WeightRule,
    pub mask_normalization: MaskNormalization,
    pub epsilon: f64,
    pub clamp_output: bool,
    pub ablation: Ablation,
    pub solver: Solver,
    pub cg_tolerance: f64,
    pub cg_max_iters: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let filter = FilterParams::default();
        Self {
            lambda: filter.lambda,
            layers: vec![1, 2],
            weight_rule: WeightRule::default(),
            mask_normalization: MaskNormalization::default(),
            epsilon: cnn::EPSILON,
            clamp_output: true,
            ablation: Ablation::default(),
            solver: filter.solver,
            cg_tolerance: filter.cg_tolerance,
            cg_max_iters: filter.cg_max_iters,
        }
    }
}

impl FusionConfig {
    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            lambda: self.lambda,
            solver: self.solver,
            cg_tolerance: self.cg_tolerance,
            cg_max_iters: self.cg_max_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter_params().validate()?;
        if self.layers.is_empty() || self.layers.iter().any(|l| !(1..=2).contains(l)) {
            return Err(Error::InvalidParameter(format!(
                "layers must be a non-empty subset of {{1, 2}}, got {:?}",
                self.layers
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub image: PlanarImage,
    pub descriptor: ChannelDescriptor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionJob {
    pub basis: Channel,
    pub features: Vec<Channel>,
    pub config: FusionConfig,
}

impl FusionJob {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.basis.descriptor.role != Role::Basis {
            return Err(Error::InvalidParameter(format!(
                "channel `{}` is the basis but has role {:?}",
                self.basis.name, self.basis.descriptor.role
            )));
        }
        if self.features.is_empty() {
            return Err(Error::EmptyInput);
        }
        for f in &self.features {
            if f.descriptor.role != Role::Feature {
                return Err(Error::InvalidParameter(format!(
                    "channel `{}` must have role Feature",
                    f.name
                )));
            }
            self.basis.image.check_same_size(&f.image, &f.name)?;
        }
        for c in std::iter::once(&self.basis).chain(&self.features) {
            if !matches!(c.image.planes(), 1 | 3) {
                return Err(Error::UnsupportedPlaneCount(c.image.planes()));
            }
        }
        Ok(())
    }
}

/// Per-channel intermediates, kept for inspection dumps.
#[derive(Debug, Clone)]
pub struct ChannelIntermediates {
    pub name: String,
    /// `None` in `cnnOnly` mode.
    pub high_detail: Option<PlanarImage>,
    /// Empty in `filterOnly` mode.
    pub activities: Vec<ActivityMap>,
    /// `None` in `filterOnly` mode.
    pub weight: Option<WeightMap>,
    pub mask: PlanarImage,
    pub feature_map: PlanarImage,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub fused: PlanarImage,
    pub channels: Vec<ChannelIntermediates>,
}

/// `FM = W ⊙ H`, `W` broadcast over the planes of `H`.
pub fn feature_mask(weight: &WeightMap, high: &PlanarImage, config: &FusionConfig) -> Result<PlanarImage> {
    if weight.width != high.width() || weight.height != high.height() {
        return Err(Error::SizeMismatch(format!(
            "weight map {}x{} vs detail layer {}x{}",
            weight.width,
            weight.height,
            high.width(),
            high.height()
        )));
    }
    let n = high.plane_len();
    let data: Vec<f64> = high
        .data()
        .iter()
        .enumerate()
        .map(|(i, h)| weight.values[i % n] * h)
        .collect();
    let fm = PlanarImage::new(high.width(), high.height(), high.planes(), data)?;
    Ok(normalize_mask(fm, config))
}

fn normalize_mask(fm: PlanarImage, config: &FusionConfig) -> PlanarImage {
    match config.mask_normalization {
        MaskNormalization::None => fm,
        MaskNormalization::Minmax => {
            let (lo, hi) = fm.min_max();
            if hi - lo <= config.epsilon {
                PlanarImage::zeros(fm.width(), fm.height(), fm.planes())
            } else {
                fm.map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            }
        }
    }
}

/// `G = FM ⊙ F`; a single-plane mask is broadcast over `F`.
pub fn feature_map(mask: &PlanarImage, feature: &PlanarImage) -> Result<PlanarImage> {
    mask.check_same_size(feature, "feature mask vs feature channel")?;
    if mask.planes() != 1 && mask.planes() != feature.planes() {
        return Err(Error::SizeMismatch(format!(
            "mask has {} planes, feature has {}",
            mask.planes(),
            feature.planes()
        )));
    }
    let n = mask.plane_len();
    let single = mask.planes() == 1;
    let data = feature
        .data()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let m = if single { mask.data()[i % n] } else { mask.data()[i] };
            m * f
        })
        .collect();
    PlanarImage::new(feature.width(), feature.height(), feature.planes(), data)
}

/// Equal-weight per-pixel mean; single-plane inputs are broadcast.
///
/// Values are summed in sorted order per sample, so the result is bitwise
/// independent of input order.
pub fn alpha_blend(images: &[PlanarImage]) -> Result<PlanarImage> {
    let first = images.first().ok_or(Error::EmptyInput)?;
    for img in &images[1..] {
        first.check_same_size(img, "alpha blend input")?;
    }
    let planes = images.iter().map(PlanarImage::planes).max().unwrap_or(1);
    let expanded = images
        .iter()
        .map(|i| i.broadcast_to(planes))
        .collect::<Result<Vec<_>>>()?;
    let len = first.plane_len() * planes;
    let k = images.len() as f64;
    let mut scratch = Vec::with_capacity(images.len());
    let data = (0..len)
        .map(|i| {
            scratch.clear();
            scratch.extend(expanded.iter().map(|img| img.data()[i]));
            scratch.sort_by(f64::total_cmp);
            scratch.iter().sum::<f64>() / k
        })
        .collect();
    PlanarImage::new(first.width(), first.height(), planes, data)
}

/// Applies channel-level conversions (color coding) before extraction.
fn prepare(channel: &Channel) -> Result<PlanarImage> {
    if channel.descriptor.color_coded && channel.image.planes() == 1 {
        image::color_code(&channel.image, Colormap::Inferno)
    } else {
        Ok(channel.image.clone())
    }
}

struct Extracted {
    image: PlanarImage,
    high_detail: Option<PlanarImage>,
    activities: Vec<ActivityMap>,
    started: Instant,
}

fn extract(channel: &Channel, weights: Option<&VggWeights>, config: &FusionConfig) -> Result<Extracted> {
    let started = Instant::now();
    let image = prepare(channel)?;
    let high_detail = match config.ablation {
        Ablation::CnnOnly => None,
        _ => Some(filter::high_detail(&image, &config.filter_params())?),
    };
    let activities = match config.ablation {
        Ablation::FilterOnly => Vec::new(),
        _ => {
            let weights = weights.ok_or_else(|| Error::WeightsMissing("conv1_1".into()))?;
            let rgb = if image.planes() == 1 { image::replicate_planes(&image)? } else { image.clone() };
            let stack = cnn::forward(&rgb, weights)?;
            config
                .layers
                .iter()
                .map(|&l| cnn::activity_map(&stack, l))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Extracted {
        image,
        high_detail,
        activities,
        started,
    })
}

/// Runs the full pipeline and keeps every per-channel intermediate.
pub fn fuse_detailed(job: &FusionJob, weights: Option<&VggWeights>) -> Result<FusionOutput> {
    job.validate()?;
    let config = &job.config;
    let (w, h) = (job.basis.image.width(), job.basis.image.height());

    let extracted = par::map(&job.features, |c| extract(c, weights, config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let weight_maps: Vec<Option<WeightMap>> = match (config.ablation, config.weight_rule) {
        (Ablation::FilterOnly, _) => vec![None; extracted.len()],
        (_, WeightRule::NormalizedAverage) => extracted
            .iter()
            .map(|e| cnn::weight_map(&e.activities, w, h).map(Some))
            .collect::<Result<_>>()?,
        (_, WeightRule::CrossChannelSoftmax) => {
            let acts: Vec<Vec<ActivityMap>> = extracted.iter().map(|e| e.activities.clone()).collect();
            cnn::cross_channel_weights(&acts, w, h)?.into_iter().map(Some).collect()
        }
    };

    let mut channels = Vec::with_capacity(extracted.len());
    for ((channel, ex), weight) in job.features.iter().zip(extracted).zip(weight_maps) {
        let planes = ex.image.planes();
        let mask = match (&ex.high_detail, &weight) {
            (Some(hd), Some(wm)) => feature_mask(wm, hd, config)?,
            (Some(hd), None) => feature_mask(&WeightMap::filled(w, h, 1.0), hd, config)?,
            (None, Some(wm)) => feature_mask(wm, &PlanarImage::filled(w, h, planes, 1.0), config)?,
            (None, None) => unreachable!("ablation disables at most one branch"),
        };
        let g = feature_map(&mask, &ex.image)?;
        let elapsed = ex.started.elapsed();
        log::info!("channel `{}`: {:.3} s", channel.name, elapsed.as_secs_f64());
        channels.push(ChannelIntermediates {
            name: channel.name.clone(),
            high_detail: ex.high_detail,
            activities: ex.activities,
            weight,
            mask,
            feature_map: g,
            elapsed,
        });
    }

    let planes = channels
        .iter()
        .map(|c| c.feature_map.planes())
        .chain(std::iter::once(job.basis.image.planes()))
        .max()
        .unwrap_or(1);
    let mut acc = job.basis.image.broadcast_to(planes)?.into_data();
    for c in &channels {
        let g = c.feature_map.broadcast_to(planes)?;
        for (a, v) in acc.iter_mut().zip(g.data()) {
            *a += v;
        }
    }
    let fused = PlanarImage::new(w, h, planes, acc)?;
    let fused = if config.clamp_output { fused.clamped() } else { fused };
    Ok(FusionOutput { fused, channels })
}

/// `B + Σ_n G_n`, clamped to `[0, 1]` unless disabled.
pub fn fuse(job: &FusionJob, weights: Option<&VggWeights>) -> Result<PlanarImage> {
    fuse_detailed(job, weights).map(|o| o.fused)
}
