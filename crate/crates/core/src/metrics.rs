//! Fusion quality metrics: mutual information, fusion VIF and PSNR.
//!
//! All metrics work on grayscale. Multi-source aggregation: MI sums over
//! sources, VIF averages per-source fidelity, PSNR averages per-source MSE
//! before taking the logarithm.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{to_grayscale, PlanarImage, LUMA_WEIGHTS};
use crate::io::quantize;
use crate::par;

pub const HISTOGRAM_BINS: usize = 256;
pub const PSNR_CAP_DB: f64 = 99.0;
pub const VIF_SCALES: usize = 4;
/// Visual noise variance on the 0–255 scale.
pub const VIF_NOISE_VARIANCE: f64 = 2.0;
pub const VIF_WINDOW_SIGMA: f64 = 2.0;
pub const VIF_WINDOW_SUPPORT: usize = 11;
pub const VIF_MIN_SIZE: usize = 32;

fn gray(img: &PlanarImage) -> Result<PlanarImage> {
    to_grayscale(img)
}

fn check_sources(fused: &PlanarImage, sources: &[&PlanarImage]) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::EmptyInput);
    }
    for s in sources {
        fused.check_same_size(s, "metric source")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mutual information

fn levels(img: &PlanarImage) -> Result<Vec<u8>> {
    Ok(gray(img)?.data().iter().map(|&v| quantize(v, 255) as u8).collect())
}

/// Shannon entropy of the 8-bit quantized grayscale image, in bits.
pub fn entropy(img: &PlanarImage) -> Result<f64> {
    let q = levels(img)?;
    let mut hist = [0u64; HISTOGRAM_BINS];
    for &v in &q {
        hist[v as usize] += 1;
    }
    let n = q.len() as f64;
    Ok(hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

/// MI of one pair from a 256×256 joint histogram, in bits.
pub fn mutual_information_pair(a: &PlanarImage, b: &PlanarImage) -> Result<f64> {
    a.check_same_size(b, "mutual information")?;
    let (qa, qb) = (levels(a)?, levels(b)?);
    let mut joint = vec![0u64; HISTOGRAM_BINS * HISTOGRAM_BINS];
    let mut ha = [0u64; HISTOGRAM_BINS];
    let mut hb = [0u64; HISTOGRAM_BINS];
    for (&x, &y) in qa.iter().zip(&qb) {
        joint[x as usize * HISTOGRAM_BINS + y as usize] += 1;
        ha[x as usize] += 1;
        hb[y as usize] += 1;
    }
    let n = qa.len() as f64;
    let mut mi = 0.0;
    for (i, &c) in joint.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let pxy = c as f64 / n;
        let px = ha[i / HISTOGRAM_BINS] as f64 / n;
        let py = hb[i % HISTOGRAM_BINS] as f64 / n;
        mi += pxy * (pxy / (px * py)).log2();
    }
    Ok(mi.max(0.0))
}

pub fn mutual_information(fused: &PlanarImage, sources: &[&PlanarImage]) -> Result<f64> {
    check_sources(fused, sources)?;
    par::map(sources, |s| mutual_information_pair(fused, s))
        .into_iter()
        .sum()
}

// ---------------------------------------------------------------------------
// Visual information fidelity

/// Window support and standard deviation at 0-based scale `s`.
pub fn vif_window(scale: usize) -> (usize, f64) {
    let support = ((VIF_WINDOW_SUPPORT >> scale) | 1).max(3);
    let sigma = (VIF_WINDOW_SIGMA / (1u32 << scale) as f64).max(0.5);
    (support, sigma)
}

fn gaussian_taps(support: usize, sigma: f64) -> Vec<f64> {
    let r = (support / 2) as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Half-sample symmetric reflection into `0..n`.
pub(crate) fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Same-size separable filtering with symmetric boundary.
fn filter_separable(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * row[reflect(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[reflect(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

fn decimate(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (dw, dh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(dw * dh);
    for y in (0..h).step_by(2) {
        for x in (0..w).step_by(2) {
            out.push(src[y * w + x]);
        }
    }
    (out, dw, dh)
}

/// Information (numerator, denominator) sums of one scale.
fn vif_scale_terms(reference: &[f64], distorted: &[f64], w: usize, h: usize, taps: &[f64]) -> (f64, f64) {
    let mu1 = filter_separable(reference, w, h, taps);
    let mu2 = filter_separable(distorted, w, h, taps);
    let rr: Vec<f64> = reference.iter().map(|v| v * v).collect();
    let dd: Vec<f64> = distorted.iter().map(|v| v * v).collect();
    let rd: Vec<f64> = reference.iter().zip(distorted).map(|(a, b)| a * b).collect();
    let e_rr = filter_separable(&rr, w, h, taps);
    let e_dd = filter_separable(&dd, w, h, taps);
    let e_rd = filter_separable(&rd, w, h, taps);

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..w * h {
        let (g, sv, s1) = vif_local(
            e_rr[i] - mu1[i] * mu1[i],
            e_dd[i] - mu2[i] * mu2[i],
            e_rd[i] - mu1[i] * mu2[i],
        );
        num += (1.0 + g * g * s1 / (sv + VIF_NOISE_VARIANCE)).log2();
        den += (1.0 + s1 / VIF_NOISE_VARIANCE).log2();
    }
    (num, den)
}

/// Gain, distortion variance and source variance of the local channel
/// model, with the usual conditioning of degenerate windows.
pub(crate) fn vif_local(s1: f64, s2: f64, s12: f64) -> (f64, f64, f64) {
    const TINY: f64 = 1e-10;
    let mut s1 = s1.max(0.0);
    let s2 = s2.max(0.0);
    let mut g = s12 / (s1 + TINY);
    let mut sv = s2 - g * s12;
    if s1 < TINY {
        g = 0.0;
        sv = s2;
        s1 = 0.0;
    }
    if s2 < TINY {
        g = 0.0;
        sv = 0.0;
    }
    if g < 0.0 {
        sv = s2;
        g = 0.0;
    }
    (g, sv.max(TINY), s1)
}

/// Fidelity of `distorted` with respect to `reference`, both 0–255
/// grayscale: per-scale information ratios averaged over scales that carry
/// reference information. Not clamped to 1.
pub fn vif_pair(reference: &PlanarImage, distorted: &PlanarImage) -> Result<f64> {
    reference.check_same_size(distorted, "vif")?;
    let (mut w, mut h) = (reference.width(), reference.height());
    if w < VIF_MIN_SIZE || h < VIF_MIN_SIZE {
        return Err(Error::TooSmall { width: w, height: h });
    }
    let mut r: Vec<f64> = gray(reference)?.data().iter().map(|v| v * 255.0).collect();
    let mut d: Vec<f64> = gray(distorted)?.data().iter().map(|v| v * 255.0).collect();
    let mut ratios = Vec::with_capacity(VIF_SCALES);
    for s in 0..VIF_SCALES {
        let (support, sigma) = vif_window(s);
        let taps = gaussian_taps(support, sigma);
        if s > 0 {
            let (r2, nw, nh) = decimate(&filter_separable(&r, w, h, &taps), w, h);
            let (d2, _, _) = decimate(&filter_separable(&d, w, h, &taps), w, h);
            (r, d, w, h) = (r2, d2, nw, nh);
        }
        let (num, den) = vif_scale_terms(&r, &d, w, h, &taps);
        if den > 0.0 {
            ratios.push(num / den);
        }
    }
    if ratios.is_empty() {
        return Ok(0.0);
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

pub fn vif(fused: &PlanarImage, sources: &[&PlanarImage]) -> Result<f64> {
    check_sources(fused, sources)?;
    let per = par::map(sources, |s| vif_pair(s, fused))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

// ---------------------------------------------------------------------------
// PSNR

/// Mean squared grayscale difference on the `[0, 1]` scale.
pub fn mse(a: &PlanarImage, b: &PlanarImage) -> Result<f64> {
    a.check_same_size(b, "mse")?;
    let (ga, gb) = (gray(a)?, gray(b)?);
    let sum: f64 = ga.data().iter().zip(gb.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / ga.data().len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(fused: &PlanarImage, sources: &[&PlanarImage]) -> Result<f64> {
    check_sources(fused, sources)?;
    let mut total = 0.0;
    for s in sources {
        total += mse(fused, s)?;
    }
    Ok(psnr_from_mse(total / sources.len() as f64))
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceMetrics {
    pub source: String,
    pub mi: f64,
    pub vif: f64,
    pub mse: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricParameters {
    pub grayscale_weights: [f64; 3],
    pub histogram_bins: usize,
    pub mi_log_base: f64,
    pub mi_aggregation: &'static str,
    pub vif_scales: usize,
    pub vif_window_support: Vec<usize>,
    pub vif_window_sigma: Vec<f64>,
    pub vif_noise_variance: f64,
    pub vif_boundary: &'static str,
    pub vif_aggregation: &'static str,
    pub psnr_peak: f64,
    pub psnr_cap_db: f64,
    pub psnr_aggregation: &'static str,
}

impl Default for MetricParameters {
    fn default() -> Self {
        let windows: Vec<(usize, f64)> = (0..VIF_SCALES).map(vif_window).collect();
        Self {
            grayscale_weights: LUMA_WEIGHTS,
            histogram_bins: HISTOGRAM_BINS,
            mi_log_base: 2.0,
            mi_aggregation: "sum over sources",
            vif_scales: VIF_SCALES,
            vif_window_support: windows.iter().map(|w| w.0).collect(),
            vif_window_sigma: windows.iter().map(|w| w.1).collect(),
            vif_noise_variance: VIF_NOISE_VARIANCE,
            vif_boundary: "symmetric",
            vif_aggregation: "mean over scales, then mean over sources",
            psnr_peak: 1.0,
            psnr_cap_db: PSNR_CAP_DB,
            psnr_aggregation: "mean of per-source MSE, then 10*log10(1/MSE)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mi: f64,
    pub vif: f64,
    pub psnr: f64,
    pub per_source: Vec<SourceMetrics>,
    pub parameters: MetricParameters,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct MetricJson {
    name: &'static str,
    unit: &'static str,
    aggregate: f64,
    per_source: Vec<SourceValue>,
}

#[derive(Serialize)]
struct SourceValue {
    source: String,
    value: f64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    metrics: Vec<MetricJson>,
    parameters: &'a MetricParameters,
}

impl MetricsReport {
    pub fn to_json(&self) -> serde_json::Value {
        let entry = |name, unit, aggregate, f: &dyn Fn(&SourceMetrics) -> f64| MetricJson {
            name,
            unit,
            aggregate,
            per_source: self
                .per_source
                .iter()
                .map(|s| SourceValue {
                    source: s.source.clone(),
                    value: f(s),
                })
                .collect(),
        };
        let report = ReportJson {
            metrics: vec![
                entry("MI", "bits", self.mi, &|s| s.mi),
                entry("VIF", "ratio", self.vif, &|s| s.vif),
                entry("PSNR", "dB", self.psnr, &|s| s.psnr),
            ],
            parameters: &self.parameters,
        };
        serde_json::to_value(report).expect("report is always serializable")
    }
}

/// Evaluates all three metrics of `fused` against named sources.
pub fn evaluate(fused: &PlanarImage, sources: &[(&str, &PlanarImage)]) -> Result<MetricsReport> {
    let imgs: Vec<&PlanarImage> = sources.iter().map(|s| s.1).collect();
    check_sources(fused, &imgs)?;
    let per_source = par::map(sources, |(name, src)| -> Result<SourceMetrics> {
        let mse = mse(fused, src)?;
        Ok(SourceMetrics {
            source: name.to_string(),
            mi: mutual_information_pair(fused, src)?,
            vif: vif_pair(src, fused)?,
            mse,
            psnr: psnr_from_mse(mse),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = per_source.len() as f64;
    Ok(MetricsReport {
        mi: per_source.iter().map(|s| s.mi).sum(),
        vif: per_source.iter().map(|s| s.vif).sum::<f64>() / n,
        psnr: psnr_from_mse(per_source.iter().map(|s| s.mse).sum::<f64>() / n),
        per_source,
        parameters: MetricParameters::default(),
    })
}
