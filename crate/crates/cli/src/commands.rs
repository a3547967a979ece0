//! Execution of the job modes plus the auxiliary commands.

use std::path::{Path, PathBuf};

use aerofuse::aos::{self, scene, FocalPlane, PoseRecord, VirtualCamera};
use aerofuse::cnn::{self, VggWeights};
use aerofuse::fusion::{self, Ablation, Channel, FusionJob, FusionOutput};
use aerofuse::image::{Acquisition, ChannelDescriptor, Modality, PlanarImage};
use aerofuse::io::{self, BitDepth};
use aerofuse::metrics;
use anyhow::Context;
use serde_json::{json, Value};

use crate::job::{usage, FeatureSpec, JobSpec, Mode};

pub fn run(spec: &JobSpec) -> anyhow::Result<Value> {
    let mode = *spec.require(&spec.mode, "--mode")?;
    spec.check_inputs()?;
    match mode {
        Mode::Integrate => integrate(spec),
        Mode::Fuse => fuse(spec),
        Mode::Evaluate => evaluate(spec),
        Mode::Ablate => ablate(spec),
    }
}

fn depth_for(path: &Path) -> BitDepth {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("tif" | "tiff") => BitDepth::Sixteen,
        _ => BitDepth::Eight,
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(aerofuse::Error::from)
            .map_err(|e| e.at(dir))?;
    }
    Ok(())
}

fn save(img: &PlanarImage, path: &Path) -> anyhow::Result<()> {
    ensure_parent(path)?;
    io::save(img, path, depth_for(path))?;
    Ok(())
}

fn write_json(value: &Value, path: &Path) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")
        .map_err(aerofuse::Error::from)
        .map_err(|e| e.at(path))?;
    Ok(())
}

/// `dir/stem.tag.ext` next to `path`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn integrate(spec: &JobSpec) -> anyhow::Result<Value> {
    let poses = spec.require(&spec.poses, "--poses")?;
    let out = spec.require(&spec.out, "--out")?;
    let frames = aos::load_frames(poses)?;
    let plane = match &spec.plane {
        Some(p) => aos::load_focal_plane(p)?,
        None => FocalPlane::horizontal(0.0),
    };
    let grid = VirtualCamera::centroid(&frames)?;
    let integral = aos::integrate_with_coverage(&frames, &plane, &grid)?;
    save(&integral.image, out)?;
    let covered = integral.coverage.iter().filter(|&&c| c > 0).count();
    Ok(json!({
        "mode": "integrate",
        "frames": frames.len(),
        "width": grid.width,
        "height": grid.height,
        "coveredFraction": covered as f64 / integral.coverage.len() as f64,
        "out": out,
    }))
}

fn load_channels(spec: &JobSpec) -> anyhow::Result<(Channel, Vec<Channel>)> {
    let basis_path = spec.require(&spec.basis, "--basis")?;
    let basis_img = io::load(basis_path)?;
    let modality = if basis_img.planes() == 3 { Modality::Rgb } else { Modality::Other };
    let basis = Channel {
        name: "basis".into(),
        image: basis_img,
        descriptor: ChannelDescriptor::basis(modality, Acquisition::Single),
    };
    if spec.features.is_empty() {
        return Err(usage("at least one --feature is required"));
    }
    let features = spec
        .features
        .iter()
        .map(load_feature)
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((basis, features))
}

fn load_feature(f: &FeatureSpec) -> anyhow::Result<Channel> {
    let image = io::load(&f.path)?;
    let modality = f.modality.unwrap_or(if image.planes() == 3 { Modality::Rgb } else { Modality::Other });
    let mut descriptor = ChannelDescriptor::feature(modality, f.acquisition.unwrap_or(Acquisition::Single));
    descriptor.color_coded = f.color_coded;
    Ok(Channel {
        name: f.display_name(),
        image,
        descriptor,
    })
}

fn load_weights(spec: &JobSpec, ablation: Ablation) -> anyhow::Result<Option<VggWeights>> {
    if ablation == Ablation::FilterOnly {
        return Ok(None);
    }
    let path = spec.weights.as_ref().ok_or_else(|| {
        usage("CNN weights are required: pass --weights or set AEROFUSE_WEIGHTS (or use --ablation filterOnly)")
    })?;
    Ok(Some(cnn::load_weights(path)?))
}

fn sources<'a>(basis: &'a Channel, features: &'a [Channel]) -> Vec<(&'a str, &'a PlanarImage)> {
    std::iter::once(basis)
        .chain(features)
        .map(|c| (c.name.as_str(), &c.image))
        .collect()
}

fn dump_intermediates(out: &FusionOutput, dir: &Path, float_tiff: bool) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |img: &PlanarImage, name: String, stretch: bool| -> anyhow::Result<()> {
        let path = dir.join(format!("{name}.png"));
        save(&if stretch { img.stretched() } else { img.clamped() }, &path)?;
        written.push(path);
        if float_tiff {
            let raw = dir.join(format!("{name}.tif"));
            io::save_f32_tiff(img, &raw)?;
            written.push(raw);
        }
        Ok(())
    };
    for (i, c) in out.channels.iter().enumerate() {
        let prefix = format!("{i}_{}", c.name);
        if let Some(h) = &c.high_detail {
            put(h, format!("{prefix}_high"), true)?;
        }
        for (l, a) in c.activities.iter().enumerate() {
            put(&a.to_image(), format!("{prefix}_activity{}", l + 1), true)?;
        }
        if let Some(w) = &c.weight {
            put(&w.to_image(), format!("{prefix}_weight"), false)?;
        }
        put(&c.mask, format!("{prefix}_mask"), false)?;
        put(&c.feature_map, format!("{prefix}_feature"), false)?;
    }
    Ok(written)
}

fn fuse(spec: &JobSpec) -> anyhow::Result<Value> {
    let out_path = spec.require(&spec.out, "--out")?;
    let config = spec.fusion_config();
    let (basis, features) = load_channels(spec)?;
    let weights = load_weights(spec, config.ablation)?;
    let job = FusionJob {
        basis,
        features,
        config,
    };
    let out = fusion::fuse_detailed(&job, weights.as_ref())?;
    save(&out.fused, out_path)?;
    let mut summary = json!({ "mode": "fuse", "out": out_path, "ablation": job.config.ablation });

    if let Some(gain) = spec.display_gain {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(usage(format!("--display-gain must be > 0, got {gain}")));
        }
        let display = sibling(out_path, "display");
        save(&out.fused.map(|v| v * gain).clamped(), &display)?;
        summary["display"] = json!(display);
    }
    if let Some(dir) = &spec.dump_intermediates {
        let files = dump_intermediates(&out, dir, spec.float_tiff.unwrap_or(false))?;
        summary["intermediates"] = json!(files);
    }
    let srcs = sources(&job.basis, &job.features);
    let baseline = if spec.baseline.unwrap_or(false) {
        let images: Vec<PlanarImage> = srcs.iter().map(|(_, img)| (*img).clone()).collect();
        let blend = fusion::alpha_blend(&images)?;
        let path = sibling(out_path, "alpha");
        save(&blend, &path)?;
        summary["baselineOut"] = json!(path);
        Some(blend)
    } else {
        None
    };
    if let Some(report_path) = &spec.report {
        let mut report = json!({
            "mode": "fuse",
            "config": job.config,
            "fused": metrics::evaluate(&out.fused, &srcs)?.to_json(),
            "channelSeconds": out.channels.iter().map(|c| json!({"channel": c.name, "seconds": c.elapsed.as_secs_f64()})).collect::<Vec<_>>(),
        });
        if let Some(blend) = &baseline {
            report["alphaBlend"] = metrics::evaluate(blend, &srcs)?.to_json();
        }
        write_json(&report, report_path)?;
        summary["report"] = json!(report_path);
    }
    Ok(summary)
}

fn evaluate(spec: &JobSpec) -> anyhow::Result<Value> {
    let fused_path = spec.require(&spec.fused, "--fused")?;
    let fused = io::load(fused_path)?;
    let (basis, features) = load_channels(spec)?;
    let srcs = sources(&basis, &features);
    let mut report = json!({
        "mode": "evaluate",
        "fused": metrics::evaluate(&fused, &srcs).with_context(|| format!("evaluating {}", fused_path.display()))?.to_json(),
    });
    if spec.baseline.unwrap_or(false) {
        let images: Vec<PlanarImage> = srcs.iter().map(|(_, img)| (*img).clone()).collect();
        report["alphaBlend"] = metrics::evaluate(&fusion::alpha_blend(&images)?, &srcs)?.to_json();
    }
    if let Some(path) = &spec.report {
        write_json(&report, path)?;
    }
    Ok(report)
}

fn ablate(spec: &JobSpec) -> anyhow::Result<Value> {
    let out_path = spec.require(&spec.out, "--out")?;
    let base_config = spec.fusion_config();
    let (basis, features) = load_channels(spec)?;
    let weights = load_weights(spec, Ablation::Full)?;
    let mut variants = Vec::new();
    for (tag, ablation) in [("full", Ablation::Full), ("filterOnly", Ablation::FilterOnly), ("cnnOnly", Ablation::CnnOnly)] {
        let job = FusionJob {
            basis: basis.clone(),
            features: features.clone(),
            config: fusion::FusionConfig {
                ablation,
                ..base_config.clone()
            },
        };
        let out = fusion::fuse_detailed(&job, weights.as_ref())?;
        let path = sibling(out_path, tag);
        save(&out.fused, &path)?;
        if let Some(dir) = &spec.dump_intermediates {
            dump_intermediates(&out, &dir.join(tag), spec.float_tiff.unwrap_or(false))?;
        }
        let srcs = sources(&job.basis, &job.features);
        variants.push(json!({
            "ablation": tag,
            "out": path,
            "maskMeans": out.channels.iter().map(|c| json!({"channel": c.name, "mean": c.mask.mean()})).collect::<Vec<_>>(),
            "metrics": metrics::evaluate(&out.fused, &srcs)?.to_json(),
        }));
    }
    let report = json!({ "mode": "ablate", "variants": variants });
    if let Some(path) = &spec.report {
        write_json(&report, path)?;
    }
    Ok(report)
}

pub fn init_weights(seed: u64, out: &Path) -> anyhow::Result<Value> {
    ensure_parent(out)?;
    cnn::save_weights(&VggWeights::random(seed), out)?;
    Ok(json!({ "weights": out, "seed": seed, "pretrained": false }))
}

/// Writes `count` forest samples (and optionally the thermal frame stack
/// of the first one) below `dir`.
pub fn samples(dir: &Path, count: usize, first_seed: u64, with_stack: bool) -> anyhow::Result<Value> {
    let mut written = Vec::new();
    for i in 0..count {
        let params = scene::ForestParams::with_seed(first_seed + i as u64);
        let sample = scene::forest_sample(&params)?;
        let sub = dir.join(format!("scene{}", i + 1));
        save(&sample.srgb, &sub.join("srgb.png"))?;
        save(&sample.it, &sub.join("it.png"))?;
        save(&sample.irgb, &sub.join("irgb.png"))?;
        write_json(
            &json!({ "target": sample.target, "background": sample.background, "params": params }),
            &sub.join("regions.json"),
        )?;
        written.push(sub);
    }
    let mut summary = json!({ "scenes": written });
    if with_stack {
        let params = scene::ForestParams::with_seed(first_seed);
        let (forest, _) = scene::forest_scene(&params)?;
        let (_, cams) = scene::forest_cameras(&params);
        let stack = dir.join("stack");
        let mut records = Vec::with_capacity(cams.len());
        for (i, cam) in cams.iter().enumerate() {
            let (_, thermal) = forest.render(cam, params.supersample);
            let name = format!("frame{i:03}.png");
            save(&thermal, &stack.join(&name))?;
            records.push(PoseRecord::from_camera(name, cam));
        }
        write_json(&serde_json::to_value(&records)?, &stack.join("poses.json"))?;
        write_json(
            &json!({ "point": [0.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0] }),
            &stack.join("plane.json"),
        )?;
        summary["stack"] = json!(stack);
    }
    Ok(summary)
}
