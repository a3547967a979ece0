//! Job description shared by the JSON job file and the command-line flags.

use std::path::{Path, PathBuf};

use aerofuse::fusion::{Ablation, FusionConfig};
use aerofuse::image::{Acquisition, Modality};
use anyhow::{bail, Context};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Integrate,
    Fuse,
    Evaluate,
    Ablate,
}

/// One feature channel: a path plus optional descriptor hints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FeatureSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub modality: Option<Modality>,
    #[serde(default)]
    pub acquisition: Option<Acquisition>,
    #[serde(default)]
    pub color_coded: bool,
}

impl FeatureSpec {
    /// `path[:thermal][:colorcode][:rgb][:integral][:single]`.
    pub fn parse_flag(arg: &str) -> anyhow::Result<Self> {
        let mut parts: Vec<&str> = arg.split(':').collect();
        let mut spec = FeatureSpec {
            path: PathBuf::new(),
            name: None,
            modality: None,
            acquisition: None,
            color_coded: false,
        };
        while parts.len() > 1 {
            match *parts.last().unwrap() {
                "thermal" => spec.modality = Some(Modality::Thermal),
                "rgb" => spec.modality = Some(Modality::Rgb),
                "colorcode" => spec.color_coded = true,
                "integral" => spec.acquisition = Some(Acquisition::Integral),
                "single" => spec.acquisition = Some(Acquisition::Single),
                _ => break,
            }
            parts.pop();
        }
        let path = parts.join(":");
        if path.is_empty() {
            bail!(UsageError(format!("feature `{arg}` has no path")));
        }
        spec.path = PathBuf::from(path);
        Ok(spec)
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "feature".into())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum FeatureEntry {
    Flag(String),
    Spec(FeatureSpec),
}

/// A job as read from JSON; every field is optional so flags can fill or
/// override it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct JobSpec {
    pub mode: Option<Mode>,
    pub basis: Option<PathBuf>,
    #[serde(default, deserialize_with = "features_de")]
    pub features: Vec<FeatureSpec>,
    pub fused: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub plane: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub config: Option<FusionConfig>,
    pub lambda: Option<f64>,
    pub ablation: Option<Ablation>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub baseline: Option<bool>,
    pub dump_intermediates: Option<PathBuf>,
    pub float_tiff: Option<bool>,
    pub display_gain: Option<f64>,
}

fn features_de<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<FeatureSpec>, D::Error> {
    let entries = Vec::<FeatureEntry>::deserialize(d)?;
    entries
        .into_iter()
        .map(|e| match e {
            FeatureEntry::Flag(s) => FeatureSpec::parse_flag(&s).map_err(serde::de::Error::custom),
            FeatureEntry::Spec(s) => Ok(s),
        })
        .collect()
}

/// Marks errors caused by the invocation itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl JobSpec {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(aerofuse::Error::from)
            .map_err(|e| e.at(path))?;
        let spec: JobSpec = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("{}: invalid job file: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        Ok(spec.resolved_against(base))
    }

    /// Makes relative paths relative to `base`.
    pub fn resolved_against(mut self, base: &Path) -> Self {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.basis);
        fix(&mut self.fused);
        fix(&mut self.poses);
        fix(&mut self.plane);
        fix(&mut self.weights);
        fix(&mut self.out);
        fix(&mut self.report);
        fix(&mut self.dump_intermediates);
        for f in &mut self.features {
            if f.path.is_relative() {
                f.path = base.join(&f.path);
            }
        }
        self
    }

    /// Fields set in `flags` win.
    pub fn overridden_by(self, flags: JobSpec) -> Self {
        JobSpec {
            mode: flags.mode.or(self.mode),
            basis: flags.basis.or(self.basis),
            features: if flags.features.is_empty() { self.features } else { flags.features },
            fused: flags.fused.or(self.fused),
            poses: flags.poses.or(self.poses),
            plane: flags.plane.or(self.plane),
            weights: flags.weights.or(self.weights),
            config: flags.config.or(self.config),
            lambda: flags.lambda.or(self.lambda),
            ablation: flags.ablation.or(self.ablation),
            out: flags.out.or(self.out),
            report: flags.report.or(self.report),
            baseline: flags.baseline.or(self.baseline),
            dump_intermediates: flags.dump_intermediates.or(self.dump_intermediates),
            float_tiff: flags.float_tiff.or(self.float_tiff),
            display_gain: flags.display_gain.or(self.display_gain),
        }
    }

    /// Fusion settings with the `lambda` and `ablation` shortcuts applied.
    pub fn fusion_config(&self) -> FusionConfig {
        let mut config = self.config.clone().unwrap_or_default();
        if let Some(l) = self.lambda {
            config.lambda = l;
        }
        if let Some(a) = self.ablation {
            config.ablation = a;
        }
        config
    }

    pub fn require<'a, T>(&self, value: &'a Option<T>, flag: &str) -> anyhow::Result<&'a T> {
        value.as_ref().ok_or_else(|| usage(format!("{flag} is required in this mode")))
    }

    /// Checks that every referenced input exists before any work starts.
    pub fn check_inputs(&self) -> anyhow::Result<()> {
        let inputs = [&self.basis, &self.fused, &self.poses, &self.plane]
            .into_iter()
            .flatten()
            .chain(self.features.iter().map(|f| &f.path));
        for path in inputs {
            if !path.exists() {
                return Err(aerofuse::Error::from(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "input file does not exist",
                ))
                .at(path))
                .context("checking job inputs");
            }
        }
        Ok(())
    }
}
