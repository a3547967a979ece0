#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use aerofuse::aos::scene::{self, Disc, DiscLayer, Scene, Surface};
use aerofuse::aos::{integrate, FocalPlane, VirtualCamera};
use aerofuse::cnn::{load_weights, VggWeights};
use aerofuse::fusion::{Channel, FusionConfig, FusionJob};
use aerofuse::image::{Acquisition, ChannelDescriptor, Modality};
use aerofuse::PlanarImage;
use nalgebra::Vector3;
use serde::Deserialize;

pub fn samples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples")
}

pub fn fixture_weights() -> VggWeights {
    load_weights(samples_dir().join("vgg19-shallow-random-seed42.vggw")).expect("weights fixture")
}

#[derive(Debug, Deserialize)]
pub struct Regions {
    pub target: [usize; 4],
    pub background: [usize; 4],
}

pub struct Sample {
    pub name: String,
    pub srgb: PlanarImage,
    pub it: PlanarImage,
    pub irgb: PlanarImage,
    pub regions: Regions,
}

pub fn load_samples() -> Vec<Sample> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(samples_dir())
        .expect("samples directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("regions.json").exists())
        .collect();
    dirs.sort();
    dirs.into_iter()
        .map(|d| Sample {
            name: d.file_name().unwrap().to_string_lossy().into_owned(),
            srgb: aerofuse::io::load(d.join("srgb.png")).unwrap(),
            it: aerofuse::io::load(d.join("it.png")).unwrap(),
            irgb: aerofuse::io::load(d.join("irgb.png")).unwrap(),
            regions: serde_json::from_str(&std::fs::read_to_string(d.join("regions.json")).unwrap()).unwrap(),
        })
        .collect()
}

impl Sample {
    pub fn job(&self, config: FusionConfig) -> FusionJob {
        FusionJob {
            basis: Channel {
                name: "SRGB".into(),
                image: self.srgb.clone(),
                descriptor: ChannelDescriptor::basis(Modality::Rgb, Acquisition::Single),
            },
            features: vec![
                Channel {
                    name: "IT".into(),
                    image: self.it.clone(),
                    descriptor: ChannelDescriptor::feature(Modality::Thermal, Acquisition::Integral),
                },
                Channel {
                    name: "IRGB".into(),
                    image: self.irgb.clone(),
                    descriptor: ChannelDescriptor::feature(Modality::Rgb, Acquisition::Integral),
                },
            ],
            config,
        }
    }

    pub fn sources(&self) -> Vec<(&str, &PlanarImage)> {
        vec![("SRGB", &self.srgb), ("IT", &self.it), ("IRGB", &self.irgb)]
    }
}

/// Mean over all planes inside the box `[x0, y0, x1, y1)`.
pub fn region_mean(img: &PlanarImage, b: [usize; 4]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in 0..img.planes() {
        for y in b[1]..b[3] {
            for x in b[0]..b[2] {
                sum += img.get(x, y, p);
                n += 1;
            }
        }
    }
    sum / n as f64
}

/// Two-layer scene: black ground with a small bright target, and one
/// bright occluder disc `offset` meters above the ground.
pub struct SpreadScene {
    pub altitude: f64,
    pub offset: f64,
    pub focal: f64,
    pub size: usize,
    pub cameras_per_side: usize,
    pub occluder: [f64; 2],
    pub occluder_radius: f64,
    pub target: [f64; 2],
    pub target_radius: f64,
}

impl Default for SpreadScene {
    fn default() -> Self {
        let (altitude, focal, size) = (35.0, 200.0, 160);
        let c = (size as f64 - 1.0) / 2.0;
        // put the target on a pixel center
        let target_x = (114.0 - c) * altitude / focal;
        let target_y = -(90.0 - c) * altitude / focal;
        Self {
            altitude,
            offset: 10.0,
            focal,
            size,
            cameras_per_side: 12,
            occluder: [-4.0, 0.0],
            occluder_radius: 0.5,
            target: [target_x, target_y],
            target_radius: 0.05,
        }
    }
}

impl SpreadScene {
    pub fn scene(&self) -> Scene {
        let bright = Surface { rgb: [1.0; 3], thermal: 1.0 };
        let black = Surface { rgb: [0.0; 3], thermal: 0.0 };
        Scene::new(
            black,
            None,
            vec![
                DiscLayer::new(self.offset, vec![Disc { center: self.occluder, radius: self.occluder_radius, surface: bright }]),
                DiscLayer::new(0.0, vec![Disc { center: self.target, radius: self.target_radius, surface: bright }]),
            ],
        )
    }

    pub fn grid(&self) -> VirtualCamera {
        scene::camera_grid(Vector3::new(0.0, 0.0, self.altitude), 0.0, 1, self.size, self.size, self.focal)[0]
    }

    /// Thermal integral on the ground plane for aperture `a`.
    pub fn integral(&self, aperture: f64) -> PlanarImage {
        let margin = (aperture / 2.0 * self.focal / self.altitude).ceil() as usize + 2;
        let n = self.size + 2 * margin;
        let cams = scene::camera_grid(
            Vector3::new(0.0, 0.0, self.altitude),
            aperture,
            self.cameras_per_side,
            n,
            n,
            self.focal,
        );
        let (_, thermal) = scene::capture(&self.scene(), &cams, 2).unwrap();
        integrate(&thermal, &FocalPlane::horizontal(0.0), &self.grid()).unwrap()
    }

    /// Output pixel nearest to where the center view sees `p` on the ground.
    pub fn pixel_of_ground(&self, p: [f64; 2]) -> (usize, usize) {
        let (x, y) = scene::project_ground_point(&self.grid(), p[0], p[1]);
        (x.round() as usize, y.round() as usize)
    }

    /// Center of the occluder's footprint on the ground as seen from the
    /// center view.
    pub fn occluder_pixel(&self) -> (usize, usize) {
        let s = self.altitude / (self.altitude - self.offset);
        self.pixel_of_ground([self.occluder[0] * s, self.occluder[1] * s])
    }

    /// Similar-triangles spread in output pixels.
    pub fn predicted_spread_px(&self, aperture: f64) -> f64 {
        let spec = aerofuse::aos::SyntheticApertureSpec {
            aperture_size: aperture,
            occluder_offset: self.offset,
            point_spread: None,
        };
        spec.predicted_point_spread(self.altitude) * self.focal / self.altitude
    }
}
