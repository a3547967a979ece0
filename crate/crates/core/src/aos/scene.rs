//! Synthetic layered scenes for exercising the integrator: a textured
//! ground at `z = 0` and flat disc layers above it (canopy, or targets
//! lying on the ground), rendered by supersampled ray casting.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aos::{integrate, CameraFrame, FocalPlane, Intrinsics, Pose, VirtualCamera};
use crate::error::{Error, Result};
use crate::image::PlanarImage;
use crate::par;

/// Color and temperature of whatever a ray hits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub rgb: [f64; 3],
    pub thermal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
    pub surface: Surface,
}

/// Horizontal layer of discs at a fixed height, bucketed on a uniform grid.
/// Later discs are drawn on top of earlier ones.
#[derive(Debug, Clone)]
pub struct DiscLayer {
    height: f64,
    discs: Vec<Disc>,
    origin: [f64; 2],
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl DiscLayer {
    pub fn new(height: f64, discs: Vec<Disc>) -> Self {
        let max_r = discs.iter().map(|d| d.radius).fold(0.0f64, f64::max);
        let cell = (2.0 * max_r).max(1e-3);
        let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
        for d in &discs {
            for a in 0..2 {
                lo[a] = lo[a].min(d.center[a] - d.radius);
                hi[a] = hi[a].max(d.center[a] + d.radius);
            }
        }
        if discs.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let cols = ((hi[0] - lo[0]) / cell).ceil() as usize + 1;
        let rows = ((hi[1] - lo[1]) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, d) in discs.iter().enumerate() {
            let cx0 = ((d.center[0] - d.radius - lo[0]) / cell).floor().max(0.0) as usize;
            let cx1 = (((d.center[0] + d.radius - lo[0]) / cell).floor() as usize).min(cols - 1);
            let cy0 = ((d.center[1] - d.radius - lo[1]) / cell).floor().max(0.0) as usize;
            let cy1 = (((d.center[1] + d.radius - lo[1]) / cell).floor() as usize).min(rows - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    buckets[cy * cols + cx].push(i as u32);
                }
            }
        }
        Self {
            height,
            discs,
            origin: lo,
            cell,
            cols,
            rows,
            buckets,
        }
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn discs(&self) -> &[Disc] {
        &self.discs
    }

    /// Topmost disc covering `(x, y)`.
    pub fn hit(&self, x: f64, y: f64) -> Option<&Surface> {
        let cx = ((x - self.origin[0]) / self.cell).floor();
        let cy = ((y - self.origin[1]) / self.cell).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.cols as f64 || cy >= self.rows as f64 {
            return None;
        }
        self.buckets[cy as usize * self.cols + cx as usize]
            .iter()
            .rev()
            .map(|&i| &self.discs[i as usize])
            .find(|d| {
                let (dx, dy) = (x - d.center[0], y - d.center[1]);
                dx * dx + dy * dy <= d.radius * d.radius
            })
            .map(|d| &d.surface)
    }
}

/// Ground texture sampled bilinearly over a square world patch.
#[derive(Debug, Clone)]
pub struct GroundTexture {
    pub rgb: PlanarImage,
    pub thermal: PlanarImage,
    /// World position of texel `(0, 0)`.
    pub origin: [f64; 2],
    pub texel: f64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub base: Surface,
    pub texture: Option<GroundTexture>,
    /// Sorted top-down on construction.
    layers: Vec<DiscLayer>,
}

impl Scene {
    pub fn new(base: Surface, texture: Option<GroundTexture>, mut layers: Vec<DiscLayer>) -> Self {
        layers.sort_by(|a, b| b.height.total_cmp(&a.height));
        Self { base, texture, layers }
    }

    pub fn layers(&self) -> &[DiscLayer] {
        &self.layers
    }

    fn ground(&self, x: f64, y: f64) -> Surface {
        let Some(t) = &self.texture else {
            return self.base;
        };
        let (w, h) = (t.rgb.width(), t.rgb.height());
        let u = (x - t.origin[0]) / t.texel;
        let v = (y - t.origin[1]) / t.texel;
        if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
            return self.base;
        }
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let sample = |img: &PlanarImage, p: usize| {
            let top = img.get(x0, y0, p) * (1.0 - fx) + img.get(x1, y0, p) * fx;
            let bot = img.get(x0, y1, p) * (1.0 - fx) + img.get(x1, y1, p) * fx;
            top * (1.0 - fy) + bot * fy
        };
        Surface {
            rgb: [sample(&t.rgb, 0), sample(&t.rgb, 1), sample(&t.rgb, 2)],
            thermal: sample(&t.thermal, 0),
        }
    }

    /// First surface hit by the ray from `origin` along `dir`.
    pub fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Surface> {
        if dir.z == 0.0 {
            return None;
        }
        for layer in &self.layers {
            let t = (layer.height - origin.z) / dir.z;
            if t > 0.0 {
                let p = origin + dir * t;
                if let Some(s) = layer.hit(p.x, p.y) {
                    return Some(*s);
                }
            }
        }
        let t = -origin.z / dir.z;
        (t > 0.0).then(|| {
            let p = origin + dir * t;
            self.ground(p.x, p.y)
        })
    }

    /// RGB and thermal views through `camera`, averaging `supersample²`
    /// rays per pixel.
    pub fn render(&self, camera: &VirtualCamera, supersample: usize) -> (PlanarImage, PlanarImage) {
        let ss = supersample.max(1);
        let (w, h) = (camera.width, camera.height);
        let to_world = camera.pose.rotation.transpose() * camera.intrinsics.inverse();
        let origin = camera.pose.position;
        let rows = par::map_range(h, |y| {
            let mut row = vec![[0.0f64; 4]; w];
            for (x, px) in row.iter_mut().enumerate() {
                for sy in 0..ss {
                    for sx in 0..ss {
                        let u = x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                        let v = y as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                        let dir = to_world * Vector3::new(u, v, 1.0);
                        let s = self.trace(&origin, &dir).unwrap_or(self.base);
                        px[0] += s.rgb[0];
                        px[1] += s.rgb[1];
                        px[2] += s.rgb[2];
                        px[3] += s.thermal;
                    }
                }
            }
            row
        });
        let n = (ss * ss) as f64;
        let plane = w * h;
        let mut rgb = vec![0.0; 3 * plane];
        let mut thermal = vec![0.0; plane];
        for (y, row) in rows.iter().enumerate() {
            for (x, px) in row.iter().enumerate() {
                let i = y * w + x;
                for c in 0..3 {
                    rgb[c * plane + i] = (px[c] / n).clamp(0.0, 1.0);
                }
                thermal[i] = (px[3] / n).clamp(0.0, 1.0);
            }
        }
        (
            PlanarImage::from_raw_unchecked(w, h, 3, rgb),
            PlanarImage::from_raw_unchecked(w, h, 1, thermal),
        )
    }
}

/// Nadir cameras on a regular `n × n` grid spanning `aperture` meters,
/// centered on `(center.x, center.y)` at height `center.z`.
pub fn camera_grid(center: Vector3<f64>, aperture: f64, n: usize, width: usize, height: usize, focal: f64) -> Vec<VirtualCamera> {
    let intrinsics = Intrinsics {
        fx: focal,
        fy: focal,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
    };
    let step = if n > 1 { aperture / (n - 1) as f64 } else { 0.0 };
    let half = aperture / 2.0;
    let mut cams = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let offset = if n > 1 {
                Vector3::new(i as f64 * step - half, j as f64 * step - half, 0.0)
            } else {
                Vector3::zeros()
            };
            cams.push(VirtualCamera {
                width,
                height,
                pose: Pose::nadir(center + offset),
                intrinsics,
            });
        }
    }
    cams
}

/// Pixel position of a ground point in a nadir camera.
pub fn project_ground_point(camera: &VirtualCamera, x: f64, y: f64) -> (f64, f64) {
    let p = camera.pose.rotation * (Vector3::new(x, y, 0.0) - camera.pose.position);
    let k = &camera.intrinsics;
    (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)
}

/// Rendered single images of a scene from every camera, as frames.
pub fn capture(scene: &Scene, cameras: &[VirtualCamera], supersample: usize) -> Result<(Vec<CameraFrame>, Vec<CameraFrame>)> {
    let mut rgb = Vec::with_capacity(cameras.len());
    let mut thermal = Vec::with_capacity(cameras.len());
    for cam in cameras {
        let (r, t) = scene.render(cam, supersample);
        rgb.push(CameraFrame::new(r, cam.pose, cam.intrinsics)?);
        thermal.push(CameraFrame::new(t, cam.pose, cam.intrinsics)?);
    }
    Ok((rgb, thermal))
}

/// Pixel box `[x0, y0, x1, y1)`.
pub type PixelBox = [usize; 4];

/// Parameters of a generated forest scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ForestParams {
    pub seed: u64,
    pub size: usize,
    pub focal: f64,
    pub altitude: f64,
    pub aperture: f64,
    pub cameras_per_side: usize,
    /// Canopy layer heights above ground.
    pub canopy_heights: [f64; 3],
    /// Fraction of the ground hidden by the canopy from a single view.
    pub canopy_cover: f64,
    pub people: usize,
    pub supersample: usize,
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            size: 256,
            focal: 300.0,
            altitude: 35.0,
            aperture: 12.0,
            cameras_per_side: 7,
            canopy_heights: [9.0, 12.0, 15.0],
            canopy_cover: 0.6,
            people: 2,
            supersample: 2,
        }
    }
}

/// A generated forest sample: center single RGB image, integral thermal
/// and integral RGB, with a target box around one person and a box of
/// plain forest floor.
#[derive(Debug, Clone)]
pub struct ForestSample {
    pub params: ForestParams,
    pub srgb: PlanarImage,
    pub it: PlanarImage,
    pub irgb: PlanarImage,
    pub target: PixelBox,
    pub background: PixelBox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Regions {
    pub target: PixelBox,
    pub background: PixelBox,
}

fn value_noise(rng: &mut ChaCha8Rng, n: usize, octaves: &[(usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let mut total = 0.0;
    for &(cells, amp) in octaves {
        let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.random::<f64>()).collect();
        for y in 0..n {
            for x in 0..n {
                let u = x as f64 * cells as f64 / n as f64;
                let v = y as f64 * cells as f64 / n as f64;
                let (i, j) = (u.floor() as usize, v.floor() as usize);
                let (fu, fv) = (u - i as f64, v - j as f64);
                let (su, sv) = (fu * fu * (3.0 - 2.0 * fu), fv * fv * (3.0 - 2.0 * fv));
                let at = |a: usize, b: usize| lattice[b * (cells + 1) + a];
                let top = at(i, j) * (1.0 - su) + at(i + 1, j) * su;
                let bot = at(i, j + 1) * (1.0 - su) + at(i + 1, j + 1) * su;
                out[y * n + x] += amp * (top * (1.0 - sv) + bot * sv);
            }
        }
        total += amp;
    }
    out.iter_mut().for_each(|v| *v /= total);
    out
}

const CLOTHING: [[f64; 3]; 4] = [[0.85, 0.15, 0.10], [0.15, 0.35, 0.90], [0.95, 0.85, 0.20], [0.90, 0.45, 0.10]];

/// Forest scene and the ground positions of the people in it.
pub fn forest_scene(params: &ForestParams) -> Result<(Scene, Vec<[f64; 2]>)> {
    if params.size < 32 || params.cameras_per_side == 0 || params.people == 0 {
        return Err(Error::InvalidParameter("forest sample needs size ≥ 32, cameras and people".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.size;
    let ground_half = (n as f64 / 2.0) * params.altitude / params.focal;

    // forest floor
    let tex_n = 256;
    let extent = 2.0 * (ground_half + params.aperture);
    let texel = extent / (tex_n - 1) as f64;
    let soil = value_noise(&mut rng, tex_n, &[(6, 1.0), (24, 0.6), (96, 0.35)]);
    let moss = value_noise(&mut rng, tex_n, &[(10, 1.0), (40, 0.5)]);
    let mut rgb = vec![0.0; 3 * tex_n * tex_n];
    let mut thermal = vec![0.0; tex_n * tex_n];
    for i in 0..tex_n * tex_n {
        let (s, m) = (soil[i], moss[i]);
        let g = (m - 0.35).clamp(0.0, 0.4) / 0.4;
        rgb[i] = 0.25 + 0.25 * s - 0.08 * g;
        rgb[tex_n * tex_n + i] = 0.20 + 0.18 * s + 0.12 * g;
        rgb[2 * tex_n * tex_n + i] = 0.12 + 0.12 * s;
        thermal[i] = 0.22 + 0.12 * s;
    }
    let texture = GroundTexture {
        rgb: PlanarImage::new(tex_n, tex_n, 3, rgb)?,
        thermal: PlanarImage::new(tex_n, tex_n, 1, thermal)?,
        origin: [-extent / 2.0, -extent / 2.0],
        texel,
    };

    // people lying on the ground, as chains of three discs
    let spread = 0.6 * ground_half;
    let mut people = Vec::with_capacity(params.people);
    let mut body_discs = Vec::new();
    while people.len() < params.people {
        let p = [rng.random_range(-spread..spread), rng.random_range(-spread..spread)];
        if people.iter().any(|q: &[f64; 2]| (q[0] - p[0]).hypot(q[1] - p[1]) < 4.0) {
            continue;
        }
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let color = CLOTHING[people.len() % CLOTHING.len()];
        for k in [-1.0, 0.0, 1.0] {
            body_discs.push(Disc {
                center: [p[0] + 0.55 * k * angle.cos(), p[1] + 0.55 * k * angle.sin()],
                radius: 0.3,
                surface: Surface {
                    rgb: color,
                    thermal: 0.95,
                },
            });
        }
        people.push(p);
    }

    // canopy: random leaf clusters on several layers
    let canopy_half = ground_half + params.aperture;
    let layers_n = params.canopy_heights.len() as f64;
    let per_layer_cover = 1.0 - (1.0 - params.canopy_cover).powf(1.0 / layers_n);
    let (rmin, rmax) = (0.5f64, 1.6f64);
    let mean_r2 = (rmax.powi(3) - rmin.powi(3)) / (3.0 * (rmax - rmin));
    let density = -(1.0 - per_layer_cover).ln() / (std::f64::consts::PI * mean_r2);
    let count = (density * (2.0 * canopy_half).powi(2)).round() as usize;
    let mut layers = vec![DiscLayer::new(0.0, body_discs)];
    for &hgt in &params.canopy_heights {
        let discs = (0..count)
            .map(|_| {
                let shade = rng.random_range(0.0..1.0);
                Disc {
                    center: [rng.random_range(-canopy_half..canopy_half), rng.random_range(-canopy_half..canopy_half)],
                    radius: rng.random_range(rmin..rmax),
                    surface: Surface {
                        rgb: [0.10 + 0.12 * shade, 0.25 + 0.30 * shade, 0.06 + 0.10 * shade],
                        thermal: 0.40 + 0.15 * shade,
                    },
                }
            })
            .collect();
        layers.push(DiscLayer::new(hgt, discs));
    }
    let base = Surface {
        rgb: [0.3, 0.28, 0.18],
        thermal: 0.28,
    };
    Ok((Scene::new(base, Some(texture), layers), people))
}

/// Output grid (center nadir view) and the flight grid, whose views are
/// widened so every one of them covers the output footprint.
pub fn forest_cameras(params: &ForestParams) -> (VirtualCamera, Vec<VirtualCamera>) {
    let center = Vector3::new(0.0, 0.0, params.altitude);
    let n = params.size;
    let grid = camera_grid(center, 0.0, 1, n, n, params.focal)[0];
    let margin = (params.aperture / 2.0 * params.focal / params.altitude).ceil() as usize;
    let src_n = n + 2 * margin + 2;
    let cams = camera_grid(center, params.aperture, params.cameras_per_side, src_n, src_n, params.focal);
    (grid, cams)
}

/// Renders and integrates one forest sample.
pub fn forest_sample(params: &ForestParams) -> Result<ForestSample> {
    let (scene, people) = forest_scene(params)?;
    let (grid, cams) = forest_cameras(params);
    let (rgb_frames, thermal_frames) = capture(&scene, &cams, params.supersample)?;
    let ground = FocalPlane::horizontal(0.0);
    let irgb = integrate(&rgb_frames, &ground, &grid)?;
    let it = integrate(&thermal_frames, &ground, &grid)?.stretched();
    let (srgb, _) = scene.render(&grid, params.supersample);

    let n = params.size;
    let ground_half = (n as f64 / 2.0) * params.altitude / params.focal;
    Ok(ForestSample {
        params: *params,
        srgb,
        it,
        irgb,
        target: person_box(&grid, people[0], n),
        background: floor_box(&grid, &people, n, ground_half),
    })
}

fn person_box(grid: &VirtualCamera, p: [f64; 2], n: usize) -> PixelBox {
    let reach = 0.3;
    let (x0, y0) = project_ground_point(grid, p[0] - reach, p[1] + reach);
    let (x1, y1) = project_ground_point(grid, p[0] + reach, p[1] - reach);
    [
        x0.floor().max(0.0) as usize,
        y0.floor().max(0.0) as usize,
        (x1.ceil() as usize + 1).min(n),
        (y1.ceil() as usize + 1).min(n),
    ]
}

/// Largest-clearance box of a quarter of the image width, away from people.
fn floor_box(grid: &VirtualCamera, people: &[[f64; 2]], n: usize, ground_half: f64) -> PixelBox {
    let side = n / 4;
    let mut best = (f64::MIN, [0, 0, side, side]);
    let step = n / 16;
    for y in (step..n - side - step + 1).step_by(step) {
        for x in (step..n - side - step + 1).step_by(step) {
            let cx = x as f64 + side as f64 / 2.0;
            let cy = y as f64 + side as f64 / 2.0;
            let wx = (cx - grid.intrinsics.cx) / grid.intrinsics.fx * grid.pose.position.z;
            let wy = -(cy - grid.intrinsics.cy) / grid.intrinsics.fy * grid.pose.position.z;
            let clearance = people
                .iter()
                .map(|p| (p[0] - wx).hypot(p[1] - wy))
                .fold(f64::MAX, f64::min)
                .min(2.0 * ground_half);
            if clearance > best.0 {
                best = (clearance, [x, y, x + side, y + side]);
            }
        }
    }
    best.1
}
