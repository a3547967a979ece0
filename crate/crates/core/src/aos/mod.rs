//! Airborne optical sectioning: registers pose-annotated single images on
//! a focal plane and averages them into an integral image.
//!
//! Conventions: world coordinates in meters; a pose stores the camera
//! center and the world→camera rotation; camera `z` looks forward, image
//! `x` right, `y` down; pixel `(i, j)` has its center at `(i, j)`.

pub mod scene;

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{to_grayscale, PlanarImage};
use crate::par;

/// Frames accumulated per partial sum before partials are merged in order.
const INTEGRATION_CHUNK: usize = 8;

/// Sub-pixel slack when deciding whether a sample lies inside the source.
const EDGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    /// World → camera.
    pub rotation: Matrix3<f64>,
}

impl Pose {
    /// Camera at `position` looking straight down (−z), image `x` along world
    /// `x` and image `y` along world `−y`.
    pub fn nadir(position: Vector3<f64>) -> Self {
        Self {
            position,
            rotation: Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if !(ortho <= 1e-6 && (det - 1.0).abs() <= 1e-6) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not a proper rotation (orthogonality error {ortho:e}, det {det})"
            )));
        }
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite position".into()));
        }
        Ok(())
    }
}

/// Pose, intrinsics and raster size of a camera without image data; used
/// as the output grid of a projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualCamera {
    pub width: usize,
    pub height: usize,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

impl VirtualCamera {
    pub fn validate(&self) -> Result<()> {
        self.pose.validate()?;
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::InvalidCamera(format!("focal lengths must be > 0, got {} {}", k.fx, k.fy)));
        }
        if !(0.0..self.width as f64).contains(&k.cx) || !(0.0..self.height as f64).contains(&k.cy) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{}",
                k.cx, k.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Mean position, chordal-mean rotation; size and intrinsics of the
    /// first frame.
    pub fn centroid(frames: &[CameraFrame]) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyStack)?;
        let n = frames.len() as f64;
        let position = frames.iter().map(|f| f.pose.position).sum::<Vector3<f64>>() / n;
        let mean = frames.iter().map(|f| f.pose.rotation).sum::<Matrix3<f64>>() / n;
        let svd = mean.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut rotation = u * v_t;
        if rotation.determinant() < 0.0 {
            let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
            rotation = u * fix * v_t;
        }
        Ok(Self {
            width: first.image.width(),
            height: first.image.height(),
            pose: Pose { position, rotation },
            intrinsics: first.intrinsics,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub image: PlanarImage,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

impl CameraFrame {
    pub fn new(image: PlanarImage, pose: Pose, intrinsics: Intrinsics) -> Result<Self> {
        let frame = Self { image, pose, intrinsics };
        frame.camera().validate()?;
        Ok(frame)
    }

    pub fn camera(&self) -> VirtualCamera {
        VirtualCamera {
            width: self.image.width(),
            height: self.image.height(),
            pose: self.pose,
            intrinsics: self.intrinsics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalPlane {
    point: Vector3<f64>,
    normal: Vector3<f64>,
}

impl FocalPlane {
    /// The normal is rescaled to unit length.
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > 1e-12 && norm.is_finite()) || !point.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("focal plane needs a finite non-zero normal".into()));
        }
        Ok(Self {
            point,
            normal: normal / norm,
        })
    }

    /// Horizontal plane at height `z`.
    pub fn horizontal(z: f64) -> Self {
        Self {
            point: Vector3::new(0.0, 0.0, z),
            normal: Vector3::z(),
        }
    }

    pub fn point(&self) -> Vector3<f64> {
        self.point
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }
}

/// Synthetic aperture geometry: aperture size `a`, occluder offset `o`
/// above the focal plane, and the resulting point spread `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticApertureSpec {
    pub aperture_size: f64,
    pub occluder_offset: f64,
    pub point_spread: Option<f64>,
}

impl SyntheticApertureSpec {
    /// Similar-triangles spread `a·o/(h − o)` for a camera at distance `h`
    /// from the focal plane.
    pub fn predicted_point_spread(&self, focal_distance: f64) -> f64 {
        self.aperture_size * self.occluder_offset / (focal_distance - self.occluder_offset)
    }
}

/// Output-pixel → source-pixel homography induced by `plane`.
///
/// For an output ray `d = Rₒᵀ Kₒ⁻¹ p`, the plane point seen by both
/// cameras maps to `K_s R_s [δ I + (Cₒ − C_s) nᵀ] d` with
/// `δ = n·(P − Cₒ)`.
pub fn plane_homography(source: &VirtualCamera, plane: &FocalPlane, output: &VirtualCamera) -> Result<Matrix3<f64>> {
    let n = plane.normal;
    let delta = n.dot(&(plane.point - output.pose.position));
    let m = Matrix3::identity() * delta + (output.pose.position - source.pose.position) * n.transpose();
    let h = source.intrinsics.matrix()
        * source.pose.rotation
        * m
        * output.pose.rotation.transpose()
        * output.intrinsics.inverse();
    let norm = h.norm();
    let det = if norm > 0.0 { (h / norm).determinant() } else { 0.0 };
    if !(det.abs() > 1e-12) {
        return Err(Error::DegenerateHomography { det });
    }
    Ok(h)
}

/// A frame resampled into an output grid; `coverage` is 1 where the
/// source contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub image: PlanarImage,
    pub coverage: Vec<u8>,
}

pub fn project_to_focal_plane(frame: &CameraFrame, plane: &FocalPlane, grid: &VirtualCamera) -> Result<Projection> {
    grid.validate()?;
    let source = frame.camera();
    let h = plane_homography(&source, plane, grid)?;
    // n·d as a linear function of the output pixel
    let ray = grid.pose.rotation.transpose() * grid.intrinsics.inverse();
    let n_ray = plane.normal.transpose() * ray;
    let delta = plane.normal.dot(&(plane.point - grid.pose.position));

    let (ow, oh) = (grid.width, grid.height);
    let (sw, sh) = (frame.image.width(), frame.image.height());
    let planes = frame.image.planes();
    let rows = par::map_range(oh, |y| {
        let mut values = vec![0.0; ow * planes];
        let mut cov = vec![0u8; ow];
        for x in 0..ow {
            let p = Vector3::new(x as f64, y as f64, 1.0);
            let nd = (n_ray * p)[0];
            // plane behind the output camera, or ray parallel to it
            if nd == 0.0 || delta / nd <= 0.0 {
                continue;
            }
            let q = h * p;
            // point behind the source camera
            if q.z / nd <= 0.0 {
                continue;
            }
            let (sx, sy) = (q.x / q.z, q.y / q.z);
            if let Some(sample) = bilinear(&frame.image, sw, sh, sx, sy) {
                for (k, v) in sample.into_iter().enumerate() {
                    values[k * ow + x] = v;
                }
                cov[x] = 1;
            }
        }
        (values, cov)
    });

    let plane_len = ow * oh;
    let mut data = vec![0.0; plane_len * planes];
    let mut coverage = Vec::with_capacity(plane_len);
    for (y, (values, cov)) in rows.into_iter().enumerate() {
        for k in 0..planes {
            data[k * plane_len + y * ow..k * plane_len + (y + 1) * ow].copy_from_slice(&values[k * ow..(k + 1) * ow]);
        }
        coverage.extend(cov);
    }
    Ok(Projection {
        image: PlanarImage::new(ow, oh, planes, data)?,
        coverage,
    })
}

fn bilinear(img: &PlanarImage, w: usize, h: usize, x: f64, y: f64) -> Option<Vec<f64>> {
    let (maxx, maxy) = ((w - 1) as f64, (h - 1) as f64);
    if !(x >= -EDGE_TOLERANCE && x <= maxx + EDGE_TOLERANCE && y >= -EDGE_TOLERANCE && y <= maxy + EDGE_TOLERANCE) {
        return None;
    }
    let (x, y) = (x.clamp(0.0, maxx), y.clamp(0.0, maxy));
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    Some(
        (0..img.planes())
            .map(|p| {
                let pl = img.plane(p);
                let top = pl[y0 * w + x0] * (1.0 - fx) + pl[y0 * w + x1] * fx;
                let bot = pl[y1 * w + x0] * (1.0 - fx) + pl[y1 * w + x1] * fx;
                top * (1.0 - fy) + bot * fy
            })
            .collect(),
    )
}

/// Integral image plus the number of frames that covered each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub image: PlanarImage,
    pub coverage: Vec<u32>,
}

/// Coverage-weighted mean of all projected frames; uncovered pixels are 0.
pub fn integrate(frames: &[CameraFrame], plane: &FocalPlane, grid: &VirtualCamera) -> Result<PlanarImage> {
    integrate_with_coverage(frames, plane, grid).map(|i| i.image)
}

pub fn integrate_with_coverage(frames: &[CameraFrame], plane: &FocalPlane, grid: &VirtualCamera) -> Result<Integral> {
    let first = frames.first().ok_or(Error::EmptyStack)?;
    let planes = first.image.planes();
    if let Some(bad) = frames.iter().find(|f| f.image.planes() != planes) {
        return Err(Error::SizeMismatch(format!(
            "frames mix {} and {} planes",
            planes,
            bad.image.planes()
        )));
    }
    let plane_len = grid.width * grid.height;
    let chunks: Vec<&[CameraFrame]> = frames.chunks(INTEGRATION_CHUNK).collect();
    let partials = par::map(&chunks, |chunk| -> Result<(Vec<f64>, Vec<u32>)> {
        let mut sum = vec![0.0; plane_len * planes];
        let mut count = vec![0u32; plane_len];
        for frame in chunk.iter() {
            let proj = project_to_focal_plane(frame, plane, grid)?;
            for (i, &c) in proj.coverage.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                count[i] += 1;
                for p in 0..planes {
                    sum[p * plane_len + i] += proj.image.data()[p * plane_len + i];
                }
            }
        }
        Ok((sum, count))
    });

    let mut sum = vec![0.0; plane_len * planes];
    let mut count = vec![0u32; plane_len];
    for partial in partials {
        let (s, c) = partial?;
        sum.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        count.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    for p in 0..planes {
        for i in 0..plane_len {
            let c = count[i];
            sum[p * plane_len + i] = if c > 0 { sum[p * plane_len + i] / c as f64 } else { 0.0 };
        }
    }
    Ok(Integral {
        image: PlanarImage::new(grid.width, grid.height, planes, sum)?,
        coverage: count,
    })
}

/// Radius (px) searched around the target location for the blob peak.
pub const BLOB_SEARCH_RADIUS: usize = 8;

/// Full width at half maximum of the bright blob near `target`, measured
/// along image rows and columns; returns the larger, in pixels.
pub fn measure_point_spread(integral: &PlanarImage, target: (usize, usize)) -> Result<f64> {
    let gray = to_grayscale(integral)?;
    let (w, h) = (gray.width(), gray.height());
    let v = gray.data();
    let (tx, ty) = (target.0.min(w - 1), target.1.min(h - 1));

    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let background = sorted[sorted.len() / 2];

    let r = BLOB_SEARCH_RADIUS;
    let mut peak = (tx, ty, f64::NEG_INFINITY);
    for y in ty.saturating_sub(r)..(ty + r + 1).min(h) {
        for x in tx.saturating_sub(r)..(tx + r + 1).min(w) {
            if v[y * w + x] > peak.2 {
                peak = (x, y, v[y * w + x]);
            }
        }
    }
    let contrast = if background > 0.0 { peak.2 / background } else if peak.2 > 0.0 { f64::INFINITY } else { 0.0 };
    if !(peak.2 > background && contrast >= 2.0) {
        return Err(Error::NoBlobFound { contrast });
    }
    let half = background + 0.5 * (peak.2 - background);

    // 4-connected component above half maximum
    let mut inside = vec![false; w * h];
    let mut stack = vec![(peak.0, peak.1)];
    inside[peak.1 * w + peak.0] = true;
    while let Some((x, y)) = stack.pop() {
        let mut visit = |nx: usize, ny: usize| {
            let i = ny * w + nx;
            if !inside[i] && v[i] > half {
                inside[i] = true;
                stack.push((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }

    let crossing = |inner: f64, outer: Option<f64>| -> f64 {
        // distance from the inner sample to the half-maximum crossing
        match outer {
            Some(o) if inner > o => (inner - half) / (inner - o),
            _ => 0.5,
        }
    };
    let extent = |get: &dyn Fn(usize) -> f64, member: &dyn Fn(usize) -> bool, len: usize| -> f64 {
        let lo = (0..len).find(|&i| member(i));
        let hi = (0..len).rev().find(|&i| member(i));
        match (lo, hi) {
            (Some(lo), Some(hi)) => {
                let left = crossing(get(lo), lo.checked_sub(1).map(get));
                let right = crossing(get(hi), (hi + 1 < len).then(|| get(hi + 1)));
                (hi - lo) as f64 + left + right
            }
            _ => 0.0,
        }
    };

    let mut widest = 0.0f64;
    for y in 0..h {
        widest = widest.max(extent(&|x| v[y * w + x], &|x| inside[y * w + x], w));
    }
    for x in 0..w {
        widest = widest.max(extent(&|y| v[y * w + x], &|y| inside[y * w + x], h));
    }
    Ok(widest)
}

// ---------------------------------------------------------------------------
// Pose files

/// One record of a JSON pose file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub image: PathBuf,
    pub position: [f64; 3],
    /// World → camera, row-major.
    pub rotation: [f64; 9],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PoseRecord {
    pub fn pose(&self) -> Pose {
        Pose {
            position: Vector3::from(self.position),
            rotation: Matrix3::from_row_slice(&self.rotation),
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        }
    }

    pub fn from_camera(image: impl Into<PathBuf>, camera: &VirtualCamera) -> Self {
        let r = camera.pose.rotation;
        let p = camera.pose.position;
        Self {
            image: image.into(),
            position: [p.x, p.y, p.z],
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            fx: camera.intrinsics.fx,
            fy: camera.intrinsics.fy,
            cx: camera.intrinsics.cx,
            cy: camera.intrinsics.cy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalPlaneRecord {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

impl FocalPlaneRecord {
    pub fn plane(&self) -> Result<FocalPlane> {
        FocalPlane::new(Vector3::from(self.point), Vector3::from(self.normal))
    }
}

pub fn load_pose_records(path: impl AsRef<Path>) -> Result<Vec<PoseRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))
}

pub fn load_focal_plane(path: impl AsRef<Path>) -> Result<FocalPlane> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    let record: FocalPlaneRecord = serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))?;
    record.plane().map_err(|e| e.at(path))
}

/// Loads every frame of a pose file; image paths resolve relative to it.
pub fn load_frames(path: impl AsRef<Path>) -> Result<Vec<CameraFrame>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_pose_records(path)?
        .into_iter()
        .map(|rec| {
            let img_path = base.join(&rec.image);
            let image = crate::io::load(&img_path)?;
            CameraFrame::new(image, rec.pose(), rec.intrinsics()).map_err(|e| e.at(&img_path))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intrinsics(w: usize, h: usize, f: f64) -> Intrinsics {
        Intrinsics {
            fx: f,
            fy: f,
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
        }
    }

    fn pattern(w: usize, h: usize) -> PlanarImage {
        PlanarImage::from_fn(w, h, 2, |x, y, p| ((x * 3 + y * 5 + p * 7) % 11) as f64 / 10.0).unwrap()
    }

    fn frame_at(x: f64, y: f64, h: f64, img: PlanarImage) -> CameraFrame {
        let k = intrinsics(img.width(), img.height(), 100.0);
        CameraFrame::new(img, Pose::nadir(Vector3::new(x, y, h)), k).unwrap()
    }

    #[test]
    fn identity_projection() {
        let f = frame_at(1.0, 2.0, 30.0, pattern(20, 16));
        let p = project_to_focal_plane(&f, &FocalPlane::horizontal(0.0), &f.camera()).unwrap();
        assert!(p.coverage.iter().all(|&c| c == 1));
        for (a, b) in p.image.data().iter().zip(f.image.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn lateral_translation_is_pixel_shift() {
        // shift t at height h → t·fx/h px; t = 0.6, h = 30, fx = 100 → 2 px
        let src = frame_at(0.6, 0.0, 30.0, pattern(24, 12));
        let grid = frame_at(0.0, 0.0, 30.0, pattern(24, 12)).camera();
        let p = project_to_focal_plane(&src, &FocalPlane::horizontal(0.0), &grid).unwrap();
        for y in 0..12 {
            for x in 0..24 {
                let i = y * 24 + x;
                if x >= 2 {
                    assert_eq!(p.coverage[i], 1);
                    assert!((p.image.get(x, y, 0) - src.image.get(x - 2, y, 0)).abs() < 1e-6);
                } else {
                    assert_eq!(p.coverage[i], 0);
                    assert_eq!(p.image.get(x, y, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn plane_through_optical_axis_is_degenerate() {
        let f = frame_at(0.0, 0.0, 30.0, pattern(8, 8));
        let plane = FocalPlane::new(Vector3::new(0.0, 0.0, 30.0), Vector3::x()).unwrap();
        assert!(matches!(
            project_to_focal_plane(&f, &plane, &f.camera()),
            Err(Error::DegenerateHomography { .. })
        ));
    }

    #[test]
    fn camera_validation() {
        let img = pattern(8, 8);
        let bad_rot = Pose {
            position: Vector3::zeros(),
            rotation: Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0),
        };
        assert!(CameraFrame::new(img.clone(), bad_rot, intrinsics(8, 8, 10.0)).is_err());
        let mut k = intrinsics(8, 8, 10.0);
        k.cx = 8.0;
        assert!(CameraFrame::new(img.clone(), Pose::nadir(Vector3::zeros()), k).is_err());
        k = intrinsics(8, 8, -1.0);
        assert!(CameraFrame::new(img, Pose::nadir(Vector3::zeros()), k).is_err());
    }

    #[test]
    fn integrate_identical_and_mean() {
        let f = frame_at(0.0, 0.0, 20.0, pattern(10, 10));
        let plane = FocalPlane::horizontal(0.0);
        let stack = vec![f.clone(); 5];
        let out = integrate(&stack, &plane, &f.camera()).unwrap();
        for (a, b) in out.data().iter().zip(f.image.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let a = frame_at(0.0, 0.0, 20.0, PlanarImage::filled(6, 6, 1, 0.2));
        let b = frame_at(0.0, 0.0, 20.0, PlanarImage::filled(6, 6, 1, 0.6));
        let out = integrate(&[a.clone(), b], &plane, &a.camera()).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert!(matches!(integrate(&[], &plane, &a.camera()), Err(Error::EmptyStack)));
    }

    #[test]
    fn integrate_is_order_invariant_and_idempotent() {
        let plane = FocalPlane::horizontal(0.0);
        let frames: Vec<_> = (0..11)
            .map(|i| frame_at(0.1 * i as f64, -0.05 * i as f64, 25.0, pattern(16, 16)))
            .collect();
        let grid = VirtualCamera::centroid(&frames).unwrap();
        let a = integrate(&frames, &plane, &grid).unwrap();
        let mut rev = frames.clone();
        rev.reverse();
        let b = integrate(&rev, &plane, &grid).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
        let single = integrate(&frames[..1], &plane, &grid).unwrap();
        let proj = project_to_focal_plane(&frames[0], &plane, &grid).unwrap();
        assert_eq!(single, proj.image);
    }

    #[test]
    fn constant_frames_integrate_to_constant() {
        let plane = FocalPlane::horizontal(0.0);
        let frames: Vec<_> = (0..6)
            .map(|i| frame_at(i as f64 * 0.3, 0.0, 10.0, PlanarImage::filled(12, 12, 1, 0.7)))
            .collect();
        let grid = frames[0].camera();
        let out = integrate_with_coverage(&frames, &plane, &grid).unwrap();
        for (v, c) in out.image.data().iter().zip(&out.coverage) {
            if *c > 0 {
                assert!((v - 0.7).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn centroid_of_nadir_stack() {
        let frames: Vec<_> = [(0.0, 0.0), (2.0, 0.0), (0.0, 4.0), (2.0, 4.0)]
            .iter()
            .map(|&(x, y)| frame_at(x, y, 30.0, pattern(8, 8)))
            .collect();
        let c = VirtualCamera::centroid(&frames).unwrap();
        assert!((c.pose.position - Vector3::new(1.0, 2.0, 30.0)).norm() < 1e-12);
        assert!((c.pose.rotation - Pose::nadir(Vector3::zeros()).rotation).norm() < 1e-12);
    }

    #[test]
    fn point_spread_of_single_pixel() {
        let mut img = PlanarImage::zeros(21, 21, 1).into_data();
        img[10 * 21 + 10] = 1.0;
        let img = PlanarImage::new(21, 21, 1, img).unwrap();
        assert!((measure_point_spread(&img, (10, 10)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_spread_of_box() {
        let img = PlanarImage::from_fn(40, 40, 1, |x, y, _| {
            if (10..22).contains(&x) && (15..19).contains(&y) { 0.8 } else { 0.1 }
        })
        .unwrap();
        // plateau of 12 px with linear flanks → 12 px at half maximum
        assert!((measure_point_spread(&img, (15, 17)).unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn flat_image_has_no_blob() {
        let img = PlanarImage::filled(16, 16, 1, 0.5);
        assert!(matches!(measure_point_spread(&img, (8, 8)), Err(Error::NoBlobFound { .. })));
    }

    #[test]
    fn pose_record_roundtrip() {
        let f = frame_at(1.0, 2.0, 3.0, pattern(8, 8));
        let rec = PoseRecord::from_camera("a.png", &f.camera());
        let json = serde_json::to_string(&rec).unwrap();
        let back: PoseRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.pose(), f.pose);
        assert_eq!(back.intrinsics(), f.intrinsics);
    }
}
