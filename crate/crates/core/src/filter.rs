//! Gradient-penalized quadratic smoother and its high-detail residual.
//!
//! `smooth` returns the minimizer `L` of
//! `‖F − L‖² + λ(‖g_x ∗ L‖² + ‖g_y ∗ L‖²)` with `g_x = [−1 1]`,
//! `g_y = g_xᵀ`, and `high_detail` returns `F − L`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::PlanarImage;
use crate::par;

pub const DEFAULT_LAMBDA: f64 = 5.0;

/// Horizontal forward-difference kernel; the vertical one is its transpose.
pub const GRADIENT_KERNEL: [f64; 2] = [-1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    /// Exact frequency-domain solve, periodic boundary.
    SpectralPeriodic,
    /// Matrix-free conjugate gradient, replicate (Neumann) boundary.
    ConjugateGradientNeumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub lambda: f64,
    pub solver: Solver,
    pub cg_tolerance: f64,
    pub cg_max_iters: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            solver: Solver::SpectralPeriodic,
            cg_tolerance: 1e-6,
            cg_max_iters: 500,
        }
    }
}

impl FilterParams {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.cg_tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cg tolerance must be > 0, got {}",
                self.cg_tolerance
            )));
        }
        Ok(())
    }
}

/// Smooth layer `L`, computed independently per plane.
pub fn smooth(img: &PlanarImage, params: &FilterParams) -> Result<PlanarImage> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    if params.lambda == 0.0 {
        return Ok(img.clone());
    }
    let planes: Vec<&[f64]> = (0..img.planes()).map(|p| img.plane(p)).collect();
    let solved = par::map(&planes, |plane| match params.solver {
        Solver::SpectralPeriodic => Ok(spectral_solve(plane, w, h, params.lambda)),
        Solver::ConjugateGradientNeumann => {
            cg_solve(plane, w, h, params.lambda, params.cg_tolerance, params.cg_max_iters)
        }
    });
    let planes = solved.into_iter().collect::<Result<Vec<_>>>()?;
    PlanarImage::from_planes(w, h, planes)
}

/// Signed residual `H = F − smooth(F)`; not clamped.
pub fn high_detail(img: &PlanarImage, params: &FilterParams) -> Result<PlanarImage> {
    let low = smooth(img, params)?;
    let data = img.data().iter().zip(low.data()).map(|(f, l)| f - l).collect();
    PlanarImage::new(img.width(), img.height(), img.planes(), data)
}

/// `|ĝ(k)|² = 2 − 2cos(2πk/n)` for the forward difference on a ring of `n`.
fn difference_gain(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect()
}

fn spectral_solve(plane: &[f64], w: usize, h: usize, lambda: f64) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    fft2(&mut planner, &mut buf, w, h, false);

    let gx = difference_gain(w);
    let gy = difference_gain(h);
    for (y, row) in buf.chunks_exact_mut(w).enumerate() {
        for (x, c) in row.iter_mut().enumerate() {
            *c /= 1.0 + lambda * (gx[x] + gy[y]);
        }
    }

    fft2(&mut planner, &mut buf, w, h, true);
    let scale = 1.0 / (w * h) as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

fn fft2(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let row_fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    row_fft.process(buf);

    let mut t = transpose(buf, w, h);
    let col_fft = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    col_fft.process(&mut t);
    buf.copy_from_slice(&transpose(&t, h, w));
}

fn transpose<T: Copy + Default>(src: &[T], w: usize, h: usize) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = src[y * w + x];
        }
    }
    out
}

/// `(I + λ(G_xᵀG_x + G_yᵀG_y)) v` with one-sided differences at the border.
fn apply_normal_operator(v: &[f64], out: &mut [f64], w: usize, h: usize, lambda: f64) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let c = v[i];
            let mut lap = 0.0;
            if x > 0 {
                lap += c - v[i - 1];
            }
            if x + 1 < w {
                lap += c - v[i + 1];
            }
            if y > 0 {
                lap += c - v[i - w];
            }
            if y + 1 < h {
                lap += c - v[i + w];
            }
            out[i] = c + lambda * lap;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cg_solve(
    rhs: &[f64],
    w: usize,
    h: usize,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    // The data term dominates the operator, so F itself is a good start.
    let mut x = rhs.to_vec();
    let mut ap = vec![0.0; n];
    apply_normal_operator(&x, &mut ap, w, h, lambda);
    let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);

    for _ in 0..max_iters {
        if rr.sqrt() / rhs_norm <= tol {
            return Ok(x);
        }
        apply_normal_operator(&p, &mut ap, w, h, lambda);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    let residual = rr.sqrt() / rhs_norm;
    if residual <= tol {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            iterations: max_iters,
            residual,
        })
    }
}
