//! Reference implementations shared by the oracle tests and the
//! acceptance run.

use aerofuse::cnn::{ConvLayerWeights, VggWeights};
use aerofuse::PlanarImage;
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy)]
pub enum Boundary {
    Periodic,
    Neumann,
}

/// Forward-difference operators along x and y for a `w × h` raster.
fn gradients(w: usize, h: usize, boundary: Boundary) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = w * h;
    let mut gx = DMatrix::zeros(n, n);
    let mut gy = DMatrix::zeros(n, n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            match boundary {
                Boundary::Periodic => {
                    gx[(i, y * w + (x + 1) % w)] += 1.0;
                    gx[(i, i)] -= 1.0;
                    gy[(i, ((y + 1) % h) * w + x)] += 1.0;
                    gy[(i, i)] -= 1.0;
                }
                Boundary::Neumann => {
                    if x + 1 < w {
                        gx[(i, i + 1)] = 1.0;
                        gx[(i, i)] = -1.0;
                    }
                    if y + 1 < h {
                        gy[(i, i + w)] = 1.0;
                        gy[(i, i)] = -1.0;
                    }
                }
            }
        }
    }
    (gx, gy)
}

pub fn dense_smooth(img: &PlanarImage, lambda: f64, boundary: Boundary) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let (gx, gy) = gradients(w, h, boundary);
    let a = DMatrix::identity(n, n) + (gx.transpose() * &gx + gy.transpose() * &gy) * lambda;
    let lu = a.lu();
    let mut out = Vec::with_capacity(n * img.planes());
    for p in 0..img.planes() {
        let f = DVector::from_column_slice(img.plane(p));
        out.extend(lu.solve(&f).expect("system is positive definite").iter());
    }
    out
}

/// Direct 3×3 zero-padded convolution + bias + ReLU in f64.
pub fn naive_conv(input: &[f64], w: usize, h: usize, cin: usize, layer: &ConvLayerWeights) -> Vec<f64> {
    let cout = layer.out_channels;
    let mut out = vec![0.0; cout * w * h];
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let mut acc = layer.bias[o] as f64;
                for i in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = y as isize + ky as isize - 1;
                            let sx = x as isize + kx as isize - 1;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            let v = input[(i * h + sy as usize) * w + sx as usize];
                            acc += layer.weight(o, i, ky, kx) as f64 * v;
                        }
                    }
                }
                out[(o * h + y) * w + x] = acc.max(0.0);
            }
        }
    }
    out
}

fn naive_pool(input: &[f64], w: usize, h: usize, c: usize) -> Vec<f64> {
    let (pw, ph) = (w / 2, h / 2);
    let mut out = vec![0.0; c * pw * ph];
    for ch in 0..c {
        for y in 0..ph {
            for x in 0..pw {
                let at = |dx: usize, dy: usize| input[(ch * h + 2 * y + dy) * w + 2 * x + dx];
                out[(ch * ph + y) * pw + x] = at(0, 0).max(at(1, 0)).max(at(0, 1)).max(at(1, 1));
            }
        }
    }
    out
}

pub fn naive_forward(img: &PlanarImage, weights: &VggWeights) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut x = Vec::with_capacity(3 * w * h);
    for p in 0..3 {
        let (m, s) = (weights.preprocess.mean[p] as f64, weights.preprocess.std[p] as f64);
        x.extend(img.plane(p).iter().map(|v| (v - m) / s));
    }
    let r11 = naive_conv(&x, w, h, 3, &weights.conv1_1);
    let r12 = naive_conv(&r11, w, h, 64, &weights.conv1_2);
    let pooled = naive_pool(&r12, w, h, 64);
    let r21 = naive_conv(&pooled, w / 2, h / 2, 64, &weights.conv2_1);
    (r11, r21)
}
