//! Spectral and CG smoothing against a dense direct solve of
//! `(I + λ(GxᵀGx + GyᵀGy)) L = F`.

mod common;

use aerofuse::filter::{high_detail, smooth, FilterParams, Solver};
use aerofuse::PlanarImage;
use common::oracle::{dense_smooth, Boundary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, planes: usize) -> PlanarImage {
    let data = (0..w * h * planes).map(|_| rng.random::<f64>()).collect();
    PlanarImage::new(w, h, planes, data).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn spectral_matches_dense_periodic_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (w, h) in [(8, 8), (5, 7), (12, 6)] {
        for lambda in [0.0, 0.5, 1.0, 5.0, 20.0] {
            let img = random_image(&mut rng, w, h, 2);
            let got = smooth(&img, &FilterParams::with_lambda(lambda)).unwrap();
            let want = dense_smooth(&img, lambda, Boundary::Periodic);
            let err = max_abs_diff(got.data(), &want);
            assert!(err < 1e-9, "{w}x{h} λ={lambda}: {err}");
        }
    }
}

#[test]
fn cg_matches_dense_neumann_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (w, h) in [(8, 8), (9, 4)] {
        for lambda in [0.5, 5.0] {
            let img = random_image(&mut rng, w, h, 1);
            let params = FilterParams {
                solver: Solver::ConjugateGradientNeumann,
                cg_tolerance: 1e-10,
                ..FilterParams::with_lambda(lambda)
            };
            let got = smooth(&img, &params).unwrap();
            let want = dense_smooth(&img, lambda, Boundary::Neumann);
            let err = max_abs_diff(got.data(), &want);
            assert!(err < 1e-6, "{w}x{h} λ={lambda}: {err}");
        }
    }
}

#[test]
fn dense_smoothing_preserves_mean_under_both_boundaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = random_image(&mut rng, 6, 6, 1);
    let mean = img.mean();
    for b in [Boundary::Periodic, Boundary::Neumann] {
        let l = dense_smooth(&img, 3.0, b);
        assert!((l.iter().sum::<f64>() / 36.0 - mean).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn detail_plus_smooth_is_identity(
        w in 2usize..20,
        h in 2usize..20,
        lambda in 0.0f64..30.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, w, h, 1);
        let params = FilterParams::with_lambda(lambda);
        let l = smooth(&img, &params).unwrap();
        let hd = high_detail(&img, &params).unwrap();
        for ((f, a), b) in img.data().iter().zip(l.data()).zip(hd.data()) {
            prop_assert!((a + b - f).abs() < 1e-7);
        }
        // smoothing never expands the range and keeps the mean
        let (lo, hi) = img.min_max();
        let (llo, lhi) = l.min_max();
        prop_assert!(llo >= lo - 1e-9 && lhi <= hi + 1e-9);
        prop_assert!((l.mean() - img.mean()).abs() < 1e-9);
        // constant images carry no detail
        let flat = PlanarImage::filled(w, h, 1, img.data()[0]);
        prop_assert!(high_detail(&flat, &params).unwrap().data().iter().all(|v| v.abs() < 1e-9));
    }
}

#[test]
fn solvers_agree_three_pixels_from_border() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let img = random_image(&mut rng, 64, 64, 1);
    let spectral = smooth(&img, &FilterParams::with_lambda(5.0)).unwrap();
    let params = FilterParams {
        solver: Solver::ConjugateGradientNeumann,
        cg_tolerance: 1e-10,
        ..FilterParams::with_lambda(5.0)
    };
    let cg = smooth(&img, &params).unwrap();
    let interior = |margin: usize| {
        let mut worst = 0.0f64;
        for y in margin..64 - margin {
            for x in margin..64 - margin {
                worst = worst.max((spectral.get(x, y, 0) - cg.get(x, y, 0)).abs());
            }
        }
        worst
    };
    let by_margin: Vec<String> = (1..=10).map(|m| format!("{m}px {:.1e}", interior(m))).collect();
    println!("{}", by_margin.join(", "));
    assert!(interior(3) <= 5e-3, "interior max-abs by margin: {}", by_margin.join(", "));
}
