//! Acceptance criteria, run one after another; one PASS/FAIL line each.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use aerofuse::aos::{integrate, measure_point_spread, CameraFrame, FocalPlane};
use aerofuse::cnn::{forward, VggWeights};
use aerofuse::filter::{high_detail, smooth, FilterParams};
use aerofuse::fusion::{alpha_blend, fuse, fuse_detailed, Ablation, FusionConfig};
use aerofuse::image::{Acquisition, ChannelDescriptor, Modality};
use aerofuse::metrics::{self, evaluate, mse, psnr_from_mse};
use aerofuse::{par, Channel, FusionJob, PlanarImage};
use common::oracle::{dense_smooth, naive_forward, Boundary};
use common::{load_samples, region_mean, SpreadScene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, planes: usize) -> PlanarImage {
    PlanarImage::new(w, h, planes, (0..w * h * planes).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn unified_filter_exactness() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_dense, mut worst_zero, mut worst_sum) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let img = random_image(&mut rng, 8, 8, 1);
        for lambda in [0.0, 1.0, 5.0] {
            let params = FilterParams::with_lambda(lambda);
            let l = smooth(&img, &params).unwrap();
            let h = high_detail(&img, &params).unwrap();
            let dense = dense_smooth(&img, lambda, Boundary::Periodic);
            for i in 0..64 {
                worst_dense = worst_dense.max((l.data()[i] - dense[i]).abs());
                worst_sum = worst_sum.max((l.data()[i] + h.data()[i] - img.data()[i]).abs());
                if lambda == 0.0 {
                    worst_zero = worst_zero.max(h.data()[i].abs());
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        worst_dense <= 1e-4 && worst_zero < 1e-7 && worst_sum <= 1e-7 && secs < 1.0,
        format!("dense max-abs {worst_dense:.2e}, λ=0 ‖H‖∞ {worst_zero:.2e}, F−L−H {worst_sum:.2e}, {secs:.3} s"),
    )
}

fn convolution_oracle() -> Outcome {
    let started = Instant::now();
    let weights = VggWeights::random(42);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let img = random_image(&mut rng, 16, 16, 3);
        let stack = forward(&img, &weights).unwrap();
        let (r11, r21) = naive_forward(&img, &weights);
        for (vol, want) in stack.layers.iter().zip([&r11, &r21]) {
            for (&g, &e) in vol.data.iter().zip(want.iter()) {
                worst = worst.max((g as f64 - e).abs() / e.abs().max(1.0));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(worst <= 1e-4 && secs < 5.0, format!("worst relative error {worst:.2e}, {secs:.3} s"))
}

fn metric_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = PlanarImage::from_fn(64, 64, 1, |i, j, _| 0.1 + 0.8 * ((i * 13 + j * 7) % 64) as f64 / 63.0)
        .unwrap()
        .map(|v| v * 0.9);
    let jitter: Vec<f64> = (0..x.data().len()).map(|_| 0.05 * (rng.random::<f64>() - 0.5)).collect();
    let noisy = PlanarImage::new(64, 64, 1, x.data().iter().zip(&jitter).map(|(v, j)| (v + j).clamp(0.0, 1.0)).collect()).unwrap();
    let offset = x.map(|v| v + 0.1);
    let p_offset = metrics::psnr(&offset, &[&x]).unwrap();
    let p_code = psnr_from_mse((1.0f64 / 255.0).powi(2));
    let mi = metrics::mutual_information(&noisy, &[&noisy]).unwrap();
    let h = metrics::entropy(&noisy).unwrap();
    let v = metrics::vif(&noisy, &[&noisy]).unwrap();
    let offset_mse = mse(&offset, &x).unwrap();
    check(
        (p_offset - 20.0).abs() <= 1e-6
            && (p_code - 48.1308).abs() <= 1e-3
            && (mi - h).abs() <= 1e-6
            && (v - 1.0).abs() <= 1e-3,
        format!(
            "PSNR(+0.1) {p_offset:.9} dB (MSE {offset_mse:.3e}), PSNR(1 code) {p_code:.4} dB, MI−H {:.1e}, VIF(x,x) {v:.6}",
            mi - h
        ),
    )
}

fn aos_geometry() -> Outcome {
    let setup = SpreadScene::default();
    // identical poses
    let (_, single) = setup.scene().render(&setup.grid(), 2);
    let grid = setup.grid();
    let frame = CameraFrame::new(single.clone(), grid.pose, grid.intrinsics).unwrap();
    let stack = vec![frame; 9];
    let same = integrate(&stack, &FocalPlane::horizontal(0.0), &grid).unwrap();
    let identical = same.data().iter().zip(single.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut ok = identical <= 1e-6;
    let mut lines = vec![format!("identical stack max-abs {identical:.1e}")];
    let mut last = 0.0;
    for a in [8.0, 12.0, 16.0, 20.0] {
        let integral = setup.integral(a);
        let spread = measure_point_spread(&integral, setup.occluder_pixel());
        let target = measure_point_spread(&integral, setup.pixel_of_ground(setup.target));
        let predicted = setup.predicted_spread_px(a);
        match (spread, target) {
            (Ok(b), Ok(t)) => {
                let rel = (b - predicted).abs() / predicted;
                ok &= b > last && rel <= 0.15 && t <= 2.0;
                lines.push(format!("a={a} m: spread {b:.2} px vs {predicted:.2} ({:+.1}%), target {t:.2} px", 100.0 * (b - predicted) / predicted));
                last = b;
            }
            (s, t) => {
                ok = false;
                lines.push(format!("a={a} m: measurement failed: {s:?} / {t:?}"));
            }
        }
    }
    check(ok, lines.join("; "))
}

fn table_trend() -> Outcome {
    let weights = common::fixture_weights();
    let samples = load_samples();
    let mut ok = samples.len() >= 3;
    let mut lines = vec![format!("{} scenes", samples.len())];
    for s in &samples {
        let fused = fuse(&s.job(FusionConfig::default()), Some(&weights)).unwrap();
        let blend = alpha_blend(&[s.srgb.clone(), s.it.clone(), s.irgb.clone()]).unwrap();
        let ours = evaluate(&fused, &s.sources()).unwrap();
        let base = evaluate(&blend, &s.sources()).unwrap();
        let wins = [ours.mi > base.mi, ours.vif > base.vif, ours.psnr > base.psnr];
        ok &= wins.iter().all(|&w| w);
        lines.push(format!(
            "{}: MI {:.3} vs {:.3} {}, VIF {:.3} vs {:.3} {}, PSNR {:.3} vs {:.3} {}",
            s.name,
            ours.mi,
            base.mi,
            if wins[0] { "win" } else { "LOSS" },
            ours.vif,
            base.vif,
            if wins[1] { "win" } else { "LOSS" },
            ours.psnr,
            base.psnr,
            if wins[2] { "win" } else { "LOSS" },
        ));
    }
    check(ok, lines.join("; "))
}

fn ablation_behavior() -> Outcome {
    let weights = common::fixture_weights();
    let samples = load_samples();
    let mut ok = !samples.is_empty();
    let mut lines = Vec::new();
    for s in &samples {
        let run = |ablation| {
            let config = FusionConfig {
                ablation,
                ..Default::default()
            };
            fuse_detailed(&s.job(config), Some(&weights)).unwrap()
        };
        let (full, cnn) = (run(Ablation::Full), run(Ablation::CnnOnly));
        for (f, c) in full.channels.iter().zip(&cnn.channels) {
            let (bf, bc) = (region_mean(&f.mask, s.regions.background), region_mean(&c.mask, s.regions.background));
            let (tf, tc) = (region_mean(&f.mask, s.regions.target), region_mean(&c.mask, s.regions.target));
            let rel = (tf - tc).abs() / tc;
            ok &= bf < bc && rel <= 0.2;
            lines.push(format!(
                "{}/{}: background {bf:.3} vs {bc:.3}, target {tf:.3} vs {tc:.3} ({:+.0}%)",
                s.name,
                f.name,
                100.0 * (tf - tc) / tc
            ));
        }
    }
    check(ok, lines.join("; "))
}

fn tiled(img: &PlanarImage, size: usize) -> PlanarImage {
    PlanarImage::from_fn(size, size, img.planes(), |x, y, p| img.get(x % img.width(), y % img.height(), p)).unwrap()
}

fn performance() -> Outcome {
    let weights = common::fixture_weights();
    let s = &load_samples()[0];
    let job = FusionJob {
        basis: Channel {
            name: "SRGB".into(),
            image: tiled(&s.srgb, 512),
            descriptor: ChannelDescriptor::basis(Modality::Rgb, Acquisition::Single),
        },
        features: vec![Channel {
            name: "IRGB".into(),
            image: tiled(&s.irgb, 512),
            descriptor: ChannelDescriptor::feature(Modality::Rgb, Acquisition::Integral),
        }],
        config: FusionConfig::default(),
    };
    let (fuse_secs, metric_secs) = par::with_threads(1, || {
        let t = Instant::now();
        let fused = fuse(&job, Some(&weights)).unwrap();
        let fuse_secs = t.elapsed().as_secs_f64();
        let t = Instant::now();
        evaluate(&fused, &[("SRGB", &job.basis.image), ("IRGB", &job.features[0].image)]).unwrap();
        (fuse_secs, t.elapsed().as_secs_f64())
    });
    check(
        fuse_secs <= 5.0 && metric_secs <= 2.0,
        format!("512x512 single-channel fusion {fuse_secs:.3} s, metrics {metric_secs:.3} s (1 thread)"),
    )
}

fn determinism() -> Outcome {
    let weights = common::fixture_weights();
    let s = &load_samples()[0];
    let job = s.job(FusionConfig::default());
    let setup = SpreadScene {
        size: 64,
        cameras_per_side: 5,
        ..Default::default()
    };
    let run = || {
        let fused = fuse(&job, Some(&weights)).unwrap();
        let report = evaluate(&fused, &s.sources()).unwrap();
        let integral = setup.integral(6.0);
        (fused, [report.mi, report.vif, report.psnr], integral)
    };
    let reference = par::with_threads(1, run);
    let mut ok = true;
    let mut tried = Vec::new();
    for threads in [1, 2, 4, 7] {
        let again = par::with_threads(threads, run);
        let same = again.0 == reference.0
            && again.1.iter().zip(&reference.1).all(|(a, b)| a.to_bits() == b.to_bits())
            && again.2 == reference.2;
        ok &= same;
        tried.push(format!("{threads}:{}", if same { "identical" } else { "DIFFERENT" }));
    }
    check(ok, format!("fusion, metrics and integration across thread counts [{}]", tried.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("unified-filter exactness", unified_filter_exactness),
        ("convolution oracle", convolution_oracle),
        ("metric closed forms", metric_closed_forms),
        ("AOS geometry", aos_geometry),
        ("fused beats alpha blend on MI/VIF/PSNR", table_trend),
        ("ablation behavior", ablation_behavior),
        ("performance", performance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
