//! Cross-checks the two ZNCC implementations against a from-scratch oracle
//! written directly from the correlation definition, and verifies the
//! affine-invariance property that makes ZNCC robust to gain and bias.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zigmatch::cost_volume::zncc_reference;
use zigmatch::summation::window_sums_direct;
use zigmatch::{zncc_fast, GrayImage, ScanConfig};

fn random_image(w: usize, h: usize, lo: u32, hi: u32, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = hi - lo + 1;
    let data = (0..w * h)
        .map(|_| (lo + rng.next_u32() % span) as f64)
        .collect();
    GrayImage::from_vec(w, h, data).unwrap()
}

/// Definition oracle: recomputes the window mean, the centered spread, and
/// the centered cross-product from scratch for every `(x, y, d)` triple.
fn zncc_by_definition(reference: &GrayImage, target: &GrayImage, cfg: &ScanConfig) -> Vec<f64> {
    let (w, h, d_max) = (reference.width, reference.height, cfg.max_disparity);
    let r = cfg.radius as isize;
    let mut out = vec![0.0; w * h * d_max];
    for y in 0..h as isize {
        for x in 0..w as isize {
            for d in 0..d_max as isize {
                if x < d {
                    continue;
                }
                let mut sum_r = 0.0;
                let mut sum_t = 0.0;
                let mut n = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        sum_r += reference.get_clamped(x + dx, y + dy);
                        sum_t += target.get_clamped(x - d + dx, y + dy);
                        n += 1.0;
                    }
                }
                let (mr, mt) = (sum_r / n, sum_t / n);
                let mut cross = 0.0;
                let mut var_r = 0.0;
                let mut var_t = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let a = reference.get_clamped(x + dx, y + dy) - mr;
                        let b = target.get_clamped(x - d + dx, y + dy) - mt;
                        cross += a * b;
                        var_r += a * a;
                        var_t += b * b;
                    }
                }
                let (sr, st) = (var_r.sqrt(), var_t.sqrt());
                let c = if sr < cfg.sigma_floor || st < cfg.sigma_floor {
                    0.0
                } else {
                    (cross / (sr * st)).clamp(0.0, 1.0)
                };
                out[((y as usize) * w + x as usize) * d_max + d as usize] = c;
            }
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn reference_scan_matches_the_definition_oracle() {
    for seed in 0..4u64 {
        let reference = random_image(16, 8, 0, 255, 900 + seed);
        let target = random_image(16, 8, 0, 255, 950 + seed);
        let cfg = ScanConfig {
            radius: 1,
            max_disparity: 4,
            v_z: 4,
            h_z: 32,
            sigma_floor: 1e-6,
        };
        let got = zncc_reference(&reference, &target, &cfg).unwrap();
        let want = zncc_by_definition(&reference, &target, &cfg);
        let diff = max_abs_diff(&got.data, &want);
        assert!(diff <= 1e-6, "seed {seed}: max deviation {diff}");
    }
}

#[test]
fn fast_scan_matches_the_definition_oracle() {
    for (seed, radius) in [(0u64, 1usize), (1, 2), (2, 3)] {
        let reference = random_image(20, 10, 0, 255, 700 + seed);
        let target = random_image(20, 10, 0, 255, 750 + seed);
        let cfg = ScanConfig {
            radius,
            max_disparity: 5,
            v_z: 4,
            h_z: 8,
            sigma_floor: 1e-6,
        };
        let stats_r = window_sums_direct(&reference, radius);
        let stats_t = window_sums_direct(&target, radius);
        let got = zncc_fast(&reference, &target, &cfg, &stats_r, &stats_t).unwrap();
        let want = zncc_by_definition(&reference, &target, &cfg);
        let diff = max_abs_diff(&got.data, &want);
        assert!(diff <= 1e-5, "seed {seed} r {radius}: max deviation {diff}");
    }
}

#[test]
fn correlation_is_invariant_to_gain_and_bias() {
    // Integer gain and bias keep all window sums exact, so the only
    // difference between the runs is floating-point normalization noise.
    let reference = random_image(24, 12, 0, 100, 41);
    let target = random_image(24, 12, 0, 100, 42);
    let cfg = ScanConfig {
        radius: 2,
        max_disparity: 6,
        v_z: 4,
        h_z: 32,
        sigma_floor: 1e-6,
    };
    let run = |a: &GrayImage, b: &GrayImage| {
        let sa = window_sums_direct(a, cfg.radius);
        let sb = window_sums_direct(b, cfg.radius);
        zncc_fast(a, b, &cfg, &sa, &sb).unwrap().data
    };
    let transform = |img: &GrayImage, gain: f64, bias: f64| {
        GrayImage::from_vec(
            img.width,
            img.height,
            img.data.iter().map(|&v| gain * v + bias).collect(),
        )
        .unwrap()
    };

    let base = run(&reference, &target);
    for (gain, bias) in [(1.0, 30.0), (2.0, 0.0), (2.0, 55.0)] {
        let on_ref = run(&transform(&reference, gain, bias), &target);
        let on_tgt = run(&reference, &transform(&target, gain, bias));
        assert!(
            max_abs_diff(&base, &on_ref) <= 1e-8,
            "reference gain {gain} bias {bias}"
        );
        assert!(
            max_abs_diff(&base, &on_tgt) <= 1e-8,
            "target gain {gain} bias {bias}"
        );
    }
}
