//! End-to-end stereo pipeline: window statistics → matching-cost volume →
//! optional edge-aware aggregation → winner-take-all disparity selection,
//! plus disparity-error evaluation and a per-stage benchmark harness.

use std::time::Instant;

use rayon::prelude::*;

use crate::aggregation::{
    compute_weights, dt_aggregate, dt_pass_l2r, dt_pass_r2l, normalize_zero_mean, DtParams,
    PassDirection,
};
use crate::cost_volume::{zncc_fast, zncc_reference, CostVolume, ScanConfig};
use crate::image_io::{DisparityMap, GrayImage};
use crate::quantization::{quantize_scale, PackedCostVolume};
use crate::summation::{window_sums_direct, window_sums_integral, WindowStats};
use crate::{Error, Result};

/// How window sums and sums of squares are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummationMethod {
    /// Per-pixel loops over the window; cheap for small windows.
    Direct,
    /// Integral images over the replicate-padded domain; O(1) per window.
    Integral,
    /// Direct for windows up to 7x7 (radius 3), integral beyond.
    Auto,
}

impl SummationMethod {
    /// Resolves `Auto` against a concrete radius.
    pub fn resolve(self, radius: usize) -> SummationMethod {
        match self {
            SummationMethod::Auto if radius <= 3 => SummationMethod::Direct,
            SummationMethod::Auto => SummationMethod::Integral,
            other => other,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scan: ScanConfig,
    pub dt: DtParams,
    pub summation_method: SummationMethod,
    pub aggregation_enabled: bool,
    /// Worker-thread count; 0 uses the global default pool.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scan: ScanConfig::default(),
            dt: DtParams::default(),
            summation_method: SummationMethod::Auto,
            aggregation_enabled: true,
            threads: 0,
        }
    }
}

fn window_stats(img: &GrayImage, radius: usize, method: SummationMethod) -> WindowStats {
    match method.resolve(radius) {
        SummationMethod::Direct => window_sums_direct(img, radius),
        SummationMethod::Integral => window_sums_integral(img, radius),
        SummationMethod::Auto => unreachable!("resolved above"),
    }
}

/// Picks, per pixel, the disparity minimizing the matching cost `1 − c`.
/// Ties keep the smallest disparity.
pub fn wta(cv: &CostVolume) -> DisparityMap {
    let mut map = DisparityMap::new_invalid(cv.width, cv.height);
    map.data
        .par_chunks_mut(cv.width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let mut best_d = 0usize;
                let mut best = f64::INFINITY;
                for d in 0..cv.max_disparity {
                    let score = 1.0 - cv.at(x, y, d);
                    if score < best {
                        best = score;
                        best_d = d;
                    }
                }
                *out = best_d as f64;
            }
        });
    map
}

/// Everything the pipeline produced in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub disparity: DisparityMap,
    /// The volume the disparity was selected from (aggregated when
    /// aggregation is enabled, raw matching costs otherwise).
    pub cost_volume: CostVolume,
    /// Saturation count from integer aggregation modes; 0 otherwise.
    pub saturated: u64,
}

fn run_stages(left: &GrayImage, right: &GrayImage, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let stats_l = window_stats(left, cfg.scan.radius, cfg.summation_method);
    let stats_r = window_stats(right, cfg.scan.radius, cfg.summation_method);
    let raw = zncc_fast(left, right, &cfg.scan, &stats_l, &stats_r)?;
    let (cost_volume, saturated) = if cfg.aggregation_enabled {
        let out = dt_aggregate(&raw, left, &cfg.dt)?;
        (out.cost, out.saturated)
    } else {
        (raw, 0)
    };
    let disparity = wta(&cost_volume);
    Ok(PipelineRun { disparity, cost_volume, saturated })
}

/// Runs inside a dedicated pool of `threads` workers when `threads > 0`.
fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build a {threads}-thread pool: {e}")))?;
    pool.install(f)
}

/// Runs the full pipeline and returns the disparity map, the selected cost
/// volume, and the integer-mode saturation count.
pub fn run_pipeline_full(
    left: &GrayImage,
    right: &GrayImage,
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    cfg.scan.validate()?;
    with_pool(cfg.threads, || run_stages(left, right, cfg))
}

/// Convenience wrapper returning only the disparity map.
pub fn run_pipeline(left: &GrayImage, right: &GrayImage, cfg: &PipelineConfig) -> Result<DisparityMap> {
    Ok(run_pipeline_full(left, right, cfg)?.disparity)
}

/// Error counts over one evaluated region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegionStats {
    pub evaluated: u64,
    pub erroneous: u64,
}

impl RegionStats {
    pub fn rate(&self) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            self.erroneous as f64 / self.evaluated as f64
        }
    }
}

/// Disparity-error report. A pixel is erroneous when its absolute disparity
/// error exceeds 3 *and* 5% of the ground-truth value. Pixels without
/// ground truth are excluded; pixels without an estimate count as erroneous
/// in `all` and are excluded from `estimated_only`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub total_valid: u64,
    pub erroneous: u64,
    pub d1_rate: f64,
    pub all: RegionStats,
    pub estimated_only: RegionStats,
}

/// Compares an estimated disparity map against ground truth.
pub fn evaluate_d1(est: &DisparityMap, gt: &DisparityMap) -> Result<EvalReport> {
    if est.width != gt.width || est.height != gt.height {
        return Err(Error::DimensionMismatch {
            left_width: est.width,
            left_height: est.height,
            right_width: gt.width,
            right_height: gt.height,
        });
    }
    let mut all = RegionStats::default();
    let mut est_only = RegionStats::default();
    for y in 0..gt.height {
        for x in 0..gt.width {
            if !gt.is_valid(x, y) {
                continue;
            }
            let g = gt.get(x, y);
            all.evaluated += 1;
            if est.is_valid(x, y) {
                let err = (est.get(x, y) - g).abs();
                let bad = err > 3.0 && err > 0.05 * g;
                est_only.evaluated += 1;
                if bad {
                    all.erroneous += 1;
                    est_only.erroneous += 1;
                }
            } else {
                all.erroneous += 1;
            }
        }
    }
    Ok(EvalReport {
        total_valid: all.evaluated,
        erroneous: all.erroneous,
        d1_rate: all.rate(),
        all,
        estimated_only: est_only,
    })
}

/// Median wall time of one pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: String,
    pub repeats: usize,
    pub median_ms: f64,
    /// Reference-scan time divided by this stage's time; present on the
    /// fast-scan row only.
    pub ratio_vs_reference: Option<f64>,
}

fn median_ms(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

fn time_stage<T>(repeats: usize, mut f: impl FnMut() -> T) -> (f64, T) {
    let mut samples = Vec::with_capacity(repeats);
    let mut out = None;
    for _ in 0..repeats {
        let start = Instant::now();
        let value = f();
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        out = Some(value);
    }
    (median_ms(samples), out.unwrap())
}

/// Times each pipeline stage `repeats` times on the given pair and reports
/// per-stage medians. Window statistics and aggregation weights are
/// precomputed outside the timed regions; the cost-scan rows time only the
/// scans themselves.
pub fn benchmark(
    left: &GrayImage,
    right: &GrayImage,
    cfg: &PipelineConfig,
    repeats: usize,
) -> Result<Vec<StageTiming>> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least 1 repeat".into()));
    }
    cfg.scan.validate()?;
    with_pool(cfg.threads, || {
        let stats_l = window_stats(left, cfg.scan.radius, cfg.summation_method);
        let stats_r = window_stats(right, cfg.scan.radius, cfg.summation_method);
        let weights = compute_weights(left, &cfg.dt);

        let (ref_ms, _) = time_stage(repeats, || zncc_reference(left, right, &cfg.scan).unwrap());
        let (fast_ms, raw) =
            time_stage(repeats, || zncc_fast(left, right, &cfg.scan, &stats_l, &stats_r).unwrap());

        let (l2r_ms, l2r) = time_stage(repeats, || dt_pass_l2r(&raw, &weights).unwrap());
        let (r2l_ms, r2l) = time_stage(repeats, || dt_pass_r2l(&l2r, &weights).unwrap());
        let (u2d_ms, u2d) = time_stage(repeats, || {
            normalize_zero_mean(&r2l, &weights, &cfg.dt, PassDirection::TopToBottom).unwrap()
        });
        let (d2u_ms, aggregated) = time_stage(repeats, || {
            crate::aggregation::dt_pass_d2u(&u2d, &weights).unwrap()
        });

        let mut sat = 0u64;
        let quantized: Vec<i16> = aggregated
            .data
            .iter()
            .map(|&v| quantize_scale(v, cfg.dt.t_scale, &mut sat))
            .collect();
        let (codec_ms, _) = time_stage(repeats, || {
            let packed = PackedCostVolume::encode_from(
                &quantized,
                aggregated.width,
                aggregated.height,
                aggregated.max_disparity,
            )
            .unwrap();
            packed.decode_values()
        });

        let (wta_ms, _) = time_stage(repeats, || wta(&aggregated));

        let row = |stage: &str, ms: f64, ratio: Option<f64>| StageTiming {
            stage: stage.to_string(),
            repeats,
            median_ms: ms,
            ratio_vs_reference: ratio,
        };
        Ok(vec![
            row("zncc_reference", ref_ms, None),
            row("zncc_fast", fast_ms, Some(ref_ms / fast_ms)),
            row("dt_l2r", l2r_ms, None),
            row("dt_r2l", r2l_ms, None),
            row("dt_u2d", u2d_ms, None),
            row("dt_d2u", d2u_ms, None),
            row("codec", codec_ms, None),
            row("wta", wta_ms, None),
        ])
    })
}

/// Renders benchmark rows as CSV with a header line.
pub fn benchmark_csv(rows: &[StageTiming]) -> String {
    let mut out = String::from("stage,repeats,median_ms,ratio_vs_reference\n");
    for row in rows {
        let ratio = row
            .ratio_vs_reference
            .map(|r| format!("{r:.3}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:.4},{}\n",
            row.stage, row.repeats, row.median_ms, ratio
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::synth_shift_pair;

    fn volume_from(data: Vec<f64>, w: usize, h: usize, d: usize) -> CostVolume {
        assert_eq!(data.len(), w * h * d);
        CostVolume { width: w, height: h, max_disparity: d, data }
    }

    fn wta_oracle(cv: &CostVolume) -> Vec<f64> {
        let mut out = Vec::new();
        for y in 0..cv.height {
            for x in 0..cv.width {
                let costs: Vec<f64> = (0..cv.max_disparity).map(|d| 1.0 - cv.at(x, y, d)).collect();
                let mut best = 0usize;
                for (d, &c) in costs.iter().enumerate() {
                    if c < costs[best] {
                        best = d;
                    }
                }
                out.push(best as f64);
            }
        }
        out
    }

    #[test]
    fn wta_matches_an_independent_selection_oracle() {
        let mut rng = {
            use rand_chacha::rand_core::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(8)
        };
        use rand_chacha::rand_core::RngCore;
        let (w, h, d) = (9, 5, 7);
        let data: Vec<f64> = (0..w * h * d)
            .map(|_| (rng.next_u32() % 1000) as f64 / 1000.0)
            .collect();
        let cv = volume_from(data, w, h, d);
        assert_eq!(wta(&cv).data, wta_oracle(&cv));
    }

    #[test]
    fn wta_breaks_ties_toward_the_smaller_disparity() {
        // Channels 1 and 3 share the maximal correlation.
        let cv = volume_from(vec![0.2, 0.9, 0.4, 0.9], 1, 1, 4);
        assert_eq!(wta(&cv).data, vec![1.0]);
        // All channels equal: disparity 0 wins.
        let flat = volume_from(vec![0.5; 6], 2, 1, 3);
        assert_eq!(wta(&flat).data, vec![0.0, 0.0]);
    }

    #[test]
    fn single_channel_volumes_select_zero() {
        let cv = volume_from(vec![0.3, 0.8, 0.1], 3, 1, 1);
        assert_eq!(wta(&cv).data, vec![0.0; 3]);
    }

    #[test]
    fn per_pixel_cost_shifts_do_not_change_the_selection() {
        let cv = volume_from(
            vec![0.1, 0.7, 0.3, 0.2, 0.4, 0.9, 0.5, 0.5, 0.6, 0.2, 0.8, 0.1],
            2,
            2,
            3,
        );
        let mut shifted = cv.clone();
        for (i, px) in shifted.data.chunks_mut(3).enumerate() {
            let offset = (i as f64 + 1.0) * 0.013;
            for v in px.iter_mut() {
                *v -= offset;
            }
        }
        assert_eq!(wta(&cv).data, wta(&shifted).data);
    }

    #[test]
    fn auto_summation_matches_both_explicit_methods() {
        let (l, r) = synth_shift_pair(40, 20, 3, 70).unwrap();
        for radius in [1usize, 4] {
            let mut cfg = PipelineConfig::default();
            cfg.scan.radius = radius;
            cfg.scan.max_disparity = 8;
            cfg.aggregation_enabled = false;
            let auto = run_pipeline_full(&l, &r, &cfg).unwrap();
            for method in [SummationMethod::Direct, SummationMethod::Integral] {
                let explicit = run_pipeline_full(
                    &l,
                    &r,
                    &PipelineConfig { summation_method: method, ..cfg.clone() },
                )
                .unwrap();
                assert_eq!(auto.cost_volume.data, explicit.cost_volume.data, "r {radius}");
            }
        }
    }

    #[test]
    fn pipeline_composes_its_published_stages() {
        let (l, r) = synth_shift_pair(48, 24, 5, 71).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.scan.max_disparity = 16;
        let run = run_pipeline_full(&l, &r, &cfg).unwrap();

        let stats_l = window_sums_direct(&l, cfg.scan.radius);
        let stats_r = window_sums_direct(&r, cfg.scan.radius);
        let raw = zncc_fast(&l, &r, &cfg.scan, &stats_l, &stats_r).unwrap();
        let agg = dt_aggregate(&raw, &l, &cfg.dt).unwrap();
        assert_eq!(run.cost_volume.data, agg.cost.data);
        assert_eq!(run.disparity.data, wta(&agg.cost).data);
        assert_eq!(run.saturated, agg.saturated);

        cfg.aggregation_enabled = false;
        let plain = run_pipeline_full(&l, &r, &cfg).unwrap();
        assert_eq!(plain.cost_volume.data, raw.data);
        assert_eq!(plain.saturated, 0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let (l, r) = synth_shift_pair(56, 28, 6, 72).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.scan.max_disparity = 12;
        cfg.threads = 1;
        let one = run_pipeline_full(&l, &r, &cfg).unwrap();
        cfg.threads = 2;
        let two = run_pipeline_full(&l, &r, &cfg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one.cost_volume.data), bits(&two.cost_volume.data));
        assert_eq!(one.disparity.data, two.disparity.data);
    }

    #[test]
    fn perfect_estimates_score_zero_error() {
        let mut gt = DisparityMap::new_invalid(6, 4);
        for (i, v) in gt.data.iter_mut().enumerate() {
            *v = (i % 13) as f64 + 1.0;
        }
        let report = evaluate_d1(&gt.clone(), &gt).unwrap();
        assert_eq!(report.total_valid, 24);
        assert_eq!(report.erroneous, 0);
        assert_eq!(report.d1_rate, 0.0);
        assert_eq!(report.estimated_only.evaluated, 24);
    }

    #[test]
    fn error_rule_requires_both_absolute_and_relative_excess() {
        let mut gt = DisparityMap::new_invalid(4, 1);
        let mut est = DisparityMap::new_invalid(4, 1);
        // err 4 on gt 10: 4 > 3 and 4 > 0.5 -> erroneous.
        gt.data[0] = 10.0;
        est.data[0] = 14.0;
        // err 4 on gt 100: 4 > 3 but 4 <= 5 -> fine.
        gt.data[1] = 100.0;
        est.data[1] = 104.0;
        // err 2 on gt 10: under the absolute gate -> fine.
        gt.data[2] = 10.0;
        est.data[2] = 12.0;
        // missing estimate counts against the full region only.
        gt.data[3] = 10.0;
        est.data[3] = crate::image_io::INVALID_DISPARITY;
        let report = evaluate_d1(&est, &gt).unwrap();
        assert_eq!(report.all.evaluated, 4);
        assert_eq!(report.all.erroneous, 2);
        assert_eq!(report.estimated_only.evaluated, 3);
        assert_eq!(report.estimated_only.erroneous, 1);
        assert_eq!(report.d1_rate, 0.5);
    }

    #[test]
    fn invalid_ground_truth_is_excluded_entirely() {
        let gt = DisparityMap::new_invalid(5, 5);
        let mut est = DisparityMap::new_invalid(5, 5);
        est.data.fill(7.0);
        let report = evaluate_d1(&est, &gt).unwrap();
        assert_eq!(report.total_valid, 0);
        assert_eq!(report.d1_rate, 0.0);
    }

    #[test]
    fn evaluation_rejects_mismatched_shapes() {
        let a = DisparityMap::new_invalid(4, 4);
        let b = DisparityMap::new_invalid(5, 4);
        assert!(matches!(evaluate_d1(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn benchmark_reports_every_stage_once() {
        let (l, r) = synth_shift_pair(32, 16, 3, 73).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.scan.max_disparity = 8;
        let rows = benchmark(&l, &r, &cfg, 3).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.stage.as_str()).collect();
        assert_eq!(
            names,
            ["zncc_reference", "zncc_fast", "dt_l2r", "dt_r2l", "dt_u2d", "dt_d2u", "codec", "wta"]
        );
        assert!(rows.iter().all(|r| r.median_ms >= 0.0 && r.repeats == 3));
        assert!(rows[1].ratio_vs_reference.unwrap() > 0.0);
        assert!(rows[0].ratio_vs_reference.is_none());

        let csv = benchmark_csv(&rows);
        assert!(csv.starts_with("stage,repeats,median_ms,ratio_vs_reference\n"));
        assert_eq!(csv.lines().count(), 9);
        assert!(benchmark(&l, &r, &cfg, 0).is_err());
    }

    use crate::summation::window_sums_direct;
}
