//! ZNCC matching-cost volumes.
//!
//! Two paths produce the same costs: [`zncc_reference`], a direct
//! implementation of windowed zero-mean normalized cross-correlation, and
//! [`zncc_fast`], which factors the correlation into window product sums plus
//! per-image window statistics and sweeps each column band incrementally so
//! that almost every window is derived from its neighbor instead of being
//! recomputed.
//!
//! The factored form per pixel and disparity is
//! `C = (Σ I_R·I_T − n·mean_R·mean_T) / (σ_R·σ_T)` with `n = (2r+1)²`,
//! `σ = √(Σ I² − n·mean²)`, the target window taken `d` columns to the left,
//! and all window reads clamped to the image border.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::image_io::GrayImage;
use crate::summation::WindowStats;
use crate::{Error, Result};

/// Matching costs `C(x, y, d)` in `[0, 1]`, stored row-major with the
/// disparity index innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    pub max_disparity: usize,
    pub data: Vec<f64>,
}

impl CostVolume {
    pub fn zeros(width: usize, height: usize, max_disparity: usize) -> Self {
        Self { width, height, max_disparity, data: vec![0.0; width * height * max_disparity] }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, d: usize) -> usize {
        (y * self.width + x) * self.max_disparity + d
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, d: usize) -> f64 {
        self.data[self.idx(x, y, d)]
    }
}

/// Geometry and tiling parameters for cost-volume construction.
///
/// `v_z` rows are swept per column pass and `h_z` columns per tile; one
/// worker owns each band of rows, keeping `v_z + 1` running accumulators per
/// disparity lane.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// Window radius; the window side is `2r + 1`.
    pub radius: usize,
    /// Number of disparity hypotheses (candidates `0..max_disparity`).
    pub max_disparity: usize,
    /// Rows per scan band.
    pub v_z: usize,
    /// Columns per tile.
    pub h_z: usize,
    /// Windows whose intensity spread σ falls below this are treated as
    /// textureless and matched with cost 0.
    pub sigma_floor: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { radius: 1, max_disparity: 128, v_z: 4, h_z: 32, sigma_floor: 1e-6 }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::InvalidArgument("radius must be at least 1".into()));
        }
        if self.max_disparity < 1 {
            return Err(Error::InvalidArgument("max_disparity must be at least 1".into()));
        }
        if self.v_z < 2 {
            return Err(Error::InvalidArgument("v_z must be at least 2".into()));
        }
        if self.h_z < 1 {
            return Err(Error::InvalidArgument("h_z must be at least 1".into()));
        }
        if !self.sigma_floor.is_finite() || self.sigma_floor <= 0.0 {
            return Err(Error::InvalidArgument("sigma_floor must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn window_len(&self) -> usize {
        2 * self.radius + 1
    }
}

/// Register file of one incremental scan lane: the full window product sum
/// for each row of the band plus one running scratch value, `v_z + 1`
/// accumulators in total. No other per-lane state exists.
#[derive(Debug, Clone)]
pub struct ProductRowSums {
    rows: Vec<f64>,
    rs: f64,
}

impl ProductRowSums {
    /// Number of live accumulators in this lane.
    pub fn accumulator_count(&self) -> usize {
        self.rows.len() + 1
    }

    /// The running scratch accumulator.
    pub fn scratch(&self) -> f64 {
        self.rs
    }

    /// Per-band-row accumulators.
    pub fn row_values(&self) -> &[f64] {
        &self.rows
    }
}

/// Product of reference and target intensities for virtual column `u` and
/// row `j` of the window at disparity `d`; both reads clamp to the border,
/// the target `d` columns to the left.
#[inline]
fn prod(reference: &GrayImage, target: &GrayImage, u: isize, j: isize, d: isize) -> f64 {
    reference.get_clamped(u, j) * target.get_clamped(u - d, j)
}

/// Σ over one window row: product sums for columns `x−r ..= x+r` at row `j`.
#[inline]
fn row_product_sum(
    reference: &GrayImage,
    target: &GrayImage,
    x: usize,
    j: isize,
    d: isize,
    r: usize,
) -> f64 {
    let (x, r) = (x as isize, r as isize);
    let mut acc = 0.0;
    for u in (x - r)..=(x + r) {
        acc += prod(reference, target, u, j, d);
    }
    acc
}

/// Seeds one scan lane at the first column of a band: computes the full
/// `(2r+1)²` product sum for the band's first pixel into the scratch
/// accumulator while retaining the product sum of window row `band_top − r`
/// (the row that leaves when the window steps down) in the first row slot.
pub fn product_sum_initial(
    reference: &GrayImage,
    target: &GrayImage,
    x: usize,
    band_top: usize,
    d: usize,
    r: usize,
    v_z: usize,
) -> ProductRowSums {
    assert!(band_top < reference.height, "band must start inside the image");
    assert!(v_z >= 1, "band height must be at least 1");
    let band_rows = v_z.min(reference.height - band_top);
    let mut lane = ProductRowSums { rows: vec![0.0; band_rows], rs: 0.0 };
    let (ri, di) = (r as isize, d as isize);
    let top = band_top as isize - ri;
    lane.rows[0] = row_product_sum(reference, target, x, top, di, r);
    lane.rs = lane.rows[0];
    for j in (top + 1)..=(band_top as isize + ri) {
        lane.rs += row_product_sum(reference, target, x, j, di, r);
    }
    lane
}

/// Walks one (tile, band, disparity) lane: down the first column, then one
/// column right at a time with four-corner updates, handing every completed
/// window product sum to `emit(x, band_row, Σ)`.
#[allow(clippy::too_many_arguments)]
fn scan_lane(
    reference: &GrayImage,
    target: &GrayImage,
    x0: usize,
    x1: usize,
    band_top: usize,
    band_rows: usize,
    d: usize,
    r: usize,
    mut emit: impl FnMut(usize, usize, f64),
) {
    let (ri, di) = (r as isize, d as isize);
    let mut lane = product_sum_initial(reference, target, x0, band_top, d, r, band_rows);
    emit(x0, 0, lane.rs);

    // Down the first column. The retained row sum lets the first step reuse
    // and then recover the full sum in place; later steps fold the leaving
    // row back out term by term.
    for k in 1..band_rows {
        let y = band_top + k;
        if k == 1 {
            lane.rs -= lane.rows[0];
            lane.rows[0] += lane.rs; // now the full sum for the first band row
        } else {
            let leaving = y as isize - 1 - ri;
            for u in (x0 as isize - ri)..=(x0 as isize + ri) {
                lane.rs -= prod(reference, target, u, leaving, di);
            }
        }
        lane.rs += row_product_sum(reference, target, x0, y as isize + ri, di, r);
        emit(x0, k, lane.rs);
        lane.rows[k] = lane.rs;
    }
    if band_rows == 1 {
        lane.rows[0] = lane.rs;
    }

    // Across the tile: the scratch accumulator carries the column difference
    // (entering column minus leaving column), corner-adjusted as it moves
    // down the band, and each row accumulator absorbs it.
    for x in x0 + 1..x1 {
        let u_in = (x + r) as isize;
        let u_out = x as isize - ri - 1;
        let top = band_top as isize - ri;
        lane.rs = prod(reference, target, u_in, top, di) - prod(reference, target, u_out, top, di);
        for j in (top + 1)..=(band_top as isize + ri) {
            lane.rs +=
                prod(reference, target, u_in, j, di) - prod(reference, target, u_out, j, di);
        }
        lane.rows[0] += lane.rs;
        emit(x, 0, lane.rows[0]);
        for k in 1..band_rows {
            let y = (band_top + k) as isize;
            lane.rs += prod(reference, target, u_in, y + ri, di)
                - prod(reference, target, u_out, y + ri, di)
                - prod(reference, target, u_in, y - 1 - ri, di)
                + prod(reference, target, u_out, y - 1 - ri, di);
            lane.rows[k] += lane.rs;
            emit(x, k, lane.rows[k]);
        }
    }
}

fn check_pair(reference: &GrayImage, target: &GrayImage) -> Result<()> {
    if reference.width != target.width || reference.height != target.height {
        return Err(Error::DimensionMismatch {
            left_width: reference.width,
            left_height: reference.height,
            right_width: target.width,
            right_height: target.height,
        });
    }
    Ok(())
}

/// σ planes derived from window statistics, one value per pixel.
fn sigma_plane(stats: &WindowStats) -> Vec<f64> {
    (0..stats.sum.len()).into_par_iter().map(|i| stats.sigma(i)).collect()
}

/// Fast ZNCC cost volume: incremental band-and-tile sweep over window
/// product sums, normalized with precomputed window statistics.
///
/// Matches [`zncc_reference`] within 1e-5 absolutely. Bands taller than the
/// image fall back to one full-height band. Costs are clamped to `[0, 1]`;
/// infeasible pixels (`x < d`) and windows with σ below the floor get 0.
pub fn zncc_fast(
    reference: &GrayImage,
    target: &GrayImage,
    cfg: &ScanConfig,
    stats_ref: &WindowStats,
    stats_tgt: &WindowStats,
) -> Result<CostVolume> {
    cfg.validate()?;
    check_pair(reference, target)?;
    for (name, stats) in [("reference", stats_ref), ("target", stats_tgt)] {
        if stats.width != reference.width || stats.height != reference.height {
            return Err(Error::InvalidArgument(format!(
                "{name} window statistics sized {}x{}, image is {}x{}",
                stats.width, stats.height, reference.width, reference.height
            )));
        }
        if stats.radius != cfg.radius {
            return Err(Error::InvalidArgument(format!(
                "{name} window statistics at radius {}, scan expects {}",
                stats.radius, cfg.radius
            )));
        }
    }

    let (w, h, d_max) = (reference.width, reference.height, cfg.max_disparity);
    let r = cfg.radius;
    let n = (cfg.window_len() * cfg.window_len()) as f64;
    let sig_ref = sigma_plane(stats_ref);
    let sig_tgt = sigma_plane(stats_tgt);

    let band_height = cfg.v_z.min(h);
    let mut volume = CostVolume::zeros(w, h, d_max);
    let band_len = band_height * w * d_max;
    volume
        .data
        .par_chunks_mut(band_len)
        .enumerate()
        .for_each(|(band_idx, band)| {
            let band_top = band_idx * band_height;
            let band_rows = band.len() / (w * d_max);
            let mut tile_start = 0;
            while tile_start < w {
                let tile_end = (tile_start + cfg.h_z).min(w);
                for d in 0..d_max {
                    if tile_end <= d {
                        continue; // whole tile infeasible; costs stay 0
                    }
                    scan_lane(
                        reference,
                        target,
                        tile_start,
                        tile_end,
                        band_top,
                        band_rows,
                        d,
                        r,
                        |x, k, product_sum| {
                            let cost = if x < d {
                                0.0
                            } else {
                                let y = band_top + k;
                                let i_ref = y * w + x;
                                let i_tgt = y * w + (x - d);
                                let (sr, st) = (sig_ref[i_ref], sig_tgt[i_tgt]);
                                if sr < cfg.sigma_floor || st < cfg.sigma_floor {
                                    0.0
                                } else {
                                    let num = product_sum
                                        - n * stats_ref.mean[i_ref] * stats_tgt.mean[i_tgt];
                                    (num / (sr * st)).clamp(0.0, 1.0)
                                }
                            };
                            band[(k * w + x) * d_max + d] = cost;
                        },
                    );
                }
                tile_start = tile_end;
            }
        });
    Ok(volume)
}

/// Reference ZNCC cost volume: per-pixel window means and spreads computed
/// by direct loops, then `C = Σ ΔI_R·ΔI_T / (σ_R·σ_T)` per disparity, with
/// the same clamping, σ floor, and `[0, 1]` range as [`zncc_fast`].
pub fn zncc_reference(
    reference: &GrayImage,
    target: &GrayImage,
    cfg: &ScanConfig,
) -> Result<CostVolume> {
    cfg.validate()?;
    check_pair(reference, target)?;
    let (w, h, d_max) = (reference.width, reference.height, cfg.max_disparity);
    let ri = cfg.radius as isize;

    // Two direct passes per pixel: mean, then Σ (I − mean)².
    let moments = |img: &GrayImage| -> (Vec<f64>, Vec<f64>) {
        let n = (cfg.window_len() * cfg.window_len()) as f64;
        let mut mean = vec![0.0; w * h];
        let mut sigma = vec![0.0; w * h];
        mean.par_chunks_mut(w)
            .zip(sigma.par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (mean_row, sigma_row))| {
                for x in 0..w {
                    let mut s = 0.0;
                    for dy in -ri..=ri {
                        for dx in -ri..=ri {
                            s += img.get_clamped(x as isize + dx, y as isize + dy);
                        }
                    }
                    let m = s / n;
                    let mut dev = 0.0;
                    for dy in -ri..=ri {
                        for dx in -ri..=ri {
                            let delta = img.get_clamped(x as isize + dx, y as isize + dy) - m;
                            dev += delta * delta;
                        }
                    }
                    mean_row[x] = m;
                    sigma_row[x] = dev.sqrt();
                }
            });
        (mean, sigma)
    };
    let (mean_ref, sig_ref) = moments(reference);
    let (mean_tgt, sig_tgt) = moments(target);

    let mut volume = CostVolume::zeros(w, h, d_max);
    volume
        .data
        .par_chunks_mut(w * d_max)
        .enumerate()
        .for_each(|(y, row)| {
            let yi = y as isize;
            for x in 0..w {
                for d in 0..d_max {
                    let cost = if x < d {
                        0.0
                    } else {
                        let i_ref = y * w + x;
                        let i_tgt = y * w + (x - d);
                        let (sr, st) = (sig_ref[i_ref], sig_tgt[i_tgt]);
                        if sr < cfg.sigma_floor || st < cfg.sigma_floor {
                            0.0
                        } else {
                            let (mr, mt) = (mean_ref[i_ref], mean_tgt[i_tgt]);
                            let mut num = 0.0;
                            for dy in -ri..=ri {
                                for dx in -ri..=ri {
                                    let a = reference.get_clamped(x as isize + dx, yi + dy) - mr;
                                    let b = target
                                        .get_clamped(x as isize - d as isize + dx, yi + dy)
                                        - mt;
                                    num += a * b;
                                }
                            }
                            (num / (sr * st)).clamp(0.0, 1.0)
                        }
                    };
                    row[x * d_max + d] = cost;
                }
            }
        });
    Ok(volume)
}

/// Writes a cost volume for cross-checking against other implementations:
/// width, height, and disparity count as little-endian u32, then the costs
/// as little-endian f32 in storage order.
pub fn write_cost_volume(cv: &CostVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(12 + cv.data.len() * 4);
    for dim in [cv.width, cv.height, cv.max_disparity] {
        bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in &cv.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads a cost volume written by [`write_cost_volume`].
pub fn read_cost_volume(path: impl AsRef<Path>) -> Result<CostVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let format_err = |offset: u64, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    };
    if bytes.len() < 12 {
        return Err(format_err(bytes.len() as u64, "truncated header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let (w, h, d) = (dim(0), dim(1), dim(2));
    let need = 12 + w * h * d * 4;
    if bytes.len() != need {
        return Err(format_err(
            bytes.len().min(need) as u64,
            format!("expected {need} bytes for {w}x{h}x{d}, file has {}", bytes.len()),
        ));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(CostVolume { width: w, height: h, max_disparity: d, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::synth_shift_pair;
    use crate::summation::window_sums_direct;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h).map(|_| (rng.next_u32() & 0xff) as f64).collect();
        GrayImage::from_vec(w, h, data).unwrap()
    }

    fn cfg(r: usize, d: usize, v_z: usize, h_z: usize) -> ScanConfig {
        ScanConfig { radius: r, max_disparity: d, v_z, h_z, sigma_floor: 1e-6 }
    }

    fn fast(reference: &GrayImage, target: &GrayImage, c: &ScanConfig) -> CostVolume {
        let sr = window_sums_direct(reference, c.radius);
        let st = window_sums_direct(target, c.radius);
        zncc_fast(reference, target, c, &sr, &st).unwrap()
    }

    fn max_abs_diff(a: &CostVolume, b: &CostVolume) -> f64 {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn self_correlation_is_one_on_texture() {
        let img = random_image(12, 9, 21);
        let volume = fast(&img, &img, &cfg(1, 1, 4, 32));
        for y in 0..9 {
            for x in 0..12 {
                assert!((volume.at(x, y, 0) - 1.0).abs() < 1e-9, "({x},{y})");
            }
        }
    }

    #[test]
    fn constant_windows_cost_zero() {
        let img = GrayImage::from_vec(8, 6, vec![37.0; 48]).unwrap();
        let volume = fast(&img, &img, &cfg(1, 4, 4, 32));
        assert!(volume.data.iter().all(|&v| v == 0.0));
        let reference = zncc_reference(&img, &img, &cfg(1, 4, 4, 32)).unwrap();
        assert!(reference.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn infeasible_disparities_cost_zero() {
        let (l, r) = synth_shift_pair(16, 8, 2, 5).unwrap();
        let volume = fast(&l, &r, &cfg(1, 8, 4, 32));
        for y in 0..8 {
            for x in 0..16 {
                for d in (x + 1)..8 {
                    assert_eq!(volume.at(x, y, d), 0.0, "({x},{y},{d})");
                }
            }
        }
    }

    #[test]
    fn costs_stay_in_unit_interval() {
        let a = random_image(20, 10, 1);
        let b = random_image(20, 10, 2);
        let volume = fast(&a, &b, &cfg(2, 6, 4, 8));
        assert!(volume.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn fast_matches_reference_on_random_pairs() {
        for seed in 0..4 {
            let a = random_image(26, 14, 100 + seed);
            let b = random_image(26, 14, 200 + seed);
            for r in [1, 2] {
                let c = cfg(r, 6, 3, 8);
                let diff = max_abs_diff(&fast(&a, &b, &c), &zncc_reference(&a, &b, &c).unwrap());
                assert!(diff <= 1e-5, "seed {seed} r {r}: {diff}");
            }
        }
    }

    #[test]
    fn band_taller_than_image_falls_back_to_full_height() {
        let a = random_image(18, 5, 31);
        let b = random_image(18, 5, 32);
        let tall = fast(&a, &b, &cfg(1, 4, 64, 8));
        let normal = zncc_reference(&a, &b, &cfg(1, 4, 64, 8)).unwrap();
        assert!(max_abs_diff(&tall, &normal) <= 1e-5);
    }

    #[test]
    fn partial_bottom_band_is_covered() {
        // 7 rows with v_z = 4 leaves a 3-row band; v_z = 6 leaves 1 row.
        let a = random_image(15, 7, 41);
        let b = random_image(15, 7, 42);
        for v_z in [4, 6] {
            let c = cfg(1, 4, v_z, 4);
            let diff = max_abs_diff(&fast(&a, &b, &c), &zncc_reference(&a, &b, &c).unwrap());
            assert!(diff <= 1e-5, "v_z {v_z}: {diff}");
        }
    }

    #[test]
    fn shifted_pair_peaks_at_true_disparity() {
        let shift = 3;
        let (l, r) = synth_shift_pair(64, 32, shift, 77).unwrap();
        let volume = fast(&l, &r, &cfg(1, 8, 4, 32));
        for y in 0..32 {
            for x in (shift + 1)..(64 - 1) {
                let mut best = (0, f64::MIN);
                for d in 0..8 {
                    let c = volume.at(x, y, d);
                    if c > best.1 {
                        best = (d, c);
                    }
                }
                assert_eq!(best.0, shift, "({x},{y})");
                assert!((volume.at(x, y, shift) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lane_holds_exactly_band_plus_one_accumulators() {
        let a = random_image(10, 10, 3);
        let b = random_image(10, 10, 4);
        for v_z in [2, 4, 6] {
            let lane = product_sum_initial(&a, &b, 4, 0, 1, 1, v_z);
            assert_eq!(lane.accumulator_count(), v_z + 1);
        }
        // A band clipped by the image bottom keeps one accumulator per
        // remaining row plus the scratch.
        let lane = product_sum_initial(&a, &b, 4, 8, 1, 1, 4);
        assert_eq!(lane.accumulator_count(), 3);
    }

    #[test]
    fn initial_lane_on_unit_images_sums_window_area() {
        let ones = GrayImage::from_vec(9, 9, vec![1.0; 81]).unwrap();
        for r in [1usize, 2] {
            let l = 2 * r + 1;
            let lane = product_sum_initial(&ones, &ones, 4, 4, 0, r, 2);
            assert_eq!(lane.scratch(), (l * l) as f64);
            assert_eq!(lane.row_values()[0], l as f64);
        }
    }

    #[test]
    fn initial_lane_matches_hand_computed_fixture() {
        // 5x5 fixture, r = 1, window centered at (2, 1), disparity 1.
        let reference = GrayImage::from_vec(
            5,
            5,
            vec![
                1.0, 2.0, 3.0, 4.0, 5.0, //
                6.0, 7.0, 8.0, 9.0, 10.0, //
                11.0, 12.0, 13.0, 14.0, 15.0, //
                16.0, 17.0, 18.0, 19.0, 20.0, //
                21.0, 22.0, 23.0, 24.0, 25.0,
            ],
        )
        .unwrap();
        let target = GrayImage::from_vec(
            5,
            5,
            vec![
                2.0, 1.0, 2.0, 1.0, 2.0, //
                1.0, 2.0, 1.0, 2.0, 1.0, //
                2.0, 1.0, 2.0, 1.0, 2.0, //
                1.0, 2.0, 1.0, 2.0, 1.0, //
                2.0, 1.0, 2.0, 1.0, 2.0,
            ],
        )
        .unwrap();
        let lane = product_sum_initial(&reference, &target, 2, 1, 1, 1, 2);
        // Window rows 0..2; reference columns 1..3 pair with target columns
        // 0..2. Row 0: 2*2 + 3*1 + 4*2 = 15; row 1: 7*1 + 8*2 + 9*1 = 32;
        // row 2: 12*2 + 13*1 + 14*2 = 65. Total 112.
        assert_eq!(lane.row_values()[0], 15.0);
        assert_eq!(lane.scratch(), 112.0);
    }

    #[test]
    fn sigma_floor_rejects_flat_reference_window() {
        // Flat reference windows must zero the cost even when the target has
        // texture.
        let flat = GrayImage::from_vec(8, 6, vec![9.0; 48]).unwrap();
        let textured = random_image(8, 6, 50);
        let volume = fast(&flat, &textured, &cfg(1, 2, 4, 32));
        assert!(volume.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dump_round_trips_within_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cv.bin");
        let a = random_image(9, 5, 8);
        let b = random_image(9, 5, 9);
        let volume = fast(&a, &b, &cfg(1, 3, 4, 32));
        write_cost_volume(&volume, &path).unwrap();
        let back = read_cost_volume(&path).unwrap();
        assert_eq!(
            (back.width, back.height, back.max_disparity),
            (volume.width, volume.height, volume.max_disparity)
        );
        let diff = max_abs_diff(&back, &volume);
        assert!(diff <= 1e-6, "f32 round trip drift {diff}");
    }

    #[test]
    fn dump_length_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cv.bin");
        let mut bytes = Vec::new();
        for dim in [4u32, 3, 2] {
            bytes.extend_from_slice(&dim.to_le_bytes());
        }
        bytes.extend_from_slice(&[0; 10]); // wrong payload size
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cost_volume(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        assert!(cfg(0, 4, 4, 32).validate().is_err());
        assert!(cfg(1, 0, 4, 32).validate().is_err());
        assert!(cfg(1, 4, 1, 32).validate().is_err());
        assert!(cfg(1, 4, 4, 0).validate().is_err());
        let mut c = cfg(1, 4, 4, 32);
        c.sigma_floor = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mismatched_stats_are_rejected() {
        let a = random_image(12, 8, 61);
        let b = random_image(12, 8, 62);
        let c = cfg(2, 4, 4, 32);
        let good = window_sums_direct(&a, 2);
        let wrong_radius = window_sums_direct(&b, 1);
        assert!(zncc_fast(&a, &b, &c, &good, &wrong_radius).is_err());
        let small = window_sums_direct(&random_image(6, 4, 1), 2);
        assert!(zncc_fast(&a, &b, &c, &small, &good).is_err());
    }
}
