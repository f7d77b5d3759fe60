//! Edge-aware cost aggregation: four sequential one-dimensional recursive
//! passes (left-to-right, right-to-left, top-to-bottom, bottom-to-top) whose
//! per-pixel feedback weights shrink across intensity edges of a guide
//! image.
//!
//! Each pass applies `out(p) = in(p) + out(p - step) * W(p)` along its
//! scanline; the weight is `W = K · exp(−|ΔI| / σ_r)` with `K = exp(−1/σ_s)`
//! and `ΔI` the guide-intensity step onto the previous pixel (0 at the
//! border, so border weights equal `K`). One designated pass can subtract
//! each pixel's own cost at an arbitrary reference disparity as it goes,
//! which pins that disparity channel to zero and keeps the whole volume
//! near zero without changing any per-pixel cost ranking.
//!
//! Aggregation runs in floating point or in one of three integer modes that
//! trade precision for bandwidth; integer modes saturate on overflow and
//! count how often.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::cost_volume::CostVolume;
use crate::image_io::GrayImage;
use crate::quantization::{quantize_scale, PackedCostVolume};
use crate::{Error, Result};

/// Numeric domain used by the three propagation passes after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtMode {
    Float,
    Int32,
    Int16,
    /// 16-bit propagation with costs packed to one byte between the
    /// horizontal and vertical pass groups.
    Int8,
}

/// Aggregation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DtParams {
    /// Spatial falloff; larger values propagate further.
    pub sigma_s: f64,
    /// Range falloff; larger values let costs cross stronger edges.
    pub sigma_r: f64,
    /// Base feedback weight, always `exp(−1/sigma_s)`.
    pub k: f64,
    /// Disparity channel subtracted by the zero-mean normalization.
    pub d_arb: usize,
    /// Scale factor applied when entering an integer mode.
    pub t_scale: i32,
    pub mode: DtMode,
}

impl DtParams {
    pub fn new(sigma_s: f64, sigma_r: f64, d_arb: usize, t_scale: i32, mode: DtMode) -> Result<Self> {
        if !sigma_s.is_finite() || sigma_s <= 0.0 {
            return Err(Error::InvalidArgument("sigma_s must be positive".into()));
        }
        if !sigma_r.is_finite() || sigma_r <= 0.0 {
            return Err(Error::InvalidArgument("sigma_r must be positive".into()));
        }
        if t_scale < 1 {
            return Err(Error::InvalidArgument("t_scale must be at least 1".into()));
        }
        Ok(Self { sigma_s, sigma_r, k: (-1.0 / sigma_s).exp(), d_arb, t_scale, mode })
    }
}

impl Default for DtParams {
    fn default() -> Self {
        Self::new(5.0, 52.0, 0, 21, DtMode::Float).unwrap()
    }
}

/// Per-pixel feedback weights for the four pass directions.
///
/// `left[p]` weighs the neighbor to the left, and so on; weights lie in
/// `(0, K]` and are consistent between opposing directions:
/// `left(x, y) == right(x-1, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMaps {
    pub width: usize,
    pub height: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

/// Computes the four directional weight maps from a guide image.
pub fn compute_weights(guide: &GrayImage, p: &DtParams) -> WeightMaps {
    let (w, h) = (guide.width, guide.height);
    let weight = |delta: f64| p.k * (-delta.abs() / p.sigma_r).exp();
    let mut maps = WeightMaps {
        width: w,
        height: h,
        left: vec![0.0; w * h],
        right: vec![0.0; w * h],
        up: vec![0.0; w * h],
        down: vec![0.0; w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let c = guide.get(x, y);
            maps.left[i] = weight(if x > 0 { c - guide.get(x - 1, y) } else { 0.0 });
            maps.right[i] = weight(if x + 1 < w { c - guide.get(x + 1, y) } else { 0.0 });
            maps.up[i] = weight(if y > 0 { c - guide.get(x, y - 1) } else { 0.0 });
            maps.down[i] = weight(if y + 1 < h { c - guide.get(x, y + 1) } else { 0.0 });
        }
    }
    maps
}

/// One of the four scan directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassDirection {
    LeftToRight,
    RightToLeft,
    TopToBottom,
    BottomToTop,
}

fn check_volume_weights(cv: &CostVolume, w: &WeightMaps) -> Result<()> {
    if cv.width != w.width || cv.height != w.height {
        return Err(Error::DimensionMismatch {
            left_width: cv.width,
            left_height: cv.height,
            right_width: w.width,
            right_height: w.height,
        });
    }
    Ok(())
}

/// In-place horizontal recursive pass over float costs, one scanline per
/// worker. `normalize` carries the disparity channel to subtract, read at
/// each pixel before it is updated.
fn horizontal_float(
    data: &mut [f64],
    width: usize,
    d_max: usize,
    weights: &[f64],
    reverse: bool,
    normalize: Option<usize>,
) {
    data.par_chunks_mut(width * d_max)
        .enumerate()
        .for_each(|(y, row)| {
            let step = |row: &mut [f64], x: usize, prev: Option<usize>| {
                let wt = weights[y * width + x];
                match (prev, normalize) {
                    (Some(p), Some(da)) => {
                        let sub = row[x * d_max + da];
                        for d in 0..d_max {
                            row[x * d_max + d] += row[p * d_max + d] * wt - sub;
                        }
                    }
                    (Some(p), None) => {
                        for d in 0..d_max {
                            row[x * d_max + d] += row[p * d_max + d] * wt;
                        }
                    }
                    (None, Some(da)) => {
                        let sub = row[x * d_max + da];
                        for d in 0..d_max {
                            row[x * d_max + d] -= sub;
                        }
                    }
                    (None, None) => {}
                }
            };
            if reverse {
                for x in (0..width).rev() {
                    let prev = if x + 1 < width { Some(x + 1) } else { None };
                    step(row, x, prev);
                }
            } else {
                for x in 0..width {
                    step(row, x, x.checked_sub(1));
                }
            }
        });
}

/// In-place vertical recursive pass over float costs: rows advance
/// sequentially, pixels within a row in parallel.
fn vertical_float(
    data: &mut [f64],
    width: usize,
    height: usize,
    d_max: usize,
    weights: &[f64],
    reverse: bool,
    normalize: Option<usize>,
) {
    let row_len = width * d_max;
    if let Some(da) = normalize {
        let y0 = if reverse { height - 1 } else { 0 };
        data[y0 * row_len..(y0 + 1) * row_len]
            .par_chunks_mut(d_max)
            .for_each(|px| {
                let sub = px[da];
                for v in px.iter_mut() {
                    *v -= sub;
                }
            });
    }
    let advance = |data: &mut [f64], y: usize, prev_y: usize| {
        let (cur, prev) = if prev_y < y {
            let (head, tail) = data.split_at_mut(y * row_len);
            (&mut tail[..row_len], &head[prev_y * row_len..(prev_y + 1) * row_len])
        } else {
            let (head, tail) = data.split_at_mut(prev_y * row_len);
            (&mut head[y * row_len..], &tail[..row_len])
        };
        cur.par_chunks_mut(d_max)
            .zip(prev.par_chunks(d_max))
            .enumerate()
            .for_each(|(x, (c, p))| {
                let wt = weights[y * width + x];
                match normalize {
                    Some(da) => {
                        let sub = c[da];
                        for d in 0..d_max {
                            c[d] += p[d] * wt - sub;
                        }
                    }
                    None => {
                        for d in 0..d_max {
                            c[d] += p[d] * wt;
                        }
                    }
                }
            });
    };
    if reverse {
        for y in (0..height.saturating_sub(1)).rev() {
            advance(data, y, y + 1);
        }
    } else {
        for y in 1..height {
            advance(data, y, y - 1);
        }
    }
}

fn float_pass(cv: &CostVolume, w: &WeightMaps, dir: PassDirection, normalize: Option<usize>) -> CostVolume {
    let mut out = cv.clone();
    match dir {
        PassDirection::LeftToRight => {
            horizontal_float(&mut out.data, cv.width, cv.max_disparity, &w.left, false, normalize)
        }
        PassDirection::RightToLeft => {
            horizontal_float(&mut out.data, cv.width, cv.max_disparity, &w.right, true, normalize)
        }
        PassDirection::TopToBottom => vertical_float(
            &mut out.data,
            cv.width,
            cv.height,
            cv.max_disparity,
            &w.up,
            false,
            normalize,
        ),
        PassDirection::BottomToTop => vertical_float(
            &mut out.data,
            cv.width,
            cv.height,
            cv.max_disparity,
            &w.down,
            true,
            normalize,
        ),
    }
    out
}

/// Left-to-right pass: `out(x) = in(x) + out(x-1) * W_L(x)`, first column
/// passes through. Returns a fresh volume.
pub fn dt_pass_l2r(cv: &CostVolume, w: &WeightMaps) -> Result<CostVolume> {
    check_volume_weights(cv, w)?;
    Ok(float_pass(cv, w, PassDirection::LeftToRight, None))
}

/// Right-to-left pass over the left-to-right output.
pub fn dt_pass_r2l(cv: &CostVolume, w: &WeightMaps) -> Result<CostVolume> {
    check_volume_weights(cv, w)?;
    Ok(float_pass(cv, w, PassDirection::RightToLeft, None))
}

/// Top-to-bottom pass over the horizontal result.
pub fn dt_pass_u2d(cv: &CostVolume, w: &WeightMaps) -> Result<CostVolume> {
    check_volume_weights(cv, w)?;
    Ok(float_pass(cv, w, PassDirection::TopToBottom, None))
}

/// Bottom-to-top pass, the last of the four.
pub fn dt_pass_d2u(cv: &CostVolume, w: &WeightMaps) -> Result<CostVolume> {
    check_volume_weights(cv, w)?;
    Ok(float_pass(cv, w, PassDirection::BottomToTop, None))
}

/// Runs the pass in `at` with zero-mean normalization: every produced value
/// has the same pixel's freshly read `d_arb`-channel input subtracted, so
/// the recurrence becomes `out(p, d) = in(p, d) + out(p - step, d) * W(p)
/// − in(p, d_arb)` and the `d_arb` channel of the output is identically 0.
///
/// Because the subtracted term is the same for every `d` at a pixel, the
/// per-pixel cost ranking — and therefore the disparity chosen later — is
/// unchanged.
pub fn normalize_zero_mean(
    cv: &CostVolume,
    w: &WeightMaps,
    p: &DtParams,
    at: PassDirection,
) -> Result<CostVolume> {
    check_volume_weights(cv, w)?;
    if p.d_arb >= cv.max_disparity {
        return Err(Error::InvalidArgument(format!(
            "d_arb {} outside disparity range 0..{}",
            p.d_arb, cv.max_disparity
        )));
    }
    Ok(float_pass(cv, w, at, Some(p.d_arb)))
}

/// Integer-domain cost volume used by the reduced-precision modes.
struct IntVolume {
    width: usize,
    height: usize,
    d_max: usize,
    data: Vec<i32>,
}

#[inline]
fn saturate(v: i64, lo: i32, hi: i32, saturations: &AtomicU64) -> i32 {
    if v > hi as i64 {
        saturations.fetch_add(1, Ordering::Relaxed);
        hi
    } else if v < lo as i64 {
        saturations.fetch_add(1, Ordering::Relaxed);
        lo
    } else {
        v as i32
    }
}

/// Scales float costs by `t` into the integer domain, saturating to
/// `[lo, hi]`.
fn quantize_volume(cv: &CostVolume, t: i32, lo: i32, hi: i32, saturations: &AtomicU64) -> IntVolume {
    let data: Vec<i32> = cv
        .data
        .par_iter()
        .map(|&v| {
            if (lo, hi) == (i16::MIN as i32, i16::MAX as i32) {
                let mut local = 0u64;
                let q = quantize_scale(v, t, &mut local) as i32;
                if local > 0 {
                    saturations.fetch_add(local, Ordering::Relaxed);
                }
                q
            } else {
                let scaled = (v * t as f64).round();
                if scaled > hi as f64 {
                    saturations.fetch_add(1, Ordering::Relaxed);
                    hi
                } else if scaled < lo as f64 {
                    saturations.fetch_add(1, Ordering::Relaxed);
                    lo
                } else {
                    scaled as i32
                }
            }
        })
        .collect();
    IntVolume { width: cv.width, height: cv.height, d_max: cv.max_disparity, data }
}

/// Integer twin of [`horizontal_float`]; the feedback product is computed in
/// floats, rounded, and the result saturated to `[lo, hi]`.
fn horizontal_int(
    v: &mut IntVolume,
    weights: &[f64],
    reverse: bool,
    normalize: Option<usize>,
    lo: i32,
    hi: i32,
    saturations: &AtomicU64,
) {
    let (width, d_max) = (v.width, v.d_max);
    v.data
        .par_chunks_mut(width * d_max)
        .enumerate()
        .for_each(|(y, row)| {
            let step = |row: &mut [i32], x: usize, prev: Option<usize>| {
                let wt = weights[y * width + x];
                let sub = normalize.map(|da| row[x * d_max + da] as i64).unwrap_or(0);
                if prev.is_none() && normalize.is_none() {
                    return;
                }
                for d in 0..d_max {
                    let carry = match prev {
                        Some(p) => (row[p * d_max + d] as f64 * wt).round() as i64,
                        None => 0,
                    };
                    let raw = row[x * d_max + d] as i64 + carry - sub;
                    row[x * d_max + d] = saturate(raw, lo, hi, saturations);
                }
            };
            if reverse {
                for x in (0..width).rev() {
                    let prev = if x + 1 < width { Some(x + 1) } else { None };
                    step(row, x, prev);
                }
            } else {
                for x in 0..width {
                    step(row, x, x.checked_sub(1));
                }
            }
        });
}

/// Integer twin of [`vertical_float`].
fn vertical_int(
    v: &mut IntVolume,
    weights: &[f64],
    reverse: bool,
    normalize: Option<usize>,
    lo: i32,
    hi: i32,
    saturations: &AtomicU64,
) {
    let (width, height, d_max) = (v.width, v.height, v.d_max);
    let row_len = width * d_max;
    if let Some(da) = normalize {
        let y0 = if reverse { height - 1 } else { 0 };
        v.data[y0 * row_len..(y0 + 1) * row_len]
            .par_chunks_mut(d_max)
            .for_each(|px| {
                let sub = px[da] as i64;
                for val in px.iter_mut() {
                    *val = saturate(*val as i64 - sub, lo, hi, saturations);
                }
            });
    }
    let advance = |data: &mut [i32], y: usize, prev_y: usize| {
        let (cur, prev) = if prev_y < y {
            let (head, tail) = data.split_at_mut(y * row_len);
            (&mut tail[..row_len], &head[prev_y * row_len..(prev_y + 1) * row_len])
        } else {
            let (head, tail) = data.split_at_mut(prev_y * row_len);
            (&mut head[y * row_len..], &tail[..row_len])
        };
        cur.par_chunks_mut(d_max)
            .zip(prev.par_chunks(d_max))
            .enumerate()
            .for_each(|(x, (c, p))| {
                let wt = weights[y * width + x];
                let sub = normalize.map(|da| c[da] as i64).unwrap_or(0);
                for d in 0..d_max {
                    let carry = (p[d] as f64 * wt).round() as i64;
                    c[d] = saturate(c[d] as i64 + carry - sub, lo, hi, saturations);
                }
            });
    };
    if reverse {
        for y in (0..height.saturating_sub(1)).rev() {
            advance(&mut v.data, y, y + 1);
        }
    } else {
        for y in 1..height {
            advance(&mut v.data, y, y - 1);
        }
    }
}

/// The aggregated volume plus how many values saturated in integer modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DtOutput {
    pub cost: CostVolume,
    pub saturated: u64,
}

/// Runs the full four-pass aggregation in the configured mode, deriving
/// weights from `guide` (the reference image of the pair).
///
/// All modes run the first (left-to-right) pass in floats. Float mode
/// normalizes during the top-to-bottom pass. Integer modes scale by
/// `t_scale` after the first pass and propagate as integers; `Int32`/`Int16`
/// normalize in the top-to-bottom pass, while `Int8` normalizes in the
/// right-to-left pass, packs every cost to one byte at the end of it, and
/// unpacks at the start of the top-to-bottom pass. Integer results are
/// scaled back by `1/t_scale` on return.
pub fn dt_aggregate(cv: &CostVolume, guide: &GrayImage, p: &DtParams) -> Result<DtOutput> {
    if guide.width != cv.width || guide.height != cv.height {
        return Err(Error::DimensionMismatch {
            left_width: cv.width,
            left_height: cv.height,
            right_width: guide.width,
            right_height: guide.height,
        });
    }
    if p.d_arb >= cv.max_disparity {
        return Err(Error::InvalidArgument(format!(
            "d_arb {} outside disparity range 0..{}",
            p.d_arb, cv.max_disparity
        )));
    }
    let weights = compute_weights(guide, p);

    if p.mode == DtMode::Float {
        let a = dt_pass_l2r(cv, &weights)?;
        let b = dt_pass_r2l(&a, &weights)?;
        let c = normalize_zero_mean(&b, &weights, p, PassDirection::TopToBottom)?;
        let d = dt_pass_d2u(&c, &weights)?;
        return Ok(DtOutput { cost: d, saturated: 0 });
    }

    let (lo, hi) = match p.mode {
        DtMode::Int32 => (i32::MIN, i32::MAX),
        _ => (i16::MIN as i32, i16::MAX as i32),
    };
    let saturations = AtomicU64::new(0);
    let first = dt_pass_l2r(cv, &weights)?;
    let mut iv = quantize_volume(&first, p.t_scale, lo, hi, &saturations);
    drop(first);

    match p.mode {
        DtMode::Int32 | DtMode::Int16 => {
            horizontal_int(&mut iv, &weights.right, true, None, lo, hi, &saturations);
            vertical_int(&mut iv, &weights.up, false, Some(p.d_arb), lo, hi, &saturations);
        }
        DtMode::Int8 => {
            horizontal_int(&mut iv, &weights.right, true, Some(p.d_arb), lo, hi, &saturations);
            // The byte codec keeps precise magnitudes only below zero and
            // collapses everything at or above it, so it expects values
            // where "better" means "more negative". Our volumes rank the
            // other way; negate across the codec so channels worse than the
            // zeroed reference channel collapse onto it — which cannot
            // change the winner — while the informative ones keep their
            // class-graded precision.
            let as16: Vec<i16> = iv.data.iter().map(|&v| (v as i16).saturating_neg()).collect();
            let packed =
                PackedCostVolume::encode_from(&as16, iv.width, iv.height, iv.d_max)?;
            iv.data = packed
                .decode_values()
                .into_iter()
                .map(|v| v.saturating_neg() as i32)
                .collect();
            vertical_int(&mut iv, &weights.up, false, None, lo, hi, &saturations);
        }
        DtMode::Float => unreachable!("handled above"),
    }
    vertical_int(&mut iv, &weights.down, true, None, lo, hi, &saturations);

    let t = p.t_scale as f64;
    let cost = CostVolume {
        width: iv.width,
        height: iv.height,
        max_disparity: iv.d_max,
        data: iv.data.iter().map(|&v| v as f64 / t).collect(),
    };
    Ok(DtOutput { cost, saturated: saturations.into_inner() })
}
