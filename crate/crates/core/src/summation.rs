//! Window sums, means, and sums of squares over square windows with
//! replicate border padding.
//!
//! Two interchangeable backends: direct per-pixel summation (cheap for small
//! windows) and integral images built with a segmented two-layer prefix scan
//! (cheap for large windows). Sums are held in 64-bit integers so both
//! backends produce bit-identical results; intensities are rounded to the
//! nearest integer on entry, which is lossless for 8-bit sources.

use rayon::prelude::*;

use crate::image_io::GrayImage;

/// Lanes per scan group, mirroring the 32-wide SIMD lane blocks the scan
/// pattern is shaped for.
const SCAN_GROUP: usize = 32;
/// Segment length used when building integral images.
const SCAN_SEGMENT: usize = 96;

/// Per-pixel window statistics at a fixed radius.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub width: usize,
    pub height: usize,
    pub radius: usize,
    /// Σ I over the window, per pixel.
    pub sum: Vec<i64>,
    /// Σ I² over the window, per pixel.
    pub sum_sq: Vec<i64>,
    /// `sum / (2r+1)²`, per pixel.
    pub mean: Vec<f64>,
}

impl WindowStats {
    #[inline]
    pub fn window_len(&self) -> usize {
        2 * self.radius + 1
    }

    /// √(Σ I² − n·mean²) at pixel index `i`, clamped at zero.
    #[inline]
    pub fn sigma(&self, i: usize) -> f64 {
        let n = (self.window_len() * self.window_len()) as f64;
        (self.sum_sq[i] as f64 - n * self.mean[i] * self.mean[i]).max(0.0).sqrt()
    }
}

/// Cumulative sums B(x, y) = Σ_{u≤x, v≤y} I(u, v).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<i64>,
}

impl IntegralImage {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> i64 {
        self.data[y * self.width + x]
    }

    /// B(x, y) treating any negative index as 0, so the four-corner window
    /// formula needs no edge cases.
    #[inline]
    fn at_or_zero(&self, x: isize, y: isize) -> i64 {
        if x < 0 || y < 0 {
            0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    /// Sum over the inclusive rectangle `[x0, x1] × [y0, y1]` via four
    /// corners: B(x1,y1) + B(x0−1,y0−1) − B(x1,y0−1) − B(x0−1,y1).
    #[inline]
    pub fn rect_sum(&self, x0: isize, y0: isize, x1: isize, y1: isize) -> i64 {
        self.at_or_zero(x1, y1) + self.at_or_zero(x0 - 1, y0 - 1)
            - self.at_or_zero(x1, y0 - 1)
            - self.at_or_zero(x0 - 1, y1)
    }
}

/// Inclusive prefix sum of one row, processed in segments of `segment_len`
/// with a running carry between segments.
///
/// Each segment runs a two-layer scan: a log-depth shift scan within fixed
/// groups of 32 lanes, then log-depth propagation across group totals (group
/// `i` feeding group `i + 2^(t-1)` per round). With integer accumulators the
/// result is bit-identical to a sequential scan, which tests assert.
pub fn prefix_scan_row(row: &[i64], segment_len: usize) -> Vec<i64> {
    assert!(segment_len >= 1, "segment_len must be at least 1");
    let mut out = Vec::with_capacity(row.len());
    let mut carry: i64 = 0; // running total of all previous segments
    for seg in row.chunks(segment_len) {
        let mut buf = seg.to_vec();

        // Layer 1: shift scan within each 32-lane group. Descending order
        // makes each round read pre-round values, as a lockstep lane shift
        // would.
        for group in buf.chunks_mut(SCAN_GROUP) {
            let n = group.len();
            let mut stride = 1;
            while stride < n {
                for i in (stride..n).rev() {
                    group[i] += group[i - stride];
                }
                stride <<= 1;
            }
        }

        // Layer 2: propagate group totals with the same pattern.
        let num_groups = buf.len().div_ceil(SCAN_GROUP);
        let mut totals: Vec<i64> = buf
            .chunks(SCAN_GROUP)
            .map(|g| *g.last().unwrap())
            .collect();
        let mut stride = 1;
        while stride < num_groups {
            for i in (stride..num_groups).rev() {
                totals[i] += totals[i - stride];
            }
            stride <<= 1;
        }

        // Broadcast each group's exclusive prefix plus the segment carry.
        for (gi, group) in buf.chunks_mut(SCAN_GROUP).enumerate() {
            let base = carry + if gi > 0 { totals[gi - 1] } else { 0 };
            for v in group {
                *v += base;
            }
        }
        if let Some(total) = totals.last() {
            carry += total;
        }
        out.extend_from_slice(&buf);
    }
    out
}

/// Builds an integral image from (w*h) row-major integer values: rows are
/// prefix-scanned in parallel, then columns integrated sequentially.
fn integral_of_values(values: &[i64], width: usize, height: usize) -> Vec<i64> {
    debug_assert_eq!(values.len(), width * height);
    let mut data = vec![0i64; width * height];
    data.par_chunks_mut(width)
        .zip(values.par_chunks(width))
        .for_each(|(out_row, in_row)| {
            out_row.copy_from_slice(&prefix_scan_row(in_row, SCAN_SEGMENT));
        });
    for y in 1..height {
        let (above, below) = data.split_at_mut(y * width);
        let prev = &above[(y - 1) * width..];
        let cur = &mut below[..width];
        for x in 0..width {
            cur[x] += prev[x];
        }
    }
    data
}

fn rounded_pixels(img: &GrayImage) -> Vec<i64> {
    img.data.iter().map(|&v| v.round() as i64).collect()
}

/// Integral image of a grayscale image (intensities rounded to integers).
pub fn integral_image(img: &GrayImage) -> IntegralImage {
    IntegralImage {
        width: img.width,
        height: img.height,
        data: integral_of_values(&rounded_pixels(img), img.width, img.height),
    }
}

/// Replicate-padded copy of the rounded image, grown by `r` on every side.
fn padded_pixels(img: &GrayImage, r: usize) -> (Vec<i64>, usize, usize) {
    let (pw, ph) = (img.width + 2 * r, img.height + 2 * r);
    let mut vals = vec![0i64; pw * ph];
    let ri = r as isize;
    for py in 0..ph {
        for px in 0..pw {
            vals[py * pw + px] = img.get_clamped(px as isize - ri, py as isize - ri).round() as i64;
        }
    }
    (vals, pw, ph)
}

/// Window sums by direct per-pixel summation over the clamped window.
pub fn window_sums_direct(img: &GrayImage, r: usize) -> WindowStats {
    assert!(r >= 1, "window radius must be at least 1");
    let (w, h) = (img.width, img.height);
    let pixels = rounded_pixels(img);
    let n = {
        let l = 2 * r + 1;
        (l * l) as f64
    };
    let mut sum = vec![0i64; w * h];
    let mut sum_sq = vec![0i64; w * h];
    sum.par_chunks_mut(w)
        .zip(sum_sq.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (sum_row, sq_row))| {
            let ri = r as isize;
            for x in 0..w {
                let mut s = 0i64;
                let mut sq = 0i64;
                for dy in -ri..=ri {
                    let cy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    for dx in -ri..=ri {
                        let cx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        let v = pixels[cy * w + cx];
                        s += v;
                        sq += v * v;
                    }
                }
                sum_row[x] = s;
                sq_row[x] = sq;
            }
        });
    let mean = sum.iter().map(|&s| s as f64 / n).collect();
    WindowStats { width: w, height: h, radius: r, sum, sum_sq, mean }
}

/// Window sums via integral images of the replicate-padded domain, read out
/// with the four-corner rectangle formula. Matches [`window_sums_direct`]
/// bit for bit.
pub fn window_sums_integral(img: &GrayImage, r: usize) -> WindowStats {
    assert!(r >= 1, "window radius must be at least 1");
    let (w, h) = (img.width, img.height);
    let (vals, pw, ph) = padded_pixels(img, r);
    let squares: Vec<i64> = vals.iter().map(|&v| v * v).collect();
    let int_v = IntegralImage { width: pw, height: ph, data: integral_of_values(&vals, pw, ph) };
    let int_sq = IntegralImage { width: pw, height: ph, data: integral_of_values(&squares, pw, ph) };

    let n = {
        let l = 2 * r + 1;
        (l * l) as f64
    };
    let side = 2 * r as isize; // window spans [x, x + 2r] in padded coordinates
    let mut sum = vec![0i64; w * h];
    let mut sum_sq = vec![0i64; w * h];
    sum.par_chunks_mut(w)
        .zip(sum_sq.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (sum_row, sq_row))| {
            let yy = y as isize;
            for x in 0..w {
                let xx = x as isize;
                sum_row[x] = int_v.rect_sum(xx, yy, xx + side, yy + side);
                sq_row[x] = int_sq.rect_sum(xx, yy, xx + side, yy + side);
            }
        });
    let mean = sum.iter().map(|&s| s as f64 / n).collect();
    WindowStats { width: w, height: h, radius: r, sum, sum_sq, mean }
}
