//! Grayscale images, disparity maps, and the file formats that carry them.
//!
//! Images travel as binary PGM (`P5`); 16-bit samples are big-endian per the
//! format. Disparity maps use the 16-bit PGM convention where the stored
//! value is `round(disparity * scale)` (scale 256 for published maps) and 0
//! marks an invalid pixel. A plain-text matrix format is provided for small
//! hand-written fixtures.

use std::fs;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Marker stored in [`DisparityMap::data`] for pixels without an estimate.
pub const INVALID_DISPARITY: f64 = -1.0;

/// A grayscale image: row-major real-valued intensities in `[0, 255]`.
///
/// Intensities are kept as reals even when the source was 8-bit so that the
/// later sum/mean/variance arithmetic lives in one numeric domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    /// Builds an image after checking dimensions and the `[0, 255]` range.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0) {
            return Err(Error::InvalidArgument(format!(
                "intensity {bad} outside [0, 255]"
            )));
        }
        Ok(Self { width, height, data })
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Intensity at `(x, y)` with out-of-range coordinates clamped to the
    /// border (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }
}

/// A per-pixel disparity field; negative values mark invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DisparityMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![INVALID_DISPARITY; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] >= 0.0
    }
}

/// Byte cursor over a PGM header that reports offsets in parse errors.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            reason: reason.into(),
        })
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_number(&mut self, what: &str) -> Result<u64> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err(format!("expected {what}"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<u64>()
            .map_err(|_| Error::Format {
                path: self.path.to_path_buf(),
                offset: start as u64,
                reason: format!("{what} out of range"),
            })
    }
}

struct RawPgm {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u16>,
}

fn read_raw_pgm(path: &Path) -> Result<RawPgm> {
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut cur = Cursor { bytes: &bytes, pos: 0, path };

    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return cur.err("not a binary PGM (expected magic \"P5\")");
    }
    cur.pos = 2;
    let width = cur.read_number("width")? as usize;
    let height = cur.read_number("height")? as usize;
    let maxval = cur.read_number("maxval")?;
    if width == 0 || height == 0 {
        return cur.err(format!("degenerate dimensions {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return cur.err(format!("maxval {maxval} outside [1, 65535]"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b' ' | b'\t' | b'\r' | b'\n') => cur.pos += 1,
        _ => return cur.err("expected single whitespace before raster"),
    }

    let count = width * height;
    let wide = maxval > 255;
    let need = count * if wide { 2 } else { 1 };
    let have = bytes.len() - cur.pos;
    if have < need {
        cur.pos = bytes.len();
        return cur.err(format!("truncated raster: need {need} bytes, have {have}"));
    }
    let raster = &bytes[cur.pos..cur.pos + need];
    let samples: Vec<u16> = if wide {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    if let Some(i) = samples.iter().position(|&s| s as u32 > maxval as u32) {
        cur.pos += i * if wide { 2 } else { 1 };
        return cur.err(format!("sample {} exceeds maxval {maxval}", samples[i]));
    }
    Ok(RawPgm { width, height, maxval: maxval as u32, samples })
}

/// Reads an 8-bit binary PGM image.
///
/// Files with maxval above 255 are refused here: 16-bit PGMs carry disparity
/// maps and go through [`read_disparity_pgm`].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let raw = read_raw_pgm(path)?;
    if raw.maxval > 255 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!(
                "maxval {} > 255: 16-bit files are disparity maps, use read_disparity_pgm",
                raw.maxval
            ),
        });
    }
    let data = raw.samples.iter().map(|&s| s as f64).collect();
    Ok(GrayImage::from_vec_unchecked(raw.width, raw.height, data))
}

/// Writes an image as an 8-bit binary PGM (intensities rounded to integers).
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend(img.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads a 16-bit disparity PGM: stored value = disparity * 256, 0 = invalid.
pub fn read_disparity_pgm(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    let raw = read_raw_pgm(path)?;
    if raw.maxval != 65535 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("disparity PGM requires maxval 65535, got {}", raw.maxval),
        });
    }
    let data = raw
        .samples
        .iter()
        .map(|&s| if s == 0 { INVALID_DISPARITY } else { s as f64 / 256.0 })
        .collect();
    Ok(DisparityMap { width: raw.width, height: raw.height, data })
}

/// Writes a disparity map as a 16-bit PGM.
///
/// Valid pixels store `round(d * scale)` clamped to `[1, 65535]` so they can
/// never collide with the 0 = invalid marker.
pub fn write_disparity_map(map: &DisparityMap, path: impl AsRef<Path>, scale: f64) -> Result<()> {
    let path = path.as_ref();
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let mut bytes = format!("P5\n{} {}\n65535\n", map.width, map.height).into_bytes();
    for &d in &map.data {
        let stored: u16 = if d < 0.0 {
            0
        } else {
            (d * scale).round().clamp(1.0, 65535.0) as u16
        };
        bytes.extend_from_slice(&stored.to_be_bytes());
    }
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads the plain-text matrix format: first line `rows cols`, then
/// whitespace-separated intensities in row-major order.
pub fn read_text_matrix(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let format_err = |offset: u64, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    };
    let header_end = text.find('\n').unwrap_or(text.len());
    let mut header = text[..header_end].split_whitespace();
    let rows: usize = header
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| format_err(0, "expected row count".into()))?;
    let cols: usize = header
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| format_err(0, "expected column count".into()))?;
    if header.next().is_some() {
        return Err(format_err(0, "header line must be exactly \"rows cols\"".into()));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for tok in text[header_end..].split_whitespace() {
        let v: f64 = tok.parse().map_err(|_| {
            let offset = tok.as_ptr() as usize - text.as_ptr() as usize;
            format_err(offset as u64, format!("bad value {tok:?}"))
        })?;
        data.push(v);
    }
    if data.len() != rows * cols {
        return Err(format_err(
            text.len() as u64,
            format!("expected {} values, found {}", rows * cols, data.len()),
        ));
    }
    GrayImage::from_vec(cols, rows, data)
}

/// Writes the plain-text matrix format (see [`read_text_matrix`]).
pub fn write_text_matrix(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{} {}\n", img.height, img.width);
    for row in img.data.chunks(img.width) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Generates a seeded random-texture stereo pair with a uniform integer
/// shift: `reference(x, y) == target(x - shift, y)` for `x >= shift`.
///
/// Target columns beyond `width - shift` are never referenced by the
/// relation and are filled with independent noise. The same seed always
/// produces the same pair.
pub fn synth_shift_pair(
    width: usize,
    height: usize,
    shift: usize,
    seed: u64,
) -> Result<(GrayImage, GrayImage)> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "pair dimensions must be positive, got {width}x{height}"
        )));
    }
    if shift >= width {
        return Err(Error::InvalidArgument(format!(
            "shift {shift} must be smaller than width {width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let byte = |rng: &mut ChaCha8Rng| (rng.next_u32() & 0xff) as f64;

    let mut reference = vec![0.0; width * height];
    for v in &mut reference {
        *v = byte(&mut rng);
    }
    let mut target = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            target[y * width + x] = if x + shift < width {
                reference[y * width + x + shift]
            } else {
                byte(&mut rng)
            };
        }
    }
    Ok((
        GrayImage::from_vec_unchecked(width, height, reference),
        GrayImage::from_vec_unchecked(width, height, target),
    ))
}
