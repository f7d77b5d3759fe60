//! Lossy compression of 16-bit matching costs to one byte, plus packing of
//! four byte codes into 32-bit words.
//!
//! A code byte is a 6-bit significand over a 2-bit flag:
//!
//! ```text
//! bit      7 6 5 4 3 2 | 1 0
//!          significand | flag
//! ```
//!
//! Non-negative costs all map to 0x00 (flag 00). For a negative cost the
//! flag records which field of the two's-complement bits the significand was
//! cut from — `01`: bits 14..9, `10`: bits 10..5, `11`: bits 6..1 — chosen
//! as the highest field whose leading four bits are not all ones, i.e. the
//! first field that still carries information below the sign. Decoding
//! rebuilds the value with sign bit 1, ones between sign and significand,
//! and zeros below, so the error is bounded by the width of the dropped low
//! bits: at most 511, 31, or 1 for flags 01, 10, 11.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// One encoded cost byte: 6-bit significand plus 2-bit position flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Code8(pub u8);

impl Code8 {
    /// The 2-bit field-position flag.
    #[inline]
    pub fn flag(self) -> u8 {
        self.0 & 0b11
    }

    /// The 6-bit significand.
    #[inline]
    pub fn significand(self) -> u8 {
        self.0 >> 2
    }
}

/// Encodes a 16-bit cost; total for every input.
#[inline]
pub fn encode16(v: i16) -> Code8 {
    if v >= 0 {
        return Code8(0);
    }
    let bits = v as u16;
    if (bits >> 11) & 0xf != 0xf {
        Code8((((bits >> 9) & 0x3f) as u8) << 2 | 0b01)
    } else if (bits >> 7) & 0xf != 0xf {
        Code8((((bits >> 5) & 0x3f) as u8) << 2 | 0b10)
    } else {
        Code8((((bits >> 1) & 0x3f) as u8) << 2 | 0b11)
    }
}

/// Decodes a cost byte; total for every input. Bytes with flag 00 decode to
/// 0 (only 0x00 is ever produced by [`encode16`]).
#[inline]
pub fn decode8(c: Code8) -> i16 {
    let code = (c.0 >> 2) as u16;
    match c.0 & 0b11 {
        0b01 => (0x8000 | code << 9) as i16,
        0b10 => (0xf800 | code << 5) as i16,
        0b11 => (0xff80 | code << 1) as i16,
        _ => 0,
    }
}

/// Scales a real cost to a 16-bit integer: `round(v * t)` saturated to
/// `[-32768, 32767]`; saturation bumps the diagnostic counter.
#[inline]
pub fn quantize_scale(v: f64, t: i32, saturations: &mut u64) -> i16 {
    debug_assert!(t > 0, "scale factor must be positive");
    let scaled = (v * t as f64).round();
    if scaled > i16::MAX as f64 {
        *saturations += 1;
        i16::MAX
    } else if scaled < i16::MIN as f64 {
        *saturations += 1;
        i16::MIN
    } else {
        scaled as i16
    }
}

/// Packs the codes for four consecutive disparities into one word: the code
/// for disparity `d` lands in byte `d mod 4` (little-endian).
#[inline]
pub fn pack4(codes: [Code8; 4]) -> u32 {
    u32::from_le_bytes([codes[0].0, codes[1].0, codes[2].0, codes[3].0])
}

/// Splits a packed word back into its four codes.
#[inline]
pub fn unpack4(word: u32) -> [Code8; 4] {
    let b = word.to_le_bytes();
    [Code8(b[0]), Code8(b[1]), Code8(b[2]), Code8(b[3])]
}

/// A cost volume with every value encoded to one byte and packed four
/// disparities per word; the disparity count is padded up to a multiple of
/// four with zero codes.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedCostVolume {
    pub width: usize,
    pub height: usize,
    pub max_disparity: usize,
    pub words: Vec<u32>,
}

impl PackedCostVolume {
    #[inline]
    pub fn words_per_pixel(&self) -> usize {
        self.max_disparity.div_ceil(4)
    }

    /// Encodes a 16-bit volume laid out row-major, disparity innermost.
    pub fn encode_from(
        values: &[i16],
        width: usize,
        height: usize,
        max_disparity: usize,
    ) -> Result<Self> {
        if values.len() != width * height * max_disparity {
            return Err(Error::InvalidArgument(format!(
                "value count {} does not match {width}x{height}x{max_disparity}",
                values.len()
            )));
        }
        let wpp = max_disparity.div_ceil(4);
        let mut words = Vec::with_capacity(width * height * wpp);
        for pixel in values.chunks(max_disparity) {
            for group in 0..wpp {
                let mut codes = [Code8(0); 4];
                for (lane, code) in codes.iter_mut().enumerate() {
                    if let Some(&v) = pixel.get(group * 4 + lane) {
                        *code = encode16(v);
                    }
                }
                words.push(pack4(codes));
            }
        }
        Ok(Self { width, height, max_disparity, words })
    }

    /// Decodes back to a 16-bit volume, dropping the padding lanes.
    pub fn decode_values(&self) -> Vec<i16> {
        let wpp = self.words_per_pixel();
        let mut out = Vec::with_capacity(self.width * self.height * self.max_disparity);
        for pixel_words in self.words.chunks(wpp) {
            let mut d = 0;
            for &word in pixel_words {
                for code in unpack4(word) {
                    if d < self.max_disparity {
                        out.push(decode8(code));
                        d += 1;
                    }
                }
            }
        }
        out
    }
}

/// Writes a packed volume: width, height, disparity count, and a flags word
/// (currently 0) as little-endian u32, then the packed words little-endian.
pub fn write_packed_volume(pv: &PackedCostVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(16 + pv.words.len() * 4);
    for dim in [pv.width as u32, pv.height as u32, pv.max_disparity as u32, 0u32] {
        bytes.extend_from_slice(&dim.to_le_bytes());
    }
    for &w in &pv.words {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads a packed volume written by [`write_packed_volume`].
pub fn read_packed_volume(path: impl AsRef<Path>) -> Result<PackedCostVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let format_err = |offset: u64, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    };
    if bytes.len() < 16 {
        return Err(format_err(bytes.len() as u64, "truncated header".into()));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap());
    let (w, h, d) = (field(0) as usize, field(1) as usize, field(2) as usize);
    if field(3) != 0 {
        return Err(format_err(12, format!("unsupported flags {:#x}", field(3))));
    }
    let need = 16 + w * h * d.div_ceil(4) * 4;
    if bytes.len() != need {
        return Err(format_err(
            bytes.len().min(need) as u64,
            format!("expected {need} bytes for {w}x{h}x{d}, file has {}", bytes.len()),
        ));
    }
    let words = bytes[16..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(PackedCostVolume { width: w, height: h, max_disparity: d, words })
}
