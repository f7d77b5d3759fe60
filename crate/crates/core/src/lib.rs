//! CPU stereo matching built around an incrementally scanned ZNCC cost
//! volume.
//!
//! The crate is organized as a pipeline of small, independently testable
//! stages:
//!
//! - [`image_io`]: 8-bit grayscale and 16-bit disparity PGM files, text
//!   matrices, and synthetic shifted pairs for self-checks.
//! - [`summation`]: exact integer window sums — direct loops, integral
//!   images, and a two-layer group/segment prefix scan that reproduces
//!   sequential summation bit for bit.
//! - [`cost_volume`]: zero-normalized cross-correlation matching costs,
//!   computed either by a straightforward reference loop or by the fast
//!   band-and-tile incremental scan that slides window product sums down
//!   and across the image.
//! - [`aggregation`]: four directional recursive smoothing passes with
//!   edge-aware feedback weights, an in-pass zero-mean normalization, and
//!   float/int32/int16/int8 numeric modes.
//! - [`quantization`]: a sign-aware 16-bit → 8-bit cost codec with packing
//!   into 32-bit words and file dumps.
//! - [`pipeline`]: stage composition, winner-take-all disparity selection,
//!   disparity-error evaluation, and a per-stage benchmark.
//!
//! ```no_run
//! use zigmatch::{read_pgm, run_pipeline, write_disparity_map, PipelineConfig};
//!
//! let left = read_pgm("left.pgm")?;
//! let right = read_pgm("right.pgm")?;
//! let mut cfg = PipelineConfig::default();
//! cfg.scan.max_disparity = 64;
//! let disparity = run_pipeline(&left, &right, &cfg)?;
//! write_disparity_map(&disparity, "disparity.pgm", 256.0)?;
//! # Ok::<(), zigmatch::Error>(())
//! ```

pub mod aggregation;
pub mod cost_volume;
mod error;
pub mod image_io;
pub mod pipeline;
pub mod quantization;
pub mod summation;

pub use aggregation::{dt_aggregate, DtMode, DtParams};
pub use cost_volume::{zncc_fast, zncc_reference, CostVolume, ScanConfig};
pub use error::{Error, Result};
pub use image_io::{
    read_disparity_pgm, read_pgm, write_disparity_map, write_pgm, DisparityMap, GrayImage,
    INVALID_DISPARITY,
};
pub use pipeline::{
    benchmark, benchmark_csv, evaluate_d1, run_pipeline, run_pipeline_full, wta, EvalReport,
    PipelineConfig, SummationMethod,
};
