//! `zigmatch` — stereo matching from the command line.
//!
//! Subcommands: `match` (pair → disparity PGM), `eval` (disparity map vs
//! ground truth), `bench` (per-stage timings as CSV), `selftest` (built-in
//! oracle suites).
//!
//! Exit codes are stable across subcommands: 0 success, 2 I/O failure,
//! 3 invalid input or configuration, 4 internal assertion failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use zigmatch::aggregation::{
    compute_weights, dt_pass_l2r, normalize_zero_mean, DtMode, DtParams, PassDirection, WeightMaps,
};
use zigmatch::cost_volume::{write_cost_volume, zncc_reference};
use zigmatch::image_io::synth_shift_pair;
use zigmatch::quantization::{decode8, encode16, pack4, unpack4, Code8};
use zigmatch::summation::{prefix_scan_row, window_sums_direct, window_sums_integral};
use zigmatch::{
    benchmark, benchmark_csv, evaluate_d1, read_disparity_pgm, read_pgm, run_pipeline_full,
    write_disparity_map, CostVolume, Error, PipelineConfig, ScanConfig, SummationMethod,
};

const EXIT_IO: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// Disparities are stored in 16-bit PGMs as `round(d * 256)`.
const DISPARITY_SCALE: f64 = 256.0;

#[derive(Parser)]
#[command(
    name = "zigmatch",
    version,
    about = "CPU stereo matching: incrementally scanned ZNCC costs with edge-aware aggregation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Match a rectified pair and write a 16-bit disparity PGM.
    Match(MatchArgs),
    /// Compare an estimated disparity map against ground truth.
    Eval(EvalArgs),
    /// Time each pipeline stage and emit CSV.
    Bench(BenchArgs),
    /// Run the built-in verification suites.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SumArg {
    Direct,
    Integral,
    Auto,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DtModeArg {
    /// Skip aggregation entirely; select from raw matching costs.
    Off,
    Float,
    Int32,
    Int16,
    Int8,
}

/// Tuning flags shared by `match` and `bench`. Every flag overrides the
/// same-named key of the `--config` file; built-in defaults fill the rest.
#[derive(Args)]
struct Tuning {
    /// Matching window radius (window side = 2r+1).
    #[arg(long)]
    radius: Option<usize>,
    /// Number of disparity candidates (0..D-1).
    #[arg(long = "max-disp")]
    max_disp: Option<usize>,
    /// Rows per scan band.
    #[arg(long)]
    vz: Option<usize>,
    /// Columns per scan tile.
    #[arg(long)]
    hz: Option<usize>,
    /// Window summation method.
    #[arg(long, value_enum)]
    sum: Option<SumArg>,
    /// Aggregation numeric mode, or `off` to disable aggregation.
    #[arg(long = "dt-mode", value_enum)]
    dt_mode: Option<DtModeArg>,
    /// Spatial falloff of the aggregation weights.
    #[arg(long = "sigma-s")]
    sigma_s: Option<f64>,
    /// Range (edge) falloff of the aggregation weights.
    #[arg(long = "sigma-r")]
    sigma_r: Option<f64>,
    /// Integer scale factor for the integer aggregation modes.
    #[arg(long = "scale-t")]
    scale_t: Option<i32>,
    /// Disparity channel pinned to zero by the normalization.
    #[arg(long = "d-arb")]
    d_arb: Option<usize>,
    /// Worker threads (0 = library default).
    #[arg(long)]
    threads: Option<usize>,
    /// key=value settings file merged under the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shorthand for --dt-mode off.
    #[arg(long = "no-dt")]
    no_dt: bool,
}

#[derive(Args)]
struct MatchArgs {
    /// Reference (left) grayscale PGM.
    #[arg(long)]
    left: PathBuf,
    /// Target (right) grayscale PGM.
    #[arg(long)]
    right: PathBuf,
    /// Output disparity PGM (16-bit, 1/256 pixel units).
    #[arg(long)]
    out: PathBuf,
    /// Also dump the selected cost volume to this path.
    #[arg(long = "dump-cost")]
    dump_cost: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated disparity PGM.
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth disparity PGM.
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Reference (left) grayscale PGM.
    #[arg(long)]
    left: PathBuf,
    /// Target (right) grayscale PGM.
    #[arg(long)]
    right: PathBuf,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Timing repeats per stage (median is reported).
    #[arg(long)]
    repeats: Option<usize>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct SelftestArgs {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_INVALID,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Match(args) => cmd_match(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Selftest(args) => cmd_selftest(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("zigmatch: {e}");
            ExitCode::from(match e {
                Error::Io { .. } | Error::Format { .. } => EXIT_IO,
                _ => EXIT_INVALID,
            })
        }
    }
}

/// Settings file: one `key = value` per line, `#` comments, keys named like
/// the long flags. Flags override file values.
fn read_config_file(path: &Path) -> Result<HashMap<String, String>, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{}: line {}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parsed<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>, Error> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            Error::InvalidArgument(format!("config key {key}: cannot parse {raw:?}"))
        }),
    }
}

struct Resolved {
    pipeline: PipelineConfig,
    repeats: usize,
}

const KNOWN_KEYS: [&str; 12] = [
    "radius", "max-disp", "vz", "hz", "sum", "dt-mode", "sigma-s", "sigma-r", "scale-t", "d-arb",
    "threads", "repeats",
];

fn resolve(tuning: &Tuning, repeats_flag: Option<usize>) -> Result<Resolved, Error> {
    let file = match &tuning.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };
    if let Some(unknown) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "config key {unknown:?} is not recognized (known keys: {})",
            KNOWN_KEYS.join(", ")
        )));
    }

    let sum_arg = match tuning.sum {
        Some(s) => Some(s),
        None => match file.get("sum").map(String::as_str) {
            None => None,
            Some("direct") => Some(SumArg::Direct),
            Some("integral") => Some(SumArg::Integral),
            Some("auto") => Some(SumArg::Auto),
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "config key sum: expected direct|integral|auto, got {other:?}"
                )))
            }
        },
    };
    let dt_arg = match tuning.dt_mode {
        Some(m) => Some(m),
        None => match file.get("dt-mode").map(String::as_str) {
            None => None,
            Some("off") => Some(DtModeArg::Off),
            Some("float") => Some(DtModeArg::Float),
            Some("int32") => Some(DtModeArg::Int32),
            Some("int16") => Some(DtModeArg::Int16),
            Some("int8") => Some(DtModeArg::Int8),
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "config key dt-mode: expected off|float|int32|int16|int8, got {other:?}"
                )))
            }
        },
    };
    let dt_arg = if tuning.no_dt { Some(DtModeArg::Off) } else { dt_arg };

    let scan = ScanConfig {
        radius: tuning.radius.or(parsed(&file, "radius")?).unwrap_or(1),
        max_disparity: tuning.max_disp.or(parsed(&file, "max-disp")?).unwrap_or(128),
        v_z: tuning.vz.or(parsed(&file, "vz")?).unwrap_or(4),
        h_z: tuning.hz.or(parsed(&file, "hz")?).unwrap_or(32),
        sigma_floor: ScanConfig::default().sigma_floor,
    };
    let (aggregation_enabled, mode) = match dt_arg.unwrap_or(DtModeArg::Float) {
        DtModeArg::Off => (false, DtMode::Float),
        DtModeArg::Float => (true, DtMode::Float),
        DtModeArg::Int32 => (true, DtMode::Int32),
        DtModeArg::Int16 => (true, DtMode::Int16),
        DtModeArg::Int8 => (true, DtMode::Int8),
    };
    let dt = DtParams::new(
        tuning.sigma_s.or(parsed(&file, "sigma-s")?).unwrap_or(5.0),
        tuning.sigma_r.or(parsed(&file, "sigma-r")?).unwrap_or(52.0),
        tuning.d_arb.or(parsed(&file, "d-arb")?).unwrap_or(0),
        tuning.scale_t.or(parsed(&file, "scale-t")?).unwrap_or(21),
        mode,
    )?;
    let pipeline = PipelineConfig {
        scan,
        dt,
        summation_method: match sum_arg.unwrap_or(SumArg::Auto) {
            SumArg::Direct => SummationMethod::Direct,
            SumArg::Integral => SummationMethod::Integral,
            SumArg::Auto => SummationMethod::Auto,
        },
        aggregation_enabled,
        threads: tuning.threads.or(parsed(&file, "threads")?).unwrap_or(0),
    };
    let repeats = repeats_flag.or(parsed(&file, "repeats")?).unwrap_or(5);
    Ok(Resolved { pipeline, repeats })
}

fn cmd_match(args: MatchArgs) -> Result<ExitCode, Error> {
    let resolved = resolve(&args.tuning, None)?;
    let left = read_pgm(&args.left)?;
    let right = read_pgm(&args.right)?;
    let run = run_pipeline_full(&left, &right, &resolved.pipeline)?;
    write_disparity_map(&run.disparity, &args.out, DISPARITY_SCALE)?;
    if let Some(dump) = &args.dump_cost {
        write_cost_volume(&run.cost_volume, dump)?;
    }
    if run.saturated > 0 {
        eprintln!("note: {} values saturated in integer aggregation", run.saturated);
    }
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, Error> {
    let est = read_disparity_pgm(&args.est)?;
    let gt = read_disparity_pgm(&args.gt)?;
    let report = evaluate_d1(&est, &gt)?;
    println!(
        "{{\"total_valid\":{},\"erroneous\":{},\"d1_rate\":{:?},\"all\":{{\"evaluated\":{},\"erroneous\":{},\"rate\":{:?}}},\"estimated_only\":{{\"evaluated\":{},\"erroneous\":{},\"rate\":{:?}}}}}",
        report.total_valid,
        report.erroneous,
        report.d1_rate,
        report.all.evaluated,
        report.all.erroneous,
        report.all.rate(),
        report.estimated_only.evaluated,
        report.estimated_only.erroneous,
        report.estimated_only.rate(),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, Error> {
    let resolved = resolve(&args.tuning, args.repeats)?;
    let left = read_pgm(&args.left)?;
    let right = read_pgm(&args.right)?;
    let rows = benchmark(&left, &right, &resolved.pipeline, resolved.repeats)?;
    let csv = benchmark_csv(&rows);
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

struct Suite {
    name: &'static str,
    passed: u64,
    failed: u64,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { name, passed: 0, failed: 0 }
    }

    fn check(&mut self, ok: bool) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }
}

/// Name of the suite sabotaged via `ZIGMATCH_SELFTEST_FAULT`, used by the
/// test harness to prove failures are detected and change the exit code.
fn fault_target() -> Option<String> {
    std::env::var("ZIGMATCH_SELFTEST_FAULT").ok()
}

fn suite_codec(fault: bool) -> Suite {
    let mut s = Suite::new("codec");
    let mut worst = [0i32; 4];
    for v in i16::MIN..=i16::MAX {
        let code = encode16(v);
        let back = decode8(code);
        s.check((back == 0) == (v >= 0));
        if v < 0 {
            let f = code.flag() as usize;
            worst[f] = worst[f].max((back as i32 - v as i32).abs());
        }
    }
    let expected = if fault { [0, 511, 31, 2] } else { [0, 511, 31, 1] };
    s.check(worst == expected);
    for (value, byte) in [(-1i16, 0xffu8), (-32768, 0x01), (-128, 0x03)] {
        s.check(encode16(value) == Code8(byte));
    }
    s.check(decode8(Code8(0xff)) == -2);
    s.check(decode8(Code8(0x01)) == -32768);
    s
}

fn suite_pack(fault: bool) -> Suite {
    let mut s = Suite::new("pack");
    let mut state = 0x243f_6a88u32; // xorshift over a fixed seed
    for _ in 0..100_000 {
        state ^= state << 13;
        state ^= state >> 17;
        state ^= state << 5;
        // Fault injection sabotages the expected word so the harness has to
        // notice and fail.
        let expected = if fault { state ^ 1 } else { state };
        s.check(pack4(unpack4(state)) == expected);
    }
    s.check(unpack4(0x04030201) == [Code8(0x01), Code8(0x02), Code8(0x03), Code8(0x04)]);
    s
}

fn suite_summation(fault: bool) -> Suite {
    let mut s = Suite::new("summation");
    for seed in 0..3u64 {
        let (img, _) = synth_shift_pair(32, 32, 1, 400 + seed).unwrap();
        for radius in 1..=5usize {
            let a = window_sums_direct(&img, radius);
            let b = window_sums_integral(&img, radius);
            s.check(a.sum == b.sum && a.sum_sq == b.sum_sq);
        }
    }
    let row: Vec<i64> = (0..512).map(|i| (i * 37 % 101) as i64 - 50).collect();
    let sequential: Vec<i64> = row
        .iter()
        .scan(0i64, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    for segment_len in [1usize, 32, 96, 1000] {
        let mut got = prefix_scan_row(&row, segment_len);
        if fault {
            got[0] += 1;
        }
        s.check(got == sequential);
    }
    s
}

fn suite_zncc(fault: bool) -> Suite {
    let mut s = Suite::new("zncc");
    for seed in 0..2u64 {
        let (l, r) = synth_shift_pair(32, 16, 2, 500 + seed).unwrap();
        for radius in [1usize, 2] {
            let cfg = ScanConfig {
                radius,
                max_disparity: 8,
                v_z: 4,
                h_z: 8,
                sigma_floor: 1e-6,
            };
            let sl = window_sums_direct(&l, radius);
            let sr = window_sums_direct(&r, radius);
            let fast = zigmatch::zncc_fast(&l, &r, &cfg, &sl, &sr).unwrap();
            let slow = zncc_reference(&l, &r, &cfg).unwrap();
            let tolerance = if fault { 1e-18 } else { 1e-5 };
            let diff = fast
                .data
                .iter()
                .zip(&slow.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            s.check(diff <= tolerance);
        }
    }
    s
}

fn suite_aggregation(fault: bool) -> Suite {
    let mut s = Suite::new("aggregation");
    let width = 72usize;
    let unit = CostVolume {
        width,
        height: 1,
        max_disparity: 1,
        data: vec![1.0; width],
    };
    for w_val in [0.5f64, 0.818731] {
        let maps = WeightMaps {
            width,
            height: 1,
            left: vec![w_val; width],
            right: vec![w_val; width],
            up: vec![w_val; width],
            down: vec![w_val; width],
        };
        let out = dt_pass_l2r(&unit, &maps).unwrap();
        for x in 0..64 {
            let expect = (1.0 - w_val.powi(x as i32 + 1)) / (1.0 - w_val);
            let expect = if fault { expect + 1e-6 } else { expect };
            s.check((out.at(x, 0, 0) - expect).abs() <= 1e-9);
        }
    }

    let (guide, _) = synth_shift_pair(12, 6, 1, 600).unwrap();
    let p = DtParams::default();
    let w = compute_weights(&guide, &p);
    let cv = CostVolume {
        width: 12,
        height: 6,
        max_disparity: 3,
        data: (0..12 * 6 * 3).map(|i| ((i * 31) % 97) as f64 / 97.0).collect(),
    };
    let normalized = normalize_zero_mean(&cv, &w, &p, PassDirection::TopToBottom).unwrap();
    for y in 0..6 {
        for x in 0..12 {
            s.check(normalized.at(x, y, p.d_arb) == 0.0);
        }
    }
    s
}

fn cmd_selftest(_args: SelftestArgs) -> Result<ExitCode, Error> {
    let fault = fault_target();
    let is_faulted = |name: &str| fault.as_deref() == Some(name);
    let suites = [
        suite_codec(is_faulted("codec")),
        suite_pack(is_faulted("pack")),
        suite_summation(is_faulted("summation")),
        suite_zncc(is_faulted("zncc")),
        suite_aggregation(is_faulted("aggregation")),
    ];
    let mut any_failed = false;
    for suite in &suites {
        let total = suite.passed + suite.failed;
        if suite.failed == 0 {
            println!("suite {}: {}/{} checks passed", suite.name, suite.passed, total);
        } else {
            any_failed = true;
            println!(
                "suite {}: {}/{} checks passed, {} FAILED",
                suite.name, suite.passed, total, suite.failed
            );
        }
    }
    if any_failed {
        eprintln!("zigmatch: selftest detected failures");
        return Ok(ExitCode::from(EXIT_INTERNAL));
    }
    println!("all suites passed");
    Ok(ExitCode::SUCCESS)
}
