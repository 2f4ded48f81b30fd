//! Command implementations behind the `voisat` binary.
//!
//! Exit codes: 0 success, 1 I/O or malformed input, 2 empty tumor mask,
//! 3 invalid flags or configuration, 4 table verification mismatch.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use voisat::bench::{run_bench, BenchMode, BenchReport, DEFAULT_REPEATS};
use voisat::integral::verify_table;
use voisat::metric::MetricParams;
use voisat::phantom::{make_phantom, PhantomSpec};
use voisat::volume::BRATS_TUMOR_LABELS;
use voisat::{
    load_volume, save_volume, search_region, Error, LabelVolume, MetricKind, OffsetMode,
    SearchConfig, SummedAreaTable3D,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_EMPTY_MASK: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "voisat", version, about = "Volume-of-interest search over 3D tumor masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find the best oriented box around the tumor.
    Search(SearchArgs),
    /// Rasterize a phantom spec into a volume.
    Phantom(PhantomArgs),
    /// Check the summed-area table against direct sums.
    VerifySat(VerifyArgs),
    /// Time the four computation modes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Volume header (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Args)]
pub struct SearchFlags {
    #[arg(long, default_value = "proposed", value_parser = parse_metric)]
    pub metric: MetricKind,
    /// Target edge lengths in mm.
    #[arg(long, value_name = "LX,LY,LZ", default_value = "20,20,20", value_parser = parse_triple)]
    pub target_size: [f64; 3],
    #[arg(long, default_value_t = 0.9)]
    pub f_target: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Smallest edge length in mm.
    #[arg(long, default_value_t = 5.0)]
    pub size_min: f64,
    /// Largest edge length in mm.
    #[arg(long, default_value_t = 50.0)]
    pub size_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub size_step: f64,
    /// Angle candidates per sweep (odd).
    #[arg(long, default_value_t = 9)]
    pub angle_candidates: usize,
    /// Angle step in degrees for the first iteration.
    #[arg(long, default_value_t = 5.0)]
    pub angle_step1: f64,
    /// Angle step in degrees for later iterations.
    #[arg(long, default_value_t = 5.0 / 9.0)]
    pub angle_step2: f64,
    #[arg(long, default_value_t = 2)]
    pub iterations: usize,
    #[arg(long, default_value = "full3d", value_parser = parse_offset_mode)]
    pub offset_mode: OffsetMode,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Accepted for interface uniformity; the search itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Phantom spec (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Header path of the volume to write; the payload goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the noise seed of the phantom file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Number of random regions to check.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// CSV path; stdout when omitted. A JSON report is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "c1D,p1D,c3D,p3D")]
    pub modes: Vec<BenchMode>,
    /// Runs per mode; timings are the median.
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    #[command(flatten)]
    pub search: SearchFlags,
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    s.parse()
}

fn parse_offset_mode(s: &str) -> Result<OffsetMode, String> {
    s.parse()
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("\"{p}\": {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| format!("expected 3 values, got {}", p.len()))
}

impl SearchFlags {
    pub fn to_config(&self) -> SearchConfig {
        SearchConfig {
            metric: self.metric,
            params: MetricParams {
                f_target: self.f_target,
                lambda1: self.lambda1,
                lambda2: self.lambda2,
                beta: self.beta,
                target_mm: self.target_size,
                ..MetricParams::default()
            },
            size_min_mm: self.size_min,
            size_max_mm: self.size_max,
            size_step_mm: self.size_step,
            angle_candidates: self.angle_candidates,
            angle_step_first_deg: self.angle_step1,
            angle_step_rest_deg: self.angle_step2,
            iterations: self.iterations,
            offset_mode: self.offset_mode,
            threads: self.threads,
            ..SearchConfig::default()
        }
    }
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotFound(_)
            | Error::Io { .. }
            | Error::MalformedHeader { .. }
            | Error::PayloadSize { .. } => EXIT_IO,
            Error::EmptyMask => EXIT_EMPTY_MASK,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult = Result<i32, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Search(a) => cmd_search(a, &mut out),
        Command::Phantom(a) => cmd_phantom(a, &mut out),
        Command::VerifySat(a) => cmd_verify_sat(a, &mut out),
        Command::Bench(a) => cmd_bench(a, &mut out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Loads a volume, mapping multi-label masks to a binary tumor mask.
fn load_mask(path: &Path) -> Result<LabelVolume, CliError> {
    let v = load_volume(path)?;
    if v.is_binary() {
        Ok(v)
    } else {
        eprintln!(
            "note: {} is not binary; treating labels {:?} as tumor",
            path.display(),
            BRATS_TUMOR_LABELS
        );
        Ok(v.binarize(&BRATS_TUMOR_LABELS))
    }
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p, e)),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

pub fn cmd_search(args: &SearchArgs, out: &mut dyn Write) -> CliResult {
    let cfg = args.search.to_config();
    cfg.validate()?;
    let volume = load_mask(&args.input)?;
    let result = search_region(&volume, &cfg)?;
    let mut text = serde_json::to_string_pretty(&result).expect("result serializes");
    text.push('\n');
    emit(out, args.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

pub fn cmd_phantom(args: &PhantomArgs, out: &mut dyn Write) -> CliResult {
    let mut spec = PhantomSpec::from_file(&args.input)?;
    if let (Some(seed), Some(noise)) = (args.seed, spec.noise.as_mut()) {
        noise.seed = seed;
    }
    let volume = make_phantom(&spec)?;
    save_volume(&volume, &args.out)?;
    writeln!(out, "total_tumor {}", volume.total_tumor())
        .map_err(|e| io_error(Path::new("<stdout>"), e))?;
    Ok(EXIT_OK)
}

pub fn cmd_verify_sat(args: &VerifyArgs, out: &mut dyn Write) -> CliResult {
    let volume = load_mask(&args.input)?;
    let table = SummedAreaTable3D::build(&volume)?;
    verify_sat_with(&volume, &table, args.samples, args.seed, out)
}

/// Verification against a caller-supplied table, so tests can inject faults.
pub fn verify_sat_with(
    volume: &LabelVolume,
    table: &SummedAreaTable3D,
    samples: usize,
    seed: u64,
    out: &mut dyn Write,
) -> CliResult {
    let report = verify_table(volume, table, samples, seed);
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    writeln!(
        out,
        "{verdict} samples {} matches {} mismatches {}",
        report.samples,
        report.matches,
        report.mismatches()
    )
    .map_err(|e| io_error(Path::new("<stdout>"), e))?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_MISMATCH })
}

pub fn bench_csv(report: &BenchReport) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mode",
        "sat_build_ms",
        "search_ms",
        "total_ms",
        "evaluations",
        "volume_mm3",
        "fraction",
        "cost",
        "result",
    ])?;
    for row in &report.rows {
        w.write_record([
            row.mode.to_string(),
            format!("{:.3}", row.sat_build_ms),
            format!("{:.3}", row.search_ms),
            format!("{:.3}", row.total_ms),
            row.evaluations.to_string(),
            row.volume_mm3.to_string(),
            row.fraction.to_string(),
            row.cost.to_string(),
            row.result_key(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let cfg = args.search.to_config();
    cfg.validate()?;
    if args.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()).into());
    }
    if args.modes.is_empty() {
        return Err(Error::InvalidConfig("no bench modes given".into()).into());
    }
    let volume = load_mask(&args.input)?;
    let report = run_bench(&volume, &cfg, &args.modes, args.repeats)?;
    let text = bench_csv(&report).map_err(|e| io_error(Path::new("<csv>"), e))?;
    emit(out, args.out.as_deref(), &text)?;
    if let Some(path) = &args.out {
        let json_path = path.with_extension("json");
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(&json_path, json + "\n").map_err(|e| io_error(&json_path, e))?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_parsing() {
        assert_eq!(parse_triple("15,20,25").unwrap(), [15.0, 20.0, 25.0]);
        assert!(parse_triple("15,20").is_err());
        assert!(parse_triple("a,b,c").is_err());
    }

    #[test]
    fn defaults_match_library_defaults() {
        let cli = Cli::try_parse_from(["voisat", "search", "--input", "x.json"]).unwrap();
        let Command::Search(args) = cli.command else {
            panic!("expected search");
        };
        let cfg = args.search.to_config();
        let lib = SearchConfig::default();
        assert_eq!(cfg.params, lib.params);
        assert_eq!(cfg.size_min_mm, lib.size_min_mm);
        assert_eq!(cfg.size_max_mm, lib.size_max_mm);
        assert_eq!(cfg.angle_candidates, lib.angle_candidates);
        assert_eq!(cfg.angle_step_rest_deg, lib.angle_step_rest_deg);
        assert_eq!(cfg.iterations, lib.iterations);
    }

    #[test]
    fn unknown_flag_is_validation_error() {
        assert_eq!(run(["voisat", "search", "--input", "x", "--bogus"]), EXIT_VALIDATION);
        assert_eq!(run(["voisat", "--help"]), EXIT_OK);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::EmptyMask).code, EXIT_EMPTY_MASK);
        assert_eq!(CliError::from(Error::NotFound("a".into())).code, EXIT_IO);
        assert_eq!(
            CliError::from(Error::InvalidConfig("x".into())).code,
            EXIT_VALIDATION
        );
    }
}
