//! The `pirkit` command line: registration, uncertainty analysis, figure
//! reproduction, synthetic experiments and image comparison.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or solver errors.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pirkit::experiments::{self, BumpSpec, ExperimentReport, FigureReport, RegistrationParams};
use pirkit::io::{self, HeatmapStyle, Normalization};
use pirkit::{compute_uncertainty_maps, ScalarImage};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pirkit",
    version,
    about = "Discrete probabilistic registration and label-space uncertainty"
)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the per-voxel displacement distribution and store it as PIRD.
    Register(RegisterArgs),
    /// Derive uncertainty maps, point estimates and summary statistics from a PIRD file.
    Analyze(AnalyzeArgs),
    /// Recompute the worked examples (figures 1, 2 and 5).
    Reproduce(ReproduceArgs),
    /// Distort an image with Gaussian bumps, register it back and score the estimates.
    Synth(SynthArgs),
    /// Per-pixel absolute error table between two images.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RegistrationArgs {
    /// Displacement radius (infinity norm) in voxels.
    #[arg(long, default_value_t = 2)]
    pub radius: u32,
    /// Intensity noise scale of the unary likelihood.
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    /// Edge weight sensitivity to fixed-image intensity jumps.
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    /// Data term weight; small values smooth more.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Floor added to every edge weight.
    #[arg(long = "w-min", default_value_t = 1e-6)]
    pub w_min: f64,
    /// Absolute residual tolerance of the conjugate gradient solver.
    #[arg(long = "cg-tol", default_value_t = 1e-8)]
    pub cg_tol: f64,
    /// Iteration cap of the solver (default 10 × voxel count).
    #[arg(long = "cg-max-iter")]
    pub cg_max_iter: Option<usize>,
    /// Single-threaded, fixed-order evaluation.
    #[arg(long)]
    pub deterministic: bool,
}

impl RegistrationArgs {
    pub fn params(&self) -> RegistrationParams {
        RegistrationParams {
            radius: self.radius,
            sigma: self.sigma,
            beta: self.beta,
            gamma: self.gamma,
            w_min: self.w_min,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            deterministic: self.deterministic,
        }
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Reference image (P5 PGM).
    #[arg(long)]
    pub fixed: PathBuf,
    /// Image whose intensities are transported onto the fixed grid.
    #[arg(long)]
    pub moving: PathBuf,
    #[command(flatten)]
    pub registration: RegistrationArgs,
    /// Output PIRD file; parameters go to `<out>.params.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub dist: PathBuf,
    #[arg(long)]
    pub moving: PathBuf,
    /// Label bin width; 0 keeps labels exact.
    #[arg(long = "bin-width", default_value_t = 0.0)]
    pub bin_width: f64,
    /// Prefix of every output file.
    #[arg(long = "out-prefix")]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_parser = ["1", "2", "5"])]
    pub figure: String,
    /// Print the full report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Undistorted image; it doubles as ground truth.
    #[arg(long)]
    pub image: PathBuf,
    /// Bump specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the seed stored in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub registration: RegistrationArgs,
    #[arg(long = "bin-width", default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long = "out-report")]
    pub out_report: PathBuf,
    /// Also write the distorted image (quantized to PGM).
    #[arg(long = "out-moving")]
    pub out_moving: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance written next to every PIRD file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterRecord {
    pub version: String,
    pub fixed: PathBuf,
    pub moving: PathBuf,
    pub dims: Vec<usize>,
    pub k: usize,
    pub params: RegistrationParams,
}

/// Written by `analyze` as `<prefix>_stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeStats {
    pub version: String,
    pub dist: PathBuf,
    pub moving: PathBuf,
    pub bin_width: f64,
    pub dims: Vec<usize>,
    pub k: usize,
    pub count_disagreement: usize,
    pub mean_transform_entropy: f64,
    pub mean_label_entropy: f64,
    pub mean_label_variance: f64,
    pub mean_label_iqr: f64,
    pub max_transform_entropy: f64,
    pub max_label_entropy: f64,
    pub outputs: Vec<PathBuf>,
}

/// Output file suffixes of `analyze`, in the order they are written.
pub const ANALYZE_OUTPUTS: [&str; 8] = [
    "_mode.pgm",
    "_mli.pgm",
    "_transform_entropy.ppm",
    "_label_entropy.ppm",
    "_label_variance.ppm",
    "_label_iqr.ppm",
    "_disagreement.pgm",
    "_stats.json",
];

#[derive(Debug)]
struct Failure(String);

impl Failure {
    fn new(context: impl Display, err: impl Display) -> Self {
        Failure(format!("{context}: {err}"))
    }
}

impl From<pirkit::Error> for Failure {
    fn from(e: pirkit::Error) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Runs the CLI against the process's stdout and stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI with explicit output streams. `argv[0]` is the program name.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::new().parse_filters(level).try_init();
    let result = match &cli.command {
        Command::Register(a) => register(a, out),
        Command::Analyze(a) => analyze(a, out),
        Command::Reproduce(a) => reproduce(a, out),
        Command::Synth(a) => synth(a, out),
        Command::Compare(a) => compare(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DATA
        }
    }
}

fn say(out: &mut dyn Write, text: impl Display) -> CmdResult {
    writeln!(out, "{text}").map_err(|e| Failure::new("stdout", e))
}

fn read_image(flag: &str, path: &Path) -> std::result::Result<ScalarImage, Failure> {
    io::read_pgm(path).map_err(|e| Failure::new(format!("--{flag}"), e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(path.display(), e))?;
    text.push('\n');
    io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn params_sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".params.json");
    PathBuf::from(name)
}

fn register(a: &RegisterArgs, out: &mut dyn Write) -> CmdResult {
    let fixed = read_image("fixed", &a.fixed)?;
    let moving = read_image("moving", &a.moving)?;
    let params = a.registration.params();
    let reg = experiments::register(&fixed, &moving, &params)?;
    io::write_dist_field(&reg.field, &reg.displacements, &a.out)?;
    let record = RegisterRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        fixed: a.fixed.clone(),
        moving: a.moving.clone(),
        dims: fixed.dims().to_vec(),
        k: reg.displacements.len(),
        params,
    };
    let sidecar = params_sidecar(&a.out);
    write_json(&record, &sidecar)?;
    say(
        out,
        format_args!(
            "wrote {} ({:?} voxels, K = {}) and {}",
            a.out.display(),
            record.dims,
            record.k,
            sidecar.display()
        ),
    )
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> CmdResult {
    let (field, set) = io::read_dist_field(&a.dist).map_err(|e| Failure::new("--dist", e))?;
    let moving = read_image("moving", &a.moving)?;
    if !(a.bin_width >= 0.0 && a.bin_width.is_finite()) {
        return Err(Failure::new(
            "--bin-width",
            format_args!("must be finite and >= 0, got {}", a.bin_width),
        ));
    }
    let maps = compute_uncertainty_maps(&field, &moving, &set, a.bin_width)?;
    let dims = maps.dims.clone();
    let paths: Vec<PathBuf> = ANALYZE_OUTPUTS
        .iter()
        .map(|s| PathBuf::from(format!("{}{s}", a.out_prefix)))
        .collect();

    let image = |values: &[f64]| ScalarImage::new(dims.clone(), values.to_vec());
    io::write_pgm(&image(&maps.mode_label)?, &paths[0])?;
    io::write_pgm(&image(&maps.mli)?, &paths[1])?;
    let by_entropy = HeatmapStyle {
        normalization: Normalization::ByMaxEntropy { k: set.len() },
    };
    let by_max = HeatmapStyle {
        normalization: Normalization::ByFieldMax,
    };
    io::write_heatmap(&maps.transform_entropy, &dims, &by_entropy, &paths[2])?;
    io::write_heatmap(&maps.label_entropy, &dims, &by_entropy, &paths[3])?;
    io::write_heatmap(&maps.label_variance, &dims, &by_max, &paths[4])?;
    io::write_heatmap(&maps.label_iqr, &dims, &by_max, &paths[5])?;
    let flags: Vec<f64> = maps.disagreement.iter().map(|&d| if d { 255.0 } else { 0.0 }).collect();
    io::write_pgm(&image(&flags)?, &paths[6])?;

    let stats = AnalyzeStats {
        version: env!("CARGO_PKG_VERSION").to_string(),
        dist: a.dist.clone(),
        moving: a.moving.clone(),
        bin_width: a.bin_width,
        dims: dims.clone(),
        k: set.len(),
        count_disagreement: maps.count_disagreement(),
        mean_transform_entropy: mean(&maps.transform_entropy),
        mean_label_entropy: mean(&maps.label_entropy),
        mean_label_variance: mean(&maps.label_variance),
        mean_label_iqr: mean(&maps.label_iqr),
        max_transform_entropy: max(&maps.transform_entropy),
        max_label_entropy: max(&maps.label_entropy),
        outputs: paths.clone(),
    };
    write_json(&stats, &paths[7])?;
    say(
        out,
        format_args!(
            "{} disagreeing voxels of {}; mean transform entropy {:.4} bits, mean label entropy {:.4} bits",
            stats.count_disagreement,
            maps.disagreement.len(),
            stats.mean_transform_entropy,
            stats.mean_label_entropy
        ),
    )?;
    for p in &paths {
        say(out, format_args!("wrote {}", p.display()))?;
    }
    Ok(())
}

fn print_figure(report: &FigureReport, out: &mut dyn Write) -> CmdResult {
    say(out, format_args!("figure {}", report.figure))?;
    say(out, format_args!("  probabilities {:?}", report.probabilities))?;
    say(out, format_args!("  labels        {:?}", report.labels))?;
    for (label, mass) in &report.pushforward {
        say(out, format_args!("  P(label = {label}) = {mass:.4}"))?;
    }
    for c in &report.checks {
        say(
            out,
            format_args!(
                "  {:<18} {:>10.6}  target {:>8} ± {:<6e} {}",
                c.quantity,
                c.value,
                c.target,
                c.tolerance,
                if c.pass { "ok" } else { "FAIL" }
            ),
        )?;
    }
    say(out, if report.pass { "pass" } else { "FAIL" })
}

fn reproduce(a: &ReproduceArgs, out: &mut dyn Write) -> CmdResult {
    let figure: u32 = a.figure.parse().map_err(|e| Failure::new("--figure", e))?;
    let report = experiments::reproduce_figure(figure)?;
    if a.json {
        let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::new("report", e))?;
        say(out, text)
    } else {
        print_figure(&report, out)
    }
}

fn synth(a: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    let image = read_image("image", &a.image)?;
    let text =
        std::fs::read_to_string(&a.spec).map_err(|e| Failure::new(format_args!("--spec {}", a.spec.display()), e))?;
    let mut spec: BumpSpec =
        serde_json::from_str(&text).map_err(|e| Failure::new(format_args!("--spec {}", a.spec.display()), e))?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let run = experiments::run_synth_experiment(&image, &spec, &a.registration.params(), a.bin_width)?;
    if let Some(path) = &a.out_moving {
        io::write_pgm(&run.moving, path)?;
    }
    let r = &run.report;
    let report = ExperimentReport {
        figures: Vec::new(),
        synthetic: Some(r.clone()),
    };
    write_json(&report, &a.out_report)?;
    say(
        out,
        format_args!(
            "mean abs error: unregistered {:.4}, mode {:.4}, MLI {:.4}",
            r.identity_error.mean_abs, r.mode_error.mean_abs, r.mli_error.mean_abs
        ),
    )?;
    say(
        out,
        format_args!(
            "disagreements {}, mode better {}, MLI better {}",
            r.count_disagreement, r.count_mode_beats_mli, r.count_mli_beats_mode
        ),
    )?;
    say(out, format_args!("wrote {}", a.out_report.display()))
}

fn compare(a: &CompareArgs, out: &mut dyn Write) -> CmdResult {
    let gt = read_image("gt", &a.gt)?;
    let est = read_image("est", &a.est)?;
    if gt.dims() != est.dims() {
        return Err(Failure::new(
            "--est",
            format_args!("dimensions {:?} differ from --gt {:?}", est.dims(), gt.dims()),
        ));
    }
    let cols = gt.dims()[1];
    let mut csv = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::new(a.out.display(), e);
    csv.write_record(["row", "col", "gt", "est", "abs_error"])
        .map_err(fail)?;
    let mut sum = 0.0;
    let mut worst = 0.0f64;
    for (i, (&g, &e)) in gt.values().iter().zip(est.values()).enumerate() {
        let err = (e - g).abs();
        sum += err;
        worst = worst.max(err);
        csv.serialize((i / cols, i % cols, g, e, err)).map_err(fail)?;
    }
    let bytes = csv.into_inner().map_err(|e| Failure::new(a.out.display(), e))?;
    io::write_atomic(&a.out, &bytes)?;
    say(
        out,
        format_args!(
            "mean abs error {:.6}, max abs error {:.6} over {} pixels",
            sum / gt.values().len() as f64,
            worst,
            gt.values().len()
        ),
    )?;
    say(out, format_args!("wrote {}", a.out.display()))
}
