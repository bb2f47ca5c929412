//! `vidscale` command line. Every verb parses its flags, calls one library
//! operation and renders the result; no numbers are computed here.
//!
//! Exit status: 0 success, 1 usage or validation error, 2 internal error.

mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub use report::{Format, Report};
use report::opt;

use crate::cost::{self, CostError, CostReport};
use crate::kernels::{self, fixture, gradcheck::gradcheck, Boundary, KernelError, Network, ShiftConfig, Tensor5D};
use crate::model_ir::{micro_tsm_default, propagate_shapes, resolve_arch, ArchSpec, Fraction, IrError, Shape5D};
use crate::sim::{self, ClusterProfile, CommMode, SimError, SimModel, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "vidscale", version, about = "Cost, kernel and scalability analysis for video CNNs")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// FLOPs, parameters, input size and Compute/IO of one architecture.
    Analyze {
        /// Preset name or architecture JSON path.
        #[arg(long)]
        arch: String,
    },
    /// Side-by-side efficiency table with normalization multipliers.
    Compare(CompareArgs),
    /// Per-stage output shapes.
    Shapes {
        #[arg(long)]
        arch: String,
    },
    /// Step time, throughput and scalability over node counts.
    Simulate(SimulateArgs),
    /// Scalability observed in measured wall times.
    Scalability {
        /// CSV with a `nodes,wall_seconds` header.
        #[arg(long)]
        timings: PathBuf,
    },
    /// Finite-difference check of the reference backward pass.
    Gradcheck(GradcheckArgs),
    /// Applies the temporal shift to a small tensor.
    ShiftDemo(ShiftDemoArgs),
    /// Learning rate per epoch under linear scaling, warmup and cosine decay.
    LrCurve(LrCurveArgs),
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Comma-separated presets or architecture paths.
    #[arg(long, value_delimiter = ',', required_unless_present = "reports", conflicts_with = "reports")]
    archs: Vec<String>,
    /// Comma-separated `analyze --format json` outputs to compare instead.
    #[arg(long, value_delimiter = ',')]
    reports: Vec<PathBuf>,
    /// `arch,accuracy,throughput_vps` measurements echoed next to the analytic columns.
    #[arg(long)]
    measured: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    arch: String,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    nodes: Vec<usize>,
    #[arg(long, default_value = "ring")]
    comm: CommMode,
    #[arg(long, default_value_t = 8)]
    per_gpu_batch: usize,
    #[arg(long, default_value_t = 100.0)]
    epochs: f64,
    #[arg(long, default_value_t = 240_000)]
    dataset_clips: u64,
    /// Training FLOPs per forward FLOP.
    #[arg(long, default_value_t = 3.0)]
    train_multiplier: f64,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// `micro-tsm`, a preset name or an architecture path.
    #[arg(long, default_value = "micro-tsm")]
    arch: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Shift fraction per direction for `micro-tsm`.
    #[arg(long, default_value = "1/8")]
    shift_fraction: Fraction,
    /// Tensor fixture used as the input instead of a seeded draw.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ShiftDemoArgs {
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long, default_value_t = 1)]
    h: usize,
    #[arg(long, default_value_t = 1)]
    w: usize,
    /// Fraction shifted in each direction, `p/q`.
    #[arg(long, default_value = "1/8")]
    fraction: Fraction,
    #[arg(long, value_enum, default_value_t = BoundaryArg::ZeroFill)]
    boundary: BoundaryArg,
    /// Tensor fixture to shift instead of the labelled ramp.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Also save the shifted tensor as a fixture.
    #[arg(long)]
    save: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum BoundaryArg {
    ZeroFill,
    Circular,
}

#[derive(Debug, Args)]
struct LrCurveArgs {
    #[arg(long)]
    gpus: usize,
    #[arg(long)]
    per_gpu_batch: usize,
    #[arg(long)]
    epochs: f64,
    #[arg(long, default_value_t = 5.0)]
    warmup_epochs: f64,
    #[arg(long, default_value_t = 0.00125)]
    base_lr: f64,
    /// Samples per epoch.
    #[arg(long, default_value_t = 1)]
    points_per_epoch: usize,
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Internal(String),
}

impl CliError {
    fn status(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<IrError> for CliError {
    fn from(e: IrError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<CostError> for CliError {
    fn from(e: CostError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::NonFinite(_) => CliError::Internal(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn invalid<E: std::fmt::Display>(context: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Invalid(format!("{}: {e}", context.display()))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))
}

/// Parses `argv` (program name first), runs the verb and writes the report
/// to `stdout` or `--output`. Diagnostics go to `stderr`.
pub fn run<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = stdout.write_all(text.as_bytes());
                0
            } else {
                let _ = stderr.write_all(text.as_bytes());
                1
            };
        }
    };
    let result = dispatch(&cli.verb).and_then(|r| r.render(cli.format).map_err(CliError::Internal)).and_then(|text| {
        match &cli.output {
            Some(path) => std::fs::write(path, text),
            None => stdout.write_all(text.as_bytes()),
        }
        .map_err(|e| CliError::Internal(format!("writing report: {e}")))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.status()
        }
    }
}

fn dispatch(verb: &Verb) -> Result<Report, CliError> {
    match verb {
        Verb::Analyze { arch } => analyze(arch),
        Verb::Compare(a) => compare(a),
        Verb::Shapes { arch } => shapes(arch),
        Verb::Simulate(a) => simulate(a),
        Verb::Scalability { timings } => scalability(timings),
        Verb::Gradcheck(a) => grad_check(a),
        Verb::ShiftDemo(a) => shift_demo(a),
        Verb::LrCurve(a) => lr_curve(a),
    }
}

fn analyze(arch: &str) -> Result<Report, CliError> {
    let r = cost::analyze(&resolve_arch(arch)?)?;
    let mut out = Report::new(&cost::CSV_HEADER, to_json(&r)?);
    out.push(vec![
        r.arch.clone(),
        r.total_flops.to_string(),
        r.total_params.to_string(),
        r.input_elems.to_string(),
        r.compute_io.to_string(),
    ]);
    out.notes.push(format!(
        "{}: {:.2} GFLOPs, {:.2} M params, input {}x{}x{}x{}, Compute/IO {:.2}k",
        r.arch,
        r.total_flops as f64 / 1e9,
        r.total_params as f64 / 1e6,
        r.input.t,
        r.input.c,
        r.input.h,
        r.input.w,
        r.compute_io / 1e3
    ));
    Ok(out)
}

fn load_report(path: &Path) -> Result<Vec<CostReport>, CliError> {
    let text = std::fs::read_to_string(path).map_err(invalid(path))?;
    // One `analyze` output, or an array of them.
    serde_json::from_str::<CostReport>(&text)
        .map(|r| vec![r])
        .or_else(|_| serde_json::from_str::<Vec<CostReport>>(&text))
        .map_err(invalid(path))
}

fn compare(a: &CompareArgs) -> Result<Report, CliError> {
    let reports = if a.reports.is_empty() {
        a.archs.iter().map(|name| Ok(cost::analyze(&resolve_arch(name)?)?)).collect::<Result<Vec<_>, CliError>>()?
    } else {
        let mut all = Vec::new();
        for p in &a.reports {
            all.extend(load_report(p)?);
        }
        all
    };
    let measured = match &a.measured {
        Some(p) => cost::read_measured(std::fs::File::open(p).map_err(invalid(p))?).map_err(invalid(p))?,
        None => Vec::new(),
    };
    let table = cost::compare_reports(&reports).with_measured(&measured);
    let mut header = vec!["arch", "flops", "params", "input_elems", "compute_io", "flops_x", "params_x", "input_x", "compute_io_x"];
    let with_measured = !measured.is_empty();
    if with_measured {
        header.extend(["accuracy", "throughput_vps", "throughput_x"]);
    }
    let mut out = Report::new(&header, to_json(&table)?);
    for r in &table.rows {
        let m = r.multipliers;
        let mut row = vec![
            r.arch.clone(),
            r.flops.to_string(),
            r.params.to_string(),
            r.input_elems.to_string(),
            r.compute_io.to_string(),
            m.flops.to_string(),
            m.params.to_string(),
            m.input_elems.to_string(),
            m.compute_io.to_string(),
        ];
        if with_measured {
            let meas = r.measured.as_ref();
            row.push(opt(meas.and_then(|m| m.accuracy)));
            row.push(opt(meas.and_then(|m| m.throughput_vps)));
            row.push(opt(r.throughput_multiplier));
        }
        out.push(row);
    }
    if with_measured {
        out.notes.push("accuracy and throughput are measured inputs, not computed".into());
    }
    Ok(out)
}

fn shapes(arch: &str) -> Result<Report, CliError> {
    let arch = resolve_arch(arch)?;
    let stages = propagate_shapes(&arch, arch.input_shape())?;
    let json_rows: Vec<_> = stages.iter().map(|(name, s)| json!({"stage": name, "shape": s})).collect();
    let mut out = Report::new(&["stage", "n", "t", "c", "h", "w"], json!({"arch": arch.name, "input": arch.input_shape(), "stages": json_rows}));
    for (name, s) in &stages {
        let mut row = vec![name.clone()];
        row.extend(s.dims().iter().map(usize::to_string));
        out.push(row);
    }
    Ok(out)
}

fn simulate(a: &SimulateArgs) -> Result<Report, CliError> {
    let cost = cost::analyze(&resolve_arch(&a.arch)?)?;
    let profile = ClusterProfile::load(&a.profile)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        dataset_clips: a.dataset_clips,
        ..TrainConfig::for_profile(&profile, a.per_gpu_batch)
    };
    let model = SimModel { train_multiplier: a.train_multiplier, comm: a.comm, ..SimModel::default() };
    let result = sim::sweep(&cost, &profile, &a.nodes, &cfg, &model)?;
    let mut out = Report::new(&sim::SWEEP_CSV_HEADER, to_json(&result)?);
    for r in &result.rows {
        out.push(vec![
            r.nodes.to_string(),
            r.gpus.to_string(),
            r.batch.to_string(),
            r.frames.to_string(),
            r.step.t_compute.to_string(),
            r.step.t_io.to_string(),
            r.step.t_comm.to_string(),
            r.step.t_step.to_string(),
            r.throughput_vps.to_string(),
            r.scalability.to_string(),
            r.train_time_s.to_string(),
        ]);
    }
    let bound: Vec<String> = result.rows.iter().map(|r| format!("{}:{:?}", r.nodes, r.step.bottleneck).to_lowercase()).collect();
    out.notes.push(format!("bottleneck per node count: {}", bound.join(" ")));
    Ok(out)
}

fn scalability(path: &Path) -> Result<Report, CliError> {
    let timings = sim::read_timings(std::fs::File::open(path).map_err(invalid(path))?)?;
    let scal = sim::observed_scalability(&timings)?;
    let mut out = Report::new(&["nodes", "wall_seconds", "scalability"], to_json(&scal)?);
    for (t, s) in timings.iter().zip(&scal) {
        out.push(vec![t.nodes.to_string(), t.wall_seconds.to_string(), s.scalability.to_string()]);
    }
    Ok(out)
}

fn grad_check(a: &GradcheckArgs) -> Result<Report, CliError> {
    let arch: ArchSpec = if a.arch == "micro-tsm" { micro_tsm_default(a.shift_fraction) } else { resolve_arch(&a.arch)? };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let net = Network::new(&arch, &mut rng)?;
    let x = match &a.input {
        Some(p) => fixture::load_tensor(p)?,
        None => Tensor5D::random(arch.input_shape(), &mut rng),
    };
    let r = gradcheck(&net, &x, a.eps)?;
    let mut out = Report::new(
        &["arch", "seed", "eps", "checked", "skipped_kinks", "max_abs_error", "max_rel_error", "loss"],
        json!({"arch": arch.name, "seed": a.seed, "report": to_json(&r)?}),
    );
    out.push(vec![
        arch.name.clone(),
        a.seed.to_string(),
        a.eps.to_string(),
        r.checked.to_string(),
        r.skipped_kinks.to_string(),
        r.max_abs_error.to_string(),
        r.max_rel_error.to_string(),
        r.loss.to_string(),
    ]);
    Ok(out)
}

/// `x[n, t, c, h, w] = 100·(t + 1) + c`: the hundreds digit names the source
/// frame, so moved values are easy to read off.
fn ramp(shape: Shape5D) -> Tensor5D {
    let mut x = Tensor5D::zeros(shape);
    for n in 0..shape.n {
        for t in 0..shape.t {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        *x.at_mut(n, t, c, h, w) = (100 * (t + 1) + c) as f64;
                    }
                }
            }
        }
    }
    x
}

fn shift_demo(a: &ShiftDemoArgs) -> Result<Report, CliError> {
    let x = match &a.input {
        Some(p) => {
            let x = fixture::load_tensor(p)?;
            let s = x.shape();
            if a.t.is_some_and(|t| t != s.t) || a.c.is_some_and(|c| c != s.c) {
                return Err(CliError::Invalid(format!("--t/--c disagree with the fixture shape {s}")));
            }
            x
        }
        None => {
            let (Some(t), Some(c)) = (a.t, a.c) else {
                return Err(CliError::Invalid("shift-demo needs --t and --c, or --input".into()));
            };
            ramp(Shape5D::new(1, t, c, a.h, a.w)?)
        }
    };
    let cfg = ShiftConfig {
        boundary: match a.boundary {
            BoundaryArg::ZeroFill => Boundary::ZeroFill,
            BoundaryArg::Circular => Boundary::Circular,
        },
        ..ShiftConfig::symmetric(a.fraction)
    };
    let y = kernels::temporal_shift(&x, &cfg)?;
    if let Some(p) = &a.save {
        fixture::save_tensor(&y, p).map_err(|e| CliError::Internal(format!("{}: {e}", p.display())))?;
    }
    let (fwd, bwd) = cfg.split(x.shape().c)?;
    let s = x.shape();
    let mut out = Report::new(
        &["n", "t", "c", "h", "w", "input", "output"],
        json!({"shape": s, "fraction": a.fraction, "channels_forward": fwd, "channels_backward": bwd,
               "boundary": to_json(&cfg.boundary)?, "input": x.as_slice(), "output": y.as_slice()}),
    );
    for n in 0..s.n {
        for t in 0..s.t {
            for c in 0..s.c {
                for h in 0..s.h {
                    for w in 0..s.w {
                        let idx = [n, t, c, h, w].map(|v| v.to_string()).to_vec();
                        out.push([idx, vec![x.at(n, t, c, h, w).to_string(), y.at(n, t, c, h, w).to_string()]].concat());
                    }
                }
            }
        }
    }
    out.notes.push(format!("channels 0..{fwd} take frame t-1, {fwd}..{} take frame t+1", fwd + bwd));
    Ok(out)
}

fn lr_curve(a: &LrCurveArgs) -> Result<Report, CliError> {
    let cfg = TrainConfig {
        base_lr_per_8: a.base_lr,
        epochs: a.epochs,
        warmup_epochs: a.warmup_epochs,
        ..TrainConfig::new(a.per_gpu_batch, a.gpus)
    };
    cfg.validate()?;
    if a.points_per_epoch == 0 {
        return Err(CliError::Invalid("--points-per-epoch must be at least 1".into()));
    }
    let steps = (a.epochs * a.points_per_epoch as f64).floor() as usize;
    let mut points = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let e = (i as f64 / a.points_per_epoch as f64).min(a.epochs);
        points.push((e, sim::lr_at(e, &cfg)?));
    }
    let peak = sim::peak_lr(&cfg);
    let mut out = Report::new(
        &["epoch", "lr"],
        json!({"peak_lr": peak, "points": points.iter().map(|(e, lr)| json!({"epoch": e, "lr": lr})).collect::<Vec<_>>()}),
    );
    for (e, lr) in &points {
        out.push(vec![e.to_string(), lr.to_string()]);
    }
    out.notes.push(format!("peak lr {peak} at epoch {}", a.warmup_epochs));
    Ok(out)
}
