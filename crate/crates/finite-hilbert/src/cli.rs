//! Configuration-driven command-line front end: dispatches the numerical
//! modules from a JSON run description and writes diffable CSV/JSON
//! artifacts.
//!
//! A run is described by one JSON file:
//!
//! ```json
//! {
//!   "task": "spectrum",
//!   "configuration": {"J": [[0, 1]], "E": [[2, 3]]},
//!   "grid": {"panels": 16, "order": 8, "grading": 0.5},
//!   "params": {}
//! }
//! ```
//!
//! Interval endpoints accept the string sentinels `"inf"` and `"-inf"` for
//! unbounded parts (only `validate` admits those; quadrature tasks require a
//! bounded configuration). Every run writes `report.json` carrying the crate
//! version, the resolved parameters, and a `residuals` array in which each
//! checked number appears next to the tolerance it was tested against;
//! vectors and matrices go to CSV files with full 17-digit floats so reruns
//! with the same seed are byte-identical.
//!
//! Exit codes: 0 — all tolerances met; 1 — a tolerance was violated (the
//! report records which); 2 — the run description or geometry is invalid
//! (JSON diagnostics on stderr); 3 — a numerical failure such as an
//! ill-conditioned solve (JSON diagnostics on stderr).

use crate::discretize::{
    apply_a_function, assemble_block, assemble_full, build_grid_with_order, Grid,
};
use crate::exact_diag::{
    apply_a_diag, bezout_matrix, DoublePointSystem, FftWindow, Poly,
};
use crate::geometry::{validate_configuration, Configuration, Interval, SetLabel};
use crate::rhp::{KernelRoute, RhpContext, RhpError};
use crate::spectral::{spectral_report, SpectralReport};
use clap::Parser;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// Every task-level tolerance met.
pub const EXIT_OK: i32 = 0;
/// At least one residual exceeded its tolerance (see report.json).
pub const EXIT_TOLERANCE: i32 = 1;
/// The run description, geometry, or grid parameters are invalid.
pub const EXIT_CONFIG: i32 = 2;
/// A numerical failure occurred while executing the task.
pub const EXIT_NUMERICAL: i32 = 3;

/// Eigenvalue ±pairing must hold to the symmetric-eigensolver backward
/// error.
const TOL_PAIRING: f64 = 1e-8;
/// eig(full) and ±svd(block) agree as multisets to this tolerance.
const TOL_EIG_SVD: f64 = 1e-10;
/// Discrete eigenvalues may overshoot the operator-norm bound |λ| ≤ 1 by at
/// most this much at default resolution.
const TOL_NORM_EXCESS: f64 = 1e-3;
/// Minimum coefficient of determination for an exponential decay fit.
const TOL_DECAY_R2: f64 = 0.99;
/// Orthogonality of the chart-mixing field M(t)ᵀM(t) = I.
const TOL_ORTHOGONALITY: f64 = 1e-10;
/// Bézout kernel reconstruction at random point pairs.
const TOL_BEZOUT: f64 = 1e-10;
/// Diagonalized vs quadrature application of the transform.
const TOL_DIAG_COMPARE: f64 = 1e-4;
/// det Γ = 1 away from the contour.
const TOL_DET: f64 = 1e-6;
/// Extrapolated jump-condition residual.
const TOL_JUMP: f64 = 1e-4;
/// Conjugation and sign-flip symmetries of Γ (exact discretely).
const TOL_SYMMETRY: f64 = 1e-8;
/// Resolvent identity (I + R)(I − M/λ) = I for the density route.
const TOL_RESOLVENT_ID: f64 = 1e-8;
/// Γ-boundary kernel route against the direct matrix resolvent.
const TOL_KERNEL_ROUTE: f64 = 1e-4;
/// ‖Γ(z) − I‖ at |z| = 10⁴.
const TOL_GAMMA_INF: f64 = 1e-3;
/// Fitted decay exponent of Γ − I must be 1 within this.
const TOL_DECAY_EXPONENT: f64 = 0.1;
/// Linear-solve residual of (I − M/λ)F̃ = f̃.
const TOL_SOLVE: f64 = 1e-10;
/// det Γ deviation allowed at every sweep point.
const TOL_SWEEP_DET: f64 = 1e-5;

/// Command-line arguments of the `fht` binary.
#[derive(Debug, Parser)]
#[command(name = "fht", about = "Finite Hilbert transform experiment driver", version)]
pub struct CliArgs {
    /// Path to the JSON run description.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for report.json and CSV artifacts.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed for all randomized property checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for λ-sweeps (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TaskKind {
    Validate,
    Spectrum,
    Diagonalize,
    RhpCheck,
    Sweep,
}

impl TaskKind {
    fn name(self) -> &'static str {
        match self {
            TaskKind::Validate => "validate",
            TaskKind::Spectrum => "spectrum",
            TaskKind::Diagonalize => "diagonalize",
            TaskKind::RhpCheck => "rhp-check",
            TaskKind::Sweep => "sweep",
        }
    }
}

/// One interval endpoint: a number, or the sentinels "inf" / "-inf".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawEnd {
    Num(f64),
    Sym(String),
}

#[derive(Debug, Clone, Deserialize)]
struct RawGeometry {
    #[serde(rename = "J")]
    j: Vec<[RawEnd; 2]>,
    #[serde(rename = "E")]
    e: Vec<[RawEnd; 2]>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
struct RawGridSpec {
    panels: usize,
    order: usize,
    grading: f64,
}

impl Default for RawGridSpec {
    fn default() -> Self {
        RawGridSpec {
            panels: 16,
            order: 8,
            grading: 0.5,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    task: TaskKind,
    configuration: Option<RawGeometry>,
    grid: Option<RawGridSpec>,
    #[serde(default)]
    params: Value,
}

/// A failure classified by exit code, with a JSON diagnostic payload.
#[derive(Debug)]
struct Failure {
    exit: i32,
    kind: String,
    message: String,
    detail: Value,
}

impl Failure {
    fn config(kind: &str, message: impl ToString) -> Self {
        Failure {
            exit: EXIT_CONFIG,
            kind: kind.to_string(),
            message: message.to_string(),
            detail: Value::Null,
        }
    }

    fn numerical(kind: &str, message: impl ToString, detail: Value) -> Self {
        Failure {
            exit: EXIT_NUMERICAL,
            kind: kind.to_string(),
            message: message.to_string(),
            detail,
        }
    }
}

/// Geometry errors are diagnosed by their variant name so scripted callers
/// can match on `error.kind`.
fn geometry_kind(err: &crate::geometry::GeometryError) -> &'static str {
    use crate::geometry::GeometryError::*;
    match err {
        DegenerateInterval { .. } => "DegenerateInterval",
        OverlapError { .. } => "OverlapError",
        BothUnboundedSameSide => "BothUnboundedSameSide",
        SamplesAtPole { .. } => "SamplesAtPole",
        SingularMobius { .. } => "SingularMobius",
        NoFiniteGap => "NoFiniteGap",
    }
}

fn rhp_kind(err: &RhpError) -> &'static str {
    match err {
        RhpError::OnCut { .. } => "OnCut",
        RhpError::PoleOfLambda { .. } => "PoleOfLambda",
        RhpError::DegenerateFrame { .. } => "DegenerateFrame",
        RhpError::NearSpectrumIllConditioned { .. } => "NearSpectrumIllConditioned",
        RhpError::TooCloseToContour { .. } => "TooCloseToContour",
        RhpError::CoincidentPoints { .. } => "CoincidentPoints",
        RhpError::OutsideSupport { .. } => "OutsideSupport",
        RhpError::PoorSeparation { .. } => "PoorSeparation",
        RhpError::Discretize(_) => "Discretize",
    }
}

/// One checked number paired with the tolerance it was tested against.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualEntry {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// Whether the check passed; for most entries this is value ≤ tolerance,
    /// for goodness-of-fit entries value ≥ tolerance.
    pub pass: bool,
}

struct Residuals(Vec<ResidualEntry>);

impl Residuals {
    fn new() -> Self {
        Residuals(Vec::new())
    }

    /// Check value ≤ tolerance.
    fn at_most(&mut self, name: &str, value: f64, tolerance: f64) {
        self.0.push(ResidualEntry {
            name: name.to_string(),
            value,
            tolerance,
            pass: value.is_finite() && value <= tolerance,
        });
    }

    /// Check value ≥ tolerance (fit quality).
    fn at_least(&mut self, name: &str, value: f64, tolerance: f64) {
        self.0.push(ResidualEntry {
            name: name.to_string(),
            value,
            tolerance,
            pass: value.is_finite() && value >= tolerance,
        });
    }

    fn all_pass(&self) -> bool {
        self.0.iter().all(|r| r.pass)
    }
}

#[derive(Serialize)]
struct Report<'a> {
    crate_version: &'static str,
    task: &'a str,
    parameters: Value,
    results: Value,
    residuals: &'a [ResidualEntry],
    pass: bool,
}

/// Entry point used by the `fht` binary; returns the process exit code.
pub fn run(args: &CliArgs) -> i32 {
    if let Some(n) = args.threads {
        // A second initialization (tests run several configs in-process) is
        // harmless: the sweep math is order-independent per λ.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(args) {
        Ok(code) => code,
        Err(f) => {
            let payload = json!({
                "error": {
                    "kind": f.kind,
                    "message": f.message,
                    "detail": f.detail,
                }
            });
            eprintln!("{}", serde_json::to_string_pretty(&payload).expect("static JSON"));
            f.exit
        }
    }
}

fn execute(args: &CliArgs) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::config("ConfigRead", format!("{}: {e}", args.config.display())))?;
    let raw: RawRunConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::config("ConfigParse", e))?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::numerical("Io", format!("creating {}: {e}", args.out.display()), Value::Null))?;

    match raw.task {
        TaskKind::Validate => task_validate(args, &raw),
        TaskKind::Spectrum => task_spectrum(args, &raw),
        TaskKind::Diagonalize => task_diagonalize(args, &raw),
        TaskKind::RhpCheck => task_rhp_check(args, &raw),
        TaskKind::Sweep => task_sweep(args, &raw),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

fn resolve_end(end: &RawEnd) -> Result<f64, Failure> {
    match end {
        RawEnd::Num(x) => Ok(*x),
        RawEnd::Sym(s) => match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(Failure::config(
                "ConfigParse",
                format!("unknown endpoint sentinel {other:?}; use a number, \"inf\", or \"-inf\""),
            )),
        },
    }
}

fn resolve_intervals(raw: &[[RawEnd; 2]]) -> Result<Vec<Interval>, Failure> {
    raw.iter()
        .map(|pair| {
            let lo = resolve_end(&pair[0])?;
            let hi = resolve_end(&pair[1])?;
            Interval::new(lo, hi).map_err(|e| Failure::config(geometry_kind(&e), e))
        })
        .collect()
}

fn resolve_configuration(raw: &RawRunConfig) -> Result<Configuration, Failure> {
    let geo = raw.configuration.as_ref().ok_or_else(|| {
        Failure::config("ConfigParse", "this task requires a \"configuration\" object")
    })?;
    let j = resolve_intervals(&geo.j)?;
    let e = resolve_intervals(&geo.e)?;
    validate_configuration(&j, &e).map_err(|err| Failure::config(geometry_kind(&err), err))
}

fn resolve_grid(raw: &RawRunConfig, cfg: &Configuration) -> Result<(Grid, RawGridSpec), Failure> {
    let spec = raw.grid.unwrap_or_default();
    let grid = build_grid_with_order(cfg, spec.panels, spec.grading, spec.order)
        .map_err(|e| Failure::config("Discretize", e))?;
    Ok((grid, spec))
}

fn parse_params<T: serde::de::DeserializeOwned>(raw: &RawRunConfig) -> Result<T, Failure> {
    let v = if raw.params.is_null() {
        json!({})
    } else {
        raw.params.clone()
    };
    serde_json::from_value(v).map_err(|e| Failure::config("ConfigParse", format!("params: {e}")))
}

/// Serializes a possibly infinite endpoint symmetrically with the input
/// sentinels (serde_json would otherwise emit null for non-finite floats).
fn json_endpoint(x: f64) -> Value {
    if x == f64::INFINITY {
        json!("inf")
    } else if x == f64::NEG_INFINITY {
        json!("-inf")
    } else {
        json!(x)
    }
}

fn configuration_echo(cfg: &Configuration) -> Value {
    let spans = |mi: &crate::geometry::MultiInterval| -> Vec<Value> {
        mi.parts
            .iter()
            .map(|p| json!([json_endpoint(p.lo), json_endpoint(p.hi)]))
            .collect()
    };
    json!({ "J": spans(&cfg.j), "E": spans(&cfg.e) })
}

fn write_report(
    args: &CliArgs,
    task: TaskKind,
    parameters: Value,
    results: Value,
    residuals: &Residuals,
) -> Result<i32, Failure> {
    let pass = residuals.all_pass();
    let report = Report {
        crate_version: env!("CARGO_PKG_VERSION"),
        task: task.name(),
        parameters,
        results,
        residuals: &residuals.0,
        pass,
    };
    let path = args.out.join("report.json");
    let file = std::fs::File::create(&path)
        .map_err(|e| Failure::numerical("Io", format!("writing {}: {e}", path.display()), Value::Null))?;
    serde_json::to_writer_pretty(file, &report)
        .map_err(|e| Failure::numerical("Io", e, Value::Null))?;
    Ok(if pass { EXIT_OK } else { EXIT_TOLERANCE })
}

/// Full-precision float formatting shared by every CSV artifact; guarantees
/// byte-identical reruns and lossless round trips.
fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>, Failure> {
    csv::Writer::from_path(dir.join(name))
        .map_err(|e| Failure::numerical("Io", format!("writing {name}: {e}"), Value::Null))
}

fn csv_record<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    fields: &[String],
) -> Result<(), Failure> {
    w.write_record(fields)
        .map_err(|e| Failure::numerical("Io", e, Value::Null))
}

fn write_indexed_csv(dir: &Path, name: &str, header: &str, values: &[f64]) -> Result<(), Failure> {
    let mut w = csv_writer(dir, name)?;
    csv_record(&mut w, &["index".to_string(), header.to_string()])?;
    for (i, v) in values.iter().enumerate() {
        csv_record(&mut w, &[i.to_string(), fmt(*v)])?;
    }
    w.flush()
        .map_err(|e| Failure::numerical("Io", e, Value::Null))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

fn task_validate(args: &CliArgs, raw: &RawRunConfig) -> Result<i32, Failure> {
    let cfg = resolve_configuration(raw)?;
    let endpoints: Vec<Value> = cfg
        .endpoints
        .iter()
        .map(|e| json!({ "point": json_endpoint(e.point), "class": e.class }))
        .collect();
    let parts: Vec<Value> = cfg
        .union_parts()
        .iter()
        .map(|(iv, set)| {
            json!({
                "lo": json_endpoint(iv.lo),
                "hi": json_endpoint(iv.hi),
                "set": set,
            })
        })
        .collect();
    let results = json!({
        "configuration": configuration_echo(&cfg),
        "endpoints": endpoints,
        "parts": parts,
        "n_double": cfg.n_double,
        "bounded": cfg.is_bounded(),
        "merged_same_type": cfg.merged_same_type,
    });
    let parameters = json!({ "seed": args.seed });
    write_report(args, TaskKind::Validate, parameters, results, &Residuals::new())
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
struct SpectrumParams {
    histogram_bins: usize,
    histogram_range: [f64; 2],
    /// Gate the report on exponential decay (disjoint configurations only).
    require_decay: bool,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            histogram_bins: 9,
            histogram_range: [-0.9, 0.9],
            require_decay: false,
        }
    }
}

/// max_i |λ_desc_i − σ_i| over the top min(n_e, n_j) eigenvalues: how well
/// the full spectrum realizes ±(singular values).
fn eig_svd_mismatch(report: &SpectralReport) -> f64 {
    let mut desc: Vec<f64> = report.eigenvalues.clone();
    desc.sort_by(|a, b| b.total_cmp(a));
    report
        .singular_values
        .iter()
        .zip(&desc)
        .map(|(s, l)| (s - l).abs())
        .fold(0.0, f64::max)
}

fn task_spectrum(args: &CliArgs, raw: &RawRunConfig) -> Result<i32, Failure> {
    let params: SpectrumParams = parse_params(raw)?;
    let cfg = resolve_configuration(raw)?;
    let (grid, spec) = resolve_grid(raw, &cfg)?;
    let full = assemble_full(&grid);
    let block = assemble_block(&grid);
    let report = spectral_report(
        &grid,
        &full,
        &block,
        (params.histogram_range[0], params.histogram_range[1]),
        params.histogram_bins,
    )
    .map_err(|e| Failure::numerical("Spectral", e, Value::Null))?;

    write_indexed_csv(&args.out, "svals.csv", "sigma", &report.singular_values)?;
    write_indexed_csv(&args.out, "eigs.csv", "lambda", &report.eigenvalues)?;

    let mut residuals = Residuals::new();
    residuals.at_most("pairing_residual", report.pairing_residual, TOL_PAIRING);
    residuals.at_most("eig_svd_mismatch", eig_svd_mismatch(&report), TOL_EIG_SVD);
    let excess = report
        .eigenvalues
        .iter()
        .map(|l| (l.abs() - 1.0).max(0.0))
        .fold(0.0, f64::max);
    residuals.at_most("norm_bound_excess", excess, TOL_NORM_EXCESS);
    if params.require_decay {
        residuals.at_most("decay_rate", report.decay_rate, 0.0);
        residuals.at_least("decay_r_squared", report.decay.r_squared, TOL_DECAY_R2);
    }

    let results = serde_json::to_value(&report)
        .map_err(|e| Failure::numerical("Io", e, Value::Null))?;
    let parameters = json!({
        "configuration": configuration_echo(&cfg),
        "grid": spec,
        "params": params,
        "seed": args.seed,
    });
    write_report(args, TaskKind::Spectrum, parameters, results, &residuals)
}

// ---------------------------------------------------------------------------
// diagonalize
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DiagonalizeParams {
    /// Double points, ascending, length 2n.
    b: Vec<f64>,
    /// Random t draws for the orthogonality sweep.
    #[serde(default = "default_t_samples")]
    t_samples: usize,
    /// t is drawn uniformly from [−t_span, t_span].
    #[serde(default = "default_t_span")]
    t_span: f64,
    /// Random (z, x) pairs for the Bézout reconstruction check.
    #[serde(default = "default_bezout_pairs")]
    bezout_pairs: usize,
    /// Points per unbounded E ray in the diagonalized-vs-quadrature table
    /// (0 disables the comparison).
    #[serde(default = "default_compare_per_ray")]
    compare_per_ray: usize,
    /// Coefficients (ascending) of the polynomial applied on J.
    #[serde(default = "default_f_poly")]
    f_poly: Vec<f64>,
    #[serde(default = "default_fft_span")]
    fft_span: f64,
    #[serde(default = "default_fft_n")]
    fft_n: usize,
}

fn default_t_samples() -> usize {
    200
}
fn default_t_span() -> f64 {
    3.0
}
fn default_bezout_pairs() -> usize {
    100
}
fn default_compare_per_ray() -> usize {
    10
}
fn default_f_poly() -> Vec<f64> {
    vec![1.0, 0.0, -1.0]
}
fn default_fft_span() -> f64 {
    30.0
}
fn default_fft_n() -> usize {
    1 << 14
}

fn task_diagonalize(args: &CliArgs, raw: &RawRunConfig) -> Result<i32, Failure> {
    let params: DiagonalizeParams = parse_params(raw)?;
    let sys = DoublePointSystem::new(&params.b)
        .map_err(|e| Failure::config("ExactDiag", e))?;
    let bez = bezout_matrix(&sys)
        .map_err(|e| Failure::numerical("ExactDiag", e, Value::Null))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut residuals = Residuals::new();

    // Bézout matrix and spectral weights as CSV artifacts.
    {
        let n = sys.n;
        let mut w = csv_writer(&args.out, "bezout.csv")?;
        let header: Vec<String> = (0..n).map(|j| format!("col{j}")).collect();
        csv_record(&mut w, &header)?;
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| fmt(bez.matrix[(i, j)])).collect();
            csv_record(&mut w, &row)?;
        }
        w.flush().map_err(|e| Failure::numerical("Io", e, Value::Null))?;
    }
    write_indexed_csv(&args.out, "rho.csv", "rho", &bez.rho)?;

    // Orthogonality sweep of the chart-mixing field on both sides.
    let mut ortho_max = 0.0_f64;
    {
        let mut w = csv_writer(&args.out, "orthogonality.csv")?;
        csv_record(
            &mut w,
            &["t".to_string(), "side".to_string(), "residual".to_string()],
        )?;
        for _ in 0..params.t_samples {
            let t: f64 = rng.gen_range(-params.t_span..params.t_span);
            for side in [SetLabel::J, SetLabel::E] {
                let m = crate::exact_diag::m_field(&sys, &bez, side, t)
                    .map_err(|e| Failure::numerical("ExactDiag", e, Value::Null))?;
                let gram = &m * m.transpose();
                let mut dev = 0.0_f64;
                for i in 0..sys.n {
                    for j in 0..sys.n {
                        let target = if i == j { 1.0 } else { 0.0 };
                        dev = dev.max((gram[(i, j)] - target).abs());
                    }
                }
                ortho_max = ortho_max.max(dev);
                let side_name = match side {
                    SetLabel::J => "J",
                    SetLabel::E => "E",
                };
                csv_record(&mut w, &[fmt(t), side_name.to_string(), fmt(dev)])?;
            }
        }
        w.flush().map_err(|e| Failure::numerical("Io", e, Value::Null))?;
    }
    residuals.at_most("orthogonality_max_residual", ortho_max, TOL_ORTHOGONALITY);

    // Bézout kernel reconstruction at random point pairs.
    let span = params.b.last().copied().unwrap_or(1.0).abs().max(
        params.b.first().copied().unwrap_or(1.0).abs(),
    ) + 3.0;
    let mut bezout_max = 0.0_f64;
    for _ in 0..params.bezout_pairs {
        let z: f64 = rng.gen_range(-span..span);
        let x: f64 = rng.gen_range(-span..span);
        let direct =
            sys.beta_ev.eval(z) * sys.beta_od.eval(x) - sys.beta_od.eval(z) * sys.beta_ev.eval(x);
        let series: f64 = (0..sys.n)
            .map(|j| bez.rho[j] * bez.p_polys[j].eval(z) * bez.p_polys[j].eval(x))
            .sum();
        let scale = direct.abs().max(1.0);
        bezout_max = bezout_max.max(((z - x) * series - direct).abs() / scale);
    }
    residuals.at_most("bezout_reconstruction", bezout_max, TOL_BEZOUT);

    // Diagonalized route against plain quadrature on the unbounded E rays.
    let mut compare_max = 0.0_f64;
    let mut compare_rows = Vec::new();
    if params.compare_per_ray > 0 {
        let b_lo = params.b[0];
        let b_hi = *params.b.last().expect("b nonempty by construction");
        let width = (b_hi - b_lo).max(1.0);
        let mut zs = Vec::new();
        for k in 0..params.compare_per_ray {
            let offset = width * (0.2 + 0.35 * k as f64);
            zs.push(b_hi + offset);
            zs.push(b_lo - offset);
        }
        zs.sort_by(f64::total_cmp);

        let poly = Poly::new(params.f_poly.clone());
        let f = |x: f64| poly.eval(x);
        let window = FftWindow {
            span: params.fft_span,
            n: params.fft_n,
        };
        let diag = apply_a_diag(&sys, &f, &zs, &window)
            .map_err(|e| Failure::numerical("ExactDiag", e, Value::Null))?;

        // Quadrature route: a grid over the bounded J intervals (the dummy E
        // interval is never touched by the J-only quadrature).
        let j_ivs: Vec<Interval> = (0..sys.n)
            .map(|k| Interval::new(params.b[2 * k], params.b[2 * k + 1]).expect("b ascending"))
            .collect();
        let dummy_e = Interval::new(b_hi + 100.0 * width, b_hi + 101.0 * width)
            .expect("dummy interval is ordered");
        let cfg = validate_configuration(&j_ivs, &[dummy_e])
            .map_err(|e| Failure::numerical(geometry_kind(&e), e, Value::Null))?;
        let spec = raw.grid.unwrap_or_default();
        let grid = build_grid_with_order(&cfg, spec.panels, spec.grading, spec.order)
            .map_err(|e| Failure::config("Discretize", e))?;

        for (&z, &d) in zs.iter().zip(&diag) {
            let q = apply_a_function(&grid, &f, z)
                .map_err(|e| Failure::numerical("Discretize", e, Value::Null))?;
            let rel = (d - q).abs() / q.abs().max(1e-12);
            compare_max = compare_max.max(rel);
            compare_rows.push((z, d, q, rel));
        }
        let mut w = csv_writer(&args.out, "comparison.csv")?;
        csv_record(
            &mut w,
            &[
                "z".to_string(),
                "diagonalized".to_string(),
                "quadrature".to_string(),
                "rel_error".to_string(),
            ],
        )?;
        for (z, d, q, rel) in &compare_rows {
            csv_record(&mut w, &[fmt(*z), fmt(*d), fmt(*q), fmt(*rel)])?;
        }
        w.flush().map_err(|e| Failure::numerical("Io", e, Value::Null))?;
        residuals.at_most("diag_vs_quadrature_rel", compare_max, TOL_DIAG_COMPARE);
    }

    let bezout_rows: Vec<Vec<f64>> = (0..sys.n)
        .map(|i| (0..sys.n).map(|j| bez.matrix[(i, j)]).collect())
        .collect();
    let results = json!({
        "n": sys.n,
        "b": params.b,
        "rho": bez.rho,
        "bezout": bezout_rows,
        "beta_od": sys.beta_od.coeffs,
        "beta_ev": sys.beta_ev.coeffs,
        "q": sys.q.coeffs,
        "compare_points": compare_rows.len(),
    });
    let parameters = json!({ "params": params, "grid": raw.grid.unwrap_or_default(), "seed": args.seed });
    write_report(args, TaskKind::Diagonalize, parameters, results, &residuals)
}

// ---------------------------------------------------------------------------
// rhp-check
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RhpParams {
    /// Spectral parameter [Re λ, Im λ], off the cut [−1, 1].
    lambda: [f64; 2],
    /// Jump probes per interval part.
    #[serde(default = "default_probes")]
    probes: usize,
    /// Optional explicit z-path for the Γ sample CSV.
    z_path: Option<Vec<[f64; 2]>>,
}

fn default_probes() -> usize {
    10
}

fn rhp_failure(err: RhpError) -> Failure {
    let detail = match &err {
        RhpError::NearSpectrumIllConditioned { lambda, cond } => json!({
            "lambda": [lambda.re, lambda.im],
            "condition": cond,
        }),
        RhpError::TooCloseToContour { z, dist } => json!({
            "z": [z.re, z.im],
            "distance": dist,
        }),
        _ => Value::Null,
    };
    Failure::numerical(rhp_kind(&err), err, detail)
}

fn task_rhp_check(args: &CliArgs, raw: &RawRunConfig) -> Result<i32, Failure> {
    let params: RhpParams = parse_params(raw)?;
    let cfg = resolve_configuration(raw)?;
    let (grid, spec) = resolve_grid(raw, &cfg)?;
    let ctx = RhpContext::from_grid(cfg.clone(), grid);
    let lambda = Complex64::new(params.lambda[0], params.lambda[1]);
    // The characterization (frames, parametrix, strip chart) lives off the
    // cut [−1, 1]; certify that before running any discrete check.
    let chart = crate::rhp::rho_of_lambda(lambda).map_err(rhp_failure)?;
    let fs = ctx.solve_f(lambda).map_err(rhp_failure)?;

    let mut residuals = Residuals::new();
    residuals.at_most("solve_residual", fs.residual, TOL_SOLVE);

    // Unit determinant away from the contour.
    let zs = ctx.probe_points(20);
    let field = ctx.gamma_field(&fs, &zs).map_err(rhp_failure)?;
    residuals.at_most("det_gamma_deviation", field.det_deviation, TOL_DET);

    // Normalization at infinity and the first-order decay of Γ − I.
    let hull: Vec<f64> = ctx.grid.parts.iter().flat_map(|p| [p.lo, p.hi]).collect();
    let center = 0.5
        * (hull.iter().copied().fold(f64::INFINITY, f64::min)
            + hull.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let dir = Complex64::new(0.96, 0.28); // fixed unit direction off the axis
    let dev_at = |r: f64| -> Result<f64, Failure> {
        let g = ctx
            .gamma_at(&fs, Complex64::new(center, 0.0) + dir * r)
            .map_err(rhp_failure)?;
        let d = g - nalgebra::Matrix2::identity();
        Ok(d.iter().map(|c| c.norm()).fold(0.0, f64::max))
    };
    let d3 = dev_at(1e3)?;
    let d4 = dev_at(1e4)?;
    residuals.at_most("gamma_infinity_deviation", d4, TOL_GAMMA_INF);
    let exponent = (d3 / d4).log10();
    residuals.at_most("decay_exponent_error", (exponent - 1.0).abs(), TOL_DECAY_EXPONENT);

    // Jump condition across every part.
    let jump = ctx.check_jump(&fs, params.probes).map_err(rhp_failure)?;
    residuals.at_most("jump_max_residual", jump.max_residual, TOL_JUMP);

    // Exact discrete symmetries.
    let sym_zs = ctx.probe_points(6);
    let conj_dev = ctx
        .symmetry_conjugation(lambda, &sym_zs)
        .map_err(rhp_failure)?;
    residuals.at_most("symmetry_conjugation", conj_dev, TOL_SYMMETRY);
    let flip_dev = ctx
        .symmetry_sign_flip(lambda, &sym_zs)
        .map_err(rhp_failure)?;
    residuals.at_most("symmetry_sign_flip", flip_dev, TOL_SYMMETRY);

    // Resolvent identity for the density route and the Γ-boundary
    // cross-check against the direct matrix resolvent.
    let r_density = ctx
        .resolvent_matrix(&fs, KernelRoute::SolvedDensity)
        .map_err(rhp_failure)?;
    residuals.at_most(
        "resolvent_identity",
        ctx.resolvent_identity_residual(&fs, &r_density),
        TOL_RESOLVENT_ID,
    );
    let r_gamma = ctx
        .resolvent_matrix(&fs, KernelRoute::GammaBoundary)
        .map_err(rhp_failure)?;
    let direct = ctx.direct_resolvent(lambda).map_err(rhp_failure)?;
    residuals.at_most(
        "kernel_route_deviation",
        relative_frobenius(&r_gamma, &direct),
        TOL_KERNEL_ROUTE,
    );

    // Γ samples along the requested path.
    let path: Vec<Complex64> = match &params.z_path {
        Some(pts) => pts.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
        None => ctx.probe_points(24),
    };
    {
        let mut w = csv_writer(&args.out, "gamma_path.csv")?;
        csv_record(
            &mut w,
            &[
                "z_re", "z_im", "g11_re", "g11_im", "g12_re", "g12_im", "g21_re", "g21_im",
                "g22_re", "g22_im",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
        )?;
        for &z in &path {
            let g = ctx.gamma_at(&fs, z).map_err(rhp_failure)?;
            csv_record(
                &mut w,
                &[
                    fmt(z.re),
                    fmt(z.im),
                    fmt(g[(0, 0)].re),
                    fmt(g[(0, 0)].im),
                    fmt(g[(0, 1)].re),
                    fmt(g[(0, 1)].im),
                    fmt(g[(1, 0)].re),
                    fmt(g[(1, 0)].im),
                    fmt(g[(1, 1)].re),
                    fmt(g[(1, 1)].im),
                ],
            )?;
        }
        w.flush().map_err(|e| Failure::numerical("Io", e, Value::Null))?;
    }

    let gap = ctx
        .eigenvalues()
        .iter()
        .map(|mu| (Complex64::new(*mu, 0.0) - lambda).norm())
        .fold(f64::INFINITY, f64::min);
    let results = json!({
        "lambda": [lambda.re, lambda.im],
        "rho": [chart.rho.re, chart.rho.im],
        "condition": fs.condition,
        "n_nodes": ctx.grid.len(),
        "spectrum_distance": gap,
        "jump_probes": jump.probes.len(),
        "decay_exponent": exponent,
    });
    let parameters = json!({
        "configuration": configuration_echo(&cfg),
        "grid": spec,
        "params": params,
        "seed": args.seed,
    });
    write_report(args, TaskKind::RhpCheck, parameters, results, &residuals)
}

/// ‖A − B‖_F / ‖B‖_F.
fn relative_frobenius(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            num += (a[(i, j)] - b[(i, j)]).norm_sqr();
            den += b[(i, j)].norm_sqr();
        }
    }
    (num / den).sqrt()
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SegmentSpec {
    from: [f64; 2],
    to: [f64; 2],
    count: usize,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SweepParams {
    /// Explicit λ list.
    lambdas: Option<Vec<[f64; 2]>>,
    /// Or a uniformly sampled segment in the λ-plane.
    segment: Option<SegmentSpec>,
}

struct SweepRow {
    lambda: Complex64,
    condition: f64,
    solve_residual: f64,
    det_deviation: f64,
    spectrum_distance: f64,
}

fn task_sweep(args: &CliArgs, raw: &RawRunConfig) -> Result<i32, Failure> {
    let params: SweepParams = parse_params(raw)?;
    let cfg = resolve_configuration(raw)?;
    let (grid, spec) = resolve_grid(raw, &cfg)?;
    let ctx = RhpContext::from_grid(cfg.clone(), grid);

    let lambdas: Vec<Complex64> = match (&params.lambdas, &params.segment) {
        (Some(list), None) => list.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
        (None, Some(seg)) => {
            if seg.count < 2 {
                return Err(Failure::config("ConfigParse", "segment.count must be ≥ 2"));
            }
            let from = Complex64::new(seg.from[0], seg.from[1]);
            let to = Complex64::new(seg.to[0], seg.to[1]);
            (0..seg.count)
                .map(|k| {
                    let t = k as f64 / (seg.count - 1) as f64;
                    from + (to - from) * t
                })
                .collect()
        }
        _ => {
            return Err(Failure::config(
                "ConfigParse",
                "sweep needs exactly one of \"lambdas\" or \"segment\"",
            ))
        }
    };
    if lambdas.is_empty() {
        return Err(Failure::config("ConfigParse", "empty λ list"));
    }

    let probe = ctx.probe_points(4);
    let rows: Result<Vec<SweepRow>, RhpError> = lambdas
        .par_iter()
        .map(|&lambda| {
            let fs = ctx.solve_f(lambda)?;
            let field = ctx.gamma_field(&fs, &probe)?;
            let dist = ctx
                .eigenvalues()
                .iter()
                .map(|mu| (Complex64::new(*mu, 0.0) - lambda).norm())
                .fold(f64::INFINITY, f64::min);
            Ok(SweepRow {
                lambda,
                condition: fs.condition,
                solve_residual: fs.residual,
                det_deviation: field.det_deviation,
                spectrum_distance: dist,
            })
        })
        .collect();
    let rows = rows.map_err(rhp_failure)?;

    {
        let mut w = csv_writer(&args.out, "sweep.csv")?;
        csv_record(
            &mut w,
            &[
                "lambda_re",
                "lambda_im",
                "condition",
                "solve_residual",
                "det_deviation",
                "spectrum_distance",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
        )?;
        for row in &rows {
            csv_record(
                &mut w,
                &[
                    fmt(row.lambda.re),
                    fmt(row.lambda.im),
                    fmt(row.condition),
                    fmt(row.solve_residual),
                    fmt(row.det_deviation),
                    fmt(row.spectrum_distance),
                ],
            )?;
        }
        w.flush().map_err(|e| Failure::numerical("Io", e, Value::Null))?;
    }

    let max_solve = rows.iter().map(|r| r.solve_residual).fold(0.0, f64::max);
    let max_det = rows.iter().map(|r| r.det_deviation).fold(0.0, f64::max);
    let mut residuals = Residuals::new();
    residuals.at_most("max_solve_residual", max_solve, TOL_SOLVE);
    residuals.at_most("max_det_deviation", max_det, TOL_SWEEP_DET);

    let results = json!({
        "points": rows.len(),
        "max_condition": rows.iter().map(|r| r.condition).fold(0.0, f64::max),
        "min_spectrum_distance": rows
            .iter()
            .map(|r| r.spectrum_distance)
            .fold(f64::INFINITY, f64::min),
    });
    let parameters = json!({
        "configuration": configuration_echo(&cfg),
        "grid": spec,
        "params": params,
        "seed": args.seed,
        "threads": args.threads,
    });
    write_report(args, TaskKind::Sweep, parameters, results, &residuals)
}
