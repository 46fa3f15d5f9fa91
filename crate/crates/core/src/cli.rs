//! `sinkfrac` command-line surface.
//!
//! Exit status: 0 on success, 1 on input or configuration errors, 2 when the
//! solver stops at `--max-iterations` without meeting `--tolerance` (the
//! coupling is still written).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{
    ball_count_check, decay_envelope_fit, dimension_bounds, BoundReport, BoundVariant, DecayFit,
    MeasuredDimensions, MeasurementSource,
};
use crate::error::{Error, Result};
use crate::generators::{generate_instance, Family, InstanceSpec};
use crate::io::{format_f64, read_matrix, read_vector, render_rows, write_matrix, write_text, write_vector};
use crate::measure::{
    dyadic_coarsen, measure_from_coupling, metric_balls, CoarseGraining, GridMeasure, ProductMetric,
    ScaleSet,
};
use crate::multifractal::{
    analyze, histogram_spectrum, local_exponents, HistogramBin, QGrid, SpectrumResult,
};
use crate::ot::{
    check_triangle_inequality, geodesic_distance, marginal_residual, sinkhorn_solve, CostMatrix,
    CouplingMatrix, MarginalPair, SinkhornConfig, SolveReport, SolverMode,
};
use crate::report::{InputDigest, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Triangle-inequality violations listed in a verify report; the count is always complete.
pub const MAX_LISTED_VIOLATIONS: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "sinkfrac",
    version,
    about = "Sinkhorn couplings and their multifractal spectra"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an entropic transport problem and write the coupling.
    Solve(SolveArgs),
    /// Estimate tau(q), D(q), alpha and f(alpha) of a coupling.
    Analyze(AnalyzeArgs),
    /// Check decay envelope, dimension bounds and triangle inequality.
    Verify(VerifyArgs),
    /// Write a seeded test instance.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Naive,
    LogDomain,
}

impl From<ModeArg> for SolverMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Naive => SolverMode::Naive,
            ModeArg::LogDomain => SolverMode::LogDomain,
        }
    }
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct SolveArgs {
    /// Cost matrix file.
    #[arg(long)]
    pub cost: PathBuf,
    /// Row marginal file.
    #[arg(long)]
    pub row: PathBuf,
    /// Column marginal file.
    #[arg(long)]
    pub col: PathBuf,
    /// Entropic regularization.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Maximum L1 marginal residual (row and column sides summed).
    #[arg(long, default_value_t = SinkhornConfig::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = SinkhornConfig::DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::LogDomain)]
    pub mode: ModeArg,
    /// Coupling output file.
    #[arg(long, default_value = "coupling.csv")]
    pub output: PathBuf,
    #[arg(long, default_value = "solve_report.json")]
    pub report: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CoveringArg {
    Dyadic,
    Metric,
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct ScaleArgs {
    /// Moment grid as min:max:step.
    #[arg(long, default_value = "-5:5:0.25", allow_hyphen_values = true)]
    pub q_grid: String,
    /// Half-width of the window around q = 1 where D(q) is the information dimension.
    #[arg(long, default_value_t = QGrid::DEFAULT_DELTA)]
    pub q_delta: f64,
    /// Coarsest dyadic level.
    #[arg(long, default_value_t = 2)]
    pub k_min: u32,
    /// Finest dyadic level [default: log2 of the padded grid size].
    #[arg(long)]
    pub k_max: Option<u32>,
}

impl ScaleArgs {
    fn q_grid(&self) -> Result<QGrid> {
        let parts: Vec<&str> = self.q_grid.split(':').collect();
        let [min, max, step] = parts.as_slice() else {
            return Err(Error::invalid(format!("q grid {:?} is not min:max:step", self.q_grid)));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number {s:?} in q grid")))
        };
        QGrid::from_range(num(min)?, num(max)?, num(step)?, self.q_delta)
    }

    /// Resolves the default `k_max` and validates the level count.
    fn scales(&mut self, mu: &GridMeasure) -> Result<ScaleSet> {
        let k_max = *self.k_max.get_or_insert(mu.padded_exponent());
        ScaleSet::range(self.k_min, k_max).map_err(|e| match e {
            Error::TooFewLevels { actual, .. } => Error::invalid(format!(
                "fewer than 3 usable scales: levels {}..={k_max} give {actual}",
                self.k_min
            )),
            other => other,
        })
    }
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct AnalyzeArgs {
    /// Coupling matrix file.
    #[arg(long)]
    pub coupling: PathBuf,
    #[command(flatten)]
    pub scales: ScaleArgs,
    /// Covering used for the partition function.
    #[arg(long, value_enum, default_value_t = CoveringArg::Dyadic)]
    pub covering: CoveringArg,
    /// Point-to-point ground cost; required for metric coverings.
    #[arg(long)]
    pub ground_cost: Option<PathBuf>,
    /// Bins of the local-exponent histogram.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value = "analyze_report.json")]
    pub report: PathBuf,
    /// Flat q,tau,D,alpha,f table.
    #[arg(long, default_value = "analyze_table.csv")]
    pub table: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    ProofBody,
    StatementLiteral,
}

impl From<VariantArg> for BoundVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::ProofBody => BoundVariant::ProofBody,
            VariantArg::StatementLiteral => BoundVariant::StatementLiteral,
        }
    }
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub cost: PathBuf,
    #[arg(long)]
    pub coupling: PathBuf,
    /// Report from `analyze` supplying measured D(0), D(1), D(2).
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VariantArg::ProofBody)]
    pub variant: VariantArg,
    /// Scales used when no spectrum report is given.
    #[command(flatten)]
    pub scales: ScaleArgs,
    #[arg(long, default_value = "verify_report.json")]
    pub report: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    CascadeProduct,
    EuclideanPoints,
    RandomUniformCost,
    ConstantCost,
}

#[derive(Clone, Debug, Serialize, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Problem size (cascade products use 2^depth instead).
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cascade weight.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    /// Cascade depth.
    #[arg(long, default_value_t = 6)]
    pub depth: u32,
    /// Dimension of the Euclidean point cloud.
    #[arg(long, default_value_t = 2)]
    pub dimension: usize,
    /// Lower end of random costs.
    #[arg(long, default_value_t = 0.0)]
    pub low: f64,
    /// Upper end of random costs.
    #[arg(long, default_value_t = 1.0)]
    pub high: f64,
    /// Entry of a constant cost.
    #[arg(long, default_value_t = 1.0)]
    pub value: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl GenerateArgs {
    fn spec(&self) -> InstanceSpec {
        let family = match self.family {
            FamilyArg::CascadeProduct => Family::CascadeProduct {
                p: self.p,
                depth: self.depth,
            },
            FamilyArg::EuclideanPoints => Family::EuclideanPoints {
                dimension: self.dimension,
            },
            FamilyArg::RandomUniformCost => Family::RandomUniformCost {
                low: self.low,
                high: self.high,
            },
            FamilyArg::ConstantCost => Family::ConstantCost { value: self.value },
        };
        InstanceSpec {
            family,
            n: self.n,
            seed: self.seed,
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn read_cost(path: &Path) -> Result<CostMatrix> {
    CostMatrix::new(read_matrix(path)?)
}

fn read_coupling(path: &Path) -> Result<CouplingMatrix> {
    CouplingMatrix::new(read_matrix(path)?)
}

#[derive(Debug, Serialize)]
struct SolveResult {
    n: usize,
    solve: SolveReport,
    marginal_residual: f64,
    total_mass: f64,
}

pub fn cmd_solve(args: SolveArgs) -> Result<i32> {
    let cost = read_cost(&args.cost)?;
    let marginals = MarginalPair::new(read_vector(&args.row)?, read_vector(&args.col)?)?;
    let config = SinkhornConfig {
        epsilon: args.epsilon,
        tolerance: args.tolerance,
        max_iterations: args.max_iterations,
        mode: args.mode.into(),
    };
    let inputs = vec![
        InputDigest::of_file("cost", &args.cost)?,
        InputDigest::of_file("row", &args.row)?,
        InputDigest::of_file("col", &args.col)?,
    ];
    let sol = sinkhorn_solve(&cost, &marginals, &config)?;
    let comments = vec![format!(
        "sinkfrac {} coupling n={} epsilon={} mode={:?} converged={}",
        crate::VERSION,
        cost.n(),
        format_f64(args.epsilon),
        config.mode,
        sol.report.converged
    )];
    write_matrix(&args.output, sol.coupling.matrix(), &comments)?;

    let converged = sol.report.converged;
    let result = SolveResult {
        n: cost.n(),
        marginal_residual: marginal_residual(&sol.coupling, &marginals),
        total_mass: sol.coupling.matrix().sum(),
        solve: sol.report,
    };
    let mut report = Report::new("solve", &args, inputs, result);
    if report.result.solve.kernel_underflows > 0 {
        report.notes.push(format!(
            "{} kernel entries underflow in naive mode; prefer --mode log-domain",
            report.result.solve.kernel_underflows
        ));
    }
    if !converged {
        report.notes.push(format!(
            "not converged after {} iterations (residual {})",
            report.result.solve.iterations,
            format_f64(report.result.solve.final_residual)
        ));
    }
    report.write(&args.report)?;
    Ok(if converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Debug, Serialize)]
struct LevelSummary {
    level: u32,
    log2_scale: f64,
    boxes: usize,
    dropped_boxes: usize,
}

#[derive(Debug, Serialize)]
struct LocalSummary {
    level: u32,
    cells: usize,
    alpha_min: f64,
    alpha_max: f64,
}

#[derive(Debug, Serialize)]
struct AnalyzeResult {
    n: usize,
    padded_n: usize,
    renormalized_deviation: Option<f64>,
    covering: CoveringArg,
    levels: Vec<LevelSummary>,
    ball_cap_ok: bool,
    spectrum: SpectrumResult,
    local_exponents: LocalSummary,
    histogram: Vec<HistogramBin>,
}

fn metric_coarse_graining(mu: &GridMeasure, ground: &CostMatrix, scales: &ScaleSet) -> Result<CoarseGraining> {
    if ground.n() != mu.n() {
        return Err(Error::DimensionMismatch {
            what: "ground cost size vs coupling size",
            expected: mu.n(),
            actual: ground.n(),
        });
    }
    let metric = ProductMetric::symmetric(geodesic_distance(ground));
    let diameter = metric.diameter();
    if !(diameter > 0.0) {
        return Err(Error::invalid("ground cost has zero diameter"));
    }
    let coverings = scales
        .levels()
        .iter()
        .map(|&k| Ok((k, metric_balls(mu, &metric, diameter * (-(k as f64)).exp2())?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoarseGraining::from_metric_coverings(&coverings))
}

pub fn cmd_analyze(mut args: AnalyzeArgs) -> Result<i32> {
    let coupling = read_coupling(&args.coupling)?;
    let mut inputs = vec![InputDigest::of_file("coupling", &args.coupling)?];
    let mu = measure_from_coupling(&coupling)?;
    let qs = args.scales.q_grid()?;
    let scales = args.scales.scales(&mu)?;
    let dyadic = dyadic_coarsen(&mu, &scales)?;
    let mut notes = Vec::new();

    let mut covering = args.covering;
    let cg = match (args.covering, &args.ground_cost) {
        (CoveringArg::Dyadic, _) => dyadic.clone(),
        (CoveringArg::Metric, Some(path)) => {
            inputs.push(InputDigest::of_file("ground_cost", path)?);
            metric_coarse_graining(&mu, &read_cost(path)?, &scales)?
        }
        (CoveringArg::Metric, None) => {
            notes.push("metric covering unavailable without --ground-cost; dyadic boxes used".to_string());
            covering = CoveringArg::Dyadic;
            dyadic.clone()
        }
    };
    let spectrum = analyze(&cg, &qs)?;
    let field = local_exponents(&mu, &scales)?;
    let histogram = histogram_spectrum(&field, args.bins, &scales)?;
    let (alpha_min, alpha_max) = field
        .exponents
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.alpha), hi.max(e.alpha)));

    if mu.padded_n() != mu.n() {
        let dropped = dyadic.levels.last().map(|l| l.dropped_boxes).unwrap_or(0);
        notes.push(format!(
            "n = {} padded to {} with zero mass; {} empty boxes dropped at the finest level",
            mu.n(),
            mu.padded_n(),
            dropped
        ));
    }
    if let Some(dev) = mu.renormalized_deviation() {
        notes.push(format!("coupling mass deviated from 1 by {}; renormalized", format_f64(dev)));
    }
    if spectrum.floored_boxes > 0 {
        notes.push(format!(
            "{} boxes below {:e} left out of the partition function",
            spectrum.floored_boxes,
            crate::multifractal::MASS_FLOOR
        ));
    }

    let table = render_table(&spectrum);
    let result = AnalyzeResult {
        n: mu.n(),
        padded_n: mu.padded_n(),
        renormalized_deviation: mu.renormalized_deviation(),
        covering,
        levels: cg
            .levels
            .iter()
            .map(|l| LevelSummary {
                level: l.level,
                log2_scale: l.log2_scale,
                boxes: l.masses.len(),
                dropped_boxes: l.dropped_boxes,
            })
            .collect(),
        ball_cap_ok: ball_count_check(&dyadic, mu.n()),
        spectrum,
        local_exponents: LocalSummary {
            level: field.level,
            cells: field.exponents.len(),
            alpha_min,
            alpha_max,
        },
        histogram,
    };
    let mut report = Report::new("analyze", &args, inputs, result);
    report.notes = notes;
    write_text(&args.table, &table)?;
    report.write(&args.report)?;
    Ok(EXIT_OK)
}

fn render_table(spectrum: &SpectrumResult) -> String {
    let mut out = String::from("q,tau,D,alpha,f\n");
    for p in &spectrum.points {
        let row: Vec<String> = [p.q, p.tau, p.d, p.alpha, p.f].iter().map(|&x| format_f64(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct TriangleFindings {
    assumption_holds: bool,
    violation_count: usize,
    /// Zero-based `(i, j, k)` with `C_ij > C_ik + C_kj`.
    violations: Vec<(usize, usize, usize)>,
    truncated: bool,
}

#[derive(Debug, Serialize)]
struct VerifyResult {
    bounds: BoundReport,
    decay: Option<DecayFit>,
    decay_error: Option<String>,
    triangle: TriangleFindings,
}

/// Reads D(0), D(1), D(2) from an `analyze` report.
fn measured_from_report(path: &Path) -> Result<MeasuredDimensions> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let spectrum = &value["result"]["spectrum"];
    let d_at = |q: f64| {
        spectrum["points"]
            .as_array()
            .and_then(|pts| pts.iter().find(|p| p["q"].as_f64() == Some(q)))
            .and_then(|p| p["d"].as_f64())
            .ok_or_else(|| Error::invalid(format!("{}: no D at q = {q}", path.display())))
    };
    Ok(MeasuredDimensions {
        d0: d_at(0.0)?,
        d1: spectrum["d1"]
            .as_f64()
            .ok_or_else(|| Error::invalid(format!("{}: no d1", path.display())))?,
        d2: d_at(2.0)?,
        source: MeasurementSource::Regression,
    })
}

pub fn cmd_verify(mut args: VerifyArgs) -> Result<i32> {
    let cost = read_cost(&args.cost)?;
    let coupling = read_coupling(&args.coupling)?;
    let mut inputs = vec![
        InputDigest::of_file("cost", &args.cost)?,
        InputDigest::of_file("coupling", &args.coupling)?,
    ];
    if coupling.n() != cost.n() {
        return Err(Error::DimensionMismatch {
            what: "coupling size vs cost size",
            expected: cost.n(),
            actual: coupling.n(),
        });
    }
    let mut notes = Vec::new();
    let measured = match &args.spectrum {
        Some(path) => {
            inputs.push(InputDigest::of_file("spectrum", path)?);
            measured_from_report(path)?
        }
        None => {
            let mu = measure_from_coupling(&coupling)?;
            let qs = args.scales.q_grid()?;
            match args.scales.scales(&mu) {
                Ok(scales) => MeasuredDimensions::from_spectrum(&analyze(&dyadic_coarsen(&mu, &scales)?, &qs)?)?,
                Err(e) => {
                    notes.push(format!("{e}; dimensions measured at the finest scale only"));
                    MeasuredDimensions::finest_scale(&mu)?
                }
            }
        }
    };
    let bounds = dimension_bounds(&cost, &coupling, &measured, args.variant.into())?;
    for (name, pass, value, bound) in [
        ("D(0)", bounds.pass_d0, bounds.measured.d0, bounds.bound_d0),
        ("D(1)", bounds.pass_d1, bounds.measured.d1, bounds.bound_d1),
        ("D(2)", bounds.pass_d2, bounds.measured.d2, bounds.bound_d2),
    ] {
        if !pass {
            notes.push(format!(
                "measured {name} = {} exceeds its bound {}",
                format_f64(value),
                format_f64(bound)
            ));
        }
    }

    let all = check_triangle_inequality(&cost);
    let triangle = TriangleFindings {
        assumption_holds: all.is_empty(),
        violation_count: all.len(),
        truncated: all.len() > MAX_LISTED_VIOLATIONS,
        violations: all.into_iter().take(MAX_LISTED_VIOLATIONS).collect(),
    };
    let (decay, decay_error) = match decay_envelope_fit(&coupling, &geodesic_distance(&cost)) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };
    // record the resolved k_max even when a spectrum file was supplied
    if args.scales.k_max.is_none() {
        args.scales.k_max = Some(coupling.n().next_power_of_two().trailing_zeros());
    }
    let mut report = Report::new(
        "verify",
        &args,
        inputs,
        VerifyResult {
            bounds,
            decay,
            decay_error,
            triangle,
        },
    );
    report.notes = notes;
    report.write(&args.report)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct InstanceManifest<'a> {
    tool: &'static str,
    version: &'static str,
    spec: &'a InstanceSpec,
    files: Vec<String>,
}

pub fn cmd_generate(args: GenerateArgs) -> Result<i32> {
    let spec = args.spec();
    let inst = generate_instance(&spec)?;
    let dir = &args.out_dir;
    let header = vec![format!("sinkfrac {} {}", crate::VERSION, serde_json::to_string(&spec).expect("spec serializes"))];
    let mut files = vec!["cost.csv", "row.csv", "col.csv"];
    write_matrix(&dir.join("cost.csv"), inst.cost.matrix(), &header)?;
    write_vector(&dir.join("row.csv"), inst.marginals.row(), &header)?;
    write_vector(&dir.join("col.csv"), inst.marginals.col(), &header)?;
    if let Some(p) = &inst.coupling {
        write_matrix(&dir.join("coupling.csv"), p.matrix(), &header)?;
        files.push("coupling.csv");
    }
    if let Some(points) = &inst.points {
        write_text(&dir.join("points.csv"), &render_rows(&header, points.iter().map(|p| p.as_slice())))?;
        files.push("points.csv");
    }
    let manifest = InstanceManifest {
        tool: "sinkfrac",
        version: crate::VERSION,
        spec: &spec,
        files: files.iter().map(|s| s.to_string()).collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_text(&dir.join("instance.json"), &json)?;
    Ok(EXIT_OK)
}
