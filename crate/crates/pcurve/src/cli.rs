//! Subcommands of the `pcurve` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pcurve_core::{
    brute_force_min, build_plan, certify_fit, conjecture_search, energy, full_report, stationarity_report,
    synth_measure, Certification, DiscreteMeasure, EnergyBreakdown, FitConfig, OracleConfig, OracleResult, Polyline,
    SearchConfig, StationarityReport, SynthFamily, SynthParams, TheoryReport,
};
use serde::Serialize;

use crate::formats::{self, MeasureFormat};
use crate::manifest::{document, RunManifest};
use crate::{fit_parallel, write_output, CliError};

#[derive(Debug, Parser)]
#[command(name = "pcurve", version, about = "Fit and audit length-penalized principal curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a curve and write curve.json, result.json and report.json.
    Fit(FitArgs),
    /// Evaluate the energy, stationarity residuals and theory checks of a given curve.
    Check(CheckArgs),
    /// Brute-force grid minimization over curves with at most four vertices.
    Oracle(OracleArgs),
    /// Draw a planar measure and optionally a curve as SVG.
    Plot(PlotArgs),
    /// Search random small measures for fitted curves that cross themselves, for 1 <= p < 2.
    Conjecture(ConjectureArgs),
    /// Write a synthetic test measure.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Measure file: CSV rows of coordinates and an optional mass, or JSON.
    pub measure: PathBuf,
    /// Input format; by default `.json` files are JSON and anything else CSV.
    #[arg(long, value_enum)]
    pub format: Option<MeasureFormat>,
    /// Number of coordinates per CSV row, not counting the optional mass column.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
}

impl MeasureArgs {
    fn load(&self) -> Result<(DiscreteMeasure, Vec<u8>), CliError> {
        let bytes = read_bytes(&self.measure)?;
        let mu = formats::read_measure(&self.measure, self.format, Some(self.dim))?;
        Ok((mu, bytes))
    }
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Distance exponent of the fidelity term; must be at least 1.
    #[arg(long)]
    pub p: f64,
    /// Weight of the length penalty; must be positive.
    #[arg(long)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub energy: EnergyArgs,
    /// JSON file with fitting parameters; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial number of vertices (default: ceil(sqrt n), at least 2).
    #[arg(long)]
    pub m_init: Option<usize>,
    /// Largest number of vertices (default: 10 ceil(sqrt n), at most 200).
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Additional starts beyond the first; the lowest final energy wins.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Seed for the randomized restarts.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write plot.svg (planar measures only).
    #[arg(long)]
    pub svg: bool,
    /// Also write plan.json with the final nearest-point assignment.
    #[arg(long)]
    pub plan: bool,
    /// Threads for running restarts; does not change the output.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Curve file `{"dim": d, "vertices": [[...], ...]}`.
    pub curve: PathBuf,
    #[command(flatten)]
    pub energy: EnergyArgs,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub energy: EnergyArgs,
    /// Number of curve vertices, 1 to 4.
    #[arg(long)]
    pub m: usize,
    /// Grid spacing on the bounding box of the atoms.
    #[arg(long)]
    pub h: f64,
    /// Largest number of elementary evaluations before the search is refused.
    #[arg(long, default_value_t = 1_000_000_000)]
    pub budget: u64,
    /// Fitted curve to certify against the oracle.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Absolute slack allowed on top of the grid error bound when certifying.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Curve to draw over the atoms.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// SVG file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConjectureArgs {
    /// Distance exponent, at least 1 and below 2.
    #[arg(long)]
    pub p: f64,
    /// Number of random instances.
    #[arg(long, default_value_t = 20)]
    pub budget: usize,
    /// Seed for drawing the instances.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated families to cycle through (default: all).
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<SynthFamily>,
    /// Fewest atoms per instance.
    #[arg(long, default_value_t = 3)]
    pub atoms_min: usize,
    /// Most atoms per instance.
    #[arg(long, default_value_t = 8)]
    pub atoms_max: usize,
    /// Smallest length penalty; penalties are drawn log-uniformly.
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min: f64,
    /// Largest length penalty.
    #[arg(long, default_value_t = 0.3)]
    pub lambda_max: f64,
    /// Restarts per fit.
    #[arg(long, default_value_t = 6)]
    pub restarts: usize,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Family of the sample.
    #[arg(long)]
    pub family: SynthFamily,
    /// Number of atoms.
    #[arg(long)]
    pub n: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise level for the circle and segment families.
    #[arg(long, default_value_t = SynthParams::default().noise)]
    pub noise: f64,
    /// Number of clusters.
    #[arg(long, default_value_t = SynthParams::default().clusters)]
    pub clusters: usize,
    /// Per-cluster standard deviation.
    #[arg(long, default_value_t = SynthParams::default().cluster_spread)]
    pub cluster_spread: f64,
    /// Output file; `.json` writes JSON, anything else CSV with a mass column.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Plot(a) => cmd_plot(&a),
        Command::Conjecture(a) => cmd_conjecture(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_output(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

/// Physical quantities evaluated on one curve.
#[derive(Debug, Serialize)]
pub struct CurveReport {
    pub energy: EnergyBreakdown,
    pub stationarity: StationarityReport,
    pub theory: TheoryReport,
}

#[derive(Serialize)]
struct CurveDoc<'a> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    curve: &'a Polyline,
}

pub fn fit_config(a: &FitArgs) -> Result<FitConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = crate::read_input(path)?;
            serde_json::from_str::<FitConfig>(&text)
                .map_err(|e| CliError::input(format!("{}: malformed configuration: {e}", path.display())))?
        }
        None => FitConfig::default(),
    };
    cfg.p = a.energy.p;
    cfg.lambda = a.energy.lambda;
    if let Some(m) = a.m_init {
        cfg.m_init = Some(m);
    }
    if let Some(m) = a.m_max {
        cfg.m_max = Some(m);
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let cfg = fit_config(a)?;
    let (mu, bytes) = a.measure.load()?;
    let threads = a.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let res = fit_parallel(&mu, &cfg, threads)?;
    let mut manifest = RunManifest::new("fit", json_value(&cfg), Some(cfg.seed)).with_input(&a.measure.measure, &bytes);
    if let Some(path) = &a.config {
        manifest = manifest.with_input(path, &read_bytes(path)?);
    }
    let dir = &a.out_dir;
    let mut curve_json =
        serde_json::to_string_pretty(&CurveDoc { manifest: &manifest, curve: &res.curve }).expect("curve serializes");
    curve_json.push('\n');
    write_output(&dir.join("curve.json"), &curve_json)?;
    write_output(&dir.join("result.json"), &document(&manifest, "result", &res))?;
    let report =
        CurveReport { energy: res.energy.clone(), stationarity: res.stationarity.clone(), theory: res.theory.clone() };
    write_output(&dir.join("report.json"), &document(&manifest, "report", &report))?;
    if a.plan {
        let (plan, classification) = build_plan(&mu, &res.curve, cfg.tie_rule)?;
        let payload = serde_json::json!({ "plan": plan, "classification": classification });
        write_output(&dir.join("plan.json"), &document(&manifest, "plan", &payload))?;
    }
    if a.svg {
        write_output(&dir.join("plot.svg"), &crate::svg::render(&mu, Some(&res.curve), &manifest)?)?;
    }
    let failed: Vec<&str> = res.theory.failures().map(|c| c.name.as_str()).collect();
    eprintln!(
        "energy {:.9e}, {} vertices, {:?} after {} iterations; theory checks: {}",
        res.energy.total,
        res.curve.num_vertices(),
        res.status,
        res.iterations,
        if failed.is_empty() { "all pass".to_string() } else { format!("FAIL {}", failed.join(", ")) }
    );
    Ok(())
}

pub fn curve_report(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> Result<CurveReport, CliError> {
    Ok(CurveReport {
        energy: energy(mu, c, p, lambda)?,
        stationarity: stationarity_report(mu, c, p, lambda)?,
        theory: full_report(mu, c, p, lambda)?,
    })
}

fn cmd_check(a: &CheckArgs) -> Result<(), CliError> {
    let (mu, bytes) = a.measure.load()?;
    let curve = formats::read_curve(&a.curve)?;
    if curve.dim() != mu.dim() {
        return Err(CliError::input(format!(
            "curve has dimension {} but the measure has dimension {}",
            curve.dim(),
            mu.dim()
        )));
    }
    let report = curve_report(&mu, &curve, a.energy.p, a.energy.lambda)?;
    let manifest = RunManifest::new("check", serde_json::json!({ "p": a.energy.p, "lambda": a.energy.lambda }), None)
        .with_input(&a.measure.measure, &bytes)
        .with_input(&a.curve, &read_bytes(&a.curve)?);
    emit(a.out.as_deref(), &document(&manifest, "report", &report))
}

#[derive(Debug, Serialize)]
struct OracleDoc {
    result: OracleResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    certification: Option<Certification>,
}

fn cmd_oracle(a: &OracleArgs) -> Result<(), CliError> {
    let (mu, bytes) = a.measure.load()?;
    let ocfg =
        OracleConfig { budget: a.budget, tol: a.tol, ..OracleConfig::new(a.m, a.h, a.energy.p, a.energy.lambda) };
    let result = brute_force_min(&mu, &ocfg).map_err(|e| match e {
        pcurve_core::Error::BudgetExceeded { required, budget } => CliError {
            code: crate::exit::REFUSED,
            message: format!("oracle refused: the grid search needs about {required} evaluations, budget is {budget}"),
        },
        other => other.into(),
    })?;
    let mut manifest = RunManifest::new("oracle", json_value(&ocfg), None).with_input(&a.measure.measure, &bytes);
    let certification = match &a.curve {
        Some(path) => {
            let c = formats::read_curve(path)?;
            manifest = manifest.with_input(path, &read_bytes(path)?);
            Some(certify_fit(&mu, &c, &ocfg)?)
        }
        None => None,
    };
    emit(a.out.as_deref(), &document(&manifest, "oracle", &OracleDoc { result, certification }))
}

fn cmd_plot(a: &PlotArgs) -> Result<(), CliError> {
    let (mu, bytes) = a.measure.load()?;
    if mu.dim() != 2 {
        return Err(CliError::input(format!("plots need a planar measure, got dimension {}", mu.dim())));
    }
    let mut manifest = RunManifest::new("plot", serde_json::json!({}), None).with_input(&a.measure.measure, &bytes);
    let curve = match &a.curve {
        Some(path) => {
            let c = formats::read_curve(path)?;
            manifest = manifest.with_input(path, &read_bytes(path)?);
            Some(c)
        }
        None => None,
    };
    write_output(&a.out, &crate::svg::render(&mu, curve.as_ref(), &manifest)?)
}

fn cmd_conjecture(a: &ConjectureArgs) -> Result<(), CliError> {
    if !(a.p >= 1.0) {
        return Err(CliError::input(format!("p must be ≥ 1 (got {})", a.p)));
    }
    if a.p >= 2.0 {
        return Err(CliError::input(format!(
            "p must be below 2 (got {}): for p ≥ 2 every minimizing curve is injective, so there is nothing to search for",
            a.p
        )));
    }
    let cfg = SearchConfig {
        p: a.p,
        families: a.families.clone(),
        budget: a.budget,
        seed: a.seed,
        atoms: (a.atoms_min, a.atoms_max),
        lambda_range: (a.lambda_min, a.lambda_max),
        restarts: a.restarts,
        ..SearchConfig::default()
    };
    let report = conjecture_search(&cfg)?;
    eprintln!(
        "{} instances, {} with a self-intersecting fit, {} stationary candidates",
        report.instances,
        report.self_intersecting,
        report.candidates.len()
    );
    let manifest = RunManifest::new("conjecture", json_value(&cfg), Some(cfg.seed));
    emit(a.out.as_deref(), &document(&manifest, "search", &report))
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let params = SynthParams { noise: a.noise, clusters: a.clusters, cluster_spread: a.cluster_spread };
    let mu = synth_measure(a.family, a.n, a.seed, &params)?;
    let text = match MeasureFormat::from_path(&a.out) {
        MeasureFormat::Json => formats::measure_to_json(&mu) + "\n",
        MeasureFormat::Csv => formats::measure_to_csv(&mu),
    };
    write_output(&a.out, &text)
}
