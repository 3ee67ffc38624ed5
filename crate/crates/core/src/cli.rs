//! Command-line front end.
//!
//! Results go to `--out` or standard output, diagnostics to standard error.
//! Exit status: 0 on success, 2 for configuration errors, 3 for data errors,
//! 4 for inference errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::asymmetry::{analyze, test_regime, AsymmetryConfig, AsymmetryResult, CoefficientProfile, Dynamics};
use crate::collider::{collider_test_with_seeds, ColliderVerdict, ScanRow, TAG_X, TAG_Y};
use crate::data::{load_csv, write_csv, CsvTable, RoleMap, Standardization};
use crate::entropy::EntropyProfile;
use crate::error::{CgemError, Result};
use crate::kernels::Bandwidths;
use crate::rng::derive;
use crate::simlab::scm::generate_scm;
use crate::simlab::table1::{run_table1, Method, Table1Config};
use crate::simlab::ScmSpec;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "cgem", version, about = "Covariate-adjusted causal direction and collider tests")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "CGEM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from one of the synthetic structural models.
    Simulate(SimulateArgs),
    /// Test `X → Y | Z` on a CSV file.
    Discover(DiscoverArgs),
    /// Test `X → COL ← Y` on three columns of a CSV file.
    Collider(ColliderArgs),
    /// Collider tests for every triple listed in a pairs file.
    ColliderScan(ScanArgs),
    /// Accuracy table over models, noise levels and methods.
    Table1(Table1Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsArg {
    Contracting,
    Expanding,
    Both,
}

impl DynamicsArg {
    pub fn regimes(self) -> Vec<Dynamics> {
        match self {
            DynamicsArg::Contracting => vec![Dynamics::Contracting],
            DynamicsArg::Expanding => vec![Dynamics::Expanding],
            DynamicsArg::Both => Dynamics::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Estimation settings shared by the inference commands.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimationArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Evaluation grid size as a fraction of n.
    #[arg(long, default_value_t = 0.10)]
    pub grid_frac: f64,
    /// LOESS span.
    #[arg(long, default_value_t = 0.75)]
    pub span: f64,
    /// Fixed bandwidths `b,h` instead of cross-validated ones.
    #[arg(long)]
    pub bandwidths: Option<String>,
    /// Points in the density normalization grid.
    #[arg(long, default_value_t = crate::kcde::DEFAULT_GRID_POINTS)]
    pub density_grid: usize,
}

impl EstimationArgs {
    pub fn asymmetry_config(&self) -> Result<AsymmetryConfig> {
        let mut cfg = AsymmetryConfig::default();
        if !(self.grid_frac > 0.0 && self.grid_frac <= 1.0) {
            return Err(CgemError::Config(format!(
                "--grid-frac must lie in (0, 1], got {}",
                self.grid_frac
            )));
        }
        if !(self.span > 0.0 && self.span <= 1.0) {
            return Err(CgemError::Config(format!(
                "--span must lie in (0, 1], got {}",
                self.span
            )));
        }
        if self.density_grid < 3 {
            return Err(CgemError::Config(format!(
                "--density-grid must be at least 3, got {}",
                self.density_grid
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(CgemError::Config(format!(
                "--alpha must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        cfg.grid_frac = self.grid_frac;
        cfg.loess.span = self.span;
        cfg.entropy.density_grid = self.density_grid;
        cfg.entropy.bandwidths = self.bandwidths.as_deref().map(Bandwidths::parse).transpose()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: u8,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DiscoverArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Column roles, `x=COL,y=COL,z=COL[,COL]`.
    #[arg(long)]
    pub roles: String,
    /// Hypothesis to test: `x->y|z`, or `y->x|z` to exchange the roles.
    #[arg(long, default_value = "x->y|z")]
    pub direction: String,
    #[arg(long, value_enum, default_value_t = DynamicsArg::Both)]
    pub dynamics: DynamicsArg,
    #[arg(long)]
    pub no_standardize: bool,
    #[command(flatten)]
    pub est: EstimationArgs,
    /// `json` (verdicts and profiles) or `csv` (entropy profile only).
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ColliderArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long)]
    pub col: String,
    #[arg(long, value_enum, default_value_t = DynamicsArg::Both)]
    pub dynamics: DynamicsArg,
    #[arg(long)]
    pub no_standardize: bool,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScanArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// CSV with columns `x,y,col` naming the triples to test.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, value_enum, default_value_t = DynamicsArg::Both)]
    pub dynamics: DynamicsArg,
    #[arg(long)]
    pub no_standardize: bool,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Table1Args {
    #[arg(long, default_value = "1,2,3,4")]
    pub models: String,
    #[arg(long, default_value = "0,0.125,0.25,0.5,1")]
    pub sigmas: String,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value = "cac,igci")]
    pub methods: String,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Version, command, seed and the full configuration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Provenance {
    fn new<T: Serialize>(command: &str, seed: u64, config: &T) -> Result<Provenance> {
        Ok(Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config).map_err(|e| CgemError::Io(e.to_string()))?,
        })
    }
}

/// Top-level JSON document written by every command with JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub provenance: Provenance,
    pub result: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverReport {
    pub direction: String,
    pub results: Vec<AsymmetryResult>,
    /// Regime-level failures, e.g. a LOESS fit with too few points.
    pub errors: Vec<String>,
    pub entropy: EntropyProfile,
    pub coefficients: CoefficientProfile,
    pub standardization: Option<Standardization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColliderReport {
    pub verdicts: Vec<ColliderVerdict>,
    /// True when some regime confirmed the collider.
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub row: ScanRow,
    pub verdict: ColliderVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub model_id: u8,
    pub sigma: f64,
    pub method: Method,
    pub correct: usize,
    pub replicates: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Json {
    pub rows: Vec<Table1Row>,
    pub failures: Vec<crate::simlab::table1::ReplicateFailure>,
}

/// Parses the process arguments, runs the command and returns the exit
/// status.
pub fn main_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CgemError::Config("--threads must be at least 1".into()));
        }
        // Fails only when a pool already exists, e.g. on a second call in
        // the same process; the existing pool is then kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Discover(a) => discover(a),
        Command::Collider(a) => collider(a),
        Command::ColliderScan(a) => collider_scan(a),
        Command::Table1(a) => table1(a),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CgemError::Io(format!("--out {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, doc: &T) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, doc).map_err(|e| CgemError::Io(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// CSV outputs carry no room for metadata, so their provenance goes to
/// standard error as one JSON line.
fn log_provenance(p: &Provenance) {
    if let Ok(s) = serde_json::to_string(p) {
        eprintln!("provenance: {s}");
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let spec = ScmSpec::new(a.model, a.sigma, a.n, a.seed)
        .map_err(|e| CgemError::Config(format!("simulate: {e}")))?;
    let ds = generate_scm(&spec)?;
    log_provenance(&Provenance::new("simulate", a.seed, a)?);
    let mut out = output(&a.out)?;
    write_csv(&ds, &mut out)?;
    out.flush()?;
    Ok(())
}

fn discover(a: &DiscoverArgs) -> Result<()> {
    let cfg = a.est.asymmetry_config()?;
    let roles = RoleMap::parse(&a.roles)?;
    let swap = match a.direction.replace(' ', "").as_str() {
        "x->y|z" => false,
        "y->x|z" => true,
        other => {
            return Err(CgemError::Config(format!(
                "--direction must be 'x->y|z' or 'y->x|z', got '{other}'"
            )))
        }
    };
    let ds = load_csv(&a.data, &roles, !a.no_standardize)?;
    let ds = if swap { ds.swap_xy() } else { ds };
    let analysis = analyze(&ds, a.est.seed, &cfg)?;
    let provenance = Provenance::new("discover", a.est.seed, a)?;
    if a.format == Format::Csv {
        log_provenance(&provenance);
        let mut out = output(&a.out)?;
        analysis.entropy.write_csv(&mut out)?;
        out.flush()?;
        return Ok(());
    }
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for dynamics in a.dynamics.regimes() {
        match test_regime(&analysis, dynamics, a.est.alpha, &cfg.loess) {
            Ok(r) => results.push(r),
            Err(e) => errors.push(format!("{dynamics}: {e}")),
        }
    }
    if results.is_empty() {
        return Err(CgemError::Inference(errors.join("; ")));
    }
    let report = DiscoverReport {
        direction: if swap { "y->x|z" } else { "x->y|z" }.into(),
        results,
        errors,
        entropy: analysis.entropy,
        coefficients: analysis.coefficients,
        standardization: ds.standardization().cloned(),
    };
    write_json(&a.out, &Envelope { provenance, result: report })
}

fn standardize_column(v: Vec<f64>, on: bool, name: &str) -> Result<Vec<f64>> {
    if !on {
        return Ok(v);
    }
    let a = crate::data::Affine::standardizing(&v)
        .map_err(|e| CgemError::Data(format!("column '{name}': {e}")))?;
    Ok(v.into_iter().map(|x| a.apply(x)).collect())
}

fn read_triple(
    table: &CsvTable,
    names: [&str; 3],
    flags: [&str; 3],
    standardize: bool,
) -> Result<[Vec<f64>; 3]> {
    let mut cols = Vec::with_capacity(3);
    for (name, flag) in names.into_iter().zip(flags) {
        let v = table.numeric_column(name, flag)?;
        cols.push(standardize_column(v, standardize, name)?);
    }
    let [x, y, c]: [Vec<f64>; 3] = cols.try_into().expect("three columns");
    Ok([x, y, c])
}

fn run_collider(
    cols: &[Vec<f64>; 3],
    regimes: &[Dynamics],
    est: &EstimationArgs,
    seed: u64,
    cfg: &AsymmetryConfig,
) -> Result<Vec<ColliderVerdict>> {
    collider_test_with_seeds(
        &cols[0],
        &cols[1],
        &cols[2],
        regimes,
        est.alpha,
        derive(seed, &[TAG_X]),
        derive(seed, &[TAG_Y]),
        cfg,
    )
}

fn collider(a: &ColliderArgs) -> Result<()> {
    let cfg = a.est.asymmetry_config()?;
    let table = CsvTable::read(&a.data)?;
    let cols = read_triple(
        &table,
        [&a.x, &a.y, &a.col],
        ["--x", "--y", "--col"],
        !a.no_standardize,
    )?;
    let verdicts = run_collider(&cols, &a.dynamics.regimes(), &a.est, a.est.seed, &cfg)?;
    for v in &verdicts {
        for e in &v.errors {
            eprintln!("warning: {}: {e}", v.dynamics);
        }
    }
    let report = ColliderReport {
        confirmed: verdicts.iter().any(|v| v.confirmed),
        verdicts,
    };
    let provenance = Provenance::new("collider", a.est.seed, a)?;
    write_json(&a.out, &Envelope { provenance, result: report })
}

#[derive(Debug, Deserialize)]
struct PairLine {
    x: String,
    y: String,
    col: String,
}

fn read_pairs(path: &Path) -> Result<Vec<PairLine>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CgemError::Io(format!("--pairs {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let p: PairLine = rec.map_err(|e| {
            CgemError::Config(format!(
                "--pairs line {}: {e} (expected columns x,y,col)",
                i + 2
            ))
        })?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(CgemError::Config("--pairs lists no triples".into()));
    }
    Ok(out)
}

fn collider_scan(a: &ScanArgs) -> Result<()> {
    let cfg = a.est.asymmetry_config()?;
    let table = CsvTable::read(&a.data)?;
    let pairs = read_pairs(&a.pairs)?;
    let regimes = a.dynamics.regimes();
    let mut entries = Vec::new();
    for (k, p) in pairs.iter().enumerate() {
        let cols = read_triple(
            &table,
            [&p.x, &p.y, &p.col],
            ["--pairs x", "--pairs y", "--pairs col"],
            !a.no_standardize,
        )?;
        let seed = derive(a.est.seed, &[k as u64]);
        let verdicts = run_collider(&cols, &regimes, &a.est, seed, &cfg)
            .map_err(|e| CgemError::Inference(format!("triple {} {} {}: {e}", p.x, p.y, p.col)))?;
        for v in verdicts {
            for e in &v.errors {
                eprintln!("warning: {} {} {} ({}): {e}", p.x, p.y, p.col, v.dynamics);
            }
            entries.push(ScanEntry {
                row: ScanRow::new(&p.x, &p.y, &p.col, &v),
                verdict: v,
            });
        }
    }
    let provenance = Provenance::new("collider-scan", a.est.seed, a)?;
    match a.format {
        Format::Json => write_json(&a.out, &Envelope { provenance, result: entries }),
        Format::Csv => {
            log_provenance(&provenance);
            let mut w = csv::Writer::from_writer(output(&a.out)?);
            let io = |e: csv::Error| CgemError::Io(e.to_string());
            w.write_record(["x", "y", "col", "dynamics", "x_to_col", "y_to_col", "confirmed"])
                .map_err(io)?;
            for e in &entries {
                let r = &e.row;
                w.write_record([
                    r.x.as_str(),
                    r.y.as_str(),
                    r.col.as_str(),
                    r.dynamics.as_str(),
                    r.x_to_col.as_str(),
                    r.y_to_col.as_str(),
                    if r.confirmed { "true" } else { "false" },
                ])
                .map_err(io)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn parse_list<T, F>(s: &str, flag: &str, f: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Option<T>,
{
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return Err(CgemError::Config(format!("{flag} is empty")));
    }
    items
        .into_iter()
        .map(|t| f(t).ok_or_else(|| CgemError::Config(format!("{flag}: cannot parse '{t}'"))))
        .collect()
}

fn table1(a: &Table1Args) -> Result<()> {
    let models = parse_list(&a.models, "--models", |t| t.parse::<u8>().ok())?;
    let sigmas = parse_list(&a.sigmas, "--sigmas", |t| {
        t.parse::<f64>().ok().filter(|s| *s >= 0.0 && s.is_finite())
    })?;
    let methods = a
        .methods
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(Method::parse)
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(CgemError::Config("--methods is empty".into()));
    }
    if a.n < 20 {
        return Err(CgemError::Config(format!("--n must be at least 20, got {}", a.n)));
    }
    let cfg = Table1Config {
        models,
        sigmas,
        n: a.n,
        replicates: a.reps,
        methods,
        seed: a.est.seed,
        alpha: a.est.alpha,
        asymmetry: a.est.asymmetry_config()?,
    };
    let report = run_table1(&cfg)?;
    for f in &report.failures {
        eprintln!(
            "warning: model {} sigma {} {} replicate {}: {}",
            f.model_id,
            f.sigma,
            f.method.as_str(),
            f.replicate,
            f.error
        );
    }
    for r in &report.rows {
        eprintln!(
            "model {} sigma {} {}: {}/{} in {:.1}s",
            r.model_id,
            r.sigma,
            r.method.as_str(),
            r.correct,
            r.replicates,
            r.runtime_secs
        );
    }
    let provenance = Provenance::new("table1", a.est.seed, a)?;
    match a.format {
        Format::Csv => {
            log_provenance(&provenance);
            report.write_csv(output(&a.out)?)
        }
        Format::Json => {
            let result = Table1Json {
                rows: report
                    .rows
                    .iter()
                    .map(|r| Table1Row {
                        model_id: r.model_id,
                        sigma: r.sigma,
                        method: r.method,
                        correct: r.correct,
                        replicates: r.replicates,
                        accuracy: r.accuracy,
                    })
                    .collect(),
                failures: report.failures,
            };
            write_json(&a.out, &Envelope { provenance, result })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("cgem").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults() {
        let cli = parse(&["table1"]);
        let Command::Table1(a) = cli.command else { panic!() };
        assert_eq!(a.est.seed, 42);
        assert_eq!(a.reps, 50);
        assert_eq!(a.n, 500);
        let cfg = a.est.asymmetry_config().unwrap();
        assert_eq!(cfg, AsymmetryConfig::default());
    }

    #[test]
    fn estimation_flags() {
        let cli = parse(&[
            "discover", "--data", "d.csv", "--roles", "x=a,y=b,z=c", "--bandwidths", "0.2,0.3",
            "--density-grid", "64", "--span", "0.5", "--grid-frac", "0.2", "--dynamics",
            "expanding",
        ]);
        let Command::Discover(a) = cli.command else { panic!() };
        let cfg = a.est.asymmetry_config().unwrap();
        assert_eq!(cfg.entropy.bandwidths, Some(Bandwidths { b: 0.2, h: 0.3 }));
        assert_eq!(cfg.entropy.density_grid, 64);
        assert_eq!(cfg.loess.span, 0.5);
        assert_eq!(cfg.grid_frac, 0.2);
        assert_eq!(a.dynamics.regimes(), vec![Dynamics::Expanding]);
    }

    #[test]
    fn bad_flags_are_config_errors() {
        for args in [
            &["table1", "--alpha", "0.7"][..],
            &["table1", "--span", "0"],
            &["table1", "--bandwidths", "1"],
            &["table1", "--density-grid", "2"],
            &["table1", "--models", "9"],
            &["table1", "--methods", "pc"],
        ] {
            let cli = parse(args);
            let e = run(&cli).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{args:?}: {e}");
        }
    }

    #[test]
    fn list_parsing() {
        assert_eq!(
            parse_list("1, 2,3", "--models", |t| t.parse::<u8>().ok()).unwrap(),
            vec![1, 2, 3]
        );
        assert!(parse_list("", "--models", |t| t.parse::<u8>().ok()).is_err());
    }
}
