//! The `supplyflex` command line.
//!
//! Every subcommand reads an optional TOML config, writes its outputs and a
//! `manifest.json` into `--out`, and exits with 0 on success, 1 on invalid
//! input, 2 on a numerical failure and 3 on an I/O error.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::estimate::{
    fit_phi_homogeneous, position_bands, write_year_rows, year_to_year_flexibility, EstimateError,
    ShipmentModel,
};
use crate::ingest::{
    generate_synthetic_system, group_substitutables, parse_catalog, parse_rules, read_transactions,
    write_catalog, write_rules, write_transactions, Day, EntityCatalog, IngestError, ParseOptions,
    SubstitutionRule, TransactionLog,
};
use crate::pathrec::{read_paths, reconstruct_paths_by_year, write_paths, write_underflow, PathMultiset};
use crate::simulate::{
    init_from_data, sweep_phi, write_frontier_csv, write_run_csv, write_windows_csv, FlowTotals, SimError,
};
use crate::spectral::{bootstrap_slowdown, write_slowdown_csv, ChainBuilder, SpectralError};
use crate::tensors::{
    alternative_edges, build_one_step, build_two_step, mix, write_order_edges, CountTensor, Flexibility,
    TensorError,
};
pub use config::Config;

#[derive(Debug, Parser)]
#[command(name = "supplyflex", version, about = "Distribution paths, upstream preferences and supply-shock stress tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config; every section is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a transaction log.
    Ingest(Common),
    /// Generate a synthetic distribution system.
    Synth(Common),
    /// Reconstruct distribution paths.
    Reconstruct(Common),
    /// Build the two-step, one-step and mixed order tensors.
    Tensors(Common),
    /// Fit flexibility year to year.
    Fit(Common),
    /// Production-stop stress test across flexibilities.
    Stress(Common),
    /// Slow-down factor of the second-order chain.
    Slowdown(Common),
    /// Export the second-order graph and the alternative order edges.
    #[command(name = "export-graph")]
    ExportGraph(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Synth(_) => "synth",
            Command::Reconstruct(_) => "reconstruct",
            Command::Tensors(_) => "tensors",
            Command::Fit(_) => "fit",
            Command::Stress(_) => "stress",
            Command::Slowdown(_) => "slowdown",
            Command::ExportGraph(_) => "export-graph",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Ingest(c)
            | Command::Synth(c)
            | Command::Reconstruct(c)
            | Command::Tensors(c)
            | Command::Fit(c)
            | Command::Stress(c)
            | Command::Slowdown(c)
            | Command::ExportGraph(c) => c,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(e) => e.into(),
            IngestError::Csv(e) => e.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::Io(e) => e.into(),
            TensorError::Csv(e) => e.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Io(e) => e.into(),
            EstimateError::Csv(e) => e.into(),
            e @ (EstimateError::Grid(_) | EstimateError::Sweeps | EstimateError::NotEnoughYears) => {
                CliError::Validation(e.to_string())
            }
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Io(e) => e.into(),
            SpectralError::Csv(e) => e.into(),
            SpectralError::Tensor(e) => e.into(),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(e) => e.into(),
            SimError::Csv(e) => e.into(),
            SimError::Tensor(e) => e.into(),
            SimError::SteadyState => CliError::Numerical(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub config_path: Option<String>,
    /// SHA-256 of the effective configuration, defaults included.
    pub config_digest: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

/// Hex SHA-256 of the effective configuration.
pub fn config_digest(config: &Config) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

struct Ctx {
    config: Config,
    out: PathBuf,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Ctx {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out.join(name);
        self.outputs.push(path.display().to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn open(&mut self, path: &Path) -> Result<BufReader<File>, CliError> {
        self.inputs.push(path.display().to_string());
        File::open(path)
            .map(BufReader::new)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let w = self.create(name)?;
        serde_json::to_writer_pretty(w, value)?;
        Ok(())
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command inside a pool of `--workers` threads.
pub fn run(command: &Command) -> Result<(), CliError> {
    let common = command.common();
    let clock = Instant::now();
    let mut config = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Config::from_toml(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
        }
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    let seed = config.seed;
    fs::create_dir_all(&common.out)?;
    let mut ctx = Ctx {
        config,
        out: common.out.clone(),
        inputs: common.config.iter().map(|p| p.display().to_string()).collect(),
        outputs: Vec::new(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build()
        .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    let result = pool.install(|| match command {
        Command::Ingest(_) => cmd_ingest(&mut ctx),
        Command::Synth(_) => cmd_synth(&mut ctx),
        Command::Reconstruct(_) => cmd_reconstruct(&mut ctx),
        Command::Tensors(_) => cmd_tensors(&mut ctx),
        Command::Fit(_) => cmd_fit(&mut ctx),
        Command::Stress(_) => cmd_stress(&mut ctx),
        Command::Slowdown(_) => cmd_slowdown(&mut ctx),
        Command::ExportGraph(_) => cmd_export_graph(&mut ctx),
    });
    let manifest_path = ctx.out.join("manifest.json");
    let mut outputs = ctx.outputs.clone();
    outputs.push(manifest_path.display().to_string());
    let manifest = RunManifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        workers: pool.current_num_threads(),
        config_path: common.config.as_ref().map(|p| p.display().to_string()),
        config_digest: config_digest(&ctx.config),
        inputs: ctx.inputs.clone(),
        outputs,
        duration_secs: clock.elapsed().as_secs_f64(),
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(manifest_path)?), &manifest)?;
    result
}

/// Catalog, log and rules, from files or from the synthetic generator.
struct Data {
    catalog: EntityCatalog,
    log: TransactionLog,
    rules: BTreeMap<String, SubstitutionRule>,
    errors: Vec<(u64, String)>,
    rows: u64,
}

fn parse_day(s: &Option<String>) -> Result<Option<Day>, CliError> {
    s.as_ref()
        .map(|s| Day::parse_iso(s).ok_or_else(|| CliError::Validation(format!("bad date `{s}`"))))
        .transpose()
}

fn load_data(ctx: &mut Ctx) -> Result<Data, CliError> {
    let input = ctx.config.input.clone();
    let Some(tx) = &input.transactions else {
        let spec = &ctx.config.synth;
        spec.validate().map_err(CliError::Validation)?;
        let sys = generate_synthetic_system(spec);
        let rows = sys.log.len() as u64;
        return Ok(Data {
            catalog: sys.catalog,
            log: sys.log,
            rules: sys.rules,
            errors: Vec::new(),
            rows,
        });
    };
    let catalog_path = input
        .catalog
        .as_ref()
        .ok_or_else(|| CliError::Validation("[input] transactions needs a catalog".into()))?;
    let catalog = parse_catalog(ctx.open(catalog_path)?)?;
    let rules = match &input.rules {
        Some(p) => parse_rules(ctx.open(p)?)?,
        None => BTreeMap::new(),
    };
    let window = match (parse_day(&input.window_start)?, parse_day(&input.window_end)?) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(CliError::Validation("window needs both start and end".into())),
    };
    let report = read_transactions(ctx.open(tx)?, &catalog, &ParseOptions { window })?;
    let mut log = report.log;
    log.sort_by_date();
    Ok(Data {
        catalog,
        log,
        rules,
        errors: report
            .errors
            .iter()
            .map(|e| (e.line, e.error.to_string()))
            .collect(),
        rows: report.rows,
    })
}

/// Restricts the log to the configured substitution class.
fn select_class(ctx: &Ctx, data: &mut Data) -> Result<(), CliError> {
    if data.rules.is_empty() {
        return Ok(());
    }
    let products = data.log.products.iter().map(|(_, c)| c.to_string()).collect();
    let classes = group_substitutables(&products, &data.rules)?;
    let keep = match (&ctx.config.input.class, classes.len()) {
        (Some(id), _) => classes
            .into_iter()
            .find(|c| &c.id == id)
            .ok_or_else(|| CliError::Validation(format!("no products in class `{id}`")))?,
        (None, 0) => return Ok(()),
        (None, 1) => classes.into_iter().next().expect("one class"),
        (None, _) => {
            return Err(CliError::Validation(
                "several substitution classes present; set [input] class".into(),
            ))
        }
    };
    data.log = data.log.restrict_products(&keep.members);
    Ok(())
}

fn reconstruct(ctx: &Ctx, data: &Data) -> BTreeMap<i32, PathMultiset> {
    reconstruct_paths_by_year(&data.log, &data.catalog, !ctx.config.reconstruct.sequential).0
}

/// Paths by year, read back from `reconstruct` outputs when configured.
fn load_paths(ctx: &mut Ctx) -> Result<(EntityCatalog, BTreeMap<i32, PathMultiset>), CliError> {
    let Some(src) = ctx.config.input.paths.clone() else {
        let mut data = load_data(ctx)?;
        select_class(ctx, &mut data)?;
        let by_year = reconstruct(ctx, &data);
        return Ok((data.catalog, by_year));
    };
    let catalog_path = ctx
        .config
        .input
        .catalog
        .clone()
        .ok_or_else(|| CliError::Validation("[input] paths needs a catalog".into()))?;
    let catalog = parse_catalog(ctx.open(&catalog_path)?)?;
    let mut scratch = TransactionLog::default();
    let mut by_year = BTreeMap::new();
    if src.is_dir() {
        let mut files: Vec<(i32, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&src)? {
            let path = entry?.path();
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if let Some(year) = stem.strip_prefix("paths_").and_then(|y| y.parse().ok()) {
                files.push((year, path));
            }
        }
        files.sort();
        for (year, path) in files {
            let r = ctx.open(&path)?;
            by_year.insert(year, read_paths(r, &catalog, &mut scratch)?);
        }
    } else {
        let r = ctx.open(&src)?;
        by_year.insert(0, read_paths(r, &catalog, &mut scratch)?);
    }
    if by_year.is_empty() {
        return Err(CliError::Validation(format!("no paths_<year>.csv in {}", src.display())));
    }
    Ok((catalog, by_year))
}

fn pick_year(by_year: &BTreeMap<i32, PathMultiset>, year: Option<i32>) -> Result<PathMultiset, CliError> {
    match year {
        Some(y) => by_year
            .get(&y)
            .cloned()
            .ok_or_else(|| CliError::Validation(format!("no paths for year {y}"))),
        None => {
            let mut all = PathMultiset::default();
            for m in by_year.values() {
                all = all.merge(m);
            }
            Ok(all)
        }
    }
}

#[derive(Serialize)]
struct RowErrorOut {
    line: u64,
    message: String,
}

#[derive(Serialize)]
struct ValidationOut {
    rows: u64,
    accepted: usize,
    errors: Vec<RowErrorOut>,
}

fn cmd_ingest(ctx: &mut Ctx) -> Result<(), CliError> {
    let data = load_data(ctx)?;
    write_transactions(&data.log, &data.catalog, ctx.create("transactions.csv")?)?;
    write_catalog(&data.catalog, ctx.create("catalog.csv")?)?;
    if !data.rules.is_empty() {
        write_rules(&data.rules, ctx.create("rules.csv")?)?;
    }
    let report = ValidationOut {
        rows: data.rows,
        accepted: data.log.len(),
        errors: data
            .errors
            .iter()
            .map(|(line, message)| RowErrorOut {
                line: *line,
                message: message.clone(),
            })
            .collect(),
    };
    ctx.write_json("validation.json", &report)?;
    if let Some((line, message)) = data.errors.first() {
        return Err(CliError::Validation(format!(
            "{} invalid rows, first at line {line}: {message}",
            data.errors.len()
        )));
    }
    Ok(())
}

fn cmd_synth(ctx: &mut Ctx) -> Result<(), CliError> {
    let spec = ctx.config.synth.clone();
    spec.validate().map_err(CliError::Validation)?;
    let sys = generate_synthetic_system(&spec);
    write_transactions(&sys.log, &sys.catalog, ctx.create("transactions.csv")?)?;
    write_catalog(&sys.catalog, ctx.create("catalog.csv")?)?;
    write_rules(&sys.rules, ctx.create("rules.csv")?)?;
    ctx.write_json("synth.json", &spec)?;
    Ok(())
}

#[derive(Serialize)]
struct ReconstructionOut {
    paths: usize,
    packages: u64,
    phantom_units: u64,
    delivered: u64,
    residual_stock: u64,
    manufacturer_receipts: u64,
    final_buyer_sales: u64,
    years: Vec<i32>,
}

fn cmd_reconstruct(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut data = load_data(ctx)?;
    select_class(ctx, &mut data)?;
    let (by_year, report) =
        reconstruct_paths_by_year(&data.log, &data.catalog, !ctx.config.reconstruct.sequential);
    let mut all = PathMultiset::default();
    for (year, m) in &by_year {
        write_paths(m, &data.catalog, &data.log, ctx.create(&format!("paths_{year}.csv"))?)?;
        all = all.merge(m);
    }
    write_paths(&all, &data.catalog, &data.log, ctx.create("paths.csv")?)?;
    write_underflow(&report, &data.catalog, &data.log, ctx.create("underflow.csv")?)?;
    write_catalog(&data.catalog, ctx.create("catalog.csv")?)?;
    let out = ReconstructionOut {
        paths: all.len(),
        packages: all.total_count(),
        phantom_units: report.phantom_units(),
        delivered: report.delivered,
        residual_stock: report.residual_stock,
        manufacturer_receipts: report.manufacturer_receipts,
        final_buyer_sales: report.final_buyer_sales,
        years: by_year.keys().copied().collect(),
    };
    ctx.write_json("reconstruction.json", &out)?;
    Ok(())
}

fn cmd_tensors(ctx: &mut Ctx) -> Result<(), CliError> {
    let (catalog, by_year) = load_paths(ctx)?;
    let paths = pick_year(&by_year, ctx.config.tensors.year)?;
    let counts = CountTensor::from_paths(&paths);
    let t2 = build_two_step(&counts);
    let t1 = build_one_step(&counts);
    let mixed = mix(&t2, &t1, &Flexibility::uniform(ctx.config.tensors.phi)?)?;
    t2.write_csv(&catalog, ctx.create("two_step.csv")?)?;
    t1.write_csv(&catalog, ctx.create("one_step.csv")?)?;
    mixed.write_csv(&catalog, ctx.create("mixed.csv")?)?;
    Ok(())
}

fn cmd_fit(ctx: &mut Ctx) -> Result<(), CliError> {
    let (catalog, by_year) = load_paths(ctx)?;
    let fit = ctx.config.fit.clone();
    let result = year_to_year_flexibility(&by_year, fit.max_sweeps, fit.grid)?;
    write_year_rows(&result.rows, &catalog, ctx.create("year_to_year.csv")?)?;

    let mut w = csv::Writer::from_writer(ctx.create("homogeneous.csv")?);
    w.write_record(["year", "phi_hat", "loglik", "flat_flag", "dropped"])?;
    let years: Vec<i32> = by_year.keys().copied().collect();
    for pair in years.windows(2).filter(|p| p[1] == p[0] + 1) {
        let training = CountTensor::from_paths(&by_year[&pair[0]]);
        let observed = CountTensor::from_paths(&by_year[&pair[1]]);
        let model = ShipmentModel::from_counts(&training, &observed);
        if model.entities.is_empty() {
            continue;
        }
        let est = fit_phi_homogeneous(&model, fit.grid)?;
        let dropped: f64 = model.dropped.iter().map(|d| d.1).sum();
        w.write_record([
            pair[1].to_string(),
            est.phi[0].to_string(),
            est.loglik.to_string(),
            (est.flat[0] as u8).to_string(),
            dropped.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(ctx.create("position_bands.csv")?);
    w.write_record(["position_lo", "position_hi", "n", "median", "q25", "q75", "q025", "q975"])?;
    for b in position_bands(&result.rows, fit.position_bin) {
        w.write_record(
            [b.position_lo, b.position_hi, b.n as f64, b.median, b.q25, b.q75, b.q025, b.q975]
                .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_stress(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut data = load_data(ctx)?;
    select_class(ctx, &mut data)?;
    let stress = ctx.config.stress.clone();
    let mut by_year = reconstruct(ctx, &data);
    let year = match stress.year {
        Some(y) => y,
        None => *by_year
            .keys()
            .next()
            .ok_or_else(|| CliError::Validation("no paths to initialize from".into()))?,
    };
    let paths = by_year
        .remove(&year)
        .ok_or_else(|| CliError::Validation(format!("no paths for year {year}")))?;
    let window = stress.sim.tau.round().max(1.0) as usize;
    let flows = FlowTotals::from_log(&data.log, &data.catalog, year, window);
    let (system, report) = init_from_data(&paths, &flows, &data.catalog)?;
    let result = sweep_phi(&system, &stress.sim, &stress.shock, &stress.sweep)?;
    write_run_csv(&result, ctx.create("run.csv")?)?;
    write_frontier_csv(&result, ctx.create("frontier.csv")?)?;
    write_windows_csv(&result, ctx.create("windows.csv")?)?;
    ctx.write_json("init_report.json", &report)?;
    let audits: BTreeMap<String, _> = result
        .series
        .iter()
        .map(|s| (s.phi.to_string(), s.audit))
        .collect();
    ctx.write_json("audit.json", &audits)?;
    if !result.audits_ok() {
        return Err(CliError::Numerical("conservation audit failed".into()));
    }
    Ok(())
}

fn cmd_slowdown(ctx: &mut Ctx) -> Result<(), CliError> {
    let (_, by_year) = load_paths(ctx)?;
    let cfg = ctx.config.slowdown.clone();
    let paths = pick_year(&by_year, cfg.year)?;
    let rows = bootstrap_slowdown(&paths, &cfg.phis, cfg.samples, ctx.config.seed, cfg.tol)?;
    write_slowdown_csv(&rows, ctx.create("slowdown.csv")?)?;
    Ok(())
}

fn cmd_export_graph(ctx: &mut Ctx) -> Result<(), CliError> {
    let (catalog, by_year) = load_paths(ctx)?;
    let cfg = ctx.config.graph.clone();
    let paths = pick_year(&by_year, cfg.year)?;
    let builder = ChainBuilder::from_paths(&paths);
    let graph = builder.chain(&Flexibility::uniform(cfg.phi)?)?;
    graph.write_csv(&catalog, ctx.create("second_order_graph.csv")?)?;
    let counts = CountTensor::from_paths(&paths);
    let edges = alternative_edges(&build_two_step(&counts), &build_one_step(&counts));
    write_order_edges(&edges, &catalog, ctx.create("order_edges.csv")?)?;
    Ok(())
}
