//! Command-line front end.
//!
//! Every subcommand reads an optional TOML config, applies flag overrides,
//! validates the result before computing anything, writes its outputs into
//! `--out`, and echoes the resolved config there as `resolved_config.toml`.
//! Exit codes: 0 success, 2 invalid input, 3 computational failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::estimation::{build_observed_design, diagnostics, fit_sample, CriticalValue, EstimationError};
use crate::graph::{read_edge_list, write_edge_list, Graph, GraphError, DEFAULT_MAX_ATTEMPTS, ER_ALGORITHM};
use crate::identification::{witness_report, IdentificationError};
use crate::json;
use crate::model::{ModelError, ModelParams};
use crate::montecarlo::{
    run_cell_records, summarize, write_grid_csv, write_records_csv, ExperimentCell, GridSpec, InstanceSpec,
    MonteCarloError, PipelineError,
};
use crate::rng::{stream_rng, Stream};
use crate::sampling::{read_sample, rns_sample, write_sample_csv, RecruitmentSample, SampleSize, SamplingError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_COMPUTATION: i32 = 3;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Invalid,
    Computation,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl ToString) -> Self {
        CliError {
            kind: ErrorKind::Invalid,
            message: message.to_string(),
        }
    }

    fn computation(message: impl ToString) -> Self {
        CliError {
            kind: ErrorKind::Computation,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Invalid => EXIT_INVALID,
            ErrorKind::Computation => EXIT_COMPUTATION,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // One line on stderr, whatever the source error looked like.
        f.write_str(&self.message.replace('\n', " "))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::invalid(e)
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::ConnectivityExhausted { .. } => CliError::computation(e),
            _ => CliError::invalid(e),
        }
    }
}

impl From<SamplingError> for CliError {
    fn from(e: SamplingError) -> Self {
        match e {
            SamplingError::AllIsolated => CliError::computation(e),
            SamplingError::Graph(g) => g.into(),
            _ => CliError::invalid(e),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::IsolatedVertex(_) => CliError::computation(e),
            _ => CliError::invalid(e),
        }
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::MissingOutcomes | EstimationError::InvalidLevel(_) => CliError::invalid(e),
            EstimationError::Sampling(s) => s.into(),
            _ => CliError::computation(e),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Graph(e) => e.into(),
            PipelineError::Model(e) => e.into(),
            PipelineError::Sampling(e) => e.into(),
            PipelineError::Estimation(e) => e.into(),
        }
    }
}

impl From<MonteCarloError> for CliError {
    fn from(e: MonteCarloError) -> Self {
        match e {
            MonteCarloError::InvalidCell(_) | MonteCarloError::Io(_) => CliError::invalid(e),
            MonteCarloError::AllFailed { .. } | MonteCarloError::Pool(_) => CliError::computation(e),
        }
    }
}

impl From<IdentificationError> for CliError {
    fn from(e: IdentificationError) -> Self {
        match e {
            IdentificationError::NoSlack { .. } => CliError::computation(e),
            IdentificationError::Model(m) => m.into(),
            IdentificationError::Graph(g) => g.into(),
            _ => CliError::invalid(e),
        }
    }
}

/// Fully resolved settings of a run. Every section has defaults, so a config
/// file only needs the keys it changes; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub level: f64,
    pub workers: usize,
    pub critical: CriticalValue,
    pub graph: GraphConfig,
    pub sample: SampleConfig,
    pub model: ModelConfig,
    pub mc: McConfig,
    pub identify: IdentifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub n: usize,
    pub p: f64,
    pub allow_disconnected: bool,
    pub max_attempts: usize,
}

/// Sample size as a fraction of the population or an absolute count; a count
/// takes precedence when both are set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sigma2_eps: f64,
    pub x_mean: f64,
    pub x_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub reps: usize,
    pub fixed_graph: bool,
    pub n_pop: Vec<usize>,
    pub density: Vec<f64>,
    pub fraction: Vec<f64>,
    pub records: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyConfig {
    pub x_u1: f64,
    pub x_u2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            level: 0.95,
            workers: 1,
            critical: CriticalValue::Normal,
            graph: GraphConfig::default(),
            sample: SampleConfig::default(),
            model: ModelConfig::default(),
            mc: McConfig::default(),
            identify: IdentifyConfig::default(),
        }
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            n: 1000,
            p: 0.01,
            allow_disconnected: false,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            fraction: 0.2,
            count: None,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = ModelParams::REFERENCE;
        ModelConfig {
            beta0: p.beta0,
            beta1: p.beta1,
            beta2: p.beta2,
            sigma2_eps: p.sigma2_eps,
            x_mean: 3.0,
            x_sd: 1.5,
        }
    }
}

impl Default for McConfig {
    fn default() -> Self {
        let grid = GridSpec::reference();
        McConfig {
            reps: 1000,
            fixed_graph: false,
            n_pop: grid.n_pop,
            density: grid.density,
            fraction: grid.fraction,
            records: false,
        }
    }
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            x_u1: 4.5,
            x_u2: 1.5,
            j: None,
            l: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::invalid(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            beta0: self.model.beta0,
            beta1: self.model.beta1,
            beta2: self.model.beta2,
            sigma2_eps: self.model.sigma2_eps,
        }
    }

    pub fn sample_size(&self) -> SampleSize {
        match self.sample.count {
            Some(n) => SampleSize::Count(n),
            None => SampleSize::Fraction(self.sample.fraction),
        }
    }

    pub fn instance_spec(&self) -> InstanceSpec {
        InstanceSpec {
            n_pop: self.graph.n,
            density: self.graph.p,
            sample: self.sample_size(),
            params: self.params(),
            x_mean: self.model.x_mean,
            x_sd: self.model.x_sd,
            allow_disconnected: self.graph.allow_disconnected,
            max_attempts: self.graph.max_attempts,
        }
    }

    /// Experiment cells of the configured grid, nested `N`, then `p`, then `f`
    /// in the order the lists are given.
    pub fn cells(&self) -> Vec<ExperimentCell> {
        let template = ExperimentCell {
            n_pop: 0,
            density: 0.0,
            fraction: 0.0,
            params: self.params(),
            x_mean: self.model.x_mean,
            x_sd: self.model.x_sd,
            reps: self.mc.reps,
            level: self.level,
            master_seed: self.seed,
            fixed_graph: self.mc.fixed_graph,
            allow_disconnected: self.graph.allow_disconnected,
            max_attempts: self.graph.max_attempts,
            critical: self.critical,
        };
        GridSpec {
            n_pop: self.mc.n_pop.clone(),
            density: self.mc.density.clone(),
            fraction: self.mc.fraction.clone(),
        }
        .cells(&template)
    }

    /// Checks every numeric range.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::invalid(m));
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        let probability = |v: f64| (0.0..=1.0).contains(&v);
        let fraction = |v: f64| v > 0.0 && v <= 1.0;
        if !unit_open(self.level) {
            return fail(format!("level {} outside (0, 1)", self.level));
        }
        if self.workers == 0 {
            return fail("workers must be a positive integer".into());
        }
        if self.graph.n == 0 {
            return fail("graph.n must be positive".into());
        }
        if !probability(self.graph.p) {
            return fail(format!("graph.p {} outside [0, 1]", self.graph.p));
        }
        if self.graph.max_attempts == 0 {
            return fail("graph.max_attempts must be positive".into());
        }
        if !fraction(self.sample.fraction) {
            return fail(format!("sample.fraction {} outside (0, 1]", self.sample.fraction));
        }
        if self.sample.count == Some(0) {
            return fail("sample.count must be positive".into());
        }
        let m = &self.model;
        for (name, v) in [
            ("beta0", m.beta0),
            ("beta1", m.beta1),
            ("beta2", m.beta2),
            ("x_mean", m.x_mean),
        ] {
            if !v.is_finite() {
                return fail(format!("model.{name} must be finite"));
            }
        }
        if !(m.sigma2_eps > 0.0 && m.sigma2_eps.is_finite()) {
            return fail(format!("model.sigma2_eps {} must be positive", m.sigma2_eps));
        }
        if !(m.x_sd > 0.0 && m.x_sd.is_finite()) {
            return fail(format!("model.x_sd {} must be positive", m.x_sd));
        }
        if self.mc.reps == 0 {
            return fail("reps must be a positive integer".into());
        }
        if self.mc.n_pop.is_empty() || self.mc.density.is_empty() || self.mc.fraction.is_empty() {
            return fail("mc grid needs at least one n_pop, density and fraction".into());
        }
        if let Some(&n) = self.mc.n_pop.iter().find(|&&n| n == 0) {
            return fail(format!("mc.n_pop {n} must be positive"));
        }
        if let Some(p) = self.mc.density.iter().find(|&&p| !probability(p)) {
            return fail(format!("mc.density {p} outside [0, 1]"));
        }
        if let Some(f) = self.mc.fraction.iter().find(|&&f| !fraction(f)) {
            return fail(format!("mc.fraction {f} outside (0, 1]"));
        }
        let id = &self.identify;
        if !(id.x_u1.is_finite() && id.x_u2.is_finite()) {
            return fail("identify.x_u1 and identify.x_u2 must be finite".into());
        }
        if id.j.is_some() != id.l.is_some() {
            return fail("identify.j and identify.l must be given together".into());
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "peerfx", version, about = "Peer effects from randomly sampled networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a G(N, p) graph and write its edge list.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Draw a random node sample from a graph and unit data.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        /// Population edge list.
        #[arg(long)]
        graph: PathBuf,
        /// Population unit data: CSV with columns `unit_id,x[,y]`.
        #[arg(long)]
        units: PathBuf,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Simulate one population and sample, writing every data file.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Fit naive and corrected estimators to a sample.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: SampleInput,
    },
    /// Run the Monte Carlo grid and write the results table.
    Mc {
        #[command(flatten)]
        common: CommonArgs,
        /// Replications per cell.
        #[arg(long)]
        reps: Option<usize>,
        /// Population sizes (comma separated).
        #[arg(long, value_delimiter = ',')]
        n_pop: Option<Vec<usize>>,
        /// Tie probabilities (comma separated).
        #[arg(long, value_delimiter = ',')]
        density: Option<Vec<f64>>,
        /// Sample fractions (comma separated).
        #[arg(long, value_delimiter = ',')]
        fraction: Option<Vec<f64>>,
        /// Reuse one graph per cell.
        #[arg(long)]
        fixed_graph: bool,
        /// Also write per-replication estimates to `records.csv`.
        #[arg(long)]
        records: bool,
        #[arg(long)]
        allow_disconnected: bool,
    },
    /// Build two compatible completions that the sample cannot tell apart.
    IdentifyDemo {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: OptionalSampleInput,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        sample: SampleArgs,
        /// Covariate of the first unrecruited vertex.
        #[arg(long, allow_hyphen_values = true)]
        x_u1: Option<f64>,
        /// Covariate of the second unrecruited vertex.
        #[arg(long, allow_hyphen_values = true)]
        x_u2: Option<f64>,
        /// Local index of the first swapped recruited unit.
        #[arg(long, requires = "l")]
        j: Option<usize>,
        /// Local index of the second swapped recruited unit.
        #[arg(long, requires = "j")]
        l: Option<usize>,
    },
    /// Report empirical checks of the correction's regularity conditions.
    Diagnostics {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: SampleInput,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence level of the intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Worker threads for Monte Carlo runs.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Use Student t critical values instead of normal ones.
    #[arg(long)]
    pub t_quantiles: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Population size.
    #[arg(long = "n-pop")]
    pub n: Option<usize>,
    /// Tie probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Accept disconnected graphs instead of redrawing.
    #[arg(long)]
    pub allow_disconnected: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Sample fraction.
    #[arg(long, conflicts_with = "count")]
    pub fraction: Option<f64>,
    /// Sample size.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleInput {
    /// Sample CSV (`unit_id,d_true,d_obs,x,y`).
    #[arg(long)]
    pub sample: PathBuf,
    /// Recruitment edge list in local sample indices.
    #[arg(long)]
    pub edges: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptionalSampleInput {
    /// Sample CSV; a sample is simulated from the config when omitted.
    #[arg(long, requires = "edges")]
    pub sample: Option<PathBuf>,
    /// Recruitment edge list of `--sample`.
    #[arg(long, requires = "sample")]
    pub edges: Option<PathBuf>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(level) = self.level {
            cfg.level = level;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        if self.t_quantiles {
            cfg.critical = CriticalValue::StudentT;
        }
        Ok(cfg)
    }
}

impl GraphArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(n) = self.n {
            cfg.graph.n = n;
        }
        if let Some(p) = self.p {
            cfg.graph.p = p;
        }
        cfg.graph.allow_disconnected |= self.allow_disconnected;
    }
}

impl SampleArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(f) = self.fraction {
            cfg.sample.fraction = f;
            cfg.sample.count = None;
        }
        if let Some(n) = self.count {
            cfg.sample.count = Some(n);
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { common, graph } => {
            let mut cfg = common.resolve()?;
            graph.apply(&mut cfg);
            let out = prepare(&common.out, &cfg)?;
            let g = cfg.instance_spec().draw_graph(cfg.seed)?;
            write_graph(&g, &out.join("graph.edges"), &graph_tag(&cfg))
        }
        Command::Sample {
            common,
            graph,
            units,
            sample,
        } => {
            let mut cfg = common.resolve()?;
            sample.apply(&mut cfg);
            let out = prepare(&common.out, &cfg)?;
            let g = read_graph(&graph)?;
            let (x, y) = read_units(&units, g.n_vertices())?;
            let n = cfg.sample_size().resolve(g.n_vertices())?;
            let s = rns_sample(&g, n, &mut stream_rng(cfg.seed, Stream::Sampling), &x, y.as_deref())?;
            write_sample(&s, &out)
        }
        Command::Simulate { common, graph, sample } => {
            let mut cfg = common.resolve()?;
            graph.apply(&mut cfg);
            sample.apply(&mut cfg);
            let out = prepare(&common.out, &cfg)?;
            let instance = cfg.instance_spec().draw(cfg.seed, None)?;
            write_graph(&instance.graph, &out.join("graph.edges"), &graph_tag(&cfg))?;
            write_units(&instance.x, &instance.y, &out.join("units.csv"))?;
            write_sample(&instance.sample, &out)
        }
        Command::Fit { common, input } => {
            let cfg = common.resolve()?;
            let out = prepare(&common.out, &cfg)?;
            let s = load_sample(&input.sample, &input.edges)?;
            let fit = fit_sample(&s, cfg.level, cfg.critical)?;
            write_json(&fit, &out.join("fit.json"))
        }
        Command::Mc {
            common,
            reps,
            n_pop,
            density,
            fraction,
            fixed_graph,
            records,
            allow_disconnected,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(reps) = reps {
                cfg.mc.reps = reps;
            }
            if let Some(n_pop) = n_pop {
                cfg.mc.n_pop = n_pop;
            }
            if let Some(density) = density {
                cfg.mc.density = density;
            }
            if let Some(fraction) = fraction {
                cfg.mc.fraction = fraction;
            }
            cfg.mc.fixed_graph |= fixed_graph;
            cfg.mc.records |= records;
            cfg.graph.allow_disconnected |= allow_disconnected;
            let out = prepare(&common.out, &cfg)?;
            run_mc(&cfg, &out)
        }
        Command::IdentifyDemo {
            common,
            input,
            graph,
            sample,
            x_u1,
            x_u2,
            j,
            l,
        } => {
            let mut cfg = common.resolve()?;
            graph.apply(&mut cfg);
            sample.apply(&mut cfg);
            if let Some(v) = x_u1 {
                cfg.identify.x_u1 = v;
            }
            if let Some(v) = x_u2 {
                cfg.identify.x_u2 = v;
            }
            if j.is_some() {
                cfg.identify.j = j;
                cfg.identify.l = l;
            }
            let out = prepare(&common.out, &cfg)?;
            let s = match (&input.sample, &input.edges) {
                (Some(sample), Some(edges)) => load_sample(sample, edges)?,
                _ => cfg.instance_spec().draw(cfg.seed, None)?.sample,
            };
            let explicit = cfg.identify.j.zip(cfg.identify.l);
            let report = witness_report(&s, &cfg.params(), cfg.identify.x_u1, cfg.identify.x_u2, explicit)?;
            write_json(&report, &out.join("witness.json"))
        }
        Command::Diagnostics { common, input } => {
            let cfg = common.resolve()?;
            let out = prepare(&common.out, &cfg)?;
            let s = load_sample(&input.sample, &input.edges)?;
            let d = build_observed_design(&s)?;
            write_json(&diagnostics(&d, &s), &out.join("diagnostics.json"))
        }
    }
}

fn run_mc(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let cells = cfg.cells();
    let mut reports = Vec::with_capacity(cells.len());
    let mut records = match cfg.mc.records {
        true => Some(BufWriter::new(File::create(out.join("records.csv"))?)),
        false => None,
    };
    for (i, cell) in cells.iter().enumerate() {
        let outcomes = run_cell_records(cell, cfg.workers)?;
        if let Some(w) = records.as_mut() {
            write_records_csv(cell, &outcomes, &mut *w, i == 0)?;
        }
        reports.push(summarize(cell, &outcomes)?);
    }
    if let Some(mut w) = records {
        w.flush()?;
    }
    let mut w = BufWriter::new(File::create(out.join("results.csv"))?);
    write_grid_csv(&reports, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Validates the config, creates the output directory and echoes the config.
fn prepare(out: &Path, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| CliError::invalid(format!("output directory {}: {e}", out.display())))?;
    fs::write(out.join(RESOLVED_CONFIG_FILE), cfg.to_toml())?;
    Ok(out.to_path_buf())
}

fn graph_tag(cfg: &RunConfig) -> String {
    format!("{ER_ALGORITHM} p={} seed={}", cfg.graph.p, cfg.seed)
}

fn write_graph(g: &Graph, path: &Path, tag: &str) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_edge_list(g, &mut w, Some(tag))?;
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Result<Graph, CliError> {
    read_edge_list(open(path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn write_sample(s: &RecruitmentSample, out: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(out.join("sample.csv"))?);
    write_sample_csv(s, &mut w)?;
    w.flush()?;
    write_graph(s.recruitment_graph(), &out.join("sample.edges"), "sample")
}

fn load_sample(sample: &Path, edges: &Path) -> Result<RecruitmentSample, CliError> {
    read_sample(open(sample)?, open(edges)?).map_err(|e| CliError::invalid(format!("{}: {e}", sample.display())))
}

#[derive(Debug, Serialize, Deserialize)]
struct UnitRow {
    unit_id: usize,
    x: f64,
    #[serde(default)]
    y: Option<f64>,
}

fn write_units(x: &[f64], y: &[f64], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for (unit_id, (&x, &y)) in x.iter().zip(y).enumerate() {
        w.serialize(UnitRow { unit_id, x, y: Some(y) })
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads population unit data; rows may come in any order but must cover
/// ids `0..n_vertices` exactly once. Outcomes are kept only if every row has one.
fn read_units(path: &Path, n_vertices: usize) -> Result<(Vec<f64>, Option<Vec<f64>>), CliError> {
    let bad = |m: String| CliError::invalid(format!("{}: {m}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let mut x = vec![None; n_vertices];
    let mut y = vec![None; n_vertices];
    for row in reader.deserialize::<UnitRow>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.unit_id >= n_vertices {
            return Err(bad(format!(
                "unit_id {} out of range for {n_vertices} vertices",
                row.unit_id
            )));
        }
        if x[row.unit_id].replace(row.x).is_some() {
            return Err(bad(format!("duplicate unit_id {}", row.unit_id)));
        }
        y[row.unit_id] = row.y;
    }
    let x: Vec<f64> = x
        .into_iter()
        .enumerate()
        .map(|(j, v)| v.ok_or_else(|| bad(format!("missing unit_id {j}"))))
        .collect::<Result<_, _>>()?;
    let y = y.into_iter().collect::<Option<Vec<f64>>>();
    Ok((x, y))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text =
        json::to_string(value).map_err(|e| CliError::computation(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, text)?;
    Ok(())
}
