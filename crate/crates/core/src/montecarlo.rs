//! Replication engine for the simulation study.
//!
//! Each replication draws a connected G(N, p), covariates, outcomes and a
//! random node sample, then fits naive and corrected estimators. Replications
//! run in parallel; the reduction to a [`CellReport`] always walks records in
//! replication order, so results do not depend on the worker count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{
    apply_correction, asymptotic_variance, build_observed_design, fit_mle_with, CriticalValue, EstimationError,
    Interval,
};
use crate::graph::{generate_connected_er, generate_er, Graph, GraphError, DEFAULT_MAX_ATTEMPTS};
use crate::model::{gen_covariates, simulate_outcomes, ModelError, ModelParams};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::sampling::{rns_sample, scaling_factor, RecruitmentSample, SampleSize, SamplingError};

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("invalid experiment cell: {0}")]
    InvalidCell(String),
    #[error("all {reps} replications failed; first failure: {first}")]
    AllFailed { reps: usize, first: String },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One `(N, p, f)` cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub n_pop: usize,
    pub density: f64,
    pub fraction: f64,
    pub params: ModelParams,
    pub x_mean: f64,
    pub x_sd: f64,
    pub reps: usize,
    pub level: f64,
    pub master_seed: u64,
    /// Reuse one graph for every replication instead of drawing a fresh one.
    pub fixed_graph: bool,
    pub allow_disconnected: bool,
    pub max_attempts: usize,
    pub critical: CriticalValue,
}

impl ExperimentCell {
    /// A cell of the reference design: `(β₀, β₁, β₂, σ²) = (0, 1, 1.5, 1)`,
    /// `x ~ N(3, 1.5²)`, 95% intervals.
    pub fn reference(n_pop: usize, density: f64, fraction: f64, reps: usize, master_seed: u64) -> Self {
        ExperimentCell {
            n_pop,
            density,
            fraction,
            params: ModelParams::REFERENCE,
            x_mean: 3.0,
            x_sd: 1.5,
            reps,
            level: 0.95,
            master_seed,
            fixed_graph: false,
            allow_disconnected: false,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            critical: CriticalValue::Normal,
        }
    }

    pub fn validate(&self) -> Result<(), MonteCarloError> {
        let fail = |m: String| Err(MonteCarloError::InvalidCell(m));
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return fail(format!("fraction {} outside (0, 1]", self.fraction));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return fail(format!("density {} outside [0, 1]", self.density));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail(format!("level {} outside (0, 1)", self.level));
        }
        if !(self.x_sd > 0.0) {
            return fail(format!("x_sd {} must be positive", self.x_sd));
        }
        if !(self.params.sigma2_eps > 0.0) {
            return fail(format!("sigma2_eps {} must be positive", self.params.sigma2_eps));
        }
        if self.max_attempts == 0 {
            return fail("max_attempts must be at least 1".into());
        }
        SampleSize::Fraction(self.fraction)
            .resolve(self.n_pop)
            .map_err(|e| MonteCarloError::InvalidCell(e.to_string()))?;
        Ok(())
    }

    /// Population, model and sampling settings of one replication.
    pub fn instance_spec(&self) -> InstanceSpec {
        InstanceSpec {
            n_pop: self.n_pop,
            density: self.density,
            sample: SampleSize::Fraction(self.fraction),
            params: self.params,
            x_mean: self.x_mean,
            x_sd: self.x_sd,
            allow_disconnected: self.allow_disconnected,
            max_attempts: self.max_attempts,
        }
    }

    /// The shared graph of a `fixed_graph` cell, drawn from the master seed.
    pub fn fixed_graph(&self) -> Result<Option<Graph>, PipelineError> {
        self.fixed_graph
            .then(|| self.instance_spec().draw_graph(self.master_seed))
            .transpose()
            .map_err(PipelineError::from)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Everything needed to simulate one observed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub n_pop: usize,
    pub density: f64,
    pub sample: SampleSize,
    pub params: ModelParams,
    pub x_mean: f64,
    pub x_sd: f64,
    pub allow_disconnected: bool,
    pub max_attempts: usize,
}

/// A simulated population and the sample drawn from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub graph: Graph,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sample: RecruitmentSample,
}

impl InstanceSpec {
    pub fn draw_graph(&self, seed: u64) -> Result<Graph, GraphError> {
        let mut rng = stream_rng(seed, Stream::Graph);
        if self.allow_disconnected {
            generate_er(self.n_pop, self.density, &mut rng)
        } else {
            generate_connected_er(self.n_pop, self.density, &mut rng, self.max_attempts)
        }
    }

    /// Graph, covariates, outcomes and sample, each from its own stream of
    /// `seed`. A `fixed` graph replaces the graph draw.
    pub fn draw(&self, seed: u64, fixed: Option<&Graph>) -> Result<Instance, PipelineError> {
        let graph = match fixed {
            Some(g) => g.clone(),
            None => self.draw_graph(seed)?,
        };
        let n = graph.n_vertices();
        let x = gen_covariates(n, self.x_mean, self.x_sd, &mut stream_rng(seed, Stream::Covariates))?;
        let y = simulate_outcomes(&graph, &x, &self.params, &mut stream_rng(seed, Stream::Noise))?;
        let size = self.sample.resolve(n)?;
        let sample = rns_sample(&graph, size, &mut stream_rng(seed, Stream::Sampling), &x, Some(&y))?;
        Ok(Instance { graph, x, y, sample })
    }
}

/// Estimates from one successful replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub beta2_naive: f64,
    pub beta2_corrected: f64,
    pub ci_naive: Interval,
    pub ci_corrected: Interval,
    pub ci_corrected_wald: Interval,
    pub w_hat: f64,
    /// `ŵ⁻² σ̂² / Σ (x* - mean x*)²`.
    pub asymptotic_variance: f64,
    pub n_used: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub reason: String,
}

pub type RepOutcome = Result<RepRecord, RepFailure>;

/// Runs replication `rep` of `cell`.
pub fn run_replication(cell: &ExperimentCell, rep: usize) -> RepOutcome {
    match cell.fixed_graph() {
        Ok(fixed) => run_replication_on(cell, rep, fixed.as_ref()),
        Err(e) => Err(RepFailure {
            rep,
            reason: e.to_string(),
        }),
    }
}

/// Runs replication `rep`, using `fixed` instead of a fresh graph when given.
pub fn run_replication_on(cell: &ExperimentCell, rep: usize, fixed: Option<&Graph>) -> RepOutcome {
    replicate(cell, rep, fixed).map_err(|e| RepFailure {
        rep,
        reason: e.to_string(),
    })
}

fn replicate(cell: &ExperimentCell, rep: usize, fixed: Option<&Graph>) -> Result<RepRecord, PipelineError> {
    let seed = derive_seed(cell.master_seed, rep as u64);
    let instance = cell.instance_spec().draw(seed, fixed)?;
    let design = build_observed_design(&instance.sample)?;
    let fit = fit_mle_with(&design, cell.level, cell.critical)?;
    let w = scaling_factor(&instance.sample)?;
    let corrected = apply_correction(&fit, w.value)?;
    Ok(RepRecord {
        rep,
        beta2_naive: fit.beta_hat[2],
        beta2_corrected: corrected.beta2_corrected.expect("correction applied"),
        ci_naive: fit.ci_naive,
        ci_corrected: corrected.ci_corrected.expect("correction applied"),
        ci_corrected_wald: corrected.ci_corrected_wald.expect("correction applied"),
        w_hat: w.value,
        asymptotic_variance: asymptotic_variance(&design, fit.sigma2_hat, w.value)?,
        n_used: fit.n_used,
        dropped: fit.dropped,
    })
}

/// Monte Carlo summary of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n_pop: usize,
    pub density: f64,
    pub fraction: f64,
    pub reps: usize,
    pub rb_naive: f64,
    pub rb_corrected: f64,
    pub rmse_naive: f64,
    pub rmse_corrected: f64,
    pub cov_naive: f64,
    pub cov_corrected: f64,
    pub cov_corrected_wald: f64,
    pub mean_beta2_naive: f64,
    pub mean_beta2_corrected: f64,
    /// Monte Carlo variance of the corrected estimate across replications.
    pub var_beta2_corrected: f64,
    pub mean_asymptotic_variance: f64,
    pub mean_w_hat: f64,
    pub reps_completed: usize,
    pub reps_failed: usize,
}

/// Summary statistics of a sequence of estimates against a true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSummary {
    pub mean: f64,
    pub relative_bias: f64,
    pub rmse: f64,
    pub variance: f64,
}

/// Relative bias `(mean − θ)/θ` and RMSE `√mean((est − θ)²)`, summed in order.
pub fn summarize_estimates(estimates: &[f64], truth: f64) -> EstimatorSummary {
    let k = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / k;
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / k;
    let variance = if estimates.len() > 1 {
        estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    EstimatorSummary {
        mean,
        relative_bias: (mean - truth) / truth,
        rmse: mse.sqrt(),
        variance,
    }
}

fn coverage<'a>(intervals: impl Iterator<Item = &'a Interval>, truth: f64, k: usize) -> f64 {
    intervals.filter(|ci| ci.contains(truth)).count() as f64 / k as f64
}

/// Reduces replication outcomes to a cell report, over completed reps only.
pub fn summarize(cell: &ExperimentCell, outcomes: &[RepOutcome]) -> Result<CellReport, MonteCarloError> {
    let done: Vec<&RepRecord> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    if done.is_empty() {
        let first = outcomes
            .iter()
            .find_map(|o| o.as_ref().err())
            .map_or_else(|| "no replications".to_string(), |f| f.reason.clone());
        return Err(MonteCarloError::AllFailed {
            reps: outcomes.len(),
            first,
        });
    }
    let truth = cell.params.beta2;
    let k = done.len();
    let naive = summarize_estimates(&done.iter().map(|r| r.beta2_naive).collect::<Vec<_>>(), truth);
    let corrected = summarize_estimates(&done.iter().map(|r| r.beta2_corrected).collect::<Vec<_>>(), truth);
    Ok(CellReport {
        n_pop: cell.n_pop,
        density: cell.density,
        fraction: cell.fraction,
        reps: outcomes.len(),
        rb_naive: naive.relative_bias,
        rb_corrected: corrected.relative_bias,
        rmse_naive: naive.rmse,
        rmse_corrected: corrected.rmse,
        cov_naive: coverage(done.iter().map(|r| &r.ci_naive), truth, k),
        cov_corrected: coverage(done.iter().map(|r| &r.ci_corrected), truth, k),
        cov_corrected_wald: coverage(done.iter().map(|r| &r.ci_corrected_wald), truth, k),
        mean_beta2_naive: naive.mean,
        mean_beta2_corrected: corrected.mean,
        var_beta2_corrected: corrected.variance,
        mean_asymptotic_variance: done.iter().map(|r| r.asymptotic_variance).sum::<f64>() / k as f64,
        mean_w_hat: done.iter().map(|r| r.w_hat).sum::<f64>() / k as f64,
        reps_completed: k,
        reps_failed: outcomes.len() - k,
    })
}

/// Runs every replication of `cell` on `workers` threads, in rep order.
pub fn run_cell_records(cell: &ExperimentCell, workers: usize) -> Result<Vec<RepOutcome>, MonteCarloError> {
    cell.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| MonteCarloError::Pool(e.to_string()))?;
    let fixed = cell.fixed_graph().map_err(|e| MonteCarloError::AllFailed {
        reps: cell.reps,
        first: e.to_string(),
    })?;
    Ok(pool.install(|| {
        (0..cell.reps)
            .into_par_iter()
            .map(|rep| run_replication_on(cell, rep, fixed.as_ref()))
            .collect()
    }))
}

pub fn run_cell(cell: &ExperimentCell, workers: usize) -> Result<CellReport, MonteCarloError> {
    summarize(cell, &run_cell_records(cell, workers)?)
}

/// Runs each cell in turn; replications within a cell run in parallel.
pub fn run_grid(cells: &[ExperimentCell], workers: usize) -> Result<Vec<CellReport>, MonteCarloError> {
    cells.iter().map(|c| run_cell(c, workers)).collect()
}

/// Cartesian product of population sizes, densities and fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_pop: Vec<usize>,
    pub density: Vec<f64>,
    pub fraction: Vec<f64>,
}

impl GridSpec {
    /// The reference grid: `N ∈ {10³, 10⁴}`, `p ∈ {1%, 3%}`, `f ∈ {20%, 80%}`.
    pub fn reference() -> Self {
        GridSpec {
            n_pop: vec![1_000, 10_000],
            density: vec![0.01, 0.03],
            fraction: vec![0.2, 0.8],
        }
    }

    /// Expands to cells ordered by `N`, then `p`, then `f`, all built from
    /// `template`.
    pub fn cells(&self, template: &ExperimentCell) -> Vec<ExperimentCell> {
        let mut cells = Vec::new();
        for &n_pop in &self.n_pop {
            for &density in &self.density {
                for &fraction in &self.fraction {
                    cells.push(ExperimentCell {
                        n_pop,
                        density,
                        fraction,
                        ..template.clone()
                    });
                }
            }
        }
        cells
    }
}

pub const GRID_CSV_HEADER: &str = "N,p,f,reps,estimator,RB,RMSE,coverage,mean_w_hat,failed";

/// Writes two rows per cell (naive, corrected).
pub fn write_grid_csv<W: Write>(reports: &[CellReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{GRID_CSV_HEADER}")?;
    for r in reports {
        for (name, rb, rmse, cov) in [
            ("naive", r.rb_naive, r.rmse_naive, r.cov_naive),
            ("corrected", r.rb_corrected, r.rmse_corrected, r.cov_corrected),
        ] {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.n_pop, r.density, r.fraction, r.reps, name, rb, rmse, cov, r.mean_w_hat, r.reps_failed
            )?;
        }
    }
    out.flush()
}

pub const RECORDS_CSV_HEADER: &str = "N,p,f,rep,status,beta2_naive,beta2_corrected,ci_naive_lo,ci_naive_hi,ci_corrected_lo,ci_corrected_hi,w_hat,n_used,dropped,error";

/// Per-replication rows, so metrics can be recomputed without re-simulating.
pub fn write_records_csv<W: Write>(
    cell: &ExperimentCell,
    outcomes: &[RepOutcome],
    mut out: W,
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(out, "{RECORDS_CSV_HEADER}")?;
    }
    let prefix = format!("{},{},{}", cell.n_pop, cell.density, cell.fraction);
    for o in outcomes {
        match o {
            Ok(r) => writeln!(
                out,
                "{prefix},{},ok,{},{},{},{},{},{},{},{},{},",
                r.rep,
                r.beta2_naive,
                r.beta2_corrected,
                r.ci_naive.0,
                r.ci_naive.1,
                r.ci_corrected.0,
                r.ci_corrected.1,
                r.w_hat,
                r.n_used,
                r.dropped
            )?,
            Err(f) => writeln!(
                out,
                "{prefix},{},failed,,,,,,,,,,\"{}\"",
                f.rep,
                f.reason.replace('"', "'")
            )?,
        }
    }
    out.flush()
}
