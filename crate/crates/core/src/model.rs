//! Exogenous peer-effects outcome model.
//!
//! `y_j = β₀ + β₁ x_j + β₂ · mean_{k ~ j} x_k + ε_j`, `ε_j ~ N(0, σ²_ε)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("vertex {0} has no neighbors; its neighborhood mean is undefined")]
    IsolatedVertex(usize),
    #[error("error variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("covariate standard deviation must be positive, got {0}")]
    NonPositiveSd(f64),
    #[error("vector length {found} does not match expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

/// `(β₀, β₁, β₂, σ²_ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sigma2_eps: f64,
}

impl ModelParams {
    /// Parameters of the reference simulation design.
    pub const REFERENCE: ModelParams = ModelParams {
        beta0: 0.0,
        beta1: 1.0,
        beta2: 1.5,
        sigma2_eps: 1.0,
    };

    pub fn new(beta0: f64, beta1: f64, beta2: f64, sigma2_eps: f64) -> Result<Self, ModelError> {
        if !(sigma2_eps > 0.0) {
            return Err(ModelError::NonPositiveVariance(sigma2_eps));
        }
        Ok(ModelParams {
            beta0,
            beta1,
            beta2,
            sigma2_eps,
        })
    }
}

/// Population unit data.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Draws `n` i.i.d. `N(mean, sd²)` covariates.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, mean: f64, sd: f64, rng: &mut R) -> Result<Vec<f64>, ModelError> {
    if !(sd > 0.0) {
        return Err(ModelError::NonPositiveSd(sd));
    }
    let normal = Normal::new(mean, sd).map_err(|_| ModelError::NonPositiveSd(sd))?;
    Ok((0..n).map(|_| normal.sample(rng)).collect())
}

/// Mean covariate over the neighbors of `j`.
pub fn neighborhood_mean(g: &Graph, x: &[f64], j: usize) -> Result<f64, ModelError> {
    let nb = g.neighbors(j);
    if nb.is_empty() {
        return Err(ModelError::IsolatedVertex(j));
    }
    Ok(nb.iter().map(|&k| x[k]).sum::<f64>() / nb.len() as f64)
}

/// Conditional mean `E[y_j | x, g]` of each listed vertex.
pub fn conditional_means(
    g: &Graph,
    x: &[f64],
    beta0: f64,
    beta1: f64,
    beta2: f64,
    vertices: impl IntoIterator<Item = usize>,
) -> Result<Vec<f64>, ModelError> {
    check_len(g.n_vertices(), x.len())?;
    vertices
        .into_iter()
        .map(|j| Ok(beta0 + beta1 * x[j] + beta2 * neighborhood_mean(g, x, j)?))
        .collect()
}

/// Simulates outcomes for every vertex of `g`.
pub fn simulate_outcomes<R: Rng + ?Sized>(
    g: &Graph,
    x: &[f64],
    params: &ModelParams,
    rng: &mut R,
) -> Result<Vec<f64>, ModelError> {
    let means = conditional_means(g, x, params.beta0, params.beta1, params.beta2, 0..g.n_vertices())?;
    let noise =
        Normal::new(0.0, params.sigma2_eps.sqrt()).map_err(|_| ModelError::NonPositiveVariance(params.sigma2_eps))?;
    Ok(means.into_iter().map(|mu| mu + noise.sample(rng)).collect())
}

/// Outcomes with the error term switched off.
pub fn simulate_outcomes_noiseless(
    g: &Graph,
    x: &[f64],
    beta0: f64,
    beta1: f64,
    beta2: f64,
) -> Result<Vec<f64>, ModelError> {
    conditional_means(g, x, beta0, beta1, beta2, 0..g.n_vertices())
}

/// Gaussian log-likelihood of `y` around `means`.
pub fn log_likelihood(means: &[f64], y: &[f64], sigma2_eps: f64) -> Result<f64, ModelError> {
    if !(sigma2_eps > 0.0) {
        return Err(ModelError::NonPositiveVariance(sigma2_eps));
    }
    check_len(means.len(), y.len())?;
    let n = y.len() as f64;
    let rss: f64 = y.iter().zip(means).map(|(yi, mi)| (yi - mi).powi(2)).sum();
    Ok(-0.5 * n * (2.0 * std::f64::consts::PI * sigma2_eps).ln() - rss / (2.0 * sigma2_eps))
}

fn check_len(expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::LengthMismatch { expected, found })
    }
}
