//! Peer-effect regression on sampled data and its degree-ratio correction.
//!
//! The observed-data regressor for unit `j` is the mean covariate over its
//! sampled neighbors, `x*_j = (1/d^R_j) Σ_{k sampled} s_jk x_k`. Fitting the
//! model with `x*` in place of the population neighborhood mean attenuates the
//! peer coefficient by the scaling factor `w`, so the corrected estimate divides
//! by `ŵ`.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::sampling::{scaling_factor, RecruitmentSample, SamplingError};

/// Regressor names, in column order.
pub const COLUMNS: [&str; 3] = ["intercept", "x", "x_star"];

/// Minimum retained rows for a fit.
pub const MIN_ROWS: usize = 4;

/// `|R_kk|` below this fraction of column `k`'s norm marks the column as
/// collinear with the preceding ones.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("sample carries no outcomes")]
    MissingOutcomes,
    #[error("only {retained} units with sampled neighbors; need at least {MIN_ROWS}")]
    TooFewRows { retained: usize },
    #[error("rank-deficient design: column(s) {} collinear with earlier columns", .columns.join(", "))]
    RankDeficient { columns: Vec<&'static str> },
    #[error("scaling factor must be positive, got {0}")]
    NonPositiveScaling(f64),
    #[error("peer regressor has zero variance across retained units")]
    ZeroRegressorVariance,
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Regression rows built from a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDesign {
    /// Local indices (into the sample) of retained units.
    pub retained: Vec<usize>,
    pub x: Vec<f64>,
    pub x_star: Vec<f64>,
    pub y: Vec<f64>,
    /// Units dropped because they have no sampled neighbor.
    pub dropped: usize,
}

impl ObservedDesign {
    pub fn n_rows(&self) -> usize {
        self.retained.len()
    }

    /// `Σ (x*_j - mean(x*))²` over retained rows.
    pub fn x_star_sum_squares(&self) -> f64 {
        let mean = self.x_star.iter().sum::<f64>() / self.x_star.len() as f64;
        self.x_star.iter().map(|v| (v - mean).powi(2)).sum()
    }
}

/// Builds the regression rows, refusing designs with fewer than
/// [`MIN_ROWS`] retained units.
pub fn build_observed_design(s: &RecruitmentSample) -> Result<ObservedDesign, EstimationError> {
    let design = observed_rows(s)?;
    if design.n_rows() < MIN_ROWS {
        return Err(EstimationError::TooFewRows {
            retained: design.n_rows(),
        });
    }
    Ok(design)
}

/// Regression rows without the minimum-size guard.
pub fn observed_rows(s: &RecruitmentSample) -> Result<ObservedDesign, EstimationError> {
    let y_all = s.y().ok_or(EstimationError::MissingOutcomes)?;
    let g_r = s.recruitment_graph();
    let x_all = s.x();
    let mut design = ObservedDesign {
        retained: Vec::new(),
        x: Vec::new(),
        x_star: Vec::new(),
        y: Vec::new(),
        dropped: 0,
    };
    for j in 0..s.len() {
        let nb = g_r.neighbors(j);
        if nb.is_empty() {
            design.dropped += 1;
            continue;
        }
        design.retained.push(j);
        design.x.push(x_all[j]);
        design
            .x_star
            .push(nb.iter().map(|&k| x_all[k]).sum::<f64>() / nb.len() as f64);
        design.y.push(y_all[j]);
    }
    Ok(design)
}

/// Source of the interval critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalValue {
    #[default]
    Normal,
    /// Student t with `n_used - 3` degrees of freedom.
    StudentT,
}

impl CriticalValue {
    pub fn quantile(self, level: f64, df: usize) -> Result<f64, EstimationError> {
        if !(level > 0.0 && level < 1.0) {
            return Err(EstimationError::InvalidLevel(level));
        }
        let p = 1.0 - (1.0 - level) / 2.0;
        Ok(match self {
            CriticalValue::Normal => Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p),
            CriticalValue::StudentT => StudentsT::new(0.0, 1.0, df as f64).expect("positive df").inverse_cdf(p),
        })
    }
}

/// Closed interval serialized as `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn lower(&self) -> f64 {
        self.0
    }

    pub fn upper(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, value: f64) -> bool {
        self.0 <= value && value <= self.1
    }
}

/// Outcome of a fit, optionally with the correction applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// `(β̂₀, β̂₁, β̂₂)` on the observed design.
    pub beta_hat: [f64; 3],
    pub se: [f64; 3],
    pub cov: [[f64; 3]; 3],
    /// `RSS / (n_used - 3)`.
    pub sigma2_hat: f64,
    pub n_used: usize,
    pub dropped: usize,
    pub level: f64,
    pub critical_value: f64,
    pub x_star_ss: f64,
    pub ci_naive: Interval,
    pub w_hat: Option<f64>,
    pub beta2_corrected: Option<f64>,
    /// Naive bounds divided by `ŵ`.
    pub ci_corrected: Option<Interval>,
    /// Wald interval from the corrected estimator's asymptotic variance.
    pub ci_corrected_wald: Option<Interval>,
}

impl FitResult {
    pub fn beta2_naive(&self) -> f64 {
        self.beta_hat[2]
    }
}

/// Gaussian maximum-likelihood fit with normal critical values.
pub fn fit_mle(d: &ObservedDesign, level: f64) -> Result<FitResult, EstimationError> {
    fit_mle_with(d, level, CriticalValue::Normal)
}

/// Least-squares fit via Householder QR of the `n × 3` design.
pub fn fit_mle_with(d: &ObservedDesign, level: f64, critical: CriticalValue) -> Result<FitResult, EstimationError> {
    let n = d.n_rows();
    if n < MIN_ROWS {
        return Err(EstimationError::TooFewRows { retained: n });
    }
    let critical_value = critical.quantile(level, n - 3)?;
    let x = DMatrix::from_fn(n, 3, |i, c| match c {
        0 => 1.0,
        1 => d.x[i],
        _ => d.x_star[i],
    });
    let col_norms: Vec<f64> = (0..3).map(|c| x.column(c).norm()).collect();
    let qr = x.clone().qr();
    let r = qr.r();
    let collinear: Vec<&'static str> = (0..3)
        .filter(|&k| !(r[(k, k)].abs() > RANK_TOLERANCE * col_norms[k]))
        .map(|k| COLUMNS[k])
        .collect();
    if !collinear.is_empty() {
        return Err(EstimationError::RankDeficient { columns: collinear });
    }
    let mut qty = DVector::from_column_slice(&d.y);
    qr.q_tr_mul(&mut qty);
    let r3: Matrix3<f64> = r.fixed_view::<3, 3>(0, 0).into_owned();
    let beta =
        r3.solve_upper_triangular(&qty.fixed_rows::<3>(0).into_owned())
            .ok_or(EstimationError::RankDeficient {
                columns: vec![COLUMNS[2]],
            })?;
    let residuals = DVector::from_column_slice(&d.y) - &x * DVector::from_column_slice(beta.as_slice());
    let sigma2_hat = residuals.norm_squared() / (n - 3) as f64;
    let r_inv = r3.try_inverse().ok_or(EstimationError::RankDeficient {
        columns: vec![COLUMNS[2]],
    })?;
    let cov_m = (r_inv * r_inv.transpose()) * sigma2_hat;

    let beta_hat = [beta[0], beta[1], beta[2]];
    let cov: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| cov_m[(i, j)]));
    let se: [f64; 3] = std::array::from_fn(|i| cov[i][i].max(0.0).sqrt());
    let half = critical_value * se[2];
    Ok(FitResult {
        beta_hat,
        se,
        cov,
        sigma2_hat,
        n_used: n,
        dropped: d.dropped,
        level,
        critical_value,
        x_star_ss: d.x_star_sum_squares(),
        ci_naive: Interval(beta_hat[2] - half, beta_hat[2] + half),
        w_hat: None,
        beta2_corrected: None,
        ci_corrected: None,
        ci_corrected_wald: None,
    })
}

/// Sampling variance of the corrected peer estimate,
/// `ŵ⁻² σ² / Σ (x*_j - mean(x*))²`.
pub fn asymptotic_variance(d: &ObservedDesign, sigma2: f64, w_hat: f64) -> Result<f64, EstimationError> {
    variance_from_sum_squares(d.x_star_sum_squares(), sigma2, w_hat)
}

fn variance_from_sum_squares(ss: f64, sigma2: f64, w_hat: f64) -> Result<f64, EstimationError> {
    if !(w_hat > 0.0) {
        return Err(EstimationError::NonPositiveScaling(w_hat));
    }
    if !(ss > 0.0) {
        return Err(EstimationError::ZeroRegressorVariance);
    }
    Ok(sigma2 / (w_hat * w_hat * ss))
}

/// Rescales the peer estimate and its interval by `1/ŵ`.
pub fn apply_correction(fit: &FitResult, w_hat: f64) -> Result<FitResult, EstimationError> {
    if !(w_hat > 0.0 && w_hat.is_finite()) {
        return Err(EstimationError::NonPositiveScaling(w_hat));
    }
    let corrected = fit.beta_hat[2] / w_hat;
    let wald_half = fit.critical_value * variance_from_sum_squares(fit.x_star_ss, fit.sigma2_hat, w_hat)?.sqrt();
    Ok(FitResult {
        w_hat: Some(w_hat),
        beta2_corrected: Some(corrected),
        ci_corrected: Some(Interval(fit.ci_naive.0 / w_hat, fit.ci_naive.1 / w_hat)),
        ci_corrected_wald: Some(Interval(corrected - wald_half, corrected + wald_half)),
        ..fit.clone()
    })
}

/// Builds the design, fits, and applies the correction with the sample's own
/// scaling factor.
pub fn fit_sample(s: &RecruitmentSample, level: f64, critical: CriticalValue) -> Result<FitResult, EstimationError> {
    let design = build_observed_design(s)?;
    let fit = fit_mle_with(&design, level, critical)?;
    let w = scaling_factor(s)?;
    apply_correction(&fit, w.value)
}

/// Empirical checks of the regularity conditions behind the correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_sampled: usize,
    /// `n⁻¹ Σ (x_j - x̄)²`.
    pub x_variance: f64,
    /// `n⁻¹ Σ_{j≠k} (x_j - x̄)(x_k - x̄)` over all pairs of sampled units.
    pub x_cross_all_pairs: f64,
    /// Same sum restricted to pairs tied in the recruitment subgraph.
    pub x_cross_adjacent: f64,
    pub x_degenerate: bool,
    /// `d^R_j / d_j` over units with `d_j > 0`.
    pub degree_ratio_min: f64,
    pub degree_ratio_mean: f64,
    pub degree_ratio_max: f64,
    pub w_hat: Option<f64>,
    pub w_excluded: usize,
    pub dropped: usize,
    /// Sample correlation between `x` and the fitted residuals.
    pub residual_x_correlation: Option<f64>,
}

pub fn diagnostics(d: &ObservedDesign, s: &RecruitmentSample) -> Diagnostics {
    let x = s.x();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let sum_sq: f64 = dev.iter().map(|v| v * v).sum();
    let sum_dev: f64 = dev.iter().sum();
    let g_r = s.recruitment_graph();
    let adjacent: f64 = (0..dev.len())
        .map(|j| dev[j] * g_r.neighbors(j).iter().map(|&k| dev[k]).sum::<f64>())
        .sum();

    let ratios: Vec<f64> = s
        .observed_degrees()
        .iter()
        .zip(s.reported_degrees())
        .filter(|(_, &dj)| dj > 0)
        .map(|(&dr, &dj)| dr as f64 / dj as f64)
        .collect();
    let (ratio_min, ratio_max) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
        (lo.min(r), hi.max(r))
    });
    let ratio_mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let w = scaling_factor(s).ok();

    let residual_x_correlation = fit_mle(d, 0.95).ok().and_then(|fit| {
        let resid: Vec<f64> = (0..d.n_rows())
            .map(|i| d.y[i] - fit.beta_hat[0] - fit.beta_hat[1] * d.x[i] - fit.beta_hat[2] * d.x_star[i])
            .collect();
        correlation(&d.x, &resid)
    });

    Diagnostics {
        n_sampled: s.len(),
        x_variance: sum_sq / n,
        x_cross_all_pairs: (sum_dev * sum_dev - sum_sq) / n,
        x_cross_adjacent: adjacent / n,
        x_degenerate: !(sum_sq > 0.0),
        degree_ratio_min: ratio_min,
        degree_ratio_mean: ratio_mean,
        degree_ratio_max: ratio_max,
        w_hat: w.map(|w| w.value),
        w_excluded: w.map_or(s.isolated_count(), |w| w.excluded),
        dropped: d.dropped,
        residual_x_correlation,
    }
}

fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
