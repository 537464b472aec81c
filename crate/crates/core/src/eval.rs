//! Nowcast evaluation: cumulative point and density accuracy trajectories,
//! per-quarter predictive spread, on-line coefficient means, and paired
//! dependency measures between latent projection states.
//!
//! Point accuracy is tracked as the running mean of squared nowcast errors,
//!
//! ```text
//! MSNE_{1:t} = (1/t) sum_{i<=t} e_i^2
//! ```
//!
//! and density accuracy as the cumulative log predictive density ratio of a
//! competitor against the reference model,
//!
//! ```text
//! LPDR_{1:t} = sum_{i<=t} [ log p_model(y_i) - log p_ref(y_i) ]
//! ```
//!
//! so the reference sits on the zero line and competitors fall below it when
//! they lose. Dependency between two latent projection states is summarized
//! by the squared Monte Carlo correlation of their draws, which for the
//! bivariate Gaussian summary equals one minus the ratio of conditional to
//! marginal variance.

use nalgebra::{DMatrix, DVector};

use crate::error::{MfsError, Result};
use crate::synthesis::{NowcastResult, RefitSummary};

/// One evaluation series over consecutive test quarters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrajectory {
    pub values: Vec<f64>,
    pub label: String,
    pub lead: usize,
    /// Quarter index of `values[0]`; subsequent entries advance by one.
    pub start_quarter: usize,
}

impl MetricTrajectory {
    /// Final (full-period) value of the trajectory.
    pub fn last(&self) -> f64 {
        *self.values.last().expect("trajectories are never empty")
    }

    /// Write as `quarter,value` rows.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write as _;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "quarter,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{v}", self.start_quarter + i)?;
        }
        Ok(())
    }
}

/// Cumulative means of squared errors.
pub fn msne(
    errors: &[f64],
    label: impl Into<String>,
    lead: usize,
    start_quarter: usize,
) -> Result<MetricTrajectory> {
    if errors.is_empty() {
        return Err(MfsError::Validation("cannot evaluate zero errors".into()));
    }
    let mut running = 0.0;
    let values = errors
        .iter()
        .enumerate()
        .map(|(i, e)| {
            running += e * e;
            running / (i + 1) as f64
        })
        .collect();
    Ok(MetricTrajectory { values, label: label.into(), lead, start_quarter })
}

/// Cumulative sum of log predictive density differences, model minus
/// reference.
pub fn lpdr(
    model_logpdfs: &[f64],
    reference_logpdfs: &[f64],
    label: impl Into<String>,
    lead: usize,
    start_quarter: usize,
) -> Result<MetricTrajectory> {
    if model_logpdfs.len() != reference_logpdfs.len() || model_logpdfs.is_empty() {
        return Err(MfsError::Validation(format!(
            "log density sequences of lengths {} and {} cannot be compared",
            model_logpdfs.len(),
            reference_logpdfs.len()
        )));
    }
    let mut running = 0.0;
    let values = model_logpdfs
        .iter()
        .zip(reference_logpdfs)
        .map(|(m, r)| {
            running += m - r;
            running
        })
        .collect();
    Ok(MetricTrajectory { values, label: label.into(), lead, start_quarter })
}

/// Per-quarter predictive standard deviations of a nowcast sequence.
pub fn sd_trajectory(nowcasts: &[NowcastResult], label: impl Into<String>) -> Result<MetricTrajectory> {
    let first = nowcasts
        .first()
        .ok_or_else(|| MfsError::Validation("cannot summarize zero nowcasts".into()))?;
    Ok(MetricTrajectory {
        values: nowcasts.iter().map(|n| n.sd).collect(),
        label: label.into(),
        lead: first.lead,
        start_quarter: first.period.quarter,
    })
}

/// Headline improvement of a model over the reference, in percent of the
/// reference: `100 (ref - model) / ref`. Negative when the model is worse.
pub fn pct_vs_reference(model_final_msne: f64, reference_final_msne: f64) -> f64 {
    100.0 * (reference_final_msne - model_final_msne) / reference_final_msne
}

/// On-line posterior means of the synthesis coefficients: for each refit, the
/// draw-average of theta at the final fitted quarter.
#[derive(Debug, Clone)]
pub struct CoefficientTrajectory {
    /// `intercept` followed by one label per projection series.
    pub labels: Vec<String>,
    /// Test quarter of each row.
    pub quarters: Vec<usize>,
    /// One mean coefficient vector per test quarter.
    pub means: Vec<DVector<f64>>,
}

impl CoefficientTrajectory {
    /// Write as `quarter,<label...>` rows.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write as _;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "quarter,{}", self.labels.join(","))?;
        for (q, m) in self.quarters.iter().zip(&self.means) {
            let row: Vec<String> = m.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{q},{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn coefficient_trajectory(
    refits: &[RefitSummary],
    series_labels: &[String],
) -> Result<CoefficientTrajectory> {
    let first = refits
        .first()
        .ok_or_else(|| MfsError::Validation("no refits to summarize".into()))?;
    let dim = first
        .theta_final
        .first()
        .ok_or_else(|| MfsError::Validation("refit holds no draws".into()))?
        .len();
    if series_labels.len() + 1 != dim {
        return Err(MfsError::Validation(format!(
            "{} series labels for coefficient vectors of dimension {dim}",
            series_labels.len()
        )));
    }
    let mut labels = vec!["intercept".to_string()];
    labels.extend(series_labels.iter().cloned());

    let mut quarters = Vec::with_capacity(refits.len());
    let mut means = Vec::with_capacity(refits.len());
    for refit in refits {
        if refit.theta_final.is_empty() {
            return Err(MfsError::Validation("refit holds no draws".into()));
        }
        let mut mean = DVector::zeros(dim);
        for draw in &refit.theta_final {
            mean += draw;
        }
        mean /= refit.theta_final.len() as f64;
        quarters.push(refit.quarter);
        means.push(mean);
    }
    Ok(CoefficientTrajectory { labels, quarters, means })
}

/// Pairwise dependency of the latent projection states at one quarter.
#[derive(Debug, Clone)]
pub struct DependencyMatrix {
    /// Symmetric J x J matrix of squared correlations; entries whose marginal
    /// variance vanishes are NaN and listed in `degenerate`.
    pub r2: DMatrix<f64>,
    /// Pairs `(i, j)` whose value is undefined because a marginal variance
    /// is zero.
    pub degenerate: Vec<(usize, usize)>,
}

/// Squared Monte Carlo correlations between latent states from one refit's
/// draws. Requires at least two series and 100 draws.
pub fn paired_r2(draws: &[DVector<f64>]) -> Result<DependencyMatrix> {
    if draws.len() < 100 {
        return Err(MfsError::Validation(format!(
            "{} draws are too few for a dependency estimate (need >= 100)",
            draws.len()
        )));
    }
    let series = draws[0].len();
    if series < 2 {
        return Err(MfsError::Validation("dependency needs at least two series".into()));
    }
    if draws.iter().any(|d| d.len() != series) {
        return Err(MfsError::Validation("draws have inconsistent dimensions".into()));
    }
    let n = draws.len() as f64;
    let mut mean = DVector::zeros(series);
    for d in draws {
        mean += d;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(series, series);
    for d in draws {
        let c = d - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;

    let mut r2 = DMatrix::zeros(series, series);
    let mut degenerate = Vec::new();
    for i in 0..series {
        for j in 0..series {
            let denom = cov[(i, i)] * cov[(j, j)];
            if denom <= 0.0 {
                r2[(i, j)] = f64::NAN;
                if i <= j {
                    degenerate.push((i, j));
                }
            } else if i == j {
                r2[(i, j)] = 1.0;
            } else {
                r2[(i, j)] = cov[(i, j)] * cov[(i, j)] / denom;
            }
        }
    }
    Ok(DependencyMatrix { r2, degenerate })
}

/// Dependency matrices across the test quarters of a sequential run.
#[derive(Debug, Clone)]
pub struct DependencyTrajectory {
    pub quarters: Vec<usize>,
    pub matrices: Vec<DependencyMatrix>,
}

impl DependencyTrajectory {
    /// Write as `quarter,i,j,r2` rows over unordered pairs `i < j`
    /// (one-based series indices). Undefined entries print as `NaN`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write as _;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "quarter,i,j,r2")?;
        for (q, m) in self.quarters.iter().zip(&self.matrices) {
            let series = m.r2.nrows();
            for i in 0..series {
                for j in (i + 1)..series {
                    writeln!(out, "{q},{},{},{}", i + 1, j + 1, m.r2[(i, j)])?;
                }
            }
        }
        Ok(())
    }
}

/// Per-quarter paired dependency over a sequential run's refits, from the
/// latent-state draws at each refit's final fitted quarter.
pub fn paired_r2_trajectory(refits: &[RefitSummary]) -> Result<DependencyTrajectory> {
    if refits.is_empty() {
        return Err(MfsError::Validation("no refits to summarize".into()));
    }
    let mut quarters = Vec::with_capacity(refits.len());
    let mut matrices = Vec::with_capacity(refits.len());
    for refit in refits {
        quarters.push(refit.quarter);
        matrices.push(paired_r2(&refit.x_final)?);
    }
    Ok(DependencyTrajectory { quarters, matrices })
}
