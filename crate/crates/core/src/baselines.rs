//! Comparison models: a quarterly AR discount DLM that ignores the monthly
//! data, unrestricted MIDAS regressions fitted by rolling ordinary least
//! squares, and equal-weight density pooling for combining per-series
//! predictives.
//!
//! The AR baseline reuses the discount DLM engine with self-lags as
//! regressors, so it shares every numerical property of the projection
//! filters. MIDAS regresses the target directly on an intercept, optional
//! autoregressive lags, and the unrestricted monthly lag vector,
//!
//! ```text
//! y_t = b0 + a_1 y_{t-1} + ... + a_r y_{t-r} + g_1 z_(1) + ... + g_p z_(p) + e_t
//! ```
//!
//! with one free coefficient per monthly lag and a plug-in Gaussian
//! predictive `N(fit, RSS / (len - k))`.

use nalgebra::{DMatrix, DVector};

use crate::dlm::{filter_step, predict_one_step, DiscountPair, DlmState, StudentT};
use crate::error::{MfsError, Result};
use crate::timegrid::LagVector;

/// Half the log of 2*pi, shared by the normal log density below.
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// One-step predictive densities from an order-`p` autoregressive discount
/// DLM with intercept, `F_t = (1, y_{t-1}, ..., y_{t-p})'`.
///
/// The filter starts at the first quarter with a full lag vector (index
/// `order`) and absorbs observations sequentially; a predictive is emitted
/// for every index in `first_nowcast..y.len()` before that quarter's value
/// is absorbed. Indices are zero-based positions in `y`.
pub fn ar_dlm_nowcast(
    y: &[f64],
    order: usize,
    prior: &DlmState,
    discounts: DiscountPair,
    first_nowcast: usize,
) -> Result<Vec<StudentT>> {
    if order == 0 {
        return Err(MfsError::Validation("autoregressive order must be positive".into()));
    }
    if prior.dim() != order + 1 {
        return Err(MfsError::Validation(format!(
            "prior of dimension {} for an order-{order} model with intercept",
            prior.dim()
        )));
    }
    if first_nowcast < order + 1 || first_nowcast >= y.len() {
        return Err(MfsError::Boundary(format!(
            "first nowcast at index {first_nowcast} needs at least {} prior observations \
             and must precede the end of the series (length {})",
            order + 1,
            y.len()
        )));
    }
    let regressor = |i: usize| {
        let mut f = DVector::zeros(order + 1);
        f[0] = 1.0;
        for l in 1..=order {
            f[l] = y[i - l];
        }
        f
    };
    let mut state = prior.clone();
    for i in order..first_nowcast {
        state = filter_step(&state, &regressor(i), y[i], discounts)?.posterior;
    }
    let mut out = Vec::with_capacity(y.len() - first_nowcast);
    for i in first_nowcast..y.len() {
        let f = regressor(i);
        out.push(predict_one_step(&state, &f, discounts)?);
        state = filter_step(&state, &f, y[i], discounts)?.posterior;
    }
    Ok(out)
}

/// Ordinary-least-squares fit of one unrestricted MIDAS window.
#[derive(Debug, Clone)]
pub struct MidasFit {
    /// Intercept, then `ar_order` autoregressive coefficients (most recent
    /// lag first), then one coefficient per monthly lag (most recent first).
    pub coefficients: DVector<f64>,
    pub ar_order: usize,
    /// Number of monthly lags per quarter.
    pub lag_order: usize,
    /// Plug-in residual variance `RSS / (rows - k)`.
    pub residual_variance: f64,
    /// Number of response rows the fit used.
    pub fitted_rows: usize,
}

impl MidasFit {
    pub fn coefficient_count(&self) -> usize {
        1 + self.ar_order + self.lag_order
    }
}

/// Fit one window by OLS. `y` and `lags` are parallel slices over the window
/// quarters; responses start at index `ar_order` so all autoregressive lags
/// come from inside the window. Rank deficiency of the design is an error,
/// not a silent pseudo-inverse.
pub fn fit_unrestricted_midas(
    y: &[f64],
    lags: &[LagVector],
    ar_order: usize,
) -> Result<MidasFit> {
    if y.len() != lags.len() {
        return Err(MfsError::Validation(format!(
            "window has {} targets but {} lag vectors",
            y.len(),
            lags.len()
        )));
    }
    let lag_order = lags.first().map_or(0, |l| l.values.len());
    if lag_order == 0 || lags.iter().any(|l| l.values.len() != lag_order) {
        return Err(MfsError::Validation("lag vectors must share one positive length".into()));
    }
    let k = 1 + ar_order + lag_order;
    let rows = y.len().saturating_sub(ar_order);
    if rows <= k {
        return Err(MfsError::Boundary(format!(
            "window supplies {rows} usable rows for {k} coefficients"
        )));
    }

    let mut x = DMatrix::zeros(rows, k);
    let mut b = DVector::zeros(rows);
    for (row, i) in (ar_order..y.len()).enumerate() {
        x[(row, 0)] = 1.0;
        for l in 1..=ar_order {
            x[(row, l)] = y[i - l];
        }
        for (c, v) in lags[i].values.iter().enumerate() {
            x[(row, 1 + ar_order + c)] = *v;
        }
        b[row] = y[i];
    }

    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= max_diag * 1e-12) || max_diag == 0.0 {
        return Err(MfsError::Singular(
            "design matrix is rank deficient over this window".into(),
        ));
    }
    let qt_b = qr.q().transpose() * &b;
    let coefficients = r
        .solve_upper_triangular(&qt_b)
        .ok_or_else(|| MfsError::Singular("triangular solve failed".into()))?;

    let residuals = &b - &x * &coefficients;
    let rss = residuals.dot(&residuals);
    Ok(MidasFit {
        coefficients,
        ar_order,
        lag_order,
        residual_variance: rss / (rows - k) as f64,
        fitted_rows: rows,
    })
}

/// Out-of-sample predictive from a fitted window: Gaussian with the fitted
/// linear predictor as location and the plug-in residual variance as spread.
/// `ar_values` are the most recent target values, newest first.
pub fn midas_nowcast(
    fit: &MidasFit,
    ar_values: &[f64],
    lag: &LagVector,
) -> Result<GaussianDensity> {
    if ar_values.len() != fit.ar_order || lag.values.len() != fit.lag_order {
        return Err(MfsError::Validation(format!(
            "regressors ({} target lags, {} monthly lags) do not match a fit with \
             ({}, {})",
            ar_values.len(),
            lag.values.len(),
            fit.ar_order,
            fit.lag_order
        )));
    }
    let mut location = fit.coefficients[0];
    for (l, v) in ar_values.iter().enumerate() {
        location += fit.coefficients[1 + l] * v;
    }
    for (c, v) in lag.values.iter().enumerate() {
        location += fit.coefficients[1 + fit.ar_order + c] * v;
    }
    GaussianDensity::new(location, fit.residual_variance)
}

/// Gaussian predictive with a plug-in variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDensity {
    pub location: f64,
    pub variance: f64,
}

impl GaussianDensity {
    pub fn new(location: f64, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) || !location.is_finite() {
            return Err(MfsError::Validation(format!(
                "gaussian density needs finite location and non-negative variance, \
                 got ({location}, {variance})"
            )));
        }
        Ok(Self { location, variance })
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        if self.variance == 0.0 {
            return if y == self.location { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        let z = (y - self.location) / self.variance.sqrt();
        -0.5 * z * z - 0.5 * self.variance.ln() - HALF_LN_TWO_PI
    }
}

/// Point-evaluable predictive density from any of the baseline families.
#[derive(Debug, Clone)]
pub enum PredictiveDensity {
    Gaussian(GaussianDensity),
    StudentT(StudentT),
}

impl PredictiveDensity {
    pub fn log_pdf(&self, y: f64) -> f64 {
        match self {
            Self::Gaussian(d) => d.log_pdf(y),
            Self::StudentT(d) => d.log_pdf(y),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian(d) => d.location,
            Self::StudentT(d) => d.location,
        }
    }
}

/// Equal-weight mixture of predictive densities.
#[derive(Debug, Clone)]
pub struct PooledDensity {
    pub components: Vec<PredictiveDensity>,
}

impl PooledDensity {
    /// Mixture log density: `logsumexp_k log p_k(y) - log K`.
    pub fn log_pdf(&self, y: f64) -> f64 {
        let logs: Vec<f64> = self.components.iter().map(|c| c.log_pdf(y)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return max;
        }
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        max + sum.ln() - (self.components.len() as f64).ln()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.log_pdf(y).exp()
    }

    /// Mixture mean: average of component means.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(PredictiveDensity::mean).sum::<f64>()
            / self.components.len() as f64
    }
}

/// Combine predictives with equal weights.
pub fn equal_weight_pool(components: Vec<PredictiveDensity>) -> Result<PooledDensity> {
    if components.is_empty() {
        return Err(MfsError::Validation("cannot pool zero densities".into()));
    }
    Ok(PooledDensity { components })
}
