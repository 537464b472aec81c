//! Conjugate dynamic linear regression with discount-controlled evolution.
//!
//! The observation and state equations are
//!
//! ```text
//! y_t     = F_t' theta_t + nu_t,          nu_t    ~ N(0, v_t)
//! theta_t = theta_{t-1} + omega_t,        omega_t ~ N(0, v_t W_t)
//! ```
//!
//! with conjugate posterior summaries carried as `(m_t, C_t, n_t, s_t)`:
//!
//! ```text
//! theta_t | v_t, D_t ~ N(m_t, C_t v_t / s_t)
//! 1 / v_t | D_t      ~ G(n_t / 2, n_t s_t / 2)
//! ```
//!
//! Two discount factors replace explicit innovation variances. The state
//! discount inflates posterior spread between observations,
//! `R_t = C_{t-1} / state`, which is equivalent to choosing
//! `W_t = C_{t-1} (1 - state) / state`. The volatility discount drives a
//! beta-gamma random walk on `v_t`, entering the recursions through the
//! degrees-of-freedom update `n_t = vol * n_{t-1} + 1`. Setting both
//! discounts to one recovers static conjugate Bayesian regression exactly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{MfsError, Result};

/// Forecast scales below this floor abort the filter rather than divide by a
/// vanishing variance.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Pair of discount factors, each in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountPair {
    /// Discount applied to the state posterior spread between observations.
    pub state: f64,
    /// Discount driving the random-walk volatility (degrees-of-freedom decay).
    pub vol: f64,
}

impl DiscountPair {
    pub fn new(state: f64, vol: f64) -> Result<Self> {
        for (name, d) in [("state", state), ("vol", vol)] {
            if !(d > 0.0 && d <= 1.0) {
                return Err(MfsError::Validation(format!(
                    "{name} discount must lie in (0, 1], got {d}"
                )));
            }
        }
        Ok(Self { state, vol })
    }
}

/// Conjugate posterior summary `(m, C, n, s)` of a discount DLM at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DlmState {
    /// Posterior state mean `m_t`.
    pub m: DVector<f64>,
    /// Scale-free posterior state spread `C_t`; the conditional covariance of
    /// `theta_t` given `v_t` is `C_t v_t / s_t`.
    pub c: DMatrix<f64>,
    /// Degrees of freedom `n_t` of the volatility estimate.
    pub n: f64,
    /// Point estimate `s_t` of the observation variance.
    pub s: f64,
}

impl DlmState {
    pub fn new(m: DVector<f64>, c: DMatrix<f64>, n: f64, s: f64) -> Result<Self> {
        if c.nrows() != m.len() || c.ncols() != m.len() {
            return Err(MfsError::Validation(format!(
                "state spread must be {0}x{0} to match a mean of length {0}, got {1}x{2}",
                m.len(),
                c.nrows(),
                c.ncols()
            )));
        }
        let asym = (&c - c.transpose()).abs().max();
        if asym > 1e-8 {
            return Err(MfsError::Validation(format!(
                "state spread must be symmetric (max asymmetry {asym:.3e})"
            )));
        }
        if !(n > 0.0) {
            return Err(MfsError::Validation(format!(
                "degrees of freedom must be positive, got {n}"
            )));
        }
        if !(s > 0.0) {
            return Err(MfsError::Validation(format!(
                "variance estimate must be positive, got {s}"
            )));
        }
        Ok(Self { m, c, n, s })
    }

    /// Diagonal-spread convenience constructor: `C = scale * I`.
    pub fn isotropic(dim: usize, mean: f64, scale: f64, n: f64, s: f64) -> Result<Self> {
        if scale < 0.0 {
            return Err(MfsError::Validation(format!(
                "spread scale must be non-negative, got {scale}"
            )));
        }
        Self::new(
            DVector::from_element(dim, mean),
            DMatrix::identity(dim, dim) * scale,
            n,
            s,
        )
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Scaled Student-t density `T_dof(location, scale)`; `scale` is the squared
/// scale, so the variance is `scale * dof / (dof - 2)` when it exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT {
    pub dof: f64,
    pub location: f64,
    pub scale: f64,
}

impl StudentT {
    pub fn new(dof: f64, location: f64, scale: f64) -> Result<Self> {
        if !(dof > 0.0) {
            return Err(MfsError::Validation(format!(
                "degrees of freedom must be positive, got {dof}"
            )));
        }
        if !(scale > 0.0) || !location.is_finite() {
            return Err(MfsError::Validation(format!(
                "Student-t requires finite location and positive scale, got ({location}, {scale})"
            )));
        }
        Ok(Self { dof, location, scale })
    }

    /// Log density at `y`.
    pub fn log_pdf(&self, y: f64) -> f64 {
        let nu = self.dof;
        let z2 = (y - self.location).powi(2) / self.scale;
        ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (nu * std::f64::consts::PI * self.scale).ln()
            - 0.5 * (nu + 1.0) * (1.0 + z2 / nu).ln()
    }

    /// Draw via the scale mixture: `phi ~ G(dof/2, dof/2)` (rate), then
    /// `x | phi ~ N(location, scale / phi)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let phi = gamma_rate(self.dof / 2.0, self.dof / 2.0, rng);
        let z: f64 = StandardNormal.sample(rng);
        self.location + (self.scale / phi).sqrt() * z
    }
}

/// Everything produced by one filter update, retained so trajectories can be
/// re-sampled backwards afterwards.
#[derive(Debug, Clone)]
pub struct FilterRecord {
    /// Posterior carried into the step (time `t - 1`).
    pub prior: DlmState,
    /// Discounted prior spread `R_t = C_{t-1} / state`.
    pub r: DMatrix<f64>,
    /// One-step forecast `f_t = F_t' m_{t-1}`.
    pub forecast: f64,
    /// Forecast scale `q_t = F_t' R_t F_t + s_{t-1}`.
    pub forecast_scale: f64,
    /// Discounted degrees of freedom `vol * n_{t-1}` (the forecast dof).
    pub discounted_n: f64,
    /// Forecast error `e_t = y_t - f_t`.
    pub error: f64,
    /// Adaptive gain `A_t = R_t F_t / q_t`.
    pub gain: DVector<f64>,
    /// Variance-estimate ratio `r_t = (vol * n_{t-1} + e_t^2 / q_t) / n_t`.
    pub variance_ratio: f64,
    /// Posterior after absorbing `y_t` (time `t`).
    pub posterior: DlmState,
}

/// Sampled joint trajectory of states and volatilities.
///
/// `theta` holds `theta_0 ..= theta_T` (length `T + 1`); `v` holds
/// `v_1 ..= v_T` (length `T`).
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub theta: Vec<DVector<f64>>,
    pub v: Vec<f64>,
}

fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let at = a.transpose();
    a += at;
    a * 0.5
}

/// Draw from `G(shape, rate)`. A zero shape is the degenerate point mass at
/// zero, which arises when a discount equals one.
pub(crate) fn gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    if shape == 0.0 {
        return 0.0;
    }
    let g = Gamma::new(shape, 1.0 / rate).expect("gamma parameters validated by caller");
    g.sample(rng)
}

/// Draw from `N(mean, cov)`, tolerating positive semi-definite covariances.
///
/// A Cholesky factor is attempted first; rank-deficient covariances
/// (including exact zero, which must reproduce the mean exactly) fall back to
/// a symmetric eigendecomposition with negative eigenvalues clamped to zero.
pub(crate) fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let dim = mean.len();
    let cov = symmetrize(cov.clone());
    let root = match cov.clone().cholesky() {
        Some(chol) => chol.l(),
        None => {
            let eig = cov.symmetric_eigen();
            let mut scaled = eig.eigenvectors.clone();
            for (j, lambda) in eig.eigenvalues.iter().enumerate() {
                let sd = lambda.max(0.0).sqrt();
                scaled.column_mut(j).scale_mut(sd);
            }
            scaled
        }
    };
    let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
    mean + root * z
}

/// One conjugate filter update: emit the forecast, absorb `y`, and return
/// the full step record.
///
/// ```text
/// R_t = C_{t-1} / state                     f_t = F_t' m_{t-1}
/// q_t = F_t' R_t F_t + s_{t-1}              e_t = y_t - f_t
/// A_t = R_t F_t / q_t                       n_t = vol n_{t-1} + 1
/// r_t = (vol n_{t-1} + e_t^2 / q_t) / n_t
/// m_t = m_{t-1} + A_t e_t                   s_t = r_t s_{t-1}
/// C_t = r_t (R_t - q_t A_t A_t')
/// ```
pub fn filter_step(
    state: &DlmState,
    regressor: &DVector<f64>,
    y: f64,
    disc: DiscountPair,
) -> Result<FilterRecord> {
    if regressor.len() != state.dim() {
        return Err(MfsError::Validation(format!(
            "regressor length {} does not match state dimension {}",
            regressor.len(),
            state.dim()
        )));
    }
    if !y.is_finite() || regressor.iter().any(|x| !x.is_finite()) {
        return Err(MfsError::Validation(
            "filter update requires finite observation and regressor".into(),
        ));
    }

    let r = symmetrize(&state.c / disc.state);
    let forecast = regressor.dot(&state.m);
    let rf = &r * regressor;
    let forecast_scale = regressor.dot(&rf) + state.s;
    if forecast_scale < SCALE_FLOOR {
        return Err(MfsError::Degeneracy(format!(
            "forecast scale {forecast_scale:.3e} fell below {SCALE_FLOOR:.0e}"
        )));
    }

    let error = y - forecast;
    let gain = rf / forecast_scale;
    let discounted_n = disc.vol * state.n;
    let n_new = discounted_n + 1.0;
    let variance_ratio = (discounted_n + error * error / forecast_scale) / n_new;

    let m_new = &state.m + &gain * error;
    let c_new = symmetrize(
        (&r - (&gain * gain.transpose()) * forecast_scale) * variance_ratio,
    );
    let s_new = variance_ratio * state.s;

    Ok(FilterRecord {
        prior: state.clone(),
        r,
        forecast,
        forecast_scale,
        discounted_n,
        error,
        gain,
        variance_ratio,
        posterior: DlmState::new(m_new, c_new, n_new, s_new)?,
    })
}

/// One-step-ahead predictive density before observing `y_t`:
/// `T_{vol n}(F' m, F' (C / state) F + s)`.
pub fn predict_one_step(
    state: &DlmState,
    regressor: &DVector<f64>,
    disc: DiscountPair,
) -> Result<StudentT> {
    if regressor.len() != state.dim() {
        return Err(MfsError::Validation(format!(
            "regressor length {} does not match state dimension {}",
            regressor.len(),
            state.dim()
        )));
    }
    let r = symmetrize(&state.c / disc.state);
    let location = regressor.dot(&state.m);
    let scale = regressor.dot(&(&r * regressor)) + state.s;
    if scale < SCALE_FLOOR {
        return Err(MfsError::Degeneracy(format!(
            "predictive scale {scale:.3e} fell below {SCALE_FLOOR:.0e}"
        )));
    }
    StudentT::new(disc.vol * state.n, location, scale)
}

/// Draw one joint trajectory `(theta_{0:T}, v_{1:T})` from the retrospective
/// posterior given a completed filter pass.
///
/// The final pair is drawn from the filtered posterior at `T`:
///
/// ```text
/// 1 / v_T ~ G(n_T / 2, n_T s_T / 2),   theta_T ~ N(m_T, C_T v_T / s_T)
/// ```
///
/// then, recursing from `t = T - 1` down to `t = 0`,
///
/// ```text
/// 1 / v_t     = vol / v_{t+1} + gamma_t,  gamma_t ~ G((1 - vol) n_t / 2, n_t s_t / 2)
/// theta_t     ~ N(m_t + state (theta_{t+1} - m_t), C_t (1 - state) v_t / s_t)
/// ```
///
/// where the time-0 summaries are the pre-data prior carried in the first
/// record. `v_0` is drawn for the time-0 state scale but not returned.
pub fn backward_sample<R: Rng + ?Sized>(
    history: &[FilterRecord],
    disc: DiscountPair,
    rng: &mut R,
) -> Result<StateTrajectory> {
    let horizon = history.len();
    if horizon == 0 {
        return Err(MfsError::Validation(
            "backward sampling requires at least one filter record".into(),
        ));
    }

    let mut theta = vec![DVector::zeros(0); horizon + 1];
    let mut v = vec![0.0; horizon + 1]; // v[t] = v_t; v[0] used internally only

    let last = &history[horizon - 1].posterior;
    let precision = gamma_rate(last.n / 2.0, last.n * last.s / 2.0, rng);
    if precision <= 0.0 {
        return Err(MfsError::Degeneracy(
            "sampled volatility precision was not positive".into(),
        ));
    }
    v[horizon] = 1.0 / precision;
    theta[horizon] = sample_mvn(&last.m, &(&last.c * (v[horizon] / last.s)), rng);

    for t in (0..horizon).rev() {
        let at_t = if t == 0 {
            &history[0].prior
        } else {
            &history[t - 1].posterior
        };
        let gamma_t = gamma_rate((1.0 - disc.vol) * at_t.n / 2.0, at_t.n * at_t.s / 2.0, rng);
        v[t] = 1.0 / (disc.vol / v[t + 1] + gamma_t);

        let mean = &at_t.m + (&theta[t + 1] - &at_t.m) * disc.state;
        let cov = &at_t.c * ((1.0 - disc.state) * v[t] / at_t.s);
        theta[t] = sample_mvn(&mean, &cov, rng);
    }

    v.remove(0);
    Ok(StateTrajectory { theta, v })
}
