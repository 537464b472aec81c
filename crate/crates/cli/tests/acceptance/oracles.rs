//! Independent reference implementations the acceptance criteria compare
//! against. Each oracle derives its answer through different algebra than
//! the production code: textbook conjugate regression in information form,
//! a Kalman filter with an explicit innovation-variance sequence plus RTS
//! smoothing, information-form Gaussian conditioning, a dense-grid
//! posterior, and least squares via the normal equations.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use mfs_core::dlm::{DiscountPair, DlmState, StudentT};
use mfs_core::synthesis::SynthesisPrior;
use mfs_core::timegrid::LagVector;

/// Student-t log density with a squared scale, written out directly.
pub fn t_log_pdf(y: f64, dof: f64, location: f64, scale: f64) -> f64 {
    let z2 = (y - location) * (y - location) / scale;
    ln_gamma((dof + 1.0) / 2.0)
        - ln_gamma(dof / 2.0)
        - 0.5 * (dof * std::f64::consts::PI * scale).ln()
        - 0.5 * (dof + 1.0) * (1.0 + z2 / dof).ln()
}

/// Textbook Bayesian linear regression with a normal-inverse-gamma prior,
/// updated in information form: precision accumulates `f f'`, the noise
/// posterior accumulates half a squared residual per observation.
pub struct ConjugateRegression {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    /// Inverse-gamma shape of the noise variance.
    a: f64,
    /// Inverse-gamma rate of the noise variance.
    b: f64,
}

impl ConjugateRegression {
    /// Map a filter state `(m, C, n, s)` onto the conjugate parametrization:
    /// `C = s V` with `beta | v ~ N(m, v V)` and `1/v ~ G(n/2, n s/2)`.
    pub fn from_state(state: &DlmState) -> Self {
        let v = &state.c / state.s;
        Self {
            mean: state.m.clone(),
            precision: v.try_inverse().expect("prior spread must be invertible"),
            a: state.n / 2.0,
            b: state.n * state.s / 2.0,
        }
    }

    /// One-step predictive `y ~ T_{2a}(f'm, (b/a)(1 + f'V f))` as
    /// `(dof, location, squared scale)`.
    pub fn predictive(&self, f: &DVector<f64>) -> (f64, f64, f64) {
        let v = self.precision.clone().try_inverse().expect("precision is invertible");
        let spread = (f.transpose() * &v * f)[(0, 0)];
        (2.0 * self.a, self.mean.dot(f), (self.b / self.a) * (1.0 + spread))
    }

    /// Absorb one observation.
    pub fn update(&mut self, f: &DVector<f64>, y: f64) {
        let old_quad = (self.mean.transpose() * &self.precision * &self.mean)[(0, 0)];
        let new_precision = &self.precision + f * f.transpose();
        let rhs = &self.precision * &self.mean + f * y;
        let new_mean = new_precision
            .clone()
            .try_inverse()
            .expect("updated precision is invertible")
            * rhs;
        let new_quad = (new_mean.transpose() * &new_precision * &new_mean)[(0, 0)];
        self.a += 0.5;
        self.b += 0.5 * (y * y + old_quad - new_quad);
        self.mean = new_mean;
        self.precision = new_precision;
    }

    /// Current state expressed as `(m, C, n, s)` for comparison.
    pub fn as_state(&self) -> (DVector<f64>, DMatrix<f64>, f64, f64) {
        let n = 2.0 * self.a;
        let s = self.b / self.a;
        let v = self.precision.clone().try_inverse().expect("precision is invertible");
        (self.mean.clone(), v * s, n, s)
    }
}

/// Gaussian linear state-space smoother: identity transition with known
/// per-step innovation covariance `W_t = C_{t-1} (1/delta - 1)` and known
/// observation variance. Returns the smoothed means and covariances for
/// `t = 1..=T`.
pub struct SmoothedMarginals {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

pub fn rts_smoother(
    regressors: &[DVector<f64>],
    y: &[f64],
    m0: &DVector<f64>,
    c0: &DMatrix<f64>,
    delta: f64,
    obs_variance: f64,
) -> SmoothedMarginals {
    let horizon = y.len();
    assert_eq!(regressors.len(), horizon);
    let mut filtered_m = Vec::with_capacity(horizon);
    let mut filtered_c = Vec::with_capacity(horizon);
    let mut predicted_r = Vec::with_capacity(horizon);
    let mut m = m0.clone();
    let mut c = c0.clone();
    for t in 0..horizon {
        // Predict: theta_t = theta_{t-1} + w_t with W = C (1/delta - 1), so
        // the one-step spread is exactly C / delta.
        let r = &c / delta;
        let f = &regressors[t];
        let q = (f.transpose() * &r * f)[(0, 0)] + obs_variance;
        let gain = &r * f / q;
        let error = y[t] - m.dot(f);
        m += &gain * error;
        c = &r - &gain * gain.transpose() * q;
        predicted_r.push(r);
        filtered_m.push(m.clone());
        filtered_c.push(c.clone());
    }

    let mut means = vec![DVector::zeros(0); horizon];
    let mut covs = vec![DMatrix::zeros(0, 0); horizon];
    means[horizon - 1] = filtered_m[horizon - 1].clone();
    covs[horizon - 1] = filtered_c[horizon - 1].clone();
    for t in (0..horizon - 1).rev() {
        let r_next_inv = predicted_r[t + 1]
            .clone()
            .try_inverse()
            .expect("predicted spread is invertible");
        let j = &filtered_c[t] * &r_next_inv;
        // The one-step prediction mean equals the filtered mean under the
        // identity transition.
        means[t] = &filtered_m[t] + &j * (&means[t + 1] - &filtered_m[t]);
        covs[t] = &filtered_c[t] + &j * (&covs[t + 1] - &predicted_r[t + 1]) * j.transpose();
    }
    SmoothedMarginals { means, covs }
}

/// Information-form conditioning of `x | y` in the observation model
/// `y = theta_0 + lambda' x + e`, `e ~ N(0, v)`, `x_j ~ N(h_j, H_j)`:
///
/// ```text
/// Lambda = diag(H)^-1 + lambda lambda' / v
/// eta    = diag(H)^-1 h + lambda (y - theta_0) / v
/// x | y ~ N(Lambda^-1 eta, Lambda^-1)
/// ```
pub fn condition_information_form(
    theta: &DVector<f64>,
    v: f64,
    locations: &DVector<f64>,
    spreads: &DVector<f64>,
    y: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let j = locations.len();
    let lambda = DVector::from_fn(j, |i, _| theta[i + 1]);
    let mut precision = DMatrix::from_fn(j, j, |r, c| lambda[r] * lambda[c] / v);
    let mut eta = &lambda * ((y - theta[0]) / v);
    for i in 0..j {
        precision[(i, i)] += 1.0 / spreads[i];
        eta[i] += locations[i] / spreads[i];
    }
    let cov = precision.try_inverse().expect("posterior precision is invertible");
    let mean = &cov * eta;
    (mean, cov)
}

/// Dense-grid posterior of the two latent states in a two-quarter,
/// single-indicator model. The coefficient and volatility paths are
/// marginalized exactly through the prequential decomposition: given
/// `(x_1, x_2)`, the data likelihood is the product of the discount filter's
/// one-step Student-t predictives, and the latent prior is the product of
/// the supplied forecast densities. Weights are normalized over the grid.
///
/// Returns the two marginal probability vectors over the supplied centers.
pub fn grid_posterior_marginals(
    prior: &SynthesisPrior,
    h: &[StudentT; 2],
    y: [f64; 2],
    centers1: &[f64],
    centers2: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let disc = prior.discounts;
    let mut log_w = vec![vec![0.0_f64; centers2.len()]; centers1.len()];
    let mut max_log = f64::NEG_INFINITY;
    for (i, &x1) in centers1.iter().enumerate() {
        // The first step does not depend on x2; run it once per column.
        let f1 = DVector::from_vec(vec![1.0, x1]);
        let (pred1, m1, c1, n1, s1) = discount_step(
            &prior.m0,
            &prior.c0,
            prior.n0,
            prior.s0,
            disc,
            &f1,
            y[0],
        );
        let base = h[0].log_pdf(x1) + pred1;
        for (j, &x2) in centers2.iter().enumerate() {
            let f2 = DVector::from_vec(vec![1.0, x2]);
            let (pred2, ..) = discount_step(&m1, &c1, n1, s1, disc, &f2, y[1]);
            let lw = base + h[1].log_pdf(x2) + pred2;
            log_w[i][j] = lw;
            if lw > max_log {
                max_log = lw;
            }
        }
    }
    let mut p1 = vec![0.0; centers1.len()];
    let mut p2 = vec![0.0; centers2.len()];
    let mut total = 0.0;
    for i in 0..centers1.len() {
        for j in 0..centers2.len() {
            let w = (log_w[i][j] - max_log).exp();
            p1[i] += w;
            p2[j] += w;
            total += w;
        }
    }
    for p in p1.iter_mut().chain(p2.iter_mut()) {
        *p /= total;
    }
    (p1, p2)
}

/// One discounted conjugate update written out locally: returns the log
/// one-step predictive density of `y` and the updated `(m, C, n, s)`.
#[allow(clippy::too_many_arguments)]
fn discount_step(
    m: &DVector<f64>,
    c: &DMatrix<f64>,
    n: f64,
    s: f64,
    disc: DiscountPair,
    f: &DVector<f64>,
    y: f64,
) -> (f64, DVector<f64>, DMatrix<f64>, f64, f64) {
    let r = c / disc.state;
    let forecast = m.dot(f);
    let q = (f.transpose() * &r * f)[(0, 0)] + s;
    let log_pred = t_log_pdf(y, disc.vol * n, forecast, q);
    let error = y - forecast;
    let gain = &r * f / q;
    let n_new = disc.vol * n + 1.0;
    let ratio = (disc.vol * n + error * error / q) / n_new;
    let m_new = m + &gain * error;
    let c_new = (&r - &gain * gain.transpose() * q) * ratio;
    (log_pred, m_new, c_new, n_new, ratio * s)
}

/// Ordinary least squares through the normal equations `(X'X) b = X'y`,
/// building the design the same way the production fit documents it:
/// intercept, autoregressive lags newest first, monthly lags newest first,
/// with responses starting at index `ar_order`.
pub fn ols_normal_equations(y: &[f64], lags: &[LagVector], ar_order: usize) -> DVector<f64> {
    let lag_order = lags[0].values.len();
    let k = 1 + ar_order + lag_order;
    let rows = y.len() - ar_order;
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
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &b;
    xtx.cholesky()
        .expect("normal equations are positive definite for these windows")
        .solve(&xty)
}
