//! Synthesis of projection densities into a single nowcast density.
//!
//! Conditional on latent projection states `x_t = (x_{t,1}, ..., x_{t,J})'`,
//! the target follows a discount DLM regression with intercept,
//!
//! ```text
//! y_t     = F_t' theta_t + nu_t,   F_t = (1, x_t')',   nu_t ~ N(0, v_t)
//! theta_t = theta_{t-1} + omega_t
//! ```
//!
//! while each latent state is a priori the corresponding projection density,
//! decomposed as a scale mixture of normals:
//!
//! ```text
//! x_{t,j} | phi_{t,j} ~ N(h_{t,j}, H_{t,j} / phi_{t,j})
//! phi_{t,j}           ~ G(n_{t,j} / 2, n_{t,j} / 2)
//! ```
//!
//! which integrates to the Student-t sheet entry `T_{n_{t,j}}(h_{t,j},
//! H_{t,j})`. A two-block Gibbs sampler alternates (a) a forward-filter
//! backward-sample draw of `(theta_{0:T}, v_{1:T})` given `x_{1:T}`, and (b)
//! independent per-quarter draws of `x_t` given `(theta_t, v_t, phi_t)`
//! followed by conjugate updates of the mixing scales `phi_t`. Retained
//! draws then feed the one-step-ahead nowcast simulation for the next
//! quarter.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;

use crate::dlm::{
    backward_sample, filter_step, gamma_rate, sample_mvn, DiscountPair, DlmState, FilterRecord,
    StateTrajectory, StudentT,
};
use crate::error::{MfsError, Result};
use crate::projection::ProjectionSheet;
use crate::rng::{substream, substream_seed};
use crate::timegrid::{MixedFrequencyPanel, PeriodIndex, SplitRanges};

/// Prior and evolution settings of the synthesis regression.
#[derive(Debug, Clone)]
pub struct SynthesisPrior {
    /// Prior mean of `theta_0` (intercept first, then one loading per series).
    pub m0: DVector<f64>,
    /// Scale-free prior spread of `theta_0`.
    pub c0: DMatrix<f64>,
    /// Prior volatility degrees of freedom.
    pub n0: f64,
    /// Prior volatility point estimate.
    pub s0: f64,
    pub discounts: DiscountPair,
}

impl SynthesisPrior {
    /// Standard configuration for `series` projections: loadings centred on
    /// the equal-weight vector with unit spread, `theta_0 ~ N((0, 1/J ...)',
    /// I)`, volatility prior `1/v ~ G(5, 0.01)`, discounts `(state, vol) =
    /// (0.97, 0.95)`.
    pub fn equal_weight(series: usize) -> Result<Self> {
        if series == 0 {
            return Err(MfsError::Validation("synthesis needs at least one series".into()));
        }
        let dim = series + 1;
        let mut m0 = DVector::from_element(dim, 1.0 / series as f64);
        m0[0] = 0.0;
        Ok(Self {
            m0,
            c0: DMatrix::identity(dim, dim),
            n0: 10.0,
            s0: 0.002,
            discounts: DiscountPair::new(0.97, 0.95)?,
        })
    }

    /// Number of projection series `J` implied by the prior dimension.
    pub fn series(&self) -> usize {
        self.m0.len() - 1
    }

    fn state(&self) -> Result<DlmState> {
        DlmState::new(self.m0.clone(), self.c0.clone(), self.n0, self.s0)
    }
}

/// Latent projection states and their scale mixers, indexed by quarter.
#[derive(Debug, Clone)]
pub struct LatentStates {
    /// `x[i]` holds the J latent states of the i-th fitted quarter.
    pub x: Vec<DVector<f64>>,
    /// `phi[i]` holds the matching mixing scales.
    pub phi: Vec<DVector<f64>>,
}

/// Gibbs run lengths and the chain seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub keep: usize,
    pub thin: usize,
    pub seed: u64,
}

impl GibbsConfig {
    pub fn new(burn_in: usize, keep: usize, thin: usize, seed: u64) -> Result<Self> {
        if keep == 0 || thin == 0 {
            return Err(MfsError::Validation(
                "gibbs configuration needs keep >= 1 and thin >= 1".into(),
            ));
        }
        Ok(Self { burn_in, keep, thin, seed })
    }

    /// Standard run lengths: 2,000 burn-in, 3,000 retained, no thinning.
    pub fn standard(seed: u64) -> Self {
        Self { burn_in: 2000, keep: 3000, thin: 1, seed }
    }
}

/// One retained draw of the full set of unknowns.
#[derive(Debug, Clone)]
pub struct SynthesisDraw {
    /// Coefficient trajectory `theta_0 ..= theta_T` (length `T + 1`).
    pub theta: Vec<DVector<f64>>,
    /// Volatility trajectory `v_1 ..= v_T`.
    pub v: Vec<f64>,
    /// Latent projection states `x_1 ..= x_T`.
    pub x: Vec<DVector<f64>>,
    /// Scale mixers `phi_1 ..= phi_T`.
    pub phi: Vec<DVector<f64>>,
    /// Filter posterior at `T` from this draw's forward pass, needed to
    /// extend the draw one quarter ahead.
    pub final_filter: DlmState,
}

/// Retained draws plus an echo of the configuration that produced them.
#[derive(Debug, Clone)]
pub struct SynthesisPosterior {
    pub draws: Vec<SynthesisDraw>,
    pub config: GibbsConfig,
}

/// Monte Carlo nowcast for one quarter.
#[derive(Debug, Clone)]
pub struct NowcastResult {
    /// Predictive draws of the target value.
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of `samples`.
    pub sd: f64,
    /// Log predictive density at the realized value, when one is available:
    /// the log of the draw-averaged conditional normal density.
    pub log_pred_density: Option<f64>,
    pub period: PeriodIndex,
    pub lead: usize,
}

fn validate_density_panel(densities: &[Vec<StudentT>], quarters: usize) -> Result<()> {
    if densities.is_empty() {
        return Err(MfsError::Validation("synthesis needs at least one projection".into()));
    }
    for (j, series) in densities.iter().enumerate() {
        if series.len() != quarters {
            return Err(MfsError::Validation(format!(
                "projection {j} supplies {} densities for {quarters} quarters",
                series.len()
            )));
        }
    }
    Ok(())
}

/// Draw initial latent states and mixers from the projection densities
/// themselves: `phi ~ G(n/2, n/2)`, then `x | phi ~ N(h, H / phi)`.
pub fn init_latent_states<R: Rng + ?Sized>(
    densities: &[Vec<StudentT>],
    rng: &mut R,
) -> Result<LatentStates> {
    let quarters = densities.first().map_or(0, Vec::len);
    validate_density_panel(densities, quarters)?;
    if quarters == 0 {
        return Err(MfsError::Validation("cannot initialize over zero quarters".into()));
    }
    let series = densities.len();
    let mut x = Vec::with_capacity(quarters);
    let mut phi = Vec::with_capacity(quarters);
    for i in 0..quarters {
        let mut xt = DVector::zeros(series);
        let mut pt = DVector::zeros(series);
        for j in 0..series {
            let d = &densities[j][i];
            let p = gamma_rate(d.dof / 2.0, d.dof / 2.0, rng);
            let normal = Normal::new(d.location, (d.scale / p).sqrt())
                .map_err(|_| MfsError::Degeneracy("latent init scale collapsed".into()))?;
            pt[j] = p;
            xt[j] = normal.sample(rng);
        }
        x.push(xt);
        phi.push(pt);
    }
    Ok(LatentStates { x, phi })
}

/// Forward-filter backward-sample draw of the synthesis coefficients and
/// volatilities given the latent states. Returns the sampled trajectory and
/// the filter posterior at the final fitted quarter.
pub fn sample_synthesis_params<R: Rng + ?Sized>(
    x: &[DVector<f64>],
    y: &[f64],
    prior: &SynthesisPrior,
    rng: &mut R,
) -> Result<(StateTrajectory, DlmState)> {
    if x.len() != y.len() || y.is_empty() {
        return Err(MfsError::Validation(format!(
            "need matching non-empty series, got {} latent quarters for {} targets",
            x.len(),
            y.len()
        )));
    }
    let series = prior.series();
    let mut state = prior.state()?;
    let mut records: Vec<FilterRecord> = Vec::with_capacity(y.len());
    for (xt, &yt) in x.iter().zip(y) {
        if xt.len() != series {
            return Err(MfsError::Validation(format!(
                "latent state of length {} for {series} series",
                xt.len()
            )));
        }
        let mut f = DVector::zeros(series + 1);
        f[0] = 1.0;
        f.rows_mut(1, series).copy_from(xt);
        let rec = filter_step(&state, &f, yt, prior.discounts)?;
        state = rec.posterior.clone();
        records.push(rec);
    }
    let trajectory = backward_sample(&records, prior.discounts, rng)?;
    Ok((trajectory, state))
}

/// Closed-form conditional of one quarter's latent states given the
/// synthesis coefficients, volatility, mixing scales, and observed target.
///
/// With `Ht = diag(H_{t,j} / phi_{t,j})` and coefficient split
/// `theta_t = (theta_0, lambda')'`:
///
/// ```text
/// c = y_t - theta_0 - h_t' lambda        g = v_t + lambda' Ht lambda
/// b = Ht lambda / g
/// x_t | ... ~ N(h_t + b c, Ht - b b' g)
/// ```
pub fn latent_conditional_moments(
    theta_t: &DVector<f64>,
    v_t: f64,
    locations: &DVector<f64>,
    scaled_spreads: &DVector<f64>,
    y_t: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let series = locations.len();
    if theta_t.len() != series + 1 {
        return Err(MfsError::Validation(format!(
            "coefficient vector of length {} for {series} series",
            theta_t.len()
        )));
    }
    if scaled_spreads.len() != series {
        return Err(MfsError::Validation("spread vector length mismatch".into()));
    }
    if v_t <= 0.0 {
        return Err(MfsError::Degeneracy(format!("non-positive volatility {v_t}")));
    }
    let lambda = theta_t.rows(1, series);
    let c = y_t - theta_t[0] - locations.dot(&lambda);
    let mut g = v_t;
    for j in 0..series {
        g += lambda[j] * lambda[j] * scaled_spreads[j];
    }
    if g <= 0.0 {
        return Err(MfsError::Degeneracy(format!("forecast-scale term {g} not positive")));
    }
    let b = DVector::from_fn(series, |j, _| scaled_spreads[j] * lambda[j] / g);
    let mean = locations + &b * c;
    let mut cov = DMatrix::from_diagonal(scaled_spreads);
    cov -= &b * b.transpose() * g;
    Ok((mean, cov))
}

/// Redraw every quarter's latent states from their joint conditional,
/// independently across quarters.
pub fn sample_latent_states<R: Rng + ?Sized>(
    theta: &[DVector<f64>],
    v: &[f64],
    y: &[f64],
    densities: &[Vec<StudentT>],
    phi: &[DVector<f64>],
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let quarters = y.len();
    validate_density_panel(densities, quarters)?;
    if theta.len() != quarters || v.len() != quarters || phi.len() != quarters {
        return Err(MfsError::Validation(
            "coefficients, volatilities, mixers, and targets must align".into(),
        ));
    }
    let series = densities.len();
    let mut out = Vec::with_capacity(quarters);
    for i in 0..quarters {
        let locations = DVector::from_fn(series, |j, _| densities[j][i].location);
        let scaled = DVector::from_fn(series, |j, _| densities[j][i].scale / phi[i][j]);
        let (mean, cov) = latent_conditional_moments(&theta[i], v[i], &locations, &scaled, y[i])?;
        out.push(sample_mvn(&mean, &cov, rng));
    }
    Ok(out)
}

/// Conjugate update of the scale mixers given current latent states:
/// `phi_{t,j} | x_{t,j} ~ G((n + 1) / 2, (n + d) / 2)` with
/// `d = (x - h)^2 / H`.
pub fn sample_phi_scales<R: Rng + ?Sized>(
    x: &[DVector<f64>],
    densities: &[Vec<StudentT>],
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    validate_density_panel(densities, x.len())?;
    let series = densities.len();
    let mut out = Vec::with_capacity(x.len());
    for (i, xt) in x.iter().enumerate() {
        let mut pt = DVector::zeros(series);
        for j in 0..series {
            let d = &densities[j][i];
            let dev = (xt[j] - d.location).powi(2) / d.scale;
            pt[j] = gamma_rate((d.dof + 1.0) / 2.0, (d.dof + dev) / 2.0, rng);
        }
        out.push(pt);
    }
    Ok(out)
}

/// Run the two-block Gibbs sampler over `y` with one density column per
/// projection. Fully deterministic in `config.seed`.
pub fn gibbs_fit(
    y: &[f64],
    densities: &[Vec<StudentT>],
    prior: &SynthesisPrior,
    config: &GibbsConfig,
) -> Result<SynthesisPosterior> {
    validate_density_panel(densities, y.len())?;
    if y.is_empty() {
        return Err(MfsError::Validation("synthesis needs at least one quarter".into()));
    }
    if densities.len() != prior.series() {
        return Err(MfsError::Validation(format!(
            "prior sized for {} series but {} density columns supplied",
            prior.series(),
            densities.len()
        )));
    }
    if config.keep == 0 || config.thin == 0 {
        return Err(MfsError::Validation("keep and thin must be positive".into()));
    }

    let mut rng = substream(config.seed, "synthesis-gibbs", &[]);
    let LatentStates { mut x, mut phi } = init_latent_states(densities, &mut rng)?;

    let total = config.burn_in + (config.keep - 1) * config.thin + 1;
    let mut draws = Vec::with_capacity(config.keep);
    for iteration in 0..total {
        let (trajectory, final_filter) = sample_synthesis_params(&x, y, prior, &mut rng)?;
        x = sample_latent_states(
            &trajectory.theta[1..],
            &trajectory.v,
            y,
            densities,
            &phi,
            &mut rng,
        )?;
        phi = sample_phi_scales(&x, densities, &mut rng)?;

        let finite = trajectory.theta.iter().all(|t| t.iter().all(|a| a.is_finite()))
            && trajectory.v.iter().all(|a| a.is_finite())
            && x.iter().all(|t| t.iter().all(|a| a.is_finite()));
        if !finite {
            return Err(MfsError::NonFinite { context: "gibbs sweep".into(), iteration });
        }

        if iteration >= config.burn_in && (iteration - config.burn_in) % config.thin == 0 {
            draws.push(SynthesisDraw {
                theta: trajectory.theta.clone(),
                v: trajectory.v.clone(),
                x: x.clone(),
                phi: phi.clone(),
                final_filter: final_filter.clone(),
            });
        }
    }
    debug_assert_eq!(draws.len(), config.keep);
    Ok(SynthesisPosterior { draws, config: *config })
}

/// Simulate the one-quarter-ahead predictive for the quarter following the
/// fitted range.
///
/// Per retained draw: evolve the volatility through the beta-gamma step
/// `v_next = v_T vol / g`, `g ~ Beta(vol n_T / 2, (1 - vol) n_T / 2)`; evolve
/// the coefficients by their random walk with innovation spread
/// `C_T (1 - state) / state * v_next / s_T`; draw latent states from the
/// supplied next-quarter projection densities; then draw the target from the
/// conditional normal. The log predictive density at a realized value is the
/// log of the draw-averaged conditional normal density (computed by
/// log-sum-exp, never `-inf` for positive volatility draws).
pub fn nowcast_simulate<R: Rng + ?Sized>(
    posterior: &SynthesisPosterior,
    next_densities: &[StudentT],
    discounts: DiscountPair,
    period: PeriodIndex,
    lead: usize,
    realized: Option<f64>,
    rng: &mut R,
) -> Result<NowcastResult> {
    if posterior.draws.is_empty() {
        return Err(MfsError::Validation("posterior holds no draws".into()));
    }
    let series = next_densities.len();
    let dim = posterior.draws[0].final_filter.dim();
    if dim != series + 1 {
        return Err(MfsError::Validation(format!(
            "{series} next-quarter densities for a coefficient vector of dimension {dim}"
        )));
    }

    let n_draws = posterior.draws.len();
    let mut samples = Vec::with_capacity(n_draws);
    let mut conditional_logpdfs = Vec::with_capacity(n_draws);
    for draw in &posterior.draws {
        let filter = &draw.final_filter;
        let v_t = *draw.v.last().expect("draws contain at least one quarter");
        let g = if discounts.vol == 1.0 {
            1.0
        } else {
            Beta::new(discounts.vol * filter.n / 2.0, (1.0 - discounts.vol) * filter.n / 2.0)
                .map_err(|_| MfsError::Degeneracy("beta evolution parameters collapsed".into()))?
                .sample(rng)
        };
        let v_next = v_t * discounts.vol / g;
        if !(v_next.is_finite() && v_next > 0.0) {
            return Err(MfsError::Degeneracy(format!("evolved volatility {v_next}")));
        }

        let evolution = &filter.c
            * ((1.0 - discounts.state) / discounts.state * v_next / filter.s);
        let theta_next = sample_mvn(draw.theta.last().unwrap(), &evolution, rng);

        let mut location = theta_next[0];
        for (j, d) in next_densities.iter().enumerate() {
            location += theta_next[j + 1] * d.sample(rng);
        }
        let normal = Normal::new(location, v_next.sqrt())
            .map_err(|_| MfsError::Degeneracy("nowcast observation scale collapsed".into()))?;
        samples.push(normal.sample(rng));
        if let Some(y) = realized {
            let z = (y - location) / v_next.sqrt();
            conditional_logpdfs
                .push(-0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI * v_next).ln());
        }
    }

    let mean = samples.iter().sum::<f64>() / n_draws as f64;
    let sd = if n_draws > 1 {
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n_draws - 1) as f64).sqrt()
    } else {
        0.0
    };
    let log_pred_density = realized.map(|_| {
        let max = conditional_logpdfs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = conditional_logpdfs.iter().map(|l| (l - max).exp()).sum();
        max + (sum / n_draws as f64).ln()
    });

    Ok(NowcastResult { samples, mean, sd, log_pred_density, period, lead })
}

/// Posterior by-products of one refit that the evaluation stage consumes:
/// draws of the coefficient vector and of the latent states at the final
/// fitted quarter.
#[derive(Debug, Clone)]
pub struct RefitSummary {
    pub quarter: usize,
    pub theta_final: Vec<DVector<f64>>,
    pub x_final: Vec<DVector<f64>>,
}

/// Sequential out-of-sample nowcasts for every test quarter.
#[derive(Debug)]
pub struct SequentialOutput {
    pub nowcasts: Vec<NowcastResult>,
    pub refits: Vec<RefitSummary>,
}

/// Nowcast every test quarter in turn: for target quarter `t`, synthesis is
/// refitted from the calibration start through `t - 1` (projection densities
/// mature over the training range but are excluded from the fit), then the
/// predictive for `t` is simulated with that quarter's lead-aligned
/// projection densities. The target value for `t` enters no computation
/// before its own nowcast is recorded.
///
/// Chain and nowcast random streams are derived per quarter from
/// `master_seed`, so results are reproducible and independent of refit
/// execution order (refits run in parallel). Streams deliberately do not key
/// on the lead: two leads whose projection sheets coincide must produce
/// identical nowcasts, isolating the lead's effect to the sheets themselves.
pub fn sequential_nowcast(
    panel: &MixedFrequencyPanel,
    sheets: &[ProjectionSheet],
    prior: &SynthesisPrior,
    base: &GibbsConfig,
    ranges: &SplitRanges,
    master_seed: u64,
) -> Result<SequentialOutput> {
    if sheets.is_empty() {
        return Err(MfsError::Validation("sequential nowcast needs projection sheets".into()));
    }
    if sheets.len() != prior.series() {
        return Err(MfsError::Validation(format!(
            "prior sized for {} series but {} sheets supplied",
            prior.series(),
            sheets.len()
        )));
    }
    let lead = sheets[0].spec.lead;
    if sheets.iter().any(|s| s.spec.lead != lead) {
        return Err(MfsError::Validation("all sheets must share one lead".into()));
    }
    let calib_start = *ranges.calibrate.start();
    let test: Vec<usize> = ranges.test.clone().collect();
    let last_test = *test.last().ok_or_else(|| {
        MfsError::Validation("test range is empty".into())
    })?;
    for sheet in sheets {
        if sheet.first_quarter > calib_start || sheet.last_quarter() < last_test {
            return Err(MfsError::Boundary(format!(
                "sheet for series {} covers {}..={} but {}..={last_test} is required",
                sheet.spec.series,
                sheet.first_quarter,
                sheet.last_quarter(),
                calib_start
            )));
        }
    }

    let per_quarter: Result<Vec<(NowcastResult, RefitSummary)>> = test
        .par_iter()
        .map(|&t| {
            let y: Vec<f64> = (calib_start..t)
                .map(|q| panel.target_value(q))
                .collect::<Result<_>>()?;
            let densities: Vec<Vec<StudentT>> = sheets
                .iter()
                .map(|s| s.window(calib_start, t - 1))
                .collect::<Result<_>>()?;
            let config = GibbsConfig {
                seed: substream_seed(master_seed, "gibbs", &[t as u64]),
                ..*base
            };
            let posterior = gibbs_fit(&y, &densities, prior, &config)?;

            let next: Vec<StudentT> = sheets
                .iter()
                .map(|s| s.density_at(t))
                .collect::<Result<_>>()?;
            let mut rng: ChaCha8Rng = substream(master_seed, "nowcast", &[t as u64]);
            let nowcast = nowcast_simulate(
                &posterior,
                &next,
                prior.discounts,
                PeriodIndex { quarter: t, intra: lead },
                lead,
                Some(panel.target_value(t)?),
                &mut rng,
            )?;

            let summary = RefitSummary {
                quarter: t,
                theta_final: posterior
                    .draws
                    .iter()
                    .map(|d| d.theta.last().unwrap().clone())
                    .collect(),
                x_final: posterior
                    .draws
                    .iter()
                    .map(|d| d.x.last().unwrap().clone())
                    .collect(),
            };
            Ok((nowcast, summary))
        })
        .collect();

    let mut nowcasts = Vec::with_capacity(test.len());
    let mut refits = Vec::with_capacity(test.len());
    for (nowcast, summary) in per_quarter? {
        nowcasts.push(nowcast);
        refits.push(summary);
    }
    Ok(SequentialOutput { nowcasts, refits })
}

/// Dump a posterior as `iteration,t,parameter,value` rows (long format), for
/// external diagnostics.
pub fn export_posterior_csv(
    posterior: &SynthesisPosterior,
    first_quarter: usize,
    path: &std::path::Path,
) -> Result<()> {
    use std::io::Write as _;
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "iteration,t,parameter,value")?;
    for (i, draw) in posterior.draws.iter().enumerate() {
        for (offset, theta) in draw.theta.iter().enumerate() {
            // theta_0 belongs to the quarter before the first fitted one.
            let t = first_quarter as i64 - 1 + offset as i64;
            for (k, value) in theta.iter().enumerate() {
                writeln!(out, "{i},{t},theta{k},{value}")?;
            }
        }
        for (offset, v) in draw.v.iter().enumerate() {
            writeln!(out, "{i},{},v,{v}", first_quarter + offset)?;
        }
        for (offset, xt) in draw.x.iter().enumerate() {
            for (j, value) in xt.iter().enumerate() {
                writeln!(out, "{i},{},x{},{value}", first_quarter + offset, j + 1)?;
            }
        }
        for (offset, pt) in draw.phi.iter().enumerate() {
            for (j, value) in pt.iter().enumerate() {
                writeln!(out, "{i},{},phi{},{value}", first_quarter + offset, j + 1)?;
            }
        }
    }
    Ok(())
}
