//! Per-indicator forecast densities ("projection sheets").
//!
//! Each indicator series is projected onto the quarterly target through its
//! own discount DLM regression of `y_t` on the series' most recent monthly
//! observations. For a release lead of `lead` months, the regressor for
//! quarter `t` holds the `lag_order` newest monthly values available once
//! `lead` months of quarter `t` itself have been published.
//!
//! The sheet records, for every quarter in its range, the one-step-ahead
//! Student-t density emitted *before* `y_t` is observed; the filter then
//! absorbs `y_t` and moves on. Downstream, those densities are the priors
//! `x_{t,j} ~ T_{n_{t,j}}(h_{t,j}, H_{t,j})` placed on the latent projection
//! states during synthesis, so no sheet entry may ever depend on the target
//! value it forecasts.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::dlm::{filter_step, predict_one_step, DiscountPair, DlmState, StudentT};
use crate::error::{MfsError, Result};
use crate::timegrid::{build_regressor_vector, MixedFrequencyPanel};

/// Specification of one projection model: which series, which release lead,
/// how many monthly lags, and the DLM prior and discounts to use.
#[derive(Debug, Clone)]
pub struct ProjectionSpec {
    pub series: usize,
    pub lead: usize,
    pub lag_order: usize,
    /// Include an intercept ahead of the monthly lags. Off by default: the
    /// shipped configurations regress on lags alone.
    pub intercept: bool,
    pub prior: DlmState,
    pub discounts: DiscountPair,
}

impl ProjectionSpec {
    /// Regressor dimension implied by the spec.
    pub fn dim(&self) -> usize {
        self.lag_order + usize::from(self.intercept)
    }

    /// Standard configuration: three monthly lags, no intercept, prior
    /// `beta_0 | v ~ N(0, v I)` with `1/v ~ G(1, 0.01)`, discounts
    /// `(state, vol) = (0.95, 0.99)`.
    pub fn standard(series: usize, lead: usize) -> Self {
        Self {
            series,
            lead,
            lag_order: 3,
            intercept: false,
            prior: DlmState::isotropic(3, 0.0, 0.01, 2.0, 0.01)
                .expect("standard projection prior is valid"),
            discounts: DiscountPair::new(0.95, 0.99).expect("standard discounts are valid"),
        }
    }

    fn regressor(&self, panel: &MixedFrequencyPanel, quarter: usize) -> Result<DVector<f64>> {
        let lag = build_regressor_vector(panel, self.series, quarter, self.lead, self.lag_order)?;
        let mut values = Vec::with_capacity(self.dim());
        if self.intercept {
            values.push(1.0);
        }
        values.extend_from_slice(&lag.values);
        Ok(DVector::from_vec(values))
    }
}

/// Earliest quarter for which a full regressor window exists.
pub fn first_feasible_quarter(spec: &ProjectionSpec, ratio: usize) -> usize {
    // Need (t - 1) * ratio + lead >= lag_order.
    let needed = spec.lag_order.saturating_sub(spec.lead);
    1 + needed.div_ceil(ratio)
}

/// Sequentially emitted forecast densities for one series at one lead.
#[derive(Debug, Clone)]
pub struct ProjectionSheet {
    pub spec: ProjectionSpec,
    /// Quarter of the first entry in `densities`.
    pub first_quarter: usize,
    /// `densities[i]` forecasts quarter `first_quarter + i`, formed strictly
    /// from information available before that quarter's target value.
    pub densities: Vec<StudentT>,
    /// Filter posterior after absorbing the last quarter in the range.
    pub final_state: DlmState,
}

impl ProjectionSheet {
    /// Density for quarter `t`, if covered.
    pub fn density_at(&self, quarter: usize) -> Result<StudentT> {
        if quarter < self.first_quarter {
            return Err(MfsError::Boundary(format!(
                "quarter {quarter} precedes the sheet start {}",
                self.first_quarter
            )));
        }
        self.densities
            .get(quarter - self.first_quarter)
            .copied()
            .ok_or_else(|| {
                MfsError::Boundary(format!(
                    "quarter {quarter} beyond the sheet end {}",
                    self.first_quarter + self.densities.len() - 1
                ))
            })
    }

    /// Inclusive last quarter covered.
    pub fn last_quarter(&self) -> usize {
        self.first_quarter + self.densities.len() - 1
    }

    /// Cloned densities for quarters `from..=to`.
    pub fn window(&self, from: usize, to: usize) -> Result<Vec<StudentT>> {
        (from..=to).map(|t| self.density_at(t)).collect()
    }

    /// Forecast density for the quarter after the sheet's range, given that
    /// quarter's regressor window: the one-step-ahead density from the final
    /// filter state without any further update.
    pub fn next_period_density(&self, panel: &MixedFrequencyPanel) -> Result<StudentT> {
        let quarter = self.last_quarter() + 1;
        let regressor = self.spec.regressor(panel, quarter)?;
        predict_one_step(&self.final_state, &regressor, self.spec.discounts)
    }
}

/// Run one projection filter over `quarters` (inclusive), emitting each
/// quarter's forecast density before absorbing that quarter's target value.
pub fn run_projection(
    panel: &MixedFrequencyPanel,
    spec: &ProjectionSpec,
    quarters: (usize, usize),
) -> Result<ProjectionSheet> {
    let (first, last) = quarters;
    if first > last {
        return Err(MfsError::Validation(format!(
            "projection range {first}..={last} is empty"
        )));
    }
    if last > panel.quarters() {
        return Err(MfsError::Boundary(format!(
            "projection range end {last} exceeds the {} observed quarters",
            panel.quarters()
        )));
    }
    let feasible = first_feasible_quarter(spec, panel.ratio());
    if first < feasible {
        return Err(MfsError::Boundary(format!(
            "projection cannot start at quarter {first}; lead {} with {} lags needs quarter {feasible}",
            spec.lead, spec.lag_order
        )));
    }
    if spec.prior.dim() != spec.dim() {
        return Err(MfsError::Validation(format!(
            "prior dimension {} does not match regressor dimension {}",
            spec.prior.dim(),
            spec.dim()
        )));
    }

    let mut state = spec.prior.clone();
    let mut densities = Vec::with_capacity(last - first + 1);
    for t in first..=last {
        let regressor = spec.regressor(panel, t)?;
        densities.push(predict_one_step(&state, &regressor, spec.discounts)?);
        let y = panel.target_value(t)?;
        state = filter_step(&state, &regressor, y, spec.discounts)?.posterior;
    }
    Ok(ProjectionSheet {
        spec: spec.clone(),
        first_quarter: first,
        densities,
        final_state: state,
    })
}

/// Write a sheet as `quarter,dof,location,scale` rows.
pub fn export_sheet_csv(sheet: &ProjectionSheet, path: &Path) -> Result<()> {
    let mut out = String::from("quarter,dof,location,scale\n");
    for (i, d) in sheet.densities.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            sheet.first_quarter + i,
            d.dof,
            d.location,
            d.scale
        ));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}
