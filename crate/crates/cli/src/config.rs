//! Run configuration: one TOML file with a fixed key set.
//!
//! Unknown keys are hard errors — a typo in a discount factor must fail the
//! run rather than silently fall back to a default. Relative paths inside
//! the file resolve against the directory containing the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mfs_core::dlm::{DiscountPair, DlmState};
use mfs_core::timegrid::{PeriodIndex, PeriodSplit};
use mfs_core::{MfsError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub split: SplitSection,
    pub run: RunSection,
    #[serde(default)]
    pub projection: ProjectionSection,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub gibbs: GibbsSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub export: ExportSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub target_csv: PathBuf,
    pub indicator_csvs: Vec<PathBuf>,
    /// Series names; defaults to the indicator file stems.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// High-frequency observations per target period.
    pub ratio: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_end: usize,
    pub calib_end: usize,
    pub test_end: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub leads: Vec<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionSection {
    pub lag_order: usize,
    pub intercept: bool,
    pub state_discount: f64,
    pub vol_discount: f64,
    /// Scale-free prior spread of the projection coefficients.
    pub prior_scale: f64,
    pub prior_dof: f64,
    pub prior_s: f64,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        Self {
            lag_order: 3,
            intercept: false,
            state_discount: 0.95,
            vol_discount: 0.99,
            prior_scale: 0.01,
            prior_dof: 2.0,
            prior_s: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub state_discount: f64,
    pub vol_discount: f64,
    pub prior_dof: f64,
    pub prior_s: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self { state_discount: 0.97, vol_discount: 0.95, prior_dof: 10.0, prior_s: 0.002 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSection {
    pub burn_in: usize,
    pub keep: usize,
    pub thin: usize,
}

impl Default for GibbsSection {
    fn default() -> Self {
        Self { burn_in: 2000, keep: 3000, thin: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub ar3: bool,
    pub midas_ar_orders: Vec<usize>,
    pub pooling: bool,
    /// Rolling window length for MIDAS, in target quarters.
    pub midas_window: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { ar3: true, midas_ar_orders: vec![0, 1, 3], pooling: true, midas_window: 40 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportSection {
    /// Dump the final refit's retained draws as CSV (large).
    pub posterior_draws: bool,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self { posterior_draws: false }
    }
}

/// Command-line overrides layered on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub leads: Vec<usize>,
    pub out: Option<PathBuf>,
    /// Retained draws per chain.
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
}

/// Fully validated settings in engine terms.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub target_csv: PathBuf,
    pub indicator_csvs: Vec<PathBuf>,
    pub labels: Vec<String>,
    pub ratio: usize,
    pub split: PeriodSplit,
    pub leads: Vec<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub projection: ProjectionSection,
    pub projection_discounts: DiscountPair,
    pub synthesis: SynthesisSection,
    pub synthesis_discounts: DiscountPair,
    pub gibbs: GibbsSection,
    pub baselines: BaselineSection,
    pub export_posterior: bool,
}

impl ResolvedConfig {
    /// Prior state for one projection filter.
    pub fn projection_prior(&self) -> Result<DlmState> {
        let p = &self.projection;
        let dim = p.lag_order + usize::from(p.intercept);
        DlmState::isotropic(dim, 0.0, p.prior_scale, p.prior_dof, p.prior_s)
    }
}

fn config_error(detail: impl std::fmt::Display) -> MfsError {
    MfsError::Validation(format!("config: {detail}"))
}

/// Parse, resolve relative paths, apply overrides, and validate.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format_args!("cannot read {}: {e}", path.display())))?;
    let parsed: RunConfig =
        toml::from_str(&text).map_err(|e| config_error(e.message()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    resolve(parsed, base, overrides)
}

/// Turn a parsed file into validated engine settings.
pub fn resolve(
    config: RunConfig,
    base_dir: &Path,
    overrides: &Overrides,
) -> Result<ResolvedConfig> {
    let rebase = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };

    let target_csv = rebase(&config.data.target_csv);
    let indicator_csvs: Vec<PathBuf> =
        config.data.indicator_csvs.iter().map(|p| rebase(p)).collect();
    if indicator_csvs.is_empty() {
        return Err(config_error("at least one indicator series is required"));
    }
    for p in std::iter::once(&target_csv).chain(&indicator_csvs) {
        if !p.is_file() {
            return Err(config_error(format_args!("referenced file {} does not exist", p.display())));
        }
    }

    let labels = match config.data.labels {
        Some(labels) => {
            if labels.len() != indicator_csvs.len() {
                return Err(config_error(format_args!(
                    "{} labels for {} indicator files",
                    labels.len(),
                    indicator_csvs.len()
                )));
            }
            labels
        }
        None => indicator_csvs
            .iter()
            .map(|p| {
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| config_error(format_args!("no file stem in {}", p.display())))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    for (i, a) in labels.iter().enumerate() {
        if a.is_empty() {
            return Err(config_error("series labels must be non-empty"));
        }
        if labels[..i].contains(a) {
            return Err(config_error(format_args!("duplicate series label '{a}'")));
        }
    }

    let ratio = config.data.ratio;
    if ratio == 0 {
        return Err(config_error("ratio must be positive"));
    }

    let mut leads = if overrides.leads.is_empty() {
        config.run.leads.clone()
    } else {
        overrides.leads.clone()
    };
    if leads.is_empty() {
        return Err(config_error("at least one lead is required"));
    }
    leads.sort_unstable();
    leads.dedup();
    if let Some(bad) = leads.iter().find(|&&l| l >= ratio) {
        return Err(config_error(format_args!(
            "lead {bad} is invalid for frequency ratio {ratio} (valid: 0..{})",
            ratio - 1
        )));
    }

    let s = config.split;
    if !(s.train_end < s.calib_end && s.calib_end < s.test_end) {
        return Err(config_error(format_args!(
            "split boundaries must increase strictly: {} < {} < {} fails",
            s.train_end, s.calib_end, s.test_end
        )));
    }
    let split = PeriodSplit {
        train_end: PeriodIndex::quarterly(s.train_end),
        calib_end: PeriodIndex::quarterly(s.calib_end),
        test_end: PeriodIndex::quarterly(s.test_end),
    };

    let projection_discounts =
        DiscountPair::new(config.projection.state_discount, config.projection.vol_discount)
            .map_err(|e| config_error(format_args!("projection discounts: {e}")))?;
    let synthesis_discounts =
        DiscountPair::new(config.synthesis.state_discount, config.synthesis.vol_discount)
            .map_err(|e| config_error(format_args!("synthesis discounts: {e}")))?;
    for (name, v) in [
        ("projection.prior_scale", config.projection.prior_scale),
        ("projection.prior_dof", config.projection.prior_dof),
        ("projection.prior_s", config.projection.prior_s),
        ("synthesis.prior_dof", config.synthesis.prior_dof),
        ("synthesis.prior_s", config.synthesis.prior_s),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(config_error(format_args!("{name} must be positive, got {v}")));
        }
    }
    if config.projection.lag_order == 0 {
        return Err(config_error("projection.lag_order must be positive"));
    }

    let mut gibbs = config.gibbs;
    if let Some(iters) = overrides.iters {
        gibbs.keep = iters;
    }
    if let Some(burnin) = overrides.burnin {
        gibbs.burn_in = burnin;
    }
    if gibbs.keep < 100 {
        return Err(config_error(format_args!(
            "gibbs.keep = {} retains too few draws for statistical output (need >= 100)",
            gibbs.keep
        )));
    }
    if gibbs.thin == 0 {
        return Err(config_error("gibbs.thin must be positive"));
    }

    let baselines = config.baselines;
    for order in &baselines.midas_ar_orders {
        if ![0, 1, 3].contains(order) {
            return Err(config_error(format_args!(
                "baselines.midas_ar_orders may contain only 0, 1, or 3, got {order}"
            )));
        }
    }
    if baselines.midas_window < 8 {
        return Err(config_error("baselines.midas_window must be at least 8 quarters"));
    }

    let output_dir = overrides
        .out
        .clone()
        .unwrap_or_else(|| rebase(&config.run.output_dir));

    Ok(ResolvedConfig {
        target_csv,
        indicator_csvs,
        labels,
        ratio,
        split,
        leads,
        seed: overrides.seed.unwrap_or(config.run.seed),
        output_dir,
        projection: config.projection,
        projection_discounts,
        synthesis: config.synthesis,
        synthesis_discounts,
        gibbs,
        baselines,
        export_posterior: config.export.posterior_draws,
    })
}
