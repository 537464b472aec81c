//! End-to-end orchestration: load the panel, run every projection filter,
//! refit the synthesis sequentially, run the baseline models, and write the
//! artifact files under the output directory.
//!
//! The pipeline is staged so each subcommand stops exactly where its name
//! says: `ingest` validates and echoes the panel, `project` adds the
//! projection sheets, `nowcast` adds the sequential synthesis and baselines,
//! `evaluate` adds metric trajectories and the run summary. `run` is all of
//! them in one pass over a single panel load.

use std::path::Path;

use serde::Serialize;

use mfs_core::baselines::{
    ar_dlm_nowcast, equal_weight_pool, fit_unrestricted_midas, midas_nowcast, GaussianDensity,
    PredictiveDensity,
};
use mfs_core::dlm::DlmState;
use mfs_core::eval::{
    coefficient_trajectory, lpdr, msne, paired_r2_trajectory, pct_vs_reference, sd_trajectory,
    MetricTrajectory,
};
use mfs_core::projection::{
    export_sheet_csv, first_feasible_quarter, run_projection, ProjectionSheet, ProjectionSpec,
};
use mfs_core::rng::substream_seed;
use mfs_core::synthesis::{
    export_posterior_csv, gibbs_fit, sequential_nowcast, GibbsConfig, SequentialOutput,
    SynthesisPrior,
};
use mfs_core::timegrid::{
    build_regressor_vector, load_panel, split_periods, LagVector, MixedFrequencyPanel, SplitRanges,
};
use mfs_core::{MfsError, Result};

use crate::config::ResolvedConfig;

/// How far down the pipeline a subcommand reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Project,
    Nowcast,
    Evaluate,
    Full,
}

impl Stage {
    fn rank(self) -> u8 {
        match self {
            Stage::Ingest => 0,
            Stage::Project => 1,
            Stage::Nowcast => 2,
            Stage::Evaluate => 3,
            Stage::Full => 4,
        }
    }

    fn reaches(self, other: Stage) -> bool {
        self.rank() >= other.rank()
    }
}

/// One model's test-period predictives, aligned with the test quarters.
#[derive(Debug, Clone)]
pub struct ModelSeries {
    pub name: String,
    /// Predictive means.
    pub locations: Vec<f64>,
    /// Predictive variances; NaN when the family's variance is undefined.
    pub variances: Vec<f64>,
    /// Log predictive density at the realized value.
    pub logpdfs: Vec<f64>,
}

/// Everything computed for one monthly lead.
#[derive(Debug)]
pub struct LeadComputation {
    pub lead: usize,
    pub sheets: Vec<ProjectionSheet>,
    /// Present from the nowcast stage on.
    pub synthesis: Option<SequentialOutput>,
    pub baselines: Vec<ModelSeries>,
}

/// One full pipeline pass over a panel.
#[derive(Debug)]
pub struct PipelineRun {
    pub panel: MixedFrequencyPanel,
    pub ranges: SplitRanges,
    pub leads: Vec<LeadComputation>,
}

impl PipelineRun {
    /// Realized target values over the test quarters.
    pub fn realized(&self) -> Result<Vec<f64>> {
        self.ranges.test.clone().map(|q| self.panel.target_value(q)).collect()
    }
}

/// Run the pipeline up to (and including) `stage`.
pub fn compute(cfg: &ResolvedConfig, stage: Stage) -> Result<PipelineRun> {
    let panel = load_panel(&cfg.target_csv, &cfg.indicator_csvs, &cfg.labels, cfg.ratio)?;
    let ranges = split_periods(&panel, cfg.split)?;
    let mut run = PipelineRun { panel, ranges, leads: Vec::new() };
    if !stage.reaches(Stage::Project) {
        return Ok(run);
    }

    let test_end = *run.ranges.test.end();
    for &lead in &cfg.leads {
        let mut sheets = Vec::with_capacity(run.panel.series_count());
        for series in 0..run.panel.series_count() {
            let spec = ProjectionSpec {
                series,
                lead,
                lag_order: cfg.projection.lag_order,
                intercept: cfg.projection.intercept,
                prior: cfg.projection_prior()?,
                discounts: cfg.projection_discounts,
            };
            let first = first_feasible_quarter(&spec, run.panel.ratio());
            sheets.push(run_projection(&run.panel, &spec, (first, test_end))?);
        }

        let synthesis = if stage.reaches(Stage::Nowcast) {
            let prior = synthesis_prior(cfg, run.panel.series_count())?;
            let base = GibbsConfig::new(
                cfg.gibbs.burn_in,
                cfg.gibbs.keep,
                cfg.gibbs.thin,
                cfg.seed,
            )?;
            Some(sequential_nowcast(&run.panel, &sheets, &prior, &base, &run.ranges, cfg.seed)?)
        } else {
            None
        };

        let baselines = if stage.reaches(Stage::Nowcast) {
            compute_baselines(cfg, &run.panel, &run.ranges, lead)?
        } else {
            Vec::new()
        };

        run.leads.push(LeadComputation { lead, sheets, synthesis, baselines });
    }
    Ok(run)
}

/// Synthesis prior from the configuration: equal-weight location with the
/// configured volatility prior and discounts.
pub fn synthesis_prior(cfg: &ResolvedConfig, series: usize) -> Result<SynthesisPrior> {
    let mut prior = SynthesisPrior::equal_weight(series)?;
    prior.n0 = cfg.synthesis.prior_dof;
    prior.s0 = cfg.synthesis.prior_s;
    prior.discounts = cfg.synthesis_discounts;
    Ok(prior)
}

fn studentt_variance(d: &mfs_core::dlm::StudentT) -> f64 {
    if d.dof > 2.0 {
        d.scale * d.dof / (d.dof - 2.0)
    } else {
        f64::NAN
    }
}

fn compute_baselines(
    cfg: &ResolvedConfig,
    panel: &MixedFrequencyPanel,
    ranges: &SplitRanges,
    lead: usize,
) -> Result<Vec<ModelSeries>> {
    let test_start = *ranges.test.start();
    let test_end = *ranges.test.end();
    let y = panel.target_series();
    let realized: Vec<f64> =
        ranges.test.clone().map(|q| panel.target_value(q)).collect::<Result<_>>()?;
    let mut out = Vec::new();

    if cfg.baselines.ar3 {
        // The autoregressive benchmark sees only the target's own history, so
        // its predictives do not move with the lead; it is recomputed per
        // lead only to keep the artifact layout uniform.
        let order = 3;
        let prior = DlmState::isotropic(
            order + 1,
            0.0,
            cfg.projection.prior_scale,
            cfg.projection.prior_dof,
            cfg.projection.prior_s,
        )?;
        let densities = ar_dlm_nowcast(
            &y[..test_end],
            order,
            &prior,
            cfg.projection_discounts,
            test_start - 1,
        )?;
        out.push(ModelSeries {
            name: "ar3".into(),
            locations: densities.iter().map(|d| d.location).collect(),
            variances: densities.iter().map(studentt_variance).collect(),
            logpdfs: densities
                .iter()
                .zip(&realized)
                .map(|(d, &r)| d.log_pdf(r))
                .collect(),
        });
    }

    if cfg.baselines.midas_ar_orders.is_empty() {
        return Ok(out);
    }

    let p = cfg.projection.lag_order;
    // First quarter with a complete monthly lag window (same arithmetic as
    // the projection filters, which share the regressor construction).
    let first_feasible = {
        let needed = p.saturating_sub(lead);
        1 + needed.div_ceil(panel.ratio())
    };
    // Lag vectors are shared across windows; build each quarter's once.
    let mut lag_cache: Vec<Vec<LagVector>> = Vec::with_capacity(panel.series_count());
    for series in 0..panel.series_count() {
        let lags: Vec<LagVector> = (first_feasible..=test_end)
            .map(|q| build_regressor_vector(panel, series, q, lead, p))
            .collect::<Result<_>>()?;
        lag_cache.push(lags);
    }

    for &ar_order in &cfg.baselines.midas_ar_orders {
        // Per-series predictive densities over the test quarters, kept so the
        // pooled model can mix them afterwards.
        let mut per_series: Vec<Vec<GaussianDensity>> = Vec::with_capacity(panel.series_count());
        for series in 0..panel.series_count() {
            let mut densities = Vec::with_capacity(realized.len());
            for t in test_start..=test_end {
                // Rolling window of the most recent feasible quarters ending
                // just before the nowcast target.
                let w_end = t - 1;
                let w_start =
                    first_feasible.max(w_end.saturating_sub(cfg.baselines.midas_window - 1)).max(1);
                let y_win = &y[w_start - 1..w_end];
                let lags_win =
                    &lag_cache[series][w_start - first_feasible..=w_end - first_feasible];
                let fit = fit_unrestricted_midas(y_win, lags_win, ar_order)?;
                let ar_values: Vec<f64> = (1..=ar_order).map(|l| y[t - 1 - l]).collect();
                let lag = &lag_cache[series][t - first_feasible];
                densities.push(midas_nowcast(&fit, &ar_values, lag)?);
            }
            per_series.push(densities);
        }

        for (series, densities) in per_series.iter().enumerate() {
            out.push(ModelSeries {
                name: format!("midas_ar{ar_order}_{}", panel.labels()[series]),
                locations: densities.iter().map(|d| d.location).collect(),
                variances: densities.iter().map(|d| d.variance).collect(),
                logpdfs: densities
                    .iter()
                    .zip(&realized)
                    .map(|(d, &r)| d.log_pdf(r))
                    .collect(),
            });
        }

        if cfg.baselines.pooling {
            let mut locations = Vec::with_capacity(realized.len());
            let mut variances = Vec::with_capacity(realized.len());
            let mut logpdfs = Vec::with_capacity(realized.len());
            for (i, &r) in realized.iter().enumerate() {
                let components: Vec<PredictiveDensity> = per_series
                    .iter()
                    .map(|d| PredictiveDensity::Gaussian(d[i]))
                    .collect();
                let pooled = equal_weight_pool(components)?;
                let mean = pooled.mean();
                // Mixture variance: average second moment minus the squared
                // mixture mean.
                let second: f64 = per_series
                    .iter()
                    .map(|d| d[i].variance + d[i].location * d[i].location)
                    .sum::<f64>()
                    / per_series.len() as f64;
                locations.push(mean);
                variances.push(second - mean * mean);
                logpdfs.push(pooled.log_pdf(r));
            }
            out.push(ModelSeries {
                name: format!("midas_ar{ar_order}_pool"),
                locations,
                variances,
                logpdfs,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ModelSummary {
    model: String,
    /// Final mean squared nowcast error over the test quarters.
    msne: f64,
    /// Final cumulative log predictive density ratio against the synthesis.
    lpdr_vs_mfs: f64,
    /// Percent change in final squared error versus the synthesis; negative
    /// means the model is worse.
    pct_msne_vs_mfs: f64,
}

#[derive(Debug, Serialize)]
struct LeadSummary {
    lead: usize,
    models: Vec<ModelSummary>,
}

#[derive(Debug, Serialize)]
struct Summary {
    seed: u64,
    ratio: usize,
    series: Vec<String>,
    test_first: usize,
    test_last: usize,
    leads: Vec<LeadSummary>,
}

fn squared_errors(realized: &[f64], locations: &[f64]) -> Vec<f64> {
    realized.iter().zip(locations).map(|(r, m)| r - m).collect()
}

/// Write the artifacts appropriate to `stage` and report each group on
/// stdout. Returns the summary path when one was written.
pub fn write_artifacts(cfg: &ResolvedConfig, run: &PipelineRun, stage: Stage) -> Result<()> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    println!(
        "panel: {} quarters, {} series, ratio {}",
        run.panel.quarters(),
        run.panel.series_count(),
        run.panel.ratio()
    );
    println!(
        "split: train {:?}, calibrate {:?}, test {:?}",
        run.ranges.train, run.ranges.calibrate, run.ranges.test
    );

    if stage == Stage::Ingest || stage == Stage::Full {
        let data_dir = out.join("data");
        run.panel.write_csv_dir(&data_dir)?;
        println!("data echo -> {}", data_dir.display());
    }
    if stage == Stage::Ingest {
        return Ok(());
    }

    if stage == Stage::Project || stage == Stage::Full {
        let sheet_dir = out.join("sheets");
        std::fs::create_dir_all(&sheet_dir)?;
        for lead_run in &run.leads {
            for sheet in &lead_run.sheets {
                let label = &run.panel.labels()[sheet.spec.series];
                let path = sheet_dir.join(format!("sheet_{label}_lead{}.csv", lead_run.lead));
                export_sheet_csv(sheet, &path)?;
            }
            println!(
                "lead {}: {} projection sheets -> {}",
                lead_run.lead,
                lead_run.sheets.len(),
                sheet_dir.display()
            );
        }
    }
    if stage == Stage::Project {
        return Ok(());
    }

    let realized = run.realized()?;
    let test_start = *run.ranges.test.start();

    for lead_run in &run.leads {
        let lead = lead_run.lead;
        let synthesis = lead_run
            .synthesis
            .as_ref()
            .ok_or_else(|| MfsError::Validation("nowcast stage reached without synthesis".into()))?;

        let path = out.join(format!("nowcast_lead{lead}.csv"));
        write_nowcast_csv(synthesis, &realized, &path)?;
        println!(
            "lead {lead}: {} sequential nowcasts -> {}",
            synthesis.nowcasts.len(),
            path.display()
        );

        for model in &lead_run.baselines {
            let path = out.join(format!("baseline_{}_lead{lead}.csv", model.name));
            write_baseline_csv(model, test_start, &realized, &path)?;
        }
        if !lead_run.baselines.is_empty() {
            println!("lead {lead}: {} baseline models written", lead_run.baselines.len());
        }

        if cfg.export_posterior {
            let path = out.join(format!("posterior_lead{lead}.csv"));
            export_final_posterior(cfg, run, lead_run, &path)?;
            println!("lead {lead}: final refit posterior -> {}", path.display());
        }
    }

    if !stage.reaches(Stage::Evaluate) {
        return Ok(());
    }

    let mut summary = Summary {
        seed: cfg.seed,
        ratio: run.panel.ratio(),
        series: run.panel.labels().to_vec(),
        test_first: *run.ranges.test.start(),
        test_last: *run.ranges.test.end(),
        leads: Vec::new(),
    };

    for lead_run in &run.leads {
        let lead = lead_run.lead;
        let synthesis = lead_run.synthesis.as_ref().expect("checked above");

        let mfs_locations: Vec<f64> = synthesis.nowcasts.iter().map(|n| n.mean).collect();
        let mfs_logpdfs: Vec<f64> = synthesis
            .nowcasts
            .iter()
            .map(|n| n.log_pred_density.unwrap_or(f64::NAN))
            .collect();
        let mfs_errors = squared_errors(&realized, &mfs_locations);
        let mfs_msne = msne(&mfs_errors, "mfs", lead, test_start)?;
        mfs_msne.write_csv(&out.join(format!("msne_mfs_lead{lead}.csv")))?;
        MetricTrajectory {
            values: mfs_errors.iter().map(|e| e * e).collect(),
            label: "mfs".into(),
            lead,
            start_quarter: test_start,
        }
        .write_csv(&out.join(format!("sq_error_mfs_lead{lead}.csv")))?;
        sd_trajectory(&synthesis.nowcasts, "mfs")?
            .write_csv(&out.join(format!("sd_mfs_lead{lead}.csv")))?;

        coefficient_trajectory(&synthesis.refits, run.panel.labels())?
            .write_csv(&out.join(format!("coefficients_lead{lead}.csv")))?;
        if run.panel.series_count() >= 2 {
            paired_r2_trajectory(&synthesis.refits)?
                .write_csv(&out.join(format!("dependency_lead{lead}.csv")))?;
        }

        let mut models = vec![ModelSummary {
            model: "mfs".into(),
            msne: mfs_msne.last(),
            lpdr_vs_mfs: 0.0,
            pct_msne_vs_mfs: 0.0,
        }];

        for model in &lead_run.baselines {
            let errors = squared_errors(&realized, &model.locations);
            let model_msne = msne(&errors, model.name.clone(), lead, test_start)?;
            model_msne.write_csv(&out.join(format!("msne_{}_lead{lead}.csv", model.name)))?;
            MetricTrajectory {
                values: errors.iter().map(|e| e * e).collect(),
                label: model.name.clone(),
                lead,
                start_quarter: test_start,
            }
            .write_csv(&out.join(format!("sq_error_{}_lead{lead}.csv", model.name)))?;
            let model_lpdr = lpdr(&model.logpdfs, &mfs_logpdfs, model.name.clone(), lead, test_start)?;
            model_lpdr.write_csv(&out.join(format!("lpdr_{}_lead{lead}.csv", model.name)))?;
            models.push(ModelSummary {
                model: model.name.clone(),
                msne: model_msne.last(),
                lpdr_vs_mfs: model_lpdr.last(),
                pct_msne_vs_mfs: pct_vs_reference(model_msne.last(), mfs_msne.last()),
            });
        }

        for m in &models {
            println!(
                "lead {lead}: {} final msne {:.6} lpdr {:+.3} pct {:+.2}",
                m.model, m.msne, m.lpdr_vs_mfs, m.pct_msne_vs_mfs
            );
        }
        summary.leads.push(LeadSummary { lead, models });
    }

    let summary_path = out.join("summary.json");
    let file = std::fs::File::create(&summary_path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &summary)
        .map_err(|e| MfsError::Validation(format!("cannot encode summary: {e}")))?;
    println!("summary -> {}", summary_path.display());
    Ok(())
}

fn write_nowcast_csv(
    synthesis: &SequentialOutput,
    realized: &[f64],
    path: &Path,
) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "quarter,mean,sd,logpdf,realized,error")?;
    for (n, &r) in synthesis.nowcasts.iter().zip(realized) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            n.period.quarter,
            n.mean,
            n.sd,
            n.log_pred_density.unwrap_or(f64::NAN),
            r,
            r - n.mean
        )?;
    }
    Ok(())
}

fn write_baseline_csv(
    model: &ModelSeries,
    test_start: usize,
    realized: &[f64],
    path: &Path,
) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "quarter,location,variance,logpdf_at_realized")?;
    for (i, _) in realized.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            test_start + i,
            model.locations[i],
            model.variances[i],
            model.logpdfs[i]
        )?;
    }
    Ok(())
}

/// Re-run the final test quarter's refit with its sequential seed and dump
/// the retained draws. The chain is identical to the one inside the
/// sequential pass because streams are keyed by quarter, not by position.
fn export_final_posterior(
    cfg: &ResolvedConfig,
    run: &PipelineRun,
    lead_run: &LeadComputation,
    path: &Path,
) -> Result<()> {
    let calib_start = *run.ranges.calibrate.start();
    let t = *run.ranges.test.end();
    let y: Vec<f64> = (calib_start..t).map(|q| run.panel.target_value(q)).collect::<Result<_>>()?;
    let densities: Vec<Vec<mfs_core::dlm::StudentT>> = lead_run
        .sheets
        .iter()
        .map(|s| s.window(calib_start, t - 1))
        .collect::<Result<_>>()?;
    let prior = synthesis_prior(cfg, run.panel.series_count())?;
    let config = GibbsConfig {
        burn_in: cfg.gibbs.burn_in,
        keep: cfg.gibbs.keep,
        thin: cfg.gibbs.thin,
        seed: substream_seed(cfg.seed, "gibbs", &[t as u64]),
    };
    let posterior = gibbs_fit(&y, &densities, &prior, &config)?;
    export_posterior_csv(&posterior, calib_start, path)
}

/// Compute and write in one call.
pub fn execute(cfg: &ResolvedConfig, stage: Stage) -> Result<()> {
    let run = compute(cfg, stage)?;
    write_artifacts(cfg, &run, stage)
}
