//! Mixed-frequency bookkeeping: the quarterly/monthly grid, panel ingestion,
//! regressor windows, sample splits, and a synthetic panel generator.
//!
//! The target is observed once per period ("quarter") and each indicator
//! `ratio` times per period ("months", `ratio = 3` throughout the shipped
//! configurations). Calendar dates appear only at the CSV boundary as grid
//! anchors; all internal indexing is integer-based with quarters numbered
//! from 1 and months numbered globally from 1, so that quarter `t` covers
//! months `(t - 1) * ratio + 1 ..= t * ratio`.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{MfsError, Result};
use crate::rng::substream;

/// A calendar month used as a grid anchor, never for arithmetic beyond
/// month-index offsets. Parsed from `YYYY-MM-DD` with the day pinned to 01.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonthStamp {
    pub year: i32,
    pub month: u32,
}

impl MonthStamp {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split('-').collect();
        let bad = || MfsError::Alignment(format!("date '{text}' is not of the form YYYY-MM-DD"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let year: i32 = parts[0].parse().map_err(|_| bad())?;
        let month: u32 = parts[1].parse().map_err(|_| bad())?;
        let day: u32 = parts[2].parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        if day != 1 {
            return Err(MfsError::Alignment(format!(
                "date '{text}' must anchor a period start (day 01)"
            )));
        }
        Ok(Self { year, month })
    }

    /// Months elapsed since an arbitrary fixed origin; differences are what
    /// matter.
    pub fn index(&self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn offset(&self, months: i64) -> Self {
        let idx = self.index() + months;
        Self {
            year: idx.div_euclid(12) as i32,
            month: (idx.rem_euclid(12) + 1) as u32,
        }
    }
}

impl fmt::Display for MonthStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-01", self.year, self.month)
    }
}

/// Position on the mixed grid: `quarter` is 1-based, `intra` counts months of
/// that quarter already observed (0 means none, i.e. a pure quarterly point).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PeriodIndex {
    pub quarter: usize,
    pub intra: usize,
}

impl PeriodIndex {
    pub fn quarterly(quarter: usize) -> Self {
        Self { quarter, intra: 0 }
    }
}

/// Monthly regressor window, most recent observation first.
#[derive(Debug, Clone, PartialEq)]
pub struct LagVector {
    pub values: Vec<f64>,
    /// Months of the target quarter that were observed when the window was
    /// formed.
    pub lead: usize,
}

/// An immutable, aligned mixed-frequency data set.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedFrequencyPanel {
    target: Vec<f64>,
    indicators: Vec<Vec<f64>>,
    labels: Vec<String>,
    ratio: usize,
    anchor: MonthStamp,
}

impl MixedFrequencyPanel {
    /// Assemble a panel from already-aligned vectors. `indicators[j]` holds
    /// global months `1..=len`; observations beyond `ratio * quarters(target)`
    /// are lead data for the next, not yet observed, quarter.
    pub fn from_parts(
        target: Vec<f64>,
        indicators: Vec<Vec<f64>>,
        labels: Vec<String>,
        ratio: usize,
        anchor: MonthStamp,
    ) -> Result<Self> {
        if ratio == 0 {
            return Err(MfsError::Validation("frequency ratio must be positive".into()));
        }
        if target.is_empty() {
            return Err(MfsError::Validation("target series is empty".into()));
        }
        if indicators.is_empty() {
            return Err(MfsError::Validation("panel needs at least one indicator".into()));
        }
        if labels.len() != indicators.len() {
            return Err(MfsError::Validation(format!(
                "{} labels for {} indicators",
                labels.len(),
                indicators.len()
            )));
        }
        for (label, series) in labels.iter().zip(&indicators) {
            if series.len() > target.len() * ratio + (ratio - 1) {
                return Err(MfsError::Alignment(format!(
                    "series '{label}' extends {} months past the last observable lead",
                    series.len() - target.len() * ratio - (ratio - 1)
                )));
            }
            if series.iter().any(|v| !v.is_finite()) || target.iter().any(|v| !v.is_finite()) {
                return Err(MfsError::Validation(format!(
                    "series '{label}' or target contains non-finite values"
                )));
            }
        }
        Ok(Self { target, indicators, labels, ratio, anchor })
    }

    /// Number of complete target quarters `T`.
    pub fn quarters(&self) -> usize {
        self.target.len()
    }

    /// Number of indicator series `J`.
    pub fn series_count(&self) -> usize {
        self.indicators.len()
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn anchor(&self) -> MonthStamp {
        self.anchor
    }

    /// Target value for 1-based quarter `t`.
    pub fn target_value(&self, quarter: usize) -> Result<f64> {
        self.target
            .get(quarter.wrapping_sub(1))
            .copied()
            .ok_or_else(|| MfsError::Boundary(format!("quarter {quarter} outside target range")))
    }

    /// Target values for quarters `1..=T` in order.
    pub fn target_series(&self) -> &[f64] {
        &self.target
    }

    /// Indicator value for 1-based global month `m` of series `j`.
    pub fn indicator_value(&self, series: usize, month: usize) -> Result<f64> {
        let values = self.indicators.get(series).ok_or_else(|| {
            MfsError::Validation(format!("series index {series} out of range"))
        })?;
        values.get(month.wrapping_sub(1)).copied().ok_or_else(|| {
            MfsError::Boundary(format!(
                "month {month} outside observed range of series '{}'",
                self.labels[series]
            ))
        })
    }

    /// Months observed for series `j` (may exceed `ratio * quarters()` by the
    /// available lead, or fall short if the series ends early).
    pub fn observed_months(&self, series: usize) -> usize {
        self.indicators[series].len()
    }

    /// Lead months available beyond the last complete target quarter.
    pub fn lead_months(&self, series: usize) -> usize {
        self.indicators[series]
            .len()
            .saturating_sub(self.ratio * self.quarters())
    }

    /// Write the panel back out as `target.csv` plus one `<label>.csv` per
    /// indicator, using the anchor to reconstruct dates. Values round-trip
    /// exactly because the shortest-representation float formatter is used.
    pub fn write_csv_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut out = String::from("date,value\n");
        for (i, v) in self.target.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.anchor.offset((i * self.ratio) as i64), v));
        }
        std::fs::File::create(dir.join("target.csv"))?.write_all(out.as_bytes())?;
        for (label, series) in self.labels.iter().zip(&self.indicators) {
            let mut out = String::from("date,value\n");
            for (i, v) in series.iter().enumerate() {
                out.push_str(&format!("{},{}\n", self.anchor.offset(i as i64), v));
            }
            std::fs::File::create(dir.join(format!("{label}.csv")))?.write_all(out.as_bytes())?;
        }
        Ok(())
    }
}

fn read_series(path: &Path, label: &str) -> Result<Vec<(MonthStamp, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    {
        let headers = reader.headers()?;
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["date", "value"] {
            return Err(MfsError::Alignment(format!(
                "series '{label}': expected header 'date,value', found '{}'",
                cols.join(",")
            )));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(MfsError::Alignment(format!(
                "series '{label}': row with {} fields",
                record.len()
            )));
        }
        let stamp = MonthStamp::parse(&record[0])?;
        let value: f64 = record[1].parse().map_err(|_| {
            MfsError::Validation(format!(
                "series '{label}': unparseable value '{}' at {stamp}",
                &record[1]
            ))
        })?;
        rows.push((stamp, value));
    }
    if rows.is_empty() {
        return Err(MfsError::Validation(format!("series '{label}' is empty")));
    }
    Ok(rows)
}

/// Check consecutive stamps advance by exactly `step` months, classifying
/// violations as gaps (an integer number of missing steps) or ordering /
/// alignment faults.
fn check_grid(rows: &[(MonthStamp, f64)], step: i64, label: &str) -> Result<()> {
    for pair in rows.windows(2) {
        let diff = pair[1].0.index() - pair[0].0.index();
        if diff <= 0 {
            return Err(MfsError::Ordering {
                series: label.to_string(),
                date: pair[1].0.to_string(),
            });
        }
        if diff == step {
            continue;
        }
        if diff % step == 0 {
            return Err(MfsError::Gap {
                series: label.to_string(),
                date: pair[0].0.offset(step).to_string(),
            });
        }
        return Err(MfsError::Alignment(format!(
            "series '{label}': stride of {diff} months at {} does not match the declared grid",
            pair[1].0
        )));
    }
    Ok(())
}

/// Load and align a panel from CSV files (`date,value` with ISO dates).
///
/// The target advances `ratio` months per row; indicators advance one month
/// per row and must start on the same month as the target. Indicator
/// observations past the last complete quarter are retained as lead data.
pub fn load_panel(
    target_path: &Path,
    indicator_paths: &[impl AsRef<Path>],
    labels: &[String],
    ratio: usize,
) -> Result<MixedFrequencyPanel> {
    if ratio == 0 {
        return Err(MfsError::Validation("frequency ratio must be positive".into()));
    }
    if indicator_paths.len() != labels.len() {
        return Err(MfsError::Validation(format!(
            "{} indicator paths for {} labels",
            indicator_paths.len(),
            labels.len()
        )));
    }
    let target_rows = read_series(target_path, "target")?;
    check_grid(&target_rows, ratio as i64, "target")?;
    let anchor = target_rows[0].0;
    let target: Vec<f64> = target_rows.iter().map(|&(_, v)| v).collect();

    let mut indicators = Vec::with_capacity(indicator_paths.len());
    for (path, label) in indicator_paths.iter().zip(labels) {
        let rows = read_series(path.as_ref(), label)?;
        check_grid(&rows, 1, label)?;
        if rows[0].0 != anchor {
            return Err(MfsError::Alignment(format!(
                "series '{label}' starts at {} but the target grid starts at {anchor}",
                rows[0].0
            )));
        }
        indicators.push(rows.into_iter().map(|(_, v)| v).collect());
    }
    MixedFrequencyPanel::from_parts(target, indicators, labels.to_vec(), ratio, anchor)
}

/// Monthly regressor window for nowcasting quarter `t` of series `j` with
/// `lead` months of that quarter observed: the `p` most recent available
/// observations, newest first. The newest available month is global month
/// `(t - 1) * ratio + lead`.
pub fn build_regressor_vector(
    panel: &MixedFrequencyPanel,
    series: usize,
    quarter: usize,
    lead: usize,
    p: usize,
) -> Result<LagVector> {
    if series >= panel.series_count() {
        return Err(MfsError::Validation(format!(
            "series index {series} out of range (panel has {})",
            panel.series_count()
        )));
    }
    if lead >= panel.ratio() {
        return Err(MfsError::Validation(format!(
            "lead {lead} must be below the frequency ratio {}",
            panel.ratio()
        )));
    }
    if quarter == 0 || p == 0 {
        return Err(MfsError::Validation("quarter and window length must be positive".into()));
    }
    let newest = (quarter - 1) * panel.ratio() + lead;
    if newest < p {
        return Err(MfsError::Boundary(format!(
            "quarter {quarter} with lead {lead} leaves only {newest} months before the window"
        )));
    }
    let mut values = Vec::with_capacity(p);
    for i in 0..p {
        values.push(panel.indicator_value(series, newest - i)?);
    }
    Ok(LagVector { values, lead })
}

/// Boundaries of the train / calibrate / test partition (inclusive ends).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodSplit {
    pub train_end: PeriodIndex,
    pub calib_end: PeriodIndex,
    pub test_end: PeriodIndex,
}

/// Quarter ranges of the three partitions, each inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: std::ops::RangeInclusive<usize>,
    pub calibrate: std::ops::RangeInclusive<usize>,
    pub test: std::ops::RangeInclusive<usize>,
}

/// Partition the panel's quarters. Boundaries must be strictly increasing and
/// the test end must not overrun the observed target.
pub fn split_periods(panel: &MixedFrequencyPanel, split: PeriodSplit) -> Result<SplitRanges> {
    let (a, b, c) = (split.train_end, split.calib_end, split.test_end);
    if !(a < b && b < c) {
        return Err(MfsError::Validation(format!(
            "split boundaries must increase strictly: train_end {a:?}, calib_end {b:?}, test_end {c:?}"
        )));
    }
    if a.quarter == 0 {
        return Err(MfsError::Validation("train period must contain at least one quarter".into()));
    }
    if c.quarter > panel.quarters() {
        return Err(MfsError::Boundary(format!(
            "test_end quarter {} exceeds the {} observed quarters",
            c.quarter,
            panel.quarters()
        )));
    }
    Ok(SplitRanges {
        train: 1..=a.quarter,
        calibrate: a.quarter + 1..=b.quarter,
        test: b.quarter + 1..=c.quarter,
    })
}

/// Coefficient paths for the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadingPath {
    /// The same loadings at every quarter.
    Constant(Vec<f64>),
    /// `before` holds up to (exclusive) quarter `at`, `after` from `at` on.
    Switch { before: Vec<f64>, after: Vec<f64>, at: usize },
}

impl LoadingPath {
    fn series(&self) -> usize {
        match self {
            LoadingPath::Constant(w) => w.len(),
            LoadingPath::Switch { before, .. } => before.len(),
        }
    }

    fn at(&self, quarter: usize) -> &[f64] {
        match self {
            LoadingPath::Constant(w) => w,
            LoadingPath::Switch { before, after, at } => {
                if quarter < *at {
                    before
                } else {
                    after
                }
            }
        }
    }
}

/// Configuration of the synthetic mixed-frequency generator.
///
/// Indicators share a persistent monthly factor plus idiosyncratic
/// autoregressive noise:
///
/// ```text
/// f_m     = factor_persistence * f_{m-1} + factor_scale   * eta_m
/// u_{j,m} = idio_persistence   * u_{j,m-1} + idio_scale   * xi_{j,m}
/// z_{j,m} = f_m + u_{j,m}
/// ```
///
/// The target is a loading-weighted combination of the quarter-aligned
/// indicator values (the within-quarter means `a_{t,j}`):
///
/// ```text
/// y_t = sum_j w_{t,j} a_{t,j} + target_noise * eps_t
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub quarters: usize,
    pub ratio: usize,
    pub loadings: LoadingPath,
    pub factor_persistence: f64,
    pub idio_persistence: f64,
    pub factor_scale: f64,
    pub idio_scale: f64,
    pub target_noise: f64,
    /// Initial level of the common factor; a non-zero value keeps the
    /// noise-free configuration non-trivial.
    pub factor_init: f64,
}

/// Everything needed to audit a synthetic panel against its generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Quarter-aligned indicator values `a_{t,j}`, indexed `[t - 1][j]`.
    pub design: Vec<Vec<f64>>,
    /// Loadings `w_{t,j}` actually applied, indexed `[t - 1][j]`.
    pub loadings: Vec<Vec<f64>>,
    /// Realized target noise `eps_t * target_noise`, indexed `[t - 1]`.
    pub noise: Vec<f64>,
    /// `target_noise^2`.
    pub innovation_variance: f64,
}

/// Draw a synthetic panel plus its ground truth, deterministically in `seed`.
pub fn simulate_panel(
    config: &GeneratorConfig,
    seed: u64,
) -> Result<(MixedFrequencyPanel, GroundTruth)> {
    let j = config.loadings.series();
    if j == 0 {
        return Err(MfsError::Validation("generator needs at least one series".into()));
    }
    if let LoadingPath::Switch { before, after, at } = &config.loadings {
        if after.len() != before.len() {
            return Err(MfsError::Validation(
                "loading switch must keep the number of series fixed".into(),
            ));
        }
        if *at == 0 || *at > config.quarters {
            return Err(MfsError::Validation(format!(
                "loading switch at quarter {at} is outside 1..={}",
                config.quarters
            )));
        }
    }
    if config.quarters < 4 {
        return Err(MfsError::Validation("generator needs at least four quarters".into()));
    }
    if config.ratio == 0 {
        return Err(MfsError::Validation("frequency ratio must be positive".into()));
    }
    for (name, value) in [
        ("factor_scale", config.factor_scale),
        ("idio_scale", config.idio_scale),
        ("target_noise", config.target_noise),
    ] {
        if value < 0.0 {
            return Err(MfsError::Validation(format!("{name} must be non-negative, got {value}")));
        }
    }
    for (name, value) in [
        ("factor_persistence", config.factor_persistence),
        ("idio_persistence", config.idio_persistence),
    ] {
        if !(0.0..1.0).contains(&value) {
            return Err(MfsError::Validation(format!("{name} must lie in [0, 1), got {value}")));
        }
    }

    let mut rng = substream(seed, "simulate-panel", &[]);
    let n = config.ratio;
    let months = n * config.quarters + (n - 1);

    let mut factor = vec![0.0; months];
    let mut level = config.factor_init;
    for f in factor.iter_mut() {
        let eta: f64 = StandardNormal.sample(&mut rng);
        level = config.factor_persistence * level + config.factor_scale * eta;
        *f = level;
    }

    let mut indicators = vec![vec![0.0; months]; j];
    for series in indicators.iter_mut() {
        let mut u = 0.0;
        for (m, z) in series.iter_mut().enumerate() {
            let xi: f64 = StandardNormal.sample(&mut rng);
            u = config.idio_persistence * u + config.idio_scale * xi;
            *z = factor[m] + u;
        }
    }

    let mut design = Vec::with_capacity(config.quarters);
    let mut loadings = Vec::with_capacity(config.quarters);
    let mut noise = Vec::with_capacity(config.quarters);
    let mut target = Vec::with_capacity(config.quarters);
    for t in 1..=config.quarters {
        let row: Vec<f64> = (0..j)
            .map(|series| {
                let sum: f64 = ((t - 1) * n..t * n).map(|m| indicators[series][m]).sum();
                sum / n as f64
            })
            .collect();
        let w = config.loadings.at(t).to_vec();
        let eps: f64 = StandardNormal.sample(&mut rng);
        let e = config.target_noise * eps;
        let y = row.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() + e;
        design.push(row);
        loadings.push(w);
        noise.push(e);
        target.push(y);
    }

    let labels = (1..=j).map(|k| format!("sim{k}")).collect();
    let anchor = MonthStamp { year: 1970, month: 1 };
    let panel = MixedFrequencyPanel::from_parts(target, indicators, labels, n, anchor)?;
    let truth = GroundTruth {
        design,
        loadings,
        noise,
        innovation_variance: config.target_noise * config.target_noise,
    };
    Ok((panel, truth))
}
