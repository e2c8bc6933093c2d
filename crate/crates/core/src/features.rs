//! Explanatory variables and design matrices.
//!
//! Each candidate variable is a [`FeatureSpec`]: a base source (a weather
//! field, the wind direction components, the first principal component of
//! precipitation/humidity/dew point/temperature, or a calendar variable)
//! optionally lagged by 1-3 days or averaged over a trailing 7/14-day window.
//! Lags and windows are measured in calendar days, so gaps in the daily
//! series propagate as missing values.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DailySeries, Field};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "WS")]
    Ws,
    #[serde(rename = "WDx")]
    WdX,
    #[serde(rename = "WDy")]
    WdY,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "RH")]
    Rh,
    #[serde(rename = "DP")]
    Dp,
    #[serde(rename = "P")]
    P,
    #[serde(rename = "PCA")]
    Pca,
    /// Day of year, 1-366.
    #[serde(rename = "DY")]
    Dy,
    /// Month, 1-12.
    #[serde(rename = "M")]
    Month,
    /// Weekday, Monday = 0.
    #[serde(rename = "D")]
    Weekday,
}

impl Source {
    pub const ALL: [Source; 11] = [
        Source::Ws,
        Source::WdX,
        Source::WdY,
        Source::T,
        Source::Rh,
        Source::Dp,
        Source::P,
        Source::Pca,
        Source::Dy,
        Source::Month,
        Source::Weekday,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Source::Ws => "WS",
            Source::WdX => "WDx",
            Source::WdY => "WDy",
            Source::T => "T",
            Source::Rh => "RH",
            Source::Dp => "DP",
            Source::P => "P",
            Source::Pca => "PCA",
            Source::Dy => "DY",
            Source::Month => "M",
            Source::Weekday => "D",
        }
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, Source::Month | Source::Weekday)
    }

    pub fn is_calendar(self) -> bool {
        matches!(self, Source::Dy | Source::Month | Source::Weekday)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Smooth,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub source: Source,
    #[serde(default)]
    pub lag_days: u8,
    #[serde(default)]
    pub rolling_window_days: u8,
}

impl FeatureSpec {
    pub const fn new(source: Source) -> Self {
        FeatureSpec {
            source,
            lag_days: 0,
            rolling_window_days: 0,
        }
    }

    pub fn lagged(source: Source, lag_days: u8) -> Result<Self> {
        let spec = FeatureSpec {
            lag_days,
            ..FeatureSpec::new(source)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn rolling(source: Source, window_days: u8) -> Result<Self> {
        let spec = FeatureSpec {
            rolling_window_days: window_days,
            ..FeatureSpec::new(source)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn weekday() -> Self {
        FeatureSpec::new(Source::Weekday)
    }

    pub fn kind(&self) -> FeatureKind {
        if self.source.is_categorical() {
            FeatureKind::Categorical
        } else {
            FeatureKind::Smooth
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("feature {self}: {msg}")));
        if self.lag_days > 3 {
            return bad("lag must be 0-3 days");
        }
        if !matches!(self.rolling_window_days, 0 | 7 | 14) {
            return bad("rolling window must be 0, 7 or 14 days");
        }
        if self.rolling_window_days > 0 && !matches!(self.source, Source::Ws | Source::Pca) {
            return bad("rolling means apply only to WS and PCA");
        }
        if self.source.is_calendar() && (self.lag_days > 0 || self.rolling_window_days > 0) {
            return bad("calendar variables take no lag or window");
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.source.label())?;
        if self.lag_days > 0 {
            write!(f, "_lag{}", self.lag_days)?;
        }
        if self.rolling_window_days > 0 {
            write!(f, "_roll{}", self.rolling_window_days)?;
        }
        Ok(())
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split('_');
        let base = parts.next().unwrap_or("");
        let source = Source::ALL
            .into_iter()
            .find(|src| src.label().eq_ignore_ascii_case(base))
            .ok_or_else(|| Error::InvalidInput(format!("unknown feature `{s}`")))?;
        let mut spec = FeatureSpec::new(source);
        for part in parts {
            let parsed = if let Some(k) = part.strip_prefix("lag") {
                k.parse().map(|k| spec.lag_days = k)
            } else if let Some(w) = part.strip_prefix("roll") {
                w.parse().map(|w| spec.rolling_window_days = w)
            } else {
                return Err(Error::InvalidInput(format!("unknown feature suffix in `{s}`")));
            };
            parsed.map_err(|_| Error::InvalidInput(format!("bad number in `{s}`")))?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// The default candidate pool: every continuous weather variable with lags
/// 0-3, 7/14-day rolling means of WS and PCA, day of year, month and weekday.
pub fn default_candidates() -> Vec<FeatureSpec> {
    let continuous = [
        Source::Ws,
        Source::WdX,
        Source::WdY,
        Source::T,
        Source::Rh,
        Source::Dp,
        Source::P,
        Source::Pca,
    ];
    let mut pool = Vec::new();
    for src in continuous {
        for lag in 0..=3 {
            pool.push(FeatureSpec {
                lag_days: lag,
                ..FeatureSpec::new(src)
            });
        }
    }
    for src in [Source::Ws, Source::Pca] {
        for w in [7, 14] {
            pool.push(FeatureSpec {
                rolling_window_days: w,
                ..FeatureSpec::new(src)
            });
        }
    }
    pool.push(FeatureSpec::new(Source::Dy));
    pool.push(FeatureSpec::new(Source::Month));
    pool.push(FeatureSpec::weekday());
    pool
}

/// Converts a wind direction in degrees to its (sin, cos) components.
pub fn wind_to_cartesian(wd_degrees: f64) -> (f64, f64) {
    let r = wd_degrees / 360.0 * 2.0 * std::f64::consts::PI;
    (r.sin(), r.cos())
}

/// First principal component of standardized (P, RH, DP, T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: [f64; 4],
    pub scales: [f64; 4],
    pub loading: [f64; 4],
    pub eigenvalue: f64,
    pub explained_variance_ratio: f64,
}

pub const PCA_INPUTS: [Field; 4] = [Field::P, Field::Rh, Field::Dp, Field::T];

/// Correlation matrix of the rows (sample, n - 1 denominator) together with
/// the column means and standard deviations.
/// Column means, column standard deviations and the correlation matrix.
pub type Correlation = ([f64; 4], [f64; 4], [[f64; 4]; 4]);

pub fn correlation_matrix(rows: &[[f64; 4]]) -> Result<Correlation> {
    let n = rows.len();
    if n < 5 {
        return Err(Error::InsufficientData { needed: 5, got: n });
    }
    let nf = n as f64;
    let mut means = [0.0; 4];
    for r in rows {
        for j in 0..4 {
            means[j] += r[j];
        }
    }
    means.iter_mut().for_each(|m| *m /= nf);
    let mut scales = [0.0; 4];
    for r in rows {
        for j in 0..4 {
            scales[j] += (r[j] - means[j]).powi(2);
        }
    }
    for j in 0..4 {
        scales[j] = (scales[j] / (nf - 1.0)).sqrt();
        let tol = 1e-12 * means[j].abs().max(1.0);
        if !(scales[j] > tol) {
            return Err(Error::DegenerateColumn(PCA_INPUTS[j].label().to_string()));
        }
    }
    let mut corr = [[0.0; 4]; 4];
    for r in rows {
        let z: Vec<f64> = (0..4).map(|j| (r[j] - means[j]) / scales[j]).collect();
        for a in 0..4 {
            for b in 0..4 {
                corr[a][b] += z[a] * z[b];
            }
        }
    }
    for row in corr.iter_mut() {
        row.iter_mut().for_each(|v| *v /= nf - 1.0);
    }
    Ok((means, scales, corr))
}

/// Fits the first principal component of the correlation matrix of
/// (P, RH, DP, T) rows. The loading is sign-fixed so its T entry is
/// non-negative.
pub fn fit_pca(rows: &[[f64; 4]]) -> Result<PcaModel> {
    let (means, scales, corr) = correlation_matrix(rows)?;
    let m = DMatrix::from_fn(4, 4, |i, j| corr[i][j]);
    let eig = SymmetricEigen::new(m);
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    let v = eig.eigenvectors.column(top);
    let norm = v.norm();
    let mut loading = [v[0] / norm, v[1] / norm, v[2] / norm, v[3] / norm];
    let pivot = if loading[3].abs() > 1e-12 {
        loading[3]
    } else {
        loading.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0)
    };
    if pivot < 0.0 {
        loading.iter_mut().for_each(|x| *x = -*x);
    }
    let eigenvalue = eig.eigenvalues[top];
    let trace: f64 = (0..4).map(|i| corr[i][i]).sum();
    Ok(PcaModel {
        means,
        scales,
        loading,
        eigenvalue,
        explained_variance_ratio: (eigenvalue / trace).clamp(0.0, 1.0),
    })
}

impl PcaModel {
    pub fn score(&self, row: &[f64; 4]) -> f64 {
        (0..4)
            .map(|j| self.loading[j] * (row[j] - self.means[j]) / self.scales[j])
            .sum()
    }
}

pub fn apply_pca(model: &PcaModel, row: &[f64; 4]) -> f64 {
    model.score(row)
}

/// Shifts a contiguous daily series by `k` days; the first `k` become missing.
pub fn lag(series: &[Option<f64>], k: usize) -> Vec<Option<f64>> {
    (0..series.len())
        .map(|i| if i >= k { series[i - k] } else { None })
        .collect()
}

/// Trailing mean over `[d - window + 1, d]` of a contiguous daily series,
/// missing when fewer than half the window's days are present.
pub fn rolling_mean(series: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let present: Vec<f64> = series[lo..=i].iter().flatten().copied().collect();
            if window > 0 && 2 * present.len() >= window && !present.is_empty() {
                Some(present.iter().sum::<f64>() / present.len() as f64)
            } else {
                None
            }
        })
        .collect()
}

/// Feature specs plus any fitted transforms they depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePlan {
    pub specs: Vec<FeatureSpec>,
    pub pca: Option<PcaModel>,
}

impl FeaturePlan {
    /// Validates the specs and fits the PCA transform on `training` when
    /// any spec needs it.
    pub fn fit(training: &DailySeries, specs: &[FeatureSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidInput("feature set is empty".into()));
        }
        let mut unique = Vec::new();
        for s in specs {
            s.validate()?;
            if !unique.contains(s) {
                unique.push(*s);
            }
        }
        let pca = if unique.iter().any(|s| s.source == Source::Pca) {
            let rows: Vec<[f64; 4]> = training
                .rows
                .iter()
                .filter_map(|r| Some([r.get(Field::P)?, r.get(Field::Rh)?, r.get(Field::Dp)?, r.get(Field::T)?]))
                .collect();
            Some(fit_pca(&rows)?)
        } else {
            None
        };
        Ok(FeaturePlan { specs: unique, pca })
    }

    /// Same transforms, different feature set.
    pub fn with_specs(&self, specs: &[FeatureSpec]) -> Result<Self> {
        if specs.iter().any(|s| s.source == Source::Pca) && self.pca.is_none() {
            return Err(Error::MissingFeature("PCA".into()));
        }
        Ok(FeaturePlan {
            specs: specs.to_vec(),
            pca: self.pca.clone(),
        })
    }
}

/// Feature values over a contiguous run of calendar days, possibly missing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub station_id: String,
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<(FeatureSpec, Vec<Option<f64>>)>,
}

impl FeatureFrame {
    pub fn column(&self, spec: &FeatureSpec) -> Option<&[Option<f64>]> {
        self.columns.iter().find(|(s, _)| s == spec).map(|(_, v)| v.as_slice())
    }
}

fn base_values(
    daily: &DailySeries,
    dates: &[NaiveDate],
    source: Source,
    pca: Option<&PcaModel>,
) -> Result<Vec<Option<f64>>> {
    let lookup = |date: NaiveDate| daily.row(date);
    let out = dates
        .iter()
        .map(|&d| match source {
            Source::Dy => Some(d.ordinal() as f64),
            Source::Month => Some(d.month() as f64),
            Source::Weekday => Some(d.weekday().num_days_from_monday() as f64),
            Source::Ws => lookup(d).and_then(|r| r.get(Field::Ws)),
            Source::T => lookup(d).and_then(|r| r.get(Field::T)),
            Source::Rh => lookup(d).and_then(|r| r.get(Field::Rh)),
            Source::Dp => lookup(d).and_then(|r| r.get(Field::Dp)),
            Source::P => lookup(d).and_then(|r| r.get(Field::P)),
            Source::WdX => lookup(d).and_then(|r| r.get(Field::Wd)).map(|w| wind_to_cartesian(w).0),
            Source::WdY => lookup(d).and_then(|r| r.get(Field::Wd)).map(|w| wind_to_cartesian(w).1),
            Source::Pca => lookup(d).and_then(|r| {
                let row = [r.get(Field::P)?, r.get(Field::Rh)?, r.get(Field::Dp)?, r.get(Field::T)?];
                pca.map(|m| m.score(&row))
            }),
        })
        .collect();
    if source == Source::Pca && pca.is_none() {
        return Err(Error::MissingFeature("PCA transform not fitted".into()));
    }
    Ok(out)
}

/// Evaluates every spec of `plan` over the contiguous calendar span of `daily`.
pub fn build_frame(daily: &DailySeries, plan: &FeaturePlan) -> Result<FeatureFrame> {
    let dates: Vec<NaiveDate> = match (daily.first_date(), daily.last_date()) {
        (Some(a), Some(b)) => (0..=(b - a).num_days()).map(|i| a + Duration::days(i)).collect(),
        _ => Vec::new(),
    };
    let mut bases: BTreeMap<Source, Vec<Option<f64>>> = BTreeMap::new();
    let mut columns = Vec::with_capacity(plan.specs.len());
    for spec in &plan.specs {
        spec.validate()?;
        if let std::collections::btree_map::Entry::Vacant(e) = bases.entry(spec.source) {
            e.insert(base_values(daily, &dates, spec.source, plan.pca.as_ref())?);
        }
        let base = &bases[&spec.source];
        let mut values = if spec.rolling_window_days > 0 {
            rolling_mean(base, spec.rolling_window_days as usize)
        } else {
            base.clone()
        };
        if spec.lag_days > 0 {
            values = lag(&values, spec.lag_days as usize);
        }
        columns.push((*spec, values));
    }
    Ok(FeatureFrame {
        station_id: daily.station_id.clone(),
        dates,
        columns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub spec: FeatureSpec,
    pub values: Vec<f64>,
}

/// Fully populated model rows: log response plus feature values. Categorical
/// columns hold the level index (month 1-12, weekday 0-6).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub station_id: String,
    pub target: Field,
    pub dates: Vec<NaiveDate>,
    pub response: Vec<f64>,
    pub columns: Vec<DesignColumn>,
    /// Dropped row counts keyed by reason.
    pub dropped: BTreeMap<String, usize>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn column(&self, spec: &FeatureSpec) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| &c.spec == spec)
            .map(|c| c.values.as_slice())
    }

    pub fn specs(&self) -> Vec<FeatureSpec> {
        self.columns.iter().map(|c| c.spec).collect()
    }

    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    /// Rows whose index satisfies `keep`.
    pub fn filter_rows(&self, keep: impl Fn(usize, NaiveDate) -> bool) -> DesignMatrix {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(i, self.dates[i])).collect();
        DesignMatrix {
            station_id: self.station_id.clone(),
            target: self.target,
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            response: idx.iter().map(|&i| self.response[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| DesignColumn {
                    spec: c.spec,
                    values: idx.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
            dropped: self.dropped.clone(),
        }
    }

    pub fn slice(&self, start: NaiveDate, end: NaiveDate) -> DesignMatrix {
        self.filter_rows(|_, d| d >= start && d <= end)
    }

    /// Debug CSV: `date`, one column per feature, then `response`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().map(|c| c.spec.name()));
        header.push("response".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.dates[i].to_string()];
            rec.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            rec.push(self.response[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const DROP_MISSING_RESPONSE: &str = "missing response";
pub const DROP_NONPOSITIVE_RESPONSE: &str = "nonpositive response";

/// Assembles the design for `target` over the rows of `daily`. Rows with a
/// missing or nonpositive target, or any missing feature, are dropped and
/// counted by reason.
pub fn build_design(daily: &DailySeries, target: Field, plan: &FeaturePlan) -> Result<DesignMatrix> {
    if !target.is_pollutant() {
        return Err(Error::InvalidInput(format!("{target} is not a pollutant")));
    }
    let frame = build_frame(daily, plan)?;
    let first = match daily.first_date() {
        Some(d) => d,
        None => return Err(Error::EmptyDesign),
    };
    let mut dates = Vec::new();
    let mut response = Vec::new();
    let mut columns: Vec<DesignColumn> = frame
        .columns
        .iter()
        .map(|(spec, _)| DesignColumn {
            spec: *spec,
            values: Vec::new(),
        })
        .collect();
    let mut dropped: BTreeMap<String, usize> = BTreeMap::new();
    for row in &daily.rows {
        let i = (row.date - first).num_days() as usize;
        let y = match row.get(target) {
            None => {
                *dropped.entry(DROP_MISSING_RESPONSE.into()).or_default() += 1;
                continue;
            }
            Some(y) if y <= 0.0 => {
                *dropped.entry(DROP_NONPOSITIVE_RESPONSE.into()).or_default() += 1;
                continue;
            }
            Some(y) => y,
        };
        if let Some((spec, _)) = frame.columns.iter().find(|(_, v)| v[i].is_none()) {
            *dropped.entry(format!("missing {spec}")).or_default() += 1;
            continue;
        }
        dates.push(row.date);
        response.push(y.ln());
        for (col, (_, v)) in columns.iter_mut().zip(&frame.columns) {
            col.values.push(v[i].unwrap());
        }
    }
    if dates.is_empty() {
        return Err(Error::EmptyDesign);
    }
    Ok(DesignMatrix {
        station_id: daily.station_id.clone(),
        target,
        dates,
        response,
        columns,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DailyRow;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 1, 1).unwrap() + Duration::days(i)
    }

    fn series_with(n: i64, f: impl Fn(i64, &mut DailyRow)) -> DailySeries {
        let rows = (0..n)
            .map(|i| {
                let mut r = DailyRow::empty(day(i));
                f(i, &mut r);
                r
            })
            .collect();
        DailySeries::new("S", rows)
    }

    #[test]
    fn wind_components() {
        let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12;
        assert!(close(wind_to_cartesian(0.0), (0.0, 1.0)));
        assert!(close(wind_to_cartesian(90.0), (1.0, 0.0)));
        assert!(close(wind_to_cartesian(180.0), (0.0, -1.0)));
    }

    #[test]
    fn pca_two_equal_blocks() {
        // columns (a, a, b, b) with a, b uncorrelated and equal variance
        let a = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let rows: Vec<[f64; 4]> = (0..8).map(|i| [a[i], a[i], b[i], b[i]]).collect();
        let m = fit_pca(&rows).unwrap();
        assert!((m.explained_variance_ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pca_identical_columns_is_rank_one() {
        let rows: Vec<[f64; 4]> = (0..10).map(|i| [i as f64; 4]).collect();
        let m = fit_pca(&rows).unwrap();
        assert!((m.explained_variance_ratio - 1.0).abs() < 1e-12);
        let norm: f64 = m.loading.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-10);
        assert!(m.loading[3] >= 0.0);
    }

    #[test]
    fn pca_rejects_constant_column_and_short_input() {
        let rows: Vec<[f64; 4]> = (0..10).map(|i| [i as f64, 1.0, -(i as f64), 2.0 * i as f64]).collect();
        assert!(matches!(fit_pca(&rows), Err(Error::DegenerateColumn(c)) if c == "RH"));
        assert!(matches!(fit_pca(&rows[..4]), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn pca_scores_center_and_scale() {
        let rows: Vec<[f64; 4]> = (0..50)
            .map(|i| {
                let x = i as f64;
                [
                    (x * 0.7).sin(),
                    50.0 + (x * 0.3).cos() * 10.0,
                    x * 0.1,
                    (x * 0.2).sin() * 5.0 + x * 0.05,
                ]
            })
            .collect();
        let m = fit_pca(&rows).unwrap();
        assert!(apply_pca(&m, &m.means).abs() < 1e-15);
        let scores: Vec<f64> = rows.iter().map(|r| m.score(r)).collect();
        let mean = scores.iter().sum::<f64>() / 50.0;
        assert!(mean.abs() < 1e-10);
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 49.0;
        assert!((var - m.eigenvalue).abs() < 1e-8);

        let unit = PcaModel {
            scales: [1.0; 4],
            ..m.clone()
        };
        let mut step = unit.means;
        step[3] += 1.0;
        assert!((unit.score(&step) - unit.loading[3]).abs() < 1e-12);
    }

    #[test]
    fn lag_shifts() {
        let s = [Some(1.0), Some(2.0), Some(3.0)];
        assert_eq!(lag(&s, 1), vec![None, Some(1.0), Some(2.0)]);
        assert_eq!(lag(&s, 3), vec![None, None, None]);
        assert_eq!(lag(&lag(&s, 1), 1), lag(&s, 2));
    }

    #[test]
    fn rolling_rules() {
        let c = vec![Some(2.5); 20];
        assert!(rolling_mean(&c, 7).iter().flatten().all(|&v| v == 2.5));
        let s: Vec<Option<f64>> = (1..=7).map(|v| Some(v as f64)).collect();
        assert_eq!(rolling_mean(&s, 7)[6], Some(4.0));
        let sparse = vec![Some(1.0), None, Some(1.0), None, None, Some(1.0), None];
        assert_eq!(rolling_mean(&sparse, 7)[6], None);
        // four of seven is enough
        let four = vec![Some(1.0), None, Some(1.0), None, Some(1.0), Some(1.0), None];
        assert_eq!(rolling_mean(&four, 7)[6], Some(1.0));
    }

    #[test]
    fn spec_names_round_trip() {
        for spec in default_candidates() {
            assert_eq!(spec.name().parse::<FeatureSpec>().unwrap(), spec);
        }
        assert!("T_roll7".parse::<FeatureSpec>().is_err());
        assert!("WS_lag4".parse::<FeatureSpec>().is_err());
        assert!("D_lag1".parse::<FeatureSpec>().is_err());
        assert_eq!(default_candidates().len(), 39);
    }

    #[test]
    fn nonpositive_response_dropped() {
        let s = series_with(10, |i, r| {
            r.set(Field::No2, Some(if i == 3 { 0.0 } else { 5.0 }));
        });
        let plan = FeaturePlan::fit(&s, &[FeatureSpec::weekday()]).unwrap();
        let d = build_design(&s, Field::No2, &plan).unwrap();
        assert_eq!(d.n_rows(), 9);
        assert_eq!(d.dropped[DROP_NONPOSITIVE_RESPONSE], 1);
    }

    #[test]
    fn lag_delays_first_row() {
        let s = series_with(10, |i, r| {
            r.set(Field::No2, Some(5.0));
            r.set(Field::T, Some(i as f64));
        });
        let plan = FeaturePlan::fit(&s, &[FeatureSpec::lagged(Source::T, 1).unwrap()]).unwrap();
        let d = build_design(&s, Field::No2, &plan).unwrap();
        assert_eq!(d.dates[0], day(1));
        assert_eq!(d.column(&plan.specs[0]).unwrap()[0], 0.0);
        assert_eq!(d.dropped["missing T_lag1"], 1);
    }

    #[test]
    fn constant_target_weekday_design() {
        let s = series_with(30, |_, r| r.set(Field::No2, Some(10.0)));
        let plan = FeaturePlan::fit(&s, &[FeatureSpec::weekday()]).unwrap();
        let d = build_design(&s, Field::No2, &plan).unwrap();
        assert_eq!(d.n_rows(), 30);
        assert!(d.response.iter().all(|&y| y == 10f64.ln()));
        // 2019-01-01 was a Tuesday
        assert_eq!(d.column(&FeatureSpec::weekday()).unwrap()[0], 1.0);
    }

    #[test]
    fn empty_design_errors() {
        let s = series_with(5, |_, _| {});
        let plan = FeaturePlan::fit(&s, &[FeatureSpec::weekday()]).unwrap();
        assert!(matches!(build_design(&s, Field::No2, &plan), Err(Error::EmptyDesign)));
    }

    #[test]
    fn lag_uses_calendar_days_across_gaps() {
        let mut s = series_with(6, |i, r| {
            r.set(Field::No2, Some(5.0));
            r.set(Field::T, Some(i as f64));
        });
        s.rows.remove(2);
        let plan = FeaturePlan::fit(&s, &[FeatureSpec::lagged(Source::T, 1).unwrap()]).unwrap();
        let d = build_design(&s, Field::No2, &plan).unwrap();
        // day 3's lag falls on the missing day 2
        assert_eq!(d.dates, vec![day(1), day(4), day(5)]);
    }
}
