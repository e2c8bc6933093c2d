//! Reduction estimates, weather comparisons, mixture coefficients and
//! year-long scenarios.
//!
//! Percent changes are always computed from totals over the days where
//! both a prediction and a measurement exist.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::DateRange;
use crate::gam::basis::quantile_sorted;
use crate::gam::{GamModel, SeriesPrediction};
use crate::ingest::{DailySeries, Field, StationMeta};

/// `100 * (measured - predicted) / predicted`, absent when `predicted <= 0`.
pub fn percent_change(predicted: f64, measured: f64) -> Option<f64> {
    (predicted > 0.0).then(|| 100.0 * (measured - predicted) / predicted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Station,
    Class,
}

/// Raw change of the mean measured concentration against the same
/// calendar days one year earlier; not weather-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearOverYear {
    pub reference: DateRange,
    pub reference_mean: f64,
    pub period_mean: f64,
    pub percent_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub subject: String,
    pub kind: SubjectKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    /// Stations pooled into this report (just the station itself for a station).
    pub members: Vec<String>,
    pub pollutant: Field,
    pub period: DateRange,
    pub predicted_total: f64,
    pub measured_total: f64,
    pub percent_change: Option<f64>,
    /// Days with both a prediction and a measurement.
    pub n_days: usize,
    /// Counted days whose prediction used clamped smooth inputs.
    pub clamped_days: usize,
    /// Days of the period without a prediction or a measurement.
    pub dropped_days: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_over_year: Option<YearOverYear>,
}

pub const REDUCTION_CSV_HEADER: [&str; 14] = [
    "subject",
    "kind",
    "region",
    "pollutant",
    "period_start",
    "period_end",
    "n_days",
    "predicted_total",
    "measured_total",
    "percent_change",
    "clamped_days",
    "dropped_days",
    "yoy_percent_change",
    "members",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn kind_label(kind: SubjectKind) -> &'static str {
    match kind {
        SubjectKind::Station => "station",
        SubjectKind::Class => "class",
    }
}

pub fn write_reduction_csv<W: Write>(out: W, reports: &[ReductionReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REDUCTION_CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.subject.clone(),
            kind_label(r.kind).into(),
            r.region.clone().unwrap_or_default(),
            r.pollutant.label().into(),
            r.period.start.to_string(),
            r.period.end.to_string(),
            r.n_days.to_string(),
            r.predicted_total.to_string(),
            r.measured_total.to_string(),
            opt(r.percent_change),
            r.clamped_days.to_string(),
            r.dropped_days.to_string(),
            opt(r.year_over_year.as_ref().and_then(|y| y.percent_change)),
            r.members.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct Totals {
    predicted: f64,
    measured: f64,
    n_days: usize,
    clamped: usize,
    dropped: usize,
}

fn sum_over(
    pred: &SeriesPrediction,
    measured: &DailySeries,
    target: Field,
    days: impl Iterator<Item = NaiveDate>,
) -> Totals {
    let mut t = Totals {
        predicted: 0.0,
        measured: 0.0,
        n_days: 0,
        clamped: 0,
        dropped: 0,
    };
    for date in days {
        let m = measured.row(date).and_then(|r| r.get(target));
        match (pred.get(date), m) {
            (Some(p), Some(m)) => {
                t.predicted += p;
                t.measured += m;
                t.n_days += 1;
                t.clamped += pred.clamped_on(date) as usize;
            }
            _ => t.dropped += 1,
        }
    }
    t
}

fn mean_measured(series: &DailySeries, target: Field, period: DateRange) -> Option<f64> {
    let values: Vec<f64> = period
        .iter()
        .filter_map(|d| series.row(d).and_then(|r| r.get(target)))
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Same calendar days one year earlier (Feb 29 maps to Feb 28).
pub fn previous_year(period: DateRange) -> DateRange {
    let back = |d: NaiveDate| {
        NaiveDate::from_ymd_opt(d.year() - 1, d.month(), d.day())
            .unwrap_or_else(|| NaiveDate::from_ymd_opt(d.year() - 1, d.month(), 28).unwrap())
    };
    DateRange {
        start: back(period.start),
        end: back(period.end),
    }
}

/// Raw mean-concentration change of `period` against the previous year.
pub fn year_over_year(measured: &DailySeries, target: Field, period: DateRange) -> Option<YearOverYear> {
    let reference = previous_year(period);
    let reference_mean = mean_measured(measured, target, reference)?;
    let period_mean = mean_measured(measured, target, period)?;
    Some(YearOverYear {
        reference,
        reference_mean,
        period_mean,
        percent_change: percent_change(reference_mean, period_mean),
    })
}

/// Predicted versus measured totals of `model.target` over `period`.
pub fn estimate_reduction(model: &GamModel, measured: &DailySeries, period: DateRange) -> Result<ReductionReport> {
    let pred = model.predict_series(measured)?;
    let totals = sum_over(&pred, measured, model.target, period.iter());
    if totals.n_days == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(ReductionReport {
        subject: measured.station_id.clone(),
        kind: SubjectKind::Station,
        region: None,
        members: vec![measured.station_id.clone()],
        pollutant: model.target,
        period,
        predicted_total: totals.predicted,
        measured_total: totals.measured,
        percent_change: percent_change(totals.predicted, totals.measured),
        n_days: totals.n_days,
        clamped_days: totals.clamped,
        dropped_days: totals.dropped,
        year_over_year: year_over_year(measured, model.target, period),
    })
}

/// Pools station reports by (region, class label, pollutant) by summing
/// totals.
pub fn aggregate_by_class(reports: &[ReductionReport], meta: &[StationMeta]) -> Result<Vec<ReductionReport>> {
    let mut groups: BTreeMap<(String, String, Field), Vec<&ReductionReport>> = BTreeMap::new();
    for r in reports {
        let m = meta
            .iter()
            .find(|m| m.station_id == r.subject)
            .ok_or_else(|| Error::UnknownStation(r.subject.clone()))?;
        groups
            .entry((m.region.name().to_string(), m.class_label.clone(), r.pollutant))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((region, class, pollutant), members)| {
            let predicted: f64 = members.iter().map(|r| r.predicted_total).sum();
            let measured: f64 = members.iter().map(|r| r.measured_total).sum();
            ReductionReport {
                subject: class,
                kind: SubjectKind::Class,
                region: Some(region),
                members: members.iter().map(|r| r.subject.clone()).collect(),
                pollutant,
                period: DateRange {
                    start: members.iter().map(|r| r.period.start).min().unwrap(),
                    end: members.iter().map(|r| r.period.end).max().unwrap(),
                },
                predicted_total: predicted,
                measured_total: measured,
                percent_change: percent_change(predicted, measured),
                n_days: members.iter().map(|r| r.n_days).sum(),
                clamped_days: members.iter().map(|r| r.clamped_days).sum(),
                dropped_days: members.iter().map(|r| r.dropped_days).sum(),
                year_over_year: None,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// weather comparison

/// Descriptive statistics; quartiles use linear interpolation between
/// order statistics (type 7).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Summary {
            n: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherStat {
    pub variable: Field,
    pub a: Option<Summary>,
    pub b: Option<Summary>,
    /// `mean(b) - mean(a)`.
    pub mean_difference: Option<f64>,
}

/// Per-variable summaries of two periods, paired by weather variable.
pub fn compare_weather(a: &DailySeries, b: &DailySeries) -> Vec<WeatherStat> {
    let values = |s: &DailySeries, f: Field| -> Vec<f64> { s.values(f).into_iter().flatten().collect() };
    Field::WEATHER
        .iter()
        .map(|&f| {
            let sa = Summary::of(&values(a, f));
            let sb = Summary::of(&values(b, f));
            let mean_difference = match (sa, sb) {
                (Some(x), Some(y)) => Some(y.mean - x.mean),
                _ => None,
            };
            WeatherStat {
                variable: f,
                a: sa,
                b: sb,
                mean_difference,
            }
        })
        .collect()
}

pub fn write_weather_csv<W: Write>(out: W, stats: &[WeatherStat]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variable",
        "period",
        "n",
        "mean",
        "q1",
        "median",
        "q3",
        "mean_difference",
    ])?;
    for s in stats {
        for (label, summary) in [("a", s.a), ("b", s.b)] {
            let mut rec = vec![s.variable.label().to_string(), label.to_string()];
            match summary {
                Some(x) => {
                    rec.push(x.n.to_string());
                    rec.extend([x.mean, x.q1, x.median, x.q3].iter().map(|v| v.to_string()));
                }
                None => rec.extend([
                    "0".to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]),
            }
            rec.push(opt(s.mean_difference));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// mixture coefficient

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    /// Weight on the lockdown-model predictions, in `[0, 1]`.
    pub alpha: f64,
    /// Mean absolute deviation at `alpha`.
    pub objective: f64,
    pub n_days: usize,
    /// Candidate points evaluated: both endpoints plus breakpoints in `[0, 1]`.
    pub breakpoints_examined: usize,
    /// Lowest objective over all examined points; equals `objective`.
    pub certificate: f64,
    /// Minimizer over the whole real line before clamping, when defined.
    pub unconstrained_alpha: Option<f64>,
}

fn mixture_objective(terms: &[(f64, f64)], alpha: f64) -> f64 {
    terms.iter().map(|(d, r)| (d * alpha - r).abs()).sum::<f64>() / terms.len() as f64
}

/// Exact minimizer of `mean |alpha * m_ld + (1 - alpha) * m_pre - measured|`
/// over `alpha` in `[0, 1]`, using the dates where all three values exist.
/// The objective is convex and piecewise linear, so its minimum is attained
/// at an endpoint or at a breakpoint; ties go to the smallest `alpha`.
pub fn fit_mixture(m_ld: &[Option<f64>], m_pre: &[Option<f64>], measured: &[Option<f64>]) -> Result<MixtureFit> {
    if m_ld.len() != m_pre.len() {
        return Err(Error::LengthMismatch(m_ld.len(), m_pre.len()));
    }
    if m_ld.len() != measured.len() {
        return Err(Error::LengthMismatch(m_ld.len(), measured.len()));
    }
    // term t contributes |d_t * alpha - r_t|
    let terms: Vec<(f64, f64)> = m_ld
        .iter()
        .zip(m_pre)
        .zip(measured)
        .filter_map(|((l, p), m)| Some((l.as_ref()? - p.as_ref()?, m.as_ref()? - p.as_ref()?)))
        .collect();
    if terms.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut breakpoints: Vec<(f64, f64)> = terms
        .iter()
        .filter(|(d, _)| *d != 0.0)
        .map(|(d, r)| (r / d, d.abs()))
        .collect();
    breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0));

    let unconstrained_alpha = {
        let total: f64 = breakpoints.iter().map(|b| b.1).sum();
        let mut acc = 0.0;
        breakpoints.iter().find_map(|&(a, w)| {
            acc += w;
            (acc >= 0.5 * total).then_some(a)
        })
    };

    let mut candidates = vec![0.0];
    candidates.extend(breakpoints.iter().map(|b| b.0).filter(|a| *a > 0.0 && *a < 1.0));
    candidates.push(1.0);
    candidates.dedup();

    let mut best = (f64::INFINITY, 0.0);
    for &a in &candidates {
        let f = mixture_objective(&terms, a);
        if f < best.0 {
            best = (f, a);
        }
    }
    Ok(MixtureFit {
        alpha: best.1,
        objective: best.0,
        n_days: terms.len(),
        breakpoints_examined: candidates.len(),
        certificate: best.0,
        unconstrained_alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub date: NaiveDate,
    pub alpha: f64,
    pub objective: f64,
    pub n_days: usize,
}

pub const DEFAULT_MIXTURE_WINDOW_DAYS: usize = 14;

/// Mixture coefficient over each trailing `window_days` window of the
/// consecutive `dates`. Windows without any complete day are omitted.
pub fn mixture_over_time(
    dates: &[NaiveDate],
    m_ld: &[Option<f64>],
    m_pre: &[Option<f64>],
    measured: &[Option<f64>],
    window_days: usize,
) -> Result<Vec<AlphaPoint>> {
    if window_days < 7 {
        return Err(Error::Config(format!(
            "mixture window {window_days} shorter than 7 days"
        )));
    }
    for (i, w) in dates.windows(2).enumerate() {
        if w[1] - w[0] != Duration::days(1) {
            return Err(Error::InvalidInput(format!("dates not consecutive at index {}", i + 1)));
        }
    }
    let n = dates.len();
    if m_ld.len() != n || m_pre.len() != n || measured.len() != n {
        return Err(Error::LengthMismatch(
            n,
            m_ld.len().min(m_pre.len()).min(measured.len()),
        ));
    }
    let mut out = Vec::new();
    for end in window_days..=n {
        let r = end - window_days..end;
        match fit_mixture(&m_ld[r.clone()], &m_pre[r.clone()], &measured[r]) {
            Ok(fit) => out.push(AlphaPoint {
                date: dates[end - 1],
                alpha: fit.alpha,
                objective: fit.objective,
                n_days: fit.n_days,
            }),
            Err(Error::NoOverlap) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn write_alpha_csv<W: Write>(out: W, points: &[AlphaPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "alpha", "objective", "n_days"])?;
    for p in points {
        w.write_record([
            p.date.to_string(),
            p.alpha.to_string(),
            p.objective.to_string(),
            p.n_days.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned daily series for plotting and mixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSeries {
    pub dates: Vec<NaiveDate>,
    pub measured: Vec<Option<f64>>,
    pub pre_ld: Vec<Option<f64>>,
    pub ld: Vec<Option<f64>>,
}

/// Predictions of both models and the measurements over `period`.
pub fn comparison_series(
    pre_ld: &GamModel,
    ld: &GamModel,
    daily: &DailySeries,
    period: DateRange,
) -> Result<ComparisonSeries> {
    let p = pre_ld.predict_series(daily)?;
    let l = ld.predict_series(daily)?;
    let dates: Vec<NaiveDate> = period.iter().collect();
    Ok(ComparisonSeries {
        measured: dates
            .iter()
            .map(|&d| daily.row(d).and_then(|r| r.get(pre_ld.target)))
            .collect(),
        pre_ld: dates.iter().map(|&d| p.get(d)).collect(),
        ld: dates.iter().map(|&d| l.get(d)).collect(),
        dates,
    })
}

// ---------------------------------------------------------------------------
// hypothetical scenario

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthTotals {
    pub month: u32,
    pub predicted_total: f64,
    pub measured_total: f64,
    pub percent_change: Option<f64>,
    pub n_days: usize,
    pub dropped_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub subject: String,
    pub kind: SubjectKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    pub members: Vec<String>,
    pub pollutant: Field,
    pub year: i32,
    pub predicted_total: f64,
    pub measured_total: f64,
    /// Change of the lockdown-model predictions relative to the measured
    /// year: `100 * (predicted - measured) / measured`.
    pub hypothetical_reduction_percent: Option<f64>,
    pub n_days: usize,
    pub clamped_days: usize,
    pub dropped_days: usize,
    pub months: Vec<MonthTotals>,
}

fn year_range(year: i32) -> Result<DateRange> {
    let start = NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(|| Error::Config(format!("bad year {year}")))?;
    let end = NaiveDate::from_ymd_opt(year, 12, 31).unwrap();
    Ok(DateRange { start, end })
}

/// Predicts every day of `year` with the lockdown model and compares the
/// totals with the measured values of that year.
pub fn hypothetical_scenario(ld_model: &GamModel, year_data: &DailySeries, year: i32) -> Result<ScenarioReport> {
    let range = year_range(year)?;
    let pred = ld_model.predict_series(year_data)?;
    let target = ld_model.target;
    let mut months = Vec::with_capacity(12);
    for month in 1..=12u32 {
        let days = range.iter().filter(|d| d.month() == month);
        let t = sum_over(&pred, year_data, target, days);
        months.push(MonthTotals {
            month,
            predicted_total: t.predicted,
            measured_total: t.measured,
            percent_change: percent_change(t.measured, t.predicted),
            n_days: t.n_days,
            dropped_days: t.dropped,
        });
    }
    let totals = sum_over(&pred, year_data, target, range.iter());
    if totals.n_days == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(ScenarioReport {
        subject: year_data.station_id.clone(),
        kind: SubjectKind::Station,
        region: None,
        members: vec![year_data.station_id.clone()],
        pollutant: target,
        year,
        predicted_total: totals.predicted,
        measured_total: totals.measured,
        hypothetical_reduction_percent: percent_change(totals.measured, totals.predicted),
        n_days: totals.n_days,
        clamped_days: totals.clamped,
        dropped_days: totals.dropped,
        months,
    })
}

/// Pools scenario reports by (region, class label, pollutant).
pub fn aggregate_scenarios_by_class(reports: &[ScenarioReport], meta: &[StationMeta]) -> Result<Vec<ScenarioReport>> {
    let mut groups: BTreeMap<(String, String, Field, i32), Vec<&ScenarioReport>> = BTreeMap::new();
    for r in reports {
        let m = meta
            .iter()
            .find(|m| m.station_id == r.subject)
            .ok_or_else(|| Error::UnknownStation(r.subject.clone()))?;
        groups
            .entry((m.region.name().to_string(), m.class_label.clone(), r.pollutant, r.year))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((region, class, pollutant, year), members)| {
            let months = (0..12)
                .map(|i| {
                    let p: f64 = members.iter().map(|r| r.months[i].predicted_total).sum();
                    let m: f64 = members.iter().map(|r| r.months[i].measured_total).sum();
                    MonthTotals {
                        month: i as u32 + 1,
                        predicted_total: p,
                        measured_total: m,
                        percent_change: percent_change(m, p),
                        n_days: members.iter().map(|r| r.months[i].n_days).sum(),
                        dropped_days: members.iter().map(|r| r.months[i].dropped_days).sum(),
                    }
                })
                .collect();
            let predicted: f64 = members.iter().map(|r| r.predicted_total).sum();
            let measured: f64 = members.iter().map(|r| r.measured_total).sum();
            ScenarioReport {
                subject: class,
                kind: SubjectKind::Class,
                region: Some(region),
                members: members.iter().map(|r| r.subject.clone()).collect(),
                pollutant,
                year,
                predicted_total: predicted,
                measured_total: measured,
                hypothetical_reduction_percent: percent_change(measured, predicted),
                n_days: members.iter().map(|r| r.n_days).sum(),
                clamped_days: members.iter().map(|r| r.clamped_days).sum(),
                dropped_days: members.iter().map(|r| r.dropped_days).sum(),
                months,
            }
        })
        .collect())
}

pub const SCENARIO_CSV_HEADER: [&str; 11] = [
    "subject",
    "kind",
    "region",
    "pollutant",
    "year",
    "month",
    "n_days",
    "dropped_days",
    "predicted_total",
    "measured_total",
    "percent_change",
];

/// One row per month plus an `all` row per report.
pub fn write_scenario_csv<W: Write>(out: W, reports: &[ScenarioReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCENARIO_CSV_HEADER)?;
    for r in reports {
        let head = [
            r.subject.clone(),
            kind_label(r.kind).into(),
            r.region.clone().unwrap_or_default(),
            r.pollutant.label().into(),
            r.year.to_string(),
        ];
        for m in &r.months {
            let mut rec = head.to_vec();
            rec.extend([
                m.month.to_string(),
                m.n_days.to_string(),
                m.dropped_days.to_string(),
                m.predicted_total.to_string(),
                m.measured_total.to_string(),
                opt(m.percent_change),
            ]);
            w.write_record(&rec)?;
        }
        let mut rec = head.to_vec();
        rec.extend([
            "all".into(),
            r.n_days.to_string(),
            r.dropped_days.to_string(),
            r.predicted_total.to_string(),
            r.measured_total.to_string(),
            opt(r.hypothetical_reduction_percent),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Region;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|x| Some(*x)).collect()
    }

    #[test]
    fn percent_change_arithmetic() {
        assert_eq!(percent_change(100.0, 70.0), Some(-30.0));
        assert_eq!(percent_change(100.0, 100.0), Some(0.0));
        assert!((percent_change(100.0, 140.8).unwrap() - 40.8).abs() < 1e-12);
        assert_eq!(percent_change(0.0, 1.0), None);
    }

    #[test]
    fn mixture_constructed_cases() {
        let ld = s(&[1.0, 4.0, 2.0, 8.0]);
        let pre = s(&[3.0, 5.0, 9.0, 1.0]);
        let f = fit_mixture(&ld, &pre, &ld).unwrap();
        assert_eq!((f.alpha, f.objective), (1.0, 0.0));
        let f = fit_mixture(&ld, &pre, &pre).unwrap();
        assert_eq!((f.alpha, f.objective), (0.0, 0.0));
        let f = fit_mixture(&s(&[0.0; 5]), &s(&[10.0; 5]), &s(&[5.0; 5])).unwrap();
        assert_eq!((f.alpha, f.objective), (0.5, 0.0));
        assert!(matches!(
            fit_mixture(&[None], &[Some(1.0)], &[Some(1.0)]),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn mixture_ties_take_smallest_alpha() {
        // m_ld == m_pre: every alpha is optimal
        let f = fit_mixture(&s(&[2.0, 3.0]), &s(&[2.0, 3.0]), &s(&[1.0, 1.0])).unwrap();
        assert_eq!(f.alpha, 0.0);
        assert_eq!(f.unconstrained_alpha, None);
    }

    #[test]
    fn mixture_out_of_range_is_clamped_and_recorded() {
        let f = fit_mixture(&s(&[8.0; 4]), &s(&[10.0; 4]), &s(&[4.0; 4])).unwrap();
        assert_eq!(f.alpha, 1.0);
        assert_eq!(f.unconstrained_alpha, Some(3.0));
    }

    #[test]
    fn mixture_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 50;
        let ld: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..20.0)).collect();
        let pre: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..30.0)).collect();
        let m: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..30.0)).collect();
        let a = fit_mixture(&s(&ld), &s(&pre), &s(&m)).unwrap();
        let k = 4.0;
        let sc = |v: &[f64]| s(&v.iter().map(|x| x * k).collect::<Vec<_>>());
        let b = fit_mixture(&sc(&ld), &sc(&pre), &sc(&m)).unwrap();
        assert_eq!(a.alpha, b.alpha);
    }

    #[test]
    fn alpha_series_windows() {
        let start = NaiveDate::from_ymd_opt(2020, 5, 1).unwrap();
        let n = 60;
        let dates: Vec<NaiveDate> = (0..n).map(|i| start + Duration::days(i)).collect();
        let ld = vec![Some(10.0); n as usize];
        let pre = vec![Some(20.0); n as usize];
        let meas: Vec<Option<f64>> = (0..n).map(|i| if i < 30 { Some(20.0) } else { Some(10.0) }).collect();
        let series = mixture_over_time(&dates, &ld, &pre, &meas, 14).unwrap();
        assert_eq!(series.len(), 47);
        assert_eq!(series[0].alpha, 0.0);
        assert_eq!(series.last().unwrap().alpha, 1.0);
        assert!(series.windows(2).all(|w| w[1].alpha >= w[0].alpha));
        assert!(mixture_over_time(&dates[..10], &ld[..10], &pre[..10], &meas[..10], 14)
            .unwrap()
            .is_empty());
        assert!(mixture_over_time(&dates, &ld, &pre, &meas, 5).is_err());
    }

    #[test]
    fn quartiles_type7() {
        let q = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
        assert_eq!(q.mean, 2.5);
    }

    #[test]
    fn weather_shift() {
        use crate::ingest::DailyRow;
        let start = NaiveDate::from_ymd_opt(2019, 3, 16).unwrap();
        let mk = |shift: f64| {
            let rows = (0..10)
                .map(|i| {
                    let mut r = DailyRow::empty(start + Duration::days(i));
                    r.set(Field::T, Some(i as f64 + shift));
                    r.set(Field::Ws, Some(2.0));
                    r
                })
                .collect();
            DailySeries::new("S", rows)
        };
        let stats = compare_weather(&mk(0.0), &mk(2.0));
        let t = stats.iter().find(|s| s.variable == Field::T).unwrap();
        assert!((t.mean_difference.unwrap() - 2.0).abs() < 1e-12);
        let ws = stats.iter().find(|s| s.variable == Field::Ws).unwrap();
        assert_eq!(ws.mean_difference, Some(0.0));
        let rh = stats.iter().find(|s| s.variable == Field::Rh).unwrap();
        assert_eq!(rh.mean_difference, None);
        let mut buf = Vec::new();
        write_weather_csv(&mut buf, &stats).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 15);
    }

    fn report(id: &str, predicted: f64, measured: f64) -> ReductionReport {
        let d = NaiveDate::from_ymd_opt(2020, 3, 16).unwrap();
        ReductionReport {
            subject: id.into(),
            kind: SubjectKind::Station,
            region: None,
            members: vec![id.into()],
            pollutant: Field::No2,
            period: DateRange { start: d, end: d },
            predicted_total: predicted,
            measured_total: measured,
            percent_change: percent_change(predicted, measured),
            n_days: 1,
            clamped_days: 0,
            dropped_days: 0,
            year_over_year: None,
        }
    }

    fn meta(id: &str, class: &str) -> StationMeta {
        StationMeta {
            station_id: id.into(),
            region: Region::LowerAustria,
            class_label: class.into(),
            latitude: Some(48.0),
            longitude: Some(16.0),
        }
    }

    #[test]
    fn class_pooling() {
        let reports = [
            report("a", 100.0, 110.0),
            report("b", 100.0, 90.0),
            report("c", 50.0, 35.0),
        ];
        let m = [meta("a", "Urban"), meta("b", "Urban"), meta("c", "Rural")];
        let classes = aggregate_by_class(&reports, &m).unwrap();
        let urban = classes.iter().find(|r| r.subject == "Urban").unwrap();
        assert_eq!(urban.percent_change, Some(0.0));
        assert_eq!(urban.members, vec!["a", "b"]);
        let rural = classes.iter().find(|r| r.subject == "Rural").unwrap();
        assert_eq!(rural.percent_change, reports[2].percent_change);
        assert!(matches!(
            aggregate_by_class(&reports, &m[..2]),
            Err(Error::UnknownStation(_))
        ));
        let mut buf = Vec::new();
        write_reduction_csv(&mut buf, &classes).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
