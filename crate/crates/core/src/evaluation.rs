//! Temporal cross-validation, error metrics and the synthetic data generator.
//!
//! Two fold protocols are provided. The pre-lockdown protocol trains on the
//! `L` months before each month start of an evaluation year and tests on
//! that month. The lockdown protocol tiles a short period into 3-day test
//! blocks and trains on the remaining days of the period. Metrics are always
//! computed on the concentration scale.

use std::io::Write;

use chrono::{Datelike, Duration, Months, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_design, DesignMatrix, FeaturePlan, FeatureSpec};
use crate::gam::{fit_with_plan, FitConfig, GamModel};
use crate::ingest::{slice_period, DailyRow, DailySeries, Field};
use crate::selection::{ensure_weekday, forward_select, SelectionConfig};

pub const DEFAULT_TRAIN_LENGTHS: [u32; 6] = [3, 6, 9, 12, 18, 24];
pub const LD_TEST_BLOCK_DAYS: usize = 3;

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidInput(format!("range start {start} after end {end}")));
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.days()).map(move |i| start + Duration::days(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    PreLd,
    Ld,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::PreLd => "pre-ld",
            Protocol::Ld => "ld",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre-ld" | "pre_ld" => Ok(Protocol::PreLd),
            "ld" => Ok(Protocol::Ld),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub label: String,
    /// Training days; one range for the pre-lockdown protocol, up to two
    /// (before and after the test block) for the lockdown protocol.
    pub train: Vec<DateRange>,
    pub test: DateRange,
    /// Training window length in months, pre-lockdown protocol only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_months: Option<u32>,
}

impl Fold {
    pub fn in_train(&self, date: NaiveDate) -> bool {
        self.train.iter().any(|r| r.contains(date))
    }

    /// Smallest range covering all training days.
    pub fn train_span(&self) -> DateRange {
        let start = self.train.iter().map(|r| r.start).min().unwrap_or(self.test.start);
        let end = self.train.iter().map(|r| r.end).max().unwrap_or(self.test.end);
        DateRange { start, end }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedFold {
    pub fold: Fold,
    /// Set when the fold cannot be run, e.g. for lack of history.
    pub skip: Option<String>,
}

fn month_start(year: i32, month: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, month, 1).expect("valid month")
}

/// Pre-lockdown folds for every month start of `eval_year` and every
/// training length, ordered by training length then month. Folds whose
/// training window starts before `data_start` are returned with a skip
/// reason.
pub fn make_pre_ld_folds(eval_year: i32, train_lengths: &[u32], data_start: NaiveDate) -> Result<Vec<PlannedFold>> {
    if train_lengths.is_empty() || train_lengths.contains(&0) {
        return Err(Error::Config("training lengths must be positive months".into()));
    }
    let mut out = Vec::with_capacity(train_lengths.len() * 12);
    for &len in train_lengths {
        for month in 1..=12 {
            let cutoff = month_start(eval_year, month);
            let train_start = cutoff
                .checked_sub_months(Months::new(len))
                .ok_or_else(|| Error::Config("date out of range".into()))?;
            let test_end = cutoff
                .checked_add_months(Months::new(1))
                .ok_or_else(|| Error::Config("date out of range".into()))?
                - Duration::days(1);
            let fold = Fold {
                label: format!("{}-{:02}/L{len}", eval_year, month),
                train: vec![DateRange {
                    start: train_start,
                    end: cutoff - Duration::days(1),
                }],
                test: DateRange {
                    start: cutoff,
                    end: test_end,
                },
                train_months: Some(len),
            };
            let skip = (train_start < data_start).then(|| {
                Error::InsufficientHistory {
                    needed: train_start,
                    available: data_start,
                }
                .to_string()
            });
            out.push(PlannedFold { fold, skip });
        }
    }
    Ok(out)
}

/// Lockdown folds: consecutive `block`-day test blocks from the period
/// start, each trained on the remaining days of the period. A trailing
/// partial block is dropped.
pub fn make_ld_folds(period: DateRange, block: usize) -> Result<Vec<Fold>> {
    if block == 0 {
        return Err(Error::Config("test block must be at least one day".into()));
    }
    let days = period.days();
    let n_blocks = days as usize / block;
    if n_blocks < 2 {
        return Err(Error::PeriodTooShort {
            days,
            needed: 2 * block as i64,
        });
    }
    let mut folds = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let start = period.start + Duration::days((b * block) as i64);
        let end = start + Duration::days(block as i64 - 1);
        let mut train = Vec::new();
        if start > period.start {
            train.push(DateRange {
                start: period.start,
                end: start - Duration::days(1),
            });
        }
        if end < period.end {
            train.push(DateRange {
                start: end + Duration::days(1),
                end: period.end,
            });
        }
        folds.push(Fold {
            label: format!("block{:02}", b + 1),
            train,
            test: DateRange { start, end },
            train_months: None,
        });
    }
    Ok(folds)
}

pub fn rmse(pred: &[f64], meas: &[f64]) -> Result<f64> {
    if pred.len() != meas.len() {
        return Err(Error::LengthMismatch(pred.len(), meas.len()));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mse = pred.iter().zip(meas).map(|(p, m)| (p - m).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// `1 - SS_res / SS_tot` about the mean of `meas`; can be negative.
pub fn r2(pred: &[f64], meas: &[f64]) -> Result<f64> {
    if pred.len() != meas.len() {
        return Err(Error::LengthMismatch(pred.len(), meas.len()));
    }
    if pred.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: pred.len(),
        });
    }
    let mean = meas.iter().sum::<f64>() / meas.len() as f64;
    let ss_tot: f64 = meas.iter().map(|m| (m - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = pred.iter().zip(meas).map(|(p, m)| (p - m).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum FoldOutcome {
    Scored {
        n_test: usize,
        rmse: f64,
        /// Absent when the test measurements have no variance.
        r2: Option<f64>,
        /// RMSE of a reference model on the same test rows, when requested.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        baseline_rmse: Option<f64>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: Fold,
    pub outcome: FoldOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { n, mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvAggregate {
    pub n_scored: usize,
    pub n_skipped: usize,
    pub rmse: Option<MeanStd>,
    pub r2: Option<MeanStd>,
    pub baseline_rmse: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub protocol: Protocol,
    pub station_id: String,
    pub target: Field,
    pub folds: Vec<FoldResult>,
    pub aggregate: CvAggregate,
}

pub const CV_CSV_HEADER: [&str; 14] = [
    "protocol",
    "station_id",
    "fold",
    "train_months",
    "train_start",
    "train_end",
    "test_start",
    "test_end",
    "status",
    "n_test",
    "rmse",
    "r2",
    "baseline_rmse",
    "reason",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CvReport {
    pub fn new(protocol: Protocol, station_id: String, target: Field, folds: Vec<FoldResult>) -> Self {
        let aggregate = aggregate(&folds);
        CvReport {
            protocol,
            station_id,
            target,
            folds,
            aggregate,
        }
    }

    pub fn scored(&self) -> impl Iterator<Item = (&Fold, f64, Option<f64>)> {
        self.folds.iter().filter_map(|f| match f.outcome {
            FoldOutcome::Scored { rmse, r2, .. } => Some((&f.fold, rmse, r2)),
            FoldOutcome::Skipped { .. } => None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per fold with the columns of [`CV_CSV_HEADER`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CV_CSV_HEADER)?;
        for f in &self.folds {
            let span = f.fold.train_span();
            let mut rec = vec![
                self.protocol.label().to_string(),
                self.station_id.clone(),
                f.fold.label.clone(),
                f.fold.train_months.map(|m| m.to_string()).unwrap_or_default(),
                span.start.to_string(),
                span.end.to_string(),
                f.fold.test.start.to_string(),
                f.fold.test.end.to_string(),
            ];
            match &f.outcome {
                FoldOutcome::Scored {
                    n_test,
                    rmse,
                    r2,
                    baseline_rmse,
                } => rec.extend([
                    "scored".into(),
                    n_test.to_string(),
                    rmse.to_string(),
                    opt(*r2),
                    opt(*baseline_rmse),
                    String::new(),
                ]),
                FoldOutcome::Skipped { reason } => rec.extend([
                    "skipped".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    reason.clone(),
                ]),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn aggregate(folds: &[FoldResult]) -> CvAggregate {
    let mut rmses = Vec::new();
    let mut r2s = Vec::new();
    let mut base = Vec::new();
    let mut skipped = 0;
    for f in folds {
        match f.outcome {
            FoldOutcome::Scored {
                rmse,
                r2,
                baseline_rmse,
                ..
            } => {
                rmses.push(rmse);
                r2s.extend(r2);
                base.extend(baseline_rmse);
            }
            FoldOutcome::Skipped { .. } => skipped += 1,
        }
    }
    CvAggregate {
        n_scored: rmses.len(),
        n_skipped: skipped,
        rmse: MeanStd::of(&rmses),
        r2: MeanStd::of(&r2s),
        baseline_rmse: MeanStd::of(&base),
    }
}

/// Cross-station summary: mean of the per-station aggregate metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub protocol: Protocol,
    pub stations: Vec<String>,
    pub rmse: Option<MeanStd>,
    pub r2: Option<MeanStd>,
}

pub fn summarize(protocol: Protocol, reports: &[CvReport]) -> CvSummary {
    let rmse: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.aggregate.rmse.map(|m| m.mean))
        .collect();
    let r2: Vec<f64> = reports.iter().filter_map(|r| r.aggregate.r2.map(|m| m.mean)).collect();
    CvSummary {
        protocol,
        stations: reports.iter().map(|r| r.station_id.clone()).collect(),
        rmse: MeanStd::of(&rmse),
        r2: MeanStd::of(&r2),
    }
}

/// Predicts the rows of `test` and scores them on the concentration scale.
pub fn score(model: &GamModel, test: &DesignMatrix, baseline: Option<&GamModel>) -> Result<FoldOutcome> {
    if test.n_rows() == 0 {
        return Ok(FoldOutcome::Skipped {
            reason: "no test data".into(),
        });
    }
    let measured: Vec<f64> = test.response.iter().map(|v| v.exp()).collect();
    let pred = model.predict(test)?.concentrations();
    let baseline_rmse = match baseline {
        Some(b) => Some(rmse(&b.predict(test)?.concentrations(), &measured)?),
        None => None,
    };
    Ok(FoldOutcome::Scored {
        n_test: measured.len(),
        rmse: rmse(&pred, &measured)?,
        r2: r2(&pred, &measured).ok(),
        baseline_rmse,
    })
}

/// How each fold's model is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CvModel {
    /// Fit the given features in every fold.
    Fixed { specs: Vec<FeatureSpec> },
    /// Run forward selection over `pool` in every fold, then add weekday.
    Select {
        pool: Vec<FeatureSpec>,
        selection: SelectionConfig,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub target: Field,
    pub model: CvModel,
    pub fit: FitConfig,
}

fn run_fold(daily: &DailySeries, fold: &Fold, config: &CvConfig) -> Result<FoldOutcome> {
    let span = fold.train_span();
    let train_daily = slice_period(daily, span.start, span.end);
    let specs = match &config.model {
        CvModel::Fixed { specs } => specs,
        CvModel::Select { pool, .. } => pool,
    };
    let plan = FeaturePlan::fit(&train_daily, specs)?;
    let design = build_design(daily, config.target, &plan)?;
    let train = design.filter_rows(|_, d| fold.in_train(d));
    let test = design.slice(fold.test.start, fold.test.end);
    if test.n_rows() == 0 {
        return Ok(FoldOutcome::Skipped {
            reason: "no test data".into(),
        });
    }
    let model = match &config.model {
        CvModel::Fixed { specs } => fit_with_plan(&train, specs, &plan, &config.fit)?,
        CvModel::Select { selection, .. } => {
            let (m, _) = forward_select(&train, &plan, selection)?;
            ensure_weekday(&m, &train)?
        }
    };
    score(&model, &test, None)
}

/// Runs every planned fold (in parallel) and assembles the report in plan
/// order. Fold-level failures become skipped entries.
pub fn cross_validate(daily: &DailySeries, folds: &[PlannedFold], protocol: Protocol, config: &CvConfig) -> CvReport {
    let results: Vec<FoldResult> = folds
        .par_iter()
        .map(|p| {
            let outcome = match &p.skip {
                Some(reason) => FoldOutcome::Skipped { reason: reason.clone() },
                None => {
                    run_fold(daily, &p.fold, config).unwrap_or_else(|e| FoldOutcome::Skipped { reason: e.to_string() })
                }
            };
            FoldResult {
                fold: p.fold.clone(),
                outcome,
            }
        })
        .collect();
    CvReport::new(protocol, daily.station_id.clone(), config.target, results)
}

// ---------------------------------------------------------------------------
// synthetic data

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SynthShape {
    /// `amplitude * sin(2 pi x / period + phase)`
    Sine { amplitude: f64, period: f64, phase: f64 },
    /// `slope * x`
    Linear { slope: f64 },
}

impl SynthShape {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SynthShape::Sine {
                amplitude,
                period,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * x / period + phase).sin(),
            SynthShape::Linear { slope } => slope * x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSmooth {
    pub driver: Field,
    pub shape: SynthShape,
}

/// A date range during which the response is scaled, optionally with its
/// own weekday profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthRegime {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub multiplier: f64,
    #[serde(default)]
    pub weekday_multipliers: Option<[f64; 7]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub station_id: String,
    pub target: Field,
    pub start: NaiveDate,
    pub n_days: usize,
    /// Log-scale intercept.
    pub intercept: f64,
    pub smooths: Vec<SynthSmooth>,
    /// Monday first.
    pub weekday_multipliers: [f64; 7],
    /// Noise standard deviation on the log scale.
    pub noise_sigma: f64,
    pub seed: u64,
    pub regimes: Vec<SynthRegime>,
    /// Date ranges where the target is left unmeasured.
    pub gaps: Vec<(NaiveDate, NaiveDate)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            station_id: "SYN1".into(),
            target: Field::No2,
            start: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            n_days: 730,
            intercept: 30f64.ln(),
            smooths: vec![
                SynthSmooth {
                    driver: Field::T,
                    shape: SynthShape::Sine {
                        amplitude: 0.5,
                        period: 30.0,
                        phase: 0.0,
                    },
                },
                SynthSmooth {
                    driver: Field::Ws,
                    shape: SynthShape::Linear { slope: -0.25 },
                },
            ],
            weekday_multipliers: [1.0, 1.0, 1.0, 1.0, 1.0, 0.7, 0.7],
            noise_sigma: 0.1,
            seed: 42,
            regimes: Vec::new(),
            gaps: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days == 0 {
            return Err(Error::Config("n_days must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be nonnegative".into()));
        }
        if !self.target.is_pollutant() {
            return Err(Error::Config(format!("{} is not a pollutant", self.target)));
        }
        let positive = |m: &[f64; 7]| m.iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive(&self.weekday_multipliers) {
            return Err(Error::Config("weekday multipliers must be positive".into()));
        }
        for r in &self.regimes {
            if r.start > r.end || !(r.multiplier > 0.0) || !r.weekday_multipliers.as_ref().is_none_or(positive) {
                return Err(Error::Config("invalid regime".into()));
            }
        }
        for s in &self.smooths {
            if s.driver.is_pollutant() {
                return Err(Error::Config(format!("driver {} is not a weather field", s.driver)));
            }
            if let SynthShape::Sine { period, .. } = s.shape {
                if !(period > 0.0) {
                    return Err(Error::Config("sine period must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.n_days as i64 - 1)
    }
}

/// Every component of the generated log response, day by day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub dates: Vec<NaiveDate>,
    pub intercept: f64,
    pub smooths: Vec<SynthSmooth>,
    /// `components[j][t]` is smooth `j` on day `t`.
    pub components: Vec<Vec<f64>>,
    pub weekday_ln: Vec<f64>,
    pub regime_ln: Vec<f64>,
    pub noise: Vec<f64>,
    /// Full log response including noise.
    pub ln_response: Vec<f64>,
}

impl SynthTruth {
    /// Noise-free log response.
    pub fn ln_mean(&self, t: usize) -> f64 {
        self.ln_response[t] - self.noise[t]
    }
}

struct Ar1 {
    rho: f64,
    innovation: Normal<f64>,
    state: f64,
}

impl Ar1 {
    fn new(rho: f64, stationary_sd: f64) -> Self {
        let sd = stationary_sd * (1.0 - rho * rho).sqrt();
        Ar1 {
            rho,
            innovation: Normal::new(0.0, sd).unwrap(),
            state: 0.0,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        self.state = self.rho * self.state + self.innovation.sample(rng);
        self.state
    }
}

/// Daily weather-like drivers and a response built from `config`. The
/// output is a pure function of the config.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(DailySeries, SynthTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let rain = Exp::new(1.0 / 3.0).unwrap();
    let mut t_ar = Ar1::new(0.8, 4.0);
    let mut rh_ar = Ar1::new(0.6, 8.0);
    let mut ws_ar = Ar1::new(0.5, 0.4);
    let mut p_ar = Ar1::new(0.8, 5.0);

    let mut rows = Vec::with_capacity(config.n_days);
    let mut truth = SynthTruth {
        dates: Vec::with_capacity(config.n_days),
        intercept: config.intercept,
        smooths: config.smooths.clone(),
        components: vec![Vec::with_capacity(config.n_days); config.smooths.len()],
        weekday_ln: Vec::with_capacity(config.n_days),
        regime_ln: Vec::with_capacity(config.n_days),
        noise: Vec::with_capacity(config.n_days),
        ln_response: Vec::with_capacity(config.n_days),
    };
    for i in 0..config.n_days {
        let date = config.start + Duration::days(i as i64);
        let season = (2.0 * std::f64::consts::PI * (date.ordinal() as f64 - 105.0) / 365.25).sin();
        // fixed draw order per day
        let t_noise = t_ar.step(&mut rng);
        let rh_noise = rh_ar.step(&mut rng);
        let ws_noise = ws_ar.step(&mut rng);
        let p_noise = p_ar.step(&mut rng);
        let wd_noise: f64 = std_normal.sample(&mut rng);
        let rain_draw: f64 = rng.random();
        let rain_amount = rain.sample(&mut rng);
        let eps = std_normal.sample(&mut rng);

        let t = 9.0 + 9.0 * season + t_noise;
        let rh = (72.0 - 10.0 * season + rh_noise).clamp(10.0, 100.0);
        let dp = t - (100.0 - rh) / 5.0;
        let ws = (0.9 + ws_noise).exp();
        let wd = (225.0 + 70.0 * wd_noise).rem_euclid(360.0);
        let precip = if rain_draw < 0.3 { rain_amount } else { 0.0 };
        let pressure = 965.0 + p_noise;

        let mut row = DailyRow::empty(date);
        for (field, v) in [
            (Field::T, t),
            (Field::Rh, rh),
            (Field::Dp, dp),
            (Field::Ws, ws),
            (Field::Wd, wd),
            (Field::P, precip),
            (Field::Pressure, pressure),
        ] {
            row.set(field, Some(v));
        }

        let mut ln_y = config.intercept;
        for (j, s) in config.smooths.iter().enumerate() {
            let c = s.shape.eval(row.get(s.driver).unwrap());
            truth.components[j].push(c);
            ln_y += c;
        }
        let weekday = date.weekday().num_days_from_monday() as usize;
        let regime = config.regimes.iter().find(|r| r.start <= date && date <= r.end);
        let profile = regime
            .and_then(|r| r.weekday_multipliers.as_ref())
            .unwrap_or(&config.weekday_multipliers);
        let weekday_ln = profile[weekday].ln();
        let regime_ln = regime.map(|r| r.multiplier.ln()).unwrap_or(0.0);
        let noise = config.noise_sigma * eps;
        ln_y += weekday_ln + regime_ln + noise;

        let gap = config.gaps.iter().any(|(a, b)| *a <= date && date <= *b);
        row.set(config.target, if gap { None } else { Some(ln_y.exp()) });
        rows.push(row);

        truth.dates.push(date);
        truth.weekday_ln.push(weekday_ln);
        truth.regime_ln.push(regime_ln);
        truth.noise.push(noise);
        truth.ln_response.push(ln_y);
    }
    Ok((DailySeries::new(config.station_id.clone(), rows), truth))
}
