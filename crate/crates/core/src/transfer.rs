//! Lockdown models derived from pre-lockdown models.
//!
//! All weather and seasonal terms of the source model are frozen and only
//! the intercept and the weekday coefficients are refitted, by ordinary
//! least squares on the lockdown response minus the frozen contributions.

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    make_ld_folds, score, CvReport, DateRange, FoldOutcome, FoldResult, Protocol, LD_TEST_BLOCK_DAYS,
};
use crate::features::{build_design, DesignMatrix, FeatureSpec, Source};
use crate::gam::{aic_value, gaussian_log_likelihood, CategoricalTerm, GamModel, TransferProvenance};
use crate::ingest::DailySeries;

pub const MIN_LD_ROWS: usize = 14;
pub const MIN_ROWS_PER_WEEKDAY: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitTerm {
    Intercept,
    Weekday,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub refit: Vec<RefitTerm>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            refit: vec![RefitTerm::Intercept, RefitTerm::Weekday],
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refit.is_empty() {
            return Err(Error::Config("refit set must not be empty".into()));
        }
        Ok(())
    }

    fn refits(&self, term: RefitTerm) -> bool {
        self.refit.contains(&term)
    }
}

fn weekday_of(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// Design for transferring `pre_ld`: its own features plus weekday.
pub fn transfer_design(pre_ld: &GamModel, daily: &DailySeries) -> Result<DesignMatrix> {
    let mut specs = pre_ld.specs();
    if !specs.contains(&FeatureSpec::weekday()) {
        specs.push(FeatureSpec::weekday());
    }
    let plan = pre_ld.plan.with_specs(&specs)?;
    build_design(daily, pre_ld.target, &plan)
}

/// Refits the intercept and/or weekday coefficients of `pre_ld` on
/// `ld_data`, keeping every other term bit-identical. The weekday of each
/// row is taken from its date.
pub fn transfer_fit(pre_ld: &GamModel, ld_data: &DesignMatrix, config: &TransferConfig) -> Result<GamModel> {
    config.validate()?;
    let n = ld_data.n_rows();
    if n < MIN_LD_ROWS {
        return Err(Error::TooFewRows {
            needed: MIN_LD_ROWS,
            got: n,
        });
    }
    let refit_intercept = config.refits(RefitTerm::Intercept);
    let refit_weekday = config.refits(RefitTerm::Weekday);
    let weekdays: Vec<usize> = ld_data.dates.iter().map(|&d| weekday_of(d)).collect();
    if refit_weekday {
        let mut counts = [0usize; 7];
        for &w in &weekdays {
            counts[w] += 1;
        }
        if let Some(w) = counts.iter().position(|&c| c < MIN_ROWS_PER_WEEKDAY) {
            return Err(Error::InsufficientCoverage(format!(
                "weekday {w} has {} of {MIN_ROWS_PER_WEEKDAY} required rows",
                counts[w]
            )));
        }
    }

    // frozen contributions: smooths and every non-weekday categorical
    let mut frozen_model = pre_ld.clone();
    frozen_model
        .categoricals
        .retain(|c| c.feature.source != Source::Weekday);
    if refit_intercept {
        frozen_model.intercept = 0.0;
    }
    let source_weekday = pre_ld.weekday_term();
    let mut offset = frozen_model.predict(ld_data)?.ln;
    if !refit_weekday {
        if let Some(term) = source_weekday {
            for (o, &w) in offset.iter_mut().zip(&weekdays) {
                *o += term.effect(w as f64)?;
            }
        }
    }

    let p = refit_intercept as usize + if refit_weekday { 6 } else { 0 };
    let x = DMatrix::from_fn(n, p, |r, c| {
        let c = c + !refit_intercept as usize;
        if c == 0 {
            1.0
        } else {
            (weekdays[r] == c) as u8 as f64
        }
    });
    let y = DVector::from_iterator(n, ld_data.response.iter().zip(&offset).map(|(y, o)| y - o));
    let xtx = x.tr_mul(&x);
    let chol = xtx.clone().cholesky().ok_or(Error::RankDeficient)?;
    let beta = chol.solve(&x.tr_mul(&y));
    let inverse = chol.inverse();

    let mut model = pre_ld.clone();
    if refit_intercept {
        model.intercept = beta[0];
    }
    let weekday_index = model
        .categoricals
        .iter()
        .position(|c| c.feature.source == Source::Weekday);
    if refit_weekday {
        let first = refit_intercept as usize;
        let mut coefficients = vec![0.0];
        coefficients.extend(beta.iter().skip(first).copied());
        let term = CategoricalTerm {
            feature: FeatureSpec::weekday(),
            levels: (0..7).collect(),
            coefficients,
            std_errors: vec![0.0; 7],
            edf: 6.0,
        };
        match weekday_index {
            Some(i) => model.categoricals[i] = term,
            None => model.categoricals.push(term),
        }
    }
    if !model.plan.specs.contains(&FeatureSpec::weekday()) && refit_weekday {
        let mut specs = model.plan.specs.clone();
        specs.push(FeatureSpec::weekday());
        model.plan = model.plan.with_specs(&specs)?;
    }

    let pred = model.predict_with_weekdays(ld_data, &weekdays)?;
    let rss: f64 = pred.iter().zip(&ld_data.response).map(|(p, y)| (y - p).powi(2)).sum();
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;
    if refit_weekday {
        let first = refit_intercept as usize;
        let term = model
            .categoricals
            .iter_mut()
            .find(|c| c.feature.source == Source::Weekday)
            .expect("weekday term present");
        for level in 1..7 {
            let k = first + level - 1;
            term.std_errors[level] = (inverse[(k, k)] * sigma2).sqrt();
        }
    }
    model.rss = rss;
    model.sigma2 = sigma2;
    model.n_train = n;
    model.total_edf = p as f64;
    model.log_likelihood = gaussian_log_likelihood(rss, n);
    model.aic = aic_value(model.total_edf, model.log_likelihood, model.aic_mode);
    model.train_period = (ld_data.dates[0], ld_data.dates[n - 1]);

    let mut refit = Vec::new();
    let mut frozen = Vec::new();
    if refit_intercept {
        refit.push("intercept".to_string());
    } else {
        frozen.push("intercept".to_string());
    }
    for s in &pre_ld.smooths {
        frozen.push(s.feature.name());
    }
    for c in &pre_ld.categoricals {
        if c.feature.source == Source::Weekday && refit_weekday {
            continue;
        }
        frozen.push(c.feature.name());
    }
    if refit_weekday {
        refit.push(FeatureSpec::weekday().name());
    }
    let note = if pre_ld.has_term(&FeatureSpec::new(Source::Month)) {
        "month term kept frozen".to_string()
    } else {
        String::new()
    };
    // provenance always names the original pre-lockdown model
    let source_sha = match &pre_ld.transfer_provenance {
        Some(p) => p.source_model_sha256.clone(),
        None => pre_ld.sha256()?,
    };
    model.transfer_provenance = Some(TransferProvenance {
        source_model_sha256: source_sha,
        ld_period: model.train_period,
        refit,
        frozen,
        note,
    });
    Ok(model)
}

impl GamModel {
    /// Log predictions where the weekday level comes from `weekdays` rather
    /// than a design column.
    fn predict_with_weekdays(&self, design: &DesignMatrix, weekdays: &[usize]) -> Result<Vec<f64>> {
        let mut without = self.clone();
        let term = without
            .categoricals
            .iter()
            .position(|c| c.feature.source == Source::Weekday)
            .map(|i| without.categoricals.remove(i));
        let mut ln = without.predict(design)?.ln;
        if let Some(term) = term {
            for (v, &w) in ln.iter_mut().zip(weekdays) {
                *v += term.effect(w as f64)?;
            }
        }
        Ok(ln)
    }
}

/// Lockdown cross-validation: 3-day test blocks over `period`, each scored
/// with a model transferred from `pre_ld` on the remaining lockdown days.
/// The pre-lockdown model's RMSE on the same rows is reported as baseline.
pub fn ld_validate(
    pre_ld: &GamModel,
    ld_data: &DesignMatrix,
    period: DateRange,
    config: &TransferConfig,
) -> Result<CvReport> {
    let folds = make_ld_folds(period, LD_TEST_BLOCK_DAYS)?;
    let data = ld_data.slice(period.start, period.end);
    let results: Vec<FoldResult> = folds
        .into_par_iter()
        .map(|fold| {
            let train = data.filter_rows(|_, d| fold.in_train(d));
            let test = data.slice(fold.test.start, fold.test.end);
            let outcome = transfer_fit(pre_ld, &train, config)
                .and_then(|m| score(&m, &test, Some(pre_ld)))
                .unwrap_or_else(|e| FoldOutcome::Skipped { reason: e.to_string() });
            FoldResult { fold, outcome }
        })
        .collect();
    Ok(CvReport::new(
        Protocol::Ld,
        ld_data.station_id.clone(),
        ld_data.target,
        results,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{generate_synthetic, SynthConfig, SynthRegime, SynthShape, SynthSmooth};
    use crate::features::FeaturePlan;
    use crate::gam::{fit_with_plan, FitConfig};
    use crate::ingest::{slice_period, Field};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn ld_period() -> DateRange {
        DateRange::new(d(2020, 3, 16), d(2020, 4, 26)).unwrap()
    }

    fn scenario(seed: u64, sigma: f64, regime: Option<SynthRegime>) -> (GamModel, DailySeries) {
        let config = SynthConfig {
            seed,
            noise_sigma: sigma,
            n_days: 851,
            regimes: regime.into_iter().collect(),
            ..SynthConfig::default()
        };
        let (series, _) = generate_synthetic(&config).unwrap();
        let train = slice_period(&series, d(2018, 1, 1), d(2019, 12, 31));
        let specs = [
            FeatureSpec::new(Source::T),
            FeatureSpec::new(Source::Ws),
            FeatureSpec::weekday(),
        ];
        let plan = FeaturePlan::fit(&train, &specs).unwrap();
        let design = build_design(&train, Field::No2, &plan).unwrap();
        let model = fit_with_plan(&design, &specs, &plan, &FitConfig::default()).unwrap();
        (model, series)
    }

    fn lockdown(multiplier: f64, weekdays: Option<[f64; 7]>) -> SynthRegime {
        SynthRegime {
            start: ld_period().start,
            end: ld_period().end,
            multiplier,
            weekday_multipliers: weekdays,
        }
    }

    fn frozen_bytes(m: &GamModel) -> String {
        let month: Vec<_> = m
            .categoricals
            .iter()
            .filter(|c| c.feature.source != Source::Weekday)
            .collect();
        serde_json::to_string(&(&m.smooths, month)).unwrap()
    }

    #[test]
    fn uniform_reduction_shifts_intercept() {
        let (pre, series) = scenario(1, 0.1, Some(lockdown(0.7, None)));
        let ld = transfer_design(&pre, &series)
            .unwrap()
            .slice(ld_period().start, ld_period().end);
        assert_eq!(ld.n_rows(), 42);
        let m = transfer_fit(&pre, &ld, &TransferConfig::default()).unwrap();
        let shift = m.intercept - pre.intercept;
        assert!((shift - 0.7f64.ln()).abs() < 0.03, "shift {shift}");
        assert_eq!(frozen_bytes(&m), frozen_bytes(&pre));
        let prov = m.transfer_provenance.as_ref().unwrap();
        assert_eq!(prov.source_model_sha256, pre.sha256().unwrap());
        assert_eq!(prov.ld_period, (ld_period().start, ld_period().end));
        let back = GamModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn idempotent_on_same_data() {
        let (pre, series) = scenario(2, 0.1, Some(lockdown(0.7, None)));
        let ld = transfer_design(&pre, &series)
            .unwrap()
            .slice(ld_period().start, ld_period().end);
        let a = transfer_fit(&pre, &ld, &TransferConfig::default()).unwrap();
        let b = transfer_fit(&a, &ld, &TransferConfig::default()).unwrap();
        assert!((a.intercept - b.intercept).abs() < 1e-10);
        let (wa, wb) = (a.weekday_term().unwrap(), b.weekday_term().unwrap());
        for (x, y) in wa.coefficients.iter().zip(&wb.coefficients) {
            assert!((x - y).abs() < 1e-10);
        }
        assert_eq!(
            a.transfer_provenance.as_ref().unwrap().source_model_sha256,
            b.transfer_provenance.as_ref().unwrap().source_model_sha256
        );
    }

    #[test]
    fn vanished_weekday_structure() {
        let (pre, series) = scenario(3, 0.1, Some(lockdown(1.0, Some([1.0; 7]))));
        assert!(pre.weekday_term().unwrap().coefficients[5] < -0.25);
        let ld = transfer_design(&pre, &series)
            .unwrap()
            .slice(ld_period().start, ld_period().end);
        let m = transfer_fit(&pre, &ld, &TransferConfig::default()).unwrap();
        for c in &m.weekday_term().unwrap().coefficients {
            assert!(c.abs() < 0.15, "{c}");
        }
    }

    #[test]
    fn weekday_coverage_is_required() {
        let (pre, series) = scenario(4, 0.1, None);
        let ld = transfer_design(&pre, &series).unwrap();
        let sparse = ld
            .slice(d(2020, 3, 16), d(2020, 4, 26))
            .filter_rows(|_, date| date.weekday().num_days_from_monday() != 2 || date < d(2020, 3, 20));
        assert!(matches!(
            transfer_fit(&pre, &sparse, &TransferConfig::default()),
            Err(Error::InsufficientCoverage(_))
        ));
        let short = ld.slice(d(2020, 3, 16), d(2020, 3, 25));
        assert!(matches!(
            transfer_fit(&pre, &short, &TransferConfig::default()),
            Err(Error::TooFewRows { .. })
        ));
        let intercept_only = TransferConfig {
            refit: vec![RefitTerm::Intercept],
        };
        let m = transfer_fit(&pre, &sparse, &intercept_only).unwrap();
        assert_eq!(m.weekday_term(), pre.weekday_term());
    }

    #[test]
    fn ld_validation_has_fourteen_folds() {
        let (pre, series) = scenario(5, 0.1, Some(lockdown(0.6, Some([1.0, 1.0, 1.0, 1.0, 1.0, 0.9, 0.9]))));
        let design = transfer_design(&pre, &series).unwrap();
        let report = ld_validate(&pre, &design, ld_period(), &TransferConfig::default()).unwrap();
        assert_eq!(report.folds.len(), 14);
        assert_eq!(report.aggregate.n_scored, 14);
        let agg = &report.aggregate;
        assert!(agg.rmse.unwrap().mean < agg.baseline_rmse.unwrap().mean);
    }

    #[test]
    fn noiseless_linear_is_exact() {
        let config = SynthConfig {
            smooths: vec![SynthSmooth {
                driver: Field::Rh,
                shape: SynthShape::Linear { slope: 0.01 },
            }],
            noise_sigma: 0.0,
            n_days: 851,
            regimes: vec![lockdown(0.7, None)],
            ..SynthConfig::default()
        };
        let (series, _) = generate_synthetic(&config).unwrap();
        let train = slice_period(&series, d(2018, 1, 1), d(2019, 12, 31));
        let specs = [FeatureSpec::new(Source::Rh), FeatureSpec::weekday()];
        let plan = FeaturePlan::fit(&train, &specs).unwrap();
        let design = build_design(&train, Field::No2, &plan).unwrap();
        let fit = FitConfig {
            lambda_grid: vec![1e4],
            ..FitConfig::default()
        };
        let pre = fit_with_plan(&design, &specs, &plan, &fit).unwrap();
        let ld = transfer_design(&pre, &series).unwrap();
        let report = ld_validate(&pre, &ld, ld_period(), &TransferConfig::default()).unwrap();
        assert!(report.aggregate.rmse.unwrap().mean < 1e-6, "{:?}", report.aggregate);
    }
}
