use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::basis::{basis_funs, clamp_to_knots, find_span};
use crate::error::{Error, Result};
use crate::features::{build_frame, DesignMatrix, FeatureFrame, FeaturePlan, FeatureSpec, Source};
use crate::ingest::{DailySeries, Field};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AicMode {
    /// `2k - 2 ln L`
    #[default]
    Standard,
    /// `2k - ln L`, the criterion exactly as it is sometimes printed.
    PaperLiteral,
}

/// `k` counts the effective degrees of freedom plus one for the residual
/// variance.
pub fn aic_value(total_edf: f64, log_likelihood: f64, mode: AicMode) -> f64 {
    let k = total_edf + 1.0;
    match mode {
        AicMode::Standard => 2.0 * k - 2.0 * log_likelihood,
        AicMode::PaperLiteral => 2.0 * k - log_likelihood,
    }
}

/// Gaussian log-likelihood at the maximum-likelihood variance `rss / n`.
pub fn gaussian_log_likelihood(rss: f64, n: usize) -> f64 {
    let n = n as f64;
    let var = (rss / n).max(f64::MIN_POSITIVE);
    -0.5 * n * ((2.0 * std::f64::consts::PI * var).ln() + 1.0)
}

pub fn log_spaced_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Target basis size per smooth; reduced when a feature has fewer distinct values.
    pub basis_size: usize,
    pub lambda_grid: Vec<f64>,
    /// Outer block-coordinate cycles of the GCV search.
    pub cycles: usize,
    pub aic_mode: AicMode,
    pub centering_tolerance: f64,
    /// Ridge on the smooth blocks of the normal equations, relative to their mean diagonal.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            basis_size: 10,
            lambda_grid: log_spaced_grid(1e-4, 1e4, 13),
            cycles: 3,
            aic_mode: AicMode::Standard,
            centering_tolerance: 1e-8,
            ridge: 1e-10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.basis_size < 4 {
            return Err(Error::InvalidInput("basis size must be at least 4".into()));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput(
                "lambda grid must be non-empty and non-negative".into(),
            ));
        }
        if self.cycles == 0 {
            return Err(Error::InvalidInput("at least one lambda cycle is required".into()));
        }
        Ok(())
    }
}

/// Penalized cubic spline term, centered to mean zero over the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTerm {
    pub feature: FeatureSpec,
    /// Full clamped knot vector (boundary knots repeated `degree + 1` times).
    pub knots: Vec<f64>,
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub penalty_order: usize,
    pub lambda: f64,
    pub edf: f64,
}

impl SmoothTerm {
    pub fn basis_size(&self) -> usize {
        self.coefficients.len()
    }

    /// Term value at `x`, clamped to the boundary knots.
    pub fn eval(&self, x: f64) -> (f64, bool) {
        let (xc, clamped) = clamp_to_knots(&self.knots, x);
        let span = find_span(&self.knots, self.degree, xc);
        let value = basis_funs(&self.knots, self.degree, span, xc)
            .iter()
            .enumerate()
            .map(|(j, b)| b * self.coefficients[span - self.degree + j])
            .sum();
        (value, clamped)
    }
}

/// Reference-coded categorical term; `coefficients[0]` belongs to the
/// reference level and is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalTerm {
    pub feature: FeatureSpec,
    pub levels: Vec<i64>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub edf: f64,
}

impl CategoricalTerm {
    pub fn effect(&self, level: f64) -> Result<f64> {
        let key = level.round() as i64;
        self.levels
            .iter()
            .position(|&l| l == key)
            .map(|i| self.coefficients[i])
            .ok_or_else(|| Error::UnseenLevel {
                term: self.feature.name(),
                level: key,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitMeta {
    pub lambda_grid: Vec<f64>,
    pub cycles_run: usize,
    pub lambda_converged: bool,
    pub gcv: Option<f64>,
    /// Smooths whose basis ended up smaller than requested: (feature, size).
    pub reduced_bases: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferProvenance {
    pub source_model_sha256: String,
    pub ld_period: (NaiveDate, NaiveDate),
    pub refit: Vec<String>,
    pub frozen: Vec<String>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    pub format_version: u32,
    pub station_id: String,
    pub target: Field,
    /// Transforms needed to rebuild this model's features from daily data.
    pub plan: FeaturePlan,
    pub intercept: f64,
    pub smooths: Vec<SmoothTerm>,
    pub categoricals: Vec<CategoricalTerm>,
    /// Residual variance on the log scale, `rss / (n - total_edf)`.
    pub sigma2: f64,
    pub rss: f64,
    pub n_train: usize,
    pub total_edf: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub aic_mode: AicMode,
    pub train_period: (NaiveDate, NaiveDate),
    pub fit_meta: FitMeta,
    pub config: FitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_provenance: Option<TransferProvenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// Linear predictor (log concentration).
    pub ln: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl Predictions {
    pub fn concentrations(&self) -> Vec<f64> {
        self.ln.iter().map(|v| v.exp()).collect()
    }

    pub fn n_clamped(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPrediction {
    pub dates: Vec<NaiveDate>,
    /// Concentration per calendar day; `None` where a feature is missing.
    pub values: Vec<Option<f64>>,
    pub clamped: Vec<bool>,
}

impl SeriesPrediction {
    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        let first = *self.dates.first()?;
        let i = (date - first).num_days();
        if i < 0 {
            return None;
        }
        self.values.get(i as usize).copied().flatten()
    }

    pub fn clamped_on(&self, date: NaiveDate) -> bool {
        let Some(&first) = self.dates.first() else { return false };
        let i = (date - first).num_days();
        i >= 0 && self.clamped.get(i as usize).copied().unwrap_or(false)
    }
}

impl GamModel {
    /// Model terms in storage order: smooths, then categoricals.
    pub fn specs(&self) -> Vec<FeatureSpec> {
        self.smooths
            .iter()
            .map(|s| s.feature)
            .chain(self.categoricals.iter().map(|c| c.feature))
            .collect()
    }

    pub fn has_term(&self, spec: &FeatureSpec) -> bool {
        self.specs().contains(spec)
    }

    pub fn weekday_term(&self) -> Option<&CategoricalTerm> {
        self.categoricals.iter().find(|c| c.feature.source == Source::Weekday)
    }

    /// Linear predictor for one row given a feature lookup.
    pub fn linear_predictor(&self, value: impl Fn(&FeatureSpec) -> Option<f64>) -> Result<(f64, bool)> {
        let mut eta = self.intercept;
        let mut clamped = false;
        for term in &self.smooths {
            let x = value(&term.feature).ok_or_else(|| Error::MissingFeature(term.feature.name()))?;
            let (v, c) = term.eval(x);
            eta += v;
            clamped |= c;
        }
        for term in &self.categoricals {
            let x = value(&term.feature).ok_or_else(|| Error::MissingFeature(term.feature.name()))?;
            eta += term.effect(x)?;
        }
        Ok((eta, clamped))
    }

    /// Predictions for every design row.
    pub fn predict(&self, design: &DesignMatrix) -> Result<Predictions> {
        let columns: Vec<(FeatureSpec, &[f64])> = self
            .specs()
            .into_iter()
            .map(|s| {
                design
                    .column(&s)
                    .map(|c| (s, c))
                    .ok_or_else(|| Error::MissingFeature(s.name()))
            })
            .collect::<Result<_>>()?;
        let mut ln = Vec::with_capacity(design.n_rows());
        let mut clamped = Vec::with_capacity(design.n_rows());
        for i in 0..design.n_rows() {
            let (eta, c) =
                self.linear_predictor(|spec| columns.iter().find(|(s, _)| s == spec).map(|(_, col)| col[i]))?;
            ln.push(eta);
            clamped.push(c);
        }
        Ok(Predictions { ln, clamped })
    }

    /// Predictions over a feature frame; days with any missing feature are `None`.
    pub fn predict_frame(&self, frame: &FeatureFrame) -> Result<SeriesPrediction> {
        let columns: Vec<(FeatureSpec, &[Option<f64>])> = self
            .specs()
            .into_iter()
            .map(|s| {
                frame
                    .column(&s)
                    .map(|c| (s, c))
                    .ok_or_else(|| Error::MissingFeature(s.name()))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(frame.dates.len());
        let mut clamped = Vec::with_capacity(frame.dates.len());
        for i in 0..frame.dates.len() {
            if columns.iter().any(|(_, c)| c[i].is_none()) {
                values.push(None);
                clamped.push(false);
                continue;
            }
            let (eta, c) =
                self.linear_predictor(|spec| columns.iter().find(|(s, _)| s == spec).and_then(|(_, col)| col[i]))?;
            values.push(Some(eta.exp()));
            clamped.push(c);
        }
        Ok(SeriesPrediction {
            dates: frame.dates.clone(),
            values,
            clamped,
        })
    }

    /// Rebuilds this model's features from daily data and predicts every day.
    pub fn predict_series(&self, daily: &DailySeries) -> Result<SeriesPrediction> {
        let plan = self.plan.with_specs(&self.specs())?;
        let frame = build_frame(daily, &plan)?;
        self.predict_frame(&frame)
    }

    /// `rss + sum_j lambda_j b_j' P_j b_j` at the stored coefficients.
    pub fn penalized_objective(&self, design: &DesignMatrix) -> Result<f64> {
        let pred = self.predict(design)?;
        let rss: f64 = pred.ln.iter().zip(&design.response).map(|(p, y)| (y - p).powi(2)).sum();
        let penalty: f64 = self
            .smooths
            .iter()
            .map(|t| {
                let p = super::basis::difference_penalty(&t.knots, t.degree);
                let b = nalgebra::DVector::from_column_slice(&t.coefficients);
                t.lambda * (b.transpose() * p * &b)[(0, 0)]
            })
            .sum();
        Ok(rss + penalty)
    }

    pub fn recompute_aic(&self, mode: AicMode) -> f64 {
        aic_value(self.total_edf, self.log_likelihood, mode)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: GamModel = serde_json::from_str(s)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

/// AIC of a fitted model under `mode`.
pub fn aic(model: &GamModel, mode: AicMode) -> f64 {
    model.recompute_aic(mode)
}
