//! Forward variable selection by AIC with a VIF collinearity gate.
//!
//! Step 1 fits one single-variable model per candidate and keeps the one
//! with the lowest AIC. Every later step drops continuous candidates whose
//! VIF against the already-included continuous features exceeds the
//! threshold, fits the current model plus each surviving candidate and
//! adopts the lowest-AIC one, stopping as soon as no candidate lowers AIC.
//! Categorical candidates (month, weekday) bypass the VIF gate.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DesignMatrix, FeatureKind, FeaturePlan, FeatureSpec};
use crate::gam::{fit_with_plan, AicMode, FitConfig, GamModel};

pub const DEFAULT_VIF_THRESHOLD: f64 = 2.5;
const AIC_TIE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub fit: FitConfig,
    pub vif_threshold: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            fit: FitConfig::default(),
            vif_threshold: DEFAULT_VIF_THRESHOLD,
        }
    }
}

/// `1 / (1 - R^2)`.
pub fn vif_from_r2(r2: f64) -> f64 {
    if r2 >= 1.0 - 1e-12 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - r2)
    }
}

/// Variance inflation factor of `candidate` regressed (with intercept) on
/// `included`. Returns `f64::INFINITY` for perfect collinearity and exactly
/// 1 when nothing is included.
pub fn vif(candidate: &[f64], included: &[&[f64]]) -> Result<f64> {
    let n = candidate.len();
    let mean = candidate.iter().sum::<f64>() / n.max(1) as f64;
    let ss_tot: f64 = candidate.iter().map(|v| (v - mean).powi(2)).sum();
    let scale = candidate.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if n < 2 || ss_tot <= (1e-12 * scale).powi(2) * n as f64 {
        return Err(Error::DegenerateCandidate(format!("{n} rows, zero variance")));
    }
    if included.is_empty() {
        return Ok(1.0);
    }
    if let Some(bad) = included.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch(bad.len(), n));
    }
    let p = included.len() + 1;
    if n < p + 1 {
        return Err(Error::InsufficientData { needed: p + 1, got: n });
    }
    // centered regressors: the intercept is implicit
    let x = DMatrix::from_fn(n, included.len(), |r, c| {
        let col = included[c];
        let m = col.iter().sum::<f64>() / n as f64;
        col[r] - m
    });
    let y = DVector::from_iterator(n, candidate.iter().map(|v| v - mean));
    let svd = x.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max() * n as f64;
    let beta = svd.solve(&y, tol).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let resid = &y - &x * beta;
    let r2 = 1.0 - resid.norm_squared() / ss_tot;
    Ok(vif_from_r2(r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VifValue {
    Finite(f64),
    Infinite,
}

impl From<f64> for VifValue {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            VifValue::Finite(v)
        } else {
            VifValue::Infinite
        }
    }
}

impl VifValue {
    pub fn value(self) -> f64 {
        match self {
            VifValue::Finite(v) => v,
            VifValue::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum VifOutcome {
    /// Categorical candidates are not VIF-tested.
    Bypassed,
    Accepted {
        vif: f64,
    },
    Rejected {
        vif: VifValue,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CandidateFit {
    Fitted { aic: f64 },
    Failed { reason: String },
    NotFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub feature: String,
    pub vif: VifOutcome,
    pub fit: CandidateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum StepDecision {
    Chosen { feature: String, aic: f64 },
    Stop { best_candidate_aic: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub step: usize,
    pub candidates: Vec<CandidateRecord>,
    pub decision: StepDecision,
    /// AIC of the current model once this step is resolved.
    pub aic_after_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub station_id: String,
    pub aic_mode: AicMode,
    pub vif_threshold: f64,
    pub steps: Vec<SelectionStep>,
    pub selected: Vec<String>,
}

impl SelectionTrace {
    /// AIC after every adopted step, in order.
    pub fn aic_sequence(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter_map(|s| match &s.decision {
                StepDecision::Chosen { aic, .. } => Some(*aic),
                StepDecision::Stop { .. } => None,
            })
            .collect()
    }

    /// One line per step: chosen variable, its base source, AIC and the
    /// number of fitted / VIF-rejected / failed candidates.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4}  {:<12} {:<6} {:>14} {:>6} {:>8} {:>6}",
            "step", "chosen", "base", "aic", "fitted", "rejected", "failed"
        );
        for s in &self.steps {
            let fitted = s
                .candidates
                .iter()
                .filter(|c| matches!(c.fit, CandidateFit::Fitted { .. }))
                .count();
            let failed = s
                .candidates
                .iter()
                .filter(|c| matches!(c.fit, CandidateFit::Failed { .. }))
                .count();
            let rejected = s
                .candidates
                .iter()
                .filter(|c| matches!(c.vif, VifOutcome::Rejected { .. }))
                .count();
            let (chosen, base) = match &s.decision {
                StepDecision::Chosen { feature, .. } => {
                    let base = feature.split('_').next().unwrap_or("").to_string();
                    (feature.clone(), base)
                }
                StepDecision::Stop { .. } => ("<stop>".to_string(), "-".to_string()),
            };
            let _ = writeln!(
                out,
                "{:>4}  {:<12} {:<6} {:>14.4} {:>6} {:>8} {:>6}",
                s.step, chosen, base, s.aic_after_step, fitted, rejected, failed
            );
        }
        out
    }
}

fn fit_terms(design: &DesignMatrix, terms: &[FeatureSpec], plan: &FeaturePlan, config: &FitConfig) -> Result<GamModel> {
    fit_with_plan(design, terms, plan, config)
}

/// Runs forward selection over the candidate pool `plan.specs`; `design`
/// must hold a column for every candidate.
pub fn forward_select(
    design: &DesignMatrix,
    plan: &FeaturePlan,
    config: &SelectionConfig,
) -> Result<(GamModel, SelectionTrace)> {
    let pool = &plan.specs;
    if pool.is_empty() {
        return Err(Error::InvalidInput("candidate pool is empty".into()));
    }
    for spec in pool {
        if design.column(spec).is_none() {
            return Err(Error::MissingFeature(spec.name()));
        }
    }
    let mut trace = SelectionTrace {
        station_id: design.station_id.clone(),
        aic_mode: config.fit.aic_mode,
        vif_threshold: config.vif_threshold,
        steps: Vec::new(),
        selected: Vec::new(),
    };
    let mut included: Vec<FeatureSpec> = Vec::new();
    let mut current: Option<GamModel> = None;

    loop {
        let remaining: Vec<FeatureSpec> = pool.iter().filter(|s| !included.contains(s)).copied().collect();
        let step_no = trace.steps.len() + 1;
        if remaining.is_empty() {
            let aic = current.as_ref().map(|m| m.aic).unwrap_or(f64::INFINITY);
            trace.steps.push(SelectionStep {
                step: step_no,
                candidates: Vec::new(),
                decision: StepDecision::Stop {
                    best_candidate_aic: None,
                },
                aic_after_step: aic,
            });
            break;
        }

        let continuous: Vec<&[f64]> = included
            .iter()
            .filter(|s| s.kind() == FeatureKind::Smooth)
            .map(|s| design.column(s).unwrap())
            .collect();
        let gates: Vec<VifOutcome> = remaining
            .iter()
            .map(|cand| {
                if cand.kind() == FeatureKind::Categorical {
                    return VifOutcome::Bypassed;
                }
                match vif(design.column(cand).unwrap(), &continuous) {
                    Ok(v) if v > config.vif_threshold => VifOutcome::Rejected { vif: v.into() },
                    Ok(v) => VifOutcome::Accepted { vif: v },
                    Err(e) => VifOutcome::Failed { reason: e.to_string() },
                }
            })
            .collect();

        let fits: Vec<Option<Result<GamModel>>> = remaining
            .par_iter()
            .zip(gates.par_iter())
            .map(|(cand, gate)| match gate {
                VifOutcome::Bypassed | VifOutcome::Accepted { .. } => {
                    let mut terms = included.clone();
                    terms.push(*cand);
                    Some(fit_terms(design, &terms, plan, &config.fit))
                }
                _ => None,
            })
            .collect();

        let mut best: Option<(usize, f64)> = None;
        let mut records = Vec::with_capacity(remaining.len());
        for (i, (cand, (gate, fit))) in remaining.iter().zip(gates.into_iter().zip(&fits)).enumerate() {
            let outcome = match fit {
                None => CandidateFit::NotFit,
                Some(Err(e)) => CandidateFit::Failed { reason: e.to_string() },
                Some(Ok(m)) => {
                    if best.is_none_or(|(_, b)| m.aic < b - AIC_TIE) {
                        best = Some((i, m.aic));
                    }
                    CandidateFit::Fitted { aic: m.aic }
                }
            };
            records.push(CandidateRecord {
                feature: cand.name(),
                vif: gate,
                fit: outcome,
            });
        }

        let current_aic = current.as_ref().map(|m| m.aic);
        let improves = match (best, current_aic) {
            (Some((_, b)), Some(c)) => b < c,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improves {
            let (i, aic) = best.unwrap();
            let model = match fits.into_iter().nth(i) {
                Some(Some(Ok(m))) => m,
                _ => unreachable!("best candidate has a fitted model"),
            };
            included.push(remaining[i]);
            trace.selected.push(remaining[i].name());
            trace.steps.push(SelectionStep {
                step: step_no,
                candidates: records,
                decision: StepDecision::Chosen {
                    feature: remaining[i].name(),
                    aic,
                },
                aic_after_step: aic,
            });
            current = Some(model);
        } else {
            if current.is_none() {
                return Err(Error::NoViableModel);
            }
            trace.steps.push(SelectionStep {
                step: step_no,
                candidates: records,
                decision: StepDecision::Stop {
                    best_candidate_aic: best.map(|(_, a)| a),
                },
                aic_after_step: current_aic.unwrap(),
            });
            break;
        }
    }
    Ok((current.expect("selection adopted at least one term"), trace))
}

/// Adds the weekday term when selection did not pick it.
pub fn ensure_weekday(model: &GamModel, design: &DesignMatrix) -> Result<GamModel> {
    let weekday = FeatureSpec::weekday();
    if model.has_term(&weekday) {
        return Ok(model.clone());
    }
    let mut terms = model.plan.specs.clone();
    terms.push(weekday);
    fit_with_plan(design, &terms, &model.plan, &model.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DesignColumn, Source};
    use crate::ingest::Field;
    use chrono::{Duration, NaiveDate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::collections::BTreeMap;

    #[test]
    fn orthogonal_candidate_has_unit_vif() {
        let x = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let z = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let v = vif(&z, &[&x]).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn r2_of_point_six_is_threshold() {
        assert!((vif_from_r2(0.6) - 2.5).abs() < 1e-12);
        // candidate = x + z with var(z) = 2/3 var(x), x and z orthogonal
        let x = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let z = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let c: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b * (2.0f64 / 3.0).sqrt()).collect();
        assert!((vif(&c, &[&x]).unwrap() - 2.5).abs() < 1e-9);
    }

    #[test]
    fn exact_copy_is_infinite() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
        assert_eq!(vif(&x, &[&y, &x]).unwrap(), f64::INFINITY);
        assert_eq!(vif(&x, &[]).unwrap(), 1.0);
        assert!(matches!(
            vif(&[2.0; 10], &[&y[..10]]),
            Err(Error::DegenerateCandidate(_))
        ));
    }

    fn synthetic(seed: u64, n: usize, signal: bool) -> (DesignMatrix, FeaturePlan) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let specs = [Source::T, Source::Ws, Source::Rh, Source::Dp, Source::P]
            .map(FeatureSpec::new)
            .to_vec();
        let cols: Vec<Vec<f64>> = specs
            .iter()
            .map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let response: Vec<f64> = (0..n)
            .map(|i| {
                let s = if signal { (1.5 * cols[0][i]).sin() } else { 0.0 };
                2.0 + s + 0.2 * normal.sample(&mut rng)
            })
            .collect();
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let design = DesignMatrix {
            station_id: "S".into(),
            target: Field::No2,
            dates: (0..n as i64).map(|i| start + Duration::days(i)).collect(),
            response,
            columns: specs
                .iter()
                .zip(cols)
                .map(|(s, v)| DesignColumn { spec: *s, values: v })
                .collect(),
            dropped: BTreeMap::new(),
        };
        (design, FeaturePlan { specs, pca: None })
    }

    #[test]
    fn picks_true_driver_first() {
        let (design, plan) = synthetic(1, 400, true);
        let (model, trace) = forward_select(&design, &plan, &SelectionConfig::default()).unwrap();
        assert_eq!(trace.selected[0], "T");
        assert!(model.has_term(&FeatureSpec::new(Source::T)));
        let seq = trace.aic_sequence();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
        assert!(matches!(
            trace.steps.last().unwrap().decision,
            StepDecision::Stop { .. }
        ));
        // chosen candidate is the AIC minimum of its step
        for step in &trace.steps {
            if let StepDecision::Chosen { aic, .. } = step.decision {
                for c in &step.candidates {
                    if let CandidateFit::Fitted { aic: other } = c.fit {
                        assert!(aic <= other + AIC_TIE);
                    }
                }
            }
        }
        assert!(trace.table().lines().count() == trace.steps.len() + 1);
    }

    #[test]
    fn selection_is_deterministic() {
        let (design, plan) = synthetic(4, 300, true);
        let a = forward_select(&design, &plan, &SelectionConfig::default()).unwrap();
        let b = forward_select(&design, &plan, &SelectionConfig::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a.1).unwrap(),
            serde_json::to_string(&b.1).unwrap()
        );
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn noise_response_stops_early() {
        let (design, plan) = synthetic(2, 400, false);
        let (_, trace) = forward_select(&design, &plan, &SelectionConfig::default()).unwrap();
        assert!(trace.selected.len() <= 2, "{:?}", trace.selected);
        let seq = trace.aic_sequence();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
        match trace.steps.last().unwrap().decision {
            StepDecision::Stop {
                best_candidate_aic: Some(b),
            } => {
                assert!(b >= *seq.last().unwrap());
            }
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weekday_is_added_once() {
        let (mut design, plan) = synthetic(3, 300, true);
        design.columns.push(DesignColumn {
            spec: FeatureSpec::weekday(),
            values: (0..300).map(|i| (i % 7) as f64).collect(),
        });
        let model = fit_with_plan(&design, &plan.specs[..1], &plan, &FitConfig::default()).unwrap();
        assert!(!model.has_term(&FeatureSpec::weekday()));
        let with = ensure_weekday(&model, &design).unwrap();
        assert_eq!(with.weekday_term().unwrap().levels.len(), 7);
        let again = ensure_weekday(&with, &design).unwrap();
        assert_eq!(with.to_json().unwrap(), again.to_json().unwrap());
    }

    #[test]
    fn empty_pool_is_rejected() {
        let (design, _) = synthetic(3, 100, true);
        let plan = FeaturePlan {
            specs: vec![],
            pca: None,
        };
        assert!(forward_select(&design, &plan, &SelectionConfig::default()).is_err());
    }
}
