//! Penalized least squares on the log response.
//!
//! The linear predictor is an intercept, one centered penalized cubic
//! B-spline block per smooth feature and reference-coded dummies per
//! categorical feature. The sum-to-zero constraint of each smooth is
//! absorbed with a Householder reflection of the basis column means, so the
//! solver works in the `K - 1` dimensional constrained space and maps back
//! to `K` spline coefficients afterwards.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::basis::{basis_size, bspline_basis, difference_penalty, quantile_knots, CUBIC};
use super::model::{
    aic_value, gaussian_log_likelihood, CategoricalTerm, FitConfig, FitMeta, GamModel, SmoothTerm, MODEL_FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::features::{DesignMatrix, FeatureKind, FeatureSpec};

enum BlockKind {
    Smooth {
        knots: Vec<f64>,
        /// `K x (K-1)` null-space basis of the centering constraint.
        constraint: DMatrix<f64>,
        /// Penalty in the constrained coordinates.
        penalty: DMatrix<f64>,
    },
    Categorical {
        levels: Vec<i64>,
    },
}

struct Block {
    spec: FeatureSpec,
    kind: BlockKind,
    cols: Range<usize>,
}

struct System {
    blocks: Vec<Block>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    n: usize,
    ridge: f64,
    reduced: Vec<(String, usize)>,
}

struct Solution {
    theta: DVector<f64>,
    /// Diagonal of the influence matrix `(G + S)^-1 G` in parameter space.
    influence_diag: Vec<f64>,
    inverse_diag: Vec<f64>,
    rss_estimate: f64,
}

fn distinct_count(x: &[f64]) -> usize {
    let mut v: Vec<f64> = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Householder reflection whose trailing `K - 1` columns span the
/// orthogonal complement of `c`.
fn centering_constraint(c: &DVector<f64>) -> DMatrix<f64> {
    let k = c.len();
    let norm = c.norm();
    let mut v = c.clone();
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * norm;
    let vv = v.dot(&v);
    let mut h = DMatrix::identity(k, k);
    if vv > 0.0 {
        h -= (&v * v.transpose()) * (2.0 / vv);
    }
    h.columns(1, k - 1).into_owned()
}

fn check_rows(design: &DesignMatrix, terms: &[FeatureSpec]) -> Result<()> {
    let needed = 10 * (1 + terms.len());
    if design.n_rows() < needed {
        return Err(Error::TooFewRows {
            needed,
            got: design.n_rows(),
        });
    }
    Ok(())
}

fn assemble(design: &DesignMatrix, terms: &[FeatureSpec], config: &FitConfig) -> Result<System> {
    config.validate()?;
    check_rows(design, terms)?;
    let n = design.n_rows();
    let mut blocks = Vec::new();
    let mut pieces: Vec<DMatrix<f64>> = Vec::new();
    let mut reduced = Vec::new();
    let mut p = 1;
    for (i, spec) in terms.iter().enumerate() {
        if terms[..i].contains(spec) {
            return Err(Error::InvalidInput(format!("term {spec} listed twice")));
        }
        let x = design.column(spec).ok_or_else(|| Error::MissingFeature(spec.name()))?;
        match spec.kind() {
            FeatureKind::Smooth => {
                let distinct = distinct_count(x);
                if distinct < 2 {
                    return Err(Error::DegenerateColumn(spec.name()));
                }
                let target = config.basis_size.min(distinct.max(4));
                let knots = quantile_knots(x, target, CUBIC)?;
                let k = basis_size(&knots, CUBIC);
                if k < config.basis_size {
                    reduced.push((spec.name(), k));
                }
                let basis = bspline_basis(x, &knots, CUBIC)?;
                let means = DVector::from_iterator(k, basis.column_iter().map(|c| c.sum() / n as f64));
                let constraint = centering_constraint(&means);
                let penalty = constraint.transpose() * difference_penalty(&knots, CUBIC) * &constraint;
                let cols = basis * &constraint;
                let width = cols.ncols();
                pieces.push(cols);
                blocks.push(Block {
                    spec: *spec,
                    kind: BlockKind::Smooth {
                        knots,
                        constraint,
                        penalty,
                    },
                    cols: p..p + width,
                });
                p += width;
            }
            FeatureKind::Categorical => {
                let mut levels: Vec<i64> = x.iter().map(|v| v.round() as i64).collect();
                levels.sort_unstable();
                levels.dedup();
                let width = levels.len() - 1;
                let cols = DMatrix::from_fn(
                    n,
                    width,
                    |r, c| {
                        if x[r].round() as i64 == levels[c + 1] {
                            1.0
                        } else {
                            0.0
                        }
                    },
                );
                pieces.push(cols);
                blocks.push(Block {
                    spec: *spec,
                    kind: BlockKind::Categorical { levels },
                    cols: p..p + width,
                });
                p += width;
            }
        }
    }
    let mut xmat = DMatrix::zeros(n, p);
    xmat.column_mut(0).fill(1.0);
    for (piece, block) in pieces.iter().zip(&blocks) {
        xmat.columns_mut(block.cols.start, block.cols.len()).copy_from(piece);
    }
    let y = DVector::from_column_slice(&design.response);
    let gram = xmat.tr_mul(&xmat);
    let xty = xmat.tr_mul(&y);
    let mean_diag = gram.diagonal().sum() / p as f64;
    Ok(System {
        blocks,
        gram,
        xty,
        yty: y.dot(&y),
        n,
        ridge: config.ridge * mean_diag.max(1.0),
        reduced,
    })
}

impl System {
    fn n_smooth(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| matches!(b.kind, BlockKind::Smooth { .. }))
            .count()
    }

    fn factor(&self, lambdas: &[f64]) -> Result<Cholesky<f64, Dyn>> {
        let mut a = self.gram.clone();
        let mut j = 0;
        for block in &self.blocks {
            if let BlockKind::Smooth { penalty, .. } = &block.kind {
                let start = block.cols.start;
                let w = block.cols.len();
                let mut view = a.view_mut((start, start), (w, w));
                view += penalty * lambdas[j];
                for i in block.cols.clone() {
                    a[(i, i)] += self.ridge;
                }
                j += 1;
            }
        }
        Cholesky::new(a).ok_or(Error::RankDeficient)
    }

    fn solve(&self, lambdas: &[f64], want_inverse: bool) -> Result<Solution> {
        let chol = self.factor(lambdas)?;
        let theta = chol.solve(&self.xty);
        let influence = chol.solve(&self.gram);
        let rss_estimate = (self.yty - 2.0 * theta.dot(&self.xty) + theta.dot(&(&self.gram * &theta))).max(0.0);
        let inverse_diag = if want_inverse {
            chol.inverse().diagonal().iter().copied().collect()
        } else {
            Vec::new()
        };
        Ok(Solution {
            theta,
            influence_diag: influence.diagonal().iter().copied().collect(),
            inverse_diag,
            rss_estimate,
        })
    }

    fn total_edf(&self, sol: &Solution) -> f64 {
        1.0 + self
            .blocks
            .iter()
            .map(|b| b.cols.clone().map(|i| sol.influence_diag[i]).sum::<f64>())
            .sum::<f64>()
    }

    fn gcv(&self, lambdas: &[f64]) -> Result<f64> {
        let sol = self.solve(lambdas, false)?;
        let edf = self.total_edf(&sol);
        let n = self.n as f64;
        if edf >= n - 1.0 {
            return Err(Error::InvalidInput(format!(
                "effective degrees of freedom {edf:.3} saturate {} rows",
                self.n
            )));
        }
        Ok(n * sol.rss_estimate / (n - edf).powi(2))
    }
}

/// Generalized cross-validation score `n * RSS / (n - edf)^2` of the
/// penalized fit at fixed smoothing weights (one per smooth term, in order).
pub fn gcv_score(design: &DesignMatrix, terms: &[FeatureSpec], lambdas: &[f64], config: &FitConfig) -> Result<f64> {
    let system = assemble(design, terms, config)?;
    if lambdas.len() != system.n_smooth() {
        return Err(Error::LengthMismatch(lambdas.len(), system.n_smooth()));
    }
    system.gcv(lambdas)
}

struct LambdaSearch {
    lambdas: Vec<f64>,
    cycles_run: usize,
    converged: bool,
    gcv: Option<f64>,
}

/// Block coordinate descent over the grid, one smooth at a time in term
/// order. Ties keep the earlier grid value.
fn search_lambdas(system: &System, grid: &[f64], cycles: usize) -> LambdaSearch {
    let m = system.n_smooth();
    let start = grid[grid.len() / 2];
    let mut lambdas = vec![start; m];
    if m == 0 {
        return LambdaSearch {
            lambdas,
            cycles_run: 0,
            converged: true,
            gcv: system.gcv(&[]).ok(),
        };
    }
    let mut current = system.gcv(&lambdas).unwrap_or(f64::INFINITY);
    let mut cycles_run = 0;
    let mut converged = false;
    while cycles_run < cycles {
        let mut changed = false;
        for j in 0..m {
            let mut best = (lambdas[j], current);
            for &lam in grid {
                if lam == lambdas[j] {
                    continue;
                }
                let mut trial = lambdas.clone();
                trial[j] = lam;
                if let Ok(score) = system.gcv(&trial) {
                    if score < best.1 {
                        best = (lam, score);
                    }
                }
            }
            if best.0 != lambdas[j] {
                lambdas[j] = best.0;
                current = best.1;
                changed = true;
            }
        }
        cycles_run += 1;
        if !changed {
            converged = true;
            break;
        }
    }
    LambdaSearch {
        lambdas,
        cycles_run,
        converged,
        gcv: current.is_finite().then_some(current),
    }
}

/// Fits `ln(y) = a + sum s_j(x_j) + sum b_k Z_k + e` over the design rows.
pub fn fit(design: &DesignMatrix, terms: &[FeatureSpec], config: &FitConfig) -> Result<GamModel> {
    let system = assemble(design, terms, config)?;
    let search = search_lambdas(&system, &config.lambda_grid, config.cycles);
    let sol = system.solve(&search.lambdas, true)?;

    let mut smooths = Vec::new();
    let mut categoricals = Vec::new();
    let mut j = 0;
    for block in &system.blocks {
        let gamma = sol.theta.rows(block.cols.start, block.cols.len());
        let edf: f64 = block.cols.clone().map(|i| sol.influence_diag[i]).sum();
        match &block.kind {
            BlockKind::Smooth { knots, constraint, .. } => {
                let beta = constraint * gamma;
                smooths.push(SmoothTerm {
                    feature: block.spec,
                    knots: knots.clone(),
                    degree: CUBIC,
                    coefficients: beta.iter().copied().collect(),
                    penalty_order: 2,
                    lambda: search.lambdas[j],
                    edf,
                });
                j += 1;
            }
            BlockKind::Categorical { levels } => {
                let mut coefficients = vec![0.0];
                coefficients.extend(gamma.iter().copied());
                let mut var = vec![0.0];
                var.extend(block.cols.clone().map(|i| sol.inverse_diag[i]));
                categoricals.push(CategoricalTerm {
                    feature: block.spec,
                    levels: levels.clone(),
                    coefficients,
                    std_errors: var,
                    edf,
                });
            }
        }
    }

    let total_edf = system.total_edf(&sol);
    let mut model = GamModel {
        format_version: MODEL_FORMAT_VERSION,
        station_id: design.station_id.clone(),
        target: design.target,
        plan: crate::features::FeaturePlan {
            specs: terms.to_vec(),
            pca: None,
        },
        intercept: sol.theta[0],
        smooths,
        categoricals,
        sigma2: 0.0,
        rss: 0.0,
        n_train: system.n,
        total_edf,
        log_likelihood: 0.0,
        aic: 0.0,
        aic_mode: config.aic_mode,
        train_period: (design.dates[0], design.dates[design.n_rows() - 1]),
        fit_meta: FitMeta {
            lambda_grid: config.lambda_grid.clone(),
            cycles_run: search.cycles_run,
            lambda_converged: search.converged,
            gcv: search.gcv,
            reduced_bases: system.reduced.clone(),
        },
        config: config.clone(),
        transfer_provenance: None,
    };

    // residuals through the prediction path so refits reproduce them exactly
    let pred = model.predict(design)?;
    let rss: f64 = pred.ln.iter().zip(&design.response).map(|(p, y)| (y - p).powi(2)).sum();
    let dof = (system.n as f64 - total_edf).max(1.0);
    model.rss = rss;
    model.sigma2 = rss / dof;
    model.log_likelihood = gaussian_log_likelihood(rss, system.n);
    model.aic = aic_value(total_edf, model.log_likelihood, config.aic_mode);
    for term in &mut model.categoricals {
        for se in term.std_errors.iter_mut() {
            *se = (*se * model.sigma2).sqrt();
        }
    }
    Ok(model)
}

/// Fits with the feature transforms of `plan` recorded in the model so that
/// predictions can be rebuilt from daily data.
pub fn fit_with_plan(
    design: &DesignMatrix,
    terms: &[FeatureSpec],
    plan: &crate::features::FeaturePlan,
    config: &FitConfig,
) -> Result<GamModel> {
    let mut model = fit(design, terms, config)?;
    model.plan = plan.with_specs(terms)?;
    Ok(model)
}
