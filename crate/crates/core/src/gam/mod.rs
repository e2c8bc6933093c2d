//! Penalized-spline additive models on the log response.

pub mod basis;
mod fit;
mod model;

pub use basis::{bspline_basis, CUBIC};
pub use fit::{fit, fit_with_plan, gcv_score};
pub use model::{
    aic, aic_value, gaussian_log_likelihood, log_spaced_grid, AicMode, CategoricalTerm, FitConfig, FitMeta, GamModel,
    Predictions, SeriesPrediction, SmoothTerm, TransferProvenance, MODEL_FORMAT_VERSION,
};
