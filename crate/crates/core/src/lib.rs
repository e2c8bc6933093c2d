//! Weather-normalized additive models for air-quality trend analysis.
//!
//! The crate fits penalized-spline additive models on the log of a pollutant
//! concentration, selects explanatory variables with AIC under a VIF
//! collinearity gate, and uses the fitted models to estimate how much a
//! period of reduced activity (a lockdown) changed pollution once weather is
//! accounted for. Lockdown models are derived from the long-term model by
//! freezing every weather and seasonal term and refitting only the intercept
//! and the day-of-week effect, and later periods are explained as a convex
//! mixture of the two models.
//!
//! Modules follow the pipeline order:
//!
//! - [`ingest`]: observation/station CSV parsing and daily aggregation
//! - [`features`]: explanatory variables and design matrices
//! - [`gam`]: B-spline basis, penalized fitting, prediction, AIC and GCV
//! - [`selection`]: forward selection with AIC and VIF
//! - [`evaluation`]: temporal cross-validation, metrics and a synthetic generator
//! - [`transfer`]: lockdown models by parameter freezing
//! - [`analysis`]: reductions, weather comparison, mixtures and scenarios
//! - [`plot`]: deterministic SVG line charts
//! - [`pipeline`]: config-driven batch runs behind the `airgam` binary

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gam;
pub mod ingest;
pub mod pipeline;
pub mod plot;
pub mod selection;
pub mod transfer;

pub use error::{Error, Result};
pub use features::{DesignMatrix, FeaturePlan, FeatureSpec, Source};
pub use gam::{AicMode, FitConfig, GamModel};
pub use ingest::{DailySeries, Field, Observation, StationMeta};
