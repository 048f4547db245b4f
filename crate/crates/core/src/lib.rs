//! Dynamic Boltzmann machine forecasters for heavy-tailed, heteroskedastic
//! time series.
//!
//! * [`dybm_mean`]: Gaussian DyBM mean predictor with online learning.
//! * [`ggd`]: generalized Gaussian likelihood, shape re-estimation and the
//!   generalized DyBM training loop.
//! * [`dybm_variance`]: variance DyBM, GARCH reference model, closed-form
//!   and recursive multi-step variance forecasts, batch fitting.
//! * [`timeseries_io`]: returns, scaling, splits and file formats.
//! * [`eval`]: metrics, synthetic generators and experiment harnesses.
//!
//! Models are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common `f64` instantiation.
// `!(x > 0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dybm_mean;
pub mod dybm_variance;
pub mod error;
pub mod eval;
pub mod ggd;
pub mod scalar;
pub mod special;
pub mod timeseries_io;

pub use error::{DybmError, Result};
pub use scalar::Scalar;

pub type MeanModel64 = dybm_mean::MeanModel<f64>;
pub type MeanState64 = dybm_mean::MeanState<f64>;
pub type GgdDyBm64 = ggd::GgdDyBm<f64>;
pub type GgdParams64 = ggd::GgdParams<f64>;
pub type VarModel64 = dybm_variance::VarModel<f64>;
pub type GarchParams64 = dybm_variance::GarchParams<f64>;
pub type ForecastConstants64 = dybm_variance::ForecastConstants<f64>;
pub type SeriesFrame64 = timeseries_io::SeriesFrame<f64>;

pub type MeanModel32 = dybm_mean::MeanModel<f32>;
pub type GgdParams32 = ggd::GgdParams<f32>;
pub type VarModel32 = dybm_variance::VarModel<f32>;
