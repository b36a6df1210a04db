//! Rolling-window correlation analysis of stock return panels with
//! random-matrix benchmarks.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below cover the common case.

// `!(x > 0)` style guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlate;
mod eigen;
pub mod error;
pub mod io;
pub mod modes;
pub mod panel;
pub mod pipeline;
pub mod risk;
pub mod scalar;
pub mod spectra;
pub mod surrogate;
pub mod synth;

pub use correlate::{
    correlation_matrix, log_returns, rolling_correlations, MetricSeries, ReturnPanel, RollingCorrelator, WindowSpec,
    WindowedCorrelation,
};
pub use error::{Error, Result};
pub use modes::{industry_contribution, project_market_mode, rank_components, IndustryContribution, ModeProjection};
pub use panel::{ingest_prices, IndustryMap, IndustryScheme, PricePanel, PriceRecord};
pub use risk::{crf, crf_series, CrfSeries};
pub use scalar::Real;
pub use spectra::{decompose, mp_bounds, LeadingModes, MPModel, Spectrum};
pub use surrogate::{null_threshold, SurrogateParams, SurrogateSummary};
pub use synth::{SynthModel, SynthSpec};

pub type PricePanel64 = PricePanel<f64>;
pub type ReturnPanel64 = ReturnPanel<f64>;
pub type Correlation64 = WindowedCorrelation<f64>;
pub type Spectrum64 = Spectrum<f64>;
pub type MPModel64 = MPModel<f64>;
pub type MetricSeries64 = MetricSeries<f64>;

pub type PricePanel32 = PricePanel<f32>;
pub type ReturnPanel32 = ReturnPanel<f32>;
pub type Correlation32 = WindowedCorrelation<f32>;
pub type Spectrum32 = Spectrum<f32>;
pub type MPModel32 = MPModel<f32>;
pub type MetricSeries32 = MetricSeries<f32>;
