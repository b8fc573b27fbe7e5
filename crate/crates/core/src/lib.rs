//! Disease-progression analytics on longitudinal event logs.

pub mod cluster;
pub mod cohort;
pub mod error;
pub mod features;
pub mod impute;
pub mod ingest;
pub mod linalg;
pub mod msm;
pub mod scalar;
pub mod synth;
pub mod survival;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type NumericTable64 = impute::NumericTable<f64>;
pub type SurvivalData64 = survival::SurvivalData<f64>;
pub type HazardFit64 = survival::HazardFit<f64>;
pub type KaplanMeier64 = survival::KaplanMeier<f64>;
pub type StateSequence64 = msm::StateSequence<f64>;
pub type TransitionEventSet64 = msm::TransitionEventSet<f64>;
pub type TransitionMatrixSeries64 = msm::TransitionMatrixSeries<f64>;
pub type Clustering64 = cluster::Clustering<f64>;
