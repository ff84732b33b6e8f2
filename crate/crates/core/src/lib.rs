//! Carotid wall analysis toolkit: boundary geometry, evaluation metrics,
//! multitask and physics-guided losses, a Monte Carlo dropout risk head,
//! uncertainty aggregation and hemodynamic biomarkers.

pub mod config;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod grid;
pub mod hemodynamics;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod riskmodel;
pub mod uncertainty;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::{Grid, ProbMap, WallMask};
