//! Sequential least-squares estimation of autoregressive processes that may
//! have unit roots on the stability boundary. The crate covers the whole
//! pipeline: characteristic-root analysis and region classification,
//! solvability/positivity conditions with their stationary limits, process
//! simulation, the Fisher-trace stopping rule and sequential estimator, the
//! boundary limit laws (transformation matrices, constants, first-passage
//! samplers), and Monte Carlo experiment drivers.

pub mod cli;
pub mod conditions;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod limits;
pub mod polyroots;
pub mod process;
pub mod report;

pub use error::{Error, Result};
pub use polyroots::{ParamVector, RegionClass, RootSet, UnitFactorization};
