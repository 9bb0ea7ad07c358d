//! Estimation of the complier average causal effect in completely randomized
//! and rerandomized experiments with noncompliance.

pub mod bayes;
pub mod design;
pub mod dist;
pub mod error;
pub mod io;
pub mod linalg;
pub mod population;
pub mod reference;
pub mod regadj;
pub mod regression;
pub mod report;
pub mod rng;
pub mod simulation;
pub mod wald;

pub use bayes::BayesConfig;
pub use design::{BalanceReport, DesignKind, DesignSpec};
pub use error::{CaceError, ErrorKind, Result};
pub use population::{Assignment, FinitePopulation, LatentGroup, ObservedDataset};
pub use reference::{MixtureQuantileSpec, QuantileCache};
pub use regression::RobustVariant;
pub use report::{Diagnostics, EstimateReport, Method};
pub use simulation::{DgpConfig, MethodSelector, SimOptions, SimSettingResult};
pub use wald::RemInference;
