//! Uniform result type shared by all estimators.

use serde::{Deserialize, Serialize};

use crate::bayes::BayesDiagnostics;
use crate::error::CaceError;
use crate::regadj::AdjDiagnostics;
use crate::regression::RobustVariant;
use crate::wald::WaldDiagnostics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Wald,
    WaldRem,
    AdjEhw,
    AdjHc2,
    AdjHc3,
    Bayes,
}

impl Method {
    pub fn adjusted(variant: RobustVariant) -> Self {
        match variant {
            RobustVariant::Ehw => Method::AdjEhw,
            RobustVariant::Hc2 => Method::AdjHc2,
            RobustVariant::Hc3 => Method::AdjHc3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wald => "wald",
            Method::WaldRem => "wald-rem",
            Method::AdjEhw => "adj-ehw",
            Method::AdjHc2 => "adj-hc2",
            Method::AdjHc3 => "adj-hc3",
            Method::Bayes => "bayes",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = CaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Method::Wald, Method::WaldRem, Method::AdjEhw, Method::AdjHc2, Method::AdjHc3, Method::Bayes]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CaceError::InvalidConfig(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Diagnostics {
    Wald(WaldDiagnostics),
    Adj(AdjDiagnostics),
    Bayes(BayesDiagnostics),
}

/// A point estimate with a two-sided interval at level `1 − alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    pub point: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub alpha: f64,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn length(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}
