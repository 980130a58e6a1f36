//! Parameter sweeps.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scenario::{ConfigError, Scenario};
use super::{run, Metrics, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SweepParam {
    Clients,
    ReadRatio,
    /// Process count, with `f = (n − 1) / 2`.
    N,
}

impl FromStr for SweepParam {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clients" => Ok(Self::Clients),
            "readRatio" | "read_ratio" => Ok(Self::ReadRatio),
            "n" => Ok(Self::N),
            other => Err(ConfigError::Invalid(format!(
                "unknown sweep parameter {other:?}, expected clients, readRatio or n"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub value: f64,
    pub passed: bool,
    /// Names of failed properties.
    pub failed: Vec<String>,
    /// Names of exceeded bounds.
    pub bounds_exceeded: Vec<String>,
    pub metrics: Metrics,
}

/// Copy of `base` with `param` set to `value`.
pub fn with_param(base: &Scenario, param: SweepParam, value: f64) -> Result<Scenario, ConfigError> {
    let mut s = base.clone();
    let whole = || {
        if value >= 1.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(ConfigError::Invalid(format!("{param:?} needs a positive integer, got {value}")))
        }
    };
    match param {
        SweepParam::Clients => s.workload.clients = whole()?,
        SweepParam::ReadRatio => s.workload.read_ratio = value,
        SweepParam::N => {
            s.n = whole()?;
            s.f = (s.n - 1) / 2;
        }
    }
    s.validate()?;
    Ok(s)
}

pub fn sweep(base: &Scenario, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, RunError> {
    values
        .iter()
        .map(|&value| {
            let scenario = with_param(base, param, value)?;
            let out = run(&scenario)?;
            Ok(SweepRow {
                value,
                passed: out.report.passed,
                failed: out.report.failures().map(|p| p.name.clone()).collect(),
                bounds_exceeded: out.report.bound_failures().map(|p| p.name.clone()).collect(),
                metrics: out.metrics,
            })
        })
        .collect()
}
