use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of a runtime check, serialized as
/// `{check, pass, witness_time, margin}`.
///
/// `margin` is the tightest slack observed: nonnegative when the check
/// passes, negative at the witness when it fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub witness_time: Option<f64>,
    pub margin: f64,
}

impl CheckReport {
    pub fn passed(check: impl Into<String>, witness_time: Option<f64>, margin: f64) -> Self {
        CheckReport {
            check: check.into(),
            pass: true,
            witness_time,
            margin,
        }
    }

    /// Folds a check outcome into a report, turning an `InvariantBreach`
    /// into a failing entry. Other errors are passed through.
    pub fn from_outcome(check: &str, outcome: Result<CheckReport>) -> Result<CheckReport> {
        match outcome {
            Ok(r) => Ok(r),
            Err(Error::InvariantBreach { time, detail, .. }) => Ok(CheckReport {
                check: check.to_string(),
                pass: false,
                witness_time: time,
                margin: parse_margin(&detail).unwrap_or(f64::NEG_INFINITY),
            }),
            Err(e) => Err(e),
        }
    }
}

// Breach details carry "margin=<value>" as their last token.
fn parse_margin(detail: &str) -> Option<f64> {
    detail
        .rsplit("margin=")
        .next()
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
}

pub(crate) fn breach(
    check: &str,
    agent: Option<usize>,
    time: Option<f64>,
    detail: String,
    margin: f64,
) -> Error {
    Error::InvariantBreach {
        check: check.to_string(),
        agent,
        time,
        detail: format!("{detail}; margin={margin:e}"),
    }
}
