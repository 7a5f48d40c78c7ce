//! Executable checks of the tuner's guarantees on problems with known optima.

mod boundary;
mod good_event;
mod stats;
mod theorem;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use boundary::{
    boundary_crossing_test, boundary_log_term, stitched_boundary, BoundaryParams, CrossingReport,
    MartingaleSpec,
};
pub use good_event::{
    good_event_frequency, good_event_margin, GoodEventFrequency, GoodEventReport,
};
pub use stats::{clopper_pearson, linear_fit, loglog_fit, median, SlopeFit};
pub use theorem::{
    check_localization, check_theorem_bounds, check_trace_inequalities, LocalizationTally, REL_TOL,
};

use crate::sgd::SgdError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("trace was run without a full record")]
    MissingRecord,
    #[error("oracle has no exact-subgradient side channel")]
    MissingSideChannel,
    #[error("oracle exposes no optimum")]
    MissingOptimum,
    #[error("oracle exposes no function values")]
    MissingValues,
    #[error(transparent)]
    Sgd(#[from] SgdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    /// A proven inequality failed.
    Fail,
    /// A surrogate or high-probability inequality failed.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One checked inequality `value ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub id: String,
    pub value: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:.6e} {:.6e} {}",
            self.id, self.value, self.bound, self.verdict
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn has_failure(&self) -> bool {
        self.lines.iter().any(|l| l.verdict == Verdict::Fail)
    }

    pub fn get(&self, id: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.id == id)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckLine> {
        self.lines.iter().filter(|l| l.verdict == Verdict::Fail)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}
