use serde::{Deserialize, Serialize};

use super::Problem;
use crate::rng::StreamId;
use crate::sgd::{sgd_run, SgdError, SgdOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub eta: f64,
    pub steps: u64,
    /// Gap of the averaged iterate.
    pub gap: f64,
    /// Gap of the last iterate.
    pub final_gap: f64,
}

/// Plain SGD at every grid step size, each with `⌊B / |grid|⌋` steps.
pub fn grid_search_baseline(
    problem: &Problem,
    x0: &[f64],
    budget: u64,
    grid: &[f64],
    seed: StreamId,
) -> Result<Vec<GridCandidate>, SgdError> {
    if grid.is_empty() {
        return Err(SgdError::ZeroSteps);
    }
    let steps = budget / grid.len() as u64;
    let options = SgdOptions {
        record_full: true,
        track_best: false,
    };
    grid.iter()
        .enumerate()
        .map(|(j, &eta)| {
            let trace = sgd_run(
                problem,
                problem.domain(),
                x0,
                eta,
                steps,
                seed.derive(&[j as u64]),
                options,
            )?;
            let last = trace.x_final().expect("record was requested");
            Ok(GridCandidate {
                eta,
                steps,
                gap: problem.gap(&trace.x_avg),
                final_gap: problem.gap(last),
            })
        })
        .collect()
}
