use std::cmp::Ordering;

use rayon::prelude::*;

use crate::mask::SubsetMask;
use crate::rollout::Metrics;
use crate::scenario::Scenario;
use crate::selector::{Evaluator, SelectError, SelectionOutcome};
use crate::world::RobotState;

/// Largest soft count the exhaustive search accepts.
pub const MAX_EXHAUSTIVE_SOFT: usize = 20;

/// Lexicographic quality of a rollout, larger is better:
/// (full horizon, waypoints arrived, goal reached, completed steps).
pub type RankKey = (bool, usize, bool, usize);

pub fn rank_key(m: &Metrics) -> RankKey {
    (
        m.is_full_horizon(),
        m.waypoints_arrived,
        m.goal_reached,
        m.feasible_horizon,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    pub outcome: SelectionOutcome,
    /// Metrics of every mask, indexed by [`SubsetMask::index`].
    pub per_mask: Vec<Metrics>,
}

/// `Greater` when `a` beats `b`: better rank key, then fewer imposed
/// constraints, then the lower mask index.
fn better(a: (&SubsetMask, &Metrics), b: (&SubsetMask, &Metrics)) -> Ordering {
    rank_key(a.1)
        .cmp(&rank_key(b.1))
        .then(b.0.count_ones().cmp(&a.0.count_ones()))
        .then(b.0.index().cmp(&a.0.index()))
}

/// Roll out every one of the `2^{n_S}` masks and keep the best.
///
/// The feasible-horizon requirement comes first in the ranking, so a mask
/// that visits more waypoints before the QP fails never beats one that
/// completes the horizon.
pub fn exhaustive_select(
    scenario: &Scenario,
    start: &RobotState,
    horizon: usize,
) -> Result<ExhaustiveOutcome, SelectError> {
    let n = scenario.num_soft();
    if n > MAX_EXHAUSTIVE_SOFT {
        return Err(SelectError::BudgetExceeded { n_soft: n });
    }
    let evaluator = Evaluator::new(scenario, start, horizon);
    let count = 1u64 << n;
    let per_mask = (0..count)
        .into_par_iter()
        .map(|i| {
            let mask = SubsetMask::from_index(i, n);
            evaluator.evaluate(&mask).map(|e| e.metrics.clone())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let masks: Vec<SubsetMask> = (0..count).map(|i| SubsetMask::from_index(i, n)).collect();
    let best = (0..masks.len())
        .reduce(|a, b| {
            if better((&masks[b], &per_mask[b]), (&masks[a], &per_mask[a])) == Ordering::Greater {
                b
            } else {
                a
            }
        })
        .expect("at least the empty mask");
    let evaluations = per_mask.len();
    if !per_mask[best].is_full_horizon() {
        return Err(SelectError::NoFeasibleSubset { evaluations });
    }
    Ok(ExhaustiveOutcome {
        outcome: SelectionOutcome {
            best_mask: masks[best].clone(),
            best_metrics: per_mask[best].clone(),
            evaluations,
            extra_evaluations: 0,
            history: Vec::new(),
            drop_order: Vec::new(),
        },
        per_mask,
    })
}
