use crate::mask::SubsetMask;
use crate::scenario::Scenario;
use crate::tasks::ConstraintId;
use crate::world::RobotState;

use super::{Evaluation, Evaluator, SelectError, SelectionOutcome};

/// Trace of one greedy run: every mask tried, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun {
    /// `masks[0]` has every free bit set; `masks[i+1]` drops `drops[i]`.
    pub masks: Vec<SubsetMask>,
    pub drops: Vec<ConstraintId>,
    /// Whether the last mask rolled out over the full horizon.
    pub feasible: bool,
    pub last: Evaluation,
}

/// Greedy Lagrange-score dropping.
///
/// Roll out with every soft constraint imposed. Whenever the rollout hits an
/// infeasible step, drop the imposed constraint with the largest Lagrange
/// score accumulated so far (ties to the lowest id), reset the scores, and
/// restart from the initial state. Stops at the first full-horizon rollout
/// or when nothing is left to drop.
pub fn greedy_select(
    scenario: &Scenario,
    start: &RobotState,
    horizon: usize,
) -> Result<SelectionOutcome, SelectError> {
    greedy_select_with(&Evaluator::new(scenario, start, horizon))
}

pub fn greedy_select_with(evaluator: &Evaluator<'_>) -> Result<SelectionOutcome, SelectError> {
    let run = greedy_run(evaluator)?;
    let evaluations = run.masks.len();
    if !run.feasible {
        return Err(SelectError::NoFeasibleSubset { evaluations });
    }
    Ok(SelectionOutcome {
        best_mask: run.last.mask.clone(),
        best_metrics: run.last.metrics.clone(),
        evaluations,
        extra_evaluations: 0,
        history: Vec::new(),
        drop_order: run.drops,
    })
}

impl GreedyRun {
    pub fn restarts(&self) -> usize {
        self.drops.len()
    }
}

pub(super) fn greedy_run(evaluator: &Evaluator<'_>) -> Result<GreedyRun, SelectError> {
    let mut mask = evaluator.all_free();
    let mut masks = Vec::new();
    let mut drops = Vec::new();
    loop {
        masks.push(mask.clone());
        let eval = evaluator.evaluate(&mask)?;
        if eval.is_full_horizon() {
            return Ok(GreedyRun {
                masks,
                drops,
                feasible: true,
                last: (*eval).clone(),
            });
        }
        let candidate = evaluator
            .free()
            .iter()
            .copied()
            .filter(|&j| mask.get(j))
            .fold(None::<(ConstraintId, f64)>, |best, j| {
                let score = eval.lagrange_scores[j];
                match best {
                    Some((_, s)) if s >= score => best,
                    _ => Some((j, score)),
                }
            });
        match candidate {
            Some((j, _)) => {
                mask.set(j, false);
                drops.push(j);
            }
            None => {
                return Ok(GreedyRun {
                    masks,
                    drops,
                    feasible: false,
                    last: (*eval).clone(),
                })
            }
        }
    }
}
