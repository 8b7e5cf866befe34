use crate::mask::SubsetMask;
use crate::policy::{PolicyConfig, Progress};
use crate::rollout::{roll_out_from, Metrics, RolloutTrace};
use crate::scenario::Scenario;
use crate::tasks::ConstraintKind;
use crate::world::RobotState;

use super::ga::ga_select_with;
use super::{Evaluator, GaConfig, SelectError};

/// One replanning segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub t_start: usize,
    pub start: RobotState,
    /// Mask imposed while executing this segment.
    pub mask: SubsetMask,
    pub evaluations: usize,
    pub extra_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecedingOutcome {
    /// Stitched closed-loop trace over all executed segments.
    pub trace: RolloutTrace,
    pub metrics: Metrics,
    /// Committed mask at the end; dropped bits never come back.
    pub final_mask: SubsetMask,
    pub segments: Vec<SegmentRecord>,
}

impl RecedingOutcome {
    pub fn evaluations(&self) -> usize {
        self.segments.iter().map(|s| s.evaluations).sum()
    }
}

const SEGMENT_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Receding-horizon genetic selection.
///
/// Every `replan_every` steps, runs the genetic search from the current state
/// over a `lookahead`-step horizon, searching only the soft constraints that
/// are still committed, not yet arrived, not yet retired, and whose window
/// opens within the lookahead. Other committed constraints stay imposed.
/// The chosen mask is executed for `replan_every` steps; a constraint
/// dropped once stays dropped. The run stops early at the first infeasible
/// step, which the returned trace records.
pub fn receding_select(
    scenario: &Scenario,
    start: &RobotState,
    horizon: usize,
    replan_every: usize,
    lookahead: usize,
    cfg: &GaConfig,
) -> Result<RecedingOutcome, SelectError> {
    if replan_every == 0 || replan_every > lookahead {
        return Err(SelectError::InvalidConfig(format!(
            "need 0 < replan_every ({replan_every}) ≤ lookahead ({lookahead})"
        )));
    }
    if horizon < start.t {
        return Err(SelectError::InvalidConfig(format!(
            "horizon {horizon} precedes start time {}",
            start.t
        )));
    }
    let total_steps = horizon - start.t + 1;
    if lookahead > total_steps {
        return Err(SelectError::InvalidConfig(format!(
            "lookahead {lookahead} exceeds the {total_steps}-step horizon"
        )));
    }

    let n = scenario.num_soft();
    let mut committed = SubsetMask::all(n);
    let mut progress = Progress::new(scenario);
    progress.observe(scenario, start.t, &start.position);

    let mut state = *start;
    let mut trace = RolloutTrace {
        states: vec![*start],
        controls: Vec::new(),
        multipliers: Vec::new(),
        feasible_horizon: 0,
        steps: total_steps,
        lagrange_scores: vec![0.0; n],
        hard_violation: None,
        infeasible_at: None,
    };
    let mut segments = Vec::new();
    let mut qp_solves = 0;

    let mut segment = 0u64;
    while state.t <= horizon {
        let t = state.t;
        let live = |j: usize| {
            let w = scenario.constraint(j).window.expect("soft constraints are timed");
            committed.get(j) && w.deadline >= t
        };
        let plan_end = (t + lookahead - 1).min(horizon);
        // Constraints whose window opens beyond the lookahead cannot be
        // judged yet; they stay committed and wait for a later segment.
        let opens_in_view =
            |j: usize| scenario.constraint(j).window.is_some_and(|w| w.on <= plan_end);
        let free: Vec<usize> = (0..n)
            .filter(|&j| live(j) && !progress.is_arrived(j) && opens_in_view(j))
            .collect();
        let mut base = SubsetMask::none(n);
        for j in (0..n).filter(|&j| live(j) && !free.contains(&j)) {
            base.set(j, true);
        }
        let evaluator =
            Evaluator::restricted(scenario, &state, plan_end, progress.clone(), free.clone(), base);
        let seg_cfg = cfg.with_seed(cfg.seed.wrapping_add(segment.wrapping_mul(SEGMENT_SEED_STRIDE)));
        // A segment with no feasible subset drops everything still free and
        // runs on; the stitched trace then records where the QP failed.
        let (chosen, evaluations, extra_evaluations) = match ga_select_with(&evaluator, &seg_cfg) {
            Ok(o) => (o.best_mask, o.evaluations, o.extra_evaluations),
            Err(SelectError::NoFeasibleSubset { evaluations }) => {
                (evaluator.none_free(), evaluations, 0)
            }
            Err(e) => return Err(e),
        };
        for &j in &free {
            if !chosen.get(j) {
                committed.set(j, false);
            }
        }
        // Retired constraints carry no rows; only live bits matter.
        let mut imposed = chosen;
        for j in 0..n {
            if !committed.get(j) {
                imposed.set(j, false);
            }
        }

        let exec_end = (t + replan_every - 1).min(horizon);
        let config = PolicyConfig::new(scenario, imposed.clone());
        let out = roll_out_from(scenario, &config, &state, exec_end, progress.clone())?;
        segments.push(SegmentRecord {
            t_start: t,
            start: state,
            mask: imposed,
            evaluations,
            extra_evaluations,
        });

        let seg_trace = out.trace;
        qp_solves += out.metrics.qp_solves;
        trace.states.extend_from_slice(&seg_trace.states[1..]);
        trace.controls.extend_from_slice(&seg_trace.controls);
        trace.multipliers.extend(seg_trace.multipliers.iter().cloned());
        trace.feasible_horizon += seg_trace.feasible_horizon;
        for (acc, l) in trace.lagrange_scores.iter_mut().zip(&seg_trace.lagrange_scores) {
            *acc += l;
        }
        if trace.hard_violation.is_none() {
            trace.hard_violation = seg_trace.hard_violation;
        }
        progress = out.progress;
        state = *seg_trace.final_state();
        segment += 1;
        if let Some(inf) = seg_trace.infeasible_at {
            trace.infeasible_at = Some(inf);
            break;
        }
    }

    let waypoints_arrived = scenario
        .soft()
        .filter(|w| w.kind == ConstraintKind::Waypoint)
        .filter(|w| committed.get(w.id) && progress.is_arrived(w.id))
        .count();
    let metrics = Metrics {
        waypoints_arrived,
        goal_reached: progress.is_arrived(scenario.goal().id),
        reward: waypoints_arrived as f64,
        qp_solves,
        feasible_horizon: trace.feasible_horizon,
        steps: total_steps,
    };
    Ok(RecedingOutcome {
        trace,
        metrics,
        final_mask: committed,
        segments,
    })
}
