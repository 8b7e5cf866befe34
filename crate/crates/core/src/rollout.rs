//! Closed-loop simulation of one CBF-QP policy.
//!
//! A rollout runs the per-step controller from `start` until the final time
//! step or the first step whose QP is infeasible. Along the way it sums each
//! imposed soft constraint's multiplier into its Lagrange score
//! `l_j = Σ_τ λ_j(τ)`; a constraint with no row at a step adds nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{solve_step, PolicyConfig, PolicyError, Progress};
use crate::scenario::Scenario;
use crate::tasks::{ConstraintId, ConstraintKind};
use crate::world::{step, RobotState, Vec2, WorldError};

/// Penalty standing in for `1/𝕀(h < 0)` in the indicator reward.
pub const HARD_PENALTY: f64 = 1e6;

/// Hard barriers below this count as violated in the recorded trace.
const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolloutError {
    #[error("start state violates constraint {id} (h = {value:e})")]
    InvalidStart { id: ConstraintId, value: f64 },
    #[error("final step {horizon} precedes start time {start}")]
    EmptyHorizon { start: usize, horizon: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardViolation {
    pub t: usize,
    pub id: ConstraintId,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleStep {
    pub t: usize,
    /// Phase-1 slack of the step QP.
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    /// `x_{t0}, …, x_{t0+T′}`.
    pub states: Vec<RobotState>,
    pub controls: Vec<Vec2>,
    /// Per-step multipliers of the imposed barrier rows.
    pub multipliers: Vec<BTreeMap<ConstraintId, f64>>,
    /// Completed steps `T′`.
    pub feasible_horizon: usize,
    /// Requested steps `T`.
    pub steps: usize,
    /// Indexed by soft constraint id.
    pub lagrange_scores: Vec<f64>,
    pub hard_violation: Option<HardViolation>,
    pub infeasible_at: Option<InfeasibleStep>,
}

impl RolloutTrace {
    pub fn is_full_horizon(&self) -> bool {
        self.feasible_horizon == self.steps
    }

    pub fn final_state(&self) -> &RobotState {
        self.states.last().expect("trace holds the start state")
    }

    /// Smallest true hard-barrier value over every recorded state.
    pub fn min_hard_barrier(&self, scenario: &Scenario) -> f64 {
        self.states
            .iter()
            .flat_map(|s| scenario.hard().map(move |c| c.eval(s.t, &s.position)))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Selected waypoints visited per the dwell rule.
    pub waypoints_arrived: usize,
    pub goal_reached: bool,
    /// Default reward: number of waypoints arrived.
    pub reward: f64,
    pub qp_solves: usize,
    pub feasible_horizon: usize,
    pub steps: usize,
}

impl Metrics {
    pub fn is_full_horizon(&self) -> bool {
        self.feasible_horizon == self.steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    pub trace: RolloutTrace,
    pub metrics: Metrics,
    /// Arrival state at the end, for continuing from the final state.
    pub progress: Progress,
}

/// Simulate from `start` through time step `horizon` (inclusive).
pub fn roll_out(
    scenario: &Scenario,
    config: &PolicyConfig,
    start: &RobotState,
    horizon: usize,
) -> Result<RolloutOutcome, RolloutError> {
    let mut progress = Progress::new(scenario);
    progress.observe(scenario, start.t, &start.position);
    roll_out_from(scenario, config, start, horizon, progress)
}

/// As [`roll_out`], continuing from existing arrival state. `progress` must
/// already include `start`.
pub fn roll_out_from(
    scenario: &Scenario,
    config: &PolicyConfig,
    start: &RobotState,
    horizon: usize,
    mut progress: Progress,
) -> Result<RolloutOutcome, RolloutError> {
    if horizon < start.t {
        return Err(RolloutError::EmptyHorizon {
            start: start.t,
            horizon,
        });
    }
    check_start(scenario, config, start)?;

    let steps = horizon - start.t + 1;
    let n_soft = scenario.num_soft();
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut multipliers = Vec::with_capacity(steps);
    let mut scores = vec![0.0; n_soft];
    let mut hard_violation = None;
    let mut infeasible_at = None;
    let mut qp_solves = 0;

    states.push(*start);
    let mut state = *start;
    for _ in 0..steps {
        let result = solve_step(&state, scenario, config, &progress)?;
        qp_solves += 1;
        let Some(u) = result.u.filter(|_| result.feasible) else {
            infeasible_at = Some(InfeasibleStep {
                t: state.t,
                min_slack: result.infeasibility.unwrap_or(f64::NAN),
            });
            break;
        };
        for (&id, &lambda) in &result.multipliers {
            if id < n_soft {
                scores[id] += lambda;
            }
        }
        let next = step(
            &state,
            &u,
            &scenario.zones,
            &scenario.bounds,
            scenario.dt,
        )?;
        progress.observe(scenario, next.t, &next.position);
        if hard_violation.is_none() {
            hard_violation = scenario.hard().find_map(|c| {
                let value = c.eval(next.t, &next.position);
                (value < -VIOLATION_TOL).then_some(HardViolation {
                    t: next.t,
                    id: c.id,
                    value,
                })
            });
        }
        controls.push(u);
        multipliers.push(result.multipliers);
        states.push(next);
        state = next;
    }

    let feasible_horizon = controls.len();
    let waypoints_arrived = scenario
        .soft()
        .filter(|w| w.kind == ConstraintKind::Waypoint)
        .filter(|w| config.mask.get(w.id) && progress.is_arrived(w.id))
        .count();
    let goal_reached = progress.is_arrived(scenario.goal().id);
    let metrics = Metrics {
        waypoints_arrived,
        goal_reached,
        reward: waypoints_arrived as f64,
        qp_solves,
        feasible_horizon,
        steps,
    };
    let trace = RolloutTrace {
        states,
        controls,
        multipliers,
        feasible_horizon,
        steps,
        lagrange_scores: scores,
        hard_violation,
        infeasible_at,
    };
    Ok(RolloutOutcome {
        trace,
        metrics,
        progress,
    })
}

fn check_start(
    scenario: &Scenario,
    config: &PolicyConfig,
    start: &RobotState,
) -> Result<(), RolloutError> {
    for spec in scenario.constraints.iter().filter(|s| config.imposes(s)) {
        let value = spec.eval(start.t, &start.position);
        let ok = match spec.kind {
            ConstraintKind::Obstacle => value > 0.0,
            _ => value >= -VIOLATION_TOL,
        };
        if !ok {
            return Err(RolloutError::InvalidStart { id: spec.id, value });
        }
    }
    Ok(())
}

/// Indicator reward: `+1` per satisfied soft barrier and `−HARD_PENALTY` per
/// violated hard barrier, summed over the states where a control was applied.
pub fn reward_indicator(scenario: &Scenario, trace: &RolloutTrace) -> f64 {
    trace.states[..trace.feasible_horizon]
        .iter()
        .map(|s| {
            scenario
                .constraints
                .iter()
                .map(|c| {
                    let value = c.eval(s.t, &s.position);
                    match (c.is_soft(), value >= 0.0) {
                        (true, true) => 1.0,
                        (false, false) => -HARD_PENALTY,
                        _ => 0.0,
                    }
                })
                .sum::<f64>()
        })
        .sum()
}
