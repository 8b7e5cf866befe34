//! Per-step CBF-QP controller.
//!
//! At step `t` the controller solves
//!
//! ```text
//!   minimize    (u − u_d)ᵀ P (u − u_d)
//!   subject to  h(t+1, x_{t+1}) ≥ (1 − α) h(t, x_t)   for every imposed barrier
//!               ‖u‖∞ ≤ u_max
//! ```
//!
//! with each barrier linearized about the drift-only successor. Waypoint and
//! goal barriers are concave in position, so their rows are tightened by the
//! worst-case quadratic remainder over the input box; the linear row then
//! implies the exact condition. Obstacle barriers are convex and their
//! linearization is already conservative.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

use crate::mask::SubsetMask;
use crate::qp::{check_feasible, solve_qp, QpError, QpProblem, QpStatus};
use crate::scenario::Scenario;
use crate::tasks::{linearize_row, ConstraintId, ConstraintKind, ConstraintSpec};
use crate::world::{disturbance, RobotState, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("qp: {0}")]
    Qp(#[from] QpError),
    #[error("qp hit its iteration cap at t = {t}")]
    SolverStalled { t: usize },
    #[error("mask has {found} bits but the scenario has {expected} soft constraints")]
    MaskLength { found: usize, expected: usize },
}

/// Rule producing the desired input `u_d`.
#[derive(Debug, Clone, PartialEq)]
pub enum NominalRule {
    /// Saturated proportional pursuit of the earliest-deadline selected
    /// waypoint not yet arrived, falling back to the goal. The known drift at
    /// the current position is cancelled before saturation.
    Pursuit { k_p: f64 },
    /// Constant desired input.
    Fixed(Vec2),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub cost: Matrix2<f64>,
    pub nominal: NominalRule,
    pub mask: SubsetMask,
}

impl PolicyConfig {
    /// Scenario gains with the given soft-constraint selection.
    pub fn new(scenario: &Scenario, mask: SubsetMask) -> Self {
        Self {
            cost: scenario.controller.cost,
            nominal: NominalRule::Pursuit {
                k_p: scenario.controller.k_p,
            },
            mask,
        }
    }

    pub fn imposes(&self, spec: &ConstraintSpec) -> bool {
        !spec.is_soft() || self.mask.get(spec.id)
    }
}

/// Arrival bookkeeping for waypoints and the goal.
///
/// A region counts as arrived once the robot has been inside it for `dwell`
/// consecutive steps within its window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Progress {
    arrived: Vec<bool>,
    streak: Vec<usize>,
    dwell: usize,
}

impl Progress {
    pub fn new(scenario: &Scenario) -> Self {
        let n = scenario.constraints.len();
        Self {
            arrived: vec![false; n],
            streak: vec![0; n],
            dwell: scenario.controller.dwell,
        }
    }

    pub fn observe(&mut self, scenario: &Scenario, t: usize, x: &Vec2) {
        for spec in &scenario.constraints {
            let Some(window) = spec.window else { continue };
            let id = spec.id;
            if window.contains(t) && spec.inside_region(x) {
                self.streak[id] += 1;
                if self.streak[id] >= self.dwell {
                    self.arrived[id] = true;
                }
            } else {
                self.streak[id] = 0;
            }
        }
    }

    pub fn is_arrived(&self, id: ConstraintId) -> bool {
        self.arrived[id]
    }

    pub fn arrived_ids(&self) -> impl Iterator<Item = ConstraintId> + '_ {
        self.arrived
            .iter()
            .enumerate()
            .filter_map(|(id, &a)| a.then_some(id))
    }
}

/// Where the pursuit rule is heading at step `t`.
pub fn nominal_target(
    scenario: &Scenario,
    config: &PolicyConfig,
    progress: &Progress,
    t: usize,
) -> Vec2 {
    scenario
        .soft()
        .filter(|w| config.mask.get(w.id) && !progress.is_arrived(w.id))
        .filter(|w| w.window.is_some_and(|win| win.deadline >= t))
        .min_by_key(|w| (w.window.map(|win| win.deadline), w.id))
        .map(|w| w.center)
        .unwrap_or(scenario.goal().center)
}

pub fn desired_input(
    scenario: &Scenario,
    config: &PolicyConfig,
    progress: &Progress,
    state: &RobotState,
) -> Vec2 {
    match &config.nominal {
        NominalRule::Fixed(u) => *u,
        NominalRule::Pursuit { k_p } => {
            let target = nominal_target(scenario, config, progress, state.t);
            let drift = disturbance(&state.position, &scenario.zones);
            scenario
                .bounds
                .clamp((target - state.position) * *k_p - drift)
        }
    }
}

/// The assembled per-step QP. Rows `0..barrier_ids.len()` are CBF rows in
/// the order of `barrier_ids`; the last four are the input box.
#[derive(Debug, Clone)]
pub struct StepQp {
    pub problem: QpProblem,
    pub barrier_ids: Vec<ConstraintId>,
}

pub fn assemble_qp(
    state: &RobotState,
    scenario: &Scenario,
    config: &PolicyConfig,
    u_desired: &Vec2,
) -> StepQp {
    let u_max = scenario.bounds.u_max;
    let input_norm_sq = 2.0 * u_max * u_max;
    let mut grads = Vec::new();
    let mut offsets = Vec::new();
    let mut barrier_ids = Vec::new();
    for spec in scenario.constraints.iter().filter(|s| config.imposes(s)) {
        let Some(row) = linearize_row(spec, state.t, &state.position, &scenario.zones, scenario.dt)
        else {
            continue;
        };
        let remainder = row.curvature.min(0.0) * input_norm_sq;
        grads.push(row.grad_u);
        offsets.push(row.h_next_drift + remainder - (1.0 - spec.alpha) * row.h_now);
        barrier_ids.push(spec.id);
    }
    let nb = grads.len();
    let mut a = DMatrix::zeros(nb + 4, 2);
    let mut b = DVector::zeros(nb + 4);
    for (k, g) in grads.iter().enumerate() {
        a[(k, 0)] = g[0];
        a[(k, 1)] = g[1];
        b[k] = offsets[k];
    }
    for axis in 0..2 {
        a[(nb + 2 * axis, axis)] = 1.0;
        b[nb + 2 * axis] = u_max;
        a[(nb + 2 * axis + 1, axis)] = -1.0;
        b[nb + 2 * axis + 1] = u_max;
    }
    let p = DMatrix::from_fn(2, 2, |i, j| config.cost[(i, j)]);
    let hessian = &p * 2.0;
    let ud = DVector::from_column_slice(u_desired.as_slice());
    let linear = -(&p * ud) * 2.0;
    let problem = QpProblem::new(hessian, linear, a, b).expect("step QP shapes are consistent");
    StepQp {
        problem,
        barrier_ids,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub feasible: bool,
    pub u: Option<Vec2>,
    pub u_desired: Vec2,
    /// Multiplier of each imposed barrier row (zero for slack rows).
    pub multipliers: BTreeMap<ConstraintId, f64>,
    /// Imposed barriers with zero slack.
    pub active_ids: Vec<ConstraintId>,
    /// Phase-1 slack certificate when infeasible.
    pub infeasibility: Option<f64>,
}

pub fn solve_step(
    state: &RobotState,
    scenario: &Scenario,
    config: &PolicyConfig,
    progress: &Progress,
) -> Result<StepResult, PolicyError> {
    if config.mask.len() != scenario.num_soft() {
        return Err(PolicyError::MaskLength {
            found: config.mask.len(),
            expected: scenario.num_soft(),
        });
    }
    let u_desired = desired_input(scenario, config, progress, state);
    solve_with_desired(state, scenario, config, u_desired)
}

pub fn solve_with_desired(
    state: &RobotState,
    scenario: &Scenario,
    config: &PolicyConfig,
    u_desired: Vec2,
) -> Result<StepResult, PolicyError> {
    let step = assemble_qp(state, scenario, config, &u_desired);
    let solution = solve_qp(&step.problem)?;
    match solution.status {
        QpStatus::Optimal => {
            let primal = solution.primal.expect("optimal solution has a point");
            let duals = solution.duals.expect("optimal solution has duals");
            let u = scenario.bounds.clamp(Vec2::new(primal[0], primal[1]));
            let multipliers = step
                .barrier_ids
                .iter()
                .enumerate()
                .map(|(k, &id)| (id, duals[k]))
                .collect();
            let active_ids = solution
                .active_set
                .iter()
                .filter(|&&k| k < step.barrier_ids.len())
                .map(|&k| step.barrier_ids[k])
                .collect();
            Ok(StepResult {
                feasible: true,
                u: Some(u),
                u_desired,
                multipliers,
                active_ids,
                infeasibility: None,
            })
        }
        QpStatus::Infeasible => {
            let cert = check_feasible(&step.problem)?;
            Ok(StepResult {
                feasible: false,
                u: None,
                u_desired,
                multipliers: BTreeMap::new(),
                active_ids: Vec::new(),
                infeasibility: Some(cert.min_slack),
            })
        }
        QpStatus::MaxIterations => Err(PolicyError::SolverStalled { t: state.t }),
    }
}

/// True when `kind` is a region the robot should visit.
pub fn is_region(kind: ConstraintKind) -> bool {
    matches!(kind, ConstraintKind::Waypoint | ConstraintKind::Goal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(extra: &str) -> Scenario {
        let text = format!(
            r#"
            horizon = 100
            [start]
            position = [1.0, 1.0]
            [goal]
            center = [9.0, 9.0]
            radius = 0.5
            window = [90, 100]
            {extra}
            "#
        );
        Scenario::from_toml_str(&text).unwrap()
    }

    #[test]
    fn unconstrained_step_returns_nominal() {
        let s = scenario("");
        let cfg = PolicyConfig::new(&s, SubsetMask::none(0));
        let progress = Progress::new(&s);
        let r = solve_step(&s.start, &s, &cfg, &progress).unwrap();
        assert!(r.feasible);
        // Pursuit of (9, 9) from (1, 1) saturates at u_max.
        let u = r.u.unwrap();
        assert!((u - Vec2::new(1.5, 1.5)).norm() < 1e-12);
        assert!(r.multipliers.is_empty());
    }

    #[test]
    fn nominal_prefers_earliest_unarrived_waypoint() {
        let s = scenario(
            r#"
            [[waypoints]]
            center = [2.0, 1.0]
            radius = 0.5
            window = [10, 20]
            [[waypoints]]
            center = [3.0, 3.0]
            radius = 0.5
            window = [30, 40]
            "#,
        );
        let mut progress = Progress::new(&s);
        let all = PolicyConfig::new(&s, SubsetMask::all(2));
        assert_eq!(nominal_target(&s, &all, &progress, 1), Vec2::new(2.0, 1.0));
        let second = PolicyConfig::new(&s, "01".parse().unwrap());
        assert_eq!(nominal_target(&s, &second, &progress, 1), Vec2::new(3.0, 3.0));
        progress.observe(&s, 12, &Vec2::new(2.1, 1.0));
        assert!(progress.is_arrived(0));
        assert_eq!(nominal_target(&s, &all, &progress, 13), Vec2::new(3.0, 3.0));
        // Past every deadline: the goal.
        assert_eq!(nominal_target(&s, &second, &progress, 41), Vec2::new(9.0, 9.0));
    }

    #[test]
    fn arrival_requires_window() {
        let s = scenario(
            r#"
            [[waypoints]]
            center = [2.0, 1.0]
            radius = 0.5
            window = [10, 20]
            "#,
        );
        let mut progress = Progress::new(&s);
        progress.observe(&s, 9, &Vec2::new(2.0, 1.0));
        assert!(!progress.is_arrived(0));
        progress.observe(&s, 21, &Vec2::new(2.0, 1.0));
        assert!(!progress.is_arrived(0));
        progress.observe(&s, 20, &Vec2::new(2.0, 1.0));
        assert!(progress.is_arrived(0));
    }

    #[test]
    fn mask_length_is_checked() {
        let s = scenario("");
        let cfg = PolicyConfig::new(&s, SubsetMask::all(1));
        let err = solve_step(&s.start, &s, &cfg, &Progress::new(&s)).unwrap_err();
        assert!(matches!(err, PolicyError::MaskLength { .. }));
    }
}
