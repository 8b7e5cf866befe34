//! Barrier functions for waypoints, the goal and obstacles.
//!
//! Waypoint and goal barriers are `B(t)·(d_max² − ‖x − c‖²)`, obstacle
//! barriers are `‖x − c‖² − d_min²`. A state is inside the constraint's set
//! at time `t` iff its barrier value is nonnegative.

use serde::{Deserialize, Serialize};

use crate::world::{disturbance, DisturbanceZone, Vec2};

pub type ConstraintId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Waypoint,
    Obstacle,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hardness {
    Hard,
    Soft,
}

/// Inclusive window `[on, deadline]` in time steps, `on < deadline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub on: usize,
    pub deadline: usize,
}

impl TimeWindow {
    pub fn contains(&self, t: usize) -> bool {
        self.on <= t && t <= self.deadline
    }

    /// Window moved `offset` steps earlier, saturating at 0.
    pub fn shifted_back(&self, offset: usize) -> Self {
        Self {
            on: self.on.saturating_sub(offset),
            deadline: self.deadline.saturating_sub(offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub id: ConstraintId,
    pub kind: ConstraintKind,
    pub hardness: Hardness,
    pub center: Vec2,
    /// `d_max` for waypoints and the goal, `d_min` for obstacles.
    pub radius: f64,
    /// Present for waypoints and the goal.
    pub window: Option<TimeWindow>,
    /// CBF gain in (0, 1].
    pub alpha: f64,
}

/// Linearized ingredients of one CBF row at step `t`:
///
/// ```text
/// h(t+1, x_{t+1}) = h_next_drift + grad_uᵀ u + curvature·‖u‖²
/// ```
///
/// exactly, since every barrier here is quadratic in position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveConstraintRow {
    pub id: ConstraintId,
    pub h_now: f64,
    pub h_next_drift: f64,
    pub grad_u: Vec2,
    pub curvature: f64,
}

impl ConstraintSpec {
    pub fn is_soft(&self) -> bool {
        self.hardness == Hardness::Soft
    }

    /// Activation weight `B(t)`: a linear ramp from 0 at `on` to 1 at
    /// `deadline`, zero outside the window, and 1 for untimed constraints.
    pub fn activation(&self, t: usize) -> f64 {
        match self.window {
            None => 1.0,
            Some(w) if t < w.on || t > w.deadline => 0.0,
            Some(w) => {
                let span = (w.deadline - w.on) as f64;
                ((t - w.on) as f64 / span).clamp(0.0, 1.0)
            }
        }
    }

    /// True when the barrier is part of the controller at step `t`, i.e. the
    /// next-step barrier `h(t+1, ·)` carries a positive activation. A timed
    /// constraint is imposed on `t ∈ [on, deadline − 1]`, so membership is
    /// enforced for every state `x_{on+1} … x_{deadline}`.
    pub fn is_imposed_at(&self, t: usize) -> bool {
        match self.window {
            None => true,
            Some(w) => w.on <= t && t < w.deadline,
        }
    }

    pub fn eval(&self, t: usize, x: &Vec2) -> f64 {
        let r2 = (x - self.center).norm_squared();
        let d2 = self.radius * self.radius;
        match self.kind {
            ConstraintKind::Obstacle => r2 - d2,
            ConstraintKind::Waypoint | ConstraintKind::Goal => self.activation(t) * (d2 - r2),
        }
    }

    /// Gradient of `h(t, ·)` at `x`.
    pub fn gradient(&self, t: usize, x: &Vec2) -> Vec2 {
        let offset = x - self.center;
        match self.kind {
            ConstraintKind::Obstacle => offset * 2.0,
            ConstraintKind::Waypoint | ConstraintKind::Goal => offset * (-2.0 * self.activation(t)),
        }
    }

    /// Coefficient `κ` with `h(t, x + δ) = h(t, x) + ∇hᵀδ + κ‖δ‖²`.
    pub fn curvature(&self, t: usize) -> f64 {
        match self.kind {
            ConstraintKind::Obstacle => 1.0,
            ConstraintKind::Waypoint | ConstraintKind::Goal => -self.activation(t),
        }
    }

    /// Membership `x ∈ S(t)`.
    pub fn satisfied(&self, t: usize, x: &Vec2) -> bool {
        self.eval(t, x) >= 0.0
    }

    /// Inside the ball (waypoints and goal) regardless of activation.
    pub fn inside_region(&self, x: &Vec2) -> bool {
        (x - self.center).norm() <= self.radius
    }
}

/// CBF row ingredients at step `t` for a state `x`, linearized about the
/// drift-only successor `y = x + dt·d(x)`. Returns `None` when the
/// constraint is not imposed at `t` (before its window, or retiring).
pub fn linearize_row(
    spec: &ConstraintSpec,
    t: usize,
    x: &Vec2,
    zones: &[DisturbanceZone],
    dt: f64,
) -> Option<ActiveConstraintRow> {
    if !spec.is_imposed_at(t) {
        return None;
    }
    let y = x + disturbance(x, zones) * dt;
    Some(ActiveConstraintRow {
        id: spec.id,
        h_now: spec.eval(t, x),
        h_next_drift: spec.eval(t + 1, &y),
        grad_u: spec.gradient(t + 1, &y) * dt,
        curvature: spec.curvature(t + 1) * dt * dt,
    })
}
