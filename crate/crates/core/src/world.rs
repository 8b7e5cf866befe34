//! Discrete-time control-affine robot dynamics with a known disturbance field.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Slack on the input bound check; anything beyond it is a controller bug.
pub const INPUT_BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("control ({u0}, {u1}) exceeds input bound {u_max}")]
    InputBoundViolation { u0: f64, u1: f64, u_max: f64 },
}

/// Position and integer time step. Time starts at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub position: Vec2,
    pub t: usize,
}

impl RobotState {
    pub fn new(position: Vec2, t: usize) -> Self {
        debug_assert!(t >= 1, "time steps start at 1");
        Self { position, t }
    }
}

/// Circular region with constant drift velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceZone {
    pub center: Vec2,
    pub radius: f64,
    /// Drift velocity (m/s) before scaling.
    pub vector: Vec2,
    /// Dimensionless level multiplier.
    pub magnitude_scale: f64,
}

impl DisturbanceZone {
    pub fn contains(&self, at: &Vec2) -> bool {
        (at - self.center).norm() <= self.radius
    }

    pub fn drift(&self) -> Vec2 {
        self.vector * self.magnitude_scale
    }
}

/// Box bound `‖u‖∞ ≤ u_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub u_max: f64,
}

impl InputBounds {
    pub fn contains(&self, u: &Vec2) -> bool {
        u.amax() <= self.u_max + INPUT_BOUND_TOL
    }

    pub fn clamp(&self, u: Vec2) -> Vec2 {
        u.map(|v| v.clamp(-self.u_max, self.u_max))
    }
}

/// Sum of the drifts of all zones containing `at`.
pub fn disturbance(at: &Vec2, zones: &[DisturbanceZone]) -> Vec2 {
    zones
        .iter()
        .filter(|z| z.contains(at))
        .fold(Vec2::zeros(), |acc, z| acc + z.drift())
}

/// `x_{t+1} = f(x_t) + g(x_t) u`.
pub trait ControlAffine {
    fn drift(&self, x: &Vec2) -> Vec2;
    fn input_gain(&self, x: &Vec2) -> Matrix2<f64>;

    fn advance(&self, x: &Vec2, u: &Vec2) -> Vec2 {
        self.drift(x) + self.input_gain(x) * u
    }
}

/// Single integrator with additive disturbance velocity:
/// `f(x) = x + dt·d(x)`, `g(x) = dt·I`.
#[derive(Debug, Clone, Copy)]
pub struct SingleIntegrator<'a> {
    pub dt: f64,
    pub zones: &'a [DisturbanceZone],
}

impl ControlAffine for SingleIntegrator<'_> {
    fn drift(&self, x: &Vec2) -> Vec2 {
        x + disturbance(x, self.zones) * self.dt
    }

    fn input_gain(&self, _x: &Vec2) -> Matrix2<f64> {
        Matrix2::identity() * self.dt
    }
}

/// One step of the disturbed single integrator.
pub fn step(
    state: &RobotState,
    u: &Vec2,
    zones: &[DisturbanceZone],
    bounds: &InputBounds,
    dt: f64,
) -> Result<RobotState, WorldError> {
    if !bounds.contains(u) {
        return Err(WorldError::InputBoundViolation {
            u0: u[0],
            u1: u[1],
            u_max: bounds.u_max,
        });
    }
    let dynamics = SingleIntegrator { dt, zones };
    Ok(RobotState {
        position: dynamics.advance(&state.position, u),
        t: state.t + 1,
    })
}
