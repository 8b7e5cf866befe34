//! Scenario model and its TOML file format.
//!
//! Soft waypoints receive constraint ids `0..n_S` in file order, the goal
//! gets `n_S`, and obstacles follow. Every optional key is materialized on
//! load, so `save(load(f))` is a complete, replayable description.

use std::fmt;
use std::path::Path;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::selector::GaConfig;
use crate::tasks::{ConstraintId, ConstraintKind, ConstraintSpec, Hardness, TimeWindow};
use crate::world::{DisturbanceZone, InputBounds, RobotState, Vec2};

pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_U_MAX: f64 = 1.5;
pub const DEFAULT_ALPHA_OBSTACLE: f64 = 0.2;
pub const DEFAULT_ALPHA_WAYPOINT: f64 = 0.5;
pub const DEFAULT_KP: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceLevel {
    Low,
    #[default]
    Medium,
    High,
}

impl DisturbanceLevel {
    pub const ALL: [DisturbanceLevel; 3] = [Self::Low, Self::Medium, Self::High];

    /// Drift magnitude as a multiple of `u_max`.
    pub fn factor(self) -> f64 {
        match self {
            Self::Low => 0.5,
            Self::Medium => 1.0,
            Self::High => 1.5,
        }
    }
}

impl fmt::Display for DisturbanceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        })
    }
}

impl std::str::FromStr for DisturbanceLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            other => Err(format!("unknown disturbance level '{other}'")),
        }
    }
}

/// Axis-aligned world box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldBox {
    pub min: Vec2,
    pub max: Vec2,
}

impl WorldBox {
    pub fn contains(&self, x: &Vec2) -> bool {
        (0..2).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k])
    }

    pub fn extent(&self) -> Vec2 {
        self.max - self.min
    }
}

/// Disturbance zone as written in the file: the drift is
/// `direction · u_max · level.factor()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneSpec {
    pub center: Vec2,
    pub radius: f64,
    pub direction: Vec2,
    /// Overrides the scenario-wide level.
    pub level: Option<DisturbanceLevel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    /// Control cost weight `P` of `(u − u_d)ᵀ P (u − u_d)`.
    pub cost: Matrix2<f64>,
    pub k_p: f64,
    pub alpha_obstacle: f64,
    pub alpha_waypoint: f64,
    /// Consecutive in-region steps needed to count a waypoint as arrived.
    pub dwell: usize,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            cost: Matrix2::identity(),
            k_p: DEFAULT_KP,
            alpha_obstacle: DEFAULT_ALPHA_OBSTACLE,
            alpha_waypoint: DEFAULT_ALPHA_WAYPOINT,
            dwell: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub world: WorldBox,
    pub dt: f64,
    pub horizon: usize,
    pub bounds: InputBounds,
    pub disturbance_level: DisturbanceLevel,
    pub zone_specs: Vec<ZoneSpec>,
    /// Resolved disturbance field.
    pub zones: Vec<DisturbanceZone>,
    /// Soft waypoints, then the goal, then obstacles; `constraints[i].id == i`.
    pub constraints: Vec<ConstraintSpec>,
    pub start: RobotState,
    pub controller: ControllerGains,
    pub selector: GaConfig,
}

impl Scenario {
    pub fn num_soft(&self) -> usize {
        self.constraints.iter().filter(|c| c.is_soft()).count()
    }

    pub fn soft(&self) -> impl Iterator<Item = &ConstraintSpec> {
        self.constraints.iter().filter(|c| c.is_soft())
    }

    pub fn hard(&self) -> impl Iterator<Item = &ConstraintSpec> {
        self.constraints.iter().filter(|c| !c.is_soft())
    }

    pub fn goal(&self) -> &ConstraintSpec {
        &self.constraints[self.num_soft()]
    }

    pub fn obstacles(&self) -> impl Iterator<Item = &ConstraintSpec> {
        self.constraints
            .iter()
            .filter(|c| c.kind == ConstraintKind::Obstacle)
    }

    pub fn constraint(&self, id: ConstraintId) -> &ConstraintSpec {
        &self.constraints[id]
    }

    /// Same geometry under another disturbance level (zone overrides kept).
    pub fn with_level(&self, level: DisturbanceLevel) -> Scenario {
        let mut out = self.clone();
        out.disturbance_level = level;
        out.zones = resolve_zones(&out.zone_specs, level, out.bounds.u_max);
        out
    }

    /// Same scenario with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Scenario {
        let mut out = self.clone();
        out.horizon = horizon;
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Scenario::from_file(file)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario serializes to TOML")
    }

    pub fn from_file(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
        let dt = file.dt.unwrap_or(DEFAULT_DT);
        let horizon = file.horizon.unwrap_or(DEFAULT_HORIZON);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        let world = match file.world {
            Some(w) => WorldBox {
                min: vec2(w.min),
                max: vec2(w.max),
            },
            None => WorldBox {
                min: Vec2::zeros(),
                max: Vec2::new(10.0, 10.0),
            },
        };
        if !(world.min[0] < world.max[0] && world.min[1] < world.max[1]) {
            return Err(invalid("world box must have min < max on both axes"));
        }
        let u_max = file.bounds.map(|b| b.u_max).unwrap_or(DEFAULT_U_MAX);
        if !(u_max > 0.0 && u_max.is_finite()) {
            return Err(invalid(format!("u_max must be positive, got {u_max}")));
        }
        let bounds = InputBounds { u_max };
        let level = file.disturbance_level.unwrap_or_default();

        let gains = {
            let c = file.controller.unwrap_or_default();
            let d = ControllerGains::default();
            ControllerGains {
                cost: c
                    .cost
                    .map(|m| Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]))
                    .unwrap_or(d.cost),
                k_p: c.k_p.unwrap_or(d.k_p),
                alpha_obstacle: c.alpha_obstacle.unwrap_or(d.alpha_obstacle),
                alpha_waypoint: c.alpha_waypoint.unwrap_or(d.alpha_waypoint),
                dwell: c.dwell.unwrap_or(d.dwell),
            }
        };
        let cost = gains.cost;
        if !cost.iter().all(|v| v.is_finite())
            || (cost[(0, 1)] - cost[(1, 0)]).abs() > 1e-9
            || cost[(0, 0)] <= 0.0
            || cost.determinant() <= 0.0
        {
            return Err(invalid("controller cost must be symmetric positive definite"));
        }
        if !(gains.k_p > 0.0) {
            return Err(invalid("controller k_p must be positive"));
        }
        check_alpha("controller alpha_obstacle", gains.alpha_obstacle)?;
        check_alpha("controller alpha_waypoint", gains.alpha_waypoint)?;
        if gains.dwell == 0 {
            return Err(invalid("controller dwell must be at least 1"));
        }

        let mut constraints = Vec::new();
        let mut last_deadline = None;
        for (i, w) in file.waypoints.iter().enumerate() {
            let label = format!("waypoint {}", i + 1);
            let spec = region_spec(
                &label,
                constraints.len(),
                ConstraintKind::Waypoint,
                Hardness::Soft,
                w,
                gains.alpha_waypoint,
                &world,
            )?;
            let deadline = w.window[1];
            if let Some(prev) = last_deadline {
                if deadline <= prev {
                    return Err(invalid(format!(
                        "{label} deadline {deadline} does not follow previous deadline {prev}"
                    )));
                }
            }
            last_deadline = Some(deadline);
            constraints.push(spec);
        }
        let goal = file.goal.unwrap_or_else(|| RegionFile {
            center: [world.max[0] - 1.0, world.max[1] - 1.0],
            radius: 0.5,
            window: default_goal_window(horizon),
            alpha: None,
        });
        constraints.push(region_spec(
            "goal",
            constraints.len(),
            ConstraintKind::Goal,
            Hardness::Hard,
            &goal,
            gains.alpha_waypoint,
            &world,
        )?);
        for (i, o) in file.obstacles.iter().enumerate() {
            let label = format!("obstacle {}", i + 1);
            let center = vec2(o.center);
            if !world.contains(&center) {
                return Err(invalid(format!("{label} outside world bounds")));
            }
            check_radius(&label, o.radius)?;
            let alpha = o.alpha.unwrap_or(gains.alpha_obstacle);
            check_alpha(&format!("{label} alpha"), alpha)?;
            constraints.push(ConstraintSpec {
                id: constraints.len(),
                kind: ConstraintKind::Obstacle,
                hardness: Hardness::Hard,
                center,
                radius: o.radius,
                window: None,
                alpha,
            });
        }

        let mut zone_specs = Vec::new();
        for (i, z) in file.disturbances.iter().enumerate() {
            let label = format!("disturbance {}", i + 1);
            let center = vec2(z.center);
            if !world.contains(&center) {
                return Err(invalid(format!("{label} outside world bounds")));
            }
            check_radius(&label, z.radius)?;
            let direction = vec2(z.direction);
            if !direction.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("{label} direction must be finite")));
            }
            zone_specs.push(ZoneSpec {
                center,
                radius: z.radius,
                direction,
                level: z.level,
            });
        }

        let start_file = file.start;
        let start = RobotState {
            position: vec2(start_file.position),
            t: start_file.t.unwrap_or(1),
        };
        if start.t == 0 {
            return Err(invalid("start time must be at least 1"));
        }
        if !world.contains(&start.position) {
            return Err(invalid("start outside world bounds"));
        }
        for o in constraints
            .iter()
            .filter(|c| c.kind == ConstraintKind::Obstacle)
        {
            if o.eval(start.t, &start.position) <= 0.0 {
                return Err(invalid(format!(
                    "start inside obstacle {}",
                    o.id - file.waypoints.len()
                )));
            }
        }

        let selector = file.selector.unwrap_or_default().resolve();
        selector.validate().map_err(invalid)?;

        let zones = resolve_zones(&zone_specs, level, u_max);
        Ok(Scenario {
            name: file.name.unwrap_or_default(),
            world,
            dt,
            horizon,
            bounds,
            disturbance_level: level,
            zone_specs,
            zones,
            constraints,
            start,
            controller: gains,
            selector,
        })
    }

    pub fn to_file(&self) -> ScenarioFile {
        let region = |c: &ConstraintSpec| {
            let w = c.window.expect("timed constraint");
            RegionFile {
                center: [c.center[0], c.center[1]],
                radius: c.radius,
                window: [w.on, w.deadline],
                alpha: Some(c.alpha),
            }
        };
        let g = &self.controller;
        ScenarioFile {
            name: Some(self.name.clone()),
            dt: Some(self.dt),
            horizon: Some(self.horizon),
            disturbance_level: Some(self.disturbance_level),
            world: Some(WorldFile {
                min: [self.world.min[0], self.world.min[1]],
                max: [self.world.max[0], self.world.max[1]],
            }),
            bounds: Some(BoundsFile {
                u_max: self.bounds.u_max,
            }),
            start: StartFile {
                position: [self.start.position[0], self.start.position[1]],
                t: Some(self.start.t),
            },
            controller: Some(ControllerFile {
                cost: Some([
                    [g.cost[(0, 0)], g.cost[(0, 1)]],
                    [g.cost[(1, 0)], g.cost[(1, 1)]],
                ]),
                k_p: Some(g.k_p),
                alpha_obstacle: Some(g.alpha_obstacle),
                alpha_waypoint: Some(g.alpha_waypoint),
                dwell: Some(g.dwell),
            }),
            selector: Some(SelectorFile::from(&self.selector)),
            goal: Some(region(self.goal())),
            waypoints: self.soft().map(region).collect(),
            obstacles: self
                .obstacles()
                .map(|o| ObstacleFile {
                    center: [o.center[0], o.center[1]],
                    radius: o.radius,
                    alpha: Some(o.alpha),
                })
                .collect(),
            disturbances: self
                .zone_specs
                .iter()
                .map(|z| ZoneFile {
                    center: [z.center[0], z.center[1]],
                    radius: z.radius,
                    direction: [z.direction[0], z.direction[1]],
                    level: z.level,
                })
                .collect(),
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml_str(&text)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    std::fs::write(path, scenario.to_toml_string())?;
    Ok(())
}

fn resolve_zones(specs: &[ZoneSpec], level: DisturbanceLevel, u_max: f64) -> Vec<DisturbanceZone> {
    specs
        .iter()
        .map(|z| DisturbanceZone {
            center: z.center,
            radius: z.radius,
            vector: z.direction * u_max,
            magnitude_scale: z.level.unwrap_or(level).factor(),
        })
        .collect()
}

fn default_goal_window(horizon: usize) -> [usize; 2] {
    [horizon - horizon / 10, horizon.max(2)]
}

fn vec2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

fn check_radius(label: &str, radius: f64) -> Result<(), ScenarioError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{label} radius must be positive")))
    }
}

fn check_alpha(label: &str, alpha: f64) -> Result<(), ScenarioError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{label} must lie in (0, 1], got {alpha}")))
    }
}

fn region_spec(
    label: &str,
    id: ConstraintId,
    kind: ConstraintKind,
    hardness: Hardness,
    region: &RegionFile,
    default_alpha: f64,
    world: &WorldBox,
) -> Result<ConstraintSpec, ScenarioError> {
    let center = vec2(region.center);
    if !world.contains(&center) {
        return Err(invalid(format!("{label} outside world bounds")));
    }
    check_radius(label, region.radius)?;
    let [on, deadline] = region.window;
    if on >= deadline {
        return Err(invalid(format!(
            "{label} window [{on}, {deadline}] must have on < deadline"
        )));
    }
    let alpha = region.alpha.unwrap_or(default_alpha);
    check_alpha(&format!("{label} alpha"), alpha)?;
    Ok(ConstraintSpec {
        id,
        kind,
        hardness,
        center,
        radius: region.radius,
        window: Some(TimeWindow { on, deadline }),
        alpha,
    })
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance_level: Option<DisturbanceLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsFile>,
    pub start: StartFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<SelectorFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<RegionFile>,
    #[serde(default)]
    pub waypoints: Vec<RegionFile>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleFile>,
    #[serde(default)]
    pub disturbances: Vec<ZoneFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartFile {
    pub position: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_obstacle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_waypoint: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_inf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_l: Option<f64>,
}

impl SelectorFile {
    fn resolve(self) -> GaConfig {
        let d = GaConfig::default();
        GaConfig {
            population: self.population.unwrap_or(d.population),
            steps: self.steps.unwrap_or(d.steps),
            mutation_rate: self.mutation_rate.unwrap_or(d.mutation_rate),
            seed: self.seed.unwrap_or(d.seed),
            c_inf: self.c_inf.or(d.c_inf),
            c_l: self.c_l.unwrap_or(d.c_l),
        }
    }
}

impl From<&GaConfig> for SelectorFile {
    fn from(c: &GaConfig) -> Self {
        Self {
            population: Some(c.population),
            steps: Some(c.steps),
            mutation_rate: Some(c.mutation_rate),
            seed: Some(c.seed),
            c_inf: c.c_inf,
            c_l: Some(c.c_l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    pub center: [f64; 2],
    pub radius: f64,
    /// `[t_on, t_deadline]`.
    pub window: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleFile {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneFile {
    pub center: [f64; 2],
    pub radius: f64,
    pub direction: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<DisturbanceLevel>,
}
