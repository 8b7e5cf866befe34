use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::mask::SubsetMask;
use crate::scenario::{Scenario, WorldBox};
use crate::tasks::ConstraintKind;
use crate::world::{disturbance, Vec2};

const MIN_RESOLUTION: usize = 16;
const MAGIC: &[u8; 4] = b"RGRD";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 5 * 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReachError {
    #[error("grid resolution {0} is below the minimum of {MIN_RESOLUTION} cells per axis")]
    ResolutionTooLow(usize),
    #[error("obstacle {id} spans {cells:.2} cells; at least 2 are required")]
    GridTooCoarse { id: usize, cells: f64 },
    #[error("control set is empty")]
    NoControls,
    #[error("horizon {horizon} precedes start time {start}")]
    EmptyHorizon { start: usize, horizon: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridDecodeError {
    #[error("truncated grid: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("invalid header: {0}")]
    Header(String),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("nonzero padding bits")]
    Padding,
}

/// Grid and control discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachParams {
    /// Cells per axis.
    pub resolution: usize,
    /// Discrete control set; defaults to `{−u_max, 0, u_max}²`.
    pub controls: Option<Vec<Vec2>>,
}

impl ReachParams {
    pub fn new(resolution: usize) -> Self {
        Self {
            resolution,
            controls: None,
        }
    }

    pub fn with_controls(mut self, controls: Vec<Vec2>) -> Self {
        self.controls = Some(controls);
        self
    }
}

impl Default for ReachParams {
    fn default() -> Self {
        Self::new(64)
    }
}

/// Winning-cell field over `(t, cell)`: `true` where the hard constraints
/// can be kept through the horizon from the cell center at that step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachGrid {
    pub bounds: WorldBox,
    pub resolution: usize,
    pub dt: f64,
    /// First and last time step covered.
    pub t_start: usize,
    pub horizon: usize,
    values: Vec<bool>,
}

impl ReachGrid {
    fn cells(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn cell_size(&self) -> Vec2 {
        self.bounds.extent() / self.resolution as f64
    }

    pub fn center(&self, ix: usize, iy: usize) -> Vec2 {
        let w = self.cell_size();
        self.bounds.min + Vec2::new((ix as f64 + 0.5) * w[0], (iy as f64 + 0.5) * w[1])
    }

    /// Nearest cell to `x`, or `None` outside the box.
    pub fn cell_of(&self, x: &Vec2) -> Option<(usize, usize)> {
        if !self.bounds.contains(x) {
            return None;
        }
        let w = self.cell_size();
        let rel = x - self.bounds.min;
        let ix = ((rel[0] / w[0]) as usize).min(self.resolution - 1);
        let iy = ((rel[1] / w[1]) as usize).min(self.resolution - 1);
        Some((ix, iy))
    }

    fn slice(&self, t: usize) -> &[bool] {
        let k = t - self.t_start;
        &self.values[k * self.cells()..(k + 1) * self.cells()]
    }

    pub fn winning(&self, t: usize, ix: usize, iy: usize) -> bool {
        t >= self.t_start && t <= self.horizon && self.slice(t)[iy * self.resolution + ix]
    }

    /// Nearest-cell lookup; points outside the box are losing.
    pub fn is_winning(&self, t: usize, x: &Vec2) -> bool {
        self.cell_of(x)
            .is_some_and(|(ix, iy)| self.winning(t, ix, iy))
    }

    pub fn count_winning(&self, t: usize) -> usize {
        self.slice(t).iter().filter(|&&v| v).count()
    }

    /// Flat little-endian binary: magic, version, resolution, t_start,
    /// horizon, world min/max, dt, then one bit per (t, cell) packed LSB
    /// first, row-major within each slice.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len().div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [self.resolution, self.t_start, self.horizon] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in [
            self.bounds.min[0],
            self.bounds.min[1],
            self.bounds.max[0],
            self.bounds.max[1],
            self.dt,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for chunk in self.values.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
            out.push(byte);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GridDecodeError> {
        if bytes.len() < HEADER_LEN {
            return Err(GridDecodeError::Truncated {
                needed: HEADER_LEN,
                got: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(GridDecodeError::BadMagic);
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(GridDecodeError::Version(version));
        }
        let resolution = u32_at(8) as usize;
        let t_start = u32_at(12) as usize;
        let horizon = u32_at(16) as usize;
        let min = Vec2::new(f64_at(20), f64_at(28));
        let max = Vec2::new(f64_at(36), f64_at(44));
        let dt = f64_at(52);
        if resolution < MIN_RESOLUTION {
            return Err(GridDecodeError::Header(format!("resolution {resolution}")));
        }
        if horizon < t_start {
            return Err(GridDecodeError::Header(format!(
                "horizon {horizon} < t_start {t_start}"
            )));
        }
        let finite = [min[0], min[1], max[0], max[1], dt].iter().all(|v| v.is_finite());
        if !finite || !(min[0] < max[0] && min[1] < max[1]) || !(dt > 0.0) {
            return Err(GridDecodeError::Header("bounds or dt".into()));
        }
        let total = resolution
            .checked_mul(resolution)
            .and_then(|c| c.checked_mul(horizon - t_start + 1))
            .ok_or_else(|| GridDecodeError::Header("grid too large".into()))?;
        let payload = total.div_ceil(8);
        let needed = HEADER_LEN
            .checked_add(payload)
            .ok_or_else(|| GridDecodeError::Header("grid too large".into()))?;
        if bytes.len() < needed {
            return Err(GridDecodeError::Truncated {
                needed,
                got: bytes.len(),
            });
        }
        if bytes.len() > needed {
            return Err(GridDecodeError::Trailing(bytes.len() - needed));
        }
        let data = &bytes[HEADER_LEN..];
        if total % 8 != 0 && data[payload - 1] >> (total % 8) != 0 {
            return Err(GridDecodeError::Padding);
        }
        let values = (0..total).map(|i| data[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self {
            bounds: WorldBox { min, max },
            resolution,
            dt,
            t_start,
            horizon,
            values,
        })
    }

    /// One time slice as CSV rows `ix,iy,x,y,winning`.
    pub fn slice_csv(&self, t: usize) -> String {
        let mut out = String::from("ix,iy,x,y,winning\n");
        for iy in 0..self.resolution {
            for ix in 0..self.resolution {
                let c = self.center(ix, iy);
                let _ = writeln!(
                    out,
                    "{ix},{iy},{},{},{}",
                    c[0],
                    c[1],
                    self.winning(t, ix, iy) as u8
                );
            }
        }
        out
    }
}

/// Signed clearance from the hard constraints at `(t, x)`: positive iff every
/// hard barrier holds strictly, in meters rather than barrier units so that
/// interpolation between cells is meaningful.
fn hard_margin(scenario: &Scenario, t: usize, x: &Vec2) -> f64 {
    scenario
        .hard()
        .map(|c| {
            let dist = (x - c.center).norm();
            match c.kind {
                ConstraintKind::Obstacle => dist - c.radius,
                _ if c.activation(t) > 0.0 => c.radius - dist,
                _ => f64::INFINITY,
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Bilinear stencil over cell centers: four cell indices and weights.
type Stencil = [(usize, f64); 4];

fn stencil(grid: &ReachGrid, x: &Vec2) -> Option<Stencil> {
    if !grid.bounds.contains(x) {
        return None;
    }
    let res = grid.resolution;
    let w = grid.cell_size();
    let rel = x - grid.bounds.min;
    let axis = |k: usize| {
        let f = (rel[k] / w[k] - 0.5).clamp(0.0, (res - 1) as f64);
        let i = (f.floor() as usize).min(res - 2);
        (i, f - i as f64)
    };
    let (ix, fx) = axis(0);
    let (iy, fy) = axis(1);
    let at = |dx: usize, dy: usize| (iy + dy) * res + ix + dx;
    Some([
        (at(0, 0), (1.0 - fx) * (1.0 - fy)),
        (at(1, 0), fx * (1.0 - fy)),
        (at(0, 1), (1.0 - fx) * fy),
        (at(1, 1), fx * fy),
    ])
}

/// Backward induction over the grid.
///
/// Each slice holds a clearance value: at the final step it is the hard
/// margin of the cell center, and earlier it is the smaller of the current
/// margin and the best next-slice value over the discrete controls. The
/// next-slice value is interpolated bilinearly at the successor, since
/// nearest-cell successors would freeze any motion shorter than half a
/// cell. A cell wins when its value is nonnegative; successors outside the
/// world box lose.
pub fn compute_reach(scenario: &Scenario, params: &ReachParams) -> Result<ReachGrid, ReachError> {
    let res = params.resolution;
    if res < MIN_RESOLUTION {
        return Err(ReachError::ResolutionTooLow(res));
    }
    let t_start = scenario.start.t;
    let horizon = scenario.horizon;
    if horizon < t_start {
        return Err(ReachError::EmptyHorizon {
            start: t_start,
            horizon,
        });
    }
    let u = scenario.bounds.u_max;
    let controls = params.controls.clone().unwrap_or_else(|| {
        let levels = [-u, 0.0, u];
        levels
            .iter()
            .flat_map(|&a| levels.iter().map(move |&b| Vec2::new(a, b)))
            .collect()
    });
    if controls.is_empty() {
        return Err(ReachError::NoControls);
    }

    let mut grid = ReachGrid {
        bounds: scenario.world,
        resolution: res,
        dt: scenario.dt,
        t_start,
        horizon,
        values: Vec::new(),
    };
    let width = grid.cell_size().max();
    for obs in scenario.obstacles() {
        let cells = 2.0 * obs.radius / width;
        if cells < 2.0 {
            return Err(ReachError::GridTooCoarse { id: obs.id, cells });
        }
    }

    let cells = res * res;
    let centers: Vec<Vec2> = (0..cells).map(|k| grid.center(k % res, k / res)).collect();
    // The disturbance is time-invariant, so each cell's successors are too.
    let successors: Vec<Vec<Option<Stencil>>> = centers
        .par_iter()
        .map(|x| {
            let drift = disturbance(x, &scenario.zones);
            controls
                .iter()
                .map(|c| stencil(&grid, &(x + (c + drift) * scenario.dt)))
                .collect()
        })
        .collect();

    let steps = horizon - t_start + 1;
    let mut winning = vec![false; steps * cells];
    let mut next: Vec<f64> = centers
        .par_iter()
        .map(|x| hard_margin(scenario, horizon, x))
        .collect();
    let last = (steps - 1) * cells;
    for (w, v) in winning[last..].iter_mut().zip(&next) {
        *w = *v >= 0.0;
    }
    for k in (0..steps - 1).rev() {
        let t = t_start + k;
        let current: Vec<f64> = (0..cells)
            .into_par_iter()
            .map(|c| {
                let best = successors[c]
                    .iter()
                    .map(|s| match s {
                        Some(st) => st.iter().map(|&(i, w)| w * next[i]).sum(),
                        None => f64::NEG_INFINITY,
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                hard_margin(scenario, t, &centers[c]).min(best)
            })
            .collect();
        for (w, v) in winning[k * cells..(k + 1) * cells].iter_mut().zip(&current) {
            *w = *v >= 0.0;
        }
        next = current;
    }
    grid.values = winning;
    Ok(grid)
}

/// Steps needed to go from anywhere in region `a` to the edge of region `b`
/// along the line between their centers, at speed `u_max` capped by what the
/// input box can achieve against the local drift. `None` when the drift
/// stops progress somewhere on the line.
fn travel_steps(scenario: &Scenario, a: (Vec2, f64), b: (Vec2, f64)) -> Option<usize> {
    const SAMPLE: f64 = 0.05;
    let offset = b.0 - a.0;
    let gap = offset.norm() + a.1 - b.1;
    if gap <= 0.0 {
        return Some(0);
    }
    let e = if offset.norm() > 0.0 {
        offset / offset.norm()
    } else {
        Vec2::new(1.0, 0.0)
    };
    let u_max = scenario.bounds.u_max;
    let start = a.0 - e * a.1;
    let pieces = (gap / SAMPLE).ceil().max(1.0) as usize;
    let ds = gap / pieces as f64;
    let mut seconds = 0.0;
    for k in 0..pieces {
        let x = start + e * (ds * (k as f64 + 0.5));
        let speed = line_speed(&e, &disturbance(&x, &scenario.zones), u_max).min(u_max);
        if speed <= 1e-9 {
            return None;
        }
        seconds += ds / speed;
    }
    Some((seconds / scenario.dt).ceil() as usize)
}

/// Largest speed `v` along unit `e` with `‖v·e − d‖∞ ≤ u_max`.
fn line_speed(e: &Vec2, d: &Vec2, u_max: f64) -> f64 {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..2 {
        if e[i].abs() < 1e-12 {
            if d[i].abs() > u_max {
                return 0.0;
            }
            continue;
        }
        let (p, q) = ((d[i] - u_max) / e[i], (d[i] + u_max) / e[i]);
        lo = lo.max(p.min(q));
        hi = hi.min(p.max(q));
    }
    if lo > hi {
        0.0
    } else {
        hi.max(0.0)
    }
}

/// Mask chosen by the reachability oracle, with the reason for each cleared
/// bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachSelection {
    pub mask: SubsetMask,
    /// Soft ids cleared because part of their region is not winning.
    pub unsafe_ids: Vec<usize>,
    /// Soft ids cleared by the forward travel-time pass.
    pub unreachable_ids: Vec<usize>,
}

/// Keep soft constraint `j` iff every cell whose center lies in its region
/// wins at every step where the region is enforced, then walk the kept
/// waypoints in deadline order and clear any that cannot be reached along
/// the straight line between the previous release time and its own first
/// enforced step (or that would make the goal unreachable in time).
pub fn reach_select(scenario: &Scenario, grid: &ReachGrid) -> ReachSelection {
    let n = scenario.num_soft();
    let mut mask = SubsetMask::none(n);
    let mut unsafe_ids = Vec::new();
    for spec in scenario.soft() {
        let w = spec.window.expect("soft constraints are timed");
        let last = w.deadline.min(grid.horizon);
        let first = (w.on + 1).max(grid.t_start);
        let mut cells: Vec<(usize, usize)> = (0..grid.resolution)
            .flat_map(|iy| (0..grid.resolution).map(move |ix| (ix, iy)))
            .filter(|&(ix, iy)| spec.inside_region(&grid.center(ix, iy)))
            .collect();
        if cells.is_empty() {
            cells.extend(grid.cell_of(&spec.center));
        }
        let safe = !cells.is_empty()
            && (first..=last).all(|t| cells.iter().all(|&(ix, iy)| grid.winning(t, ix, iy)));
        if safe {
            mask.set(spec.id, true);
        } else {
            unsafe_ids.push(spec.id);
        }
    }

    let goal = scenario.goal();
    let goal_window = goal.window.expect("goal is timed");
    let mut order: Vec<usize> = mask.ones().collect();
    order.sort_by_key(|&j| (scenario.constraint(j).window.map(|w| w.deadline), j));

    let fits = |a: (Vec2, f64), b: (Vec2, f64), leave: usize, arrive: usize| {
        travel_steps(scenario, a, b).is_some_and(|n| leave + n <= arrive)
    };
    // Worst-case position is anywhere in the previous region.
    let mut kept: Vec<(usize, (Vec2, f64), usize)> = Vec::new();
    let mut from = (scenario.start.position, 0.0);
    let mut released = scenario.start.t;
    let mut unreachable_ids = Vec::new();
    for j in order {
        let spec = scenario.constraint(j);
        let w = spec.window.expect("soft constraints are timed");
        let here = (spec.center, spec.radius);
        if fits(from, here, released, w.on + 1) {
            from = here;
            released = w.deadline;
            kept.push((j, here, released));
        } else {
            unreachable_ids.push(j);
        }
    }
    // The goal must stay reachable from the last kept waypoint.
    let goal_region = (goal.center, goal.radius);
    while let Some(&(j, here, released)) = kept.last() {
        if fits(here, goal_region, released, goal_window.on + 1) {
            break;
        }
        kept.pop();
        unreachable_ids.push(j);
    }
    for &j in &unreachable_ids {
        mask.set(j, false);
    }
    unreachable_ids.sort_unstable();
    ReachSelection {
        mask,
        unsafe_ids,
        unreachable_ids,
    }
}
