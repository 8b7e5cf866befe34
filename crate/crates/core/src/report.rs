//! Run reports, method comparison and trajectory export.
//!
//! A [`RunReport`] embeds the resolved scenario and every run setting, so a
//! run can be replayed from its report alone. Reports hold no wall-clock
//! time: the same scenario, method and seed always serialize to the same
//! bytes.

use std::fmt;
use std::fmt::Write as _;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{MaskParseError, SubsetMask};
use crate::oracles::{compute_reach, exhaustive_select, reach_select, ReachError, ReachGrid, ReachParams};
use crate::policy::PolicyConfig;
use crate::rollout::{roll_out, HardViolation, InfeasibleStep, Metrics, RolloutError, RolloutTrace};
use crate::scenario::{Scenario, ScenarioFile};
use crate::selector::{ga_select, greedy_select, receding_select, GaConfig, SelectError};

/// Selection method of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// A fixed, user-supplied mask.
    Rollout,
    Reach,
    Exhaustive,
    Greedy,
    Ga,
    GaReceding,
}

impl Method {
    pub const SELECTORS: [Method; 5] = [
        Method::Reach,
        Method::Exhaustive,
        Method::Greedy,
        Method::Ga,
        Method::GaReceding,
    ];

    /// Whether the result depends on the seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Ga | Method::GaReceding)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rollout => "rollout",
            Method::Reach => "reach",
            Method::Exhaustive => "exhaustive",
            Method::Greedy => "greedy",
            Method::Ga => "ga",
            Method::GaReceding => "ga-receding",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rollout" => Ok(Method::Rollout),
            "reach" => Ok(Method::Reach),
            "exhaustive" => Ok(Method::Exhaustive),
            "greedy" => Ok(Method::Greedy),
            "ga" => Ok(Method::Ga),
            "ga-receding" => Ok(Method::GaReceding),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

/// Everything a run needs beyond the scenario, with defaults materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    /// Final time step.
    pub horizon: usize,
    pub seed: u64,
    pub selector: GaConfig,
    pub replan_every: usize,
    pub lookahead: usize,
    pub grid_resolution: usize,
    /// Mask for [`Method::Rollout`].
    pub mask: Option<SubsetMask>,
}

impl RunSettings {
    /// Scenario defaults: receding replans every tenth of the horizon over a
    /// fifth of it, and the reach grid is 64 cells per axis.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let mut selector = scenario.selector.clone();
        selector.c_inf = Some(
            selector
                .c_inf
                .unwrap_or((scenario.num_soft() + 1) as f64),
        );
        let mut settings = Self {
            horizon: scenario.horizon,
            seed: selector.seed,
            selector,
            replan_every: 1,
            lookahead: 1,
            grid_resolution: ReachParams::default().resolution,
            mask: None,
        };
        settings.set_horizon(scenario.horizon);
        settings
    }

    /// Change the horizon and rescale the receding defaults with it.
    pub fn set_horizon(&mut self, horizon: usize) {
        self.horizon = horizon;
        self.replan_every = (horizon / 10).max(1);
        self.lookahead = (horizon / 5).max(self.replan_every);
    }

    fn ga_config(&self) -> GaConfig {
        self.selector.with_seed(self.seed)
    }
}

/// A failed run, as recorded in its report row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunErrorRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Mask(#[from] MaskParseError),
    #[error("the rollout method needs a mask")]
    MissingMask,
    #[error("horizon {horizon} precedes start time {start}")]
    Horizon { start: usize, horizon: usize },
}

impl RunError {
    pub fn is_no_feasible_subset(&self) -> bool {
        matches!(self, RunError::Select(SelectError::NoFeasibleSubset { .. }))
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Select(SelectError::NoFeasibleSubset { .. }) => "no-feasible-subset",
            RunError::Select(SelectError::BudgetExceeded { .. }) => "budget-exceeded",
            RunError::Select(SelectError::InvalidConfig(_)) => "invalid-config",
            RunError::Select(SelectError::Rollout(_)) | RunError::Rollout(_) => "rollout",
            RunError::Reach(_) => "reach",
            RunError::Mask(_) | RunError::MissingMask => "mask",
            RunError::Horizon { .. } => "horizon",
        }
    }

    pub fn record(&self) -> RunErrorRecord {
        RunErrorRecord {
            kind: self.kind().into(),
            message: self.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    /// Repeat index within a comparison; 0 for single runs.
    pub repeat: usize,
    pub settings: RunSettings,
    /// Fully resolved scenario.
    pub config: ScenarioFile,
    pub mask: Option<SubsetMask>,
    pub metrics: Option<Metrics>,
    /// Waypoints arrived, counted only when the run kept the QP feasible
    /// over the whole horizon.
    pub credited_arrivals: usize,
    pub evaluations: usize,
    pub extra_evaluations: usize,
    pub history: Vec<f64>,
    pub drop_order: Vec<usize>,
    pub unsafe_ids: Vec<usize>,
    pub unreachable_ids: Vec<usize>,
    /// Replanning segments (receding runs).
    pub segments: usize,
    pub min_hard_barrier: Option<f64>,
    pub hard_violation: Option<HardViolation>,
    pub infeasible_at: Option<InfeasibleStep>,
    /// File name of the exported trajectory, if any.
    pub trajectory: Option<String>,
    pub error: Option<RunErrorRecord>,
}

impl RunReport {
    fn blank(scenario: &Scenario, method: Method, settings: &RunSettings) -> Self {
        Self {
            scenario: scenario.name.clone(),
            method,
            seed: settings.seed,
            repeat: 0,
            settings: settings.clone(),
            config: scenario.to_file(),
            mask: None,
            metrics: None,
            credited_arrivals: 0,
            evaluations: 0,
            extra_evaluations: 0,
            history: Vec::new(),
            drop_order: Vec::new(),
            unsafe_ids: Vec::new(),
            unreachable_ids: Vec::new(),
            segments: 0,
            min_hard_barrier: None,
            hard_violation: None,
            infeasible_at: None,
            trajectory: None,
            error: None,
        }
    }

    /// Report row for a run that failed.
    pub fn failed(scenario: &Scenario, method: Method, settings: &RunSettings, err: &RunError) -> Self {
        let mut r = Self::blank(scenario, method, settings);
        r.error = Some(err.record());
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// A report together with the closed-loop trace it describes.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: RolloutTrace,
    /// Winning-set grid of a reach run.
    pub grid: Option<ReachGrid>,
}

fn attach_trace(report: &mut RunReport, scenario: &Scenario, metrics: Metrics, trace: &RolloutTrace) {
    report.credited_arrivals = if metrics.is_full_horizon() {
        metrics.waypoints_arrived
    } else {
        0
    };
    report.metrics = Some(metrics);
    report.min_hard_barrier = Some(trace.min_hard_barrier(scenario)).filter(|v| v.is_finite());
    report.hard_violation = trace.hard_violation;
    report.infeasible_at = trace.infeasible_at;
}

/// Run one method once.
pub fn run_method(
    scenario: &Scenario,
    method: Method,
    settings: &RunSettings,
) -> Result<RunOutput, RunError> {
    if settings.horizon < scenario.start.t {
        return Err(RunError::Horizon {
            start: scenario.start.t,
            horizon: settings.horizon,
        });
    }
    let scenario = &scenario.with_horizon(settings.horizon);
    let start = &scenario.start;
    let horizon = settings.horizon;
    let n = scenario.num_soft();
    let mut report = RunReport::blank(scenario, method, settings);

    if method == Method::GaReceding {
        let out = receding_select(
            scenario,
            start,
            horizon,
            settings.replan_every,
            settings.lookahead,
            &settings.ga_config(),
        )?;
        report.mask = Some(out.final_mask.clone());
        report.evaluations = out.evaluations();
        report.extra_evaluations = out.segments.iter().map(|s| s.extra_evaluations).sum();
        report.segments = out.segments.len();
        attach_trace(&mut report, scenario, out.metrics, &out.trace);
        return Ok(RunOutput {
            report,
            trace: out.trace,
            grid: None,
        });
    }

    let mut grid = None;
    let mask = match method {
        Method::Rollout => {
            let mask = settings.mask.as_ref().ok_or(RunError::MissingMask)?;
            if mask.len() != n {
                return Err(MaskParseError::Length {
                    found: mask.len(),
                    expected: n,
                }
                .into());
            }
            mask.clone()
        }
        Method::Reach => {
            let g = compute_reach(scenario, &ReachParams::new(settings.grid_resolution))?;
            let sel = reach_select(scenario, &g);
            grid = Some(g);
            report.unsafe_ids = sel.unsafe_ids;
            report.unreachable_ids = sel.unreachable_ids;
            sel.mask
        }
        Method::Exhaustive => {
            let o = exhaustive_select(scenario, start, horizon)?.outcome;
            report.evaluations = o.evaluations;
            report.extra_evaluations = o.extra_evaluations;
            o.best_mask
        }
        Method::Greedy => {
            let o = greedy_select(scenario, start, horizon)?;
            report.evaluations = o.evaluations;
            report.extra_evaluations = o.extra_evaluations;
            report.drop_order = o.drop_order;
            o.best_mask
        }
        Method::Ga => {
            let o = ga_select(scenario, start, horizon, &settings.ga_config())?;
            report.evaluations = o.evaluations;
            report.extra_evaluations = o.extra_evaluations;
            report.history = o.history;
            o.best_mask
        }
        Method::GaReceding => unreachable!("handled above"),
    };
    let out = roll_out(scenario, &PolicyConfig::new(scenario, mask.clone()), start, horizon)?;
    report.mask = Some(mask);
    attach_trace(&mut report, scenario, out.metrics, &out.trace);
    Ok(RunOutput {
        report,
        trace: out.trace,
        grid,
    })
}

/// Per-method aggregate over the rows of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub errors: usize,
    /// Over successful runs, using credited arrivals.
    pub mean_arrivals: f64,
    pub stdev_arrivals: f64,
    pub goal_rate: f64,
    pub mean_evaluations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<RunReport>,
    pub summary: Vec<MethodSummary>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompareError {
    #[error("no methods to compare")]
    NoMethods,
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("no seeds given")]
    NoSeeds,
}

const REPEAT_SEED_STRIDE: u64 = 0xD1B5_4A32_D192_ED03;

/// Seed of repeat `r` of base seed `seed`; repeat 0 keeps the base seed.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    seed.wrapping_add((repeat as u64).wrapping_mul(REPEAT_SEED_STRIDE))
}

/// Run every method on the scenario. Stochastic methods get one row per
/// (seed, repeat); deterministic ones a single row. Failures become rows
/// with `error` set. Rows are in method order, then seed, then repeat.
pub fn run_compare(
    scenario: &Scenario,
    methods: &[Method],
    seeds: &[u64],
    repeats: usize,
    settings: &RunSettings,
) -> Result<CompareTable, CompareError> {
    if methods.is_empty() {
        return Err(CompareError::NoMethods);
    }
    if repeats == 0 {
        return Err(CompareError::NoRepeats);
    }
    if seeds.is_empty() {
        return Err(CompareError::NoSeeds);
    }
    let mut jobs = Vec::new();
    for &m in methods {
        if m.is_stochastic() {
            for &s in seeds {
                for r in 0..repeats {
                    jobs.push((m, repeat_seed(s, r), r));
                }
            }
        } else {
            jobs.push((m, seeds[0], 0));
        }
    }
    let rows: Vec<RunReport> = jobs
        .par_iter()
        .map(|&(method, seed, repeat)| {
            let settings = RunSettings {
                seed,
                ..settings.clone()
            };
            let mut report = match run_method(scenario, method, &settings) {
                Ok(out) => out.report,
                Err(e) => RunReport::failed(scenario, method, &settings, &e),
            };
            report.repeat = repeat;
            report
        })
        .collect();
    let summary = summarize(methods, &rows);
    Ok(CompareTable { rows, summary })
}

fn summarize(methods: &[Method], rows: &[RunReport]) -> Vec<MethodSummary> {
    let mut seen = Vec::new();
    for &m in methods {
        if !seen.contains(&m) {
            seen.push(m);
        }
    }
    seen.into_iter()
        .map(|method| {
            let mine: Vec<&RunReport> = rows.iter().filter(|r| r.method == method).collect();
            let ok: Vec<&RunReport> = mine.iter().copied().filter(|r| r.error.is_none()).collect();
            let k = ok.len() as f64;
            let mean = |f: &dyn Fn(&RunReport) -> f64| {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / k
                }
            };
            let mean_arrivals = mean(&|r| r.credited_arrivals as f64);
            let var = mean(&|r| (r.credited_arrivals as f64 - mean_arrivals).powi(2));
            MethodSummary {
                method,
                runs: mine.len(),
                errors: mine.len() - ok.len(),
                mean_arrivals,
                stdev_arrivals: var.sqrt(),
                goal_rate: mean(&|r| {
                    r.metrics.as_ref().is_some_and(|m| m.goal_reached && m.is_full_horizon()) as u8
                        as f64
                }),
                mean_evaluations: mean(&|r| r.evaluations as f64),
            }
        })
        .collect()
}

impl CompareTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    /// One CSV line per row.
    pub fn rows_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "seed",
            "repeat",
            "mask",
            "arrived",
            "credited",
            "goal",
            "feasible_horizon",
            "steps",
            "evaluations",
            "extra_evaluations",
            "error",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            let m = r.metrics.as_ref();
            w.write_record([
                r.method.to_string(),
                r.seed.to_string(),
                r.repeat.to_string(),
                r.mask.as_ref().map(|m| m.to_string()).unwrap_or_default(),
                m.map(|m| m.waypoints_arrived.to_string()).unwrap_or_default(),
                r.credited_arrivals.to_string(),
                m.map(|m| m.goal_reached.to_string()).unwrap_or_default(),
                m.map(|m| m.feasible_horizon.to_string()).unwrap_or_default(),
                m.map(|m| m.steps.to_string()).unwrap_or_default(),
                r.evaluations.to_string(),
                r.extra_evaluations.to_string(),
                r.error.as_ref().map(|e| e.kind.clone()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Human-readable summary table.
    pub fn render_summary(&self, n_soft: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>6} {:>9} {:>7} {:>6} {:>11}",
            "method", "runs", "errors", "arrivals", "stdev", "goal", "evaluations"
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<12} {:>5} {:>6} {:>9.2} {:>7.2} {:>6.2} {:>11.1}",
                s.method.to_string(),
                s.runs,
                s.errors,
                s.mean_arrivals,
                s.stdev_arrivals,
                s.goal_rate,
                s.mean_evaluations
            );
        }
        if self.summary.iter().any(|s| s.method == Method::Exhaustive) && n_soft < 64 {
            let _ = writeln!(
                out,
                "note: exhaustive evaluations count all 2^{n_soft} = {} masks; \
                 fixing one bit would halve this to {}",
                1u64 << n_soft,
                (1u64 << n_soft) / 2
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Trajectory CSV

/// One row of an exported trajectory. The final state has no control and no
/// multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub x: [f64; 2],
    pub u: Option<[f64; 2]>,
    /// Barrier value per constraint, aligned with [`Trajectory::ids`].
    pub h: Vec<f64>,
    /// Multiplier per constraint; `None` where no row was imposed.
    pub lambda: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ids: Vec<usize>,
    pub rows: Vec<TrajectoryRow>,
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

fn header(ids: &[usize]) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "x0", "x1", "u0", "u1"].map(String::from).to_vec();
    for id in ids {
        cols.push(format!("h_{id}"));
        cols.push(format!("lambda_{id}"));
    }
    cols
}

/// Write `trace` with columns `t, x0, x1, u0, u1`, then `h_<id>, lambda_<id>`
/// for every constraint of the scenario.
pub fn write_trajectory_csv<W: io::Write>(
    scenario: &Scenario,
    trace: &RolloutTrace,
    writer: W,
) -> Result<(), csv::Error> {
    let ids: Vec<usize> = scenario.constraints.iter().map(|c| c.id).collect();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(&ids))?;
    for (k, s) in trace.states.iter().enumerate() {
        let u = trace.controls.get(k);
        let lambdas = trace.multipliers.get(k);
        let mut rec = vec![
            s.t.to_string(),
            s.position[0].to_string(),
            s.position[1].to_string(),
            u.map(|u| u[0].to_string()).unwrap_or_default(),
            u.map(|u| u[1].to_string()).unwrap_or_default(),
        ];
        for c in &scenario.constraints {
            rec.push(c.eval(s.t, &s.position).to_string());
            rec.push(
                lambdas
                    .and_then(|l| l.get(&c.id))
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trajectory_csv_string(scenario: &Scenario, trace: &RolloutTrace) -> String {
    let mut buf = Vec::new();
    write_trajectory_csv(scenario, trace, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Parse a trajectory written by [`write_trajectory_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let head = reader.headers()?.clone();
    let cols: Vec<&str> = head.iter().collect();
    if cols.len() < 5 || cols[..5] != ["t", "x0", "x1", "u0", "u1"] {
        return Err(TrajectoryError::Header(
            "must start with t,x0,x1,u0,u1".into(),
        ));
    }
    if (cols.len() - 5) % 2 != 0 {
        return Err(TrajectoryError::Header(
            "constraint columns must come in h/lambda pairs".into(),
        ));
    }
    let mut ids = Vec::new();
    for pair in cols[5..].chunks(2) {
        let id = pair[0]
            .strip_prefix("h_")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| TrajectoryError::Header(format!("expected h_<id>, found {:?}", pair[0])))?;
        if pair[1] != format!("lambda_{id}") {
            return Err(TrajectoryError::Header(format!(
                "expected lambda_{id}, found {:?}",
                pair[1]
            )));
        }
        if ids.contains(&id) {
            return Err(TrajectoryError::Header(format!("duplicate constraint {id}")));
        }
        ids.push(id);
    }

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let err = |msg: String| TrajectoryError::Row { row, msg };
        let num = |k: usize| -> Result<f64, TrajectoryError> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| err(format!("column {}: {e}", cols[k])))
        };
        let opt = |k: usize| -> Result<Option<f64>, TrajectoryError> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        if rec.len() != cols.len() {
            return Err(err(format!("{} fields, expected {}", rec.len(), cols.len())));
        }
        let t = rec[0]
            .parse::<usize>()
            .map_err(|e| err(format!("column t: {e}")))?;
        let u = match (opt(3)?, opt(4)?) {
            (Some(a), Some(b)) => Some([a, b]),
            (None, None) => None,
            _ => return Err(err("control has one component".into())),
        };
        let mut h = Vec::with_capacity(ids.len());
        let mut lambda = Vec::with_capacity(ids.len());
        for j in 0..ids.len() {
            h.push(num(5 + 2 * j)?);
            lambda.push(opt(6 + 2 * j)?);
        }
        rows.push(TrajectoryRow {
            t,
            x: [num(1)?, num(2)?],
            u,
            h,
            lambda,
        });
    }
    Ok(Trajectory { ids, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Scenario {
        Scenario::from_toml_str(
            r#"
            horizon = 40
            [start]
            position = [1.0, 1.0]
            [goal]
            center = [3.0, 1.0]
            radius = 0.5
            window = [30, 40]
            [[waypoints]]
            center = [2.0, 2.0]
            radius = 0.5
            window = [10, 16]
            [[obstacles]]
            center = [2.0, 0.0]
            radius = 0.4
            "#,
        )
        .unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::SELECTORS.into_iter().chain([Method::Rollout]) {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{m}\""));
        }
        assert!("astar".parse::<Method>().is_err());
    }

    #[test]
    fn rollout_without_mask_fails() {
        let s = tiny();
        let settings = RunSettings::for_scenario(&s);
        assert!(matches!(
            run_method(&s, Method::Rollout, &settings),
            Err(RunError::MissingMask)
        ));
    }

    #[test]
    fn resolved_settings_materialize_weights() {
        let s = tiny();
        let settings = RunSettings::for_scenario(&s);
        assert_eq!(settings.selector.c_inf, Some(2.0));
        assert_eq!(settings.replan_every, 4);
        assert_eq!(settings.lookahead, 8);
    }

    #[test]
    fn deterministic_methods_collapse() {
        let s = tiny();
        let settings = RunSettings::for_scenario(&s);
        let t = run_compare(&s, &[Method::Greedy], &[1, 2, 3], 5, &settings).unwrap();
        assert_eq!(t.rows.len(), 1);
        let t = run_compare(&s, &[Method::Ga], &[1, 2], 5, &settings).unwrap();
        assert_eq!(t.rows.len(), 10);
        assert_eq!(t.summary[0].runs, 10);
        assert!(run_compare(&s, &[], &[1], 1, &settings).is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let s = tiny();
        let mut settings = RunSettings::for_scenario(&s);
        settings.mask = Some("1".parse().unwrap());
        let out = run_method(&s, Method::Rollout, &settings).unwrap();
        let text = trajectory_csv_string(&s, &out.trace);
        let tr = parse_trajectory_csv(&text).unwrap();
        assert_eq!(tr.ids, vec![0, 1, 2]);
        assert_eq!(tr.rows.len(), out.trace.states.len());
        assert!(tr.rows.last().unwrap().u.is_none());
        for row in &tr.rows {
            let x = crate::world::Vec2::new(row.x[0], row.x[1]);
            for (j, &id) in tr.ids.iter().enumerate() {
                let h = s.constraint(id).eval(row.t, &x);
                assert!((h - row.h[j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn malformed_trajectory_headers() {
        assert!(parse_trajectory_csv("t,x0,x1,u0\n").is_err());
        assert!(parse_trajectory_csv("t,x0,x1,u0,u1,h_0\n").is_err());
        assert!(parse_trajectory_csv("t,x0,x1,u0,u1,h_0,lambda_1\n").is_err());
        assert!(parse_trajectory_csv("t,x0,x1,u0,u1,h_0,lambda_0,h_0,lambda_0\n").is_err());
        let ok = parse_trajectory_csv("t,x0,x1,u0,u1\n3,1,2,,\n").unwrap();
        assert_eq!(ok.rows[0].u, None);
        assert!(parse_trajectory_csv("t,x0,x1,u0,u1\n3,1,2,0.5,\n").is_err());
    }
}
