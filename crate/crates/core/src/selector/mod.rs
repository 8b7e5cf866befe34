//! Soft-constraint selection heuristics.
//!
//! All selectors search over [`SubsetMask`]s and score a mask by rolling out
//! the CBF-QP policy that imposes it. Rollouts are deterministic, so an
//! [`Evaluator`] memoizes them per mask; the reported evaluation counts are
//! logical (one per requested fitness evaluation) regardless of cache hits.

mod ga;
mod greedy;
mod receding;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::SubsetMask;
use crate::policy::{PolicyConfig, Progress};
use crate::rollout::{roll_out_from, InfeasibleStep, Metrics, RolloutError};
use crate::scenario::Scenario;
use crate::tasks::ConstraintId;
use crate::world::RobotState;

pub use ga::{ga_select, ga_select_with, genetic_evolve, sample_init, sample_init_with};
pub use greedy::{greedy_select, greedy_select_with, GreedyRun};
pub use receding::{receding_select, RecedingOutcome, SegmentRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("no feasible subset: even the empty soft set fails")]
    NoFeasibleSubset { evaluations: usize },
    #[error("{n_soft} soft constraints exceed the exhaustive-search budget")]
    BudgetExceeded { n_soft: usize },
    #[error("invalid selector configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
}

/// Genetic-search knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    /// Chromosomes per generation (`K_sample`).
    pub population: usize,
    /// Generations (`N_steps`).
    pub steps: usize,
    /// Per-bit flip probability.
    pub mutation_rate: f64,
    pub seed: u64,
    /// Infeasibility weight; `None` means `n_S + 1`.
    pub c_inf: Option<f64>,
    /// Lagrange-score weight.
    pub c_l: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 4,
            steps: 16,
            mutation_rate: 0.1,
            seed: 0,
            c_inf: None,
            c_l: 0.5,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.population < 2 {
            return Err(format!(
                "selector population must be at least 2, got {}",
                self.population
            ));
        }
        if self.steps == 0 {
            return Err("selector steps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(format!(
                "selector mutation_rate must lie in [0, 1], got {}",
                self.mutation_rate
            ));
        }
        if self.c_inf.is_some_and(|c| !(c >= 0.0)) || !(self.c_l >= 0.0) {
            return Err("selector weights must be nonnegative".into());
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Total fitness evaluations of the genetic loop.
    pub fn budget(&self) -> usize {
        self.population * self.steps
    }
}

/// One rollout, reduced to what the selectors need.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mask: SubsetMask,
    pub metrics: Metrics,
    /// Indexed by soft constraint id.
    pub lagrange_scores: Vec<f64>,
    pub infeasible_at: Option<InfeasibleStep>,
}

impl Evaluation {
    pub fn is_full_horizon(&self) -> bool {
        self.metrics.is_full_horizon()
    }
}

/// Memoizing rollout runner for one (scenario, start, horizon) triple.
pub struct Evaluator<'a> {
    scenario: &'a Scenario,
    start: RobotState,
    progress: Progress,
    horizon: usize,
    /// Soft ids the search may toggle; all others follow `base`.
    free: Vec<ConstraintId>,
    base: SubsetMask,
    cache: Mutex<HashMap<SubsetMask, Arc<Evaluation>>>,
}

impl<'a> Evaluator<'a> {
    /// Search over every soft constraint from `start`.
    pub fn new(scenario: &'a Scenario, start: &RobotState, horizon: usize) -> Self {
        let mut progress = Progress::new(scenario);
        progress.observe(scenario, start.t, &start.position);
        let n = scenario.num_soft();
        Self::restricted(
            scenario,
            start,
            horizon,
            progress,
            (0..n).collect(),
            SubsetMask::none(n),
        )
    }

    /// Search over `free` only, with the remaining bits fixed as in `base`.
    pub fn restricted(
        scenario: &'a Scenario,
        start: &RobotState,
        horizon: usize,
        progress: Progress,
        free: Vec<ConstraintId>,
        base: SubsetMask,
    ) -> Self {
        Self {
            scenario,
            start: *start,
            progress,
            horizon,
            free,
            base,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn free(&self) -> &[ConstraintId] {
        &self.free
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn start(&self) -> &RobotState {
        &self.start
    }

    /// Base mask with every free bit set.
    pub fn all_free(&self) -> SubsetMask {
        let mut m = self.base.clone();
        for &j in &self.free {
            m.set(j, true);
        }
        m
    }

    /// Base mask with every free bit cleared.
    pub fn none_free(&self) -> SubsetMask {
        let mut m = self.base.clone();
        for &j in &self.free {
            m.set(j, false);
        }
        m
    }

    pub fn evaluate(&self, mask: &SubsetMask) -> Result<Arc<Evaluation>, RolloutError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(mask) {
            return Ok(Arc::clone(hit));
        }
        let config = PolicyConfig::new(self.scenario, mask.clone());
        let out = roll_out_from(
            self.scenario,
            &config,
            &self.start,
            self.horizon,
            self.progress.clone(),
        )?;
        let eval = Arc::new(Evaluation {
            mask: mask.clone(),
            metrics: out.metrics,
            lagrange_scores: out.trace.lagrange_scores,
            infeasible_at: out.trace.infeasible_at,
        });
        self.cache
            .lock()
            .expect("cache lock")
            .insert(mask.clone(), Arc::clone(&eval));
        Ok(eval)
    }

    /// Fitness of `mask` under `cfg` (lower is better).
    pub fn fitness(&self, mask: &SubsetMask, cfg: &GaConfig) -> Result<f64, RolloutError> {
        let eval = self.evaluate(mask)?;
        let c_inf = cfg.c_inf.unwrap_or((self.free.len() + 1) as f64);
        Ok(fitness_value(&eval, c_inf, cfg.c_l))
    }
}

/// `F = −arrivals + c_inf·(T − T′)/T + c_l·L_imposed/(1 + L_all)`.
///
/// A rollout cut short by an infeasible step earns no arrival credit: its
/// policy did not keep the hard constraints satisfiable over the horizon.
pub fn fitness_value(eval: &Evaluation, c_inf: f64, c_l: f64) -> f64 {
    let m = &eval.metrics;
    let arrivals = if m.is_full_horizon() {
        m.waypoints_arrived as f64
    } else {
        0.0
    };
    let shortfall = m.steps.saturating_sub(m.feasible_horizon) as f64 / m.steps as f64;
    let imposed: f64 = eval.mask.ones().map(|j| eval.lagrange_scores[j]).sum();
    let total: f64 = eval.lagrange_scores.iter().sum();
    -arrivals + c_inf * shortfall + c_l * imposed / (1.0 + total)
}

/// Evaluate `mask` and compute fitness with an explicit soft count.
pub fn fitness(
    scenario: &Scenario,
    mask: &SubsetMask,
    start: &RobotState,
    horizon: usize,
    cfg: &GaConfig,
) -> Result<f64, RolloutError> {
    Evaluator::new(scenario, start, horizon).fitness(mask, cfg)
}

/// Result of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub best_mask: SubsetMask,
    pub best_metrics: Metrics,
    /// Fitness-loop evaluations (`2^{n_S}` for exhaustive search, restarts
    /// + 1 for greedy, `K_sample · N_steps` for the genetic search).
    pub evaluations: usize,
    /// Rollouts spent outside the counted loop (greedy initialization,
    /// fallback to the empty mask).
    pub extra_evaluations: usize,
    /// Best fitness after each generation (genetic search only).
    pub history: Vec<f64>,
    /// Soft ids in the order greedy dropped them (greedy only).
    pub drop_order: Vec<ConstraintId>,
}
