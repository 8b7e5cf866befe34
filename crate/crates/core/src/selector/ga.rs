use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::mask::SubsetMask;
use crate::scenario::Scenario;
use crate::tasks::ConstraintId;
use crate::world::RobotState;

use super::greedy::greedy_run;
use super::{Evaluator, GaConfig, SelectError, SelectionOutcome};

/// Initial population: the nested prefixes of the greedy drop sequence
/// (all free bits set, then one dropped, then two, ...), truncated to
/// `k_sample`. When greedy stops early the remainder is padded with seeded
/// single-bit flips of the last prefix.
///
/// Returns the population and the number of rollouts greedy spent.
pub fn sample_init(
    scenario: &Scenario,
    start: &RobotState,
    horizon: usize,
    k_sample: usize,
    seed: u64,
) -> Result<(Vec<SubsetMask>, usize), SelectError> {
    let evaluator = Evaluator::new(scenario, start, horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_init_with(&evaluator, k_sample, &mut rng)
}

pub fn sample_init_with(
    evaluator: &Evaluator<'_>,
    k_sample: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<SubsetMask>, usize), SelectError> {
    if k_sample == 0 {
        return Err(SelectError::InvalidConfig("k_sample must be at least 1".into()));
    }
    let run = greedy_run(evaluator)?;
    let spent = run.masks.len();
    let mut population: Vec<SubsetMask> = run.masks.into_iter().take(k_sample).collect();
    let last = population.last().cloned().expect("greedy tries at least one mask");
    let free = evaluator.free();
    let mut unused: Vec<ConstraintId> = free.to_vec();
    while population.len() < k_sample {
        let mut m = last.clone();
        if !free.is_empty() {
            // Prefer bits not flipped yet so padding masks differ.
            let pool = if unused.is_empty() { free } else { &unused[..] };
            let j = pool[rng.gen_range(0..pool.len())];
            unused.retain(|&u| u != j);
            m.flip(j);
        }
        population.push(m);
    }
    Ok((population, spent))
}

/// One generation: elitism of one, rank-proportional parent selection
/// (weight `K − rank`), single-point crossover at a uniform cut, and
/// per-bit mutation of the `free` positions.
pub fn genetic_evolve(
    population: &[SubsetMask],
    fitnesses: &[f64],
    free: &[ConstraintId],
    mutation_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<SubsetMask> {
    assert!(!population.is_empty(), "population must be nonempty");
    assert_eq!(population.len(), fitnesses.len(), "fitnesses must align");
    let k = population.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| fitnesses[a].total_cmp(&fitnesses[b]).then(a.cmp(&b)));
    // order[rank] = index; weight of rank r is k - r.
    let total_weight = k * (k + 1) / 2;
    let pick = |rng: &mut ChaCha8Rng| {
        let mut ticket = rng.gen_range(0..total_weight);
        for (rank, &idx) in order.iter().enumerate() {
            let w = k - rank;
            if ticket < w {
                return idx;
            }
            ticket -= w;
        }
        order[k - 1]
    };

    let mut next = Vec::with_capacity(k);
    next.push(population[order[0]].clone());
    while next.len() < k {
        let a = &population[pick(rng)];
        let b = &population[pick(rng)];
        let len = a.len();
        let cut = rng.gen_range(0..=len);
        let mut child =
            SubsetMask::from_bits((0..len).map(|j| if j < cut { a.get(j) } else { b.get(j) }).collect());
        for &j in free {
            if rng.gen_bool(mutation_rate) {
                child.flip(j);
            }
        }
        next.push(child);
    }
    next
}

/// Genetic search over soft-constraint masks.
pub fn ga_select(
    scenario: &Scenario,
    start: &RobotState,
    horizon: usize,
    cfg: &GaConfig,
) -> Result<SelectionOutcome, SelectError> {
    ga_select_with(&Evaluator::new(scenario, start, horizon), cfg)
}

pub fn ga_select_with(
    evaluator: &Evaluator<'_>,
    cfg: &GaConfig,
) -> Result<SelectionOutcome, SelectError> {
    cfg.validate().map_err(SelectError::InvalidConfig)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut population, init_spent) = sample_init_with(evaluator, cfg.population, &mut rng)?;

    let mut best: Option<(f64, SubsetMask)> = None;
    let mut history = Vec::with_capacity(cfg.steps);
    let mut evaluations = 0;
    for _ in 0..cfg.steps {
        let fitnesses = population
            .par_iter()
            .map(|m| evaluator.fitness(m, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        evaluations += population.len();
        for (m, &f) in population.iter().zip(&fitnesses) {
            if best.as_ref().is_none_or(|(fmin, _)| f < *fmin) {
                best = Some((f, m.clone()));
            }
        }
        history.push(best.as_ref().map(|(f, _)| *f).expect("population is nonempty"));
        population = genetic_evolve(
            &population,
            &fitnesses,
            evaluator.free(),
            cfg.mutation_rate,
            &mut rng,
        );
    }

    let (_, mut best_mask) = best.expect("at least one generation");
    let mut best_eval = evaluator.evaluate(&best_mask)?;
    let mut extra = init_spent;
    if !best_eval.is_full_horizon() {
        let empty = evaluator.none_free();
        let fallback = evaluator.evaluate(&empty)?;
        extra += 1;
        if !fallback.is_full_horizon() {
            return Err(SelectError::NoFeasibleSubset {
                evaluations: evaluations + extra,
            });
        }
        best_mask = empty;
        best_eval = fallback;
    }
    Ok(SelectionOutcome {
        best_mask,
        best_metrics: best_eval.metrics.clone(),
        evaluations,
        extra_evaluations: extra,
        history,
        drop_order: Vec::new(),
    })
}
