mod common;

use common::bundled;
use tasksel::mask::SubsetMask;
use tasksel::policy::PolicyConfig;
use tasksel::rollout::{reward_indicator, roll_out, roll_out_from, RolloutTrace, HARD_PENALTY};
use tasksel::scenario::{DisturbanceLevel, Scenario};
use tasksel::selector::greedy_select;
use tasksel::world::{RobotState, Vec2};

const STRAIGHT: &str = r#"
horizon = 92

[start]
position = [1.0, 1.0]

[goal]
center = [6.0, 6.0]
radius = 0.5
window = [77, 92]

[[waypoints]]
center = [3.0, 3.0]
radius = 0.5
window = [27, 39]
"#;

/// Position at step `t` moving from `a` (at step `t0`) toward `b` at
/// `speed` meters per step, stopping on arrival.
fn toward(a: Vec2, b: Vec2, t0: usize, t: usize, speed: f64) -> Vec2 {
    let d = b - a;
    let travelled = (speed * (t - t0) as f64).min(d.norm());
    a + d.normalize() * travelled
}

#[test]
fn straight_line_waypoint() {
    let s = Scenario::from_toml_str(STRAIGHT).unwrap();
    // A witness path: at 0.1 m per step (within u_max·dt per axis) go to
    // the waypoint center, wait for its deadline, then go to the goal.
    let (wp, goal) = (s.constraint(0), s.goal());
    let dl = wp.window.unwrap().deadline;
    for t in 1..=s.horizon {
        let x = if t <= dl {
            toward(s.start.position, wp.center, 1, t, 0.1)
        } else {
            toward(wp.center, goal.center, dl, t, 0.1)
        };
        for c in &s.constraints {
            assert!(c.satisfied(t, &x), "witness leaves constraint {} at {t}", c.id);
        }
    }

    let o = roll_out(&s, &PolicyConfig::new(&s, SubsetMask::all(1)), &s.start, s.horizon).unwrap();
    assert_eq!(o.metrics.waypoints_arrived, 1);
    assert!(o.metrics.goal_reached);
    assert!(o.trace.is_full_horizon());
    assert_eq!(o.trace.states.len(), o.trace.steps + 1);
}

#[test]
fn incompatible_waypoints_cut_the_horizon() {
    let s = Scenario::from_toml_str(
        r#"
        horizon = 100
        [start]
        position = [5.0, 5.0]
        [goal]
        center = [5.0, 8.0]
        radius = 0.5
        window = [90, 100]
        [[waypoints]]
        center = [1.0, 5.0]
        radius = 0.5
        window = [30, 40]
        [[waypoints]]
        center = [9.0, 5.0]
        radius = 0.5
        window = [35, 41]
        "#,
    )
    .unwrap();
    // Inside the first ball at step 36 and the second at 36 would need the
    // balls to be within one step's reach of each other.
    let (a, b) = (s.constraint(0), s.constraint(1));
    let gap = (a.center - b.center).norm() - a.radius - b.radius;
    assert!(gap > 2f64.sqrt() * s.bounds.u_max * s.dt);

    let o = roll_out(&s, &PolicyConfig::new(&s, SubsetMask::all(2)), &s.start, s.horizon).unwrap();
    assert!(o.trace.feasible_horizon < o.trace.steps);
    let inf = o.trace.infeasible_at.unwrap();
    assert!(inf.min_slack > 1e-8);
    assert!(inf.t <= 36);
    assert_eq!(o.trace.controls.len(), o.trace.feasible_horizon);
}

#[test]
fn split_rollouts_add_up() {
    for (name, level) in [("seven", DisturbanceLevel::Medium), ("nine", DisturbanceLevel::High)] {
        let s = bundled(name).with_level(level);
        let cfg = PolicyConfig::new(&s, SubsetMask::all(s.num_soft()));
        let full = roll_out(&s, &cfg, &s.start, s.horizon).unwrap();
        assert!(full.trace.lagrange_scores.iter().any(|&l| l > 0.0));
        for split in [1, full.trace.feasible_horizon / 3, full.trace.feasible_horizon - 1] {
            let cut = s.start.t + split - 1;
            let head = roll_out(&s, &cfg, &s.start, cut).unwrap();
            let mid = *head.trace.final_state();
            let tail = roll_out_from(&s, &cfg, &mid, s.horizon, head.progress.clone()).unwrap();
            assert_eq!(mid, full.trace.states[split]);
            for j in 0..s.num_soft() {
                let sum = head.trace.lagrange_scores[j] + tail.trace.lagrange_scores[j];
                let l = full.trace.lagrange_scores[j];
                assert!((sum - l).abs() <= 1e-12 * (1.0 + l), "{name} split {split} id {j}: {sum} vs {l}");
                assert!(l >= 0.0);
            }
            assert_eq!(
                head.trace.feasible_horizon + tail.trace.feasible_horizon,
                full.trace.feasible_horizon
            );
        }
    }
}

/// Every imposed barrier obeys the decrease condition up to the
/// linearization tolerance along a full-horizon trace.
fn assert_decrease(s: &Scenario, mask: &SubsetMask, trace: &RolloutTrace) {
    let cfg = PolicyConfig::new(s, mask.clone());
    for k in 0..trace.feasible_horizon {
        let (now, next) = (&trace.states[k], &trace.states[k + 1]);
        for c in s.constraints.iter().filter(|c| cfg.imposes(c) && c.is_imposed_at(now.t)) {
            let before = c.eval(now.t, &now.position);
            let after = c.eval(next.t, &next.position);
            assert!(
                after >= (1.0 - c.alpha) * before - 1e-2,
                "{} id {} at t {}: {after} < (1 − α)·{before}",
                s.name,
                c.id,
                now.t
            );
        }
    }
}

#[test]
fn full_horizon_traces_keep_the_decrease_condition() {
    for name in ["seven", "nine"] {
        for level in [DisturbanceLevel::Low, DisturbanceLevel::Medium, DisturbanceLevel::High] {
            let s = bundled(name).with_level(level);
            let Ok(g) = greedy_select(&s, &s.start, s.horizon) else { continue };
            for mask in [g.best_mask, SubsetMask::none(s.num_soft())] {
                let o = roll_out(&s, &PolicyConfig::new(&s, mask.clone()), &s.start, s.horizon).unwrap();
                if o.trace.is_full_horizon() {
                    assert_decrease(&s, &mask, &o.trace);
                }
            }
        }
    }
}

#[test]
fn rollouts_are_deterministic() {
    let s = bundled("nine");
    let cfg = PolicyConfig::new(&s, "101101101".parse().unwrap());
    let a = roll_out(&s, &cfg, &s.start, s.horizon).unwrap();
    let b = roll_out(&s, &cfg, &s.start, s.horizon).unwrap();
    assert_eq!(a, b);
}

fn parked(s: &Scenario, at: Vec2, steps: usize) -> RolloutTrace {
    RolloutTrace {
        states: (0..=steps).map(|k| RobotState::new(at, 1 + k)).collect(),
        controls: vec![Vec2::zeros(); steps],
        multipliers: vec![Default::default(); steps],
        feasible_horizon: steps,
        steps,
        lagrange_scores: vec![0.0; s.num_soft()],
        hard_violation: None,
        infeasible_at: None,
    }
}

#[test]
fn indicator_reward() {
    let s = Scenario::from_toml_str(
        r#"
        horizon = 40
        [start]
        position = [2.0, 2.0]
        [goal]
        center = [8.0, 8.0]
        radius = 0.5
        window = [30, 40]
        [[waypoints]]
        center = [2.0, 2.0]
        radius = 1.0
        window = [1, 20]
        [[waypoints]]
        center = [2.5, 2.0]
        radius = 1.0
        window = [2, 25]
        [[obstacles]]
        center = [2.0, 4.0]
        radius = 1.0
        "#,
    )
    .unwrap();
    // Both waypoints hold and the goal is not yet active: k = 2 per step.
    let trace = parked(&s, Vec2::new(2.1, 2.0), 20);
    assert_eq!(reward_indicator(&s, &trace), 2.0 * 20.0);

    // One step inside the obstacle costs the penalty and that step's
    // waypoint credit stays.
    let mut bad = trace.clone();
    bad.states[5].position = Vec2::new(2.0, 3.5);
    let recount = |tr: &RolloutTrace| -> f64 {
        tr.states[..tr.feasible_horizon]
            .iter()
            .map(|st| {
                let mut r = 0.0;
                for c in &s.constraints {
                    let ok = c.eval(st.t, &st.position) >= 0.0;
                    if c.is_soft() && ok {
                        r += 1.0;
                    }
                    if !c.is_soft() && !ok {
                        r -= HARD_PENALTY;
                    }
                }
                r
            })
            .sum()
    };
    let soft_there = s.soft().filter(|c| c.satisfied(6, &Vec2::new(2.0, 3.5))).count() as f64;
    assert_eq!(reward_indicator(&s, &bad), 2.0 * 20.0 - HARD_PENALTY - 2.0 + soft_there);
    assert_eq!(reward_indicator(&s, &bad), recount(&bad));

    // A real rollout against the same direct recount.
    let real = roll_out(&s, &PolicyConfig::new(&s, SubsetMask::all(2)), &s.start, s.horizon).unwrap();
    assert_eq!(reward_indicator(&s, &real.trace), recount(&real.trace));
}
