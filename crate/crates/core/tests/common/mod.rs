//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tasksel::qp::{QpProblem, QpSolution};
use tasksel::mask::SubsetMask;
use tasksel::policy::PolicyConfig;
use tasksel::rollout::roll_out;
use tasksel::scenario::{load_scenario, Scenario};

/// Random symmetric positive-definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    let q = g.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.gen_range(lo..hi)));
    let h = &q * d * q.transpose();
    (&h + h.transpose()) * 0.5
}

/// Random QP with `rows` constraints around a known feasible point.
///
/// Roughly a third of the rows pass through that point, the rest keep some
/// slack. With `unit_rows` every constraint row has unit norm.
pub fn random_qp(
    rng: &mut ChaCha8Rng,
    m: usize,
    rows: usize,
    eig: (f64, f64),
    unit_rows: bool,
) -> (QpProblem, DVector<f64>) {
    let h = random_spd(rng, m, eig.0, eig.1);
    let c = DVector::from_fn(m, |_, _| rng.gen_range(-3.0..3.0));
    let u0 = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let mut a: DMatrix<f64> = DMatrix::from_fn(rows, m, |_, _| rng.gen_range(-2.0..2.0));
    if unit_rows {
        for k in 0..rows {
            let n = a.row(k).norm().max(1e-3);
            a.row_mut(k).scale_mut(1.0 / n);
        }
    }
    let mut b = DVector::zeros(rows);
    for k in 0..rows {
        let s = if rng.gen_bool(0.33) { 0.0 } else { rng.gen_range(0.0..1.5) };
        b[k] = -(a.row(k) * &u0)[0] + s;
    }
    (QpProblem::new(h, c, a, b).unwrap(), u0)
}

/// Deviations from the KKT conditions at an optimal solution.
pub struct KktReport {
    pub stationarity: f64,
    pub min_dual: f64,
    pub complementarity: f64,
    pub min_slack: f64,
}

pub fn kkt(p: &QpProblem, sol: &QpSolution) -> KktReport {
    let u = sol.primal.as_ref().unwrap();
    let lambda = sol.duals.as_ref().unwrap();
    let grad = p.hessian() * u + p.linear() - p.rows().transpose() * lambda;
    let slack = p.slack(u);
    let complementarity = (0..lambda.len())
        .map(|k| (lambda[k] * slack[k]).abs() / (1.0 + p.offsets()[k].abs()))
        .fold(0.0, f64::max);
    KktReport {
        stationarity: grad.amax(),
        min_dual: lambda.iter().copied().fold(f64::INFINITY, f64::min),
        complementarity,
        min_slack: slack.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

pub fn assert_kkt(p: &QpProblem, sol: &QpSolution) {
    let r = kkt(p, sol);
    assert!(r.stationarity <= 1e-6, "stationarity {:e}", r.stationarity);
    assert!(r.min_dual >= 0.0, "negative multiplier {:e}", r.min_dual);
    assert!(r.complementarity <= 1e-6, "complementarity {:e}", r.complementarity);
    assert!(r.min_slack >= -1e-8, "infeasible point, slack {:e}", r.min_slack);
}

/// Exact minimum by enumerating faces: the optimum minimizes the objective
/// over the affine hull of some face cut out by at most m rows, so solving
/// every such equality problem and keeping the feasible points finds it.
pub fn face_minimum(p: &QpProblem) -> f64 {
    let m = p.dim();
    let q = p.num_constraints();
    let (h, a, b) = (p.hessian(), p.rows(), p.offsets());
    let mut best = f64::INFINITY;
    let mut subset = Vec::new();
    for bits in 0u32..(1 << q) {
        if bits.count_ones() as usize > m {
            continue;
        }
        subset.clear();
        subset.extend((0..q).filter(|k| bits >> k & 1 == 1));
        let s = subset.len();
        let mut kkt = DMatrix::zeros(m + s, m + s);
        let mut rhs = DVector::zeros(m + s);
        kkt.view_mut((0, 0), (m, m)).copy_from(h);
        for j in 0..m {
            rhs[j] = -p.linear()[j];
        }
        for (i, &k) in subset.iter().enumerate() {
            for j in 0..m {
                kkt[(m + i, j)] = a[(k, j)];
                kkt[(j, m + i)] = a[(k, j)];
            }
            rhs[m + i] = -b[k];
        }
        if kkt.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(z) = kkt.lu().solve(&rhs) else { continue };
        let u = z.rows(0, m).into_owned();
        let ok = p
            .slack(&u)
            .iter()
            .zip(b.iter())
            .all(|(&sl, &bk)| sl >= -1e-9 * (1.0 + bk.abs()));
        if ok {
            best = best.min(p.objective(&u));
        }
    }
    best
}

/// Best objective over a uniform mesh of feasible points; an upper bound on
/// the true minimum.
pub fn mesh_bound(p: &QpProblem, center: &DVector<f64>, radius: f64, per_axis: usize) -> f64 {
    let m = p.dim();
    let mut best = f64::INFINITY;
    let mut u = DVector::zeros(m);
    for idx in 0..per_axis.pow(m as u32) {
        let mut rest = idx;
        for j in 0..m {
            let i = rest % per_axis;
            rest /= per_axis;
            u[j] = center[j] + radius * (2.0 * i as f64 / (per_axis - 1) as f64 - 1.0);
        }
        if p.slack(&u).iter().all(|&s| s >= 0.0) {
            best = best.min(p.objective(&u));
        }
    }
    best
}

/// Bundled scenario by file stem.
pub fn bundled(name: &str) -> Scenario {
    let path = format!("{}/../../scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    load_scenario(path).unwrap()
}

/// Three waypoints in a calm world where only the last two conflict: the
/// robot cannot sit in waypoint 1 at step 84 and reach waypoint 2 by 90.
pub const THREE_CONFLICT: &str = r#"
name = "three"
horizon = 165

[start]
position = [1.0, 1.0]

[selector]
population = 4
steps = 8

[goal]
center = [8.0, 8.0]
radius = 0.5
window = [150, 165]

[[waypoints]]
center = [2.5, 1.0]
radius = 0.5
window = [16, 28]

[[waypoints]]
center = [2.5, 6.0]
radius = 0.5
window = [72, 84]

[[waypoints]]
center = [7.0, 1.5]
radius = 0.5
window = [80, 90]
"#;

pub fn three_conflict() -> Scenario {
    Scenario::from_toml_str(THREE_CONFLICT).unwrap()
}

/// Steps to cover `d` meters at 80% of the speed limit.
fn travel(d: f64, u_max: f64, dt: f64) -> usize {
    (d.max(0.0) / (0.8 * u_max * dt)).ceil() as usize
}

/// Random candidate for [`micro_scenario`]. Windows open
/// once the robot can have reached the waypoint; some are then pulled
/// earlier so that consecutive waypoints may conflict. An obstacle and a
/// disturbance zone are added when they stay clear of every region.
fn micro_candidate(rng: &mut ChaCha8Rng, max_soft: usize) -> Scenario {
    let (u_max, dt, radius) = (1.5, 0.1, 0.5);
    let n = rng.gen_range(1..=max_soft);
    let start = [rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0)];
    let mut centers = Vec::new();
    while centers.len() < n {
        let c = [rng.gen_range(1.0..9.0), rng.gen_range(1.0..9.0)];
        let far = |a: &[f64; 2]| ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt() > 1.5;
        if far(&start) && centers.iter().all(far) {
            centers.push(c);
        }
    }
    let goal = [rng.gen_range(6.0..9.0), rng.gen_range(6.0..9.0)];
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();

    let mut text = String::from("name = \"micro\"\n");
    let mut waypoints = String::new();
    let (mut t, mut pos) = (1usize, start);
    let mut prev_deadline = 0;
    for c in &centers {
        let mut on = t + travel(dist(&pos, c) - radius, u_max, dt) + 6;
        if rng.gen_bool(0.4) {
            on = on.saturating_sub(rng.gen_range(10..40)).max(prev_deadline.max(2));
        }
        let deadline = (on + 12).max(prev_deadline + 1);
        waypoints += &format!(
            "\n[[waypoints]]\ncenter = [{}, {}]\nradius = {radius}\nwindow = [{on}, {deadline}]\n",
            c[0], c[1]
        );
        prev_deadline = deadline;
        t = deadline;
        pos = *c;
    }
    let g_on = (t + travel(dist(&pos, &goal) - radius, u_max, dt) + 6).max(prev_deadline + 1);
    let horizon = g_on + 15;
    let level = ["low", "medium", "high"][rng.gen_range(0..3)];
    text += &format!("horizon = {horizon}\ndisturbance_level = \"{level}\"\n");
    text += &format!("\n[start]\nposition = [{}, {}]\n", start[0], start[1]);
    text += "\n[selector]\npopulation = 4\nsteps = 8\n";
    text += &format!(
        "\n[goal]\ncenter = [{}, {}]\nradius = {radius}\nwindow = [{g_on}, {horizon}]\n",
        goal[0], goal[1]
    );
    text += &waypoints;

    let mut regions: Vec<[f64; 2]> = centers.clone();
    regions.push(goal);
    regions.push(start);
    let clear = |c: &[f64; 2], r: f64| regions.iter().all(|p| dist(p, c) > r + radius + 0.3);
    let obstacle = [rng.gen_range(2.0..8.0), rng.gen_range(2.0..8.0)];
    let obstacle_r = rng.gen_range(0.3..0.8);
    if clear(&obstacle, obstacle_r) {
        text += &format!(
            "\n[[obstacles]]\ncenter = [{}, {}]\nradius = {obstacle_r}\n",
            obstacle[0], obstacle[1]
        );
    }
    let zone = [rng.gen_range(2.0..8.0), rng.gen_range(2.0..8.0)];
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    text += &format!(
        "\n[[disturbances]]\ncenter = [{}, {}]\nradius = {}\ndirection = [{}, {}]\n",
        zone[0],
        zone[1],
        rng.gen_range(0.5..1.5),
        angle.cos(),
        angle.sin()
    );
    Scenario::from_toml_str(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

/// Small random scenario with at most `max_soft` waypoints in which every
/// waypoint is attainable on its own, so conflicts come only from timing
/// between waypoints. Candidates failing that are redrawn.
pub fn micro_scenario(rng: &mut ChaCha8Rng, max_soft: usize) -> Scenario {
    loop {
        let s = micro_candidate(rng, max_soft);
        let n = s.num_soft();
        let run = |mask: SubsetMask| {
            roll_out(&s, &PolicyConfig::new(&s, mask), &s.start, s.horizon)
                .map(|o| o.metrics)
                .ok()
        };
        let calm = run(SubsetMask::none(n)).is_some_and(|m| m.is_full_horizon());
        let alone = (0..n).all(|j| {
            let mut mask = SubsetMask::none(n);
            mask.set(j, true);
            run(mask).is_some_and(|m| m.is_full_horizon() && m.waypoints_arrived == 1)
        });
        if calm && alone {
            return s;
        }
    }
}
