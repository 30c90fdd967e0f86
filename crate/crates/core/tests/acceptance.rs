//! Acceptance checks, one line per criterion.
//!
//! `SHIPEXP_MC_RUNS` overrides the Monte Carlo run count (default 500).

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use nalgebra::{DMatrix, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use shipexp_core::design::{
    self, dvector, log_abs_det, objective, objective_gradient, random_simplex_point, InfoMode, InfoSummary,
    OptimizerConfig, Schedule, ScheduleSegment,
};
use shipexp_core::estimator::{iv_estimate, iv_estimate_generic};
use shipexp_core::harness::config::DesignKind;
use shipexp_core::harness::{montecarlo, pipeline, HarnessConfig};
use shipexp_core::planner::{
    self, astar_plan, HeuristicWeights, LatticeConfig, MotionPrimitive, OccupancyMap, PrimitiveKind, SearchOptions,
};
use shipexp_core::primitives::{PrimitiveLibrary, SynthesisConfig};
use shipexp_core::regression::{self, NominalModel};
use shipexp_core::sim::{kinematics_step, BodyVelocity, Pose, VesselParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reference_library() -> PrimitiveLibrary {
    PrimitiveLibrary::reference(&VesselParams::reference(), &SynthesisConfig::default()).unwrap()
}

fn noise_free_recovery() -> Outcome {
    let lib = reference_library();
    let theta0 = VesselParams::reference().to_theta();
    let nominal = NominalModel::reference();
    let mut worst = 0.0f64;
    let mut tested = Vec::new();
    for p in &lib.primitives {
        let y: Vec<[f64; 3]> = p.expected_trajectory.iter().map(|s| s.as_array()).collect();
        if y.len() < 300 {
            return outcome(false, format!("primitive {} has only {} samples", p.id, y.len()));
        }
        let records = regression::build_regressors(&y, &p.input_signal).unwrap();
        let z = regression::generate_instruments(&p.input_signal, &nominal, &p.initial).unwrap();
        let z = regression::demean_instruments(&z, &[z.len()], regression::DemeanMode::Complete).unwrap();
        let Ok(est) = iv_estimate(&records, &z) else { continue };
        tested.push(p.id);
        for (a, b) in est.theta_hat.iter().zip(&theta0) {
            worst = worst.max(((a - b) / b).abs());
        }
    }
    outcome(
        worst < 1e-6 && tested.len() >= 9,
        format!("informative primitives {tested:?}, worst relative error {worst:.2e} (< 1e-6)"),
    )
}

struct McResult {
    opt_param: f64,
    rnd_param: f64,
    opt_cv: f64,
    rnd_cv: f64,
    secs: f64,
}

fn monte_carlo(runs: usize) -> McResult {
    let t = Instant::now();
    let mut cfg = HarnessConfig::default();
    cfg.monte_carlo.runs = runs;
    cfg.monte_carlo.designs = vec![DesignKind::Optimized, DesignKind::Random];
    let lib = pipeline::load_library(&cfg).unwrap();
    let summaries = pipeline::compute_summaries(&cfg, &lib).unwrap();
    let alloc = pipeline::optimize(&cfg, &summaries).unwrap();
    let rep = montecarlo::run_monte_carlo(&cfg, &lib, Some(&alloc.fractions)).unwrap();
    assert_eq!(rep.records.len(), 2 * runs);
    let opt = rep.summary(DesignKind::Optimized).unwrap();
    let rnd = rep.summary(DesignKind::Random).unwrap();
    McResult {
        opt_param: opt.fraction_param_below,
        rnd_param: rnd.fraction_param_below,
        opt_cv: opt.fraction_cv_below,
        rnd_cv: rnd.fraction_cv_below,
        secs: t.elapsed().as_secs_f64(),
    }
}

fn mc_param_ordering(full: &McResult, reduced: &McResult, runs: usize) -> Outcome {
    let pass = full.opt_param >= 0.95 && full.opt_param - full.rnd_param >= 0.20 && reduced.opt_param > reduced.rnd_param;
    outcome(
        pass,
        format!(
            "{runs} runs: optimized {:.3} (>= 0.95), random {:.3} (gap >= 0.20); 100 runs: {:.3} vs {:.3}; {:.1}s",
            full.opt_param, full.rnd_param, reduced.opt_param, reduced.rnd_param, full.secs
        ),
    )
}

fn mc_cv_ordering(full: &McResult, reduced: &McResult, runs: usize) -> Outcome {
    let pass = full.opt_cv - full.rnd_cv >= 0.15 && reduced.opt_cv > reduced.rnd_cv;
    outcome(
        pass,
        format!(
            "{runs} runs: optimized {:.3}, random {:.3} (gap >= 0.15); 100 runs: {:.3} vs {:.3}",
            full.opt_cv, full.rnd_cv, reduced.opt_cv, reduced.rnd_cv
        ),
    )
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn scalar_zero_mean_effect() -> Outcome {
    type S = SMatrix<f64, 1, 1>;
    let (theta0, sigma, half) = (0.8, 1.0, 100usize);
    let u_bar = 5.0 * sigma;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut complete = Vec::new();
    let mut batchwise = Vec::new();
    let mut oracle_gap = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ut: Vec<f64> = (0..half).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = ut.iter().sum::<f64>() / half as f64;
        ut.iter_mut().for_each(|x| *x -= m);
        let u_tilde: Vec<f64> = ut.iter().chain(&ut).copied().collect();
        let u: Vec<f64> = u_tilde.iter().enumerate().map(|(k, x)| x + if k < half { u_bar } else { -u_bar }).collect();
        let e: Vec<f64> = (0..2 * half).map(|_| noise.sample(&mut rng)).collect();
        let y: Vec<SVector<f64, 1>> = u.iter().zip(&e).map(|(u, e)| SVector::<f64, 1>::new(theta0 * u + e)).collect();
        let phi: Vec<S> = u.iter().map(|&x| S::new(x)).collect();
        let batches = vec![phi[..half].to_vec(), phi[half..].to_vec()];
        let z1: Vec<S> = regression::demean_complete(&batches).unwrap().concat();
        let z2: Vec<S> = regression::demean_batchwise(&batches).unwrap().concat();
        let t1 = iv_estimate_generic(&z1, &phi, &y, |_| "theta").unwrap().theta_hat[0];
        let t2 = iv_estimate_generic(&z2, &phi, &y, |_| "theta").unwrap().theta_hat[0];

        let n = (2 * half) as f64;
        let ue: f64 = u_tilde.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / n;
        let uu: f64 = u_tilde.iter().map(|a| a * a).sum::<f64>() / n;
        let e_prime = (e[..half].iter().sum::<f64>() - e[half..].iter().sum::<f64>()) / n;
        let o1 = theta0 + (ue + u_bar * e_prime) / (uu + u_bar * u_bar);
        let o2 = theta0 + ue / uu;
        oracle_gap = oracle_gap.max((t1 - o1).abs()).max((t2 - o2).abs());
        complete.push(t1);
        batchwise.push(t2);
    }
    let (v1, v2) = (variance(&complete), variance(&batchwise));
    outcome(
        v1 < v2 && oracle_gap < 1e-9,
        format!("var complete {v1:.3e} < var batchwise {v2:.3e}; closed-form agreement {oracle_gap:.1e}"),
    )
}

fn optimizer_dominance() -> Outcome {
    let lib = reference_library();
    let s = design::reference_summaries(&lib).unwrap();
    let n = 1000usize;
    let mode = InfoMode::ZeroMean;
    let alloc = design::optimize_allocation(&s, n, mode, None, &OptimizerConfig::default()).unwrap();
    let q = s.len();
    let at = |r: &[f64]| objective(r, n as f64, &s, mode).unwrap();
    let opt = at(&alloc.fractions);
    let uniform = at(&vec![1.0 / q as f64; q]);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let best_random = (0..200).map(|_| at(&random_simplex_point(q, &mut rng))).fold(f64::NEG_INFINITY, f64::max);
    let direct = log_abs_det(&design::info_matrix(&alloc.counts(), &s, mode).unwrap());

    let mut worst = 0.0f64;
    for _ in 0..10 {
        let rho: Vec<f64> = random_simplex_point(q, &mut rng).iter().map(|r| 0.9 * r + 0.1 / q as f64).collect();
        let g = objective_gradient(&rho, n as f64, &s, mode).unwrap().unwrap();
        for i in 0..q {
            let h = 1e-6;
            let mut a = rho.clone();
            let mut b = rho.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (at(&a) - at(&b)) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / fd.abs().max(1.0));
        }
    }
    let pass = opt >= uniform && opt >= best_random && (opt - direct).abs() < 1e-9 && worst < 1e-5;
    outcome(
        pass,
        format!("optimum {opt:.4} >= uniform {uniform:.4}, >= best random {best_random:.4}; gradient rel err {worst:.1e}"),
    )
}

fn diag_summary(q: usize, d: &[f64]) -> InfoSummary {
    let g = DMatrix::from_diagonal(&dvector(d));
    InfoSummary {
        q,
        gamma_bar: g.clone(),
        x_bar: g,
        y_bar: DMatrix::zeros(d.len(), 1),
        z_bar: DMatrix::zeros(d.len(), 1),
        n_samples_used: 100,
    }
}

fn d_optimal_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..3.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..3.0)).collect();
        let s = [diag_summary(1, &a), diag_summary(2, &b)];
        let alloc = design::optimize_allocation(&s, 100, InfoMode::Basic, None, &OptimizerConfig::default()).unwrap();
        // Grid oracle on the closed-form determinant of a diagonal information matrix.
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..=1000 {
            let r = k as f64 / 1000.0;
            let v: f64 = a.iter().zip(&b).map(|(x, y)| (r * x + (1.0 - r) * y).ln()).sum();
            if v > best.0 {
                best = (v, r);
            }
        }
        worst = worst.max((alloc.fractions[0] - best.1).abs());
    }
    outcome(worst < 1e-2, format!("10 random diagonal pairs, worst |rho1 - grid| = {worst:.1e} (< 1e-2)"))
}

fn cell_free(map: &OccupancyMap, px: f64, py: f64) -> bool {
    let (cx, cy) = (px.floor() as i64, py.floor() as i64);
    map.in_bounds(cx, cy) && !map.is_blocked(cx, cy)
}

/// Re-integrates every executed maneuver in world coordinates and checks each sample.
fn recheck_plan(plan: &planner::Plan, prims: &[MotionPrimitive], lib: &PrimitiveLibrary, cfg: &LatticeConfig, map: &OccupancyMap) -> usize {
    let mut collisions = 0;
    for step in plan.steps() {
        let p = &prims[step.primitive_id];
        let (sx, sy) = (step.start.x as f64 + 0.5, step.start.y as f64 + 0.5);
        let mut points = vec![(sx, sy)];
        match p.source_id {
            Some(id) => {
                let src = lib.get(id).unwrap();
                let mut pose = Pose::new(sx * cfg.cell_size, sy * cfg.cell_size, step.start.heading as f64 * FRAC_PI_2);
                for v in &src.expected_trajectory[..p.signal.len()] {
                    pose = kinematics_step(&pose, v, lib.dt()).unwrap();
                    points.push((pose.x / cfg.cell_size, pose.y / cfg.cell_size));
                }
            }
            None => points.push((step.end.x as f64 + 0.5, step.end.y as f64 + 0.5)),
        }
        if !points.iter().all(|&(x, y)| cell_free(map, x, y)) {
            collisions += 1;
        }
    }
    collisions
}

fn planner_validity() -> Outcome {
    let t = Instant::now();
    let lib = reference_library();
    let cfg = LatticeConfig::default();
    let schedule = Schedule {
        segments: [6, 7, 8].iter().map(|&id| ScheduleSegment { id, repetitions: 3, segment_len: 100 }).collect(),
        total_n: 900,
    };
    let (prims, required) = planner::build_primitive_set(&schedule, &lib, &cfg).unwrap();
    let map = planner::reference_map();
    let res = astar_plan((3, 3, 0), (30, 40, 1), &required, &prims, &map, &HeuristicWeights::default_for(&cfg), &cfg, &SearchOptions::default());
    let plan = match res {
        Ok(o) => o.plan,
        Err(e) => return outcome(false, format!("no plan: {e}")),
    };
    let mut counts = vec![0usize; required.len()];
    for &id in &plan.primitive_ids {
        if let PrimitiveKind::Informative { counter } = prims[id].kind {
            counts[counter] += 1;
        }
    }
    let basic = plan.basic_count(&prims);
    let collisions = recheck_plan(&plan, &prims, &lib, &cfg, &map);
    let cost_ok = (plan.total_cost - cfg.basic_cost * basic as f64).abs() < 1e-9;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        counts == required && collisions == 0 && cost_ok && secs <= 300.0,
        format!("counters {counts:?} of {required:?}, {collisions} collisions, cost {} = {basic} basic moves, {secs:.2}s", plan.total_cost),
    )
}

fn box_hits_blocked(map: &OccupancyMap, b: &planner::CellBox) -> bool {
    if b.min_x < 0.0 || b.min_y < 0.0 || b.max_x > map.width as f64 || b.max_y > map.height as f64 {
        return true;
    }
    (0..map.height as i64).any(|y| {
        (0..map.width as i64).any(|x| {
            map.is_blocked(x, y) && b.min_x <= (x + 1) as f64 && b.max_x >= x as f64 && b.min_y <= (y + 1) as f64 && b.max_y >= y as f64
        })
    })
}

/// 0-1 breadth-first search over every lattice state.
fn exhaustive_cost(start: (i64, i64, usize), goal: (i64, i64, usize), prims: &[MotionPrimitive], map: &OccupancyMap, cfg: &LatticeConfig) -> Option<f64> {
    let h = cfg.headings;
    let key = |x: i64, y: i64, hd: usize, c: usize| ((y * map.width as i64 + x) as usize * h + hd) * 2 + c;
    let mut dist = vec![f64::INFINITY; map.width * map.height * h * 2];
    let mut dq = VecDeque::new();
    dist[key(start.0, start.1, start.2, 0)] = 0.0;
    dq.push_back((start.0, start.1, start.2, 0usize, 0.0));
    while let Some((x, y, hd, c, d)) = dq.pop_front() {
        if d > dist[key(x, y, hd, c)] {
            continue;
        }
        for p in prims {
            let nc = match p.kind {
                PrimitiveKind::Informative { .. } if c == 1 => continue,
                PrimitiveKind::Informative { .. } => 1,
                PrimitiveKind::Basic => c,
            };
            let v = &p.variants[hd];
            let (nx, ny) = (x + v.dx, y + v.dy);
            if !map.in_bounds(nx, ny) || v.boxes.iter().any(|b| box_hits_blocked(map, &b.at(x, y))) {
                continue;
            }
            let nh = (hd as i64 + v.dh).rem_euclid(h as i64) as usize;
            let nd = d + p.cost;
            let k = key(nx, ny, nh, nc);
            if nd < dist[k] {
                dist[k] = nd;
                if p.cost == 0.0 {
                    dq.push_front((nx, ny, nh, nc, nd));
                } else {
                    dq.push_back((nx, ny, nh, nc, nd));
                }
            }
        }
    }
    let d = dist[key(goal.0, goal.1, goal.2, 1)];
    d.is_finite().then_some(d)
}

fn planner_optimality() -> Outcome {
    let cfg = LatticeConfig::default();
    // Quarter-turn arc ending one cell forward and one to the left.
    let dt = 0.125;
    let vel: Vec<BodyVelocity> = (0..16).map(|_| BodyVelocity::new(1.0, 0.0, FRAC_PI_2 / 2.0)).collect();
    let arc = planner::informative_primitive(0, 0, "arc", &vel, dt, vec![[0.0; 3]; 16], &cfg).unwrap();
    let mut prims = vec![arc];
    prims.extend(planner::basic_primitives(&cfg, 1).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut maps, mut agree, mut infeasible) = (0, 0, 0);
    while maps < 20 {
        let mut map = OccupancyMap::new(6, 6, cfg.cell_size);
        for y in 0..6 {
            for x in 0..6 {
                if rng.random_bool(0.1) {
                    map.block(x, y);
                }
            }
        }
        let mut cell = || (rng.random_range(0..6i64), rng.random_range(0..6i64), rng.random_range(0..4usize));
        let (s, g) = (cell(), cell());
        if map.is_blocked(s.0, s.1) || map.is_blocked(g.0, g.1) {
            continue;
        }
        let oracle = exhaustive_cost(s, g, &prims, &map, &cfg);
        let found = astar_plan(s, g, &[1], &prims, &map, &HeuristicWeights::zero(), &cfg, &SearchOptions::default())
            .ok()
            .map(|o| o.plan.total_cost);
        match (oracle, found) {
            (Some(a), Some(b)) => {
                maps += 1;
                agree += usize::from((a - b).abs() < 1e-9);
            }
            (None, None) => infeasible += 1,
            _ => return outcome(false, format!("feasibility disagrees: exhaustive {oracle:?}, A* {found:?}")),
        }
    }
    outcome(agree == 20, format!("{agree}/20 feasible maps match exhaustive cost; {infeasible} infeasible draws agreed"))
}

fn determinism() -> Outcome {
    let cfg = HarnessConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let a = pipeline::run_pipeline(&cfg).unwrap();
        pipeline::write_artifacts(&a, d.path()).unwrap();
    }
    let mut files: Vec<_> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    let mut differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(dirs[0].path().join(f)).unwrap() != std::fs::read(dirs[1].path().join(f)).ok().unwrap_or_default())
        .map(|f| f.to_string_lossy().into_owned())
        .collect();

    let mut mc = cfg.clone();
    mc.monte_carlo.runs = 5;
    let lib = pipeline::load_library(&mc).unwrap();
    let fr = pipeline::optimize(&mc, &pipeline::compute_summaries(&mc, &lib).unwrap()).unwrap().fractions;
    let r1 = montecarlo::run_monte_carlo(&mc, &lib, Some(&fr)).unwrap().to_json();
    let r2 = montecarlo::run_monte_carlo(&mc, &lib, Some(&fr)).unwrap().to_json();
    if r1 != r2 {
        differing.push("montecarlo report".into());
    }
    outcome(differing.is_empty(), format!("{} pipeline files compared, differing: {differing:?}", files.len()))
}

fn main() {
    let runs: usize = std::env::var("SHIPEXP_MC_RUNS").ok().and_then(|v| v.parse().ok()).unwrap_or(500);
    let full = monte_carlo(runs);
    let reduced = if runs == 100 { McResult { secs: 0.0, ..full } } else { monte_carlo(100) };
    let results: BTreeMap<usize, (&str, Outcome)> = BTreeMap::from([
        (1, ("noise-free recovery", noise_free_recovery())),
        (2, ("monte carlo parameter ordering", mc_param_ordering(&full, &reduced, runs))),
        (3, ("monte carlo CV ordering", mc_cv_ordering(&full, &reduced, runs))),
        (4, ("zero-mean variance effect", scalar_zero_mean_effect())),
        (5, ("optimizer dominance", optimizer_dominance())),
        (6, ("D-optimal oracle", d_optimal_oracle())),
        (7, ("planner validity", planner_validity())),
        (8, ("planner optimality", planner_optimality())),
        (9, ("determinism", determinism())),
    ]);
    let mut failed = 0;
    for (n, (name, o)) in &results {
        println!("criterion {n} {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
