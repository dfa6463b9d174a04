//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqbid::continuous::{greedy_bid, solve_grid, Component, GridStrategy, MaximizerConfig};
use seqbid::discrete::{evaluate_policy_exact, solve_discrete};
use seqbid::experiment::{
    generate_instance, run_experiment_suite, ExperimentConfig, GeneratorParams,
};
use seqbid::pwl::{vg1_refine, vg2_refine, RefinementBudget};
use seqbid::rng::derive_seed;
use seqbid::sim::estimate_policy_value;
use seqbid::{fixtures, validate_problem, Holdings, ProblemSpec};

use common::{
    dense_backup, expectimax, interp, micro_instance, small_continuous_instance, CdfTable,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed > limit {
        Err(format!("took {elapsed:.1?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn exact_solver_matches_enumeration() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut states = 0;
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let spec = micro_instance(&mut rng);
        let problem = validate_problem(&spec).map_err(|e| format!("instance {i}: {e}"))?;
        let sol = solve_discrete(&problem).map_err(|e| e.to_string())?;
        for t in 0..=spec.n {
            for h in Holdings::all_at_stage(t) {
                for d in 0..=sol.endowment() {
                    let diff =
                        (sol.value(t, h, d).unwrap() - expectimax(&spec, t, h.mask(), d)).abs();
                    worst = worst.max(diff);
                    states += 1;
                    if diff > 1e-9 {
                        return Err(format!(
                            "instance {i} t={t} h={h} d={d} differs by {diff:e}"
                        ));
                    }
                }
            }
        }
    }
    let single = solve_discrete(&validate_problem(&fixtures::single_resource()).unwrap()).unwrap();
    if (single.start_value() - 10.0).abs() > 1e-9 || single.start_bid() != 2 {
        return Err(format!(
            "single-resource fixture: V={} bid={}",
            single.start_value(),
            single.start_bid()
        ));
    }
    let two = solve_discrete(&validate_problem(&fixtures::two_resource()).unwrap()).unwrap();
    if (two.start_value() - 7.35).abs() > 1e-9 || two.start_bid() != 1 {
        return Err(format!(
            "two-resource fixture: V={} bid={}",
            two.start_value(),
            two.start_bid()
        ));
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{states} states, max diff {worst:.1e}, fixtures V=10/bid 2 and V=7.35/bid 1, {:.2?}",
        start.elapsed()
    ))
}

fn continuous_instances() -> Vec<ProblemSpec> {
    (0..20)
        .map(|i| small_continuous_instance(100 + i))
        .collect()
}

fn strategy_for(i: usize) -> GridStrategy {
    match i % 3 {
        0 => "fixed:5".parse().unwrap(),
        1 => "vg1:7,0.05".parse().unwrap(),
        _ => "vg2:9,0.05".parse().unwrap(),
    }
}

fn knots_match_dense_oracle() -> Outcome {
    let start = Instant::now();
    let step = 1e-4;
    let mut knots = 0;
    let mut worst: f64 = 0.0;
    for (i, spec) in continuous_instances().iter().enumerate() {
        let problem = validate_problem(spec).unwrap();
        let sol = solve_grid(&problem, &strategy_for(i), &MaximizerConfig::default())
            .map_err(|e| e.to_string())?;
        for t in 0..spec.n {
            let cdf = CdfTable::for_spec(spec, t, step);
            for h in Holdings::all_at_stage(t) {
                if sol.values.is_settled(t, h) {
                    continue;
                }
                for (d, v) in sol.values.component(t, h).unwrap().knots() {
                    let diff = (v - dense_backup(&sol.values, t, h, d, &cdf, step)).abs();
                    worst = worst.max(diff);
                    knots += 1;
                    if diff > 1e-3 {
                        return Err(format!(
                            "instance {i} t={t} h={h} d={d} differs by {diff:e}"
                        ));
                    }
                }
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "{knots} knots, max diff {worst:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn one_stage_error_within_delta() -> Outcome {
    let start = Instant::now();
    let step = 2e-3;
    let mut components = 0;
    let mut worst_slack = f64::INFINITY;
    for (i, spec) in continuous_instances().iter().enumerate() {
        let problem = validate_problem(spec).unwrap();
        let sol = solve_grid(&problem, &strategy_for(i), &MaximizerConfig::default())
            .map_err(|e| e.to_string())?;
        for t in 0..spec.n {
            let cdf = CdfTable::for_spec(spec, t, step);
            for h in Holdings::all_at_stage(t) {
                let comp = sol.values.component(t, h).unwrap();
                let delta = match sol.values.raw_component(t, h).unwrap() {
                    Component::Settled { .. } => 0.0,
                    Component::Grid { values, .. } => values.max_consecutive_delta().unwrap().0,
                };
                let mut sup: f64 = 0.0;
                for k in 0..1000 {
                    let d = spec.endowment * k as f64 / 999.0;
                    let approx = interp(comp.xs(), comp.ys(), d);
                    sup = sup.max((approx - dense_backup(&sol.values, t, h, d, &cdf, step)).abs());
                }
                components += 1;
                worst_slack = worst_slack.min(delta + 1e-3 - sup);
                if sup > delta + 1e-3 {
                    return Err(format!(
                        "instance {i} t={t} h={h}: sup error {sup} > delta {delta} + 1e-3"
                    ));
                }
            }
        }
    }
    Ok(format!(
        "{components} components, min slack {worst_slack:.2e}, {:.2?}",
        start.elapsed()
    ))
}

fn protocol_instance(base: u64, i: u64) -> ProblemSpec {
    generate_instance(&GeneratorParams {
        seed: derive_seed(base, i),
        ..Default::default()
    })
    .unwrap()
}

fn full_horizon_within_bounds() -> Outcome {
    let start = Instant::now();
    let cfg = MaximizerConfig::default();
    let mut worst_ratio: f64 = 0.0;
    for i in 0..10 {
        let spec = protocol_instance(4, i);
        let problem = validate_problem(&spec).unwrap();
        let reference = solve_grid(&problem, &GridStrategy::UniformFixed { knots: 1001 }, &cfg)
            .map_err(|e| e.to_string())?;
        for g in [5, 10, 15] {
            let sol = solve_grid(&problem, &GridStrategy::UniformFixed { knots: g }, &cfg)
                .map_err(|e| e.to_string())?;
            for t in 0..=spec.n {
                let bound =
                    sol.ledger.error_bound(t).unwrap() + reference.ledger.error_bound(t).unwrap();
                let mut sup: f64 = 0.0;
                for h in Holdings::all_at_stage(t) {
                    for k in 0..=300 {
                        let d = spec.endowment * k as f64 / 300.0;
                        sup = sup.max(
                            (sol.values.eval(t, h, d).unwrap()
                                - reference.values.eval(t, h, d).unwrap())
                            .abs(),
                        );
                    }
                }
                if sup > bound {
                    return Err(format!(
                        "instance {i} G{g} t={t}: deviation {sup} > bound {bound}"
                    ));
                }
                if bound > 0.0 {
                    worst_ratio = worst_ratio.max(sup / bound);
                }
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "largest deviation/bound ratio {worst_ratio:.3}, {:.2?}",
        start.elapsed()
    ))
}

fn rounded_greedy_policy_bound() -> Outcome {
    let cfg = MaximizerConfig::default();
    let mut worst_margin = f64::INFINITY;
    for i in 0..10 {
        let spec = protocol_instance(5, i);
        let continuous = validate_problem(&spec).unwrap();
        let twin = validate_problem(&spec.discrete_twin().unwrap()).unwrap();
        let exact = solve_discrete(&twin).map_err(|e| e.to_string())?;
        let sol = solve_grid(&continuous, &GridStrategy::UniformFixed { knots: 5 }, &cfg)
            .map_err(|e| e.to_string())?;
        let policy = |t: usize, h: Holdings, d: u32| {
            let z = greedy_bid(&sol.values, h, d as f64, t, continuous.win_model(t), &cfg).unwrap();
            (z.round() as u32).min(d)
        };
        let eval = evaluate_policy_exact(&twin, &policy).map_err(|e| e.to_string())?;
        let mut max_err: f64 = 0.0;
        for t in 0..spec.n {
            for h in Holdings::all_at_stage(t) {
                for d in 0..=exact.endowment() {
                    max_err = max_err.max(
                        (sol.values.eval(t, h, d as f64).unwrap() - exact.value(t, h, d).unwrap())
                            .abs(),
                    );
                }
            }
        }
        let allowed = 2.0 * max_err + 0.7;
        for t in 0..spec.n {
            for h in Holdings::all_at_stage(t) {
                for d in 0..=exact.endowment() {
                    let loss = exact.value(t, h, d).unwrap() - eval.value(t, h, d).unwrap();
                    if loss > allowed {
                        return Err(format!(
                            "instance {i} t={t} h={h} d={d}: loss {loss} > {allowed}"
                        ));
                    }
                    worst_margin = worst_margin.min(allowed - loss);
                }
            }
        }
    }
    Ok(format!("10 instances, smallest margin {worst_margin:.3}"))
}

fn table_trend() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let report = run_experiment_suite(&cfg).map_err(|e| e.to_string())?;
    if !report.failures.is_empty() {
        return Err(format!("{} experiments failed", report.failures.len()));
    }
    let g5 = report.run("G5").unwrap();
    let g15 = report.run("G15").unwrap();
    let curves = fs::read_to_string(dir.path().join("per_stage.csv")).map_err(|e| e.to_string())?;
    let detail = format!(
        "G5 value {:.4} policy {:.4}; G15 value {:.4} policy {:.4}; {:.2?}",
        g5.mean_sq_value_error,
        g5.mean_sq_policy_error,
        g15.mean_sq_value_error,
        g15.mean_sq_policy_error,
        start.elapsed()
    );
    if !(g15.mean_sq_value_error < g5.mean_sq_value_error
        && g15.mean_sq_policy_error < g5.mean_sq_policy_error
        && g15.mean_sq_value_error < 0.1)
    {
        return Err(detail);
    }
    if curves.lines().filter(|l| l.starts_with("G15,")).count() == 0 {
        return Err("per-stage curves missing".into());
    }
    within(start.elapsed(), Duration::from_secs(1200))?;
    Ok(detail)
}

fn linear_components_need_three_knots() -> Outcome {
    let mut spec = fixtures::two_resource();
    spec.mode = seqbid::Mode::Continuous;
    spec.endowment = 30.0;
    spec.distributions = vec![
        seqbid::BidDistribution::Gaussian {
            mean: 4.0,
            std: 0.5f64.sqrt()
        };
        2
    ];
    let problem = validate_problem(&spec).unwrap();
    let budget = RefinementBudget {
        max_knots: 15,
        threshold: 1e-6,
    };
    let sol = solve_grid(
        &problem,
        &GridStrategy::Vg2(budget),
        &MaximizerConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let mut checked = 0;
    for t in 0..=spec.n {
        for h in Holdings::all_at_stage(t) {
            if !sol.values.is_settled(t, h) {
                continue;
            }
            let closed = |d: f64| problem.terminal_value(h, d);
            let vg2 =
                vg2_refine(closed, (0.0, spec.endowment), budget).map_err(|e| e.to_string())?;
            let vg1 =
                vg1_refine(closed, (0.0, spec.endowment), budget).map_err(|e| e.to_string())?;
            if vg2.len() != 3 {
                return Err(format!("t={t} h={h}: vg2 kept {} knots", vg2.len()));
            }
            if vg1.len() != budget.max_knots {
                return Err(format!("t={t} h={h}: vg1 kept {} knots", vg1.len()));
            }
            checked += 1;
        }
    }
    if checked == 0 {
        return Err("no settled components".into());
    }
    Ok(format!(
        "{checked} linear components: VG2 3 knots, VG1 {} knots",
        budget.max_knots
    ))
}

fn monte_carlo_consistency() -> Outcome {
    let start = Instant::now();
    let two = validate_problem(&fixtures::two_resource()).unwrap();
    let sol = solve_discrete(&two).unwrap();
    let est = estimate_policy_value(&two, &sol, 100_000, 8).map_err(|e| e.to_string())?;
    if (est.mean - 7.35).abs() > 3.0 * est.stderr {
        return Err(format!("mean {} stderr {}", est.mean, est.stderr));
    }
    let one = validate_problem(&fixtures::single_resource()).unwrap();
    let sure = estimate_policy_value(&one, &|_: usize, _: Holdings, _: f64| 2.0, 100_000, 8)
        .map_err(|e| e.to_string())?;
    if sure.mean != 10.0 {
        return Err(format!("bid-2 mean {}", sure.mean));
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "mean {:.4} ± {:.4} vs 7.35; bid-2 mean exactly 10; {:.2?}",
        est.mean,
        est.stderr,
        start.elapsed()
    ))
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn cli_runs_are_deterministic() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out in &outs {
        let status = Command::new(env!("CARGO_BIN_EXE_seqbid"))
            .args(["experiment", "--config", "default", "--seed", "42", "--out"])
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
    }
    let files = files_under(&outs[0]);
    if files != files_under(&outs[1]) {
        return Err("different file sets".into());
    }
    for f in &files {
        if fs::read(outs[0].join(f)).unwrap() != fs::read(outs[1].join(f)).unwrap() {
            return Err(format!("{} differs", f.display()));
        }
    }
    Ok(format!("{} files byte-identical", files.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "exact solver vs enumeration",
            exact_solver_matches_enumeration,
        ),
        ("grid knots vs dense oracle", knots_match_dense_oracle),
        (
            "one-stage error within knot delta",
            one_stage_error_within_delta,
        ),
        (
            "full-horizon error within ledger bound",
            full_horizon_within_bounds,
        ),
        (
            "rounded greedy policy loss bound",
            rounded_greedy_policy_bound,
        ),
        ("aggregate error trend G5 vs G15", table_trend),
        (
            "linear components under variable grids",
            linear_components_need_three_knots,
        ),
        ("Monte Carlo consistency", monte_carlo_consistency),
        (
            "deterministic experiment reports",
            cli_runs_are_deterministic,
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
