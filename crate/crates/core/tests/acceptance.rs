//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use infoclubs::equilibrium::{solve_fixed_point, DEFAULT_TOL};
use infoclubs::formation::{enumerate_clique_partitions, DEFAULT_PAYOFF_TOL};
use infoclubs::incentives::DeviationProblem;
use infoclubs::montecarlo::{simulate, FULL_SAMPLES};
use infoclubs::{
    check_truthful_ic, core_check, efficiency_frontier, exante_payoffs, kappa_region, optimal_deviation,
    posterior_weights, recursive_partition, solve_truthful, welfare, CliquePartition, GameParams, IcTolerance,
    Network, SignalCovariance, SolveMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn line_params() -> GameParams {
    GameParams::with_linear_cost(1.0, 1.0, vec![1.0; 3], 0.0).unwrap()
}

fn four_agent(kappa: f64) -> GameParams {
    GameParams::with_linear_cost(1.0, 1.0, vec![4.0, 4.0, 1.0, 1.0], kappa).unwrap()
}

fn sorted() -> CliquePartition {
    CliquePartition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap()
}

fn mixed() -> CliquePartition {
    CliquePartition::new(4, vec![vec![0, 2], vec![1, 3]]).unwrap()
}

fn ac1() -> Outcome {
    let params = line_params();
    let g = Network::line(3);
    let start = Instant::now();
    let b = solve_truthful(&g, &params, SolveMethod::Direct, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let expected = [[0.3, 0.35, 0.0], [0.2, 0.3, 0.2], [0.0, 0.35, 0.3]];
    let mut err: f64 = 0.0;
    for (i, row) in expected.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            err = err.max((b.get(i, l) - v).abs());
        }
    }
    ensure(err <= 1e-9, || format!("max coefficient error {err:e}"))?;
    ensure(elapsed.as_secs_f64() < 0.010, || format!("solve took {elapsed:?}"))?;
    Ok(format!("max error {err:.1e}, {:.3} ms", elapsed.as_secs_f64() * 1e3))
}

fn ac2() -> Outcome {
    let params = line_params();
    let g = Network::line(3);
    let b = solve_truthful(&g, &params, SolveMethod::Direct, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let dev = optimal_deviation(&g, &b, &params, 0).map_err(|e| e.to_string())?;
    let slope_err = (dev.slopes[0] - 1.25).abs();
    ensure(slope_err <= 1e-9, || format!("slope {}", dev.slopes[0]))?;
    let problem = DeviationProblem::new(&g, &b, &params, 0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m: f64 = rng.random_range(-5.0..5.0);
        let x: f64 = rng.random_range(-5.0..5.0);
        let closed = (16.0 * m * m - 40.0 * m * x + 25.0 * x * x + 310.0) / 800.0;
        let ours = problem.interim_loss(&[m], x).map_err(|e| e.to_string())?;
        worst = worst.max((ours - closed).abs());
    }
    ensure(worst <= 1e-9, || format!("interim loss error {worst:e}"))?;
    Ok(format!("slope {:.12}, interim loss error {worst:.1e}", dev.slopes[0]))
}

fn ac3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut slope_err, mut max_gain, mut row_err) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        let params = common::random_params(&mut rng, n);
        let blocks = common::random_blocks(&mut rng, n);
        let g = Network::from_blocks(n, &blocks).unwrap();
        let report = check_truthful_ic(&g, &params, IcTolerance::default()).map_err(|e| e.to_string())?;
        for s in &report.per_sender {
            slope_err = slope_err.max(s.max_slope_error());
            max_gain = max_gain.max(s.gain);
        }
        let b = solve_truthful(&g, &params, SolveMethod::Direct, DEFAULT_TOL).map_err(|e| e.to_string())?;
        for block in &blocks {
            let w = posterior_weights(&params, block).unwrap();
            for &i in block {
                for (k, &l) in block.iter().enumerate() {
                    row_err = row_err.max((b.get(i, l) - w[k]).abs());
                }
            }
        }
    }
    ensure(slope_err <= 1e-8, || format!("slope error {slope_err:e}"))?;
    ensure(max_gain <= 1e-10, || format!("gain {max_gain:e}"))?;
    ensure(row_err <= 1e-9, || format!("posterior row error {row_err:e}"))?;
    Ok(format!("slope error {slope_err:.1e}, max gain {max_gain:.1e}, row error {row_err:.1e}"))
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ratio_excess = f64::NEG_INFINITY;
    let mut agreement: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let params = common::random_params(&mut rng, n);
        let p = rng.random_range(0.2..0.9);
        let g = common::random_network(&mut rng, n, p);
        let trace = solve_fixed_point(&g, &params, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let rate = params.gamma() / (1.0 + params.gamma());
        for w in trace.step_norms.windows(2) {
            worst_ratio_excess = worst_ratio_excess.max(w[1] - (rate + 1e-12) * w[0]);
        }
        let direct = solve_truthful(&g, &params, SolveMethod::Direct, DEFAULT_TOL).map_err(|e| e.to_string())?;
        agreement = agreement.max(direct.max_abs_diff(&trace.coefficients));
        let cov = SignalCovariance::new(&params);
        agreement = agreement.max(direct.action_distance(&trace.coefficients, &cov));
    }
    ensure(worst_ratio_excess <= 0.0, || format!("contraction violated by {worst_ratio_excess:e}"))?;
    ensure(agreement <= 1e-9, || format!("methods differ by {agreement:e}"))?;
    Ok(format!("worst step excess {worst_ratio_excess:.1e}, agreement {agreement:.1e}"))
}

fn ac5() -> Outcome {
    let params = four_agent(0.05);
    let rec = recursive_partition(&params);
    ensure(rec == sorted(), || format!("procedure returned {:?}", rec.blocks()))?;
    let on_sorted = core_check(&rec, &params, DEFAULT_PAYOFF_TOL).map_err(|e| e.to_string())?;
    ensure(on_sorted.in_core, || format!("sorted partition blocked by {:?}", on_sorted.blocking_witnesses))?;
    let on_mixed = core_check(&mixed(), &params, DEFAULT_PAYOFF_TOL).map_err(|e| e.to_string())?;
    ensure(!on_mixed.in_core, || "mixed partition unblocked".into())?;
    ensure(on_mixed.blocking_witnesses.iter().any(|w| w.coalition == [0, 1]), || {
        format!("witnesses {:?}", on_mixed.blocking_witnesses)
    })?;

    let region = kappa_region(4.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let (lo_err, hi_err) = ((region.lo - 1.0 / 90.0).abs(), (region.hi - 4.0 / 45.0).abs());
    ensure(lo_err <= 1e-12 && hi_err <= 1e-12, || format!("region ({}, {})", region.lo, region.hi))?;

    for (edge, name) in [(region.lo, "lower"), (region.hi, "upper")] {
        let mut outputs = Vec::new();
        for k in -20i32..=20 {
            if k == 0 {
                continue;
            }
            let kappa = edge + k as f64 * 1e-5;
            let got = recursive_partition(&four_agent(kappa)) == sorted();
            ensure(got == region.contains(kappa), || format!("kappa {kappa}: sorted={got}"))?;
            outputs.push((k, got));
        }
        let below = outputs.iter().filter(|(k, _)| *k < 0).all(|(_, s)| *s);
        let above = outputs.iter().filter(|(k, _)| *k > 0).all(|(_, s)| *s);
        let flips = if name == "lower" { !below && above } else { below && !above };
        ensure(flips, || format!("no flip at the {name} endpoint"))?;
    }
    Ok(format!("interval ({:.15}, {:.15}), flips at both endpoints", region.lo, region.hi))
}

fn ac6() -> Outcome {
    let mut worst: f64 = 0.0;
    for kappa in [0.0, 0.01, 0.05, 0.08] {
        let params = four_agent(kappa);
        let wa = welfare(&sorted(), &params).map_err(|e| e.to_string())?;
        let wm = welfare(&mixed(), &params).map_err(|e| e.to_string())?;
        worst = worst.max((wa - (-8.0 / 9.0 - 4.0 * kappa)).abs());
        worst = worst.max((wm - (-2.0 / 3.0 - 4.0 * kappa)).abs());
    }
    ensure(worst <= 1e-12, || format!("welfare error {worst:e}"))?;
    let mut cells = 0;
    for a in 1..=10 {
        for c in 1..=10 {
            let (l, h) = (0.5 * a as f64, 0.5 * a as f64 + 0.5 * c as f64);
            let params = GameParams::with_linear_cost(1.0, 1.0, vec![h, h, l, l], 0.05).unwrap();
            let wa = welfare(&sorted(), &params).unwrap();
            let wm = welfare(&mixed(), &params).unwrap();
            ensure(wm > wa, || format!("h={h} l={l}: {wm} <= {wa}"))?;
            cells += 1;
        }
    }
    let eff = efficiency_frontier(&four_agent(0.05)).map_err(|e| e.to_string())?;
    ensure(eff.gap > 0.0, || format!("gap {}", eff.gap))?;
    Ok(format!("welfare error {worst:.1e}, {cells} grid cells, gap {:.6}", eff.gap))
}

fn ac7() -> Outcome {
    let scenarios = [
        ("line", Network::line(3), line_params()),
        ("triangle", Network::complete(3), GameParams::with_linear_cost(1.0, 1.0, vec![1.0; 3], 0.05).unwrap()),
        ("four-agent", Network::from_blocks(4, sorted().blocks()).unwrap(), four_agent(0.05)),
    ];
    let mut summary = Vec::new();
    for (name, g, params) in scenarios {
        let b = solve_truthful(&g, &params, SolveMethod::Direct, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let exact = exante_payoffs(&g, &b, &params).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let first = simulate(&g, &b, &params, FULL_SAMPLES, 7).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let second = simulate(&g, &b, &params, FULL_SAMPLES, 7).map_err(|e| e.to_string())?;
        let mut worst_z: f64 = 0.0;
        for (i, a) in exact.per_agent.iter().enumerate() {
            let z = (first.per_agent_mean[i] - a.total).abs() / first.per_agent_stderr[i];
            worst_z = worst_z.max(z);
        }
        ensure(worst_z <= 3.0, || format!("{name}: |z| = {worst_z:.2}"))?;
        let (ja, jb) = (serde_json::to_string(&first).unwrap(), serde_json::to_string(&second).unwrap());
        ensure(ja == jb, || format!("{name}: re-run differs"))?;
        ensure(elapsed.as_secs_f64() < 60.0, || format!("{name}: {elapsed:?}"))?;
        summary.push(format!("{name} |z|max {worst_z:.2} in {:.2}s", elapsed.as_secs_f64()));
    }
    Ok(summary.join(", "))
}

fn ac8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut slope_err: f64 = 0.0;
    let mut deviations = 0;
    let mut core_cases = 0;
    for n in 1..=3 {
        let networks = common::all_networks(n);
        for _ in 0..20 {
            let params = common::random_params(&mut rng, n);
            for g in &networks {
                let b = solve_truthful(g, &params, SolveMethod::Direct, DEFAULT_TOL).map_err(|e| e.to_string())?;
                for sender in (0..n).filter(|&i| g.degree(i) > 0) {
                    let dev = optimal_deviation(g, &b, &params, sender).map_err(|e| e.to_string())?;
                    let grid = common::grid_minimize(
                        |k| common::oracle_deviation_loss(g, &b, &params, sender, k),
                        g.degree(sender),
                        -10.0,
                        10.0,
                    );
                    for (a, c) in dev.slopes.iter().zip(&grid) {
                        slope_err = slope_err.max((a - c).abs());
                    }
                    deviations += 1;
                }
            }
            for cand in enumerate_clique_partitions(n).unwrap() {
                let ours = core_check(&cand, &params, DEFAULT_PAYOFF_TOL).map_err(|e| e.to_string())?.in_core;
                let oracle = !common::oracle_is_blocked(&cand, &params, DEFAULT_PAYOFF_TOL);
                ensure(ours == oracle, || format!("core mismatch on {:?}", cand.blocks()))?;
                core_cases += 1;
            }
        }
    }
    ensure(slope_err <= 1e-6, || format!("slope error {slope_err:e}"))?;
    Ok(format!("{deviations} deviations, slope error {slope_err:.1e}; {core_cases} core checks agree"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("AC1", "line-network equilibrium", ac1),
        ("AC2", "line-network deviation", ac2),
        ("AC3", "clique truthfulness", ac3),
        ("AC4", "fixed-point contraction", ac4),
        ("AC5", "recursive procedure and core", ac5),
        ("AC6", "efficiency gap", ac6),
        ("AC7", "Monte Carlo agreement", ac7),
        ("AC8", "oracle equivalence", ac8),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
