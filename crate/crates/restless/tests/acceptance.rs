//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p restless --test acceptance`.

use std::time::{Duration, Instant};

use rand::Rng;
use restless::experiment::PolicyName;
use restless::montecarlo::{self, gap_sweep, violation_rate_sweep, GapRow, Reps, SweepConfig};
use restless_core::model::CountState;
use restless_core::occupancy::{classify, fluid_propagate, is_nondegenerate, search_nondegenerate};
use restless_core::oracle::{exact_policy_value, optimal_value};
use restless_core::policy::{
    budget_relaxed_allocate, fluid_priority_allocate, violation_event, FluidPlan, ThompsonMode,
};
use restless_core::priority::{lambda_from_duals, penalized_dp_value};
use restless_core::relaxation::solve_relaxation;
use restless_core::rng::replication_stream;
use restless_core::{zoo, ArmModel, Policy};

type Verdict = Result<String, String>;

const TOL_FIXTURE: f64 = 1e-8;
const BERNOULLI_NS: [u64; 6] = [300, 600, 1200, 2400, 4800, 9600];
const DESK_REPS: Reps = Reps::PerArm {
    factor: 50,
    cap: 100_000,
};

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let spent = start.elapsed();
    if spent <= limit {
        Ok(())
    } else {
        Err(format!(
            "took {:.1}s, budget {:.0}s",
            spent.as_secs_f64(),
            limit.as_secs_f64()
        ))
    }
}

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn names(model: &ArmModel, states: &[usize]) -> Vec<String> {
    states.iter().map(|&s| model.states()[s].clone()).collect()
}

fn lp_fixtures() -> Verdict {
    let start = Instant::now();
    let single = zoo::single();
    let m = solve_relaxation(&single).map_err(|e| e.to_string())?;
    ensure(close(m.value(), 1.0, TOL_FIXTURE), || {
        format!("SINGLE value {}", m.value())
    })?;
    for t in 0..2 {
        for a in 0..2 {
            ensure(close(m.x(t, 0, a), 0.5, TOL_FIXTURE), || {
                format!("SINGLE x_{t}(s,{a}) = {}", m.x(t, 0, a))
            })?;
        }
    }
    let p = classify(&m, 1e-9);
    ensure((0..2).all(|t| p.neutral[t] == [0]), || {
        "SINGLE: s should be neutral in both periods".into()
    })?;
    ensure(is_nondegenerate(&p).nondegenerate, || {
        "SINGLE should be non-degenerate".into()
    })?;
    let search = search_nondegenerate(&single).map_err(|e| e.to_string())?;
    ensure(search.nondegenerate && search.stages == 1, || {
        format!("SINGLE search: {search:?}")
    })?;

    let two = zoo::two();
    let m = solve_relaxation(&two).map_err(|e| e.to_string())?;
    ensure(close(m.value(), 1.0, TOL_FIXTURE), || {
        format!("TWO value {}", m.value())
    })?;
    // (t, s, a, x) with G = 0, B = 1
    let expected = [
        (0, 0, 0, 0.5),
        (0, 0, 1, 0.5),
        (0, 1, 0, 0.0),
        (0, 1, 1, 0.0),
        (1, 0, 0, 0.0),
        (1, 0, 1, 0.5),
        (1, 1, 0, 0.5),
        (1, 1, 1, 0.0),
    ];
    for (t, s, a, x) in expected {
        ensure(close(m.x(t, s, a), x, TOL_FIXTURE), || {
            format!("TWO x_{t}({s},{a}) = {}, expected {x}", m.x(t, s, a))
        })?;
    }
    let p = classify(&m, 1e-9);
    let shape = |t: usize| {
        (
            names(&two, &p.active[t]),
            names(&two, &p.neutral[t]),
            names(&two, &p.inactive[t]),
        )
    };
    ensure(
        shape(0) == (vec![], vec!["G".into()], vec!["B".into()]),
        || format!("TWO t=0 categories {:?}", shape(0)),
    )?;
    ensure(
        shape(1) == (vec!["G".into()], vec![], vec!["B".into()]),
        || format!("TWO t=1 categories {:?}", shape(1)),
    )?;
    ensure(!is_nondegenerate(&p).nondegenerate, || {
        "TWO should be degenerate".into()
    })?;
    let search = search_nondegenerate(&two).map_err(|e| e.to_string())?;
    ensure(
        !search.nondegenerate && search.certificate.as_deref() == Some(&[1]),
        || format!("TWO search should certify the last period: {search:?}"),
    )?;
    within(Duration::from_secs(1), start)?;
    Ok(format!(
        "SINGLE and TWO values, measures and verdicts match ({:.0} ms)",
        start.elapsed().as_secs_f64() * 1e3
    ))
}

fn oracle_sandwich() -> Verdict {
    let start = Instant::now();
    let (mut worst_lower, mut worst_upper) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..100u64 {
        let mut rng = replication_stream(0xACCE55, i);
        let n_states = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=3);
        let n = rng.random_range(2..=4u64);
        let model = zoo::random_instance(&mut rng, n_states, horizon);
        let fluid = Policy::FluidPriority(FluidPlan::for_model(&model).map_err(|e| e.to_string())?);
        let v_pi = exact_policy_value(&model, &fluid, n).map_err(|e| e.to_string())?;
        let v_star = optimal_value(&model, n).map_err(|e| e.to_string())?;
        let v_hat = solve_relaxation(&model).map_err(|e| e.to_string())?.value();
        let max_ceil = model
            .alphas()
            .iter()
            .map(|a| (1.0 / a).ceil())
            .fold(0.0, f64::max);
        let slack = horizon as f64 * (1.0 + max_ceil) * model.max_abs_reward();
        let scale = 1e-9 * (1.0 + v_star.abs());
        worst_lower = worst_lower.max(v_pi - v_star);
        worst_upper = worst_upper.max(v_star - (n as f64 * v_hat + slack));
        ensure(v_pi <= v_star + scale, || {
            format!("instance {i}: policy value {v_pi} above optimum {v_star}")
        })?;
        ensure(v_star <= n as f64 * v_hat + slack + scale, || {
            format!(
                "instance {i}: optimum {v_star} above N·V̂ + slack = {}",
                n as f64 * v_hat + slack
            )
        })?;
    }
    within(Duration::from_secs(300), start)?;
    Ok(format!(
        "100 instances, 0 violations (max V_pi−V* = {worst_lower:.3e}, max V*−bound = {worst_upper:.3}; {:.1}s)",
        start.elapsed().as_secs_f64()
    ))
}

fn degeneracy_verdicts() -> Verdict {
    let start = Instant::now();
    let mut notes = Vec::new();
    for horizon in [15, 20] {
        let r = search_nondegenerate(&zoo::bernoulli_bandit(horizon, 1.0 / 3.0))
            .map_err(|e| e.to_string())?;
        ensure(r.nondegenerate, || {
            format!(
                "Bernoulli T={horizon} reported degenerate: {:?}",
                r.certificate
            )
        })?;
        notes.push(format!("bernoulli T={horizon} non-degenerate"));
    }
    let r = search_nondegenerate(&zoo::crowdsourcing(7, 0.25)).map_err(|e| e.to_string())?;
    ensure(!r.nondegenerate, || {
        "crowdsourcing T=7 reported non-degenerate".into()
    })?;
    notes.push(format!(
        "crowdsourcing T=7 degenerate (certificate {:?})",
        r.certificate.unwrap_or_default()
    ));
    let assort = zoo::assortment(8, 0.25, zoo::ASSORT_M_CAP, zoo::ASSORT_X_CAP);
    let r = search_nondegenerate(&assort).map_err(|e| e.to_string())?;
    ensure(r.nondegenerate, || {
        "assortment T=8 reported degenerate".into()
    })?;
    ensure(r.neutral_counts.iter().all(|&c| c == 1), || {
        format!("assortment neutral counts {:?}", r.neutral_counts)
    })?;
    notes.push("assortment T=8 non-degenerate, one neutral state per period".into());
    within(Duration::from_secs(120), start)?;
    Ok(format!(
        "{} ({:.1}s)",
        notes.join("; "),
        start.elapsed().as_secs_f64()
    ))
}

fn bernoulli15() -> ArmModel {
    zoo::bernoulli_bandit(15, 1.0 / 3.0)
}

fn sweep(
    model: &ArmModel,
    policy: &Policy,
    label: &str,
    n_list: &[u64],
    seed: u64,
) -> Result<Vec<GapRow>, String> {
    let value = solve_relaxation(model).map_err(|e| e.to_string())?.value();
    gap_sweep(
        model,
        policy,
        label,
        value,
        &SweepConfig::new(n_list.to_vec(), DESK_REPS, seed),
    )
    .map_err(|e| e.to_string())
}

fn gap_table(rows: &[GapRow]) -> String {
    rows.iter()
        .map(|r| format!("{}:{:.2}±{:.2}", r.n, r.gap, r.ci95))
        .collect::<Vec<_>>()
        .join(" ")
}

fn constant_gap(fluid: &mut Option<Vec<GapRow>>) -> Verdict {
    let start = Instant::now();
    let model = bernoulli15();
    let policy = Policy::FluidPriority(FluidPlan::for_model(&model).map_err(|e| e.to_string())?);
    let rows = sweep(&model, &policy, "fluid", &BERNOULLI_NS, 4)?;
    *fluid = Some(rows.clone());
    for r in &rows {
        ensure(r.gap <= 2.0, || {
            format!("gap {:.3} > 2 at N={} [{}]", r.gap, r.n, gap_table(&rows))
        })?;
    }
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let allowance = 3.0 * first.ci95.hypot(last.ci95);
    ensure(last.gap <= first.gap + allowance, || {
        format!(
            "gap grew from {:.3} to {:.3} (allowance {allowance:.3})",
            first.gap, last.gap
        )
    })?;
    within(Duration::from_secs(15 * 60), start)?;
    Ok(format!(
        "fluid gaps {} ({:.0}s)",
        gap_table(&rows),
        start.elapsed().as_secs_f64()
    ))
}

fn linear_baselines(fluid: &Option<Vec<GapRow>>) -> Verdict {
    let start = Instant::now();
    let model = bernoulli15();
    let fluid = fluid.as_ref().ok_or("fluid sweep unavailable")?;
    let fluid_last = fluid.last().unwrap();
    // the fluid gap at its upper confidence limit, so noise cannot help
    let fluid_gap = fluid_last.gap_high.max(0.0);
    let mut notes = Vec::new();
    let baselines = [
        (
            "ucb:0.5",
            Policy::ucb(&model, 0.5).map_err(|e| e.to_string())?,
        ),
        (
            "ts",
            Policy::thompson(&model, ThompsonMode::Aggregated).map_err(|e| e.to_string())?,
        ),
    ];
    for (label, policy) in &baselines {
        let rows = sweep(&model, policy, label, &BERNOULLI_NS, 5)?;
        let at = |n: u64| rows.iter().find(|r| r.n == n).unwrap();
        let (mid, last) = (at(1200), at(9600));
        let (slope_mid, slope_last) = (mid.gap / 1200.0, last.gap / 9600.0);
        ensure(slope_last >= 0.5 * slope_mid, || {
            format!(
                "{label}: gap/N fell from {slope_mid:.4} to {slope_last:.4} [{}]",
                gap_table(&rows)
            )
        })?;
        ensure(last.gap >= 10.0 * fluid_gap, || {
            format!(
                "{label}: gap {:.2} at N=9600 is under 10× the fluid gap bound {fluid_gap:.3}",
                last.gap
            )
        })?;
        notes.push(format!(
            "{label} gap/N {slope_mid:.4}→{slope_last:.4}, gap {:.1} at 9600",
            last.gap
        ));
    }
    let v_hat = solve_relaxation(&model).map_err(|e| e.to_string())?.value();
    let Policy::Ucb { scores, .. } = &baselines[0].1 else {
        unreachable!()
    };
    let ucb_fluid = fluid_propagate(&model, scores).value();
    ensure(ucb_fluid < v_hat - 1e-3, || {
        format!(
            "UCB fluid value {ucb_fluid} not below V̂ − 1e-3 = {}",
            v_hat - 1e-3
        )
    })?;
    notes.push(format!(
        "UCB fluid limit short of V̂ by {:.4}",
        v_hat - ucb_fluid
    ));
    within(Duration::from_secs(20 * 60), start)?;
    Ok(format!(
        "{}; fluid gap bound {fluid_gap:.3} at 9600 ({:.0}s)",
        notes.join("; "),
        start.elapsed().as_secs_f64()
    ))
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn sqrt_gap() -> Verdict {
    let start = Instant::now();
    let model = zoo::crowdsourcing(7, 0.25);
    let policy = Policy::FluidPriority(FluidPlan::for_model(&model).map_err(|e| e.to_string())?);
    let rows = sweep(&model, &policy, "fluid", &[250, 1000, 4000], 6)?;
    ensure(rows.iter().all(|r| r.gap > 0.0), || {
        format!("non-positive gap in [{}]", gap_table(&rows))
    })?;
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.gap.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    ensure(slope <= 0.75, || {
        format!("log-log slope {slope:.3} > 0.75 [{}]", gap_table(&rows))
    })?;
    within(Duration::from_secs(15 * 60), start)?;
    Ok(format!(
        "gaps {}; log-log slope {slope:.3} ({:.0}s)",
        gap_table(&rows),
        start.elapsed().as_secs_f64()
    ))
}

fn violation_decay() -> Verdict {
    let start = Instant::now();
    let model = zoo::bernoulli_bandit(5, 1.0 / 3.0);
    let plan = FluidPlan::for_model(&model).map_err(|e| e.to_string())?;
    ensure(is_nondegenerate(&plan.partition).nondegenerate, || {
        "Bernoulli T=5 plan is degenerate".into()
    })?;
    let policy = Policy::FluidPriority(plan);
    let cfg = SweepConfig::new(vec![400, 1600, 6400], Reps::Fixed(100_000), 7);
    let rows = violation_rate_sweep(&model, &policy, "fluid", &cfg).map_err(|e| e.to_string())?;
    let table = rows
        .iter()
        .map(|r| format!("{}:{:.2e}", r.n, r.any))
        .collect::<Vec<_>>()
        .join(" ");
    ensure(rows.last().unwrap().any < 1e-3, || {
        format!("rate at N=6400 not below 1e-3 [{table}]")
    })?;
    if !rows.windows(2).all(|w| w[1].any < w[0].any) {
        // context for the report: the decay is visible at smaller N
        let small = SweepConfig::new(vec![25, 50, 100, 200], Reps::Fixed(100_000), 7);
        let small =
            violation_rate_sweep(&model, &policy, "fluid", &small).map_err(|e| e.to_string())?;
        let context = small
            .iter()
            .map(|r| format!("{}:{:.2e}", r.n, r.any))
            .collect::<Vec<_>>()
            .join(" ");
        return Err(format!(
            "rates not strictly decreasing with 1e5 replications [{table}]; smaller N [{context}]"
        ));
    }
    within(Duration::from_secs(10 * 60), start)?;
    Ok(format!(
        "P(any violation) {table} ({:.0}s)",
        start.elapsed().as_secs_f64()
    ))
}

fn policy_identity() -> Verdict {
    let mut rng = replication_stream(0x1DE7, 0);
    let (mut compared, mut mismatches, mut models) = (0u32, 0u32, 0u32);
    while compared + mismatches < 10_000 {
        let n_states = rng.random_range(2..=5);
        let horizon = rng.random_range(1..=4);
        let model = zoo::random_instance(&mut rng, n_states, horizon);
        let plan = FluidPlan::for_model(&model).map_err(|e| e.to_string())?;
        models += 1;
        let mut drawn = 0;
        while drawn < 200 {
            let t = rng.random_range(0..horizon);
            let n = rng.random_range(1..=80u64);
            // arms follow the fluid occupancy half of the time, else uniform
            let mut z = vec![0u64; n_states];
            for _ in 0..n {
                let s = if rng.random_bool(0.5) {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    (0..n_states)
                        .find(|&s| {
                            acc += plan.measure.z(t, s);
                            u < acc
                        })
                        .unwrap_or(n_states - 1)
                } else {
                    rng.random_range(0..n_states)
                };
                z[s] += 1;
            }
            let counts = CountState { t, n, z };
            if violation_event(&model, &plan.partition, &counts) {
                continue;
            }
            drawn += 1;
            let f = fluid_priority_allocate(&model, &plan, &counts).map_err(|e| e.to_string())?;
            let r = budget_relaxed_allocate(&model, &plan, &counts).map_err(|e| e.to_string())?;
            if f.pulled == r.pulled {
                compared += 1;
            } else {
                mismatches += 1;
            }
        }
    }
    ensure(mismatches == 0, || {
        format!(
            "{mismatches} mismatches in {} states",
            compared + mismatches
        )
    })?;
    Ok(format!(
        "{compared} non-violating count states on {models} models, 0 mismatches"
    ))
}

fn simulator_agreement() -> Verdict {
    let start = Instant::now();
    let pool = [
        PolicyName::Fluid,
        PolicyName::Relaxed,
        PolicyName::Index,
        PolicyName::Rac,
        PolicyName::Ucb(0.5),
        PolicyName::Ts,
        PolicyName::TsPerArm,
    ];
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let mut rng = replication_stream(0x5EED9, i);
        let n_states = rng.random_range(2..=5);
        let horizon = rng.random_range(2..=4);
        let model = zoo::random_instance(&mut rng, n_states, horizon);
        let name = pool[i as usize % pool.len()];
        let plan = FluidPlan::for_model(&model).map_err(|e| e.to_string())?;
        let policy = name.build(&model, Some(&plan)).map_err(|e| e.to_string())?;
        let counts = montecarlo::simulate(&model, &policy, 8, 100_000, 1000 + i)
            .map_err(|e| e.to_string())?;
        let arms = montecarlo::simulate_per_arm(&model, &policy, 8, 100_000, 2000 + i)
            .map_err(|e| e.to_string())?;
        let se = counts.std_error().hypot(arms.std_error());
        let z = if se > 0.0 {
            (counts.mean_reward - arms.mean_reward).abs() / se
        } else {
            0.0
        };
        worst = worst.max(z);
        ensure(z <= 3.0, || {
            format!(
                "pair {i} ({}): counts {} vs per-arm {} differ by {z:.2} standard errors",
                name.label(),
                counts.mean_reward,
                arms.mean_reward
            )
        })?;
    }
    for (label, model) in [("SINGLE", zoo::single()), ("TWO", zoo::two())] {
        let policy =
            Policy::FluidPriority(FluidPlan::for_model(&model).map_err(|e| e.to_string())?);
        for n in [1, 2, 7, 8] {
            let a = montecarlo::simulate(&model, &policy, n, 64, 3).map_err(|e| e.to_string())?;
            let b = montecarlo::simulate_per_arm(&model, &policy, n, 64, 3)
                .map_err(|e| e.to_string())?;
            ensure(
                a.mean_reward == b.mean_reward && a.sd_reward == b.sd_reward,
                || format!("{label} N={n}: {} vs {}", a.mean_reward, b.mean_reward),
            )?;
        }
    }
    within(Duration::from_secs(10 * 60), start)?;
    Ok(format!(
        "20 random pairs within 3 SE (worst {worst:.2}); fixtures identical ({:.0}s)",
        start.elapsed().as_secs_f64()
    ))
}

fn duality_identity() -> Verdict {
    let models = [
        ("bernoulli T=15", bernoulli15()),
        ("crowdsourcing T=7", zoo::crowdsourcing(7, 0.25)),
        (
            "assortment T=8",
            zoo::assortment(8, 0.25, zoo::ASSORT_M_CAP, zoo::ASSORT_X_CAP),
        ),
    ];
    let mut notes = Vec::new();
    for (label, model) in &models {
        let m = solve_relaxation(model).map_err(|e| e.to_string())?;
        let lambda = lambda_from_duals(&m).map_err(|e| e.to_string())?;
        let budget_term: f64 = lambda.iter().zip(model.alphas()).map(|(l, a)| l * a).sum();
        let dual = budget_term + penalized_dp_value(model, &lambda);
        let err = (dual - m.value()).abs();
        ensure(err <= 1e-6, || {
            format!("{label}: V̂ {} vs dual {dual} (error {err:.2e})", m.value())
        })?;
        notes.push(format!("{label} {err:.1e}"));
    }
    Ok(format!("|V̂ − dual| {}", notes.join(", ")))
}

fn report(index: usize, name: &str, verdict: Verdict, failures: &mut usize) {
    match verdict {
        Ok(detail) => println!("PASS {index:>2} {name}: {detail}"),
        Err(detail) => {
            *failures += 1;
            println!("FAIL {index:>2} {name}: {detail}");
        }
    }
}

fn main() {
    let mut failures = 0;
    let mut fluid = None;
    report(1, "LP fixtures", lp_fixtures(), &mut failures);
    report(2, "oracle sandwich", oracle_sandwich(), &mut failures);
    report(
        3,
        "non-degeneracy verdicts",
        degeneracy_verdicts(),
        &mut failures,
    );
    report(
        4,
        "O(1) fluid-priority gap",
        constant_gap(&mut fluid),
        &mut failures,
    );
    report(
        5,
        "linear baseline gaps",
        linear_baselines(&fluid),
        &mut failures,
    );
    report(6, "O(sqrt N) degenerate gap", sqrt_gap(), &mut failures);
    report(
        7,
        "budget-violation decay",
        violation_decay(),
        &mut failures,
    );
    report(8, "policy identity", policy_identity(), &mut failures);
    report(
        9,
        "simulator cross-validation",
        simulator_agreement(),
        &mut failures,
    );
    report(10, "duality identity", duality_identity(), &mut failures);
    println!("acceptance: {} passed, {failures} failed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
