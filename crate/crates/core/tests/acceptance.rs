//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when
//! any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use pacset::binomial::Budget;
use pacset::detection::{compose_budgets, ComposeMode};
use pacset::sim::experiments::{run_detection, tracking_sweep, DetectionExperiment, TrackingExperiment};
use pacset::sim::mc::{mc_verify, standard_score_distribution};
use pacset::sim::theorems::{theorem_suite, SuiteConfig, SuiteWorld};
use pacset::sim::world::{gen_world, WorldConfig};
use pacset::tracking::composed_edge_budget;
use pacset::{binom_cdf, calibrate_threshold, k_star, CalibrationRecord, RiskBudget};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn binomial_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=50u64 {
        for k in 0..=n {
            for p in [0.01, 0.1, 0.25, 0.5, 0.9] {
                worst = worst.max((binom_cdf(k, n, p).unwrap() - cdf_oracle(k, n, p)).abs());
            }
        }
    }
    let eps = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
    let delta = [0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for n in 1..=200u64 {
        for &e in &eps {
            let want = k_star_exact(n, e, &delta);
            for (&d, want) in delta.iter().zip(want) {
                checked += 1;
                let got = k_star(n, RiskBudget::new(e, d).unwrap()).unwrap();
                if got != want {
                    mismatches.push(format!("n={n} eps={e} delta={d}: {got:?} vs {want:?}"));
                }
            }
        }
    }
    outcome(
        worst <= 1e-12 && mismatches.is_empty(),
        format!(
            "max |F - oracle| = {worst:.2e}; k* mismatches {}/{checked}{}",
            mismatches.len(),
            mismatches.join("; ")
        ),
    )
}

fn calibration_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bad = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=200);
        let levels = rng.gen_range(1..=50u32);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=levels) as f64 / levels as f64).collect();
        let budget =
            RiskBudget::new(EPS_GRID[rng.gen_range(0..EPS_GRID.len())], DELTA_GRID[rng.gen_range(0..DELTA_GRID.len())])
                .unwrap();
        let records: Vec<CalibrationRecord> = scores.iter().map(|&s| CalibrationRecord::new(s).unwrap()).collect();
        let tau = calibrate_threshold(&records, budget).unwrap();
        let errors = scores.iter().filter(|&&s| s < tau.tau).count() as u64;
        let within = match tau.calibration.unwrap().k_star {
            Some(k) => errors <= k,
            None => tau.tau == 0.0,
        };
        if tau.tau != tau_oracle(&scores, budget) || !within {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 500 randomized lists disagree with the brute-force breakpoint"))
}

fn single_threshold_coverage() -> Outcome {
    let budget = RiskBudget::new(0.1, 0.2).unwrap();
    let s = mc_verify(&standard_score_distribution(), 500, budget, 2000, 1, true).unwrap();
    outcome(
        s.fraction <= 0.2,
        format!(
            "violation fraction {:.4} (95% CI [{:.4}, {:.4}]) over 2000 trials, bound 0.2; mean error {:.4}",
            s.fraction, s.ci_low, s.ci_high, s.mean_error
        ),
    )
}

fn composed_coverage() -> Outcome {
    let world = SuiteWorld::new(gen_world(&WorldConfig::default()).unwrap()).unwrap();
    let cfg = SuiteConfig::uniform(RiskBudget::new(0.1, 0.2).unwrap(), 500, 1000, 3);
    let report = theorem_suite(&world, &cfg).unwrap();
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{} {:.3}<={:.2}{}",
                r.name,
                r.summary.fraction,
                r.budget.delta,
                if r.degenerate { " (vacuous)" } else { "" }
            )
        })
        .collect();
    outcome(report.all_hold(), rows.join("; "))
}

fn budget_algebra() -> Outcome {
    let third = 1e-5 / 3.0;
    let strict = compose_budgets(
        Budget::new(0.03, third),
        Budget::new(0.01, third),
        Budget::new(0.06, third),
        ComposeMode::StrictChain,
    );
    let shared = compose_budgets(
        Budget::new(0.03, third),
        Budget::new(0.01, third),
        Budget::new(0.06, third),
        ComposeMode::SharedEvent,
    );
    let desired: Vec<f64> = [0.01, 0.005, 0.001]
        .iter()
        .map(|&e| composed_edge_budget(Budget::new(0.2, 1e-5), Budget::new(e, 1e-2)).epsilon)
        .collect();
    let shown: Vec<String> = desired.iter().map(|v| format!("{v:.3}")).collect();
    let pass = (strict.epsilon - 0.13).abs() < 1e-15
        && (shared.delta - 1e-5).abs() < 1e-20
        && shown == ["0.210", "0.205", "0.201"]
        && desired.iter().zip([0.21, 0.205, 0.201]).all(|(a, b)| (a - b).abs() < 1e-15);
    outcome(
        pass,
        format!(
            "strict-chain eps {:.3}, shared-event delta {:.1e}, desired FNR {}",
            strict.epsilon,
            shared.delta,
            shown.join(" / ")
        ),
    )
}

fn tracking_table() -> Outcome {
    let exp = TrackingExperiment::default();
    let sweep = tracking_sweep(&exp, 200, 17).unwrap();
    let coverage = sweep.fnr_coverage();
    let needed = 1.0 - exp.edge_budget.delta();
    let base: Vec<String> =
        sweep.topk.iter().enumerate().map(|(i, m)| format!("top-{} {:.3}/{:.3}", i + 1, m.fnr, m.afp)).collect();
    outcome(
        coverage >= needed && sweep.edge_dominates(),
        format!(
            "eps_edge {}: FNR within budget in {:.3} of 200 worlds (need {:.2}); edge {:.3}/{:.3}, {}",
            exp.edge_budget.epsilon(),
            coverage,
            needed,
            sweep.edge.fnr,
            sweep.edge.afp,
            base.join(", ")
        ),
    )
}

fn component_errors() -> Outcome {
    let out = run_detection(&DetectionExperiment::default()).unwrap();
    let bars: Vec<String> = out.bars().iter().map(|(n, b, m)| format!("{n} {m:.4}<{:.3}", b.epsilon)).collect();
    let strictly = out.bars().iter().all(|(_, b, m)| m < &b.epsilon);
    outcome(strictly, bars.join(", "))
}

fn property_suites() -> Outcome {
    let failures = run_property_suites(200);
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "binomial, calibration, k* monotonicity, IoU, raster, nesting, decomposition, round trip: all green".into()
        } else {
            failures.iter().map(|(n, e)| format!("{n}: {e}")).collect::<Vec<_>>().join("; ")
        },
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("binomial oracle equivalence", Duration::from_secs(5), binomial_oracle),
        ("calibration optimality", Duration::from_secs(10), calibration_optimality),
        ("single-threshold coverage", Duration::from_secs(60), single_threshold_coverage),
        ("composed coverage", Duration::from_secs(300), composed_coverage),
        ("budget algebra", Duration::from_secs(1), budget_algebra),
        ("edge sets vs top-k on crowded scenes", Duration::from_secs(300), tracking_table),
        ("component errors below budgets", Duration::from_secs(60), component_errors),
        ("property suites", Duration::from_secs(30), property_suites),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took <= *limit;
        failed += !pass as usize;
        println!(
            "{} {}. {name} [{:.2}s, limit {}s]: {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            limit.as_secs(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
