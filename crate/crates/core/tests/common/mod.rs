//! Oracles, strategies and property checks shared by the property tests and
//! the acceptance suite.
#![allow(dead_code)]

use num_bigint::BigUint;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use pacset::calibrate::{calibrate_threshold, CalibrationRecord, Threshold};
use pacset::detection::Detection;
use pacset::detection::{
    detection_set, examples, location_set, loss_det, loss_det_in, loss_loc, loss_prs, presence_set,
    proposal_set_indices, DetectorThresholds, LocationCandidate, MatchRule, Proposer,
};
use pacset::geometry::{iou, same_box, BoundingBox};
use pacset::io::dump::{parse_dump, write_dump, ParseMode};
use pacset::sim::world::{gen_world, WorldConfig};
use pacset::tracking::{edge_score, edge_set_indices};
use pacset::{binom_cdf, k_star, RiskBudget};

/// `C(n, i)` by the multiplicative formula.
pub fn choose(n: u64, i: u64) -> f64 {
    let i = i.min(n - i);
    (0..i).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Direct term-by-term sum of the binomial pmf.
pub fn cdf_oracle(k: u64, n: u64, p: f64) -> f64 {
    (0..=k).map(|i| choose(n, i) * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)).sum()
}

/// `x = m / 2^s` exactly.
fn dyadic(x: f64) -> (BigUint, u64) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut m, mut e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    while m != 0 && m % 2 == 0 && e < 0 {
        m /= 2;
        e += 1;
    }
    assert!(e <= 0, "expects a value below 2^53");
    (BigUint::from(m), (-e) as u64)
}

/// Linear scan over `k` in exact rational arithmetic: `F(k; n, eps)` and
/// each `delta` are compared as the dyadic rationals the floats denote.
pub fn k_star_exact(n: u64, eps: f64, deltas: &[f64]) -> Vec<Option<u64>> {
    let (a, s) = dyadic(eps);
    let denom = BigUint::from(1u32) << s;
    let b = &denom - &a;
    let scale = denom.pow(n as u32);
    let targets: Vec<(BigUint, u64)> = deltas.iter().map(|&d| dyadic(d)).map(|(m, t)| (m * &scale, t)).collect();
    let mut best = vec![None; deltas.len()];
    let mut alive = vec![true; deltas.len()];
    let mut term = b.pow(n as u32);
    let mut sum = BigUint::from(0u32);
    for k in 0..n {
        sum += &term;
        for (i, (rhs, t)) in targets.iter().enumerate() {
            if alive[i] {
                if (&sum << *t) <= *rhs {
                    best[i] = Some(k);
                } else {
                    alive[i] = false;
                }
            }
        }
        if !alive.iter().any(|&x| x) {
            break;
        }
        term = term * BigUint::from(n - k) * &a / (BigUint::from(k + 1) * &b);
    }
    best
}

pub fn k_star_oracle(n: u64, eps: f64, delta: f64) -> Option<u64> {
    k_star_exact(n, eps, &[delta])[0]
}

/// Largest breakpoint `tau` (an observed score, or 0) with at most `k*`
/// scores strictly below it.
pub fn tau_oracle(scores: &[f64], budget: RiskBudget) -> f64 {
    let Some(k) = k_star_oracle(scores.len() as u64, budget.epsilon(), budget.delta()) else {
        return 0.0;
    };
    scores
        .iter()
        .copied()
        .chain([0.0])
        .filter(|&t| scores.iter().filter(|&&s| s < t).count() as u64 <= k)
        .fold(0.0, f64::max)
}

pub const EPS_GRID: [f64; 10] = [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5];
pub const DELTA_GRID: [f64; 10] = [0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];

pub fn budget_strategy() -> impl Strategy<Value = RiskBudget> {
    (0..EPS_GRID.len(), 0..DELTA_GRID.len()).prop_map(|(e, d)| RiskBudget::new(EPS_GRID[e], DELTA_GRID[d]).unwrap())
}

/// Score lists with many ties: values on a coarse grid.
pub fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..=20).prop_map(|v| v as f64 / 20.0), 1..=200)
}

pub fn int_box() -> impl Strategy<Value = BoundingBox> {
    (0i32..30, 0i32..30, 1i32..15, 1i32..15)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap())
}

pub fn real_box() -> impl Strategy<Value = BoundingBox> {
    (-100.0..100.0f64, -100.0..100.0f64, 0.1..50.0f64, 0.1..50.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
}

/// IoU by counting covered unit cells.
pub fn raster_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let cells = |bx: &BoundingBox| {
        let mut v = Vec::new();
        for x in bx.x_min() as i32..bx.x_max() as i32 {
            for y in bx.y_min() as i32..bx.y_max() as i32 {
                v.push((x, y));
            }
        }
        v
    };
    let (ca, cb) = (cells(a), cells(b));
    let inter = ca.iter().filter(|c| cb.contains(c)).count();
    let union = ca.len() + cb.len() - inter;
    inter as f64 / union as f64
}

/// Small synthetic worlds with randomized noise.
pub fn world_strategy() -> impl Strategy<Value = WorldConfig> {
    (any::<u64>(), 0.0..6.0f64, 0.0..4.0f64, 0.0..0.3f64, 0.0..0.3f64, 0u32..4, 1u32..3, prop::bool::ANY).prop_map(
        |(seed, jitter, loc_jitter, drop_prob, suppress_prob, clutter, classes, quantized)| WorldConfig {
            seed,
            n_sequences: 1,
            n_frames: 3,
            n_objects: 4,
            n_classes: classes,
            arena_width: 100.0,
            arena_height: 100.0,
            jitter,
            loc_jitter,
            drop_prob,
            suppress_prob,
            clutter_per_frame: clutter,
            score_levels: if quantized { 10 } else { 0 },
            ..WorldConfig::default()
        },
    )
}

pub fn tau_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), (0u32..=10).prop_map(|v| v as f64 / 10.0), 0.0..1.0f64]
}

// ---- property checks ----

pub fn check_binom_oracle(n: u64, k: u64, p: f64) -> Result<(), TestCaseError> {
    let k = k.min(n);
    let got = binom_cdf(k, n, p).unwrap();
    let want = cdf_oracle(k, n, p);
    prop_assert!((got - want).abs() <= 1e-12, "F({k};{n},{p}) = {got}, oracle {want}");
    Ok(())
}

pub fn check_calibration(scores: &[f64], budget: RiskBudget) -> Result<(), TestCaseError> {
    let records: Vec<CalibrationRecord> = scores.iter().map(|&s| CalibrationRecord::new(s).unwrap()).collect();
    let tau = calibrate_threshold(&records, budget).unwrap();
    prop_assert_eq!(tau.tau, tau_oracle(scores, budget));
    Ok(())
}

pub fn check_iou_symmetry_identity_translation(
    a: &BoundingBox,
    b: &BoundingBox,
    dx: f64,
    dy: f64,
) -> Result<(), TestCaseError> {
    let ab = iou(a, b);
    prop_assert_eq!(ab, iou(b, a));
    prop_assert!((0.0..=1.0).contains(&ab));
    prop_assert!((iou(a, a) - 1.0).abs() < 1e-12);
    let moved = iou(&a.translate(dx, dy).unwrap(), &b.translate(dx, dy).unwrap());
    prop_assert!((moved - ab).abs() < 1e-9, "{ab} vs {moved}");
    prop_assert_eq!(same_box(a, b), same_box(b, a));
    Ok(())
}

pub fn check_raster(a: &BoundingBox, b: &BoundingBox) -> Result<(), TestCaseError> {
    let want = raster_iou(a, b);
    prop_assert!((iou(a, b) - want).abs() < 1e-12);
    prop_assert_eq!(same_box(a, b), want > 0.25);
    Ok(())
}

/// Raising a threshold never adds members to any component set.
pub fn check_nesting(cfg: &WorldConfig, t1: f64, t2: f64) -> Result<(), TestCaseError> {
    let (lo, hi) = (Threshold::fixed(t1.min(t2)), Threshold::fixed(t1.max(t2)));
    let data = gen_world(cfg).unwrap();
    for img in &data {
        let (p_lo, p_hi) = (proposal_set_indices(img, &lo), proposal_set_indices(img, &hi));
        prop_assert!(p_hi.iter().all(|i| p_lo.contains(i)));
        for r in 0..img.proposals.len() {
            for c in 0..cfg.n_classes {
                let (s_lo, s_hi) = (
                    presence_set(img.presence_score(r, c), &lo).unwrap(),
                    presence_set(img.presence_score(r, c), &hi).unwrap(),
                );
                prop_assert!(s_hi.flags().all(|f| s_lo.contains(f)));
                let cands: &[LocationCandidate] = img.location_candidates(r, c);
                let (l_lo, l_hi) = (location_set(cands, &lo).unwrap(), location_set(cands, &hi).unwrap());
                prop_assert!(l_hi.iter().all(|b| l_lo.contains(b)));
            }
        }
        let (d_lo, d_hi) = (
            detection_set(img, &DetectorThresholds::fixed(lo.tau, lo.tau, lo.tau)),
            detection_set(img, &DetectorThresholds::fixed(hi.tau, hi.tau, hi.tau)),
        );
        prop_assert!(d_hi.iter().all(|d| d_lo.contains(d)));
    }
    for w in data.windows(2) {
        let a: Vec<Detection> = w[0].ground_truth.iter().map(|g| g.detection).collect();
        let b: Vec<Detection> = w[1].ground_truth.iter().map(|g| g.detection).collect();
        let (e_lo, e_hi) = (edge_set_indices(&a, &b, &lo), edge_set_indices(&a, &b, &hi));
        prop_assert!(e_hi.iter().all(|e| e_lo.contains(e)));
        for (i, j) in e_hi {
            prop_assert!(edge_score(&a[i], &b[j]) >= hi.tau);
        }
    }
    Ok(())
}

/// `loss_det = 1` implies a presence or location loss under the estimated
/// proposal set.
pub fn check_decomposition(cfg: &WorldConfig, taus: [f64; 3]) -> Result<(), TestCaseError> {
    let data = gen_world(cfg).unwrap();
    let th = DetectorThresholds::fixed(taus[0], taus[1], taus[2]);
    let proposer = Proposer::Estimated(&th.tau_prp);
    for ex in examples(&data) {
        let det = loss_det(ex.image, ex.truth, &th);
        prop_assert_eq!(det, loss_det_in(&detection_set(ex.image, &th), ex.truth));
        if det {
            let prs = loss_prs(ex.image, ex.truth, &th.tau_prs, proposer, MatchRule::SmallestScore);
            let loc = loss_loc(ex.image, ex.truth, &th.tau_loc, proposer, MatchRule::SmallestScore);
            prop_assert!(prs || loc, "det loss without a component loss in {}", ex.image.image_id);
        }
    }
    Ok(())
}

pub fn check_dump_round_trip(cfg: &WorldConfig) -> Result<(), TestCaseError> {
    let data = gen_world(cfg).unwrap();
    let mut buf = Vec::new();
    write_dump(&data, &mut buf).unwrap();
    let (back, stats) = parse_dump(buf.as_slice(), ParseMode::Strict).unwrap();
    prop_assert_eq!(stats.dropped(), 0);
    prop_assert_eq!(back, data);
    Ok(())
}

pub fn check_k_star_monotone(n: u64, a: RiskBudget, b: RiskBudget) -> Result<(), TestCaseError> {
    let (ka, kb) = (k_star(n, a).unwrap(), k_star(n, b).unwrap());
    if a.epsilon() <= b.epsilon() && a.delta() <= b.delta() {
        prop_assert!(ka <= kb, "{ka:?} > {kb:?}");
    }
    Ok(())
}

/// Run every property suite with `cases` cases each. Returns the names of
/// failing suites with their messages.
pub fn run_property_suites(cases: u32) -> Vec<(String, String)> {
    let mut failures = Vec::new();
    let mut run = |name: &str, f: &mut dyn FnMut(&mut TestRunner) -> Result<(), String>| {
        let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
        if let Err(e) = f(&mut runner) {
            failures.push((name.to_string(), e));
        }
    };
    run("binomial oracle", &mut |r| {
        r.run(&(1u64..=50, 0u64..=50, prop::sample::select(vec![0.01, 0.1, 0.25, 0.5, 0.9])), |(n, k, p)| {
            check_binom_oracle(n, k, p)
        })
        .map_err(|e| format!("{e}"))
    });
    run("calibration optimality", &mut |r| {
        r.run(&(scores_strategy(), budget_strategy()), |(s, b)| check_calibration(&s, b)).map_err(|e| format!("{e}"))
    });
    run("k* monotone", &mut |r| {
        r.run(&(1u64..=200, budget_strategy(), budget_strategy()), |(n, a, b)| check_k_star_monotone(n, a, b))
            .map_err(|e| format!("{e}"))
    });
    run("iou symmetry/identity/translation", &mut |r| {
        r.run(&(real_box(), real_box(), -50.0..50.0f64, -50.0..50.0f64), |(a, b, dx, dy)| {
            check_iou_symmetry_identity_translation(&a, &b, dx, dy)
        })
        .map_err(|e| format!("{e}"))
    });
    run("iou raster oracle", &mut |r| {
        r.run(&(int_box(), int_box()), |(a, b)| check_raster(&a, &b)).map_err(|e| format!("{e}"))
    });
    run("monotone nesting", &mut |r| {
        r.run(&(world_strategy(), tau_strategy(), tau_strategy()), |(c, a, b)| check_nesting(&c, a, b))
            .map_err(|e| format!("{e}"))
    });
    run("loss decomposition", &mut |r| {
        r.run(&(world_strategy(), tau_strategy(), tau_strategy(), tau_strategy()), |(c, a, b, d)| {
            check_decomposition(&c, [a, b, d])
        })
        .map_err(|e| format!("{e}"))
    });
    run("dump round trip", &mut |r| {
        r.run(&world_strategy(), |c| check_dump_round_trip(&c)).map_err(|e| format!("{e}"))
    });
    failures
}
