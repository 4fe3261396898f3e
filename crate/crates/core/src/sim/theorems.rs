//! Empirical certification of the composition guarantees.
//!
//! Each trial draws a detection calibration set and an edge calibration set
//! from finite distributions built over a synthetic world, calibrates every
//! component, and evaluates the exact error of each composed set over the
//! whole support. A row of the report counts the trials whose exact error
//! exceeds that row's composed `epsilon`; the guarantee asks for a violation
//! fraction of at most the composed `delta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::{Budget, RiskBudget};
use crate::calibrate::{calibrate_threshold, CalibrationRecord, Threshold};
use crate::detection::{
    calibrate_detector_examples, detection_set, loss_det_in, loss_loc, loss_prp, loss_prs, ComponentBudgets,
    ComposeMode, Detection, DetectorThresholds, Example, ImageRecord, MatchRule, Proposer,
};
use crate::error::{Error, Result};
use crate::sim::finite::FiniteDistribution;
use crate::sim::mc::{derive_seed, trial_rng, ViolationSummary};
use crate::tracking::{composed_edge_budget, edge_score, frame_pairs, transitions};

/// A ground-truth detection of an image in the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetOutcome {
    pub image: usize,
    pub truth: usize,
}

/// One object's transition between two images of the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeOutcome {
    pub image_t: usize,
    pub image_t1: usize,
    pub truth_t: usize,
    pub truth_t1: usize,
}

/// A world plus uniform distributions over its detections and transitions.
pub struct SuiteWorld {
    pub images: Vec<ImageRecord>,
    pub detections: FiniteDistribution<DetOutcome>,
    pub edges: FiniteDistribution<EdgeOutcome>,
}

impl SuiteWorld {
    pub fn new(images: Vec<ImageRecord>) -> Result<Self> {
        let det: Vec<DetOutcome> = images
            .iter()
            .enumerate()
            .flat_map(|(i, img)| (0..img.ground_truth.len()).map(move |t| DetOutcome { image: i, truth: t }))
            .collect();
        let index_of = |img: &ImageRecord| images.iter().position(|x| std::ptr::eq(x, img)).expect("image in world");
        let mut edges = Vec::new();
        for pair in frame_pairs(&images) {
            let (it, it1) = (index_of(pair.frame_t), index_of(pair.frame_t1));
            for tr in transitions(&pair).0 {
                edges.push(EdgeOutcome {
                    image_t: it,
                    image_t1: it1,
                    truth_t: tr.gt_index_t,
                    truth_t1: tr.gt_index_t1,
                });
            }
        }
        if det.is_empty() || edges.is_empty() {
            return Err(Error::domain("world needs ground truth and at least one transition"));
        }
        Ok(Self { detections: FiniteDistribution::uniform(det)?, edges: FiniteDistribution::uniform(edges)?, images })
    }

    fn truth(&self, image: usize, truth: usize) -> &Detection {
        &self.images[image].ground_truth[truth].detection
    }

    fn example(&self, o: &DetOutcome) -> Example<'_> {
        Example { image: &self.images[o.image], truth: self.truth(o.image, o.truth) }
    }

    /// Exact proposal loss at `tau_prp = 0`.
    pub fn proposal_floor(&self, rule: MatchRule) -> f64 {
        let zero = Threshold::trivial();
        self.detections.true_error(|o| {
            let ex = self.example(o);
            loss_prp(ex.image, ex.truth, &zero, rule)
        })
    }
}

/// Budgets and sizes for [`theorem_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub components: ComponentBudgets,
    pub edge: RiskBudget,
    pub mode: ComposeMode,
    pub match_rule: MatchRule,
    pub n_detection: usize,
    pub n_edge: usize,
    pub trials: usize,
    pub seed: u64,
}

impl SuiteConfig {
    pub fn uniform(budget: RiskBudget, n: usize, trials: usize, seed: u64) -> Self {
        Self {
            components: ComponentBudgets::uniform(budget),
            edge: budget,
            mode: ComposeMode::StrictChain,
            match_rule: MatchRule::SmallestScore,
            n_detection: n,
            n_edge: n,
            trials,
            seed,
        }
    }
}

/// Exact errors of one calibrate-then-evaluate trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteTrial {
    pub prp: f64,
    pub prs_star: f64,
    pub loc_star: f64,
    pub prs: f64,
    pub loc: f64,
    pub det: f64,
    pub edge_star: f64,
    pub edge: f64,
    pub infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRow {
    pub name: String,
    pub budget: Budget,
    pub summary: ViolationSummary,
    /// Composed budget carries no guarantee.
    pub degenerate: bool,
    /// Fraction of trials with at least one infeasible calibration.
    pub infeasible_fraction: f64,
    /// The proposal error floor exceeds the budget of this row.
    pub below_floor: bool,
}

impl TheoremRow {
    pub fn holds(&self) -> bool {
        self.summary.fraction <= self.budget.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub rows: Vec<TheoremRow>,
    pub proposal_floor: f64,
    pub mode: ComposeMode,
}

impl TheoremReport {
    pub fn row(&self, name: &str) -> Option<&TheoremRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(TheoremRow::holds)
    }
}

/// Run one trial of the suite.
pub fn suite_trial(world: &SuiteWorld, cfg: &SuiteConfig, seed: u64) -> Result<SuiteTrial> {
    let mut rng = trial_rng(seed);
    let sample: Vec<Example<'_>> =
        world.detections.sample(cfg.n_detection, &mut rng).into_iter().map(|o| world.example(o)).collect();
    let th = calibrate_detector_examples(&sample, cfg.components, cfg.match_rule)?;

    let edge_records: Vec<CalibrationRecord> = world
        .edges
        .sample(cfg.n_edge, &mut rng)
        .into_iter()
        .map(|o| CalibrationRecord {
            true_score: edge_score(world.truth(o.image_t, o.truth_t), world.truth(o.image_t1, o.truth_t1)),
        })
        .collect();
    let tau_edge = calibrate_threshold(&edge_records, cfg.edge)?;

    let errs = detector_errors(world, &th);
    let sets: Vec<Vec<Detection>> = world.images.iter().map(|img| detection_set(img, &th)).collect();
    let det = world.detections.true_error(|o| loss_det_in(&sets[o.image], world.truth(o.image, o.truth)));
    let edge_star = world.edges.true_error(|o| {
        !tau_edge.admits(edge_score(world.truth(o.image_t, o.truth_t), world.truth(o.image_t1, o.truth_t1)))
    });
    let edge = world.edges.true_error(|o| {
        let from = world.truth(o.image_t, o.truth_t);
        let to = world.truth(o.image_t1, o.truth_t1);
        !transition_covered(&sets[o.image_t], &sets[o.image_t1], from, to, &tau_edge)
    });
    Ok(SuiteTrial {
        prp: errs[0],
        prs_star: errs[1],
        loc_star: errs[2],
        prs: errs[3],
        loc: errs[4],
        det,
        edge_star,
        edge,
        infeasible: th.any_infeasible() || tau_edge.is_infeasible(),
    })
}

/// `[prp, prs*, loc*, prs, loc]`; starred errors use the ground-truth
/// proposer.
fn detector_errors(world: &SuiteWorld, th: &DetectorThresholds) -> [f64; 5] {
    let rule = th.match_rule;
    let est = Proposer::Estimated(&th.tau_prp);
    let mut out = [0.0; 5];
    for (o, p) in world.detections.iter() {
        let ex = world.example(o);
        let l = [
            loss_prp(ex.image, ex.truth, &th.tau_prp, rule),
            loss_prs(ex.image, ex.truth, &th.tau_prs, Proposer::GroundTruth, rule),
            loss_loc(ex.image, ex.truth, &th.tau_loc, Proposer::GroundTruth, rule),
            loss_prs(ex.image, ex.truth, &th.tau_prs, est, rule),
            loss_loc(ex.image, ex.truth, &th.tau_loc, est, rule),
        ];
        for (acc, hit) in out.iter_mut().zip(l) {
            if hit {
                *acc += p;
            }
        }
    }
    out
}

/// Whether some edge between detections identical to `from` and `to`
/// clears `tau`.
pub fn transition_covered(
    dets_t: &[Detection],
    dets_t1: &[Detection],
    from: &Detection,
    to: &Detection,
    tau: &Threshold,
) -> bool {
    dets_t
        .iter()
        .filter(|a| a.matches(from))
        .any(|a| dets_t1.iter().filter(|b| b.matches(to)).any(|b| tau.admits(edge_score(a, b))))
}

type RowSpec = (&'static str, Budget, fn(&SuiteTrial) -> f64);

/// Run `cfg.trials` suite trials and summarize one row per guarantee.
pub fn theorem_suite(world: &SuiteWorld, cfg: &SuiteConfig) -> Result<TheoremReport> {
    if cfg.trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let trials: Vec<SuiteTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| suite_trial(world, cfg, derive_seed(cfg.seed, i as u64)))
        .collect::<Result<_>>()?;
    let infeasible_fraction = trials.iter().filter(|t| t.infeasible).count() as f64 / trials.len() as f64;
    let floor = world.proposal_floor(cfg.match_rule);

    let c = &cfg.components;
    let (prp, prs, loc, edge): (Budget, Budget, Budget, Budget) =
        (c.prp.into(), c.prs.into(), c.loc.into(), cfg.edge.into());
    let composed = crate::detection::ComposedBudgets::from_components(c);
    let det = composed.detector(cfg.mode);
    let row_defs: [RowSpec; 8] = [
        ("proposal", prp, |t| t.prp),
        ("presence*", prs, |t| t.prs_star),
        ("location*", loc, |t| t.loc_star),
        ("edge*", edge, |t| t.edge_star),
        ("presence|proposal", composed.presence, |t| t.prs),
        ("location|proposal", composed.location, |t| t.loc),
        ("detection", det, |t| t.det),
        ("edge|detection", composed_edge_budget(det, edge), |t| t.edge),
    ];
    let rows = row_defs
        .iter()
        .map(|&(name, budget, pick)| {
            let errors: Vec<f64> = trials.iter().map(pick).collect();
            let violated: Vec<bool> = errors.iter().map(|&e| e > budget.epsilon).collect();
            let uses_proposals = !matches!(name, "presence*" | "location*" | "edge*");
            Ok(TheoremRow {
                name: name.to_string(),
                budget,
                summary: ViolationSummary::from_trials(&errors, &violated)?,
                degenerate: budget.is_degenerate(),
                infeasible_fraction,
                below_floor: uses_proposals && floor > budget.epsilon,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TheoremReport { rows, proposal_floor: floor, mode: cfg.mode })
}
