//! Component prediction sets of a two-stage detector (proposal, presence,
//! location), their composition into a detection prediction set, the 0/1
//! losses each component is calibrated against, and budget algebra for the
//! composed guarantee.
//!
//! A ground-truth box is tied to proposals through [`same_box`]. Under the
//! default [`MatchRule::SmallestScore`] every truth has one canonical
//! proposal, the matching proposal with the smallest objectness score, and
//! all component losses are read off that proposal. [`MatchRule::Union`]
//! instead takes the union over every matching proposal.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::binomial::{Budget, RiskBudget};
use crate::calibrate::{calibrate_threshold, CalibrationRecord, Threshold};
use crate::error::{Error, Result};
use crate::geometry::{match_truth_to_proposals, same_box, BoundingBox};

pub type ClassId = u32;

/// `y = (b, c, e)`: a box, a class label and a presence flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub class: ClassId,
    pub present: bool,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class: ClassId, present: bool) -> Self {
        Self { bbox, class, present }
    }

    /// Identity under the box convention: same class, same flag, same box.
    pub fn matches(&self, other: &Detection) -> bool {
        self.class == other.class && self.present == other.present && same_box(&self.bbox, &other.bbox)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationCandidate {
    pub bbox: BoundingBox,
    pub density: f64,
}

/// A ground-truth detection with its persistent object identity, when known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub detection: Detection,
    pub object_id: Option<u64>,
}

/// Everything the detector emitted for one image, plus its ground truth.
///
/// Presence scores and location candidates are keyed by
/// `(proposal index, class)`. A missing presence entry (typically removed by
/// non-maximum suppression) reads as score `0`; a missing location entry is
/// an empty candidate list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageRecord {
    pub image_id: String,
    pub sequence_id: Option<String>,
    pub frame_index: Option<u64>,
    pub proposals: Vec<Proposal>,
    pub presence: BTreeMap<(usize, ClassId), f64>,
    pub locations: BTreeMap<(usize, ClassId), Vec<LocationCandidate>>,
    pub ground_truth: Vec<GroundTruth>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self { image_id: image_id.into(), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.proposals.len();
        for (i, p) in self.proposals.iter().enumerate() {
            if !p.score.is_finite() || p.score < 0.0 {
                return Err(Error::domain(format!(
                    "image {}: proposal {i} has invalid score {}",
                    self.image_id, p.score
                )));
            }
        }
        for (&(r, c), &s) in &self.presence {
            if r >= n {
                return Err(Error::Integrity(format!(
                    "image {}: presence score references proposal {r} of {n}",
                    self.image_id
                )));
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::domain(format!(
                    "image {}: presence score {s} at ({r}, {c}) is not a probability",
                    self.image_id
                )));
            }
        }
        for (&(r, c), cands) in &self.locations {
            if r >= n {
                return Err(Error::Integrity(format!(
                    "image {}: location candidates reference proposal {r} of {n}",
                    self.image_id
                )));
            }
            if let Some(bad) = cands.iter().find(|l| !l.density.is_finite() || l.density < 0.0) {
                return Err(Error::domain(format!(
                    "image {}: density {} at ({r}, {c}) is invalid",
                    self.image_id, bad.density
                )));
            }
        }
        Ok(())
    }

    pub fn presence_score(&self, proposal: usize, class: ClassId) -> Option<f64> {
        self.presence.get(&(proposal, class)).copied()
    }

    pub fn location_candidates(&self, proposal: usize, class: ClassId) -> &[LocationCandidate] {
        self.locations.get(&(proposal, class)).map(Vec::as_slice).unwrap_or(&[])
    }

    fn classes_at(&self, proposal: usize) -> impl Iterator<Item = ClassId> + '_ {
        self.locations.range((proposal, ClassId::MIN)..=(proposal, ClassId::MAX)).map(|(&(_, c), _)| c)
    }
}

/// One calibration or evaluation example: an image and one of its truths.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub image: &'a ImageRecord,
    pub truth: &'a Detection,
}

/// Every `(image, truth)` pair of a dataset.
pub fn examples(dataset: &[ImageRecord]) -> Vec<Example<'_>> {
    dataset
        .iter()
        .flat_map(|image| image.ground_truth.iter().map(move |gt| Example { image, truth: &gt.detection }))
        .collect()
}

/// How a ground-truth box selects proposals when losses are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchRule {
    /// The single matching proposal with the smallest objectness score.
    #[default]
    SmallestScore,
    /// Every matching proposal.
    Union,
}

/// Which proposal set the presence and location losses are measured under.
#[derive(Debug, Clone, Copy)]
pub enum Proposer<'a> {
    /// The calibrated proposal prediction set.
    Estimated(&'a Threshold),
    /// The ground-truth proposer: every proposal that matches the truth,
    /// regardless of its objectness score.
    GroundTruth,
}

/// Indices of the proposals a truth box is read through.
pub fn matched_proposals(
    image: &ImageRecord,
    truth: &BoundingBox,
    proposer: Proposer<'_>,
    rule: MatchRule,
) -> Vec<usize> {
    let admits = |i: usize| match proposer {
        Proposer::Estimated(t) => t.admits(image.proposals[i].score),
        Proposer::GroundTruth => true,
    };
    match rule {
        MatchRule::SmallestScore => match_truth_to_proposals(truth, image.proposals.iter().map(|p| (&p.bbox, p.score)))
            .filter(|&i| admits(i))
            .into_iter()
            .collect(),
        MatchRule::Union => {
            (0..image.proposals.len()).filter(|&i| same_box(&image.proposals[i].bbox, truth) && admits(i)).collect()
        }
    }
}

/// `{ r : (r, s) in proposals, s >= tau_prp }`, as proposal indices.
pub fn proposal_set_indices(image: &ImageRecord, tau_prp: &Threshold) -> Vec<usize> {
    (0..image.proposals.len()).filter(|&i| tau_prp.admits(image.proposals[i].score)).collect()
}

pub fn proposal_set(image: &ImageRecord, tau_prp: &Threshold) -> Vec<BoundingBox> {
    proposal_set_indices(image, tau_prp).into_iter().map(|i| image.proposals[i].bbox).collect()
}

/// A subset of `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PresenceSet {
    pub absent: bool,
    pub present: bool,
}

impl PresenceSet {
    pub fn contains(&self, flag: bool) -> bool {
        if flag {
            self.present
        } else {
            self.absent
        }
    }

    pub fn flags(&self) -> impl Iterator<Item = bool> {
        let (a, p) = (self.absent, self.present);
        [(false, a), (true, p)].into_iter().filter(|&(_, keep)| keep).map(|(f, _)| f)
    }

    pub fn is_empty(&self) -> bool {
        !self.absent && !self.present
    }
}

/// Score the presence head assigns to flag `e`: `f` for `e = 1`, `1 - f`
/// for `e = 0`.
fn presence_flag_score(score: f64, flag: bool) -> f64 {
    if flag {
        score
    } else {
        1.0 - score
    }
}

/// `{ e : e f + (1 - e)(1 - f) >= tau }`. An absent score reads as `0`.
pub fn presence_set(score: Option<f64>, tau_prs: &Threshold) -> Result<PresenceSet> {
    let f = score.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::domain(format!("presence score {f} is not a probability")));
    }
    Ok(PresenceSet {
        absent: tau_prs.admits(presence_flag_score(f, false)),
        present: tau_prs.admits(presence_flag_score(f, true)),
    })
}

/// Candidate boxes whose density clears `tau_loc`.
pub fn location_set(candidates: &[LocationCandidate], tau_loc: &Threshold) -> Result<Vec<BoundingBox>> {
    if let Some(bad) = candidates.iter().find(|c| c.density.is_nan() || c.density < 0.0) {
        return Err(Error::domain(format!("negative location density {}", bad.density)));
    }
    Ok(candidates.iter().filter(|c| tau_loc.admits(c.density)).map(|c| c.bbox).collect())
}

fn location_set_unchecked<'a>(
    candidates: &'a [LocationCandidate],
    tau_loc: &'a Threshold,
) -> impl Iterator<Item = &'a BoundingBox> + 'a {
    candidates.iter().filter(|c| tau_loc.admits(c.density)).map(|c| &c.bbox)
}

/// Per-component budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentBudgets {
    pub prp: RiskBudget,
    pub prs: RiskBudget,
    pub loc: RiskBudget,
}

impl ComponentBudgets {
    pub fn uniform(budget: RiskBudget) -> Self {
        Self { prp: budget, prs: budget, loc: budget }
    }

    /// Split a total budget with fixed ratios: epsilon 0.15 / 0.05 / 0.30 of
    /// the total for proposal / presence / location, delta split evenly.
    /// A total of `(0.2, 1e-5)` gives `(0.03, 0.01, 0.06)` with `delta / 3`
    /// each.
    pub fn split_default(total: RiskBudget) -> Result<Self> {
        let e = total.epsilon();
        let d = total.delta() / 3.0;
        Ok(Self {
            prp: RiskBudget::new(0.15 * e, d)?,
            prs: RiskBudget::new(0.05 * e, d)?,
            loc: RiskBudget::new(0.30 * e, d)?,
        })
    }
}

/// How component guarantees are combined into the detector guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComposeMode {
    /// Proposal failure charged once against presence and once against
    /// location: `(e_prs + e_prp) + (e_loc + e_prp)`, same for delta.
    StrictChain,
    /// One union bound over the three calibration events.
    #[default]
    SharedEvent,
}

/// Presence-given-proposal budget: `(e_prp + e_prs, d_prp + d_prs)`.
pub fn compose_presence(prp: Budget, prs: Budget) -> Budget {
    prp.plus(prs)
}

/// Location-given-proposal budget: `(e_prp + e_loc, d_prp + d_loc)`.
pub fn compose_location(prp: Budget, loc: Budget) -> Budget {
    prp.plus(loc)
}

pub fn compose_budgets(prp: Budget, prs: Budget, loc: Budget, mode: ComposeMode) -> Budget {
    match mode {
        ComposeMode::StrictChain => compose_presence(prp, prs).plus(compose_location(prp, loc)),
        ComposeMode::SharedEvent => prp.plus(prs).plus(loc),
    }
}

/// Thresholds of the three components and the guarantees they carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorThresholds {
    pub tau_prp: Threshold,
    pub tau_prs: Threshold,
    pub tau_loc: Threshold,
    #[serde(default)]
    pub match_rule: MatchRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<ComponentBudgets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composed: Option<ComposedBudgets>,
    /// Proposal loss at `tau_prp = 0` on the calibration data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_floor: Option<f64>,
}

/// Derived budgets for a set of component budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComposedBudgets {
    pub presence: Budget,
    pub location: Budget,
    pub strict_chain: Budget,
    pub shared_event: Budget,
}

impl ComposedBudgets {
    pub fn from_components(b: &ComponentBudgets) -> Self {
        let (prp, prs, loc) = (b.prp.into(), b.prs.into(), b.loc.into());
        Self {
            presence: compose_presence(prp, prs),
            location: compose_location(prp, loc),
            strict_chain: compose_budgets(prp, prs, loc, ComposeMode::StrictChain),
            shared_event: compose_budgets(prp, prs, loc, ComposeMode::SharedEvent),
        }
    }

    pub fn detector(&self, mode: ComposeMode) -> Budget {
        match mode {
            ComposeMode::StrictChain => self.strict_chain,
            ComposeMode::SharedEvent => self.shared_event,
        }
    }
}

impl DetectorThresholds {
    /// Hand-set thresholds without calibration provenance.
    pub fn fixed(tau_prp: f64, tau_prs: f64, tau_loc: f64) -> Self {
        Self {
            tau_prp: Threshold::fixed(tau_prp),
            tau_prs: Threshold::fixed(tau_prs),
            tau_loc: Threshold::fixed(tau_loc),
            match_rule: MatchRule::default(),
            budgets: None,
            composed: None,
            proposal_floor: None,
        }
    }

    pub fn with_match_rule(mut self, rule: MatchRule) -> Self {
        self.match_rule = rule;
        self
    }

    pub fn any_infeasible(&self) -> bool {
        self.tau_prp.is_infeasible() || self.tau_prs.is_infeasible() || self.tau_loc.is_infeasible()
    }
}

/// The detection prediction set: the union over in-set proposals `r` and
/// classes `c` of `(b, c, e)` for `e` in the presence set and `b` in the
/// location set at `(r, c)`. Exact duplicates are emitted once.
pub fn detection_set(image: &ImageRecord, thresholds: &DetectorThresholds) -> Vec<Detection> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in proposal_set_indices(image, &thresholds.tau_prp) {
        for c in image.classes_at(r) {
            let flags = presence_set_lenient(image.presence_score(r, c), &thresholds.tau_prs);
            if flags.is_empty() {
                continue;
            }
            for b in location_set_unchecked(image.location_candidates(r, c), &thresholds.tau_loc) {
                for e in flags.flags() {
                    let key = (b.to_array().map(f64::to_bits), c, e);
                    if seen.insert(key) {
                        out.push(Detection::new(*b, c, e));
                    }
                }
            }
        }
    }
    out
}

fn presence_set_lenient(score: Option<f64>, tau: &Threshold) -> PresenceSet {
    let f = score.unwrap_or(0.0);
    PresenceSet { absent: tau.admits(1.0 - f), present: tau.admits(f) }
}

/// `1(b not in C_prp(x))`.
pub fn loss_prp(image: &ImageRecord, truth: &Detection, tau_prp: &Threshold, rule: MatchRule) -> bool {
    matched_proposals(image, &truth.bbox, Proposer::Estimated(tau_prp), rule).is_empty()
}

/// `1(e not in the union of presence sets over proposals identical to b)`.
pub fn loss_prs(
    image: &ImageRecord,
    truth: &Detection,
    tau_prs: &Threshold,
    proposer: Proposer<'_>,
    rule: MatchRule,
) -> bool {
    !matched_proposals(image, &truth.bbox, proposer, rule)
        .into_iter()
        .any(|r| presence_set_lenient(image.presence_score(r, truth.class), tau_prs).contains(truth.present))
}

/// `1(b not in the union of location sets over proposals identical to b)`.
pub fn loss_loc(
    image: &ImageRecord,
    truth: &Detection,
    tau_loc: &Threshold,
    proposer: Proposer<'_>,
    rule: MatchRule,
) -> bool {
    !matched_proposals(image, &truth.bbox, proposer, rule).into_iter().any(|r| {
        location_set_unchecked(image.location_candidates(r, truth.class), tau_loc).any(|b| same_box(b, &truth.bbox))
    })
}

/// `1(y not in C_det(x))`.
pub fn loss_det(image: &ImageRecord, truth: &Detection, thresholds: &DetectorThresholds) -> bool {
    !detection_set(image, thresholds).iter().any(|d| d.matches(truth))
}

/// Loss against a precomputed detection set.
pub fn loss_det_in(set: &[Detection], truth: &Detection) -> bool {
    !set.iter().any(|d| d.matches(truth))
}

/// The true-label score of each component for one example, read through the
/// ground-truth proposer. `1(score < tau)` equals the component loss under
/// that proposer, so calibrating on these scores is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentScores {
    pub prp: f64,
    pub prs: f64,
    pub loc: f64,
    /// Whether any proposal matches the truth at all.
    pub matched: bool,
}

pub fn component_scores(image: &ImageRecord, truth: &Detection, rule: MatchRule) -> ComponentScores {
    let matched = matched_proposals(image, &truth.bbox, Proposer::GroundTruth, rule);
    let max_over = |f: &dyn Fn(usize) -> f64| matched.iter().map(|&r| f(r)).fold(0.0_f64, f64::max);
    ComponentScores {
        prp: max_over(&|r| image.proposals[r].score),
        prs: max_over(&|r| presence_flag_score(image.presence_score(r, truth.class).unwrap_or(0.0), truth.present)),
        loc: max_over(&|r| {
            image
                .location_candidates(r, truth.class)
                .iter()
                .filter(|c| same_box(&c.bbox, &truth.bbox))
                .map(|c| c.density)
                .fold(0.0, f64::max)
        }),
        matched: !matched.is_empty(),
    }
}

/// Calibrate all three components on a list of examples.
pub fn calibrate_detector_examples(
    examples: &[Example<'_>],
    budgets: ComponentBudgets,
    rule: MatchRule,
) -> Result<DetectorThresholds> {
    if examples.is_empty() {
        return Err(Error::domain("detector calibration needs at least one ground-truth example"));
    }
    let scores: Vec<ComponentScores> = examples.iter().map(|ex| component_scores(ex.image, ex.truth, rule)).collect();
    let records = |pick: fn(&ComponentScores) -> f64| -> Vec<CalibrationRecord> {
        scores.iter().map(|s| CalibrationRecord { true_score: pick(s) }).collect()
    };
    let tau_prp = calibrate_threshold(&records(|s| s.prp), budgets.prp)?;
    let tau_prs = calibrate_threshold(&records(|s| s.prs), budgets.prs)?;
    let tau_loc = calibrate_threshold(&records(|s| s.loc), budgets.loc)?;
    let unmatched = scores.iter().filter(|s| !s.matched).count();
    Ok(DetectorThresholds {
        tau_prp,
        tau_prs,
        tau_loc,
        match_rule: rule,
        budgets: Some(budgets),
        composed: Some(ComposedBudgets::from_components(&budgets)),
        proposal_floor: Some(unmatched as f64 / scores.len() as f64),
    })
}

/// Calibrate the detector on every ground-truth detection of a dataset.
pub fn calibrate_detector(
    dataset: &[ImageRecord],
    budgets: ComponentBudgets,
    rule: MatchRule,
) -> Result<DetectorThresholds> {
    if dataset.is_empty() {
        return Err(Error::domain("detector calibration needs a nonempty dataset"));
    }
    calibrate_detector_examples(&examples(dataset), budgets, rule)
}

/// Empirical component errors; presence and location are measured under the
/// estimated proposal set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentErrors {
    pub prp: f64,
    pub prs: f64,
    pub loc: f64,
    pub det: f64,
    pub n: usize,
}

pub fn evaluate_detector(examples: &[Example<'_>], thresholds: &DetectorThresholds) -> Result<ComponentErrors> {
    if examples.is_empty() {
        return Err(Error::domain("cannot evaluate on zero examples"));
    }
    let rule = thresholds.match_rule;
    let proposer = Proposer::Estimated(&thresholds.tau_prp);
    let mut counts = [0usize; 4];
    for ex in examples {
        let l = [
            loss_prp(ex.image, ex.truth, &thresholds.tau_prp, rule),
            loss_prs(ex.image, ex.truth, &thresholds.tau_prs, proposer, rule),
            loss_loc(ex.image, ex.truth, &thresholds.tau_loc, proposer, rule),
            loss_det(ex.image, ex.truth, thresholds),
        ];
        for (c, hit) in counts.iter_mut().zip(l) {
            *c += hit as usize;
        }
    }
    let n = examples.len() as f64;
    Ok(ComponentErrors {
        prp: counts[0] as f64 / n,
        prs: counts[1] as f64 / n,
        loc: counts[2] as f64 / n,
        det: counts[3] as f64 / n,
        n: examples.len(),
    })
}
