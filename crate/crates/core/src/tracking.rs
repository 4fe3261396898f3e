//! Edge prediction sets between adjacent frames.
//!
//! An edge joins a detection at frame `t` to one at `t + 1`. Its score is the
//! IoU of the two boxes when both are present and share a class, `0`
//! otherwise. The edge set keeps every cross pair scoring at least
//! `tau_edge`; calibration reduces to the one-dimensional case by scoring
//! each object's true transition under the ground-truth detection set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::binomial::{Budget, RiskBudget};
use crate::calibrate::{calibrate_threshold, CalibrationRecord, Threshold};
use crate::detection::{detection_set, Detection, DetectorThresholds, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::iou;

/// Two images of one sequence at consecutive frame indices.
#[derive(Debug, Clone, Copy)]
pub struct FramePair<'a> {
    pub sequence_id: &'a str,
    pub t: u64,
    pub frame_t: &'a ImageRecord,
    pub frame_t1: &'a ImageRecord,
}

/// Adjacent frame pairs of every sequence, ordered by sequence then time.
/// Images without a sequence id or frame index are skipped.
pub fn frame_pairs(dataset: &[ImageRecord]) -> Vec<FramePair<'_>> {
    let mut by_seq: BTreeMap<&str, Vec<(u64, &ImageRecord)>> = BTreeMap::new();
    for img in dataset {
        if let (Some(seq), Some(t)) = (img.sequence_id.as_deref(), img.frame_index) {
            by_seq.entry(seq).or_default().push((t, img));
        }
    }
    let mut out = Vec::new();
    for (seq, mut frames) in by_seq {
        frames.sort_by_key(|&(t, _)| t);
        for w in frames.windows(2) {
            if w[1].0 == w[0].0 + 1 {
                out.push(FramePair { sequence_id: seq, t: w[0].0, frame_t: w[0].1, frame_t1: w[1].1 });
            }
        }
    }
    out
}

/// Split each sequence's pairs in time: the first half (rounded down) for
/// calibration, the rest for evaluation.
pub fn split_halves<'a>(pairs: &[FramePair<'a>]) -> (Vec<FramePair<'a>>, Vec<FramePair<'a>>) {
    let mut by_seq: BTreeMap<&str, Vec<FramePair<'a>>> = BTreeMap::new();
    for p in pairs {
        by_seq.entry(p.sequence_id).or_default().push(*p);
    }
    let (mut calib, mut test) = (Vec::new(), Vec::new());
    for (_, mut ps) in by_seq {
        ps.sort_by_key(|p| p.t);
        let half = ps.len() / 2;
        calib.extend_from_slice(&ps[..half]);
        test.extend_from_slice(&ps[half..]);
    }
    (calib, test)
}

/// IoU when classes agree and both flags are present, else `0`.
pub fn edge_score(a: &Detection, b: &Detection) -> f64 {
    if a.class == b.class && a.present && b.present {
        iou(&a.bbox, &b.bbox)
    } else {
        0.0
    }
}

/// Index pairs `(i, j)` with `edge_score(t[i], t1[j]) >= tau`.
pub fn edge_set_indices(dets_t: &[Detection], dets_t1: &[Detection], tau: &Threshold) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in dets_t.iter().enumerate() {
        for (j, b) in dets_t1.iter().enumerate() {
            if tau.admits(edge_score(a, b)) {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn edge_set(dets_t: &[Detection], dets_t1: &[Detection], tau: &EdgeThreshold) -> Vec<(Detection, Detection)> {
    edge_set_indices(dets_t, dets_t1, &tau.tau).into_iter().map(|(i, j)| (dets_t[i], dets_t1[j])).collect()
}

/// A calibrated (or hand-set) edge threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeThreshold {
    pub tau: Threshold,
}

impl EdgeThreshold {
    pub fn fixed(tau: f64) -> Self {
        Self { tau: Threshold::fixed(tau) }
    }

    pub fn budget(&self) -> Option<RiskBudget> {
        self.tau.calibration.map(|c| c.budget)
    }
}

/// Where the detections on each side of an edge come from.
#[derive(Debug, Clone, Copy)]
pub enum DetectionProvider<'a> {
    /// The true detections themselves.
    GroundTruth,
    /// The calibrated detection prediction set.
    Estimated(&'a DetectorThresholds),
}

/// One object's true transition across a frame pair.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub object_id: u64,
    pub from: Detection,
    pub to: Detection,
    /// Index of the object in `frame_t.ground_truth`.
    pub gt_index_t: usize,
    pub gt_index_t1: usize,
}

/// True transitions of a frame pair, plus the number of identified objects
/// at `t` with no counterpart at `t + 1`.
pub fn transitions(pair: &FramePair<'_>) -> (Vec<Transition>, usize) {
    let mut out = Vec::new();
    let mut vanished = 0;
    for (i, gt) in pair.frame_t.ground_truth.iter().enumerate() {
        let Some(id) = gt.object_id else { continue };
        let next = pair.frame_t1.ground_truth.iter().position(|g| g.object_id == Some(id));
        match next {
            Some(j) => out.push(Transition {
                object_id: id,
                from: gt.detection,
                to: pair.frame_t1.ground_truth[j].detection,
                gt_index_t: i,
                gt_index_t1: j,
            }),
            None => vanished += 1,
        }
    }
    (out, vanished)
}

/// One calibration record per true transition, scored on the true boxes.
pub fn edge_records(pairs: &[FramePair<'_>]) -> Vec<CalibrationRecord> {
    pairs
        .iter()
        .flat_map(|p| transitions(p).0)
        .map(|tr| CalibrationRecord { true_score: edge_score(&tr.from, &tr.to) })
        .collect()
}

/// Calibrate `tau_edge` against the ground-truth detection set.
pub fn calibrate_edges(pairs: &[FramePair<'_>], budget: RiskBudget) -> Result<EdgeThreshold> {
    let records = edge_records(pairs);
    if records.is_empty() {
        return Err(Error::domain("no true transitions to calibrate the edge threshold on"));
    }
    Ok(EdgeThreshold { tau: calibrate_threshold(&records, budget)? })
}

/// Guarantee of the edge set used on top of an estimated detection set.
pub fn composed_edge_budget(det: Budget, edge: Budget) -> Budget {
    det.plus(edge)
}

/// How false positives are counted per evaluated transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AfpMode {
    /// Only edges leaving the object's own detection at `t`.
    #[default]
    Anchored,
    /// Every edge of the frame pair.
    Global,
}

/// FNR / AFP over a set of evaluated transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub fnr: f64,
    pub afp: f64,
    /// Number of evaluated transitions.
    pub n_eval: usize,
    /// Identified objects at `t` absent at `t + 1`; not evaluated.
    pub excluded: usize,
}

/// Detections of both frames and, per transition, the indices standing for
/// the object on each side.
struct PairView {
    dets_t: Vec<Detection>,
    dets_t1: Vec<Detection>,
    anchors: Vec<(Vec<usize>, Vec<usize>)>,
    excluded: usize,
}

fn pair_view(pair: &FramePair<'_>, provider: DetectionProvider<'_>) -> PairView {
    let (trs, excluded) = transitions(pair);
    match provider {
        DetectionProvider::GroundTruth => PairView {
            dets_t: pair.frame_t.ground_truth.iter().map(|g| g.detection).collect(),
            dets_t1: pair.frame_t1.ground_truth.iter().map(|g| g.detection).collect(),
            anchors: trs.iter().map(|tr| (vec![tr.gt_index_t], vec![tr.gt_index_t1])).collect(),
            excluded,
        },
        DetectionProvider::Estimated(th) => {
            let dets_t = detection_set(pair.frame_t, th);
            let dets_t1 = detection_set(pair.frame_t1, th);
            let find = |dets: &[Detection], y: &Detection| -> Vec<usize> {
                (0..dets.len()).filter(|&i| dets[i].matches(y)).collect()
            };
            let anchors = trs.iter().map(|tr| (find(&dets_t, &tr.from), find(&dets_t1, &tr.to))).collect();
            PairView { dets_t, dets_t1, anchors, excluded }
        }
    }
}

#[derive(Default)]
struct Tally {
    misses: usize,
    false_positives: usize,
    n: usize,
    excluded: usize,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.misses += other.misses;
        self.false_positives += other.false_positives;
        self.n += other.n;
        self.excluded += other.excluded;
        self
    }

    fn finish(self) -> Result<EdgeMetrics> {
        if self.n == 0 {
            return Err(Error::domain("no true transitions to evaluate"));
        }
        Ok(EdgeMetrics {
            fnr: self.misses as f64 / self.n as f64,
            afp: self.false_positives as f64 / self.n as f64,
            n_eval: self.n,
            excluded: self.excluded,
        })
    }
}

/// FNR and AFP of the threshold edge set.
pub fn edge_metrics(
    pairs: &[FramePair<'_>],
    tau: &EdgeThreshold,
    provider: DetectionProvider<'_>,
    mode: AfpMode,
) -> Result<EdgeMetrics> {
    pairs
        .iter()
        .map(|p| {
            let view = pair_view(p, provider);
            let scores = score_matrix(&view);
            let admitted = |i: usize, j: usize| tau.tau.admits(scores[i][j]);
            let total: usize = match mode {
                AfpMode::Global => {
                    (0..view.dets_t.len()).map(|i| (0..view.dets_t1.len()).filter(|&j| admitted(i, j)).count()).sum()
                }
                AfpMode::Anchored => 0,
            };
            let mut t = Tally { excluded: view.excluded, ..Default::default() };
            for (from, to) in &view.anchors {
                let inside = from.iter().any(|&i| to.iter().any(|&j| admitted(i, j)));
                let size = match mode {
                    AfpMode::Global => total,
                    AfpMode::Anchored => {
                        from.iter().map(|&i| (0..view.dets_t1.len()).filter(|&j| admitted(i, j)).count()).sum()
                    }
                };
                t.n += 1;
                t.misses += !inside as usize;
                t.false_positives += size - inside as usize;
            }
            t
        })
        .fold(Tally::default(), Tally::merge)
        .finish()
}

pub fn fnr(pairs: &[FramePair<'_>], tau: &EdgeThreshold, provider: DetectionProvider<'_>) -> Result<f64> {
    edge_metrics(pairs, tau, provider, AfpMode::Anchored).map(|m| m.fnr)
}

pub fn afp(
    pairs: &[FramePair<'_>],
    tau: &EdgeThreshold,
    provider: DetectionProvider<'_>,
    mode: AfpMode,
) -> Result<f64> {
    edge_metrics(pairs, tau, provider, mode).map(|m| m.afp)
}

fn score_matrix(view: &PairView) -> Vec<Vec<f64>> {
    view.dets_t.iter().map(|a| view.dets_t1.iter().map(|b| edge_score(a, b)).collect()).collect()
}

/// Indices of the `k` highest positive-score partners of a row; ties keep
/// the lower index.
fn top_k(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Baseline edge set: each detection at `t` keeps its `k` best-scoring
/// partners at `t + 1`. Zero-score partners are never kept.
pub fn topk_baseline(
    pairs: &[FramePair<'_>],
    k: usize,
    provider: DetectionProvider<'_>,
    mode: AfpMode,
) -> Result<EdgeMetrics> {
    if k == 0 {
        return Err(Error::domain("top-k baseline needs k >= 1"));
    }
    pairs
        .iter()
        .map(|p| {
            let view = pair_view(p, provider);
            let scores = score_matrix(&view);
            let kept: Vec<Vec<usize>> = scores.iter().map(|row| top_k(row, k)).collect();
            let total: usize = kept.iter().map(Vec::len).sum();
            let mut t = Tally { excluded: view.excluded, ..Default::default() };
            for (from, to) in &view.anchors {
                let inside = from.iter().any(|&i| kept[i].iter().any(|j| to.contains(j)));
                let size = match mode {
                    AfpMode::Global => total,
                    AfpMode::Anchored => from.iter().map(|&i| kept[i].len()).sum(),
                };
                t.n += 1;
                t.misses += !inside as usize;
                t.false_positives += size - inside as usize;
            }
            t
        })
        .fold(Tally::default(), Tally::merge)
        .finish()
}
