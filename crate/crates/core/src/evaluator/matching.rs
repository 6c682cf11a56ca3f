use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::formats::{Detection, GroundTruth};
use crate::geometry::BBox;

/// How a detection counted at one IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched an out-of-range ground truth, or unmatched and itself out of
    /// the area range. Counts neither way.
    Ignored,
}

/// Half-open ground-truth area bucket `[lo, hi)` in square pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaRange {
    pub lo: f64,
    pub hi: f64,
}

impl AreaRange {
    pub const SMALL: AreaRange = AreaRange {
        lo: 0.0,
        hi: 32.0 * 32.0,
    };
    pub const MEDIUM: AreaRange = AreaRange {
        lo: 32.0 * 32.0,
        hi: 96.0 * 96.0,
    };
    pub const LARGE: AreaRange = AreaRange {
        lo: 96.0 * 96.0,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, area: f64) -> bool {
        self.lo <= area && area < self.hi
    }
}

#[derive(Debug, Clone)]
pub struct MatchResult<'a> {
    /// Detections in matching order (confidence descending) with outcomes.
    pub outcomes: Vec<(&'a Detection, MatchOutcome)>,
    /// In-range ground truths left unmatched.
    pub missed: usize,
    /// In-range ground truths.
    pub total_gt: usize,
}

fn cmp_boxes(a: &BBox, b: &BBox) -> Ordering {
    a.corners()
        .iter()
        .zip(b.corners().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Confidence descending; ties broken on the box so that input order never
/// matters.
pub(crate) fn cmp_detections(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| cmp_boxes(&a.bbox, &b.bbox))
}

/// Greedy one-to-one matching of one image's detections of one class.
///
/// Detections go in confidence order; each takes the unmatched ground truth
/// with the highest IoU at or above `iou_thr`, lowest index on ties. With an
/// area range, in-range ground truths are preferred and ignored ones only
/// absorb detections.
pub(crate) fn match_group<'a>(
    dets: &mut Vec<&'a Detection>,
    gts: &mut Vec<&GroundTruth>,
    iou_thr: f64,
    area: Option<AreaRange>,
) -> (Vec<(&'a Detection, MatchOutcome)>, usize, usize) {
    dets.sort_by(|a, b| cmp_detections(a, b));
    let in_range = |b: &BBox| area.is_none_or(|r| r.contains(b.area()));
    gts.sort_by(|a, b| {
        in_range(&b.bbox)
            .cmp(&in_range(&a.bbox))
            .then_with(|| cmp_boxes(&a.bbox, &b.bbox))
    });
    let ignored: Vec<bool> = gts.iter().map(|g| !in_range(&g.bbox)).collect();
    let mut taken = vec![false; gts.len()];

    let mut outcomes = Vec::with_capacity(dets.len());
    for det in dets.iter() {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            if let Some((bi, _)) = best {
                if !ignored[bi] && ignored[gi] {
                    break;
                }
            }
            let iou = det.bbox.iou(&gt.bbox);
            if iou < iou_thr {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        let outcome = match best {
            Some((gi, _)) => {
                taken[gi] = true;
                if ignored[gi] {
                    MatchOutcome::Ignored
                } else {
                    MatchOutcome::TruePositive
                }
            }
            None if !in_range(&det.bbox) => MatchOutcome::Ignored,
            None => MatchOutcome::FalsePositive,
        };
        outcomes.push((*det, outcome));
    }
    let total = ignored.iter().filter(|&&i| !i).count();
    let missed = taken
        .iter()
        .zip(&ignored)
        .filter(|&(&t, &i)| !t && !i)
        .count();
    (outcomes, missed, total)
}

/// Key grouping records by image and class.
pub(crate) type GroupKey = (String, u32);

pub(crate) fn group<T>(items: &[T], key: impl Fn(&T) -> GroupKey) -> BTreeMap<GroupKey, Vec<&T>> {
    let mut map: BTreeMap<GroupKey, Vec<&T>> = BTreeMap::new();
    for it in items {
        map.entry(key(it)).or_default().push(it);
    }
    map
}

/// Matches every image/class group independently.
///
/// Returned outcomes are ordered by image id, class and then confidence.
pub fn match_detections<'a>(
    dets: &'a [Detection],
    gts: &[GroundTruth],
    iou_thr: f64,
) -> MatchResult<'a> {
    let det_groups = group(dets, |d| (d.image_id.clone(), d.class_id));
    let mut gt_groups = group(gts, |g| (g.image_id.clone(), g.class_id));
    let mut result = MatchResult {
        outcomes: Vec::new(),
        missed: 0,
        total_gt: 0,
    };
    for (key, mut ds) in det_groups {
        let mut gs = gt_groups.remove(&key).unwrap_or_default();
        let (outcomes, missed, total) = match_group(&mut ds, &mut gs, iou_thr, None);
        result.outcomes.extend(outcomes);
        result.missed += missed;
        result.total_gt += total;
    }
    for gs in gt_groups.values() {
        result.missed += gs.len();
        result.total_gt += gs.len();
    }
    result
}

/// Area under the 101-point interpolated precision/recall curve.
///
/// `tp_flags` lists detections in descending confidence, `true` for true
/// positives. Recall levels are compared exactly in integers, so a recall of
/// `k / 100` always reaches level `k`.
pub fn interpolated_ap(tp_flags: &[bool], total_gt: usize) -> f64 {
    if total_gt == 0 || tp_flags.is_empty() {
        return 0.0;
    }
    let mut tp_cum = Vec::with_capacity(tp_flags.len());
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (i, &is_tp) in tp_flags.iter().enumerate() {
        tp += usize::from(is_tp);
        tp_cum.push(tp);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // make precision non-increasing from the right
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let total = total_gt as u128;
    let sum: f64 = (0..=100u128)
        .map(|k| {
            let first = tp_cum.partition_point(|&t| 100 * (t as u128) < k * total);
            precision.get(first).copied().unwrap_or(0.0)
        })
        .sum();
    sum / 101.0
}
