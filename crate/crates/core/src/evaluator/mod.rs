//! COCO-style detection evaluation.
//!
//! Per class and IoU threshold, detections are matched greedily (see
//! [`match_detections`]) and scored with 101-point interpolated AP. Averages
//! are taken over thresholds first, then over classes; classes without
//! ground truth are left out of every mean and listed in the report.

mod io;
mod matching;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{load_detections, load_groundtruth};
pub use matching::{interpolated_ap, match_detections, AreaRange, MatchOutcome, MatchResult};

use crate::formats::{Detection, GroundTruth};
pub(crate) use matching::cmp_detections;
use matching::{group, match_group};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Treat every record as one class.
    pub class_agnostic: bool,
    /// Compute the small/medium/large buckets (absolute pixel areas).
    pub area_buckets: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            class_agnostic: false,
            area_buckets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: u32,
    pub num_gt: usize,
    pub num_det: usize,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
}

/// Evaluation summary. `None` marks a metric that is undefined because no
/// ground truth falls into its scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub aps: Option<f64>,
    pub apm: Option<f64>,
    /// Only reported when large ground truths exist.
    pub apl: Option<f64>,
    pub per_class: Vec<ClassReport>,
    /// Classes seen only in detections.
    pub excluded_classes: Vec<u32>,
    pub no_ground_truth: bool,
    pub num_images: usize,
    pub num_detections: usize,
    pub num_groundtruths: usize,
    pub options: EvalOptions,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-image/class grouped records of one class.
struct ClassData<'a> {
    dets: BTreeMap<String, Vec<&'a Detection>>,
    gts: BTreeMap<String, Vec<&'a GroundTruth>>,
}

impl ClassData<'_> {
    /// AP at one threshold, or `None` when the class has no in-range gt.
    fn ap_at(&self, iou_thr: f64, area: Option<AreaRange>) -> Option<f64> {
        let mut scored: Vec<(f64, bool)> = Vec::new();
        let mut total_gt = 0;
        let images: BTreeSet<&String> = self.dets.keys().chain(self.gts.keys()).collect();
        for image in images {
            let mut ds = self.dets.get(image).cloned().unwrap_or_default();
            let mut gs = self.gts.get(image).cloned().unwrap_or_default();
            let (outcomes, _, total) = match_group(&mut ds, &mut gs, iou_thr, area);
            total_gt += total;
            scored.extend(outcomes.into_iter().filter_map(|(d, o)| match o {
                MatchOutcome::TruePositive => Some((d.confidence, true)),
                MatchOutcome::FalsePositive => Some((d.confidence, false)),
                MatchOutcome::Ignored => None,
            }));
        }
        if total_gt == 0 {
            return None;
        }
        // stable: equal confidences keep image order, then per-image rank
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let flags: Vec<bool> = scored.into_iter().map(|(_, tp)| tp).collect();
        Some(interpolated_ap(&flags, total_gt))
    }

    /// Mean AP over all thresholds.
    fn ap_range(&self, area: Option<AreaRange>) -> Option<f64> {
        let per_thr: Vec<f64> = iou_thresholds()
            .iter()
            .filter_map(|&t| self.ap_at(t, area))
            .collect();
        mean(per_thr)
    }
}

fn class_of(class_agnostic: bool, id: u32) -> u32 {
    if class_agnostic {
        0
    } else {
        id
    }
}

fn class_entry<'m, 'a>(
    classes: &'m mut BTreeMap<u32, ClassData<'a>>,
    class: u32,
) -> &'m mut ClassData<'a> {
    classes.entry(class).or_insert_with(|| ClassData {
        dets: BTreeMap::new(),
        gts: BTreeMap::new(),
    })
}

fn split_by_class<'a>(
    dets: &'a [Detection],
    gts: &'a [GroundTruth],
    opts: EvalOptions,
) -> BTreeMap<u32, ClassData<'a>> {
    let mut classes = BTreeMap::new();
    let agnostic = opts.class_agnostic;
    for ((image, class), ds) in group(dets, |d| {
        (d.image_id.clone(), class_of(agnostic, d.class_id))
    }) {
        class_entry(&mut classes, class)
            .dets
            .entry(image)
            .or_default()
            .extend(ds);
    }
    for ((image, class), gs) in group(gts, |g| {
        (g.image_id.clone(), class_of(agnostic, g.class_id))
    }) {
        class_entry(&mut classes, class)
            .gts
            .entry(image)
            .or_default()
            .extend(gs);
    }
    classes
}

/// Evaluates detections against ground truth.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruth], opts: EvalOptions) -> EvalReport {
    let classes = split_by_class(dets, gts, opts);
    let images: BTreeSet<&str> = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .chain(gts.iter().map(|g| g.image_id.as_str()))
        .collect();

    struct ClassScores {
        report: ClassReport,
        buckets: [Option<f64>; 3],
    }
    let scored: Vec<ClassScores> = classes
        .par_iter()
        .map(|(&class_id, data)| {
            let num_gt = data.gts.values().map(Vec::len).sum();
            let num_det = data.dets.values().map(Vec::len).sum();
            let buckets = if opts.area_buckets {
                [AreaRange::SMALL, AreaRange::MEDIUM, AreaRange::LARGE]
                    .map(|r| data.ap_range(Some(r)))
            } else {
                [None; 3]
            };
            ClassScores {
                report: ClassReport {
                    class_id,
                    num_gt,
                    num_det,
                    ap: data.ap_range(None),
                    ap50: data.ap_at(0.5, None),
                    ap75: data.ap_at(0.75, None),
                },
                buckets,
            }
        })
        .collect();

    let defined = |f: fn(&ClassScores) -> Option<f64>| mean(scored.iter().filter_map(f));
    EvalReport {
        ap: defined(|s| s.report.ap),
        ap50: defined(|s| s.report.ap50),
        ap75: defined(|s| s.report.ap75),
        aps: defined(|s| s.buckets[0]),
        apm: defined(|s| s.buckets[1]),
        apl: defined(|s| s.buckets[2]),
        excluded_classes: scored
            .iter()
            .filter(|s| s.report.num_gt == 0)
            .map(|s| s.report.class_id)
            .collect(),
        per_class: scored.into_iter().map(|s| s.report).collect(),
        no_ground_truth: gts.is_empty(),
        num_images: images.len(),
        num_detections: dets.len(),
        num_groundtruths: gts.len(),
        options: opts,
    }
}

/// Fraction of ground truths matched at `iou_thr`, or `None` without any.
pub fn recall_at(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thr: f64,
    opts: EvalOptions,
) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let relabel_d: Vec<Detection>;
    let relabel_g: Vec<GroundTruth>;
    let (dets, gts) = if opts.class_agnostic {
        relabel_d = dets
            .iter()
            .cloned()
            .map(|d| Detection { class_id: 0, ..d })
            .collect();
        relabel_g = gts
            .iter()
            .cloned()
            .map(|g| GroundTruth { class_id: 0, ..g })
            .collect();
        (&relabel_d[..], &relabel_g[..])
    } else {
        (dets, gts)
    };
    let r = match_detections(dets, gts, iou_thr);
    Some((r.total_gt - r.missed) as f64 / r.total_gt as f64)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "   n/a".to_string(), |v| format!("{v:6.4}"))
}

impl EvalReport {
    /// Fixed-width human-readable summary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "images {}  detections {}  ground truths {}{}",
            self.num_images,
            self.num_detections,
            self.num_groundtruths,
            if self.options.class_agnostic {
                "  (class-agnostic)"
            } else {
                ""
            }
        );
        if self.no_ground_truth {
            let _ = writeln!(out, "warning: no ground truth; all metrics undefined");
        }
        for (name, v) in [
            ("AP@[.50:.95]", self.ap),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("APS", self.aps),
            ("APM", self.apm),
            ("APL", self.apl),
        ] {
            let _ = writeln!(out, "{name:<14}{}", fmt_metric(v));
        }
        let _ = writeln!(
            out,
            "{:>6} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "class", "gts", "dets", "AP", "AP50", "AP75"
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:>6} {:>7} {:>7} {:>7} {:>7} {:>7}",
                c.class_id,
                c.num_gt,
                c.num_det,
                fmt_metric(c.ap),
                fmt_metric(c.ap50),
                fmt_metric(c.ap75)
            );
        }
        if !self.excluded_classes.is_empty() {
            let _ = writeln!(
                out,
                "excluded (no ground truth): {:?}",
                self.excluded_classes
            );
        }
        out
    }
}
