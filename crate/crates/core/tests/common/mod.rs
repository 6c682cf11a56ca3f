//! Helpers shared by the integration tests: an independent brute-force
//! evaluator and random instance generators.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use figsep::{BBox, Detection, GroundTruth};
use rand::seq::SliceRandom;
use rand::Rng;

/// IoU straight from the corner coordinates.
pub fn oracle_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// AP of one class at one threshold: greedy matching in confidence order,
/// then for every recall level the best precision at any rank reaching it.
pub fn oracle_ap(dets: &[&Detection], gts: &[&GroundTruth], thr: f64) -> f64 {
    let n_gt = gts.len();
    let mut order: Vec<&Detection> = dets.to_vec();
    order.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
    let mut used = vec![false; n_gt];
    let mut tp = 0usize;
    let mut points = Vec::new();
    for (rank, d) in order.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.image_id != d.image_id {
                continue;
            }
            let v = oracle_iou(d.bbox.corners(), g.bbox.corners());
            if v >= thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            tp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (rank + 1) as f64));
    }
    let mut total = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let p = points
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, prec)| *prec)
            .fold(0.0, f64::max);
        total += p;
    }
    total / 101.0
}

/// (AP over the ten thresholds, AP50, AP75), averaged over classes that have
/// ground truth; `None` when no class has any.
pub fn oracle_map(dets: &[Detection], gts: &[GroundTruth]) -> Option<(f64, f64, f64)> {
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.class_id).collect();
    if classes.is_empty() {
        return None;
    }
    let mut per_class = Vec::new();
    for c in &classes {
        let d: Vec<&Detection> = dets.iter().filter(|d| d.class_id == *c).collect();
        let g: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == *c).collect();
        let thr: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
        let aps: Vec<f64> = thr.iter().map(|t| oracle_ap(&d, &g, *t)).collect();
        per_class.push((
            aps.iter().sum::<f64>() / 10.0,
            oracle_ap(&d, &g, 0.5),
            oracle_ap(&d, &g, 0.75),
        ));
    }
    let n = per_class.len() as f64;
    Some((
        per_class.iter().map(|p| p.0).sum::<f64>() / n,
        per_class.iter().map(|p| p.1).sum::<f64>() / n,
        per_class.iter().map(|p| p.2).sum::<f64>() / n,
    ))
}

fn random_box(rng: &mut impl Rng) -> BBox {
    let x = rng.gen_range(0.0..80.0);
    let y = rng.gen_range(0.0..80.0);
    let w = rng.gen_range(4.0..40.0);
    let h = rng.gen_range(4.0..40.0);
    BBox::from_xywh(x, y, w, h).unwrap()
}

fn jitter(b: &BBox, rng: &mut impl Rng, amount: f64) -> BBox {
    let mut c = b.corners();
    for v in &mut c {
        *v += rng.gen_range(-amount..amount);
    }
    BBox::from_points(c[0], c[1], c[2], c[3])
}

/// A small random instance: up to three images with at most five
/// detections and five ground truths each, two classes, and distinct
/// confidences. Many detections are jittered copies of ground truths so
/// that every threshold sees a mix of hits and misses.
pub fn micro_instance(rng: &mut impl Rng) -> (Vec<Detection>, Vec<GroundTruth>) {
    let n_images = rng.gen_range(1..=3);
    let mut confs: Vec<u32> = (1..=1000).collect();
    confs.shuffle(rng);
    let mut confs = confs.into_iter();
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for i in 0..n_images {
        let id = format!("img{i}");
        let n_gt = rng.gen_range(0..=5);
        let image_gts: Vec<GroundTruth> = (0..n_gt)
            .map(|_| GroundTruth::new(id.clone(), random_box(rng), rng.gen_range(0..2)))
            .collect();
        let n_det = rng.gen_range(0..=5);
        for _ in 0..n_det {
            let (bbox, class) = match image_gts.choose(rng) {
                Some(g) if rng.gen_bool(0.7) => {
                    let amount = rng.gen_range(0.5..8.0);
                    let class = if rng.gen_bool(0.9) {
                        g.class_id
                    } else {
                        1 - g.class_id
                    };
                    (jitter(&g.bbox, rng, amount), class)
                }
                _ => (random_box(rng), rng.gen_range(0..2)),
            };
            let conf = f64::from(confs.next().unwrap()) / 1000.0;
            dets.push(Detection::new(id.clone(), bbox, class, conf).unwrap());
        }
        gts.extend(image_gts);
    }
    (dets, gts)
}

/// Groups detections by (image, class) for containment checks.
pub fn by_group(dets: &[Detection]) -> BTreeMap<(String, u32), Vec<&Detection>> {
    let mut m: BTreeMap<(String, u32), Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        m.entry((d.image_id.clone(), d.class_id))
            .or_default()
            .push(d);
    }
    m
}
