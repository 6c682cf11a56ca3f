//! Weighted boxes fusion for ensembling the outputs of several models.
//!
//! Instead of suppressing overlapping boxes, clusters of overlapping boxes
//! (same image, same class, at most one box per model) are averaged with
//! confidence x model-weight weights.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::cmp_detections;
use crate::formats::Detection;
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfScaling {
    None,
    /// Multiply by `min(members, models) / models`.
    #[default]
    CountScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub iou_thr: f64,
    /// Detections below this confidence are dropped before fusion.
    pub skip_box_thr: f64,
    /// One positive weight per model; empty means all ones.
    pub model_weights: Vec<f64>,
    pub conf_scaling: ConfScaling,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            iou_thr: 0.55,
            skip_box_thr: 0.0,
            model_weights: Vec::new(),
            conf_scaling: ConfScaling::CountScaled,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_thr > 0.0 && self.iou_thr < 1.0) {
            return Err(Error::config(
                "fusion.iou_thr",
                format!("must lie in (0, 1), got {}", self.iou_thr),
            ));
        }
        if !(0.0..=1.0).contains(&self.skip_box_thr) {
            return Err(Error::config("fusion.skip_box_thr", "must lie in [0, 1]"));
        }
        if let Some(w) = self
            .model_weights
            .iter()
            .find(|w| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::config(
                "fusion.model_weights",
                format!("weights must be positive, got {w}"),
            ));
        }
        Ok(())
    }

    fn weights_for(&self, models: usize) -> Result<Vec<f64>> {
        if self.model_weights.is_empty() {
            return Ok(vec![1.0; models]);
        }
        if self.model_weights.len() != models {
            return Err(Error::config(
                "fusion.model_weights",
                format!(
                    "{} weights given for {models} models",
                    self.model_weights.len()
                ),
            ));
        }
        Ok(self.model_weights.clone())
    }
}

struct Member<'a> {
    det: &'a Detection,
    model: usize,
    weight: f64,
}

struct Cluster<'a> {
    members: Vec<Member<'a>>,
    fused: BBox,
}

/// Weighted mean written as an offset from the first value, so a single
/// member reproduces its value bit for bit.
fn weighted_mean(values: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let mut it = values.clone();
    let Some((first, _)) = it.next() else {
        return 0.0;
    };
    let total: f64 = values.clone().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return first;
    }
    first + values.map(|(v, w)| w * (v - first)).sum::<f64>() / total
}

impl Cluster<'_> {
    fn refresh(&mut self) {
        let coord = |i: usize| {
            weighted_mean(
                self.members
                    .iter()
                    .map(move |m| (m.det.bbox.corners()[i], m.det.confidence * m.weight)),
            )
        };
        // members' coordinates are ordered, so their weighted means are too
        self.fused = BBox::from_points(coord(0), coord(1), coord(2), coord(3));
    }

    fn confidence(&self, models: usize, scaling: ConfScaling) -> f64 {
        let conf = weighted_mean(self.members.iter().map(|m| (m.det.confidence, m.weight)));
        match scaling {
            ConfScaling::None => conf,
            ConfScaling::CountScaled => {
                let n = self.members.len().min(models);
                if n == models {
                    conf
                } else {
                    conf * n as f64 / models as f64
                }
            }
        }
    }
}

fn fuse_group(members: Vec<Member<'_>>, cfg: &FusionConfig, models: usize) -> Vec<Detection> {
    let mut clusters: Vec<Cluster<'_>> = Vec::new();
    for m in members {
        let slot = clusters.iter().position(|c| {
            c.members.iter().all(|o| o.model != m.model) && c.fused.iou(&m.det.bbox) >= cfg.iou_thr
        });
        match slot {
            Some(i) => {
                clusters[i].members.push(m);
                clusters[i].refresh();
            }
            None => {
                let fused = m.det.bbox;
                clusters.push(Cluster {
                    members: vec![m],
                    fused,
                });
            }
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let seed = c.members[0].det;
            Detection {
                image_id: seed.image_id.clone(),
                bbox: c.fused,
                class_id: seed.class_id,
                confidence: c.confidence(models, cfg.conf_scaling).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// Fuses per-model detection lists into one list, sorted by fused confidence
/// (descending) with ties broken by image, class and box.
///
/// A detection joins the first cluster (in creation order) that has no box
/// from the same model and whose current fused box overlaps it with IoU at
/// least `iou_thr`; otherwise it seeds a new cluster. Detections are visited
/// in descending confidence.
pub fn fuse(per_model: &[Vec<Detection>], cfg: &FusionConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    if per_model.is_empty() {
        return Err(Error::config(
            "fusion",
            "at least one model's detections are required",
        ));
    }
    let models = per_model.len();
    let weights = cfg.weights_for(models)?;

    let mut groups: BTreeMap<(&str, u32), Vec<Member<'_>>> = BTreeMap::new();
    for (model, dets) in per_model.iter().enumerate() {
        for det in dets.iter().filter(|d| d.confidence >= cfg.skip_box_thr) {
            groups
                .entry((det.image_id.as_str(), det.class_id))
                .or_default()
                .push(Member {
                    det,
                    model,
                    weight: weights[model],
                });
        }
    }

    let mut fused: Vec<Detection> = groups
        .into_par_iter()
        .flat_map_iter(|(_, mut members)| {
            members.sort_by(|a, b| cmp_detections(a.det, b.det).then(a.model.cmp(&b.model)));
            fuse_group(members, cfg, models)
        })
        .collect();
    fused.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.image_id.cmp(&b.image_id))
            .then(a.class_id.cmp(&b.class_id))
            .then_with(|| cmp_detections(a, b))
    });
    Ok(fused)
}
