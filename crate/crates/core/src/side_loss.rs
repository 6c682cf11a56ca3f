//! Side loss: a penalty on the parts of a predicted box that overshoot its
//! ground-truth box, plus the four-term loss weighting used alongside it.
//!
//! Everything here is evaluated in absolute pixel coordinates of decoded
//! boxes. Consumers that train on normalized coordinates must scale the
//! penalties themselves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Per-side overshoot of a prediction beyond its ground truth.
///
/// All four are zero exactly when the prediction lies inside the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SidePenalties {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl SidePenalties {
    pub fn sum(&self) -> f64 {
        self.left + self.top + self.right + self.bottom
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.left, self.top, self.right, self.bottom]
    }
}

pub fn side_penalties(pred: &BBox, gt: &BBox) -> SidePenalties {
    SidePenalties {
        left: (gt.x1() - pred.x1()).max(0.0),
        top: (gt.y1() - pred.y1()).max(0.0),
        right: (pred.x2() - gt.x2()).max(0.0),
        bottom: (pred.y2() - gt.y2()).max(0.0),
    }
}

pub fn side_loss(pred: &BBox, gt: &BBox) -> f64 {
    side_penalties(pred, gt).sum()
}

/// Subgradient of [`side_loss`] with respect to `(x1, y1, x2, y2)` of `pred`.
///
/// A component is -1 (left/top) or +1 (right/bottom) while its penalty is
/// strictly positive, and 0 otherwise, including exactly at the kink.
pub fn side_loss_subgradient(pred: &BBox, gt: &BBox) -> [f64; 4] {
    let active = |arg: f64, sign: f64| if arg > 0.0 { sign } else { 0.0 };
    [
        active(gt.x1() - pred.x1(), -1.0),
        active(gt.y1() - pred.y1(), -1.0),
        active(pred.x2() - gt.x2(), 1.0),
        active(pred.y2() - gt.y2(), 1.0),
    ]
}

/// Mean side loss over matched `(pred, gt)` pairs; 0 for an empty batch.
pub fn side_loss_mean(pairs: &[(BBox, BBox)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|(p, g)| side_loss(p, g)).sum::<f64>() / pairs.len() as f64
}

/// Detector loss hyperparameters from which the term weights are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossHyperparams {
    pub box_gain: f64,
    pub obj_gain: f64,
    pub cls_gain: f64,
    /// Number of detection layers.
    pub nl: u32,
    pub imgsize: f64,
    pub num_cls: u32,
}

impl Default for LossHyperparams {
    fn default() -> Self {
        Self {
            box_gain: 0.5,
            obj_gain: 1.0,
            cls_gain: 0.5,
            nl: 3,
            imgsize: 640.0,
            num_cls: 4,
        }
    }
}

impl LossHyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("loss.box_gain", self.box_gain),
            ("loss.obj_gain", self.obj_gain),
            ("loss.cls_gain", self.cls_gain),
            ("loss.imgsize", self.imgsize),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if self.nl < 1 {
            return Err(Error::config("loss.nl", "must be at least 1"));
        }
        if self.num_cls < 1 {
            return Err(Error::config("loss.num_cls", "must be at least 1"));
        }
        Ok(())
    }
}

/// Weights of the box, objectness, classification and side terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_box: f64,
    pub lambda_obj: f64,
    pub lambda_cls: f64,
    pub lambda_side: f64,
}

/// Derives the term weights. The class term is scaled against 80 classes
/// verbatim, whatever `num_cls` is; the side weight is always the box weight
/// divided by 30.
pub fn loss_weights(h: &LossHyperparams) -> LossWeights {
    let layer_scale = 3.0 / f64::from(h.nl);
    let lambda_box = h.box_gain * layer_scale;
    let lambda_obj = h.obj_gain * ((h.imgsize / 640.0).powi(2) * layer_scale);
    let lambda_cls = (h.cls_gain * f64::from(h.num_cls) / 80.0) * layer_scale;
    LossWeights {
        lambda_box,
        lambda_obj,
        lambda_cls,
        lambda_side: lambda_box / 30.0,
    }
}

pub fn total_loss(
    box_loss: f64,
    obj_loss: f64,
    cls_loss: f64,
    side_loss_val: f64,
    w: &LossWeights,
) -> Result<f64> {
    for (name, v) in [
        ("box", box_loss),
        ("obj", obj_loss),
        ("cls", cls_loss),
        ("side", side_loss_val),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    Ok(w.lambda_box * box_loss
        + w.lambda_obj * obj_loss
        + w.lambda_cls * cls_loss
        + w.lambda_side * side_loss_val)
}

/// Fixed-point rendering with at most seven decimals and at least one.
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.7}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

fn fmt4(v: [f64; 4]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| format_value(x)).collect();
    format!("({})", parts.join(", "))
}

/// Reference cases for cross-framework porting: (name, pred, gt).
pub fn reference_cases() -> Vec<(&'static str, BBox, BBox)> {
    let gt = BBox::from_points(20.0, 20.0, 40.0, 40.0);
    vec![
        ("over", BBox::from_points(10.0, 10.0, 50.0, 50.0), gt),
        ("under", BBox::from_points(25.0, 25.0, 35.0, 35.0), gt),
        ("wide", BBox::from_points(15.0, 20.0, 45.0, 40.0), gt),
        ("exact", gt, gt),
        ("expand-3", BBox::from_points(17.0, 17.0, 43.0, 43.0), gt),
        ("shrink-3", BBox::from_points(23.0, 23.0, 37.0, 37.0), gt),
        ("shifted", BBox::from_points(5.0, 22.0, 38.0, 47.0), gt),
        ("disjoint", BBox::from_points(60.0, 0.0, 70.0, 10.0), gt),
    ]
}

/// Deterministic text report of penalties, losses, subgradients and the
/// weight table for a few hyperparameter settings.
pub fn reference_report() -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# side loss reference values (absolute pixel coordinates)"
    );
    let _ = writeln!(out, "case\tpred\tgt\tpenalties\tloss\tsubgradient\tiou");
    for (name, pred, gt) in reference_cases() {
        let _ = writeln!(
            out,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}",
            fmt4(pred.corners()),
            fmt4(gt.corners()),
            fmt4(side_penalties(&pred, &gt).as_array()),
            format_value(side_loss(&pred, &gt)),
            fmt4(side_loss_subgradient(&pred, &gt)),
            format_value(pred.iou(&gt)),
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "# loss weights");
    let _ = writeln!(
        out,
        "box\tobj\tcls\tnl\timgsize\tnum_cls\tlambda_box\tlambda_obj\tlambda_cls\tlambda_side"
    );
    let d = LossHyperparams::default();
    let settings = [
        d,
        LossHyperparams { num_cls: 1, ..d },
        LossHyperparams { num_cls: 5, ..d },
        LossHyperparams { num_cls: 80, ..d },
        LossHyperparams {
            nl: 6,
            num_cls: 80,
            ..d
        },
        LossHyperparams {
            imgsize: 1280.0,
            ..d
        },
    ];
    for h in settings {
        let w = loss_weights(&h);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            format_value(h.box_gain),
            format_value(h.obj_gain),
            format_value(h.cls_gain),
            h.nl,
            format_value(h.imgsize),
            h.num_cls,
            format_value(w.lambda_box),
            format_value(w.lambda_obj),
            format_value(w.lambda_cls),
            format_value(w.lambda_side),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let gt = b(20., 20., 40., 40.);
        assert_eq!(
            side_penalties(&b(10., 10., 50., 50.), &gt).as_array(),
            [10., 10., 10., 10.]
        );
        assert_eq!(
            side_penalties(&b(25., 25., 35., 35.), &gt).as_array(),
            [0.; 4]
        );
        assert_eq!(
            side_penalties(&b(15., 20., 45., 40.), &gt).as_array(),
            [5., 0., 5., 0.]
        );
    }

    #[test]
    fn loss_examples() {
        let gt = b(20., 20., 40., 40.);
        assert_eq!(side_loss(&b(10., 10., 50., 50.), &gt), 40.0);
        assert_eq!(side_loss(&gt, &gt), 0.0);
        for d in [0.0, 0.5, 3.0, 17.25] {
            assert_eq!(side_loss(&gt.expand(d).unwrap(), &gt), 4.0 * d);
        }
    }

    #[test]
    fn subgradient_examples() {
        let gt = b(20., 20., 40., 40.);
        assert_eq!(
            side_loss_subgradient(&b(10., 10., 50., 50.), &gt),
            [-1., -1., 1., 1.]
        );
        assert_eq!(side_loss_subgradient(&b(25., 25., 35., 35.), &gt), [0.; 4]);
        assert_eq!(
            side_loss_subgradient(&b(15., 20., 45., 40.), &gt),
            [-1., 0., 1., 0.]
        );
        // kinks resolve to 0
        assert_eq!(side_loss_subgradient(&gt, &gt), [0.; 4]);
    }

    #[test]
    fn mean_over_pairs() {
        let gt = b(0., 0., 10., 10.);
        let pairs = [(gt.expand(1.).unwrap(), gt), (gt, gt)];
        assert_eq!(side_loss_mean(&pairs), 2.0);
        assert_eq!(side_loss_mean(&[]), 0.0);
    }

    #[test]
    fn weight_examples() {
        let w = loss_weights(&LossHyperparams::default());
        assert_eq!(w.lambda_box, 0.5);
        assert_eq!(w.lambda_obj, 1.0);
        assert!((w.lambda_cls - 0.025).abs() < 1e-15);
        assert_eq!(w.lambda_side, 0.5 / 30.0);

        let w = loss_weights(&LossHyperparams {
            nl: 6,
            num_cls: 80,
            ..Default::default()
        });
        assert_eq!(w.lambda_box, 0.25);
        assert_eq!(w.lambda_obj, 0.5);
        assert_eq!(w.lambda_cls, 0.25);
        assert_eq!(w.lambda_side, 0.25 / 30.0);

        let w = loss_weights(&LossHyperparams {
            imgsize: 1280.0,
            ..Default::default()
        });
        assert_eq!(w.lambda_obj, 4.0);
    }

    #[test]
    fn total_loss_examples() {
        let w = loss_weights(&LossHyperparams::default());
        assert_eq!(total_loss(0., 0., 0., 0., &w).unwrap(), 0.0);
        let all_ones = total_loss(1., 1., 1., 1., &w).unwrap();
        assert!((all_ones - (0.5 + 1.0 + 0.025 + 0.5 / 30.0)).abs() < 1e-12);
        assert!((all_ones - 1.5416667).abs() < 1e-7);
        assert!((total_loss(0., 0., 0., 30., &w).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            total_loss(f64::NAN, 0., 0., 0., &w),
            Err(Error::NonFinite("box"))
        ));
        assert!(total_loss(0., 0., 0., f64::INFINITY, &w).is_err());
    }

    #[test]
    fn hyperparam_validation() {
        assert!(LossHyperparams::default().validate().is_ok());
        let bad = LossHyperparams {
            nl: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = LossHyperparams {
            box_gain: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn report_contains_default_weight_row() {
        let r = reference_report();
        assert!(r.contains("0.5\t1.0\t0.025\t0.0166667"), "{r}");
        assert!(r.contains("over\t(10.0, 10.0, 50.0, 50.0)\t(20.0, 20.0, 40.0, 40.0)\t(10.0, 10.0, 10.0, 10.0)\t40.0\t(-1.0, -1.0, 1.0, 1.0)"));
        assert_eq!(r, reference_report());
        assert_eq!(format_value(40.0), "40.0");
        assert_eq!(format_value(-1.0), "-1.0");
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.0..60.0f64, 0.0..60.0f64)
            .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn nonnegative_and_zero_iff_contained(p in arb_box(), g in arb_box()) {
            let l = side_loss(&p, &g);
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, g.contains(&p));
        }

        #[test]
        fn translation_invariant(p in arb_box(), g in arb_box(), dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
            let moved = side_loss(&p.translate(dx, dy), &g.translate(dx, dy));
            prop_assert!((moved - side_loss(&p, &g)).abs() <= 1e-9);
        }

        #[test]
        fn nondecreasing_under_outward_moves(p in arb_box(), g in arb_box(), step in 0.0..20.0f64) {
            let base = side_loss(&p, &g);
            let c = p.corners();
            let moved = [
                BBox::new(c[0] - step, c[1], c[2], c[3]).unwrap(),
                BBox::new(c[0], c[1] - step, c[2], c[3]).unwrap(),
                BBox::new(c[0], c[1], c[2] + step, c[3]).unwrap(),
                BBox::new(c[0], c[1], c[2], c[3] + step).unwrap(),
            ];
            for m in moved {
                prop_assert!(side_loss(&m, &g) >= base);
            }
        }
    }
}
