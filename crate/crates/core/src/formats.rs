//! On-disk record formats: YOLO label lines and the detection/ground-truth
//! JSON records.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Detector output: a class-tagged box with a confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionRecord", into = "DetectionRecord")]
pub struct Detection {
    pub image_id: String,
    pub bbox: BBox,
    pub class_id: u32,
    pub confidence: f64,
}

/// Ground-truth annotation: a class-tagged box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthRecord", into = "GroundTruthRecord")]
pub struct GroundTruth {
    pub image_id: String,
    pub bbox: BBox,
    pub class_id: u32,
}

impl Detection {
    pub fn new(
        image_id: impl Into<String>,
        bbox: BBox,
        class_id: u32,
        confidence: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::DegenerateBox(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            class_id,
            confidence,
        })
    }
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, bbox: BBox, class_id: u32) -> Self {
        Self {
            image_id: image_id.into(),
            bbox,
            class_id,
        }
    }

    /// Converts to a detection with the given confidence.
    pub fn as_detection(&self, confidence: f64) -> Detection {
        Detection {
            image_id: self.image_id.clone(),
            bbox: self.bbox,
            class_id: self.class_id,
            confidence: confidence.clamp(0.0, 1.0),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    image_id: String,
    class_id: u32,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    confidence: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthRecord {
    image_id: String,
    class_id: u32,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<DetectionRecord> for Detection {
    type Error = String;

    fn try_from(r: DetectionRecord) -> Result<Self, String> {
        let bbox = BBox::new(r.x1, r.y1, r.x2, r.y2).map_err(|e| e.to_string())?;
        Detection::new(r.image_id, bbox, r.class_id, r.confidence).map_err(|e| e.to_string())
    }
}

impl From<Detection> for DetectionRecord {
    fn from(d: Detection) -> Self {
        let [x1, y1, x2, y2] = d.bbox.corners();
        Self {
            image_id: d.image_id,
            class_id: d.class_id,
            x1,
            y1,
            x2,
            y2,
            confidence: d.confidence,
        }
    }
}

impl TryFrom<GroundTruthRecord> for GroundTruth {
    type Error = String;

    fn try_from(r: GroundTruthRecord) -> Result<Self, String> {
        let bbox = BBox::new(r.x1, r.y1, r.x2, r.y2).map_err(|e| e.to_string())?;
        Ok(GroundTruth::new(r.image_id, bbox, r.class_id))
    }
}

impl From<GroundTruth> for GroundTruthRecord {
    fn from(g: GroundTruth) -> Self {
        let [x1, y1, x2, y2] = g.bbox.corners();
        Self {
            image_id: g.image_id,
            class_id: g.class_id,
            x1,
            y1,
            x2,
            y2,
        }
    }
}

fn read_json_array<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

fn write_json_array<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(items).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a detection-results JSON array. An empty file is an empty set.
pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    read_json_array(path)
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    write_json_array(path, dets)
}

/// Reads the JSON ground-truth mirror (detection schema without confidence).
pub fn read_groundtruth_json(path: &Path) -> Result<Vec<GroundTruth>> {
    read_json_array(path)
}

pub fn write_groundtruth_json(path: &Path, gts: &[GroundTruth]) -> Result<()> {
    write_json_array(path, gts)
}

/// One YOLO label line: class id and center/size normalized by the image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloLabel {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloLabel {
    pub fn from_bbox(class_id: u32, bbox: &BBox, image_w: f64, image_h: f64) -> Self {
        let (cx, cy) = bbox.center();
        Self {
            class_id,
            cx: cx / image_w,
            cy: cy / image_h,
            w: bbox.width() / image_w,
            h: bbox.height() / image_h,
        }
    }

    pub fn to_bbox(&self, image_w: f64, image_h: f64) -> Result<BBox> {
        BBox::from_center(
            self.cx * image_w,
            self.cy * image_h,
            self.w * image_w,
            self.h * image_h,
        )
    }

    /// `class cx cy w h` with six decimals, no trailing newline.
    pub fn to_line(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class_id, self.cx, self.cy, self.w, self.h
        )
    }

    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        }
        let class_id = fields[0]
            .parse::<u32>()
            .map_err(|e| format!("class id `{}`: {e}", fields[0]))?;
        let mut vals = [0.0; 4];
        for (v, f) in vals.iter_mut().zip(&fields[1..]) {
            *v = f.parse::<f64>().map_err(|e| format!("value `{f}`: {e}"))?;
            if !(0.0..=1.0).contains(v) {
                return Err(format!("value `{f}` outside [0, 1]"));
            }
        }
        Ok(Self {
            class_id,
            cx: vals[0],
            cy: vals[1],
            w: vals[2],
            h: vals[3],
        })
    }
}

/// Renders a full label file, one newline-terminated line per label.
pub fn format_yolo_labels(labels: &[YoloLabel]) -> String {
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{}", l.to_line());
    }
    out
}

/// Parses label file contents; `path` is used only for error context.
pub fn parse_yolo_labels(path: &Path, text: &str) -> Result<Vec<YoloLabel>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| YoloLabel::parse_line(l).map_err(|m| Error::parse(path, i + 1, m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn denormalizes_against_image_size() {
        let l = YoloLabel::parse_line("0 0.5 0.5 0.5 0.5").unwrap();
        assert_eq!(
            l.to_bbox(640.0, 480.0).unwrap(),
            BBox::new(160.0, 120.0, 480.0, 360.0).unwrap()
        );
    }

    #[test]
    fn label_line_format() {
        let b = BBox::new(0.0, 0.0, 320.0, 240.0).unwrap();
        let l = YoloLabel::from_bbox(3, &b, 640.0, 480.0);
        assert_eq!(l.to_line(), "3 0.250000 0.250000 0.500000 0.500000");
        assert_eq!(format_yolo_labels(&[l, l]).lines().count(), 2);
        assert!(format_yolo_labels(&[l]).ends_with('\n'));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_yolo_labels(
            Path::new("x.txt"),
            "0 0.1 0.1 0.1 0.1\n\n1 0.1 zz 0.1 0.1\n",
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(YoloLabel::parse_line("0 0.1 0.1 0.1").is_err());
        assert!(YoloLabel::parse_line("-1 0.1 0.1 0.1 0.1").is_err());
        assert!(YoloLabel::parse_line("0 1.5 0.1 0.1 0.1").is_err());
    }

    #[test]
    fn empty_files_are_empty_sets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        std::fs::write(&p, "").unwrap();
        assert!(read_detections(&p).unwrap().is_empty());
        std::fs::write(&p, "[]").unwrap();
        assert!(read_detections(&p).unwrap().is_empty());
        assert!(parse_yolo_labels(&p, "").unwrap().is_empty());
    }

    #[test]
    fn json_rejects_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        std::fs::write(
            &p,
            r#"[{"image_id":"a","class_id":0,"x1":5,"y1":0,"x2":1,"y2":1,"confidence":0.5}]"#,
        )
        .unwrap();
        assert!(matches!(read_detections(&p), Err(Error::Parse { .. })));
        std::fs::write(
            &p,
            r#"[{"image_id":"a","class_id":0,"x1":0,"y1":0,"x2":1,"y2":1,"confidence":1.5}]"#,
        )
        .unwrap();
        assert!(read_detections(&p).is_err());
    }

    proptest! {
        #[test]
        fn detection_json_round_trip_is_lossless(
            raw in prop::collection::vec((0.0..1e4f64, 0.0..1e4f64, 0.0..1e3f64, 0.0..1e3f64, 0u32..10, 0.0..=1.0f64), 0..20)
        ) {
            let dets: Vec<Detection> = raw.iter().enumerate().map(|(i, &(x, y, w, h, c, s))| {
                Detection::new(format!("img{i}"), BBox::new(x, y, x + w, y + h).unwrap(), c, s).unwrap()
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("d.json");
            write_detections(&p, &dets).unwrap();
            prop_assert_eq!(read_detections(&p).unwrap(), dets);
        }

        #[test]
        fn yolo_round_trip_within_1e6(
            iw in 16u32..2000, ih in 16u32..2000,
            fx in 0.0..1.0f64, fy in 0.0..1.0f64, fw in 0.0..1.0f64, fh in 0.0..1.0f64,
        ) {
            let (iw, ih) = (f64::from(iw), f64::from(ih));
            let x1 = (fx * iw).floor();
            let y1 = (fy * ih).floor();
            let b = BBox::new(x1, y1, x1 + (fw * (iw - x1)).floor(), y1 + (fh * (ih - y1)).floor()).unwrap();
            let label = YoloLabel::from_bbox(1, &b, iw, ih);
            let back = YoloLabel::parse_line(&label.to_line()).unwrap();
            for (a, z) in [(back.cx, label.cx), (back.cy, label.cy), (back.w, label.w), (back.h, label.h)] {
                prop_assert!((a - z).abs() <= 1e-6);
            }
        }
    }
}
