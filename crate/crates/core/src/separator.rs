//! Rule-based compound figure separation by recursive whitespace cuts.
//!
//! The background colour is the most common border pixel. Pixels further
//! than `background_tolerance` from it in any channel are content. A region
//! is tightened to its content, then split along every background band of at
//! least `min_gap` pixels on the axis whose widest band is wider (rows win
//! ties). Splitting recurses until no band remains or `max_depth` is reached.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::Detection;
use crate::geometry::BBox;

/// Class id of every separator output.
pub const SUBFIGURE_CLASS: u32 = 0;

/// Default extraction confidence threshold.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutParams {
    /// Per-channel distance from the background, as a fraction of 255.
    pub background_tolerance: f64,
    pub min_gap: u32,
    /// Leaves narrower or shorter than this are dropped.
    pub min_region: u32,
    pub max_depth: u32,
    /// Confidence assigned to every region.
    pub fixed_confidence: f64,
}

impl Default for CutParams {
    fn default() -> Self {
        Self {
            background_tolerance: 12.0 / 255.0,
            min_gap: 3,
            min_region: 32,
            max_depth: 6,
            fixed_confidence: 0.9,
        }
    }
}

impl CutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.background_tolerance > 0.0 && self.background_tolerance < 1.0) {
            return Err(Error::config(
                "cut.background_tolerance",
                format!("must lie in (0, 1), got {}", self.background_tolerance),
            ));
        }
        for (key, v) in [
            ("cut.min_gap", self.min_gap),
            ("cut.min_region", self.min_region),
            ("cut.max_depth", self.max_depth),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(self.fixed_confidence > 0.0 && self.fixed_confidence <= 1.0) {
            return Err(Error::config("cut.fixed_confidence", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Most frequent border colour; the smallest packed value wins ties.
pub fn border_mode(image: &RgbImage) -> Rgb<u8> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Rgb([255, 255, 255]);
    }
    let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
    let mut add = |x, y| *counts.entry(image.get_pixel(x, y).0).or_default() += 1;
    for x in 0..w {
        add(x, 0);
        if h > 1 {
            add(x, h - 1);
        }
    }
    for y in 1..h.saturating_sub(1) {
        add(0, y);
        if w > 1 {
            add(w - 1, y);
        }
    }
    let (color, _) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("border is non-empty");
    Rgb(color)
}

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

struct ContentMask {
    width: u32,
    content: Vec<bool>,
}

impl ContentMask {
    fn new(image: &RgbImage, background: Rgb<u8>, tolerance: f64) -> Self {
        let limit = tolerance * 255.0;
        let content = image
            .pixels()
            .map(|p| {
                p.0.iter()
                    .zip(background.0)
                    .any(|(&c, b)| f64::from(c.abs_diff(b)) > limit)
            })
            .collect();
        Self {
            width: image.width(),
            content,
        }
    }

    fn at(&self, x: u32, y: u32) -> bool {
        self.content[(y * self.width + x) as usize]
    }

    /// Content counts per row and per column of `r`.
    fn profiles(&self, r: Rect) -> (Vec<u32>, Vec<u32>) {
        let mut rows = vec![0; (r.y1 - r.y0) as usize];
        let mut cols = vec![0; (r.x1 - r.x0) as usize];
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                if self.at(x, y) {
                    rows[(y - r.y0) as usize] += 1;
                    cols[(x - r.x0) as usize] += 1;
                }
            }
        }
        (rows, cols)
    }

    fn tighten(&self, r: Rect) -> Option<Rect> {
        let (rows, cols) = self.profiles(r);
        let first = |p: &[u32]| p.iter().position(|&c| c > 0);
        let last = |p: &[u32]| p.iter().rposition(|&c| c > 0);
        Some(Rect {
            x0: r.x0 + first(&cols)? as u32,
            y0: r.y0 + first(&rows)? as u32,
            x1: r.x0 + last(&cols)? as u32 + 1,
            y1: r.y0 + last(&rows)? as u32 + 1,
        })
    }
}

/// Interior runs of empty profile entries at least `min_gap` long, as
/// half-open `(start, end)` offsets.
fn gaps(profile: &[u32], min_gap: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &c) in profile.iter().enumerate() {
        match (c == 0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if s > 0 && (i - s) as u32 >= min_gap {
                    out.push((s as u32, i as u32));
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn widest(gaps: &[(u32, u32)]) -> u32 {
    gaps.iter().map(|(s, e)| e - s).max().unwrap_or(0)
}

fn split(mask: &ContentMask, region: Rect, depth: u32, p: &CutParams, leaves: &mut Vec<Rect>) {
    let Some(r) = mask.tighten(region) else {
        return;
    };
    if depth >= p.max_depth {
        leaves.push(r);
        return;
    }
    let (rows, cols) = mask.profiles(r);
    let (row_gaps, col_gaps) = (gaps(&rows, p.min_gap), gaps(&cols, p.min_gap));
    if row_gaps.is_empty() && col_gaps.is_empty() {
        leaves.push(r);
        return;
    }
    let cut_rows = widest(&row_gaps) >= widest(&col_gaps);
    let (cuts, extent) = if cut_rows {
        (row_gaps, r.y1 - r.y0)
    } else {
        (col_gaps, r.x1 - r.x0)
    };
    let mut bounds = vec![0];
    for (s, e) in cuts {
        bounds.push(s);
        bounds.push(e);
    }
    bounds.push(extent);
    for piece in bounds.chunks(2) {
        let sub = if cut_rows {
            Rect {
                y0: r.y0 + piece[0],
                y1: r.y0 + piece[1],
                ..r
            }
        } else {
            Rect {
                x0: r.x0 + piece[0],
                x1: r.x0 + piece[1],
                ..r
            }
        };
        split(mask, sub, depth + 1, p, leaves);
    }
}

/// Separates one compound figure into subfigure detections.
pub fn separate(image: &RgbImage, image_id: &str, params: &CutParams) -> Vec<Detection> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let mask = ContentMask::new(image, border_mode(image), params.background_tolerance);
    let mut leaves = Vec::new();
    split(
        &mask,
        Rect {
            x0: 0,
            y0: 0,
            x1: w,
            y1: h,
        },
        0,
        params,
        &mut leaves,
    );
    leaves
        .into_iter()
        .filter(|r| r.x1 - r.x0 >= params.min_region && r.y1 - r.y0 >= params.min_region)
        .map(|r| Detection {
            image_id: image_id.to_string(),
            bbox: BBox::from_points(
                f64::from(r.x0),
                f64::from(r.y0),
                f64::from(r.x1),
                f64::from(r.y1),
            ),
            class_id: SUBFIGURE_CLASS,
            confidence: params.fixed_confidence,
        })
        .collect()
}

/// Decodes `path` and separates it; the image id is the file stem.
pub fn separate_file(path: &Path, params: &CutParams) -> Result<Vec<Detection>> {
    let image = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    Ok(separate(&image, &image_stem(path), params))
}

fn image_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// PNG and JPEG files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Separates every image in a directory, in file-name order.
pub fn separate_dir(dir: &Path, params: &CutParams) -> Result<Vec<Detection>> {
    params.validate()?;
    let files = list_images(dir)?;
    let per_image: Vec<Vec<Detection>> = files
        .par_iter()
        .map(|f| separate_file(f, params))
        .collect::<Result<_>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

/// Writes one PNG crop per detection with confidence at or above
/// `confidence_threshold`, named `{image_id}_{index:03}_c{class}_{conf:.3}.png`.
pub fn extract_crops(
    image: &RgbImage,
    detections: &[Detection],
    confidence_threshold: f64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (w, h) = image.dimensions();
    let mut written = Vec::new();
    for (i, det) in detections.iter().enumerate() {
        if det.confidence < confidence_threshold {
            continue;
        }
        let clamp = |v: f64, hi: u32| (v.round().max(0.0) as u32).min(hi);
        let (x0, y0) = (clamp(det.bbox.x1(), w), clamp(det.bbox.y1(), h));
        let (x1, y1) = (clamp(det.bbox.x2(), w), clamp(det.bbox.y2(), h));
        if x1 <= x0 || y1 <= y0 {
            continue;
        }
        let crop = image::imageops::crop_imm(image, x0, y0, x1 - x0, y1 - y0).to_image();
        let path = out_dir.join(format!(
            "{}_{i:03}_c{}_{:.3}.png",
            det.image_id, det.class_id, det.confidence
        ));
        crop.save(&path).map_err(|source| Error::Image {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

    fn fill(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, c: [u8; 3]) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                img.put_pixel(x, y, Rgb(c));
            }
        }
    }

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn blank_image_has_no_regions() {
        let img = RgbImage::from_pixel(200, 100, WHITE);
        assert!(separate(&img, "x", &CutParams::default()).is_empty());
    }

    #[test]
    fn single_rectangle_is_tightened() {
        let mut img = RgbImage::from_pixel(300, 200, WHITE);
        fill(&mut img, 70, 40, 120, 90, [30, 60, 90]);
        let dets = separate(&img, "x", &CutParams::default());
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, b(70., 40., 190., 130.));
        assert_eq!(dets[0].confidence, 0.9);
        assert_eq!(dets[0].image_id, "x");
    }

    #[test]
    fn two_squares_split_on_white_band() {
        let mut img = RgbImage::from_pixel(260, 140, WHITE);
        fill(&mut img, 20, 20, 100, 100, [10, 10, 10]);
        fill(&mut img, 140, 20, 100, 100, [10, 10, 10]);
        let dets = separate(&img, "x", &CutParams::default());
        assert_eq!(dets.len(), 2);
        let truth = [b(20., 20., 120., 120.), b(140., 20., 240., 120.)];
        for t in truth {
            assert!(dets.iter().any(|d| d.bbox.iou(&t) >= 0.95));
        }
    }

    #[test]
    fn grid_with_dark_background() {
        let mut img = RgbImage::from_pixel(240, 240, Rgb([0, 0, 0]));
        for (x, y) in [(10, 10), (130, 10), (10, 130), (130, 130)] {
            fill(&mut img, x, y, 100, 100, [200, 180, 160]);
        }
        let dets = separate(&img, "g", &CutParams::default());
        assert_eq!(dets.len(), 4);
        for (i, a) in dets.iter().enumerate() {
            for o in &dets[i + 1..] {
                assert_eq!(a.bbox.intersection_area(&o.bbox), 0.0);
            }
        }
    }

    #[test]
    fn small_regions_are_dropped_and_tolerance_respected() {
        let mut img = RgbImage::from_pixel(200, 200, WHITE);
        fill(&mut img, 10, 10, 20, 20, [0, 0, 0]);
        fill(&mut img, 60, 60, 100, 100, [0, 0, 0]);
        // faint noise within tolerance
        fill(&mut img, 0, 180, 200, 5, [250, 250, 250]);
        let dets = separate(&img, "x", &CutParams::default());
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, b(60., 60., 160., 160.));
    }

    #[test]
    fn depth_limit_keeps_merged_leaf() {
        let mut img = RgbImage::from_pixel(260, 140, WHITE);
        fill(&mut img, 20, 20, 100, 100, [10, 10, 10]);
        fill(&mut img, 140, 20, 100, 100, [10, 10, 10]);
        let p = CutParams {
            max_depth: 1,
            ..Default::default()
        };
        assert_eq!(separate(&img, "x", &p).len(), 2);
        let mut img3 = RgbImage::from_pixel(260, 260, WHITE);
        for (x, y) in [(20, 20), (140, 20), (20, 140)] {
            fill(&mut img3, x, y, 100, 100, [10, 10, 10]);
        }
        // one level only splits the rows; the top row stays merged
        assert_eq!(separate(&img3, "x", &p).len(), 2);
        assert_eq!(separate(&img3, "x", &CutParams::default()).len(), 3);
    }

    #[test]
    fn border_mode_picks_majority() {
        let mut img = RgbImage::from_pixel(10, 10, Rgb([7, 7, 7]));
        img.put_pixel(0, 0, WHITE);
        assert_eq!(border_mode(&img), Rgb([7, 7, 7]));
    }

    #[test]
    fn gap_detection() {
        assert_eq!(gaps(&[1, 0, 0, 0, 1, 0, 1], 3), vec![(1, 4)]);
        assert_eq!(gaps(&[1, 0, 0, 0, 1, 0, 1], 1), vec![(1, 4), (5, 6)]);
        // trailing empties are not interior
        assert_eq!(gaps(&[0, 0, 0, 1, 0, 0, 0], 1), vec![]);
    }

    #[test]
    fn params_validation() {
        assert!(CutParams::default().validate().is_ok());
        assert!(CutParams {
            background_tolerance: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(CutParams {
            min_gap: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn crops_respect_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_pixel(100, 100, Rgb([1, 2, 3]));
        let dets = vec![
            Detection::new("im", b(0., 0., 40., 30.), 0, 0.9).unwrap(),
            Detection::new("im", b(50., 50., 60., 70.), 0, 0.6).unwrap(),
        ];
        assert!(extract_crops(&img, &dets, 1.1, dir.path())
            .unwrap()
            .is_empty());
        assert_eq!(
            extract_crops(&img, &dets, DEFAULT_CONF_THRESHOLD, dir.path())
                .unwrap()
                .len(),
            1
        );
        let all = extract_crops(&img, &dets, 0.0, dir.path()).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(image::image_dimensions(&all[0]).unwrap(), (40, 30));
        assert_eq!(image::image_dimensions(&all[1]).unwrap(), (10, 20));
        assert!(all[0]
            .file_name()
            .unwrap()
            .to_str()
            .unwrap()
            .starts_with("im_000_c0_0.900"));
    }

    #[test]
    fn undecodable_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(matches!(
            separate_file(&p, &CutParams::default()),
            Err(Error::Image { .. })
        ));
    }
}
