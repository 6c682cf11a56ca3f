//! Pseudo compound figure simulation.
//!
//! A figure is built in three steps: [`sample_layout`] draws a row- or
//! column-stacked grid, [`fill_layout`] packs aspect-preserving images from a
//! class-restricted pool into each band, and [`compose`] renders the result
//! and pairs it with its annotations. [`generate_dataset`] drives a whole
//! batch and writes it in YOLO layout.

mod fill;
mod layout;
mod pool;

use std::collections::BTreeMap;
use std::path::Path;

use image::{imageops, Rgb, RgbImage};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fill::{fill_layout, Placement};
pub use layout::{
    aspect_ok, sample_layout, LayoutSpec, Orientation, OrientationChoice, BASE_EXTENT,
};
pub use pool::{synthetic_pools, ClassPools, ImagePool, ImageSource, PoolEntry, PoolMode};

use crate::error::{Error, Result};
use crate::formats::{format_yolo_labels, YoloLabel};
use crate::geometry::{BBox, ClassLabel, RngHandle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub total_figures: usize,
    pub intra_figures: usize,
    /// Inclusive band-count range.
    pub n_range: [u32; 2],
    /// Inclusive range of row heights / column widths, in pixels.
    pub band_extent_range: [u32; 2],
    pub gutter: u32,
    pub background: [u8; 3],
    pub max_layout_retries: u32,
    pub orientation: OrientationChoice,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            total_figures: 7000,
            intra_figures: 2000,
            n_range: [2, 5],
            band_extent_range: [128, 320],
            gutter: 4,
            background: [255, 255, 255],
            max_layout_retries: 100,
            orientation: OrientationChoice::Any,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intra_figures > self.total_figures {
            return Err(Error::config(
                "sim.intra_figures",
                format!(
                    "{} exceeds total_figures {}",
                    self.intra_figures, self.total_figures
                ),
            ));
        }
        let [n_lo, n_hi] = self.n_range;
        if !(2 <= n_lo && n_lo <= n_hi && n_hi <= 5) {
            return Err(Error::config(
                "sim.n_range",
                format!("must satisfy 2 <= lo <= hi <= 5, got {:?}", self.n_range),
            ));
        }
        let [e_lo, e_hi] = self.band_extent_range;
        if !(0 < e_lo && e_lo <= e_hi && e_hi <= BASE_EXTENT) {
            return Err(Error::config(
                "sim.band_extent_range",
                format!(
                    "must lie within (0, {BASE_EXTENT}], got {:?}",
                    self.band_extent_range
                ),
            ));
        }
        if self.gutter >= e_lo {
            return Err(Error::config(
                "sim.gutter",
                format!("must be smaller than the minimum band extent {e_lo}"),
            ));
        }
        if self.max_layout_retries == 0 {
            return Err(Error::config("sim.max_layout_retries", "must be positive"));
        }
        Ok(())
    }

    /// Whether figure `index` belongs to the intra-class quota. The quota is
    /// spread evenly over `0..total_figures`, so any full run contains exactly
    /// `intra_figures` intra figures.
    pub fn is_intra(&self, index: usize) -> bool {
        if self.total_figures == 0 {
            return false;
        }
        let (i, t) = (self.intra_figures as u128, self.total_figures as u128);
        let j = index as u128;
        (j + 1) * i / t > j * i / t
    }
}

/// A rendered pseudo compound figure with its annotations.
#[derive(Debug, Clone)]
pub struct ComposedFigure {
    pub canvas: RgbImage,
    pub placements: Vec<Placement>,
    pub layout: LayoutSpec,
    pub seed: u64,
    pub index: usize,
    /// `Some(class)` for intra-class figures.
    pub intra_class: Option<ClassLabel>,
}

impl ComposedFigure {
    pub fn canvas_box(&self) -> BBox {
        BBox::from_points(
            0.0,
            0.0,
            f64::from(self.layout.canvas_w),
            f64::from(self.layout.canvas_h),
        )
    }

    pub fn yolo_labels(&self) -> Vec<YoloLabel> {
        let (w, h) = (
            f64::from(self.layout.canvas_w),
            f64::from(self.layout.canvas_h),
        );
        self.placements
            .iter()
            .map(|p| YoloLabel::from_bbox(p.class.id, &p.bbox, w, h))
            .collect()
    }
}

/// Samples and fills one figure without rendering pixels.
pub fn plan_figure(
    cfg: &SimConfig,
    pools: &ClassPools,
    figure_index: usize,
    rng: &mut RngHandle,
) -> Result<(LayoutSpec, Vec<Placement>, Option<ClassLabel>)> {
    let (pool, intra_class) = if cfg.is_intra(figure_index) {
        let populated = pools.populated_classes();
        if populated.is_empty() {
            return Err(Error::config(
                "pool",
                "no populated class for an intra figure",
            ));
        }
        let class_id = populated[rng.gen_range(0..populated.len())];
        let pool = pools.intra_pool(class_id);
        let class = pools.classes()[class_id as usize].clone();
        (pool, Some(class))
    } else {
        (pools.multi_pool(), None)
    };
    let layout = sample_layout(cfg, rng)?;
    let placements = fill_layout(&layout, &pool, cfg.gutter, rng)?;
    Ok((layout, placements, intra_class))
}

pub fn render(
    layout: &LayoutSpec,
    placements: &[Placement],
    background: [u8; 3],
) -> Result<RgbImage> {
    let mut canvas = RgbImage::from_pixel(layout.canvas_w, layout.canvas_h, Rgb(background));
    for p in placements {
        let src = p.source.source.load()?;
        let resized = if src.dimensions() == (p.resized_w, p.resized_h) {
            (*src).clone()
        } else {
            // the non-generic DynamicImage path is compiled (and optimized) inside `image`
            image::DynamicImage::ImageRgb8((*src).clone())
                .resize_exact(p.resized_w, p.resized_h, imageops::FilterType::Triangle)
                .into_rgb8()
        };
        imageops::replace(
            &mut canvas,
            &resized,
            p.bbox.x1() as i64,
            p.bbox.y1() as i64,
        );
    }
    Ok(canvas)
}

/// Builds figure `figure_index`. The figure's random stream is derived from
/// `(seed, figure_index)` alone.
pub fn compose(
    cfg: &SimConfig,
    pools: &ClassPools,
    figure_index: usize,
    seed: u64,
) -> Result<ComposedFigure> {
    let mut rng = RngHandle::substream(seed, figure_index as u64);
    let (layout, placements, intra_class) = plan_figure(cfg, pools, figure_index, &mut rng)?;
    let canvas = render(&layout, &placements, cfg.background)?;
    Ok(ComposedFigure {
        canvas,
        placements,
        layout,
        seed,
        index: figure_index,
        intra_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub total_figures: usize,
    pub intra_figures: usize,
    pub multi_figures: usize,
    pub row_figures: usize,
    pub column_figures: usize,
    pub total_subfigures: usize,
    pub subfigures_by_class: BTreeMap<String, usize>,
    pub intra_figures_by_class: BTreeMap<String, usize>,
    pub classes: Vec<ClassLabel>,
    pub config: SimConfig,
}

struct FigureSummary {
    intra_class: Option<String>,
    orientation: Orientation,
    classes: Vec<String>,
}

/// Writes `images/{j:06}.png`, `labels/{j:06}.txt` and `manifest.json`
/// under `out_dir`. Output is a pure function of `(cfg, pools, seed)`.
pub fn generate_dataset(
    cfg: &SimConfig,
    pools: &ClassPools,
    out_dir: &Path,
    seed: u64,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let images_dir = out_dir.join("images");
    let labels_dir = out_dir.join("labels");
    if cfg.total_figures > 0 {
        for d in [&images_dir, &labels_dir] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
    } else {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }

    let summaries: Vec<FigureSummary> = (0..cfg.total_figures)
        .into_par_iter()
        .map(|j| {
            let fig = compose(cfg, pools, j, seed).map_err(|e| Error::Figure {
                index: j,
                source: Box::new(e),
            })?;
            let stem = format!("{j:06}");
            let img_path = images_dir.join(format!("{stem}.png"));
            fig.canvas
                .save_with_format(&img_path, image::ImageFormat::Png)
                .map_err(|source| Error::Image {
                    path: img_path.clone(),
                    source,
                })?;
            let label_path = labels_dir.join(format!("{stem}.txt"));
            std::fs::write(&label_path, format_yolo_labels(&fig.yolo_labels()))
                .map_err(|e| Error::io(&label_path, e))?;
            Ok(FigureSummary {
                intra_class: fig.intra_class.map(|c| c.name),
                orientation: fig.layout.orientation,
                classes: fig.placements.into_iter().map(|p| p.class.name).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let mut manifest = DatasetManifest {
        seed,
        total_figures: summaries.len(),
        intra_figures: 0,
        multi_figures: 0,
        row_figures: 0,
        column_figures: 0,
        total_subfigures: 0,
        subfigures_by_class: pools
            .classes()
            .iter()
            .map(|c| (c.name.clone(), 0))
            .collect(),
        intra_figures_by_class: BTreeMap::new(),
        classes: pools.classes().to_vec(),
        config: cfg.clone(),
    };
    for s in summaries {
        match s.intra_class {
            Some(name) => {
                manifest.intra_figures += 1;
                *manifest.intra_figures_by_class.entry(name).or_default() += 1;
            }
            None => manifest.multi_figures += 1,
        }
        match s.orientation {
            Orientation::Rows => manifest.row_figures += 1,
            Orientation::Columns => manifest.column_figures += 1,
        }
        manifest.total_subfigures += s.classes.len();
        for c in s.classes {
            *manifest.subfigures_by_class.entry(c).or_default() += 1;
        }
    }

    let manifest_path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: manifest_path.clone(),
        source,
    })?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intra_quota_is_exact() {
        let cfg = SimConfig::default();
        let n = (0..cfg.total_figures).filter(|&j| cfg.is_intra(j)).count();
        assert_eq!(n, 2000);
        let none = SimConfig {
            intra_figures: 0,
            ..SimConfig::default()
        };
        assert!((0..7000).all(|j| !none.is_intra(j)));
        let all = SimConfig {
            total_figures: 10,
            intra_figures: 10,
            ..SimConfig::default()
        };
        assert!((0..10).all(|j| all.is_intra(j)));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = [
            SimConfig {
                intra_figures: 8000,
                ..SimConfig::default()
            },
            SimConfig {
                n_range: [1, 5],
                ..SimConfig::default()
            },
            SimConfig {
                n_range: [4, 3],
                ..SimConfig::default()
            },
            SimConfig {
                band_extent_range: [0, 100],
                ..SimConfig::default()
            },
            SimConfig {
                band_extent_range: [128, 700],
                ..SimConfig::default()
            },
            SimConfig {
                gutter: 128,
                ..SimConfig::default()
            },
            SimConfig {
                max_layout_retries: 0,
                ..SimConfig::default()
            },
        ];
        for cfg in bad {
            assert!(
                matches!(cfg.validate(), Err(Error::Config { .. })),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn composed_figures_hold_invariants() {
        let pools = synthetic_pools(4, 12, 3);
        let cfg = SimConfig {
            total_figures: 40,
            intra_figures: 20,
            ..SimConfig::default()
        };
        for j in 0..40 {
            let fig = compose(&cfg, &pools, j, 99).unwrap();
            assert_eq!(
                fig.canvas.dimensions(),
                (fig.layout.canvas_w, fig.layout.canvas_h)
            );
            let canvas = fig.canvas_box();
            for (i, a) in fig.placements.iter().enumerate() {
                assert!(canvas.contains(&a.bbox));
                for b in &fig.placements[i + 1..] {
                    assert_eq!(a.bbox.intersection_area(&b.bbox), 0.0);
                }
            }
            if let Some(class) = &fig.intra_class {
                assert!(fig.placements.iter().all(|p| &p.class == class));
            }
            assert_eq!(fig.intra_class.is_some(), cfg.is_intra(j));
        }
    }

    #[test]
    fn rendering_places_pixels() {
        let pools = synthetic_pools(2, 4, 0);
        let cfg = SimConfig {
            gutter: 8,
            ..SimConfig::default()
        };
        let fig = compose(&cfg, &pools, 0, 1).unwrap();
        let p = &fig.placements[0];
        let (x, y) = (p.bbox.x1() as u32, p.bbox.y1() as u32);
        assert_ne!(fig.canvas.get_pixel(x, y).0, [255, 255, 255]);
        assert_eq!(fig.canvas.get_pixel(0, 0).0, [255, 255, 255]);
    }

    #[test]
    fn empty_dataset_writes_only_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig {
            total_figures: 0,
            intra_figures: 0,
            ..SimConfig::default()
        };
        let m = generate_dataset(&cfg, &synthetic_pools(2, 2, 0), dir.path(), 0).unwrap();
        assert_eq!(m.total_figures, 0);
        assert_eq!(m.total_subfigures, 0);
        assert!(!dir.path().join("images").exists());
        assert!(dir.path().join("manifest.json").exists());
    }
}
