//! Grid layout sampling: a stack of rows (fixed width) or columns (fixed
//! height) whose total extent keeps the canvas aspect ratio within [3/4, 4/3].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::error::{Error, Result};
use crate::geometry::RngHandle;

/// Length of the fixed canvas side.
pub const BASE_EXTENT: u32 = 640;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Canvas width is fixed; bands are rows stacked top to bottom.
    Rows,
    /// Canvas height is fixed; bands are columns laid out left to right.
    Columns,
}

/// Which orientations the sampler may pick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationChoice {
    #[default]
    Any,
    Rows,
    Columns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub orientation: Orientation,
    /// Band extents: row heights or column widths.
    pub bands: Vec<u32>,
    pub canvas_w: u32,
    pub canvas_h: u32,
}

impl LayoutSpec {
    pub fn n(&self) -> usize {
        self.bands.len()
    }

    /// Length of every band along its axis (the fixed canvas side).
    pub fn band_length(&self) -> u32 {
        match self.orientation {
            Orientation::Rows => self.canvas_w,
            Orientation::Columns => self.canvas_h,
        }
    }

    /// Offset of each band's leading edge along the stacking axis.
    pub fn band_offsets(&self) -> Vec<u32> {
        self.bands
            .iter()
            .scan(0, |acc, &b| {
                let start = *acc;
                *acc += b;
                Some(start)
            })
            .collect()
    }

    pub fn aspect_ratio(&self) -> f64 {
        f64::from(self.canvas_w) / f64::from(self.canvas_h)
    }
}

/// Exact integer test of `3/4 <= base / total <= 4/3`.
pub fn aspect_ok(total: u32) -> bool {
    let total = u64::from(total);
    let base = u64::from(BASE_EXTENT);
    4 * base >= 3 * total && 3 * base <= 4 * total
}

/// Draws a layout by whole-layout rejection: orientation, band count and
/// band extents are all redrawn until the aspect-ratio constraint holds.
pub fn sample_layout(cfg: &SimConfig, rng: &mut RngHandle) -> Result<LayoutSpec> {
    let [n_lo, n_hi] = cfg.n_range;
    let [e_lo, e_hi] = cfg.band_extent_range;
    for _ in 0..cfg.max_layout_retries {
        let orientation = match cfg.orientation {
            OrientationChoice::Rows => Orientation::Rows,
            OrientationChoice::Columns => Orientation::Columns,
            OrientationChoice::Any => {
                if rng.gen_bool(0.5) {
                    Orientation::Rows
                } else {
                    Orientation::Columns
                }
            }
        };
        let n = rng.gen_range(n_lo..=n_hi);
        let bands: Vec<u32> = (0..n).map(|_| rng.gen_range(e_lo..=e_hi)).collect();
        let total: u32 = bands.iter().sum();
        if !aspect_ok(total) {
            continue;
        }
        let (canvas_w, canvas_h) = match orientation {
            Orientation::Rows => (BASE_EXTENT, total),
            Orientation::Columns => (total, BASE_EXTENT),
        };
        return Ok(LayoutSpec {
            orientation,
            bands,
            canvas_w,
            canvas_h,
        });
    }
    Err(Error::LayoutUnsatisfiable {
        retries: cfg.max_layout_retries,
    })
}
