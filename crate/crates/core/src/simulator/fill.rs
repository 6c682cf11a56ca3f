//! Filling a sampled layout with aspect-preserving subfigures.
//!
//! Every subfigure cell carries half a gutter of margin on each side, so
//! neighbours (within a band and across bands) are exactly `gutter` pixels
//! apart and the outermost cells sit half a gutter from the canvas edge. An
//! image's extent across its band is therefore `band - gutter`.

use std::sync::Arc;

use rand::Rng;

use super::layout::{LayoutSpec, Orientation};
use super::pool::{ImagePool, PoolEntry};
use crate::error::{Error, Result};
use crate::geometry::{BBox, ClassLabel, RngHandle};

/// A pool image resized and positioned on the canvas.
#[derive(Debug, Clone)]
pub struct Placement {
    pub source: Arc<PoolEntry>,
    pub bbox: BBox,
    pub resized_w: u32,
    pub resized_h: u32,
    pub class: ClassLabel,
}

/// Extent along the band for an image whose cross-band extent is `cross`.
fn along_extent(entry: &PoolEntry, orientation: Orientation, cross: u32) -> u32 {
    let (along, across) = match orientation {
        Orientation::Rows => (entry.width, entry.height),
        Orientation::Columns => (entry.height, entry.width),
    };
    let scaled = f64::from(cross) * f64::from(along) / f64::from(across);
    (scaled.round() as u32).max(1)
}

pub fn fill_layout(
    layout: &LayoutSpec,
    pool: &ImagePool,
    gutter: u32,
    rng: &mut RngHandle,
) -> Result<Vec<Placement>> {
    if pool.is_empty() {
        return Err(Error::config("pool", "image pool is empty"));
    }
    let lead = gutter / 2;
    let trail = gutter - lead;
    let length = layout.band_length();
    let along_limit = length.saturating_sub(trail);
    let entries = pool.entries();

    let mut placements = Vec::new();
    for (&band, offset) in layout.bands.iter().zip(layout.band_offsets()) {
        let cross = band.checked_sub(gutter).filter(|&c| c > 0).ok_or_else(|| {
            Error::config(
                "sim.gutter",
                format!("gutter {gutter} leaves no room in a {band}px band"),
            )
        })?;
        let fits_alone: Vec<usize> = (0..entries.len())
            .filter(|&i| lead + along_extent(&entries[i], layout.orientation, cross) <= along_limit)
            .collect();
        if fits_alone.is_empty() {
            return Err(Error::PoolExhausted {
                band_extent: band,
                band_length: length,
            });
        }

        let mut cursor = lead;
        let mut pick = fits_alone[rng.gen_range(0..fits_alone.len())];
        loop {
            let entry = &entries[pick];
            let along = along_extent(entry, layout.orientation, cross);
            if cursor + along > along_limit {
                break;
            }
            let cross_pos = f64::from(offset + lead);
            let along_pos = f64::from(cursor);
            let (x, y, w, h) = match layout.orientation {
                Orientation::Rows => (along_pos, cross_pos, along, cross),
                Orientation::Columns => (cross_pos, along_pos, cross, along),
            };
            placements.push(Placement {
                source: Arc::clone(entry),
                bbox: BBox::from_xywh(x, y, f64::from(w), f64::from(h))?,
                resized_w: w,
                resized_h: h,
                class: entry.class.clone(),
            });
            cursor += along + gutter;
            pick = rng.gen_range(0..entries.len());
        }
    }
    Ok(placements)
}
