//! Single-image pools that the simulator draws subfigures from.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{validate_classes, ClassLabel, RngHandle};

/// Where a pool image's pixels come from.
#[derive(Debug, Clone)]
pub enum ImageSource {
    /// Decoded lazily at render time.
    File(PathBuf),
    Memory(Arc<RgbImage>),
}

impl ImageSource {
    pub fn load(&self) -> Result<Arc<RgbImage>> {
        match self {
            ImageSource::Memory(img) => Ok(Arc::clone(img)),
            ImageSource::File(path) => image::open(path)
                .map(|img| Arc::new(img.to_rgb8()))
                .map_err(|source| Error::Image {
                    path: path.clone(),
                    source,
                }),
        }
    }
}

/// One single image with its native size and class.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub source: ImageSource,
    pub width: u32,
    pub height: u32,
    pub class: ClassLabel,
}

impl PoolEntry {
    pub fn from_image(image: RgbImage, class: ClassLabel) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            source: ImageSource::Memory(Arc::new(image)),
            class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolMode {
    /// Entries from any class.
    Multi,
    /// Every entry belongs to this class.
    Intra(ClassLabel),
}

/// The set of images one figure is filled from.
#[derive(Debug, Clone)]
pub struct ImagePool {
    entries: Vec<Arc<PoolEntry>>,
    mode: PoolMode,
}

impl ImagePool {
    pub fn new(entries: Vec<Arc<PoolEntry>>, mode: PoolMode) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.width == 0 || e.height == 0) {
            return Err(Error::config(
                "pool",
                format!("image {:?} has zero size", e.source),
            ));
        }
        if let PoolMode::Intra(class) = &mode {
            if entries.iter().any(|e| &e.class != class) {
                return Err(Error::config(
                    "pool",
                    format!("intra pool for `{}` contains other classes", class.name),
                ));
            }
        }
        Ok(Self { entries, mode })
    }

    pub fn entries(&self) -> &[Arc<PoolEntry>] {
        &self.entries
    }

    pub fn mode(&self) -> &PoolMode {
        &self.mode
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// All pool images grouped by class.
#[derive(Debug, Clone, Default)]
pub struct ClassPools {
    classes: Vec<ClassLabel>,
    by_class: Vec<Vec<Arc<PoolEntry>>>,
}

impl ClassPools {
    /// `entries[i]` holds the images of `classes[i]`.
    pub fn new(classes: Vec<ClassLabel>, entries: Vec<Vec<PoolEntry>>) -> Result<Self> {
        validate_classes(&classes)?;
        if classes.len() != entries.len() {
            return Err(Error::config("pool", "one entry list per class required"));
        }
        let mut paired: Vec<_> = classes.into_iter().zip(entries).collect();
        paired.sort_by_key(|(c, _)| c.id);
        let mut classes = Vec::with_capacity(paired.len());
        let mut by_class = Vec::with_capacity(paired.len());
        for (class, list) in paired {
            if let Some(e) = list.iter().find(|e| e.class != class) {
                return Err(Error::config(
                    "pool",
                    format!(
                        "entry of class `{}` filed under `{}`",
                        e.class.name, class.name
                    ),
                ));
            }
            if list.iter().any(|e| e.width == 0 || e.height == 0) {
                return Err(Error::config("pool", "pool images must have positive size"));
            }
            by_class.push(list.into_iter().map(Arc::new).collect());
            classes.push(class);
        }
        if by_class.iter().all(|l: &Vec<_>| l.is_empty()) {
            return Err(Error::config("pool", "no pool images"));
        }
        Ok(Self { classes, by_class })
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn class_entries(&self, class_id: u32) -> &[Arc<PoolEntry>] {
        self.by_class
            .get(class_id as usize)
            .map_or(&[], |v| v.as_slice())
    }

    /// Pool over every class.
    pub fn multi_pool(&self) -> ImagePool {
        ImagePool {
            entries: self.by_class.iter().flatten().cloned().collect(),
            mode: PoolMode::Multi,
        }
    }

    pub fn intra_pool(&self, class_id: u32) -> ImagePool {
        ImagePool {
            entries: self.class_entries(class_id).to_vec(),
            mode: PoolMode::Intra(self.classes[class_id as usize].clone()),
        }
    }

    /// Ids of classes with at least one image.
    pub fn populated_classes(&self) -> Vec<u32> {
        self.classes
            .iter()
            .filter(|c| !self.class_entries(c.id).is_empty())
            .map(|c| c.id)
            .collect()
    }

    /// Loads pools from a class-map file with one `id name dir` line per
    /// class. Relative directories resolve against the map's directory; blank
    /// lines and `#` comments are skipped.
    pub fn from_class_map(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut classes = Vec::new();
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, name, dir] = fields[..] else {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected `id name dir`, found {} fields", fields.len()),
                ));
            };
            let id: u32 = id
                .parse()
                .map_err(|e| Error::parse(path, lineno + 1, format!("class id `{id}`: {e}")))?;
            let class = ClassLabel::new(id, name);
            entries.push(scan_class_dir(&base.join(dir), &class)?);
            classes.push(class);
        }
        Self::new(classes, entries)
    }
}

fn scan_class_dir(dir: &Path, class: &ClassLabel) -> Result<Vec<PoolEntry>> {
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
    files
        .into_iter()
        .map(|path| {
            let (width, height) =
                image::image_dimensions(&path).map_err(|source| Error::Image {
                    path: path.clone(),
                    source,
                })?;
            if width == 0 || height == 0 {
                return Err(Error::config(
                    "pool",
                    format!("{} is empty", path.display()),
                ));
            }
            Ok(PoolEntry {
                source: ImageSource::File(path),
                width,
                height,
                class: class.clone(),
            })
        })
        .collect()
}

/// Procedurally generated pools for demos and tests.
///
/// Each class gets its own hue and texture; sizes fall in `[96, 320]` px with
/// aspect ratios in `[1/2, 2]`. No pixel comes within 40 intensity levels of
/// white, so the images never blend into a white background.
pub fn synthetic_pools(num_classes: u32, per_class: u32, seed: u64) -> ClassPools {
    let classes: Vec<ClassLabel> = (0..num_classes)
        .map(|id| ClassLabel::new(id, format!("class{id}")))
        .collect();
    let entries = classes
        .iter()
        .map(|class| {
            let mut rng = RngHandle::substream(seed, u64::from(class.id));
            (0..per_class)
                .map(|_| PoolEntry::from_image(synthetic_image(class.id, &mut rng), class.clone()))
                .collect()
        })
        .collect();
    ClassPools::new(classes, entries).expect("synthetic pools are well-formed")
}

fn synthetic_image(class_id: u32, rng: &mut RngHandle) -> RgbImage {
    let long = rng.gen_range(96..=320u32);
    let aspect: f64 = rng.gen_range(0.5..=2.0);
    let (w, h) = if aspect >= 1.0 {
        (long, ((f64::from(long) / aspect).round() as u32).max(1))
    } else {
        (((f64::from(long) * aspect).round() as u32).max(1), long)
    };
    // hue wheel position per class, jittered per image
    let hue = (f64::from(class_id) * 0.618_034 + rng.gen_range(-0.05..0.05)).rem_euclid(1.0);
    let base = hue_to_rgb(hue);
    let period = rng.gen_range(6..40u32);
    let style = class_id % 3;
    RgbImage::from_fn(w, h, |x, y| {
        let shade = match style {
            0 => (x / period + y / period) % 2,
            1 => (y / period) % 2,
            _ => (x * x + y * y) / (period * period) % 2,
        } as f64;
        let grad = f64::from(x + y) / f64::from(w + h);
        let k = 0.45 + 0.25 * shade + 0.3 * grad;
        Rgb(base.map(|c| (c * k * 215.0).min(215.0) as u8))
    })
}

fn hue_to_rgb(h: f64) -> [f64; 3] {
    let f = |n: f64| {
        let k = (n + h * 6.0) % 6.0;
        1.0 - (k.min(4.0 - k).clamp(0.0, 1.0))
    };
    [f(5.0), f(3.0), f(1.0)]
}
