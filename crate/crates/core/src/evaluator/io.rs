use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::formats::{
    parse_yolo_labels, read_detections, read_groundtruth_json, Detection, GroundTruth,
};

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    read_detections(path)
}

fn find_image(images_dir: &Path, stem: &str) -> Option<PathBuf> {
    ["png", "jpg", "jpeg", "PNG", "JPG", "JPEG"]
        .iter()
        .map(|ext| images_dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Loads ground truth from a dataset directory (`images/` + YOLO `labels/`)
/// or from a JSON file in the detection schema without confidences.
///
/// YOLO coordinates are denormalized with each image's actual size; the
/// image id is the label file stem.
pub fn load_groundtruth(path: &Path) -> Result<Vec<GroundTruth>> {
    if path.is_file() {
        return read_groundtruth_json(path);
    }
    let labels_dir = path.join("labels");
    let images_dir = path.join("images");
    let mut label_files: Vec<PathBuf> = std::fs::read_dir(&labels_dir)
        .map_err(|e| Error::io(&labels_dir, e))?
        .map(|e| {
            e.map(|e| e.path())
                .map_err(|err| Error::io(&labels_dir, err))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    label_files.sort();

    let mut gts = Vec::new();
    for label_path in label_files {
        let stem = label_path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::parse(&label_path, 0, "label file name is not valid UTF-8"))?
            .to_string();
        let image_path = find_image(&images_dir, &stem).ok_or_else(|| {
            Error::parse(
                &label_path,
                0,
                format!("no image for `{stem}` in {}", images_dir.display()),
            )
        })?;
        let (w, h) = image::image_dimensions(&image_path).map_err(|source| Error::Image {
            path: image_path.clone(),
            source,
        })?;
        let text = std::fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
        for (i, label) in parse_yolo_labels(&label_path, &text)?
            .into_iter()
            .enumerate()
        {
            let bbox = label
                .to_bbox(f64::from(w), f64::from(h))
                .map_err(|e| Error::parse(&label_path, i + 1, e.to_string()))?;
            gts.push(GroundTruth::new(stem.clone(), bbox, label.class_id));
        }
    }
    Ok(gts)
}
