//! Dataset ingestion: unified manifests over image/mask roots, labeled
//! detection patches, segmentation samples, and the 12x augmentation set.

mod augment;
mod manifest;
mod mask;
mod patch;
mod resize;

pub use augment::{
    augment, hflip_image, hflip_mask, rotate_image, rotate_mask, ROTATION_DEGREES,
};
pub use manifest::{build_manifest, read_manifest, write_manifest, ImageRecord, Split};
pub use mask::{load_mask, normalize_mask, save_mask};
pub use patch::{crop_patches, write_patch_store, Patch, PatchLabel};
pub use resize::{resize_mask_nearest, resize_sample};

use crate::error::{Error, Result};
use crate::plane::MaskPlane;
use image::RgbImage;
use ndarray::Array3;
use std::path::Path;

pub fn load_image(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_rgb8())
}

/// CHW float tensor in [0, 1] from an RGB image.
pub fn image_to_tensor(image: &RgbImage) -> Array3<f64> {
    let (w, h) = image.dimensions();
    Array3::from_shape_fn((3, h as usize, w as usize), |(ch, r, c)| {
        f64::from(image.get_pixel(c as u32, r as u32).0[ch]) / 255.0
    })
}

/// One segmentation training/evaluation sample at network resolution.
#[derive(Debug, Clone)]
pub struct SegSample {
    pub image: Array3<f64>,
    pub mask: MaskPlane,
}

/// Load every record of `split` from a manifest, resized to
/// `input_size` x `input_size`.
pub fn load_seg_samples(
    records: &[ImageRecord],
    split: Split,
    input_size: u32,
) -> Result<Vec<SegSample>> {
    let mut samples = Vec::new();
    for record in records.iter().filter(|r| r.split == split) {
        let mask_path = record.mask.as_ref().ok_or_else(|| {
            Error::invalid(format!(
                "record {} has no mask; segmentation needs labels",
                record.image.display()
            ))
        })?;
        let image = load_image(&record.image)?;
        let mask = load_mask(mask_path)?;
        let (image, mask) = resize_sample(&image, &mask, input_size)?;
        samples.push(SegSample {
            image: image_to_tensor(&image),
            mask,
        });
    }
    if samples.is_empty() {
        return Err(Error::invalid(format!(
            "manifest has no records in the {split} split"
        )));
    }
    Ok(samples)
}

/// Crop labeled patches from every record of `split`.
pub fn load_patches(
    records: &[ImageRecord],
    split: Split,
    patch_size: u32,
    crack_threshold: f64,
) -> Result<Vec<Patch>> {
    let mut patches = Vec::new();
    for record in records.iter().filter(|r| r.split == split) {
        let mask_path = record.mask.as_ref().ok_or_else(|| {
            Error::invalid(format!(
                "record {} has no mask; patch labels need one",
                record.image.display()
            ))
        })?;
        let image = load_image(&record.image)?;
        let mask = load_mask(mask_path)?;
        patches.extend(crop_patches(&image, &mask, patch_size, crack_threshold)?);
    }
    if patches.is_empty() {
        return Err(Error::invalid(format!(
            "no patches produced from the {split} split"
        )));
    }
    Ok(patches)
}
