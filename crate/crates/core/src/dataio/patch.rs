use crate::error::{Error, Result};
use crate::plane::MaskPlane;
use image::RgbImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchLabel {
    Crack,
    NonCrack,
}

impl PatchLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatchLabel::Crack => "crack",
            PatchLabel::NonCrack => "non_crack",
        }
    }
}

/// A labeled sub-image crop.
#[derive(Debug, Clone)]
pub struct Patch {
    pub pixels: RgbImage,
    pub label: PatchLabel,
    /// (row, col) of the crop's top-left corner in the source image.
    pub origin: (u32, u32),
}

/// Tile an image and its mask into non-overlapping `patch_size` crops
/// (right/bottom remainders are discarded) and label each crop crack when
/// its crack-pixel fraction exceeds `crack_threshold`.
pub fn crop_patches(
    image: &RgbImage,
    mask: &MaskPlane,
    patch_size: u32,
    crack_threshold: f64,
) -> Result<Vec<Patch>> {
    let (w, h) = image.dimensions();
    if (h as usize, w as usize) != (mask.height(), mask.width()) {
        return Err(Error::shape(format!(
            "image {h}x{w} vs mask {}x{}",
            mask.height(),
            mask.width()
        )));
    }
    if patch_size == 0 || patch_size > w.min(h) {
        return Err(Error::invalid(format!(
            "patch size {patch_size} does not fit a {h}x{w} image"
        )));
    }
    let rows = h / patch_size;
    let cols = w / patch_size;
    let pixels_per_patch = (patch_size as u64 * patch_size as u64) as f64;

    let mut patches = Vec::with_capacity((rows * cols) as usize);
    for tile_r in 0..rows {
        for tile_c in 0..cols {
            let top = tile_r * patch_size;
            let left = tile_c * patch_size;
            let crop =
                image::imageops::crop_imm(image, left, top, patch_size, patch_size).to_image();
            let mut crack = 0u64;
            for r in 0..patch_size as usize {
                for c in 0..patch_size as usize {
                    crack += u64::from(mask.get(top as usize + r, left as usize + c));
                }
            }
            let fraction = crack as f64 / pixels_per_patch;
            let label = if fraction > crack_threshold {
                PatchLabel::Crack
            } else {
                PatchLabel::NonCrack
            };
            patches.push(Patch {
                pixels: crop,
                label,
                origin: (top, left),
            });
        }
    }
    Ok(patches)
}

/// Write patches under `<out>/crack/` and `<out>/non_crack/`.
pub fn write_patch_store(
    patches: &[Patch],
    out_dir: &std::path::Path,
    stem: &str,
) -> Result<(usize, usize)> {
    let crack_dir = out_dir.join("crack");
    let non_dir = out_dir.join("non_crack");
    std::fs::create_dir_all(&crack_dir).map_err(|e| Error::io(&crack_dir, e))?;
    std::fs::create_dir_all(&non_dir).map_err(|e| Error::io(&non_dir, e))?;
    let mut counts = (0usize, 0usize);
    for patch in patches {
        let dir = match patch.label {
            PatchLabel::Crack => {
                counts.0 += 1;
                &crack_dir
            }
            PatchLabel::NonCrack => {
                counts.1 += 1;
                &non_dir
            }
        };
        let name = format!("{stem}_r{}_c{}.png", patch.origin.0, patch.origin.1);
        let path = dir.join(name);
        patch.pixels.save(&path).map_err(|e| Error::image(&path, e))?;
    }
    Ok(counts)
}
