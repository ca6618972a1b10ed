use crate::error::{Error, Result};
use crate::plane::MaskPlane;
use image::DynamicImage;
use ndarray::Array2;
use std::path::Path;

/// Normalize a raw single-channel mask image to a binary plane.
///
/// Sources store masks either as {0, 255} (8-bit) or already as {0, 1};
/// values are passed through when already binary and otherwise thresholded
/// at the 8-bit midpoint (value > 127 becomes crack).
pub fn normalize_mask(raw: &DynamicImage) -> Result<MaskPlane> {
    match raw {
        DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            let data = gray.as_raw();
            let binary = data.iter().all(|&v| v <= 1);
            let values = Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
                let v = data[r * w as usize + c];
                if binary {
                    v
                } else {
                    u8::from(v > 127)
                }
            });
            MaskPlane::from_binary(values)
        }
        DynamicImage::ImageLuma16(gray) => {
            let (w, h) = gray.dimensions();
            let data = gray.as_raw();
            let binary = data.iter().all(|&v| v <= 1);
            let values = Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
                let v = data[r * w as usize + c];
                if binary {
                    v as u8
                } else {
                    u8::from(v > 127)
                }
            });
            MaskPlane::from_binary(values)
        }
        other => Err(Error::invalid(format!(
            "mask must be single-channel, got {:?} color type",
            other.color()
        ))),
    }
}

/// Load and normalize a mask file.
pub fn load_mask(path: &Path) -> Result<MaskPlane> {
    let raw = image::open(path).map_err(|e| Error::image(path, e))?;
    normalize_mask(&raw).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::invalid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Save a mask as an 8-bit single-channel PNG with values 0/255.
pub fn save_mask(path: &Path, mask: &MaskPlane) -> Result<()> {
    let (h, w) = (mask.height(), mask.width());
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            img.put_pixel(c as u32, r as u32, image::Luma([mask.get(r, c) * 255]));
        }
    }
    img.save(path).map_err(|e| Error::image(path, e))
}
