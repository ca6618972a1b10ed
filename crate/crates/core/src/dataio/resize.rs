use crate::error::{Error, Result};
use crate::plane::MaskPlane;
use image::RgbImage;

/// Resize a sample to `target` x `target`: bilinear for the image, nearest
/// neighbor for the mask so it stays binary. Inputs already at the target
/// size pass through untouched.
pub fn resize_sample(
    image: &RgbImage,
    mask: &MaskPlane,
    target: u32,
) -> Result<(RgbImage, MaskPlane)> {
    if target == 0 {
        return Err(Error::invalid("resize target must be positive"));
    }
    let (w, h) = image.dimensions();
    if (h as usize, w as usize) != (mask.height(), mask.width()) {
        return Err(Error::shape(format!(
            "image {h}x{w} vs mask {}x{}",
            mask.height(),
            mask.width()
        )));
    }
    if w == target && h == target {
        return Ok((image.clone(), mask.clone()));
    }
    let resized =
        image::imageops::resize(image, target, target, image::imageops::FilterType::Triangle);
    let resized_mask = resize_mask_nearest(mask, target as usize, target as usize);
    Ok((resized, resized_mask))
}

pub fn resize_mask_nearest(mask: &MaskPlane, out_h: usize, out_w: usize) -> MaskPlane {
    let (h, w) = (mask.height(), mask.width());
    MaskPlane::from_fn(out_h, out_w, |r, c| {
        let src_r = (((r as f64 + 0.5) * h as f64 / out_h as f64).floor() as usize).min(h - 1);
        let src_c = (((c as f64 + 0.5) * w as f64 / out_w as f64).floor() as usize).min(w - 1);
        mask.get(src_r, src_c) == 1
    })
}
