//! 12x augmentation: six rotations at 60-degree intervals crossed with an
//! optional horizontal flip.
//!
//! Right-angle rotations (0, 180) are exact pixel permutations so that
//! repeated application restores the input bit for bit. The oblique angles
//! resample with bilinear interpolation (images) or nearest neighbor
//! (masks), both with reflection padding at the borders.

use crate::error::{Error, Result};
use crate::plane::MaskPlane;
use image::RgbImage;

pub const ROTATION_DEGREES: [u32; 6] = [0, 60, 120, 180, 240, 300];

/// Reflect an index into [0, n) with edge duplication.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Inverse-map an output pixel to source coordinates for a rotation of
/// `degrees` about the image center. Returns fractional (row, col).
fn source_coords(degrees: u32, out_r: usize, out_c: usize, h: usize, w: usize) -> (f64, f64) {
    let theta = f64::from(degrees).to_radians();
    let (sin, cos) = theta.sin_cos();
    let cr = (h as f64 - 1.0) / 2.0;
    let cc = (w as f64 - 1.0) / 2.0;
    let dr = out_r as f64 - cr;
    let dc = out_c as f64 - cc;
    // Inverse rotation of the output offset.
    let src_c = cos * dc + sin * dr + cc;
    let src_r = -sin * dc + cos * dr + cr;
    (src_r, src_c)
}

pub fn rotate_image(image: &RgbImage, degrees: u32) -> RgbImage {
    let (w, h) = image.dimensions();
    match degrees % 360 {
        0 => image.clone(),
        180 => {
            let mut out = RgbImage::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    out.put_pixel(x, y, *image.get_pixel(w - 1 - x, h - 1 - y));
                }
            }
            out
        }
        deg => {
            let mut out = RgbImage::new(w, h);
            for y in 0..h as usize {
                for x in 0..w as usize {
                    let (src_r, src_c) = source_coords(deg, y, x, h as usize, w as usize);
                    let r0 = src_r.floor();
                    let c0 = src_c.floor();
                    let fr = src_r - r0;
                    let fc = src_c - c0;
                    let rows = [
                        reflect(r0 as isize, h as usize),
                        reflect(r0 as isize + 1, h as usize),
                    ];
                    let cols = [
                        reflect(c0 as isize, w as usize),
                        reflect(c0 as isize + 1, w as usize),
                    ];
                    let mut rgb = [0u8; 3];
                    for ch in 0..3 {
                        let sample = |rr: usize, cc: usize| {
                            f64::from(image.get_pixel(cc as u32, rr as u32).0[ch])
                        };
                        let top = sample(rows[0], cols[0])
                            + fc * (sample(rows[0], cols[1]) - sample(rows[0], cols[0]));
                        let bottom = sample(rows[1], cols[0])
                            + fc * (sample(rows[1], cols[1]) - sample(rows[1], cols[0]));
                        let value = top + fr * (bottom - top);
                        rgb[ch] = value.round().clamp(0.0, 255.0) as u8;
                    }
                    out.put_pixel(x as u32, y as u32, image::Rgb(rgb));
                }
            }
            out
        }
    }
}

pub fn rotate_mask(mask: &MaskPlane, degrees: u32) -> MaskPlane {
    let (h, w) = (mask.height(), mask.width());
    match degrees % 360 {
        0 => mask.clone(),
        180 => MaskPlane::from_fn(h, w, |r, c| mask.get(h - 1 - r, w - 1 - c) == 1),
        deg => MaskPlane::from_fn(h, w, |r, c| {
            let (src_r, src_c) = source_coords(deg, r, c, h, w);
            let rr = reflect(src_r.round() as isize, h);
            let cc = reflect(src_c.round() as isize, w);
            mask.get(rr, cc) == 1
        }),
    }
}

pub fn hflip_image(image: &RgbImage) -> RgbImage {
    image::imageops::flip_horizontal(image)
}

pub fn hflip_mask(mask: &MaskPlane) -> MaskPlane {
    let (h, w) = (mask.height(), mask.width());
    MaskPlane::from_fn(h, w, |r, c| mask.get(r, w - 1 - c) == 1)
}

/// Produce the full 12-variant set: rotations {0, 60, ..., 300} crossed
/// with {no flip, horizontal flip}, rotation-major with the unflipped
/// variant first. Element 0 is the identity pair.
pub fn augment(image: &RgbImage, mask: &MaskPlane) -> Result<Vec<(RgbImage, MaskPlane)>> {
    let (w, h) = image.dimensions();
    if (h as usize, w as usize) != (mask.height(), mask.width()) {
        return Err(Error::shape(format!(
            "image {h}x{w} vs mask {}x{}",
            mask.height(),
            mask.width()
        )));
    }
    let mut out = Vec::with_capacity(12);
    for degrees in ROTATION_DEGREES {
        let rotated_image = rotate_image(image, degrees);
        let rotated_mask = rotate_mask(mask, degrees);
        out.push((rotated_image.clone(), rotated_mask.clone()));
        out.push((hflip_image(&rotated_image), hflip_mask(&rotated_mask)));
    }
    Ok(out)
}
