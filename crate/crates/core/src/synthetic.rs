//! Deterministic synthetic crack samples for demos, desk-scale runs, and
//! tests: concrete-like gray texture with a dark meandering crack line and
//! its exact mask.

use crate::error::Result;
use crate::plane::MaskPlane;
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn concrete_pixel(rng: &mut ChaCha8Rng) -> u8 {
    let base = 165.0 + 20.0 * (rng.random::<f64>() - 0.5);
    base.clamp(0.0, 255.0) as u8
}

fn crack_pixel(rng: &mut ChaCha8Rng) -> u8 {
    let base = 45.0 + 20.0 * (rng.random::<f64>() - 0.5);
    base.clamp(0.0, 255.0) as u8
}

/// A size x size concrete texture crossed by one dark crack, plus its mask.
pub fn crack_sample(size: u32, seed: u64) -> (RgbImage, MaskPlane) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as usize;
    let mut image = RgbImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let v = concrete_pixel(&mut rng);
            image.put_pixel(x, y, Rgb([v, v, v]));
        }
    }

    // Meandering path across the image, random orientation and width.
    let vertical = rng.random::<bool>();
    let amplitude = size as f64 * (0.08 + 0.15 * rng.random::<f64>());
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let cycles = 1.0 + 2.0 * rng.random::<f64>();
    let center = size as f64 * (0.3 + 0.4 * rng.random::<f64>());
    let half_width = 0.6 + 1.2 * rng.random::<f64>();

    let mut mask = vec![vec![false; s]; s];
    for along in 0..s {
        let t = along as f64 / s as f64;
        let across = center + amplitude * (cycles * std::f64::consts::TAU * t + phase).sin();
        let lo = (across - half_width).floor().max(0.0) as usize;
        let hi = (across + half_width).ceil().min(s as f64 - 1.0) as usize;
        for a in lo..=hi {
            if (a as f64 - across).abs() <= half_width {
                let (r, c) = if vertical { (along, a) } else { (a, along) };
                mask[r][c] = true;
            }
        }
    }
    for r in 0..s {
        for c in 0..s {
            if mask[r][c] {
                let v = crack_pixel(&mut rng);
                image.put_pixel(c as u32, r as u32, Rgb([v, v, v]));
            }
        }
    }
    (image, MaskPlane::from_fn(s, s, |r, c| mask[r][c]))
}

/// A crack-free concrete texture.
pub fn plain_sample(size: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut image = RgbImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let v = concrete_pixel(&mut rng);
            image.put_pixel(x, y, Rgb([v, v, v]));
        }
    }
    image
}

/// A balanced, linearly separable patch set: crack patches carry a dark
/// line, plain patches do not. Labels: 1 = crack, 0 = non-crack.
pub fn detection_patches(count: usize, size: u32, seed: u64) -> Vec<(RgbImage, u8)> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        if i % 2 == 0 {
            let (image, _) = crack_sample(size, seed.wrapping_add(i as u64));
            out.push((image, 1));
        } else {
            out.push((plain_sample(size, seed.wrapping_add(i as u64)), 0));
        }
    }
    out
}

/// Write `count` crack samples as a dataset root:
/// `<dir>/images/sample_XXX.png` and `<dir>/masks/sample_XXX.png`.
pub fn write_toy_root(dir: &Path, count: usize, size: u32, seed: u64) -> Result<()> {
    use crate::error::Error;
    let images = dir.join("images");
    let masks = dir.join("masks");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    std::fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
    for i in 0..count {
        let (image, mask) = crack_sample(size, seed.wrapping_add(i as u64));
        let image_path = images.join(format!("sample_{i:03}.png"));
        image
            .save(&image_path)
            .map_err(|e| Error::image(&image_path, e))?;
        crate::dataio::save_mask(&masks.join(format!("sample_{i:03}.png")), &mask)?;
    }
    Ok(())
}
