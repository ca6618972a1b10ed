//! Guided filtering: edge-preserving refinement of probability maps using a
//! grayscale guide image.
//!
//! Local linear coefficients are derived from box-window statistics:
//! a = cov(I, p) / (var(I) + eps), b = mean(p) - a * mean(I), and the output
//! is q = mean(a) * I + mean(b) with all means taken over (2r+1)^2 windows
//! with edge-replicating padding.

use crate::error::{Error, Result};
use crate::plane::ProbabilityPlane;
use ndarray::Array2;

/// Box mean over a (2r+1)x(2r+1) window with edge-replicating padding.
///
/// Separable sliding-window implementation; radius 0 is an exact copy.
pub fn box_mean(input: &Array2<f64>, radius: usize) -> Array2<f64> {
    if radius == 0 {
        return input.clone();
    }
    let (h, w) = input.dim();
    let r = radius as isize;
    let window = (2 * radius + 1) as f64;

    // Horizontal pass.
    let mut horiz = Array2::<f64>::zeros((h, w));
    for row in 0..h {
        let line = input.row(row);
        let at = |c: isize| line[c.clamp(0, w as isize - 1) as usize];
        let mut sum = 0.0;
        for c in -r..=r {
            sum += at(c);
        }
        horiz[(row, 0)] = sum / window;
        for col in 1..w {
            sum += at(col as isize + r) - at(col as isize - r - 1);
            horiz[(row, col)] = sum / window;
        }
    }

    // Vertical pass.
    let mut out = Array2::<f64>::zeros((h, w));
    for col in 0..w {
        let at = |row: isize| horiz[(row.clamp(0, h as isize - 1) as usize, col)];
        let mut sum = 0.0;
        for row in -r..=r {
            sum += at(row);
        }
        out[(0, col)] = sum / window;
        for row in 1..h {
            sum += at(row as isize + r) - at(row as isize - r - 1);
            out[(row, col)] = sum / window;
        }
    }
    out
}

/// Refine a probability plane against a guide of the same shape.
///
/// The output is clamped back to [0, 1]. Windows with var(I) + eps == 0
/// take a = 0, which makes radius 0 an exact identity and lets flat guide
/// regions pass the input through.
pub fn guided_filter(
    prob: &ProbabilityPlane,
    guide: &Array2<f64>,
    radius: usize,
    eps: f64,
) -> Result<ProbabilityPlane> {
    let (h, w) = (prob.height(), prob.width());
    if guide.dim() != (h, w) {
        return Err(Error::shape(format!(
            "probability {}x{} vs guide {}x{}",
            h,
            w,
            guide.dim().0,
            guide.dim().1
        )));
    }
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::invalid(format!(
            "guided filter eps must be a finite nonnegative value, got {eps}"
        )));
    }

    let p = prob.values();
    let mean_i = box_mean(guide, radius);
    let mean_p = box_mean(p, radius);
    let corr_ip = box_mean(&(guide * p), radius);
    let corr_ii = box_mean(&(guide * guide), radius);

    let mut a = Array2::<f64>::zeros((h, w));
    let mut b = Array2::<f64>::zeros((h, w));
    for idx in 0..h * w {
        let (row, col) = (idx / w, idx % w);
        let cov = corr_ip[(row, col)] - mean_i[(row, col)] * mean_p[(row, col)];
        // Cancellation can push a zero variance slightly negative.
        let var = (corr_ii[(row, col)] - mean_i[(row, col)] * mean_i[(row, col)]).max(0.0);
        let denom = var + eps;
        let coeff = if denom > 0.0 { cov / denom } else { 0.0 };
        a[(row, col)] = coeff;
        b[(row, col)] = mean_p[(row, col)] - coeff * mean_i[(row, col)];
    }

    let mean_a = box_mean(&a, radius);
    let mean_b = box_mean(&b, radius);
    let mut q = Array2::<f64>::zeros((h, w));
    for idx in 0..h * w {
        let (row, col) = (idx / w, idx % w);
        q[(row, col)] = (mean_a[(row, col)] * guide[(row, col)] + mean_b[(row, col)])
            .clamp(0.0, 1.0);
    }
    ProbabilityPlane::new(q)
}

/// Grayscale guide from an RGB image: rec601 luma scaled to [0, 1].
pub fn luma_guide(img: &image::RgbImage) -> Array2<f64> {
    let (w, h) = img.dimensions();
    Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        let px = img.get_pixel(c as u32, r as u32).0;
        (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64) / 255.0
    })
}
