//! Bilinear upsampling with the interpolation grid anchored at plane
//! corners, so the first/last output rows and columns coincide with the
//! input corners. The lerp form `a + t * (b - a)` keeps constant planes
//! bit-exactly constant.

use ndarray::Array4;

struct AxisMap {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

fn axis_map(n_in: usize, n_out: usize) -> AxisMap {
    let mut lo = Vec::with_capacity(n_out);
    let mut hi = Vec::with_capacity(n_out);
    let mut frac = Vec::with_capacity(n_out);
    for i in 0..n_out {
        if n_in == 1 || n_out == 1 {
            lo.push(0);
            hi.push(0);
            frac.push(0.0);
            continue;
        }
        let src = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let base = src.floor();
        if base >= (n_in - 1) as f64 {
            lo.push(n_in - 1);
            hi.push(n_in - 1);
            frac.push(0.0);
        } else {
            lo.push(base as usize);
            hi.push(base as usize + 1);
            frac.push(src - base);
        }
    }
    AxisMap { lo, hi, frac }
}

pub fn upsample_bilinear(x: &Array4<f64>, out_h: usize, out_w: usize) -> Array4<f64> {
    let (batch, ch, h, w) = x.dim();
    if (h, w) == (out_h, out_w) {
        return x.clone();
    }
    let rows = axis_map(h, out_h);
    let cols = axis_map(w, out_w);
    let mut out = Array4::zeros((batch, ch, out_h, out_w));
    for b in 0..batch {
        for c in 0..ch {
            for oy in 0..out_h {
                let (y0, y1, fy) = (rows.lo[oy], rows.hi[oy], rows.frac[oy]);
                for ox in 0..out_w {
                    let (x0, x1, fx) = (cols.lo[ox], cols.hi[ox], cols.frac[ox]);
                    let v00 = x[(b, c, y0, x0)];
                    let v01 = x[(b, c, y0, x1)];
                    let v10 = x[(b, c, y1, x0)];
                    let v11 = x[(b, c, y1, x1)];
                    let top = v00 + fx * (v01 - v00);
                    let bottom = v10 + fx * (v11 - v10);
                    out[(b, c, oy, ox)] = top + fy * (bottom - top);
                }
            }
        }
    }
    out
}

/// Adjoint of `upsample_bilinear`: scatter output gradients back through
/// the interpolation weights.
pub fn upsample_bilinear_backward(dy: &Array4<f64>, in_h: usize, in_w: usize) -> Array4<f64> {
    let (batch, ch, oh, ow) = dy.dim();
    if (in_h, in_w) == (oh, ow) {
        return dy.clone();
    }
    let rows = axis_map(in_h, oh);
    let cols = axis_map(in_w, ow);
    let mut dx = Array4::zeros((batch, ch, in_h, in_w));
    for b in 0..batch {
        for c in 0..ch {
            for oy in 0..oh {
                let (y0, y1, fy) = (rows.lo[oy], rows.hi[oy], rows.frac[oy]);
                for ox in 0..ow {
                    let (x0, x1, fx) = (cols.lo[ox], cols.hi[ox], cols.frac[ox]);
                    let g = dy[(b, c, oy, ox)];
                    dx[(b, c, y0, x0)] += g * (1.0 - fy) * (1.0 - fx);
                    dx[(b, c, y0, x1)] += g * (1.0 - fy) * fx;
                    dx[(b, c, y1, x0)] += g * fy * (1.0 - fx);
                    dx[(b, c, y1, x1)] += g * fy * fx;
                }
            }
        }
    }
    dx
}
