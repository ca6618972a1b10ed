use ndarray::Array4;

/// Max pooling with square windows; padding cells act as -inf and are never
/// selected as the argmax.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        MaxPool2d {
            kernel,
            stride,
            padding,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    /// Returns the pooled output and the flat spatial argmax per cell.
    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, Array4<usize>) {
        let (batch, ch, h, w) = x.dim();
        let (oh, ow) = self.output_hw(h, w);
        let mut out = Array4::zeros((batch, ch, oh, ow));
        let mut argmax = Array4::zeros((batch, ch, oh, ow));
        for b in 0..batch {
            for c in 0..ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for ky in 0..self.kernel {
                            let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let ix =
                                    (ox * self.stride + kx) as isize - self.padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let v = x[(b, c, iy as usize, ix as usize)];
                                if v > best {
                                    best = v;
                                    best_idx = iy as usize * w + ix as usize;
                                }
                            }
                        }
                        out[(b, c, oy, ox)] = best;
                        argmax[(b, c, oy, ox)] = best_idx;
                    }
                }
            }
        }
        (out, argmax)
    }

    pub fn backward(
        &self,
        dy: &Array4<f64>,
        argmax: &Array4<usize>,
        in_h: usize,
        in_w: usize,
    ) -> Array4<f64> {
        let (batch, ch, oh, ow) = dy.dim();
        let mut dx = Array4::zeros((batch, ch, in_h, in_w));
        for b in 0..batch {
            for c in 0..ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let idx = argmax[(b, c, oy, ox)];
                        dx[(b, c, idx / in_w, idx % in_w)] += dy[(b, c, oy, ox)];
                    }
                }
            }
        }
        dx
    }
}

/// Average pooling to a fixed output grid; window (i, j) covers input rows
/// [floor(i*h/oh), ceil((i+1)*h/oh)) and likewise for columns.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveAvgPool {
    pub out_h: usize,
    pub out_w: usize,
}

impl AdaptiveAvgPool {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        AdaptiveAvgPool { out_h, out_w }
    }

    fn bounds(i: usize, n_out: usize, n_in: usize) -> (usize, usize) {
        let start = i * n_in / n_out;
        let end = ((i + 1) * n_in).div_ceil(n_out);
        (start, end.max(start + 1).min(n_in.max(start + 1)))
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (batch, ch, h, w) = x.dim();
        let mut out = Array4::zeros((batch, ch, self.out_h, self.out_w));
        for b in 0..batch {
            for c in 0..ch {
                for oy in 0..self.out_h {
                    let (y0, y1) = Self::bounds(oy, self.out_h, h);
                    for ox in 0..self.out_w {
                        let (x0, x1) = Self::bounds(ox, self.out_w, w);
                        let mut sum = 0.0;
                        for iy in y0..y1 {
                            for ix in x0..x1 {
                                sum += x[(b, c, iy, ix)];
                            }
                        }
                        out[(b, c, oy, ox)] = sum / ((y1 - y0) * (x1 - x0)) as f64;
                    }
                }
            }
        }
        out
    }

    pub fn backward(&self, dy: &Array4<f64>, in_h: usize, in_w: usize) -> Array4<f64> {
        let (batch, ch, _, _) = dy.dim();
        let mut dx = Array4::zeros((batch, ch, in_h, in_w));
        for b in 0..batch {
            for c in 0..ch {
                for oy in 0..self.out_h {
                    let (y0, y1) = Self::bounds(oy, self.out_h, in_h);
                    for ox in 0..self.out_w {
                        let (x0, x1) = Self::bounds(ox, self.out_w, in_w);
                        let share = dy[(b, c, oy, ox)] / ((y1 - y0) * (x1 - x0)) as f64;
                        for iy in y0..y1 {
                            for ix in x0..x1 {
                                dx[(b, c, iy, ix)] += share;
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}
