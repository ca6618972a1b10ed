use super::{ParamMut, Model, BufMut};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4};

/// 2-D convolution with square kernels, zero padding, and bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Array4<f64>, // [out_ch, in_ch, k, k]
    pub bias: Array1<f64>,
    pub grad_weight: Array4<f64>,
    pub grad_bias: Array1<f64>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(kernel >= 1 && stride >= 1);
        Conv2d {
            weight: Array4::zeros((out_ch, in_ch, kernel, kernel)),
            bias: Array1::zeros(out_ch),
            grad_weight: Array4::zeros((out_ch, in_ch, kernel, kernel)),
            grad_bias: Array1::zeros(out_ch),
            stride,
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h + 2 * self.padding - k) / self.stride + 1,
            (w + 2 * self.padding - k) / self.stride + 1,
        )
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (batch, in_ch, h, w) = x.dim();
        assert_eq!(in_ch, self.in_channels(), "conv input channel mismatch");
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel();
        let (oc, patch) = (self.out_channels(), in_ch * k * k);
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((oc, patch))
            .expect("contiguous weight");

        let mut out = Array4::zeros((batch, oc, oh, ow));
        let mut cols = Array2::<f64>::zeros((patch, oh * ow));
        for b in 0..batch {
            let xb = x.index_axis(ndarray::Axis(0), b);
            let xb = xb.as_standard_layout();
            im2col(
                xb.as_slice().expect("contiguous input"),
                in_ch,
                h,
                w,
                k,
                self.stride,
                self.padding,
                oh,
                ow,
                cols.as_slice_mut().unwrap(),
            );
            let mut yb = out
                .index_axis_mut(ndarray::Axis(0), b)
                .into_shape_with_order((oc, oh * ow))
                .unwrap();
            general_mat_mul(1.0, &w2, &cols.view(), 0.0, &mut yb);
            for (mut row, &bias) in yb.outer_iter_mut().zip(self.bias.iter()) {
                row.mapv_inplace(|v| v + bias);
            }
        }
        out
    }

    /// Accumulate weight/bias gradients and return the input gradient.
    pub fn backward(&mut self, x: &Array4<f64>, dy: &Array4<f64>) -> Array4<f64> {
        let (batch, in_ch, h, w) = x.dim();
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel();
        let (oc, patch) = (self.out_channels(), in_ch * k * k);
        debug_assert_eq!(dy.dim(), (batch, oc, oh, ow));

        let w2 = self
            .weight
            .view()
            .into_shape_with_order((oc, patch))
            .unwrap();
        let mut gw2 = self
            .grad_weight
            .view_mut()
            .into_shape_with_order((oc, patch))
            .unwrap();

        let mut dx = Array4::zeros((batch, in_ch, h, w));
        let mut cols = Array2::<f64>::zeros((patch, oh * ow));
        let mut dcols = Array2::<f64>::zeros((patch, oh * ow));
        for b in 0..batch {
            let xb = x.index_axis(ndarray::Axis(0), b);
            let xb = xb.as_standard_layout();
            im2col(
                xb.as_slice().unwrap(),
                in_ch,
                h,
                w,
                k,
                self.stride,
                self.padding,
                oh,
                ow,
                cols.as_slice_mut().unwrap(),
            );
            let dyb = dy
                .index_axis(ndarray::Axis(0), b)
                .into_shape_with_order((oc, oh * ow))
                .unwrap();
            general_mat_mul(1.0, &dyb, &cols.t(), 1.0, &mut gw2);
            for (gb, row) in self.grad_bias.iter_mut().zip(dyb.outer_iter()) {
                *gb += row.sum();
            }
            general_mat_mul(1.0, &w2.t(), &dyb, 0.0, &mut dcols);
            let mut dxb = dx.index_axis_mut(ndarray::Axis(0), b);
            col2im_acc(
                dcols.as_slice().unwrap(),
                in_ch,
                h,
                w,
                k,
                self.stride,
                self.padding,
                oh,
                ow,
                dxb.as_slice_mut().unwrap(),
            );
        }
        dx
    }
}

impl Model for Conv2d {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        vec![
            ParamMut {
                name: "weight".into(),
                data: self.weight.as_slice_mut().unwrap(),
                grad: self.grad_weight.as_slice_mut().unwrap(),
                decay: true,
            },
            ParamMut {
                name: "bias".into(),
                data: self.bias.as_slice_mut().unwrap(),
                grad: self.grad_bias.as_slice_mut().unwrap(),
                decay: false,
            },
        ]
    }

    fn buffers_mut(&mut self) -> Vec<BufMut<'_>> {
        Vec::new()
    }
}

/// Range of output positions whose sampled input index stays in [0, n) for
/// one kernel offset: ix = ox * stride + kq - pad.
fn valid_out_range(n: usize, kq: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if kq >= pad {
        0
    } else {
        (pad - kq).div_ceil(stride)
    };
    let last_in = n as isize - 1 + pad as isize - kq as isize;
    if last_in < 0 {
        return (1, 0); // empty
    }
    (lo, last_in as usize / stride)
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    let mut row = 0usize;
    for c in 0..in_ch {
        let xc = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            let (oy_lo, oy_hi) = valid_out_range(h, ky, stride, pad);
            for kx in 0..k {
                let (ox_lo, ox_hi) = valid_out_range(w, kx, stride, pad);
                let base = row * oh * ow;
                let span = if ox_lo < ow && ox_lo <= ox_hi {
                    Some((ox_lo, ox_hi.min(ow - 1)))
                } else {
                    None
                };
                for oy in 0..oh {
                    let dst = &mut cols[base + oy * ow..base + (oy + 1) * ow];
                    if oy < oy_lo || oy > oy_hi {
                        dst.fill(0.0);
                        continue;
                    }
                    let iy = oy * stride + ky - pad;
                    let src = &xc[iy * w..(iy + 1) * w];
                    match span {
                        None => dst.fill(0.0),
                        Some((lo, hi)) => {
                            dst[..lo].fill(0.0);
                            if stride == 1 {
                                let ix0 = lo + kx - pad;
                                dst[lo..=hi].copy_from_slice(&src[ix0..ix0 + hi - lo + 1]);
                            } else {
                                for ox in lo..=hi {
                                    dst[ox] = src[ox * stride + kx - pad];
                                }
                            }
                            if hi + 1 < ow {
                                dst[hi + 1..].fill(0.0);
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_acc(
    cols: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dx: &mut [f64],
) {
    let mut row = 0usize;
    for c in 0..in_ch {
        let base_x = c * h * w;
        for ky in 0..k {
            let (oy_lo, oy_hi) = valid_out_range(h, ky, stride, pad);
            for kx in 0..k {
                let (ox_lo, ox_hi) = valid_out_range(w, kx, stride, pad);
                let base = row * oh * ow;
                if ox_lo <= ox_hi {
                    let hi_x = ox_hi.min(ow - 1);
                    for oy in oy_lo..=oy_hi.min(oh - 1) {
                        let iy = oy * stride + ky - pad;
                        let src = &cols[base + oy * ow..base + (oy + 1) * ow];
                        let dst = &mut dx[base_x + iy * w..base_x + (iy + 1) * w];
                        for ox in ox_lo..=hi_x {
                            dst[ox * stride + kx - pad] += src[ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}
