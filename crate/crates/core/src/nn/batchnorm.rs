use super::{BufMut, Model, ParamMut};
use ndarray::{Array1, Array4, Axis};

/// Per-channel batch normalization over (batch, height, width).
///
/// Training mode normalizes with biased batch statistics and tracks running
/// estimates with an exponential moving average; eval mode applies the
/// stored running statistics as a fixed per-channel affine map.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub grad_gamma: Array1<f64>,
    pub grad_beta: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Forward intermediates needed by the backward pass.
#[derive(Debug)]
pub struct BnCache {
    pub xhat: Array4<f64>,
    pub inv_std: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            grad_gamma: Array1::zeros(channels),
            grad_beta: Array1::zeros(channels),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_train(&mut self, x: &Array4<f64>) -> (Array4<f64>, BnCache) {
        let (batch, ch, h, w) = x.dim();
        debug_assert_eq!(ch, self.channels());
        let n = (batch * h * w) as f64;

        let mut mean = Array1::zeros(ch);
        let mut var = Array1::zeros(ch);
        for c in 0..ch {
            let xc = x.index_axis(Axis(1), c);
            let m = xc.sum() / n;
            let v = xc.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[c] = m;
            var[c] = v;
        }
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());

        let mut xhat = x.clone();
        for c in 0..ch {
            let (m, s) = (mean[c], inv_std[c]);
            xhat.index_axis_mut(Axis(1), c)
                .mapv_inplace(|v| (v - m) * s);
        }
        let mut y = xhat.clone();
        for c in 0..ch {
            let (g, b) = (self.gamma[c], self.beta[c]);
            y.index_axis_mut(Axis(1), c).mapv_inplace(|v| g * v + b);
        }

        for c in 0..ch {
            self.running_mean[c] =
                (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean[c];
            self.running_var[c] =
                (1.0 - self.momentum) * self.running_var[c] + self.momentum * var[c];
        }
        (y, BnCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        let ch = self.channels();
        let mut y = x.clone();
        for c in 0..ch {
            let inv = 1.0 / (self.running_var[c] + self.eps).sqrt();
            let (m, g, b) = (self.running_mean[c], self.gamma[c], self.beta[c]);
            y.index_axis_mut(Axis(1), c)
                .mapv_inplace(|v| g * (v - m) * inv + b);
        }
        y
    }

    pub fn backward(&mut self, cache: &BnCache, dy: &Array4<f64>) -> Array4<f64> {
        let (batch, ch, h, w) = dy.dim();
        let n = (batch * h * w) as f64;
        let mut dx = Array4::zeros(dy.raw_dim());
        for c in 0..ch {
            let dyc = dy.index_axis(Axis(1), c);
            let xhatc = cache.xhat.index_axis(Axis(1), c);
            let sum_dy: f64 = dyc.sum();
            let sum_dy_xhat: f64 = dyc.iter().zip(xhatc.iter()).map(|(&a, &b)| a * b).sum();
            self.grad_gamma[c] += sum_dy_xhat;
            self.grad_beta[c] += sum_dy;
            let scale = self.gamma[c] * cache.inv_std[c] / n;
            let mut dxc = dx.index_axis_mut(Axis(1), c);
            ndarray::Zip::from(&mut dxc)
                .and(&dyc)
                .and(&xhatc)
                .for_each(|d, &dyv, &xh| {
                    *d = scale * (n * dyv - sum_dy - xh * sum_dy_xhat);
                });
        }
        dx
    }
}

impl Model for BatchNorm2d {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        vec![
            ParamMut {
                name: "gamma".into(),
                data: self.gamma.as_slice_mut().unwrap(),
                grad: self.grad_gamma.as_slice_mut().unwrap(),
                decay: false,
            },
            ParamMut {
                name: "beta".into(),
                data: self.beta.as_slice_mut().unwrap(),
                grad: self.grad_beta.as_slice_mut().unwrap(),
                decay: false,
            },
        ]
    }

    fn buffers_mut(&mut self) -> Vec<BufMut<'_>> {
        vec![
            BufMut {
                name: "running_mean".into(),
                data: self.running_mean.as_slice_mut().unwrap(),
            },
            BufMut {
                name: "running_var".into(),
                data: self.running_var.as_slice_mut().unwrap(),
            },
        ]
    }
}
