use super::{BufMut, Model, ParamMut};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2};

/// Fully connected layer: y = x W^T + b.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Array2<f64>, // [out, in]
    pub bias: Array1<f64>,
    pub grad_weight: Array2<f64>,
    pub grad_bias: Array1<f64>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Linear {
            weight: Array2::zeros((out_features, in_features)),
            bias: Array1::zeros(out_features),
            grad_weight: Array2::zeros((out_features, in_features)),
            grad_bias: Array1::zeros(out_features),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        for mut row in y.outer_iter_mut() {
            row += &self.bias;
        }
        y
    }

    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        general_mat_mul(1.0, &dy.t(), &x.view(), 1.0, &mut self.grad_weight.view_mut());
        for row in dy.outer_iter() {
            self.grad_bias += &row;
        }
        dy.dot(&self.weight)
    }
}

impl Model for Linear {
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
