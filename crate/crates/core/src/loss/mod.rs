//! Class-balanced multi-level loss: median-frequency class weights, per-side
//! and fused plane losses, and the lambda-weighted total.

use crate::error::{Error, Result};
use crate::plane::{MaskPlane, ProbabilityPlane};
use ndarray::Array4;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Crack / non-crack loss weights from median frequency balancing:
/// alpha_crack = (p+q)/(2p), alpha_noncrack = (p+q)/(2q) for p crack and
/// q non-crack pixels in the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub alpha_crack: f64,
    pub alpha_noncrack: f64,
    pub p: u64,
    pub q: u64,
}

impl ClassWeights {
    /// Unit weights; the balanced losses reduce to plain cross entropy.
    pub fn unit() -> Self {
        ClassWeights {
            alpha_crack: 1.0,
            alpha_noncrack: 1.0,
            p: 1,
            q: 1,
        }
    }

    /// The inverse weights (2p/(p+q), 2q/(p+q)) computed directly from the
    /// counts. Formed this way the pair sums to exactly 2.0, which is the
    /// floating-point statement of the median-frequency identity
    /// 1/alpha_crack + 1/alpha_noncrack = 2.
    pub fn inverse_weights(&self) -> (f64, f64) {
        let total = (self.p + self.q) as f64;
        (
            2.0 * self.p as f64 / total,
            2.0 * self.q as f64 / total,
        )
    }
}

/// Count crack/non-crack pixels over the training masks and derive the
/// balancing weights.
pub fn compute_class_weights<'a, I>(train_masks: I) -> Result<ClassWeights>
where
    I: IntoIterator<Item = &'a MaskPlane>,
{
    let mut p: u64 = 0;
    let mut total: u64 = 0;
    for mask in train_masks {
        p += mask.crack_pixels();
        total += mask.total_pixels();
    }
    if total == 0 {
        return Err(Error::invalid("class weights require a nonempty mask set"));
    }
    let q = total - p;
    if p == 0 || q == 0 {
        return Err(Error::invalid(format!(
            "degenerate class balance: p={p}, q={q}"
        )));
    }
    Ok(ClassWeights {
        alpha_crack: total as f64 / (2.0 * p as f64),
        alpha_noncrack: total as f64 / (2.0 * q as f64),
        p,
        q,
    })
}

/// Cache the weights as JSON `{p, q, alpha_crack, alpha_noncrack}`.
pub fn save_class_weights(path: &Path, weights: &ClassWeights) -> Result<()> {
    #[derive(Serialize)]
    struct Cache {
        p: u64,
        q: u64,
        alpha_crack: f64,
        alpha_noncrack: f64,
    }
    let body = serde_json::to_string_pretty(&Cache {
        p: weights.p,
        q: weights.q,
        alpha_crack: weights.alpha_crack,
        alpha_noncrack: weights.alpha_noncrack,
    })?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_class_weights(path: &Path) -> Result<ClassWeights> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let weights: ClassWeights = serde_json::from_str(&body)?;
    Ok(weights)
}

/// Per-level weights for the five side outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights(pub [f64; 5]);

impl LambdaWeights {
    pub fn new(lambdas: [f64; 5]) -> Result<Self> {
        if lambdas.iter().any(|&l| !l.is_finite() || l < 0.0) {
            return Err(Error::invalid(
                "lambda weights must be finite and nonnegative",
            ));
        }
        Ok(LambdaWeights(lambdas))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != 5 {
            return Err(Error::invalid(format!(
                "expected 5 lambda weights, got {}",
                values.len()
            )));
        }
        Self::new([values[0], values[1], values[2], values[3], values[4]])
    }
}

/// The published weighting cases. Case 7 is the best-performing setting
/// {0.5, 1.0, 0.8, 0.5, 0.3}.
pub fn lambda_case(id: u8) -> Result<LambdaWeights> {
    let values = match id {
        1 => [4.0, 2.0, 1.0, 0.5, 0.25],
        2 => [9.0, 3.0, 1.0, 1.0 / 3.0, 1.0 / 9.0],
        3 => [0.25, 0.5, 1.0, 2.0, 4.0],
        4 => [1.0 / 9.0, 1.0 / 3.0, 1.0, 3.0, 9.0],
        5 => [1.0, 1.0, 1.0, 1.0, 1.0],
        6 => [0.3, 0.7, 1.0, 0.7, 0.3],
        7 => [0.5, 1.0, 0.8, 0.5, 0.3],
        _ => {
            return Err(Error::invalid(format!(
                "lambda case id must be 1..=7, got {id}"
            )))
        }
    };
    Ok(LambdaWeights(values))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check_plane_shapes(prob: &ProbabilityPlane, gt: &MaskPlane) -> Result<()> {
    if prob.height() != gt.height() || prob.width() != gt.width() {
        return Err(Error::shape(format!(
            "probability {}x{} vs mask {}x{}",
            prob.height(),
            prob.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

/// Class-balanced cross entropy for one side-output plane, summed over
/// pixels: -alpha_crack * sum_{crack} log P - alpha_noncrack *
/// sum_{non-crack} log(1 - P).
pub fn side_loss(prob: &ProbabilityPlane, gt: &MaskPlane, w: &ClassWeights) -> Result<f64> {
    check_plane_shapes(prob, gt)?;
    let mut crack_term = 0.0;
    let mut non_term = 0.0;
    for (&p, &t) in prob.values().iter().zip(gt.values().iter()) {
        let p = clamp_prob(p);
        if t == 1 {
            crack_term -= p.ln();
        } else {
            non_term -= (1.0 - p).ln();
        }
    }
    Ok(w.alpha_crack * crack_term + w.alpha_noncrack * non_term)
}

/// Loss for the fused plane; identical in form to the side loss.
pub fn fused_loss(prob: &ProbabilityPlane, gt: &MaskPlane, w: &ClassWeights) -> Result<f64> {
    side_loss(prob, gt, w)
}

/// Total loss: sum_h lambda_h * side_loss_h + fused_loss.
pub fn total_loss(
    sides: &[ProbabilityPlane; 5],
    fused: &ProbabilityPlane,
    gt: &MaskPlane,
    w: &ClassWeights,
    lam: &LambdaWeights,
) -> Result<f64> {
    let mut total = 0.0;
    for (prob, &lambda) in sides.iter().zip(lam.0.iter()) {
        total += lambda * side_loss(prob, gt, w)?;
    }
    total += fused_loss(fused, gt, w)?;
    Ok(total)
}

/// How per-image pixel sums are reduced across a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    /// Pixel sum per image, mean over the batch (default).
    ImageSum,
    /// Pixel mean per image, mean over the batch.
    PixelMean,
}

impl Default for Reduction {
    fn default() -> Self {
        Reduction::ImageSum
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image_sum" => Ok(Reduction::ImageSum),
            "pixel_mean" => Ok(Reduction::PixelMean),
            other => Err(Error::invalid(format!(
                "unknown loss reduction {other:?} (expected image_sum or pixel_mean)"
            ))),
        }
    }
}

/// The full training criterion: balancing weights, level weights, and the
/// batch reduction. Produces both the loss value and its gradient with
/// respect to the six logit planes.
#[derive(Debug, Clone)]
pub struct BalancedLoss {
    pub weights: ClassWeights,
    pub lambdas: LambdaWeights,
    pub reduction: Reduction,
}

impl BalancedLoss {
    pub fn new(weights: ClassWeights, lambdas: LambdaWeights) -> Self {
        BalancedLoss {
            weights,
            lambdas,
            reduction: Reduction::ImageSum,
        }
    }

    /// Loss over a batch of logit planes, plus the gradient of the loss in
    /// the logits. Planes are (batch, 1, h, w); masks give the ground truth
    /// per batch item.
    pub fn batch_loss_and_grad(
        &self,
        side_logits: &[Array4<f64>; 5],
        fused_logits: &Array4<f64>,
        gts: &[MaskPlane],
    ) -> Result<(f64, [Array4<f64>; 5], Array4<f64>)> {
        let batch = fused_logits.shape()[0];
        if gts.len() != batch {
            return Err(Error::shape(format!(
                "{} masks for a batch of {batch}",
                gts.len()
            )));
        }
        let (h, w) = (fused_logits.shape()[2], fused_logits.shape()[3]);
        for (i, gt) in gts.iter().enumerate() {
            if gt.height() != h || gt.width() != w {
                return Err(Error::shape(format!(
                    "mask {i} is {}x{}, logits are {h}x{w}",
                    gt.height(),
                    gt.width()
                )));
            }
        }

        let pixel_scale = match self.reduction {
            Reduction::ImageSum => 1.0,
            Reduction::PixelMean => 1.0 / (h * w) as f64,
        };
        let batch_scale = 1.0 / batch as f64;

        let mut total = 0.0;
        let mut side_grads: [Array4<f64>; 5] =
            std::array::from_fn(|i| Array4::zeros(side_logits[i].raw_dim()));
        let mut fused_grad = Array4::zeros(fused_logits.raw_dim());

        for level in 0..6 {
            let (logits, lambda) = if level < 5 {
                (&side_logits[level], self.lambdas.0[level])
            } else {
                (fused_logits, 1.0)
            };
            if logits.shape() != fused_logits.shape() {
                return Err(Error::shape(
                    "side and fused logit planes must share one shape",
                ));
            }
            let scale = lambda * pixel_scale * batch_scale;
            let grad = if level < 5 {
                &mut side_grads[level]
            } else {
                &mut fused_grad
            };
            for b in 0..batch {
                let gt = &gts[b];
                for r in 0..h {
                    for c in 0..w {
                        let z = logits[(b, 0, r, c)];
                        let prob = sigmoid(z);
                        let clamped = clamp_prob(prob);
                        let in_range = (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&prob);
                        if gt.get(r, c) == 1 {
                            total -= scale * self.weights.alpha_crack * clamped.ln();
                            if in_range {
                                grad[(b, 0, r, c)] =
                                    -scale * self.weights.alpha_crack * (1.0 - prob);
                            }
                        } else {
                            total -= scale * self.weights.alpha_noncrack * (1.0 - clamped).ln();
                            if in_range {
                                grad[(b, 0, r, c)] =
                                    scale * self.weights.alpha_noncrack * prob;
                            }
                        }
                    }
                }
            }
        }
        Ok((total, side_grads, fused_grad))
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests;
