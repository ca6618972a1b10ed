//! The feature-pyramid segmentation network: a 13-conv VGG-16-style
//! backbone in five blocks, per-block 1x1 side outputs upsampled to input
//! resolution, and a 1x1 fusion over the five-plane stack.
//!
//! Side taps are taken from each block's final conv unit *before* that
//! block's pool, so the first side output is at native resolution and the
//! taps for a 256x256 input sit at 256/128/64/32/16.

use crate::error::{Error, Result};
use crate::nn::{
    prefixed, prefixed_bufs, relu, relu_backward, upsample_bilinear,
    upsample_bilinear_backward, BatchNorm2d, BnCache, BufMut, Conv2d, MaxPool2d, Model,
    ParamMut,
};
use crate::plane::ProbabilityPlane;
use ndarray::{Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Conv units per block; 13 in total.
pub const BLOCK_CONVS: [usize; 5] = [2, 2, 3, 3, 3];

/// 2x2 max pooling follows blocks 1-4; the last block keeps its resolution.
pub const POOLED_BLOCKS: [bool; 5] = [true, true, true, true, false];

const DOWNSCALE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegConfig {
    pub in_channels: usize,
    pub block_channels: [usize; 5],
    pub use_batchnorm: bool,
    /// Resolution samples are resized to before entering the network.
    pub input_size: usize,
}

impl Default for SegConfig {
    fn default() -> Self {
        SegConfig {
            in_channels: 3,
            block_channels: [64, 128, 256, 512, 512],
            use_batchnorm: true,
            input_size: 256,
        }
    }
}

impl SegConfig {
    /// Reduced-width preset for CPU-scale runs and tests.
    pub fn tiny() -> Self {
        SegConfig {
            in_channels: 3,
            block_channels: [8, 16, 32, 64, 64],
            use_batchnorm: true,
            input_size: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_channels.iter().any(|&c| c == 0) || self.in_channels == 0 {
            return Err(Error::invalid("channel counts must be positive"));
        }
        if self.input_size == 0 || self.input_size % DOWNSCALE != 0 {
            return Err(Error::invalid(format!(
                "input size must be a positive multiple of {DOWNSCALE}, got {}",
                self.input_size
            )));
        }
        Ok(())
    }
}

/// The five per-block prediction planes plus the fused plane for one input,
/// all at input resolution, as raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SideOutputBundle {
    pub side: [Array2<f64>; 5],
    pub fused: Array2<f64>,
}

/// Per-plane sigmoid probabilities of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityBundle {
    pub side: [ProbabilityPlane; 5],
    pub fused: ProbabilityPlane,
}

/// Batched logit planes, each (batch, 1, h, w).
#[derive(Debug, Clone, PartialEq)]
pub struct BundleBatch {
    pub side: [Array4<f64>; 5],
    pub fused: Array4<f64>,
}

impl BundleBatch {
    pub fn batch_len(&self) -> usize {
        self.fused.shape()[0]
    }

    /// Split into per-sample bundles.
    pub fn split(&self) -> Vec<SideOutputBundle> {
        (0..self.batch_len())
            .map(|b| SideOutputBundle {
                side: std::array::from_fn(|i| {
                    self.side[i]
                        .index_axis(Axis(0), b)
                        .index_axis(Axis(0), 0)
                        .to_owned()
                }),
                fused: self
                    .fused
                    .index_axis(Axis(0), b)
                    .index_axis(Axis(0), 0)
                    .to_owned(),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct ConvUnit {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
}

impl ConvUnit {
    fn new(in_ch: usize, out_ch: usize, use_bn: bool) -> Self {
        ConvUnit {
            conv: Conv2d::new(in_ch, out_ch, 3, 1, 1),
            bn: use_bn.then(|| BatchNorm2d::new(out_ch)),
        }
    }
}

struct UnitCache {
    conv_input: Array4<f64>,
    bn: Option<BnCache>,
    relu_out: Array4<f64>,
}

/// Everything the backward pass needs from one training forward.
pub struct ForwardCache {
    units: Vec<Vec<UnitCache>>,
    pool_argmax: Vec<Array4<usize>>,
    tap_dims: [(usize, usize); 5],
    stacked: Array4<f64>,
}

#[derive(Debug, Clone)]
pub struct CrackNet {
    pub config: SegConfig,
    blocks: Vec<Vec<ConvUnit>>,
    pub side_convs: Vec<Conv2d>,
    pub fuse_conv: Conv2d,
    pool: MaxPool2d,
}

impl CrackNet {
    pub fn new(config: SegConfig) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(5);
        let mut in_ch = config.in_channels;
        for (block_idx, &out_ch) in config.block_channels.iter().enumerate() {
            let mut units = Vec::with_capacity(BLOCK_CONVS[block_idx]);
            for _ in 0..BLOCK_CONVS[block_idx] {
                units.push(ConvUnit::new(in_ch, out_ch, config.use_batchnorm));
                in_ch = out_ch;
            }
            blocks.push(units);
        }
        let side_convs = config
            .block_channels
            .iter()
            .map(|&ch| Conv2d::new(ch, 1, 1, 1, 0))
            .collect();
        let fuse_conv = Conv2d::new(5, 1, 1, 1, 0);
        Ok(CrackNet {
            config,
            blocks,
            side_convs,
            fuse_conv,
            pool: MaxPool2d::new(2, 2, 0),
        })
    }

    /// Total backbone convolution layers (excludes the 1x1 side/fuse convs).
    pub fn conv_layer_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn conv_counts(&self) -> [usize; 5] {
        std::array::from_fn(|i| self.blocks[i].len())
    }

    /// Draw all conv weights from a zero-mean normal (std 0.01), zero the
    /// biases, and reset batch-norm to identity with fresh running stats.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut self.blocks {
            for unit in block {
                crate::nn::fill_normal(&mut rng, 0.01, unit.conv.weight.as_slice_mut().unwrap());
                unit.conv.bias.fill(0.0);
                if let Some(bn) = &mut unit.bn {
                    bn.gamma.fill(1.0);
                    bn.beta.fill(0.0);
                    bn.running_mean.fill(0.0);
                    bn.running_var.fill(1.0);
                }
            }
        }
        for side in &mut self.side_convs {
            crate::nn::fill_normal(&mut rng, 0.01, side.weight.as_slice_mut().unwrap());
            side.bias.fill(0.0);
        }
        crate::nn::fill_normal(&mut rng, 0.01, self.fuse_conv.weight.as_slice_mut().unwrap());
        self.fuse_conv.bias.fill(0.0);
    }

    fn validate_input(&self, x: &Array4<f64>) -> Result<(usize, usize)> {
        let (_, ch, h, w) = x.dim();
        if ch != self.config.in_channels {
            return Err(Error::shape(format!(
                "expected {} input channels, got {ch}",
                self.config.in_channels
            )));
        }
        if h == 0 || w == 0 || h % DOWNSCALE != 0 || w % DOWNSCALE != 0 {
            return Err(Error::invalid(format!(
                "input spatial size {h}x{w} must be a positive multiple of {DOWNSCALE}"
            )));
        }
        Ok((h, w))
    }

    /// Deterministic eval-mode forward (batch-norm running statistics).
    pub fn forward_batch(&self, x: &Array4<f64>) -> Result<BundleBatch> {
        Ok(self.forward_inspect(x)?.0)
    }

    /// Eval-mode forward that also reports the pre-upsample tap sizes.
    pub fn forward_inspect(
        &self,
        x: &Array4<f64>,
    ) -> Result<(BundleBatch, [(usize, usize); 5])> {
        let (h, w) = self.validate_input(x)?;
        let mut cur = x.clone();
        let mut taps: Vec<Array4<f64>> = Vec::with_capacity(5);
        for (block_idx, block) in self.blocks.iter().enumerate() {
            for unit in block {
                cur = unit.conv.forward(&cur);
                if let Some(bn) = &unit.bn {
                    cur = bn.forward_eval(&cur);
                }
                cur = relu(&cur);
            }
            taps.push(cur.clone());
            if POOLED_BLOCKS[block_idx] {
                cur = self.pool.forward(&cur).0;
            }
        }
        let tap_dims = std::array::from_fn(|i| {
            let d = taps[i].dim();
            (d.2, d.3)
        });
        let side: [Array4<f64>; 5] = std::array::from_fn(|i| {
            upsample_bilinear(&self.side_convs[i].forward(&taps[i]), h, w)
        });
        let stacked = stack_planes(&side);
        let fused = self.fuse_conv.forward(&stacked);
        Ok((BundleBatch { side, fused }, tap_dims))
    }

    /// Per-sample bundles in eval mode.
    pub fn forward(&self, x: &Array4<f64>) -> Result<Vec<SideOutputBundle>> {
        Ok(self.forward_batch(x)?.split())
    }

    /// Training-mode forward (batch statistics) with a backward cache.
    pub fn forward_train(&mut self, x: &Array4<f64>) -> Result<(BundleBatch, ForwardCache)> {
        let (h, w) = self.validate_input(x)?;
        let mut cur = x.clone();
        let mut units: Vec<Vec<UnitCache>> = Vec::with_capacity(5);
        let mut pool_argmax = Vec::with_capacity(4);
        let mut taps: Vec<Array4<f64>> = Vec::with_capacity(5);
        for (block_idx, block) in self.blocks.iter_mut().enumerate() {
            let mut block_caches = Vec::with_capacity(block.len());
            for unit in block {
                let conv_input = cur;
                cur = unit.conv.forward(&conv_input);
                let bn_cache = match &mut unit.bn {
                    Some(bn) => {
                        let (y, cache) = bn.forward_train(&cur);
                        cur = y;
                        Some(cache)
                    }
                    None => None,
                };
                cur = relu(&cur);
                block_caches.push(UnitCache {
                    conv_input,
                    bn: bn_cache,
                    relu_out: cur.clone(),
                });
            }
            units.push(block_caches);
            taps.push(cur.clone());
            if POOLED_BLOCKS[block_idx] {
                let (pooled, argmax) = self.pool.forward(&cur);
                pool_argmax.push(argmax);
                cur = pooled;
            }
        }
        let tap_dims = std::array::from_fn(|i| {
            let d = taps[i].dim();
            (d.2, d.3)
        });
        let side: [Array4<f64>; 5] = std::array::from_fn(|i| {
            upsample_bilinear(&self.side_convs[i].forward(&taps[i]), h, w)
        });
        let stacked = stack_planes(&side);
        let fused = self.fuse_conv.forward(&stacked);
        Ok((
            BundleBatch { side, fused },
            ForwardCache {
                units,
                pool_argmax,
                tap_dims,
                stacked,
            },
        ))
    }

    /// Backpropagate bundle-level gradients, accumulating into every layer's
    /// gradient buffers. `d_side` are gradients in the upsampled side logits,
    /// `d_fused` in the fused logits.
    pub fn backward(
        &mut self,
        cache: &ForwardCache,
        d_side: &[Array4<f64>; 5],
        d_fused: &Array4<f64>,
    ) {
        let d_stacked = self.fuse_conv.backward(&cache.stacked, d_fused);

        // Gradient reaching each block's tap (pre-pool activation).
        let mut d_taps: Vec<Array4<f64>> = Vec::with_capacity(5);
        for i in 0..5 {
            let through_fuse = d_stacked.slice(ndarray::s![.., i..i + 1, .., ..]).to_owned();
            let d_up = &d_side[i] + &through_fuse;
            let (th, tw) = cache.tap_dims[i];
            let d_pre_up = upsample_bilinear_backward(&d_up, th, tw);
            let tap = &cache.units[i].last().unwrap().relu_out;
            d_taps.push(self.side_convs[i].backward(tap, &d_pre_up));
        }

        let mut flowing: Option<Array4<f64>> = None;
        for block_idx in (0..5).rev() {
            let mut g = match flowing.take() {
                Some(from_above) => {
                    let (th, tw) = cache.tap_dims[block_idx];
                    let unpooled =
                        self.pool
                            .backward(&from_above, &cache.pool_argmax[block_idx], th, tw);
                    unpooled + &d_taps[block_idx]
                }
                None => d_taps[block_idx].clone(),
            };
            let block = &mut self.blocks[block_idx];
            for (unit, unit_cache) in block.iter_mut().zip(&cache.units[block_idx]).rev() {
                g = relu_backward(&g, &unit_cache.relu_out);
                if let Some(bn) = &mut unit.bn {
                    g = bn.backward(unit_cache.bn.as_ref().unwrap(), &g);
                }
                g = unit.conv.backward(&unit_cache.conv_input, &g);
            }
            flowing = Some(g);
        }
    }
}

fn stack_planes(side: &[Array4<f64>; 5]) -> Array4<f64> {
    let (batch, _, h, w) = side[0].dim();
    let mut out = Array4::zeros((batch, 5, h, w));
    for (i, plane) in side.iter().enumerate() {
        out.slice_mut(ndarray::s![.., i..i + 1, .., ..]).assign(plane);
    }
    out
}

/// Elementwise logistic sigmoid of every plane in a bundle.
pub fn predict_probability(bundle: &SideOutputBundle) -> Result<ProbabilityBundle> {
    let to_prob = |plane: &Array2<f64>| -> Result<ProbabilityPlane> {
        if plane.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite logits"));
        }
        ProbabilityPlane::new(plane.mapv(crate::nn::sigmoid_scalar))
    };
    Ok(ProbabilityBundle {
        side: [
            to_prob(&bundle.side[0])?,
            to_prob(&bundle.side[1])?,
            to_prob(&bundle.side[2])?,
            to_prob(&bundle.side[3])?,
            to_prob(&bundle.side[4])?,
        ],
        fused: to_prob(&bundle.fused)?,
    })
}

impl Model for CrackNet {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            for (ui, unit) in block.iter_mut().enumerate() {
                out.extend(prefixed(
                    &format!("block{bi}.conv{ui}"),
                    unit.conv.params_mut(),
                ));
                if let Some(bn) = &mut unit.bn {
                    out.extend(prefixed(&format!("block{bi}.bn{ui}"), bn.params_mut()));
                }
            }
        }
        for (i, side) in self.side_convs.iter_mut().enumerate() {
            out.extend(prefixed(&format!("side{i}"), side.params_mut()));
        }
        out.extend(prefixed("fuse", self.fuse_conv.params_mut()));
        out
    }

    fn buffers_mut(&mut self) -> Vec<BufMut<'_>> {
        let mut out = Vec::new();
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            for (ui, unit) in block.iter_mut().enumerate() {
                if let Some(bn) = &mut unit.bn {
                    out.extend(prefixed_bufs(&format!("block{bi}.bn{ui}"), bn.buffers_mut()));
                }
            }
        }
        out
    }
}
