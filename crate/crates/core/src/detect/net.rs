//! Classifier backbones. The plain sequential container covers the tiny CNN
//! and the AlexNet/VGG-style conv trunks; residual nets get their own type.
//! Every backbone ends in global average pooling and a 2-way linear head.

use crate::error::{Error, Result};
use crate::nn::{
    prefixed, prefixed_bufs, relu, relu_backward, AdaptiveAvgPool, BatchNorm2d, BnCache,
    BufMut, Conv2d, Linear, MaxPool2d, Model, ParamMut,
};
use ndarray::{Array2, Array4};

#[derive(Debug, Clone)]
pub(super) enum Op {
    Conv(Conv2d),
    Bn(BatchNorm2d),
    Relu,
    Pool(MaxPool2d),
}

pub(super) enum OpCache {
    Conv { input: Array4<f64> },
    Bn { cache: BnCache },
    Relu { out: Array4<f64> },
    Pool { argmax: Array4<usize>, in_hw: (usize, usize) },
}

#[derive(Debug, Clone)]
pub(super) struct PlainNet {
    pub ops: Vec<Op>,
    pub head: Linear,
    pub features: usize,
}

pub(super) struct PlainCache {
    ops: Vec<OpCache>,
    gap_in_hw: (usize, usize),
    head_input: Array2<f64>,
}

fn checked_conv_hw(h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<(usize, usize)> {
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::invalid(format!(
            "spatial size {h}x{w} too small for kernel {k} (pad {pad})"
        )));
    }
    Ok(((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1))
}

impl PlainNet {
    /// Verify the op chain stays spatially valid for a square input.
    pub fn validate_input(&self, size: usize) -> Result<()> {
        let (mut h, mut w) = (size, size);
        for op in &self.ops {
            match op {
                Op::Conv(c) => {
                    let (nh, nw) = checked_conv_hw(h, w, c.kernel(), c.stride, c.padding)?;
                    h = nh;
                    w = nw;
                }
                Op::Pool(p) => {
                    let (nh, nw) = checked_conv_hw(h, w, p.kernel, p.stride, p.padding)?;
                    h = nh;
                    w = nw;
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn forward_eval(&self, x: &Array4<f64>) -> Array2<f64> {
        let mut cur = x.clone();
        for op in &self.ops {
            cur = match op {
                Op::Conv(c) => c.forward(&cur),
                Op::Bn(bn) => bn.forward_eval(&cur),
                Op::Relu => relu(&cur),
                Op::Pool(p) => p.forward(&cur).0,
            };
        }
        let gap = AdaptiveAvgPool::new(1, 1).forward(&cur);
        let (b, c, _, _) = gap.dim();
        let flat = gap.into_shape_with_order((b, c)).unwrap();
        self.head.forward(&flat)
    }

    pub fn forward_train(&mut self, x: &Array4<f64>) -> (Array2<f64>, PlainCache) {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.ops.len());
        for op in &mut self.ops {
            cur = match op {
                Op::Conv(c) => {
                    let input = cur;
                    let out = c.forward(&input);
                    caches.push(OpCache::Conv { input });
                    out
                }
                Op::Bn(bn) => {
                    let (out, cache) = bn.forward_train(&cur);
                    caches.push(OpCache::Bn { cache });
                    out
                }
                Op::Relu => {
                    let out = relu(&cur);
                    caches.push(OpCache::Relu { out: out.clone() });
                    out
                }
                Op::Pool(p) => {
                    let in_hw = (cur.dim().2, cur.dim().3);
                    let (out, argmax) = p.forward(&cur);
                    caches.push(OpCache::Pool { argmax, in_hw });
                    out
                }
            };
        }
        let gap_in_hw = (cur.dim().2, cur.dim().3);
        let gap = AdaptiveAvgPool::new(1, 1).forward(&cur);
        let (b, c, _, _) = gap.dim();
        let head_input = gap.into_shape_with_order((b, c)).unwrap();
        let logits = self.head.forward(&head_input);
        (
            logits,
            PlainCache {
                ops: caches,
                gap_in_hw,
                head_input,
            },
        )
    }

    pub fn backward(&mut self, cache: &PlainCache, d_logits: &Array2<f64>) {
        let d_flat = self.head.backward(&cache.head_input, d_logits);
        let (b, c) = d_flat.dim();
        let d_gap = d_flat.into_shape_with_order((b, c, 1, 1)).unwrap();
        let mut g = AdaptiveAvgPool::new(1, 1).backward(&d_gap, cache.gap_in_hw.0, cache.gap_in_hw.1);
        for (op, op_cache) in self.ops.iter_mut().zip(cache.ops.iter()).rev() {
            g = match (op, op_cache) {
                (Op::Conv(conv), OpCache::Conv { input }) => conv.backward(input, &g),
                (Op::Bn(bn), OpCache::Bn { cache }) => bn.backward(cache, &g),
                (Op::Relu, OpCache::Relu { out }) => relu_backward(&g, out),
                (Op::Pool(p), OpCache::Pool { argmax, in_hw }) => {
                    p.backward(&g, argmax, in_hw.0, in_hw.1)
                }
                _ => unreachable!("op/cache streams stay aligned"),
            };
        }
    }
}

impl Model for PlainNet {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        for (i, op) in self.ops.iter_mut().enumerate() {
            match op {
                Op::Conv(c) => out.extend(prefixed(&format!("op{i}.conv"), c.params_mut())),
                Op::Bn(bn) => out.extend(prefixed(&format!("op{i}.bn"), bn.params_mut())),
                _ => {}
            }
        }
        out.extend(prefixed("head", self.head.params_mut()));
        out
    }

    fn buffers_mut(&mut self) -> Vec<BufMut<'_>> {
        let mut out = Vec::new();
        for (i, op) in self.ops.iter_mut().enumerate() {
            if let Op::Bn(bn) = op {
                out.extend(prefixed_bufs(&format!("op{i}.bn"), bn.buffers_mut()));
            }
        }
        out
    }
}

/// Residual basic block: two 3x3 conv+bn units with an identity or
/// projected skip connection.
#[derive(Debug, Clone)]
pub(super) struct BasicBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub down: Option<(Conv2d, BatchNorm2d)>,
}

pub(super) struct BlockCache {
    input: Array4<f64>,
    bn1: BnCache,
    relu1_out: Array4<f64>,
    bn2: BnCache,
    down_bn: Option<BnCache>,
    out: Array4<f64>,
}

impl BasicBlock {
    fn new(in_ch: usize, out_ch: usize, stride: usize) -> Self {
        let down = (stride != 1 || in_ch != out_ch).then(|| {
            (
                Conv2d::new(in_ch, out_ch, 1, stride, 0),
                BatchNorm2d::new(out_ch),
            )
        });
        BasicBlock {
            conv1: Conv2d::new(in_ch, out_ch, 3, stride, 1),
            bn1: BatchNorm2d::new(out_ch),
            conv2: Conv2d::new(out_ch, out_ch, 3, 1, 1),
            bn2: BatchNorm2d::new(out_ch),
            down,
        }
    }

    fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        let y = relu(&self.bn1.forward_eval(&self.conv1.forward(x)));
        let z = self.bn2.forward_eval(&self.conv2.forward(&y));
        let skip = match &self.down {
            Some((conv, bn)) => bn.forward_eval(&conv.forward(x)),
            None => x.clone(),
        };
        relu(&(z + skip))
    }

    fn forward_train(&mut self, x: &Array4<f64>) -> (Array4<f64>, BlockCache) {
        let input = x.clone();
        let (pre1, bn1) = self.bn1.forward_train(&self.conv1.forward(&input));
        let relu1_out = relu(&pre1);
        let (z, bn2) = self.bn2.forward_train(&self.conv2.forward(&relu1_out));
        let (skip, down_bn) = match &mut self.down {
            Some((conv, bn)) => {
                let (s, c) = bn.forward_train(&conv.forward(&input));
                (s, Some(c))
            }
            None => (input.clone(), None),
        };
        let out = relu(&(z + skip));
        (
            out.clone(),
            BlockCache {
                input,
                bn1,
                relu1_out,
                bn2,
                down_bn,
                out,
            },
        )
    }

    fn backward(&mut self, cache: &BlockCache, dy: &Array4<f64>) -> Array4<f64> {
        let g = relu_backward(dy, &cache.out);
        // Residual add fans the gradient into both branches.
        let g_main = self.bn2.backward(&cache.bn2, &g);
        let g_main = self.conv2.backward(&cache.relu1_out, &g_main);
        let g_main = relu_backward(&g_main, &cache.relu1_out);
        let g_main = self.bn1.backward(&cache.bn1, &g_main);
        let mut dx = self.conv1.backward(&cache.input, &g_main);
        match &mut self.down {
            Some((conv, bn)) => {
                let g_skip = bn.backward(cache.down_bn.as_ref().unwrap(), &g);
                dx = dx + conv.backward(&cache.input, &g_skip);
            }
            None => dx = dx + &g,
        }
        dx
    }
}

/// 18-layer residual network: a 7x7 stem, four stages of two basic blocks,
/// global average pooling, 2-way head.
#[derive(Debug, Clone)]
pub(super) struct ResNet {
    pub stem_conv: Conv2d,
    pub stem_bn: BatchNorm2d,
    pub stem_pool: MaxPool2d,
    pub blocks: Vec<BasicBlock>,
    pub head: Linear,
}

pub(super) struct ResCache {
    stem_input: Array4<f64>,
    stem_bn: BnCache,
    stem_relu_out: Array4<f64>,
    stem_pool_argmax: Array4<usize>,
    stem_pool_in_hw: (usize, usize),
    blocks: Vec<BlockCache>,
    gap_in_hw: (usize, usize),
    head_input: Array2<f64>,
}

impl ResNet {
    pub fn resnet18() -> Self {
        let mut blocks = Vec::new();
        let stages = [(64, 64, 1), (64, 128, 2), (128, 256, 2), (256, 512, 2)];
        for (in_ch, out_ch, stride) in stages {
            blocks.push(BasicBlock::new(in_ch, out_ch, stride));
            blocks.push(BasicBlock::new(out_ch, out_ch, 1));
        }
        ResNet {
            stem_conv: Conv2d::new(3, 64, 7, 2, 3),
            stem_bn: BatchNorm2d::new(64),
            stem_pool: MaxPool2d::new(3, 2, 1),
            blocks,
            head: Linear::new(512, 2),
        }
    }

    pub fn validate_input(&self, size: usize) -> Result<()> {
        let (mut h, mut w) = checked_conv_hw(size, size, 7, 2, 3)?;
        let (nh, nw) = checked_conv_hw(h, w, 3, 2, 1)?;
        h = nh;
        w = nw;
        for block in &self.blocks {
            let (nh, nw) = checked_conv_hw(h, w, 3, block.conv1.stride, 1)?;
            h = nh;
            w = nw;
        }
        if h == 0 || w == 0 {
            return Err(Error::invalid("input collapses to zero size"));
        }
        Ok(())
    }

    pub fn forward_eval(&self, x: &Array4<f64>) -> Array2<f64> {
        let mut cur = relu(&self.stem_bn.forward_eval(&self.stem_conv.forward(x)));
        cur = self.stem_pool.forward(&cur).0;
        for block in &self.blocks {
            cur = block.forward_eval(&cur);
        }
        let gap = AdaptiveAvgPool::new(1, 1).forward(&cur);
        let (b, c, _, _) = gap.dim();
        self.head.forward(&gap.into_shape_with_order((b, c)).unwrap())
    }

    pub fn forward_train(&mut self, x: &Array4<f64>) -> (Array2<f64>, ResCache) {
        let stem_input = x.clone();
        let (pre, stem_bn) = self.stem_bn.forward_train(&self.stem_conv.forward(&stem_input));
        let stem_relu_out = relu(&pre);
        let stem_pool_in_hw = (stem_relu_out.dim().2, stem_relu_out.dim().3);
        let (mut cur, stem_pool_argmax) = self.stem_pool.forward(&stem_relu_out);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (out, cache) = block.forward_train(&cur);
            cur = out;
            blocks.push(cache);
        }
        let gap_in_hw = (cur.dim().2, cur.dim().3);
        let gap = AdaptiveAvgPool::new(1, 1).forward(&cur);
        let (b, c, _, _) = gap.dim();
        let head_input = gap.into_shape_with_order((b, c)).unwrap();
        let logits = self.head.forward(&head_input);
        (
            logits,
            ResCache {
                stem_input,
                stem_bn,
                stem_relu_out,
                stem_pool_argmax,
                stem_pool_in_hw,
                blocks,
                gap_in_hw,
                head_input,
            },
        )
    }

    pub fn backward(&mut self, cache: &ResCache, d_logits: &Array2<f64>) {
        let d_flat = self.head.backward(&cache.head_input, d_logits);
        let (b, c) = d_flat.dim();
        let d_gap = d_flat.into_shape_with_order((b, c, 1, 1)).unwrap();
        let mut g =
            AdaptiveAvgPool::new(1, 1).backward(&d_gap, cache.gap_in_hw.0, cache.gap_in_hw.1);
        for (block, block_cache) in self.blocks.iter_mut().zip(cache.blocks.iter()).rev() {
            g = block.backward(block_cache, &g);
        }
        g = self.stem_pool.backward(
            &g,
            &cache.stem_pool_argmax,
            cache.stem_pool_in_hw.0,
            cache.stem_pool_in_hw.1,
        );
        g = relu_backward(&g, &cache.stem_relu_out);
        g = self.stem_bn.backward(&cache.stem_bn, &g);
        self.stem_conv.backward(&cache.stem_input, &g);
    }
}

impl Model for ResNet {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        out.extend(prefixed("stem.conv", self.stem_conv.params_mut()));
        out.extend(prefixed("stem.bn", self.stem_bn.params_mut()));
        for (i, block) in self.blocks.iter_mut().enumerate() {
            out.extend(prefixed(&format!("block{i}.conv1"), block.conv1.params_mut()));
            out.extend(prefixed(&format!("block{i}.bn1"), block.bn1.params_mut()));
            out.extend(prefixed(&format!("block{i}.conv2"), block.conv2.params_mut()));
            out.extend(prefixed(&format!("block{i}.bn2"), block.bn2.params_mut()));
            if let Some((conv, bn)) = &mut block.down {
                out.extend(prefixed(&format!("block{i}.down.conv"), conv.params_mut()));
                out.extend(prefixed(&format!("block{i}.down.bn"), bn.params_mut()));
            }
        }
        out.extend(prefixed("head", self.head.params_mut()));
        out
    }

    fn buffers_mut(&mut self) -> Vec<BufMut<'_>> {
        let mut out = Vec::new();
        out.extend(prefixed_bufs("stem.bn", self.stem_bn.buffers_mut()));
        for (i, block) in self.blocks.iter_mut().enumerate() {
            out.extend(prefixed_bufs(&format!("block{i}.bn1"), block.bn1.buffers_mut()));
            out.extend(prefixed_bufs(&format!("block{i}.bn2"), block.bn2.buffers_mut()));
            if let Some((_, bn)) = &mut block.down {
                out.extend(prefixed_bufs(&format!("block{i}.down.bn"), bn.buffers_mut()));
            }
        }
        out
    }
}

/// The tiny CPU-friendly CNN: three conv+bn+relu+pool stages.
pub(super) fn tiny_net() -> PlainNet {
    let mut ops = Vec::new();
    for (in_ch, out_ch) in [(3usize, 8usize), (8, 16), (16, 32)] {
        ops.push(Op::Conv(Conv2d::new(in_ch, out_ch, 3, 1, 1)));
        ops.push(Op::Bn(BatchNorm2d::new(out_ch)));
        ops.push(Op::Relu);
        ops.push(Op::Pool(MaxPool2d::new(2, 2, 0)));
    }
    PlainNet {
        ops,
        head: Linear::new(32, 2),
        features: 32,
    }
}

/// AlexNet-style five-conv trunk.
pub(super) fn alexnet_net() -> PlainNet {
    let ops = vec![
        Op::Conv(Conv2d::new(3, 64, 11, 4, 2)),
        Op::Relu,
        Op::Pool(MaxPool2d::new(3, 2, 0)),
        Op::Conv(Conv2d::new(64, 192, 5, 1, 2)),
        Op::Relu,
        Op::Pool(MaxPool2d::new(3, 2, 0)),
        Op::Conv(Conv2d::new(192, 384, 3, 1, 1)),
        Op::Relu,
        Op::Conv(Conv2d::new(384, 256, 3, 1, 1)),
        Op::Relu,
        Op::Conv(Conv2d::new(256, 256, 3, 1, 1)),
        Op::Relu,
        Op::Pool(MaxPool2d::new(3, 2, 0)),
    ];
    PlainNet {
        ops,
        head: Linear::new(256, 2),
        features: 256,
    }
}

/// VGG-style trunk; `convs_per_stage` is (2,2,3,3,3) for the 16-layer
/// variant and (2,2,4,4,4) for the 19-layer one.
pub(super) fn vgg_net(convs_per_stage: [usize; 5]) -> PlainNet {
    let widths = [64usize, 128, 256, 512, 512];
    let mut ops = Vec::new();
    let mut in_ch = 3usize;
    for (stage, &count) in convs_per_stage.iter().enumerate() {
        for _ in 0..count {
            ops.push(Op::Conv(Conv2d::new(in_ch, widths[stage], 3, 1, 1)));
            ops.push(Op::Relu);
            in_ch = widths[stage];
        }
        ops.push(Op::Pool(MaxPool2d::new(2, 2, 0)));
    }
    PlainNet {
        ops,
        head: Linear::new(512, 2),
        features: 512,
    }
}
