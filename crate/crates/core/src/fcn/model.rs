use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FcnConfig, FcnError};
use crate::nn::{
    conv2d, conv2d_backward, max_pool2d, max_pool2d_backward, relu, relu_backward, residual_add,
    residual_add_backward, sigmoid, sigmoid_backward, ConvLayer, NnError, Parameterized, Scalar,
    Tensor,
};
use crate::rng::normal;

/// One step of the network program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpSpec {
    /// 3x3 valid convolution, indexing into the conv layer list.
    Conv(usize),
    /// Stride-1 3x3 max pool.
    Pool,
    Relu,
    Sigmoid,
    /// Record the current activation into a skip slot.
    SkipSave(usize),
    /// Add the center-cropped slot content to the current activation.
    SkipAdd(usize),
}

/// A planned network: op sequence plus the conv layer shapes, fully
/// determined by the config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub ops: Vec<OpSpec>,
    /// `(in_channels, out_channels)` per conv layer, in order.
    pub conv_shapes: Vec<(usize, usize)>,
    pub patch_size: usize,
    pub skip_slots: usize,
}

impl Architecture {
    /// Number of spatial reductions: each conv or pool shrinks by 2.
    pub fn reduction_count(&self) -> usize {
        (self.patch_size - 1) / 2
    }
}

/// Plans the op sequence for a config.
///
/// Without pooling the network is `(patch_size - 1) / 2` convolutions, each
/// followed by ReLU except the last, then a sigmoid. With pooling every
/// second reduction becomes a max-pool, halving (rounded up) the trainable
/// layers. Residual skips wrap consecutive internal conv pairs whose input
/// and output widths match (a leftover single internal conv gets a
/// single-layer skip); they exclude the first and last trainable layers.
pub fn plan_architecture(cfg: &FcnConfig) -> Result<Architecture, FcnError> {
    cfg.validate()?;
    let reductions = (cfg.patch_size - 1) / 2;
    // Reduction positions: conv at every position, or conv/pool alternating.
    let is_conv: Vec<bool> = (0..reductions)
        .map(|i| if cfg.use_pooling { i % 2 == 0 } else { true })
        .collect();
    let conv_positions: Vec<usize> =
        (0..reductions).filter(|&i| is_conv[i]).collect();
    let n_convs = conv_positions.len();

    // Channel plan: hidden widths from the config, final conv emits 1.
    let mut conv_shapes = Vec::with_capacity(n_convs);
    let mut in_ch = 1usize;
    for t in 0..n_convs {
        let out_ch = if t == n_convs - 1 { 1 } else { cfg.hidden_width(t) };
        conv_shapes.push((in_ch, out_ch));
        in_ch = out_ch;
    }

    // Residual plan over internal trainable convs (all but first and last):
    // greedy consecutive pairs with matching in/out widths; an unpaired
    // leftover gets a single-conv skip.
    let mut save_before: Vec<Option<usize>> = vec![None; n_convs];
    let mut add_after: Vec<Option<usize>> = vec![None; n_convs];
    let mut skip_slots = 0usize;
    if cfg.use_residual {
        if n_convs >= 3 {
            let first_internal = 1usize;
            let last_internal = n_convs - 2;
            let mut t = first_internal;
            while t <= last_internal {
                let paired = t + 1 <= last_internal && conv_shapes[t].0 == conv_shapes[t + 1].1;
                if paired {
                    save_before[t] = Some(skip_slots);
                    add_after[t + 1] = Some(skip_slots);
                    skip_slots += 1;
                    t += 2;
                } else if conv_shapes[t].0 == conv_shapes[t].1 {
                    save_before[t] = Some(skip_slots);
                    add_after[t] = Some(skip_slots);
                    skip_slots += 1;
                    t += 1;
                } else {
                    t += 1;
                }
            }
        }
        if skip_slots == 0 {
            return Err(FcnError::Config(
                "residuals requested but no internal equal-width conv pair exists".to_string(),
            ));
        }
    }

    let mut ops = Vec::new();
    let mut trainable = 0usize;
    for pos in 0..reductions {
        if is_conv[pos] {
            if let Some(slot) = save_before[trainable] {
                ops.push(OpSpec::SkipSave(slot));
            }
            ops.push(OpSpec::Conv(trainable));
            if let Some(slot) = add_after[trainable] {
                ops.push(OpSpec::SkipAdd(slot));
            }
            if trainable != n_convs - 1 {
                ops.push(OpSpec::Relu);
            }
            trainable += 1;
        } else {
            ops.push(OpSpec::Pool);
        }
    }
    ops.push(OpSpec::Sigmoid);

    Ok(Architecture { ops, conv_shapes, patch_size: cfg.patch_size, skip_slots })
}

/// A built network: the architecture plus its conv weights.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub arch: Architecture,
    pub convs: Vec<ConvLayer<T>>,
}

/// Per-op state recorded by the training forward pass.
enum Record<T> {
    Conv { input: Tensor<T> },
    Pool { input_shape: [usize; 4], argmax: Vec<u32> },
    Relu { input: Tensor<T> },
    Sigmoid { output: Tensor<T> },
    SkipSave,
    SkipAdd { skip_shape: [usize; 4] },
}

/// Activation cache for one backward pass.
pub struct ForwardCache<T> {
    records: Vec<Record<T>>,
}

/// Per-layer parameter gradients, aligned with `Model::convs`.
pub struct ModelGrads<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
}

impl<T: Scalar> Model<T> {
    /// Builds the network with Kaiming-style fan-in initialization (zero
    /// biases), seeded from the config. Initial weights are drawn in `f64`
    /// and converted, so `f32` and `f64` builds share the same stream.
    pub fn build(cfg: &FcnConfig) -> Result<Self, FcnError> {
        let arch = plan_architecture(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut convs = Vec::with_capacity(arch.conv_shapes.len());
        for &(in_ch, out_ch) in &arch.conv_shapes {
            let mut layer = ConvLayer::zeros(in_ch, out_ch);
            let std = libm::sqrt(2.0 / (in_ch as f64 * 9.0));
            for w in layer.weights.iter_mut() {
                *w = T::from_f64(normal(&mut rng) * std);
            }
            convs.push(layer);
        }
        Ok(Self { arch, convs })
    }

    pub fn patch_size(&self) -> usize {
        self.arch.patch_size
    }

    pub fn conv_count(&self) -> usize {
        self.convs.len()
    }

    /// Parameter buffer sizes in optimizer order: weights then bias per
    /// layer.
    pub fn param_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(2 * self.convs.len());
        for layer in &self.convs {
            sizes.push(layer.weights.len());
            sizes.push(layer.bias.len());
        }
        sizes
    }

    /// Inference forward pass (no activation caching).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut slots: Vec<Option<Tensor<T>>> = vec![None; self.arch.skip_slots];
        let mut cur = x.clone();
        for op in &self.arch.ops {
            cur = match *op {
                OpSpec::Conv(i) => conv2d(&cur, &self.convs[i])?,
                OpSpec::Pool => max_pool2d(&cur)?.0,
                OpSpec::Relu => relu(&cur),
                OpSpec::Sigmoid => sigmoid(&cur),
                OpSpec::SkipSave(s) => {
                    slots[s] = Some(cur.clone());
                    cur
                }
                OpSpec::SkipAdd(s) => {
                    let skip = slots[s].take().expect("skip slot saved before add");
                    residual_add(&cur, &skip)?
                }
            };
        }
        Ok(cur)
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>), NnError> {
        let mut slots: Vec<Option<Tensor<T>>> = vec![None; self.arch.skip_slots];
        let mut records = Vec::with_capacity(self.arch.ops.len());
        let mut cur = x.clone();
        for op in &self.arch.ops {
            match *op {
                OpSpec::Conv(i) => {
                    let out = conv2d(&cur, &self.convs[i])?;
                    records.push(Record::Conv { input: cur });
                    cur = out;
                }
                OpSpec::Pool => {
                    let (out, argmax) = max_pool2d(&cur)?;
                    records.push(Record::Pool { input_shape: cur.shape(), argmax });
                    cur = out;
                }
                OpSpec::Relu => {
                    let out = relu(&cur);
                    records.push(Record::Relu { input: cur });
                    cur = out;
                }
                OpSpec::Sigmoid => {
                    let out = sigmoid(&cur);
                    records.push(Record::Sigmoid { output: out.clone() });
                    cur = out;
                }
                OpSpec::SkipSave(s) => {
                    slots[s] = Some(cur.clone());
                    records.push(Record::SkipSave);
                }
                OpSpec::SkipAdd(s) => {
                    let skip = slots[s].take().expect("skip slot saved before add");
                    let out = residual_add(&cur, &skip)?;
                    records.push(Record::SkipAdd { skip_shape: skip.shape() });
                    cur = out;
                }
            }
        }
        Ok((cur, ForwardCache { records }))
    }

    /// Reverse pass; returns parameter gradients (the input gradient is
    /// discarded, patches are data).
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: Tensor<T>) -> Result<ModelGrads<T>, NnError> {
        let mut grads = ModelGrads {
            weights: self.convs.iter().map(|l| vec![T::ZERO; l.weights.len()]).collect(),
            bias: self.convs.iter().map(|l| vec![T::ZERO; l.bias.len()]).collect(),
        };
        let mut slot_grads: Vec<Option<Tensor<T>>> = vec![None; self.arch.skip_slots];
        let mut grad = grad_out;
        for (op, record) in self.arch.ops.iter().zip(cache.records.iter()).rev() {
            grad = match (*op, record) {
                (OpSpec::Conv(i), Record::Conv { input }) => {
                    let g = conv2d_backward(input, &self.convs[i], &grad)?;
                    grads.weights[i] = g.weights;
                    grads.bias[i] = g.bias;
                    g.input
                }
                (OpSpec::Pool, Record::Pool { input_shape, argmax }) => {
                    max_pool2d_backward(*input_shape, argmax, &grad)
                }
                (OpSpec::Relu, Record::Relu { input }) => relu_backward(input, &grad),
                (OpSpec::Sigmoid, Record::Sigmoid { output }) => sigmoid_backward(output, &grad),
                (OpSpec::SkipSave(s), Record::SkipSave) => {
                    // Identity main path plus whatever flowed through the skip.
                    let mut g = grad;
                    if let Some(skip_grad) = slot_grads[s].take() {
                        for (a, &b) in g.data_mut().iter_mut().zip(skip_grad.data()) {
                            *a += b;
                        }
                    }
                    g
                }
                (OpSpec::SkipAdd(s), Record::SkipAdd { skip_shape }) => {
                    slot_grads[s] = Some(residual_add_backward(*skip_shape, &grad));
                    grad
                }
                _ => unreachable!("cache misaligned with ops"),
            };
        }
        Ok(grads)
    }
}

/// Flat parameter indexing (weights then bias, layer by layer) shared by the
/// optimizer and the gradient checker.
impl<T: Scalar> Parameterized<T> for Model<T> {
    fn param_count(&self) -> usize {
        self.convs.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn param(&self, mut i: usize) -> T {
        for layer in &self.convs {
            if i < layer.weights.len() {
                return layer.weights[i];
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                return layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn set_param(&mut self, mut i: usize, value: T) {
        for layer in &mut self.convs {
            if i < layer.weights.len() {
                layer.weights[i] = value;
                return;
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                layer.bias[i] = value;
                return;
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl<T: Scalar> ModelGrads<T> {
    /// Flattens to the `Parameterized` order.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}
