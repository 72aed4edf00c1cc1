//! The fully convolutional descriptor network.
//!
//! A residual encoder downsamples by 2 per stage; the decoder upsamples back
//! to full resolution with lateral skip connections from matching-resolution
//! encoder stages, followed by a 1×1 projection to the descriptor dimension
//! and per-pixel L2 normalization. Forward and backward are hand-rolled over
//! a flat op list so checkpoints and gradients are bit-reproducible.

mod checkpoint;
mod layers;
mod loss;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta};
pub use layers::NORM_EPS;
pub use loss::{contrastive_loss, descriptor_distance, AveragingMode, LossConfig, LossOutput};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagery::ImageFrame;
use crate::net::layers::*;
use crate::rng::rng_from;
use rand::Rng;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("inconsistent stage geometry: {reason}")]
    BadGeometry { reason: String },
    #[error("input {h}x{w} not divisible by total stride {stride}")]
    SizeNotDivisible { h: usize, w: usize, stride: usize },
    #[error("pixel coordinate ({x:.1}, {y:.1}) outside {w}x{h} descriptor map")]
    OutOfBounds { x: f64, y: f64, w: usize, h: usize },
    #[error("empty match set")]
    EmptyMatchSet,
    #[error("checkpoint io on {path}: {source}")]
    CheckpointIo {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint format: {reason}")]
    CheckpointFormat { reason: String },
    #[error("checkpoint/config mismatch: {reason}")]
    ConfigMismatch { reason: String },
}

/// Network architecture description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Descriptor dimension D (>= 2).
    pub descriptor_dim: usize,
    /// Channels per encoder stage; every stage downsamples by 2.
    pub encoder_channels: Vec<usize>,
    /// Residual blocks per encoder stage (same length as channels).
    pub encoder_blocks: Vec<usize>,
    /// Decoder stages: the first `encoder_channels.len()` upsample by 2 back
    /// to full resolution, any extras refine at full resolution.
    pub decoder_stages: usize,
    pub use_skip_connections: bool,
    /// Expected input size, recorded for provenance; forward accepts any
    /// size divisible by the total stride.
    pub input_size: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            descriptor_dim: 3,
            encoder_channels: vec![16, 32, 64],
            encoder_blocks: vec![2, 2, 2],
            decoder_stages: 3,
            use_skip_connections: true,
            input_size: None,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn total_stride(&self) -> usize {
        1 << self.encoder_channels.len()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let fail = |reason: String| Err(NetError::BadGeometry { reason });
        if self.descriptor_dim < 2 {
            return fail(format!("descriptor_dim {} < 2", self.descriptor_dim));
        }
        if self.encoder_channels.is_empty() {
            return fail("no encoder stages".into());
        }
        if self.encoder_channels.len() != self.encoder_blocks.len() {
            return fail(format!(
                "{} channel entries vs {} block entries",
                self.encoder_channels.len(),
                self.encoder_blocks.len()
            ));
        }
        if self.encoder_channels.iter().any(|&c| c == 0) {
            return fail("zero-width encoder stage".into());
        }
        // The upsampling factors (2 per upsampling stage) must multiply to
        // the product of encoder strides; extra stages refine at full res.
        if self.decoder_stages < self.encoder_channels.len() {
            return fail(format!(
                "decoder_stages {} cannot restore stride {}",
                self.decoder_stages,
                self.total_stride()
            ));
        }
        Ok(())
    }
}

/// One named parameter tensor with its gradient buffer.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub grad: Vec<f32>,
}

impl ParamTensor {
    fn new(name: String, shape: Vec<usize>, data: Vec<f32>) -> Self {
        let n = data.len();
        debug_assert_eq!(n, shape.iter().product::<usize>());
        Self {
            name,
            shape,
            data,
            grad: vec![0.0; n],
        }
    }
}

/// Flat op list executed by the forward/backward interpreter. Parameter
/// fields are indices into the parameter registry; `slot` fields index the
/// saved-activation table used by residual and lateral connections.
#[derive(Debug, Clone)]
enum Op {
    Conv {
        w: usize,
        b: usize,
        shape: ConvShape,
    },
    Relu,
    Upsample2,
    Save {
        slot: usize,
    },
    AddSaved {
        slot: usize,
    },
    LateralConv {
        slot: usize,
        w: usize,
        b: usize,
        shape: ConvShape,
    },
    L2Normalize,
}

/// H×W×D field of descriptors (unit L2 norm after a network forward pass).
#[derive(Debug, Clone)]
pub struct DescriptorMap {
    pub field: Tensor,
}

impl DescriptorMap {
    pub fn dim(&self) -> usize {
        self.field.channels
    }

    pub fn width(&self) -> usize {
        self.field.width
    }

    pub fn height(&self) -> usize {
        self.field.height
    }

    /// Descriptor at an integer pixel.
    pub fn at(&self, x: usize, y: usize) -> Vec<f32> {
        self.field.pixel_vec(y, x)
    }
}

pub struct Network {
    pub config: NetworkConfig,
    params: Vec<ParamTensor>,
    ops: Vec<Op>,
    n_slots: usize,
}

/// Activations recorded during a forward pass, consumed by `backward`.
pub struct ForwardCache {
    op_inputs: Vec<Tensor>,
    slots: Vec<Option<Tensor>>,
}

impl Network {
    /// Builds the network and initializes parameters with fan-in-scaled
    /// normal values drawn deterministically from the config seed.
    pub fn init(config: NetworkConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut builder = Builder {
            params: Vec::new(),
            ops: Vec::new(),
            rng: rng_from(config.seed, &[0xde5c]),
        };

        let n_stages = config.encoder_channels.len();
        let ch = &config.encoder_channels;

        // Stem: 3 -> ch[0], stride 2.
        builder.conv("stem", 3, ch[0], 3, 2, 1);
        builder.ops.push(Op::Relu);

        // Encoder stages: residual blocks, stride-2 transitions between.
        let mut slot = 0usize;
        let mut stage_slots = vec![usize::MAX; n_stages];
        for i in 0..n_stages {
            if i > 0 {
                builder.conv(&format!("enc{i}.trans"), ch[i - 1], ch[i], 3, 2, 1);
                builder.ops.push(Op::Relu);
            }
            for bidx in 0..config.encoder_blocks[i] {
                let name = format!("enc{i}.block{bidx}");
                builder.ops.push(Op::Save { slot });
                builder.conv(&format!("{name}.conv1"), ch[i], ch[i], 3, 1, 1);
                builder.ops.push(Op::Relu);
                builder.conv(&format!("{name}.conv2"), ch[i], ch[i], 3, 1, 1);
                builder.ops.push(Op::AddSaved { slot });
                builder.ops.push(Op::Relu);
                slot += 1;
            }
            // Remember the stage output for decoder laterals.
            stage_slots[i] = slot;
            builder.ops.push(Op::Save { slot });
            slot += 1;
        }

        // Decoder: upsampling stages with laterals, then refinements.
        let mut cur_ch = ch[n_stages - 1];
        for j in 0..config.decoder_stages {
            if j < n_stages {
                let lateral_stage = n_stages.checked_sub(j + 2);
                let out_ch = match lateral_stage {
                    Some(i) => ch[i],
                    None => ch[0],
                };
                builder.ops.push(Op::Upsample2);
                builder.conv(&format!("dec{j}.conv"), cur_ch, out_ch, 3, 1, 1);
                if config.use_skip_connections {
                    if let Some(i) = lateral_stage {
                        let (w, b) = builder.param_pair(
                            &format!("dec{j}.lat"),
                            vec![out_ch, ch[i], 1, 1],
                            vec![out_ch],
                            ch[i],
                        );
                        builder.ops.push(Op::LateralConv {
                            slot: stage_slots[i],
                            w,
                            b,
                            shape: ConvShape {
                                out_channels: out_ch,
                                in_channels: ch[i],
                                kernel: 1,
                                stride: 1,
                                pad: 0,
                            },
                        });
                    }
                }
                builder.ops.push(Op::Relu);
                cur_ch = out_ch;
            } else {
                builder.conv(&format!("dec{j}.refine"), cur_ch, cur_ch, 3, 1, 1);
                builder.ops.push(Op::Relu);
            }
        }

        // Head: 1x1 projection to D, then normalize.
        builder.conv("head", cur_ch, config.descriptor_dim, 1, 1, 0);
        builder.ops.push(Op::L2Normalize);

        Ok(Self {
            config,
            params: builder.params,
            ops: builder.ops,
            n_slots: slot,
        })
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Converts an RGB frame to the network input tensor (zero-centered).
    fn input_tensor(frame: &ImageFrame) -> Tensor {
        let (w, h) = (frame.width, frame.height);
        let mut t = Tensor::zeros(3, h, w);
        for y in 0..h {
            for x in 0..w {
                let px = frame.get(x, y);
                for c in 0..3 {
                    *t.at_mut(c, y, x) = px[c] - 0.5;
                }
            }
        }
        t
    }

    /// Forward pass producing unit-norm descriptors at every pixel.
    pub fn forward(&self, frame: &ImageFrame) -> Result<(DescriptorMap, ForwardCache), NetError> {
        let stride = self.config.total_stride();
        if frame.height % stride != 0 || frame.width % stride != 0 {
            return Err(NetError::SizeNotDivisible {
                h: frame.height,
                w: frame.width,
                stride,
            });
        }
        let mut cache = ForwardCache {
            op_inputs: Vec::with_capacity(self.ops.len()),
            slots: vec![None; self.n_slots],
        };
        let mut cur = Self::input_tensor(frame);
        for op in &self.ops {
            cache.op_inputs.push(cur.clone());
            cur = self.apply(op, cur, &mut cache.slots);
        }
        Ok((DescriptorMap { field: cur }, cache))
    }

    fn apply(&self, op: &Op, cur: Tensor, slots: &mut [Option<Tensor>]) -> Tensor {
        match op {
            Op::Conv { w, b, shape } => {
                conv_forward(&cur, &self.params[*w].data, &self.params[*b].data, shape)
            }
            Op::Relu => relu_forward(&cur),
            Op::Upsample2 => upsample2_forward(&cur),
            Op::Save { slot } => {
                slots[*slot] = Some(cur.clone());
                cur
            }
            Op::AddSaved { slot } => {
                let mut out = cur;
                out.add_assign(slots[*slot].as_ref().expect("saved before add"));
                out
            }
            Op::LateralConv { slot, w, b, shape } => {
                let lat = conv_forward(
                    slots[*slot].as_ref().expect("saved before lateral"),
                    &self.params[*w].data,
                    &self.params[*b].data,
                    shape,
                );
                let mut out = cur;
                out.add_assign(&lat);
                out
            }
            Op::L2Normalize => l2norm_forward(&cur),
        }
    }

    /// Backward pass: accumulates parameter gradients (into `grad` buffers)
    /// from the loss gradient with respect to the descriptor map.
    pub fn backward(&mut self, cache: &ForwardCache, grad_out: &Tensor) {
        let mut slot_grads: Vec<Option<Tensor>> = vec![None; self.n_slots];
        let mut g = grad_out.clone();
        for (op, x) in self.ops.iter().zip(&cache.op_inputs).rev() {
            match op {
                Op::Conv { w, b, shape } => {
                    let (gw, gb) = conv_backward_params(x, &g, shape);
                    accumulate(&mut self.params[*w].grad, &gw);
                    accumulate(&mut self.params[*b].grad, &gb);
                    g = conv_backward_input(&g, &self.params[*w].data, shape, x.height, x.width);
                }
                Op::Relu => {
                    g = relu_backward(x, &g);
                }
                Op::Upsample2 => {
                    g = upsample2_backward(&g);
                }
                Op::Save { slot } => {
                    if let Some(extra) = slot_grads[*slot].take() {
                        g.add_assign(&extra);
                    }
                }
                Op::AddSaved { slot } => {
                    add_to_slot(&mut slot_grads[*slot], &g);
                }
                Op::LateralConv { slot, w, b, shape } => {
                    let lat_in = cache.slots[*slot].as_ref().expect("lateral input cached");
                    let (gw, gb) = conv_backward_params(lat_in, &g, shape);
                    accumulate(&mut self.params[*w].grad, &gw);
                    accumulate(&mut self.params[*b].grad, &gb);
                    let gl = conv_backward_input(
                        &g,
                        &self.params[*w].data,
                        shape,
                        lat_in.height,
                        lat_in.width,
                    );
                    add_to_slot(&mut slot_grads[*slot], &gl);
                }
                Op::L2Normalize => {
                    g = l2norm_backward(x, &g);
                }
            }
        }
    }
}

fn accumulate(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn add_to_slot(slot: &mut Option<Tensor>, g: &Tensor) {
    match slot {
        Some(t) => t.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}

struct Builder {
    params: Vec<ParamTensor>,
    ops: Vec<Op>,
    rng: rand_chacha::ChaCha8Rng,
}

impl Builder {
    /// He-normal weights (std = sqrt(2/fan_in)) via Box-Muller, zero biases.
    fn alloc(&mut self, name: &str, shape: Vec<usize>, fan_in: usize) -> usize {
        let n: usize = shape.iter().product();
        let std = (2.0 / fan_in as f64).sqrt();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = self.rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = self.rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let th = 2.0 * std::f64::consts::PI * u2;
            data.push((r * th.cos() * std) as f32);
            if data.len() < n {
                data.push((r * th.sin() * std) as f32);
            }
        }
        self.params.push(ParamTensor::new(name.into(), shape, data));
        self.params.len() - 1
    }

    fn zeros(&mut self, name: &str, shape: Vec<usize>) -> usize {
        let n: usize = shape.iter().product();
        self.params
            .push(ParamTensor::new(name.into(), shape, vec![0.0; n]));
        self.params.len() - 1
    }

    fn param_pair(
        &mut self,
        name: &str,
        w_shape: Vec<usize>,
        b_shape: Vec<usize>,
        fan_in_ch: usize,
    ) -> (usize, usize) {
        let k = w_shape[2];
        let w = self.alloc(&format!("{name}.w"), w_shape, fan_in_ch * k * k);
        let b = self.zeros(&format!("{name}.b"), b_shape);
        (w, b)
    }

    fn conv(&mut self, name: &str, in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize) {
        let (w, b) = self.param_pair(name, vec![out_c, in_c, k, k], vec![out_c], in_c);
        self.ops.push(Op::Conv {
            w,
            b,
            shape: ConvShape {
                out_channels: out_c,
                in_channels: in_c,
                kernel: k,
                stride,
                pad,
            },
        });
    }
}
