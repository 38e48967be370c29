//! The depth/width-scalable ConvNeXt-style 1-d network family.
//!
//! Topology: stem conv (1 -> 6W, kernel 4, stride 4) with layer norm, four
//! stages of residual blocks at 6W/12W/24W/48W channels (stage 3 runs 3*D
//! blocks, the others D), a norm + kernel-2 stride-2 conv between stages,
//! then a final norm, full average pool, linear head and sigmoid. All layer
//! norms are non-affine; all convolutions and the head carry biases.

mod weights;

pub use weights::{load_weights, save_weights};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{self, MacCounter, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::{Error, Result};

/// Samples per input segment: 16 s at 64 Hz.
pub const INPUT_LENGTH: usize = 1024;
pub const LN_EPSILON: f64 = 1e-6;
const STEM_KERNEL: usize = 4;
const BLOCK_KERNEL: usize = 7;
const INIT_STD: f64 = 0.02;

/// The five published size points of the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    Nano,
    Small,
    Medium,
    Large,
    Xl,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Nano, Variant::Small, Variant::Medium, Variant::Large, Variant::Xl];

    pub fn depth_width(self) -> (usize, usize) {
        match self {
            Variant::Nano => (1, 1),
            Variant::Small => (2, 2),
            Variant::Medium => (3, 4),
            Variant::Large => (3, 8),
            Variant::Xl => (6, 10),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nano => "nano",
            Variant::Small => "small",
            Variant::Medium => "medium",
            Variant::Large => "large",
            Variant::Xl => "xl",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        match name.to_ascii_lowercase().as_str() {
            "nano" => Some(Variant::Nano),
            "small" => Some(Variant::Small),
            "medium" => Some(Variant::Medium),
            "large" => Some(Variant::Large),
            "xl" => Some(Variant::Xl),
            _ => None,
        }
    }

    fn from_depth_width(depth: usize, width: usize) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.depth_width() == (depth, width))
    }
}

/// Depth/width/-input-length description of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub depth: usize,
    pub width: usize,
    pub input_length: usize,
}

impl ModelConfig {
    pub fn new(depth: usize, width: usize) -> Result<Self> {
        if depth == 0 || width == 0 {
            return Err(Error::InvalidArgument("depth and width must be at least 1".into()));
        }
        Ok(Self { depth, width, input_length: INPUT_LENGTH })
    }

    pub fn variant(v: Variant) -> Self {
        let (depth, width) = v.depth_width();
        Self { depth, width, input_length: INPUT_LENGTH }
    }

    pub fn with_input_length(mut self, input_length: usize) -> Result<Self> {
        if input_length == 0 || input_length % 32 != 0 {
            return Err(Error::InvalidArgument(format!(
                "input length must be a positive multiple of 32, got {input_length}"
            )));
        }
        self.input_length = input_length;
        Ok(self)
    }

    /// The named size point this config corresponds to, if any.
    pub fn variant_name(&self) -> String {
        match Variant::from_depth_width(self.depth, self.width) {
            Some(v) => v.name().to_string(),
            None => format!("custom(d{},w{})", self.depth, self.width),
        }
    }

    pub fn stage_channels(&self) -> [usize; 4] {
        let w = self.width;
        [6 * w, 12 * w, 24 * w, 48 * w]
    }

    pub fn stage_blocks(&self) -> [usize; 4] {
        let d = self.depth;
        [d, d, 3 * d, d]
    }

    pub fn stage_lengths(&self) -> [usize; 4] {
        let n = self.input_length;
        [n / 4, n / 8, n / 16, n / 32]
    }
}

/// Exact scalar parameter count of `build(config)`, by closed form.
pub fn count_params(config: &ModelConfig) -> u64 {
    let ch = config.stage_channels();
    let blocks = config.stage_blocks();
    let mut total = 0u64;
    // stem conv weight + bias
    total += (ch[0] * STEM_KERNEL + ch[0]) as u64;
    for s in 0..4 {
        let c = ch[s] as u64;
        // depthwise w+b, expand 1x1 w+b, project 1x1 w+b
        let per_block = c * BLOCK_KERNEL as u64 + c + (4 * c * c + 4 * c) + (4 * c * c + c);
        total += blocks[s] as u64 * per_block;
        if s < 3 {
            // downsample conv: C -> 2C, kernel 2, plus bias
            total += 2 * c * c * 2 + 2 * c;
        }
    }
    // head
    total += ch[3] as u64 + 1;
    total
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct FlopParts {
    pub stem: u64,
    pub depthwise: u64,
    pub pointwise: u64,
    pub downsample: u64,
    pub head: u64,
}

impl FlopParts {
    fn total(&self) -> u64 {
        self.stem + self.depthwise + self.pointwise + self.downsample + self.head
    }
}

pub(crate) fn count_flops_parts(config: &ModelConfig) -> FlopParts {
    let ch = config.stage_channels();
    let blocks = config.stage_blocks();
    let lens = config.stage_lengths();
    let mut parts = FlopParts { stem: (lens[0] * ch[0] * STEM_KERNEL) as u64, ..Default::default() };
    for s in 0..4 {
        let (c, l, b) = (ch[s] as u64, lens[s] as u64, blocks[s] as u64);
        parts.depthwise += b * l * c * BLOCK_KERNEL as u64;
        parts.pointwise += b * l * (4 * c * c + 4 * c * c);
        if s < 3 {
            let out_len = (lens[s] / 2) as u64;
            parts.downsample += out_len * (2 * c) * (c * 2);
        }
    }
    parts.head = ch[3] as u64;
    parts
}

/// Forward-pass multiply-accumulate count (convolutions and the linear head
/// only; norms and activations excluded), by closed form.
pub fn count_flops(config: &ModelConfig) -> u64 {
    count_flops_parts(config).total()
}

#[derive(Debug, Clone, Copy)]
struct BlockIds {
    dw_w: ParamId,
    dw_b: ParamId,
    pw1_w: ParamId,
    pw1_b: ParamId,
    pw2_w: ParamId,
    pw2_b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    stem_w: ParamId,
    stem_b: ParamId,
    stages: [Vec<BlockIds>; 4],
    downsamples: [(ParamId, ParamId); 3],
    head_w: ParamId,
    head_b: ParamId,
}

/// Expected (name, shape, decays) sequence for a config, in registration
/// order. Shared by build and the weights-file loader.
fn array_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>, bool)> {
    let ch = config.stage_channels();
    let blocks = config.stage_blocks();
    let mut specs = Vec::new();
    specs.push(("stem.weight".to_string(), vec![ch[0], 1, STEM_KERNEL], true));
    specs.push(("stem.bias".to_string(), vec![ch[0]], false));
    for s in 0..4 {
        let c = ch[s];
        for b in 0..blocks[s] {
            let p = format!("stage{s}.block{b}");
            specs.push((format!("{p}.dwconv.weight"), vec![c, BLOCK_KERNEL], true));
            specs.push((format!("{p}.dwconv.bias"), vec![c], false));
            specs.push((format!("{p}.pwconv1.weight"), vec![4 * c, c, 1], true));
            specs.push((format!("{p}.pwconv1.bias"), vec![4 * c], false));
            specs.push((format!("{p}.pwconv2.weight"), vec![c, 4 * c, 1], true));
            specs.push((format!("{p}.pwconv2.bias"), vec![c], false));
        }
        if s < 3 {
            specs.push((format!("downsample{s}.weight"), vec![2 * c, c, 2], true));
            specs.push((format!("downsample{s}.bias"), vec![2 * c], false));
        }
    }
    specs.push(("head.weight".to_string(), vec![ch[3]], true));
    specs.push(("head.bias".to_string(), vec![1], false));
    specs
}

fn build_layout(config: &ModelConfig, params: &ParamStore) -> Result<Layout> {
    let find = |name: &str| {
        params
            .find(name)
            .ok_or_else(|| Error::InvalidData(format!("missing parameter array {name}")))
    };
    let mut stages: [Vec<BlockIds>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let blocks = config.stage_blocks();
    for s in 0..4 {
        for b in 0..blocks[s] {
            let p = format!("stage{s}.block{b}");
            stages[s].push(BlockIds {
                dw_w: find(&format!("{p}.dwconv.weight"))?,
                dw_b: find(&format!("{p}.dwconv.bias"))?,
                pw1_w: find(&format!("{p}.pwconv1.weight"))?,
                pw1_b: find(&format!("{p}.pwconv1.bias"))?,
                pw2_w: find(&format!("{p}.pwconv2.weight"))?,
                pw2_b: find(&format!("{p}.pwconv2.bias"))?,
            });
        }
    }
    Ok(Layout {
        stem_w: find("stem.weight")?,
        stem_b: find("stem.bias")?,
        stages,
        downsamples: [
            (find("downsample0.weight")?, find("downsample0.bias")?),
            (find("downsample1.weight")?, find("downsample1.bias")?),
            (find("downsample2.weight")?, find("downsample2.bias")?),
        ],
        head_w: find("head.weight")?,
        head_b: find("head.bias")?,
    })
}

/// A network: its configuration plus the parameter store.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Builds a freshly initialized model: truncated-normal weights
    /// (std 0.02, resampled beyond two standard deviations), zero biases.
    /// Equal seeds give bit-identical parameters.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Model> {
        if config.depth == 0 || config.width == 0 {
            return Err(Error::InvalidArgument("depth and width must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("std is positive");
        let mut params = ParamStore::new();
        for (name, shape, decays) in array_specs(&config) {
            let count: usize = shape.iter().product();
            let values = if decays {
                (0..count)
                    .map(|_| loop {
                        let v: f64 = normal.sample(&mut rng);
                        if v.abs() <= 2.0 * INIT_STD {
                            break v;
                        }
                    })
                    .collect()
            } else {
                vec![0.0; count]
            };
            params.push(&name, &shape, values, decays)?;
        }
        let layout = build_layout(&config, &params)?;
        Ok(Model { config, params, layout })
    }

    /// Wraps an existing parameter store, validating names and shapes
    /// against the config's expected registration order.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Model> {
        let specs = array_specs(&config);
        if params.len() != specs.len() {
            return Err(Error::InvalidData(format!(
                "expected {} parameter arrays, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (id, array) in params.iter() {
            let (name, shape, _) = &specs[id.0];
            if array.name() != name || array.shape() != shape.as_slice() {
                return Err(Error::InvalidData(format!(
                    "parameter {} has name {} shape {:?}, expected {} {:?}",
                    id.0,
                    array.name(),
                    array.shape(),
                    name,
                    shape
                )));
            }
        }
        let layout = build_layout(&config, &params)?;
        Ok(Model { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Scalar parameter count tallied by walking the actual arrays.
    pub fn param_count(&self) -> u64 {
        self.params.total_values() as u64
    }

    fn check_segment(&self, segment: &Tensor) -> Result<()> {
        if segment.channels() != 1 || segment.len() != self.config.input_length {
            return Err(Error::Shape(format!(
                "expected a 1x{} segment, got {}x{}",
                self.config.input_length,
                segment.channels(),
                segment.len()
            )));
        }
        Ok(())
    }

    /// Seizure probability for one preprocessed segment.
    pub fn forward(&self, segment: &Tensor) -> Result<f64> {
        self.forward_counted(segment, &mut MacCounter::new())
    }

    /// Forward pass with multiply-accumulate instrumentation.
    pub fn forward_counted(&self, segment: &Tensor, counter: &mut MacCounter) -> Result<f64> {
        self.check_segment(segment)?;
        let p = &self.params;
        let l = &self.layout;
        let ch = self.config.stage_channels();
        let mut x = tensor::conv1d(
            segment,
            p.values(l.stem_w),
            p.values(l.stem_b),
            ch[0],
            STEM_KERNEL,
            STEM_KERNEL,
            counter,
        )?;
        x = tensor::layer_norm(&x, None, None, LN_EPSILON)?;
        for s in 0..4 {
            for ids in &l.stages[s] {
                x = self.block_forward(&x, ids, counter)?;
            }
            if s < 3 {
                let (w, b) = l.downsamples[s];
                x = tensor::layer_norm(&x, None, None, LN_EPSILON)?;
                x = tensor::conv1d(&x, p.values(w), p.values(b), 2 * ch[s], 2, 2, counter)?;
            }
        }
        x = tensor::layer_norm(&x, None, None, LN_EPSILON)?;
        let pooled = tensor::avg_pool_full(&x)?;
        let logit = tensor::linear(&pooled, p.values(l.head_w), p.values(l.head_b), counter)?;
        Ok(tensor::sigmoid(&logit).item()?)
    }

    fn block_forward(&self, x: &Tensor, ids: &BlockIds, counter: &mut MacCounter) -> Result<Tensor> {
        let p = &self.params;
        let c = x.channels();
        let mut y = tensor::depthwise_conv1d(x, p.values(ids.dw_w), p.values(ids.dw_b), BLOCK_KERNEL, counter)?;
        y = tensor::layer_norm(&y, None, None, LN_EPSILON)?;
        y = tensor::conv1d(&y, p.values(ids.pw1_w), p.values(ids.pw1_b), 4 * c, 1, 1, counter)?;
        y = tensor::gelu(&y);
        y = tensor::conv1d(&y, p.values(ids.pw2_w), p.values(ids.pw2_b), c, 1, 1, counter)?;
        tensor::add(&y, x)
    }

    /// Records the forward pass on a tape; returns the probability node.
    pub fn taped_forward<'a>(&'a self, tape: &mut Tape<'a>, segment: &Tensor) -> Result<NodeId> {
        self.check_segment(segment)?;
        let l = &self.layout;
        let mut x = tape.input(segment.clone());
        x = tape.conv1d(x, l.stem_w, l.stem_b, STEM_KERNEL)?;
        x = tape.layer_norm(x, LN_EPSILON)?;
        for s in 0..4 {
            for ids in &l.stages[s] {
                let input = x;
                let mut y = tape.depthwise_conv1d(input, ids.dw_w, ids.dw_b)?;
                y = tape.layer_norm(y, LN_EPSILON)?;
                y = tape.conv1d(y, ids.pw1_w, ids.pw1_b, 1)?;
                y = tape.gelu(y);
                y = tape.conv1d(y, ids.pw2_w, ids.pw2_b, 1)?;
                x = tape.add(y, input)?;
            }
            if s < 3 {
                let (w, b) = l.downsamples[s];
                x = tape.layer_norm(x, LN_EPSILON)?;
                x = tape.conv1d(x, w, b, 2)?;
            }
        }
        x = tape.layer_norm(x, LN_EPSILON)?;
        let pooled = tape.avg_pool_full(x)?;
        let logit = tape.linear(pooled, l.head_w, l.head_b)?;
        Ok(tape.sigmoid(logit))
    }

    /// Records forward plus weighted cross entropy; returns (probability
    /// node, loss node).
    pub fn taped_loss<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        segment: &Tensor,
        label: f64,
        pos_weight: f64,
        neg_weight: f64,
    ) -> Result<(NodeId, NodeId)> {
        let prob = self.taped_forward(tape, segment)?;
        let loss = tape.weighted_bce(prob, label, pos_weight, neg_weight)?;
        Ok((prob, loss))
    }
}
