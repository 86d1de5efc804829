//! The joint saliency/scanpath network.
//!
//! ```text
//! image ─ encoder ─ X ─ attention gate ─ X' ─┬─ decoder ─ σ ─ saliency map
//!                                            └─ scanpath head ─ Soft-ArgMax ─ scanpath
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionGate;
use crate::error::{Error, Result, ShapeMismatch};
use crate::params::{Bound, Conv, ParamStore};
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{Graph, Tensor, Var};

pub const SCANPATH_HEAD_LAYERS: usize = 10;
pub const DEFAULT_SCANPATH_LENGTH: usize = 8;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub convs: usize,
    pub channels: usize,
}

/// Full architectural description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// One entry per encoder block; each block halves the spatial extent.
    /// The decoder mirrors this list.
    pub encoder_blocks: Vec<EncoderBlock>,
    /// Output channels of the ten scanpath-head layers (non-increasing, last = 8).
    pub scanpath_head_channels: Vec<usize>,
    /// Soft-ArgMax temperature.
    pub beta: f64,
    pub attention_enabled: bool,
    pub attention_reduction: usize,
    pub attention_kernel: usize,
    pub gamma_init: f64,
    /// `(height, width)` of input images.
    pub input_size: (usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small model for CPU experiments: 64×64 input, 4 blocks, 64×4×4 bottleneck.
    pub fn desk() -> Self {
        ModelConfig {
            encoder_blocks: [16, 32, 48, 64].map(|channels| EncoderBlock { convs: 2, channels }).to_vec(),
            scanpath_head_channels: vec![64, 56, 48, 40, 32, 24, 20, 16, 12, 8],
            beta: 1.0,
            attention_enabled: true,
            attention_reduction: 4,
            attention_kernel: 3,
            gamma_init: 0.0,
            input_size: (64, 64),
        }
    }

    /// VGG-16 sized encoder on 224×320 inputs.
    pub fn vgg16() -> Self {
        let blocks = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
        ModelConfig {
            encoder_blocks: blocks.map(|(convs, channels)| EncoderBlock { convs, channels }).to_vec(),
            scanpath_head_channels: vec![512, 384, 256, 192, 128, 96, 64, 32, 16, 8],
            beta: 1.0,
            attention_enabled: true,
            attention_reduction: 16,
            attention_kernel: 7,
            gamma_init: 0.0,
            input_size: (224, 320),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" | "vgg16" => Ok(Self::vgg16()),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected desk or paper)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let head = &self.scanpath_head_channels;
        if head.len() != SCANPATH_HEAD_LAYERS {
            return Err(Error::Config(format!("scanpath head needs {SCANPATH_HEAD_LAYERS} layers, got {}", head.len())));
        }
        if head.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config(format!("scanpath head channels must be non-increasing: {head:?}")));
        }
        if head.last() != Some(&DEFAULT_SCANPATH_LENGTH) {
            return Err(Error::Config(format!("scanpath head must end with {DEFAULT_SCANPATH_LENGTH} channels")));
        }
        if self.encoder_blocks.is_empty() || self.encoder_blocks.iter().any(|b| b.convs == 0 || b.channels == 0) {
            return Err(Error::Config("encoder needs at least one block of non-empty convs".into()));
        }
        let factor = 1usize << self.encoder_blocks.len();
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::Config(format!("input size {h}×{w} is not divisible by 2^{}", self.encoder_blocks.len())));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        self.gate()?;
        Ok(())
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.encoder_blocks.last().map_or(0, |b| b.channels)
    }

    /// `(height, width)` of the bottleneck.
    pub fn bottleneck_size(&self) -> (usize, usize) {
        let f = 1usize << self.encoder_blocks.len();
        (self.input_size.0 / f, self.input_size.1 / f)
    }

    pub fn scanpath_length(&self) -> usize {
        *self.scanpath_head_channels.last().unwrap_or(&DEFAULT_SCANPATH_LENGTH)
    }

    pub fn gate(&self) -> Result<AttentionGate> {
        AttentionGate::new(self.bottleneck_channels(), self.attention_reduction, self.attention_kernel)
    }

    fn encoder_convs(&self) -> Vec<Vec<Conv>> {
        let mut in_ch = INPUT_CHANNELS;
        self.encoder_blocks
            .iter()
            .enumerate()
            .map(|(b, block)| {
                (0..block.convs)
                    .map(|c| {
                        let conv = Conv::new(format!("enc.{b}.{c}"), in_ch, block.channels, 3);
                        in_ch = block.channels;
                        conv
                    })
                    .collect()
            })
            .collect()
    }

    /// Decoder blocks in execution order (deepest first); each block is
    /// preceded by a 2× upsample.
    fn decoder_convs(&self) -> (Vec<Vec<Conv>>, Conv) {
        let blocks = &self.encoder_blocks;
        let mut ch = self.bottleneck_channels();
        let convs = (0..blocks.len())
            .rev()
            .map(|b| {
                let target = blocks[b.saturating_sub(1)].channels;
                (0..blocks[b].convs)
                    .map(|c| {
                        let out = if c + 1 == blocks[b].convs { target } else { blocks[b].channels };
                        let conv = Conv::new(format!("dec.{b}.{c}"), ch, out, 3);
                        ch = out;
                        conv
                    })
                    .collect()
            })
            .collect();
        (convs, Conv::new("dec.out", ch, 1, 1))
    }

    fn head_convs(&self) -> Vec<Conv> {
        let mut in_ch = self.bottleneck_channels();
        self.scanpath_head_channels
            .iter()
            .enumerate()
            .map(|(i, &out)| {
                let conv = Conv::new(format!("head.{i}"), in_ch, out, 3);
                in_ch = out;
                conv
            })
            .collect()
    }

    /// Every parameter name and shape, in checkpoint order.
    pub fn parameter_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut out: Vec<(String, Vec<usize>)> = self.encoder_convs().iter().flatten().flat_map(Conv::shapes).collect();
        out.extend(self.gate()?.shapes());
        let (dec, last) = self.decoder_convs();
        out.extend(dec.iter().flatten().flat_map(Conv::shapes));
        out.extend(last.shapes());
        out.extend(self.head_convs().iter().flat_map(Conv::shapes));
        Ok(out)
    }
}

/// Which sub-network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Encoder,
    Attention,
    Decoder,
    ScanpathHead,
}

impl Branch {
    pub fn of(name: &str) -> Option<Branch> {
        match name.split('.').next()? {
            "enc" => Some(Branch::Encoder),
            "att" => Some(Branch::Attention),
            "dec" => Some(Branch::Decoder),
            "head" => Some(Branch::ScanpathHead),
            _ => None,
        }
    }
}

/// Ordered fixation points in normalised coordinates (`x` along the width,
/// `y` along the height, both in `[0, 1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scanpath {
    points: Vec<(f64, f64)>,
}

impl Scanpath {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if let Some((i, p)) = points
            .iter()
            .enumerate()
            .find(|(_, (x, y))| !(0.0..=1.0).contains(x) || !(0.0..=1.0).contains(y))
        {
            return Err(Error::Contract(format!("scanpath point {i} = {p:?} lies outside [0,1]²")));
        }
        Ok(Scanpath { points })
    }

    /// From pixel coordinates on a `width × height` stimulus; pixel `(W−1, H−1)`
    /// maps to `(1, 1)`.
    pub fn from_pixels(points: &[(f64, f64)], width: usize, height: usize) -> Result<Self> {
        let sx = (width.max(2) - 1) as f64;
        let sy = (height.max(2) - 1) as f64;
        Self::new(points.iter().map(|&(x, y)| (x / sx, y / sy)).collect())
    }

    /// Inverse of [`Scanpath::from_pixels`] (unrounded).
    pub fn to_pixels(&self, width: usize, height: usize) -> Vec<(f64, f64)> {
        let sx = (width.max(2) - 1) as f64;
        let sy = (height.max(2) - 1) as f64;
        self.points.iter().map(|&(x, y)| (x * sx, y * sy)).collect()
    }

    /// Nearest pixel `(row, col)` of every point, clamped to the image.
    pub fn pixel_cells(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        self.points
            .iter()
            .map(|&(x, y)| {
                let row = (y * (height as f64 - 1.0)).round().clamp(0.0, height as f64 - 1.0) as usize;
                let col = (x * (width as f64 - 1.0)).round().clamp(0.0, width as f64 - 1.0) as usize;
                (row, col)
            })
            .collect()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Row-major 2-D saliency field. Decoder outputs lie in `[0, 1]`; ground-truth
/// and metric inputs only need to be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim("size", "saliency maps need positive extents"));
        }
        if values.len() != width * height {
            return Err(Error::dim("data", format!("{width}×{height} map given {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("saliency map contains non-finite values".into()));
        }
        Ok(SaliencyMap { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height).flat_map(|r| (0..width).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self::new(width, height, values)
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Plane `[batch, channel]` of a 4-D tensor.
    pub fn from_tensor_plane(t: &Tensor, batch: usize, channel: usize) -> Result<Self> {
        let (_, c, h, w) = t.dims4()?;
        let start = (batch * c + channel) * h * w;
        Self::new(w, h, t.data()[start..start + h * w].to_vec())
    }

    /// As a `[1, 1, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, 1, self.height, self.width], self.values.clone()).expect("consistent extents")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn same_shape(&self, other: &SaliencyMap) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::dim(
                "size",
                format!("{}×{} vs {}×{} maps", self.width, self.height, other.width, other.height),
            ));
        }
        Ok(())
    }
}

/// Constant `[1, 1, H, W]` planes holding `i/W` and `j/H`.
fn coordinate_grids(h: usize, w: usize) -> (Tensor, Tensor) {
    let xs = Tensor::from_fn(vec![1, 1, h, w], |k| (k % w) as f64 / w as f64);
    let ys = Tensor::from_fn(vec![1, 1, h, w], |k| (k / w) as f64 / h as f64);
    (xs, ys)
}

/// Differentiable Soft-ArgMax over every `H×W` plane of `features [B, N, H, W]`:
/// the softmax(β·x)-weighted mean of the grid coordinates `(i/W, j/H)`, with
/// column `i ∈ 0..W` and row `j ∈ 0..H`. Returns `[B, N, 2]` as `(x, y)` pairs.
pub fn soft_argmax_var<'g>(features: Var<'g>, beta: f64) -> Result<Var<'g>> {
    let (b, n, h, w) = features.value().dims4()?;
    let weights = features.softmax2d(beta)?;
    let g = features.graph();
    let (xs, ys) = coordinate_grids(h, w);
    let x = weights.mul(g.constant(xs))?.sum_axes(&[2, 3])?;
    let y = weights.mul(g.constant(ys))?.sum_axes(&[2, 3])?;
    g.concat(&[x, y], 3)?.reshape(vec![b, n, 2])
}

/// Untracked Soft-ArgMax returning one scanpath per batch item.
pub fn soft_argmax(features: &Tensor, beta: f64) -> Result<Vec<Scanpath>> {
    let g = Graph::new();
    let coords = soft_argmax_var(g.constant(features.clone()), beta)?.value();
    coords_to_scanpaths(&coords)
}

fn coords_to_scanpaths(coords: &Tensor) -> Result<Vec<Scanpath>> {
    let (b, n) = (coords.shape()[0], coords.shape()[1]);
    (0..b)
        .map(|i| {
            let pts = (0..n)
                .map(|k| {
                    let base = (i * n + k) * 2;
                    // convex combination of grid points in [0,1); clamp rounding noise only
                    (coords.data()[base].clamp(0.0, 1.0), coords.data()[base + 1].clamp(0.0, 1.0))
                })
                .collect();
            Scanpath::new(pts)
        })
        .collect()
}

/// Tracked intermediate values of one forward pass.
pub struct ForwardVars<'g> {
    pub bottleneck: Var<'g>,
    pub attended: Var<'g>,
    /// `[B, 1, H, W]`, sigmoid-activated.
    pub saliency: Var<'g>,
    /// `[B, N, h, w]` raw head activations.
    pub head: Var<'g>,
    /// `[B, N, 2]` Soft-ArgMax coordinates.
    pub scanpath: Var<'g>,
}

/// A network instance: configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SalyPath {
    config: ModelConfig,
    params: ParamStore,
}

impl SalyPath {
    /// Kaiming-uniform weights, zero biases, `γ = gamma_init`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for conv in config.encoder_convs().iter().flatten() {
            conv.init(&mut params, &mut rng);
        }
        config.gate()?.init(&mut params, config.gamma_init, &mut rng);
        let (dec, last) = config.decoder_convs();
        for conv in dec.iter().flatten().chain([&last]) {
            conv.init(&mut params, &mut rng);
        }
        for conv in config.head_convs() {
            conv.init(&mut params, &mut rng);
        }
        Ok(SalyPath { config, params })
    }

    /// Builds a model from explicit parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = config.parameter_shapes()?;
        let mut mismatches = Vec::new();
        for (name, shape) in &expected {
            let found = params.get(name).ok().map(|t| t.shape().to_vec());
            if found.as_ref() != Some(shape) {
                mismatches.push(ShapeMismatch { name: name.clone(), expected: Some(shape.clone()), found });
            }
        }
        for name in params.names() {
            if !expected.iter().any(|(n, _)| n == name) {
                mismatches.push(ShapeMismatch {
                    name: name.to_string(),
                    expected: None,
                    found: params.get(name).ok().map(|t| t.shape().to_vec()),
                });
            }
        }
        if !mismatches.is_empty() {
            return Err(Error::CheckpointMismatch(mismatches));
        }
        // canonical order
        let mut ordered = ParamStore::new();
        for (name, _) in expected {
            ordered.insert(name.clone(), params.get(&name)?.clone());
        }
        Ok(SalyPath { config, params: ordered })
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

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint { config: serde_json::to_value(&self.config)?, tensors: self.params.as_map().clone() })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(ckpt.config.clone())?;
        Self::from_params(config, ParamStore::from_map(ckpt.tensors.clone()))
    }

    /// Like [`SalyPath::from_checkpoint`] but against an externally supplied config.
    pub fn from_checkpoint_with_config(ckpt: &Checkpoint, config: ModelConfig) -> Result<Self> {
        Self::from_params(config, ParamStore::from_map(ckpt.tensors.clone()))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    fn check_image(&self, image: &Var) -> Result<()> {
        let (_, c, h, w) = image.value().dims4()?;
        if c != INPUT_CHANNELS {
            return Err(Error::dim("channels", format!("expected {INPUT_CHANNELS} image channels, got {c}")));
        }
        let (eh, ew) = self.config.input_size;
        if h != eh {
            return Err(Error::dim("height", format!("model expects height {eh}, got {h}")));
        }
        if w != ew {
            return Err(Error::dim("width", format!("model expects width {ew}, got {w}")));
        }
        Ok(())
    }

    /// Encoder: per block, 3×3 conv + ReLU repeated, then 2×2 max-pool.
    pub fn encode_var<'g>(&self, p: &Bound<'g>, image: Var<'g>) -> Result<Var<'g>> {
        self.check_image(&image)?;
        let mut x = image;
        for block in self.config.encoder_convs() {
            for conv in &block {
                x = conv.forward(p, x)?.relu();
            }
            x = x.maxpool2()?;
        }
        Ok(x)
    }

    /// Attention gate (identity when disabled).
    pub fn attend_var<'g>(&self, p: &Bound<'g>, bottleneck: Var<'g>) -> Result<Var<'g>> {
        if self.config.attention_enabled {
            self.config.gate()?.attend(p, bottleneck)
        } else {
            Ok(bottleneck)
        }
    }

    /// Decoder: mirrored upsample + 3×3 conv/ReLU blocks, then a 1×1 conv and sigmoid.
    pub fn decode_var<'g>(&self, p: &Bound<'g>, attended: Var<'g>) -> Result<Var<'g>> {
        let (blocks, last) = self.config.decoder_convs();
        let mut x = attended;
        for block in &blocks {
            x = x.upsample2()?;
            for conv in block {
                x = conv.forward(p, x)?.relu();
            }
        }
        Ok(last.forward(p, x)?.sigmoid())
    }

    /// Ten same-padded 3×3 convs, ReLU on all but the last.
    pub fn scanpath_head_var<'g>(&self, p: &Bound<'g>, attended: Var<'g>) -> Result<Var<'g>> {
        let convs = self.config.head_convs();
        let mut x = attended;
        for (i, conv) in convs.iter().enumerate() {
            x = conv.forward(p, x)?;
            if i + 1 < convs.len() {
                x = x.relu();
            }
        }
        Ok(x)
    }

    pub fn forward_var<'g>(&self, p: &Bound<'g>, image: Var<'g>) -> Result<ForwardVars<'g>> {
        let bottleneck = self.encode_var(p, image)?;
        let attended = self.attend_var(p, bottleneck)?;
        let saliency = self.decode_var(p, attended)?;
        let head = self.scanpath_head_var(p, attended)?;
        let scanpath = soft_argmax_var(head, self.config.beta)?;
        Ok(ForwardVars { bottleneck, attended, saliency, head, scanpath })
    }

    /// Untracked bottleneck features `[B, C, H/2^n, W/2^n]`.
    pub fn encode(&self, image: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params.bind_where(&g, |n| Branch::of(n) == Some(Branch::Encoder), |_| false);
        Ok((*self.encode_var(&p, g.constant(image.clone()))?.value()).clone())
    }

    /// Untracked attended bottleneck `X'`.
    pub fn encode_attended(&self, image: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params.bind(&g, |_| false);
        let x = self.encode_var(&p, g.constant(image.clone()))?;
        Ok((*self.attend_var(&p, x)?.value()).clone())
    }

    /// Untracked decoder, one map per batch item.
    pub fn decode(&self, attended: &Tensor) -> Result<Vec<SaliencyMap>> {
        let g = Graph::new();
        let p = self.params.bind(&g, |_| false);
        let y = self.decode_var(&p, g.constant(attended.clone()))?.value();
        (0..y.shape()[0]).map(|b| SaliencyMap::from_tensor_plane(&y, b, 0)).collect()
    }

    /// Untracked scanpath head activations.
    pub fn scanpath_head(&self, attended: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params.bind_where(&g, |n| Branch::of(n) == Some(Branch::ScanpathHead), |_| false);
        Ok((*self.scanpath_head_var(&p, g.constant(attended.clone()))?.value()).clone())
    }

    /// Predicts a saliency map and a scanpath for every image of a batch.
    pub fn forward_batch(&self, images: &Tensor) -> Result<Vec<(SaliencyMap, Scanpath)>> {
        let g = Graph::new();
        let p = self.params.bind(&g, |_| false);
        let out = self.forward_var(&p, g.constant(images.clone()))?;
        let maps = out.saliency.value();
        let paths = coords_to_scanpaths(&out.scanpath.value())?;
        paths
            .into_iter()
            .enumerate()
            .map(|(b, path)| Ok((SaliencyMap::from_tensor_plane(&maps, b, 0)?, path)))
            .collect()
    }

    /// Single-image forward pass on a `[1, 3, H, W]` tensor.
    pub fn forward(&self, image: &Tensor) -> Result<(SaliencyMap, Scanpath)> {
        let (b, ..) = image.dims4()?;
        if b != 1 {
            return Err(Error::dim("batch", format!("forward takes one image, got {b}; use forward_batch")));
        }
        Ok(self.forward_batch(image)?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            encoder_blocks: vec![EncoderBlock { convs: 1, channels: 4 }, EncoderBlock { convs: 1, channels: 8 }],
            scanpath_head_channels: vec![8, 8, 8, 8, 8, 8, 8, 8, 8, 8],
            beta: 1.0,
            attention_enabled: true,
            attention_reduction: 4,
            attention_kernel: 3,
            gamma_init: 0.0,
            input_size: (8, 8),
        }
    }

    #[test]
    fn config_validation() {
        ModelConfig::desk().validate().unwrap();
        ModelConfig::vgg16().validate().unwrap();
        let mut c = tiny();
        c.scanpath_head_channels.pop();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = tiny();
        c.scanpath_head_channels[9] = 4;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = tiny();
        c.scanpath_head_channels[3] = 9;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.input_size = (10, 8);
        assert!(c.validate().is_err());
    }

    #[test]
    fn bottleneck_geometry() {
        let c = ModelConfig::desk();
        assert_eq!(c.bottleneck_size(), (4, 4));
        assert_eq!(c.bottleneck_channels(), 64);
        assert_eq!(ModelConfig::vgg16().bottleneck_size(), (7, 10));
    }

    #[test]
    fn uniform_plane_gives_grid_mean() {
        let paths = soft_argmax(&Tensor::zeros(vec![1, 8, 4, 4]), 1.0).unwrap();
        for &(x, y) in paths[0].points() {
            assert!((x - 0.375).abs() < 1e-15 && (y - 0.375).abs() < 1e-15);
        }
    }

    #[test]
    fn sharp_peak_gives_argmax() {
        let mut f = Tensor::zeros(vec![1, 1, 4, 4]);
        f.data_mut()[4 + 3] = 1.0; // row j=1, column i=3
        let p = soft_argmax(&f, 50.0).unwrap();
        let (x, y) = p[0].points()[0];
        assert!((x - 0.75).abs() < 1e-3 && (y - 0.25).abs() < 1e-3, "{x} {y}");
    }

    #[test]
    fn scanpath_bounds_and_pixels() {
        assert!(Scanpath::new(vec![(0.5, 1.2)]).is_err());
        let p = Scanpath::new(vec![(0.0, 0.0), (1.0, 1.0), (0.5, 0.26)]).unwrap();
        assert_eq!(p.pixel_cells(5, 3), [(0, 0), (2, 4), (1, 2)]);
        let back = Scanpath::from_pixels(&p.to_pixels(5, 3), 5, 3).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn desk_shapes() {
        let m = SalyPath::new(ModelConfig::desk(), 0).unwrap();
        let img = Tensor::full(vec![1, 3, 64, 64], 0.5);
        let x = m.encode(&img).unwrap();
        assert_eq!(x.shape(), [1, 64, 4, 4]);
        assert_eq!(m.scanpath_head(&x).unwrap().shape(), [1, 8, 4, 4]);
        let (map, path) = m.forward(&img).unwrap();
        assert_eq!((map.width(), map.height()), (64, 64));
        assert!(map.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(path.len(), 8);
    }

    #[test]
    fn wrong_input_size_names_axis() {
        let m = SalyPath::new(tiny(), 0).unwrap();
        match m.encode(&Tensor::zeros(vec![1, 3, 8, 16])) {
            Err(Error::Dimension { axis, .. }) => assert_eq!(axis, "width"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_image_zero_bias_gives_zero_bottleneck() {
        let m = SalyPath::new(tiny(), 1).unwrap();
        let x = m.encode(&Tensor::zeros(vec![1, 3, 8, 8])).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_final_layer_gives_half_map() {
        let mut m = SalyPath::new(tiny(), 2).unwrap();
        m.params_mut().get_mut("dec.out.weight").unwrap().data_mut().fill(0.0);
        let bottleneck = Tensor::full(vec![1, 8, 2, 2], 0.3);
        let maps = m.decode(&bottleneck).unwrap();
        assert!(maps[0].values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_head_gives_centroids() {
        let mut m = SalyPath::new(tiny(), 3).unwrap();
        for (name, t) in m.params_mut().iter_mut() {
            if name.starts_with("head.") {
                t.data_mut().fill(0.0);
            }
        }
        let (_, path) = m.forward(&Tensor::full(vec![1, 3, 8, 8], 0.2)).unwrap();
        // 2×2 bottleneck: mean of {0, 0.5}
        assert!(path.points().iter().all(|&(x, y)| x == 0.25 && y == 0.25));
    }

    #[test]
    fn checkpoint_roundtrip_and_mismatch() {
        let m = SalyPath::new(tiny(), 4).unwrap();
        let ckpt = m.to_checkpoint().unwrap();
        let back = SalyPath::from_checkpoint(&ckpt).unwrap();
        assert_eq!(back.config(), m.config());
        let mut other = tiny();
        other.encoder_blocks[1].channels = 16;
        other.scanpath_head_channels = vec![16, 16, 8, 8, 8, 8, 8, 8, 8, 8];
        match SalyPath::from_checkpoint_with_config(&ckpt, other) {
            Err(Error::CheckpointMismatch(m)) => {
                assert!(m.iter().any(|x| x.name == "enc.1.0.weight" && x.expected == Some(vec![16, 4, 3, 3])));
            }
            other => panic!("{other:?}"),
        }
    }
}
