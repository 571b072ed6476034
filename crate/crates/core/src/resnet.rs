//! Multi-scale residual network built from BN -> ReLU -> dense layers.
//!
//! Layout per scale: the first block widens its input by the growth factor
//! through a BN-ReLU-dense shortcut; later blocks use the identity shortcut.
//! Every block has a two-layer convolution branch. A stem maps the raw input
//! to `width_1 / k` features and a BN-ReLU-dense head produces the logits.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::layers::{
    dense_backward, dense_forward, BnParams, DenseParams, Layer, LayerCache, LayerGrads,
    DEFAULT_EPSILON,
};
use crate::numerics::{Batch, SeededRng};

/// The three ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Model-1: BN and residual shortcuts.
    BnResidual,
    /// Model-2: BN, shortcut additions removed.
    BnOnly,
    /// Model-3: shortcuts kept, every BN sub-layer removed.
    ResidualOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::BnResidual, Variant::BnOnly, Variant::ResidualOnly];

    pub fn model_number(self) -> u8 {
        match self {
            Variant::BnResidual => 1,
            Variant::BnOnly => 2,
            Variant::ResidualOnly => 3,
        }
    }

    pub fn from_model_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Variant::BnResidual),
            2 => Ok(Variant::BnOnly),
            3 => Ok(Variant::ResidualOnly),
            _ => Err(Error::InvalidArgument(format!("unknown model variant {n}"))),
        }
    }

    pub fn has_bn(self) -> bool {
        self != Variant::ResidualOnly
    }

    pub fn has_shortcut(self) -> bool {
        self != Variant::BnOnly
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model-{}", self.model_number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleSpec {
    pub blocks: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub scales: Vec<ScaleSpec>,
    /// Width multiplier k between consecutive scales.
    pub growth: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub variant: Variant,
    /// Multiplier applied to every Xavier-initialized weight.
    pub init_scale: f64,
    pub epsilon: f64,
}

/// Position of one residual block in the network (indices are 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockInfo {
    pub index: usize,
    pub scale: usize,
    pub position: usize,
    pub in_width: usize,
    pub width: usize,
}

impl BlockInfo {
    pub fn is_first_of_scale(&self) -> bool {
        self.position == 1
    }
}

impl NetSpec {
    /// `blocks` residual blocks in each scale, widths `base, k*base, ...`.
    pub fn uniform(num_scales: usize, blocks: usize, base_width: usize, growth: usize) -> Self {
        let scales = (0..num_scales)
            .map(|s| ScaleSpec {
                blocks,
                width: base_width * growth.pow(s as u32),
            })
            .collect();
        NetSpec {
            scales,
            growth,
            input_dim: 64,
            num_classes: 10,
            variant: Variant::BnResidual,
            init_scale: 1.0,
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// 3 scales x 5 blocks, widths 16/32/64, k = 2.
    pub fn desk_default() -> Self {
        NetSpec::uniform(3, 5, 16, 2)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn total_blocks(&self) -> usize {
        self.scales.iter().map(|s| s.blocks).sum()
    }

    pub fn stem_width(&self) -> usize {
        self.scales.first().map(|s| s.width / self.growth.max(1)).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.scales.is_empty() {
            return bad("at least one scale is required".into());
        }
        if self.growth == 0 {
            return bad("growth factor must be positive".into());
        }
        if self.input_dim == 0 || self.num_classes < 2 {
            return bad("input_dim must be positive and num_classes >= 2".into());
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init_scale must be positive, got {}", self.init_scale));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        for (i, s) in self.scales.iter().enumerate() {
            if s.blocks == 0 {
                return bad(format!("scale {} has no blocks", i + 1));
            }
            if s.width == 0 {
                return bad(format!("scale {} has zero width", i + 1));
            }
        }
        let first = self.scales[0].width;
        if !first.is_multiple_of(self.growth) {
            return bad(format!(
                "first width {first} is not divisible by growth {}",
                self.growth
            ));
        }
        for w in self.scales.windows(2) {
            if w[1].width != w[0].width * self.growth {
                return bad(format!(
                    "width {} does not follow {} x {}",
                    w[1].width, self.growth, w[0].width
                ));
            }
        }
        Ok(())
    }

    pub fn block_layout(&self) -> Vec<BlockInfo> {
        let mut out = Vec::with_capacity(self.total_blocks());
        let mut prev = self.stem_width();
        for (s, scale) in self.scales.iter().enumerate() {
            for p in 0..scale.blocks {
                out.push(BlockInfo {
                    index: out.len() + 1,
                    scale: s + 1,
                    position: p + 1,
                    in_width: if p == 0 { prev } else { scale.width },
                    width: scale.width,
                });
            }
            prev = scale.width;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub info: BlockInfo,
    /// BN-ReLU-dense widening shortcut; present iff the block opens a scale.
    pub shortcut: Option<Layer>,
    pub conv1: Layer,
    pub conv2: Layer,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    pub shortcut: Option<LayerCache>,
    pub conv1: LayerCache,
    pub conv2: LayerCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: NetSpec,
    pub stem: DenseParams,
    pub blocks: Vec<Block>,
    pub head: Layer,
}

fn xavier(rng: &mut SeededRng, n_out: usize, n_in: usize, scale: f64) -> DenseParams {
    let limit = (6.0 / (n_in + n_out) as f64).sqrt();
    let w = Array2::from_shape_simple_fn((n_out, n_in), || scale * rng.uniform_range(-limit, limit));
    DenseParams::new(w)
}

fn make_layer(rng: &mut SeededRng, spec: &NetSpec, n_out: usize, n_in: usize) -> Layer {
    let dense = xavier(rng, n_out, n_in, spec.init_scale);
    let bn = spec
        .variant
        .has_bn()
        .then(|| BnParams::identity(n_in).with_epsilon(spec.epsilon));
    Layer { bn, dense }
}

/// Xavier-uniform weights, gamma = 1, beta = 0.
///
/// Parameters are drawn in the same order for every variant, so models built
/// from equal seeds share all weights.
pub fn build_network(spec: &NetSpec, rng: &mut SeededRng) -> Result<Model> {
    spec.validate()?;
    let stem = xavier(rng, spec.stem_width(), spec.input_dim, spec.init_scale);
    let mut blocks = Vec::with_capacity(spec.total_blocks());
    for info in spec.block_layout() {
        let shortcut = info
            .is_first_of_scale()
            .then(|| make_layer(rng, spec, info.width, info.in_width));
        let conv1 = make_layer(rng, spec, info.width, info.in_width);
        let conv2 = make_layer(rng, spec, info.width, info.width);
        blocks.push(Block {
            info,
            shortcut,
            conv1,
            conv2,
        });
    }
    let last = spec.scales.last().expect("validated").width;
    let head = make_layer(rng, spec, spec.num_classes, last);
    Ok(Model {
        spec: spec.clone(),
        stem,
        blocks,
        head,
    })
}

/// Forward pass through one block: shortcut(x) + F(F(x)).
pub fn block_forward(x: &Batch, block: &Block, variant: Variant) -> Result<(Batch, BlockCache)> {
    if x.n_features() != block.info.in_width {
        return Err(crate::error::shape_mismatch(
            "block_forward",
            &[x.batch_size(), block.info.in_width],
            &x.shape(),
        ));
    }
    let (mid, c1) = block.conv1.forward(x)?;
    let (conv, c2) = block.conv2.forward(&mid)?;
    if !variant.has_shortcut() {
        return Ok((
            conv,
            BlockCache {
                shortcut: None,
                conv1: c1,
                conv2: c2,
            },
        ));
    }
    let (out, sc) = match &block.shortcut {
        Some(layer) => {
            let (s, cache) = layer.forward(x)?;
            (s.into_inner() + conv.data(), Some(cache))
        }
        None => (x.data() + conv.data(), None),
    };
    Ok((
        Batch::new(out)?,
        BlockCache {
            shortcut: sc,
            conv1: c1,
            conv2: c2,
        },
    ))
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    /// Index of the first block that was run (0 for a full pass).
    pub start_block: usize,
    pub input: Option<Batch>,
    /// Input of the first block that was run.
    pub block_input: Batch,
    pub blocks: Vec<BlockCache>,
    /// Output y_L of every block that was run.
    pub block_outputs: Vec<Batch>,
    pub head: LayerCache,
    pub logits: Batch,
}

impl ForwardTape {
    /// Every ReLU mask in forward order.
    pub fn masks(&self) -> Vec<&ndarray::Array2<bool>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            if let Some(s) = &b.shortcut {
                out.push(&s.mask.0);
            }
            out.push(&b.conv1.mask.0);
            out.push(&b.conv2.mask.0);
        }
        out.push(&self.head.mask.0);
        out
    }
}

/// Parameter gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub dgamma: Option<Array1<f64>>,
    pub dbeta: Option<Array1<f64>>,
    pub dw: Array2<f64>,
}

impl ParamGrads {
    fn from_layer(g: LayerGrads) -> Self {
        ParamGrads {
            dgamma: g.dgamma,
            dbeta: g.dbeta,
            dw: g.dw,
        }
    }

    fn zeros_like(layer: &Layer) -> Self {
        ParamGrads {
            dgamma: layer.bn.as_ref().map(|p| Array1::zeros(p.n_features())),
            dbeta: layer.bn.as_ref().map(|p| Array1::zeros(p.n_features())),
            dw: Array2::zeros(layer.dense.weights.raw_dim()),
        }
    }

    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        if let Some(g) = &self.dgamma {
            out.push((format!("{prefix}.gamma"), g.as_slice().expect("contiguous")));
        }
        if let Some(b) = &self.dbeta {
            out.push((format!("{prefix}.beta"), b.as_slice().expect("contiguous")));
        }
        out.push((format!("{prefix}.w"), self.dw.as_slice().expect("contiguous")));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub shortcut: Option<ParamGrads>,
    pub conv1: ParamGrads,
    pub conv2: ParamGrads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub stem: Array2<f64>,
    pub blocks: Vec<BlockGrads>,
    pub head: ParamGrads,
}

impl ModelGrads {
    /// Named gradient tensors, in the same order as [`Model::tensors`].
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("stem.w".to_string(), self.stem.as_slice().expect("contiguous"))];
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("block{}", i + 1);
            if let Some(s) = &b.shortcut {
                s.push_tensors(&format!("{p}.shortcut"), &mut out);
            }
            b.conv1.push_tensors(&format!("{p}.conv1"), &mut out);
            b.conv2.push_tensors(&format!("{p}.conv2"), &mut out);
        }
        self.head.push_tensors("head", &mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// The two summands of the gradient at a block input.
#[derive(Debug, Clone)]
pub struct BranchGrads {
    /// Through the shortcut branch (identity or widening layer); zero without shortcuts.
    pub shortcut: Batch,
    /// Through the convolution branch.
    pub conv: Batch,
}

#[derive(Debug, Clone)]
pub struct BackwardTape {
    pub grads: ModelGrads,
    /// dLoss/dy_L at the output of every block, in forward order.
    pub boundary: Vec<Batch>,
    /// Per-block summands of dLoss/dy_{L-1}; filled only on request.
    pub branches: Vec<BranchGrads>,
    /// Gradient at the input of the first block that was run.
    pub d_block_input: Batch,
    /// Gradient at the raw network input (full passes only).
    pub d_input: Option<Batch>,
}

impl Model {
    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    /// Full forward pass: stem, all blocks, head.
    pub fn forward(&self, x: &Batch) -> Result<ForwardTape> {
        let stem_out = dense_forward(x, &self.stem)?;
        let mut tape = self.forward_from(0, &stem_out)?;
        tape.input = Some(x.clone());
        Ok(tape)
    }

    /// Runs blocks `start_block + 1 ..` (1-based) and the head on `y`, which
    /// stands in for the output of block `start_block` (the stem output when 0).
    pub fn forward_from(&self, start_block: usize, y: &Batch) -> Result<ForwardTape> {
        if start_block > self.blocks.len() {
            return Err(Error::InvalidArgument(format!(
                "start block {start_block} exceeds {} blocks",
                self.blocks.len()
            )));
        }
        let mut caches = Vec::with_capacity(self.blocks.len() - start_block);
        let mut outputs = Vec::with_capacity(self.blocks.len() - start_block);
        let mut cur = y.clone();
        for block in &self.blocks[start_block..] {
            let (out, cache) = block_forward(&cur, block, self.variant())?;
            caches.push(cache);
            outputs.push(out.clone());
            cur = out;
        }
        let (logits, head) = self.head.forward(&cur)?;
        Ok(ForwardTape {
            start_block,
            input: None,
            block_input: y.clone(),
            blocks: caches,
            block_outputs: outputs,
            head,
            logits,
        })
    }

    pub fn backward(&self, tape: &ForwardTape, dlogits: &Batch) -> Result<BackwardTape> {
        self.backward_with(tape, dlogits, false)
    }

    /// Backward pass; `keep_branches` also records both summands of every
    /// block-input gradient.
    pub fn backward_with(
        &self,
        tape: &ForwardTape,
        dlogits: &Batch,
        keep_branches: bool,
    ) -> Result<BackwardTape> {
        let run = &self.blocks[tape.start_block..];
        if tape.blocks.len() != run.len() {
            return Err(Error::NoForwardCache);
        }
        dlogits.check_shape("network_backward", tape.logits.shape())?;
        let head_g = self.head.backward(dlogits, &tape.head)?;
        let mut g = head_g.dx.clone();
        let head = ParamGrads::from_layer(head_g);

        let n = run.len();
        let mut boundary = vec![Batch::zeros(1, 1); n];
        let mut block_grads = Vec::with_capacity(n);
        let mut branches = Vec::new();
        for (i, (block, cache)) in run.iter().zip(&tape.blocks).enumerate().rev() {
            boundary[i] = g.clone();
            let g2 = block.conv2.backward(&g, &cache.conv2)?;
            let g1 = block.conv1.backward(&g2.dx, &cache.conv1)?;
            let conv_dx = g1.dx.clone();
            let (sc_dx, sc_grads) = if !self.variant().has_shortcut() {
                let zero = Batch::zeros(conv_dx.batch_size(), conv_dx.n_features());
                let unused = block.shortcut.as_ref().map(ParamGrads::zeros_like);
                (zero, unused)
            } else {
                match (&block.shortcut, &cache.shortcut) {
                    (Some(layer), Some(c)) => {
                        let gs = layer.backward(&g, c)?;
                        (gs.dx.clone(), Some(ParamGrads::from_layer(gs)))
                    }
                    (None, None) => (g.clone(), None),
                    _ => return Err(Error::NoForwardCache),
                }
            };
            let next = Batch::new(sc_dx.data() + conv_dx.data())?;
            if keep_branches {
                branches.push(BranchGrads {
                    shortcut: sc_dx,
                    conv: conv_dx,
                });
            }
            block_grads.push(BlockGrads {
                shortcut: sc_grads,
                conv1: ParamGrads::from_layer(g1),
                conv2: ParamGrads::from_layer(g2),
            });
            g = next;
        }
        block_grads.reverse();
        branches.reverse();

        let (stem, d_input) = match &tape.input {
            Some(x) if tape.start_block == 0 => {
                let (dx, dw) = dense_backward(&g, x, &self.stem)?;
                (dw, Some(dx))
            }
            _ => (Array2::zeros(self.stem.weights.raw_dim()), None),
        };
        // Blocks before the start of a partial pass get zero gradients.
        let mut all_blocks: Vec<BlockGrads> = self.blocks[..tape.start_block]
            .iter()
            .map(|b| BlockGrads {
                shortcut: b.shortcut.as_ref().map(ParamGrads::zeros_like),
                conv1: ParamGrads::zeros_like(&b.conv1),
                conv2: ParamGrads::zeros_like(&b.conv2),
            })
            .collect();
        all_blocks.extend(block_grads);
        Ok(BackwardTape {
            grads: ModelGrads {
                stem,
                blocks: all_blocks,
                head,
            },
            boundary,
            branches,
            d_block_input: g,
            d_input,
        })
    }

    /// Named parameter tensors with shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        fn push<'a>(layer: &'a Layer, prefix: &str, out: &mut Vec<(String, &'a [f64], Vec<usize>)>) {
            if let Some(bn) = &layer.bn {
                let n = bn.n_features();
                out.push((format!("{prefix}.gamma"), bn.gamma.as_slice().expect("contiguous"), vec![n]));
                out.push((format!("{prefix}.beta"), bn.beta.as_slice().expect("contiguous"), vec![n]));
            }
            let w = &layer.dense.weights;
            out.push((format!("{prefix}.w"), w.as_slice().expect("contiguous"), w.shape().to_vec()));
        }
        let mut out = vec![(
            "stem.w".to_string(),
            self.stem.weights.as_slice().expect("contiguous"),
            self.stem.weights.shape().to_vec(),
        )];
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("block{}", i + 1);
            if let Some(s) = &b.shortcut {
                push(s, &format!("{p}.shortcut"), &mut out);
            }
            push(&b.conv1, &format!("{p}.conv1"), &mut out);
            push(&b.conv2, &format!("{p}.conv2"), &mut out);
        }
        push(&self.head, "head", &mut out);
        out
    }

    /// Mutable views of the tensors listed by [`Model::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        fn push<'a>(layer: &'a mut Layer, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
            if let Some(bn) = &mut layer.bn {
                out.push((format!("{prefix}.gamma"), bn.gamma.as_slice_mut().expect("contiguous")));
                out.push((format!("{prefix}.beta"), bn.beta.as_slice_mut().expect("contiguous")));
            }
            out.push((format!("{prefix}.w"), layer.dense.weights.as_slice_mut().expect("contiguous")));
        }
        let mut out = vec![(
            "stem.w".to_string(),
            self.stem.weights.as_slice_mut().expect("contiguous"),
        )];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("block{}", i + 1);
            if let Some(s) = &mut b.shortcut {
                push(s, &format!("{p}.shortcut"), &mut out);
            }
            push(&mut b.conv1, &format!("{p}.conv1"), &mut out);
            push(&mut b.conv2, &format!("{p}.conv2"), &mut out);
        }
        push(&mut self.head, "head", &mut out);
        out
    }

    /// All BN sub-layers as (block index, layer name, params); block 0 is the head.
    pub fn bn_layers(&self) -> Vec<(usize, String, &BnParams)> {
        let mut out = Vec::new();
        for b in &self.blocks {
            let i = b.info.index;
            if let Some(bn) = b.shortcut.as_ref().and_then(|l| l.bn.as_ref()) {
                out.push((i, format!("block{i}.shortcut"), bn));
            }
            if let Some(bn) = &b.conv1.bn {
                out.push((i, format!("block{i}.conv1"), bn));
            }
            if let Some(bn) = &b.conv2.bn {
                out.push((i, format!("block{i}.conv2"), bn));
            }
        }
        if let Some(bn) = &self.head.bn {
            out.push((0, "head".to_string(), bn));
        }
        out
    }

    /// Serializes every parameter tensor with its name and shape.
    ///
    /// Layout (little endian): magic `RGCK`, u32 version, u32 tensor count, then
    /// per tensor: u32 name length, name bytes, u32 rank, u64 dims, f64 data.
    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let tensors = self.tensors();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, data, shape) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in &shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Overwrites parameters from a checkpoint; names and shapes must match.
    pub fn load_checkpoint_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let mut r = bytes;
        let fail = |m: &str| Error::Format {
            path: "<checkpoint>".into(),
            msg: m.to_string(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| fail("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(fail("bad magic"));
        }
        let version = read_u32(&mut r).ok_or_else(|| fail("truncated header"))?;
        if version != CHECKPOINT_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r).ok_or_else(|| fail("truncated header"))? as usize;
        let shapes: Vec<(String, Vec<usize>)> = self
            .tensors()
            .into_iter()
            .map(|(n, _, s)| (n, s))
            .collect();
        if count != shapes.len() {
            return Err(fail(&format!("expected {} tensors, found {count}", shapes.len())));
        }
        let mut staged = Vec::with_capacity(count);
        for (name, shape) in &shapes {
            let len = read_u32(&mut r).ok_or_else(|| fail("truncated tensor"))? as usize;
            let mut nb = vec![0u8; len];
            r.read_exact(&mut nb).map_err(|_| fail("truncated tensor"))?;
            if nb != name.as_bytes() {
                return Err(fail(&format!(
                    "expected tensor {name}, found {}",
                    String::from_utf8_lossy(&nb)
                )));
            }
            let rank = read_u32(&mut r).ok_or_else(|| fail("truncated tensor"))? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(read_u64(&mut r).ok_or_else(|| fail("truncated tensor"))? as usize);
            }
            if &dims != shape {
                return Err(fail(&format!("shape mismatch for {name}: {dims:?} vs {shape:?}")));
            }
            let n: usize = dims.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_bits(
                    read_u64(&mut r).ok_or_else(|| fail("truncated data"))?,
                ));
            }
            staged.push(data);
        }
        if !r.is_empty() {
            return Err(fail("trailing bytes"));
        }
        for ((_, dst), src) in self.tensors_mut().into_iter().zip(staged) {
            dst.copy_from_slice(&src);
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.checkpoint_bytes())?;
        Ok(())
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.load_checkpoint_bytes(&bytes).map_err(|e| match e {
            Error::Format { msg, .. } => Error::Format {
                path: path.to_path_buf(),
                msg,
            },
            other => other,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"RGCK";
const CHECKPOINT_VERSION: u32 = 1;

fn read_u32(r: &mut &[u8]) -> Option<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Option<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).ok()?;
    Some(u64::from_le_bytes(b))
}
