use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapternet::adapter::{
    adapter_backward, adapter_forward, adapter_fuse, fused_forward, init_adapter, AdapterCache,
    AdapterGrads, FedAdapter,
};
use crate::error::{Error, Result};
use crate::numkit::{
    argmax, fnv1a64_extend, frobenius_sq, gelu, gelu_grad, sgd_step, softmax_cross_entropy, Matrix,
    SeededRng, FNV1A64_OFFSET,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Index of this model type among the experiment's groups; doubles as
    /// the index of the share-adapter branch this model trains.
    pub group_id: usize,
    pub depth: usize,
    pub width: usize,
    pub bottleneck: usize,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        if self.bottleneck == 0 || self.bottleneck > self.width {
            return Err(Error::InvalidArgument(format!(
                "bottleneck {} must be in 1..={}",
                self.bottleneck, self.width
            )));
        }
        Ok(())
    }
}

/// Global share-adapter slot used by block `block` of a model of depth
/// `depth`, when the deepest model has `max_depth` blocks:
/// `round(block·(max_depth−1)/(depth−1))`, with depth 1 mapped to slot 0.
pub fn share_slot(block: usize, depth: usize, max_depth: usize) -> usize {
    assert!(
        block < depth && depth <= max_depth,
        "block {block} depth {depth} max {max_depth}"
    );
    if depth == 1 {
        return 0;
    }
    let num = block * (max_depth - 1);
    let den = depth - 1;
    // round half up in integers
    (2 * num + den) / (2 * den)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrozenBlock {
    pub w1: Matrix,
    pub w2: Matrix,
}

/// Frozen weights of one model type: input projection and residual MLP blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    input_proj: Matrix,
    blocks: Vec<FrozenBlock>,
}

impl Backbone {
    pub fn new(input_proj: Matrix, blocks: Vec<FrozenBlock>) -> Result<Self> {
        let m = input_proj.cols();
        for b in &blocks {
            if b.w1.shape() != (m, m) || b.w2.shape() != (m, m) {
                return Err(Error::Shape {
                    op: "backbone_block",
                    lhs: (m, m),
                    rhs: b.w1.shape(),
                });
            }
        }
        Ok(Self { input_proj, blocks })
    }

    /// Random stand-in for pretrained weights, variance-scaled by fan-in.
    pub fn random(config: &ModelConfig, rng: &mut SeededRng) -> Self {
        let m = config.width;
        let input_proj =
            rng.normal_matrix(config.input_dim, m, 1.0 / (config.input_dim as f64).sqrt());
        let blocks = (0..config.depth)
            .map(|_| FrozenBlock {
                w1: rng.normal_matrix(m, m, 1.0 / (m as f64).sqrt()),
                w2: rng.normal_matrix(m, m, 0.5 / (m as f64).sqrt()),
            })
            .collect();
        Self { input_proj, blocks }
    }

    pub fn input_proj(&self) -> &Matrix {
        &self.input_proj
    }

    pub fn blocks(&self) -> &[FrozenBlock] {
        &self.blocks
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Little-endian bytes of every frozen weight in declaration order.
    pub fn frozen_bytes(&self) -> Vec<u8> {
        let mut out = self.input_proj.to_le_bytes();
        for b in &self.blocks {
            out.extend(b.w1.to_le_bytes());
            out.extend(b.w2.to_le_bytes());
        }
        out
    }

    /// FNV-1a over [`Backbone::frozen_bytes`].
    pub fn fingerprint(&self) -> u64 {
        let mut h = fnv1a64_extend(FNV1A64_OFFSET, &self.input_proj.to_le_bytes());
        for b in &self.blocks {
            h = fnv1a64_extend(h, &b.w1.to_le_bytes());
            h = fnv1a64_extend(h, &b.w2.to_le_bytes());
        }
        h
    }

    pub fn param_count(&self) -> usize {
        self.input_proj.len()
            + self
                .blocks
                .iter()
                .map(|b| b.w1.len() + b.w2.len())
                .sum::<usize>()
    }
}

/// A frozen backbone with one [`FedAdapter`] per block and a trainable head.
#[derive(Clone, Debug)]
pub struct HeteroModel {
    config: ModelConfig,
    backbone: Arc<Backbone>,
    pub adapters: Vec<FedAdapter>,
    pub head: Matrix,
    fingerprint: u64,
}

#[derive(Clone, Debug)]
struct BlockCache {
    pre: Matrix,
    adapter: AdapterCache,
}

#[derive(Clone, Debug)]
pub struct ModelCache {
    blocks: Vec<BlockCache>,
    last_hidden: Matrix,
}

/// Gradients of every trainable tensor of a [`HeteroModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub adapters: Vec<AdapterGrads>,
    pub head: Matrix,
}

impl HeteroModel {
    pub fn new(
        config: ModelConfig,
        backbone: Arc<Backbone>,
        adapters: Vec<FedAdapter>,
        head: Matrix,
    ) -> Result<Self> {
        config.validate()?;
        let m = config.width;
        if backbone.depth() != config.depth
            || backbone.input_proj().shape() != (config.input_dim, m)
        {
            return Err(Error::InvalidArgument(format!(
                "backbone does not match config {config:?}"
            )));
        }
        if adapters.len() != config.depth {
            return Err(Error::InvalidArgument(format!(
                "{} adapters for {} blocks",
                adapters.len(),
                config.depth
            )));
        }
        for a in &adapters {
            a.validate()?;
            if a.width() != m || a.bottleneck() != config.bottleneck {
                return Err(Error::Shape {
                    op: "model_adapter",
                    lhs: (m, config.bottleneck),
                    rhs: a.w_loc_d.shape(),
                });
            }
            if config.group_id >= a.num_branches() {
                return Err(Error::InvalidArgument(format!(
                    "own branch {} missing from adapter with {} branches",
                    config.group_id,
                    a.num_branches()
                )));
            }
        }
        if head.shape() != (m, config.num_classes) {
            return Err(Error::Shape {
                op: "model_head",
                lhs: (m, config.num_classes),
                rhs: head.shape(),
            });
        }
        let fingerprint = backbone.fingerprint();
        Ok(Self {
            config,
            backbone,
            adapters,
            head,
            fingerprint,
        })
    }

    /// Fresh adapters on every block and a zero head.
    pub fn fresh(
        config: ModelConfig,
        backbone: Arc<Backbone>,
        num_branches: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let adapters = (0..config.depth)
            .map(|_| init_adapter(&config, num_branches, rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Matrix::zeros(config.width, config.num_classes);
        Self::new(config, backbone, adapters, head)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn own_branch(&self) -> usize {
        self.config.group_id
    }

    /// Fingerprint recorded when the model was built.
    pub fn recorded_fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Fingerprint recomputed from the current frozen weights.
    pub fn frozen_fingerprint(&self) -> u64 {
        self.backbone.fingerprint()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::Shape {
                op: "model_forward",
                lhs: x.shape(),
                rhs: self.backbone.input_proj().shape(),
            });
        }
        Ok(())
    }

    /// Training-form forward pass.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ModelCache)> {
        self.check_input(x)?;
        let mut h = gelu(&x.matmul(self.backbone.input_proj())?);
        let mut blocks = Vec::with_capacity(self.config.depth);
        for (block, adapter) in self.backbone.blocks().iter().zip(&self.adapters) {
            let pre = h.matmul(&block.w1)?;
            h = h.add(&gelu(&pre).matmul(&block.w2)?)?;
            let (y, cache) = adapter_forward(&h, adapter)?;
            h = y;
            blocks.push(BlockCache {
                pre,
                adapter: cache,
            });
        }
        let logits = h.matmul(&self.head)?;
        Ok((
            logits,
            ModelCache {
                blocks,
                last_hidden: h,
            },
        ))
    }

    /// Inference with every adapter collapsed to its fused `(A', B')` pair.
    pub fn forward_fused(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = gelu(&x.matmul(self.backbone.input_proj())?);
        for (block, adapter) in self.backbone.blocks().iter().zip(&self.adapters) {
            h = h.add(&gelu(&h.matmul(&block.w1)?).matmul(&block.w2)?)?;
            let (a_prime, b_prime) = adapter_fuse(adapter)?;
            h = fused_forward(&h, &a_prime, &b_prime)?;
        }
        h.matmul(&self.head)
    }

    /// Backbone alone, adapters skipped.
    pub fn forward_without_adapters(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = gelu(&x.matmul(self.backbone.input_proj())?);
        for block in self.backbone.blocks() {
            h = h.add(&gelu(&h.matmul(&block.w1)?).matmul(&block.w2)?)?;
        }
        h.matmul(&self.head)
    }

    pub fn backward(&self, cache: &ModelCache, dlogits: &Matrix) -> Result<ModelGrads> {
        if cache.blocks.len() != self.adapters.len() {
            return Err(Error::InvalidArgument("model cache depth mismatch".into()));
        }
        let head = cache.last_hidden.t_matmul(dlogits)?;
        let mut dh = dlogits.matmul_t(&self.head)?;
        let mut grads = Vec::with_capacity(self.adapters.len());
        for ((block, adapter), bc) in self
            .backbone
            .blocks()
            .iter()
            .zip(&self.adapters)
            .zip(&cache.blocks)
            .rev()
        {
            let g = adapter_backward(&bc.adapter, &dh, adapter, self.own_branch())?;
            dh = g.dx.clone();
            let inner = dh.matmul_t(&block.w2)?.hadamard(&gelu_grad(&bc.pre))?;
            dh = dh.add(&inner.matmul_t(&block.w1)?)?;
            grads.push(g);
        }
        grads.reverse();
        Ok(ModelGrads {
            adapters: grads,
            head,
        })
    }

    /// `λ · Σ_blocks (‖own down‖² + ‖own up‖²)`.
    pub fn regularization(&self, lambda: f64) -> f64 {
        let own = self.own_branch();
        lambda
            * self
                .adapters
                .iter()
                .map(|a| frobenius_sq(&a.branches[own].down) + frobenius_sq(&a.branches[own].up))
                .sum::<f64>()
    }

    /// Cross-entropy plus regularization, with gradients over the trainable set.
    pub fn loss_and_grads(
        &self,
        x: &Matrix,
        labels: &[usize],
        lambda: f64,
    ) -> Result<(f64, ModelGrads)> {
        let (logits, cache) = self.forward(x)?;
        let (ce, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let mut grads = self.backward(&cache, &dlogits)?;
        if lambda != 0.0 {
            let own = self.own_branch();
            for (g, a) in grads.adapters.iter_mut().zip(&self.adapters) {
                g.own_down
                    .add_scaled_assign(&a.branches[own].down, 2.0 * lambda)?;
                g.own_up
                    .add_scaled_assign(&a.branches[own].up, 2.0 * lambda)?;
            }
        }
        Ok((ce + self.regularization(lambda), grads))
    }

    /// One SGD update on the trainable mask: local pair, own branch, all
    /// scalars, head. Foreign branches and the backbone are untouched.
    pub fn apply_sgd(&mut self, grads: &ModelGrads, lr: f64) -> Result<()> {
        let own = self.own_branch();
        for (a, g) in self.adapters.iter_mut().zip(&grads.adapters) {
            a.w_loc_d = sgd_step(&a.w_loc_d, &g.w_loc_d, lr)?;
            a.w_loc_u = sgd_step(&a.w_loc_u, &g.w_loc_u, lr)?;
            a.branches[own].down = sgd_step(&a.branches[own].down, &g.own_down, lr)?;
            a.branches[own].up = sgd_step(&a.branches[own].up, &g.own_up, lr)?;
            for (alpha, ga) in a.alphas.iter_mut().zip(&g.alphas) {
                *alpha -= lr * ga;
            }
            if a.alphas.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { op: "sgd_step" });
            }
        }
        self.head = sgd_step(&self.head, &grads.head, lr)?;
        Ok(())
    }

    /// Argmax class per row, via the fused inference path.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.forward_fused(x)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }
}
