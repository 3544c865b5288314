use crate::adapternet::{HeteroModel, SharePair};
use crate::datapart::Dataset;
use crate::error::{Error, Result};
use crate::numkit::{Matrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub lambda_reg: f64,
    pub batch_size: usize,
}

/// Uploaded state of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockUpdate {
    pub w_loc_d: Matrix,
    pub w_loc_u: Matrix,
    /// Branch index of `share`; must equal the sender's group.
    pub branch: usize,
    pub share: SharePair,
    pub alphas: Vec<f64>,
}

/// What a client sends after local training: its trainable tensors and
/// nothing else.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterUpdate {
    pub group_id: usize,
    pub blocks: Vec<BlockUpdate>,
    pub head: Matrix,
    pub sample_count: usize,
    /// Sample-weighted mean loss over the final local epoch. Metadata, not a weight.
    pub train_loss: f64,
}

impl AdapterUpdate {
    pub fn from_model(model: &HeteroModel, sample_count: usize, train_loss: f64) -> Self {
        let own = model.own_branch();
        let blocks = model
            .adapters
            .iter()
            .map(|a| BlockUpdate {
                w_loc_d: a.w_loc_d.clone(),
                w_loc_u: a.w_loc_u.clone(),
                branch: own,
                share: a.branches[own].clone(),
                alphas: a.alphas.clone(),
            })
            .collect();
        Self {
            group_id: own,
            blocks,
            head: model.head.clone(),
            sample_count,
            train_loss,
        }
    }

    /// Number of `f64` weights carried.
    pub fn float_count(&self) -> usize {
        self.head.len()
            + self
                .blocks
                .iter()
                .map(|b| {
                    b.w_loc_d.len()
                        + b.w_loc_u.len()
                        + b.share.down.len()
                        + b.share.up.len()
                        + b.alphas.len()
                })
                .sum::<usize>()
    }

    pub fn payload_bytes(&self) -> usize {
        8 * self.float_count()
    }

    /// Rejects updates carrying any branch other than the sender's own.
    pub fn check_purity(&self) -> Result<()> {
        for (j, b) in self.blocks.iter().enumerate() {
            if b.branch != self.group_id {
                return Err(Error::Protocol(format!(
                    "update from group {} carries branch {} at block {j}",
                    self.group_id, b.branch
                )));
            }
        }
        Ok(())
    }
}

/// Mini-batch SGD over the trainable mask for `opts.epochs` epochs. Each
/// epoch visits the shard in an order drawn from `rng`; the last batch may
/// be short.
pub fn local_train(
    model: &mut HeteroModel,
    shard: &Dataset,
    opts: &TrainOptions,
    rng: &mut SeededRng,
) -> Result<AdapterUpdate> {
    if shard.is_empty() {
        return Err(Error::EmptyDataset("local shard"));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if shard.num_classes() > model.config().num_classes {
        return Err(Error::InvalidArgument(format!(
            "shard has {} classes, model head {}",
            shard.num_classes(),
            model.config().num_classes
        )));
    }
    let n = shard.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_loss = f64::NAN;
    for epoch in 0..opts.epochs {
        rng.shuffle(&mut order);
        let mut weighted = 0.0;
        for (batch, idx) in order.chunks(opts.batch_size).enumerate() {
            let x = shard.features().select_rows(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| shard.labels()[i]).collect();
            let step =
                model
                    .loss_and_grads(&x, &labels, opts.lambda_reg)
                    .and_then(|(loss, grads)| {
                        if !loss.is_finite() {
                            return Err(Error::NonFinite { op: "loss" });
                        }
                        model.apply_sgd(&grads, opts.lr)?;
                        Ok(loss)
                    });
            match step {
                Ok(loss) => weighted += loss * idx.len() as f64,
                Err(Error::NonFinite { .. }) => return Err(Error::NonFiniteLoss { epoch, batch }),
                Err(e) => return Err(e),
            }
        }
        epoch_loss = weighted / n as f64;
    }
    Ok(AdapterUpdate::from_model(model, n, epoch_loss))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::adapternet::{Backbone, ModelConfig};
    use crate::datapart::gen_blobs;
    use crate::numkit::softmax_cross_entropy;

    fn setup(seed: u64) -> (HeteroModel, Dataset) {
        let cfg = ModelConfig {
            group_id: 1,
            depth: 2,
            width: 8,
            bottleneck: 3,
            input_dim: 4,
            num_classes: 3,
        };
        let mut rng = SeededRng::new(seed, "train");
        let backbone = Arc::new(Backbone::random(&cfg, &mut rng));
        let mut model = HeteroModel::fresh(cfg, backbone, 2, &mut rng).unwrap();
        // move off the zero-init point so every tensor has a gradient
        model.head = rng.normal_matrix(8, 3, 0.3);
        for a in &mut model.adapters {
            a.w_loc_u = rng.normal_matrix(3, 8, 0.3);
            a.branches[0] = crate::adapternet::SharePair {
                down: rng.normal_matrix(3, 3, 0.5),
                up: rng.normal_matrix(3, 3, 0.5),
            };
            a.alphas[0] = 0.3;
        }
        let data = gen_blobs(3, 4, 6, 0.5, &mut rng).unwrap();
        (model, data)
    }

    fn opts(lr: f64, lambda: f64, batch: usize) -> TrainOptions {
        TrainOptions {
            epochs: 1,
            lr,
            lambda_reg: lambda,
            batch_size: batch,
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let (mut model, data) = setup(1);
        let before = AdapterUpdate::from_model(&model, data.len(), 0.0);
        let fp = model.frozen_fingerprint();
        let mut o = opts(0.0, 1e-4, 5);
        o.epochs = 3;
        let update = local_train(&mut model, &data, &o, &mut SeededRng::new(2, "c")).unwrap();
        assert_eq!(update.blocks, before.blocks);
        assert_eq!(update.head, before.head);
        assert_eq!(update.sample_count, data.len());
        assert_eq!(model.frozen_fingerprint(), fp);
    }

    #[test]
    fn training_keeps_backbone_and_foreign_branches() {
        let (mut model, data) = setup(3);
        let fp = model.frozen_fingerprint();
        let bytes = model.backbone().frozen_bytes();
        let foreign: Vec<_> = model
            .adapters
            .iter()
            .map(|a| a.branches[0].clone())
            .collect();
        let mut o = opts(0.1, 1e-3, 4);
        o.epochs = 4;
        let update = local_train(&mut model, &data, &o, &mut SeededRng::new(4, "c")).unwrap();
        assert_eq!(model.frozen_fingerprint(), fp);
        assert_eq!(model.backbone().frozen_bytes(), bytes);
        for (a, f) in model.adapters.iter().zip(&foreign) {
            assert_eq!(&a.branches[0], f);
        }
        assert!(update.train_loss.is_finite());
        update.check_purity().unwrap();
    }

    #[test]
    fn full_batch_step_is_gradient_descent() {
        let (model, data) = setup(5);
        let lr = 0.05;
        let mut trained = model.clone();
        let update = local_train(
            &mut trained,
            &data,
            &opts(lr, 0.0, data.len()),
            &mut SeededRng::new(6, "c"),
        )
        .unwrap();

        // Full-batch loss is permutation invariant; check the step against
        // central differences of the loss on the un-permuted data.
        let loss = |m: &HeteroModel| {
            let (logits, _) = m.forward(data.features()).unwrap();
            softmax_cross_entropy(&logits, data.labels()).unwrap().0
        };
        let h = 1e-6;
        let check = |after: f64, before: f64, perturb: &dyn Fn(&mut HeteroModel, f64)| {
            let mut p = model.clone();
            perturb(&mut p, h);
            let mut q = model.clone();
            perturb(&mut q, -h);
            let fd = (loss(&p) - loss(&q)) / (2.0 * h);
            let step = (before - after) / lr;
            let scale = fd.abs().max(step.abs()).max(1e-7);
            assert!((step - fd).abs() / scale < 1e-4, "{step} vs {fd}");
        };
        for i in 0..model.head.len() {
            check(update.head.data()[i], model.head.data()[i], &|m, d| {
                m.head.data_mut()[i] += d
            });
        }
        for b in 0..2 {
            for i in 0..model.adapters[b].w_loc_d.len() {
                check(
                    update.blocks[b].w_loc_d.data()[i],
                    model.adapters[b].w_loc_d.data()[i],
                    &|m, d| m.adapters[b].w_loc_d.data_mut()[i] += d,
                );
            }
            for i in 0..9 {
                check(
                    update.blocks[b].share.down.data()[i],
                    model.adapters[b].branches[1].down.data()[i],
                    &|m, d| m.adapters[b].branches[1].down.data_mut()[i] += d,
                );
            }
            for k in 0..2 {
                check(
                    update.blocks[b].alphas[k],
                    model.adapters[b].alphas[k],
                    &|m, d| m.adapters[b].alphas[k] += d,
                );
            }
        }
    }

    #[test]
    fn update_size_and_purity() {
        let (model, _) = setup(7);
        let mut u = AdapterUpdate::from_model(&model, 10, 0.0);
        // 2 blocks of (8·3 + 3·8 + 9 + 9 + 2) plus an 8×3 head
        assert_eq!(u.float_count(), 2 * (24 + 24 + 9 + 9 + 2) + 24);
        assert_eq!(u.payload_bytes(), 8 * u.float_count());
        u.check_purity().unwrap();
        u.blocks[1].branch = 0;
        assert!(matches!(u.check_purity(), Err(Error::Protocol(_))));
    }

    #[test]
    fn diverging_training_reports_position() {
        let (mut model, data) = setup(8);
        let mut o = opts(1e6, 0.0, 6);
        o.epochs = 50;
        let err = local_train(&mut model, &data, &o, &mut SeededRng::new(1, "c")).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }
}
