//! Fixed-seed property checks, each against an oracle that does not share
//! code with the path under test. Backs the `verify` subcommand.

use std::sync::Arc;
use std::time::Instant;

use crate::adapternet::{
    adapter_forward, adapter_fuse, fused_forward, local_train, param_count, random_adapter,
    share_slot, AdapterUpdate, Backbone, BlockUpdate, FedAdapter, HeteroModel, ModelConfig,
    SharePair, TrainOptions,
};
use crate::datapart::{dirichlet_partition, gen_blobs, mean_client_entropy, Dataset};
use crate::error::Result;
use crate::fedsim::{
    aggregate_local, aggregate_share, weighted_average, Client, Federation, FederationSettings,
    ShareAggregation, ShareSet,
};
use crate::numkit::{gelu_grad_scalar, gelu_scalar, softmax_cross_entropy, Matrix, SeededRng};

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = std::result::Result<String, String>;

fn timed(name: &'static str, f: impl FnOnce() -> Outcome) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn internal(e: crate::Error) -> String {
    format!("error: {e}")
}

/// Runs every check in a fixed order.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        timed("matmul_triple_loop", matmul_triple_loop),
        timed("gelu_derivative", gelu_derivative),
        timed("cross_entropy_gradient", cross_entropy_gradient),
        timed("fusion_equivalence", || {
            fusion_equivalence(1000, adapter_fuse)
        }),
        timed("model_gradients", model_gradients),
        timed("aggregate_local_oracle", aggregate_local_oracle),
        timed("aggregate_share_oracle", aggregate_share_oracle),
        timed("fedavg_reduction", || fedavg_reduction(8, 3)),
        timed("frozen_backbone", frozen_backbone),
        timed("dirichlet_heterogeneity", || dirichlet_heterogeneity(10)),
        timed("blobs_nearest_mean", blobs_nearest_mean),
        timed("reduction_ratio_monotone", reduction_ratio_monotone),
    ]
}

fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

pub fn matmul_triple_loop() -> Outcome {
    let mut rng = SeededRng::new(1, "verify:matmul");
    for _ in 0..200 {
        let (n, k, m) = (1 + rng.below(12), 1 + rng.below(12), 1 + rng.below(12));
        let a = rng.normal_matrix(n, k, 1.0);
        let b = rng.normal_matrix(k, m, 1.0);
        let fast = a.matmul(&b).map_err(internal)?;
        let diff = fast.max_abs_diff(&naive_matmul(&a, &b)).map_err(internal)?;
        if diff > 1e-12 {
            return Err(format!("{n}x{k}·{k}x{m} deviates by {diff:e}"));
        }
    }
    Ok("200 random products".into())
}

pub fn gelu_derivative() -> Outcome {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let x = -6.0 + 12.0 * i as f64 / 999.0;
        let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
        worst = worst.max((fd - gelu_grad_scalar(x)).abs());
    }
    if worst < 1e-8 {
        Ok(format!("max |fd - analytic| = {worst:.2e} over [-6, 6]"))
    } else {
        Err(format!("GELU derivative deviates by {worst:e}"))
    }
}

pub fn cross_entropy_gradient() -> Outcome {
    let mut rng = SeededRng::new(2, "verify:ce");
    let logits = rng.normal_matrix(5, 4, 2.0);
    let labels = [0, 3, 1, 1, 2];
    let (_, grad) = softmax_cross_entropy(&logits, &labels).map_err(internal)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..logits.len() {
        let mut plus = logits.clone();
        plus.data_mut()[i] += h;
        let mut minus = logits.clone();
        minus.data_mut()[i] -= h;
        let lp = softmax_cross_entropy(&plus, &labels).map_err(internal)?.0;
        let lm = softmax_cross_entropy(&minus, &labels).map_err(internal)?.0;
        worst = worst.max(((lp - lm) / (2.0 * h) - grad.data()[i]).abs());
    }
    if worst < 1e-7 {
        Ok(format!("max |fd - analytic| = {worst:.2e}"))
    } else {
        Err(format!("cross-entropy gradient deviates by {worst:e}"))
    }
}

/// Training-form output against fused inference over `pairs` random
/// adapters with `m ∈ 4..=64`, `r ∈ 1..=16`, `M ∈ 1..=4`. Generic over the
/// fusion so a perturbed implementation can be fed through the same check.
pub fn fusion_equivalence<F>(pairs: usize, fuse: F) -> Outcome
where
    F: Fn(&FedAdapter) -> Result<(Matrix, Matrix)>,
{
    let mut rng = SeededRng::new(3, "verify:fusion");
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let m = 4 + rng.below(61);
        let r = 1 + rng.below(16);
        let branches = 1 + rng.below(4);
        let rows = 1 + rng.below(8);
        let a = random_adapter(m, r, branches, &mut rng);
        let x = rng.normal_matrix(rows, m, 1.0);
        let (train, _) = adapter_forward(&x, &a).map_err(internal)?;
        let (ap, bp) = fuse(&a).map_err(internal)?;
        let fused = fused_forward(&x, &ap, &bp).map_err(internal)?;
        worst = worst.max(train.max_abs_diff(&fused).map_err(internal)?);
    }
    if worst <= 1e-12 {
        Ok(format!("{pairs} pairs, max deviation {worst:.2e}"))
    } else {
        Err(format!("fused output deviates by {worst:e} (limit 1e-12)"))
    }
}

#[derive(Clone, Copy, Debug)]
enum Param {
    LocD(usize, usize),
    LocU(usize, usize),
    OwnD(usize, usize),
    OwnU(usize, usize),
    Alpha(usize, usize),
    Head(usize),
}

fn param_mut(model: &mut HeteroModel, p: Param) -> &mut f64 {
    let own = model.own_branch();
    match p {
        Param::LocD(b, i) => &mut model.adapters[b].w_loc_d.data_mut()[i],
        Param::LocU(b, i) => &mut model.adapters[b].w_loc_u.data_mut()[i],
        Param::OwnD(b, i) => &mut model.adapters[b].branches[own].down.data_mut()[i],
        Param::OwnU(b, i) => &mut model.adapters[b].branches[own].up.data_mut()[i],
        Param::Alpha(b, k) => &mut model.adapters[b].alphas[k],
        Param::Head(i) => &mut model.head.data_mut()[i],
    }
}

/// Central differences on every trainable entry of a 2-block model with
/// `m = 8`, `r = 3`, `M = 3`, relative tolerance `1e-4`.
pub fn model_gradients() -> Outcome {
    let cfg = ModelConfig {
        group_id: 1,
        depth: 2,
        width: 8,
        bottleneck: 3,
        input_dim: 5,
        num_classes: 4,
    };
    let mut rng = SeededRng::new(4, "verify:grad");
    let backbone = Arc::new(Backbone::random(&cfg, &mut rng));
    let adapters = (0..2).map(|_| random_adapter(8, 3, 3, &mut rng)).collect();
    let head = rng.normal_matrix(8, 4, 0.5);
    let model = HeteroModel::new(cfg, backbone, adapters, head).map_err(internal)?;
    let x = rng.normal_matrix(6, 5, 1.0);
    let labels = [0, 3, 1, 2, 2, 0];
    let lambda = 1e-2;
    let (_, grads) = model
        .loss_and_grads(&x, &labels, lambda)
        .map_err(internal)?;

    let mut params = Vec::new();
    for (b, g) in grads.adapters.iter().enumerate() {
        params.extend((0..g.w_loc_d.len()).map(|i| (Param::LocD(b, i), g.w_loc_d.data()[i])));
        params.extend((0..g.w_loc_u.len()).map(|i| (Param::LocU(b, i), g.w_loc_u.data()[i])));
        params.extend((0..g.own_down.len()).map(|i| (Param::OwnD(b, i), g.own_down.data()[i])));
        params.extend((0..g.own_up.len()).map(|i| (Param::OwnU(b, i), g.own_up.data()[i])));
        params.extend(
            g.alphas
                .iter()
                .enumerate()
                .map(|(k, &v)| (Param::Alpha(b, k), v)),
        );
    }
    params.extend((0..grads.head.len()).map(|i| (Param::Head(i), grads.head.data()[i])));

    let loss = |m: &HeteroModel| -> Result<f64> {
        let (logits, _) = m.forward(&x)?;
        Ok(softmax_cross_entropy(&logits, &labels)?.0 + m.regularization(lambda))
    };
    let h = 1e-6;
    let mut worst = 0.0f64;
    for &(p, analytic) in &params {
        let mut plus = model.clone();
        *param_mut(&mut plus, p) += h;
        let mut minus = model.clone();
        *param_mut(&mut minus, p) -= h;
        let fd = (loss(&plus).map_err(internal)? - loss(&minus).map_err(internal)?) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-7);
        if rel > 1e-4 {
            return Err(format!(
                "{p:?}: analytic {analytic:e}, finite difference {fd:e}"
            ));
        }
        worst = worst.max(rel);
    }
    Ok(format!(
        "{} entries, max relative error {worst:.2e}",
        params.len()
    ))
}

fn random_update(
    group: usize,
    depth: usize,
    m: usize,
    r: usize,
    branches: usize,
    rng: &mut SeededRng,
) -> AdapterUpdate {
    AdapterUpdate {
        group_id: group,
        blocks: (0..depth)
            .map(|_| BlockUpdate {
                w_loc_d: rng.normal_matrix(m, r, 1.0),
                w_loc_u: rng.normal_matrix(r, m, 1.0),
                branch: group,
                share: SharePair {
                    down: rng.normal_matrix(r, r, 1.0),
                    up: rng.normal_matrix(r, r, 1.0),
                },
                alphas: (0..branches).map(|_| rng.normal(0.0, 1.0)).collect(),
            })
            .collect(),
        head: rng.normal_matrix(m, 3, 1.0),
        sample_count: 1 + rng.below(50),
        train_loss: 0.0,
    }
}

/// `Σ w_k X_k / Σ w_k` by direct summation.
fn oracle_mean(items: &[&Matrix], weights: &[f64]) -> Matrix {
    let total: f64 = weights.iter().sum();
    let mut out = Matrix::zeros(items[0].rows(), items[0].cols());
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            let s: f64 = items
                .iter()
                .zip(weights)
                .map(|(x, w)| w * x.get(i, j))
                .sum();
            out.set(i, j, s / total);
        }
    }
    out
}

fn within(a: &Matrix, b: &Matrix, what: &str) -> std::result::Result<(), String> {
    let d = a.max_abs_diff(b).map_err(internal)?;
    if d <= 1e-12 {
        Ok(())
    } else {
        Err(format!("{what} deviates from oracle by {d:e}"))
    }
}

pub fn aggregate_local_oracle() -> Outcome {
    let mut rng = SeededRng::new(5, "verify:agg-local");
    for trial in 0..50 {
        let n = 1 + rng.below(6);
        let updates: Vec<AdapterUpdate> = (0..n)
            .map(|_| random_update(0, 3, 5, 2, 2, &mut rng))
            .collect();
        let refs: Vec<&AdapterUpdate> = updates.iter().collect();
        let uniform = trial % 2 == 1;
        let w: Vec<f64> = updates
            .iter()
            .map(|u| if uniform { 1.0 } else { u.sample_count as f64 })
            .collect();
        let state = aggregate_local(0, &refs, uniform).map_err(internal)?;
        for b in 0..3 {
            let d: Vec<&Matrix> = updates.iter().map(|u| &u.blocks[b].w_loc_d).collect();
            within(&state.blocks[b].w_loc_d, &oracle_mean(&d, &w), "w_loc_d")?;
            let u: Vec<&Matrix> = updates.iter().map(|u| &u.blocks[b].w_loc_u).collect();
            within(&state.blocks[b].w_loc_u, &oracle_mean(&u, &w), "w_loc_u")?;
            for k in 0..2 {
                let a: Vec<Matrix> = updates
                    .iter()
                    .map(|u| Matrix::from_rows(&[[u.blocks[b].alphas[k]]]))
                    .collect();
                let a: Vec<&Matrix> = a.iter().collect();
                let got = Matrix::from_rows(&[[state.blocks[b].alphas[k]]]);
                within(&got, &oracle_mean(&a, &w), "alpha")?;
            }
        }
        let heads: Vec<&Matrix> = updates.iter().map(|u| &u.head).collect();
        within(&state.head, &oracle_mean(&heads, &w), "head")?;
    }
    Ok("50 randomized instances".into())
}

/// Two groups of depth 4 and 2: group 1's blocks land on slots 0 and 3.
/// Includes rounds where one group is absent entirely.
pub fn aggregate_share_oracle() -> Outcome {
    if (share_slot(0, 2, 4), share_slot(1, 2, 4)) != (0, 3) {
        return Err("depth 2 -> 4 does not map onto slots {0, 3}".into());
    }
    let r = 2;
    let mk = |g: usize, depth: usize| ModelConfig {
        group_id: g,
        depth,
        width: 5,
        bottleneck: r,
        input_dim: 3,
        num_classes: 3,
    };
    let configs = [mk(0, 4), mk(1, 2)];
    let mut rng = SeededRng::new(6, "verify:agg-share");
    for trial in 0..40 {
        let mut prior = ShareSet::identity(4, 2, r);
        for pair in prior.slots.iter_mut().flatten() {
            pair.down = rng.normal_matrix(r, r, 1.0);
            pair.up = rng.normal_matrix(r, r, 1.0);
        }
        let n0 = if trial % 4 == 1 { 0 } else { 1 + rng.below(4) };
        let n1 = if trial % 4 == 2 { 0 } else { 1 + rng.below(4) };
        let mut updates: Vec<AdapterUpdate> = (0..n0)
            .map(|_| random_update(0, 4, 5, r, 2, &mut rng))
            .collect();
        updates.extend((0..n1).map(|_| random_update(1, 2, 5, r, 2, &mut rng)));
        if updates.is_empty() {
            continue;
        }
        let refs: Vec<&AdapterUpdate> = updates.iter().collect();
        let mode = if trial % 3 == 0 {
            ShareAggregation::Flat
        } else {
            ShareAggregation::PerBranch
        };
        let next = aggregate_share(&refs, &configs, &prior, mode, false).map_err(internal)?;

        // Explicit block lists per (slot, branch) for the two fixed depths.
        let block_of = |g: usize, s: usize| -> Option<usize> {
            match g {
                0 => Some(s),
                _ => [0usize, 3].iter().position(|&t| t == s),
            }
        };
        for s in 0..4 {
            for i in 0..2 {
                let mut downs = Vec::new();
                let mut ups = Vec::new();
                let mut ws = Vec::new();
                for u in &updates {
                    let Some(b) = block_of(u.group_id, s) else {
                        continue;
                    };
                    let pair = if u.group_id == i {
                        &u.blocks[b].share
                    } else if mode == ShareAggregation::Flat {
                        &prior.slots[s][i]
                    } else {
                        continue;
                    };
                    downs.push(&pair.down);
                    ups.push(&pair.up);
                    ws.push(u.sample_count as f64);
                }
                let got = &next.slots[s][i];
                if downs.is_empty() {
                    if got != &prior.slots[s][i] {
                        return Err(format!("slot {s} branch {i} not carried over"));
                    }
                    continue;
                }
                within(&got.down, &oracle_mean(&downs, &ws), "share down")?;
                within(&got.up, &oracle_mean(&ups, &ws), "share up")?;
            }
        }
    }
    Ok("40 randomized instances, both modes, with carry-over".into())
}

fn blob_shards(seed: u64, clients: usize, dims: usize) -> Result<(Vec<Dataset>, Dataset)> {
    let data = gen_blobs(4, dims, 30, 0.5, &mut SeededRng::new(seed, "verify:data"))?;
    let plan = dirichlet_partition(
        data.labels(),
        clients,
        1.0,
        4,
        &mut SeededRng::new(seed, "verify:part"),
    )?;
    let shards = plan
        .clients
        .iter()
        .map(|idx| data.subset(idx))
        .collect::<Result<_>>()?;
    Ok((shards, data))
}

fn small_config(group: usize, depth: usize, width: usize, dims: usize) -> ModelConfig {
    ModelConfig {
        group_id: group,
        depth,
        width,
        bottleneck: 3,
        input_dim: dims,
        num_classes: 4,
    }
}

fn settings(seed: u64) -> FederationSettings {
    FederationSettings {
        train: TrainOptions {
            epochs: 2,
            lr: 0.1,
            lambda_reg: 1e-3,
            batch_size: 8,
        },
        participation: 1.0,
        share_agg: ShareAggregation::PerBranch,
        uniform_weights: false,
        master_seed: seed,
    }
}

fn flatten(model: &HeteroModel) -> Vec<f64> {
    let own = model.own_branch();
    let mut v = Vec::new();
    for a in &model.adapters {
        v.extend_from_slice(a.w_loc_d.data());
        v.extend_from_slice(a.w_loc_u.data());
        v.extend_from_slice(a.branches[own].down.data());
        v.extend_from_slice(a.branches[own].up.data());
        v.extend_from_slice(&a.alphas);
    }
    v.extend_from_slice(model.head.data());
    v
}

fn unflatten(model: &mut HeteroModel, v: &[f64]) {
    let own = model.own_branch();
    let mut it = v.iter().copied();
    let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|d| *d = it.next().expect("length"));
    for a in &mut model.adapters {
        fill(a.w_loc_d.data_mut());
        fill(a.w_loc_u.data_mut());
        fill(a.branches[own].down.data_mut());
        fill(a.branches[own].up.data_mut());
        fill(&mut a.alphas);
    }
    fill(model.head.data_mut());
}

/// With a single model type the protocol is plain FedAvg over the
/// trainable tensors. The reference keeps one flat parameter vector, runs
/// each client's local training from it and takes the sample-weighted mean.
pub fn fedavg_reduction(clients: usize, rounds: u64) -> Outcome {
    let seed = 7;
    let (shards, validation) = blob_shards(seed, clients, 6).map_err(internal)?;
    let cfg = small_config(0, 2, 8, 6);
    let backbone = Arc::new(Backbone::random(
        &cfg,
        &mut SeededRng::new(seed, "verify:bb"),
    ));
    let initial = HeteroModel::fresh(
        cfg,
        backbone,
        1,
        &mut SeededRng::new(seed, "verify:adapter"),
    )
    .map_err(internal)?;
    let settings = settings(seed);
    let client_list: Vec<Client> = shards
        .iter()
        .enumerate()
        .map(|(id, d)| Client {
            id,
            group: 0,
            data: d.clone(),
        })
        .collect();
    let mut fed = Federation::new(
        "fedavg",
        std::slice::from_ref(&initial),
        client_list,
        settings,
    )
    .map_err(internal)?;

    let mut reference = flatten(&initial);
    for round in 1..=rounds {
        fed.run_round(&validation, None).map_err(internal)?;
        let mut vecs = Vec::with_capacity(clients);
        let mut weights = Vec::with_capacity(clients);
        for (id, data) in shards.iter().enumerate() {
            let mut model = initial.clone();
            unflatten(&mut model, &reference);
            let mut rng = SeededRng::new(seed, format!("client:{id}:round:{round}"));
            local_train(&mut model, data, &settings.train, &mut rng).map_err(internal)?;
            vecs.push(Matrix::from_vec(1, reference.len(), flatten(&model)).map_err(internal)?);
            weights.push(data.len() as f64);
        }
        let refs: Vec<&Matrix> = vecs.iter().collect();
        reference = weighted_average(&refs, &weights)
            .map_err(internal)?
            .into_vec();
        let server = flatten(&fed.materialize(0).map_err(internal)?);
        if let Some(i) = server
            .iter()
            .zip(&reference)
            .position(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(format!(
                "round {round}: entry {i} differs ({:e} vs {:e})",
                server[i], reference[i]
            ));
        }
    }
    Ok(format!("{clients} clients, {rounds} rounds, bit-identical"))
}

/// Fingerprints of every backbone after a multi-group run equal those of a
/// freshly regenerated copy.
pub fn frozen_backbone() -> Outcome {
    let seed = 8;
    let dims = 6;
    let (shards, validation) = blob_shards(seed, 10, dims).map_err(internal)?;
    let configs = [small_config(0, 1, 6, dims), small_config(1, 3, 10, dims)];
    let fresh_backbone = |c: &ModelConfig| {
        Backbone::random(
            c,
            &mut SeededRng::new(seed, format!("verify:bb{}", c.group_id)),
        )
    };
    let models = configs
        .iter()
        .map(|c| {
            HeteroModel::fresh(
                c.clone(),
                Arc::new(fresh_backbone(c)),
                2,
                &mut SeededRng::new(seed, "verify:adapter"),
            )
        })
        .collect::<Result<Vec<_>>>()
        .map_err(internal)?;
    let clients = shards
        .into_iter()
        .enumerate()
        .map(|(id, data)| Client {
            id,
            group: id % 2,
            data,
        })
        .collect();
    let mut fed = Federation::new("frozen", &models, clients, settings(seed)).map_err(internal)?;
    for _ in 0..5 {
        fed.run_round(&validation, None).map_err(internal)?;
    }
    for (g, c) in configs.iter().enumerate() {
        let expected = fresh_backbone(c).fingerprint();
        let after = fed.materialize(g).map_err(internal)?;
        if after.frozen_fingerprint() != expected
            || fed.backbone(g).frozen_bytes() != fresh_backbone(c).frozen_bytes()
        {
            return Err(format!("group {g} backbone changed"));
        }
    }
    Ok("5 rounds, 10 clients, 2 groups".into())
}

/// Mean per-client label entropy under `α = 0.1` relative to `α = 1e6`,
/// `K = 20`, `C = 10`, 200 per class, averaged over `seeds` seeds.
pub fn dirichlet_heterogeneity(seeds: u64) -> Outcome {
    let labels: Vec<usize> = (0..10).flat_map(|c| std::iter::repeat_n(c, 200)).collect();
    let mut skewed = 0.0;
    let mut flat = 0.0;
    for seed in 0..seeds {
        for (alpha, acc) in [(0.1, &mut skewed), (1e6, &mut flat)] {
            let plan = dirichlet_partition(
                &labels,
                20,
                alpha,
                1,
                &mut SeededRng::new(seed, "partition"),
            )
            .map_err(internal)?;
            *acc += mean_client_entropy(&plan, &labels, 10) / seeds as f64;
        }
    }
    let ratio = skewed / flat;
    if ratio < 0.6 {
        Ok(format!("entropy ratio {ratio:.3} (< 0.6)"))
    } else {
        Err(format!("entropy ratio {ratio:.3} not below 0.6"))
    }
}

/// Tight blobs are separable by the nearest class mean.
pub fn blobs_nearest_mean() -> Outcome {
    let data = gen_blobs(10, 32, 50, 0.1, &mut SeededRng::new(9, "data")).map_err(internal)?;
    let (c, d) = (data.num_classes(), data.dim());
    let mut means = vec![vec![0.0; d]; c];
    let hist = data.class_histogram();
    for (i, &y) in data.labels().iter().enumerate() {
        for (m, x) in means[y].iter_mut().zip(data.features().row(i)) {
            *m += x / hist[y] as f64;
        }
    }
    let correct = (0..data.len())
        .filter(|&i| {
            let row = data.features().row(i);
            let dist =
                |k: usize| -> f64 { means[k].iter().zip(row).map(|(m, x)| (m - x).powi(2)).sum() };
            let best = (0..c)
                .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                .unwrap_or(0);
            best == data.labels()[i]
        })
        .count();
    let acc = correct as f64 / data.len() as f64;
    if acc >= 0.99 {
        Ok(format!("nearest-mean accuracy {acc:.3}"))
    } else {
        Err(format!("nearest-mean accuracy {acc:.3} below 0.99"))
    }
}

pub fn reduction_ratio_monotone() -> Outcome {
    let ratios: Vec<f64> = [32, 64, 128, 256]
        .iter()
        .map(|&m| {
            let cfg = ModelConfig {
                group_id: 0,
                depth: 4,
                width: m,
                bottleneck: 8,
                input_dim: m,
                num_classes: 10,
            };
            param_count(&cfg, 1).reduction_ratio
        })
        .collect();
    if ratios.windows(2).all(|w| w[0] < w[1]) && ratios[3] > 0.85 {
        Ok(format!("{ratios:.4?}"))
    } else {
        Err(format!(
            "ratios {ratios:?} not strictly increasing past 0.85"
        ))
    }
}
