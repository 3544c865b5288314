use std::sync::Arc;

use log::{debug, info};
use rayon::ThreadPool;
use serde::Serialize;

use crate::adapternet::{param_count, Backbone, HeteroModel, ModelConfig, ParamCount};
use crate::config::{DataSource, ExperimentConfig, Mode};
use crate::datapart::{
    dirichlet_partition, gen_blobs, load_idx, stratified_split, Dataset, PartitionPlan,
};
use crate::error::{Error, Result};
use crate::fedsim::federation::{Client, Federation, FederationSettings};
use crate::numkit::SeededRng;

/// Which model type each client holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupAssignment {
    /// `client_group[k]` is the catalog group of client `k`.
    pub client_group: Vec<usize>,
    pub counts: Vec<usize>,
}

impl GroupAssignment {
    /// Contiguous blocks of client ids, sized by the config's ratios.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let counts = config.group_sizes()?;
        let client_group = counts
            .iter()
            .enumerate()
            .flat_map(|(g, &n)| std::iter::repeat_n(g, n))
            .collect();
        Ok(Self {
            client_group,
            counts,
        })
    }
}

/// Per-group line of a [`RoundReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    /// Index into the config's `[[group]]` list.
    pub group: usize,
    pub population: usize,
    pub participants: usize,
    pub train_loss: f64,
    pub accuracy: f64,
    pub bytes_per_client: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub groups: Vec<GroupReport>,
    /// Population-weighted mean of group accuracies.
    pub avg_accuracy: f64,
}

/// Static facts about one group taking part in a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: usize,
    pub config: ModelConfig,
    pub population: usize,
    pub params: ParamCount,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub reports: Vec<RoundReport>,
    pub groups: Vec<GroupSummary>,
    pub federations: Vec<Federation>,
    /// Catalog group of each federation-local group, per federation.
    pub group_labels: Vec<Vec<usize>>,
    pub partition: PartitionPlan,
}

impl ExperimentOutcome {
    pub fn final_report(&self) -> &RoundReport {
        self.reports.last().expect("at least one round")
    }
}

/// Training and validation data for a config: source data, a stratified
/// hold-out for the server, and the train remainder.
pub fn load_data(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let full = match &config.data {
        DataSource::Blobs {
            classes,
            dims,
            per_class,
            spread,
        } => gen_blobs(
            *classes,
            *dims,
            *per_class,
            *spread,
            &mut SeededRng::new(config.seed, "data"),
        )?,
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
    };
    let (train_idx, val_idx) = stratified_split(
        full.labels(),
        full.num_classes(),
        config.validation_fraction,
        &mut SeededRng::new(config.seed, "split"),
    );
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::EmptyDataset("train/validation split"));
    }
    Ok((full.subset(&train_idx)?, full.subset(&val_idx)?))
}

/// Catalog index of the designated model in the AllSmall / AllLarge modes:
/// fewest (most) total parameters, ties to the lower index.
pub fn designated_group(
    config: &ExperimentConfig,
    largest: bool,
    input_dim: usize,
    classes: usize,
) -> usize {
    let totals: Vec<usize> = (0..config.groups.len())
        .map(|g| param_count(&config.model_config(g, input_dim, classes), 1).total)
        .collect();
    let mut best = 0;
    for (g, &t) in totals.iter().enumerate() {
        if (largest && t > totals[best]) || (!largest && t < totals[best]) {
            best = g;
        }
    }
    best
}

fn build_pool(workers: usize) -> Result<Option<ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))
}

/// Builds data, partition, groups and models, then runs every round.
/// `workers` sets client-level parallelism; results do not depend on it.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutcome> {
    config.validate()?;
    let (train, validation) = load_data(config)?;
    let (input_dim, classes) = (train.dim(), train.num_classes());

    let partition = dirichlet_partition(
        train.labels(),
        config.clients,
        config.dirichlet_alpha,
        config.min_per_client(),
        &mut SeededRng::new(config.seed, "partition"),
    )?;
    debug!(
        "partition sizes {:?} after {} draws",
        partition.sizes(),
        partition.attempts
    );
    let shards = partition
        .clients
        .iter()
        .map(|idx| train.subset(idx))
        .collect::<Result<Vec<_>>>()?;

    let assignment = GroupAssignment::from_config(config)?;
    let settings = FederationSettings {
        train: config.train_options(),
        participation: config.participation,
        share_agg: config.share_agg,
        uniform_weights: config.uniform_weights,
        master_seed: config.seed,
    };

    // Per federation: (catalog group, member client ids) in branch order.
    let mut layout: Vec<Vec<(usize, Vec<usize>)>> = Vec::new();
    match config.mode {
        Mode::HeteroTune | Mode::Homo => {
            if let Some(g) = assignment.counts.iter().position(|&n| n == 0) {
                return Err(Error::Config(format!(
                    "group {g} receives no clients out of {} with ratios {:?}",
                    config.clients,
                    config.groups.iter().map(|g| g.ratio).collect::<Vec<_>>()
                )));
            }
            let members = |g: usize| -> Vec<usize> {
                (0..config.clients)
                    .filter(|&k| assignment.client_group[k] == g)
                    .collect()
            };
            if config.mode == Mode::HeteroTune {
                layout.push((0..config.groups.len()).map(|g| (g, members(g))).collect());
            } else {
                layout.extend((0..config.groups.len()).map(|g| vec![(g, members(g))]));
            }
        }
        Mode::AllSmall | Mode::AllLarge => {
            let g = designated_group(config, config.mode == Mode::AllLarge, input_dim, classes);
            layout.push(vec![(g, (0..config.clients).collect())]);
        }
    }

    let mut federations = Vec::with_capacity(layout.len());
    let mut group_labels = Vec::with_capacity(layout.len());
    let mut summaries = Vec::new();
    for (f, groups) in layout.iter().enumerate() {
        let num_branches = groups.len();
        let mut models = Vec::with_capacity(num_branches);
        let mut clients = Vec::new();
        for (local, (catalog, members)) in groups.iter().enumerate() {
            let catalog_cfg = config.model_config(*catalog, input_dim, classes);
            let backbone = Arc::new(Backbone::random(
                &catalog_cfg,
                &mut SeededRng::new(config.seed, format!("backbone:{catalog}")),
            ));
            let local_cfg = ModelConfig {
                group_id: local,
                ..catalog_cfg.clone()
            };
            models.push(HeteroModel::fresh(
                local_cfg,
                backbone,
                num_branches,
                &mut SeededRng::new(config.seed, format!("adapter:{catalog}")),
            )?);
            summaries.push(GroupSummary {
                group: *catalog,
                config: catalog_cfg.clone(),
                population: members.len(),
                params: param_count(&catalog_cfg, num_branches),
            });
            let mut hist = vec![0usize; classes];
            for &k in members {
                for (h, n) in hist.iter_mut().zip(shards[k].class_histogram()) {
                    *h += n;
                }
            }
            debug!(
                "group {catalog}: {} clients, class histogram {hist:?}",
                members.len()
            );
            clients.extend(members.iter().map(|&k| Client {
                id: k,
                group: local,
                data: shards[k].clone(),
            }));
        }
        federations.push(Federation::new(
            format!("fed{f}"),
            &models,
            clients,
            settings,
        )?);
        group_labels.push(groups.iter().map(|(c, _)| *c).collect::<Vec<_>>());
    }
    summaries.sort_by_key(|s| s.group);

    let pool = build_pool(workers)?;
    let mut reports = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        let mut groups = Vec::new();
        for (fed, labels) in federations.iter_mut().zip(&group_labels) {
            for gr in fed.run_round(&validation, pool.as_ref())? {
                groups.push(GroupReport {
                    group: labels[gr.group],
                    population: gr.population,
                    participants: gr.participants,
                    train_loss: gr.train_loss,
                    accuracy: gr.accuracy,
                    bytes_per_client: gr.bytes_per_client,
                });
            }
        }
        groups.sort_by_key(|g| g.group);
        let population: usize = groups.iter().map(|g| g.population).sum();
        debug_assert_eq!(population, config.clients);
        let avg_accuracy = groups
            .iter()
            .map(|g| g.accuracy * g.population as f64)
            .sum::<f64>()
            / population as f64;
        info!(
            "round {round}: avg acc {avg_accuracy:.4} {:?}",
            groups.iter().map(|g| g.accuracy).collect::<Vec<_>>()
        );
        reports.push(RoundReport {
            round,
            groups,
            avg_accuracy,
        });
    }

    Ok(ExperimentOutcome {
        reports,
        groups: summaries,
        federations,
        group_labels,
        partition,
    })
}
