use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::adapternet::{
    local_train, share_slot, AdapterUpdate, Backbone, FedAdapter, HeteroModel, ModelConfig,
    TrainOptions,
};
use crate::datapart::Dataset;
use crate::error::{Error, Result};
use crate::fedsim::aggregate::{
    aggregate_local, aggregate_share, GroupState, LocalBlockState, ShareAggregation, ShareSet,
};
use crate::numkit::SeededRng;

/// Everything the server holds between rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub configs: Vec<ModelConfig>,
    pub groups: Vec<GroupState>,
    pub share: ShareSet,
    pub round: u64,
}

impl ServerState {
    /// Server state matching freshly initialized models, one per group.
    pub fn from_models(models: &[HeteroModel]) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidArgument("server needs at least one group".into()))?;
        let num_branches = first
            .adapters
            .first()
            .map_or(models.len(), FedAdapter::num_branches);
        let r = first.config().bottleneck;
        let max_depth = models.iter().map(|m| m.config().depth).max().unwrap_or(0);
        let mut share = ShareSet::identity(max_depth, num_branches, r);
        for (g, model) in models.iter().enumerate() {
            if model.config().group_id != g || model.config().bottleneck != r {
                return Err(Error::InvalidArgument(format!(
                    "model {g} has group {} and bottleneck {} (expected {g}, {r})",
                    model.config().group_id,
                    model.config().bottleneck
                )));
            }
            for (j, a) in model.adapters.iter().enumerate() {
                let s = share_slot(j, model.config().depth, max_depth);
                share.slots[s][g] = a.branches[g].clone();
            }
        }
        let groups = models
            .iter()
            .map(|m| GroupState {
                blocks: m
                    .adapters
                    .iter()
                    .map(|a| LocalBlockState {
                        w_loc_d: a.w_loc_d.clone(),
                        w_loc_u: a.w_loc_u.clone(),
                        alphas: a.alphas.clone(),
                    })
                    .collect(),
                head: m.head.clone(),
            })
            .collect();
        Ok(Self {
            configs: models.iter().map(|m| m.config().clone()).collect(),
            groups,
            share,
            round: 0,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Adapters a group-`g` client installs: its group's local pairs and
    /// scalars plus every branch of the mapped share slot. Foreign branches
    /// arrive frozen by virtue of the model's trainable mask.
    pub fn group_adapters(&self, g: usize) -> Vec<FedAdapter> {
        let depth = self.configs[g].depth;
        self.groups[g]
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| FedAdapter {
                w_loc_d: b.w_loc_d.clone(),
                w_loc_u: b.w_loc_u.clone(),
                branches: self.share.slots[share_slot(j, depth, self.share.num_slots())].clone(),
                alphas: b.alphas.clone(),
            })
            .collect()
    }

    /// One server aggregation step. Updates are put in ascending client-id
    /// order first, so arrival order never affects the result.
    pub fn apply_updates(
        &mut self,
        mut updates: Vec<(usize, AdapterUpdate)>,
        share_agg: Option<ShareAggregation>,
        uniform: bool,
    ) -> Result<()> {
        if updates.is_empty() {
            return Err(Error::InvalidArgument("round has no participants".into()));
        }
        updates.sort_by_key(|(id, _)| *id);
        for (id, u) in &updates {
            u.check_purity().map_err(|e| Error::Client {
                client: *id,
                source: Box::new(e),
            })?;
        }
        let mut groups = self.groups.clone();
        for (g, state) in groups.iter_mut().enumerate() {
            let members: Vec<&AdapterUpdate> = updates
                .iter()
                .map(|(_, u)| u)
                .filter(|u| u.group_id == g)
                .collect();
            if !members.is_empty() {
                *state = aggregate_local(g, &members, uniform)?;
            }
        }
        let share = match share_agg {
            Some(mode) => {
                let all: Vec<&AdapterUpdate> = updates.iter().map(|(_, u)| u).collect();
                aggregate_share(&all, &self.configs, &self.share, mode, uniform)?
            }
            None => self.share.clone(),
        };
        self.groups = groups;
        self.share = share;
        self.round += 1;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Client {
    pub id: usize,
    /// Index of the client's group within its federation.
    pub group: usize,
    pub data: Dataset,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FederationSettings {
    pub train: TrainOptions,
    pub participation: f64,
    pub share_agg: ShareAggregation,
    pub uniform_weights: bool,
    pub master_seed: u64,
}

/// Per-group result of one round inside one federation.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupRound {
    /// Federation-local group index.
    pub group: usize,
    pub population: usize,
    pub participants: usize,
    /// Sample-weighted mean final-epoch loss of the participants (NaN if none).
    pub train_loss: f64,
    pub accuracy: f64,
    /// Upload size of one participant (0 if none took part).
    pub bytes_per_client: usize,
}

/// A server plus the clients it coordinates. Group `g` trains branch `g`.
#[derive(Clone, Debug)]
pub struct Federation {
    pub label: String,
    pub server: ServerState,
    backbones: Vec<Arc<Backbone>>,
    clients: Vec<Client>,
    settings: FederationSettings,
}

impl Federation {
    pub fn new(
        label: impl Into<String>,
        initial: &[HeteroModel],
        clients: Vec<Client>,
        settings: FederationSettings,
    ) -> Result<Self> {
        let server = ServerState::from_models(initial)?;
        let backbones = initial
            .iter()
            .map(|m| Arc::new(m.backbone().clone()))
            .collect();
        if let Some(c) = clients.iter().find(|c| c.group >= initial.len()) {
            return Err(Error::InvalidArgument(format!(
                "client {} assigned to missing group {}",
                c.id, c.group
            )));
        }
        Ok(Self {
            label: label.into(),
            server,
            backbones,
            clients,
            settings,
        })
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    pub fn settings(&self) -> &FederationSettings {
        &self.settings
    }

    pub fn backbone(&self, g: usize) -> &Backbone {
        &self.backbones[g]
    }

    pub fn populations(&self) -> Vec<usize> {
        let mut p = vec![0; self.server.num_groups()];
        for c in &self.clients {
            p[c.group] += 1;
        }
        p
    }

    /// The group's current global model as a client would receive it.
    pub fn materialize(&self, g: usize) -> Result<HeteroModel> {
        HeteroModel::new(
            self.server.configs[g].clone(),
            Arc::clone(&self.backbones[g]),
            self.server.group_adapters(g),
            self.server.groups[g].head.clone(),
        )
    }

    /// Indices into `clients()` that train in round `round`, ascending.
    pub fn select_participants(&self, round: u64) -> Result<Vec<usize>> {
        let k = self.clients.len();
        let frac = self.settings.participation;
        if frac.is_nan() || frac <= 0.0 || frac > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "participation {frac} outside (0, 1]"
            )));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("federation has no clients".into()));
        }
        if frac == 1.0 {
            return Ok((0..k).collect());
        }
        let n = ((frac * k as f64).round() as usize).clamp(1, k);
        let mut rng = SeededRng::new(
            self.settings.master_seed,
            format!("participation:{}:round:{round}", self.label),
        );
        let mut idx: Vec<usize> = (0..k).collect();
        rng.shuffle(&mut idx);
        idx.truncate(n);
        idx.sort_unstable();
        Ok(idx)
    }

    /// Local training for one client against the current server state. The
    /// client's RNG stream is keyed by its id and the round only.
    pub fn client_update(&self, client: usize, round: u64) -> Result<AdapterUpdate> {
        let c = &self.clients[client];
        let wrap = |e: Error| Error::Client {
            client: c.id,
            source: Box::new(e),
        };
        let mut model = self.materialize(c.group).map_err(wrap)?;
        let mut rng = SeededRng::new(
            self.settings.master_seed,
            format!("client:{}:round:{round}", c.id),
        );
        let update =
            local_train(&mut model, &c.data, &self.settings.train, &mut rng).map_err(wrap)?;
        if model.frozen_fingerprint() != model.recorded_fingerprint() {
            return Err(wrap(Error::Protocol(
                "backbone changed during local training".into(),
            )));
        }
        Ok(update)
    }

    /// Runs the given clients, in parallel when a pool is supplied. The
    /// result is tagged with client ids.
    pub fn collect_updates(
        &self,
        participants: &[usize],
        round: u64,
        pool: Option<&ThreadPool>,
    ) -> Result<Vec<(usize, AdapterUpdate)>> {
        let run = |&i: &usize| {
            self.client_update(i, round)
                .map(|u| (self.clients[i].id, u))
        };
        match pool {
            Some(pool) => pool.install(|| participants.par_iter().map(run).collect()),
            None => participants.iter().map(run).collect(),
        }
    }

    /// One full round: sample, train, aggregate, evaluate on `validation`.
    pub fn run_round(
        &mut self,
        validation: &Dataset,
        pool: Option<&ThreadPool>,
    ) -> Result<Vec<GroupRound>> {
        let round = self.server.round + 1;
        let participants = self.select_participants(round)?;
        let updates = self.collect_updates(&participants, round, pool)?;

        let num_groups = self.server.num_groups();
        let mut loss_sum = vec![0.0; num_groups];
        let mut samples = vec![0usize; num_groups];
        let mut count = vec![0usize; num_groups];
        let mut bytes = vec![0usize; num_groups];
        for (_, u) in &updates {
            let g = u.group_id;
            loss_sum[g] += u.train_loss * u.sample_count as f64;
            samples[g] += u.sample_count;
            count[g] += 1;
            bytes[g] = u.payload_bytes();
        }

        self.server.apply_updates(
            updates,
            Some(self.settings.share_agg),
            self.settings.uniform_weights,
        )?;

        let populations = self.populations();
        (0..num_groups)
            .map(|g| {
                Ok(GroupRound {
                    group: g,
                    population: populations[g],
                    participants: count[g],
                    train_loss: if samples[g] > 0 {
                        loss_sum[g] / samples[g] as f64
                    } else {
                        f64::NAN
                    },
                    accuracy: evaluate(&self.materialize(g)?, validation)?,
                    bytes_per_client: bytes[g],
                })
            })
            .collect()
    }
}

/// Fraction of rows whose fused-inference argmax equals the label.
pub fn evaluate(model: &HeteroModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("evaluation set"));
    }
    let predictions = model.predict(data.features())?;
    let correct = predictions
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}
