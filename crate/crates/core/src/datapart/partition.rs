use crate::error::{Error, Result};
use crate::numkit::{apportion, SeededRng};

/// Whole-partition redraws allowed before giving up on `min_per_client`.
pub const MAX_PARTITION_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPlan {
    /// Indices into the partitioned label slice, ascending per client.
    pub clients: Vec<Vec<usize>>,
    pub alpha: f64,
    pub seed: u64,
    /// Accepted per-class client proportions, `proportions[c][k]`.
    pub proportions: Vec<Vec<f64>>,
    pub attempts: usize,
}

impl PartitionPlan {
    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }
}

/// Per-class Dirichlet split over `num_clients`: each class draws
/// `p_c ~ Dir(alpha·1_K)` and its (shuffled) indices are cut into
/// contiguous runs sized by largest-remainder apportionment of `p_c`.
/// The whole draw repeats until every client holds `min_per_client` samples.
pub fn dirichlet_partition(
    labels: &[usize],
    num_clients: usize,
    alpha: f64,
    min_per_client: usize,
    rng: &mut SeededRng,
) -> Result<PartitionPlan> {
    if num_clients == 0 {
        return Err(Error::InvalidArgument(
            "dirichlet_partition needs K >= 1".into(),
        ));
    }
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("dirichlet alpha {alpha}")));
    }
    if min_per_client.saturating_mul(num_clients) > labels.len() {
        return Err(Error::Partition(format!(
            "{} samples cannot give {num_clients} clients {min_per_client} each",
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let by_class: Vec<Vec<usize>> = (0..num_classes)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();

    for attempt in 1..=MAX_PARTITION_ATTEMPTS {
        let mut clients = vec![Vec::new(); num_clients];
        let mut proportions = Vec::with_capacity(num_classes);
        for class_idx in &by_class {
            let mut idx = class_idx.clone();
            rng.shuffle(&mut idx);
            let p = match rng.dirichlet_symmetric(alpha, num_clients) {
                Some(p) => p,
                None => {
                    // every Gamma draw underflowed; give the class to one client
                    let mut p = vec![0.0; num_clients];
                    p[rng.below(num_clients)] = 1.0;
                    p
                }
            };
            let counts = apportion(idx.len(), &p)?;
            let mut start = 0;
            for (k, &n) in counts.iter().enumerate() {
                clients[k].extend_from_slice(&idx[start..start + n]);
                start += n;
            }
            proportions.push(p);
        }
        if clients.iter().all(|c| c.len() >= min_per_client.max(1)) {
            for c in &mut clients {
                c.sort_unstable();
            }
            return Ok(PartitionPlan {
                clients,
                alpha,
                seed: rng.master_seed(),
                proportions,
                attempts: attempt,
            });
        }
    }
    Err(Error::Partition(format!(
        "no draw gave every client >= {min_per_client} samples after {MAX_PARTITION_ATTEMPTS} attempts"
    )))
}

/// Shannon entropy (nats) of a label histogram.
pub fn label_entropy(hist: &[usize]) -> f64 {
    let total: usize = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    hist.iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let p = n as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// Mean per-client label entropy of a plan.
pub fn mean_client_entropy(plan: &PartitionPlan, labels: &[usize], num_classes: usize) -> f64 {
    let total: f64 = plan
        .clients
        .iter()
        .map(|idx| {
            let mut h = vec![0; num_classes];
            for &i in idx {
                h[labels[i]] += 1;
            }
            label_entropy(&h)
        })
        .sum();
    total / plan.clients.len() as f64
}
