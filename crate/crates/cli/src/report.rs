use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use heterotune::adapternet::checkpoint::backbone_checkpoint;
use heterotune::adapternet::ParamCount;
use heterotune::config::ExperimentConfig;
use heterotune::fedsim::snapshot::{group_checkpoint, share_checkpoint};
use heterotune::fedsim::{ExperimentOutcome, RoundReport};
use heterotune::{Error, Result};
use serde::Serialize;

/// 17 significant digits, so every value round-trips exactly.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per round: `round`, `loss_g*`, `acc_g*`, `avg_acc`, `bytes_g*`,
/// where `*` is the index of the group in the config.
pub fn metrics_csv(reports: &[RoundReport]) -> String {
    let groups: Vec<usize> = reports
        .first()
        .map(|r| r.groups.iter().map(|g| g.group).collect())
        .unwrap_or_default();
    let mut out = String::from("round");
    for prefix in ["loss", "acc"] {
        for g in &groups {
            write!(out, ",{prefix}_g{g}").unwrap();
        }
    }
    out.push_str(",avg_acc");
    for g in &groups {
        write!(out, ",bytes_g{g}").unwrap();
    }
    out.push('\n');
    for r in reports {
        write!(out, "{}", r.round).unwrap();
        for g in &r.groups {
            write!(out, ",{}", num(g.train_loss)).unwrap();
        }
        for g in &r.groups {
            write!(out, ",{}", num(g.accuracy)).unwrap();
        }
        write!(out, ",{}", num(r.avg_accuracy)).unwrap();
        for g in &r.groups {
            write!(out, ",{}", g.bytes_per_client).unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct GroupEntry {
    pub group: usize,
    pub width: usize,
    pub depth: usize,
    pub bottleneck: usize,
    pub population: usize,
    pub accuracy: f64,
    pub bytes_per_client: usize,
    pub params: ParamCount,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub mode: &'static str,
    pub seed: u64,
    pub rounds: usize,
    /// Final accuracy of the group with the fewest total parameters.
    pub small: f64,
    /// Final accuracy of the group with the most total parameters.
    pub large: f64,
    pub avg: f64,
    pub groups: Vec<GroupEntry>,
}

pub fn summary(config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Summary {
    let last = outcome.final_report();
    let groups: Vec<GroupEntry> = outcome
        .groups
        .iter()
        .zip(&last.groups)
        .map(|(s, g)| GroupEntry {
            group: s.group,
            width: s.config.width,
            depth: s.config.depth,
            bottleneck: s.config.bottleneck,
            population: s.population,
            accuracy: g.accuracy,
            bytes_per_client: g.bytes_per_client,
            params: s.params,
        })
        .collect();
    // Ties go to the lower config index in both directions.
    let small = groups
        .iter()
        .min_by_key(|g| g.params.total)
        .map_or(f64::NAN, |g| g.accuracy);
    let large = groups
        .iter()
        .rev()
        .max_by_key(|g| g.params.total)
        .map_or(f64::NAN, |g| g.accuracy);
    Summary {
        mode: config.mode.as_str(),
        seed: config.seed,
        rounds: config.rounds,
        small,
        large,
        avg: last.avg_accuracy,
        groups,
    }
}

/// Writes `metrics.csv`, `summary.json` and `checkpoints/` under `dir`.
pub fn write_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    outcome: &ExperimentOutcome,
) -> Result<()> {
    let ck_dir = dir.join("checkpoints");
    fs::create_dir_all(&ck_dir).map_err(|e| io(&ck_dir, e))?;
    write(
        &dir.join("metrics.csv"),
        metrics_csv(&outcome.reports).as_bytes(),
    )?;
    let json = serde_json::to_string_pretty(&summary(config, outcome))
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    write(&dir.join("summary.json"), format!("{json}\n").as_bytes())?;

    let single = outcome.federations.len() == 1;
    for (fed, labels) in outcome.federations.iter().zip(&outcome.group_labels) {
        let round = fed.server.round;
        for (local, &catalog) in labels.iter().enumerate() {
            group_checkpoint(&fed.server.groups[local], round)?
                .save(&ck_dir.join(format!("group_{catalog}.htad")))?;
            backbone_checkpoint(fed.backbone(local))
                .save(&ck_dir.join(format!("backbone_{catalog}.htad")))?;
        }
        let name = if single {
            "share.htad".to_string()
        } else {
            format!("share_{}.htad", labels[0])
        };
        share_checkpoint(&fed.server.share, round).save(&ck_dir.join(name))?;
    }
    Ok(())
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io(path, e))
}
