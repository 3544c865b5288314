//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use heterotune::adapternet::checkpoint::{words_u64, Checkpoint};
use heterotune::adapternet::{adapter_fuse, Backbone, ModelConfig};
use heterotune::numkit::{fnv1a64, SeededRng};
use heterotune::verify;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_heterotune");

type Verdict = Result<String, String>;

fn run_cli(config: &Path, out: &Path, seed: u64, workers: usize) -> Result<(), String> {
    let status = Command::new(BIN)
        .arg("run")
        .arg(config)
        .args([
            "--seed",
            &seed.to_string(),
            "--workers",
            &workers.to_string(),
            "--out",
        ])
        .arg(out)
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "heterotune run exited with {:?}: {}",
            status.status.code(),
            String::from_utf8_lossy(&status.stderr)
        ))
    }
}

fn summary(out: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(out.join("summary.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn within(limit: Duration, start: Instant, verdict: Verdict) -> Verdict {
    let took = start.elapsed();
    let detail = verdict?;
    if took <= limit {
        Ok(format!("{detail}; {:.1}s", took.as_secs_f64()))
    } else {
        Err(format!(
            "{detail}; took {:.1}s, limit {}s",
            took.as_secs_f64(),
            limit.as_secs()
        ))
    }
}

/// Criterion 7's setting: blobs C=10, d=32, 200/class, spread 0.25, K=20,
/// m ∈ {16, 64}, L=2, r=4, ratio 1:1, α=0.1, R=30, E=2, lr=0.05.
fn table1_config(mode: &str) -> String {
    format!(
        r#"mode = "{mode}"
rounds = 30
clients = 20
epochs = 2
lr = 0.05
dirichlet_alpha = 0.1

[[group]]
width = 16
depth = 2
bottleneck = 4
ratio = 1

[[group]]
width = 64
depth = 2
bottleneck = 4
ratio = 1

[data]
source = "blobs"
classes = 10
dims = 32
per_class = 200
spread = 0.25
"#
    )
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(format!("{name}.toml"));
        fs::write(&p, text).expect("write config");
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn criterion_3(ws: &Workspace) -> Verdict {
    let text = table1_config("heterotune")
        .replace("rounds = 30", "rounds = 5")
        .replace("clients = 20", "clients = 10");
    let cfg = ws.config("frozen", &text);
    let out = ws.out("frozen");
    run_cli(&cfg, &out, 4, 1)?;
    for (g, width) in [(0usize, 16usize), (1, 64)] {
        let model = ModelConfig {
            group_id: g,
            depth: 2,
            width,
            bottleneck: 4,
            input_dim: 32,
            num_classes: 10,
        };
        let fresh = Backbone::random(&model, &mut SeededRng::new(4, format!("backbone:{g}")));
        let path = out.join("checkpoints").join(format!("backbone_{g}.htad"));
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        let ck = Checkpoint::decode(&bytes).map_err(|e| e.to_string())?;
        let frozen = fresh.frozen_bytes();
        if bytes[bytes.len() - frozen.len()..] != frozen[..] {
            return Err(format!("group {g}: frozen weights differ after training"));
        }
        if words_u64(ck.header[1], ck.header[2]) != fnv1a64(&frozen) {
            return Err(format!("group {g}: recorded fingerprint differs"));
        }
    }
    Ok("both backbones byte-identical after 5 rounds, 10 clients".into())
}

/// Trainable float count recomputed from the layer shapes.
fn trainable_floats(m: usize, r: usize, depth: usize, classes: usize, branches: usize) -> usize {
    let per_block = m * r + r * m + r * r + r * r + branches;
    depth * per_block + m * classes
}

fn criterion_6(ws: &Workspace) -> Verdict {
    let ratios = verify::reduction_ratio_monotone()?;
    let text = table1_config("heterotune").replace("rounds = 30", "rounds = 2");
    let out = ws.out("bytes");
    run_cli(&ws.config("bytes", &text), &out, 0, 1)?;
    let csv = fs::read_to_string(out.join("metrics.csv")).map_err(|e| e.to_string())?;
    let header: Vec<&str> = csv.lines().next().unwrap_or("").split(',').collect();
    let expected = [
        (0, 8 * trainable_floats(16, 4, 2, 10, 2)),
        (1, 8 * trainable_floats(64, 4, 2, 10, 2)),
    ];
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        for (g, bytes) in expected {
            let col = header
                .iter()
                .position(|h| *h == format!("bytes_g{g}"))
                .ok_or(format!("no bytes_g{g} column"))?;
            if cells[col] != bytes.to_string() {
                return Err(format!("bytes_g{g} = {}, expected {bytes}", cells[col]));
            }
        }
    }
    let s = summary(&out)?;
    for (g, bytes) in expected {
        if s["groups"][g]["params"]["trainable"].as_u64() != Some(bytes as u64 / 8) {
            return Err(format!("summary trainable count for group {g} disagrees"));
        }
    }
    Ok(format!(
        "ratios {ratios}; bytes/client {} and {}",
        expected[0].1, expected[1].1
    ))
}

struct Table1 {
    /// avg accuracy per mode (heterotune, homo, allsmall, alllarge) per seed.
    avg: Vec<[f64; 4]>,
}

const MODES: [&str; 4] = ["heterotune", "homo", "allsmall", "alllarge"];

fn run_table1(ws: &Workspace) -> Result<Table1, String> {
    let configs: Vec<PathBuf> = MODES
        .iter()
        .map(|m| ws.config(m, &table1_config(m)))
        .collect();
    let mut avg = Vec::new();
    for seed in 0..3 {
        let mut row = [0.0; 4];
        for (i, cfg) in configs.iter().enumerate() {
            let out = ws.out(&format!("{}_{seed}", MODES[i]));
            run_cli(cfg, &out, seed, 4)?;
            row[i] = summary(&out)?["avg"]
                .as_f64()
                .ok_or("summary avg missing")?;
        }
        avg.push(row);
    }
    Ok(Table1 { avg })
}

fn criterion_7(t: &Table1) -> Verdict {
    let mean = |i: usize| t.avg.iter().map(|r| r[i]).sum::<f64>() / t.avg.len() as f64;
    let (hetero, homo, small, large) = (mean(0), mean(1), mean(2), mean(3));
    let wins = t.avg.iter().filter(|r| r[0] > r[1]).count();
    let detail = format!(
        "means: allsmall {small:.4}, heterotune {hetero:.4}, alllarge {large:.4}, homo {homo:.4}; \
         heterotune > homo on {wins}/3 seeds"
    );
    let mut failed = Vec::new();
    if small > hetero {
        failed.push("allsmall > heterotune");
    }
    if hetero > large {
        failed.push("heterotune > alllarge");
    }
    if hetero < homo - 0.02 {
        failed.push("heterotune < homo - 0.02");
    }
    if wins < 2 {
        failed.push("fewer than 2 strict wins over homo");
    }
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail} [{}]", failed.join("; ")))
    }
}

fn criterion_8(ws: &Workspace) -> Verdict {
    let cfg = ws.out("heterotune.toml");
    let reference =
        fs::read(ws.out("heterotune_0").join("metrics.csv")).map_err(|e| e.to_string())?;
    for workers in [1, 3] {
        let out = ws.out(&format!("det_w{workers}"));
        run_cli(&cfg, &out, 0, workers)?;
        let again = fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())?;
        if again != reference {
            return Err(format!(
                "metrics.csv differs between --workers 4 and --workers {workers}"
            ));
        }
    }
    Ok(format!(
        "metrics.csv byte-identical across 3 runs ({} bytes), workers 4/1/3",
        reference.len()
    ))
}

fn main() {
    let ws = Workspace {
        dir: tempfile::tempdir().expect("tempdir"),
    };
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();

    let t = Instant::now();
    results.push((
        1,
        "fusion equivalence",
        within(
            Duration::from_secs(10),
            t,
            verify::fusion_equivalence(1000, adapter_fuse),
        ),
    ));
    let t = Instant::now();
    results.push((
        2,
        "gradient correctness",
        within(Duration::from_secs(30), t, verify::model_gradients()),
    ));
    results.push((3, "frozen backbone invariance", criterion_3(&ws)));
    results.push((4, "FedAvg reduction", verify::fedavg_reduction(8, 3)));
    results.push((
        5,
        "aggregation oracles",
        verify::aggregate_local_oracle()
            .and_then(|a| verify::aggregate_share_oracle().map(|b| format!("{a}; {b}"))),
    ));
    results.push((6, "communication accounting", criterion_6(&ws)));
    let t = Instant::now();
    let table1 = run_table1(&ws);
    let c7 = table1.as_ref().map_err(Clone::clone).and_then(criterion_7);
    results.push((
        7,
        "directional Table 1 ordering",
        within(Duration::from_secs(600), t, c7),
    ));
    results.push((
        8,
        "determinism across --workers",
        table1
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|_| criterion_8(&ws)),
    ));
    results.push((
        9,
        "Dirichlet heterogeneity",
        verify::dirichlet_heterogeneity(10),
    ));

    if let Ok(t) = &table1 {
        println!("per-seed avg accuracy (heterotune, homo, allsmall, alllarge):");
        for (seed, row) in t.avg.iter().enumerate() {
            println!(
                "  seed {seed}: {:.4} {:.4} {:.4} {:.4}",
                row[0], row[1], row[2], row[3]
            );
        }
    }
    let mut failures = 0;
    for (n, name, verdict) in &results {
        match verdict {
            Ok(d) => println!("criterion {n} PASS  {name}: {d}"),
            Err(d) => {
                failures += 1;
                println!("criterion {n} FAIL  {name}: {d}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failures,
        results.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
