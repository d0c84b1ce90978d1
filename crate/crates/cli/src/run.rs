//! Training, prediction and their on-disk artifacts, shared by `simulate`, `coordinator`
//! and `predict`.

use std::collections::BTreeMap;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use fedlearn_core::data::{load_csv, load_labels, to_pm1, to_zero_one};
use fedlearn_core::forest::{predict_forest, ForestModel, ForestTrainer};
use fedlearn_core::kernel::{predict_kernel, KernelModel, KernelTrainer, StopReason};
use fedlearn_core::party::loopback;
use fedlearn_core::phase::{phase_name, PING, SHUTDOWN};
use fedlearn_core::transport::{broadcast, send_message};
use fedlearn_core::{
    run_pipeline, Body, EngineOptions, LoopbackTransport, Message, Party, Predictions, TcpTransport,
    TrainingReport, Transport, MASTER,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::{info, warn};

use crate::config::{Algorithm, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Manifest {
    Kernel(KernelModel),
    Forest(ForestModel),
}

impl Manifest {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Manifest::Kernel(_) => Algorithm::Kernel,
            Manifest::Forest(_) => Algorithm::Forest,
        }
    }

    pub fn parties(&self) -> &[String] {
        match self {
            Manifest::Kernel(m) => &m.parties,
            Manifest::Forest(m) => &m.parties,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = match self {
            Manifest::Kernel(m) => serde_json::to_string_pretty(m)?,
            Manifest::Forest(m) => serde_json::to_string_pretty(m)?,
        };
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let algorithm = value.get("algorithm").and_then(Value::as_str).unwrap_or_default();
        Ok(match algorithm {
            "kernel" => Manifest::Kernel(serde_json::from_value(value)?),
            "forest" => Manifest::Forest(serde_json::from_value(value)?),
            other => bail!("{}: unknown model algorithm {other:?}", path.display()),
        })
    }

    /// Refuses a manifest trained for another algorithm or another set of parties.
    pub fn check_against(&self, config: &RunConfig) -> Result<()> {
        if self.algorithm() != config.algorithm {
            bail!(
                "model is a {:?} model but the config asks for {:?}",
                self.algorithm(),
                config.algorithm
            );
        }
        if self.parties() != config.names() {
            bail!(
                "model was trained by parties {:?}, config lists {:?}",
                self.parties(),
                config.names()
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub algorithm: Algorithm,
    /// Kernel only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stop_reason: Option<String>,
    /// Forest only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nodes: Option<usize>,
    pub rounds: usize,
    pub wall_ms: BTreeMap<String, f64>,
    pub total_ms: f64,
    pub train_accuracy: f64,
    pub transcript_hash: String,
}

impl Metrics {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Every configured party, each with its own model directory, on one loopback transport.
pub fn loopback_transport(config: &RunConfig) -> Result<LoopbackTransport> {
    let parties = config
        .load_tables()?
        .into_iter()
        .map(|t| {
            let dir = config.model_dir(t.name());
            Party::new(t, Some(dir))
        })
        .collect();
    Ok(loopback(parties)?.0)
}

pub fn tcp_transport(config: &RunConfig) -> TcpTransport {
    let mut t = TcpTransport::new(Duration::from_secs(config.timeout_secs));
    for p in &config.parties {
        if let Some(e) = &p.endpoint {
            t.add_endpoint(&p.name, e);
        }
    }
    t
}

/// Pings every party until it answers or `wait` runs out. The error names the first
/// party that never answered.
pub fn wait_for_parties(transport: &dyn Transport, config: &RunConfig, wait: Duration) -> Result<()> {
    let deadline = Instant::now() + wait;
    for p in &config.parties {
        let ping = Message::request(MASTER, &p.name, PING, Body::new());
        loop {
            match send_message(transport, &ping) {
                Ok(_) => break,
                Err(e) if Instant::now() >= deadline => {
                    let at = p.endpoint.as_deref().unwrap_or("?");
                    bail!("party {:?} at {at} is unreachable: {e}", p.name);
                }
                Err(_) => thread::sleep(Duration::from_millis(100)),
            }
        }
    }
    Ok(())
}

/// Asks every party to stop serving. Failures are logged, not returned.
pub fn shutdown_parties(transport: &dyn Transport, config: &RunConfig) {
    let bye: Vec<Message> = config
        .parties
        .iter()
        .map(|p| Message::request(MASTER, &p.name, SHUTDOWN, Body::new()))
        .collect();
    if let Err(e) = broadcast(transport, &bye) {
        warn!(error = %e, "shutdown broadcast failed");
    }
}

pub fn train(config: &RunConfig, transport: &dyn Transport) -> Result<(Manifest, TrainingReport, Option<StopReason>)> {
    let options = EngineOptions::default();
    Ok(match config.algorithm {
        Algorithm::Kernel => {
            let mut trainer = KernelTrainer::new(config.names(), config.kernel.clone())?;
            let report = run_pipeline(&mut trainer, transport, &options)?;
            (Manifest::Kernel(trainer.model()), report, trainer.stop_reason())
        }
        Algorithm::Forest => {
            let mut trainer = ForestTrainer::new(config.names(), config.active_index(), config.forest.clone())?;
            let report = run_pipeline(&mut trainer, transport, &options)?;
            (Manifest::Forest(trainer.model()), report, None)
        }
    })
}

pub fn predict(transport: &dyn Transport, manifest: &Manifest, ids: &[u64]) -> Result<Predictions> {
    Ok(match manifest {
        Manifest::Kernel(m) => predict_kernel(transport, m, ids)?,
        Manifest::Forest(m) => predict_forest(transport, m, ids)?,
    })
}

/// Accuracy on the active party's label file, scored the way `predict` scores.
pub fn train_accuracy(config: &RunConfig, transport: &dyn Transport, manifest: &Manifest) -> Result<f64> {
    let entry = &config.parties[config.active_index()];
    let path = entry.label_path.as_ref().expect("validated");
    let (ids, labels): (Vec<u64>, Vec<f64>) = load_labels(path)?.into_iter().unzip();
    let truth = match manifest.algorithm() {
        Algorithm::Kernel => to_pm1(&labels)?,
        Algorithm::Forest => to_zero_one(&labels)?,
    };
    let pred = predict(transport, manifest, &ids)?;
    pred.accuracy(&truth).context("label file is empty")
}

/// Trains, writes the manifest and metrics, and returns the metrics.
pub fn run_training(config: &RunConfig, transport: &dyn Transport) -> Result<Metrics> {
    std::fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let started = Instant::now();
    let (manifest, report, stop) = train(config, transport)?;
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    manifest.write(&config.manifest_path())?;
    let train_accuracy = train_accuracy(config, transport, &manifest)?;
    let wall_ms = report
        .wall_ms_by_phase()
        .into_iter()
        .map(|(id, ms)| (phase_name(id).map_or_else(|| id.to_string(), str::to_owned), ms))
        .collect();
    let (iterations, nodes) = match &manifest {
        Manifest::Kernel(m) => (Some(m.iterations), None),
        Manifest::Forest(m) => (None, Some(m.nodes())),
    };
    let metrics = Metrics {
        algorithm: config.algorithm,
        iterations,
        stop_reason: stop.map(|s| match s {
            StopReason::Converged => "converged".to_owned(),
            StopReason::IterationCap => "iteration_cap".to_owned(),
        }),
        nodes,
        rounds: report.rounds.len(),
        wall_ms,
        total_ms,
        train_accuracy,
        transcript_hash: report.transcript_hex(),
    };
    metrics.write(&config.metrics_path())?;
    info!(
        accuracy = metrics.train_accuracy,
        hash = %metrics.transcript_hash,
        "training finished"
    );
    Ok(metrics)
}

/// Ids to score: the first column of `ids_path` (header `id`), or else every sample of the
/// active party.
pub fn prediction_ids(config: &RunConfig, ids_path: Option<&Path>) -> Result<Vec<u64>> {
    let Some(path) = ids_path else {
        let data = &config.parties[config.active_index()].data_path;
        return Ok(load_csv(data, false)?.ids().to_vec());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(|h| h.split(',').next().unwrap_or("").trim()) != Some("id") {
        bail!("{}: expected a header row starting with \"id\"", path.display());
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let field = l.split(',').next().unwrap_or("").trim();
            field
                .parse()
                .with_context(|| format!("{}: row {}: bad id {field:?}", path.display(), i + 1))
        })
        .collect()
}

/// Writes `id,score,label`. Labels are `-1/1` for kernel models and `0/1` for forests.
pub fn write_predictions(path: &Path, pred: &Predictions) -> Result<()> {
    let mut out = String::from("id,score,label\n");
    for ((id, s), l) in pred.ids.iter().zip(&pred.scores).zip(&pred.labels) {
        out.push_str(&format!("{id},{s},{l}\n"));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
