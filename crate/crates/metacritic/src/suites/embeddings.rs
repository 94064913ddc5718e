//! Task embeddings from a trained encoder, their CSV format and probes of
//! how much task identity they carry.

use std::path::Path;

use metacritic_core::metacritic::{build_rl_trace, build_sl_trace, sampled_game, LearningTrace, MetaCritic};
use metacritic_core::nets::{ActorHead, ActorNet};
use metacritic_core::rng::stream;
use metacritic_core::tasks::{bandit_pull, one_hot, sample_regression_task, sample_shots, CartpoleTask, TaskSpec, Transition, BANDIT_STATE};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ordered_map;
use crate::config::EmbeddingConfig;
use crate::error::{HarnessError, Result};
use crate::stats::{knn_loo_accuracy, projection_rank_correlation};

const EXPERIMENT: u64 = 4;
pub const EMBEDDINGS_HEADER: [&str; 5] = ["task_id", "label", "z1", "z2", "z3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub task_id: usize,
    pub label: String,
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

impl EmbeddingRow {
    pub fn z(&self) -> Vec<f64> {
        vec![self.z1, self.z2, self.z3]
    }
}

/// Task label used by the probes: the function family for regression, the
/// pole length for cartpole and the best arm for bandits.
pub fn label(task: &TaskSpec) -> String {
    match task {
        TaskSpec::Regression(r) => r.family().into(),
        TaskSpec::Cartpole(c) => format!("{:?}", c.pole_length),
        TaskSpec::Bandit(b) => {
            let best = (0..b.arms()).fold(0, |k, i| if b.probs[i] > b.probs[k] { i } else { k });
            format!("arm{best}")
        }
    }
}

/// Probe tasks for the mixture-regression and cartpole embeddings.
pub fn regression_probe_tasks(cfg: &EmbeddingConfig, seed: u64) -> Vec<TaskSpec> {
    let mut rng = stream(seed, &[EXPERIMENT, 0]);
    (0..cfg.tasks).map(|_| sample_regression_task(true, &mut rng)).collect()
}

pub fn cartpole_probe_tasks(cfg: &EmbeddingConfig, seed: u64) -> Vec<TaskSpec> {
    let mut rng = stream(seed, &[EXPERIMENT, 1]);
    (0..cfg.tasks).map(|_| TaskSpec::Cartpole(CartpoleTask::sample(&mut rng))).collect()
}

/// The trace a fresh learner would show the encoder on its first contact
/// with `task`: `shots` labelled points for regression, one game of an
/// untrained policy for cartpole, `trace_len` uniform pulls for bandits.
fn probe_trace(task: &TaskSpec, cfg: &EmbeddingConfig, trace_len: usize, rng: &mut metacritic_core::rng::Rng) -> Result<LearningTrace> {
    Ok(match task {
        TaskSpec::Regression(r) => build_sl_trace(&sample_shots(r, cfg.shots, rng))?,
        TaskSpec::Cartpole(c) => {
            let actor = ActorNet::new(4, ActorHead::Softmax(2), rng);
            build_rl_trace(&sampled_game(&actor, *c, rng)?, trace_len)?
        }
        TaskSpec::Bandit(b) => {
            let history = (0..trace_len)
                .map(|_| {
                    let arm = rng.random_range(0..b.arms());
                    Ok(Transition {
                        state: BANDIT_STATE.into(),
                        action: one_hot(arm, b.arms()),
                        reward: bandit_pull(b, arm, rng)?,
                        next_state: BANDIT_STATE.into(),
                        terminal: true,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            build_rl_trace(&history, trace_len)?
        }
    })
}

/// Embeds each task with the critic's encoder.
pub fn embed_tasks(mc: &MetaCritic, tasks: &[TaskSpec], cfg: &EmbeddingConfig, trace_len: usize, seed: u64, jobs: usize) -> Result<Vec<EmbeddingRow>> {
    for t in tasks {
        if t.state_dim() != mc.state_dim() || t.action_dim() != mc.action_dim() {
            return Err(HarnessError::Usage(format!("task {} does not match the checkpoint's dimensions", crate::taskset::format_task(t))));
        }
    }
    ordered_map(jobs, (0..tasks.len()).collect(), |i| {
        let trace = probe_trace(&tasks[i], cfg, trace_len, &mut stream(seed, &[EXPERIMENT, 2, i as u64]))?;
        let z = mc.embed(&trace)?.0;
        Ok(EmbeddingRow {
            task_id: i,
            label: label(&tasks[i]),
            z1: z[0],
            z2: z[1],
            z3: z[2],
        })
    })
}

pub fn write_embeddings(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(EMBEDDINGS_HEADER) {
        return Err(HarnessError::Usage(format!("{}: not an embeddings file", path.display())));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// How well the embeddings separate tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    /// Leave-one-out kNN accuracy on categorical labels.
    Knn { k: usize, accuracy: f64 },
    /// Rank correlation of numeric labels with their best linear projection.
    RankCorrelation(f64),
}

impl Probe {
    pub fn describe(&self) -> String {
        match self {
            Probe::Knn { k, accuracy } => format!("{k}-NN leave-one-out accuracy {accuracy:.3}"),
            Probe::RankCorrelation(r) => format!("rank correlation with label {r:.3}"),
        }
    }
}

pub fn probe(rows: &[EmbeddingRow], k: usize) -> Result<Probe> {
    if rows.len() < 20 {
        return Err(HarnessError::Usage(format!("probing needs at least 20 embeddings, got {}", rows.len())));
    }
    let points: Vec<Vec<f64>> = rows.iter().map(EmbeddingRow::z).collect();
    let numeric: Option<Vec<f64>> = rows.iter().map(|r| r.label.parse::<f64>().ok()).collect();
    Ok(match numeric {
        Some(target) => Probe::RankCorrelation(projection_rank_correlation(&points, &target)),
        None => {
            let labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
            Probe::Knn {
                k,
                accuracy: knn_loo_accuracy(&points, &labels, k),
            }
        }
    })
}
