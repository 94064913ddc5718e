//! Cartpole with varying pole length.

use log::info;
use metacritic_core::baselines::train_standard_cartpole;
use metacritic_core::metacritic::{cartpole_offline, meta_test_cartpole, meta_train, MetaCritic, TaskPool};
use metacritic_core::nets::ActorNet;
use metacritic_core::rng::stream;
use metacritic_core::tasks::{CartpoleTask, TaskSpec};

use super::{ordered_map, Cell, Method, RunContext, Rows, SuiteOutput};
use crate::config::CartpoleConfig;
use crate::error::Result;
use crate::records::ResultRecord;
use crate::stats::{mean, sign_test};

const EXPERIMENT: u64 = 3;
const CONDITION: &str = "pole_length";
pub const SUPPORTED: [Method; 2] = [Method::Standard, Method::MetaCritic];

fn cartpole(t: &TaskSpec) -> CartpoleTask {
    match t {
        TaskSpec::Cartpole(c) => *c,
        _ => unreachable!("cartpole sampler"),
    }
}

fn sample_tasks(count: usize, tag: u64, seed: u64) -> Vec<TaskSpec> {
    let mut rng = stream(seed, &[EXPERIMENT, tag]);
    (0..count).map(|_| TaskSpec::Cartpole(CartpoleTask::sample(&mut rng))).collect()
}

pub fn train_tasks(cfg: &CartpoleConfig, seed: u64) -> Vec<TaskSpec> {
    sample_tasks(cfg.train_tasks, 0, seed)
}

pub fn test_tasks(cfg: &CartpoleConfig, seed: u64) -> Vec<TaskSpec> {
    sample_tasks(cfg.test_tasks, 4, seed)
}

pub fn train_critic(cfg: &CartpoleConfig, seed: u64) -> Result<MetaCritic> {
    let mut pool = TaskPool {
        tasks: train_tasks(cfg, seed),
    };
    Ok(meta_train(&mut pool, &cfg.train, &mut stream(seed, &[EXPERIMENT, 1]))?)
}

/// Per-task mean, over repeats, of `metric` for `method` at `budget`.
pub fn per_task_means(records: &[ResultRecord], method: Method, metric: &str, budget: usize) -> Vec<f64> {
    let mut by_task: Vec<Vec<f64>> = Vec::new();
    for r in records.iter().filter(|r| r.experiment == "cartpole" && r.method == method.label() && r.metric == metric && r.budget == budget) {
        if by_task.len() <= r.task_id {
            by_task.resize(r.task_id + 1, Vec::new());
        }
        by_task[r.task_id].push(r.value);
    }
    by_task.iter().map(|v| mean(v)).collect()
}

/// Greedy offline reward after every meta-test game, and whether the final
/// policy balances the pole in every offline game.
pub fn run(cfg: &CartpoleConfig, ctx: &RunContext) -> Result<SuiteOutput> {
    let methods = ctx.select("cartpole", &SUPPORTED)?;
    let mut out = SuiteOutput::default();
    let rows = Rows::new("cartpole");
    let critic = if methods.contains(&Method::MetaCritic) {
        info!("cartpole: meta-training for {} episodes", cfg.train.meta_episodes);
        Some(train_critic(cfg, ctx.seed)?)
    } else {
        None
    };
    let tests = test_tasks(cfg, ctx.seed);
    let units: Vec<(usize, usize)> = (0..tests.len()).flat_map(|i| (0..cfg.repeats).map(move |r| (i, r))).collect();
    info!("cartpole: meta-testing {} task repeats", units.len());
    let per_unit = ordered_map(ctx.jobs, units, |(i, r)| {
        let task = cartpole(&tests[i]);
        let init = stream(ctx.seed, &[EXPERIMENT, 8, i as u64, r as u64]);
        let mut recs: Vec<ResultRecord> = Vec::new();
        for &m in &methods {
            let mut on_episode = |episode: usize, actor: &ActorNet| {
                let played = episode + 1;
                let cell = Cell {
                    method: m,
                    condition: CONDITION,
                    arms_or_k: 0,
                    budget: played,
                    task_id: i,
                    repeat: r,
                };
                let mut offline = stream(ctx.seed, &[EXPERIMENT, 9, i as u64, r as u64, played as u64]);
                let lengths = cartpole_offline(actor, task, cfg.offline_games, &mut offline)?;
                let rewards: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
                recs.push(rows.record(&cell, "offline_reward", mean(&rewards)));
                if played == cfg.episodes {
                    let solved = lengths.iter().all(|&l| l > cfg.success_steps);
                    recs.push(rows.record(&cell, "success", if solved { 1.0 } else { 0.0 }));
                }
                Ok(())
            };
            match m {
                Method::MetaCritic => {
                    let mc = critic.as_ref().expect("critic trained");
                    meta_test_cartpole(mc, task, cfg.episodes, &cfg.train, &mut init.clone(), &mut on_episode)?;
                }
                _ => {
                    train_standard_cartpole(task, cfg.episodes, &cfg.baseline, &mut init.clone(), &mut on_episode)?;
                }
            }
        }
        Ok(recs)
    })?;
    let records: Vec<ResultRecord> = per_unit.into_iter().flatten().collect();
    for &m in &methods {
        let reward = mean(&per_task_means(&records, m, "offline_reward", cfg.episodes));
        let success = mean(&per_task_means(&records, m, "success", cfg.episodes));
        out.summary.push(format!(
            "cartpole {} after {} games: offline reward {reward:.2}, success rate {success:.3}",
            m.label(),
            cfg.episodes
        ));
    }
    if methods.len() == 2 {
        let a = per_task_means(&records, Method::MetaCritic, "offline_reward", cfg.episodes);
        let b = per_task_means(&records, Method::Standard, "offline_reward", cfg.episodes);
        let (wins, n, p) = sign_test(&a, &b);
        out.summary.push(format!("cartpole sign test Meta-Critic > Standard: {wins}/{n} tasks, p = {p:.2e}"));
    }
    out.records = records;
    if let Some(mc) = critic {
        out.critics.push(("cartpole".into(), mc));
    }
    out.task_sets.push(("cartpole_test".into(), tests));
    Ok(out)
}
