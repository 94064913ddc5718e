//! Dirichlet multi-armed bandits.

use log::info;
use metacritic_core::baselines::train_standard_bandit;
use metacritic_core::metacritic::{meta_train, meta_test_bandit, MetaCritic, TaskPool, TrainConfig};
use metacritic_core::nets::ActorNet;
use metacritic_core::rng::{stream, Rng};
use metacritic_core::tasks::{bandit_value, sample_bandit, BanditTask, TaskSpec, BANDIT_STATE};
use metacritic_core::autodiff::Tensor;

use super::{ordered_map, summary_line, Cell, Method, RunContext, Rows, SuiteOutput};
use crate::config::{BanditConfig, BanditSetting};
use crate::error::Result;
use crate::records::ResultRecord;

const EXPERIMENT: u64 = 2;
const CONDITION: &str = "dirichlet";
pub const SUPPORTED: [Method; 4] = [Method::Standard, Method::MetaCritic, Method::Random, Method::Best];

fn bandit(t: &TaskSpec) -> &BanditTask {
    match t {
        TaskSpec::Bandit(b) => b,
        _ => unreachable!("bandit sampler"),
    }
}

fn sample_tasks(arms: usize, count: usize, rng: &mut Rng) -> Result<Vec<TaskSpec>> {
    Ok((0..count).map(|_| sample_bandit(arms, rng)).collect::<Result<_, _>>()?)
}

/// Monte Carlo estimate of E[max_i p_i] for p ~ Dirichlet(1, ..., 1).
pub fn expected_best_monte_carlo(arms: usize, draws: usize, rng: &mut Rng) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..draws {
        total += bandit(&sample_bandit(arms, rng)?).best();
    }
    Ok(total / draws as f64)
}

pub fn train_critic(cfg: &BanditConfig, setting: &BanditSetting, seed: u64) -> Result<MetaCritic> {
    let arms = setting.arms as u64;
    let tasks = sample_tasks(setting.arms, cfg.train_tasks, &mut stream(seed, &[EXPERIMENT, arms, 0]))?;
    let train = TrainConfig {
        meta_episodes: setting.meta_episodes,
        ..cfg.train.clone()
    };
    Ok(meta_train(&mut TaskPool { tasks }, &train, &mut stream(seed, &[EXPERIMENT, arms, 1]))?)
}

pub fn test_tasks(cfg: &BanditConfig, arms: usize, seed: u64) -> Result<Vec<TaskSpec>> {
    sample_tasks(arms, cfg.test_tasks, &mut stream(seed, &[EXPERIMENT, arms as u64, 4]))
}

fn policy_value(actor: &ActorNet, task: &BanditTask) -> metacritic_core::Result<f64> {
    let probs = actor.forward(&Tensor::vector(BANDIT_STATE.into()))?;
    bandit_value(task, probs.data())
}

/// Expected reward of each learner's policy after every pull budget in the
/// setting, plus the uniform-random and best-arm references.
pub fn run(cfg: &BanditConfig, ctx: &RunContext) -> Result<SuiteOutput> {
    let methods = ctx.select("bandit", &SUPPORTED)?;
    let mut out = SuiteOutput::default();
    let rows = Rows::new("bandit");
    for setting in &cfg.settings {
        let arms = setting.arms;
        let critic = if methods.contains(&Method::MetaCritic) {
            info!("bandit/{arms}-arm: meta-training for {} episodes", setting.meta_episodes);
            Some(train_critic(cfg, setting, ctx.seed)?)
        } else {
            None
        };
        let tests = test_tasks(cfg, arms, ctx.seed)?;
        let max_pulls = setting.pulls.iter().copied().max().unwrap_or(0);
        let units: Vec<(usize, usize)> = (0..tests.len()).flat_map(|i| (0..cfg.repeats).map(move |r| (i, r))).collect();
        info!("bandit/{arms}-arm: meta-testing {} task repeats", units.len());
        let per_unit = ordered_map(ctx.jobs, units, |(i, r)| {
            let task = bandit(&tests[i]);
            let init = stream(ctx.seed, &[EXPERIMENT, arms as u64, 8, i as u64, r as u64]);
            let mut recs: Vec<ResultRecord> = Vec::new();
            for &m in &methods {
                let cell = |budget| Cell {
                    method: m,
                    condition: CONDITION,
                    arms_or_k: arms,
                    budget,
                    task_id: i,
                    repeat: r,
                };
                let mut on_pull = |pull: usize, actor: &ActorNet| {
                    if setting.pulls.contains(&pull) {
                        recs.push(rows.record(&cell(pull), "expected_reward", policy_value(actor, task)?));
                    }
                    Ok(())
                };
                match m {
                    Method::MetaCritic => {
                        let mc = critic.as_ref().expect("critic trained");
                        meta_test_bandit(mc, task, max_pulls, &cfg.train, &mut init.clone(), &mut on_pull)?;
                    }
                    Method::Standard => {
                        train_standard_bandit(task, max_pulls, &cfg.baseline, &mut init.clone(), &mut on_pull)?;
                    }
                    Method::Random => {
                        for &p in &setting.pulls {
                            recs.push(rows.record(&cell(p), "expected_reward", 1.0 / arms as f64));
                        }
                    }
                    Method::Best if r == 0 => recs.push(rows.record(&cell(0), "expected_reward", task.best())),
                    _ => {}
                }
            }
            Ok(recs)
        })?;
        let records: Vec<ResultRecord> = per_unit.into_iter().flatten().collect();
        for &m in &methods {
            let budgets: &[usize] = if m == Method::Best { &[0] } else { &setting.pulls };
            for &p in budgets {
                let label = format!("bandit {arms}-arm {p} pulls {}", m.label());
                out.summary.extend(summary_line(&label, &records, |rec| rec.arms_or_k == arms && rec.budget == p && rec.method == m.label()));
            }
        }
        out.records.extend(records);
        if let Some(mc) = critic {
            out.critics.push((format!("bandit_{arms}arm"), mc));
        }
        out.task_sets.push((format!("bandit_{arms}arm_test"), tests));
    }
    Ok(out)
}
