//! Few-shot regression: sinusoids alone, or mixed with lines.

use log::info;
use metacritic_core::baselines::{adapt_fomaml, fine_tune, train_all_ft_source, train_fomaml, train_standard};
use metacritic_core::metacritic::{meta_test, meta_test_semisupervised, meta_train, mse, MetaCritic, TaskPool};
use metacritic_core::nets::ActorNet;
use metacritic_core::rng::{stream, Rng};
use metacritic_core::tasks::{sample_regression_task, sample_shots, RegressionTask, Shot, TaskSpec, INPUT_RANGE};
use rand::Rng as _;

use super::{ordered_map, summary_line, Cell, Method, RunContext, Rows, SuiteOutput};
use crate::config::{Condition, RegressionConfig};
use crate::error::Result;

const EXPERIMENT: u64 = 1;
pub const SUPPORTED: [Method; 5] = [
    Method::Standard,
    Method::AllFt,
    Method::Fomaml,
    Method::MetaCritic,
    Method::MetaCriticSupervised,
];

fn condition_tag(c: Condition) -> u64 {
    match c {
        Condition::Sin => 1,
        Condition::Mixture => 2,
    }
}

fn regression(t: &TaskSpec) -> RegressionTask {
    match t {
        TaskSpec::Regression(r) => *r,
        _ => unreachable!("regression sampler"),
    }
}

/// Trained learners for one condition.
struct Trained {
    critic: Option<MetaCritic>,
    all_ft: Option<ActorNet>,
    fomaml: Option<metacritic_core::autodiff::ParamSet>,
}

pub fn train_tasks(cfg: &RegressionConfig, condition: Condition, seed: u64) -> Vec<TaskSpec> {
    let mut rng = stream(seed, &[EXPERIMENT, condition_tag(condition), 0]);
    (0..cfg.train_tasks).map(|_| sample_regression_task(condition.is_mixture(), &mut rng)).collect()
}

pub fn test_tasks(cfg: &RegressionConfig, condition: Condition, seed: u64) -> Vec<TaskSpec> {
    let mut rng = stream(seed, &[EXPERIMENT, condition_tag(condition), 4]);
    (0..cfg.test_tasks).map(|_| sample_regression_task(condition.is_mixture(), &mut rng)).collect()
}

/// Meta-trains the critic for one condition.
pub fn train_critic(cfg: &RegressionConfig, condition: Condition, seed: u64) -> Result<MetaCritic> {
    let mut pool = TaskPool {
        tasks: train_tasks(cfg, condition, seed),
    };
    let mut rng = stream(seed, &[EXPERIMENT, condition_tag(condition), 1]);
    Ok(meta_train(&mut pool, &cfg.train, &mut rng)?)
}

fn unlabeled_inputs(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(INPUT_RANGE)).collect()
}

/// Runs every selected method on every condition, shot count, test task
/// and repeat.
pub fn run(cfg: &RegressionConfig, ctx: &RunContext) -> Result<SuiteOutput> {
    let methods = ctx.select("regression", &SUPPORTED)?;
    let mut out = SuiteOutput::default();
    let rows = Rows::new("regression");
    let wants = |m: Method| methods.contains(&m);
    for &condition in &cfg.conditions {
        let tag = condition_tag(condition);
        let sources: Vec<RegressionTask> = train_tasks(cfg, condition, ctx.seed).iter().map(regression).collect();
        let critic = if wants(Method::MetaCritic) || wants(Method::MetaCriticSupervised) {
            info!("regression/{}: meta-training on {} tasks", condition.name(), cfg.train_tasks);
            Some(train_critic(cfg, condition, ctx.seed)?)
        } else {
            None
        };
        let all_ft = if wants(Method::AllFt) {
            info!("regression/{}: All+FT source training", condition.name());
            Some(train_all_ft_source(&sources, &cfg.baseline, &mut stream(ctx.seed, &[EXPERIMENT, tag, 2]))?)
        } else {
            None
        };
        let fomaml = if wants(Method::Fomaml) {
            info!("regression/{}: first-order MAML meta-training", condition.name());
            Some(train_fomaml(&sources, &cfg.baseline, &mut stream(ctx.seed, &[EXPERIMENT, tag, 3]))?)
        } else {
            None
        };
        let trained = Trained { critic, all_ft, fomaml };
        let tests = test_tasks(cfg, condition, ctx.seed);

        let units: Vec<(usize, usize)> = (0..tests.len()).flat_map(|i| (0..cfg.repeats).map(move |r| (i, r))).collect();
        info!("regression/{}: meta-testing {} task repeats", condition.name(), units.len());
        let per_unit = ordered_map(ctx.jobs, units, |(i, r)| {
            let task = regression(&tests[i]);
            let heldout = sample_shots(&task, cfg.eval_points, &mut stream(ctx.seed, &[EXPERIMENT, tag, 5, i as u64]));
            let mut recs = Vec::new();
            for &k in &cfg.shots {
                let key = [EXPERIMENT, tag, i as u64, r as u64, k as u64];
                let shots = sample_shots(&task, k, &mut stream(ctx.seed, &[&key[..], &[6]].concat()));
                let unlabeled = unlabeled_inputs(cfg.unlabeled, &mut stream(ctx.seed, &[&key[..], &[7]].concat()));
                let init = stream(ctx.seed, &[&key[..], &[8]].concat());
                for &m in &methods {
                    let (actor, budget) = adapt(m, &trained, cfg, &shots, &unlabeled, &mut init.clone())?;
                    let cell = Cell {
                        method: m,
                        condition: condition.name(),
                        arms_or_k: k,
                        budget,
                        task_id: i,
                        repeat: r,
                    };
                    recs.push(rows.record(&cell, "mse", mse(&actor, &heldout)?));
                }
            }
            Ok(recs)
        })?;
        let records: Vec<_> = per_unit.into_iter().flatten().collect();
        for &k in &cfg.shots {
            for &m in &methods {
                let label = format!("regression {} K={k} {}", condition.name(), m.label());
                out.summary.extend(summary_line(&label, &records, |r| r.arms_or_k == k && r.method == m.label()));
            }
        }
        out.records.extend(records);

        if let Some(mc) = &trained.critic {
            if condition == Condition::Sin && wants(Method::MetaCritic) && wants(Method::MetaCriticSupervised) && cfg.semi_study_tasks > 0 {
                let study = semi_supervised_study(mc, cfg, ctx)?;
                let wins = study.iter().filter(|r| r.method == Method::MetaCritic.label()).zip(study.iter().filter(|r| r.method == Method::MetaCriticSupervised.label())).filter(|(a, b)| a.value <= b.value).count();
                out.summary.push(format!("regression semi-supervised study: unlabelled inputs help or tie on {wins}/{} tasks", cfg.semi_study_tasks));
                out.records.extend(study);
            }
            out.critics.push((format!("regression_{}", condition.name()), mc.clone()));
        }
        out.task_sets.push((format!("regression_{}_test", condition.name()), tests));
    }
    Ok(out)
}

fn adapt(
    m: Method,
    trained: &Trained,
    cfg: &RegressionConfig,
    shots: &[Shot],
    unlabeled: &[f64],
    rng: &mut Rng,
) -> Result<(ActorNet, usize)> {
    let b = &cfg.baseline;
    let critic = || trained.critic.as_ref().expect("critic trained for selected method");
    Ok(match m {
        Method::Standard => (train_standard(shots, b, rng)?, b.budget),
        Method::AllFt => (fine_tune(trained.all_ft.as_ref().expect("source trained"), shots, b, rng)?, b.budget),
        Method::Fomaml => (adapt_fomaml(trained.fomaml.as_ref().expect("init trained"), shots, b)?, b.inner_steps),
        Method::MetaCritic => (meta_test_semisupervised(critic(), shots, unlabeled, &cfg.train, rng)?, cfg.train.test_steps),
        Method::MetaCriticSupervised => (meta_test(critic(), shots, &cfg.train, rng)?, cfg.train.test_steps),
        Method::Random | Method::Best => unreachable!("not a regression method"),
    })
}

/// K=4 sinusoid tasks meta-tested with and without unlabelled inputs, on
/// identical shots, initialisations and held-out points. Rows use the
/// experiment name `regression_semi`.
pub fn semi_supervised_study(mc: &MetaCritic, cfg: &RegressionConfig, ctx: &RunContext) -> Result<Vec<crate::records::ResultRecord>> {
    const K: usize = 4;
    let tag = 3;
    let rows = Rows::new("regression_semi");
    let mut task_rng = stream(ctx.seed, &[EXPERIMENT, tag, 0]);
    let tasks: Vec<RegressionTask> = (0..cfg.semi_study_tasks).map(|_| regression(&sample_regression_task(false, &mut task_rng))).collect();
    let unlabeled_count = if cfg.unlabeled > 0 { cfg.unlabeled } else { 64 };
    let per_task = ordered_map(ctx.jobs, (0..tasks.len()).collect(), |i| {
        let task = tasks[i];
        let key = [EXPERIMENT, tag, i as u64];
        let shots = sample_shots(&task, K, &mut stream(ctx.seed, &[&key[..], &[1]].concat()));
        let heldout = sample_shots(&task, cfg.eval_points, &mut stream(ctx.seed, &[&key[..], &[2]].concat()));
        let unlabeled = unlabeled_inputs(unlabeled_count, &mut stream(ctx.seed, &[&key[..], &[3]].concat()));
        let init = stream(ctx.seed, &[&key[..], &[4]].concat());
        let semi = meta_test_semisupervised(mc, &shots, &unlabeled, &cfg.train, &mut init.clone())?;
        let sup = meta_test(mc, &shots, &cfg.train, &mut init.clone())?;
        let cell = |method| Cell {
            method,
            condition: "sin",
            arms_or_k: K,
            budget: cfg.train.test_steps,
            task_id: i,
            repeat: 0,
        };
        Ok(vec![
            rows.record(&cell(Method::MetaCritic), "mse", mse(&semi, &heldout)?),
            rows.record(&cell(Method::MetaCriticSupervised), "mse", mse(&sup, &heldout)?),
        ])
    })?;
    Ok(per_task.into_iter().flatten().collect())
}
