//! Comparison learners: training from scratch (Standard), pooled training
//! with fine-tuning (All+FT) and first-order MAML.

use alloc::vec::Vec;
use rand::Rng as _;

use crate::autodiff::{Optimizer, OptimizerKind, ParamSet, Tape, Tensor};
use crate::metacritic::{fit_mse, sample_categorical, sampled_game};
use crate::nets::{ActorHead, ActorNet};
use crate::rng::Rng;
use crate::tasks::{
    bandit_pull, one_hot, BanditTask, CartpoleTask, RegressionTask, Shot, Transition, BANDIT_STATE, INPUT_RANGE,
};
use crate::{Error, Result};

/// Hyperparameters shared by the baseline learners.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BaselineConfig {
    /// Supervised: optimisation steps on the target shots. RL: updates after
    /// each pull or game.
    pub budget: usize,
    pub lr: f64,
    /// Pooled source-training steps for All+FT.
    pub source_steps: usize,
    /// Tasks per pooled or meta batch.
    pub task_batch: usize,
    /// Points drawn per task per pooled step, and FOMAML query size.
    pub points_per_task: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    /// FOMAML inner steps, in meta-training and at adaptation.
    pub inner_steps: usize,
    pub meta_iterations: usize,
    /// Inclusive range of FOMAML support-set sizes.
    pub support: (usize, usize),
    /// Discount for REINFORCE returns.
    pub gamma: f64,
    /// Decay of the REINFORCE moving-average baseline.
    pub baseline_decay: f64,
    pub optimizer: OptimizerKind,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            budget: 100,
            lr: 1e-3,
            source_steps: 5000,
            task_batch: 8,
            points_per_task: 10,
            inner_lr: 1e-2,
            outer_lr: 1e-3,
            inner_steps: 5,
            meta_iterations: 5000,
            support: (4, 8),
            gamma: 0.9,
            baseline_decay: 0.9,
            optimizer: OptimizerKind::default(),
        }
    }
}

fn scalar_actor(rng: &mut Rng) -> ActorNet {
    ActorNet::new(1, ActorHead::Linear(1), rng)
}

/// Standard supervised learning: a fresh actor fitted to the shots by
/// squared error for `cfg.budget` steps.
pub fn train_standard(shots: &[Shot], cfg: &BaselineConfig, rng: &mut Rng) -> Result<ActorNet> {
    if shots.is_empty() {
        return Err(Error::invalid("no shots to train on"));
    }
    let mut actor = scalar_actor(rng);
    fit_mse(&mut actor, shots, cfg.budget, cfg.lr, cfg.optimizer)?;
    Ok(actor)
}

/// Squared-error loss on `shots` and its gradient with respect to `params`.
pub fn mse_grad(params: &ParamSet, shots: &[Shot]) -> Result<(f64, Vec<Tensor>)> {
    let actor = ActorNet::from_params(params.clone(), ActorHead::Linear(1))?;
    let xs: Vec<f64> = shots.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = shots.iter().map(|s| s.y).collect();
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let x = tape.constant(Tensor::matrix(xs.len(), 1, xs)?);
    let out = actor.act_on_tape(&mut tape, &b, x)?;
    let y = tape.constant(Tensor::matrix(ys.len(), 1, ys)?);
    let d = tape.sub(out, y)?;
    let sq = tape.square(d)?;
    let loss = tape.mean(sq)?;
    let grads = tape.backward(loss)?;
    let g = b
        .vars()
        .iter()
        .zip(params.iter())
        .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    Ok((tape.value(loss).item()?, g))
}

/// Pooled source training for All+FT: one actor fitted to points drawn from
/// all source tasks at once.
pub fn train_all_ft_source(tasks: &[RegressionTask], cfg: &BaselineConfig, rng: &mut Rng) -> Result<ActorNet> {
    if tasks.is_empty() {
        return Err(Error::invalid("no source tasks"));
    }
    let mut actor = scalar_actor(rng);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    for _ in 0..cfg.source_steps {
        let mut shots = Vec::with_capacity(cfg.task_batch * cfg.points_per_task);
        for _ in 0..cfg.task_batch {
            let task = &tasks[rng.random_range(0..tasks.len())];
            shots.extend((0..cfg.points_per_task).map(|_| task.shot(rng.random_range(INPUT_RANGE))));
        }
        let (_, grads) = mse_grad(&actor.params, &shots)?;
        add_grads(&mut actor.params, &grads)?;
        opt.step(&mut actor.params)?;
        actor.params.zero_grad();
    }
    Ok(actor)
}

/// Fine-tunes a copy of the pooled actor on the target shots after
/// re-initialising its output layer.
pub fn fine_tune(source: &ActorNet, shots: &[Shot], cfg: &BaselineConfig, rng: &mut Rng) -> Result<ActorNet> {
    if shots.is_empty() {
        return Err(Error::invalid("no shots to train on"));
    }
    let mut actor = source.clone();
    actor.reset_output_layer(rng);
    fit_mse(&mut actor, shots, cfg.budget, cfg.lr, cfg.optimizer)?;
    Ok(actor)
}

/// All+FT end to end: pooled training followed by [`fine_tune`].
pub fn train_all_ft(
    source_tasks: &[RegressionTask],
    shots: &[Shot],
    cfg: &BaselineConfig,
    rng: &mut Rng,
) -> Result<ActorNet> {
    let source = train_all_ft_source(source_tasks, cfg, rng)?;
    fine_tune(&source, shots, cfg, rng)
}

fn add_grads(params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
    for (p, g) in params.iter_mut().zip(grads) {
        p.grad.add_assign(g)?;
    }
    Ok(())
}

/// First-order MAML outer gradient for one task: `inner_steps` plain
/// gradient steps of size `inner_lr` on the support loss, then the query-loss
/// gradient at the adapted parameters.
pub fn fomaml_outer_grad<S, Q>(
    params: &ParamSet,
    inner_lr: f64,
    inner_steps: usize,
    mut support_grad: S,
    mut query_grad: Q,
) -> Result<Vec<Tensor>>
where
    S: FnMut(&ParamSet) -> Result<Vec<Tensor>>,
    Q: FnMut(&ParamSet) -> Result<Vec<Tensor>>,
{
    let mut adapted = params.clone();
    sgd_steps(&mut adapted, inner_lr, inner_steps, &mut support_grad)?;
    query_grad(&adapted)
}

fn sgd_steps<S>(params: &mut ParamSet, lr: f64, steps: usize, grad: &mut S) -> Result<()>
where
    S: FnMut(&ParamSet) -> Result<Vec<Tensor>>,
{
    for _ in 0..steps {
        let g = grad(params)?;
        for (p, g) in params.iter_mut().zip(&g) {
            p.value.add_assign(&g.scale(-lr))?;
        }
    }
    Ok(())
}

/// First-order MAML meta-training of a shared initialisation.
pub fn train_fomaml(tasks: &[RegressionTask], cfg: &BaselineConfig, rng: &mut Rng) -> Result<ParamSet> {
    if tasks.is_empty() {
        return Err(Error::invalid("no source tasks"));
    }
    if cfg.support.0 == 0 || cfg.support.0 > cfg.support.1 {
        return Err(Error::invalid("support range must be non-empty and positive"));
    }
    let mut params = scalar_actor(rng).params;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.outer_lr);
    let draw = |task: &RegressionTask, n: usize, rng: &mut Rng| -> Vec<Shot> {
        (0..n).map(|_| task.shot(rng.random_range(INPUT_RANGE))).collect()
    };
    for _ in 0..cfg.meta_iterations {
        let k = rng.random_range(cfg.support.0..=cfg.support.1);
        for _ in 0..cfg.task_batch {
            let task = &tasks[rng.random_range(0..tasks.len())];
            let support = draw(task, k, rng);
            let query = draw(task, cfg.points_per_task, rng);
            let g = fomaml_outer_grad(
                &params,
                cfg.inner_lr,
                cfg.inner_steps,
                |p| mse_grad(p, &support).map(|r| r.1),
                |p| mse_grad(p, &query).map(|r| r.1),
            )?;
            let g: Vec<Tensor> = g.iter().map(|t| t.scale(1.0 / cfg.task_batch as f64)).collect();
            add_grads(&mut params, &g)?;
        }
        opt.step(&mut params)?;
        params.zero_grad();
    }
    Ok(params)
}

/// Adapts the initialisation to the target shots with `cfg.inner_steps`
/// gradient steps of size `cfg.inner_lr`.
pub fn adapt_fomaml(init: &ParamSet, shots: &[Shot], cfg: &BaselineConfig) -> Result<ActorNet> {
    if shots.is_empty() {
        return Err(Error::invalid("no shots to adapt on"));
    }
    let mut params = init.clone();
    sgd_steps(&mut params, cfg.inner_lr, cfg.inner_steps, &mut |p: &ParamSet| {
        mse_grad(p, shots).map(|r| r.1)
    })?;
    ActorNet::from_params(params, ActorHead::Linear(1))
}

/// Accumulates the gradient of `mean CE(o, a) * advantage`.
fn reinforce_grad(actor: &mut ActorNet, states: &Tensor, actions: &Tensor, advantages: Vec<f64>) -> Result<f64> {
    let mut tape = Tape::new();
    let b = actor.params.bind(&mut tape);
    let s = tape.constant(states.clone());
    let logits = actor.output_on_tape(&mut tape, &b, s)?;
    let ce = tape.cross_entropy(logits, actions)?;
    let w = tape.constant(Tensor::matrix(advantages.len(), 1, advantages)?);
    let weighted = tape.mul(ce, w)?;
    let loss = tape.mean(weighted)?;
    let grads = tape.backward(loss)?;
    actor.params.accumulate(&grads, &b)?;
    tape.value(loss).item()
}

fn stack(transitions: &[Transition]) -> Result<(Tensor, Tensor)> {
    let s: Vec<&[f64]> = transitions.iter().map(|t| t.state.as_slice()).collect();
    let a: Vec<&[f64]> = transitions.iter().map(|t| t.action.as_slice()).collect();
    Ok((Tensor::from_rows(&s)?, Tensor::from_rows(&a)?))
}

/// Standard RL on a bandit: REINFORCE over all pulls so far with a
/// moving-average reward baseline, `cfg.budget` updates after each pull.
/// `on_pull` sees the number of pulls so far and the updated actor.
pub fn train_standard_bandit(
    task: &BanditTask,
    pulls: usize,
    cfg: &BaselineConfig,
    rng: &mut Rng,
    on_pull: &mut dyn FnMut(usize, &ActorNet) -> Result<()>,
) -> Result<ActorNet> {
    let mut actor = ActorNet::new(1, ActorHead::Softmax(task.arms()), rng);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let state = Tensor::vector(BANDIT_STATE.into());
    let mut history = Vec::new();
    let mut baseline: Option<f64> = None;
    for pull in 1..=pulls {
        let probs = actor.forward(&state)?;
        let arm = sample_categorical(probs.data(), rng);
        let reward = bandit_pull(task, arm, rng)?;
        let b = baseline.unwrap_or(reward);
        baseline = Some(cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * reward);
        history.push(Transition {
            state: BANDIT_STATE.into(),
            action: one_hot(arm, task.arms()),
            reward,
            next_state: BANDIT_STATE.into(),
            terminal: true,
        });
        let (states, actions) = stack(&history)?;
        let b = baseline.unwrap_or(0.0);
        let adv: Vec<f64> = history.iter().map(|t| t.reward - b).collect();
        for _ in 0..cfg.budget {
            reinforce_grad(&mut actor, &states, &actions, adv.clone())?;
            opt.step(&mut actor.params)?;
            actor.params.zero_grad();
        }
        on_pull(pull, &actor)?;
    }
    Ok(actor)
}

/// Standard RL on cartpole: after each sampled game, `cfg.budget` REINFORCE
/// updates on that game with discounted reward-to-go minus a moving-average
/// baseline. `on_episode` sees the actor after every game's updates.
pub fn train_standard_cartpole(
    task: CartpoleTask,
    episodes: usize,
    cfg: &BaselineConfig,
    rng: &mut Rng,
    on_episode: &mut dyn FnMut(usize, &ActorNet) -> Result<()>,
) -> Result<ActorNet> {
    let mut actor = ActorNet::new(4, ActorHead::Softmax(2), rng);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut baseline: Option<f64> = None;
    for episode in 0..episodes {
        let game = sampled_game(&actor, task, rng)?;
        let returns = reward_to_go(&game, cfg.gamma);
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let b = *baseline.get_or_insert(mean);
        baseline = Some(cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * mean);
        let (states, actions) = stack(&game)?;
        let adv: Vec<f64> = returns.iter().map(|g| g - b).collect();
        for _ in 0..cfg.budget {
            reinforce_grad(&mut actor, &states, &actions, adv.clone())?;
            opt.step(&mut actor.params)?;
            actor.params.zero_grad();
        }
        on_episode(episode, &actor)?;
    }
    Ok(actor)
}

/// Discounted return from each step to the end of the game.
pub fn reward_to_go(game: &[Transition], gamma: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; game.len()];
    let mut acc = 0.0;
    for (i, t) in game.iter().enumerate().rev() {
        acc = t.reward + gamma * acc;
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metacritic::mse;
    use crate::rng::seeded;
    use crate::tasks::sample_shots;

    fn scalar_param(w: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(w)).unwrap();
        p
    }

    #[test]
    fn fomaml_quadratic_outer_grad() {
        // f(w) = w^2: one inner step gives w(1 - 2a); first-order outer grad is 2w(1 - 2a).
        let grad = |p: &ParamSet| Ok(alloc::vec![Tensor::scalar(2.0 * p.value(0).item()?)]);
        for (w, a) in [(1.5, 0.1), (-2.0, 0.25), (0.3, 0.0)] {
            let g = fomaml_outer_grad(&scalar_param(w), a, 1, grad, grad).unwrap();
            assert!((g[0].item().unwrap() - 2.0 * w * (1.0 - 2.0 * a)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_inner_lr_is_joint_training() {
        let grad = |p: &ParamSet| Ok(alloc::vec![Tensor::scalar(2.0 * p.value(0).item()?)]);
        let g = fomaml_outer_grad(&scalar_param(0.7), 0.0, 3, grad, grad).unwrap();
        assert_eq!(g[0].item().unwrap(), 1.4);
    }

    #[test]
    fn adapt_with_zero_steps_is_identity() {
        let mut rng = seeded(3);
        let init = scalar_actor(&mut rng).params;
        let cfg = BaselineConfig {
            inner_steps: 0,
            ..BaselineConfig::default()
        };
        let shots = sample_shots(&RegressionTask::Linear { slope: 1.0, intercept: 0.0 }, 4, &mut rng);
        assert_eq!(adapt_fomaml(&init, &shots, &cfg).unwrap().params, init);
    }

    #[test]
    fn standard_fits_eight_points_of_a_line() {
        let mut rng = seeded(5);
        let task = RegressionTask::Linear { slope: 2.0, intercept: -1.0 };
        let shots = sample_shots(&task, 8, &mut rng);
        let cfg = BaselineConfig {
            budget: 3000,
            lr: 1e-2,
            ..BaselineConfig::default()
        };
        let actor = train_standard(&shots, &cfg, &mut rng).unwrap();
        assert!(mse(&actor, &shots).unwrap() < 1e-3);
    }

    #[test]
    fn zero_budget_is_random_init() {
        let shots = [Shot { x: 1.0, y: 2.0 }];
        let cfg = BaselineConfig {
            budget: 0,
            ..BaselineConfig::default()
        };
        let a = train_standard(&shots, &cfg, &mut seeded(9)).unwrap();
        assert_eq!(a, scalar_actor(&mut seeded(9)));
    }

    #[test]
    fn fine_tuning_reduces_target_loss() {
        let mut rng = seeded(11);
        let tasks: Vec<RegressionTask> = (0..20)
            .map(|i| RegressionTask::Sine { amplitude: 1.0 + i as f64 * 0.2, phase: 0.5 })
            .collect();
        let cfg = BaselineConfig {
            source_steps: 200,
            ..BaselineConfig::default()
        };
        let source = train_all_ft_source(&tasks, &cfg, &mut rng).unwrap();
        let shots = sample_shots(&tasks[3], 6, &mut rng);
        let mut before = 0.0;
        let mut after = 0.0;
        for seed in 0..5 {
            let mut reset = source.clone();
            reset.reset_output_layer(&mut seeded(seed));
            before += mse(&reset, &shots).unwrap();
            let tuned = fine_tune(&source, &shots, &cfg, &mut seeded(seed)).unwrap();
            after += mse(&tuned, &shots).unwrap();
        }
        assert!(after < before);
    }

    #[test]
    fn reward_to_go_discounts_backwards() {
        let t = |r| Transition {
            state: alloc::vec![0.0],
            action: alloc::vec![1.0],
            reward: r,
            next_state: alloc::vec![0.0],
            terminal: false,
        };
        let g = reward_to_go(&[t(1.0), t(1.0), t(0.0)], 0.5);
        assert_eq!(g, alloc::vec![1.5, 1.0, 0.0]);
    }

    #[test]
    fn reinforce_learns_an_easy_bandit() {
        let task = BanditTask::new(alloc::vec![0.9, 0.1]).unwrap();
        let cfg = BaselineConfig {
            budget: 10,
            lr: 1e-2,
            ..BaselineConfig::default()
        };
        let mut wins = 0;
        for seed in 0..10 {
            let actor = train_standard_bandit(&task, 30, &cfg, &mut seeded(seed), &mut |_, _| Ok(())).unwrap();
            let p = actor.forward(&Tensor::vector(BANDIT_STATE.into())).unwrap();
            if p.data()[0] > 0.5 {
                wins += 1;
            }
        }
        assert!(wins >= 8, "{wins}");
    }
}
