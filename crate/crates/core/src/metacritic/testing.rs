use alloc::vec::Vec;

use super::train::actor_embedding;
use super::updates::actor_update_continuous;
use super::{build_rl_trace, build_sl_trace, discrete_update, sample_actions, sample_categorical, MetaCritic, TrainConfig};
use crate::autodiff::{Optimizer, Tape, Tensor};
use crate::nets::{ActorHead, ActorNet};
use crate::rng::Rng;
use crate::tasks::{
    bandit_pull, one_hot, BanditTask, CartpoleAction, CartpoleEpisode, CartpoleTask, Shot, Transition, BANDIT_STATE,
};
use crate::{Error, Result};

/// Supervised meta-testing: a fresh actor trained only against the frozen
/// critic, with the embedding taken from the `shots` trace.
pub fn meta_test(mc: &MetaCritic, shots: &[Shot], cfg: &TrainConfig, rng: &mut Rng) -> Result<ActorNet> {
    meta_test_semisupervised(mc, shots, &[], cfg, rng)
}

/// As [`meta_test`], with the actor's update batches also covering
/// `unlabeled` inputs. The embedding sees the labelled shots only.
pub fn meta_test_semisupervised(
    mc: &MetaCritic,
    shots: &[Shot],
    unlabeled: &[f64],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<ActorNet> {
    let actor = ActorNet::new(1, ActorHead::Linear(1), rng);
    critic_phase(mc, actor, shots, unlabeled, cfg)
}

/// Supervised pretraining on the shots for `cfg.pretrain_steps`, then
/// critic-driven training as in [`meta_test`].
pub fn meta_test_pretrained(mc: &MetaCritic, shots: &[Shot], cfg: &TrainConfig, rng: &mut Rng) -> Result<ActorNet> {
    let mut actor = ActorNet::new(1, ActorHead::Linear(1), rng);
    fit_mse(&mut actor, shots, cfg.pretrain_steps, cfg.lr_test, cfg.optimizer)?;
    critic_phase(mc, actor, shots, &[], cfg)
}

fn critic_phase(
    mc: &MetaCritic,
    mut actor: ActorNet,
    shots: &[Shot],
    unlabeled: &[f64],
    cfg: &TrainConfig,
) -> Result<ActorNet> {
    if shots.is_empty() {
        return Err(Error::invalid("meta-testing needs at least one shot"));
    }
    let z = actor_embedding(mc, &build_sl_trace(shots)?, cfg)?;
    let xs: Vec<f64> = shots.iter().map(|s| s.x).chain(unlabeled.iter().copied()).collect();
    let states = Tensor::matrix(xs.len(), 1, xs)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr_test);
    for _ in 0..cfg.test_steps {
        actor_update_continuous(&mut actor, mc, &states, &z)?;
        opt.step(&mut actor.params)?;
        actor.params.zero_grad();
    }
    Ok(actor)
}

/// Mean squared error of a scalar actor on `shots`.
pub fn mse(actor: &ActorNet, shots: &[Shot]) -> Result<f64> {
    if shots.is_empty() {
        return Err(Error::invalid("no points to evaluate"));
    }
    let xs: Vec<f64> = shots.iter().map(|s| s.x).collect();
    let pred = actor.forward(&Tensor::matrix(xs.len(), 1, xs)?)?;
    let sse: f64 = pred.data().iter().zip(shots).map(|(p, s)| (p - s.y) * (p - s.y)).sum();
    Ok(sse / shots.len() as f64)
}

/// Full-batch squared-error descent on `shots`.
pub(crate) fn fit_mse(
    actor: &mut ActorNet,
    shots: &[Shot],
    steps: usize,
    lr: f64,
    kind: crate::autodiff::OptimizerKind,
) -> Result<()> {
    if steps == 0 {
        return Ok(());
    }
    let xs: Vec<f64> = shots.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = shots.iter().map(|s| s.y).collect();
    let x = Tensor::matrix(xs.len(), 1, xs)?;
    let y = Tensor::matrix(ys.len(), 1, ys)?;
    let mut opt = Optimizer::new(kind, lr);
    for _ in 0..steps {
        let mut tape = Tape::new();
        let b = actor.params.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let out = actor.act_on_tape(&mut tape, &b, xv)?;
        let yv = tape.constant(y.clone());
        let d = tape.sub(out, yv)?;
        let sq = tape.square(d)?;
        let loss = tape.mean(sq)?;
        let grads = tape.backward(loss)?;
        actor.params.accumulate(&grads, &b)?;
        opt.step(&mut actor.params)?;
        actor.params.zero_grad();
    }
    Ok(())
}

/// Bandit meta-testing over `pulls` interactions. After each pull the actor
/// takes `cfg.test_steps` updates against the critic, with the embedding
/// re-encoded from the most recent `cfg.trace_len` pulls. `on_pull` sees the
/// number of pulls so far and the updated actor.
pub fn meta_test_bandit(
    mc: &MetaCritic,
    task: &BanditTask,
    pulls: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
    on_pull: &mut dyn FnMut(usize, &ActorNet) -> Result<()>,
) -> Result<ActorNet> {
    let mut actor = ActorNet::new(1, ActorHead::Softmax(task.arms()), rng);
    let state = Tensor::vector(BANDIT_STATE.into());
    let states = state.repeat_rows(cfg.batch_size)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr_test);
    let mut history: Vec<Transition> = Vec::new();
    for pull in 1..=pulls {
        let probs = actor.forward(&state)?;
        let arm = sample_categorical(probs.data(), rng);
        let reward = bandit_pull(task, arm, rng)?;
        history.push(Transition {
            state: BANDIT_STATE.into(),
            action: one_hot(arm, task.arms()),
            reward,
            next_state: BANDIT_STATE.into(),
            terminal: true,
        });
        let z = actor_embedding(mc, &build_rl_trace(&history, cfg.trace_len)?, cfg)?;
        for _ in 0..cfg.test_steps {
            let probs = actor.forward(&state)?;
            let actions = sample_actions(probs.data(), cfg.batch_size, rng)?;
            discrete_update(&mut actor, mc, &states, &actions, &z, cfg)?;
            opt.step(&mut actor.params)?;
            actor.params.zero_grad();
        }
        on_pull(pull, &actor)?;
    }
    Ok(actor)
}

/// One game with actions sampled from the actor's policy.
pub fn sampled_game(actor: &ActorNet, task: CartpoleTask, rng: &mut Rng) -> Result<Vec<Transition>> {
    let mut episode = CartpoleEpisode::new(task, rng);
    let mut out = Vec::new();
    while !episode.is_done() {
        let obs = episode.state().observation();
        let probs = actor.forward(&Tensor::vector(obs.into()))?;
        let a = sample_categorical(probs.data(), rng);
        let o = episode.step(CartpoleAction::from_index(a))?;
        out.push(Transition {
            state: obs.into(),
            action: one_hot(a, 2),
            reward: o.reward,
            next_state: o.state.observation().into(),
            terminal: o.failed,
        });
    }
    Ok(out)
}

/// Lengths of `games` offline games played greedily (argmax action).
pub fn cartpole_offline(actor: &ActorNet, task: CartpoleTask, games: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    (0..games)
        .map(|_| {
            let mut episode = CartpoleEpisode::new(task, rng);
            while !episode.is_done() {
                let obs = episode.state().observation();
                let probs = actor.forward(&Tensor::vector(obs.into()))?;
                episode.step(CartpoleAction::from_index(probs.argmax_rows()[0]))?;
            }
            Ok(episode.steps())
        })
        .collect()
}

/// Cartpole meta-testing over `episodes` games. After each game the actor
/// takes `cfg.test_steps` updates on the game's states, with the embedding
/// encoded from the last `cfg.trace_len` transitions of the rolling history.
/// `on_episode` sees the actor after every game's updates.
pub fn meta_test_cartpole(
    mc: &MetaCritic,
    task: CartpoleTask,
    episodes: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
    on_episode: &mut dyn FnMut(usize, &ActorNet) -> Result<()>,
) -> Result<ActorNet> {
    let mut actor = ActorNet::new(4, ActorHead::Softmax(2), rng);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr_test);
    let mut history: Vec<Transition> = Vec::new();
    for episode in 0..episodes {
        let game = sampled_game(&actor, task, rng)?;
        let rows: Vec<&[f64]> = game.iter().map(|t| t.state.as_slice()).collect();
        let states = Tensor::from_rows(&rows)?;
        history.extend(game.iter().cloned());
        if history.len() > 2 * cfg.trace_len {
            history.drain(..history.len() - cfg.trace_len);
        }
        let z = actor_embedding(mc, &build_rl_trace(&history, cfg.trace_len)?, cfg)?;
        for _ in 0..cfg.test_steps {
            let probs = actor.forward(&states)?;
            let mut actions = Vec::with_capacity(probs.len());
            for i in 0..probs.rows() {
                actions.extend(one_hot(sample_categorical(probs.row(i), rng), 2));
            }
            let actions = Tensor::matrix(probs.rows(), 2, actions)?;
            discrete_update(&mut actor, mc, &states, &actions, &z, cfg)?;
            opt.step(&mut actor.params)?;
            actor.params.zero_grad();
        }
        on_episode(episode, &actor)?;
    }
    Ok(actor)
}
