use alloc::boxed::Box;
use alloc::vec::Vec;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::updates::{actor_update_continuous, critic_update, CriticBatch, SlCriticBatch, TdSample};
use super::{build_rl_trace, build_sl_trace, discrete_update, sample_actions, sample_categorical, MetaCritic, TaskEmbedding, TrainConfig};
use crate::autodiff::{Optimizer, Tensor};
use crate::nets::{ActorHead, ActorNet};
use crate::rng::{seeded, Rng};
use crate::tasks::{
    bandit_pull, one_hot, BanditTask, CartpoleAction, CartpoleEpisode, RegressionTask, Shot, TaskSpec,
    Transition, BANDIT_STATE, INPUT_RANGE,
};
use crate::{Error, Result};

/// Yields meta-training tasks.
pub trait TaskSource {
    fn next_task(&mut self, rng: &mut Rng) -> TaskSpec;
}

impl<F: FnMut(&mut Rng) -> TaskSpec> TaskSource for F {
    fn next_task(&mut self, rng: &mut Rng) -> TaskSpec {
        self(rng)
    }
}

/// A fixed set of meta-training tasks, drawn from uniformly with replacement.
#[derive(Debug, Clone)]
pub struct TaskPool {
    pub tasks: Vec<TaskSpec>,
}

impl TaskSource for TaskPool {
    fn next_task(&mut self, rng: &mut Rng) -> TaskSpec {
        self.tasks[rng.random_range(0..self.tasks.len())].clone()
    }
}

/// Structured progress record from meta-training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainEvent {
    pub episode: usize,
    pub step: usize,
    /// Task slot within the episode; `None` for critic updates.
    pub task: Option<usize>,
    pub loss: f64,
    /// Mean reward of the data gathered by the actor update.
    pub reward: Option<f64>,
}

/// Meta-trains a fresh critic. See [`meta_train_with`].
pub fn meta_train(source: &mut dyn TaskSource, cfg: &TrainConfig, rng: &mut Rng) -> Result<MetaCritic> {
    meta_train_with(source, cfg, rng, None, &mut |_| {})
}

/// Meta-training: each episode draws `tasks_per_episode` tasks with fresh
/// actors; each inner step updates the actors of a random task mini-batch
/// against the current critic, then updates the critic on the data those
/// actors just produced.
///
/// Starts from `initial` when given, otherwise from a freshly initialised
/// critic sized for the first task.
pub fn meta_train_with(
    source: &mut dyn TaskSource,
    cfg: &TrainConfig,
    rng: &mut Rng,
    initial: Option<MetaCritic>,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<MetaCritic> {
    cfg.validate()?;
    let probe = source.next_task(rng);
    let (state_dim, action_dim) = (probe.state_dim(), probe.action_dim());
    let mut mc = match initial {
        Some(mc) => mc,
        None => MetaCritic::new(state_dim, action_dim, rng),
    };
    if mc.state_dim() != state_dim || mc.action_dim() != action_dim {
        return Err(Error::invalid("critic dimensions do not match the task source"));
    }
    let mut mvn_opt = Optimizer::new(cfg.optimizer, cfg.lr_critic);
    let mut taen_opt = Optimizer::new(cfg.optimizer, cfg.lr_critic);
    let mut workers: Vec<Worker> = Vec::new();

    for episode in 0..cfg.meta_episodes {
        let wrap = |step: usize| move |e: Error| Error::Training { episode, step, source: Box::new(e) };
        if episode == 0 || !cfg.persistent_actors {
            workers.clear();
            for _ in 0..cfg.tasks_per_episode {
                let task = source.next_task(rng);
                if task.state_dim() != state_dim || task.action_dim() != action_dim {
                    return Err(Error::invalid("task source mixes incompatible task shapes"));
                }
                workers.push(Worker::new(task, cfg, rng.random()));
            }
        }
        for step in 0..cfg.inner_steps {
            let chosen = index::sample(rng, cfg.tasks_per_episode, cfg.task_minibatch).into_vec();
            let mut batch = Batch::default();
            for &slot in &chosen {
                let Some(out) = workers[slot].actor_phase(&mc, cfg).map_err(wrap(step))? else {
                    continue;
                };
                observer(&TrainEvent {
                    episode,
                    step,
                    task: Some(slot),
                    loss: out.loss,
                    reward: Some(out.reward),
                });
                batch.absorb(out.critic);
            }
            let Some(batch) = batch.finish() else { continue };
            mc.zero_grad();
            let loss = critic_update(&mut mc, &batch, cfg.gamma).map_err(wrap(step))?;
            mvn_opt.step(&mut mc.mvn.params).map_err(wrap(step))?;
            taen_opt.step(&mut mc.taen.params).map_err(wrap(step))?;
            observer(&TrainEvent {
                episode,
                step,
                task: None,
                loss,
                reward: None,
            });
        }
    }
    mc.zero_grad();
    Ok(mc)
}

#[derive(Default)]
struct Batch {
    td: Vec<TdSample>,
    sl: Vec<SlCriticBatch>,
}

impl Batch {
    fn absorb(&mut self, part: CriticPart) {
        match part {
            CriticPart::Td(mut s) => self.td.append(&mut s),
            CriticPart::Sl(b) => self.sl.push(b),
        }
    }

    fn finish(self) -> Option<CriticBatch> {
        if !self.sl.is_empty() {
            Some(CriticBatch::Sl(self.sl))
        } else if !self.td.is_empty() {
            Some(CriticBatch::Td(self.td))
        } else {
            None
        }
    }
}

enum CriticPart {
    Td(Vec<TdSample>),
    Sl(SlCriticBatch),
}

struct ActorOutcome {
    loss: f64,
    reward: f64,
    critic: CriticPart,
}

/// Embedding used by actor updates; zero under the ablation flag.
pub(crate) fn actor_embedding(mc: &MetaCritic, trace: &super::LearningTrace, cfg: &TrainConfig) -> Result<TaskEmbedding> {
    if cfg.ablate_embedding {
        Ok(TaskEmbedding([0.0; 3]))
    } else {
        mc.embed(trace)
    }
}

/// One task of the current episode with its actor and private random stream.
struct Worker {
    actor: ActorNet,
    opt: Optimizer,
    rng: Rng,
    kind: WorkerKind,
}

enum WorkerKind {
    Regression {
        task: RegressionTask,
        /// Labelled samples drawn so far; resampled once the budget is spent.
        data: Vec<Shot>,
    },
    Bandit {
        task: BanditTask,
        history: Vec<Transition>,
        pulls: usize,
    },
    Cartpole {
        episode: CartpoleEpisode,
        history: Vec<Transition>,
        interactions: usize,
    },
}

impl Worker {
    fn new(task: TaskSpec, cfg: &TrainConfig, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let (actor, kind) = match task {
            TaskSpec::Regression(task) => (
                ActorNet::new(1, ActorHead::Linear(1), &mut rng),
                WorkerKind::Regression { task, data: Vec::new() },
            ),
            TaskSpec::Bandit(task) => (
                ActorNet::new(1, ActorHead::Softmax(task.arms()), &mut rng),
                WorkerKind::Bandit {
                    task,
                    history: Vec::new(),
                    pulls: 0,
                },
            ),
            TaskSpec::Cartpole(task) => {
                let actor = ActorNet::new(4, ActorHead::Softmax(2), &mut rng);
                (
                    actor,
                    WorkerKind::Cartpole {
                        episode: CartpoleEpisode::new(task, &mut rng),
                        history: Vec::new(),
                        interactions: 0,
                    },
                )
            }
        };
        Worker {
            actor,
            opt: Optimizer::new(cfg.optimizer, cfg.lr_actor),
            rng,
            kind,
        }
    }

    fn actor_phase(&mut self, mc: &MetaCritic, cfg: &TrainConfig) -> Result<Option<ActorOutcome>> {
        let out = match &mut self.kind {
            WorkerKind::Regression { task, data } => {
                regression_phase(&mut self.actor, &mut self.rng, task, data, mc, cfg)?
            }
            WorkerKind::Bandit { task, history, pulls } => {
                if *pulls >= cfg.sample_budget {
                    return Ok(None);
                }
                bandit_phase(&mut self.actor, &mut self.rng, task, history, pulls, mc, cfg)?
            }
            WorkerKind::Cartpole {
                episode,
                history,
                interactions,
            } => {
                if *interactions >= cfg.sample_budget {
                    return Ok(None);
                }
                cartpole_phase(&mut self.actor, &mut self.rng, episode, history, interactions, mc, cfg)?
            }
        };
        self.opt.step(&mut self.actor.params)?;
        self.actor.params.zero_grad();
        Ok(Some(out))
    }
}

fn draw_labelled(task: &RegressionTask, data: &mut Vec<Shot>, budget: usize, rng: &mut Rng) -> Shot {
    if data.len() < budget {
        let s = task.shot(rng.random_range(INPUT_RANGE));
        data.push(s);
        s
    } else {
        data[rng.random_range(0..data.len())]
    }
}

fn regression_phase(
    actor: &mut ActorNet,
    rng: &mut Rng,
    task: &RegressionTask,
    data: &mut Vec<Shot>,
    mc: &MetaCritic,
    cfg: &TrainConfig,
) -> Result<ActorOutcome> {
    let k = rng.random_range(cfg.train_shots.0..=cfg.train_shots.1);
    let shots: Vec<Shot> = (0..k)
        .map(|_| draw_labelled(task, data, cfg.sample_budget, rng))
        .collect();
    let trace = build_sl_trace(&shots)?;
    let z = actor_embedding(mc, &trace, cfg)?;

    let xs: Vec<f64> = (0..cfg.batch_size).map(|_| rng.random_range(INPUT_RANGE)).collect();
    let loss = actor_update_continuous(actor, mc, &Tensor::matrix(xs.len(), 1, xs)?, &z)?;

    let labelled: Vec<Shot> = (0..cfg.batch_size)
        .map(|_| draw_labelled(task, data, cfg.sample_budget, rng))
        .collect();
    let inputs: Vec<f64> = labelled.iter().map(|s| s.x).collect();
    let clean = actor.forward(&Tensor::matrix(inputs.len(), 1, inputs.clone())?)?;
    let predictions: Vec<f64> = clean
        .data()
        .iter()
        .map(|&y| {
            let eps: f64 = StandardNormal.sample(rng);
            y + cfg.action_noise * eps
        })
        .collect();
    let rewards: Vec<f64> = predictions
        .iter()
        .zip(&labelled)
        .map(|(p, s)| -(p - s.y) * (p - s.y))
        .collect();
    let reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok(ActorOutcome {
        loss,
        reward,
        critic: CriticPart::Sl(SlCriticBatch {
            trace,
            inputs,
            predictions,
            rewards,
        }),
    })
}

fn bandit_phase(
    actor: &mut ActorNet,
    rng: &mut Rng,
    task: &BanditTask,
    history: &mut Vec<Transition>,
    pulls: &mut usize,
    mc: &MetaCritic,
    cfg: &TrainConfig,
) -> Result<ActorOutcome> {
    let state = Tensor::vector(BANDIT_STATE.into());
    let mut samples = Vec::new();
    let mut total = 0.0;
    let n = cfg.interactions_per_step.min(cfg.sample_budget - *pulls);
    for _ in 0..n {
        let probs = actor.forward(&state)?;
        let arm = sample_categorical(probs.data(), rng);
        let reward = bandit_pull(task, arm, rng)?;
        total += reward;
        let transition = Transition {
            state: BANDIT_STATE.into(),
            action: one_hot(arm, task.arms()),
            reward,
            next_state: BANDIT_STATE.into(),
            terminal: true,
        };
        if !history.is_empty() {
            let trace = build_rl_trace(history, cfg.trace_len)?;
            samples.push(TdSample {
                next_action: transition.action.clone(),
                transition: transition.clone(),
                next_trace: trace.clone(),
                trace,
            });
        }
        push_bounded(history, transition, cfg.trace_len);
        *pulls += 1;
    }
    let z = actor_embedding(mc, &build_rl_trace(history, cfg.trace_len)?, cfg)?;
    let probs = actor.forward(&state)?;
    let actions = sample_actions(probs.data(), cfg.batch_size, rng)?;
    let states = state.repeat_rows(cfg.batch_size)?;
    let loss = discrete_update(actor, mc, &states, &actions, &z, cfg)?;
    Ok(ActorOutcome {
        loss,
        reward: total / n.max(1) as f64,
        critic: CriticPart::Td(samples),
    })
}

/// Keeps at most `2k` recent transitions; traces only look at the last `k`.
fn push_bounded(history: &mut Vec<Transition>, t: Transition, k: usize) {
    history.push(t);
    if history.len() > 2 * k {
        history.drain(..history.len() - k);
    }
}

fn cartpole_phase(
    actor: &mut ActorNet,
    rng: &mut Rng,
    episode: &mut CartpoleEpisode,
    history: &mut Vec<Transition>,
    interactions: &mut usize,
    mc: &MetaCritic,
    cfg: &TrainConfig,
) -> Result<ActorOutcome> {
    let mut samples = Vec::new();
    let mut visited: Vec<[f64; 4]> = Vec::new();
    let mut total = 0.0;
    let n = cfg.interactions_per_step.min(cfg.sample_budget - *interactions);
    for _ in 0..n {
        let obs = episode.state().observation();
        let probs = actor.forward(&Tensor::vector(obs.into()))?;
        let a = sample_categorical(probs.data(), rng);
        let outcome = episode.step(CartpoleAction::from_index(a))?;
        total += outcome.reward;
        visited.push(obs);
        let next_obs = outcome.state.observation();
        let transition = Transition {
            state: obs.into(),
            action: one_hot(a, 2),
            reward: outcome.reward,
            next_state: next_obs.into(),
            terminal: outcome.failed,
        };
        let next_action = if outcome.failed {
            alloc::vec![0.0, 0.0]
        } else {
            let p = actor.forward(&Tensor::vector(next_obs.into()))?;
            one_hot(sample_categorical(p.data(), rng), 2)
        };
        let trace = (!history.is_empty())
            .then(|| build_rl_trace(history, cfg.trace_len))
            .transpose()?;
        push_bounded(history, transition.clone(), cfg.trace_len);
        if let Some(trace) = trace {
            samples.push(TdSample {
                transition,
                next_action,
                trace,
                next_trace: build_rl_trace(history, cfg.trace_len)?,
            });
        }
        if outcome.terminal {
            *episode = CartpoleEpisode::new(episode.task, rng);
        }
        *interactions += 1;
    }
    let z = actor_embedding(mc, &build_rl_trace(history, cfg.trace_len)?, cfg)?;
    let rows: Vec<&[f64]> = visited.iter().map(|s| s.as_slice()).collect();
    let states = Tensor::from_rows(&rows)?;
    let probs = actor.forward(&states)?;
    let mut actions = Vec::with_capacity(states.len() / 2);
    for i in 0..states.rows() {
        actions.extend(one_hot(sample_categorical(probs.row(i), rng), 2));
    }
    let actions = Tensor::matrix(states.rows(), 2, actions)?;
    let loss = discrete_update(actor, mc, &states, &actions, &z, cfg)?;
    Ok(ActorOutcome {
        loss,
        reward: total / n.max(1) as f64,
        critic: CriticPart::Td(samples),
    })
}

