//! The meta-critic: a shared meta-value network plus task-actor encoder that
//! supervises per-task actors, with the meta-training and meta-testing loops
//! for supervised regression, bandits and cartpole.

mod testing;
mod trace;
mod train;
pub(crate) mod updates;

pub use testing::{
    cartpole_offline, meta_test, meta_test_bandit, meta_test_cartpole, meta_test_pretrained, meta_test_semisupervised, mse,
    sampled_game,
};
pub(crate) use testing::fit_mse;
pub use trace::{build_rl_trace, build_sl_trace, LearningTrace, TaskEmbedding};
pub use train::{meta_train, meta_train_with, TaskPool, TaskSource, TrainEvent};
pub use updates::{
    actor_update_continuous, actor_update_discrete, actor_update_discrete_centered, critic_sl_update, critic_td_update, critic_update, CriticBatch,
    SlCriticBatch, TdSample,
};

use alloc::vec::Vec;
use rand::Rng as _;

use crate::autodiff::{OptimizerKind, Tensor};
use crate::nets::{MetaValueNet, TaskEncoder};
use crate::rng::Rng;
use crate::{Error, Result};

/// Shared critic: value network and task-actor encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaCritic {
    pub taen: TaskEncoder,
    pub mvn: MetaValueNet,
}

impl MetaCritic {
    pub fn new(state_dim: usize, action_dim: usize, rng: &mut Rng) -> Self {
        let taen = TaskEncoder::new(state_dim, action_dim, rng);
        let mvn = MetaValueNet::new(state_dim, action_dim, rng);
        MetaCritic { taen, mvn }
    }

    pub fn zero_grad(&mut self) {
        self.taen.params.zero_grad();
        self.mvn.params.zero_grad();
    }

    pub fn state_dim(&self) -> usize {
        self.mvn.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mvn.action_dim()
    }

    /// Combined checksum of both networks' values.
    pub fn checksum(&self) -> u64 {
        self.taen.params.checksum().rotate_left(1) ^ self.mvn.params.checksum()
    }

    pub fn embed(&self, trace: &LearningTrace) -> Result<TaskEmbedding> {
        self.taen.encode(trace)
    }
}

/// Meta-training and meta-testing hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    /// Discount for bootstrapped critic targets.
    pub gamma: f64,
    /// Number of most recent transitions in an RL trace.
    pub trace_len: usize,
    /// Tasks (and actors) per meta-episode.
    pub tasks_per_episode: usize,
    /// Tasks whose actors are updated before each critic update.
    pub task_minibatch: usize,
    pub inner_steps: usize,
    pub meta_episodes: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Inclusive range of trace lengths drawn per step during supervised
    /// meta-training.
    pub train_shots: (usize, usize),
    /// Samples (inputs, or sampled actions) per actor update.
    pub batch_size: usize,
    /// Standard deviation of Gaussian noise added to supervised predictions
    /// before they are scored for the critic.
    pub action_noise: f64,
    /// Labelled samples (supervised) or interactions (RL) available to one
    /// task within an episode.
    pub sample_budget: usize,
    /// Environment interactions per task per inner step.
    pub interactions_per_step: usize,
    /// Supervised: actor updates at meta-test time. RL: actor updates after
    /// each pull or game.
    pub test_steps: usize,
    pub lr_test: f64,
    /// Plain supervised steps before critic-driven meta-testing.
    pub pretrain_steps: usize,
    /// Keep the first episode's tasks and actors for the whole run.
    pub persistent_actors: bool,
    /// Subtract the critic's value of the current policy from discrete
    /// actor-update weights.
    pub centered: bool,
    /// Feed a zero embedding instead of the encoder output (ablation).
    pub ablate_embedding: bool,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            trace_len: 10,
            tasks_per_episode: 8,
            task_minibatch: 8,
            inner_steps: 100,
            meta_episodes: 10,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            train_shots: (4, 8),
            batch_size: 32,
            action_noise: 0.0,
            sample_budget: 30_000,
            interactions_per_step: 1,
            test_steps: 100,
            lr_test: 1e-3,
            pretrain_steps: 0,
            persistent_actors: false,
            centered: true,
            ablate_embedding: false,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(alloc::format!("invalid training config: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.tasks_per_episode == 0 || self.task_minibatch == 0 || self.task_minibatch > self.tasks_per_episode {
            return bad("need 1 <= task_minibatch <= tasks_per_episode");
        }
        if self.trace_len == 0 || self.batch_size == 0 || self.interactions_per_step == 0 {
            return bad("trace_len, batch_size and interactions_per_step must be positive");
        }
        if self.train_shots.0 == 0 || self.train_shots.0 > self.train_shots.1 {
            return bad("train_shots must be a non-empty range of positive lengths");
        }
        if self.sample_budget == 0 {
            return bad("sample_budget must be positive");
        }
        if !(self.action_noise >= 0.0) {
            return bad("action_noise must be non-negative");
        }
        Ok(())
    }
}

/// Discrete actor update selected by `cfg.centered`.
pub(crate) fn discrete_update(
    actor: &mut crate::nets::ActorNet,
    mc: &MetaCritic,
    states: &Tensor,
    actions: &Tensor,
    z: &TaskEmbedding,
    cfg: &TrainConfig,
) -> Result<f64> {
    if cfg.centered {
        actor_update_discrete_centered(actor, mc, states, actions, z)
    } else {
        actor_update_discrete(actor, mc, states, actions, z)
    }
}

/// Draws an index from a probability vector.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `n` one-hot actions sampled from `probs`, as rows.
pub(crate) fn sample_actions(probs: &[f64], n: usize, rng: &mut Rng) -> Result<Tensor> {
    let width = probs.len();
    let mut data = Vec::with_capacity(n * width);
    for _ in 0..n {
        data.extend(crate::tasks::one_hot(sample_categorical(probs, rng), width));
    }
    Tensor::matrix(n, width, data)
}
