//! Parametrised task families: sinusoid/linear regression, Dirichlet-coupled
//! Bernoulli bandits, and cartpole with a variable pole length.

mod bandit;
mod cartpole;
mod regression;

pub use bandit::{bandit_pull, bandit_value, sample_bandit, BanditTask, BANDIT_STATE};
pub use cartpole::{
    cartpole_reset, cartpole_step, CartpoleAction, CartpoleEpisode, CartpoleState, CartpoleTask, StepOutcome,
    MAX_EPISODE_STEPS, POLE_LENGTH_RANGE,
};
pub use regression::{
    regression_eval, sample_regression_task, sample_shots, RegressionTask, AMPLITUDE_RANGE, INPUT_RANGE,
    LINEAR_RANGE, PHASE_RANGE,
};

use alloc::vec::Vec;

/// One task instance.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec {
    Regression(RegressionTask),
    Bandit(BanditTask),
    Cartpole(CartpoleTask),
}

impl TaskSpec {
    /// Width of the state the actor and critic see.
    pub fn state_dim(&self) -> usize {
        match self {
            TaskSpec::Regression(_) => 1,
            TaskSpec::Bandit(_) => 1,
            TaskSpec::Cartpole(_) => 4,
        }
    }

    /// Width of the action: 1 for regression, one-hot width otherwise.
    pub fn action_dim(&self) -> usize {
        match self {
            TaskSpec::Regression(_) => 1,
            TaskSpec::Bandit(b) => b.arms(),
            TaskSpec::Cartpole(_) => 2,
        }
    }
}

/// A labelled supervised example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shot {
    pub x: f64,
    pub y: f64,
}

/// One environment interaction. A supervised shot is the one-step case.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// No bootstrapping from `next_state`.
    pub terminal: bool,
}

/// One-hot encoding of `index` among `n` choices.
pub fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = alloc::vec![0.0; n];
    v[index] = 1.0;
    v
}
