use alloc::vec::Vec;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use super::TaskSpec;
use crate::rng::Rng;
use crate::{Error, Result};

/// A bandit has no state; actors and critics see this constant instead.
pub const BANDIT_STATE: [f64; 1] = [1.0];

/// Bernoulli arms whose success probabilities sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditTask {
    pub probs: Vec<f64>,
}

impl BanditTask {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid("a bandit needs at least two arms"));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("arm probabilities must lie in [0, 1]"));
        }
        Ok(BanditTask { probs })
    }

    pub fn arms(&self) -> usize {
        self.probs.len()
    }

    pub fn best(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

/// Arm probabilities from a symmetric Dirichlet(1, ..., 1), drawn as
/// normalised unit-exponential variates.
pub fn sample_bandit(n_arms: usize, rng: &mut Rng) -> Result<TaskSpec> {
    if n_arms < 2 {
        return Err(Error::invalid("a bandit needs at least two arms"));
    }
    let draws: Vec<f64> = (0..n_arms).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    Ok(TaskSpec::Bandit(BanditTask {
        probs: draws.into_iter().map(|d| d / total).collect(),
    }))
}

/// Reward of one pull: 1 with the arm's probability, else 0.
pub fn bandit_pull(task: &BanditTask, arm: usize, rng: &mut Rng) -> Result<f64> {
    let p = *task
        .probs
        .get(arm)
        .ok_or_else(|| Error::invalid(alloc::format!("arm {arm} out of range for {} arms", task.arms())))?;
    Ok(if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// Expected reward of a stochastic policy.
pub fn bandit_value(task: &BanditTask, policy_probs: &[f64]) -> Result<f64> {
    if policy_probs.len() != task.arms() {
        return Err(Error::shape("bandit_value", &[task.arms()], &[policy_probs.len()]));
    }
    Ok(policy_probs.iter().zip(&task.probs).map(|(a, b)| a * b).sum())
}
