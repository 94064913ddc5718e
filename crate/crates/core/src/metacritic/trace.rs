use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::tasks::{Shot, Transition};
use crate::{Error, Result};

/// Ordered `(state, action, reward)` triplets describing both a task (through
/// the rewards) and the actor acting on it (through its state-action choices).
#[derive(Debug, Clone, PartialEq)]
pub struct LearningTrace {
    state_dim: usize,
    action_dim: usize,
    rows: Vec<f64>,
}

impl LearningTrace {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        LearningTrace {
            state_dim,
            action_dim,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, state: &[f64], action: &[f64], reward: f64) -> Result<()> {
        if state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::shape(
                "trace triplet",
                &[self.state_dim, self.action_dim],
                &[state.len(), action.len()],
            ));
        }
        self.rows.extend_from_slice(state);
        self.rows.extend_from_slice(action);
        self.rows.push(reward);
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Width of one flattened triplet.
    pub fn width(&self) -> usize {
        self.state_dim + self.action_dim + 1
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Flattened triplet `i` as `state ‖ action ‖ reward`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.rows[i * w..(i + 1) * w]
    }

    pub fn triplet(&self, i: usize) -> (&[f64], &[f64], f64) {
        let row = self.row(i);
        let (s, rest) = row.split_at(self.state_dim);
        let (a, r) = rest.split_at(self.action_dim);
        (s, a, r[0])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64], f64)> {
        (0..self.len()).map(move |i| self.triplet(i))
    }
}

/// Embedding of a task-actor pair, produced by the encoder network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskEmbedding(pub [f64; 3]);

impl TaskEmbedding {
    pub const DIM: usize = 3;

    pub fn as_tensor(&self) -> Tensor {
        Tensor::vector(self.0.into())
    }

    pub fn from_slice(z: &[f64]) -> Result<Self> {
        match z {
            [a, b, c] if z.iter().all(|v| v.is_finite()) => Ok(TaskEmbedding([*a, *b, *c])),
            [_, _, _] => Err(Error::non_finite("task embedding")),
            _ => Err(Error::shape("task embedding", &[3], &[z.len()])),
        }
    }
}

/// Trace for supervised tasks: `(x, y, 0)` per shot, in order.
///
/// The reward slot is always zero: the encoder is told the actor would
/// predict every label exactly.
pub fn build_sl_trace(shots: &[Shot]) -> Result<LearningTrace> {
    if shots.is_empty() {
        return Err(Error::invalid("a supervised trace needs at least one shot"));
    }
    let mut trace = LearningTrace::new(1, 1);
    for s in shots {
        trace.push(&[s.x], &[s.y], 0.0)?;
    }
    Ok(trace)
}

/// Trace of the most recent `k` transitions, oldest first.
pub fn build_rl_trace(history: &[Transition], k: usize) -> Result<LearningTrace> {
    let first = history
        .first()
        .ok_or_else(|| Error::invalid("an RL trace needs at least one transition"))?;
    if k == 0 {
        return Err(Error::invalid("trace length k must be positive"));
    }
    let mut trace = LearningTrace::new(first.state.len(), first.action.len());
    let start = history.len().saturating_sub(k);
    for t in &history[start..] {
        trace.push(&t.state, &t.action, t.reward)?;
    }
    Ok(trace)
}
