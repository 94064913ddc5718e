use alloc::vec;

use super::{layer_widths, mlp_eval, mlp_on_tape, mlp_params};
use crate::autodiff::{Binding, ParamSet, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

pub const ACTOR_HIDDEN: usize = 40;

/// Output head of an actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorHead {
    /// Unbounded linear output of the given width (regression target or
    /// continuous action).
    Linear(usize),
    /// Categorical distribution over this many discrete actions.
    Softmax(usize),
}

impl ActorHead {
    pub fn width(self) -> usize {
        match self {
            ActorHead::Linear(n) | ActorHead::Softmax(n) => n,
        }
    }
}

/// Task-specific actor: MLP with two hidden ReLU layers of 40 units.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub params: ParamSet,
    input: usize,
    head: ActorHead,
}

impl ActorNet {
    pub fn new(input: usize, head: ActorHead, rng: &mut Rng) -> Self {
        ActorNet {
            params: mlp_params(&[input, ACTOR_HIDDEN, ACTOR_HIDDEN, head.width()], Some(rng)),
            input,
            head,
        }
    }

    /// All weights and biases zero.
    pub fn zeroed(input: usize, head: ActorHead) -> Self {
        ActorNet {
            params: mlp_params(&[input, ACTOR_HIDDEN, ACTOR_HIDDEN, head.width()], None),
            input,
            head,
        }
    }

    /// Rebuilds an actor around loaded parameters, checking the layout.
    pub fn from_params(params: ParamSet, head: ActorHead) -> Result<Self> {
        let w = layer_widths(&params);
        if params.len() != 6 || w[1] != ACTOR_HIDDEN || w[2] != ACTOR_HIDDEN || w[3] != head.width() {
            return Err(Error::invalid("parameters do not describe an actor network"));
        }
        Ok(ActorNet {
            input: w[0],
            params,
            head,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input
    }

    pub fn head(&self) -> ActorHead {
        self.head
    }

    /// Re-initialises the output layer.
    pub fn reset_output_layer(&mut self, rng: &mut Rng) {
        let w = self.head.width();
        let fresh = super::glorot(ACTOR_HIDDEN, w, ACTOR_HIDDEN, w, rng);
        self.params.set_value("l3.w", fresh).expect("layout");
        self.params.set_value("l3.b", Tensor::zeros(&[w])).expect("layout");
    }

    fn check(&self, states: &Tensor) -> Result<()> {
        if states.cols() != self.input {
            return Err(Error::shape("actor input", &[self.input], states.shape()));
        }
        Ok(())
    }

    /// Pre-activation output on the tape: the action for a linear head, the
    /// logits for a softmax head.
    pub fn output_on_tape(&self, tape: &mut Tape, binding: &Binding, states: Var) -> Result<Var> {
        self.check(tape.value(states))?;
        mlp_on_tape(tape, binding, states)
    }

    /// Action (linear head) or action probabilities (softmax head) on the tape.
    pub fn act_on_tape(&self, tape: &mut Tape, binding: &Binding, states: Var) -> Result<Var> {
        let out = self.output_on_tape(tape, binding, states)?;
        match self.head {
            ActorHead::Linear(_) => Ok(out),
            ActorHead::Softmax(_) => tape.softmax(out),
        }
    }

    /// One row per state: the action, or a probability vector.
    pub fn forward(&self, states: &Tensor) -> Result<Tensor> {
        self.check(states)?;
        let out = mlp_eval(&self.params, states)?;
        let out = match self.head {
            ActorHead::Linear(_) => out,
            ActorHead::Softmax(_) => out.softmax(),
        };
        if !out.is_finite() {
            return Err(Error::non_finite("actor output"));
        }
        Ok(out)
    }

    /// Scalar prediction for a single scalar input.
    pub fn predict_scalar(&self, x: f64) -> Result<f64> {
        self.forward(&Tensor::matrix(1, 1, vec![x])?)?.item()
    }
}
