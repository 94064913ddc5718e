use super::{layer_widths, mlp_eval, mlp_on_tape, mlp_params};
use crate::autodiff::{Binding, ParamSet, Tape, Tensor, Var};
use crate::metacritic::TaskEmbedding;
use crate::rng::Rng;
use crate::{Error, Result};

pub const MVN_HIDDEN: usize = 80;

/// Meta-value network `Q(state, action, z)`: MLP with two hidden ReLU layers
/// of 80 units and a linear scalar output. Inputs are concatenated in the
/// order `state ‖ action ‖ z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaValueNet {
    pub params: ParamSet,
    state_dim: usize,
    action_dim: usize,
}

impl MetaValueNet {
    pub fn new(state_dim: usize, action_dim: usize, rng: &mut Rng) -> Self {
        MetaValueNet {
            params: mlp_params(&Self::widths(state_dim, action_dim), Some(rng)),
            state_dim,
            action_dim,
        }
    }

    pub fn zeroed(state_dim: usize, action_dim: usize) -> Self {
        MetaValueNet {
            params: mlp_params(&Self::widths(state_dim, action_dim), None),
            state_dim,
            action_dim,
        }
    }

    fn widths(s: usize, a: usize) -> [usize; 4] {
        [s + a + TaskEmbedding::DIM, MVN_HIDDEN, MVN_HIDDEN, 1]
    }

    pub fn from_params(params: ParamSet, state_dim: usize, action_dim: usize) -> Result<Self> {
        let w = layer_widths(&params);
        if params.len() != 6 || w != Self::widths(state_dim, action_dim) {
            return Err(Error::invalid("parameters do not describe a meta-value network"));
        }
        Ok(MetaValueNet {
            params,
            state_dim,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_width(&self) -> usize {
        self.state_dim + self.action_dim + TaskEmbedding::DIM
    }

    /// `Q` for each row of `states`, `actions` and `z` (all with equal row
    /// counts), as a column.
    pub fn q_on_tape(&self, tape: &mut Tape, binding: &Binding, states: Var, actions: Var, z: Var) -> Result<Var> {
        let input = tape.concat(&[states, actions, z])?;
        let width = tape.value(input).cols();
        if width != self.input_width() {
            return Err(Error::shape("mvn input", &[self.input_width()], &[width]));
        }
        mlp_on_tape(tape, binding, input)
    }

    pub fn q(&self, states: &Tensor, actions: &Tensor, z: &Tensor) -> Result<Tensor> {
        let input = Tensor::concat_cols(&[states, actions, z])?;
        if input.cols() != self.input_width() {
            return Err(Error::shape("mvn input", &[self.input_width()], &[input.cols()]));
        }
        mlp_eval(&self.params, &input)
    }

    /// Scalar value of a single state-action pair.
    pub fn value(&self, state: &[f64], action: &[f64], z: &TaskEmbedding) -> Result<f64> {
        self.q(
            &Tensor::vector(state.into()),
            &Tensor::vector(action.into()),
            &z.as_tensor(),
        )?
        .item()
    }
}
