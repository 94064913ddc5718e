//! The three fixed architectures: actor MLP, task-actor encoder (LSTM plus a
//! dense read-out), and the meta-value network.

mod actor;
mod lstm;
mod mvn;
mod taen;

pub use actor::{ActorHead, ActorNet, ACTOR_HIDDEN};
pub use lstm::{LstmCell, LstmGates, LstmState};
pub use mvn::{MetaValueNet, MVN_HIDDEN};
pub use taen::{TaskEncoder, TAEN_HIDDEN};

use alloc::format;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::autodiff::{Binding, ParamSet, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::Result;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(&[rows, cols], data).expect("sizes agree")
}

/// Dense ReLU stack parameters: `l{i}.w` is `(in x out)`, `l{i}.b` is `out`.
/// The last layer is linear.
pub(crate) fn mlp_params(widths: &[usize], rng: Option<&mut Rng>) -> ParamSet {
    let mut ps = ParamSet::new();
    let mut rng = rng;
    for (i, w) in widths.windows(2).enumerate() {
        let (fi, fo) = (w[0], w[1]);
        let weight = match rng.as_deref_mut() {
            Some(r) => glorot(fi, fo, fi, fo, r),
            None => Tensor::zeros(&[fi, fo]),
        };
        ps.insert(format!("l{}.w", i + 1), weight).expect("unique");
        ps.insert(format!("l{}.b", i + 1), Tensor::zeros(&[fo]))
            .expect("unique");
    }
    ps
}

pub(crate) fn mlp_on_tape(tape: &mut Tape, binding: &Binding, x: Var) -> Result<Var> {
    let layers = binding.vars().len() / 2;
    let mut h = x;
    for l in 0..layers {
        let pre = tape.matmul(h, binding.var(2 * l))?;
        h = tape.add_bias(pre, binding.var(2 * l + 1))?;
        if l + 1 < layers {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

pub(crate) fn mlp_eval(params: &ParamSet, x: &Tensor) -> Result<Tensor> {
    let layers = params.len() / 2;
    let mut h = x.clone();
    for l in 0..layers {
        h = h.matmul(params.value(2 * l))?.add_row(params.value(2 * l + 1))?;
        if l + 1 < layers {
            h = h.relu();
        }
    }
    Ok(h)
}

pub(crate) fn layer_widths(params: &ParamSet) -> Vec<usize> {
    let mut w: Vec<usize> = Vec::new();
    for l in 0..params.len() / 2 {
        let dims = params.value(2 * l).dims();
        if l == 0 {
            w.push(dims.0);
        }
        w.push(dims.1);
    }
    w
}
