use alloc::vec::Vec;

use crate::autodiff::{Binding, ParamSet, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::Result;

/// Hidden and cell state for a batch of sequences, one row each.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        LstmState {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }
}

/// Standard LSTM cell without peepholes; gate blocks ordered `i, f, g, o`.
///
/// Parameters live at `offset..offset + 3` of the owning set:
/// `wx (input x 4H)`, `wh (H x 4H)`, `b (4H)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    pub offset: usize,
}

/// Gate activations of one step, kept for inspection.
#[derive(Debug, Clone)]
pub struct LstmGates {
    pub input: Tensor,
    pub forget: Tensor,
    pub candidate: Tensor,
    pub output: Tensor,
}

impl LstmCell {
    /// Adds `prefix.wx`, `prefix.wh`, `prefix.b` to `params`. The forget-gate
    /// bias starts at +1.
    pub fn init_params(&self, params: &mut ParamSet, prefix: &str, rng: Option<&mut Rng>) -> Result<()> {
        let h = self.hidden;
        let (wx, wh) = match rng {
            Some(rng) => (
                super::glorot(self.input, 4 * h, self.input, h, rng),
                super::glorot(h, 4 * h, h, h, rng),
            ),
            None => (Tensor::zeros(&[self.input, 4 * h]), Tensor::zeros(&[h, 4 * h])),
        };
        let mut b = Tensor::zeros(&[4 * h]);
        b.data_mut()[h..2 * h].fill(1.0);
        params.insert(alloc::format!("{prefix}.wx"), wx)?;
        params.insert(alloc::format!("{prefix}.wh"), wh)?;
        params.insert(alloc::format!("{prefix}.b"), b)?;
        Ok(())
    }

    /// One step on the tape. `x` is `batch x input`.
    pub fn step_on_tape(&self, tape: &mut Tape, binding: &Binding, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hs = self.hidden;
        let xw = tape.matmul(x, binding.var(self.offset))?;
        let hw = tape.matmul(h, binding.var(self.offset + 1))?;
        let pre = tape.add(xw, hw)?;
        let pre = tape.add_bias(pre, binding.var(self.offset + 2))?;
        let i = tape.slice(pre, 0, hs)?;
        let f = tape.slice(pre, hs, hs)?;
        let g = tape.slice(pre, 2 * hs, hs)?;
        let o = tape.slice(pre, 3 * hs, hs)?;
        let i = tape.sigmoid(i)?;
        let f = tape.sigmoid(f)?;
        let g = tape.tanh(g)?;
        let o = tape.sigmoid(o)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next)?;
        let h_next = tape.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// One step without recording, returning the gates as well.
    pub fn step_with_gates(&self, params: &ParamSet, x: &Tensor, state: &LstmState) -> Result<(LstmState, LstmGates)> {
        let hs = self.hidden;
        let pre = x
            .matmul(params.value(self.offset))?
            .add(&state.h.matmul(params.value(self.offset + 1))?)?
            .add_row(params.value(self.offset + 2))?;
        let gates = LstmGates {
            input: pre.slice_cols(0, hs)?.sigmoid(),
            forget: pre.slice_cols(hs, hs)?.sigmoid(),
            candidate: pre.slice_cols(2 * hs, hs)?.tanh(),
            output: pre.slice_cols(3 * hs, hs)?.sigmoid(),
        };
        let c = gates
            .forget
            .mul(&state.c)?
            .add(&gates.input.mul(&gates.candidate)?)?;
        let h = gates.output.mul(&c.tanh())?;
        Ok((LstmState { h, c }, gates))
    }

    pub fn step(&self, params: &ParamSet, x: &Tensor, state: &LstmState) -> Result<LstmState> {
        Ok(self.step_with_gates(params, x, state)?.0)
    }

    /// Runs a batch of equal-length sequences given as per-step inputs.
    pub fn run(&self, params: &ParamSet, steps: &[Tensor]) -> Result<LstmState> {
        let batch = steps.first().map_or(0, |s| s.rows());
        let mut state = LstmState::zeros(batch, self.hidden);
        for x in steps {
            state = self.step(params, x, &state)?;
        }
        Ok(state)
    }

    pub(crate) fn run_on_tape(&self, tape: &mut Tape, binding: &Binding, steps: &[Tensor]) -> Result<Var> {
        let batch = steps.first().map_or(0, |s| s.rows());
        let mut h = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut c = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let inputs: Vec<Var> = steps.iter().map(|s| tape.constant(s.clone())).collect();
        for x in inputs {
            (h, c) = self.step_on_tape(tape, binding, x, h, c)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    #[test]
    fn gates_stay_in_range() {
        let cell = LstmCell {
            input: 3,
            hidden: 30,
            offset: 0,
        };
        let mut rng = seeded(11);
        let mut ps = ParamSet::new();
        cell.init_params(&mut ps, "lstm", Some(&mut rng)).unwrap();
        let mut state = LstmState::zeros(4, 30);
        for _ in 0..6 {
            let x = Tensor::matrix(4, 3, (0..12).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let (next, g) = cell.step_with_gates(&ps, &x, &state).unwrap();
            for t in [&g.input, &g.forget, &g.output] {
                assert!(t.data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert!(g.candidate.data().iter().all(|&v| v > -1.0 && v < 1.0));
            assert!(next.h.data().iter().all(|&v| v > -1.0 && v < 1.0));
            state = next;
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let cell = LstmCell {
            input: 2,
            hidden: 5,
            offset: 0,
        };
        let mut ps = ParamSet::new();
        cell.init_params(&mut ps, "lstm", None).unwrap();
        let b = ps.value(2).data();
        assert!(b[5..10].iter().all(|&v| v == 1.0));
        assert!(b[..5].iter().chain(&b[10..]).all(|&v| v == 0.0));
    }
}
