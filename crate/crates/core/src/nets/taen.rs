use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::lstm::{LstmCell, LstmState};
use crate::autodiff::{Binding, ParamSet, Tape, Tensor, Var};
use crate::metacritic::{LearningTrace, TaskEmbedding};
use crate::rng::Rng;
use crate::{Error, Result};

pub const TAEN_HIDDEN: usize = 30;

/// Task-actor encoder: one-layer LSTM over a learning trace, final hidden
/// state mapped densely to a 3-d embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEncoder {
    pub params: ParamSet,
    cell: LstmCell,
}

impl TaskEncoder {
    /// Encoder for traces with the given state and action widths.
    pub fn new(state_dim: usize, action_dim: usize, rng: &mut Rng) -> Self {
        Self::build(state_dim + action_dim + 1, Some(rng))
    }

    /// All weights zero (forget-gate bias still +1); encodes every trace to 0.
    pub fn zeroed(state_dim: usize, action_dim: usize) -> Self {
        Self::build(state_dim + action_dim + 1, None)
    }

    fn build(input: usize, mut rng: Option<&mut Rng>) -> Self {
        let cell = LstmCell {
            input,
            hidden: TAEN_HIDDEN,
            offset: 0,
        };
        let mut params = ParamSet::new();
        cell.init_params(&mut params, "lstm", rng.as_deref_mut())
            .expect("fresh set");
        let w = match rng {
            Some(r) => super::glorot(TAEN_HIDDEN, TaskEmbedding::DIM, TAEN_HIDDEN, TaskEmbedding::DIM, r),
            None => Tensor::zeros(&[TAEN_HIDDEN, TaskEmbedding::DIM]),
        };
        params.insert("out.w", w).expect("fresh set");
        params
            .insert("out.b", Tensor::zeros(&[TaskEmbedding::DIM]))
            .expect("fresh set");
        TaskEncoder { params, cell }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let layout_ok = params.len() == 5
            && params.value(1).dims() == (TAEN_HIDDEN, 4 * TAEN_HIDDEN)
            && params.value(3).dims() == (TAEN_HIDDEN, TaskEmbedding::DIM);
        if !layout_ok {
            return Err(Error::invalid("parameters do not describe a task encoder"));
        }
        let input = params.value(0).rows();
        Ok(TaskEncoder {
            params,
            cell: LstmCell {
                input,
                hidden: TAEN_HIDDEN,
                offset: 0,
            },
        })
    }

    /// Width of one trace triplet.
    pub fn input_width(&self) -> usize {
        self.cell.input
    }

    pub fn cell(&self) -> LstmCell {
        self.cell
    }

    fn check(&self, trace: &LearningTrace) -> Result<()> {
        if trace.is_empty() {
            return Err(Error::invalid("cannot encode an empty learning trace"));
        }
        if trace.width() != self.cell.input {
            return Err(Error::shape("taen input", &[self.cell.input], &[trace.width()]));
        }
        Ok(())
    }

    /// Per-step inputs for a group of equal-length traces.
    fn step_inputs(traces: &[&LearningTrace], members: &[usize]) -> Result<Vec<Tensor>> {
        let len = traces[members[0]].len();
        (0..len)
            .map(|t| {
                let rows: Vec<&[f64]> = members.iter().map(|&m| traces[m].row(t)).collect();
                Tensor::from_rows(&rows)
            })
            .collect()
    }

    fn groups(&self, traces: &[&LearningTrace]) -> Result<BTreeMap<usize, Vec<usize>>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, t) in traces.iter().enumerate() {
            self.check(t)?;
            groups.entry(t.len()).or_default().push(i);
        }
        Ok(groups)
    }

    pub fn encode(&self, trace: &LearningTrace) -> Result<TaskEmbedding> {
        Ok(self.encode_batch(&[trace])?[0])
    }

    /// Encodes each trace independently; equal-length traces share matrix
    /// products.
    pub fn encode_batch(&self, traces: &[&LearningTrace]) -> Result<Vec<TaskEmbedding>> {
        let mut out = alloc::vec![TaskEmbedding([0.0; 3]); traces.len()];
        for members in self.groups(traces)?.values() {
            let steps = Self::step_inputs(traces, members)?;
            let LstmState { h, .. } = self.cell.run(&self.params, &steps)?;
            let z = h.matmul(self.params.value(3))?.add_row(self.params.value(4))?;
            for (row, &m) in members.iter().enumerate() {
                out[m] = TaskEmbedding::from_slice(z.row(row))?;
            }
        }
        Ok(out)
    }

    /// Differentiable encoding of every trace, one row of `z` per trace in
    /// input order.
    pub fn encode_on_tape(&self, tape: &mut Tape, binding: &Binding, traces: &[&LearningTrace]) -> Result<Var> {
        let groups = self.groups(traces)?;
        let mut parts = Vec::with_capacity(groups.len());
        let mut order = Vec::with_capacity(traces.len());
        for members in groups.values() {
            let steps = Self::step_inputs(traces, members)?;
            let h = self.cell.run_on_tape(tape, binding, &steps)?;
            let z = tape.matmul(h, binding.var(3))?;
            parts.push(tape.add_bias(z, binding.var(4))?);
            order.extend_from_slice(members);
        }
        let stacked = if parts.len() == 1 {
            parts[0]
        } else {
            tape.stack_rows(&parts)?
        };
        if order.iter().enumerate().all(|(i, &m)| i == m) {
            return Ok(stacked);
        }
        let mut position = alloc::vec![0; order.len()];
        for (row, &m) in order.iter().enumerate() {
            position[m] = row;
        }
        tape.gather_rows(stacked, &position)
    }
}
