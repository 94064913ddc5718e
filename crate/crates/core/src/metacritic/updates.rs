//! Single-step critic and actor updates. Each function computes a loss on a
//! fresh tape and *accumulates* gradients into the parameters it trains; the
//! caller zeroes gradients and applies the optimiser.

use alloc::vec::Vec;

use super::{LearningTrace, MetaCritic, TaskEmbedding};
use crate::autodiff::{Tape, Tensor, Var};
use crate::nets::{ActorHead, ActorNet};
use crate::tasks::Transition;
use crate::{Error, Result};

/// One bootstrapped critic sample.
#[derive(Debug, Clone)]
pub struct TdSample {
    pub transition: Transition,
    /// Action the task's current actor takes in `next_state`.
    pub next_action: Vec<f64>,
    /// Trace preceding `transition`.
    pub trace: LearningTrace,
    /// Trace preceding the successor step; unused for terminal transitions.
    pub next_trace: LearningTrace,
}

/// Supervised critic samples for one task, all sharing the task's trace.
#[derive(Debug, Clone)]
pub struct SlCriticBatch {
    pub trace: LearningTrace,
    pub inputs: Vec<f64>,
    pub predictions: Vec<f64>,
    /// `-loss(prediction, label)`, computed on the environment side.
    pub rewards: Vec<f64>,
}

/// Critic data for one update.
#[derive(Debug, Clone)]
pub enum CriticBatch {
    Td(Vec<TdSample>),
    Sl(Vec<SlCriticBatch>),
}

fn rows_of(vectors: impl Iterator<Item = Vec<f64>>) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = vectors.collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Tensor::from_rows(&refs)
}

/// Dispatches to the TD or supervised critic update. The supervised update
/// ignores `gamma`.
pub fn critic_update(mc: &mut MetaCritic, batch: &CriticBatch, gamma: f64) -> Result<f64> {
    match batch {
        CriticBatch::Td(samples) => critic_td_update(mc, samples, gamma),
        CriticBatch::Sl(batches) => critic_sl_update(mc, batches),
    }
}

/// Semi-gradient temporal-difference update of the MVN and the TAEN.
///
/// Loss is the batch mean of `(Q(s,a,z) - r - gamma * Q(s',a',z'))^2`; the
/// bootstrap term is evaluated without recording, so it contributes no
/// gradient. Terminal transitions regress onto `r` alone.
pub fn critic_td_update(mc: &mut MetaCritic, batch: &[TdSample], gamma: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty critic batch"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("discount must lie in [0, 1]"));
    }
    let targets = td_targets(mc, batch, gamma)?;

    let mut tape = Tape::new();
    let mvn_b = mc.mvn.params.bind(&mut tape);
    let taen_b = mc.taen.params.bind(&mut tape);
    let traces: Vec<&LearningTrace> = batch.iter().map(|s| &s.trace).collect();
    let z = mc.taen.encode_on_tape(&mut tape, &taen_b, &traces)?;
    let states = tape.constant(rows_of(batch.iter().map(|s| s.transition.state.clone()))?);
    let actions = tape.constant(rows_of(batch.iter().map(|s| s.transition.action.clone()))?);
    let q = mc.mvn.q_on_tape(&mut tape, &mvn_b, states, actions, z)?;
    let target = tape.constant(Tensor::matrix(batch.len(), 1, targets)?);
    let loss = squared_error(&mut tape, q, target)?;
    let grads = tape.backward(loss)?;
    mc.mvn.params.accumulate(&grads, &mvn_b)?;
    mc.taen.params.accumulate(&grads, &taen_b)?;
    tape.value(loss).item()
}

pub(crate) fn td_targets(mc: &MetaCritic, batch: &[TdSample], gamma: f64) -> Result<Vec<f64>> {
    let mut targets: Vec<f64> = batch.iter().map(|s| s.transition.reward).collect();
    let live: Vec<usize> = (0..batch.len())
        .filter(|&i| !batch[i].transition.terminal && gamma != 0.0)
        .collect();
    if live.is_empty() {
        return Ok(targets);
    }
    let traces: Vec<&LearningTrace> = live.iter().map(|&i| &batch[i].next_trace).collect();
    let z_next = mc.taen.encode_batch(&traces)?;
    let states = rows_of(live.iter().map(|&i| batch[i].transition.next_state.clone()))?;
    let actions = rows_of(live.iter().map(|&i| batch[i].next_action.clone()))?;
    let z = rows_of(z_next.iter().map(|z| z.0.into()))?;
    let q_next = mc.mvn.q(&states, &actions, &z)?;
    for (k, &i) in live.iter().enumerate() {
        targets[i] += gamma * q_next.data()[k];
    }
    Ok(targets)
}

fn squared_error(tape: &mut Tape, prediction: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(prediction, target)?;
    let sq = tape.square(diff)?;
    tape.mean(sq)
}

/// One-step-game critic update: the MVN regresses onto the immediate reward,
/// `mean (Q(x, y_hat, z) - r)^2`, with gradients into both MVN and TAEN.
pub fn critic_sl_update(mc: &mut MetaCritic, batches: &[SlCriticBatch]) -> Result<f64> {
    let mut rows = Vec::new();
    let (mut xs, mut ys, mut rs) = (Vec::new(), Vec::new(), Vec::new());
    for (i, b) in batches.iter().enumerate() {
        if b.inputs.len() != b.predictions.len() || b.inputs.len() != b.rewards.len() {
            return Err(Error::shape(
                "critic_sl_update",
                &[b.inputs.len()],
                &[b.predictions.len(), b.rewards.len()],
            ));
        }
        rows.extend(core::iter::repeat_n(i, b.inputs.len()));
        xs.extend_from_slice(&b.inputs);
        ys.extend_from_slice(&b.predictions);
        rs.extend_from_slice(&b.rewards);
    }
    if rows.is_empty() {
        return Err(Error::invalid("empty critic batch"));
    }
    let n = rows.len();
    let mut tape = Tape::new();
    let mvn_b = mc.mvn.params.bind(&mut tape);
    let taen_b = mc.taen.params.bind(&mut tape);
    let traces: Vec<&LearningTrace> = batches.iter().map(|b| &b.trace).collect();
    let z_tasks = mc.taen.encode_on_tape(&mut tape, &taen_b, &traces)?;
    let z = tape.gather_rows(z_tasks, &rows)?;
    let x = tape.constant(Tensor::matrix(n, 1, xs)?);
    let y_hat = tape.constant(Tensor::matrix(n, 1, ys)?);
    let q = mc.mvn.q_on_tape(&mut tape, &mvn_b, x, y_hat, z)?;
    let r = tape.constant(Tensor::matrix(n, 1, rs)?);
    let loss = squared_error(&mut tape, q, r)?;
    let grads = tape.backward(loss)?;
    mc.mvn.params.accumulate(&grads, &mvn_b)?;
    mc.taen.params.accumulate(&grads, &taen_b)?;
    tape.value(loss).item()
}

/// Recorded pieces of an actor objective, exposed for gradient inspection.
pub(crate) struct ActorObjective {
    pub tape: Tape,
    pub actor: crate::autodiff::Binding,
    #[cfg_attr(not(test), allow(dead_code))]
    pub z: Var,
    pub loss: Var,
}

/// `-mean Q(s, P(s), z)` with the critic and `z` held constant.
pub(crate) fn continuous_objective(actor: &ActorNet, mc: &MetaCritic, states: &Tensor, z: &TaskEmbedding) -> Result<ActorObjective> {
    if !matches!(actor.head(), ActorHead::Linear(_)) {
        return Err(Error::invalid("continuous actor update needs a linear head"));
    }
    let mut tape = Tape::new();
    let actor_b = actor.params.bind(&mut tape);
    let mvn_b = mc.mvn.params.bind_frozen(&mut tape);
    let s = tape.constant(states.clone());
    let a = actor.act_on_tape(&mut tape, &actor_b, s)?;
    let z_row = tape.constant(z.as_tensor());
    let z_rep = tape.repeat_rows(z_row, states.rows())?;
    let q = mc.mvn.q_on_tape(&mut tape, &mvn_b, s, a, z_rep)?;
    let mean_q = tape.mean(q)?;
    let loss = tape.neg(mean_q)?;
    Ok(ActorObjective {
        tape,
        actor: actor_b,
        z: z_row,
        loss,
    })
}

/// Deterministic-policy update: ascend the critic through its action input.
/// Returns the loss `-mean Q`.
pub fn actor_update_continuous(actor: &mut ActorNet, mc: &MetaCritic, states: &Tensor, z: &TaskEmbedding) -> Result<f64> {
    let obj = continuous_objective(actor, mc, states, z)?;
    let grads = obj.tape.backward(obj.loss)?;
    actor.params.accumulate(&grads, &obj.actor)?;
    obj.tape.value(obj.loss).item()
}

/// Per-row weights of the discrete objective: `Q(s, a, z)`, or with
/// `centered`, `Q(s, a, z) - sum_b o_b Q(s, b, z)`. Evaluated without
/// recording, so they are constants of the actor loss.
pub(crate) fn discrete_weights(
    actor: &ActorNet,
    mc: &MetaCritic,
    states: &Tensor,
    actions: &Tensor,
    z: &TaskEmbedding,
    centered: bool,
) -> Result<Tensor> {
    let ActorHead::Softmax(n) = actor.head() else {
        return Err(Error::invalid("discrete actor update needs a softmax head"));
    };
    if actions.dims() != (states.rows(), n) || !is_one_hot(actions) {
        return Err(Error::invalid("discrete actor update needs one-hot actions"));
    }
    let z_rows = z.as_tensor().repeat_rows(states.rows())?;
    let mut weights = mc.mvn.q(states, actions, &z_rows)?;
    if centered {
        let probs = actor.forward(states)?;
        for b in 0..n {
            let alt = Tensor::matrix(1, n, crate::tasks::one_hot(b, n))?.repeat_rows(states.rows())?;
            let q = mc.mvn.q(states, &alt, &z_rows)?;
            for (i, w) in weights.data_mut().iter_mut().enumerate() {
                *w -= probs.row(i)[b] * q.data()[i];
            }
        }
    }
    Ok(weights)
}

/// `mean CE(o, a) * w` for fixed per-row weights `w`.
pub(crate) fn weighted_ce_objective(
    actor: &ActorNet,
    states: &Tensor,
    actions: &Tensor,
    weights: Tensor,
    z: &TaskEmbedding,
) -> Result<ActorObjective> {
    let mut tape = Tape::new();
    let actor_b = actor.params.bind(&mut tape);
    let s = tape.constant(states.clone());
    let logits = actor.output_on_tape(&mut tape, &actor_b, s)?;
    let ce = tape.cross_entropy(logits, actions)?;
    let w = tape.constant(weights);
    let weighted = tape.mul(ce, w)?;
    let loss = tape.mean(weighted)?;
    let z = tape.constant(z.as_tensor());
    Ok(ActorObjective {
        tape,
        actor: actor_b,
        z,
        loss,
    })
}

pub(crate) fn discrete_objective(
    actor: &ActorNet,
    mc: &MetaCritic,
    states: &Tensor,
    actions: &Tensor,
    z: &TaskEmbedding,
    centered: bool,
) -> Result<ActorObjective> {
    let weights = discrete_weights(actor, mc, states, actions, z, centered)?;
    weighted_ce_objective(actor, states, actions, weights, z)
}

fn is_one_hot(actions: &Tensor) -> bool {
    (0..actions.rows()).all(|i| {
        let row = actions.row(i);
        row.iter().all(|&v| v == 0.0 || v == 1.0) && row.iter().sum::<f64>() == 1.0
    })
}

/// Actor-critic policy-gradient update for sampled one-hot `actions`.
/// Returns the loss.
pub fn actor_update_discrete(
    actor: &mut ActorNet,
    mc: &MetaCritic,
    states: &Tensor,
    actions: &Tensor,
    z: &TaskEmbedding,
) -> Result<f64> {
    discrete_step(actor, mc, states, actions, z, false)
}

/// As [`actor_update_discrete`], with the critic's value of the current
/// policy, `sum_b o_b Q(s, b, z)`, subtracted from each weight. Same expected
/// gradient, lower variance.
pub fn actor_update_discrete_centered(
    actor: &mut ActorNet,
    mc: &MetaCritic,
    states: &Tensor,
    actions: &Tensor,
    z: &TaskEmbedding,
) -> Result<f64> {
    discrete_step(actor, mc, states, actions, z, true)
}

fn discrete_step(
    actor: &mut ActorNet,
    mc: &MetaCritic,
    states: &Tensor,
    actions: &Tensor,
    z: &TaskEmbedding,
    centered: bool,
) -> Result<f64> {
    let obj = discrete_objective(actor, mc, states, actions, z, centered)?;
    let grads = obj.tape.backward(obj.loss)?;
    actor.params.accumulate(&grads, &obj.actor)?;
    obj.tape.value(obj.loss).item()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Optimizer;
    use crate::metacritic::{build_rl_trace, build_sl_trace};
    use crate::nets::MetaValueNet;
    use crate::rng::{seeded, Rng};
    use crate::tasks::{one_hot, Shot};
    use alloc::vec;
    use rand::Rng as _;

    fn transition(rng: &mut Rng, terminal: bool) -> Transition {
        let s: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s2: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        Transition {
            state: s,
            action: one_hot(rng.random_range(0..2), 2),
            reward: rng.random_range(0.0..1.0),
            next_state: s2,
            terminal,
        }
    }

    fn td_batch(rng: &mut Rng, n: usize) -> Vec<TdSample> {
        let history: Vec<Transition> = (0..12).map(|_| transition(rng, false)).collect();
        (0..n)
            .map(|i| TdSample {
                transition: transition(rng, i % 3 == 0),
                next_action: one_hot(rng.random_range(0..2), 2),
                trace: build_rl_trace(&history[..3 + i % 5], 10).unwrap(),
                next_trace: build_rl_trace(&history[..4 + i % 5], 10).unwrap(),
            })
            .collect()
    }

    fn sl_batches(rng: &mut Rng) -> Vec<SlCriticBatch> {
        (0..3)
            .map(|i| {
                let shots: Vec<Shot> = (0..2 + i)
                    .map(|_| Shot {
                        x: rng.random_range(-5.0..5.0),
                        y: rng.random_range(-5.0..5.0),
                    })
                    .collect();
                let inputs: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
                let predictions: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
                let rewards = predictions.iter().map(|p| -p * p).collect();
                SlCriticBatch {
                    trace: build_sl_trace(&shots).unwrap(),
                    inputs,
                    predictions,
                    rewards,
                }
            })
            .collect()
    }

    #[test]
    fn continuous_update_touches_only_the_actor() {
        let mut rng = seeded(1);
        let mut mc = MetaCritic::new(1, 1, &mut rng);
        let mut actor = ActorNet::new(1, ActorHead::Linear(1), &mut rng);
        let states = Tensor::matrix(5, 1, vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        let z = TaskEmbedding([0.3, -0.2, 0.1]);
        mc.zero_grad();
        let obj = continuous_objective(&actor, &mc, &states, &z).unwrap();
        let grads = obj.tape.backward(obj.loss).unwrap();
        assert!(grads.get(obj.z).is_none());
        actor_update_continuous(&mut actor, &mc, &states, &z).unwrap();
        assert!(mc.mvn.params.grads_are_zero() && mc.taen.params.grads_are_zero());
        assert!(!actor.params.grads_are_zero());
    }

    #[test]
    fn discrete_update_touches_only_the_actor() {
        let mut rng = seeded(2);
        let mc = MetaCritic::new(4, 2, &mut rng);
        let mut actor = ActorNet::new(4, ActorHead::Softmax(2), &mut rng);
        let states = Tensor::matrix(3, 4, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let actions = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let z = TaskEmbedding([0.1, 0.2, 0.3]);
        let obj = discrete_objective(&actor, &mc, &states, &actions, &z, true).unwrap();
        let grads = obj.tape.backward(obj.loss).unwrap();
        assert!(grads.get(obj.z).is_none());
        actor_update_discrete(&mut actor, &mc, &states, &actions, &z).unwrap();
        assert!(mc.mvn.params.grads_are_zero() && mc.taen.params.grads_are_zero());
    }

    #[test]
    fn action_independent_critic_gives_zero_actor_grad() {
        let mut rng = seeded(3);
        let mut mc = MetaCritic::new(1, 1, &mut rng);
        mc.mvn = MetaValueNet::zeroed(1, 1);
        mc.mvn.params.set_value("l3.b", Tensor::vector(vec![2.5])).unwrap();
        let mut actor = ActorNet::new(1, ActorHead::Linear(1), &mut rng);
        let states = Tensor::matrix(2, 1, vec![0.5, -0.5]).unwrap();
        actor_update_continuous(&mut actor, &mc, &states, &TaskEmbedding([0.0; 3])).unwrap();
        assert!(actor.params.grads_are_zero());

        mc.mvn = MetaValueNet::zeroed(4, 2);
        let mut actor = ActorNet::new(4, ActorHead::Softmax(2), &mut rng);
        let states = Tensor::matrix(1, 4, vec![0.1; 4]).unwrap();
        let actions = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        actor_update_discrete(&mut actor, &mc, &states, &actions, &TaskEmbedding([0.0; 3])).unwrap();
        assert!(actor.params.grads_are_zero());
    }

    #[test]
    fn sl_critic_update_ignores_gamma() {
        let mut rng = seeded(4);
        let base = MetaCritic::new(1, 1, &mut rng);
        let batch = CriticBatch::Sl(sl_batches(&mut rng));
        let mut a = base.clone();
        let mut b = base.clone();
        let la = critic_update(&mut a, &batch, 0.0).unwrap();
        let lb = critic_update(&mut b, &batch, 0.9).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
        assert_eq!(a, b);
        assert!(!a.mvn.params.grads_are_zero() && !a.taen.params.grads_are_zero());
    }

    #[test]
    fn terminal_target_is_reward_alone() {
        let mut rng = seeded(5);
        let mc = MetaCritic::new(4, 2, &mut rng);
        let mut batch = td_batch(&mut rng, 4);
        batch[1].transition.terminal = true;
        let t = td_targets(&mc, &batch, 0.9).unwrap();
        assert_eq!(t[1], batch[1].transition.reward);
        assert_ne!(t[2], batch[2].transition.reward);
        let t0 = td_targets(&mc, &batch, 0.0).unwrap();
        for (v, s) in t0.iter().zip(&batch) {
            assert_eq!(*v, s.transition.reward);
        }
    }

    #[test]
    fn small_continuous_step_raises_mean_q() {
        let mut passed = 0;
        for seed in 0..20 {
            let mut rng = seeded(100 + seed);
            let mc = MetaCritic::new(1, 1, &mut rng);
            let mut actor = ActorNet::new(1, ActorHead::Linear(1), &mut rng);
            let xs: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
            let states = Tensor::matrix(16, 1, xs).unwrap();
            let z = TaskEmbedding([rng.random(), rng.random(), rng.random()]);
            let before = -actor_update_continuous(&mut actor, &mc, &states, &z).unwrap();
            Optimizer::sgd(1e-4).step(&mut actor.params).unwrap();
            actor.params.zero_grad();
            let after = -continuous_objective(&actor, &mc, &states, &z)
                .and_then(|o| o.tape.value(o.loss).item())
                .unwrap();
            if after > before {
                passed += 1;
            }
        }
        assert!(passed >= 19, "{passed}");
    }

    #[test]
    fn positive_value_raises_sampled_action_probability() {
        let mut rng = seeded(8);
        let mut mc = MetaCritic::new(1, 3, &mut rng);
        mc.mvn = MetaValueNet::zeroed(1, 3);
        mc.mvn.params.set_value("l3.b", Tensor::vector(vec![1.0])).unwrap();
        let mut actor = ActorNet::new(1, ActorHead::Softmax(3), &mut rng);
        let state = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let action = Tensor::matrix(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        let before = actor.forward(&state).unwrap().data()[1];
        actor_update_discrete(&mut actor, &mc, &state, &action, &TaskEmbedding([0.0; 3])).unwrap();
        Optimizer::sgd(1e-2).step(&mut actor.params).unwrap();
        assert!(actor.forward(&state).unwrap().data()[1] > before);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let mut mc = MetaCritic::new(1, 1, &mut seeded(9));
        assert!(critic_td_update(&mut mc, &[], 0.9).is_err());
        assert!(critic_sl_update(&mut mc, &[]).is_err());
    }
}
