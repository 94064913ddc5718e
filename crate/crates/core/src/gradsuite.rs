//! Finite-difference verification of every network and update rule.
//!
//! Each check builds a small random instance, computes the analytic gradient
//! with the tape and compares it against central differences on a random
//! sample of coordinates from every parameter tensor.

use alloc::format;
use alloc::vec::Vec;
use rand::seq::index;
use rand::Rng as _;

use crate::autodiff::{relative_error, ParamSet, Tape, Tensor};
use crate::metacritic::updates::{
    continuous_objective, critic_sl_update, critic_td_update, discrete_weights, td_targets, weighted_ce_objective,
    SlCriticBatch, TdSample,
};
use crate::metacritic::{build_rl_trace, build_sl_trace, LearningTrace, MetaCritic, TaskEmbedding};
use crate::nets::{ActorHead, ActorNet, LstmCell, TaskEncoder};
use crate::rng::{stream, Rng};
use crate::tasks::{one_hot, Shot, Transition};
use crate::Result;

/// Central-difference step.
pub const STEP: f64 = 1e-6;
/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)`.
pub const FLOOR: f64 = 1e-4;
/// Coordinates sampled per parameter tensor.
pub const COORDS_PER_TENSOR: usize = 12;
/// Coordinates whose one-sided differences disagree by more than this
/// (relative) straddle a ReLU kink and are skipped.
pub const KINK_TOL: f64 = 1e-2;

/// Outcome of one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: &'static str,
    pub seed: u64,
    pub coordinates: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

/// Compares `analytic` (one tensor per parameter of `params`) against
/// central differences of `f` on sampled coordinates.
fn compare<F>(
    name: &'static str,
    seed: u64,
    params: &ParamSet,
    analytic: &[Tensor],
    mut f: F,
    rng: &mut Rng,
) -> Result<GradCheck>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    let mut coordinates = 0;
    let mut skipped = 0;
    let centre = f(params)?;
    for (i, grad) in analytic.iter().enumerate() {
        let len = work.value(i).len();
        for j in index::sample(rng, len, len.min(COORDS_PER_TENSOR)) {
            let orig = work.value(i).data()[j];
            work.value_mut(i).data_mut()[j] = orig + STEP;
            let plus = f(&work)?;
            work.value_mut(i).data_mut()[j] = orig - STEP;
            let minus = f(&work)?;
            work.value_mut(i).data_mut()[j] = orig;
            let forward = (plus - centre) / STEP;
            let backward = (centre - minus) / STEP;
            if relative_error(forward, backward, FLOOR) > KINK_TOL {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(relative_error(grad.data()[j], numeric, FLOOR));
            coordinates += 1;
        }
    }
    Ok(GradCheck {
        name,
        seed,
        coordinates,
        skipped,
        max_rel_error: worst,
    })
}

fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Result<Tensor> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

fn grads_of(params: &ParamSet) -> Vec<Tensor> {
    params.iter().map(|p| p.grad.clone()).collect()
}

/// `sum(out * w)` for a fixed random `w`: a scalar probe of a network output.
fn probe(tape: &mut Tape, out: crate::autodiff::Var, w: &Tensor) -> Result<crate::autodiff::Var> {
    let wv = tape.constant(w.clone());
    let prod = tape.mul(out, wv)?;
    tape.sum(prod)
}

fn check_actor(seed: u64, head: ActorHead, name: &'static str) -> Result<GradCheck> {
    let mut rng = stream(seed, &[1, head.width() as u64]);
    let input = 3;
    let mut actor = ActorNet::new(input, head, &mut rng);
    let states = random_tensor(4, input, 2.0, &mut rng)?;
    let w = random_tensor(4, head.width(), 1.0, &mut rng)?;
    let value = |a: &ActorNet| -> Result<(Tape, crate::autodiff::Binding, crate::autodiff::Var)> {
        let mut tape = Tape::new();
        let b = a.params.bind(&mut tape);
        let s = tape.constant(states.clone());
        let out = a.act_on_tape(&mut tape, &b, s)?;
        let l = probe(&mut tape, out, &w)?;
        Ok((tape, b, l))
    };
    let (tape, b, l) = value(&actor)?;
    let g = tape.backward(l)?;
    actor.params.accumulate(&g, &b)?;
    let analytic = grads_of(&actor.params);
    compare(name, seed, &actor.params, &analytic, |p| {
        let a = ActorNet::from_params(p.clone(), head)?;
        let (tape, _, l) = value(&a)?;
        tape.value(l).item()
    }, &mut rng)
}

fn check_lstm(seed: u64) -> Result<GradCheck> {
    let mut rng = stream(seed, &[2]);
    let cell = LstmCell {
        input: 3,
        hidden: 5,
        offset: 0,
    };
    let mut params = ParamSet::new();
    cell.init_params(&mut params, "lstm", Some(&mut rng))?;
    let steps: Vec<Tensor> = (0..3).map(|_| random_tensor(2, 3, 1.5, &mut rng)).collect::<Result<_>>()?;
    let wh = random_tensor(2, 5, 1.0, &mut rng)?;
    let wc = random_tensor(2, 5, 1.0, &mut rng)?;
    let value = |p: &ParamSet| -> Result<(Tape, crate::autodiff::Binding, crate::autodiff::Var)> {
        let mut tape = Tape::new();
        let b = p.bind(&mut tape);
        let mut h = tape.constant(Tensor::zeros(&[2, 5]));
        let mut c = tape.constant(Tensor::zeros(&[2, 5]));
        for x in &steps {
            let xv = tape.constant(x.clone());
            (h, c) = cell.step_on_tape(&mut tape, &b, xv, h, c)?;
        }
        let lh = probe(&mut tape, h, &wh)?;
        let lc = probe(&mut tape, c, &wc)?;
        let l = tape.add(lh, lc)?;
        Ok((tape, b, l))
    };
    let (tape, b, l) = value(&params)?;
    let g = tape.backward(l)?;
    params.accumulate(&g, &b)?;
    let analytic = grads_of(&params);
    compare("lstm", seed, &params, &analytic, |p| {
        let (tape, _, l) = value(p)?;
        tape.value(l).item()
    }, &mut rng)
}

fn random_rl_history(rng: &mut Rng, len: usize) -> Vec<Transition> {
    (0..len)
        .map(|_| Transition {
            state: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: one_hot(rng.random_range(0..2), 2),
            reward: rng.random_range(0.0..1.0),
            next_state: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal: rng.random_bool(0.3),
        })
        .collect()
}

fn random_sl_trace(rng: &mut Rng, len: usize) -> Result<LearningTrace> {
    let shots: Vec<Shot> = (0..len)
        .map(|_| Shot {
            x: rng.random_range(-1.5..1.5),
            y: rng.random_range(-1.5..1.5),
        })
        .collect();
    build_sl_trace(&shots)
}

fn check_taen(seed: u64) -> Result<GradCheck> {
    let mut rng = stream(seed, &[3]);
    let mut enc = TaskEncoder::new(4, 2, &mut rng);
    let history = random_rl_history(&mut rng, 6);
    let traces = [
        build_rl_trace(&history[..2], 10)?,
        build_rl_trace(&history, 4)?,
        build_rl_trace(&history[..3], 10)?,
    ];
    let refs: Vec<&LearningTrace> = traces.iter().collect();
    let w = random_tensor(3, TaskEmbedding::DIM, 1.0, &mut rng)?;
    let value = |e: &TaskEncoder| -> Result<(Tape, crate::autodiff::Binding, crate::autodiff::Var)> {
        let mut tape = Tape::new();
        let b = e.params.bind(&mut tape);
        let z = e.encode_on_tape(&mut tape, &b, &refs)?;
        let l = probe(&mut tape, z, &w)?;
        Ok((tape, b, l))
    };
    let (tape, b, l) = value(&enc)?;
    let g = tape.backward(l)?;
    enc.params.accumulate(&g, &b)?;
    let analytic = grads_of(&enc.params);
    compare("taen", seed, &enc.params, &analytic, |p| {
        let e = TaskEncoder::from_params(p.clone())?;
        let (tape, _, l) = value(&e)?;
        tape.value(l).item()
    }, &mut rng)
}

fn check_mvn(seed: u64) -> Result<GradCheck> {
    let mut rng = stream(seed, &[4]);
    let mut mc = MetaCritic::new(4, 2, &mut rng);
    let states = random_tensor(5, 4, 1.0, &mut rng)?;
    let actions = random_tensor(5, 2, 1.0, &mut rng)?;
    let z = random_tensor(5, 3, 1.0, &mut rng)?;
    let w = random_tensor(5, 1, 1.0, &mut rng)?;
    let value = |m: &crate::nets::MetaValueNet| -> Result<(Tape, crate::autodiff::Binding, crate::autodiff::Var)> {
        let mut tape = Tape::new();
        let b = m.params.bind(&mut tape);
        let s = tape.constant(states.clone());
        let a = tape.constant(actions.clone());
        let zv = tape.constant(z.clone());
        let q = m.q_on_tape(&mut tape, &b, s, a, zv)?;
        let l = probe(&mut tape, q, &w)?;
        Ok((tape, b, l))
    };
    let (tape, b, l) = value(&mc.mvn)?;
    let g = tape.backward(l)?;
    mc.mvn.params.accumulate(&g, &b)?;
    let analytic = grads_of(&mc.mvn.params);
    compare("mvn", seed, &mc.mvn.params, &analytic, |p| {
        let m = crate::nets::MetaValueNet::from_params(p.clone(), 4, 2)?;
        let (tape, _, l) = value(&m)?;
        tape.value(l).item()
    }, &mut rng)
}

/// Both critic networks' parameters as one set, MVN first.
fn joined(mc: &MetaCritic) -> Result<ParamSet> {
    let mut all = ParamSet::new();
    for p in mc.mvn.params.iter() {
        all.insert(format!("mvn.{}", p.name), p.value.clone())?;
    }
    for p in mc.taen.params.iter() {
        all.insert(format!("taen.{}", p.name), p.value.clone())?;
    }
    Ok(all)
}

fn split(base: &MetaCritic, all: &ParamSet) -> MetaCritic {
    let mut out = base.clone();
    let n = out.mvn.params.len();
    for (i, p) in out.mvn.params.iter_mut().enumerate() {
        p.value = all.value(i).clone();
    }
    for (i, p) in out.taen.params.iter_mut().enumerate() {
        p.value = all.value(n + i).clone();
    }
    out
}

fn critic_grads(mc: &MetaCritic) -> Vec<Tensor> {
    mc.mvn.params.iter().chain(mc.taen.params.iter()).map(|p| p.grad.clone()).collect()
}

fn check_critic_td(seed: u64) -> Result<GradCheck> {
    let mut rng = stream(seed, &[5]);
    let gamma = 0.9;
    let mut mc = MetaCritic::new(4, 2, &mut rng);
    let history = random_rl_history(&mut rng, 8);
    let batch: Vec<TdSample> = (0..4)
        .map(|i| {
            Ok(TdSample {
                transition: history[i + 3].clone(),
                next_action: one_hot(rng.random_range(0..2), 2),
                trace: build_rl_trace(&history[..i + 2], 5)?,
                next_trace: build_rl_trace(&history[..i + 3], 5)?,
            })
        })
        .collect::<Result<_>>()?;
    // The bootstrap term is a constant of the loss; hold it at its value.
    let targets = td_targets(&mc, &batch, gamma)?;
    critic_td_update(&mut mc, &batch, gamma)?;
    let analytic = critic_grads(&mc);
    let base = mc.clone();
    compare("critic_td_update", seed, &joined(&mc)?, &analytic, |p| {
        let m = split(&base, p);
        let traces: Vec<&LearningTrace> = batch.iter().map(|s| &s.trace).collect();
        let z = m.taen.encode_batch(&traces)?;
        let mut loss = 0.0;
        for ((s, z), t) in batch.iter().zip(&z).zip(&targets) {
            let q = m.mvn.value(&s.transition.state, &s.transition.action, z)?;
            loss += (q - t) * (q - t);
        }
        Ok(loss / batch.len() as f64)
    }, &mut rng)
}

fn check_critic_sl(seed: u64) -> Result<GradCheck> {
    let mut rng = stream(seed, &[6]);
    let mut mc = MetaCritic::new(1, 1, &mut rng);
    let batches: Vec<SlCriticBatch> = (0..2)
        .map(|i| {
            let inputs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let predictions: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let rewards = predictions.iter().map(|p| -(p - 1.0) * (p - 1.0)).collect();
            Ok(SlCriticBatch {
                trace: random_sl_trace(&mut rng, 3 + i)?,
                inputs,
                predictions,
                rewards,
            })
        })
        .collect::<Result<_>>()?;
    critic_sl_update(&mut mc, &batches)?;
    let analytic = critic_grads(&mc);
    let base = mc.clone();
    compare("critic_sl_update", seed, &joined(&mc)?, &analytic, |p| {
        let mut m = split(&base, p);
        critic_sl_update(&mut m, &batches)
    }, &mut rng)
}

fn check_actor_continuous(seed: u64) -> Result<GradCheck> {
    let mut rng = stream(seed, &[7]);
    let mc = MetaCritic::new(1, 1, &mut rng);
    let mut actor = ActorNet::new(1, ActorHead::Linear(1), &mut rng);
    let states = random_tensor(6, 1, 5.0, &mut rng)?;
    let z = TaskEmbedding([rng.random(), rng.random(), rng.random()]);
    crate::metacritic::actor_update_continuous(&mut actor, &mc, &states, &z)?;
    let analytic = grads_of(&actor.params);
    compare("actor_update_continuous", seed, &actor.params, &analytic, |p| {
        let a = ActorNet::from_params(p.clone(), ActorHead::Linear(1))?;
        let obj = continuous_objective(&a, &mc, &states, &z)?;
        obj.tape.value(obj.loss).item()
    }, &mut rng)
}

fn check_actor_discrete(seed: u64, centered: bool) -> Result<GradCheck> {
    let mut rng = stream(seed, &[8, centered as u64]);
    let mc = MetaCritic::new(4, 3, &mut rng);
    let mut actor = ActorNet::new(4, ActorHead::Softmax(3), &mut rng);
    let states = random_tensor(5, 4, 1.0, &mut rng)?;
    let mut acts = Vec::new();
    for _ in 0..5 {
        acts.extend(one_hot(rng.random_range(0..3), 3));
    }
    let actions = Tensor::matrix(5, 3, acts)?;
    let z = TaskEmbedding([rng.random(), rng.random(), rng.random()]);
    // The critic weights are constants of the actor loss; freeze them at the
    // base point.
    let weights = discrete_weights(&actor, &mc, &states, &actions, &z, centered)?;
    if centered {
        crate::metacritic::actor_update_discrete_centered(&mut actor, &mc, &states, &actions, &z)?;
    } else {
        crate::metacritic::actor_update_discrete(&mut actor, &mc, &states, &actions, &z)?;
    }
    let analytic = grads_of(&actor.params);
    let name = if centered {
        "actor_update_discrete_centered"
    } else {
        "actor_update_discrete"
    };
    compare(name, seed, &actor.params, &analytic, |p| {
        let a = ActorNet::from_params(p.clone(), ActorHead::Softmax(3))?;
        let obj = weighted_ce_objective(&a, &states, &actions, weights.clone(), &z)?;
        obj.tape.value(obj.loss).item()
    }, &mut rng)
}

/// Runs every check for one seed.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheck>> {
    Ok(alloc::vec![
        check_actor(seed, ActorHead::Linear(2), "actor_linear")?,
        check_actor(seed, ActorHead::Softmax(3), "actor_softmax")?,
        check_lstm(seed)?,
        check_taen(seed)?,
        check_mvn(seed)?,
        check_critic_td(seed)?,
        check_critic_sl(seed)?,
        check_actor_continuous(seed)?,
        check_actor_discrete(seed, false)?,
        check_actor_discrete(seed, true)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_seeds_pass() {
        for c in (0..20).flat_map(|s| gradient_suite(s).unwrap()) {
            assert!(c.max_rel_error < 1e-4, "{c:?}");
            assert!(c.skipped * 10 <= c.coordinates, "{c:?}");
        }
    }
}
