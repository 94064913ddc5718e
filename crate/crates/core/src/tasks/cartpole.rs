use core::ops::RangeInclusive;
use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

/// Sampling range of the pole half-length.
pub const POLE_LENGTH_RANGE: RangeInclusive<f64> = 0.5..=5.0;
pub const MAX_EPISODE_STEPS: usize = 200;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_LIMIT: f64 = 12.0 * 2.0 * core::f64::consts::PI / 360.0;
const X_LIMIT: f64 = 2.4;
const RESET_NOISE: f64 = 0.05;

/// One cartpole task: the pole half-length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleTask {
    pub pole_length: f64,
}

impl CartpoleTask {
    pub fn sample(rng: &mut Rng) -> Self {
        CartpoleTask {
            pole_length: rng.random_range(POLE_LENGTH_RANGE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleState {
    pub theta: f64,
    pub x: f64,
    pub theta_dot: f64,
    pub x_dot: f64,
}

impl CartpoleState {
    /// Observation order `(theta, x, theta_dot, x_dot)`.
    pub fn observation(&self) -> [f64; 4] {
        [self.theta, self.x, self.theta_dot, self.x_dot]
    }

    pub fn failed(&self) -> bool {
        self.theta.abs() > THETA_LIMIT || self.x.abs() > X_LIMIT
    }
}

impl core::ops::Neg for CartpoleState {
    type Output = Self;
    fn neg(self) -> Self {
        CartpoleState {
            theta: -self.theta,
            x: -self.x,
            theta_dot: -self.theta_dot,
            x_dot: -self.x_dot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CartpoleAction {
    Left,
    Right,
}

impl CartpoleAction {
    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            CartpoleAction::Left
        } else {
            CartpoleAction::Right
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Self {
        match self {
            CartpoleAction::Left => CartpoleAction::Right,
            CartpoleAction::Right => CartpoleAction::Left,
        }
    }
}

/// Each component uniform in `±0.05`.
pub fn cartpole_reset(rng: &mut Rng) -> CartpoleState {
    let mut u = || rng.random_range(-RESET_NOISE..=RESET_NOISE);
    CartpoleState {
        theta: u(),
        x: u(),
        theta_dot: u(),
        x_dot: u(),
    }
}

/// Angular and linear accelerations under a horizontal force.
fn accelerations(task: &CartpoleTask, s: &CartpoleState, force: f64) -> (f64, f64) {
    let total_mass = CART_MASS + POLE_MASS;
    let pole_moment = POLE_MASS * task.pole_length;
    let (sin, cos) = (libm::sin(s.theta), libm::cos(s.theta));
    let temp = (force + pole_moment * s.theta_dot * s.theta_dot * sin) / total_mass;
    let theta_acc =
        (GRAVITY * sin - cos * temp) / (task.pole_length * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
    let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
    (theta_acc, x_acc)
}

fn integrate(task: &CartpoleTask, s: &CartpoleState, force: f64) -> CartpoleState {
    let (theta_acc, x_acc) = accelerations(task, s, force);
    let x_dot = s.x_dot + TAU * x_acc;
    let theta_dot = s.theta_dot + TAU * theta_acc;
    CartpoleState {
        x: s.x + TAU * x_dot,
        x_dot,
        theta: s.theta + TAU * theta_dot,
        theta_dot,
    }
}

/// Advances the physics one 0.02 s tick. Returns the next state, the reward
/// (1 unless the step fails) and whether the pole fell or the cart left the
/// track.
pub fn cartpole_step(task: &CartpoleTask, state: &CartpoleState, action: CartpoleAction) -> Result<(CartpoleState, f64, bool)> {
    if state.failed() {
        return Err(Error::invalid("cartpole stepped from a terminal state"));
    }
    let force = match action {
        CartpoleAction::Left => -FORCE,
        CartpoleAction::Right => FORCE,
    };
    let next = integrate(task, state, force);
    let failed = next.failed();
    Ok((next, if failed { 0.0 } else { 1.0 }, failed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: CartpoleState,
    pub reward: f64,
    /// The episode is over (failure or step cap).
    pub terminal: bool,
    /// The pole fell or the cart left the track.
    pub failed: bool,
}

/// A running episode with the 200-step cap.
#[derive(Debug, Clone)]
pub struct CartpoleEpisode {
    pub task: CartpoleTask,
    state: CartpoleState,
    steps: usize,
    done: bool,
}

impl CartpoleEpisode {
    pub fn new(task: CartpoleTask, rng: &mut Rng) -> Self {
        CartpoleEpisode {
            task,
            state: cartpole_reset(rng),
            steps: 0,
            done: false,
        }
    }

    pub fn state(&self) -> &CartpoleState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: CartpoleAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::invalid("cartpole episode already finished"));
        }
        let (state, reward, failed) = cartpole_step(&self.task, &self.state, action)?;
        self.state = state;
        self.steps += 1;
        self.done = failed || self.steps >= MAX_EPISODE_STEPS;
        Ok(StepOutcome {
            state,
            reward,
            terminal: self.done,
            failed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    const HALF: CartpoleTask = CartpoleTask { pole_length: 0.5 };

    #[test]
    fn angular_acceleration_from_rest() {
        let rest = CartpoleState {
            theta: 0.0,
            x: 0.0,
            theta_dot: 0.0,
            x_dot: 0.0,
        };
        let (theta_acc, _) = accelerations(&HALF, &rest, FORCE);
        // -(10 / 1.1) / (0.5 * (4/3 - 0.1/1.1))
        assert!((theta_acc - (-14.634)).abs() < 5e-4, "{theta_acc}");
        let (next, r, term) = cartpole_step(&HALF, &rest, CartpoleAction::Right).unwrap();
        assert!((next.theta_dot - TAU * theta_acc).abs() < 1e-12);
        assert_eq!((r, term), (1.0, false));
    }

    #[test]
    fn dynamics_are_odd() {
        let mut rng = seeded(1);
        for _ in 0..50 {
            let s = cartpole_reset(&mut rng);
            let task = CartpoleTask::sample(&mut rng);
            for a in [CartpoleAction::Left, CartpoleAction::Right] {
                let (fwd, ..) = cartpole_step(&task, &s, a).unwrap();
                let (mir, ..) = cartpole_step(&task, &-s, a.opposite()).unwrap();
                let (f, m) = (fwd.observation(), (-mir).observation());
                for i in 0..4 {
                    assert!((f[i] - m[i]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn reset_is_small() {
        let mut rng = seeded(2);
        for _ in 0..100 {
            assert!(cartpole_reset(&mut rng).observation().iter().all(|v| v.abs() <= RESET_NOISE));
        }
    }

    #[test]
    fn balanced_episode_hits_cap() {
        // A hand-written stabilising policy on a long pole survives the full episode.
        let mut rng = seeded(3);
        let mut ep = CartpoleEpisode::new(CartpoleTask { pole_length: 2.0 }, &mut rng);
        let mut total = 0.0;
        while !ep.is_done() {
            let s = *ep.state();
            let push = s.theta + 0.5 * s.theta_dot + 0.01 * s.x + 0.1 * s.x_dot;
            let a = if push > 0.0 {
                CartpoleAction::Right
            } else {
                CartpoleAction::Left
            };
            total += ep.step(a).unwrap().reward;
        }
        assert_eq!(ep.steps(), MAX_EPISODE_STEPS);
        assert_eq!(total, 200.0);
        assert!(ep.step(CartpoleAction::Left).is_err());
    }

    #[test]
    fn stepping_a_failed_state_is_an_error() {
        let s = CartpoleState {
            theta: 0.5,
            x: 0.0,
            theta_dot: 0.0,
            x_dot: 0.0,
        };
        assert!(cartpole_step(&HALF, &s, CartpoleAction::Left).is_err());
    }

    /// Ticks for an unforced pole to drift from 0.01 rad to the failure angle.
    fn fall_time(pole_length: f64) -> usize {
        let task = CartpoleTask { pole_length };
        let mut s = CartpoleState {
            theta: 0.01,
            x: 0.0,
            theta_dot: 0.0,
            x_dot: 0.0,
        };
        let mut n = 0;
        while s.theta.abs() <= THETA_LIMIT {
            s = integrate(&task, &s, 0.0);
            n += 1;
        }
        n
    }

    #[test]
    fn longer_poles_have_slower_dynamics() {
        let times: alloc::vec::Vec<usize> = [0.5, 1.0, 2.0, 3.5, 5.0].iter().map(|&l| fall_time(l)).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]), "{times:?}");
    }
}
