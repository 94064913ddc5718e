use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::RangeInclusive;
use rand::Rng as _;

use super::{Shot, TaskSpec};
use crate::rng::Rng;
use crate::{Error, Result};

pub const AMPLITUDE_RANGE: RangeInclusive<f64> = 1.0..=5.0;
pub const PHASE_RANGE: RangeInclusive<f64> = 0.0..=PI;
/// Range of both slope and intercept.
pub const LINEAR_RANGE: RangeInclusive<f64> = -3.0..=3.0;
pub const INPUT_RANGE: RangeInclusive<f64> = -5.0..=5.0;

/// `a sin(x + b)` or `c x + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressionTask {
    Sine { amplitude: f64, phase: f64 },
    Linear { slope: f64, intercept: f64 },
}

impl RegressionTask {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            RegressionTask::Sine { amplitude, phase } => amplitude * libm::sin(x + phase),
            RegressionTask::Linear { slope, intercept } => slope * x + intercept,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            RegressionTask::Sine { .. } => "sin",
            RegressionTask::Linear { .. } => "linear",
        }
    }

    pub fn shot(&self, x: f64) -> Shot {
        Shot { x, y: self.eval(x) }
    }
}

fn uniform(rng: &mut Rng, range: RangeInclusive<f64>) -> f64 {
    rng.random_range(range)
}

/// Sine-only tasks, or a half-half mixture of sine and linear tasks.
pub fn sample_regression_task(mixture: bool, rng: &mut Rng) -> TaskSpec {
    let linear = mixture && rng.random_bool(0.5);
    let task = if linear {
        RegressionTask::Linear {
            slope: uniform(rng, LINEAR_RANGE),
            intercept: uniform(rng, LINEAR_RANGE),
        }
    } else {
        RegressionTask::Sine {
            amplitude: uniform(rng, AMPLITUDE_RANGE),
            phase: uniform(rng, PHASE_RANGE),
        }
    };
    TaskSpec::Regression(task)
}

pub fn regression_eval(task: &TaskSpec, x: f64) -> Result<f64> {
    match task {
        TaskSpec::Regression(r) => Ok(r.eval(x)),
        _ => Err(Error::invalid("regression_eval needs a regression task")),
    }
}

/// `n` labelled examples with inputs uniform on the input range.
pub fn sample_shots(task: &RegressionTask, n: usize, rng: &mut Rng) -> Vec<Shot> {
    (0..n).map(|_| task.shot(uniform(rng, INPUT_RANGE))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn unwrap(t: TaskSpec) -> RegressionTask {
        match t {
            TaskSpec::Regression(r) => r,
            _ => unreachable!(),
        }
    }

    #[test]
    fn eval_examples() {
        let s = TaskSpec::Regression(RegressionTask::Sine {
            amplitude: 1.0,
            phase: 0.0,
        });
        assert_eq!(regression_eval(&s, 0.0).unwrap(), 0.0);
        let s = RegressionTask::Sine {
            amplitude: 2.0,
            phase: PI / 2.0,
        };
        assert!((s.eval(0.0) - 2.0).abs() < 1e-15);
        let l = RegressionTask::Linear {
            slope: -3.0,
            intercept: 3.0,
        };
        assert_eq!(l.eval(1.0), 0.0);
    }

    #[test]
    fn eval_rejects_other_variants() {
        let t = TaskSpec::Cartpole(super::super::CartpoleTask { pole_length: 1.0 });
        assert!(regression_eval(&t, 0.0).is_err());
    }

    #[test]
    fn sine_only_mode_never_draws_lines() {
        let mut rng = seeded(3);
        for _ in 0..1000 {
            assert!(matches!(unwrap(sample_regression_task(false, &mut rng)), RegressionTask::Sine { .. }));
        }
    }

    #[test]
    fn mixture_is_balanced() {
        // Binomial(10000, 1/2): sd = 50, so 2% (200) is a 4-sigma band.
        let mut rng = seeded(4);
        let lines = (0..10_000)
            .filter(|_| matches!(unwrap(sample_regression_task(true, &mut rng)), RegressionTask::Linear { .. }))
            .count();
        assert!((4800..=5200).contains(&lines), "{lines}");
    }

    #[test]
    fn coefficients_stay_in_range() {
        let mut rng = seeded(5);
        for _ in 0..100_000 {
            match unwrap(sample_regression_task(true, &mut rng)) {
                RegressionTask::Sine { amplitude, phase } => {
                    assert!(AMPLITUDE_RANGE.contains(&amplitude) && PHASE_RANGE.contains(&phase));
                }
                RegressionTask::Linear { slope, intercept } => {
                    assert!(LINEAR_RANGE.contains(&slope) && LINEAR_RANGE.contains(&intercept));
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a: Vec<_> = {
            let mut rng = seeded(8);
            (0..5).map(|_| sample_regression_task(true, &mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = seeded(8);
            (0..5).map(|_| sample_regression_task(true, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }
}
