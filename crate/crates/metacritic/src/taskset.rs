//! Plain-text task sets, one task per line:
//!
//! ```text
//! # comment
//! sin,<amplitude>,<phase>
//! linear,<slope>,<intercept>
//! bandit,<p1>,<p2>,...
//! cartpole,<pole_length>
//! ```
//!
//! Blank lines and `#` comments are ignored. Numbers are written in their
//! shortest exact decimal form, so writing then reading is lossless.

use std::fmt::Write as _;
use std::path::Path;

use metacritic_core::tasks::{BanditTask, CartpoleTask, RegressionTask, TaskSpec};

use crate::error::{HarnessError, Result};

pub fn format_task(task: &TaskSpec) -> String {
    match task {
        TaskSpec::Regression(RegressionTask::Sine { amplitude, phase }) => format!("sin,{amplitude:?},{phase:?}"),
        TaskSpec::Regression(RegressionTask::Linear { slope, intercept }) => format!("linear,{slope:?},{intercept:?}"),
        TaskSpec::Bandit(b) => {
            let mut s = String::from("bandit");
            for p in &b.probs {
                write!(s, ",{p:?}").expect("string write");
            }
            s
        }
        TaskSpec::Cartpole(c) => format!("cartpole,{:?}", c.pole_length),
    }
}

pub fn parse_task(line: &str, number: usize) -> Result<TaskSpec> {
    let err = |message: String| HarnessError::TaskSet { line: number, message };
    let mut fields = line.split(',').map(str::trim);
    let family = fields.next().unwrap_or_default();
    let params = fields
        .map(|f| f.parse::<f64>().map_err(|_| err(format!("{f:?} is not a number"))))
        .collect::<Result<Vec<f64>>>()?;
    let arity = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(err(format!("{family} takes {n} parameters, got {}", params.len())))
        }
    };
    let task = match family {
        "sin" => {
            arity(2)?;
            TaskSpec::Regression(RegressionTask::Sine {
                amplitude: params[0],
                phase: params[1],
            })
        }
        "linear" => {
            arity(2)?;
            TaskSpec::Regression(RegressionTask::Linear {
                slope: params[0],
                intercept: params[1],
            })
        }
        "bandit" => TaskSpec::Bandit(BanditTask::new(params).map_err(|e| err(e.to_string()))?),
        "cartpole" => {
            arity(1)?;
            if !(params[0] > 0.0) {
                return Err(err("pole length must be positive".into()));
            }
            TaskSpec::Cartpole(CartpoleTask {
                pole_length: params[0],
            })
        }
        other => return Err(err(format!("unknown task family {other:?}"))),
    };
    Ok(task)
}

pub fn parse_task_set(text: &str) -> Result<Vec<TaskSpec>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or_default().trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| parse_task(l, n))
        .collect()
}

pub fn format_task_set(tasks: &[TaskSpec]) -> String {
    tasks.iter().map(|t| format_task(t) + "\n").collect()
}

pub fn read_task_set(path: &Path) -> Result<Vec<TaskSpec>> {
    parse_task_set(&std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?)
}

pub fn write_task_set(path: &Path, tasks: &[TaskSpec]) -> Result<()> {
    std::fs::write(path, format_task_set(tasks)).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use metacritic_core::rng::seeded;
    use metacritic_core::tasks::{sample_bandit, sample_regression_task};
    use proptest::prelude::*;

    #[test]
    fn comments_and_blanks_are_skipped() {
        let tasks = parse_task_set("# header\n\nsin, 2.5, 0.5  # trailing\ncartpole,1.25\n").unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(format_task(&tasks[0]), "sin,2.5,0.5");
        assert_eq!(format_task(&tasks[1]), "cartpole,1.25");
    }

    #[test]
    fn errors_name_the_line() {
        for (text, needle) in [
            ("sin,1\n", "takes 2"),
            ("\nlinear,1,x\n", "not a number"),
            ("ellipse,1\n", "unknown task family"),
            ("bandit,0.5\n", "two arms"),
            ("cartpole,-1\n", "positive"),
        ] {
            let e = parse_task_set(text).unwrap_err().to_string();
            assert!(e.contains(needle), "{e}");
            assert!(e.starts_with("task set line "), "{e}");
        }
    }

    proptest! {
        #[test]
        fn writing_then_reading_is_lossless(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let tasks = vec![
                sample_regression_task(true, &mut rng),
                sample_regression_task(true, &mut rng),
                sample_bandit(2 + (seed % 5) as usize, &mut rng).unwrap(),
                TaskSpec::Cartpole(CartpoleTask::sample(&mut rng)),
            ];
            prop_assert_eq!(parse_task_set(&format_task_set(&tasks)).unwrap(), tasks);
        }
    }
}
