//! Experiment suites. Each is a pure function of its configuration and seed.
//!
//! Every random draw comes from a stream keyed by the base seed and the
//! draw's role (experiment, condition, task index, repeat), so a
//! unit of work produces the same numbers whichever worker runs it.

pub mod bandit;
pub mod cartpole;
pub mod embeddings;
pub mod gradcheck;
pub mod regression;

use metacritic_core::metacritic::MetaCritic;
use metacritic_core::tasks::TaskSpec;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::records::ResultRecord;

/// A learner that can appear in a results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Standard,
    AllFt,
    Fomaml,
    MetaCritic,
    MetaCriticSupervised,
    Random,
    Best,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Standard,
        Method::AllFt,
        Method::Fomaml,
        Method::MetaCritic,
        Method::MetaCriticSupervised,
        Method::Random,
        Method::Best,
    ];

    /// Identifier accepted by `--methods`.
    pub fn id(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::AllFt => "all_ft",
            Method::Fomaml => "fomaml",
            Method::MetaCritic => "meta_critic",
            Method::MetaCriticSupervised => "meta_critic_sup",
            Method::Random => "random",
            Method::Best => "best",
        }
    }

    /// Name written to result files.
    pub fn label(self) -> &'static str {
        match self {
            Method::Standard => "Standard",
            Method::AllFt => "All+FT",
            Method::Fomaml => "MAML (first-order)",
            Method::MetaCritic => "Meta-Critic",
            Method::MetaCriticSupervised => "Meta-Critic (supervised only)",
            Method::Random => "Random",
            Method::Best => "Best",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s || m.label() == s)
            .ok_or_else(|| {
                let ids: Vec<_> = Method::ALL.iter().map(|m| m.id()).collect();
                HarnessError::Usage(format!("unknown method {s:?}; expected one of {}", ids.join(", ")))
            })
    }

    pub fn parse_list(csv: &str) -> Result<Vec<Method>> {
        csv.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Method::parse).collect()
    }
}

/// Run-wide settings shared by all suites.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    /// Worker threads for per-task evaluation; 1 runs everything in order on
    /// the calling thread.
    pub jobs: usize,
    /// Requested methods; `None` runs every method the suite supports.
    pub methods: Option<Vec<Method>>,
}

impl RunContext {
    pub fn new(seed: u64) -> Self {
        RunContext {
            seed,
            jobs: 1,
            methods: None,
        }
    }

    /// Requested methods that `supported` contains, in `supported` order.
    /// Asking for a method the suite lacks is an error.
    pub(crate) fn select(&self, suite: &str, supported: &[Method]) -> Result<Vec<Method>> {
        match &self.methods {
            None => Ok(supported.to_vec()),
            Some(wanted) => {
                if let Some(m) = wanted.iter().find(|m| !supported.contains(m)) {
                    return Err(HarnessError::Usage(format!("method {} is not available for {suite}", m.id())));
                }
                Ok(supported.iter().copied().filter(|m| wanted.contains(m)).collect())
            }
        }
    }
}

/// Everything a suite produces.
#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub records: Vec<ResultRecord>,
    /// Trained critics keyed by a file stem, e.g. `regression_mixture`.
    pub critics: Vec<(String, MetaCritic)>,
    /// Task sets keyed by a file stem, e.g. `regression_sin_test`.
    pub task_sets: Vec<(String, Vec<TaskSpec>)>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
}

/// Maps `f` over `items` on `jobs` threads, keeping input order.
pub(crate) fn ordered_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    if jobs <= 1 {
        return items.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

/// Builder for the rows of one experiment.
pub(crate) struct Rows {
    experiment: &'static str,
}

pub(crate) struct Cell<'a> {
    pub method: Method,
    pub condition: &'a str,
    pub arms_or_k: usize,
    pub budget: usize,
    pub task_id: usize,
    pub repeat: usize,
}

impl Rows {
    pub fn new(experiment: &'static str) -> Self {
        Rows { experiment }
    }

    pub fn record(&self, cell: &Cell, metric: &str, value: f64) -> ResultRecord {
        ResultRecord {
            experiment: self.experiment.into(),
            method: cell.method.label().into(),
            condition: cell.condition.into(),
            arms_or_k: cell.arms_or_k,
            budget: cell.budget,
            task_id: cell.task_id,
            repeat: cell.repeat,
            metric: metric.into(),
            value,
        }
    }
}

/// `label: mean (std), n` over records passing `keep`.
pub(crate) fn summary_line(label: &str, records: &[ResultRecord], keep: impl Fn(&ResultRecord) -> bool) -> Option<String> {
    let (m, s, n) = crate::records::summarise(records.iter().filter(|r| keep(r)));
    (n > 0).then(|| format!("{label}: {m:.4} ({s:.4}), n={n}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_ids_and_labels_parse() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.id()).unwrap(), m);
            assert_eq!(Method::parse(m.label()).unwrap(), m);
        }
        assert_eq!(Method::parse_list("standard, meta_critic,").unwrap(), vec![Method::Standard, Method::MetaCritic]);
        assert!(Method::parse("maml2").is_err());
    }

    #[test]
    fn selection_rejects_unsupported_methods() {
        let mut ctx = RunContext::new(0);
        ctx.methods = Some(vec![Method::MetaCritic, Method::Standard]);
        assert_eq!(ctx.select("bandit", &[Method::Standard, Method::MetaCritic]).unwrap(), vec![Method::Standard, Method::MetaCritic]);
        ctx.methods = Some(vec![Method::AllFt]);
        assert!(ctx.select("bandit", &[Method::Standard, Method::MetaCritic]).is_err());
    }

    #[test]
    fn ordered_map_is_order_preserving_in_parallel() {
        let out = ordered_map(3, (0..50).collect(), |i: usize| Ok(i * i)).unwrap();
        assert_eq!(out, (0..50).map(|i| i * i).collect::<Vec<_>>());
    }
}
