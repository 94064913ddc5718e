//! Experiment configuration.
//!
//! A config file is a TOML document laid over a built-in preset: any key it
//! sets replaces the preset value, everything else keeps the preset. The
//! grammar is the serialised form of [`ExperimentConfig`]:
//!
//! ```toml
//! scale = "desk"          # preset the file is laid over
//! seed = 7                # lowest-priority seed (after --seed, METACRITIC_SEED)
//!
//! [regression]
//! train_tasks = 200
//! shots = [4, 6, 8]
//! conditions = ["sin", "mixture"]
//! [regression.train]      # meta-critic hyperparameters
//! meta_episodes = 300
//! [regression.baseline]   # Standard / All+FT / FOMAML hyperparameters
//! lr = 1e-3
//!
//! [[bandit.settings]]
//! arms = 2
//! pulls = [5, 10, 15]
//! meta_episodes = 300
//! ```
//!
//! The effective configuration is echoed in every run manifest.

use std::path::Path;

use metacritic_core::baselines::BaselineConfig;
use metacritic_core::metacritic::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

/// Regression task distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Sinusoids only.
    Sin,
    /// Half sinusoids, half lines.
    Mixture,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Sin => "sin",
            Condition::Mixture => "mixture",
        }
    }

    pub fn is_mixture(self) -> bool {
        self == Condition::Mixture
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scale: Scale,
    pub seed: u64,
    pub regression: RegressionConfig,
    pub bandit: BanditConfig,
    pub cartpole: CartpoleConfig,
    pub embeddings: EmbeddingConfig,
    pub gradcheck: GradcheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    pub train_tasks: usize,
    pub test_tasks: usize,
    pub repeats: usize,
    pub shots: Vec<usize>,
    pub conditions: Vec<Condition>,
    /// Held-out points per test task for final testing.
    pub eval_points: usize,
    /// Unlabelled inputs for the semi-supervised Meta-Critic row.
    pub unlabeled: usize,
    /// Tasks in the semi-supervised versus supervised-only comparison.
    pub semi_study_tasks: usize,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
}

/// One bandit width with its pull budgets and meta-training length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSetting {
    pub arms: usize,
    pub pulls: Vec<usize>,
    pub meta_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditConfig {
    pub train_tasks: usize,
    pub test_tasks: usize,
    pub repeats: usize,
    pub settings: Vec<BanditSetting>,
    /// Shared meta-critic hyperparameters; `meta_episodes` comes from each
    /// setting.
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartpoleConfig {
    pub train_tasks: usize,
    pub test_tasks: usize,
    pub repeats: usize,
    /// Meta-test games per task.
    pub episodes: usize,
    /// Greedy offline games after each meta-test game.
    pub offline_games: usize,
    /// Offline game length that counts as balanced.
    pub success_steps: usize,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Tasks sampled when no task set is given.
    pub tasks: usize,
    /// Shots in each regression trace.
    pub shots: usize,
    /// Neighbours in the leave-one-out probe.
    pub knn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seeds: u64,
    pub tolerance: f64,
}

/// Meta-episodes that give every training task `per_task` samples.
fn episodes_for(train_tasks: usize, per_task: usize, per_episode: usize) -> usize {
    (train_tasks * per_task).div_ceil(per_episode)
}

impl ExperimentConfig {
    pub fn preset(scale: Scale) -> Self {
        let paper = scale == Scale::Paper;
        let pick = |desk: usize, full: usize| if paper { full } else { desk };

        let regression_train = TrainConfig {
            meta_episodes: 300,
            inner_steps: 100,
            tasks_per_episode: 8,
            task_minibatch: 8,
            lr_actor: 1e-2,
            lr_critic: 1e-3,
            train_shots: (4, 8),
            batch_size: 32,
            action_noise: 5.0,
            sample_budget: 30_000,
            test_steps: 100,
            lr_test: 1e-2,
            ..TrainConfig::default()
        };
        let regression_tasks = pick(200, 10_000);
        let regression = RegressionConfig {
            train_tasks: regression_tasks,
            test_tasks: pick(20, 100),
            repeats: pick(5, 10),
            shots: vec![4, 6, 8],
            conditions: vec![Condition::Sin, Condition::Mixture],
            eval_points: 100,
            unlabeled: 64,
            semi_study_tasks: 50,
            train: TrainConfig {
                // Each step draws about six labelled shots per task.
                meta_episodes: if paper {
                    episodes_for(regression_tasks, 30_000, 8 * 100 * 6)
                } else {
                    300
                },
                ..regression_train
            },
            baseline: BaselineConfig {
                budget: 100,
                lr: 1e-3,
                source_steps: 5000,
                meta_iterations: 5000,
                inner_lr: 1e-2,
                inner_steps: 5,
                ..BaselineConfig::default()
            },
        };

        let bandit_tasks = pick(200, 1000);
        let bandit_train = TrainConfig {
            inner_steps: 30,
            tasks_per_episode: 8,
            task_minibatch: 8,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            test_steps: 30,
            lr_test: 1e-3,
            interactions_per_step: 1,
            sample_budget: 30_000,
            ..TrainConfig::default()
        };
        let paper_bandit_episodes = episodes_for(bandit_tasks, 30_000, 8 * 30);
        let setting = |arms, pulls: [usize; 3], desk_episodes| BanditSetting {
            arms,
            pulls: pulls.to_vec(),
            meta_episodes: if paper { paper_bandit_episodes } else { desk_episodes },
        };
        let bandit = BanditConfig {
            train_tasks: bandit_tasks,
            test_tasks: pick(50, 100),
            repeats: pick(5, 10),
            settings: vec![
                setting(2, [5, 10, 15], 300),
                setting(4, [10, 15, 20], 1000),
                setting(6, [15, 20, 25], 1000),
            ],
            train: bandit_train,
            baseline: BaselineConfig {
                budget: 30,
                lr: 1e-3,
                ..BaselineConfig::default()
            },
        };

        let cartpole_tasks = pick(100, 1000);
        let per_task = if paper { 150_000 } else { 20_000 };
        let cartpole = CartpoleConfig {
            train_tasks: cartpole_tasks,
            test_tasks: pick(20, 100),
            repeats: pick(3, 10),
            episodes: pick(30, 100),
            offline_games: 10,
            success_steps: 195,
            train: TrainConfig {
                meta_episodes: episodes_for(cartpole_tasks, per_task, 8 * 100 * 25),
                inner_steps: 100,
                interactions_per_step: 25,
                tasks_per_episode: 8,
                task_minibatch: 8,
                lr_actor: 1e-3,
                lr_critic: 1e-3,
                test_steps: 10,
                lr_test: 1e-3,
                sample_budget: per_task,
                ..TrainConfig::default()
            },
            baseline: BaselineConfig {
                budget: 10,
                lr: 1e-3,
                ..BaselineConfig::default()
            },
        };

        ExperimentConfig {
            scale,
            seed: 0,
            regression,
            bandit,
            cartpole,
            embeddings: EmbeddingConfig {
                tasks: 100,
                shots: 8,
                knn: 5,
            },
            gradcheck: GradcheckConfig {
                seeds: 20,
                tolerance: 1e-4,
            },
        }
    }

    /// Lays the TOML document `text` over the preset it names (or
    /// `default_scale`). `scale_override` wins over the document's own scale.
    pub fn from_toml(text: &str, default_scale: Scale, scale_override: Option<Scale>) -> Result<Self> {
        let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let scale = match (scale_override, overlay.get("scale")) {
            (Some(s), _) => s,
            (None, Some(v)) => Scale::deserialize(v.clone()).map_err(|e| HarnessError::Config(e.to_string()))?,
            (None, None) => default_scale,
        };
        let mut base = toml::Table::try_from(Self::preset(scale)).map_err(|e| HarnessError::Config(e.to_string()))?;
        merge(&mut base, overlay);
        let mut cfg: ExperimentConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.scale = scale;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, scale_override: Option<Scale>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, Scale::Desk, scale_override)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let r = &self.regression;
        if r.shots.contains(&0) {
            return bad("regression shots must be positive".into());
        }
        if r.train_tasks == 0 || r.eval_points == 0 {
            return bad("regression needs training tasks and evaluation points".into());
        }
        for s in &self.bandit.settings {
            if s.arms < 2 || s.pulls.contains(&0) {
                return bad(format!("bandit setting {s:?} needs >= 2 arms and positive pull budgets"));
            }
        }
        if self.cartpole.offline_games == 0 || self.cartpole.episodes == 0 {
            return bad("cartpole needs meta-test episodes and offline games".into());
        }
        if self.embeddings.knn == 0 {
            return bad("embedding probe needs k >= 1".into());
        }
        r.train.validate()?;
        self.bandit.train.validate()?;
        self.cartpole.train.validate()?;
        Ok(())
    }
}

/// Recursive table merge: `overlay` keys replace `base` keys, tables merge.
fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for scale in [Scale::Desk, Scale::Paper] {
            let cfg = ExperimentConfig::preset(scale);
            let back = ExperimentConfig::from_toml(&cfg.to_toml(), Scale::Desk, None).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn overlay_keeps_unset_keys() {
        let cfg = ExperimentConfig::from_toml("[regression]\ntest_tasks = 3\n[regression.train]\nmeta_episodes = 2\n", Scale::Desk, None).unwrap();
        let desk = ExperimentConfig::preset(Scale::Desk);
        assert_eq!(cfg.regression.test_tasks, 3);
        assert_eq!(cfg.regression.train.meta_episodes, 2);
        assert_eq!(cfg.regression.train.lr_actor, desk.regression.train.lr_actor);
        assert_eq!(cfg.bandit, desk.bandit);
    }

    #[test]
    fn full_scale_budgets() {
        let p = ExperimentConfig::preset(Scale::Paper);
        assert_eq!((p.regression.train_tasks, p.bandit.train_tasks, p.cartpole.train_tasks), (10_000, 1000, 1000));
        assert_eq!((p.regression.test_tasks, p.bandit.test_tasks, p.cartpole.test_tasks), (100, 100, 100));
        assert_eq!((p.regression.repeats, p.bandit.repeats, p.cartpole.repeats), (10, 10, 10));
        assert_eq!(p.cartpole.episodes, 100);
        assert_eq!(p.cartpole.train.sample_budget, 150_000);
    }

    #[test]
    fn scale_comes_from_flag_then_file() {
        let c = ExperimentConfig::from_toml("scale = \"paper\"\n", Scale::Desk, None).unwrap();
        assert_eq!(c.scale, Scale::Paper);
        let c = ExperimentConfig::from_toml("scale = \"paper\"\n", Scale::Desk, Some(Scale::Desk)).unwrap();
        assert_eq!(c, ExperimentConfig::preset(Scale::Desk));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[regression]\ntest_taks = 3\n", Scale::Desk, None).is_err());
        assert!(ExperimentConfig::from_toml("[regression.train]\nlr = 3\n", Scale::Desk, None).is_err());
    }
}
