//! End-to-end acceptance run at desk scale. Prints one `[PASS]` or `[FAIL]`
//! line per criterion and exits non-zero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use metacritic::config::{Condition, ExperimentConfig, Scale};
use metacritic::records::{write_results, ResultRecord};
use metacritic::stats::{mean, sign_test};
use metacritic::suites::{bandit, cartpole, embeddings, gradcheck, regression, Method, RunContext, SuiteOutput};
use metacritic_core::autodiff::Tensor;
use metacritic_core::metacritic::{
    actor_update_continuous, actor_update_discrete, actor_update_discrete_centered, build_rl_trace, build_sl_trace,
    critic_update, CriticBatch, MetaCritic, SlCriticBatch, TaskEmbedding, TdSample,
};
use metacritic_core::nets::{ActorHead, ActorNet};
use metacritic_core::rng::{seeded, Rng};
use metacritic_core::tasks::{one_hot, Shot, Transition};
use rand::Rng as _;

struct Verdict {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Report {
    verdicts: Vec<Verdict>,
}

impl Report {
    fn add(&mut self, id: &'static str, name: &'static str, pass: bool, detail: String) {
        println!("[{}] {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.verdicts.push(Verdict { id, name, pass, detail });
    }
}

fn ctx() -> RunContext {
    RunContext::new(0)
}

fn mean_of(records: &[ResultRecord], keep: impl Fn(&ResultRecord) -> bool) -> f64 {
    let v: Vec<f64> = records.iter().filter(|r| keep(r)).map(|r| r.value).collect();
    mean(&v)
}

fn regression_mean(records: &[ResultRecord], cond: &str, k: usize, m: Method) -> f64 {
    mean_of(records, |r| r.experiment == "regression" && r.condition == cond && r.arms_or_k == k && r.method == m.label())
}

fn bandit_mean(records: &[ResultRecord], arms: usize, pulls: usize, m: Method) -> f64 {
    mean_of(records, |r| r.arms_or_k == arms && r.budget == pulls && r.method == m.label())
}

fn gradcheck_criterion(report: &mut Report, cfg: &ExperimentConfig) {
    let t = Instant::now();
    let out = gradcheck::run(&cfg.gradcheck, &ctx()).expect("gradcheck runs");
    let secs = t.elapsed().as_secs_f64();
    let worst = out.records.iter().map(|r| r.value).fold(0.0, f64::max);
    let seeds = out.records.iter().map(|r| r.task_id).max().map_or(0, |s| s + 1);
    let pass = gradcheck::passed(&out.records, 1e-4) && seeds >= 20 && secs < 60.0;
    report.add(
        "1",
        "gradient check",
        pass,
        format!("{} checks over {seeds} seeds, worst relative error {worst:.2e}, {secs:.1} s", out.records.len()),
    );
}

fn random_transition(rng: &mut Rng, terminal: bool) -> Transition {
    Transition {
        state: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
        action: one_hot(rng.random_range(0..2), 2),
        reward: rng.random_range(0.0..1.0),
        next_state: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
        terminal,
    }
}

fn sl_batches(rng: &mut Rng) -> Vec<SlCriticBatch> {
    (0..3)
        .map(|i| {
            let shots: Vec<Shot> = (0..2 + i).map(|_| Shot { x: rng.random_range(-5.0..5.0), y: rng.random_range(-5.0..5.0) }).collect();
            let inputs: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let predictions: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let rewards = predictions.iter().map(|p| -(p - shots[0].y) * (p - shots[0].y)).collect();
            SlCriticBatch { trace: build_sl_trace(&shots).unwrap(), inputs, predictions, rewards }
        })
        .collect()
}

fn stop_gradient_criterion(report: &mut Report) {
    let mut failures = Vec::new();
    for seed in 0..20 {
        let mut rng = seeded(seed);
        let z = TaskEmbedding([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);

        let mut mc = MetaCritic::new(1, 1, &mut rng);
        let mut actor = ActorNet::new(1, ActorHead::Linear(1), &mut rng);
        let states = Tensor::matrix(4, 1, (0..4).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        mc.zero_grad();
        actor_update_continuous(&mut actor, &mc, &states, &z).unwrap();
        if !(mc.mvn.params.grads_are_zero() && mc.taen.params.grads_are_zero()) || actor.params.grads_are_zero() {
            failures.push(format!("continuous actor update, seed {seed}"));
        }

        let mc = MetaCritic::new(4, 2, &mut rng);
        let states = Tensor::matrix(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let actions = Tensor::matrix(3, 2, [0, 1, 1].iter().flat_map(|&a| one_hot(a, 2)).collect()).unwrap();
        for centered in [false, true] {
            let mut actor = ActorNet::new(4, ActorHead::Softmax(2), &mut rng);
            let mut mc = mc.clone();
            mc.zero_grad();
            if centered {
                actor_update_discrete_centered(&mut actor, &mc, &states, &actions, &z).unwrap();
            } else {
                actor_update_discrete(&mut actor, &mc, &states, &actions, &z).unwrap();
            }
            if !(mc.mvn.params.grads_are_zero() && mc.taen.params.grads_are_zero()) {
                failures.push(format!("discrete actor update (centered {centered}), seed {seed}"));
            }
        }

        let base = MetaCritic::new(1, 1, &mut rng);
        let batch = CriticBatch::Sl(sl_batches(&mut rng));
        let reference = {
            let mut mc = base.clone();
            let loss = critic_update(&mut mc, &batch, 0.0).unwrap();
            (loss.to_bits(), mc)
        };
        for gamma in [0.1, 0.5, 0.9, 0.99, 1.0] {
            let mut mc = base.clone();
            let loss = critic_update(&mut mc, &batch, gamma).unwrap();
            if loss.to_bits() != reference.0 || mc != reference.1 {
                failures.push(format!("supervised critic update varies with gamma {gamma}, seed {seed}"));
            }
        }

        // A TD update with gamma = 0 sees only rewards; with terminal
        // transitions it must match for any gamma.
        let history: Vec<Transition> = (0..8).map(|_| random_transition(&mut rng, false)).collect();
        let samples: Vec<TdSample> = (0..5)
            .map(|i| TdSample {
                transition: random_transition(&mut rng, true),
                next_action: one_hot(i % 2, 2),
                trace: build_rl_trace(&history[..3 + i], 10).unwrap(),
                next_trace: build_rl_trace(&history[..4 + i], 10).unwrap(),
            })
            .collect();
        let td = CriticBatch::Td(samples);
        let td_base = MetaCritic::new(4, 2, &mut rng);
        let mut a = td_base.clone();
        let mut b = td_base.clone();
        let la = critic_update(&mut a, &td, 0.0).unwrap();
        let lb = critic_update(&mut b, &td, 0.9).unwrap();
        if la.to_bits() != lb.to_bits() || a != b {
            failures.push(format!("terminal TD targets depend on gamma, seed {seed}"));
        }
    }
    let detail = if failures.is_empty() {
        "actor updates leave critic gradients zero; supervised and terminal critic updates are bitwise gamma-invariant over 20 seeds".into()
    } else {
        failures.join("; ")
    };
    report.add("2", "stop-gradient contracts", failures.is_empty(), detail);
}

fn monte_carlo_criterion(report: &mut Report, tiny_bandit: &[ResultRecord]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (arms, expected) in [(2, 0.75), (4, 0.52), (6, 0.41)] {
        let est = bandit::expected_best_monte_carlo(arms, 100_000, &mut seeded(arms as u64)).unwrap();
        ok &= (est - expected).abs() <= 0.01;
        parts.push(format!("{arms}-arm {est:.4}"));
    }
    let random: Vec<&ResultRecord> = tiny_bandit.iter().filter(|r| r.method == Method::Random.label()).collect();
    let exact = !random.is_empty() && random.iter().all(|r| r.value == 1.0 / r.arms_or_k as f64);
    parts.push(format!("{} Random rows {}", random.len(), if exact { "exactly 1/n" } else { "NOT 1/n" }));
    report.add("3", "bandit reference values", ok && exact, parts.join(", "));
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Scale::Desk);
    let r = &mut cfg.regression;
    r.train_tasks = 12;
    r.test_tasks = 3;
    r.repeats = 2;
    r.shots = vec![4];
    r.semi_study_tasks = 3;
    r.eval_points = 20;
    r.train.meta_episodes = 2;
    r.train.inner_steps = 4;
    r.train.test_steps = 5;
    r.baseline.budget = 5;
    r.baseline.source_steps = 10;
    r.baseline.meta_iterations = 5;
    let b = &mut cfg.bandit;
    b.train_tasks = 10;
    b.test_tasks = 3;
    b.repeats = 2;
    b.train.inner_steps = 4;
    b.train.test_steps = 3;
    b.baseline.budget = 3;
    for s in &mut b.settings {
        s.meta_episodes = 2;
    }
    let c = &mut cfg.cartpole;
    c.train_tasks = 4;
    c.test_tasks = 2;
    c.repeats = 2;
    c.episodes = 3;
    c.offline_games = 2;
    c.train.meta_episodes = 1;
    c.train.inner_steps = 3;
    c.train.interactions_per_step = 5;
    c.train.test_steps = 2;
    c.baseline.budget = 2;
    cfg
}

fn csv_bytes(dir: &Path, name: &str, out: &SuiteOutput) -> Vec<u8> {
    let path = dir.join(name);
    write_results(&path, &out.records).unwrap();
    std::fs::read(&path).unwrap()
}

/// Returns the tiny bandit records for the Random-row check.
fn determinism_criterion(report: &mut Report) -> Vec<ResultRecord> {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let run = |jobs: usize, tag: &str| {
        let ctx = RunContext { seed: 11, jobs, methods: None };
        let outs = [
            regression::run(&cfg.regression, &ctx).unwrap(),
            bandit::run(&cfg.bandit, &ctx).unwrap(),
            cartpole::run(&cfg.cartpole, &ctx).unwrap(),
        ];
        let bytes: Vec<Vec<u8>> = outs.iter().enumerate().map(|(i, o)| csv_bytes(dir.path(), &format!("{tag}_{i}.csv"), o)).collect();
        (bytes, outs[1].records.clone())
    };
    let (first, bandit_records) = run(1, "a");
    let (second, _) = run(1, "b");
    let (parallel, _) = run(2, "c");
    let rows: usize = first.iter().map(|b| b.iter().filter(|&&c| c == b'\n').count()).sum();
    let pass = first == second && first == parallel;
    report.add(
        "8",
        "byte-identical results",
        pass,
        format!("{rows} CSV lines over three suites; rerun identical: {}, 2 workers identical: {}", first == second, first == parallel),
    );
    bandit_records
}

fn regression_criteria(report: &mut Report, cfg: &ExperimentConfig) -> MetaCritic {
    let t = Instant::now();
    let out = regression::run(&cfg.regression, &ctx()).expect("regression runs");
    let secs = t.elapsed().as_secs_f64();
    let r = &out.records;
    let mut parts = Vec::new();
    let mut ok = true;
    for k in [4, 8] {
        let mc = regression_mean(r, "sin", k, Method::MetaCritic);
        let std = regression_mean(r, "sin", k, Method::Standard);
        let ft = regression_mean(r, "sin", k, Method::AllFt);
        ok &= mc < std && mc < ft;
        parts.push(format!("sin K={k}: Meta-Critic {mc:.3} vs Standard {std:.3}, All+FT {ft:.3}"));
    }
    let mix_mc = regression_mean(r, "mixture", 4, Method::MetaCritic);
    let mix_maml = regression_mean(r, "mixture", 4, Method::Fomaml);
    ok &= mix_mc < mix_maml;
    parts.push(format!("mixture K=4: Meta-Critic {mix_mc:.3} vs first-order MAML {mix_maml:.3}"));
    let sin8 = regression_mean(r, "sin", 8, Method::MetaCritic);
    ok &= sin8 < 1.0;
    ok &= secs <= 15.0 * 60.0;
    parts.push(format!("{secs:.0} s"));
    report.add("4", "few-shot regression", ok, parts.join("; "));

    let semi: Vec<&ResultRecord> = r.iter().filter(|x| x.experiment == "regression_semi").collect();
    let with: Vec<f64> = semi.iter().filter(|x| x.method == Method::MetaCritic.label()).map(|x| x.value).collect();
    let without: Vec<f64> = semi.iter().filter(|x| x.method == Method::MetaCriticSupervised.label()).map(|x| x.value).collect();
    let helped = with.iter().zip(&without).filter(|(a, b)| a <= b).count();
    let n = with.len();
    report.add(
        "9",
        "semi-supervised meta-testing",
        n == 50 && helped * 10 >= n * 6,
        format!("MSE with 64 unlabelled inputs <= supervised-only on {helped}/{n} tasks (mean {:.3} vs {:.3})", mean(&with), mean(&without)),
    );

    let mixture = out.critics.iter().find(|(name, _)| name == &format!("regression_{}", Condition::Mixture.name()));
    mixture.expect("mixture critic saved").1.clone()
}

fn bandit_criterion(report: &mut Report, cfg: &ExperimentConfig) {
    let t = Instant::now();
    let out = bandit::run(&cfg.bandit, &ctx()).expect("bandit runs");
    let secs = t.elapsed().as_secs_f64();
    let r = &out.records;
    let mc2 = bandit_mean(r, 2, 15, Method::MetaCritic);
    let std2 = bandit_mean(r, 2, 15, Method::Standard);
    let mc4 = bandit_mean(r, 4, 20, Method::MetaCritic);
    let std4 = bandit_mean(r, 4, 20, Method::Standard);
    let units = cfg.bandit.test_tasks * cfg.bandit.repeats;
    let pass = mc2 >= 0.68 && mc2 >= std2 && mc4 >= std4 && secs <= 600.0 && cfg.bandit.test_tasks >= 50 && cfg.bandit.repeats >= 5;
    report.add(
        "5",
        "multi-armed bandits",
        pass,
        format!("2-arm @15: Meta-Critic {mc2:.4} vs Standard {std2:.4}; 4-arm @20: {mc4:.4} vs {std4:.4}; {units} task repeats; {secs:.0} s"),
    );
}

fn cartpole_criterion(report: &mut Report, cfg: &ExperimentConfig) -> MetaCritic {
    let t = Instant::now();
    let out = cartpole::run(&cfg.cartpole, &ctx()).expect("cartpole runs");
    let secs = t.elapsed().as_secs_f64();
    let games = cfg.cartpole.episodes;
    let mc = cartpole::per_task_means(&out.records, Method::MetaCritic, "offline_reward", games);
    let std = cartpole::per_task_means(&out.records, Method::Standard, "offline_reward", games);
    let (wins, n, p) = sign_test(&mc, &std);
    let succ_mc = mean(&cartpole::per_task_means(&out.records, Method::MetaCritic, "success", games));
    let succ_std = mean(&cartpole::per_task_means(&out.records, Method::Standard, "success", games));
    let pass = games == 30 && mc.len() >= 20 && mean(&mc) > mean(&std) && p < 0.05 && succ_mc > succ_std && secs <= 1200.0;
    report.add(
        "6",
        "cartpole",
        pass,
        format!(
            "after {games} games offline reward {:.1} vs {:.1}, sign test {wins}/{n} p={p:.2e}, success {succ_mc:.3} vs {succ_std:.3}, {secs:.0} s",
            mean(&mc),
            mean(&std)
        ),
    );
    out.critics.into_iter().next().expect("cartpole critic").1
}

fn embedding_criterion(report: &mut Report, cfg: &ExperimentConfig, mixture: &MetaCritic, cart: &MetaCritic) {
    let e = &cfg.embeddings;
    let rows = embeddings::embed_tasks(mixture, &embeddings::regression_probe_tasks(e, 0), e, cfg.regression.train.trace_len, 0, 1).unwrap();
    let knn = embeddings::probe(&rows, 5).unwrap();
    let rows = embeddings::embed_tasks(cart, &embeddings::cartpole_probe_tasks(e, 0), e, cfg.cartpole.train.trace_len, 0, 1).unwrap();
    let rank = embeddings::probe(&rows, 5).unwrap();
    let pass = matches!(knn, embeddings::Probe::Knn { accuracy, .. } if accuracy >= 0.75)
        && matches!(rank, embeddings::Probe::RankCorrelation(r) if r.abs() > 0.5);
    report.add("7", "task embeddings", pass, format!("mixture: {}; cartpole: {}", knn.describe(), rank.describe()));
}

fn main() {
    let cfg = ExperimentConfig::preset(Scale::Desk);
    let started = Instant::now();
    let mut report = Report::default();
    gradcheck_criterion(&mut report, &cfg);
    stop_gradient_criterion(&mut report);
    let tiny_bandit = determinism_criterion(&mut report);
    monte_carlo_criterion(&mut report, &tiny_bandit);
    let mixture = regression_criteria(&mut report, &cfg);
    bandit_criterion(&mut report, &cfg);
    let cart = cartpole_criterion(&mut report, &cfg);
    embedding_criterion(&mut report, &cfg, &mixture, &cart);

    report.verdicts.sort_by_key(|v| v.id);
    println!("\nacceptance summary ({:.0} s)", started.elapsed().as_secs_f64());
    for v in &report.verdicts {
        println!("[{}] {} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
    }
    let failed = report.verdicts.iter().filter(|v| !v.pass).count();
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
