use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use metacritic::checkpoint;
use metacritic::config::{ExperimentConfig, Scale};
use metacritic::records::{git_revision, write_results, RunManifest};
use metacritic::suites::{bandit, cartpole, embeddings, gradcheck, regression, Method, RunContext, SuiteOutput};
use metacritic::taskset;

#[derive(Parser)]
#[command(name = "metacritic", version, about = "Meta-critic few-shot learning experiments")]
struct Cli {
    /// TOML file overlaid on the preset for the chosen scale.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "METACRITIC_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    scale: Option<Scale>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Comma-separated method ids, e.g. `standard,meta_critic`.
    #[arg(long, global = true)]
    methods: Option<String>,
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Few-shot sinusoid and mixture regression.
    Regression,
    /// Dirichlet multi-armed bandits.
    Bandit,
    /// Cartpole with varying pole length.
    Cartpole,
    /// Finite-difference checks of every gradient.
    Gradcheck,
    /// Embed tasks with a saved critic and probe the embeddings.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task set file; defaults to probe tasks matching the checkpoint.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Transitions per RL trace.
        #[arg(long, default_value_t = 10)]
        trace_len: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Regression => "regression",
            Command::Bandit => "bandit",
            Command::Cartpole => "cartpole",
            Command::Gradcheck => "gradcheck",
            Command::ExportEmbeddings { .. } => "embeddings",
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, cli.scale)?,
        None => {
            let scale = cli.scale.unwrap_or(Scale::Desk);
            if cli.scale.is_none() {
                eprintln!("no --config given; using desk-scale defaults");
            }
            ExperimentConfig::preset(scale)
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_outputs(out_dir: &Path, name: &str, output: &SuiteOutput) -> anyhow::Result<Vec<String>> {
    let mut written = Vec::new();
    let csv = out_dir.join(format!("{name}.csv"));
    write_results(&csv, &output.records)?;
    written.push(csv);
    for (stem, mc) in &output.critics {
        let path = out_dir.join(format!("{stem}.ckpt"));
        checkpoint::save(&path, mc)?;
        written.push(path);
    }
    for (stem, tasks) in &output.task_sets {
        let path = out_dir.join(format!("{stem}.tasks"));
        taskset::write_task_set(&path, tasks)?;
        written.push(path);
    }
    Ok(written.into_iter().map(|p| p.display().to_string()).collect())
}

fn export_embeddings(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    out_dir: &Path,
    ckpt: &Path,
    tasks: Option<&Path>,
    trace_len: usize,
) -> anyhow::Result<(Vec<String>, Vec<String>)> {
    let mc = checkpoint::load(ckpt)?;
    let tasks = match tasks {
        Some(p) => taskset::read_task_set(p)?,
        None => match (mc.state_dim(), mc.action_dim()) {
            (1, 1) => embeddings::regression_probe_tasks(&cfg.embeddings, ctx.seed),
            (4, 2) => embeddings::cartpole_probe_tasks(&cfg.embeddings, ctx.seed),
            (s, a) => bail!("no default probe tasks for a critic with state width {s} and action width {a}; pass --tasks"),
        },
    };
    let rows = embeddings::embed_tasks(&mc, &tasks, &cfg.embeddings, trace_len, ctx.seed, ctx.jobs)?;
    let summary = match embeddings::probe(&rows, cfg.embeddings.knn) {
        Ok(p) => format!("embeddings of {} tasks: {}", rows.len(), p.describe()),
        Err(e) => format!("embeddings of {} tasks: not probed ({e})", rows.len()),
    };
    let csv = out_dir.join("embeddings.csv");
    embeddings::write_embeddings(&csv, &rows)?;
    let task_file = out_dir.join("embeddings.tasks");
    taskset::write_task_set(&task_file, &tasks)?;
    Ok((vec![summary], vec![csv.display().to_string(), task_file.display().to_string()]))
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let cfg = load_config(&cli)?;
    let ctx = RunContext {
        seed: cfg.seed,
        jobs: cli.jobs,
        methods: cli.methods.as_deref().map(Method::parse_list).transpose()?,
    };
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let name = cli.command.name();
    let started = Instant::now();
    let suite = |output: SuiteOutput| -> anyhow::Result<(Vec<String>, Vec<String>)> {
        let written = write_outputs(&cli.out, name, &output)?;
        Ok((output.summary, written))
    };
    let mut gradcheck_failed = false;
    let (summary, mut outputs) = match &cli.command {
        Command::Regression => suite(regression::run(&cfg.regression, &ctx)?)?,
        Command::Bandit => suite(bandit::run(&cfg.bandit, &ctx)?)?,
        Command::Cartpole => suite(cartpole::run(&cfg.cartpole, &ctx)?)?,
        Command::Gradcheck => {
            let output = gradcheck::run(&cfg.gradcheck, &ctx)?;
            gradcheck_failed = !gradcheck::passed(&output.records, cfg.gradcheck.tolerance);
            suite(output)?
        }
        Command::ExportEmbeddings {
            checkpoint,
            tasks,
            trace_len,
        } => export_embeddings(&cfg, &ctx, &cli.out, checkpoint, tasks.as_deref(), *trace_len)?,
    };
    for line in &summary {
        println!("{line}");
    }
    let manifest_path = cli.out.join(format!("{name}_manifest.json"));
    outputs.push(manifest_path.display().to_string());
    RunManifest {
        experiment: name.into(),
        seed: ctx.seed,
        scale: cfg.scale,
        methods: ctx.methods.iter().flatten().map(|m| m.id().to_string()).collect(),
        jobs: ctx.jobs,
        git_revision: git_revision(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs,
        config: cfg,
    }
    .write(&manifest_path)?;
    if gradcheck_failed {
        bail!("gradient checks exceeded tolerance");
    }
    Ok(())
}
