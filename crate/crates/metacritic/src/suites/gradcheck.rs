//! Finite-difference checks of every hand-derived gradient.

use metacritic_core::gradsuite::gradient_suite;

use super::{ordered_map, RunContext, SuiteOutput};
use crate::config::GradcheckConfig;
use crate::error::Result;
use crate::records::ResultRecord;

/// One row per check and seed: metric `max_rel_error`, with the number of
/// coordinates compared in `arms_or_k` and those skipped at kinks in
/// `budget`. `task_id` holds the seed.
pub fn run(cfg: &GradcheckConfig, ctx: &RunContext) -> Result<SuiteOutput> {
    let per_seed = ordered_map(ctx.jobs, (0..cfg.seeds).collect(), |s| Ok(gradient_suite(ctx.seed.wrapping_add(s))?))?;
    let mut out = SuiteOutput::default();
    for (s, checks) in per_seed.into_iter().enumerate() {
        for c in checks {
            out.records.push(ResultRecord {
                experiment: "gradcheck".into(),
                method: c.name.into(),
                condition: "finite_difference".into(),
                arms_or_k: c.coordinates,
                budget: c.skipped,
                task_id: s,
                repeat: 0,
                metric: "max_rel_error".into(),
                value: c.max_rel_error,
            });
        }
    }
    let worst = out.records.iter().max_by(|a, b| a.value.total_cmp(&b.value));
    if let Some(w) = worst {
        out.summary.push(format!(
            "gradcheck: {} checks over {} seeds, worst relative error {:.2e} ({} seed {}), {}",
            out.records.len(),
            cfg.seeds,
            w.value,
            w.method,
            w.task_id,
            if passed(&out.records, cfg.tolerance) { "within tolerance" } else { "OVER TOLERANCE" }
        ));
    }
    Ok(out)
}

/// Every check within `tolerance`, and at most a tenth of coordinates
/// skipped.
pub fn passed(records: &[ResultRecord], tolerance: f64) -> bool {
    records.iter().all(|r| r.value <= tolerance && r.budget * 10 <= r.arms_or_k)
}
