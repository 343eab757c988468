use shufflevr::optim::StepsizeRule;

use crate::config::ExperimentConfig;
use crate::experiment::{build_problem, run_seeds, solve_reference, SeedRun, SummaryRow};
use crate::HarnessError;

/// Runs of several configurations on one shared problem.
pub struct Comparison {
    pub n: usize,
    /// `(label, run of the config's first seed)` in input order.
    pub runs: Vec<(String, SeedRun)>,
    pub summary: Vec<SummaryRow>,
}

/// Runs the first seed of each configuration. All configurations must
/// describe the same problem.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison, HarnessError> {
    let first = configs
        .first()
        .ok_or_else(|| HarnessError::Usage("compare needs at least one config".into()))?;
    if let Some(other) = configs.iter().find(|c| c.problem != first.problem) {
        return Err(HarnessError::Config(format!(
            "mixed problems: {} and {} describe different problems",
            first.label(),
            other.label()
        )));
    }
    let p = build_problem(&first.problem)?;
    let cert = solve_reference(&p)?;
    let mut runs = Vec::with_capacity(configs.len());
    let mut summary = Vec::with_capacity(configs.len());
    for (k, config) in configs.iter().enumerate() {
        let validated = config.validate(&p)?;
        if matches!(validated.rule, StepsizeRule::GridBest(_)) {
            return Err(HarnessError::Config("compare needs fixed stepsize rules; run grid first".into()));
        }
        let mut single = config.clone();
        single.seeds.truncate(1);
        let mut seed_runs = run_seeds(&p, &cert, &single, &validated, &validated.rule)?;
        let run = seed_runs.remove(0);
        let label = format!("{k}:{}", config.label());
        summary.push(SummaryRow::from_trace(&config.digest(), &label, &run, p.n()));
        runs.push((label, run));
    }
    Ok(Comparison { n: p.n(), runs, summary })
}
