use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use shufflevr::optim::StepsizeRule;
use shufflevr_harness::config::{
    AlgoTag, ExperimentConfig, GammaRule, LambdaSpec, ProblemKind, ProblemSpec, StartPoint, SynthSpec, UpdateRuleTag,
};
use shufflevr_harness::csv::{write_aligned, write_trace};
use shufflevr_harness::experiment::{
    build_problem, ensure_dir, grid_search, run_seeds, solve_reference, summary_csv_line, trace_file_name,
    SummaryRow, SUMMARY_HEADER,
};
use shufflevr_harness::verify::{run_suite, SUITES};
use shufflevr_harness::{compare, HarnessError};

#[derive(Parser)]
#[command(name = "shufflevr", version, about = "Variance-reduced random reshuffling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over its seeds and write a trace CSV per seed.
    Run(ExperimentArgs),
    /// Try every grid stepsize and report the best one.
    Grid(ExperimentArgs),
    /// Run property suites and print one JSON report per suite.
    Verify {
        /// Suite to run; repeatable. Defaults to all suites.
        #[arg(long = "suite", value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suites: Vec<String>,
    },
    /// Run several configurations on one problem and align their traces.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the reference optimum of a problem.
    SolveOptimum(ProblemArgs),
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// JSON experiment manifest; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LIBSVM file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Synthetic ridge instance `n,d,kappa,seed`.
    #[arg(long)]
    synth: Option<SynthSpec>,
    #[arg(long, value_enum)]
    problem: Option<ProblemKind>,
    /// A number, `1/n`, `1/10n` or `10/n`.
    #[arg(long)]
    lambda: Option<LambdaSpec>,
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum)]
    algo: Option<AlgoTag>,
    /// t1..t8, auto, rr-saga, grid or manual:<gamma>.
    #[arg(long)]
    gamma_rule: Option<GammaRule>,
    #[arg(long)]
    epochs: Option<usize>,
    /// A count `k` (seeds 0..k) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    update_rule: Option<UpdateRuleTag>,
    #[arg(long)]
    inner_loop: Option<usize>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    x0: Option<StartPoint>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if text.contains(',') {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u64>().with_context(|| format!("bad seed {s:?}")))
            .collect()
    } else {
        let count: u64 = text.parse().with_context(|| format!("bad seed count {text:?}"))?;
        if count == 0 {
            bail!("seed count must be positive");
        }
        Ok((0..count).collect())
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

fn merge_problem(base: Option<ProblemSpec>, args: &ProblemArgs) -> Result<ProblemSpec> {
    let mut spec = match base {
        Some(s) => s,
        None => ProblemSpec {
            kind: args.problem.unwrap_or(ProblemKind::Ridge),
            dataset: None,
            synth: None,
            lambda: None,
            normalize: false,
        },
    };
    if let Some(kind) = args.problem {
        spec.kind = kind;
    }
    if let Some(path) = &args.dataset {
        spec.dataset = Some(path.clone());
        spec.synth = None;
    }
    if let Some(synth) = args.synth {
        spec.synth = Some(synth);
        spec.dataset = None;
    }
    if let Some(lambda) = args.lambda {
        spec.lambda = Some(lambda);
    }
    spec.normalize |= args.normalize;
    Ok(spec)
}

fn merge_experiment(args: &ExperimentArgs, default_rule: Option<GammaRule>) -> Result<ExperimentConfig> {
    let base = args.problem.config.as_deref().map(read_config).transpose()?;
    let problem = merge_problem(base.as_ref().map(|c| c.problem.clone()), &args.problem)?;
    let mut config = match base {
        Some(mut c) => {
            c.problem = problem;
            c
        }
        None => {
            let (Some(algo), Some(rule), Some(epochs)) = (args.algo, args.gamma_rule.clone().or(default_rule), args.epochs) else {
                bail!("without --config, --algo, --gamma-rule and --epochs are required")
            };
            ExperimentConfig::new(problem, algo, rule, epochs, vec![0])
        }
    };
    if let Some(a) = args.algo {
        config.algorithm = a;
    }
    if let Some(r) = &args.gamma_rule {
        config.gamma_rule = r.clone();
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(s) = &args.seeds {
        config.seeds = parse_seeds(s)?;
    }
    config.p = args.p.or(config.p);
    config.delta = args.delta.or(config.delta);
    config.update_rule = args.update_rule.unwrap_or(config.update_rule);
    config.inner_loop = args.inner_loop.or(config.inner_loop);
    config.q = args.q.or(config.q);
    config.x0 = args.x0.unwrap_or(config.x0);
    config.out = args.out.clone().or(config.out);
    config.workers = args.workers.or(config.workers);
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Writes the manifest actually run, with the resolved problem size.
fn write_manifest(dir: &Path, config: &ExperimentConfig, n: usize, d: usize, gamma: Option<f64>) -> Result<()> {
    let manifest = json!({
        "config": config,
        "digest": config.digest(),
        "n": n,
        "d": d,
        "gamma": gamma,
    });
    let mut w = create(&dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    Ok(())
}

fn cmd_run(args: &ExperimentArgs) -> Result<ExitCode> {
    let config = merge_experiment(args, None)?;
    let p = build_problem(&config.problem)?;
    let validated = config.validate(&p)?;
    if matches!(validated.rule, StepsizeRule::GridBest(_)) {
        bail!("gamma rule grid is handled by the grid subcommand");
    }
    if config.out.is_none() && config.seeds.len() > 1 {
        bail!("multiple seeds need --out");
    }
    let cert = solve_reference(&p)?;
    let runs = run_seeds(&p, &cert, &config, &validated, &validated.rule)?;
    let digest = config.digest();
    let label = config.label();
    let tag = config.gamma_rule.to_string();
    let mut rows = Vec::new();
    match &config.out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_manifest(dir, &config, p.n(), p.d(), validated.gamma)?;
            for r in &runs {
                let path = dir.join(trace_file_name(&config, &tag, r.seed));
                let mut w = create(&path)?;
                write_trace(&mut w, &r.trace, p.n(), r.diverged.as_deref())?;
                w.flush()?;
            }
        }
        None => {
            let stdout = io::stdout();
            let r = &runs[0];
            write_trace(stdout.lock(), &r.trace, p.n(), r.diverged.as_deref())?;
        }
    }
    for r in &runs {
        rows.push(SummaryRow::from_trace(&digest, &label, r, p.n()));
    }
    if let Some(dir) = &config.out {
        let mut w = create(&dir.join("summary.csv"))?;
        writeln!(w, "{SUMMARY_HEADER}")?;
        for row in &rows {
            writeln!(w, "{}", summary_csv_line(row))?;
        }
        w.flush()?;
    }
    for row in &rows {
        eprintln!("{}", summary_csv_line(row));
    }
    if let Some(r) = runs.iter().find(|r| r.diverged.is_some()) {
        eprintln!("seed {}: {}", r.seed, r.diverged.as_deref().unwrap_or_default());
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_grid(args: &ExperimentArgs) -> Result<ExitCode> {
    let mut config = merge_experiment(args, Some(GammaRule::Grid))?;
    config.gamma_rule = GammaRule::Grid;
    let p = build_problem(&config.problem)?;
    let validated = config.validate(&p)?;
    let cert = solve_reference(&p)?;
    let (report, runs) = grid_search(&p, &cert, &config, &validated)?;
    if let Some(dir) = &config.out {
        ensure_dir(dir)?;
        write_manifest(dir, &config, p.n(), p.d(), report.selected_gamma)?;
        for (candidate, seeds) in &runs {
            let tag = format!("grid{}", candidate.multiplier);
            for r in seeds {
                let mut w = create(&dir.join(trace_file_name(&config, &tag, r.seed)))?;
                write_trace(&mut w, &r.trace, p.n(), r.diverged.as_deref())?;
                w.flush()?;
            }
        }
        let mut w = create(&dir.join("grid.json"))?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    if report.selected_gamma.is_none() {
        eprintln!("no stable stepsize");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suites: &[String]) -> Result<ExitCode> {
    let names: Vec<&str> = if suites.is_empty() { SUITES.to_vec() } else { suites.iter().map(String::as_str).collect() };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for name in names {
        let report = run_suite(name)?;
        writeln!(out, "{}", serde_json::to_string(&report)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(paths: &[PathBuf], out: Option<&Path>) -> Result<ExitCode> {
    let configs = paths.iter().map(|p| read_config(p)).collect::<Result<Vec<_>>>()?;
    let comparison = compare::compare(&configs)?;
    let columns: Vec<(String, &shufflevr::optim::Trace)> =
        comparison.runs.iter().map(|(label, r)| (label.clone(), &r.trace)).collect();
    let write_summary = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "{SUMMARY_HEADER}")?;
        for row in &comparison.summary {
            writeln!(w, "{}", summary_csv_line(row))?;
        }
        Ok(())
    };
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            let mut w = create(&dir.join("compare.csv"))?;
            write_aligned(&mut w, &columns, comparison.n)?;
            w.flush()?;
            let mut w = create(&dir.join("summary.csv"))?;
            write_summary(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_aligned(&mut lock, &columns, comparison.n)?;
            writeln!(lock)?;
            write_summary(&mut lock)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: &ProblemArgs) -> Result<ExitCode> {
    let base = args.config.as_deref().map(read_config).transpose()?;
    let spec = merge_problem(base.map(|c| c.problem), args)?;
    let p = build_problem(&spec)?;
    let cert = solve_reference(&p)?;
    let report = json!({
        "n": p.n(),
        "d": p.d(),
        "lambda": p.lambda(),
        "smoothness": p.smoothness(),
        "strong_convexity": p.strong_convexity(),
        "method": format!("{:?}", cert.method),
        "f_star": cert.f_star,
        "grad_norm": cert.grad_norm,
        "x_star": cert.x_star,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Verify { suites } => cmd_verify(suites),
        Command::Compare { configs, out } => cmd_compare(configs, out.as_deref()),
        Command::SolveOptimum(args) => cmd_solve(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<HarnessError>().is_some_and(|h| matches!(h, HarnessError::Usage(_)));
            ExitCode::from(if usage { 64 } else { 1 })
        }
    }
}
