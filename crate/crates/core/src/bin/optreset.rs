use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use optreset::checkpoint::Checkpoint;
use optreset::config::{CliConfig, Verbosity};
use optreset::harness::{self, AnchorParams, CellKey, RunLine, RunStatus, Stat, SweepOptions};
use optreset::train;
use optreset::Error;

/// Optimizer-reset laboratory.
#[derive(Debug, Parser)]
#[command(name = "optreset", version)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set reset.kind=per_iteration`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Results directory; overrides `results_dir` in the config.
    #[arg(long, global = true)]
    results_dir: Option<PathBuf>,
    /// Only warnings and errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one training job and append its record to runs.jsonl.
    Train,
    /// Run the configured sweep grid.
    Sweep,
    /// Solve the configured environment exactly and write its anchors.
    Oracle,
    /// Aggregate a results directory into curves.csv and auc.csv.
    Report {
        /// Results directory (alternative to --results-dir).
        dir: Option<PathBuf>,
        /// Report raw instead of length-normalized AUC.
        #[arg(long)]
        raw_auc: bool,
    },
}

/// Exit codes: 0 success, 1 runtime, 2 usage/config, 3 partial sweep
/// failure, 4 degenerate environment.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn config(e: Error) -> Self {
        match e {
            Error::Degenerate(m) => Self::new(4, format!("degenerate environment: {m}")),
            other => Self::new(2, other.to_string()),
        }
    }

    fn runtime(e: Error) -> Self {
        match e {
            Error::Degenerate(m) => Self::new(4, format!("degenerate environment: {m}")),
            Error::Config(m) => Self::new(2, format!("config error: {m}")),
            other => Self::new(1, other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("optreset: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn init_logging(quiet: bool, verbosity: Verbosity) {
    let level = match (quiet, verbosity) {
        (true, _) | (_, Verbosity::Quiet) => log::LevelFilter::Warn,
        (_, Verbosity::Info) => log::LevelFilter::Info,
        (_, Verbosity::Debug) => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

fn load_config(cli: &Cli) -> Result<CliConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::new(2, "--config PATH is required"))?;
    let mut cfg = CliConfig::load(path, &cli.overrides).map_err(Failure::config)?;
    if let Some(dir) = &cli.results_dir {
        cfg.results_dir = dir.clone();
    }
    init_logging(cli.quiet, cfg.verbosity);
    Ok(cfg)
}

fn create_dir(dir: &std::path::Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::new(1, format!("cannot create {}: {e}", dir.display())))
}

fn anchor_params(cfg: &CliConfig) -> AnchorParams {
    match cfg.sweep_config() {
        Ok(s) => s.anchor_params(),
        Err(_) => AnchorParams {
            episode_cap: cfg.train.episode_cap,
            ..AnchorParams::default()
        },
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Train => cmd_train(cli),
        Command::Sweep => cmd_sweep(cli),
        Command::Oracle => cmd_oracle(cli),
        Command::Report { dir, raw_auc } => {
            init_logging(cli.quiet, Verbosity::Info);
            let dir = match dir.clone().or_else(|| cli.results_dir.clone()) {
                Some(d) => d,
                None if cli.config.is_some() => load_config(cli)?.results_dir,
                None => return Err(Failure::new(2, "report needs a results directory")),
            };
            cmd_report(&dir, !raw_auc)
        }
    }
}

fn cmd_train(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let env = cfg.env().map_err(Failure::config)?;
    let spec = env.build(cfg.train.gamma).map_err(Failure::config)?;
    create_dir(&cfg.results_dir)?;
    let ckpt_dir = cfg.checkpoint_dir();
    create_dir(&ckpt_dir)?;

    let outcome = train::train(&cfg.train, &spec).map_err(Failure::runtime)?;
    let record = &outcome.record;
    log::info!(
        "trained {} iterations x {} steps in {:.2}s, final return {:.4}",
        cfg.train.iterations,
        cfg.train.inner_steps,
        record.wall_clock_secs,
        record.eval_returns.last().copied().unwrap_or(f64::NAN)
    );
    if let Err(e) = harness::ensure_anchors(
        &cfg.results_dir,
        &[(env.name(), &spec)],
        &anchor_params(&cfg),
    ) {
        log::warn!("no anchors for {}: {e}", env.name());
    }
    let line = RunLine {
        key: CellKey {
            env: env.name(),
            optimizer: harness::optimizer_label(&cfg.train.optimizer),
            policy: cfg.train.reset.kind,
            k: cfg.train.inner_steps,
            seed: cfg.train.seed,
        },
        iterations: cfg.train.iterations,
        fingerprint: record.fingerprint.clone(),
        status: RunStatus::Ok,
        error: None,
        record: Some(record.clone()),
    };
    harness::append_run(&cfg.results_dir, &line).map_err(Failure::runtime)?;
    harness::canonicalize_runs(&cfg.results_dir).map_err(Failure::runtime)?;
    let ckpt = Checkpoint {
        layer_widths: outcome.def.layer_widths.clone(),
        agent: outcome.agent,
        opt_state: outcome.opt_state,
    };
    let ckpt_path = ckpt_dir.join(format!("{}.ckpt", record.fingerprint));
    ckpt.save(&ckpt_path).map_err(Failure::runtime)?;
    log::info!("checkpoint written to {}", ckpt_path.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let sweep = cfg.sweep_config().map_err(Failure::config)?;
    let opts = SweepOptions {
        results_dir: cfg.results_dir.clone(),
        workers: cli.workers.unwrap_or(0),
    };
    let result = harness::run_sweep(&sweep, &opts).map_err(Failure::runtime)?;
    if !result.failed.is_empty() {
        let list: Vec<String> = result.failed.iter().map(|k| k.to_string()).collect();
        return Err(Failure::new(
            3,
            format!("{} cell(s) failed:\n  {}", list.len(), list.join("\n  ")),
        ));
    }
    log::info!(
        "sweep complete: {} cells run, {} total",
        result.executed,
        result.runs.len()
    );
    Ok(())
}

fn cmd_oracle(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let env = cfg.env().map_err(Failure::config)?;
    let spec = env.build(cfg.train.gamma).map_err(Failure::config)?;
    let params = anchor_params(&cfg);
    let q =
        optreset::rl::value_iteration_oracle(&spec, params.oracle_tol).map_err(Failure::runtime)?;
    println!("# Q* for {} (gamma = {})", env.name(), spec.gamma);
    let header: Vec<String> = (0..spec.n_actions).map(|a| format!("a{a}")).collect();
    println!("state {}", header.join(" "));
    for s in 0..spec.n_states {
        let row: Vec<String> = q.row(s).iter().map(|v| format!("{v:.10}")).collect();
        println!("{s} {}", row.join(" "));
    }
    create_dir(&cfg.results_dir)?;
    let anchors = harness::ensure_anchors(&cfg.results_dir, &[(env.name(), &spec)], &params)
        .map_err(Failure::runtime)?;
    let a = anchors[&env.name()].anchors;
    println!("optimal_return {}", a.reference_score);
    println!("random_return {}", a.random_score);
    Ok(())
}

fn cmd_report(dir: &std::path::Path, auc_normalized: bool) -> Result<(), Failure> {
    let runs = harness::read_runs(dir).map_err(Failure::runtime)?;
    if runs.is_empty() {
        return Err(Failure::new(
            2,
            format!("no results in {}", dir.join(harness::RUNS_FILE).display()),
        ));
    }
    let anchors = harness::read_anchors(dir).map_err(Failure::runtime)?;
    let summary = harness::summarize(&runs, &anchors, auc_normalized).map_err(Failure::runtime)?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    harness::write_report_csvs(dir, &runs, &summary).map_err(Failure::runtime)?;
    if summary.auc.is_empty() {
        return Err(Failure::new(1, "no successful runs with anchors to report"));
    }
    print!("{}", harness::format_table(&summary.auc, Stat::Median));
    if summary.auc.iter().any(|r| r.partial) {
        println!("(* partial: some runs of this configuration failed or were excluded)");
    }
    Ok(())
}
