//! Pipeline command line: each subcommand runs one stage against a JSON
//! config and leaves artifacts (with JSON sidecars) in the output
//! directory. Exit codes: 0 success, 1 usage or config error, 2 runtime
//! error, 3 failed result assertion.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dwpi::agent::oracle_match_fraction;
use dwpi::artifact;
use dwpi::baselines::{mwal_infer, pm_infer, FeatureSource};
use dwpi::config::RunConfig;
use dwpi::demos::{feature_stats, split, ReturnSummary};
use dwpi::error::DwpiError;
use dwpi::eval::{benchmark, Method, Regime};
use dwpi::model::MlpModel;
use dwpi::morl::{derive_seed, enumerate_simplex, NoiseSpec};

#[derive(Parser)]
#[command(name = "dwpi", version, about = "Preference inference pipeline for multi-objective RL")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Defaults to all cores, except `eval` which defaults
    /// to 1 so timings stay comparable.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Pm,
    Mwal,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the preference-conditioned Q-learning agent.
    TrainAgent {
        #[command(flatten)]
        common: Common,
    },
    /// Roll the trained agent out into a demonstration set.
    GenDemos {
        #[command(flatten)]
        common: Common,
        /// Agent artifact; defaults to `<out>/agent.dwqt`.
        #[arg(long)]
        agent: Option<PathBuf>,
    },
    /// Fit the inference network on a demonstration set.
    TrainDwpi {
        #[command(flatten)]
        common: Common,
        /// Demo file; defaults to `<out>/demos.jsonl`.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Infer a preference from a return summary with the trained network.
    Infer {
        /// Model artifact.
        #[arg(long)]
        model: PathBuf,
        /// Return summary as a JSON array, e.g. `[30.0, -13.0]`.
        #[arg(long)]
        features: String,
    },
    /// Infer a preference with one of the apprenticeship baselines.
    Baseline {
        #[arg(value_enum)]
        method: BaselineMethod,
        #[command(flatten)]
        common: Common,
        /// Return summary as a JSON array.
        #[arg(long)]
        features: String,
    },
    /// Benchmark the network against both baselines on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Exit 3 unless the network matches or beats both baselines on
        /// every accuracy metric and is at least 100x faster per query.
        #[arg(long)]
        assert_dwpi_best: bool,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentSidecar {
    config_hash: String,
    spec_hash: String,
    environment: String,
    grid_step: f64,
    master_seed: u64,
    oracle_match: f64,
    training_seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelSidecar {
    config_hash: String,
    spec_hash: String,
    master_seed: u64,
    training_seconds: f64,
    epochs: usize,
    final_val_loss: f64,
}

enum CliError {
    Usage(String),
    Runtime(String),
    Assertion(String),
}

impl From<DwpiError> for CliError {
    fn from(e: DwpiError) -> Self {
        match e {
            DwpiError::InvalidConfig(_) | DwpiError::Json(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are success paths, not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Loads the config, applies flag overrides, sets up the worker pool, and
/// echoes the effective config into the output directory.
fn setup(common: &Common, default_workers: Option<usize>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&common.config).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
        cfg.apply_master_seed();
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    let workers = common.workers.or(default_workers);
    if let Some(w) = workers {
        if w < 1 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        // Ignore failure: the global pool may already exist in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", cfg.out_dir.display())))?;
    let echo = cfg.out_dir.join("config.json");
    let json = serde_json::to_string_pretty(&cfg).map_err(DwpiError::from)?;
    std::fs::write(&echo, json)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", echo.display())))?;
    Ok(cfg)
}

fn parse_features(raw: &str) -> CliResult<ReturnSummary> {
    let values: Vec<f64> = serde_json::from_str(raw)
        .map_err(|e| CliError::Usage(format!("--features must be a JSON number array: {e}")))?;
    ReturnSummary::new(values).map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::TrainAgent { common } => cmd_train_agent(&common),
        Cmd::GenDemos { common, agent } => cmd_gen_demos(&common, agent),
        Cmd::TrainDwpi { common, demos } => cmd_train_dwpi(&common, demos),
        Cmd::Infer { model, features } => cmd_infer(&model, &features),
        Cmd::Baseline {
            method,
            common,
            features,
        } => cmd_baseline(method, &common, &features),
        Cmd::Eval {
            common,
            agent,
            model,
            demos,
            assert_dwpi_best,
        } => cmd_eval(&common, agent, model, demos, assert_dwpi_best),
    }
}

fn cmd_train_agent(common: &Common) -> CliResult<()> {
    let cfg = setup(common, None)?;
    let spec = cfg.env_spec()?;
    let space = enumerate_simplex(spec.m(), cfg.grid_step)?;
    let t0 = Instant::now();
    let q = dwpi::train_agent(&spec, &space, &cfg.train)?;
    let training_seconds = t0.elapsed().as_secs_f64();
    let oracle_match = oracle_match_fraction(&q, 1e-6)?;
    let path = cfg.out_dir.join("agent.dwqt");
    artifact::save_qtable(&q, &path)?;
    artifact::write_sidecar(
        &path,
        &AgentSidecar {
            config_hash: cfg.config_hash()?,
            spec_hash: spec.spec_hash(),
            environment: spec.name().to_string(),
            grid_step: cfg.grid_step,
            master_seed: cfg.master_seed,
            oracle_match,
            training_seconds,
        },
    )?;
    println!(
        "agent written to {} (oracle match {:.1}%)",
        path.display(),
        oracle_match * 100.0
    );
    Ok(())
}

fn cmd_gen_demos(common: &Common, agent: Option<PathBuf>) -> CliResult<()> {
    let cfg = setup(common, None)?;
    let agent_path = agent.unwrap_or_else(|| cfg.out_dir.join("agent.dwqt"));
    let q = artifact::load_qtable(&agent_path)?;
    let spec_cfg = cfg.env_spec()?;
    if spec_cfg.spec_hash() != q.spec().spec_hash() {
        return Err(CliError::Usage(format!(
            "agent {} was trained on a different environment than the config",
            agent_path.display()
        )));
    }
    let noise = NoiseSpec::new(cfg.noise_eta, q.spec().oracle_ranges()?)?;
    let ds = dwpi::generate_demos(
        &q,
        &noise,
        cfg.demos.count,
        cfg.demos.episodes_per_sample,
        cfg.demo_seed(),
    )?;
    let ds = split(&ds, cfg.demos.fractions, cfg.split_seed())?;
    let path = cfg.out_dir.join("demos.jsonl");
    ds.save(&path)?;
    println!("{} demonstrations written to {}", ds.demos.len(), path.display());
    Ok(())
}

fn cmd_train_dwpi(common: &Common, demos: Option<PathBuf>) -> CliResult<()> {
    let cfg = setup(common, None)?;
    let demos_path = demos.unwrap_or_else(|| cfg.out_dir.join("demos.jsonl"));
    let ds = dwpi::DemoSet::load(&demos_path)?;
    let stats = feature_stats(&ds)?;
    let model = MlpModel::new(
        ds.header.m,
        &[64, 64],
        stats,
        cfg.grid_step,
        ds.header.spec_hash.clone(),
        derive_seed(cfg.master_seed, 12, 1),
    )?;
    let t0 = Instant::now();
    let (model, history) = dwpi::fit(model, &ds, &cfg.fit)?;
    let training_seconds = t0.elapsed().as_secs_f64();
    let final_val_loss = history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
    let path = cfg.out_dir.join("model.dwpm");
    artifact::save_model(&model, &path)?;
    artifact::write_sidecar(
        &path,
        &ModelSidecar {
            config_hash: cfg.config_hash()?,
            spec_hash: ds.header.spec_hash.clone(),
            master_seed: cfg.master_seed,
            training_seconds,
            epochs: history.len(),
            final_val_loss,
        },
    )?;
    let curve = cfg.out_dir.join("loss_history.json");
    let json = serde_json::to_string_pretty(&history).map_err(DwpiError::from)?;
    std::fs::write(&curve, json)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", curve.display())))?;
    println!(
        "model written to {} ({} epochs, best validation loss {:.6})",
        path.display(),
        history.len(),
        final_val_loss
    );
    Ok(())
}

fn cmd_infer(model_path: &Path, features: &str) -> CliResult<()> {
    let features = parse_features(features)?;
    let model = artifact::load_model(model_path)?;
    let inference = model.infer(&features)?;
    let out = serde_json::json!({
        "raw": inference.raw,
        "snapped": inference.snapped,
        "snapped_index": inference.snapped_index,
    });
    println!("{out}");
    Ok(())
}

fn cmd_baseline(method: BaselineMethod, common: &Common, features: &str) -> CliResult<()> {
    let demo = parse_features(features)?;
    let cfg = setup(common, None)?;
    let spec = cfg.env_spec()?;
    let bcfg = cfg.baseline_config(&spec);
    let result = match method {
        BaselineMethod::Pm => pm_infer(&spec, &demo, &bcfg, &FeatureSource::InnerRl)?,
        BaselineMethod::Mwal => mwal_infer(&spec, &demo, &bcfg, &FeatureSource::InnerRl)?,
    };
    println!(
        "{}",
        serde_json::to_string(&result).map_err(DwpiError::from)?
    );
    Ok(())
}

fn cmd_eval(
    common: &Common,
    agent: Option<PathBuf>,
    model: Option<PathBuf>,
    demos: Option<PathBuf>,
    assert_dwpi_best: bool,
) -> CliResult<()> {
    // Timing command: a single worker unless overridden.
    let cfg = setup(common, Some(1))?;
    let agent_path = agent.unwrap_or_else(|| cfg.out_dir.join("agent.dwqt"));
    let model_path = model.unwrap_or_else(|| cfg.out_dir.join("model.dwpm"));
    let demos_path = demos.unwrap_or_else(|| cfg.out_dir.join("demos.jsonl"));
    let q = artifact::load_qtable(&agent_path)?;
    let net = artifact::load_model(&model_path)?;
    let ds = dwpi::DemoSet::load(&demos_path)?;
    if net.spec_hash() != q.spec().spec_hash() || ds.header.spec_hash != q.spec().spec_hash() {
        return Err(CliError::Usage(
            "agent, model, and demos were not produced for the same environment".into(),
        ));
    }
    let training_cost = std::fs::read_to_string(artifact::sidecar_path(&model_path))
        .ok()
        .and_then(|text| serde_json::from_str::<ModelSidecar>(&text).ok())
        .map(|s| s.training_seconds)
        .unwrap_or(0.0);
    let mut test = ds.of_split(dwpi::Split::Test);
    if let Some(cap) = cfg.eval.max_queries {
        test.truncate(cap);
    }
    let bcfg = cfg.baseline_config(q.spec());
    let report = benchmark(
        q.spec(),
        &q,
        &net,
        &test,
        &bcfg,
        &bcfg,
        std::time::Duration::from_secs_f64(training_cost),
        cfg.master_seed,
    )?;
    let mut report = report;
    // Stamp the producing config into the report alongside the seeds.
    let report_json = {
        let mut v = serde_json::to_value(&report).map_err(DwpiError::from)?;
        v["config_hash"] = serde_json::Value::String(cfg.config_hash()?);
        serde_json::to_string_pretty(&v).map_err(DwpiError::from)?
    };
    let json_path = cfg.out_dir.join("report.json");
    std::fs::write(&json_path, report_json)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", json_path.display())))?;
    std::fs::write(cfg.out_dir.join("metrics.csv"), report.metrics_csv())
        .map_err(|e| CliError::Runtime(format!("writing metrics.csv: {e}")))?;
    std::fs::write(cfg.out_dir.join("timing.csv"), report.timing_csv())
        .map_err(|e| CliError::Runtime(format!("writing timing.csv: {e}")))?;
    println!("report written to {}", json_path.display());
    if assert_dwpi_best {
        report.stats.sort_by_key(|s| (s.method.label(), s.regime.label()));
        check_dwpi_best(&report)?;
    }
    Ok(())
}

fn check_dwpi_best(report: &dwpi::EvalReport) -> CliResult<()> {
    for regime in [Regime::Optimal, Regime::SubOptimal] {
        let Some(d) = report.stat(Method::Dwpi, regime) else {
            continue;
        };
        for method in [Method::Pm, Method::Mwal] {
            let Some(b) = report.stat(method, regime) else {
                continue;
            };
            for (name, dv, bv) in [
                ("kl", d.mean_kl, b.mean_kl),
                ("mse", d.mean_mse, b.mean_mse),
                ("utility_loss", d.mean_utility_loss, b.mean_utility_loss),
            ] {
                if dv > bv {
                    return Err(CliError::Assertion(format!(
                        "dwpi {name} {dv} exceeds {} {bv} ({} demos)",
                        method.label(),
                        regime.label()
                    )));
                }
            }
            if d.median_time_s * 100.0 > b.median_time_s {
                return Err(CliError::Assertion(format!(
                    "dwpi median query time {}s not 100x faster than {} {}s",
                    d.median_time_s,
                    method.label(),
                    b.median_time_s
                )));
            }
        }
    }
    Ok(())
}
