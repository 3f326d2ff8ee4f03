//! Command-line harness: config loading, seed fan-out, artifact writing.

pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use optac_core::envgen::{gen_misspecified, gen_model_class};
use optac_core::lemmalab::LemmaId;
use serde_json::json;
use thiserror::Error;

use config::{ClassSection, ConfigError, EnvSection, ExperimentConfig, Kind};
use experiments::LemmaRequest;
use output::{tag, Artifacts};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
    #[error("{0}")]
    Config(#[from] ConfigError),
}

impl RuntimeError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "optac-lab", version, about = "Optimistic actor-critic and cRFF experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run this single seed instead of the config's seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for seed-level parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Actor-critic runs.
    Optac {
        #[command(subcommand)]
        action: RunAction,
    },
    /// cRFF error sweeps.
    Crff {
        #[command(subcommand)]
        action: SweepAction,
    },
    /// Oracle reductions against exact dynamic programming.
    Oracles {
        #[command(subcommand)]
        action: BenchAction,
    },
    /// Property checks of the analysis inequalities.
    Lemmas {
        #[command(subcommand)]
        action: LemmaAction,
    },
    /// Plot-ready long-format CSV from metrics files.
    Plot {
        #[command(subcommand)]
        action: PlotAction,
    },
    /// Write generated environments in the MDP text format.
    Envgen {
        #[command(subcommand)]
        action: EnvgenAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum RunAction {
    Run,
}

#[derive(Debug, Subcommand)]
pub enum SweepAction {
    Sweep,
}

#[derive(Debug, Subcommand)]
pub enum BenchAction {
    Bench,
}

#[derive(Debug, Subcommand)]
pub enum LemmaAction {
    Run {
        /// Lemma id; repeatable. All deterministic checks when omitted.
        #[arg(long)]
        lemma: Vec<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Per-iteration metrics CSVs (`seed_<n>.csv`).
    Optac,
    /// A cRFF `errors.csv`.
    Crff,
}

#[derive(Debug, Subcommand)]
pub enum PlotAction {
    Emit {
        #[arg(long, value_enum, default_value = "optac")]
        kind: PlotKind,
        /// Directory of `seed_<n>.csv` files, or a cRFF error table.
        #[arg(long)]
        input: PathBuf,
        /// Metrics column to plot against `k`.
        #[arg(long, default_value = "mixture_gap")]
        metric: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum EnvgenAction {
    Make {
        #[arg(long, default_value_t = 20)]
        states: usize,
        #[arg(long, default_value_t = 4)]
        actions: usize,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        /// Model class size; no class is written when zero.
        #[arg(long, default_value_t = 0)]
        class_size: usize,
        #[arg(long, default_value_t = 11)]
        class_seed: u64,
        /// Also write a misspecified kernel with this deviation budget.
        #[arg(long)]
        zeta: Option<f64>,
    },
}

fn load(global: &Global) -> Result<(ExperimentConfig, PathBuf), RuntimeError> {
    let path = global.config.clone().ok_or(ConfigError::Invalid {
        key: "--config",
        message: "this command needs a config file".into(),
    })?;
    Ok((ExperimentConfig::load(&path)?, path))
}

fn out_dir(global: &Global, cfg: Option<&ExperimentConfig>) -> Result<PathBuf, RuntimeError> {
    global
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .ok_or_else(|| {
            ConfigError::Invalid {
                key: "out",
                message: "no output directory: pass --out or set `out` in the config".into(),
            }
            .into()
        })
}

fn seeds(global: &Global, cfg: &ExperimentConfig) -> Vec<u64> {
    global.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

fn config_json(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

/// Runs a config-driven experiment and writes its manifest.
fn experiment(
    global: &Global,
    allowed: &[Kind],
    command: &'static str,
    run: fn(&ExperimentConfig, &[u64], &mut Artifacts) -> Result<bool, RuntimeError>,
) -> Result<bool, RuntimeError> {
    let (cfg, path) = load(global)?;
    cfg.expect_kind(allowed, command)?;
    let seeds = seeds(global, &cfg);
    let mut art = Artifacts::new(&out_dir(global, Some(&cfg))?)?;
    let ok = run(&cfg, &seeds, &mut art)?;
    let mut echo = config_json(&cfg);
    echo["source"] = json!(path.display().to_string());
    art.finish(command, echo, &seeds)?;
    Ok(ok)
}

fn lemmas(global: &Global, lemma: &[String], trials: Option<usize>) -> Result<bool, RuntimeError> {
    let parse = |names: &[String]| -> Result<Vec<LemmaId>, ConfigError> {
        if names.is_empty() {
            return Ok(LemmaId::DETERMINISTIC.to_vec());
        }
        names
            .iter()
            .map(|n| {
                LemmaId::parse(n).ok_or_else(|| ConfigError::Invalid {
                    key: "--lemma",
                    message: format!("unknown lemma `{n}`"),
                })
            })
            .collect()
    };
    let (req, seeds, cfg) = match &global.config {
        Some(_) => {
            let (cfg, _) = load(global)?;
            cfg.expect_kind(&[Kind::Lemmas], "lemmas run")?;
            let section = cfg.lemmas()?;
            let names = if lemma.is_empty() {
                section.lemmas.clone().unwrap_or_default()
            } else {
                lemma.to_vec()
            };
            let mut req = LemmaRequest::seed7(parse(&names)?, trials.unwrap_or(section.trials));
            if let Some(env) = &cfg.env {
                req.env = env.clone();
            }
            if let Some(class) = &cfg.class {
                req.class = class.clone();
            }
            let seeds = seeds(global, &cfg);
            (req, seeds, Some(cfg))
        }
        None => {
            let trials = trials.ok_or(ConfigError::Invalid {
                key: "--trials",
                message: "required without --config".into(),
            })?;
            let req = LemmaRequest::seed7(parse(lemma)?, trials);
            (req, vec![global.seed.unwrap_or(0)], None)
        }
    };
    let mut art = Artifacts::new(&out_dir(global, cfg.as_ref())?)?;
    let passed = experiments::run_lemmas(&req, &seeds, &mut art)?;
    let echo = json!({
        "lemmas": req.lemmas.iter().map(|l| l.name()).collect::<Vec<_>>(),
        "trials": req.trials,
        "env": req.env,
        "class": req.class,
        "source": global.config.as_ref().map(|p| p.display().to_string()),
    });
    art.finish("lemmas run", echo, &seeds)?;
    if !passed {
        eprintln!("some lemma checks reported violations; see lemmas.csv");
    }
    Ok(true)
}

fn plot(global: &Global, kind: PlotKind, input: &Path, metric: &str) -> Result<bool, RuntimeError> {
    let out = out_dir(global, None)?;
    let mut art = Artifacts::new(&out)?;
    let perr = |e: plot::PlotError| RuntimeError::Other(e.to_string());
    match kind {
        PlotKind::Optac => {
            let files = plot::seed_files(input).map_err(|e| RuntimeError::io(input, e))?;
            let mut curves = Vec::new();
            for (seed, path) in &files {
                let text = std::fs::read_to_string(path).map_err(|e| RuntimeError::io(path, e))?;
                curves.push(plot::read_curve(&text, &path.display().to_string(), seed.to_string(), "k", metric).map_err(perr)?);
            }
            art.write(&format!("{metric}.csv"), &plot::emit(metric, &curves).map_err(perr)?)?;
        }
        PlotKind::Crff => {
            let text = std::fs::read_to_string(input).map_err(|e| RuntimeError::io(input, e))?;
            let series = plot::crff_curves(&text, &input.display().to_string()).map_err(perr)?;
            if series.is_empty() {
                return Err(perr(plot::PlotError::Empty));
            }
            for (name, curves) in &series {
                art.write(&format!("{name}.csv"), &plot::emit(name, curves).map_err(perr)?)?;
            }
        }
    }
    let echo = json!({ "kind": format!("{kind:?}").to_lowercase(), "input": input.display().to_string(), "metric": metric });
    art.finish("plot emit", echo, &[])?;
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn envgen(
    global: &Global,
    states: usize,
    actions: usize,
    horizon: usize,
    rank: usize,
    class_size: usize,
    class_seed: u64,
    zeta: Option<f64>,
) -> Result<bool, RuntimeError> {
    let cfg = global.config.as_ref().map(|_| load(global)).transpose()?.map(|c| c.0);
    let mut env_section = cfg.as_ref().and_then(|c| c.env.clone()).unwrap_or(EnvSection {
        seed: 7,
        n_states: states,
        n_actions: actions,
        horizon,
        rank,
    });
    if let Some(seed) = global.seed {
        env_section.seed = seed;
    }
    let class_section = cfg.as_ref().and_then(|c| c.class.clone()).or((class_size > 0).then_some(ClassSection {
        size: class_size,
        seed: class_seed,
    }));
    let env = env_section.build()?;
    let mut art = Artifacts::new(&out_dir(global, cfg.as_ref())?)?;
    art.write("env.mdp", &env.to_text())?;
    let mut truth_index = None;
    if let Some(c) = &class_section {
        let class = gen_model_class(&env, c.size, c.seed).map_err(|e| ConfigError::Invalid {
            key: "class",
            message: e.to_string(),
        })?;
        truth_index = class.truth_index;
        for (i, m) in class.models.iter().enumerate() {
            art.write(&format!("class/model_{i:03}.mdp"), &m.to_text())?;
        }
    }
    let mut measured_zeta = None;
    if let Some(z) = zeta {
        let m = gen_misspecified(&env, z, env_section.seed).map_err(|e| ConfigError::Invalid {
            key: "--zeta",
            message: e.to_string(),
        })?;
        measured_zeta = Some(m.zeta);
        let mut csv = String::from("h,s,a,next,prob\n");
        for ((h, s, a, x), p) in m.true_kernel.probs.indexed_iter() {
            csv.push_str(&format!("{h},{s},{a},{x},{p}\n"));
        }
        art.write(&format!("misspecified_zeta_{}.csv", tag(z)), &csv)?;
    }
    let echo = json!({
        "env": env_section,
        "class": class_section,
        "truth_index": truth_index,
        "zeta": zeta,
        "measured_zeta": measured_zeta,
        "v_star": experiments::optimal_value(&env)?,
    });
    art.finish("envgen make", echo, &[env_section.seed])?;
    Ok(true)
}

/// Dispatches a parsed command line. `Ok(false)` means the run finished but
/// some seeds failed.
pub fn run(cli: &Cli) -> Result<bool, RuntimeError> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(ConfigError::Invalid {
                key: "--threads",
                message: "must be positive".into(),
            }
            .into());
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Optac { action: RunAction::Run } => experiment(
            g,
            &[Kind::Optac, Kind::OptacMisspecified],
            "optac run",
            experiments::run_optac_experiment,
        ),
        Command::Crff { action: SweepAction::Sweep } => {
            experiment(g, &[Kind::CrffSweep], "crff sweep", experiments::run_crff_experiment)
        }
        Command::Oracles { action: BenchAction::Bench } => {
            experiment(g, &[Kind::OracleBench], "oracles bench", experiments::run_bench_experiment)
        }
        Command::Lemmas {
            action: LemmaAction::Run { lemma, trials },
        } => lemmas(g, lemma, *trials),
        Command::Plot {
            action: PlotAction::Emit { kind, input, metric },
        } => plot(g, *kind, input, metric),
        Command::Envgen {
            action:
                EnvgenAction::Make {
                    states,
                    actions,
                    horizon,
                    rank,
                    class_size,
                    class_seed,
                    zeta,
                },
        } => envgen(g, *states, *actions, *horizon, *rank, *class_size, *class_seed, *zeta),
    }
}
