//! Runners for each experiment kind. Seeds fan out over the rayon pool;
//! results are collected in seed order before anything is written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use optac_core::crff::{error_sweep, Axis, BumpDensity, DensityOracle, ErrorTable, TruncatedGaussian};
use optac_core::envgen::gen_misspecified;
use optac_core::lemmalab::{
    conditional_hellinger_sweep, elliptical_potential_sweep, good_event_diagnostic, md_stability_sweep,
    tv_hellinger_sweep, value_difference_sweep, HellingerTable, LemmaId, LemmaReport,
};
use optac_core::mdp::{exact_optimal, exact_policy_eval, Dynamics, LowRankMdp, Policy, QTable};
use optac_core::optac::{run_optac, Environment, OptAcConfig, RunFailure, RunOutput};
use optac_core::oracles::{
    cp_enumerate, log_likelihoods, pe_regression, pp_fqi, rho_error, uniform_rho, OracleLedger, Sampling,
    TransitionData,
};
use optac_core::rng::{seeded, stream};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ClassSection, DensitySpec, EnvSection, ExperimentConfig, Kind};
use crate::output::{tag, Artifacts, Spread};
use crate::RuntimeError;

#[derive(Debug, Clone, Serialize)]
struct SeedStatus {
    seed: u64,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_at: Option<usize>,
    v_star: Option<f64>,
    final_gap: Option<f64>,
    final_mixture_gap: Option<f64>,
    optimism_rate: Option<f64>,
    selection_settles_at: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct OptacGroup {
    #[serde(skip_serializing_if = "Option::is_none")]
    zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measured_zeta: Option<f64>,
    iterations: usize,
    final_gap: Spread,
    final_mixture_gap: Spread,
    optimism_rate: Spread,
    seeds: Vec<SeedStatus>,
}

struct Job {
    zeta_index: Option<usize>,
    iterations: usize,
    seed: u64,
}

/// `optac run` for the `optac` and `optac-misspecified` kinds. Returns whether
/// every seed finished.
pub fn run_optac_experiment(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    art: &mut Artifacts,
) -> Result<bool, RuntimeError> {
    let base_env = cfg.env()?.build()?;
    let class = cfg.class()?.build(&base_env)?;
    let base = cfg.optac()?.clone();
    let mut ks = vec![base.iterations];
    if let Some(s) = &cfg.scaling {
        ks.extend(&s.iterations);
    }
    ks.sort_unstable();
    ks.dedup();

    let envs: Vec<(Option<f64>, Option<f64>, Environment)> = if cfg.kind == Kind::OptacMisspecified {
        let m = cfg.misspec()?;
        m.zetas
            .iter()
            .map(|&z| {
                let env = gen_misspecified(&base_env, z, m.seed).map_err(|e| RuntimeError::Other(e.to_string()))?;
                Ok((Some(z), Some(env.zeta), Environment::from(&env)))
            })
            .collect::<Result<_, RuntimeError>>()?
    } else {
        vec![(None, None, Environment::from(&base_env))]
    };

    let mut jobs = Vec::new();
    for (zi, (zeta, _, _)) in envs.iter().enumerate() {
        for &k in &ks {
            for &seed in seeds {
                jobs.push(Job {
                    zeta_index: zeta.map(|_| zi),
                    iterations: k,
                    seed,
                });
            }
        }
    }
    let results: Vec<Result<RunOutput, RunFailure>> = jobs
        .par_iter()
        .map(|job| {
            let env = &envs[job.zeta_index.unwrap_or(0)].2;
            let config = OptAcConfig {
                iterations: job.iterations,
                seed: job.seed,
                ..base.clone()
            };
            let start = Instant::now();
            let out = run_optac(env, &class, &config);
            eprintln!(
                "optac K={} seed={}{} finished in {:.1}s",
                job.iterations,
                job.seed,
                job.zeta_index.map_or(String::new(), |z| format!(" zeta={}", tag(envs[z].0.unwrap_or(0.0)))),
                start.elapsed().as_secs_f64()
            );
            out
        })
        .collect();

    let mut groups: Vec<OptacGroup> = Vec::new();
    let mut all_ok = true;
    for (job, result) in jobs.iter().zip(&results) {
        let (zeta, measured, _) = &envs[job.zeta_index.unwrap_or(0)];
        let dir = match zeta {
            Some(z) => format!("zeta_{}/k{}", tag(*z), job.iterations),
            None => format!("k{}", job.iterations),
        };
        let status = match result {
            Ok(out) => {
                art.write(&format!("{dir}/seed_{}.csv", job.seed), &out.metrics.to_csv())?;
                let s = &out.summary;
                SeedStatus {
                    seed: job.seed,
                    ok: true,
                    error: None,
                    failed_at: None,
                    v_star: Some(s.v_star),
                    final_gap: Some(s.final_gap),
                    final_mixture_gap: Some(s.final_mixture_gap),
                    optimism_rate: s.optimism_rate,
                    selection_settles_at: s.selection_settles_at,
                }
            }
            Err(fail) => {
                all_ok = false;
                art.write(&format!("{dir}/seed_{}.csv", job.seed), &fail.metrics.to_csv())?;
                SeedStatus {
                    seed: job.seed,
                    ok: false,
                    error: Some(fail.error.to_string()),
                    failed_at: Some(fail.iteration),
                    v_star: None,
                    final_gap: None,
                    final_mixture_gap: None,
                    optimism_rate: None,
                    selection_settles_at: None,
                }
            }
        };
        match groups.last_mut() {
            Some(g) if g.zeta == *zeta && g.iterations == job.iterations => g.seeds.push(status),
            _ => groups.push(OptacGroup {
                zeta: *zeta,
                measured_zeta: *measured,
                iterations: job.iterations,
                final_gap: Spread::of(&[]),
                final_mixture_gap: Spread::of(&[]),
                optimism_rate: Spread::of(&[]),
                seeds: vec![status],
            }),
        }
    }
    for g in &mut groups {
        let pick = |f: fn(&SeedStatus) -> Option<f64>| -> Vec<f64> { g.seeds.iter().filter_map(f).collect() };
        g.final_gap = Spread::of(&pick(|s| s.final_gap));
        g.final_mixture_gap = Spread::of(&pick(|s| s.final_mixture_gap));
        g.optimism_rate = Spread::of(&pick(|s| s.optimism_rate));
    }

    let mut aggregate = json!({ "kind": cfg.kind.name(), "groups": groups });
    if ks.len() > 1 {
        aggregate["rate_ratios"] = rate_ratios(&groups, &ks);
    }
    if cfg.kind == Kind::OptacMisspecified {
        aggregate["zeta_trend"] = zeta_trend(&groups, &ks);
    }
    art.write_json("aggregate.json", &aggregate)?;
    Ok(all_ok)
}

/// Per seed, `final_mixture_gap(K_max) / final_mixture_gap(K)` for every
/// smaller `K`, with the spread over seeds.
fn rate_ratios(groups: &[OptacGroup], ks: &[usize]) -> Value {
    let k_max = *ks.last().expect("nonempty");
    let mut out = Vec::new();
    for g_small in groups.iter().filter(|g| g.iterations != k_max) {
        let Some(g_big) = groups.iter().find(|g| g.iterations == k_max && g.zeta == g_small.zeta) else {
            continue;
        };
        let ratios: Vec<f64> = g_small
            .seeds
            .iter()
            .filter_map(|s| {
                let big = g_big.seeds.iter().find(|b| b.seed == s.seed)?.final_mixture_gap?;
                Some(big / s.final_mixture_gap?)
            })
            .collect();
        out.push(json!({
            "zeta": g_small.zeta,
            "numerator_iterations": k_max,
            "denominator_iterations": g_small.iterations,
            "per_seed": ratios,
            "spread": Spread::of(&ratios),
        }));
    }
    Value::Array(out)
}

/// Median final gaps across zeta for each `K`, and whether they never decrease.
fn zeta_trend(groups: &[OptacGroup], ks: &[usize]) -> Value {
    let mut out = Vec::new();
    for &k in ks {
        let rows: Vec<&OptacGroup> = groups.iter().filter(|g| g.iterations == k).collect();
        let medians: Vec<Option<f64>> = rows.iter().map(|g| g.final_gap.median).collect();
        let mixture: Vec<Option<f64>> = rows.iter().map(|g| g.final_mixture_gap.median).collect();
        let nondecreasing = |m: &[Option<f64>]| m.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b >= a));
        out.push(json!({
            "iterations": k,
            "zetas": rows.iter().map(|g| g.zeta).collect::<Vec<_>>(),
            "median_final_gap": medians,
            "median_final_mixture_gap": mixture,
            "final_gap_nondecreasing": nondecreasing(&medians),
            "final_mixture_gap_nondecreasing": nondecreasing(&mixture),
        }));
    }
    Value::Array(out)
}

enum Density {
    Bump(BumpDensity),
    Gaussian(TruncatedGaussian),
}

fn density(spec: DensitySpec) -> Result<Density, RuntimeError> {
    let err = |e: optac_core::crff::CrffError| RuntimeError::Other(e.to_string());
    Ok(match spec {
        DensitySpec::Bump { dim } => Density::Bump(BumpDensity::new(dim).map_err(err)?),
        DensitySpec::Gaussian { dim, mean, sd } => Density::Gaussian(TruncatedGaussian::new(dim, mean, sd).map_err(err)?),
    })
}

fn sweep_one<D: DensityOracle + Sync>(d: &D, cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<ErrorTable>, RuntimeError> {
    let section = cfg.crff()?;
    seeds
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let t = error_sweep(d, &section.spec(vec![seed])).map_err(|e| RuntimeError::Other(e.to_string()));
            eprintln!("crff seed={seed} finished in {:.1}s", start.elapsed().as_secs_f64());
            t
        })
        .collect()
}

/// `crff sweep`: per-seed error tables, the combined table and fitted slopes.
pub fn run_crff_experiment(cfg: &ExperimentConfig, seeds: &[u64], art: &mut Artifacts) -> Result<bool, RuntimeError> {
    let tables = match density(cfg.crff()?.density)? {
        Density::Bump(d) => sweep_one(&d, cfg, seeds)?,
        Density::Gaussian(d) => sweep_one(&d, cfg, seeds)?,
    };
    let mut combined = ErrorTable {
        density: tables.first().map(|t| t.density.clone()).unwrap_or_default(),
        rows: Vec::new(),
    };
    for (seed, t) in seeds.iter().zip(&tables) {
        art.write(&format!("seed_{seed}.csv"), &t.to_csv())?;
        combined.rows.extend(t.rows.iter().cloned());
    }
    art.write("errors.csv", &combined.to_csv())?;
    let axes: Vec<Value> = [Axis::W, Axis::D, Axis::N]
        .into_iter()
        .map(|axis| {
            let trend = combined.trend(axis);
            let values: Vec<Value> = combined
                .medians(axis)
                .into_iter()
                .map(|(x, _)| {
                    let errs: Vec<f64> = combined
                        .rows
                        .iter()
                        .filter(|r| r.axis == axis && axis_value(r) == x)
                        .map(|r| r.max_err)
                        .collect();
                    json!({ "value": x, "max_err": Spread::of(&errs) })
                })
                .collect();
            json!({
                "axis": axis.name(),
                "slope": trend.slope,
                "monotone_decreasing": trend.monotone_decreasing,
                "values": values,
            })
        })
        .collect();
    art.write_json(
        "aggregate.json",
        &json!({ "kind": cfg.kind.name(), "density": combined.density, "axes": axes }),
    )?;
    Ok(true)
}

fn axis_value(r: &optac_core::crff::ErrorRow) -> f64 {
    match r.axis {
        Axis::W => r.radius,
        Axis::D => r.d as f64,
        Axis::N => r.n as f64,
    }
}

#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    oracle: &'static str,
    n_samples: usize,
    margin: Option<f64>,
    survivors: Option<usize>,
    sl_calls: u64,
    error: f64,
    seed: u64,
}

/// `(n_samples, oracle, margin)`.
type BenchKey = (usize, &'static str, String);

pub const BENCH_HEADER: &str = "oracle,n_samples,margin,survivors,sl_calls,error,seed";

fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.oracle,
            r.n_samples,
            opt(r.margin.map(|m| m.to_string())),
            opt(r.survivors.map(|s| s.to_string())),
            r.sl_calls,
            r.error,
            r.seed
        );
    }
    out
}

fn bench_seed(
    env: &LowRankMdp,
    class: &optac_core::envgen::ModelClass,
    cfg: &crate::config::BenchSection,
    seed: u64,
) -> Result<Vec<BenchRow>, RuntimeError> {
    let err = |e: &dyn std::fmt::Display| RuntimeError::Other(e.to_string());
    let dims = env.dims;
    let rho = uniform_rho(dims);
    let pi = Policy::uniform(dims);
    let (q_pi, _) = exact_policy_eval(env, &pi, &env.reward).map_err(|e| err(&e))?;
    let q_star = exact_optimal(env, &env.reward).map_err(|e| err(&e))?.q;
    let data = TransitionData::sample(&env.to_kernel(), &rho, cfg.data_per_step, &mut seeded(seed, stream::ROLLOUT));
    let lls = log_likelihoods(class, &data);
    let best_ll = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exact_values: Vec<(f64, QTable)> = class
        .models
        .iter()
        .map(|m| {
            let sol = exact_optimal(m, &env.reward).map_err(|e| err(&e))?;
            Ok((sol.v[[0, m.initial_state]], sol.q))
        })
        .collect::<Result<_, RuntimeError>>()?;

    let mut rows = Vec::new();
    for &n in &cfg.n_samples {
        let sampling = Sampling::MonteCarlo { n_samples: n, seed };
        let ledger = OracleLedger::new();
        let q = pe_regression(env, &pi, &env.reward, &rho, sampling, cfg.ridge, &ledger).map_err(|e| err(&e))?;
        rows.push(BenchRow {
            oracle: "pe",
            n_samples: n,
            margin: None,
            survivors: None,
            sl_calls: ledger.snapshot().sl,
            error: rho_error(&q, &q_pi, &rho),
            seed,
        });
        let ledger = OracleLedger::new();
        let q = pp_fqi(env, &env.reward, &rho, sampling, cfg.ridge, &ledger).map_err(|e| err(&e))?;
        rows.push(BenchRow {
            oracle: "pp",
            n_samples: n,
            margin: None,
            survivors: None,
            sl_calls: ledger.snapshot().sl,
            error: rho_error(&q, &q_star, &rho),
            seed,
        });
        for &margin in &cfg.margins {
            let ledger = OracleLedger::new();
            let out = cp_enumerate(class, &lls, best_ll - margin, &env.reward, &rho, sampling, cfg.ridge, &ledger)
                .map_err(|e| err(&e))?;
            // exact constrained planning over the same survivors
            let best = out
                .survivors
                .iter()
                .copied()
                .fold(out.survivors[0], |b, i| if exact_values[i].0 > exact_values[b].0 { i } else { b });
            rows.push(BenchRow {
                oracle: "cp",
                n_samples: n,
                margin: Some(margin),
                survivors: Some(out.survivors.len()),
                sl_calls: ledger.snapshot().sl,
                error: rho_error(&out.q, &exact_values[best].1, &rho),
                seed,
            });
        }
    }
    Ok(rows)
}

/// `oracles bench`: SL-call counts and errors against exact dynamic programming.
pub fn run_bench_experiment(cfg: &ExperimentConfig, seeds: &[u64], art: &mut Artifacts) -> Result<bool, RuntimeError> {
    let env = cfg.env()?.build()?;
    let class = cfg.class()?.build(&env)?;
    let bench = cfg.bench()?;
    let per_seed: Vec<Vec<BenchRow>> = seeds
        .par_iter()
        .map(|&seed| bench_seed(&env, &class, bench, seed))
        .collect::<Result<_, _>>()?;
    let mut all = Vec::new();
    for (seed, rows) in seeds.iter().zip(&per_seed) {
        art.write(&format!("seed_{seed}.csv"), &bench_csv(rows))?;
        all.extend(rows.iter().cloned());
    }
    art.write("bench.csv", &bench_csv(&all))?;
    // spread of the error per (oracle, n_samples, margin)
    let mut cells: BTreeMap<BenchKey, (Vec<f64>, Vec<u64>)> = BTreeMap::new();
    for r in &all {
        let key = (r.n_samples, r.oracle, r.margin.map_or(String::new(), |m| m.to_string()));
        let cell = cells.entry(key).or_default();
        cell.0.push(r.error);
        cell.1.push(r.sl_calls);
    }
    let summary: Vec<Value> = cells
        .into_iter()
        .map(|((n, oracle, margin), (errs, calls))| {
            json!({
                "oracle": oracle,
                "n_samples": n,
                "margin": (!margin.is_empty()).then_some(margin),
                "sl_calls": calls,
                "error": Spread::of(&errs),
            })
        })
        .collect();
    art.write_json("aggregate.json", &json!({ "kind": cfg.kind.name(), "cells": summary }))?;
    Ok(true)
}

/// Lemma checks requested either by a config or by command-line flags.
#[derive(Debug, Clone)]
pub struct LemmaRequest {
    pub lemmas: Vec<LemmaId>,
    pub trials: usize,
    pub env: EnvSection,
    pub class: ClassSection,
}

impl LemmaRequest {
    pub fn seed7(lemmas: Vec<LemmaId>, trials: usize) -> Self {
        Self {
            lemmas,
            trials,
            env: EnvSection {
                seed: 7,
                n_states: 20,
                n_actions: 4,
                horizon: 5,
                rank: 3,
            },
            class: ClassSection { size: 32, seed: 11 },
        }
    }
}

fn good_event_report(req: &LemmaRequest, seed: u64) -> Result<LemmaReport, RuntimeError> {
    let env = req.env.build()?;
    let class = req.class.build(&env)?;
    let config = OptAcConfig {
        iterations: req.trials.max(1),
        seed,
        track_good_event: false,
        ..OptAcConfig::default()
    };
    let out = run_optac(&Environment::from(&env), &class, &config).map_err(|e| RuntimeError::Other(e.to_string()))?;
    let table = HellingerTable::new(&env.to_kernel(), &class.kernels());
    let selected: Vec<usize> = out.metrics.records.iter().map(|r| r.selected).collect();
    Ok(good_event_diagnostic(&table, &selected, &out.conditioning, class.len(), config.delta, 10.0).report)
}

fn lemma_reports(req: &LemmaRequest, seed: u64) -> Result<Vec<LemmaReport>, RuntimeError> {
    let mut out = Vec::new();
    let mut value_difference = None;
    for &id in &req.lemmas {
        let report = match id {
            LemmaId::EllipticalPotential => elliptical_potential_sweep(req.trials, seed),
            LemmaId::TvHellinger => tv_hellinger_sweep(req.trials, seed),
            LemmaId::ConditionalHellinger => conditional_hellinger_sweep(req.trials, seed),
            LemmaId::MirrorDescent => md_stability_sweep(req.trials, seed),
            LemmaId::ValueDifferenceModel | LemmaId::ValueDifferenceComparator => {
                let (a, b) = value_difference.get_or_insert_with(|| value_difference_sweep(req.trials, seed));
                if id == LemmaId::ValueDifferenceModel { a.clone() } else { b.clone() }
            }
            LemmaId::GoodEvent => good_event_report(req, seed)?,
        };
        out.push(report);
    }
    Ok(out)
}

pub const LEMMA_HEADER: &str = "lemma,seed,trials,violations,worst_slack,passed";

/// `lemmas run`: one report per (seed, lemma). Returns whether all passed.
pub fn run_lemmas(req: &LemmaRequest, seeds: &[u64], art: &mut Artifacts) -> Result<bool, RuntimeError> {
    let per_seed: Vec<Vec<LemmaReport>> = seeds
        .par_iter()
        .map(|&seed| lemma_reports(req, seed))
        .collect::<Result<_, _>>()?;
    let mut csv = String::from(LEMMA_HEADER);
    csv.push('\n');
    let mut entries = Vec::new();
    let mut all_passed = true;
    for (&seed, reports) in seeds.iter().zip(&per_seed) {
        for r in reports {
            all_passed &= r.passed();
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.lemma.name(),
                seed,
                r.trials,
                r.violations,
                r.worst_slack,
                u8::from(r.passed())
            );
            entries.push(json!({ "seed": seed, "passed": r.passed(), "report": r }));
        }
    }
    art.write("lemmas.csv", &csv)?;
    art.write_json("lemmas.json", &json!({ "all_passed": all_passed, "reports": entries }))?;
    Ok(all_passed)
}

/// Scalar summary for the fields of `exact_optimal` used by `envgen make`.
pub fn optimal_value(env: &LowRankMdp) -> Result<f64, RuntimeError> {
    let sol = exact_optimal(env, &env.reward).map_err(|e| RuntimeError::Other(e.to_string()))?;
    Ok(sol.v[[0, env.initial_state]])
}
