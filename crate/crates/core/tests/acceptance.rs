//! Acceptance suite. Prints one PASS/FAIL line per criterion. Failures turn
//! into a nonzero exit only when `OPTAC_ACCEPTANCE_STRICT=1`, so the rest of
//! the workspace tests still run; the summary line lists what failed.

use std::time::{Duration, Instant};

use optac_core::crff::{error_sweep, Axis, BumpDensity, SweepSpec};
use optac_core::envgen::{gen_lowrank, gen_misspecified, gen_model_class, ModelClass};
use optac_core::lemmalab::{
    elliptical_potential_sweep, md_stability_sweep, tv_hellinger_sweep, value_difference_sweep,
};
use optac_core::mdp::{exact_optimal, exact_policy_eval, Dynamics, LowRankMdp, Policy};
use optac_core::optac::{run_optac, Environment, OptAcConfig, RunOutput};
use optac_core::oracles::{
    cp_enumerate, log_likelihoods, pe_regression, pp_fqi, rho_error, uniform_rho, OracleLedger, Sampling,
    TransitionData, DEFAULT_RIDGE,
};
use optac_core::rng::seeded;
use optac_core::stats::median;

const ENV_SEED: u64 = 7;
const CLASS_SEED: u64 = 11;
const CLASS_SIZE: usize = 32;
const RUN_SEEDS: std::ops::Range<u64> = 0..10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn env() -> LowRankMdp {
    gen_lowrank(ENV_SEED, 20, 4, 5, 3).expect("valid dimensions")
}

fn class(env: &LowRankMdp) -> ModelClass {
    gen_model_class(env, CLASS_SIZE, CLASS_SEED).expect("valid class")
}

fn run(env: &Environment, class: &ModelClass, k: usize, seed: u64) -> (RunOutput, Duration) {
    run_with(env, class, k, seed, None, None)
}

fn run_with(
    env: &Environment,
    class: &ModelClass,
    k: usize,
    seed: u64,
    alpha: Option<f64>,
    eta: Option<f64>,
) -> (RunOutput, Duration) {
    let config = OptAcConfig {
        iterations: k,
        seed,
        alpha,
        eta,
        ..OptAcConfig::default()
    };
    let start = Instant::now();
    let out = run_optac(env, class, &config).expect("run completes");
    (out, start.elapsed())
}

struct MainRuns {
    long: Vec<RunOutput>,
    short: Vec<RunOutput>,
    slowest: Duration,
}

fn main_runs() -> MainRuns {
    let env = env();
    let class = class(&env);
    let e = Environment::from(&env);
    let mut long = Vec::new();
    let mut short = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in RUN_SEEDS {
        let (out, t) = run(&e, &class, 2000, seed);
        slowest = slowest.max(t);
        long.push(out);
        short.push(run(&e, &class, 500, seed).0);
    }
    MainRuns { long, short, slowest }
}

fn convergence(runs: &MainRuns) -> Outcome {
    let v_star = runs.long[0].summary.v_star;
    let gaps: Vec<f64> = runs.long.iter().map(|o| o.summary.final_mixture_gap).collect();
    let m = median(&gaps).expect("nonempty");
    Outcome {
        pass: m <= 0.1 * v_star && runs.slowest <= Duration::from_secs(600),
        detail: format!(
            "median mixture gap {m:.4} vs bound {:.4} (V* = {v_star:.4}); slowest seed {:.1}s",
            0.1 * v_star,
            runs.slowest.as_secs_f64()
        ),
    }
}

fn rate(runs: &MainRuns) -> Outcome {
    let ratios: Vec<f64> = runs
        .long
        .iter()
        .zip(&runs.short)
        .map(|(l, s)| l.summary.final_mixture_gap / s.summary.final_mixture_gap)
        .collect();
    let m = median(&ratios).expect("nonempty");
    Outcome {
        pass: (0.3..=0.9).contains(&m),
        detail: format!("median gap(2000)/gap(500) = {m:.3}, required in [0.3, 0.9]"),
    }
}

fn hierarchy() -> Outcome {
    let env = env();
    let h = env.dims.horizon as u64;
    let rho = uniform_rho(env.dims);
    let pi = Policy::uniform(env.dims);
    let mc = Sampling::MonteCarlo {
        n_samples: 1000,
        seed: 1,
    };

    let pe = OracleLedger::new();
    pe_regression(&env, &pi, &env.reward, &rho, mc, DEFAULT_RIDGE, &pe).expect("pe");
    let pp = OracleLedger::new();
    pp_fqi(&env, &env.reward, &rho, mc, DEFAULT_RIDGE, &pp).expect("pp");

    let class = class(&env);
    let data = TransitionData::sample(&env.to_kernel(), &rho, 3, &mut seeded(5, 0));
    let lls = log_likelihoods(&class, &data);
    let best = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cp = OracleLedger::new();
    let out = cp_enumerate(&class, &lls, best - 4.0, &env.reward, &rho, mc, DEFAULT_RIDGE, &cp).expect("cp");
    let survivors = out.survivors.len() as u64;

    let (pe_sl, pp_sl, cp_sl) = (pe.snapshot().sl, pp.snapshot().sl, cp.snapshot().sl);
    Outcome {
        pass: pe_sl == 1 && pp_sl == h && cp_sl == survivors * h && survivors > 1,
        detail: format!(
            "SL calls: PE {pe_sl} (want 1), PP {pp_sl} (want {h}), CP {cp_sl} (want {survivors} survivors x {h})"
        ),
    }
}

fn accuracy() -> Outcome {
    let env = env();
    let h = env.dims.horizon as f64;
    let rho = uniform_rho(env.dims);
    let pi = Policy::uniform(env.dims);
    let ledger = OracleLedger::new();
    let (q_pi, _) = exact_policy_eval(&env, &pi, &env.reward).expect("dp");
    let pe = pe_regression(
        &env,
        &pi,
        &env.reward,
        &rho,
        Sampling::MonteCarlo {
            n_samples: 20_000,
            seed: 1,
        },
        DEFAULT_RIDGE,
        &ledger,
    )
    .expect("pe");
    let pe_err = rho_error(&pe, &q_pi, &rho);
    let q_star = exact_optimal(&env, &env.reward).expect("dp").q;
    let pp = pp_fqi(
        &env,
        &env.reward,
        &rho,
        Sampling::MonteCarlo {
            n_samples: 10_000,
            seed: 1,
        },
        DEFAULT_RIDGE,
        &ledger,
    )
    .expect("pp");
    let pp_err = rho_error(&pp, &q_star, &rho);

    let class = class(&env);
    let kernel = env.to_kernel();
    let mut agree = 0;
    for seed in 1..=5u64 {
        let data = TransitionData::sample(&kernel, &rho, 3, &mut seeded(seed, 0));
        let lls = log_likelihoods(&class, &data);
        let best = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let threshold = best - 4.0;
        let out = cp_enumerate(
            &class,
            &lls,
            threshold,
            &env.reward,
            &rho,
            Sampling::MonteCarlo {
                n_samples: 100_000,
                seed,
            },
            DEFAULT_RIDGE,
            &ledger,
        )
        .expect("cp");
        let brute = out
            .survivors
            .iter()
            .map(|&i| {
                let m = &class.models[i];
                (i, exact_optimal(m, &m.reward).expect("dp").v[[0, m.initial_state]])
            })
            .fold((usize::MAX, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        agree += usize::from(brute.0 == out.index);
    }
    Outcome {
        pass: pe_err <= 0.05 * h && pp_err <= 0.05 * h && agree == 5,
        detail: format!(
            "PE error {pe_err:.4}, PP error {pp_err:.4} (bound {:.2}); CP agrees with exact planning on {agree}/5 seeds",
            0.05 * h
        ),
    }
}

fn lemmas() -> Outcome {
    let reports = [
        elliptical_potential_sweep(1000, 1),
        tv_hellinger_sweep(10_000, 2),
        md_stability_sweep(100, 3),
    ];
    let (vd1, vd2) = value_difference_sweep(200, 4);
    let all: Vec<_> = reports.into_iter().chain([vd1, vd2]).collect();
    let detail = all
        .iter()
        .map(|r| format!("{} {}/{}", r.lemma.name(), r.violations, r.trials))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome {
        pass: all.iter().all(|r| r.passed()),
        detail: format!("violations: {detail}"),
    }
}

fn optimism(runs: &MainRuns) -> Outcome {
    let rates: Vec<f64> = runs.long.iter().filter_map(|o| o.summary.optimism_rate).collect();
    let m = median(&rates).unwrap_or(0.0);
    let lo = rates.iter().copied().fold(1.0, f64::min);
    Outcome {
        pass: rates.len() == runs.long.len() && m >= 0.9,
        detail: format!("post-burn-in optimism rate median {m:.3}, min {lo:.3}, required >= 0.9"),
    }
}

fn crff_decay() -> Outcome {
    let start = Instant::now();
    let bump = BumpDensity::new(1).expect("1-D");
    let table = error_sweep(&bump, &SweepSpec::bump_default(RUN_SEEDS.collect())).expect("sweep");
    let elapsed = start.elapsed();
    let d = table.trend(Axis::D).slope.unwrap_or(f64::NAN);
    let n = table.trend(Axis::N).slope.unwrap_or(f64::NAN);
    let ok = |s: f64| (-0.7..=-0.3).contains(&s);
    Outcome {
        pass: ok(d) && ok(n) && elapsed <= Duration::from_secs(300),
        detail: format!(
            "slope vs d {d:.3}, slope vs N {n:.3}, required in [-0.7, -0.3]; {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

fn misspecification() -> Outcome {
    let base = env();
    let class = class(&base);
    let zetas = [0.0, 0.01, 0.02, 0.05];
    let medians: Vec<f64> = zetas
        .iter()
        .map(|&zeta| {
            let gaps: Vec<f64> = RUN_SEEDS
                .map(|seed| {
                    let env = gen_misspecified(&base, zeta, seed).expect("zeta in range");
                    run(&Environment::from(&env), &class, 1000, seed).0.summary.final_gap
                })
                .collect();
            median(&gaps).expect("nonempty")
        })
        .collect();
    let detail = zetas
        .iter()
        .zip(&medians)
        .map(|(z, g)| format!("zeta {z}: {g:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome {
        pass: medians.windows(2).all(|w| w[1] >= w[0]),
        detail: format!("median final-iterate gap at K=1000: {detail}"),
    }
}

fn reproducibility() -> Outcome {
    let env = env();
    let class = class(&env);
    let e = Environment::from(&env);
    let a = run(&e, &class, 200, 3).0.metrics.to_csv();
    let b = run(&e, &class, 200, 3).0.metrics.to_csv();
    let bump = BumpDensity::new(1).expect("1-D");
    let mut spec = SweepSpec::bump_default(vec![5]);
    spec.feature_axis.n = 2000;
    spec.sample_axis.d = 256;
    spec.radius_axis.d = 128;
    let c = error_sweep(&bump, &spec).expect("sweep").to_csv();
    let d = error_sweep(&bump, &spec).expect("sweep").to_csv();
    let m1 = gen_misspecified(&env, 0.02, 9).expect("zeta");
    let m2 = gen_misspecified(&env, 0.02, 9).expect("zeta");
    Outcome {
        pass: a == b && c == d && m1 == m2,
        detail: format!("optac metrics {} bytes, cRFF table {} bytes, byte-identical on rerun", a.len(), c.len()),
    }
}

/// Criteria 1 and 2 again with a small bonus coefficient and a large actor
/// step, reported for reference only.
fn tuned_reference() -> String {
    let env = env();
    let class = class(&env);
    let e = Environment::from(&env);
    let (alpha, eta) = (0.1, 0.5);
    let mut long = Vec::new();
    let mut ratios = Vec::new();
    for seed in RUN_SEEDS {
        let l = run_with(&e, &class, 2000, seed, Some(alpha), Some(eta)).0.summary;
        let s = run_with(&e, &class, 500, seed, Some(alpha), Some(eta)).0.summary;
        ratios.push(l.final_mixture_gap / s.final_mixture_gap);
        long.push(l);
    }
    let gaps: Vec<f64> = long.iter().map(|s| s.final_mixture_gap).collect();
    format!(
        "alpha {alpha}, eta {eta}: median mixture gap {:.4} (bound {:.4}), median gap(2000)/gap(500) {:.3}",
        median(&gaps).expect("nonempty"),
        0.1 * long[0].v_star,
        median(&ratios).expect("nonempty")
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed.push(id.to_string());
        }
        println!("[{tag}] {id}. {name}: {}", outcome.detail);
    };
    let runs = main_runs();
    report(1, "end-to-end convergence", convergence(&runs));
    report(2, "rate scaling", rate(&runs));
    println!("[INFO] 1-2 with tuned constants: {}", tuned_reference());
    report(3, "oracle hierarchy", hierarchy());
    report(4, "oracle accuracy", accuracy());
    report(5, "deterministic lemma suites", lemmas());
    report(6, "optimism diagnostic", optimism(&runs));
    report(7, "cRFF decay exponents", crff_decay());
    report(8, "misspecification monotonicity", misspecification());
    report(9, "reproducibility", reproducibility());
    if failed.is_empty() {
        println!("ACCEPTANCE: 9 of 9 criteria passed");
        return;
    }
    println!(
        "ACCEPTANCE: {} of 9 criteria passed; failed: {}",
        9 - failed.len(),
        failed.join(", ")
    );
    if std::env::var("OPTAC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
