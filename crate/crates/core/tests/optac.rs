use ndarray::Array3;
use optac_core::envgen::{gen_lowrank, gen_model_class, ModelClass};
use optac_core::lemmalab::{good_event_diagnostic, HellingerTable};
use optac_core::mdp::{occupancy, Dims, Dynamics, LowRankMdp, Policy};
use optac_core::optac::{
    collect_exploratory, critic, run_optac, BonusState, CriticMode, Environment, OptAcConfig,
};
use optac_core::oracles::{rho_error, uniform_rho, OracleLedger};
use optac_core::rng::seeded;
use rand::Rng;

fn seed7() -> LowRankMdp {
    gen_lowrank(7, 20, 4, 5, 3).unwrap()
}

fn acceptance_class(env: &LowRankMdp) -> ModelClass {
    gen_model_class(env, 32, 11).unwrap()
}

fn skewed_policy(dims: Dims, seed: u64) -> Policy {
    let mut rng = seeded(seed, 200);
    let mut probs = Array3::from_shape_fn(dims.table_shape(), |_| rng.random::<f64>().powi(3) + 1e-2);
    for h in 0..dims.horizon {
        for s in 0..dims.n_states {
            let mut row = probs.slice_mut(ndarray::s![h, s, ..]);
            let t = row.sum();
            row.mapv_inplace(|p| p / t);
        }
    }
    Policy::from_probs(probs).unwrap()
}

#[test]
fn exploratory_action_marginals() {
    let env = seed7();
    let kernel = env.to_kernel();
    let dims = env.dims;
    let pi = skewed_policy(dims, 1);
    let occ = occupancy(&env, &pi).unwrap();
    let batches = 10_000;
    // counts[t][step][a]
    let mut counts = vec![vec![vec![0usize; dims.n_actions]; dims.horizon]; dims.horizon];
    let mut rng = seeded(4, 201);
    for _ in 0..batches {
        let batch = collect_exploratory(&kernel, &pi, &mut rng);
        for (t, traj) in batch.trajectories.iter().enumerate() {
            assert_eq!(traj.actions.len(), t + 1);
            assert_eq!(traj.states.len(), t + 2);
            for (step, &a) in traj.actions.iter().enumerate() {
                counts[t][step][a] += 1;
            }
        }
    }
    let n = batches as f64;
    for (t, per_t) in counts.iter().enumerate() {
        for (step, per_step) in per_t.iter().enumerate().take(t + 1) {
            for (a, &count) in per_step.iter().enumerate() {
                let p = if step + 1 >= t {
                    1.0 / dims.n_actions as f64
                } else {
                    occ.slice(ndarray::s![step, .., a]).sum()
                };
                let freq = count as f64 / n;
                let sigma = (p * (1.0 - p) / n).sqrt();
                assert!((freq - p).abs() <= 3.0 * sigma, "t {t} step {step} a {a}: {freq} vs {p}");
            }
        }
    }
}

#[test]
fn regression_critic_meets_accuracy_contract() {
    let env = seed7();
    let kernel = env.to_kernel();
    let pi = skewed_policy(env.dims, 2);
    let config = OptAcConfig {
        iterations: 400,
        critic: CriticMode::Regression,
        n_pe_samples: 20_000,
        seed: 5,
        ..OptAcConfig::default()
    };
    let ledger = OracleLedger::new();
    let q_hat = critic(&env, &kernel, &pi, &env.reward, &config, 0, &ledger).unwrap();
    let exact = critic(
        &env,
        &kernel,
        &pi,
        &env.reward,
        &OptAcConfig {
            critic: CriticMode::Exact,
            ..config.clone()
        },
        0,
        &ledger,
    )
    .unwrap();
    let rho = uniform_rho(env.dims);
    assert!(rho_error(&q_hat, &exact, &rho) <= 1.0 / 20.0);
    let snap = ledger.snapshot();
    assert_eq!((snap.pe, snap.pe_exact, snap.sl), (1, 1, 1));
    assert_eq!(snap.min_accuracy, Some(0.05));
}

#[test]
fn bonus_range_and_determinant_bound() {
    let env = seed7();
    let class = acceptance_class(&env);
    let config = OptAcConfig {
        iterations: 300,
        seed: 2,
        ..OptAcConfig::default()
    };
    let out = run_optac(&Environment::from(&env), &class, &config).unwrap();
    let hyper = out.summary.hyper;
    let d = env.rank as f64;
    for r in &out.metrics.records {
        assert!(r.gap >= -1e-9 && r.mixture_gap >= -1e-9);
        for &ld in &r.log_dets {
            // every stored feature has norm at most one
            assert!(ld <= d * (hyper.lambda + (r.k as f64)).ln() + 1e-9);
        }
    }
    let bonus = BonusState::new(5, 3, hyper.alpha, hyper.lambda).unwrap();
    let table = bonus.bonus_table(&env);
    assert!(table.iter().all(|b| (0.0..=15.0).contains(b)));
}

#[test]
fn model_selection_settles_on_truth() {
    let env = seed7();
    let e = Environment::from(&env);
    let mut settled = 0;
    for seed in 0..20u64 {
        let class = gen_model_class(&env, 32, 100 + seed).unwrap();
        let config = OptAcConfig {
            iterations: 300,
            seed,
            track_good_event: false,
            ..OptAcConfig::default()
        };
        let out = run_optac(&e, &class, &config).unwrap();
        let s = &out.summary;
        if s.final_selected == s.truth_index.unwrap() && s.selection_settles_at.is_some_and(|k| k < 300) {
            settled += 1;
        }
    }
    assert!(settled >= 18, "{settled}/20");
}

#[test]
fn tv_value_sum_is_sublinear() {
    let env = seed7();
    let class = acceptance_class(&env);
    let config = OptAcConfig {
        iterations: 800,
        seed: 1,
        ..OptAcConfig::default()
    };
    let out = run_optac(&Environment::from(&env), &class, &config).unwrap();
    let cum = |k: usize| out.metrics.records[..k].iter().map(|r| r.tv_value).sum::<f64>();
    let (quarter, full) = (cum(201), cum(801));
    assert!(quarter > 0.0);
    assert!(full / quarter <= 3.0, "{full} / {quarter}");
}

#[test]
fn good_event_diagnostic_matches_run_records() {
    let env = seed7();
    let class = acceptance_class(&env);
    let config = OptAcConfig {
        iterations: 400,
        seed: 3,
        ..OptAcConfig::default()
    };
    let out = run_optac(&Environment::from(&env), &class, &config).unwrap();
    let table = HellingerTable::new(&env.to_kernel(), &class.kernels());
    let selected: Vec<usize> = out.metrics.records.iter().map(|r| r.selected).collect();
    let report = good_event_diagnostic(&table, &selected, &out.conditioning, class.len(), config.delta, 10.0);
    for (r, ratio) in out.metrics.records.iter().zip(&report.ratios) {
        let sum = r.hellinger_sum.unwrap();
        let log_term = ((selected.len() * class.len()) as f64 / config.delta).ln();
        assert!((sum / log_term - ratio).abs() < 1e-9);
    }
    assert!(report.report.passed(), "max ratio {}", report.max_ratio);
    assert!(report.growth_exponent.is_none_or(|g| g <= 0.5), "{:?}", report.growth_exponent);
}

#[test]
fn reruns_are_byte_identical() {
    let env = seed7();
    let class = acceptance_class(&env);
    for critic in [CriticMode::Exact, CriticMode::Regression] {
        let config = OptAcConfig {
            iterations: 30,
            seed: 9,
            critic,
            n_pe_samples: 2000,
            ..OptAcConfig::default()
        };
        let a = run_optac(&Environment::from(&env), &class, &config).unwrap();
        let b = run_optac(&Environment::from(&env), &class, &config).unwrap();
        assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
        assert_eq!(a.mixture, b.mixture);
    }
}
