use optac_core::envgen::{gen_lowrank, gen_model_class, ModelClass};
use optac_core::mdp::{exact_optimal, exact_policy_eval, Dynamics, LowRankMdp, Policy};
use optac_core::oracles::{
    cp_enumerate, log_likelihoods, mle_select, pe_regression, pp_fqi, rho_error, uniform_rho, OracleLedger,
    Sampling, TransitionData, DEFAULT_RIDGE,
};
use optac_core::rng::seeded;
use optac_core::stats::median;

fn seed7() -> LowRankMdp {
    gen_lowrank(7, 20, 4, 5, 3).unwrap()
}

#[test]
fn pe_error_shrinks_with_samples() {
    let env = seed7();
    let rho = uniform_rho(env.dims);
    let pi = Policy::uniform(env.dims);
    let (q, _) = exact_policy_eval(&env, &pi, &env.reward).unwrap();
    let ledger = OracleLedger::new();
    let err = |n: usize| -> f64 {
        let errs: Vec<f64> = (1..=10u64)
            .map(|seed| {
                let sampling = Sampling::MonteCarlo { n_samples: n, seed };
                let qh = pe_regression(&env, &pi, &env.reward, &rho, sampling, DEFAULT_RIDGE, &ledger).unwrap();
                rho_error(&qh, &q, &rho)
            })
            .collect();
        median(&errs).unwrap()
    };
    let (small, large) = (err(1_000), err(10_000));
    assert!(large < small, "{large} !< {small}");
    assert_eq!(ledger.snapshot().pe, 20);
    assert_eq!(ledger.snapshot().sl, 20);
}

#[test]
fn pp_error_within_tolerance() {
    let env = seed7();
    let rho = uniform_rho(env.dims);
    let q_star = exact_optimal(&env, &env.reward).unwrap().q;
    let ledger = OracleLedger::new();
    let qh = pp_fqi(
        &env,
        &env.reward,
        &rho,
        Sampling::MonteCarlo {
            n_samples: 10_000,
            seed: 3,
        },
        DEFAULT_RIDGE,
        &ledger,
    )
    .unwrap();
    assert!(rho_error(&qh, &q_star, &rho) <= 0.05);
    assert_eq!(ledger.snapshot().sl, 5);
}

fn sub_class(class: &ModelClass, size: usize) -> ModelClass {
    ModelClass::new(class.models[..size].to_vec(), None).unwrap()
}

#[test]
fn cp_ledger_is_linear_in_survivors() {
    let env = seed7();
    let rho = uniform_rho(env.dims);
    let class = gen_model_class(&env, 8, 2).unwrap();
    let sampling = Sampling::MonteCarlo {
        n_samples: 200,
        seed: 1,
    };
    for size in [2usize, 4, 8] {
        let c = sub_class(&class, size);
        let ledger = OracleLedger::new();
        let out = cp_enumerate(&c, &vec![0.0; size], 0.0, &env.reward, &rho, sampling, DEFAULT_RIDGE, &ledger).unwrap();
        assert_eq!(out.survivors.len(), size);
        assert_eq!(ledger.snapshot().sl, 5 * size as u64);
        assert_eq!(ledger.snapshot().cp, 1);
        assert_eq!(ledger.snapshot().pp, size as u64);
    }
}

#[test]
fn cp_matches_exact_planning() {
    let env = seed7();
    let rho = uniform_rho(env.dims);
    let class = gen_model_class(&env, 8, 4).unwrap();
    let ledger = OracleLedger::new();
    for seed in 1..=5u64 {
        let sampling = Sampling::MonteCarlo {
            n_samples: 100_000,
            seed,
        };
        let out = cp_enumerate(&class, &[0.0; 8], 0.0, &env.reward, &rho, sampling, DEFAULT_RIDGE, &ledger).unwrap();
        let exact: Vec<f64> = class
            .models
            .iter()
            .map(|m| exact_optimal(m, &m.reward).unwrap().v[[0, m.initial_state]])
            .collect();
        let best = (0..8).fold(0, |b, i| if exact[i] > exact[b] { i } else { b });
        assert_eq!(out.index, best, "seed {seed}: {:?} vs {exact:?}", out.values);
    }
}

#[test]
fn mle_identifies_truth() {
    let env = seed7();
    let rho = uniform_rho(env.dims);
    let class = gen_model_class(&env, 32, 11).unwrap();
    let truth = class.truth_index.unwrap();
    let kernel = env.to_kernel();
    let ledger = OracleLedger::new();
    let hits = (0..20u64)
        .filter(|&seed| {
            let data = TransitionData::sample(&kernel, &rho, 500, &mut seeded(seed, 50));
            mle_select(&class, &data, &ledger).unwrap().index == truth
        })
        .count();
    assert!(hits >= 18, "{hits}/20");
    assert_eq!(ledger.snapshot().mle, 20);
}

#[test]
fn mle_recovers_any_generating_model() {
    let env = seed7();
    let rho = uniform_rho(env.dims);
    let class = gen_model_class(&env, 16, 5).unwrap();
    let ledger = OracleLedger::new();
    let mut hits = 0;
    let mut trials = 0;
    for j in 0..class.len() {
        let kernel = class.models[j].to_kernel();
        for seed in 0..2u64 {
            let data = TransitionData::sample(&kernel, &rho, 500, &mut seeded(seed + 100 * j as u64, 51));
            trials += 1;
            hits += usize::from(mle_select(&class, &data, &ledger).unwrap().index == j);
        }
    }
    assert!(hits as f64 >= 0.9 * trials as f64, "{hits}/{trials}");
}

#[test]
fn log_likelihood_prefers_truth_on_large_data() {
    let env = seed7();
    let rho = uniform_rho(env.dims);
    let class = gen_model_class(&env, 32, 11).unwrap();
    let data = TransitionData::sample(&env.to_kernel(), &rho, 5000, &mut seeded(9, 52));
    let lls = log_likelihoods(&class, &data);
    let truth = class.truth_index.unwrap();
    assert!(lls.iter().enumerate().all(|(i, l)| i == truth || *l < lls[truth]));
}
