//! Optimistic actor-critic: exploratory roll-ins, maximum-likelihood model
//! selection, elliptical exploration bonus, optimistic critic and an
//! exponentiated-gradient actor. The output is the uniform mixture of every
//! policy played.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envgen::{MisspecifiedEnv, ModelClass};
use crate::lemmalab::HellingerTable;
use crate::linalg::{inv_quad_form, log_det};
use crate::mdp::{
    exact_optimal, exact_policy_eval, DenseKernel, Dims, Dynamics, LowRankMdp, MdpError, MixturePolicy, Policy,
    QTable, RewardTable,
};
use crate::oracles::{
    pe_exact, pe_regression, uniform_rho, LedgerSnapshot, LogLikTracker, OracleError, OracleKind, OracleLedger,
    Sampling, DEFAULT_RIDGE,
};
use crate::rng::{seeded, stream};

#[derive(Debug, Error, PartialEq)]
pub enum OptAcError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("gram matrix at step {h} is not positive definite")]
    NotPositiveDefinite { h: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    Exact,
    Regression,
}

/// How the bonus coefficient is set when `alpha` is not given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `sqrt(lambda d + |A| beta)`.
    ConfidenceWidth,
    /// `sqrt(|A|)`.
    SqrtActions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptAcConfig {
    /// Number of iterations; policies `pi^(0), .., pi^(K)` are played.
    pub iterations: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_rule: AlphaRule,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub critic: CriticMode,
    pub n_pe_samples: usize,
    pub ridge: f64,
    pub seed: u64,
    /// Iterations before this one are excluded from the optimism rate.
    pub burn_in: usize,
    /// Compute the Hellinger-sum diagnostic of the selected model each iteration.
    pub track_good_event: bool,
}

impl Default for OptAcConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            epsilon: 0.1,
            delta: 0.1,
            beta: None,
            alpha: None,
            alpha_rule: AlphaRule::ConfidenceWidth,
            lambda: None,
            eta: None,
            critic: CriticMode::Exact,
            n_pe_samples: 20_000,
            ridge: DEFAULT_RIDGE,
            seed: 0,
            burn_in: 50,
            track_good_event: true,
        }
    }
}

/// Hyperparameters after defaults have been filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub beta: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl OptAcConfig {
    pub fn validate(&self) -> Result<(), OptAcError> {
        let bad = |msg: &str| Err(OptAcError::Config(msg.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        for (name, v) in [("beta", self.beta), ("alpha", self.alpha), ("lambda", self.lambda), ("eta", self.eta)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(OptAcError::Config(format!("{name} must be positive")));
                }
            }
        }
        if self.critic == CriticMode::Regression && self.n_pe_samples == 0 {
            return bad("n_pe_samples must be positive in regression mode");
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge must be nonnegative");
        }
        Ok(())
    }

    pub fn resolve(&self, dims: Dims, rank: usize, class_size: usize) -> Hyper {
        let k = self.iterations as f64;
        let n_actions = dims.n_actions as f64;
        let d = rank as f64;
        let beta = self
            .beta
            .unwrap_or_else(|| (k * class_size as f64 / self.delta).ln().max(f64::MIN_POSITIVE));
        let lambda = self.lambda.unwrap_or(1.0 / d);
        let alpha = self.alpha.unwrap_or(match self.alpha_rule {
            AlphaRule::ConfidenceWidth => (lambda * d + n_actions * beta).sqrt(),
            AlphaRule::SqrtActions => n_actions.sqrt(),
        });
        let eta = self.eta.unwrap_or_else(|| {
            // a single action makes the actor step irrelevant
            let log_a = n_actions.ln().max(f64::MIN_POSITIVE);
            log_a.sqrt() / (dims.horizon as f64 * k.sqrt())
        });
        Hyper {
            beta,
            alpha,
            lambda,
            eta,
        }
    }
}

/// Per-step Gram matrices and the elliptical bonus they induce.
#[derive(Debug, Clone)]
pub struct BonusState {
    pub alpha: f64,
    pub lambda: f64,
    /// Multiplier on the clipped bonus, `3H`.
    pub scale: f64,
    grams: Vec<DMatrix<f64>>,
    chols: Vec<Cholesky<f64, Dyn>>,
}

impl BonusState {
    /// `lambda I` at every step.
    pub fn new(horizon: usize, rank: usize, alpha: f64, lambda: f64) -> Result<Self, OptAcError> {
        let grams = vec![DMatrix::identity(rank, rank) * lambda; horizon];
        Self::from_grams(grams, alpha, lambda, 3.0 * horizon as f64)
    }

    pub fn from_grams(grams: Vec<DMatrix<f64>>, alpha: f64, lambda: f64, scale: f64) -> Result<Self, OptAcError> {
        let chols = grams
            .iter()
            .enumerate()
            .map(|(h, g)| g.clone().cholesky().ok_or(OptAcError::NotPositiveDefinite { h }))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            alpha,
            lambda,
            scale,
            grams,
            chols,
        })
    }

    pub fn gram(&self, h: usize) -> &DMatrix<f64> {
        &self.grams[h]
    }

    pub fn horizon(&self) -> usize {
        self.grams.len()
    }

    /// `sqrt(phi^T Lambda_h^{-1} phi)`.
    pub fn elliptical_norm(&self, h: usize, phi: &[f64]) -> f64 {
        inv_quad_form(&self.chols[h], &DVector::from_column_slice(phi)).max(0.0).sqrt()
    }

    /// `scale * min(alpha * |phi|_{Lambda_h^{-1}}, 1)`.
    pub fn bonus_value(&self, h: usize, phi: &[f64]) -> f64 {
        self.scale * (self.alpha * self.elliptical_norm(h, phi)).min(1.0)
    }

    pub fn log_dets(&self) -> Vec<f64> {
        self.chols.iter().map(log_det).collect()
    }

    /// Rebuilds every step's matrix as `lambda I + sum x x^T` over the given
    /// feature vectors, in order.
    pub fn gram_update<'a, I, J>(&self, samples: I) -> Result<Self, OptAcError>
    where
        I: IntoIterator<Item = J>,
        J: IntoIterator<Item = &'a [f64]>,
    {
        let rank = self.grams.first().map_or(0, |g| g.nrows());
        let mut grams = Vec::with_capacity(self.horizon());
        for step in samples {
            let mut g = DMatrix::identity(rank, rank) * self.lambda;
            for x in step {
                accumulate_outer(&mut g, x);
            }
            grams.push(g);
        }
        if grams.len() != self.horizon() {
            return Err(OptAcError::Config(format!(
                "gram update has {} steps, expected {}",
                grams.len(),
                self.horizon()
            )));
        }
        Self::from_grams(grams, self.alpha, self.lambda, self.scale)
    }

    /// Bonus table `(h, s, a)` under the feature map of `model`.
    pub fn bonus_table(&self, model: &LowRankMdp) -> RewardTable {
        let dims = model.dims;
        let mut table = Array3::zeros(dims.table_shape());
        for h in 0..dims.horizon {
            for s in 0..dims.n_states {
                for a in 0..dims.n_actions {
                    let phi = model.phi_row(h, s, a);
                    table[[h, s, a]] = self.bonus_value(h, phi.as_slice().expect("contiguous"));
                }
            }
        }
        table
    }
}

fn accumulate_outer(g: &mut DMatrix<f64>, x: &[f64]) {
    let d = x.len();
    for i in 0..d {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..d {
            g[(i, j)] += x[i] * x[j];
        }
    }
}

/// One exploratory episode, truncated after the transition it was collected for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `s_0 .. s_{t+1}` for trajectory `t`.
    pub states: Vec<usize>,
    /// `a_0 .. a_t`.
    pub actions: Vec<usize>,
}

/// The `H` trajectories of one iteration. Trajectory `t` follows the current
/// policy up to step `t - 2` and acts uniformly at steps `t - 1` and `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploratoryBatch {
    pub trajectories: Vec<Trajectory>,
}

impl ExploratoryBatch {
    pub fn horizon(&self) -> usize {
        self.trajectories.len()
    }

    /// `(s_h, a_h, s_{h+1})` of trajectory `h`, used for model fitting.
    pub fn mle_triple(&self, h: usize) -> (usize, usize, usize) {
        let t = &self.trajectories[h];
        (t.states[h], t.actions[h], t.states[h + 1])
    }

    /// `(s_h, a_h)` of trajectory `h + 1`, used for the step-`h` Gram matrix.
    pub fn gram_sample(&self, h: usize) -> Option<(usize, usize)> {
        self.trajectories.get(h + 1).map(|t| (t.states[h], t.actions[h]))
    }

    /// `(s_{h-1}, a_{h-1})` of trajectory `h`; `None` at the first step.
    pub fn conditioning(&self, h: usize) -> Option<(usize, usize)> {
        let t = &self.trajectories[h];
        h.checked_sub(1).map(|p| (t.states[p], t.actions[p]))
    }
}

/// Rolls in `pi_k` and switches to uniform actions for the last two steps of
/// each truncated trajectory.
pub fn collect_exploratory<R: Rng + ?Sized>(kernel: &DenseKernel, pi_k: &Policy, rng: &mut R) -> ExploratoryBatch {
    let dims = kernel.dims;
    let trajectories = (0..dims.horizon)
        .map(|t| {
            let mut states = Vec::with_capacity(t + 2);
            let mut actions = Vec::with_capacity(t + 1);
            let mut s = kernel.initial_state;
            states.push(s);
            for step in 0..=t {
                let a = if step + 1 >= t {
                    rng.random_range(0..dims.n_actions)
                } else {
                    pi_k.sample_action(step, s, rng)
                };
                s = kernel.sample_next(step, s, a, rng);
                actions.push(a);
                states.push(s);
            }
            Trajectory { states, actions }
        })
        .collect();
    ExploratoryBatch { trajectories }
}

/// `pi'(a|s) ∝ pi(a|s) exp(eta q(s, a))`, stabilized by subtracting the row maximum.
pub fn actor_update(pi: &Policy, q_hat: &QTable, eta: f64) -> Result<Policy, OptAcError> {
    let dims = pi.dims();
    dims.check_table("critic", q_hat)?;
    if q_hat.iter().any(|v| !v.is_finite()) {
        return Err(MdpError::InvalidModel("critic has non-finite entries".into()).into());
    }
    let mut probs = pi.probs().clone();
    for h in 0..dims.horizon {
        for s in 0..dims.n_states {
            let qmax = (0..dims.n_actions)
                .filter(|&a| pi.prob(h, s, a) > 0.0)
                .map(|a| q_hat[[h, s, a]])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for a in 0..dims.n_actions {
                let p = pi.prob(h, s, a);
                let w = if p > 0.0 { p * (eta * (q_hat[[h, s, a]] - qmax)).exp() } else { 0.0 };
                probs[[h, s, a]] = w;
                total += w;
            }
            for a in 0..dims.n_actions {
                probs[[h, s, a]] /= total;
            }
        }
    }
    Ok(Policy::from_probs_unchecked(probs))
}

/// `<pi_h(.|s), q_h(s, .)> - KL(pi_h(.|s) || reference_h(.|s)) / eta` at one state.
pub fn actor_objective(candidate: &[f64], reference: &[f64], q: &[f64], eta: f64) -> f64 {
    let mut lin = 0.0;
    let mut kl = 0.0;
    for ((&p, &r), &qa) in candidate.iter().zip(reference).zip(q) {
        lin += p * qa;
        if p > 0.0 {
            kl += if r > 0.0 { p * (p / r).ln() } else { f64::INFINITY };
        }
    }
    lin - kl / eta
}

/// Optimistic critic: `Q^{pi}` of `r + b` inside the selected model.
pub fn critic(
    theta_hat: &LowRankMdp,
    theta_kernel: &DenseKernel,
    pi_k: &Policy,
    reward_plus_bonus: &RewardTable,
    config: &OptAcConfig,
    iteration: usize,
    ledger: &OracleLedger,
) -> Result<QTable, OptAcError> {
    ledger.request_accuracy(1.0 / (config.iterations as f64).sqrt());
    match config.critic {
        CriticMode::Exact => Ok(pe_exact(theta_kernel, pi_k, reward_plus_bonus, ledger)?),
        CriticMode::Regression => {
            let seed = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(iteration as u64);
            Ok(pe_regression(
                theta_hat,
                pi_k,
                reward_plus_bonus,
                &uniform_rho(theta_hat.dims),
                Sampling::MonteCarlo {
                    n_samples: config.n_pe_samples,
                    seed,
                },
                config.ridge,
                ledger,
            )?)
        }
    }
}

/// `f_h(s, a) = sum_s' |T_h(s'|s,a) - T_hat_h(s'|s,a)|`.
pub fn tv_reward_table<A: Dynamics + ?Sized, B: Dynamics + ?Sized>(truth: &A, hat: &B) -> Result<RewardTable, MdpError> {
    let dims = truth.dims();
    if hat.dims() != dims {
        return Err(MdpError::DimensionMismatch {
            what: "estimated model",
            expected: dims.table_shape().to_vec(),
            found: hat.dims().table_shape().to_vec(),
        });
    }
    let mut p = vec![0.0; dims.n_states];
    let mut q = vec![0.0; dims.n_states];
    let mut table = Array3::zeros(dims.table_shape());
    for h in 0..dims.horizon {
        for s in 0..dims.n_states {
            for a in 0..dims.n_actions {
                truth.fill_next(h, s, a, &mut p);
                hat.fill_next(h, s, a, &mut q);
                table[[h, s, a]] = p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum();
            }
        }
    }
    Ok(table)
}

/// Cell-level result of the conditional-TV optimism check at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimismCheck {
    pub cells: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` over all cells.
    pub worst_slack: f64,
}

impl OptimismCheck {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// For every step `h >= 1` and `(s, a)` at step `h - 1`, compares
/// `E_{s' ~ T_hat_{h-1}(.|s,a), a' ~ pi_h}[f_h(s', a')]` with
/// `alpha |phi_hat_{h-1}(s,a)|_{Lambda_{h-1}^{-1}}`.
pub fn optimism_check(
    model: &LowRankMdp,
    model_kernel: &DenseKernel,
    pi: &Policy,
    tv: &RewardTable,
    bonus: &BonusState,
) -> OptimismCheck {
    let dims = model.dims;
    let mut out = OptimismCheck {
        cells: 0,
        violations: 0,
        worst_slack: f64::NEG_INFINITY,
    };
    for h in 1..dims.horizon {
        let expected_tv: Vec<f64> = (0..dims.n_states)
            .map(|s| (0..dims.n_actions).map(|a| pi.prob(h, s, a) * tv[[h, s, a]]).sum())
            .collect();
        for s in 0..dims.n_states {
            for a in 0..dims.n_actions {
                let lhs: f64 = model_kernel
                    .row_slice(h - 1, s, a)
                    .iter()
                    .zip(&expected_tv)
                    .map(|(p, e)| p * e)
                    .sum();
                let phi = model.phi_row(h - 1, s, a);
                let rhs = bonus.alpha * bonus.elliptical_norm(h - 1, phi.as_slice().expect("contiguous"));
                out.cells += 1;
                if lhs > rhs {
                    out.violations += 1;
                }
                out.worst_slack = out.worst_slack.max(lhs - rhs);
            }
        }
    }
    out
}

/// The true environment the agent interacts with.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub kernel: DenseKernel,
    pub reward: RewardTable,
}

impl From<&LowRankMdp> for Environment {
    fn from(mdp: &LowRankMdp) -> Self {
        Self {
            kernel: mdp.to_kernel(),
            reward: mdp.reward.clone(),
        }
    }
}

impl From<&MisspecifiedEnv> for Environment {
    fn from(env: &MisspecifiedEnv) -> Self {
        Self {
            kernel: env.true_kernel.clone(),
            reward: env.base.reward.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `V* - V^{pi^(k)}` at the initial state.
    pub gap: f64,
    /// `V* - V^{mixture of pi^(0..=k)}`.
    pub mixture_gap: f64,
    /// Value of `pi^(k)` in the selected model under the bonus reward alone.
    pub bonus_value: f64,
    /// Value of `pi^(k)` in the true environment under the TV reward `f^(k)`.
    pub tv_value: f64,
    pub log_dets: Vec<f64>,
    pub selected: usize,
    pub sl_calls: u64,
    pub pe_calls: u64,
    pub optimism: OptimismCheck,
    pub hellinger_sum: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub records: Vec<IterationRecord>,
}

impl RunMetrics {
    pub fn csv_header(horizon: usize) -> String {
        let mut header = String::from("k,gap,mixture_gap,bonus_value,tv_value");
        for h in 0..horizon {
            let _ = write!(header, ",logdet_{h}");
        }
        header.push_str(",selected,sl_calls,pe_calls,optimism_ok,optimism_violations,optimism_worst_slack,hellinger_sum");
        header
    }

    /// One row per iteration; floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let horizon = self.records.first().map_or(0, |r| r.log_dets.len());
        let mut out = Self::csv_header(horizon);
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},{},{}", r.k, r.gap, r.mixture_gap, r.bonus_value, r.tv_value);
            for v in &r.log_dets {
                let _ = write!(out, ",{v}");
            }
            let _ = write!(
                out,
                ",{},{},{},{},{},{},",
                r.selected,
                r.sl_calls,
                r.pe_calls,
                u8::from(r.optimism.holds()),
                r.optimism.violations,
                r.optimism.worst_slack
            );
            if let Some(hs) = r.hellinger_sum {
                let _ = write!(out, "{hs}");
            }
            out.push('\n');
        }
        out
    }

    /// Fraction of iterations `k >= burn_in` whose optimism check holds.
    pub fn optimism_rate(&self, burn_in: usize) -> Option<f64> {
        let checked: Vec<bool> = self
            .records
            .iter()
            .filter(|r| r.k >= burn_in && r.optimism.cells > 0)
            .map(|r| r.optimism.holds())
            .collect();
        (!checked.is_empty()).then(|| checked.iter().filter(|x| **x).count() as f64 / checked.len() as f64)
    }

    /// Fraction of all checked cells after burn-in that satisfy the bound.
    pub fn optimism_cell_rate(&self, burn_in: usize) -> Option<f64> {
        let (cells, bad) = self
            .records
            .iter()
            .filter(|r| r.k >= burn_in)
            .fold((0usize, 0usize), |(c, b), r| (c + r.optimism.cells, b + r.optimism.violations));
        (cells > 0).then(|| 1.0 - bad as f64 / cells as f64)
    }

    /// First iteration from which the selected model never changes again.
    pub fn selection_settles_at(&self) -> Option<usize> {
        let last = self.records.last()?.selected;
        let pos = self.records.iter().rposition(|r| r.selected != last);
        Some(pos.map_or(0, |p| p + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub hyper: Hyper,
    pub v_star: f64,
    pub final_gap: f64,
    pub final_mixture_gap: f64,
    pub optimism_rate: Option<f64>,
    pub optimism_cell_rate: Option<f64>,
    pub final_selected: usize,
    pub truth_index: Option<usize>,
    pub selection_settles_at: Option<usize>,
    pub ledger: LedgerSnapshot,
}

/// Everything a run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub mixture: MixturePolicy,
    pub metrics: RunMetrics,
    pub summary: RunSummary,
    /// Conditioning pairs `(s_{h-1}, a_{h-1})` of the model-fitting
    /// trajectories, per iteration and step.
    pub conditioning: Vec<Vec<Option<(usize, usize)>>>,
}

/// A run that stopped early; `metrics` holds every completed iteration.
#[derive(Debug, Error)]
#[error("run failed at iteration {iteration}: {error}")]
pub struct RunFailure {
    pub iteration: usize,
    pub error: OptAcError,
    pub metrics: RunMetrics,
}

/// Runs the optimistic actor-critic for `config.iterations + 1` iterations
/// (`k = 0..=K`) and returns the uniform mixture of `pi^(0), .., pi^(K)`.
pub fn run_optac(env: &Environment, class: &ModelClass, config: &OptAcConfig) -> Result<RunOutput, RunFailure> {
    let fail = |iteration, error: OptAcError, metrics: &RunMetrics| RunFailure {
        iteration,
        error,
        metrics: metrics.clone(),
    };
    let empty = RunMetrics::default();
    config.validate().map_err(|e| fail(0, e, &empty))?;
    let first = class
        .models
        .first()
        .ok_or_else(|| fail(0, OptAcError::Config("empty model class".into()), &empty))?;
    let dims = env.kernel.dims;
    if first.dims != dims {
        return Err(fail(
            0,
            OptAcError::Config("model class dimensions differ from the environment".into()),
            &empty,
        ));
    }
    let hyper = config.resolve(dims, first.rank, class.len());
    let horizon = dims.horizon;

    let opt = exact_optimal(&env.kernel, &env.reward).map_err(|e| fail(0, e.into(), &empty))?;
    let s0 = env.kernel.initial_state;
    let v_star = opt.v[[0, s0]];

    let ledger = OracleLedger::new();
    let mut tracker = LogLikTracker::new(class);
    let hellinger = config
        .track_good_event
        .then(|| HellingerTable::new(&env.kernel, tracker.kernels()));
    let mut cond_counts = vec![vec![0u64; dims.n_states * dims.n_actions + 1]; horizon];
    let mut gram_samples: Vec<Vec<(usize, usize)>> = vec![Vec::new(); horizon];
    let mut rng = seeded(config.seed, stream::ROLLOUT);
    let mut pi = Policy::uniform(dims);
    let mut components = Vec::with_capacity(config.iterations + 1);
    let mut metrics = RunMetrics::default();
    let mut conditioning = Vec::with_capacity(config.iterations + 1);
    let mut value_sum = 0.0;
    let base_bonus = BonusState::new(horizon, first.rank, hyper.alpha, hyper.lambda).map_err(|e| fail(0, e, &empty))?;

    for k in 0..=config.iterations {
        let batch = collect_exploratory(&env.kernel, &pi, &mut rng);

        // model and bonus use data from iterations before k
        let mle = tracker.select(&ledger).map_err(|e| fail(k, e.into(), &metrics))?;
        let model = &class.models[mle.index];
        let model_kernel = &tracker.kernels()[mle.index];
        let features: Vec<Vec<&[f64]>> = gram_samples
            .iter()
            .enumerate()
            .map(|(h, samples)| {
                samples
                    .iter()
                    .map(|&(s, a)| model.phi.slice(ndarray::s![h, s, a, ..]).to_slice().expect("contiguous"))
                    .collect()
            })
            .collect();
        let bonus = base_bonus.gram_update(features).map_err(|e| fail(k, e, &metrics))?;
        let bonus_table = bonus.bonus_table(model);
        let augmented = &env.reward + &bonus_table;

        let q_hat = critic(model, model_kernel, &pi, &augmented, config, k, &ledger).map_err(|e| fail(k, e, &metrics))?;

        // researcher-side diagnostics against the true environment
        let (_, v_pi) = exact_policy_eval(&env.kernel, &pi, &env.reward).map_err(|e| fail(k, e.into(), &metrics))?;
        let value = v_pi[[0, s0]];
        value_sum += value;
        let (_, v_bonus) =
            exact_policy_eval(model_kernel, &pi, &bonus_table).map_err(|e| fail(k, e.into(), &metrics))?;
        let tv = tv_reward_table(&env.kernel, model_kernel).map_err(|e| fail(k, e.into(), &metrics))?;
        let (_, v_tv) = exact_policy_eval(&env.kernel, &pi, &tv).map_err(|e| fail(k, e.into(), &metrics))?;
        let optimism = optimism_check(model, model_kernel, &pi, &tv, &bonus);
        let hellinger_sum = hellinger.as_ref().map(|t| t.weighted_sum(mle.index, &cond_counts));

        metrics.records.push(IterationRecord {
            k,
            gap: v_star - value,
            mixture_gap: v_star - value_sum / (k + 1) as f64,
            bonus_value: v_bonus[[0, s0]],
            tv_value: v_tv[[0, s0]],
            log_dets: bonus.log_dets(),
            selected: mle.index,
            sl_calls: ledger.count(OracleKind::Sl),
            pe_calls: ledger.count(OracleKind::Pe) + ledger.count(OracleKind::PeExact),
            optimism,
            hellinger_sum,
        });

        // fold this iteration's data in for the next one
        let mut cells = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let (s, a, next) = batch.mle_triple(h);
            tracker.observe(h, s, a, next);
            let cond = batch.conditioning(h);
            cond_counts[h][HellingerTable::cell_index(cond, dims)] += 1;
            cells.push(cond);
            if let Some(sample) = batch.gram_sample(h) {
                gram_samples[h].push(sample);
            }
        }
        conditioning.push(cells);

        let next_pi = actor_update(&pi, &q_hat, hyper.eta).map_err(|e| fail(k, e, &metrics))?;
        components.push(std::mem::replace(&mut pi, next_pi));
    }

    let last = metrics.records.last().expect("at least one iteration");
    let summary = RunSummary {
        iterations: config.iterations,
        hyper,
        v_star,
        final_gap: last.gap,
        final_mixture_gap: last.mixture_gap,
        optimism_rate: metrics.optimism_rate(config.burn_in),
        optimism_cell_rate: metrics.optimism_cell_rate(config.burn_in),
        final_selected: last.selected,
        truth_index: class.truth_index,
        selection_settles_at: metrics.selection_settles_at(),
        ledger: ledger.snapshot(),
    };
    let mixture = MixturePolicy::new(components).map_err(|e| fail(config.iterations, e.into(), &metrics))?;
    Ok(RunOutput {
        mixture,
        metrics,
        summary,
        conditioning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{gen_lowrank, gen_model_class};
    use crate::mdp::fixtures::chain;
    use ndarray::Array2;
    use rand::SeedableRng;

    #[test]
    fn empty_gram_gives_closed_form_bonus() {
        let b = BonusState::new(3, 2, 0.4, 0.25).unwrap();
        let v = b.bonus_value(1, &[1.0, 0.0]);
        assert!((v - 9.0 * (0.4f64 / 0.5).min(1.0)).abs() < 1e-12);
        assert_eq!(b.bonus_value(0, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn repeated_axis_samples_shrink_one_direction() {
        let b = BonusState::new(1, 2, 2.0, 0.5).unwrap();
        let e1 = [1.0, 0.0];
        let samples = vec![vec![&e1[..]; 10_000]];
        let b = b.gram_update(samples).unwrap();
        assert_eq!(b.gram(0)[(0, 0)], 0.5 + 10_000.0);
        assert_eq!(b.gram(0)[(1, 1)], 0.5);
        assert_eq!(b.gram(0)[(0, 1)], 0.0);
        assert!(b.bonus_value(0, &e1) <= 0.02 * b.scale);
        assert_eq!(b.bonus_value(0, &[0.0, 1.0]), b.scale * (2.0 / 0.5f64.sqrt()).min(1.0));
    }

    #[test]
    fn bonus_shrinks_as_samples_are_added() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<[f64; 3]> = (0..60).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let probe = [0.3, 0.5, 0.2];
        let base = BonusState::new(1, 3, 0.3, 1.0 / 3.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in 0..xs.len() {
            let b = base.gram_update(vec![xs[..n].iter().map(|x| &x[..])]).unwrap();
            let v = b.bonus_value(0, &probe);
            assert!((0.0..=b.scale).contains(&v));
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn single_step_batch_is_uniform_at_first_action() {
        let mdp = chain(1);
        let k = mdp.to_kernel();
        let pi = Policy::deterministic(&Array2::from_elem((1, 2), 1), 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut hits = [0usize; 2];
        for _ in 0..4000 {
            let b = collect_exploratory(&k, &pi, &mut rng);
            assert_eq!(b.horizon(), 1);
            hits[b.trajectories[0].actions[0]] += 1;
            assert_eq!(b.gram_sample(0), None);
            assert_eq!(b.conditioning(0), None);
        }
        assert!(hits[0] > 1800 && hits[1] > 1800);
    }

    #[test]
    fn batch_shapes_and_indices() {
        let env = gen_lowrank(7, 20, 4, 5, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let b = collect_exploratory(&env.to_kernel(), &Policy::uniform(env.dims), &mut rng);
        for (t, traj) in b.trajectories.iter().enumerate() {
            assert_eq!(traj.states.len(), t + 2);
            assert_eq!(traj.actions.len(), t + 1);
        }
        assert_eq!(b.mle_triple(2), (b.trajectories[2].states[2], b.trajectories[2].actions[2], b.trajectories[2].states[3]));
        assert_eq!(b.gram_sample(2), Some((b.trajectories[3].states[2], b.trajectories[3].actions[2])));
        assert_eq!(b.gram_sample(4), None);
    }

    #[test]
    fn constant_rows_and_zero_eta_leave_policy_unchanged() {
        let dims = Dims::new(3, 4, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut probs = Array3::from_shape_fn(dims.table_shape(), |_| rng.random::<f64>() + 0.1);
        for h in 0..2 {
            for s in 0..3 {
                let t: f64 = probs.slice(ndarray::s![h, s, ..]).sum();
                probs.slice_mut(ndarray::s![h, s, ..]).mapv_inplace(|p| p / t);
            }
        }
        let pi = Policy::from_probs(probs).unwrap();
        let q = Array3::from_shape_fn(dims.table_shape(), |(h, s, _)| (h * 3 + s) as f64);
        let same = actor_update(&pi, &q, 0.7).unwrap();
        for (a, b) in same.probs().iter().zip(pi.probs().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let q = Array3::from_shape_fn(dims.table_shape(), |(h, s, a)| (h + s * a) as f64);
        let frozen = actor_update(&pi, &q, 0.0).unwrap();
        for (a, b) in frozen.probs().iter().zip(pi.probs().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn large_eta_concentrates_on_argmax() {
        let dims = Dims::new(1, 3, 1);
        let pi = Policy::uniform(dims);
        let q = Array3::from_shape_vec((1, 1, 3), vec![1.0, 3.0, 2.0]).unwrap();
        let next = actor_update(&pi, &q, 100.0).unwrap();
        assert!(next.prob(0, 0, 1) >= 0.99);
    }

    #[test]
    fn actor_update_maximizes_the_regularized_objective() {
        let dims = Dims::new(4, 3, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let pi = Policy::uniform(dims);
        let q = Array3::from_shape_fn(dims.table_shape(), |_| rng.random::<f64>() * 10.0);
        let eta = 0.3;
        let next = actor_update(&pi, &q, eta).unwrap();
        for h in 0..2 {
            for s in 0..4 {
                let qs: Vec<f64> = q.slice(ndarray::s![h, s, ..]).to_vec();
                let reference: Vec<f64> = pi.row(h, s).to_vec();
                let best = actor_objective(&next.row(h, s).to_vec(), &reference, &qs, eta);
                for _ in 0..100 {
                    let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                    let t: f64 = raw.iter().sum();
                    let cand: Vec<f64> = raw.iter().map(|x| x / t).collect();
                    assert!(actor_objective(&cand, &reference, &qs, eta) <= best + 1e-12);
                }
            }
        }
    }

    #[test]
    fn tv_table_range() {
        let env = gen_lowrank(7, 20, 4, 5, 3).unwrap();
        let class = gen_model_class(&env, 4, 11).unwrap();
        assert!(tv_reward_table(&env, &env).unwrap().iter().all(|v| *v == 0.0));
        for m in &class.models {
            let t = tv_reward_table(&env, m).unwrap();
            assert!(t.iter().all(|v| (0.0..=2.0 + 1e-12).contains(v)));
        }
    }

    #[test]
    fn singleton_class_selects_truth_every_iteration() {
        let env = gen_lowrank(3, 6, 2, 3, 2).unwrap();
        let class = gen_model_class(&env, 1, 0).unwrap();
        let config = OptAcConfig {
            iterations: 1,
            ..OptAcConfig::default()
        };
        let out = run_optac(&Environment::from(&env), &class, &config).unwrap();
        assert!(out.metrics.records.iter().all(|r| r.selected == 0));
        assert_eq!(out.mixture.components().len(), 2);
        assert_eq!(out.summary.ledger.mle, 2);
        assert_eq!(out.summary.ledger.pe_exact, 2);
    }

    #[test]
    fn mixture_value_is_component_average() {
        let env = gen_lowrank(3, 6, 2, 3, 2).unwrap();
        let class = gen_model_class(&env, 3, 1).unwrap();
        let config = OptAcConfig {
            iterations: 20,
            ..OptAcConfig::default()
        };
        let out = run_optac(&Environment::from(&env), &class, &config).unwrap();
        let v = out.mixture.value(&env, &env.reward).unwrap();
        let v_star = out.summary.v_star;
        assert!((v_star - v - out.summary.final_mixture_gap).abs() < 1e-12);
        for r in &out.metrics.records {
            assert!(r.gap >= -1e-9 && r.mixture_gap >= -1e-9);
        }
    }

    #[test]
    fn critic_values_lie_in_range() {
        let env = gen_lowrank(5, 8, 3, 4, 2).unwrap();
        let bonus = BonusState::new(4, 2, 1.0, 0.5).unwrap();
        let aug = &env.reward + &bonus.bonus_table(&env);
        let ledger = OracleLedger::new();
        let q = critic(&env, &env.to_kernel(), &Policy::uniform(env.dims), &aug, &OptAcConfig::default(), 0, &ledger)
            .unwrap();
        let hmax = 4.0 * (1.0 + 12.0);
        assert!(q.iter().all(|v| (0.0..=hmax).contains(v)));
        assert_eq!(ledger.min_accuracy(), Some(1.0 / 2000f64.sqrt()));
    }

    #[test]
    fn config_rejects_bad_values() {
        let c = OptAcConfig {
            delta: 1.5,
            ..OptAcConfig::default()
        };
        assert!(c.validate().is_err());
        let c = OptAcConfig {
            eta: Some(-1.0),
            ..OptAcConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_hyperparameters() {
        let c = OptAcConfig::default();
        let h = c.resolve(Dims::new(20, 4, 5), 3, 32);
        let beta = (2000.0f64 * 32.0 / 0.1).ln();
        assert!((h.beta - beta).abs() < 1e-12);
        assert!((h.lambda - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.alpha - (1.0 + 4.0 * beta).sqrt()).abs() < 1e-12);
        assert!((h.eta - 4f64.ln().sqrt() / (5.0 * 2000f64.sqrt())).abs() < 1e-15);
    }
}
