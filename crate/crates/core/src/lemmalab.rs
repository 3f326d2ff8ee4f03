//! Executable checks of the inequalities behind the regret analysis.
//!
//! Deterministic checks (elliptical potential, TV-Hellinger, mirror-descent
//! stability, value difference) must never report a violation. The
//! good-event diagnostic is statistical and only raises alarms.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envgen::gen_lowrank;
use crate::mdp::{
    exact_policy_eval, hellinger_sq, occupancy, tv_distance, DenseKernel, Dims, Dynamics, MdpError, Policy,
    RewardTable,
};
use crate::optac::actor_update;
use crate::rng::{seeded, stream};
use crate::stats::log_log_slope;

/// Relative slack granted to floating-point round-off in deterministic checks.
pub const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LemmaError {
    #[error("critic entry {value} exceeds the bound 2H = {bound}")]
    CriticOutOfRange { value: f64, bound: f64 },
    #[error("lambda must be positive")]
    NonPositiveLambda,
    #[error("vectors must share one dimension")]
    RaggedVectors,
    #[error("value function outside [0, B]: {0}")]
    ValueOutOfRange(f64),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    EllipticalPotential,
    TvHellinger,
    ConditionalHellinger,
    MirrorDescent,
    ValueDifferenceModel,
    ValueDifferenceComparator,
    GoodEvent,
}

impl LemmaId {
    pub const DETERMINISTIC: [LemmaId; 6] = [
        Self::EllipticalPotential,
        Self::TvHellinger,
        Self::ConditionalHellinger,
        Self::MirrorDescent,
        Self::ValueDifferenceModel,
        Self::ValueDifferenceComparator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::EllipticalPotential => "elliptical-potential",
            Self::TvHellinger => "tv-hellinger",
            Self::ConditionalHellinger => "conditional-hellinger",
            Self::MirrorDescent => "mirror-descent",
            Self::ValueDifferenceModel => "value-difference-model",
            Self::ValueDifferenceComparator => "value-difference-comparator",
            Self::GoodEvent => "good-event",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::DETERMINISTIC
            .into_iter()
            .chain([Self::GoodEvent])
            .find(|id| id.name() == name)
    }
}

/// Outcome of checking `lhs <= rhs` over many trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: LemmaId,
    pub trials: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` seen; negative when every trial had room to spare.
    pub worst_slack: f64,
}

impl LemmaReport {
    pub fn new(lemma: LemmaId) -> Self {
        Self {
            lemma,
            trials: 0,
            violations: 0,
            worst_slack: f64::NEG_INFINITY,
        }
    }

    /// Records one inequality, tolerating relative round-off of [`ROUNDING_SLACK`].
    pub fn record(&mut self, lhs: f64, rhs: f64) {
        self.trials += 1;
        let slack = lhs - rhs;
        self.worst_slack = self.worst_slack.max(slack);
        let tol = ROUNDING_SLACK * lhs.abs().max(rhs.abs()).max(1.0);
        if !(slack <= tol) {
            self.violations += 1;
        }
    }

    pub fn merge(&mut self, other: &LemmaReport) {
        self.trials += other.trials;
        self.violations += other.violations;
        self.worst_slack = self.worst_slack.max(other.worst_slack);
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Both inequalities of the elliptical potential bound for one sequence:
/// `sum min(1, f_i) <= 2 log(det A_{n+1} / det lambda I) <= 2 d log(1 + n L^2 / (lambda d))`
/// with `f_i = |Y_i|^2_{A_i^{-1}}` and `L` the largest norm in the sequence.
pub fn elliptical_potential_check(vectors: &[Vec<f64>], lambda: f64) -> Result<LemmaReport, LemmaError> {
    if !(lambda > 0.0) {
        return Err(LemmaError::NonPositiveLambda);
    }
    let mut report = LemmaReport::new(LemmaId::EllipticalPotential);
    let Some(d) = vectors.first().map(Vec::len) else {
        report.record(0.0, 0.0);
        return Ok(report);
    };
    if vectors.iter().any(|v| v.len() != d) {
        return Err(LemmaError::RaggedVectors);
    }
    let mut a = DMatrix::<f64>::identity(d, d) * lambda;
    let mut lhs = 0.0;
    let mut l_max: f64 = 0.0;
    for y in vectors {
        let y = DVector::from_column_slice(y);
        l_max = l_max.max(y.norm());
        let f = y.dot(&a.clone().cholesky().expect("A is positive definite").solve(&y));
        lhs += f.min(1.0);
        a += &y * y.transpose();
    }
    let chol = a.cholesky().expect("A is positive definite");
    let log_ratio = crate::linalg::log_det(&chol) - d as f64 * lambda.ln();
    let n = vectors.len() as f64;
    let det_bound = 2.0 * log_ratio;
    let norm_bound = 2.0 * d as f64 * (1.0 + n * l_max * l_max / (lambda * d as f64)).ln();
    report.record(lhs, det_bound);
    report.record(det_bound, norm_bound);
    Ok(report)
}

/// `tv(P, Q)^2 <= 4 (|P| + |Q|) hellinger_sq(P, Q)` for each pair.
pub fn tv_hellinger_check(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<LemmaReport, LemmaError> {
    let mut report = LemmaReport::new(LemmaId::TvHellinger);
    for (p, q) in pairs {
        let tv = tv_distance(p, q)?;
        let hs = hellinger_sq(p, q)?;
        let mass: f64 = p.iter().sum::<f64>() + q.iter().sum::<f64>();
        report.record(tv * tv, 4.0 * mass * hs);
    }
    Ok(report)
}

/// `E_{x~P}[hellinger_sq(P(.|x), Q(.|x))] <= 8 hellinger_sq(P_{XY}, Q_{XY})`
/// for marginals `p_x`, `q_x` and row-stochastic conditionals.
pub fn conditional_hellinger_check(
    p_x: &[f64],
    q_x: &[f64],
    p_y: &[Vec<f64>],
    q_y: &[Vec<f64>],
) -> Result<LemmaReport, LemmaError> {
    let mut report = LemmaReport::new(LemmaId::ConditionalHellinger);
    let mut lhs = 0.0;
    let mut joint_p = Vec::new();
    let mut joint_q = Vec::new();
    for x in 0..p_x.len() {
        lhs += p_x[x] * hellinger_sq(&p_y[x], &q_y[x])?;
        joint_p.extend(p_y[x].iter().map(|v| v * p_x[x]));
        joint_q.extend(q_y[x].iter().map(|v| v * q_x[x]));
    }
    report.record(lhs, 8.0 * hellinger_sq(&joint_p, &joint_q)?);
    Ok(report)
}

/// Replays the exponentiated-gradient update from the uniform policy on a
/// sequence of critics for a single step and checks
/// `sum_k E_q[sum_a Q_k(s,a)(pi*(a|s) - pi_k(a|s))] <= log|A| / eta + 2 eta H^2 K`.
///
/// Each critic is `(s, a)`; `comparator` is `(s, a)` and `q_dist` weights states.
/// With `comparator = None` the best fixed action per state in hindsight is used.
pub fn md_stability_check(
    q_sequence: &[ndarray::Array2<f64>],
    eta: f64,
    horizon: usize,
    comparator: Option<&ndarray::Array2<f64>>,
    q_dist: &[f64],
) -> Result<LemmaReport, LemmaError> {
    let mut report = LemmaReport::new(LemmaId::MirrorDescent);
    let Some(first) = q_sequence.first() else {
        report.record(0.0, 0.0);
        return Ok(report);
    };
    let (n_states, n_actions) = first.dim();
    let bound = 2.0 * horizon as f64;
    for q in q_sequence {
        if let Some(v) = q.iter().find(|v| v.abs() > bound) {
            return Err(LemmaError::CriticOutOfRange { value: *v, bound });
        }
    }
    let best_fixed;
    let comparator = match comparator {
        Some(c) => c,
        None => {
            let mut c = ndarray::Array2::zeros((n_states, n_actions));
            for s in 0..n_states {
                let totals: Vec<f64> =
                    (0..n_actions).map(|a| q_sequence.iter().map(|q| q[[s, a]]).sum()).collect();
                let best = (0..n_actions).fold(0, |b, a| if totals[a] > totals[b] { a } else { b });
                c[[s, best]] = 1.0;
            }
            best_fixed = c;
            &best_fixed
        }
    };
    let dims = Dims::new(n_states, n_actions, 1);
    let mut pi = Policy::uniform(dims);
    let mut lhs = 0.0;
    for q in q_sequence {
        for s in 0..n_states {
            let gain: f64 = (0..n_actions).map(|a| q[[s, a]] * (comparator[[s, a]] - pi.prob(0, s, a))).sum();
            lhs += q_dist[s] * gain;
        }
        let q3 = q.clone().into_shape_with_order((1, n_states, n_actions)).expect("reshape critic");
        pi = actor_update(&pi, &q3, eta).expect("finite critic");
    }
    let k = q_sequence.len() as f64;
    let h = horizon as f64;
    report.record(lhs, (n_actions as f64).ln() / eta + 2.0 * eta * h * h * k);
    Ok(report)
}

/// Terms of one value-difference bound, all evaluated exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueDifferenceTerms {
    pub difference: f64,
    pub reward_term: f64,
    pub policy_term: f64,
    pub transition_term: f64,
}

impl ValueDifferenceTerms {
    pub fn bound(&self) -> f64 {
        self.reward_term + self.policy_term + self.transition_term
    }
}

/// `V_{theta,r}^pi - V_{theta',r'}^pi'` against the bound expressed under the
/// roll-out model `(roll_model, roll_pi)` with the other side's critic.
#[allow(clippy::too_many_arguments)]
fn value_difference_terms<A: Dynamics + ?Sized, B: Dynamics + ?Sized>(
    roll_model: &A,
    roll_pi: &Policy,
    other_model: &B,
    other_pi: &Policy,
    other_reward: &RewardTable,
    reward_diff: &RewardTable,
    sign_pi: f64,
    difference: f64,
) -> Result<ValueDifferenceTerms, LemmaError> {
    let dims = roll_model.dims();
    let s0 = roll_model.initial_state();
    let (q_other, v_other) = exact_policy_eval(other_model, other_pi, other_reward)?;
    if let Some(v) = v_other.iter().find(|v| **v < -1e-12) {
        return Err(LemmaError::ValueOutOfRange(*v));
    }
    let bound = v_other.iter().copied().fold(0.0, f64::max);
    let (_, v_diff) = exact_policy_eval(roll_model, roll_pi, reward_diff)?;
    let occ = occupancy(roll_model, roll_pi)?;
    let state_occ = occ.sum_axis(ndarray::Axis(2));
    let mut policy_term = 0.0;
    let mut transition_term = 0.0;
    let mut p = vec![0.0; dims.n_states];
    let mut q = vec![0.0; dims.n_states];
    for h in 0..dims.horizon {
        for s in 0..dims.n_states {
            let ds = state_occ[[h, s]];
            if ds > 0.0 {
                let inner: f64 = (0..dims.n_actions)
                    .map(|a| q_other[[h, s, a]] * sign_pi * (roll_pi.prob(h, s, a) - other_pi.prob(h, s, a)))
                    .sum();
                policy_term += ds * inner;
            }
            for a in 0..dims.n_actions {
                let w = occ[[h, s, a]];
                if w > 0.0 {
                    roll_model.fill_next(h, s, a, &mut p);
                    other_model.fill_next(h, s, a, &mut q);
                    transition_term += w * crate::mdp::tv_distance(&p, &q)?;
                }
            }
        }
    }
    Ok(ValueDifferenceTerms {
        difference,
        reward_term: v_diff[[0, s0]],
        policy_term,
        transition_term: bound * transition_term,
    })
}

/// Both value-difference bounds for `(theta, pi, r)` versus `(theta', pi', r')`.
/// The first rolls out under `(theta, pi)` with the primed critic; the second
/// rolls out under `(theta', pi')` with the unprimed critic.
pub fn value_difference_check<A: Dynamics + ?Sized, B: Dynamics + ?Sized>(
    theta: &A,
    theta_prime: &B,
    pi: &Policy,
    pi_prime: &Policy,
    r: &RewardTable,
    r_prime: &RewardTable,
) -> Result<(LemmaReport, LemmaReport, ValueDifferenceTerms, ValueDifferenceTerms), LemmaError> {
    let s0 = theta.initial_state();
    let (_, v) = exact_policy_eval(theta, pi, r)?;
    let (_, v_prime) = exact_policy_eval(theta_prime, pi_prime, r_prime)?;
    let difference = v[[0, s0]] - v_prime[[0, theta_prime.initial_state()]];
    let reward_diff = r - r_prime;
    let first = value_difference_terms(theta, pi, theta_prime, pi_prime, r_prime, &reward_diff, 1.0, difference)?;
    // policy term of the second bound is E_{theta',pi'}[sum_a Q_theta^pi (pi - pi')]
    let second = value_difference_terms(theta_prime, pi_prime, theta, pi, r, &reward_diff, -1.0, difference)?;
    let mut model_report = LemmaReport::new(LemmaId::ValueDifferenceModel);
    model_report.record(difference, first.bound());
    let mut comparator_report = LemmaReport::new(LemmaId::ValueDifferenceComparator);
    comparator_report.record(difference, second.bound());
    Ok((model_report, comparator_report, first, second))
}

/// Squared Hellinger distances between the truth and every model for the
/// joint law of `(s_h, a_h, s_{h+1})` given `(s_{h-1}, a_{h-1})` with uniform
/// `a_h`. At the first step the law is that of `(a_0, s_1)` from the start state.
#[derive(Debug, Clone)]
pub struct HellingerTable {
    dims: Dims,
    n_cells: usize,
    /// `[model][h][cell]`
    values: Vec<Vec<Vec<f64>>>,
}

impl HellingerTable {
    /// Cell of a conditioning pair; the first step uses the extra last cell.
    pub fn cell_index(cond: Option<(usize, usize)>, dims: Dims) -> usize {
        match cond {
            Some((s, a)) => s * dims.n_actions + a,
            None => dims.n_states * dims.n_actions,
        }
    }

    pub fn new(truth: &DenseKernel, models: &[DenseKernel]) -> Self {
        let dims = truth.dims;
        let (n_s, n_a) = (dims.n_states, dims.n_actions);
        let n_cells = n_s * n_a + 1;
        let sqrt_t = truth.probs.mapv(f64::sqrt);
        let values = models
            .iter()
            .map(|m| {
                if m.probs == truth.probs {
                    return vec![vec![0.0; n_cells]; dims.horizon];
                }
                let sqrt_m = m.probs.mapv(f64::sqrt);
                let unif = (1.0 / n_a as f64).sqrt();
                (0..dims.horizon)
                    .map(|h| {
                        // joint amplitudes: sqrt(T_{h-1}(x|c)) * sqrt(1/A) * sqrt(T_h(y|x,a))
                        let joint = |first: &dyn Fn(usize) -> (f64, f64)| {
                            let mut total = 0.0;
                            for x in 0..n_s {
                                let (ax, bx) = first(x);
                                if ax == 0.0 && bx == 0.0 {
                                    continue;
                                }
                                for a in 0..n_a {
                                    for y in 0..n_s {
                                        let p = ax * unif * sqrt_m[[h, x, a, y]];
                                        let q = bx * unif * sqrt_t[[h, x, a, y]];
                                        total += (p - q) * (p - q);
                                    }
                                }
                            }
                            total
                        };
                        let mut row = vec![0.0; n_cells];
                        if h == 0 {
                            // (a_0, s_1) from the start state
                            let s0 = truth.initial_state;
                            let mut total = 0.0;
                            for a in 0..n_a {
                                for y in 0..n_s {
                                    let d = unif * (sqrt_m[[0, s0, a, y]] - sqrt_t[[0, s0, a, y]]);
                                    total += d * d;
                                }
                            }
                            row[n_cells - 1] = total;
                        } else {
                            for s in 0..n_s {
                                for a in 0..n_a {
                                    row[s * n_a + a] =
                                        joint(&|x| (sqrt_m[[h - 1, s, a, x]], sqrt_t[[h - 1, s, a, x]]));
                                }
                            }
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        Self { dims, n_cells, values }
    }

    pub fn value(&self, model: usize, h: usize, cell: usize) -> f64 {
        self.values[model][h][cell]
    }

    /// `sum_h sum_cell counts[h][cell] * value(model, h, cell)`.
    pub fn weighted_sum(&self, model: usize, counts: &[Vec<u64>]) -> f64 {
        (0..self.dims.horizon)
            .map(|h| {
                counts[h]
                    .iter()
                    .zip(&self.values[model][h])
                    .map(|(&c, &v)| c as f64 * v)
                    .sum::<f64>()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEventReport {
    pub report: LemmaReport,
    /// Hellinger sum of the selected model divided by `log(K |Theta| / delta)`, per iteration.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub alarm_threshold: f64,
    /// Log-log slope of the Hellinger sum against `k` over the second half of
    /// the run; values near zero mean at most logarithmic growth.
    pub growth_exponent: Option<f64>,
}

/// Hellinger-sum diagnostic of a finished run. `selected[k]` is the model
/// picked at iteration `k`, which saw the data of iterations `0..k`, and
/// `conditioning[n][h]` the conditioning pair of iteration `n`'s step-`h` sample.
pub fn good_event_diagnostic(
    table: &HellingerTable,
    selected: &[usize],
    conditioning: &[Vec<Option<(usize, usize)>>],
    class_size: usize,
    delta: f64,
    alarm_threshold: f64,
) -> GoodEventReport {
    let k_total = selected.len().max(1) as f64;
    let log_term = (k_total * class_size as f64 / delta).ln().max(f64::MIN_POSITIVE);
    let mut counts = vec![vec![0u64; table.n_cells]; table.dims.horizon];
    let mut report = LemmaReport::new(LemmaId::GoodEvent);
    let mut ratios = Vec::with_capacity(selected.len());
    let mut sums = Vec::with_capacity(selected.len());
    for (k, &model) in selected.iter().enumerate() {
        let sum = table.weighted_sum(model, &counts);
        sums.push(sum);
        ratios.push(sum / log_term);
        report.record(sum, alarm_threshold * log_term);
        if let Some(cells) = conditioning.get(k) {
            for (h, cond) in cells.iter().enumerate() {
                counts[h][HellingerTable::cell_index(*cond, table.dims)] += 1;
            }
        }
    }
    let half = selected.len() / 2;
    let ks: Vec<f64> = (half..selected.len()).map(|k| (k + 1) as f64).collect();
    let growth_exponent = log_log_slope(&ks, &sums[half..]);
    GoodEventReport {
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        report,
        ratios,
        alarm_threshold,
        growth_exponent,
    }
}

fn random_measure<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    // mix of sparse and dense, normalized and unnormalized
    let scale = if rng.random::<bool>() { 1.0 } else { rng.random::<f64>() * 3.0 };
    let mut v: Vec<f64> = (0..len)
        .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() })
        .collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x *= scale / total);
    }
    v
}

fn random_distribution<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(0.5, 1.0).expect("valid shape");
    loop {
        let v: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            return v.into_iter().map(|x| x / total).collect();
        }
    }
}

fn random_policy<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Policy {
    let mut probs = Array3::zeros(dims.table_shape());
    for h in 0..dims.horizon {
        for s in 0..dims.n_states {
            for (a, p) in random_distribution(dims.n_actions, rng).into_iter().enumerate() {
                probs[[h, s, a]] = p;
            }
        }
    }
    Policy::from_probs_unchecked(probs)
}

/// `trials` random sequences with `n <= 500`, `d <= 8`.
pub fn elliptical_potential_sweep(trials: usize, seed: u64) -> LemmaReport {
    let mut rng = seeded(seed, stream::LEMMAS);
    let mut total = LemmaReport::new(LemmaId::EllipticalPotential);
    for _ in 0..trials {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=500);
        let lambda = 10f64.powf(rng.random_range(-2.0..1.0));
        let scale = rng.random_range(0.1..3.0);
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect())
            .collect();
        total.merge(&elliptical_potential_check(&vectors, lambda).expect("positive lambda"));
    }
    total
}

pub fn tv_hellinger_sweep(trials: usize, seed: u64) -> LemmaReport {
    let mut rng = seeded(seed, stream::LEMMAS);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .map(|_| {
            let len = rng.random_range(1..=16);
            (random_measure(len, &mut rng), random_measure(len, &mut rng))
        })
        .collect();
    tv_hellinger_check(&pairs).expect("nonnegative measures")
}

pub fn conditional_hellinger_sweep(trials: usize, seed: u64) -> LemmaReport {
    let mut rng = seeded(seed, stream::LEMMAS);
    let mut total = LemmaReport::new(LemmaId::ConditionalHellinger);
    for _ in 0..trials {
        let nx = rng.random_range(1..=6);
        let ny = rng.random_range(1..=6);
        let p_x = random_distribution(nx, &mut rng);
        let q_x = random_distribution(nx, &mut rng);
        let p_y: Vec<Vec<f64>> = (0..nx).map(|_| random_distribution(ny, &mut rng)).collect();
        let q_y: Vec<Vec<f64>> = (0..nx).map(|_| random_distribution(ny, &mut rng)).collect();
        total.merge(&conditional_hellinger_check(&p_x, &q_x, &p_y, &q_y).expect("valid measures"));
    }
    total
}

/// Random critic sequences (`K = 200`, `|A| = 4`, `H = 5`) with the default step size.
pub fn md_stability_sweep(trials: usize, seed: u64) -> LemmaReport {
    let mut rng = seeded(seed, stream::LEMMAS);
    let (k, n_actions, horizon, n_states) = (200usize, 4usize, 5usize, 3usize);
    let eta = (n_actions as f64).ln().sqrt() / (horizon as f64 * (k as f64).sqrt());
    let bound = 2.0 * horizon as f64;
    let mut total = LemmaReport::new(LemmaId::MirrorDescent);
    for trial in 0..trials {
        let drift: Vec<f64> = (0..n_actions).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let seq: Vec<ndarray::Array2<f64>> = (0..k)
            .map(|_| {
                ndarray::Array2::from_shape_fn((n_states, n_actions), |(_, a)| {
                    let v = if trial % 2 == 0 {
                        rng.random::<f64>() * 2.0 - 1.0
                    } else {
                        0.5 * drift[a] + 0.5 * (rng.random::<f64>() * 2.0 - 1.0)
                    };
                    v * bound
                })
            })
            .collect();
        let q_dist = random_distribution(n_states, &mut rng);
        total.merge(&md_stability_check(&seq, eta, horizon, None, &q_dist).expect("bounded critics"));
    }
    total
}

/// Random tuples on 6-state instances; returns the reports of both bounds.
pub fn value_difference_sweep(trials: usize, seed: u64) -> (LemmaReport, LemmaReport) {
    let mut rng = seeded(seed, stream::LEMMAS);
    let mut first = LemmaReport::new(LemmaId::ValueDifferenceModel);
    let mut second = LemmaReport::new(LemmaId::ValueDifferenceComparator);
    for _ in 0..trials {
        let n_actions = rng.random_range(2..=3);
        let horizon = rng.random_range(2..=4);
        let rank = rng.random_range(1..=3);
        let theta = gen_lowrank(rng.random(), 6, n_actions, horizon, rank).expect("valid dims");
        let theta_prime = gen_lowrank(rng.random(), 6, n_actions, horizon, rank).expect("valid dims");
        let dims = theta.dims;
        let pi = random_policy(dims, &mut rng);
        let pi_prime = if rng.random::<bool>() { pi.clone() } else { random_policy(dims, &mut rng) };
        let r = Array3::from_shape_fn(dims.table_shape(), |_| rng.random::<f64>());
        let r_prime = if rng.random::<bool>() {
            r.clone()
        } else {
            Array3::from_shape_fn(dims.table_shape(), |_| rng.random::<f64>())
        };
        let (a, b, _, _) =
            value_difference_check(&theta, &theta_prime, &pi, &pi_prime, &r, &r_prime).expect("valid tuple");
        first.merge(&a);
        second.merge(&b);
    }
    (first, second)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_unit_vector() {
        let r = elliptical_potential_check(&[vec![1.0, 0.0]], 1.0).unwrap();
        assert!(r.passed());
        assert_eq!(r.trials, 2);
    }

    #[test]
    fn zero_vectors_have_zero_potential() {
        let r = elliptical_potential_check(&vec![vec![0.0; 3]; 10], 0.5).unwrap();
        assert!(r.passed());
        assert!(r.worst_slack.abs() < 1e-12);
    }

    #[test]
    fn tv_hellinger_closed_forms() {
        let r = tv_hellinger_check(&[(vec![0.3, 0.7], vec![0.3, 0.7])]).unwrap();
        assert_eq!(r.worst_slack, 0.0);
        let r = tv_hellinger_check(&[(vec![1.0, 0.0], vec![0.0, 1.0])]).unwrap();
        assert_eq!(r.worst_slack, 4.0 - 16.0);
    }

    #[test]
    fn md_zero_critic() {
        let q = vec![ndarray::Array2::zeros((2, 3))];
        let r = md_stability_check(&q, 0.1, 2, None, &[0.5, 0.5]).unwrap();
        assert!(r.passed());
        assert!((r.worst_slack + 3f64.ln() / 0.1 + 2.0 * 0.1 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn md_alternating_adversary() {
        let h = 3usize;
        let seq: Vec<ndarray::Array2<f64>> = (0..100)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                ndarray::Array2::from_shape_fn((1, 2), |(_, a)| if a == 0 { sign * 6.0 } else { -sign * 6.0 })
            })
            .collect();
        let r = md_stability_check(&seq, 0.05, h, None, &[1.0]).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn md_rejects_large_critic() {
        let q = vec![ndarray::Array2::from_elem((1, 2), 7.0)];
        assert!(matches!(
            md_stability_check(&q, 0.1, 3, None, &[1.0]),
            Err(LemmaError::CriticOutOfRange { .. })
        ));
    }

    #[test]
    fn identical_tuples_give_zero() {
        let theta = gen_lowrank(1, 6, 2, 3, 2).unwrap();
        let pi = Policy::uniform(theta.dims);
        let (a, b, t1, _) = value_difference_check(&theta, &theta, &pi, &pi, &theta.reward, &theta.reward).unwrap();
        assert!(a.passed() && b.passed());
        assert_eq!(t1.difference, 0.0);
        assert_eq!(t1.bound(), 0.0);
    }

    #[test]
    fn model_perturbation_bounded_by_transition_term() {
        let theta = gen_lowrank(1, 6, 2, 3, 2).unwrap();
        let mut theta_prime = theta.clone();
        theta_prime.mu = gen_lowrank(2, 6, 2, 3, 2).unwrap().mu;
        let pi = Policy::uniform(theta.dims);
        let (a, _, t1, _) = value_difference_check(&theta, &theta_prime, &pi, &pi, &theta.reward, &theta.reward).unwrap();
        assert!(a.passed());
        assert_eq!(t1.reward_term, 0.0);
        assert_eq!(t1.policy_term, 0.0);
        assert!(t1.difference <= t1.transition_term);
    }

    #[test]
    fn small_sweeps_pass() {
        assert!(elliptical_potential_sweep(50, 1).passed());
        assert!(tv_hellinger_sweep(500, 1).passed());
        assert!(conditional_hellinger_sweep(200, 1).passed());
        assert!(md_stability_sweep(10, 1).passed());
        let (a, b) = value_difference_sweep(20, 1);
        assert!(a.passed() && b.passed());
    }

    #[test]
    fn truth_has_zero_hellinger_sum() {
        let env = gen_lowrank(7, 20, 4, 5, 3).unwrap();
        let k = env.to_kernel();
        let table = HellingerTable::new(&k, std::slice::from_ref(&k));
        let counts = vec![vec![3u64; 81]; 5];
        assert_eq!(table.weighted_sum(0, &counts), 0.0);
        let other = gen_lowrank(8, 20, 4, 5, 3).unwrap().to_kernel();
        let table = HellingerTable::new(&k, &[other]);
        assert!(table.weighted_sum(0, &counts) > 0.0);
        for h in 0..5 {
            for c in 0..81 {
                assert!(table.value(0, h, c) <= 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn lemma_names_round_trip() {
        for id in LemmaId::DETERMINISTIC.into_iter().chain([LemmaId::GoodEvent]) {
            assert_eq!(LemmaId::parse(id.name()), Some(id));
        }
    }
}
