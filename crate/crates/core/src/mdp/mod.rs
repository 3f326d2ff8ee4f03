//! Episodic tabular MDPs with a low-rank transition factorization, exact
//! dynamic-programming solvers and probability distances.
//!
//! Steps are indexed `0..horizon`. A transition at step `h` maps `(s, a)` to a
//! distribution over next states; the state reached after the last step is
//! terminal and has value zero.

mod dp;
mod io;
mod metrics;
mod validate;

pub use dp::{
    coverage_constant, exact_optimal, exact_policy_eval, occupancy, state_occupancy,
    OptimalSolution,
};
pub use io::ParseError;
pub use metrics::{hellinger_sq, tv_distance};
pub use validate::{validate, ValidationReport, Violation};

use ndarray::{Array2, Array3, Array4, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inner products in `[-NEG_CLAMP, 0)` are treated as exact zeros.
pub const NEG_CLAMP: f64 = 1e-12;

/// Per-step reward `(h, s, a)`.
pub type RewardTable = Array3<f64>;
/// Action values `(h, s, a)`.
pub type QTable = Array3<f64>;
/// State values `(h, s)` for `h = 0..=horizon`; the last row is the terminal zero row.
pub type VTable = Array2<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("dimension mismatch for {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("negative entry {value} at index {index} of {what}")]
    NegativeEntry {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("distribution is uncoverable: rho is zero at (h={h}, s={s}, a={a}) where occupancy is {mass}")]
    Uncoverable { h: usize, s: usize, a: usize, mass: f64 },
    #[error("invalid policy row at (h={h}, s={s}): {reason}")]
    InvalidPolicy { h: usize, s: usize, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn new(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        Self {
            n_states,
            n_actions,
            horizon,
        }
    }

    pub fn table_shape(&self) -> [usize; 3] {
        [self.horizon, self.n_states, self.n_actions]
    }

    pub(crate) fn check_table(&self, what: &'static str, table: &Array3<f64>) -> Result<(), MdpError> {
        let expected = self.table_shape();
        if table.shape() != expected {
            return Err(MdpError::DimensionMismatch {
                what,
                expected: expected.to_vec(),
                found: table.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// Anything that can report next-state probabilities of an episodic tabular MDP.
pub trait Dynamics {
    fn dims(&self) -> Dims;
    fn initial_state(&self) -> usize;
    fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64;

    /// Writes `T_h(. | s, a)` into `out` (length `n_states`).
    fn fill_next(&self, h: usize, s: usize, a: usize, out: &mut [f64]) {
        for (next, p) in out.iter_mut().enumerate() {
            *p = self.prob(h, s, a, next);
        }
    }

    /// Materializes the full kernel.
    fn to_kernel(&self) -> DenseKernel {
        let dims = self.dims();
        let mut probs = Array4::zeros((dims.horizon, dims.n_states, dims.n_actions, dims.n_states));
        let mut buf = vec![0.0; dims.n_states];
        for h in 0..dims.horizon {
            for s in 0..dims.n_states {
                for a in 0..dims.n_actions {
                    self.fill_next(h, s, a, &mut buf);
                    for (next, &p) in buf.iter().enumerate() {
                        probs[[h, s, a, next]] = p;
                    }
                }
            }
        }
        DenseKernel {
            dims,
            initial_state: self.initial_state(),
            probs,
        }
    }
}

/// Tabular episodic MDP whose kernel is `T_h(s'|s,a) = <phi_h(s,a), mu_h(s')>`.
///
/// The kernel is never stored; every probability is recomputed from the
/// factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankMdp {
    pub dims: Dims,
    pub rank: usize,
    /// `(h, s, a, j)`
    pub phi: Array4<f64>,
    /// `(h, s', j)`
    pub mu: Array3<f64>,
    pub initial_state: usize,
    pub reward: RewardTable,
}

impl LowRankMdp {
    /// Builds an MDP after checking that all tables agree on their shapes.
    pub fn new(
        rank: usize,
        phi: Array4<f64>,
        mu: Array3<f64>,
        initial_state: usize,
        reward: RewardTable,
    ) -> Result<Self, MdpError> {
        let &[horizon, n_states, n_actions, d] = phi.shape() else {
            unreachable!()
        };
        let dims = Dims::new(n_states, n_actions, horizon);
        if d != rank {
            return Err(MdpError::DimensionMismatch {
                what: "phi rank",
                expected: vec![rank],
                found: vec![d],
            });
        }
        if mu.shape() != [horizon, n_states, rank] {
            return Err(MdpError::DimensionMismatch {
                what: "mu",
                expected: vec![horizon, n_states, rank],
                found: mu.shape().to_vec(),
            });
        }
        dims.check_table("reward", &reward)?;
        if initial_state >= n_states {
            return Err(MdpError::InvalidModel(format!(
                "initial state {initial_state} out of range for {n_states} states"
            )));
        }
        Ok(Self {
            dims,
            rank,
            phi,
            mu,
            initial_state,
            reward,
        })
    }

    pub fn phi_row(&self, h: usize, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.phi.slice(ndarray::s![h, s, a, ..])
    }

    pub fn mu_row(&self, h: usize, next: usize) -> ArrayView1<'_, f64> {
        self.mu.slice(ndarray::s![h, next, ..])
    }

    /// `<phi_h(s,a), mu_h(s')>` without clamping.
    pub fn raw_inner(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.phi_row(h, s, a).dot(&self.mu_row(h, next))
    }

    /// Features of step `h` as a `(s * n_actions + a, j)` matrix.
    pub fn phi_step(&self, h: usize) -> ArrayView2<'_, f64> {
        let d = self.dims;
        self.phi
            .slice(ndarray::s![h, .., .., ..])
            .into_shape_with_order((d.n_states * d.n_actions, self.rank))
            .expect("phi is in standard layout")
    }
}

impl Dynamics for LowRankMdp {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn initial_state(&self) -> usize {
        self.initial_state
    }

    fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        let p = self.raw_inner(h, s, a, next);
        if (-NEG_CLAMP..0.0).contains(&p) {
            0.0
        } else {
            p
        }
    }
}

/// A materialized kernel `(h, s, a, s')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseKernel {
    pub dims: Dims,
    pub initial_state: usize,
    pub probs: Array4<f64>,
}

impl DenseKernel {
    pub fn row(&self, h: usize, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.probs.slice(ndarray::s![h, s, a, ..])
    }

    pub fn row_slice(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let n = self.dims.n_states;
        let start = ((h * self.dims.n_states + s) * self.dims.n_actions + a) * n;
        &self.probs.as_slice().expect("standard layout")[start..start + n]
    }

    /// Draws `s' ~ T_h(.|s,a)`.
    pub fn sample_next<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(self.row_slice(h, s, a), rng)
    }
}

impl Dynamics for DenseKernel {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn initial_state(&self) -> usize {
        self.initial_state
    }

    fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.probs[[h, s, a, next]]
    }

    fn fill_next(&self, h: usize, s: usize, a: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row_slice(h, s, a));
    }

    fn to_kernel(&self) -> DenseKernel {
        self.clone()
    }
}

/// Inverse-CDF draw from a (possibly slightly unnormalized) weight vector.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Markov policy `pi_h(a|s)` stored as `(h, s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    probs: Array3<f64>,
}

impl Policy {
    pub const ROW_TOL: f64 = 1e-12;

    pub fn uniform(dims: Dims) -> Self {
        Self {
            probs: Array3::from_elem(dims.table_shape(), 1.0 / dims.n_actions as f64),
        }
    }

    /// Policy that plays `actions[[h, s]]` with probability one.
    pub fn deterministic(actions: &Array2<usize>, n_actions: usize) -> Self {
        let (horizon, n_states) = actions.dim();
        let mut probs = Array3::zeros((horizon, n_states, n_actions));
        for ((h, s), &a) in actions.indexed_iter() {
            probs[[h, s, a]] = 1.0;
        }
        Self { probs }
    }

    pub fn from_probs(probs: Array3<f64>) -> Result<Self, MdpError> {
        let (horizon, n_states, _) = probs.dim();
        for h in 0..horizon {
            for s in 0..n_states {
                let row = probs.slice(ndarray::s![h, s, ..]);
                if let Some(bad) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                    return Err(MdpError::InvalidPolicy {
                        h,
                        s,
                        reason: format!("entry {bad} is not a finite nonnegative number"),
                    });
                }
                let sum = row.sum();
                if (sum - 1.0).abs() > Self::ROW_TOL {
                    return Err(MdpError::InvalidPolicy {
                        h,
                        s,
                        reason: format!("row sums to {sum}"),
                    });
                }
            }
        }
        Ok(Self { probs })
    }

    /// Skips the row-sum check; callers guarantee normalization.
    pub(crate) fn from_probs_unchecked(probs: Array3<f64>) -> Self {
        Self { probs }
    }

    pub fn dims(&self) -> Dims {
        let (horizon, n_states, n_actions) = self.probs.dim();
        Dims::new(n_states, n_actions, horizon)
    }

    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs[[h, s, a]]
    }

    pub fn row(&self, h: usize, s: usize) -> ArrayView1<'_, f64> {
        self.probs.slice(ndarray::s![h, s, ..])
    }

    pub fn probs(&self) -> &Array3<f64> {
        &self.probs
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, h: usize, s: usize, rng: &mut R) -> usize {
        let row = self.row(h, s);
        sample_categorical(row.as_slice().expect("standard layout"), rng)
    }

    pub(crate) fn check_dims(&self, dims: Dims) -> Result<(), MdpError> {
        dims.check_table("policy", &self.probs)
    }
}

/// Uniform mixture over Markov policies: one component is drawn per episode
/// and followed for the whole episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePolicy {
    components: Vec<Policy>,
}

impl MixturePolicy {
    pub fn new(components: Vec<Policy>) -> Result<Self, MdpError> {
        if components.is_empty() {
            return Err(MdpError::InvalidModel("mixture policy needs at least one component".into()));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[Policy] {
        &self.components
    }

    /// Value at the initial state; the average of the component values.
    pub fn value<D: Dynamics + ?Sized>(&self, dynamics: &D, reward: &RewardTable) -> Result<f64, MdpError> {
        let s0 = dynamics.initial_state();
        let mut total = 0.0;
        for pi in &self.components {
            let (_, v) = exact_policy_eval(dynamics, pi, reward)?;
            total += v[[0, s0]];
        }
        Ok(total / self.components.len() as f64)
    }

    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> &Policy {
        &self.components[rng.random_range(0..self.components.len())]
    }
}

/// One simulated episode: visited states (length `horizon + 1`), actions and return.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub ret: f64,
}

/// Rolls out `pi` for a full episode from the initial state.
pub fn rollout<R: Rng + ?Sized>(
    kernel: &DenseKernel,
    pi: &Policy,
    reward: &RewardTable,
    rng: &mut R,
) -> Episode {
    let horizon = kernel.dims.horizon;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut s = kernel.initial_state;
    let mut ret = 0.0;
    states.push(s);
    for h in 0..horizon {
        let a = pi.sample_action(h, s, rng);
        ret += reward[[h, s, a]];
        s = kernel.sample_next(h, s, a, rng);
        actions.push(a);
        states.push(s);
    }
    Episode { states, actions, ret }
}
