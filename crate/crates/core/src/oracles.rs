//! Supervised-learning oracle and the policy-evaluation, planning and
//! constrained-planning reductions built on it.
//!
//! Every reduction reports its regressions to an [`OracleLedger`], so the
//! number of least-squares solves each oracle needs can be read off after a
//! run.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envgen::ModelClass;
use crate::mdp::{
    exact_policy_eval, sample_categorical, DenseKernel, Dims, Dynamics, LowRankMdp, MdpError, Policy, QTable,
    RewardTable,
};
use crate::rng::{seeded, stream};

/// Default ridge added to the normal equations of the reductions.
pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("degenerate design: normal equations are singular; pass ridge > 0")]
    DegenerateDesign,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("feature length {found} does not match dataset dimension {expected}")]
    FeatureLength { expected: usize, found: usize },
    #[error("n_samples must be positive")]
    ZeroSamples,
    #[error("invalid sampling distribution: {0}")]
    InvalidRho(String),
    #[error("infeasible confidence set: no model has log-likelihood >= {threshold}")]
    InfeasibleConfidenceSet { threshold: f64 },
    #[error("class inconsistent with data: every model assigns zero probability to an observation")]
    ClassInconsistent,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OracleKind {
    /// One least-squares (or log-loss) fit.
    Sl,
    Pe,
    PeExact,
    Pp,
    Cp,
    Mle,
}

impl OracleKind {
    pub const ALL: [OracleKind; 6] = [Self::Sl, Self::Pe, Self::PeExact, Self::Pp, Self::Cp, Self::Mle];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sl => "sl",
            Self::Pe => "pe",
            Self::PeExact => "pe_exact",
            Self::Pp => "pp",
            Self::Cp => "cp",
            Self::Mle => "mle",
        }
    }
}

/// Thread-safe call counters plus the most stringent accuracy requested.
#[derive(Debug)]
pub struct OracleLedger {
    counts: [AtomicU64; 6],
    min_accuracy_bits: AtomicU64,
}

impl Default for OracleLedger {
    fn default() -> Self {
        Self {
            counts: Default::default(),
            min_accuracy_bits: AtomicU64::new(f64::INFINITY.to_bits()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub sl: u64,
    pub pe: u64,
    pub pe_exact: u64,
    pub pp: u64,
    pub cp: u64,
    pub mle: u64,
    pub min_accuracy: Option<f64>,
}

impl OracleLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, kind: OracleKind, calls: u64) {
        self.counts[kind.slot()].fetch_add(calls, Ordering::Relaxed);
    }

    /// Registers an accuracy requirement; the ledger keeps the minimum.
    pub fn request_accuracy(&self, eps: f64) {
        // positive floats order the same as their bit patterns
        if eps >= 0.0 {
            self.min_accuracy_bits.fetch_min(eps.to_bits(), Ordering::Relaxed);
        }
    }

    pub fn count(&self, kind: OracleKind) -> u64 {
        self.counts[kind.slot()].load(Ordering::Relaxed)
    }

    pub fn min_accuracy(&self) -> Option<f64> {
        let v = f64::from_bits(self.min_accuracy_bits.load(Ordering::Relaxed));
        v.is_finite().then_some(v)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            sl: self.count(OracleKind::Sl),
            pe: self.count(OracleKind::Pe),
            pe_exact: self.count(OracleKind::PeExact),
            pp: self.count(OracleKind::Pp),
            cp: self.count(OracleKind::Cp),
            mle: self.count(OracleKind::Mle),
            min_accuracy: self.min_accuracy(),
        }
    }
}

/// Weighted regression rows `(x, y, weight)` in a fixed input dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlDataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl SlDataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<(), OracleError> {
        self.push_weighted(x, y, 1.0)
    }

    pub fn push_weighted(&mut self, x: &[f64], y: f64, weight: f64) -> Result<(), OracleError> {
        if x.len() != self.dim {
            return Err(OracleError::FeatureLength {
                expected: self.dim,
                found: x.len(),
            });
        }
        if !y.is_finite() || !weight.is_finite() || weight < 0.0 || x.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite("regression row"));
        }
        self.x.extend_from_slice(x);
        self.y.push(y);
        self.w.push(weight);
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64, f64)> + '_ {
        self.x
            .chunks_exact(self.dim.max(1))
            .zip(&self.y)
            .zip(&self.w)
            .map(|((x, &y), &w)| (x, y, w))
    }

    /// `sum_i w_i (x_i . theta - y_i)^2 + ridge |theta|^2`.
    pub fn loss(&self, theta: &[f64], ridge: f64) -> f64 {
        let fit: f64 = self
            .rows()
            .map(|(x, y, w)| {
                let r = dot(x, theta) - y;
                w * r * r
            })
            .sum();
        fit + ridge * dot(theta, theta)
    }

    /// Gradient of [`SlDataset::loss`].
    pub fn loss_gradient(&self, theta: &[f64], ridge: f64) -> Vec<f64> {
        let mut g: Vec<f64> = theta.iter().map(|t| 2.0 * ridge * t).collect();
        for (x, y, w) in self.rows() {
            let r = dot(x, theta) - y;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += 2.0 * w * r * xi;
            }
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact minimizer of the ridge-regularized weighted squared loss, via a
/// Cholesky factorization of the normal equations. Counts one SL call.
pub fn sl_regress(data: &SlDataset, ridge: f64, ledger: &OracleLedger) -> Result<DVector<f64>, OracleError> {
    if data.is_empty() {
        return Err(OracleError::EmptyDataset);
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(OracleError::NonFinite("ridge"));
    }
    ledger.record(OracleKind::Sl, 1);
    let d = data.dim();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut nz = Vec::with_capacity(d);
    for (x, y, w) in data.rows() {
        nz.clear();
        nz.extend(x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)));
        for &(i, xi) in &nz {
            rhs[i] += w * y * xi;
            for &(j, xj) in &nz {
                gram[(i, j)] += w * xi * xj;
            }
        }
    }
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let chol = gram.cholesky().ok_or(OracleError::DegenerateDesign)?;
    let theta = chol.solve(&rhs);
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::DegenerateDesign);
    }
    Ok(theta)
}

/// How a reduction turns its population objective into regression rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sampling {
    /// `n_samples` i.i.d. draws per stage from `rho` and the model.
    MonteCarlo { n_samples: usize, seed: u64 },
    /// Every `(s, a, s', ...)` tuple weighted by its exact probability, the
    /// infinite-sample limit of `MonteCarlo`.
    Enumerated,
}

/// Uniform distribution over state-action pairs, `(s, a)`.
pub fn uniform_rho(dims: Dims) -> Array2<f64> {
    Array2::from_elem((dims.n_states, dims.n_actions), 1.0 / (dims.n_states * dims.n_actions) as f64)
}

fn check_rho(dims: Dims, rho: &Array2<f64>) -> Result<(), OracleError> {
    if rho.dim() != (dims.n_states, dims.n_actions) {
        return Err(OracleError::InvalidRho(format!(
            "shape {:?}, expected ({}, {})",
            rho.shape(),
            dims.n_states,
            dims.n_actions
        )));
    }
    if rho.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(OracleError::InvalidRho("entries must be strictly positive".into()));
    }
    let total = rho.sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(OracleError::InvalidRho(format!("sums to {total}")));
    }
    Ok(())
}

fn check_sampling(sampling: Sampling) -> Result<(), OracleError> {
    match sampling {
        Sampling::MonteCarlo { n_samples: 0, .. } => Err(OracleError::ZeroSamples),
        _ => Ok(()),
    }
}

/// `max_h E_{(s,a)~rho} |a_h(s,a) - b_h(s,a)|`.
pub fn rho_error(a: &QTable, b: &QTable, rho: &Array2<f64>) -> f64 {
    let (horizon, n_states, n_actions) = a.dim();
    (0..horizon)
        .map(|h| {
            let mut err = 0.0;
            for s in 0..n_states {
                for act in 0..n_actions {
                    err += rho[[s, act]] * (a[[h, s, act]] - b[[h, s, act]]).abs();
                }
            }
            err
        })
        .fold(0.0, f64::max)
}

/// Draws `(s, a) ~ rho` from a flattened `(s, a)` table.
fn sample_pair<R: Rng + ?Sized>(rho_flat: &[f64], n_actions: usize, rng: &mut R) -> (usize, usize) {
    let i = sample_categorical(rho_flat, rng);
    (i / n_actions, i % n_actions)
}

/// Stacked design for policy evaluation.
///
/// Unknowns are `w_0, .., w_{H-2}` (with `w_{H-1} = 0`). A row for stage `h`
/// carries `+phi_h(s,a)` in block `h`, `-phi_{h+1}(s',a')` in block `h + 1`
/// and target `r_{h+1}(s',a')`, so the loss is a single convex quadratic over
/// all Bellman residuals. Transitions are simulated inside `theta`.
pub fn pe_design(
    theta: &LowRankMdp,
    pi: &Policy,
    reward: &RewardTable,
    rho: &Array2<f64>,
    sampling: Sampling,
) -> Result<SlDataset, OracleError> {
    let dims = theta.dims;
    check_rho(dims, rho)?;
    check_sampling(sampling)?;
    dims.check_table("reward", reward)?;
    if pi.dims() != dims {
        return Err(MdpError::DimensionMismatch {
            what: "policy",
            expected: dims.table_shape().to_vec(),
            found: pi.dims().table_shape().to_vec(),
        }
        .into());
    }
    let d = theta.rank;
    let horizon = dims.horizon;
    let n_free = horizon.saturating_sub(1);
    let mut data = SlDataset::new(n_free * d);
    if n_free == 0 {
        return Ok(data);
    }
    let kernel = theta.to_kernel();
    let mut x = vec![0.0; n_free * d];
    let mut push_row = |data: &mut SlDataset, h: usize, s: usize, a: usize, next: usize, a2: usize, weight: f64| {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (j, v) in theta.phi_row(h, s, a).iter().enumerate() {
            x[h * d + j] = *v;
        }
        if h + 1 < n_free {
            for (j, v) in theta.phi_row(h + 1, next, a2).iter().enumerate() {
                x[(h + 1) * d + j] = -*v;
            }
        }
        data.push_weighted(&x, reward[[h + 1, next, a2]], weight)
    };
    match sampling {
        Sampling::MonteCarlo { n_samples, seed } => {
            let mut rng = seeded(seed, stream::ORACLE);
            let rho_flat = rho.as_slice().expect("standard layout");
            for h in 0..n_free {
                for _ in 0..n_samples {
                    let (s, a) = sample_pair(rho_flat, dims.n_actions, &mut rng);
                    let next = kernel.sample_next(h, s, a, &mut rng);
                    let a2 = pi.sample_action(h + 1, next, &mut rng);
                    push_row(&mut data, h, s, a, next, a2, 1.0)?;
                }
            }
        }
        Sampling::Enumerated => {
            for h in 0..n_free {
                for s in 0..dims.n_states {
                    for a in 0..dims.n_actions {
                        for next in 0..dims.n_states {
                            let pt = rho[[s, a]] * kernel.probs[[h, s, a, next]];
                            if pt <= 0.0 {
                                continue;
                            }
                            for a2 in 0..dims.n_actions {
                                let w = pt * pi.prob(h + 1, next, a2);
                                if w > 0.0 {
                                    push_row(&mut data, h, s, a, next, a2, w)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(data)
}

/// `Q_h(s, a) = r_h(s, a) + phi_h(s, a) . w_h` for stacked weights `w`
/// (blocks beyond the end are zero).
pub fn q_from_stacked(theta: &LowRankMdp, reward: &RewardTable, w: &[f64]) -> QTable {
    let dims = theta.dims;
    let d = theta.rank;
    let mut q = reward.clone();
    for h in 0..dims.horizon {
        let Some(block) = w.get(h * d..(h + 1) * d) else {
            continue;
        };
        for s in 0..dims.n_states {
            for a in 0..dims.n_actions {
                q[[h, s, a]] += theta.phi_row(h, s, a).iter().zip(block).map(|(p, w)| p * w).sum::<f64>();
            }
        }
    }
    q
}

/// Policy evaluation inside `theta` by one global regression. One SL call.
pub fn pe_regression(
    theta: &LowRankMdp,
    pi: &Policy,
    reward: &RewardTable,
    rho: &Array2<f64>,
    sampling: Sampling,
    ridge: f64,
    ledger: &OracleLedger,
) -> Result<QTable, OracleError> {
    let data = pe_design(theta, pi, reward, rho, sampling)?;
    ledger.record(OracleKind::Pe, 1);
    if data.dim() == 0 {
        // single-step horizon: the continuation is identically zero
        ledger.record(OracleKind::Sl, 1);
        return Ok(reward.clone());
    }
    let w = sl_regress(&data, ridge, ledger)?;
    Ok(q_from_stacked(theta, reward, w.as_slice()))
}

/// Zero-error policy evaluation by exact dynamic programming.
pub fn pe_exact<D: Dynamics + ?Sized>(
    theta: &D,
    pi: &Policy,
    reward: &RewardTable,
    ledger: &OracleLedger,
) -> Result<QTable, OracleError> {
    ledger.record(OracleKind::PeExact, 1);
    Ok(exact_policy_eval(theta, pi, reward)?.0)
}

/// Fitted Q-iteration inside `theta`: for `h = H-1, .., 0` regress
/// `phi_h(s, a)` onto `max_a' (r_{h+1} + phi_{h+1} . w_{h+1})(s')` with
/// `s' ~ T_h(.|s, a)`. `H` SL calls.
pub fn pp_fqi(
    theta: &LowRankMdp,
    reward: &RewardTable,
    rho: &Array2<f64>,
    sampling: Sampling,
    ridge: f64,
    ledger: &OracleLedger,
) -> Result<QTable, OracleError> {
    let dims = theta.dims;
    check_rho(dims, rho)?;
    check_sampling(sampling)?;
    dims.check_table("reward", reward)?;
    ledger.record(OracleKind::Pp, 1);
    let d = theta.rank;
    let kernel = theta.to_kernel();
    let mut q = reward.clone();
    // max_a' Q_{h+1}(s', a'); zero past the horizon
    let mut v_next = vec![0.0; dims.n_states];
    let mut rng = match sampling {
        Sampling::MonteCarlo { seed, .. } => Some(seeded(seed, stream::ORACLE)),
        Sampling::Enumerated => None,
    };
    let rho_flat = rho.as_slice().expect("standard layout");
    for h in (0..dims.horizon).rev() {
        let mut data = SlDataset::new(d);
        match (sampling, rng.as_mut()) {
            (Sampling::MonteCarlo { n_samples, .. }, Some(rng)) => {
                for _ in 0..n_samples {
                    let (s, a) = sample_pair(rho_flat, dims.n_actions, rng);
                    let next = kernel.sample_next(h, s, a, rng);
                    data.push(theta.phi_row(h, s, a).as_slice().expect("contiguous"), v_next[next])?;
                }
            }
            _ => {
                for s in 0..dims.n_states {
                    for a in 0..dims.n_actions {
                        let phi = theta.phi_row(h, s, a);
                        let phi = phi.as_slice().expect("contiguous");
                        for (next, &p) in kernel.row_slice(h, s, a).iter().enumerate() {
                            if p > 0.0 {
                                data.push_weighted(phi, v_next[next], rho[[s, a]] * p)?;
                            }
                        }
                    }
                }
            }
        }
        let w = sl_regress(&data, ridge, ledger)?;
        for s in 0..dims.n_states {
            for a in 0..dims.n_actions {
                q[[h, s, a]] += theta.phi_row(h, s, a).iter().zip(w.iter()).map(|(p, w)| p * w).sum::<f64>();
            }
        }
        for (s, v) in v_next.iter_mut().enumerate() {
            *v = (0..dims.n_actions).map(|a| q[[h, s, a]]).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpOutcome {
    pub index: usize,
    pub q: QTable,
    pub survivors: Vec<usize>,
    /// Estimated optimal initial-state value per survivor.
    pub values: Vec<f64>,
}

/// Constrained planning by enumeration: keep models whose log-likelihood is at
/// least `threshold`, plan in each with [`pp_fqi`], return the most optimistic.
#[allow(clippy::too_many_arguments)]
pub fn cp_enumerate(
    class: &ModelClass,
    log_liks: &[f64],
    threshold: f64,
    reward: &RewardTable,
    rho: &Array2<f64>,
    sampling: Sampling,
    ridge: f64,
    ledger: &OracleLedger,
) -> Result<CpOutcome, OracleError> {
    if log_liks.len() != class.len() {
        return Err(MdpError::DimensionMismatch {
            what: "log-likelihoods",
            expected: vec![class.len()],
            found: vec![log_liks.len()],
        }
        .into());
    }
    let survivors: Vec<usize> = (0..class.len()).filter(|&i| log_liks[i] >= threshold).collect();
    if survivors.is_empty() {
        return Err(OracleError::InfeasibleConfidenceSet { threshold });
    }
    ledger.record(OracleKind::Cp, 1);
    let mut best: Option<(usize, QTable, f64)> = None;
    let mut values = Vec::with_capacity(survivors.len());
    for &i in &survivors {
        let model = &class.models[i];
        let q = pp_fqi(model, reward, rho, sampling, ridge, ledger)?;
        let s0 = model.initial_state;
        let v = (0..model.dims.n_actions).map(|a| q[[0, s0, a]]).fold(f64::NEG_INFINITY, f64::max);
        values.push(v);
        if best.as_ref().is_none_or(|b| v > b.2) {
            best = Some((i, q, v));
        }
    }
    let (index, q, _) = best.expect("at least one survivor");
    Ok(CpOutcome {
        index,
        q,
        survivors,
        values,
    })
}

/// Observed transitions `(s, a, s')`, grouped by step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionData {
    pub steps: Vec<Vec<(usize, usize, usize)>>,
}

impl TransitionData {
    pub fn new(horizon: usize) -> Self {
        Self {
            steps: vec![Vec::new(); horizon],
        }
    }

    pub fn push(&mut self, h: usize, s: usize, a: usize, next: usize) {
        self.steps[h].push((s, a, next));
    }

    pub fn len(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples `n_per_step` transitions per step with `(s, a) ~ rho` from `kernel`.
    pub fn sample<R: Rng + ?Sized>(kernel: &DenseKernel, rho: &Array2<f64>, n_per_step: usize, rng: &mut R) -> Self {
        let dims = kernel.dims;
        let rho_flat = rho.as_slice().expect("standard layout");
        let mut data = Self::new(dims.horizon);
        for h in 0..dims.horizon {
            for _ in 0..n_per_step {
                let (s, a) = sample_pair(rho_flat, dims.n_actions, rng);
                data.push(h, s, a, kernel.sample_next(h, s, a, rng));
            }
        }
        data
    }
}

/// Running log-likelihood of every model in a class; observations are added
/// one at a time as they arrive.
#[derive(Debug, Clone)]
pub struct LogLikTracker {
    kernels: Vec<DenseKernel>,
    totals: Vec<f64>,
}

impl LogLikTracker {
    pub fn new(class: &ModelClass) -> Self {
        Self::from_kernels(class.kernels())
    }

    pub fn from_kernels(kernels: Vec<DenseKernel>) -> Self {
        let totals = vec![0.0; kernels.len()];
        Self { kernels, totals }
    }

    pub fn kernels(&self) -> &[DenseKernel] {
        &self.kernels
    }

    pub fn observe(&mut self, h: usize, s: usize, a: usize, next: usize) {
        for (total, k) in self.totals.iter_mut().zip(&self.kernels) {
            *total += k.probs[[h, s, a, next]].ln();
        }
    }

    pub fn observe_all(&mut self, data: &TransitionData) {
        for (h, step) in data.steps.iter().enumerate() {
            for &(s, a, next) in step {
                self.observe(h, s, a, next);
            }
        }
    }

    pub fn log_liks(&self) -> &[f64] {
        &self.totals
    }

    /// Exact maximum-likelihood index, ties to the lowest index. One SL call.
    pub fn select(&self, ledger: &OracleLedger) -> Result<MleOutcome, OracleError> {
        ledger.record(OracleKind::Mle, 1);
        ledger.record(OracleKind::Sl, 1);
        argmax_loglik(&self.totals).map(|index| MleOutcome {
            index,
            log_liks: self.totals.clone(),
        })
    }
}

fn argmax_loglik(values: &[f64]) -> Result<usize, OracleError> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY || v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best.ok_or(OracleError::ClassInconsistent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOutcome {
    pub index: usize,
    pub log_liks: Vec<f64>,
}

impl MleOutcome {
    /// Models whose log-likelihood is within `beta` of the maximum.
    pub fn confidence_set(&self, beta: f64) -> Vec<usize> {
        let best = self.log_liks[self.index];
        (0..self.log_liks.len()).filter(|&i| self.log_liks[i] >= best - beta).collect()
    }
}

/// `sum_h sum_n log T_{theta,h}(s'|s,a)` for every model.
pub fn log_likelihoods(class: &ModelClass, data: &TransitionData) -> Vec<f64> {
    class
        .models
        .iter()
        .map(|m| {
            data.steps
                .iter()
                .enumerate()
                .flat_map(|(h, step)| step.iter().map(move |&(s, a, next)| m.prob(h, s, a, next).ln()))
                .sum()
        })
        .collect()
}

/// Exhaustive maximum likelihood over a finite class.
pub fn mle_select(class: &ModelClass, data: &TransitionData, ledger: &OracleLedger) -> Result<MleOutcome, OracleError> {
    if class.is_empty() {
        return Err(OracleError::ClassInconsistent);
    }
    ledger.record(OracleKind::Mle, 1);
    ledger.record(OracleKind::Sl, 1);
    let log_liks = log_likelihoods(class, data);
    argmax_loglik(&log_liks).map(|index| MleOutcome { index, log_liks })
}
