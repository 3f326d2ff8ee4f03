//! Seeded synthetic low-rank environments, finite model classes that contain
//! the generating environment, and misspecified variants.
//!
//! Construction: every `phi_h(s, a)` lies on the probability simplex of
//! dimension `rank` and every latent column `mu_h(., j)` is a probability
//! distribution over next states, so `T_h(.|s, a)` is a mixture of `rank`
//! latent next-state distributions. This satisfies both normalization
//! constraints (`|phi| <= 1`, `|sum_s' mu(s') g(s')| <= sqrt(d)`) automatically.

use ndarray::{Array3, Array4};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{hellinger_sq, DenseKernel, Dynamics, LowRankMdp, MdpError};
use crate::rng::{seeded, stream};

/// Dirichlet concentration for feature rows and latent next-state distributions.
pub const DIRICHLET_CONCENTRATION: f64 = 0.3;
/// Default perturbation scale for model-class decoys.
pub const DECOY_NOISE: f64 = 0.3;
/// Every decoy differs from the truth by at least this squared Hellinger
/// distance on some `(h, s, a)` row.
pub const DECOY_SEPARATION: f64 = 1e-3;
pub const MAX_ZETA: f64 = 0.1;
const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum EnvGenError {
    #[error("rank {rank} exceeds the number of states {n_states}")]
    RankTooLarge { rank: usize, n_states: usize },
    #[error("all dimensions must be positive")]
    EmptyDimension,
    #[error("model class size must be at least 1")]
    EmptyClass,
    #[error("zeta {0} outside [0, {MAX_ZETA}]")]
    ZetaOutOfRange(f64),
    #[error("could not meet the deviation budget zeta={zeta} after {attempts} attempts")]
    MisspecificationFailed { zeta: f64, attempts: usize },
    #[error("could not separate decoy {index} from the truth after {attempts} attempts")]
    DecoySeparation { index: usize, attempts: usize },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn dirichlet<R: Rng + ?Sized>(len: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - tau).max(0.0)).collect();
    // clean up rounding so the row is a distribution to machine precision
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

/// Random low-rank MDP with sparse reward: reward 1 for any action taken in a
/// seeded goal set at the final step, zero elsewhere. Start state is 0.
pub fn gen_lowrank(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    rank: usize,
) -> Result<LowRankMdp, EnvGenError> {
    if n_states == 0 || n_actions == 0 || horizon == 0 || rank == 0 {
        return Err(EnvGenError::EmptyDimension);
    }
    if rank > n_states {
        return Err(EnvGenError::RankTooLarge { rank, n_states });
    }
    let mut rng = seeded(seed, stream::ENV_FEATURES);
    let mut phi = Array4::zeros((horizon, n_states, n_actions, rank));
    for h in 0..horizon {
        for s in 0..n_states {
            for a in 0..n_actions {
                for (j, x) in dirichlet(rank, DIRICHLET_CONCENTRATION, &mut rng).into_iter().enumerate() {
                    phi[[h, s, a, j]] = x;
                }
            }
        }
    }
    let mut mu = Array3::zeros((horizon, n_states, rank));
    for h in 0..horizon {
        for j in 0..rank {
            for (next, x) in dirichlet(n_states, DIRICHLET_CONCENTRATION, &mut rng).into_iter().enumerate() {
                mu[[h, next, j]] = x;
            }
        }
    }

    let mut rng = seeded(seed, stream::ENV_REWARD);
    let n_goals = (n_states / 10).max(1);
    let mut reward = Array3::zeros((horizon, n_states, n_actions));
    for g in sample_indices(&mut rng, n_states, n_goals) {
        for a in 0..n_actions {
            reward[[horizon - 1, g, a]] = 1.0;
        }
    }
    Ok(LowRankMdp::new(rank, phi, mu, 0, reward)?)
}

/// Finite model class `Theta` sharing the dimensions of the generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClass {
    pub models: Vec<LowRankMdp>,
    pub truth_index: Option<usize>,
}

impl ModelClass {
    pub fn new(models: Vec<LowRankMdp>, truth_index: Option<usize>) -> Result<Self, EnvGenError> {
        let Some(first) = models.first() else {
            return Err(EnvGenError::EmptyClass);
        };
        for m in &models {
            if m.dims != first.dims || m.rank != first.rank {
                return Err(MdpError::DimensionMismatch {
                    what: "model class member",
                    expected: vec![first.dims.n_states, first.dims.n_actions, first.dims.horizon, first.rank],
                    found: vec![m.dims.n_states, m.dims.n_actions, m.dims.horizon, m.rank],
                }
                .into());
            }
        }
        if let Some(t) = truth_index {
            if t >= models.len() {
                return Err(EnvGenError::Mdp(MdpError::InvalidModel(format!(
                    "truth index {t} out of range for {} models",
                    models.len()
                ))));
            }
        }
        Ok(Self { models, truth_index })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn kernels(&self) -> Vec<DenseKernel> {
        self.models.iter().map(|m| m.to_kernel()).collect()
    }
}

/// Largest squared Hellinger distance between corresponding kernel rows.
pub fn max_row_hellinger<A: Dynamics + ?Sized, B: Dynamics + ?Sized>(a: &A, b: &B) -> f64 {
    let dims = a.dims();
    let mut pa = vec![0.0; dims.n_states];
    let mut pb = vec![0.0; dims.n_states];
    let mut worst: f64 = 0.0;
    for h in 0..dims.horizon {
        for s in 0..dims.n_states {
            for act in 0..dims.n_actions {
                a.fill_next(h, s, act, &mut pa);
                b.fill_next(h, s, act, &mut pb);
                worst = worst.max(hellinger_sq(&pa, &pb).unwrap_or(f64::INFINITY));
            }
        }
    }
    worst
}

fn perturb_decoy<R: Rng + ?Sized>(env: &LowRankMdp, noise: f64, rng: &mut R) -> LowRankMdp {
    let mut decoy = env.clone();
    let dims = env.dims;
    let d = env.rank;
    let phi_sigma = noise / (d as f64).sqrt();
    for h in 0..dims.horizon {
        for s in 0..dims.n_states {
            for a in 0..dims.n_actions {
                let noisy: Vec<f64> = env
                    .phi_row(h, s, a)
                    .iter()
                    .map(|x| x + phi_sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                for (j, x) in project_to_simplex(&noisy).into_iter().enumerate() {
                    decoy.phi[[h, s, a, j]] = x;
                }
            }
        }
        // latent next-state distributions: log-normal reweighting keeps the support
        for j in 0..d {
            let weights: Vec<f64> = (0..dims.n_states)
                .map(|next| env.mu[[h, next, j]] * (noise * rng.sample::<f64, _>(StandardNormal)).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            for (next, w) in weights.into_iter().enumerate() {
                decoy.mu[[h, next, j]] = w / total;
            }
        }
    }
    decoy
}

/// Model class of `size` members: the generating environment at a seeded
/// position plus `size - 1` perturbed decoys.
pub fn gen_model_class(env: &LowRankMdp, size: usize, seed: u64) -> Result<ModelClass, EnvGenError> {
    gen_model_class_with_noise(env, size, seed, DECOY_NOISE)
}

pub fn gen_model_class_with_noise(
    env: &LowRankMdp,
    size: usize,
    seed: u64,
    noise: f64,
) -> Result<ModelClass, EnvGenError> {
    if size == 0 {
        return Err(EnvGenError::EmptyClass);
    }
    let mut rng = seeded(seed, stream::MODEL_CLASS);
    let truth_index = rng.random_range(0..size);
    let mut models = Vec::with_capacity(size);
    for index in 0..size {
        if index == truth_index {
            models.push(env.clone());
            continue;
        }
        let mut scale = noise;
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let decoy = perturb_decoy(env, scale, &mut rng);
            if max_row_hellinger(&decoy, env) >= DECOY_SEPARATION {
                accepted = Some(decoy);
                break;
            }
            scale *= 1.5;
        }
        models.push(accepted.ok_or(EnvGenError::DecoySeparation {
            index,
            attempts: MAX_ATTEMPTS,
        })?);
    }
    ModelClass::new(models, Some(truth_index))
}

/// Environment whose true kernel deviates from its best low-rank
/// approximation by at most `zeta` in every entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecifiedEnv {
    pub base: LowRankMdp,
    pub true_kernel: DenseKernel,
    /// Measured `max |T - <phi, mu>|`, not the requested budget.
    pub zeta: f64,
}

/// Mixes each row of the base kernel toward a random distribution with the
/// largest weight that keeps every entry within `zeta` of the base.
pub fn gen_misspecified(env: &LowRankMdp, zeta: f64, seed: u64) -> Result<MisspecifiedEnv, EnvGenError> {
    if !(0.0..=MAX_ZETA).contains(&zeta) {
        return Err(EnvGenError::ZetaOutOfRange(zeta));
    }
    let base_kernel = env.to_kernel();
    let dims = env.dims;
    let mut rng = seeded(seed, stream::MISSPEC);
    // just under the budget so round-off in the mixing cannot overshoot it
    let mut shrink = 1.0 - 1e-9;
    for _ in 0..MAX_ATTEMPTS {
        let mut kernel = base_kernel.clone();
        for h in 0..dims.horizon {
            for s in 0..dims.n_states {
                for a in 0..dims.n_actions {
                    let target = dirichlet(dims.n_states, 1.0, &mut rng);
                    if zeta == 0.0 {
                        continue;
                    }
                    let base = base_kernel.row_slice(h, s, a);
                    let spread = base
                        .iter()
                        .zip(&target)
                        .map(|(b, t)| (b - t).abs())
                        .fold(0.0, f64::max);
                    if spread == 0.0 {
                        continue;
                    }
                    let t = (shrink * zeta / spread).min(1.0);
                    let mut row: Vec<f64> = base.iter().zip(&target).map(|(b, q)| (1.0 - t) * b + t * q).collect();
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > 1e-12 {
                        row.iter_mut().for_each(|x| *x /= total);
                    }
                    for (next, p) in row.into_iter().enumerate() {
                        kernel.probs[[h, s, a, next]] = p;
                    }
                }
            }
        }
        let measured = kernel
            .probs
            .iter()
            .zip(base_kernel.probs.iter())
            .map(|(t, b)| (t - b).abs())
            .fold(0.0, f64::max);
        if measured <= zeta {
            return Ok(MisspecifiedEnv {
                base: env.clone(),
                true_kernel: kernel,
                zeta: measured,
            });
        }
        shrink *= 0.5;
    }
    Err(EnvGenError::MisspecificationFailed {
        zeta,
        attempts: MAX_ATTEMPTS,
    })
}
