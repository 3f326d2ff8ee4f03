use ndarray::{Array2, Array3};

use super::{Dims, Dynamics, MdpError, Policy, QTable, RewardTable, VTable};

/// Optimal action values, state values and the greedy policy that attains them.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub q: QTable,
    pub v: VTable,
    pub policy: Policy,
}

fn check_reward(dims: Dims, reward: &RewardTable) -> Result<(), MdpError> {
    dims.check_table("reward", reward)?;
    if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
        return Err(MdpError::InvalidModel(format!("reward entry {i} is not finite")));
    }
    Ok(())
}

/// Backward recursion `Q_h = r_h + T_h V_{h+1}`, `V_h = <pi_h, Q_h>`.
pub fn exact_policy_eval<D: Dynamics + ?Sized>(
    dynamics: &D,
    pi: &Policy,
    reward: &RewardTable,
) -> Result<(QTable, VTable), MdpError> {
    let dims = dynamics.dims();
    check_reward(dims, reward)?;
    pi.check_dims(dims)?;
    let Dims {
        n_states,
        n_actions,
        horizon,
    } = dims;

    let mut q = Array3::zeros((horizon, n_states, n_actions));
    let mut v = Array2::zeros((horizon + 1, n_states));
    let mut next = vec![0.0; n_states];
    for h in (0..horizon).rev() {
        for s in 0..n_states {
            let mut vs = 0.0;
            for a in 0..n_actions {
                dynamics.fill_next(h, s, a, &mut next);
                let cont: f64 = next.iter().zip(v.row(h + 1)).map(|(p, v)| p * v).sum();
                let qa = reward[[h, s, a]] + cont;
                q[[h, s, a]] = qa;
                vs += pi.prob(h, s, a) * qa;
            }
            v[[h, s]] = vs;
        }
    }
    Ok((q, v))
}

/// Backward value iteration with greedy argmax; ties go to the lowest action.
pub fn exact_optimal<D: Dynamics + ?Sized>(
    dynamics: &D,
    reward: &RewardTable,
) -> Result<OptimalSolution, MdpError> {
    let dims = dynamics.dims();
    check_reward(dims, reward)?;
    let Dims {
        n_states,
        n_actions,
        horizon,
    } = dims;

    let mut q = Array3::zeros((horizon, n_states, n_actions));
    let mut v = Array2::zeros((horizon + 1, n_states));
    let mut greedy = Array2::zeros((horizon, n_states));
    let mut next = vec![0.0; n_states];
    for h in (0..horizon).rev() {
        for s in 0..n_states {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..n_actions {
                dynamics.fill_next(h, s, a, &mut next);
                let cont: f64 = next.iter().zip(v.row(h + 1)).map(|(p, v)| p * v).sum();
                let qa = reward[[h, s, a]] + cont;
                q[[h, s, a]] = qa;
                if qa > best {
                    best = qa;
                    best_a = a;
                }
            }
            v[[h, s]] = best;
            greedy[[h, s]] = best_a;
        }
    }
    Ok(OptimalSolution {
        q,
        v,
        policy: Policy::deterministic(&greedy, n_actions),
    })
}

/// Per-step state-action occupancy `d_h(s, a)` of `pi` started at the initial state.
pub fn occupancy<D: Dynamics + ?Sized>(dynamics: &D, pi: &Policy) -> Result<Array3<f64>, MdpError> {
    let dims = dynamics.dims();
    pi.check_dims(dims)?;
    let Dims {
        n_states,
        n_actions,
        horizon,
    } = dims;

    let mut occ = Array3::zeros((horizon, n_states, n_actions));
    let mut state = vec![0.0; n_states];
    state[dynamics.initial_state()] = 1.0;
    let mut next = vec![0.0; n_states];
    for h in 0..horizon {
        let mut following = vec![0.0; n_states];
        for s in 0..n_states {
            if state[s] == 0.0 {
                continue;
            }
            for a in 0..n_actions {
                let mass = state[s] * pi.prob(h, s, a);
                occ[[h, s, a]] = mass;
                if mass == 0.0 {
                    continue;
                }
                dynamics.fill_next(h, s, a, &mut next);
                for (f, p) in following.iter_mut().zip(&next) {
                    *f += mass * p;
                }
            }
        }
        state = following;
    }
    Ok(occ)
}

/// State marginals `d_h(s)` of `pi`.
pub fn state_occupancy<D: Dynamics + ?Sized>(dynamics: &D, pi: &Policy) -> Result<Array2<f64>, MdpError> {
    let occ = occupancy(dynamics, pi)?;
    Ok(occ.sum_axis(ndarray::Axis(2)))
}

/// Smallest `C` with `d^pi_h(s) * u(a) <= C * rho(s, a)` for every step,
/// state-action pair and listed policy. `rho` is indexed `(s, a)`.
pub fn coverage_constant<D: Dynamics + ?Sized>(
    dynamics: &D,
    policies: &[Policy],
    rho: &Array2<f64>,
) -> Result<f64, MdpError> {
    let dims = dynamics.dims();
    if rho.dim() != (dims.n_states, dims.n_actions) {
        return Err(MdpError::DimensionMismatch {
            what: "rho",
            expected: vec![dims.n_states, dims.n_actions],
            found: rho.shape().to_vec(),
        });
    }
    if let Some(i) = rho.iter().position(|&p| p < 0.0) {
        return Err(MdpError::NegativeEntry {
            what: "rho",
            index: i,
            value: rho.iter().nth(i).copied().unwrap_or_default(),
        });
    }
    let uniform = 1.0 / dims.n_actions as f64;
    let mut c: f64 = 0.0;
    for pi in policies {
        let d = state_occupancy(dynamics, pi)?;
        for ((h, s), &mass) in d.indexed_iter() {
            if mass <= 0.0 {
                continue;
            }
            for a in 0..dims.n_actions {
                let r = rho[[s, a]];
                if r <= 0.0 {
                    return Err(MdpError::Uncoverable { h, s, a, mass });
                }
                c = c.max(mass * uniform / r);
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mdp::{DenseKernel, LowRankMdp};
    use ndarray::{Array3, Array4};

    /// Two-state chain: action 1 moves to (or stays in) state 1, action 0 goes to state 0.
    pub(crate) fn chain(horizon: usize) -> LowRankMdp {
        let (n_states, n_actions) = (2, 2);
        let mut phi = Array4::zeros((horizon, n_states, n_actions, n_states));
        let mut mu = Array3::zeros((horizon, n_states, n_states));
        for h in 0..horizon {
            for s in 0..n_states {
                for a in 0..n_actions {
                    phi[[h, s, a, a]] = 1.0;
                }
                mu[[h, s, s]] = 1.0;
            }
        }
        let mut reward = Array3::zeros((horizon, n_states, n_actions));
        reward[[horizon - 1, 1, 0]] = 1.0;
        reward[[horizon - 1, 1, 1]] = 1.0;
        LowRankMdp::new(n_states, phi, mu, 0, reward).unwrap()
    }

    #[test]
    fn one_step_value_is_reward() {
        let dims = Dims::new(1, 3, 1);
        let kernel = DenseKernel {
            dims,
            initial_state: 0,
            probs: Array4::from_elem((1, 1, 3, 1), 1.0),
        };
        let reward = Array3::ones((1, 1, 3));
        let (q, v) = exact_policy_eval(&kernel, &Policy::uniform(dims), &reward).unwrap();
        assert_eq!(v[[0, 0]], 1.0);
        assert!(q.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_reward_gives_zero_tables() {
        let mdp = chain(3);
        let zero = Array3::zeros(mdp.dims.table_shape());
        let (q, v) = exact_policy_eval(&mdp, &Policy::uniform(mdp.dims), &zero).unwrap();
        assert!(q.iter().all(|&x| x == 0.0));
        assert!(v.iter().all(|&x| x == 0.0));
        let opt = exact_optimal(&mdp, &zero).unwrap();
        assert!(opt.v.iter().all(|&x| x == 0.0));
        // all-zero Q, so ties resolve to action 0 everywhere
        assert!(opt.policy.probs().slice(ndarray::s![.., .., 0]).iter().all(|&p| p == 1.0));
    }

    #[test]
    fn chain_optimum_reaches_goal() {
        let mdp = chain(3);
        let opt = exact_optimal(&mdp, &mdp.reward).unwrap();
        assert_eq!(opt.v[[0, 0]], 1.0);
        // the state at the last step is only reached through action 1 at step 1
        assert_eq!(opt.policy.prob(1, 0, 1), 1.0);
    }

    #[test]
    fn deterministic_chain_occupancy_is_point_mass() {
        let mdp = chain(3);
        let actions = Array2::from_elem((3, 2), 1usize);
        let pi = Policy::deterministic(&actions, 2);
        let occ = occupancy(&mdp, &pi).unwrap();
        assert_eq!(occ[[0, 0, 1]], 1.0);
        assert_eq!(occ[[1, 1, 1]], 1.0);
        assert_eq!(occ[[2, 1, 1]], 1.0);
        assert_eq!(occ.sum(), 3.0);
    }

    #[test]
    fn first_step_occupancy_follows_policy_at_start() {
        let mdp = chain(2);
        let pi = Policy::uniform(mdp.dims);
        let occ = occupancy(&mdp, &pi).unwrap();
        assert_eq!(occ[[0, 0, 0]], 0.5);
        assert_eq!(occ[[0, 0, 1]], 0.5);
        assert_eq!(occ[[0, 1, 0]], 0.0);
    }

    #[test]
    fn coverage_of_uniform_and_point_mass() {
        // one step, every state equally likely at h=0 is impossible from a fixed
        // start, so use a kernel whose h=1 marginal is uniform
        let dims = Dims::new(4, 2, 2);
        let kernel = DenseKernel {
            dims,
            initial_state: 0,
            probs: Array4::from_elem((2, 4, 2, 4), 0.25),
        };
        let rho = Array2::from_elem((4, 2), 1.0 / 8.0);
        let pi = Policy::uniform(dims);
        // step 0 is a point mass at s=0: ratio 1 * 0.5 / (1/8) = 4 = |S|
        let c = coverage_constant(&kernel, std::slice::from_ref(&pi), &rho).unwrap();
        assert!((c - 4.0).abs() < 1e-12);

        // restricted to the uniform step the constant is 1
        let occ = state_occupancy(&kernel, &pi).unwrap();
        let ratio = occ.row(1).iter().map(|d| d * 0.5 / (1.0 / 8.0)).fold(0.0, f64::max);
        assert!((ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_rejects_zero_rho_on_support() {
        let mdp = chain(2);
        let mut rho = Array2::from_elem((2, 2), 0.25);
        rho[[0, 1]] = 0.0;
        let err = coverage_constant(&mdp, &[Policy::uniform(mdp.dims)], &rho).unwrap_err();
        assert!(matches!(err, MdpError::Uncoverable { s: 0, a: 1, .. }));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mdp = chain(2);
        let pi = Policy::uniform(Dims::new(3, 2, 2));
        assert!(matches!(
            exact_policy_eval(&mdp, &pi, &mdp.reward),
            Err(MdpError::DimensionMismatch { .. })
        ));
    }
}
