use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{LowRankMdp, NEG_CLAMP};

pub const ROW_SUM_TOL: f64 = 1e-9;
pub const NORM_TOL: f64 = 1e-9;
/// Number of random binary test functions used for the `mu` normalization probe.
pub const MU_PROBES: usize = 1000;
const MU_PROBE_SEED: u64 = 0x006d_7570_726f_6265;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    RowSum { h: usize, s: usize, a: usize, sum: f64 },
    NegativeProbability { h: usize, s: usize, a: usize, next: usize, value: f64 },
    PhiNorm { h: usize, s: usize, a: usize, norm: f64 },
    /// `probe` is `None` for the all-ones test function.
    MuNorm { h: usize, probe: Option<usize>, norm: f64 },
    RewardRange { h: usize, s: usize, a: usize, value: f64 },
    NonFinite { table: &'static str, index: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant of a low-rank MDP and lists each violation.
pub fn validate(mdp: &LowRankMdp) -> ValidationReport {
    let mut violations = Vec::new();
    let dims = mdp.dims;
    let d = mdp.rank;

    for (table, values) in [
        ("phi", mdp.phi.as_slice()),
        ("mu", mdp.mu.as_slice()),
        ("reward", mdp.reward.as_slice()),
    ] {
        let values = values.expect("standard layout");
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            violations.push(Violation::NonFinite { table, index });
        }
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }

    for h in 0..dims.horizon {
        for s in 0..dims.n_states {
            for a in 0..dims.n_actions {
                let phi = mdp.phi_row(h, s, a);
                let norm = phi.dot(&phi).sqrt();
                if norm > 1.0 + NORM_TOL {
                    violations.push(Violation::PhiNorm { h, s, a, norm });
                }
                let mut sum = 0.0;
                for next in 0..dims.n_states {
                    let p = mdp.raw_inner(h, s, a, next);
                    if p < -NEG_CLAMP {
                        violations.push(Violation::NegativeProbability { h, s, a, next, value: p });
                    }
                    sum += p.max(0.0);
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    violations.push(Violation::RowSum { h, s, a, sum });
                }
                let r = mdp.reward[[h, s, a]];
                if !(0.0..=1.0).contains(&r) {
                    violations.push(Violation::RewardRange { h, s, a, value: r });
                }
            }
        }

        // || sum_s' mu(s') g(s') || <= sqrt(d) for test functions g in [0,1]^S
        let bound = (d as f64).sqrt() + NORM_TOL;
        let mut rng = ChaCha8Rng::seed_from_u64(MU_PROBE_SEED ^ h as u64);
        let mut g = vec![1.0; dims.n_states];
        for probe in std::iter::once(None).chain((0..MU_PROBES).map(Some)) {
            if probe.is_some() {
                for x in g.iter_mut() {
                    *x = if rng.random::<bool>() { 1.0 } else { 0.0 };
                }
            }
            let mut acc = vec![0.0; d];
            for (next, &gx) in g.iter().enumerate() {
                if gx != 0.0 {
                    for (j, m) in mdp.mu_row(h, next).iter().enumerate() {
                        acc[j] += m * gx;
                    }
                }
            }
            let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > bound {
                violations.push(Violation::MuNorm { h, probe, norm });
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::dp::tests::chain;

    #[test]
    fn identity_chain_is_valid() {
        assert!(validate(&chain(2)).is_valid());
    }

    #[test]
    fn scaled_phi_row_is_flagged() {
        let mut mdp = chain(2);
        mdp.phi[[1, 0, 1, 1]] = 1.5;
        let report = validate(&mdp);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PhiNorm { h: 1, s: 0, a: 1, norm } if (*norm - 1.5).abs() < 1e-12)));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::RowSum { h: 1, s: 0, a: 1, .. })));
    }

    #[test]
    fn reward_out_of_range_is_flagged() {
        let mut mdp = chain(2);
        mdp.reward[[0, 0, 0]] = -0.5;
        assert_eq!(
            validate(&mdp).violations,
            vec![Violation::RewardRange { h: 0, s: 0, a: 0, value: -0.5 }]
        );
    }

    #[test]
    fn tiny_negative_inner_product_is_clamped() {
        let mut mdp = chain(1);
        // mu row for state 1 picks up a -1e-13 entry on latent 0
        mdp.mu[[0, 1, 0]] = -1e-13;
        let report = validate(&mdp);
        assert!(report.violations.iter().all(|v| !matches!(v, Violation::NegativeProbability { .. })));
        mdp.mu[[0, 1, 0]] = -1e-6;
        assert!(validate(&mdp)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NegativeProbability { .. })));
    }
}
