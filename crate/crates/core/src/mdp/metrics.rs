//! Distances between bounded nonnegative measures on a finite set.
//!
//! Total variation here is the *unnormalized* `sum |p - q|` (no factor one
//! half), so two disjoint unit masses are at distance 2. With this convention
//! `tv^2 <= 4 (|P| + |Q|) hellinger_sq` holds for arbitrary bounded measures.

use super::MdpError;

fn check_pair(p: &[f64], q: &[f64]) -> Result<(), MdpError> {
    if p.len() != q.len() {
        return Err(MdpError::DimensionMismatch {
            what: "measure support",
            expected: vec![p.len()],
            found: vec![q.len()],
        });
    }
    for (what, m) in [("p", p), ("q", q)] {
        if let Some(i) = m.iter().position(|&x| x < 0.0 || x.is_nan()) {
            return Err(MdpError::NegativeEntry {
                what,
                index: i,
                value: m[i],
            });
        }
    }
    Ok(())
}

/// `sum_x |p(x) - q(x)|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, MdpError> {
    check_pair(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// `sum_x (sqrt p(x) - sqrt q(x))^2`.
pub fn hellinger_sq(p: &[f64], q: &[f64]) -> Result<f64, MdpError> {
    check_pair(p, q)?;
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_measures_are_at_zero() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(hellinger_sq(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_point_masses() {
        let p = [1.0, 0.0];
        let q = [0.0, 1.0];
        assert_eq!(tv_distance(&p, &q).unwrap(), 2.0);
        assert_eq!(hellinger_sq(&p, &q).unwrap(), 2.0);
    }

    #[test]
    fn negative_entries_rejected() {
        assert!(matches!(
            tv_distance(&[0.5, -0.1], &[0.5, 0.5]),
            Err(MdpError::NegativeEntry { what: "p", index: 1, .. })
        ));
        assert!(hellinger_sq(&[0.5], &[0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn tv_hellinger_inequality(pairs in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 1..12)) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let q: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let tv = tv_distance(&p, &q).unwrap();
            let hs = hellinger_sq(&p, &q).unwrap();
            let mass: f64 = p.iter().sum::<f64>() + q.iter().sum::<f64>();
            prop_assert!(tv * tv <= 4.0 * mass * hs * (1.0 + 1e-12) + 1e-15);
        }
    }
}
