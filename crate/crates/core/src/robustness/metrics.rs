use serde::{Deserialize, Serialize};

use crate::autodiff::pearson_value;
use crate::error::{Error, Result};

/// Impacts smaller than this in absolute value count as sign 0 (EUR/MWh).
pub const SIGN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessMetrics {
    pub sign_agree: f64,
    pub rank_corr: f64,
    /// Placebo rows only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attenuation: Option<f64>,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Contract(format!(
            "metrics need equal-length non-empty vectors, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn tri_sign(x: f64, tol: f64) -> i8 {
    if x.abs() < tol {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Fraction of positions whose tri-valued signs match.
pub fn sign_agree(a: &[f64], b: &[f64], tol: f64) -> Result<f64> {
    check_pair(a, b)?;
    let hits = a.iter().zip(b).filter(|(x, y)| tri_sign(**x, tol) == tri_sign(**y, tol)).count();
    Ok(hits as f64 / a.len() as f64)
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    Ok(pearson_value(&average_ranks(a), &average_ranks(b)))
}

/// `mean|placebo| / mean|reference|`.
pub fn attenuation(placebo: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(placebo, reference)?;
    if reference.iter().all(|x| x.abs() < SIGN_TOLERANCE) {
        return Err(Error::Contract("reference impacts are all zero".into()));
    }
    let mean_abs = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    Ok(mean_abs(placebo) / mean_abs(reference))
}

/// Sign agreement and rank correlation of `other` against `reference`.
pub fn compare(reference: &[f64], other: &[f64]) -> Result<RobustnessMetrics> {
    Ok(RobustnessMetrics {
        sign_agree: sign_agree(reference, other, SIGN_TOLERANCE)?,
        rank_corr: spearman(reference, other)?,
        attenuation: None,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn examples() {
        let a = [1.0, -2.0, 3.0];
        assert_eq!(sign_agree(&a, &a, SIGN_TOLERANCE).unwrap(), 1.0);
        assert_eq!(spearman(&a, &a).unwrap(), 1.0);
        let b = [2.0, -1.0, 5.0];
        assert_eq!(average_ranks(&a), vec![2.0, 1.0, 3.0]);
        assert_eq!(average_ranks(&b), vec![2.0, 1.0, 3.0]);
        assert_eq!(sign_agree(&a, &b, SIGN_TOLERANCE).unwrap(), 1.0);
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let tenth: Vec<f64> = a.iter().map(|x| x / 10.0).collect();
        assert!((attenuation(&tenth, &a).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(attenuation(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn zeros_match_only_zeros() {
        assert_eq!(sign_agree(&[0.0, 1e-7, 1.0], &[1e-9, 0.5, 1.0], SIGN_TOLERANCE).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn tied_ranks_average() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn all_zero_reference_is_rejected() {
        assert!(matches!(attenuation(&[1.0, 2.0], &[0.0, 1e-9]), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn sign_agree_symmetric_and_scale_free(
            v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
            c in 0.01f64..100.0,
        ) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            let ab = sign_agree(&a, &b, 0.0).unwrap();
            prop_assert_eq!(ab, sign_agree(&b, &a, 0.0).unwrap());
            let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
            prop_assert_eq!(ab, sign_agree(&scaled, &b, 0.0).unwrap());
        }

        #[test]
        fn spearman_invariant_under_monotone_maps(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..20)) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            let mapped: Vec<f64> = a.iter().map(|x| x.exp() + x * x * x).collect();
            prop_assert!((spearman(&a, &b).unwrap() - spearman(&mapped, &b).unwrap()).abs() < 1e-12);
        }
    }
}
