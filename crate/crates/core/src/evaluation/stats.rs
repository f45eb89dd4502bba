//! Rank statistics: Kruskal-Wallis with tie correction, plus small helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
}

/// Kruskal-Wallis H with tie correction and a chi-squared p-value with
/// `#groups − 1` degrees of freedom. All-tied data is defined as
/// `(H, p) = (0, 1)`.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<(f64, f64), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(StatsError::EmptyGroup(i));
        }
    }

    let n_total: usize = groups.iter().map(Vec::len).sum();
    let mut pooled: Vec<(f64, usize)> = Vec::with_capacity(n_total);
    for (gi, g) in groups.iter().enumerate() {
        pooled.extend(g.iter().map(|&v| (v, gi)));
    }
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite samples"));

    // Mid-ranks with tie bookkeeping.
    let mut rank_sums = vec![0.0f64; groups.len()];
    let mut tie_term = 0.0f64; // Σ (t³ − t) over tie groups
    let mut i = 0;
    while i < n_total {
        let mut j = i;
        while j < n_total && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        let avg_rank = (i + j + 1) as f64 / 2.0; // 1-based mid-rank
        for item in &pooled[i..j] {
            rank_sums[item.1] += avg_rank;
        }
        tie_term += t * t * t - t;
        i = j;
    }

    let n = n_total as f64;
    let mut h = 0.0;
    for (g, rs) in groups.iter().zip(&rank_sums) {
        h += rs * rs / g.len() as f64;
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    let correction = 1.0 - tie_term / (n * n * n - n);
    if correction <= 0.0 {
        // Every observation tied.
        return Ok((0.0, 1.0));
    }
    h /= correction;

    let df = (groups.len() - 1) as f64;
    let chi = ChiSquared::new(df).expect("df >= 1");
    let p = (1.0 - chi.cdf(h)).clamp(0.0, 1.0);
    Ok((h, p))
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    crate::ica::pearson(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_three_groups() {
        let groups = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let (h, p) = kruskal_wallis(&groups).unwrap();
        assert!((h - 7.2).abs() < 1e-12, "H = {h}");
        // df = 2: p = exp(−H/2)
        assert!((p - (-3.6f64).exp()).abs() < 1e-10, "p = {p}");
    }

    #[test]
    fn identical_constants_give_h0_p1() {
        let groups = vec![vec![5.0; 4], vec![5.0; 3], vec![5.0; 5]];
        let (h, p) = kruskal_wallis(&groups).unwrap();
        assert_eq!(h, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn group_order_is_irrelevant() {
        let a = vec![vec![1.0, 5.0, 2.0], vec![3.0, 3.0], vec![9.0, 0.5, 4.0]];
        let mut b = a.clone();
        b.rotate_left(1);
        let (ha, pa) = kruskal_wallis(&a).unwrap();
        let (hb, pb) = kruskal_wallis(&b).unwrap();
        assert!((ha - hb).abs() < 1e-12);
        assert!((pa - pb).abs() < 1e-12);
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(kruskal_wallis(&[vec![1.0], vec![]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0]]).is_err());
    }
}
