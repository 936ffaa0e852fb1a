//! Empirical conformity-score distributions and their lower quantiles.
//!
//! Every interval rule in this crate reduces to one primitive: the lower
//! quantile Q(tau; F) = inf{ s : F((-inf, s]) >= tau } of a finite atomic
//! distribution over scores. Split-style rules use unit weights plus a
//! finite-sample rank correction; localized rules reweight the same atoms by
//! covariate proximity and query the weighted quantile directly.

use crate::error::{OlcpError, Result};

/// Relative slack used in cumulative-weight comparisons. Normalized weights
/// rarely sum to exactly one in floating point; without the slack a quantile
/// at the top of the range can skip past its atom.
const CUM_WEIGHT_SLACK: f64 = 1e-12;

/// Total mass at or below which a distribution is treated as carrying no
/// weight at all (matches the kernel underflow guard in localization).
const ZERO_MASS: f64 = 1e-300;

/// Finite atomic distribution over conformity scores.
///
/// Atoms are held sorted by score; ties are legal and their weights
/// accumulate before any threshold comparison.
#[derive(Debug, Clone)]
pub struct WeightedScoreDistribution {
    atoms: Vec<(f64, f64)>,
    total_weight: f64,
}

impl WeightedScoreDistribution {
    /// Builds a distribution from `(score, weight)` atoms.
    ///
    /// Rejects NaN scores and negative or non-finite weights.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        for &(score, weight) in &atoms {
            if score.is_nan() {
                return Err(OlcpError::NonFiniteScore(score));
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(OlcpError::NegativeWeight(weight));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores checked non-NaN"));
        let total_weight = atoms.iter().map(|&(_, w)| w).sum();
        Ok(Self {
            atoms,
            total_weight,
        })
    }

    /// Unit-weight distribution over raw scores.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        Self::from_atoms(scores.iter().map(|&s| (s, 1.0)))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Lower quantile Q(tau; F): the smallest atom score whose cumulative
    /// weight reaches `tau * total_weight`.
    ///
    /// Conventions: `tau = 0` returns the smallest atom score; a distribution
    /// whose total weight is numerically zero yields `+inf` (callers
    /// normalize weights upstream, so this only happens when every atom has
    /// literally no mass).
    pub fn lower_quantile(&self, tau: f64) -> Result<f64> {
        if self.atoms.is_empty() {
            return Err(OlcpError::EmptyDistribution);
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(OlcpError::InvalidLevel(tau));
        }
        if self.total_weight <= ZERO_MASS {
            return Ok(f64::INFINITY);
        }
        let target = tau * self.total_weight;
        let slack = CUM_WEIGHT_SLACK * self.total_weight;
        let mut cum = 0.0;
        let mut i = 0;
        while i < self.atoms.len() {
            let score = self.atoms[i].0;
            while i < self.atoms.len() && self.atoms[i].0 == score {
                cum += self.atoms[i].1;
                i += 1;
            }
            if cum + slack >= target {
                return Ok(score);
            }
        }
        // Float dust can leave the final cumulative sum a hair under the
        // target even with the slack; the top atom is the correct answer.
        Ok(self.atoms[self.atoms.len() - 1].0)
    }
}

/// Finite-sample corrected rank for a window of `r` scores at miscoverage
/// `alpha`: ceil((1 - alpha) * (r + 1)), clamped into [1, r].
pub fn corrected_rank(r: usize, alpha: f64) -> usize {
    assert!(r >= 1, "corrected_rank needs at least one score");
    let raw = ((1.0 - alpha) * (r as f64 + 1.0)).ceil();
    if raw < 1.0 {
        1
    } else if raw > r as f64 {
        r
    } else {
        raw as usize
    }
}

/// Split-conformal radius: the `corrected_rank`-th order statistic of the
/// calibration scores.
pub fn split_conformal_radius(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(OlcpError::EmptyWindow);
    }
    for &s in scores {
        if s.is_nan() {
            return Err(OlcpError::NonFiniteScore(s));
        }
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores checked non-NaN"));
    let k = corrected_rank(sorted.len(), alpha);
    Ok(sorted[k - 1])
}

/// Pinball (quantile) loss at miscoverage level `alpha`:
/// alpha * (beta - theta) - min(0, beta - theta).
pub fn pinball_loss(beta: f64, theta: f64, alpha: f64) -> f64 {
    let d = beta - theta;
    alpha * d - d.min(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(atoms: &[(f64, f64)]) -> WeightedScoreDistribution {
        WeightedScoreDistribution::from_atoms(atoms.iter().copied()).unwrap()
    }

    #[test]
    fn unit_weight_median() {
        let d = WeightedScoreDistribution::from_scores(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.lower_quantile(0.5).unwrap(), 2.0);
    }

    #[test]
    fn full_mass_hits_maximum() {
        let d = WeightedScoreDistribution::from_scores(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.lower_quantile(1.0).unwrap(), 3.0);
    }

    #[test]
    fn weighted_scan_example() {
        let d = dist(&[(1.0, 0.5), (2.0, 0.3), (3.0, 0.2)]);
        // cumulative weights 0.5, 0.8: the 0.6-quantile lands on the second atom
        assert_eq!(d.lower_quantile(0.6).unwrap(), 2.0);
    }

    #[test]
    fn zero_tau_returns_minimum() {
        let d = dist(&[(5.0, 0.7), (7.0, 0.3)]);
        assert_eq!(d.lower_quantile(0.0).unwrap(), 5.0);
    }

    #[test]
    fn tied_scores_accumulate_before_comparison() {
        let d = dist(&[(1.0, 0.2), (2.0, 0.3), (2.0, 0.3), (3.0, 0.2)]);
        assert_eq!(d.lower_quantile(0.5).unwrap(), 2.0);
        assert_eq!(d.lower_quantile(0.8).unwrap(), 2.0);
        assert_eq!(d.lower_quantile(0.81).unwrap(), 3.0);
    }

    #[test]
    fn zero_total_weight_is_infinite() {
        let d = dist(&[(1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(d.lower_quantile(0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn empty_distribution_rejected() {
        let d = WeightedScoreDistribution::from_atoms(std::iter::empty()).unwrap();
        assert!(matches!(
            d.lower_quantile(0.5),
            Err(OlcpError::EmptyDistribution)
        ));
    }

    #[test]
    fn invalid_tau_rejected() {
        let d = dist(&[(1.0, 1.0)]);
        assert!(matches!(
            d.lower_quantile(-0.1),
            Err(OlcpError::InvalidLevel(_))
        ));
        assert!(matches!(
            d.lower_quantile(1.1),
            Err(OlcpError::InvalidLevel(_))
        ));
    }

    #[test]
    fn nan_score_rejected_at_insertion() {
        let err = WeightedScoreDistribution::from_atoms([(f64::NAN, 1.0)]);
        assert!(matches!(err, Err(OlcpError::NonFiniteScore(_))));
    }

    #[test]
    fn negative_weight_rejected() {
        let err = WeightedScoreDistribution::from_atoms([(1.0, -0.5)]);
        assert!(matches!(err, Err(OlcpError::NegativeWeight(_))));
    }

    #[test]
    fn corrected_rank_examples() {
        assert_eq!(corrected_rank(9, 0.1), 9);
        assert_eq!(corrected_rank(99, 0.1), 90);
        // ceil(0.9 * 6) = 6 caps at the window length
        assert_eq!(corrected_rank(5, 0.1), 5);
    }

    #[test]
    fn corrected_rank_monotone() {
        for r in 1..200usize {
            assert!(corrected_rank(r + 1, 0.1) >= corrected_rank(r, 0.1));
        }
        let mut prev = usize::MAX;
        for i in 0..=100 {
            let alpha = i as f64 / 100.0;
            let k = corrected_rank(50, alpha);
            assert!(k <= prev);
            prev = k;
        }
    }

    #[test]
    fn split_radius_examples() {
        let scores: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        assert_eq!(split_conformal_radius(&scores, 0.1).unwrap(), 9.0);
        assert_eq!(split_conformal_radius(&[5.0], 0.1).unwrap(), 5.0);
        assert_eq!(split_conformal_radius(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn split_radius_empty_window() {
        assert!(matches!(
            split_conformal_radius(&[], 0.1),
            Err(OlcpError::EmptyWindow)
        ));
    }

    #[test]
    fn pinball_examples() {
        assert!((pinball_loss(0.5, 0.3, 0.1) - 0.02).abs() < 1e-12);
        assert!((pinball_loss(0.3, 0.5, 0.1) - 0.18).abs() < 1e-12);
        assert_eq!(pinball_loss(0.4, 0.4, 0.37), 0.0);
    }

    /// Definitional cumulative scan used as an independent check: first
    /// score (ties grouped) whose cumulative weight reaches tau * total.
    fn scan_oracle(mut atoms: Vec<(f64, f64)>, tau: f64) -> f64 {
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let target = tau * total;
        let mut cum = 0.0;
        let mut i = 0;
        while i < atoms.len() {
            let s = atoms[i].0;
            while i < atoms.len() && atoms[i].0 == s {
                cum += atoms[i].1;
                i += 1;
            }
            if cum + 1e-12 * total >= target {
                return s;
            }
        }
        atoms.last().unwrap().0
    }

    proptest! {
        #[test]
        fn quantile_monotone_in_tau(
            scores in proptest::collection::vec(-1e3..1e3f64, 1..40),
            weights in proptest::collection::vec(0.0..10.0f64, 1..40),
            tau1 in 0.0..=1.0f64,
            tau2 in 0.0..=1.0f64,
        ) {
            let n = scores.len().min(weights.len());
            let atoms: Vec<(f64, f64)> =
                scores[..n].iter().zip(&weights[..n]).map(|(&s, &w)| (s, w)).collect();
            let d = WeightedScoreDistribution::from_atoms(atoms).unwrap();
            let (lo, hi) = if tau1 <= tau2 { (tau1, tau2) } else { (tau2, tau1) };
            prop_assert!(d.lower_quantile(lo).unwrap() <= d.lower_quantile(hi).unwrap());
        }

        #[test]
        fn quantile_matches_scan_oracle(
            raw in proptest::collection::vec((-50i32..50, 0.0..5.0f64), 1..30),
            tau in 0.0..=1.0f64,
        ) {
            // integer-derived scores create frequent ties
            let atoms: Vec<(f64, f64)> =
                raw.iter().map(|&(s, w)| (s as f64 / 4.0, w)).collect();
            let d = WeightedScoreDistribution::from_atoms(atoms.clone()).unwrap();
            let got = d.lower_quantile(tau).unwrap();
            if d.total_weight() > 0.0 {
                prop_assert_eq!(got, scan_oracle(atoms, tau));
            }
        }

        #[test]
        fn pinball_nonnegative(beta in -5.0..5.0f64, theta in -5.0..5.0f64, alpha in 0.0..=1.0f64) {
            prop_assert!(pinball_loss(beta, theta, alpha) >= 0.0);
        }
    }
}
