//! Rolling calibration window and covariate-localized score weighting.
//!
//! A [`CalibrationWindow`] keeps the last `capacity` (covariate, score)
//! pairs seen on the stream. Localized methods turn the window into a
//! weighted score distribution for a query point: covariates are
//! standardized coordinatewise against the current window, distances feed an
//! exponential kernel, and the kernel values are normalized into weights.
//! Standardization statistics are recomputed from scratch at every query so
//! the geometry always reflects the current window, not a stale snapshot.

use std::collections::VecDeque;

use crate::error::{OlcpError, Result};
use crate::scores::WeightedScoreDistribution;

/// Kernel-sum threshold below which weights fall back to uniform. Keeps a
/// query that is astronomically far from every stored covariate from
/// producing a 0/0 normalization.
const KERNEL_UNDERFLOW: f64 = 1e-300;

/// Exponential proximity kernel `exp(-distance / bandwidth)`.
#[derive(Debug, Clone, Copy)]
pub struct Localizer {
    bandwidth: f64,
}

impl Localizer {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !bandwidth.is_finite() || bandwidth <= 0.0 {
            return Err(OlcpError::InvalidBandwidth(bandwidth));
        }
        Ok(Self { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self, distance: f64) -> f64 {
        (-distance / self.bandwidth).exp()
    }
}

/// Rule-of-thumb base bandwidth for `dim`-dimensional covariates and a
/// window of `window` points: (4/(d+2))^{1/(d+4)} * R^{-1/(d+4)} * sqrt(d).
pub fn silverman_bandwidth(dim: usize, window: usize) -> f64 {
    assert!(dim >= 1, "bandwidth rule needs at least one covariate");
    assert!(window >= 1, "bandwidth rule needs a nonempty window");
    let d = dim as f64;
    let r = window as f64;
    (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * r.powf(-1.0 / (d + 4.0)) * d.sqrt()
}

#[derive(Debug, Clone)]
struct WindowEntry {
    covariate: Vec<f64>,
    score: f64,
}

/// Bounded FIFO of recent (covariate, score) observations.
#[derive(Debug, Clone)]
pub struct CalibrationWindow {
    capacity: usize,
    dim: usize,
    entries: VecDeque<WindowEntry>,
}

impl CalibrationWindow {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(OlcpError::InvalidConfig(
                "window capacity must be at least 1".into(),
            ));
        }
        Ok(Self {
            capacity,
            dim,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an observation, evicting the oldest entry when full.
    pub fn push(&mut self, covariate: &[f64], score: f64) -> Result<()> {
        if covariate.len() != self.dim {
            return Err(OlcpError::DimensionMismatch {
                expected: self.dim,
                got: covariate.len(),
            });
        }
        if covariate.iter().any(|v| !v.is_finite()) {
            return Err(OlcpError::NonFiniteCovariate);
        }
        if score.is_nan() {
            return Err(OlcpError::NonFiniteScore(score));
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(WindowEntry {
            covariate: covariate.to_vec(),
            score,
        });
        Ok(())
    }

    /// Scores in insertion order (oldest first).
    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    /// Coordinatewise standardization of the stored covariates and a query
    /// against the window's own mean and population standard deviation. A
    /// coordinate whose deviation is zero or non-finite keeps its raw scale
    /// (divisor 1). The query point does not enter the statistics.
    pub fn standardize(&self, query: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if self.entries.is_empty() {
            return Err(OlcpError::EmptyWindow);
        }
        if query.len() != self.dim {
            return Err(OlcpError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let n = self.entries.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for entry in &self.entries {
            for (m, &v) in mean.iter_mut().zip(&entry.covariate) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut divisor = vec![1.0; self.dim];
        for j in 0..self.dim {
            let var = self
                .entries
                .iter()
                .map(|e| {
                    let d = e.covariate[j] - mean[j];
                    d * d
                })
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            if sd > 0.0 && sd.is_finite() {
                divisor[j] = sd;
            }
        }
        let standardized = self
            .entries
            .iter()
            .map(|e| {
                (0..self.dim)
                    .map(|j| (e.covariate[j] - mean[j]) / divisor[j])
                    .collect()
            })
            .collect();
        let query_std = (0..self.dim)
            .map(|j| (query[j] - mean[j]) / divisor[j])
            .collect();
        Ok((standardized, query_std))
    }

    /// Normalized proximity weights of the stored entries for a query point,
    /// in insertion order. Falls back to uniform weights when every kernel
    /// value underflows.
    pub fn local_weights(&self, query: &[f64], localizer: &Localizer) -> Result<Vec<f64>> {
        let (points, query_std) = self.standardize(query)?;
        let kernels: Vec<f64> = points
            .iter()
            .map(|p| {
                let dist = p
                    .iter()
                    .zip(&query_std)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                localizer.kernel(dist)
            })
            .collect();
        let total: f64 = kernels.iter().sum();
        if total <= KERNEL_UNDERFLOW {
            let n = kernels.len() as f64;
            return Ok(vec![1.0 / n; kernels.len()]);
        }
        Ok(kernels.into_iter().map(|k| k / total).collect())
    }

    /// Weighted score distribution seen from a query point.
    pub fn localized_distribution(
        &self,
        query: &[f64],
        localizer: &Localizer,
    ) -> Result<WeightedScoreDistribution> {
        let weights = self.local_weights(query, localizer)?;
        WeightedScoreDistribution::from_atoms(
            self.entries
                .iter()
                .zip(weights)
                .map(|(e, w)| (e.score, w)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window_1d(covs: &[f64]) -> CalibrationWindow {
        let mut w = CalibrationWindow::new(64, 1).unwrap();
        for &c in covs {
            w.push(&[c], 0.0).unwrap();
        }
        w
    }

    #[test]
    fn eviction_keeps_most_recent() {
        let mut w = CalibrationWindow::new(2, 1).unwrap();
        w.push(&[1.0], 1.0).unwrap();
        w.push(&[2.0], 2.0).unwrap();
        w.push(&[3.0], 3.0).unwrap();
        assert_eq!(w.scores(), vec![2.0, 3.0]);
    }

    #[test]
    fn standardize_two_point_window() {
        let w = window_1d(&[0.0, 2.0]);
        let (points, query) = w.standardize(&[1.0]).unwrap();
        assert!((points[0][0] + 1.0).abs() < 1e-12);
        assert!((points[1][0] - 1.0).abs() < 1e-12);
        assert!(query[0].abs() < 1e-12);
    }

    #[test]
    fn standardize_constant_coordinate_keeps_raw_scale() {
        let w = window_1d(&[1.0, 1.0, 1.0]);
        let (points, query) = w.standardize(&[5.0]).unwrap();
        for p in points {
            assert_eq!(p[0], 0.0);
        }
        assert_eq!(query[0], 4.0);
    }

    #[test]
    fn standardize_empty_window_rejected() {
        let w = CalibrationWindow::new(4, 1).unwrap();
        assert!(matches!(w.standardize(&[0.0]), Err(OlcpError::EmptyWindow)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut w = CalibrationWindow::new(4, 2).unwrap();
        assert!(matches!(
            w.push(&[1.0], 0.0),
            Err(OlcpError::DimensionMismatch { expected: 2, got: 1 })
        ));
        w.push(&[1.0, 2.0], 0.0).unwrap();
        assert!(matches!(
            w.standardize(&[1.0]),
            Err(OlcpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nan_score_rejected_at_push() {
        let mut w = CalibrationWindow::new(4, 1).unwrap();
        assert!(matches!(
            w.push(&[0.0], f64::NAN),
            Err(OlcpError::NonFiniteScore(_))
        ));
    }

    #[test]
    fn weights_for_unit_distance_gap() {
        // window {0, 2} standardizes to {-1, +1}; querying at 0 gives
        // standardized distances {0, 2}, so bandwidth 2 probes exp(0), exp(-1)
        let w = window_1d(&[0.0, 2.0]);
        let loc = Localizer::new(2.0).unwrap();
        let weights = w.local_weights(&[0.0], &loc).unwrap();
        let e = (-1.0f64).exp();
        assert!((weights[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((weights[1] - e / (1.0 + e)).abs() < 1e-12);
        assert!((weights[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((weights[1] - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn huge_bandwidth_gives_uniform_weights() {
        let w = window_1d(&[0.0, 1.0, 5.0, -3.0]);
        let loc = Localizer::new(1e12).unwrap();
        for weight in w.local_weights(&[2.0], &loc).unwrap() {
            assert!((weight - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_underflow_falls_back_to_uniform() {
        let w = window_1d(&[0.0, 1.0]);
        let loc = Localizer::new(1e-300).unwrap();
        let weights = w.local_weights(&[1e9], &loc).unwrap();
        assert_eq!(weights, vec![0.5, 0.5]);
    }

    #[test]
    fn covariate_free_window_weighs_uniformly() {
        // dim 0 serves streams without covariate columns: every entry sits
        // at distance zero, so localization degrades to plain weighting
        let mut w = CalibrationWindow::new(8, 0).unwrap();
        for s in [1.0, 2.0, 3.0] {
            w.push(&[], s).unwrap();
        }
        let loc = Localizer::new(1.0).unwrap();
        let weights = w.local_weights(&[], &loc).unwrap();
        for weight in weights {
            assert!((weight - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_bandwidth_rejected() {
        assert!(matches!(
            Localizer::new(0.0),
            Err(OlcpError::InvalidBandwidth(_))
        ));
        assert!(matches!(
            Localizer::new(-1.0),
            Err(OlcpError::InvalidBandwidth(_))
        ));
        assert!(matches!(
            Localizer::new(f64::NAN),
            Err(OlcpError::InvalidBandwidth(_))
        ));
    }

    #[test]
    fn silverman_reference_values() {
        assert!((silverman_bandwidth(1, 200) - 0.3670977715849853).abs() < 1e-12);
        assert!((silverman_bandwidth(4, 100) - 1.069100636927843).abs() < 1e-12);
        assert!((silverman_bandwidth(1, 1) - 1.0592238410488122).abs() < 1e-12);
    }

    #[test]
    fn silverman_shrinks_with_window() {
        let mut prev = f64::INFINITY;
        for r in [1usize, 10, 100, 1000] {
            let h = silverman_bandwidth(3, r);
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn localized_quantiles_follow_the_weights() {
        // Atoms (1, 0.9), (10, 0.1): the 0.9-quantile stays at 1 and the
        // 0.95-quantile jumps to 10.
        let d = WeightedScoreDistribution::from_atoms([(1.0, 0.9), (10.0, 0.1)]).unwrap();
        assert_eq!(d.lower_quantile(0.9).unwrap(), 1.0);
        assert_eq!(d.lower_quantile(0.95).unwrap(), 10.0);
    }

    #[test]
    fn identical_covariates_yield_uniform_distribution() {
        let mut w = CalibrationWindow::new(8, 1).unwrap();
        for s in [3.0, 1.0, 2.0] {
            w.push(&[7.0], s).unwrap();
        }
        let loc = Localizer::new(0.5).unwrap();
        let d = w.localized_distribution(&[7.0], &loc).unwrap();
        for &(_, weight) in d.atoms() {
            assert!((weight - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(d.lower_quantile(0.5).unwrap(), 2.0);
    }

    proptest! {
        #[test]
        fn weights_are_a_probability_vector(
            covs in proptest::collection::vec(-50.0..50.0f64, 1..30),
            query in -50.0..50.0f64,
            bandwidth in 0.05..20.0f64,
        ) {
            let w = window_1d(&covs);
            let loc = Localizer::new(bandwidth).unwrap();
            let weights = w.local_weights(&[query], &loc).unwrap();
            let sum: f64 = weights.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(weights.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn closer_points_weigh_at_least_as_much(
            near in -5.0..5.0f64,
            far_gap in 0.1..30.0f64,
            bandwidth in 0.05..10.0f64,
        ) {
            // two entries plus a spread anchor so the standardization is fixed
            let covs = vec![near, near + far_gap, near - far_gap];
            let w = window_1d(&covs);
            let loc = Localizer::new(bandwidth).unwrap();
            let weights = w.local_weights(&[near], &loc).unwrap();
            prop_assert!(weights[0] >= weights[1] - 1e-12);
            prop_assert!(weights[0] >= weights[2] - 1e-12);
        }
    }
}
