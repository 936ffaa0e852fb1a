//! Constrained expert aggregation over a pool of interval rules.
//!
//! The pool contains one adaptive localized rule per candidate bandwidth.
//! Each round the aggregator samples an expert from its current weights and
//! issues that expert's interval; after the outcome arrives it charges every
//! expert a surrogate loss that trades interval width against an
//! exponentiated virtual queue of accumulated excess miscoverage, then feeds
//! that loss to an [`AdaHedge`] learner. The queue pressure forces the
//! mixture's miss rate down toward the target while the width term steers
//! mass to the narrowest feasible experts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{OlcpError, Result};
use crate::localization::{CalibrationWindow, Localizer};
use crate::methods::{AciState, OnlineConformal, PredictionInterval, StepRecord};

/// Scale-free hedging over nonnegative loss vectors.
///
/// Follow-the-regularized-leader with an entropic regularizer whose scale
/// grows by the mixability gap of each round divided by ln K. No horizon or
/// loss range is needed up front.
#[derive(Debug, Clone)]
pub struct AdaHedge {
    /// ln K; the squared width of the entropic regularizer.
    log_k: f64,
    /// Accumulated negative losses per expert.
    cum_neg_loss: Vec<f64>,
    weights: Vec<f64>,
    scale: f64,
}

impl AdaHedge {
    pub fn new(num_experts: usize) -> Result<Self> {
        if num_experts < 2 {
            return Err(OlcpError::TooFewExperts(num_experts));
        }
        Ok(Self {
            log_k: (num_experts as f64).ln(),
            cum_neg_loss: vec![0.0; num_experts],
            weights: vec![1.0 / num_experts as f64; num_experts],
            scale: 0.0,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Consumes one loss vector and refreshes the weights.
    pub fn step(&mut self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.weights.len() {
            return Err(OlcpError::DimensionMismatch {
                expected: self.weights.len(),
                got: losses.len(),
            });
        }
        if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
            return Err(OlcpError::NonFiniteLoss(i));
        }

        let mixture: f64 = self
            .weights
            .iter()
            .zip(losses)
            .map(|(w, l)| w * l)
            .sum();
        // Mixability gap: mixture loss minus the entropic mix loss. At zero
        // scale the mix loss degenerates to the best loss on the support.
        let delta = if self.scale > 0.0 {
            let m = losses.iter().cloned().fold(f64::INFINITY, f64::min);
            let sum: f64 = self
                .weights
                .iter()
                .zip(losses)
                .map(|(w, l)| w * (-(l - m) / self.scale).exp())
                .sum();
            (mixture - m + self.scale * sum.ln()).max(0.0)
        } else {
            let support_min = self
                .weights
                .iter()
                .zip(losses)
                .filter(|(w, _)| **w > 0.0)
                .map(|(_, l)| *l)
                .fold(f64::INFINITY, f64::min);
            (mixture - support_min).max(0.0)
        };
        self.scale += delta / self.log_k;
        for (acc, &l) in self.cum_neg_loss.iter_mut().zip(losses) {
            *acc -= l;
        }
        self.refresh_weights();
        Ok(())
    }

    fn refresh_weights(&mut self) {
        let best = self
            .cum_neg_loss
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if self.scale > 0.0 {
            let mut sum = 0.0;
            for (w, &acc) in self.weights.iter_mut().zip(&self.cum_neg_loss) {
                *w = ((acc - best) / self.scale).exp();
                sum += *w;
            }
            for w in &mut self.weights {
                *w /= sum;
            }
        } else {
            // Zero scale means every loss so far was constant across the
            // support: spread uniformly over the current leaders.
            let leaders = self.cum_neg_loss.iter().filter(|&&a| a == best).count() as f64;
            for (w, &acc) in self.weights.iter_mut().zip(&self.cum_neg_loss) {
                *w = if acc == best { 1.0 / leaders } else { 0.0 };
            }
        }
    }
}

/// Constants of the aggregation layer for a pool of `K` experts run over a
/// horizon of `T` rounds with per-round feedback bounded by `G`.
#[derive(Debug, Clone, Copy)]
pub struct HedgeParams {
    /// Hedging regret constant 2 sqrt(4 + ln K).
    pub c_ah: f64,
    /// Queue gain 1 / (sqrt(2) * c_ah * G).
    pub kappa: f64,
    /// Exponential potential rate 1 / (2 sqrt(T)).
    pub lambda: f64,
    /// Weight of the width term in the surrogate loss.
    pub v: f64,
}

pub fn hedge_parameters(num_experts: usize, horizon: usize, feedback_bound: f64) -> HedgeParams {
    assert!(num_experts >= 2, "aggregation needs at least two experts");
    assert!(horizon >= 1, "aggregation needs a positive horizon");
    assert!(
        feedback_bound > 0.0,
        "feedback bound must be positive"
    );
    let c_ah = 2.0 * (4.0 + (num_experts as f64).ln()).sqrt();
    HedgeParams {
        c_ah,
        kappa: 1.0 / (std::f64::consts::SQRT_2 * c_ah * feedback_bound),
        lambda: 1.0 / (2.0 * (horizon as f64).sqrt()),
        v: 1.0,
    }
}

/// Min-max normalization of raw interval widths into [0, 1]; an all-equal
/// round normalizes to the zero vector.
pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // hi <= lo covers the all-equal round; NaN inputs also land here
    if hi <= lo || hi.is_nan() || lo.is_nan() {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

/// Full-information feedback for one aggregation round.
#[derive(Debug, Clone)]
pub struct RoundFeedback {
    /// Normalized interval sizes, one per expert.
    pub sizes: Vec<f64>,
    /// Miss indicators, one per expert.
    pub errs: Vec<bool>,
    /// Expert whose interval was issued this round.
    pub chosen: usize,
}

/// Per-round summary reported by the aggregator.
#[derive(Debug, Clone, Copy)]
pub struct RoundSummary {
    /// Weighted size of the round under the pre-round weights.
    pub mixture_size: f64,
    /// Weighted miss rate under the pre-round weights.
    pub mixture_err: f64,
    /// Constraint value g = mixture_err - target (before clipping).
    pub violation: f64,
    /// Queue after absorbing this round.
    pub queue: f64,
}

/// Queue-driven aggregation layer: weights, virtual queue, surrogate losses.
///
/// Decoupled from any particular expert pool so the same machinery can be
/// driven with synthetic feedback.
#[derive(Debug, Clone)]
pub struct HedgeAggregator {
    params: HedgeParams,
    target: f64,
    learner: AdaHedge,
    queue: f64,
}

impl HedgeAggregator {
    pub fn new(
        num_experts: usize,
        horizon: usize,
        feedback_bound: f64,
        target: f64,
    ) -> Result<Self> {
        if !(target > 0.0 && target < 1.0) {
            return Err(OlcpError::InvalidLevel(target));
        }
        Ok(Self {
            params: hedge_parameters(num_experts, horizon, feedback_bound),
            target,
            learner: AdaHedge::new(num_experts)?,
            queue: 0.0,
        })
    }

    pub fn params(&self) -> &HedgeParams {
        &self.params
    }

    pub fn weights(&self) -> &[f64] {
        self.learner.weights()
    }

    pub fn queue(&self) -> f64 {
        self.queue
    }

    /// Gradient of the surrogate objective at the current queue value:
    /// `v * kappa * sizes + phi'(queue) * kappa * errs * 1{violation > 0}`,
    /// with the queue already charged for this round. At the kink
    /// (violation exactly zero) the constraint term is dropped.
    pub fn surrogate_gradient(&self, sizes: &[f64], errs: &[bool], violating: bool) -> Vec<f64> {
        let p = &self.params;
        let pressure = if violating {
            p.lambda * (p.lambda * self.queue).exp() * p.kappa
        } else {
            0.0
        };
        sizes
            .iter()
            .zip(errs)
            .map(|(&s, &e)| p.v * p.kappa * s + pressure * if e { 1.0 } else { 0.0 })
            .collect()
    }

    /// Absorbs one round of full-information feedback: charges the queue,
    /// forms the surrogate gradient, and updates the weights.
    pub fn round(&mut self, sizes: &[f64], errs: &[bool]) -> Result<RoundSummary> {
        let k = self.learner.num_experts();
        if sizes.len() != k || errs.len() != k {
            return Err(OlcpError::DimensionMismatch {
                expected: k,
                got: sizes.len().min(errs.len()),
            });
        }
        let weights = self.learner.weights();
        let mixture_size: f64 = weights.iter().zip(sizes).map(|(w, s)| w * s).sum();
        let mixture_err: f64 = weights
            .iter()
            .zip(errs)
            .map(|(w, &e)| if e { *w } else { 0.0 })
            .sum();
        let violation = mixture_err - self.target;
        self.queue += self.params.kappa * violation.max(0.0);
        let gradient = self.surrogate_gradient(sizes, errs, violation > 0.0);
        self.learner.step(&gradient)?;
        Ok(RoundSummary {
            mixture_size,
            mixture_err,
            violation,
            queue: self.queue,
        })
    }
}

/// Samples an index from a weight vector by inverse CDF in stored order.
pub(crate) fn sample_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u * total <= acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Bandwidth-pool interval rule: one adaptive localized expert per
/// candidate bandwidth, aggregated by [`HedgeAggregator`].
///
/// Every expert keeps its own adaptive level but all share one calibration
/// window (the conformity score does not depend on the issued interval).
pub struct OlcpHedge {
    window: CalibrationWindow,
    localizers: Vec<Localizer>,
    experts: Vec<AciState>,
    aggregator: HedgeAggregator,
    rng: ChaCha8Rng,
    t: usize,
}

impl OlcpHedge {
    pub fn new(
        alpha: f64,
        gamma: f64,
        capacity: usize,
        dim: usize,
        bandwidths: &[f64],
        horizon: usize,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let localizers: Vec<Localizer> = bandwidths
            .iter()
            .map(|&h| Localizer::new(h))
            .collect::<Result<_>>()?;
        let experts: Vec<AciState> = bandwidths
            .iter()
            .map(|_| AciState::new(alpha, gamma))
            .collect::<Result<_>>()?;
        // min-max normalized sizes and binary errors are both bounded by 1
        let aggregator = HedgeAggregator::new(bandwidths.len(), horizon, 1.0, alpha)?;
        Ok(Self {
            window: CalibrationWindow::new(capacity, dim)?,
            localizers,
            experts,
            aggregator,
            rng,
            t: 0,
        })
    }

    pub fn aggregator(&self) -> &HedgeAggregator {
        &self.aggregator
    }

    pub fn expert_levels(&self) -> Vec<f64> {
        self.experts.iter().map(|e| e.level()).collect()
    }
}

impl OnlineConformal for OlcpHedge {
    fn name(&self) -> &'static str {
        "olcp-hedge"
    }

    fn step(
        &mut self,
        covariate: &[f64],
        prediction: f64,
        outcome: f64,
    ) -> Result<Option<StepRecord>> {
        self.t += 1;
        let score = (outcome - prediction).abs();
        if self.window.is_empty() {
            self.window.push(covariate, score)?;
            return Ok(None);
        }

        let chosen = sample_index(self.aggregator.weights(), self.rng.gen::<f64>());
        let radii: Vec<f64> = self
            .localizers
            .iter()
            .zip(&self.experts)
            .map(|(loc, expert)| {
                self.window
                    .localized_distribution(covariate, loc)?
                    .lower_quantile(1.0 - expert.level())
            })
            .collect::<Result<_>>()?;
        let errs: Vec<bool> = radii.iter().map(|&r| score > r).collect();
        let widths: Vec<f64> = radii.iter().map(|&r| 2.0 * r).collect();
        let feedback = RoundFeedback {
            sizes: min_max_normalize(&widths),
            errs,
            chosen,
        };

        let level = self.experts[chosen].level();
        let summary = self.aggregator.round(&feedback.sizes, &feedback.errs)?;
        let mut lower = 0.0;
        let mut upper = 0.0;
        for (i, expert) in self.experts.iter_mut().enumerate() {
            let (l, u) = expert.update(feedback.errs[i]);
            if i == chosen {
                lower = l;
                upper = u;
            }
        }
        self.window.push(covariate, score)?;

        Ok(Some(StepRecord {
            t: self.t,
            interval: PredictionInterval {
                center: prediction,
                radius: radii[chosen],
            },
            covered: !feedback.errs[chosen],
            level,
            lower_correction: lower,
            upper_correction: upper,
            queue: Some(summary.queue),
            expert: Some(chosen),
            expert_errs: Some(feedback.errs),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn adahedge_starts_uniform() {
        let h = AdaHedge::new(4).unwrap();
        assert_eq!(h.weights(), &[0.25; 4]);
        assert_eq!(h.scale(), 0.0);
    }

    #[test]
    fn adahedge_first_round_reference() {
        let mut h = AdaHedge::new(2).unwrap();
        h.step(&[1.0, 0.0]).unwrap();
        // gap 0.5 over the uniform prior, divided by ln 2
        assert!((h.scale() - 0.7213475204444817).abs() < 1e-12);
        assert!(h.weights()[1] > h.weights()[0]);
        let sum: f64 = h.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adahedge_constant_losses_stay_uniform() {
        let mut h = AdaHedge::new(3).unwrap();
        for _ in 0..10 {
            h.step(&[0.7, 0.7, 0.7]).unwrap();
            assert_eq!(h.scale(), 0.0);
            for &w in h.weights() {
                assert!((w - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adahedge_scale_never_decreases() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut h = AdaHedge::new(5).unwrap();
        let mut prev = 0.0;
        for _ in 0..200 {
            let losses: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            h.step(&losses).unwrap();
            assert!(h.scale() >= prev);
            prev = h.scale();
            let sum: f64 = h.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn adahedge_rejects_bad_input() {
        assert!(matches!(AdaHedge::new(1), Err(OlcpError::TooFewExperts(1))));
        let mut h = AdaHedge::new(2).unwrap();
        assert!(matches!(
            h.step(&[1.0]),
            Err(OlcpError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            h.step(&[1.0, f64::NAN]),
            Err(OlcpError::NonFiniteLoss(1))
        ));
    }

    #[test]
    fn hedge_parameter_reference_values() {
        let p = hedge_parameters(5, 1500, 1.0);
        assert!((p.c_ah - 4.736850393429837).abs() < 1e-12);
        assert!((p.kappa - 0.14927783705546774).abs() < 1e-12);
        assert!((p.lambda - 0.012909944487358056).abs() < 1e-12);
        assert_eq!(p.v, 1.0);
    }

    #[test]
    fn min_max_normalize_handles_degenerate_rounds() {
        assert_eq!(min_max_normalize(&[2.0, 2.0, 2.0]), vec![0.0; 3]);
        let n = min_max_normalize(&[1.0, 3.0, 2.0]);
        assert_eq!(n, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn queue_charges_only_positive_violations() {
        let mut agg = HedgeAggregator::new(2, 1500, 1.0, 0.1).unwrap();
        let kappa = agg.params().kappa;
        // mixture err 0.5 against target 0.1: queue picks up kappa * 0.4,
        // with kappa = 1 / (sqrt(2) * 2 sqrt(4 + ln 2)) for two experts
        let s = agg.round(&[0.0, 0.0], &[true, false]).unwrap();
        assert!((s.queue - kappa * 0.4).abs() < 1e-12);
        assert!((agg.queue() - 0.06528041561239038).abs() < 1e-12);
        // no misses: violation negative, queue unchanged
        let s2 = agg.round(&[0.3, 0.1], &[false, false]).unwrap();
        assert_eq!(s2.queue, s.queue);
    }

    #[test]
    fn surrogate_without_violation_is_pure_width() {
        let agg = HedgeAggregator::new(2, 100, 1.0, 0.1).unwrap();
        let kappa = agg.params().kappa;
        let g = agg.surrogate_gradient(&[0.5, 1.0], &[true, true], false);
        assert!((g[0] - kappa * 0.5).abs() < 1e-12);
        assert!((g[1] - kappa * 1.0).abs() < 1e-12);
    }

    #[test]
    fn idle_round_leaves_weights_unchanged() {
        // zero sizes and no violation produce a zero gradient
        let mut agg = HedgeAggregator::new(3, 100, 1.0, 0.5).unwrap();
        let before = agg.weights().to_vec();
        agg.round(&[0.0, 0.0, 0.0], &[false, false, false]).unwrap();
        assert_eq!(agg.weights(), &before[..]);
    }

    #[test]
    fn queue_equals_kappa_times_clipped_violations() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut agg = HedgeAggregator::new(4, 500, 1.0, 0.2).unwrap();
        let kappa = agg.params().kappa;
        let mut acc = 0.0;
        for _ in 0..300 {
            let sizes: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let errs: Vec<bool> = (0..4).map(|_| rng.gen_bool(0.4)).collect();
            let summary = agg.round(&sizes, &errs).unwrap();
            acc += kappa * summary.violation.max(0.0);
            assert!((summary.queue - acc).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_index_inverse_cdf() {
        let w = [0.2, 0.5, 0.3];
        assert_eq!(sample_index(&w, 0.0), 0);
        assert_eq!(sample_index(&w, 0.199), 0);
        assert_eq!(sample_index(&w, 0.21), 1);
        assert_eq!(sample_index(&w, 0.699), 1);
        assert_eq!(sample_index(&w, 0.71), 2);
        assert_eq!(sample_index(&w, 1.0), 2);
    }

    fn hedge_with(bandwidths: &[f64], seed: u64) -> OlcpHedge {
        OlcpHedge::new(
            0.1,
            0.05,
            64,
            1,
            bandwidths,
            1000,
            rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    #[test]
    fn identical_bandwidths_make_identical_experts() {
        use rand::Rng;
        let mut hedge = hedge_with(&[0.8, 0.8], 42);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = rng.gen_range(-2.0..2.0);
            if let Some(rec) = hedge.step(&[x], 0.0, y).unwrap() {
                let errs = rec.expert_errs.as_ref().unwrap();
                assert_eq!(errs[0], errs[1]);
            }
        }
        let levels = hedge.expert_levels();
        assert_eq!(levels[0], levels[1]);
    }

    /// Straight-line transcription of one aggregation path (two experts,
    /// fixed seed), kept entirely separate from the production structs:
    /// explicit weighted quantiles, explicit queue and mixability updates,
    /// and an identically-seeded generator for the expert draws.
    #[test]
    fn hedge_three_step_reference_trace() {
        use rand::Rng;
        let (alpha, gamma) = (0.1, 0.1);
        let bandwidths = [0.5, 2.0];
        let horizon = 100;
        let seed = 13;

        let mut hedge = OlcpHedge::new(
            alpha,
            gamma,
            64,
            1,
            &bandwidths,
            horizon,
            rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();

        // reference state
        let mut ref_rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c_ah = 2.0 * (4.0f64 + 2.0f64.ln()).sqrt();
        let kappa = 1.0 / (2.0f64.sqrt() * c_ah);
        let lambda = 1.0 / (2.0 * (horizon as f64).sqrt());
        let mut queue = 0.0;
        let mut levels = [alpha, alpha];
        let mut weights = [0.5, 0.5];
        let mut cum_neg = [0.0, 0.0];
        let mut scale = 0.0;
        let mut entries: Vec<(f64, f64)> = Vec::new();

        let stream = [
            (0.0, 0.0, 1.0),
            (1.0, 0.0, 0.4),
            (-0.5, 0.0, 2.0),
            (0.2, 0.0, -0.3),
        ];
        for &(x, pred, y) in &stream {
            let rec = hedge.step(&[x], pred, y).unwrap();
            let score = (y - pred).abs();
            if entries.is_empty() {
                assert!(rec.is_none());
                entries.push((x, score));
                continue;
            }
            let rec = rec.unwrap();

            // reference draw
            let u: f64 = ref_rng.gen();
            let chosen = if u * (weights[0] + weights[1]) <= weights[0] { 0 } else { 1 };
            assert_eq!(rec.expert, Some(chosen));

            // reference radii: standardize stored covariates, weigh, scan
            let n = entries.len() as f64;
            let mean = entries.iter().map(|e| e.0).sum::<f64>() / n;
            let var = entries.iter().map(|e| (e.0 - mean) * (e.0 - mean)).sum::<f64>() / n;
            let sd = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
            let mut radii = [0.0; 2];
            for (j, &h) in bandwidths.iter().enumerate() {
                let kernels: Vec<f64> = entries
                    .iter()
                    .map(|e| (-(((e.0 - mean) / sd) - ((x - mean) / sd)).abs() / h).exp())
                    .collect();
                let ksum: f64 = kernels.iter().sum();
                let mut atoms: Vec<(f64, f64)> = entries
                    .iter()
                    .zip(&kernels)
                    .map(|(e, &kv)| (e.1, kv / ksum))
                    .collect();
                atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let tau = 1.0 - levels[j];
                let mut cum = 0.0;
                let mut r = atoms.last().unwrap().0;
                for &(s, w) in &atoms {
                    cum += w;
                    if cum + 1e-12 >= tau {
                        r = s;
                        break;
                    }
                }
                radii[j] = r;
            }
            assert!((rec.interval.radius - radii[chosen]).abs() < 1e-12);

            let errs = [score > radii[0], score > radii[1]];
            let w0 = 2.0 * radii[0];
            let w1 = 2.0 * radii[1];
            let (lo, hi) = (w0.min(w1), w0.max(w1));
            let sizes = if hi > lo {
                [(w0 - lo) / (hi - lo), (w1 - lo) / (hi - lo)]
            } else {
                [0.0, 0.0]
            };

            let mix_err = weights[0] * (errs[0] as u8 as f64) + weights[1] * (errs[1] as u8 as f64);
            let g = mix_err - alpha;
            queue += kappa * g.max(0.0);
            assert!((rec.queue.unwrap() - queue).abs() < 1e-12);

            let pressure = if g > 0.0 { lambda * (lambda * queue).exp() * kappa } else { 0.0 };
            let xi = [
                kappa * sizes[0] + pressure * (errs[0] as u8 as f64),
                kappa * sizes[1] + pressure * (errs[1] as u8 as f64),
            ];
            let mixture = weights[0] * xi[0] + weights[1] * xi[1];
            let delta = if scale > 0.0 {
                let m = xi[0].min(xi[1]);
                let s = weights[0] * (-(xi[0] - m) / scale).exp()
                    + weights[1] * (-(xi[1] - m) / scale).exp();
                (mixture - m + scale * s.ln()).max(0.0)
            } else {
                let m = xi
                    .iter()
                    .zip(&weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(l, _)| *l)
                    .fold(f64::INFINITY, f64::min);
                (mixture - m).max(0.0)
            };
            scale += delta / 2.0f64.ln();
            cum_neg[0] -= xi[0];
            cum_neg[1] -= xi[1];
            if scale > 0.0 {
                let best = cum_neg[0].max(cum_neg[1]);
                let e0 = ((cum_neg[0] - best) / scale).exp();
                let e1 = ((cum_neg[1] - best) / scale).exp();
                weights = [e0 / (e0 + e1), e1 / (e0 + e1)];
            }

            for j in 0..2 {
                let err = if errs[j] { 1.0 } else { 0.0 };
                levels[j] = (levels[j] + gamma * (alpha - err)).clamp(0.0, 1.0);
            }
            entries.push((x, score));
        }

        // final aggregator state agrees with the reference path
        assert!((hedge.aggregator().queue() - queue).abs() < 1e-12);
        let got = hedge.aggregator().weights();
        assert!((got[0] - weights[0]).abs() < 1e-9);
        let lv = hedge.expert_levels();
        assert!((lv[0] - levels[0]).abs() < 1e-12);
        assert!((lv[1] - levels[1]).abs() < 1e-12);
    }
}
