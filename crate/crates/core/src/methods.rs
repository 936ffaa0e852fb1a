//! Online conformal interval rules over a rolling calibration window.
//!
//! All methods share the same streaming protocol: at each step they see a
//! covariate, a point prediction, and (after committing to an interval) the
//! realized outcome. The absolute residual becomes the conformity score and
//! is appended to the window only after the interval has been issued and
//! scored, so no step ever calibrates on its own outcome. A step with an
//! empty window issues nothing and only seeds the window; every method
//! applies the same skip rule, which keeps comparisons across methods paired
//! on identical streams.
//!
//! Rules:
//! - [`SplitCp`]: fixed level, rank-corrected rolling quantile.
//! - [`Lcp`]: fixed level, covariate-weighted rolling quantile.
//! - [`Aci`]: adaptive level via the projected update of Gibbs & Candes
//!   (2021), rank-corrected rolling quantile.
//! - [`DtAci`]: exponential-weights mixture of projected-update experts over
//!   a grid of step sizes.
//! - [`Olcp`]: adaptive level driving the covariate-weighted quantile; the
//!   localized counterpart of [`Aci`].

use crate::error::{OlcpError, Result};
use crate::localization::{CalibrationWindow, Localizer};
use crate::scores::{pinball_loss, split_conformal_radius};

/// Symmetric prediction interval `center +- radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub center: f64,
    pub radius: f64,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.radius
    }

    pub fn upper(&self) -> f64 {
        self.center + self.radius
    }

    pub fn width(&self) -> f64 {
        2.0 * self.radius
    }

    /// Closed-interval membership; coverage is `score <= radius`.
    pub fn covers(&self, outcome: f64) -> bool {
        (outcome - self.center).abs() <= self.radius
    }
}

/// Everything a method reports about one issued interval.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based position in the driven stream.
    pub t: usize,
    pub interval: PredictionInterval,
    pub covered: bool,
    /// Working miscoverage level used for this interval.
    pub level: f64,
    /// Mass clipped at the lower boundary of [0, 1] by this step's update.
    pub lower_correction: f64,
    /// Mass clipped at the upper boundary.
    pub upper_correction: f64,
    /// Virtual queue value after this step (aggregated methods only).
    pub queue: Option<f64>,
    /// Index of the expert whose interval was issued (aggregated methods).
    pub expert: Option<usize>,
    /// Per-expert miss indicators for this step (aggregated methods).
    pub expert_errs: Option<Vec<bool>>,
}

impl StepRecord {
    fn plain(t: usize, interval: PredictionInterval, covered: bool, level: f64) -> Self {
        Self {
            t,
            interval,
            covered,
            level,
            lower_correction: 0.0,
            upper_correction: 0.0,
            queue: None,
            expert: None,
            expert_errs: None,
        }
    }
}

/// Default step size for the adaptive level recursions on a test stream of
/// length `t_test`: 1 / (2 sqrt(t_test)).
pub fn default_gamma(t_test: usize) -> f64 {
    assert!(t_test >= 1, "step size needs a positive horizon");
    1.0 / (2.0 * (t_test as f64).sqrt())
}

/// Projected adaptive-level recursion.
///
/// After each miss indicator the tentative level is
/// `z = level + gamma * (target - err)`; the new level is `z` clipped to
/// [0, 1], and the clipped mass is reported as the pair `(lower, upper)` of
/// boundary corrections `((-z)_+, (z - 1)_+)`.
#[derive(Debug, Clone)]
pub struct AciState {
    target: f64,
    gamma: f64,
    level: f64,
}

impl AciState {
    pub fn new(target: f64, gamma: f64) -> Result<Self> {
        if !(target > 0.0 && target < 1.0) {
            return Err(OlcpError::InvalidLevel(target));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(OlcpError::InvalidStepSize(gamma));
        }
        Ok(Self {
            target,
            gamma,
            level: target,
        })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Applies one update and returns the boundary corrections `(L, U)`.
    pub fn update(&mut self, miss: bool) -> (f64, f64) {
        let err = if miss { 1.0 } else { 0.0 };
        let z = self.level + self.gamma * (self.target - err);
        let lower = (-z).max(0.0);
        let upper = (z - 1.0).max(0.0);
        self.level = z.clamp(0.0, 1.0);
        (lower, upper)
    }
}

/// Running account of an adaptive-level trajectory.
///
/// Tracks the telescoped form of the update: over any prefix,
/// sum(err_t - target) = (level_1 - level_{T+1}) / gamma
///                      + (1 / gamma) * sum(L_t - U_t),
/// and exposes the residual of that identity together with the implied
/// pathwise coverage-deviation bound (1 + sum L + sum U) / (T * gamma).
#[derive(Debug, Clone)]
pub struct BoundaryLedger {
    target: f64,
    gamma: f64,
    steps: u64,
    misses: u64,
    cum_lower: f64,
    cum_upper: f64,
    net_correction: f64,
    level_first: f64,
    level_next: f64,
    max_residual: f64,
}

impl BoundaryLedger {
    pub fn new(target: f64, gamma: f64, initial_level: f64) -> Self {
        Self {
            target,
            gamma,
            steps: 0,
            misses: 0,
            cum_lower: 0.0,
            cum_upper: 0.0,
            net_correction: 0.0,
            level_first: initial_level,
            level_next: initial_level,
            max_residual: 0.0,
        }
    }

    pub fn record(&mut self, miss: bool, lower: f64, upper: f64, level_after: f64) {
        self.steps += 1;
        if miss {
            self.misses += 1;
        }
        self.cum_lower += lower;
        self.cum_upper += upper;
        self.net_correction += lower - upper;
        self.level_next = level_after;
        let residual = self.identity_residual().abs();
        if residual > self.max_residual {
            self.max_residual = residual;
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn cum_lower(&self) -> f64 {
        self.cum_lower
    }

    pub fn cum_upper(&self) -> f64 {
        self.cum_upper
    }

    /// sum(err_t - target) minus its telescoped form; zero up to float noise.
    pub fn identity_residual(&self) -> f64 {
        let lhs = self.misses as f64 - self.steps as f64 * self.target;
        let rhs =
            (self.level_first - self.level_next) / self.gamma + self.net_correction / self.gamma;
        lhs - rhs
    }

    /// Largest absolute identity residual seen at any prefix.
    pub fn max_identity_residual(&self) -> f64 {
        self.max_residual
    }

    /// |empirical miss rate - target|.
    pub fn coverage_deviation(&self) -> f64 {
        if self.steps == 0 {
            return 0.0;
        }
        (self.misses as f64 / self.steps as f64 - self.target).abs()
    }

    /// Pathwise bound on `coverage_deviation`.
    pub fn coverage_deviation_bound(&self) -> f64 {
        if self.steps == 0 {
            return f64::INFINITY;
        }
        (1.0 + self.cum_lower + self.cum_upper) / (self.steps as f64 * self.gamma)
    }

    /// Normalized boundary diagnostics `(sum L, sum U) / (T * gamma)`.
    pub fn normalized_corrections(&self) -> (f64, f64) {
        if self.steps == 0 {
            return (0.0, 0.0);
        }
        let scale = self.steps as f64 * self.gamma;
        (self.cum_lower / scale, self.cum_upper / scale)
    }
}

/// Streaming protocol shared by every interval rule.
pub trait OnlineConformal {
    fn name(&self) -> &'static str;

    /// Processes one stream step. Returns `Ok(None)` while the calibration
    /// window is still empty (the observation is absorbed, nothing issued).
    fn step(&mut self, covariate: &[f64], prediction: f64, outcome: f64)
        -> Result<Option<StepRecord>>;
}

/// Split conformal at a fixed level over the rolling window.
pub struct SplitCp {
    window: CalibrationWindow,
    alpha: f64,
    t: usize,
}

impl SplitCp {
    pub fn new(alpha: f64, capacity: usize, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(OlcpError::InvalidLevel(alpha));
        }
        Ok(Self {
            window: CalibrationWindow::new(capacity, dim)?,
            alpha,
            t: 0,
        })
    }
}

impl OnlineConformal for SplitCp {
    fn name(&self) -> &'static str {
        "cp"
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
        let radius = split_conformal_radius(&self.window.scores(), self.alpha)?;
        let interval = PredictionInterval {
            center: prediction,
            radius,
        };
        let covered = score <= radius;
        self.window.push(covariate, score)?;
        Ok(Some(StepRecord::plain(self.t, interval, covered, self.alpha)))
    }
}

/// Localized conformal at a fixed level: the interval radius is the
/// (1 - alpha) weighted quantile of the window seen from the query point.
pub struct Lcp {
    window: CalibrationWindow,
    localizer: Localizer,
    alpha: f64,
    t: usize,
}

impl Lcp {
    pub fn new(alpha: f64, capacity: usize, dim: usize, bandwidth: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(OlcpError::InvalidLevel(alpha));
        }
        Ok(Self {
            window: CalibrationWindow::new(capacity, dim)?,
            localizer: Localizer::new(bandwidth)?,
            alpha,
            t: 0,
        })
    }
}

impl OnlineConformal for Lcp {
    fn name(&self) -> &'static str {
        "lcp"
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
        let dist = self.window.localized_distribution(covariate, &self.localizer)?;
        let radius = dist.lower_quantile(1.0 - self.alpha)?;
        let interval = PredictionInterval {
            center: prediction,
            radius,
        };
        let covered = score <= radius;
        self.window.push(covariate, score)?;
        Ok(Some(StepRecord::plain(self.t, interval, covered, self.alpha)))
    }
}

/// Adaptive conformal inference: split-style radius at an adaptive level.
pub struct Aci {
    window: CalibrationWindow,
    state: AciState,
    ledger: BoundaryLedger,
    t: usize,
}

impl Aci {
    pub fn new(alpha: f64, gamma: f64, capacity: usize, dim: usize) -> Result<Self> {
        let state = AciState::new(alpha, gamma)?;
        let ledger = BoundaryLedger::new(alpha, gamma, state.level());
        Ok(Self {
            window: CalibrationWindow::new(capacity, dim)?,
            state,
            ledger,
            t: 0,
        })
    }

    pub fn ledger(&self) -> &BoundaryLedger {
        &self.ledger
    }
}

impl OnlineConformal for Aci {
    fn name(&self) -> &'static str {
        "aci"
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
        let level = self.state.level();
        let radius = split_conformal_radius(&self.window.scores(), level)?;
        let interval = PredictionInterval {
            center: prediction,
            radius,
        };
        let covered = score <= radius;
        let (lower, upper) = self.state.update(!covered);
        self.ledger
            .record(!covered, lower, upper, self.state.level());
        self.window.push(covariate, score)?;
        let mut record = StepRecord::plain(self.t, interval, covered, level);
        record.lower_correction = lower;
        record.upper_correction = upper;
        Ok(Some(record))
    }
}

/// Adaptive level at a localized quantile: the level follows the projected
/// recursion while the radius comes from the covariate-weighted window
/// distribution, so the width responds to where the query sits.
pub struct Olcp {
    window: CalibrationWindow,
    localizer: Localizer,
    state: AciState,
    ledger: BoundaryLedger,
    t: usize,
}

impl Olcp {
    pub fn new(
        alpha: f64,
        gamma: f64,
        capacity: usize,
        dim: usize,
        bandwidth: f64,
    ) -> Result<Self> {
        let state = AciState::new(alpha, gamma)?;
        let ledger = BoundaryLedger::new(alpha, gamma, state.level());
        Ok(Self {
            window: CalibrationWindow::new(capacity, dim)?,
            localizer: Localizer::new(bandwidth)?,
            state,
            ledger,
            t: 0,
        })
    }

    pub fn ledger(&self) -> &BoundaryLedger {
        &self.ledger
    }
}

impl OnlineConformal for Olcp {
    fn name(&self) -> &'static str {
        "olcp"
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
        let level = self.state.level();
        let dist = self.window.localized_distribution(covariate, &self.localizer)?;
        let radius = dist.lower_quantile(1.0 - level)?;
        let interval = PredictionInterval {
            center: prediction,
            radius,
        };
        let covered = score <= radius;
        let (lower, upper) = self.state.update(!covered);
        self.ledger
            .record(!covered, lower, upper, self.state.level());
        self.window.push(covariate, score)?;
        let mut record = StepRecord::plain(self.t, interval, covered, level);
        record.lower_correction = lower;
        record.upper_correction = upper;
        Ok(Some(record))
    }
}

/// Number of recent rounds the step-size aggregation is tuned for.
const DTACI_INTERVAL: usize = 500;
/// Step-size grid as multiples of the base gamma.
const DTACI_MULTIPLIERS: [f64; 6] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5];

/// Learning rate of the exponential-weights layer for a target interval
/// length and expert count.
pub fn dtaci_eta(alpha: f64, interval: usize, num_experts: usize) -> f64 {
    let i = interval as f64;
    let k = num_experts as f64;
    let curvature = ((1.0 - alpha).powi(2) * alpha.powi(3)
        + alpha.powi(2) * (1.0 - alpha).powi(3))
        / 3.0;
    (3.0 / i).sqrt() * (((i * k).ln() + 2.0) / curvature).sqrt()
}

/// Multiplicative exponential-weight update followed by fixed-share mixing
/// with floor `sigma` per expert; leaves the weights normalized.
pub(crate) fn reweight_experts(weights: &mut [f64], losses: &[f64], eta: f64, sigma: f64) {
    let k = weights.len();
    for (w, &loss) in weights.iter_mut().zip(losses) {
        *w *= (-eta * loss).exp();
    }
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        for w in weights.iter_mut() {
            *w = (1.0 - sigma * k as f64) * (*w / sum) + sigma;
        }
    } else {
        for w in weights.iter_mut() {
            *w = 1.0 / k as f64;
        }
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// Exponential-weights mixture of projected-update experts, one per step
/// size in a fixed grid around the base gamma. The issued radius is the
/// rank-corrected rolling quantile at the mixture level; feedback is the
/// pinball loss of each expert's level against the realized score rank.
pub struct DtAci {
    window: CalibrationWindow,
    target: f64,
    levels: Vec<f64>,
    weights: Vec<f64>,
    gammas: Vec<f64>,
    eta: f64,
    sigma: f64,
    t: usize,
}

impl DtAci {
    pub fn new(alpha: f64, gamma: f64, capacity: usize, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(OlcpError::InvalidLevel(alpha));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(OlcpError::InvalidStepSize(gamma));
        }
        let gammas: Vec<f64> = DTACI_MULTIPLIERS.iter().map(|m| m * gamma).collect();
        let k = gammas.len();
        Ok(Self {
            window: CalibrationWindow::new(capacity, dim)?,
            target: alpha,
            levels: vec![alpha; k],
            weights: vec![1.0 / k as f64; k],
            gammas,
            eta: dtaci_eta(alpha, DTACI_INTERVAL, k),
            sigma: 1.0 / (2.0 * DTACI_INTERVAL as f64),
            t: 0,
        })
    }

    pub fn mixture_level(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.levels)
            .map(|(w, l)| w * l)
            .sum()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

impl OnlineConformal for DtAci {
    fn name(&self) -> &'static str {
        "dtaci"
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
        let scores = self.window.scores();
        let mixture = self.mixture_level();
        let radius = split_conformal_radius(&scores, mixture)?;
        let interval = PredictionInterval {
            center: prediction,
            radius,
        };
        let covered = score <= radius;

        // Rank of the realized score in the window: the fraction of stored
        // scores at least as large. Serves both the pinball feedback and the
        // per-expert miss indicators.
        let beta = scores.iter().filter(|&&s| s >= score).count() as f64 / scores.len() as f64;
        let losses: Vec<f64> = self
            .levels
            .iter()
            .map(|&level| pinball_loss(beta, level, self.target))
            .collect();
        reweight_experts(&mut self.weights, &losses, self.eta, self.sigma);
        for (level, &gamma) in self.levels.iter_mut().zip(&self.gammas) {
            let err = if beta < *level { 1.0 } else { 0.0 };
            *level = (*level + gamma * (self.target - err)).clamp(0.0, 1.0);
        }
        self.window.push(covariate, score)?;
        Ok(Some(StepRecord::plain(self.t, interval, covered, mixture)))
    }
}
