//! Synthetic autoregressive benchmarks and the Monte Carlo harness.
//!
//! Each scenario streams lag-one pairs (X_t, Y_t) = (Y_{t-1}, Y_t). A
//! deliberately global linear predictor is fit by least squares on the
//! training prefix and then held fixed, so the interesting structure
//! (heteroscedasticity, regime flips) lands in the residuals the interval
//! rules must track. Within a repetition every method consumes the identical
//! series and predictions; across repetitions each rep draws from its own
//! child generator, so summaries are paired and reproducible.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{OlcpError, Result};
use crate::hedge::OlcpHedge;
use crate::localization::silverman_bandwidth;
use crate::methods::{default_gamma, Aci, DtAci, Lcp, Olcp, OnlineConformal, SplitCp, StepRecord};

/// Autoregressive test beds.
///
/// - `A`: stationary AR(1), constant noise scale.
/// - `B`: AR(1) with noise scale exp(Y_{t-1}/4) capped at 10, so interval
///   widths should track the lagged level.
/// - `C`: AR(1) whose coefficient flips from 0.8 to -0.8 halfway through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    A,
    B,
    C,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = OlcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            other => Err(OlcpError::InvalidConfig(format!(
                "unknown scenario `{other}` (valid: A, B, C)"
            ))),
        }
    }
}

/// One step of the scenario recursion; `t` is 1-based and the regime flip
/// in `C` happens after t = total_len / 2.
pub fn scenario_transition(
    scenario: Scenario,
    t: usize,
    total_len: usize,
    y_prev: f64,
    noise: f64,
) -> f64 {
    match scenario {
        Scenario::A => 0.5 * y_prev + noise,
        Scenario::B => {
            let sigma = (0.25 * y_prev).exp().min(10.0);
            0.5 * y_prev + sigma * noise
        }
        Scenario::C => {
            let phi = if t <= total_len / 2 { 0.8 } else { -0.8 };
            phi * y_prev + noise
        }
    }
}

/// Generates (X_t, Y_t) pairs for t = 1..=total_len with Y_0 = 0 and
/// standard normal innovations.
pub fn generate_scenario(
    scenario: Scenario,
    total_len: usize,
    rng: &mut impl Rng,
) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(total_len);
    let mut y_prev = 0.0;
    for t in 1..=total_len {
        let noise: f64 = rng.sample(StandardNormal);
        let y = scenario_transition(scenario, t, total_len, y_prev, noise);
        out.push((y_prev, y));
        y_prev = y;
    }
    out
}

/// Ordinary least squares fit of y on x; returns `(slope, intercept)`.
pub fn ols_fit(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(OlcpError::DegenerateDesign);
    }
    let n = pairs.len() as f64;
    let x_mean = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - x_mean).powi(2)).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(OlcpError::DegenerateDesign);
    }
    let sxy: f64 = pairs
        .iter()
        .map(|p| (p.0 - x_mean) * (p.1 - y_mean))
        .sum();
    let slope = sxy / sxx;
    Ok((slope, y_mean - slope * x_mean))
}

/// Method roster for the harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Cp,
    Lcp,
    Aci,
    DtAci,
    Olcp,
    OlcpHedge,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::Cp,
        MethodKind::Lcp,
        MethodKind::Aci,
        MethodKind::DtAci,
        MethodKind::Olcp,
        MethodKind::OlcpHedge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Cp => "cp",
            MethodKind::Lcp => "lcp",
            MethodKind::Aci => "aci",
            MethodKind::DtAci => "dtaci",
            MethodKind::Olcp => "olcp",
            MethodKind::OlcpHedge => "olcp-hedge",
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = OlcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cp" => Ok(MethodKind::Cp),
            "lcp" => Ok(MethodKind::Lcp),
            "aci" => Ok(MethodKind::Aci),
            "dtaci" => Ok(MethodKind::DtAci),
            "olcp" => Ok(MethodKind::Olcp),
            "olcp-hedge" | "olcp_hedge" => Ok(MethodKind::OlcpHedge),
            other => Err(OlcpError::InvalidConfig(format!(
                "unknown method `{other}` (valid: cp, lcp, aci, dtaci, olcp, olcp-hedge)"
            ))),
        }
    }
}

/// Shared knobs for constructing a method over a given stream shape.
#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub alpha: f64,
    pub window: usize,
    pub gamma: f64,
    /// Stream length the aggregation layer is tuned for.
    pub horizon: usize,
    /// Covariate dimension of the stream.
    pub dim: usize,
    /// Bandwidth grid for the expert pool, as multiples of the base
    /// bandwidth.
    pub bandwidth_multipliers: Vec<f64>,
}

pub const DEFAULT_BANDWIDTH_MULTIPLIERS: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

/// Builds a fresh method instance. `hedge_rng` seeds the expert sampler of
/// the aggregated method and is ignored by the others.
pub fn build_method(
    kind: MethodKind,
    cfg: &MethodConfig,
    hedge_rng: ChaCha8Rng,
) -> Result<Box<dyn OnlineConformal>> {
    let base_bandwidth = silverman_bandwidth(cfg.dim.max(1), cfg.window);
    Ok(match kind {
        MethodKind::Cp => Box::new(SplitCp::new(cfg.alpha, cfg.window, cfg.dim)?),
        MethodKind::Lcp => Box::new(Lcp::new(cfg.alpha, cfg.window, cfg.dim, base_bandwidth)?),
        MethodKind::Aci => Box::new(Aci::new(cfg.alpha, cfg.gamma, cfg.window, cfg.dim)?),
        MethodKind::DtAci => Box::new(DtAci::new(cfg.alpha, cfg.gamma, cfg.window, cfg.dim)?),
        MethodKind::Olcp => Box::new(Olcp::new(
            cfg.alpha,
            cfg.gamma,
            cfg.window,
            cfg.dim,
            base_bandwidth,
        )?),
        MethodKind::OlcpHedge => {
            let bandwidths: Vec<f64> = cfg
                .bandwidth_multipliers
                .iter()
                .map(|m| m * base_bandwidth)
                .collect();
            Box::new(OlcpHedge::new(
                cfg.alpha,
                cfg.gamma,
                cfg.window,
                cfg.dim,
                &bandwidths,
                cfg.horizon,
                hedge_rng,
            )?)
        }
    })
}

/// Monte Carlo configuration for one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Series length T (training plus test).
    pub total_len: usize,
    /// Training prefix used only to fit the point predictor.
    pub train_len: usize,
    pub window: usize,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    /// Overrides the default 1/(2 sqrt(T_test)) step size when set.
    pub gamma: Option<f64>,
    pub bandwidth_multipliers: Vec<f64>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            total_len: 1500,
            train_len: 500,
            window: 200,
            alpha: 0.1,
            reps: 200,
            seed: 0,
            gamma: None,
            bandwidth_multipliers: DEFAULT_BANDWIDTH_MULTIPLIERS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_len >= self.total_len {
            return Err(OlcpError::InvalidConfig(format!(
                "training length {} must be below the series length {}",
                self.train_len, self.total_len
            )));
        }
        if self.train_len == 0 {
            return Err(OlcpError::InvalidConfig(
                "training length must be positive".into(),
            ));
        }
        if self.reps == 0 {
            return Err(OlcpError::InvalidConfig(
                "at least one repetition required".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(OlcpError::InvalidLevel(self.alpha));
        }
        if self.window == 0 {
            return Err(OlcpError::InvalidConfig(
                "window capacity must be at least 1".into(),
            ));
        }
        if self.bandwidth_multipliers.len() < 2 {
            return Err(OlcpError::InvalidConfig(
                "bandwidth grid needs at least two entries".into(),
            ));
        }
        Ok(())
    }

    pub fn test_len(&self) -> usize {
        self.total_len - self.train_len
    }

    pub fn effective_gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(|| default_gamma(self.test_len()))
    }
}

/// Mean/dispersion pair over per-rep means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub sd: f64,
}

fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate {
            mean: f64::NAN,
            sd: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    };
    Aggregate { mean, sd }
}

/// Per-method summary across repetitions. Coverage and size are first
/// averaged within each rep over its issued intervals; the dispersion is the
/// across-rep standard deviation of those per-rep means.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: MethodKind,
    pub reps: usize,
    /// Issued intervals per rep (identical across reps by the shared skip
    /// rule).
    pub steps_per_rep: usize,
    pub coverage: Aggregate,
    pub size: Aggregate,
}

/// Full per-step history of one method in one rep.
#[derive(Debug, Clone)]
pub struct RepTrace {
    pub rep: usize,
    pub method: MethodKind,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub methods: Vec<MethodSummary>,
    /// Per-step histories, retained on request.
    pub traces: Option<Vec<RepTrace>>,
}

/// RNG stream ids: series noise on even streams, expert sampling on odd.
fn series_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * rep as u64);
    rng
}

fn hedge_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * rep as u64 + 1);
    rng
}

/// Runs the Monte Carlo benchmark for `methods` under `config`.
pub fn run_experiment(
    config: &ScenarioConfig,
    methods: &[MethodKind],
    keep_traces: bool,
) -> Result<ExperimentSummary> {
    config.validate()?;
    let gamma = config.effective_gamma();
    let method_cfg = MethodConfig {
        alpha: config.alpha,
        window: config.window,
        gamma,
        horizon: config.test_len(),
        dim: 1,
        bandwidth_multipliers: config.bandwidth_multipliers.clone(),
    };

    let mut coverage: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut size: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut steps_per_rep = 0usize;
    let mut traces = keep_traces.then(Vec::new);

    for rep in 0..config.reps {
        let series = generate_scenario(
            config.scenario,
            config.total_len,
            &mut series_rng(config.seed, rep),
        );
        let (slope, intercept) = ols_fit(&series[..config.train_len])?;
        let test = &series[config.train_len..];

        for (m, &kind) in methods.iter().enumerate() {
            let mut method = build_method(kind, &method_cfg, hedge_rng(config.seed, rep))?;
            let mut records = Vec::with_capacity(test.len());
            for &(x, y) in test {
                let prediction = slope * x + intercept;
                if let Some(record) = method.step(&[x], prediction, y)? {
                    records.push(record);
                }
            }
            steps_per_rep = records.len();
            if !records.is_empty() {
                let n = records.len() as f64;
                coverage[m]
                    .push(records.iter().filter(|r| r.covered).count() as f64 / n);
                size[m].push(records.iter().map(|r| r.interval.width()).sum::<f64>() / n);
            }
            if let Some(traces) = traces.as_mut() {
                traces.push(RepTrace {
                    rep,
                    method: kind,
                    records,
                });
            }
        }
    }

    let methods = methods
        .iter()
        .enumerate()
        .map(|(m, &kind)| MethodSummary {
            method: kind,
            reps: config.reps,
            steps_per_rep,
            coverage: aggregate(&coverage[m]),
            size: aggregate(&size[m]),
        })
        .collect();
    Ok(ExperimentSummary { methods, traces })
}

/// Trailing mean over a fixed window; entry `i` of the output covers input
/// positions `i ..= i + window - 1`, so the output has
/// `len - window + 1` entries.
pub fn rolling_metric(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "rolling window must be positive");
    if values.len() < window {
        return Vec::new();
    }
    (0..=values.len() - window)
        .map(|i| values[i..i + window].iter().sum::<f64>() / window as f64)
        .collect()
}

/// Standard error of the series mean by a circular block bootstrap: each
/// resample concatenates uniformly started wrap-around blocks to the
/// original length, and the reported value is the standard deviation of the
/// resampled means.
pub fn block_bootstrap_se(series: &[f64], block_len: usize, n_boot: usize, seed: u64) -> f64 {
    let n = series.len();
    if n == 0 || n_boot < 2 {
        return 0.0;
    }
    let block_len = block_len.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let mut sum = 0.0;
        let mut filled = 0;
        while filled < n {
            let start = rng.gen_range(0..n);
            let take = block_len.min(n - filled);
            for j in 0..take {
                sum += series[(start + j) % n];
            }
            filled += take;
        }
        means.push(sum / n as f64);
    }
    aggregate(&means).sd
}
