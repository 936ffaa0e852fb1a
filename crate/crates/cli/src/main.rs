//! `olcp`: online conformal prediction intervals from synthetic benchmarks
//! or external prediction streams, with machine-readable traces and a trace
//! verifier.

mod diagnose;
mod output;

use std::fs::{self, File};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use olcp_core::experiments::{
    block_bootstrap_se, build_method, run_experiment, MethodConfig, MethodKind, Scenario,
    ScenarioConfig, DEFAULT_BANDWIDTH_MULTIPLIERS,
};
use olcp_core::feasibility::feasibility_diagnostic;
use olcp_core::methods::{default_gamma, StepRecord};
use olcp_core::rand_chacha::rand_core::SeedableRng;
use olcp_core::rand_chacha::ChaCha8Rng;
use olcp_core::stream::ingest_stream;

use output::{fmt_sig, header_lines, opt, write_trace, Table, TraceBlock};

#[derive(Parser)]
#[command(
    name = "olcp",
    version,
    about = "Online conformal prediction intervals with localization and bandwidth aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic autoregressive benchmarks
    Simulate(SimulateArgs),
    /// Run methods online over a prediction-stream CSV
    Run(RunArgs),
    /// Verify and summarize a previously written trace file
    Diagnose(DiagnoseArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "C")]
    C,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::A => Scenario::A,
            ScenarioArg::B => Scenario::B,
            ScenarioArg::C => Scenario::C,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Cp,
    Lcp,
    Aci,
    Dtaci,
    Olcp,
    OlcpHedge,
}

impl MethodArg {
    const ALL: [MethodArg; 6] = [
        MethodArg::Cp,
        MethodArg::Lcp,
        MethodArg::Aci,
        MethodArg::Dtaci,
        MethodArg::Olcp,
        MethodArg::OlcpHedge,
    ];
}

impl From<MethodArg> for MethodKind {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cp => MethodKind::Cp,
            MethodArg::Lcp => MethodKind::Lcp,
            MethodArg::Aci => MethodKind::Aci,
            MethodArg::Dtaci => MethodKind::DtAci,
            MethodArg::Olcp => MethodKind::Olcp,
            MethodArg::OlcpHedge => MethodKind::OlcpHedge,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Data-generating scenario
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    /// Monte Carlo repetitions
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Series length including the training prefix
    #[arg(long, default_value_t = 1500)]
    total_len: usize,
    /// Training prefix used to fit the point predictor
    #[arg(long, default_value_t = 500)]
    train_len: usize,
    /// Calibration window capacity
    #[arg(long, default_value_t = 200)]
    window: usize,
    /// Target miscoverage level
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Level step size; defaults to 1/(2 sqrt(T_test))
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Methods to run
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = MethodArg::ALL)]
    methods: Vec<MethodArg>,
    /// Bandwidth grid multipliers for the expert pool
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BANDWIDTH_MULTIPLIERS)]
    bandwidths: Vec<f64>,
    /// Write one per-step trace file per repetition
    #[arg(long)]
    trace: bool,
    /// Trailing window for the rolling trace columns
    #[arg(long, default_value_t = 100)]
    roll_window: usize,
    /// Output directory
    #[arg(long, default_value = "olcp-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Stream CSV with columns t, y, y_hat and optional x1..xd
    input: PathBuf,
    #[arg(long, default_value_t = 200)]
    window: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Level step size; defaults to 1/(2 sqrt(T - 1))
    #[arg(long)]
    gamma: Option<f64>,
    /// Seed for expert sampling and the bootstrap
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = MethodArg::ALL)]
    methods: Vec<MethodArg>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BANDWIDTH_MULTIPLIERS)]
    bandwidths: Vec<f64>,
    /// Write the per-step trace file
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value_t = 100)]
    roll_window: usize,
    /// Block length for the bootstrap standard errors
    #[arg(long, default_value_t = 20)]
    block: usize,
    /// Bootstrap resamples
    #[arg(long, default_value_t = 1000)]
    boot: usize,
    #[arg(long, default_value = "olcp-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Trace file written by `simulate --trace` or `run --trace`
    trace: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Run(args) => cmd_run(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    }
}

fn to_kinds(methods: &[MethodArg]) -> Result<Vec<MethodKind>> {
    if methods.is_empty() {
        bail!("no methods selected");
    }
    Ok(methods.iter().map(|&m| m.into()).collect())
}

fn join_names(methods: &[MethodKind]) -> String {
    methods
        .iter()
        .map(|m| m.name())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let methods = to_kinds(&args.methods)?;
    let mut cfg = ScenarioConfig::new(args.scenario.into());
    cfg.total_len = args.total_len;
    cfg.train_len = args.train_len;
    cfg.window = args.window;
    cfg.alpha = args.alpha;
    cfg.reps = args.reps;
    cfg.seed = args.seed;
    cfg.gamma = args.gamma;
    cfg.bandwidth_multipliers = args.bandwidths.clone();

    let summary = run_experiment(&cfg, &methods, args.trace)?;

    let config_line = format!(
        "command=simulate scenario={} total_len={} train_len={} window={} alpha={} gamma={} \
         seed={} reps={} methods={} bandwidths={} roll_window={}",
        cfg.scenario.name(),
        cfg.total_len,
        cfg.train_len,
        cfg.window,
        cfg.alpha,
        cfg.effective_gamma(),
        cfg.seed,
        cfg.reps,
        join_names(&methods),
        join_f64(&cfg.bandwidth_multipliers),
        args.roll_window
    );
    let headers = header_lines(&config_line);
    fs::create_dir_all(&args.out)
        .with_context(|| format!("create output directory {}", args.out.display()))?;

    let table = Table {
        columns: vec![
            "method",
            "reps",
            "steps",
            "coverage_mean",
            "coverage_sd",
            "size_mean",
            "size_sd",
        ],
        rows: summary
            .methods
            .iter()
            .map(|m| {
                vec![
                    m.method.name().to_string(),
                    m.reps.to_string(),
                    m.steps_per_rep.to_string(),
                    fmt_sig(m.coverage.mean, 6),
                    fmt_sig(m.coverage.sd, 6),
                    fmt_sig(m.size.mean, 6),
                    fmt_sig(m.size.sd, 6),
                ]
            })
            .collect(),
    };
    table.write_csv(&args.out.join("summary.csv"), &headers)?;
    table.write_text(&args.out.join("summary.txt"), &headers)?;

    if let Some(traces) = &summary.traces {
        let experts = methods
            .contains(&MethodKind::OlcpHedge)
            .then_some(cfg.bandwidth_multipliers.len());
        for chunk in traces.chunks(methods.len()) {
            let blocks: Vec<TraceBlock> = chunk
                .iter()
                .map(|t| TraceBlock {
                    method: t.method,
                    records: &t.records,
                })
                .collect();
            let path = args.out.join(format!("trace_rep{:03}.csv", chunk[0].rep));
            write_trace(&path, &headers, &blocks, experts, args.roll_window)?;
        }
    }

    print!("{}", table.render_text());
    println!("summary written to {}", args.out.join("summary.csv").display());
    if args.trace {
        println!("traces written to {}", args.out.display());
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let methods = to_kinds(&args.methods)?;
    let file =
        File::open(&args.input).with_context(|| format!("open {}", args.input.display()))?;
    let (columns, records) = ingest_stream(file)?;
    let t_test = records.len().saturating_sub(1).max(1);
    let gamma = args.gamma.unwrap_or_else(|| default_gamma(t_test));
    let method_cfg = MethodConfig {
        alpha: args.alpha,
        window: args.window,
        gamma,
        horizon: t_test,
        dim: columns.dim(),
        bandwidth_multipliers: args.bandwidths.clone(),
    };

    let mut histories: Vec<(MethodKind, Vec<StepRecord>)> = Vec::new();
    for &kind in &methods {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(1);
        let mut method = build_method(kind, &method_cfg, rng)?;
        let mut recs = Vec::new();
        for r in &records {
            if let Some(rec) = method.step(&r.covariates, r.prediction, r.outcome)? {
                recs.push(rec);
            }
        }
        histories.push((kind, recs));
    }

    let config_line = format!(
        "command=run input={} dim={} window={} alpha={} gamma={} seed={} methods={} \
         bandwidths={} roll_window={} block={} boot={}",
        args.input.display(),
        columns.dim(),
        args.window,
        args.alpha,
        gamma,
        args.seed,
        join_names(&methods),
        join_f64(&args.bandwidths),
        args.roll_window,
        args.block,
        args.boot
    );
    let headers = header_lines(&config_line);
    fs::create_dir_all(&args.out)
        .with_context(|| format!("create output directory {}", args.out.display()))?;

    let mut rows = Vec::new();
    for (idx, (kind, recs)) in histories.iter().enumerate() {
        let n = recs.len();
        if n == 0 {
            let mut row = vec![kind.name().to_string(), "0".to_string()];
            row.extend(std::iter::repeat_n(String::new(), 7));
            rows.push(row);
            continue;
        }
        let covered: Vec<f64> = recs.iter().map(|r| r.covered as u8 as f64).collect();
        let sizes: Vec<f64> = recs.iter().map(|r| r.interval.width()).collect();
        let coverage = covered.iter().sum::<f64>() / n as f64;
        let size = sizes.iter().sum::<f64>() / n as f64;
        let cov_se =
            block_bootstrap_se(&covered, args.block, args.boot, args.seed ^ (idx as u64));
        let size_se = block_bootstrap_se(
            &sizes,
            args.block,
            args.boot,
            args.seed ^ (1000 + idx as u64),
        );
        let adaptive = matches!(
            kind,
            MethodKind::Aci | MethodKind::Olcp | MethodKind::OlcpHedge
        );
        let (lower_frac, upper_frac) = if adaptive {
            let scale = n as f64 * gamma;
            let l: f64 = recs.iter().map(|r| r.lower_correction).sum();
            let u: f64 = recs.iter().map(|r| r.upper_correction).sum();
            (Some(fmt_sig(l / scale, 6)), Some(fmt_sig(u / scale, 6)))
        } else {
            (None, None)
        };
        let rho = (*kind == MethodKind::OlcpHedge).then(|| {
            let errs: Vec<Vec<bool>> = recs
                .iter()
                .filter_map(|r| r.expert_errs.clone())
                .collect();
            fmt_sig(feasibility_diagnostic(&errs, args.alpha).rho, 6)
        });
        rows.push(vec![
            kind.name().to_string(),
            n.to_string(),
            fmt_sig(coverage, 6),
            fmt_sig(cov_se, 6),
            fmt_sig(size, 6),
            fmt_sig(size_se, 6),
            opt(lower_frac),
            opt(upper_frac),
            opt(rho),
        ]);
    }

    let table = Table {
        columns: vec![
            "method",
            "steps",
            "coverage",
            "coverage_se",
            "size",
            "size_se",
            "lower_frac",
            "upper_frac",
            "rho",
        ],
        rows,
    };
    table.write_csv(&args.out.join("summary.csv"), &headers)?;
    table.write_text(&args.out.join("summary.txt"), &headers)?;

    if args.trace {
        let experts = methods
            .contains(&MethodKind::OlcpHedge)
            .then_some(args.bandwidths.len());
        let blocks: Vec<TraceBlock> = histories
            .iter()
            .map(|(kind, recs)| TraceBlock {
                method: *kind,
                records: recs,
            })
            .collect();
        write_trace(
            &args.out.join("trace.csv"),
            &headers,
            &blocks,
            experts,
            args.roll_window,
        )?;
    }

    print!("{}", table.render_text());
    println!("summary written to {}", args.out.join("summary.csv").display());
    if args.trace {
        println!("trace written to {}", args.out.join("trace.csv").display());
    }
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let (report, pass) = diagnose::diagnose(&args.trace)?;
    print!("{report}");
    if !pass {
        bail!("diagnostics failed");
    }
    Ok(())
}
