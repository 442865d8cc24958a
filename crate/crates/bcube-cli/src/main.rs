//! `bcube`: experiment runner and calculator front end.
//!
//! Four subcommands: `simulate` runs the experiment described by a config
//! file and writes metric files, `analyze` evaluates the closed-form
//! guarantees for a design point, `params` recommends protocol parameters
//! for a target deployment, and `sweep` repeats a config across many seeds
//! and checks the agreement properties on every run.
//!
//! Exit codes: 0 success, 2 config problems (parse error, impossible
//! values, infeasible schedule), 3 a recorded invariant violation
//! (agreement breach, send-budget excess, accepted forgery), 1 anything
//! else. Every output record carries the config digest, and repeat runs of
//! the same config are byte-identical.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bcube::analysis::{
    baseline_ttb, crypto_op_bounds, min_committee, per_round_send_bound, safety_bound,
    throughput_estimate, AnalysisError, CryptoOpBounds, SafetyReport, SendBound,
    ThroughputEstimate, BASELINES,
};
use bcube::chain::{run_chain, ChainError};
use bcube::config::{AnalysisSection, ConfigError, ExperimentConfig, RunMode};
use bcube::crypto::{ceil_log2, Digest};
use bcube::metrics::{
    chain_bundle, chain_summary, invocation_bundle, invocation_summary, write_bundle, RunMeta,
};
use bcube::sim::run_experiment;

#[derive(Parser)]
#[command(name = "bcube", version, about = "broadcast protocol simulator and calculators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment in a config file and write metrics
    Simulate(SimulateArgs),
    /// Evaluate the analytic guarantees of a design point
    Analyze(AnalyzeArgs),
    /// Recommend protocol parameters for a deployment target
    Params(ParamsArgs),
    /// Re-run one config across many seeds and check agreement every time
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config file
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's adversary strategy
    #[arg(long)]
    strategy: Option<String>,
    /// Directory for metric files
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Config file whose [analysis] section sets the design point;
    /// defaults to the reference deployment when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report under this directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    /// Adversarial stake fraction
    #[arg(long)]
    f: f64,
    /// Target failure probability, as the exponent k in epsilon = 2^-k
    #[arg(long, default_value_t = 30)]
    epsilon_exp: u32,
    /// Per-epoch cap on PoW solutions
    #[arg(long, default_value_t = 1000)]
    lambda: u64,
    /// Challenge and candidate slots per epoch
    #[arg(long)]
    tau: u32,
    /// Pin the fragment count instead of the default s = 2dm
    #[arg(long)]
    s: Option<u32>,
    /// Config file providing the bandwidth model; reference values otherwise
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fraction of node bandwidth the protocol may claim
    #[arg(long)]
    budget_factor: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config file
    #[arg(long)]
    config: PathBuf,
    /// Number of consecutive seeds to run
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First seed; the config's seed when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's adversary strategy
    #[arg(long)]
    strategy: Option<String>,
    /// Also write the per-seed records under this directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

enum CliError {
    /// Exit 2: the inputs cannot be run.
    Config(String),
    /// Exit 3: the run finished but recorded an invariant violation.
    Violation(String),
    /// Exit 1: everything else.
    Other(String),
}

impl CliError {
    fn exit(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Violation(_) => ExitCode::from(3),
            CliError::Other(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Violation(m) | CliError::Other(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        match e {
            // everything the chain refuses to start on is a config problem
            ChainError::Schedule(_)
            | ChainError::ObjectTooSmall(_)
            | ChainError::MultiplierTooLarge(_)
            | ChainError::NoCoins => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<bcube::sim::SimError> for CliError {
    fn from(e: bcube::sim::SimError) -> Self {
        match e {
            bcube::sim::SimError::UnknownStrategy(_) | bcube::sim::SimError::Setup(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::BadParams(_) | AnalysisError::UnknownProtocol(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Params(a) => cmd_params(a),
        Cmd::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bcube: {}", e.message());
            e.exit()
        }
    }
}

/// Writes to stdout, shrugging off a closed pipe (`bcube analyze | head`
/// must not panic); later writes simply keep failing silently.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_doc<T: Serialize>(value: &T) {
    emit(&serde_json::to_string_pretty(value).expect("reports serialize"));
    emit("\n");
}

fn load_config(path: &PathBuf, seed: Option<u64>, strategy: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(strategy) = strategy {
        cfg.adversary.strategy = strategy.to_string();
        cfg.validate()?;
    }
    Ok(cfg)
}

fn file_stem(path: &PathBuf) -> String {
    path.file_stem().map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config, args.seed, args.strategy.as_deref())?;
    let meta = RunMeta { config: cfg.digest(), seed: cfg.seed };
    let stem = format!("{}-seed{}", file_stem(&args.config), cfg.seed);
    let (bundle, violation) = match cfg.mode {
        RunMode::Chain => {
            let report = run_chain(&cfg.to_chain_config()?)?;
            let s = chain_summary(&meta, &report);
            let violation = if s.safety_violations > 0 {
                Some(format!("{} agreement breaches in the honest prefix", s.safety_violations))
            } else if s.budget_violations > 0 {
                Some(format!("{} send-budget violations", s.budget_violations))
            } else if s.forgery_violations > 0 {
                Some(format!("{} forged messages", s.forgery_violations))
            } else {
                None
            };
            (chain_bundle(&meta, &report), violation)
        }
        RunMode::Invocation => {
            let (topo, committee, report) = run_experiment(&cfg.to_experiment())?;
            let honest_committee =
                committee.weights.keys().any(|u| topo.is_honest(*u));
            let violation = if honest_committee && !report.outcomes_agree() {
                Some("honest nodes finalized different outcomes".to_string())
            } else if report.budget_violations > 0 {
                Some(format!("{} send-budget violations", report.budget_violations))
            } else if report.forgery_violations > 0 {
                Some(format!("{} forged messages", report.forgery_violations))
            } else {
                None
            };
            (invocation_bundle(&meta, &report), violation)
        }
    };
    write_bundle(&args.out_dir, &stem, &bundle)?;
    emit(&bundle.summary);
    match violation {
        Some(v) => Err(CliError::Violation(v)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct BaselineRow {
    protocol: String,
    ttb: f64,
}

#[derive(Serialize)]
struct AnalyzeReport {
    config: Digest,
    safety: SafetyReport,
    min_committee: u32,
    send_bound: SendBound,
    throughput: ThroughputEstimate,
    crypto_ops: CryptoOpBounds,
    overlaybb_ttb: f64,
    baselines: Vec<BaselineRow>,
}

fn analysis_section(path: Option<&PathBuf>) -> Result<(AnalysisSection, Digest), CliError> {
    match path {
        Some(p) => {
            let cfg = ExperimentConfig::load(p)?;
            Ok((cfg.analysis.clone(), cfg.digest()))
        }
        None => {
            let cfg = ExperimentConfig::parse(bcube::config::DESK_SMALL, "builtin")?;
            Ok((AnalysisSection::default(), cfg.digest()))
        }
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let (section, config) = analysis_section(args.config.as_ref())?;
    let safety = safety_bound(&section.safety())?;
    let m = min_committee(section.f, section.tau, section.lambda, section.epsilon())?;
    let bw = section.bandwidth_params();
    let send = per_round_send_bound(&bw)?;
    let throughput = throughput_estimate(&bw)?;
    let ops = crypto_op_bounds(bw.gamma, bw.delta, bw.w, ceil_log2(bw.s));
    let baseline_params = bcube::analysis::BaselineParams {
        n: section.baseline_n,
        f: section.f,
        w: bw.w,
        d: bw.d,
        m: bw.m,
    };
    let baselines = BASELINES
        .iter()
        .map(|b| {
            Ok(BaselineRow { protocol: b.name().to_string(), ttb: baseline_ttb(*b, &baseline_params)? })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = AnalyzeReport {
        config,
        safety,
        min_committee: m,
        send_bound: send,
        overlaybb_ttb: throughput.ttb_ratio,
        throughput,
        crypto_ops: ops,
        baselines,
    };
    print_doc(&report);
    if let Some(dir) = args.out_dir {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(
            dir.join("analyze.summary.json"),
            serde_json::to_string_pretty(&report).expect("reports serialize"),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ParamsReport {
    f: f64,
    epsilon_exp: u32,
    lambda: u64,
    tau: u32,
    /// Smallest committee reaching the safety target.
    m: u32,
    safety_bound: f64,
    /// Fragment count: pinned by the caller or the throughput-optimal 2dm.
    s: u32,
    d: u32,
    delta_seconds: f64,
    budget_factor: f64,
    /// Largest object that fits the budgeted per-round send bound.
    object_bits: u64,
    throughput_bits_per_sec: f64,
    slot_period_rounds: u64,
    slot_period_seconds: f64,
    /// Invocations in flight when one starts every slot period.
    gamma: u32,
    invocation_rounds: u64,
}

fn cmd_params(args: ParamsArgs) -> Result<(), CliError> {
    let (section, _) = analysis_section(args.config.as_ref())?;
    let epsilon = 0.5f64.powi(args.epsilon_exp as i32);
    let m = min_committee(args.f, args.tau, args.lambda, epsilon)?;
    let bound = safety_bound(&bcube::analysis::SafetyParams::new(
        args.f,
        m,
        args.tau,
        args.lambda,
        epsilon,
    ))?
    .bound;

    let mut bw = section.bandwidth_params();
    bw.m = m;
    bw.s = args.s.unwrap_or(2 * bw.d * m);
    bw.bandwidth *= args.budget_factor.unwrap_or(section.budget_factor);
    // gamma barely moves the estimate; solve once at the section's value,
    // derive the slot period, then restate at the implied pipelining depth
    let first = throughput_estimate(&bw)?;
    let rounds = 2 * bw.d as u64 * m as u64 + bw.s as u64;
    let period = |t: &bcube::analysis::ThroughputEstimate| -> u64 {
        (t.l0_bits / (t.throughput * bw.delta)).ceil().max(1.0) as u64
    };
    bw.gamma = rounds.div_ceil(period(&first)).max(1) as u32;
    let t = throughput_estimate(&bw)?;
    let slot_period_rounds = period(&t);
    let report = ParamsReport {
        f: args.f,
        epsilon_exp: args.epsilon_exp,
        lambda: args.lambda,
        tau: args.tau,
        m,
        safety_bound: bound,
        s: bw.s,
        d: bw.d,
        delta_seconds: bw.delta,
        budget_factor: args.budget_factor.unwrap_or(section.budget_factor),
        object_bits: t.l0_bits as u64,
        throughput_bits_per_sec: t.throughput,
        slot_period_rounds,
        slot_period_seconds: slot_period_rounds as f64 * bw.delta,
        gamma: rounds.div_ceil(slot_period_rounds) as u32,
        invocation_rounds: rounds,
    };
    print_doc(&report);
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum SweepRecord {
    SweepRun {
        config: Digest,
        seed: u64,
        agreed: bool,
        /// Agreement is only claimed when the committee has an honest coin
        /// (invocation mode) or inside the honest prefix (chain mode).
        checked: bool,
        confirmed_slots: u64,
        rounds_run: u64,
        peak_node_round_bits: u64,
        violations: u32,
    },
    SweepSummary {
        config: Digest,
        seeds: u64,
        checked_runs: u64,
        violations: u32,
    },
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let base_cfg = load_config(&args.config, args.seed, args.strategy.as_deref())?;
    if args.seeds == 0 {
        return Err(CliError::Config("sweep needs at least one seed".into()));
    }
    let mut out_lines = String::new();
    // records stream as seeds finish; the file copy accumulates alongside
    let mut record = |rec: &SweepRecord| {
        let line = serde_json::to_string(rec).expect("records serialize");
        emit(&line);
        emit("\n");
        out_lines.push_str(&line);
        out_lines.push('\n');
    };
    let mut violations = 0u32;
    let mut checked_runs = 0u64;
    for seed in base_cfg.seed..base_cfg.seed + args.seeds {
        let cfg = base_cfg.with_seed(seed);
        let meta = RunMeta { config: cfg.digest(), seed };
        let rec = match cfg.mode {
            RunMode::Chain => {
                let report = run_chain(&cfg.to_chain_config()?)?;
                let s = chain_summary(&meta, &report);
                let bad = s.safety_violations + s.budget_violations + s.forgery_violations;
                violations += bad;
                checked_runs += 1;
                SweepRecord::SweepRun {
                    config: meta.config,
                    seed,
                    agreed: s.safety_violations == 0,
                    checked: true,
                    confirmed_slots: s.confirmed_slots,
                    rounds_run: s.rounds_run,
                    peak_node_round_bits: s.peak_node_round_bits,
                    violations: bad,
                }
            }
            RunMode::Invocation => {
                let (topo, committee, report) = run_experiment(&cfg.to_experiment())?;
                let s = invocation_summary(&meta, &report);
                let checked = committee.weights.keys().any(|u| topo.is_honest(*u));
                let mut bad = report.budget_violations + report.forgery_violations;
                if checked && !s.agreed {
                    bad += 1;
                }
                violations += bad;
                checked_runs += checked as u64;
                SweepRecord::SweepRun {
                    config: meta.config,
                    seed,
                    agreed: s.agreed,
                    checked,
                    confirmed_slots: 0,
                    rounds_run: s.rounds_run as u64,
                    peak_node_round_bits: s.peak_node_round_bits,
                    violations: bad,
                }
            }
        };
        record(&rec);
    }
    let summary = SweepRecord::SweepSummary {
        config: base_cfg.digest(),
        seeds: args.seeds,
        checked_runs,
        violations,
    };
    record(&summary);
    drop(record);
    if let Some(dir) = args.out_dir {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{}.sweep.ldjson", file_stem(&args.config))), &out_lines)?;
    }
    if violations > 0 {
        return Err(CliError::Violation(format!(
            "{violations} violations across {} seeds",
            args.seeds
        )));
    }
    Ok(())
}
