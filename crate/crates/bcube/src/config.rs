//! Experiment configuration files.
//!
//! One TOML file describes a whole experiment: the overlay, the protocol
//! parameters, the chain schedule, the adversary, and the analytic design
//! point. Unknown keys are hard errors so a typo cannot silently fall back
//! to a default, and every load is validated before anything runs. The
//! canonical hash of the parsed config is stamped on all outputs so a
//! result file can always be traced back to its inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{BandwidthParams, SafetyParams};
use crate::chain::ChainConfig;
use crate::crypto::{sha256_parts, Digest};
use crate::sim::{adversary_catalog, BadEdgeMode, ExecMode, Experiment};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// Parse failures keep toml's diagnostic, which carries line and column.
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// What `simulate` runs with this file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Full chain: pipelined slots, committee rotation, beacon refresh.
    #[default]
    Chain,
    /// One standalone broadcast instance.
    Invocation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub n: u32,
    /// Malicious stake fraction.
    pub f: f64,
    #[serde(default = "default_target_degree")]
    pub target_degree: u32,
    #[serde(default = "default_max_degree")]
    pub max_degree: u32,
    #[serde(default = "default_bad_edges")]
    pub bad_edges: BadEdgeMode,
}

fn default_target_degree() -> u32 {
    4
}
fn default_max_degree() -> u32 {
    9
}
fn default_bad_edges() -> BadEdgeMode {
    BadEdgeMode::None
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    /// Committee size.
    pub m: u32,
    /// Fragments per object.
    pub s: u32,
    /// Object (block) size in bits.
    pub object_bits: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// Rounds between slot starts.
    pub slot_period: u32,
    /// Slots per epoch.
    pub rho: u32,
    /// Challenge and candidate slots per epoch.
    pub tau: u32,
    pub epochs: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowSection {
    /// Expected honest solutions per epoch window.
    pub honest_mean: f64,
    /// Adversary hash power as a multiple of honest power.
    pub adversary_multiplier: f64,
    pub genesis_entropy: u64,
}

impl Default for PowSection {
    fn default() -> Self {
        PowSection { honest_mean: 2.0, adversary_multiplier: 8.0, genesis_entropy: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    pub strategy: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub exec: ExecMode,
    pub collect_trace: bool,
    /// Per-node per-round send cap in bits; violations are counted, not
    /// enforced. Unset means no accounting check.
    pub budget_bound_bits: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            exec: ExecMode::Sequential,
            collect_trace: true,
            budget_bound_bits: None,
        }
    }
}

/// Analytic design point for `analyze` and `params`: the safety inputs and
/// the bandwidth model. All fields have the f = 0.7 reference deployment as
/// defaults, so `[analysis]` may be omitted or partial.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub f: f64,
    pub m: u32,
    pub tau: u32,
    pub lambda: u64,
    /// Target failure probability, written as the exponent: epsilon = 2^-k.
    pub epsilon_exp: u32,
    /// Maximum node degree.
    pub w: u32,
    /// Object size in bits.
    pub l: u64,
    pub s: u32,
    /// Overlay diameter bound.
    pub d: u32,
    /// Round duration in seconds.
    pub delta: f64,
    /// Pipelined invocations.
    pub gamma: u32,
    pub l_hash: u32,
    pub l_sig: u32,
    pub l_nonce: u32,
    /// Bits per second per node.
    pub bandwidth: f64,
    /// Fraction of bandwidth the protocol may claim when sizing parameters.
    pub budget_factor: f64,
    /// Baseline TTB table inputs.
    pub baseline_n: u32,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let b = BandwidthParams::reference_f07();
        AnalysisSection {
            f: 0.7,
            m: b.m,
            tau: 91,
            lambda: 1000,
            epsilon_exp: 30,
            w: b.w,
            l: b.l,
            s: b.s,
            d: b.d,
            delta: b.delta,
            gamma: b.gamma,
            l_hash: b.l_hash,
            l_sig: b.l_sig,
            l_nonce: b.l_nonce,
            bandwidth: b.bandwidth,
            budget_factor: 0.9,
            baseline_n: 10_000,
        }
    }
}

impl AnalysisSection {
    pub fn epsilon(&self) -> f64 {
        0.5f64.powi(self.epsilon_exp as i32)
    }

    pub fn safety(&self) -> SafetyParams {
        SafetyParams::new(self.f, self.m, self.tau, self.lambda, self.epsilon())
    }

    pub fn bandwidth_params(&self) -> BandwidthParams {
        BandwidthParams {
            w: self.w,
            l: self.l,
            s: self.s,
            m: self.m,
            d: self.d,
            delta: self.delta,
            gamma: self.gamma,
            l_hash: self.l_hash,
            l_sig: self.l_sig,
            l_nonce: self.l_nonce,
            bandwidth: self.bandwidth,
        }
    }
}

/// The whole experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: RunMode,
    pub seed: u64,
    pub topology: TopologySection,
    pub protocol: ProtocolSection,
    /// Required in chain mode, ignored in invocation mode.
    #[serde(default)]
    pub schedule: Option<ScheduleSection>,
    #[serde(default)]
    pub pow: PowSection,
    pub adversary: AdversarySection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source: Box::new(source),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Consistency checks that do not need the built topology. Schedule
    /// feasibility also depends on the realized overlay diameter, so the
    /// runner re-validates; this catches everything knowable up front.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        let t = &self.topology;
        if t.n < 2 {
            return bad(format!("topology.n = {} needs at least 2 nodes", t.n));
        }
        if !(0.0..=0.99).contains(&t.f) {
            return bad(format!("topology.f = {} outside [0, 0.99]", t.f));
        }
        if t.target_degree < 2 || t.max_degree < t.target_degree {
            return bad(format!(
                "degrees (target {}, max {}) must satisfy 2 <= target <= max",
                t.target_degree, t.max_degree
            ));
        }
        match t.bad_edges {
            BadEdgeMode::Fixed { p } | BadEdgeMode::PerRound { p } if !(0.0..=1.0).contains(&p) => {
                return bad(format!("topology.bad_edges.p = {p} outside [0, 1]"));
            }
            _ => {}
        }
        let p = &self.protocol;
        if p.s < 2 {
            return bad(format!("protocol.s = {} needs at least 2 fragments", p.s));
        }
        if p.m < 1 {
            return bad("protocol.m must be at least 1".into());
        }
        if p.object_bits < 1 {
            return bad("protocol.object_bits must be positive".into());
        }
        if !adversary_catalog().contains(&self.adversary.strategy.as_str()) {
            return bad(format!(
                "adversary.strategy {:?} is not one of {:?}",
                self.adversary.strategy,
                adversary_catalog()
            ));
        }
        if self.mode == RunMode::Chain {
            let Some(s) = &self.schedule else {
                return bad("chain mode needs a [schedule] section".into());
            };
            if s.slot_period < 1 || s.rho < 1 || s.tau < 1 || s.epochs < 1 {
                return bad("schedule values must all be at least 1".into());
            }
            if s.tau > s.rho {
                return bad(format!(
                    "schedule.tau = {} cannot exceed schedule.rho = {}",
                    s.tau, s.rho
                ));
            }
            if !(self.pow.honest_mean >= 0.0) || !(self.pow.adversary_multiplier >= 0.0) {
                return bad("pow rates must be non-negative".into());
            }
        }
        let a = &self.analysis;
        if !(0.0..=0.99).contains(&a.f) || a.s < 2 || !(0.0..=1.0).contains(&a.budget_factor) {
            return bad("analysis section out of range (f <= 0.99, s >= 2, budget in [0,1])".into());
        }
        Ok(())
    }

    /// Stable digest of the parsed config; stamped on every output record.
    /// Hashing the canonical JSON of the parsed struct (not the source
    /// text) makes the hash insensitive to comments and key order.
    pub fn digest(&self) -> Digest {
        let canon = serde_json::to_vec(self).expect("config is always serializable");
        sha256_parts(&[b"experiment-config", &canon])
    }

    pub fn to_chain_config(&self) -> Result<ChainConfig, ConfigError> {
        let s = self
            .schedule
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("chain mode needs a [schedule] section".into()))?;
        let mut cfg = ChainConfig::new(
            self.topology.n,
            self.topology.f,
            &self.adversary.strategy,
            self.seed,
        );
        cfg.target_degree = self.topology.target_degree;
        cfg.max_degree = self.topology.max_degree;
        cfg.bad_edges = self.topology.bad_edges;
        cfg.m = self.protocol.m;
        cfg.s = self.protocol.s;
        cfg.object_bits = self.protocol.object_bits;
        cfg.slot_period = s.slot_period;
        cfg.rho = s.rho;
        cfg.tau = s.tau;
        cfg.epochs = s.epochs;
        cfg.honest_pow_mean = self.pow.honest_mean;
        cfg.adversary_multiplier = self.pow.adversary_multiplier;
        cfg.genesis_entropy = self.pow.genesis_entropy;
        cfg.exec = self.run.exec;
        cfg.collect_trace = self.run.collect_trace;
        cfg.budget_bound_bits = self.run.budget_bound_bits;
        Ok(cfg)
    }

    pub fn to_experiment(&self) -> Experiment {
        let mut exp = Experiment::new(
            self.topology.n,
            self.topology.f,
            &self.adversary.strategy,
            self.seed,
        );
        exp.target_degree = self.topology.target_degree;
        exp.max_degree = self.topology.max_degree;
        exp.bad_edges = self.topology.bad_edges;
        exp.m = self.protocol.m;
        exp.s = self.protocol.s;
        exp.object_bits = self.protocol.object_bits;
        exp.exec = self.run.exec;
        exp.collect_trace = self.run.collect_trace;
        exp.budget_bound_bits = self.run.budget_bound_bits;
        exp
    }

    /// Clone with a different master seed (sweeps reuse one file).
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}

/// The bundled small chain config: 20 nodes, half of them malicious,
/// completes in seconds on a desktop.
pub const DESK_SMALL: &str = r#"
mode = "chain"
seed = 7

[topology]
n = 20
f = 0.5
target_degree = 5
max_degree = 10

[protocol]
m = 4
s = 20
object_bits = 4096

[schedule]
slot_period = 16
rho = 16
tau = 2
epochs = 3

[adversary]
strategy = "equivocator"
"#;
