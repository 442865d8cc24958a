//! Run outputs: line-delimited metric records, chain dumps, and the
//! per-run summary document.
//!
//! Every file starts from the same `RunMeta`, so each output carries the
//! config digest and master seed it came from. Rendering is separated from
//! writing: bundles are plain strings, byte-identical across repeat runs
//! of the same config, and the writer only puts them on disk.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::chain::{ChainReport, SlotEntry};
use crate::crypto::Digest;
use crate::sim::{InvocationReport, TraceRecord};

/// Identity of a run, stamped on every output.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunMeta {
    /// Canonical digest of the parsed experiment config.
    pub config: Digest,
    pub seed: u64,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Record<'a> {
    Run { config: Digest, seed: u64, mode: &'a str },
    Trace(&'a TraceRecord),
    Slot(&'a crate::chain::SlotReport),
    Epoch(&'a crate::chain::EpochReport),
    InvocationSummary(&'a InvocationSummary),
    ChainSummary(&'a ChainSummary),
}

/// Summary document of a standalone broadcast run.
#[derive(Debug, Clone, Serialize)]
pub struct InvocationSummary {
    pub config: Digest,
    pub seed: u64,
    pub honest_nodes: u32,
    pub rounds_run: u32,
    /// All honest nodes finalized the same outcome.
    pub agreed: bool,
    /// `"object(<bits> bits)"`, `"bot"`, or `"disagree"`.
    pub outcome: String,
    pub total_bits_sent: u64,
    /// Largest per-node per-round send, the number the analytic bound caps.
    pub peak_node_round_bits: u64,
    pub budget_bound_bits: Option<u64>,
    pub budget_violations: u32,
    pub forgery_violations: u32,
}

/// Summary document of a chain run.
#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub config: Digest,
    pub seed: u64,
    pub slots: u64,
    pub confirmed_slots: u64,
    pub bot_slots: u64,
    pub epochs: u32,
    pub rounds_run: u64,
    /// Pipelining depth and rounds per invocation, for converting the
    /// analytic throughput into per-round terms.
    pub gamma: u32,
    pub invocation_rounds: u32,
    pub latency_min: u32,
    pub latency_max: u32,
    /// Object bits confirmed per round over the whole run.
    pub measured_bits_per_round: f64,
    pub peak_node_round_bits: u64,
    pub safety_violations: u32,
    pub disagreements_total: u32,
    pub beacon_reuses: u32,
    pub predictable_epochs: u32,
    pub budget_violations: u32,
    pub forgery_violations: u32,
    /// Set when every honest node ended on the same chain.
    pub chain_digest: Option<Digest>,
}

/// Rendered outputs of one run, ready to write.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsBundle {
    /// Line-delimited records: one `run` header, then traces, slots,
    /// epochs, then one summary record.
    pub records: String,
    /// The summary alone, as an indented JSON document.
    pub summary: String,
    /// Chain dump, one line per honest node; `None` for invocation runs.
    pub chains: Option<String>,
}

fn push_line(out: &mut String, rec: &Record<'_>) {
    out.push_str(&serde_json::to_string(rec).expect("metric records always serialize"));
    out.push('\n');
}

pub fn invocation_summary(meta: &RunMeta, report: &InvocationReport) -> InvocationSummary {
    let outcome = match report.agreed_outcome() {
        Some(o) => match o.object() {
            Some(obj) => format!("object({} bits)", obj.bits()),
            None => "bot".to_string(),
        },
        None => "disagree".to_string(),
    };
    InvocationSummary {
        config: meta.config,
        seed: meta.seed,
        honest_nodes: report.outcomes.len() as u32,
        rounds_run: report.rounds_run,
        agreed: report.outcomes_agree(),
        outcome,
        total_bits_sent: report.bits_sent.values().flatten().sum(),
        peak_node_round_bits: report.peak_round_bits,
        budget_bound_bits: None,
        budget_violations: report.budget_violations,
        forgery_violations: report.forgery_violations,
    }
}

pub fn invocation_bundle(meta: &RunMeta, report: &InvocationReport) -> MetricsBundle {
    let summary = invocation_summary(meta, report);
    let mut records = String::new();
    push_line(&mut records, &Record::Run {
        config: meta.config,
        seed: meta.seed,
        mode: "invocation",
    });
    for t in &report.trace {
        push_line(&mut records, &Record::Trace(t));
    }
    push_line(&mut records, &Record::InvocationSummary(&summary));
    MetricsBundle {
        records,
        summary: to_document(&summary),
        chains: None,
    }
}

pub fn chain_summary(meta: &RunMeta, report: &ChainReport) -> ChainSummary {
    let confirmed = report.slots.iter().filter(|s| s.confirmed).count() as u64;
    let digests: std::collections::BTreeSet<_> = report.chain_digests.values().collect();
    ChainSummary {
        config: meta.config,
        seed: meta.seed,
        slots: report.slots.len() as u64,
        confirmed_slots: confirmed,
        bot_slots: report.slots.len() as u64 - confirmed,
        epochs: report.epochs.len() as u32,
        rounds_run: report.rounds_run,
        gamma: report.gamma,
        invocation_rounds: report.inv_rounds,
        latency_min: report.slots.iter().map(|s| s.latency).min().unwrap_or(0),
        latency_max: report.slots.iter().map(|s| s.latency).max().unwrap_or(0),
        measured_bits_per_round: report.confirmed_object_bits as f64 / report.rounds_run as f64,
        peak_node_round_bits: report.slots.iter().map(|s| s.peak_round_bits).max().unwrap_or(0),
        safety_violations: report.safety_violations,
        disagreements_total: report.disagreements_total,
        beacon_reuses: report.beacon_reuses,
        predictable_epochs: report.predictable_epochs,
        budget_violations: report.slots.iter().map(|s| s.budget_violations).sum(),
        forgery_violations: report.slots.iter().map(|s| s.forgery_violations).sum(),
        chain_digest: (digests.len() == 1).then(|| **digests.iter().next().unwrap()),
    }
}

pub fn chain_bundle(meta: &RunMeta, report: &ChainReport) -> MetricsBundle {
    let summary = chain_summary(meta, report);
    let mut records = String::new();
    push_line(&mut records, &Record::Run { config: meta.config, seed: meta.seed, mode: "chain" });
    for t in &report.trace {
        push_line(&mut records, &Record::Trace(t));
    }
    for s in &report.slots {
        push_line(&mut records, &Record::Slot(s));
    }
    for e in &report.epochs {
        push_line(&mut records, &Record::Epoch(e));
    }
    push_line(&mut records, &Record::ChainSummary(&summary));

    #[derive(Serialize)]
    struct ChainDumpLine<'a> {
        config: Digest,
        node: u32,
        digest: Digest,
        chain: &'a [SlotEntry],
    }
    let mut chains = String::new();
    for (node, entries) in &report.chains {
        let line = ChainDumpLine {
            config: meta.config,
            node: node.0,
            digest: report.chain_digests[node],
            chain: entries,
        };
        chains.push_str(&serde_json::to_string(&line).expect("chain dumps serialize"));
        chains.push('\n');
    }
    MetricsBundle {
        records,
        summary: to_document(&summary),
        chains: Some(chains),
    }
}

fn to_document<T: Serialize>(value: &T) -> String {
    let mut doc = serde_json::to_string_pretty(value).expect("summaries serialize");
    doc.push('\n');
    doc
}

/// Writes a bundle under `out_dir` as `{stem}.records.ldjson`,
/// `{stem}.summary.json`, and (for chain runs) `{stem}.chains.ldjson`.
/// Returns the written paths.
pub fn write_bundle(
    out_dir: &Path,
    stem: &str,
    bundle: &MetricsBundle,
) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |suffix: &str, body: &str| -> io::Result<()> {
        let path = out_dir.join(format!("{stem}.{suffix}"));
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    emit("records.ldjson", &bundle.records)?;
    emit("summary.json", &bundle.summary)?;
    if let Some(chains) = &bundle.chains {
        emit("chains.ldjson", chains)?;
    }
    Ok(written)
}
