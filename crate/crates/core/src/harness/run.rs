//! Deterministic scenario runs.
//!
//! A run advances in logical ticks. Each tick the FMI accepts the next batch
//! of instructions (forming one block in the ledger model), then every node
//! that is not caught up takes one poll step. After the last batch the nodes
//! drain to quiescence and the harness reconciles and digests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canonical::{self, sha256_hex, u64_str, U64Str};
use crate::central::{write_snapshot, CentralAds, EventSource, IdMode};
use crate::event::{canonical_bytes, BusinessEvent};
use crate::harness::faults::FaultSpec;
use crate::harness::workload::{generate_workload, InvalidSpec, WorkloadSpec};
use crate::ledger::{HostedBy, LedgerNode, Orderer};
use crate::node::{configure, BdNode, Routing, ScenarioId};
use crate::recon::{reconcile, BreakKind, BreakReport};
use crate::state::{state_digest, StateMap};
use crate::synonym::SynonymMap;

/// Instructions the FMI accepts per tick; in the ledger model, events per block.
pub const INSTRUCTIONS_PER_TICK: usize = 8;
/// Largest batch a node requests per poll.
pub const POLL_MAX: usize = 16;
pub const RUN_REPORT_SCHEMA: &str = "adsim/run-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Centralised,
    Decentralised,
}

impl Model {
    pub fn admits(self, scenario: ScenarioId) -> bool {
        scenario.is_decentralised() == (self == Model::Decentralised)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Centralised => "centralised",
            Model::Decentralised => "decentralised",
        })
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centralised" => Ok(Model::Centralised),
            "decentralised" => Ok(Model::Decentralised),
            _ => Err(format!("unknown model {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("node {node_id} runs {scenario_id}, which is not part of the {model} model")]
    ConfigMismatch { node_id: String, scenario_id: ScenarioId, model: Model },
    #[error(transparent)]
    InvalidSpec(#[from] InvalidSpec),
    #[error("invalid fault spec: {0}")]
    InvalidFaultSpec(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MessageCounts {
    /// Events delivered over the FMI's poll API: every delivery in the
    /// centralised model, deliveries from FMI-hosted ledger nodes otherwise.
    #[serde(with = "u64_str")]
    pub api_deliveries: u64,
    #[serde(with = "u64_str")]
    pub block_broadcasts: u64,
    /// Events carried by block broadcasts.
    #[serde(with = "u64_str")]
    pub total_events_transferred: u64,
    /// Bytes of every message counted above.
    #[serde(with = "u64_str")]
    pub bytes_transferred: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NodeReport {
    pub node_id: String,
    pub scenario_id: ScenarioId,
    /// Digest of the trade states held in the node's local ADS.
    pub state_digest: String,
    /// Digest of the view served to IDM-routed applications.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idm_view_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_head_hash: Option<String>,
    #[serde(with = "u64_str")]
    pub store_count: u64,
    /// Events handed to the node's ingest, counted on the node side.
    #[serde(with = "u64_str")]
    pub events_received: u64,
    #[serde(with = "u64_str")]
    pub contiguous_seq: u64,
    /// Block messages and their events, counted by the node's ledger node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_blocks_received: Option<U64Str>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_events_received: Option<U64Str>,
    pub reconciled: bool,
    pub break_counts: BTreeMap<BreakKind, U64Str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunReport {
    pub schema: String,
    pub run_id: String,
    pub model: Model,
    #[serde(with = "u64_str")]
    pub seed: u64,
    pub workload_digest: String,
    pub fault_digest: String,
    #[serde(with = "u64_str")]
    pub head_seq: u64,
    /// Non-genesis blocks (ledger model only; zero otherwise).
    #[serde(with = "u64_str")]
    pub blocks: u64,
    /// Ledger nodes including the FMI's (ledger model only; zero otherwise).
    #[serde(with = "u64_str")]
    pub registered_nodes: u64,
    /// Central snapshot, or the FMI ledger node's state view.
    pub authoritative_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmi_head_hash: Option<String>,
    pub per_node: Vec<NodeReport>,
    pub message_counts: MessageCounts,
    pub converged: bool,
}

impl RunReport {
    pub fn to_bytes(&self) -> Vec<u8> {
        canonical::to_canonical(self)
    }
}

#[derive(Debug, Clone)]
pub enum Authority {
    Central(CentralAds),
    Ledger(LedgerNode),
}

impl Authority {
    pub fn states(&self) -> StateMap {
        match self {
            Authority::Central(ads) => ads.snapshot(),
            Authority::Ledger(node) => node.state_view().clone(),
        }
    }
}

/// A finished run with every store, for inspection and export.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub authority: Authority,
    pub nodes: Vec<BdNode>,
    /// One ledger node per broker-dealer, in node order (ledger model only).
    pub ledgers: Vec<LedgerNode>,
    pub recon: BTreeMap<String, BreakReport>,
}

impl RunOutcome {
    /// Writes every persisted store and reconciliation report into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        match &self.authority {
            Authority::Central(ads) => ads.write_log(dir.join("central-log.jsonl"))?,
            Authority::Ledger(fmi) => fmi.export(dir)?,
        }
        let mut file = std::fs::File::create(dir.join("authoritative-snapshot.json"))?;
        write_snapshot(&self.authority.states(), &mut file)?;
        std::fs::write(dir.join("synonyms.json"), canonical::to_canonical(&SynonymMap::standard()))?;
        for node in &self.nodes {
            node.export(dir)?;
            let config = canonical::to_canonical(node.config());
            std::fs::write(dir.join(format!("node-{}-config.json", node.id)), config)?;
        }
        for ledger in &self.ledgers {
            ledger.export(dir)?;
        }
        for report in self.recon.values() {
            report.write_to(dir)?;
        }
        Ok(())
    }
}

pub fn run(model: Model, workload: &WorkloadSpec, faults: &FaultSpec) -> Result<RunReport, RunError> {
    Ok(execute(model, workload, faults)?.report)
}

pub fn check_config(model: Model, workload: &WorkloadSpec) -> Result<(), RunError> {
    workload.validate()?;
    for bd in &workload.broker_dealers {
        if !model.admits(bd.scenario_id) {
            return Err(RunError::ConfigMismatch { node_id: bd.node_id.clone(), scenario_id: bd.scenario_id, model });
        }
    }
    Ok(())
}

fn block_count(head_seq: u64) -> u64 {
    head_seq.div_ceil(INSTRUCTIONS_PER_TICK as u64)
}

fn check_faults(model: Model, workload: &WorkloadSpec, faults: &FaultSpec, head_seq: u64) -> Result<(), RunError> {
    let bad = |msg: String| Err(RunError::InvalidFaultSpec(msg));
    let ids: BTreeSet<&str> = workload.broker_dealers.iter().map(|b| b.node_id.as_str()).collect();
    for f in faults.drop_deliveries.iter().chain(&faults.duplicate_deliveries) {
        if !ids.contains(f.node_id.as_str()) {
            return bad(format!("unknown node {:?}", f.node_id));
        }
        if f.global_seq == 0 || f.global_seq > head_seq {
            return bad(format!("globalSeq {} outside 1..={head_seq}", f.global_seq));
        }
    }
    if !faults.corrupt_block.is_empty() && model == Model::Centralised {
        return bad("block corruption needs the decentralised model".into());
    }
    let blocks = block_count(head_seq);
    for c in &faults.corrupt_block {
        if c.block_index == 0 || c.block_index > blocks {
            return bad(format!("block {} outside 1..={blocks}", c.block_index));
        }
    }
    Ok(())
}

/// One node's transport: drops and duplicates, plus message accounting.
struct Link {
    drops: BTreeSet<u64>,
    dups: BTreeSet<u64>,
}

impl Link {
    fn carry(&self, events: Vec<BusinessEvent>, counted: bool, counts: &mut MessageCounts) -> Vec<BusinessEvent> {
        let mut out = Vec::with_capacity(events.len());
        for event in events {
            if self.drops.contains(&event.global_seq) {
                continue;
            }
            let copies = if self.dups.contains(&event.global_seq) { 2 } else { 1 };
            for _ in 0..copies {
                if counted {
                    counts.api_deliveries += 1;
                    counts.bytes_transferred += canonical_bytes(&event).expect("valid event").len() as u64;
                }
                out.push(event.clone());
            }
        }
        out
    }
}

fn poll_once(node: &mut BdNode, source: &impl EventSource, link: &Link, counted: bool, counts: &mut MessageCounts) {
    node.poll_step(source, POLL_MAX, |events| link.carry(events, counted, counts))
        .expect("cursor never passes the source head");
}

pub fn run_id(model: Model, workload: &WorkloadSpec, faults: &FaultSpec) -> String {
    let preimage = serde_json::json!({
        "faults": faults,
        "model": model,
        "workload": workload,
    });
    sha256_hex(&canonical::to_bytes(&preimage))[..16].to_string()
}

pub fn execute(model: Model, workload: &WorkloadSpec, faults: &FaultSpec) -> Result<RunOutcome, RunError> {
    check_config(model, workload)?;
    let instructions = generate_workload(workload)?;
    let head_seq = instructions.len() as u64;
    check_faults(model, workload, faults, head_seq)?;

    let mut nodes: Vec<BdNode> =
        workload.broker_dealers.iter().map(|bd| BdNode::new(bd.node_id.clone(), configure(bd.scenario_id))).collect();
    let links: Vec<Link> = workload
        .broker_dealers
        .iter()
        .map(|bd| Link { drops: faults.drops_for(&bd.node_id), dups: faults.duplicates_for(&bd.node_id) })
        .collect();
    let mut counts = MessageCounts::default();
    let id_mode = IdMode::Seeded(workload.seed);

    let (authority, ledgers, blocks) = match model {
        Model::Centralised => {
            let mut ads = CentralAds::new(id_mode);
            for batch in instructions.chunks(INSTRUCTIONS_PER_TICK) {
                for instr in batch {
                    ads.submit(instr).expect("generated instructions are valid");
                }
                for (node, link) in nodes.iter_mut().zip(&links) {
                    if !node.is_idle(ads.head_seq()) {
                        poll_once(node, &ads, link, true, &mut counts);
                    }
                }
            }
            drain(&mut nodes, |i, node| {
                let idle = node.is_idle(ads.head_seq());
                if !idle {
                    poll_once(node, &ads, &links[i], true, &mut counts);
                }
                !idle
            });
            (Authority::Central(ads), Vec::new(), 0)
        }
        Model::Decentralised => {
            let mut orderer = Orderer::new(id_mode);
            let mut ledgers: Vec<LedgerNode> = workload
                .broker_dealers
                .iter()
                .map(|bd| {
                    let hosted = if bd.scenario_id.number() <= 6 { HostedBy::Fmi } else { HostedBy::SelfHosted };
                    LedgerNode::new(bd.node_id.clone(), hosted)
                })
                .collect();
            let mut blocks = 0;
            for batch in instructions.chunks(INSTRUCTIONS_PER_TICK) {
                for instr in batch {
                    orderer.submit(instr).expect("generated instructions are valid");
                }
                let block = orderer.propose_block().expect("batch is non-empty");
                blocks += 1;
                let mut line = block.to_line();
                for offset in faults.corruptions_of(block.index) {
                    let byte = line.get_mut(offset as usize).ok_or_else(|| {
                        RunError::InvalidFaultSpec(format!("byte offset {offset} past block {}", block.index))
                    })?;
                    *byte ^= 1;
                }
                let (lo, hi) = (block.events[0].global_seq, block.events[block.events.len() - 1].global_seq);
                for (ledger, link) in ledgers.iter_mut().zip(&links) {
                    let copies = if link.dups.range(lo..=hi).next().is_some() { 2 } else { 1 };
                    for _ in 0..copies {
                        counts.block_broadcasts += 1;
                        counts.total_events_transferred += block.events.len() as u64;
                        counts.bytes_transferred += line.len() as u64;
                        ledger.receive_line(&line);
                    }
                }
                for ((node, ledger), link) in nodes.iter_mut().zip(&ledgers).zip(&links) {
                    if !node.is_idle(ledger.head_seq()) {
                        poll_once(node, ledger, link, ledger.hosted_by == HostedBy::Fmi, &mut counts);
                    }
                }
            }
            drain(&mut nodes, |i, node| {
                let ledger = &ledgers[i];
                let idle = node.is_idle(ledger.head_seq());
                if !idle {
                    poll_once(node, ledger, &links[i], ledger.hosted_by == HostedBy::Fmi, &mut counts);
                }
                !idle
            });
            (Authority::Ledger(orderer.fmi_node().clone()), ledgers, blocks)
        }
    };

    let run_id = run_id(model, workload, faults);
    let authoritative = authority.states();
    let authoritative_digest = state_digest(&authoritative);
    let fmi_head_hash = match &authority {
        Authority::Ledger(fmi) => Some(fmi.head_hash().to_string()),
        Authority::Central(_) => None,
    };

    let mut recon = BTreeMap::new();
    let mut per_node = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let ledger = ledgers.get(i);
        let mut report = NodeReport {
            node_id: node.id.clone(),
            scenario_id: node.config().scenario_id,
            state_digest: node.ads_digest(),
            idm_view_digest: idm_view_digest(node),
            ledger_head_hash: ledger.map(|l| l.head_hash().to_string()),
            store_count: node.store_count() as u64,
            events_received: node.received(),
            contiguous_seq: node.contiguous_seq(),
            ledger_blocks_received: ledger.map(|l| U64Str(l.received().0)),
            ledger_events_received: ledger.map(|l| U64Str(l.received().1)),
            reconciled: false,
            break_counts: BTreeMap::new(),
        };
        if let Some(internal) = node.internal() {
            let mut breaks = reconcile(internal, &authoritative, &node.config().synonym_map);
            breaks.run_id = format!("{run_id}-{}", node.id);
            report.reconciled = true;
            report.break_counts = breaks.counts().into_iter().map(|(k, v)| (k, U64Str(v))).collect();
            recon.insert(node.id.clone(), breaks);
        }
        per_node.push(report);
    }

    let converged = per_node.iter().all(|n| {
        n.state_digest == authoritative_digest
            && n.ledger_head_hash == fmi_head_hash
            && n.break_counts.values().all(|c| c.0 == 0)
    });
    let registered_nodes = if model == Model::Decentralised { 1 + nodes.len() as u64 } else { 0 };
    let report = RunReport {
        schema: RUN_REPORT_SCHEMA.to_string(),
        run_id,
        model,
        seed: workload.seed,
        workload_digest: workload.digest(),
        fault_digest: faults.digest(),
        head_seq,
        blocks,
        registered_nodes,
        authoritative_digest,
        fmi_head_hash,
        per_node,
        message_counts: counts,
        converged,
    };
    Ok(RunOutcome { report, authority, nodes, ledgers, recon })
}

/// Steps nodes round-robin until a full pass finds every node idle.
fn drain(nodes: &mut [BdNode], mut step: impl FnMut(usize, &mut BdNode) -> bool) {
    loop {
        let mut busy = false;
        for (i, node) in nodes.iter_mut().enumerate() {
            busy |= step(i, node);
        }
        if !busy {
            return;
        }
    }
}

/// Digest of the first IDM-routed app's view; every IDM app reads the same store.
pub fn idm_view_digest(node: &BdNode) -> Option<String> {
    let app = node.config().app_routing.iter().find(|(_, r)| **r == Routing::Idm)?.0;
    let view = node.app_view(app).expect("IDM records written by the node are parseable");
    Some(canonical::digest_of(&view))
}
