//! Permissioned hash-chained ledger for the decentralised model.
//!
//! A single FMI orderer sequences instructions exactly like the central store,
//! batches the accepted events into blocks and broadcasts them. Every ledger
//! node re-validates each block against its own state before appending.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical::{self, is_lower_hex, sha256_hex, u64_str};
use crate::central::{
    poll_slice, Cursor, EventSource, IdMode, PollError, Sequencer, SubmissionInstruction, SubmitError,
};
use crate::event::{event_hash, BusinessEvent, EventError};
use crate::state::{apply_into, state_digest, StateMap};

pub const ZERO_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";
pub const FMI: &str = "fmi";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Block {
    #[serde(with = "u64_str")]
    pub index: u64,
    pub prev_hash: String,
    pub events: Vec<BusinessEvent>,
    pub block_hash: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct HashPreimage<'a> {
    #[serde(with = "u64_str")]
    index: &'a u64,
    prev_hash: &'a str,
    event_hashes: Vec<String>,
}

/// Canonical bytes hashed into a block hash:
/// `{"eventHashes":[...],"index":"<k>","prevHash":"<hex>"}`.
pub fn hash_preimage(index: u64, prev_hash: &str, events: &[BusinessEvent]) -> Result<Vec<u8>, EventError> {
    let event_hashes = events.iter().map(event_hash).collect::<Result<_, _>>()?;
    Ok(canonical::to_canonical(&HashPreimage { index: &index, prev_hash, event_hashes }))
}

pub fn block_hash(index: u64, prev_hash: &str, events: &[BusinessEvent]) -> Result<String, EventError> {
    Ok(sha256_hex(&hash_preimage(index, prev_hash, events)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RejectReason {
    #[error("block hash does not match its contents")]
    BadHash,
    #[error("block does not extend the chain head")]
    BadLinkage,
    #[error("event invalid against the node's state")]
    InvalidTransition,
    #[error("events do not continue the global sequence")]
    SeqGap,
    #[error("non-genesis block without events")]
    EmptyBlock,
    #[error("block bytes are not a canonical block")]
    Malformed,
}

impl Block {
    pub fn genesis() -> Block {
        Block::form(0, ZERO_HASH.to_string(), Vec::new())
    }

    /// Builds a block and computes its hash. Events must be valid.
    pub fn form(index: u64, prev_hash: String, events: Vec<BusinessEvent>) -> Block {
        let block_hash = block_hash(index, &prev_hash, &events).expect("validated events");
        Block { index, prev_hash, events, block_hash }
    }

    pub fn computed_hash(&self) -> Option<String> {
        block_hash(self.index, &self.prev_hash, &self.events).ok()
    }

    /// Canonical line (no trailing newline); wire and persisted form.
    pub fn to_line(&self) -> Vec<u8> {
        canonical::to_canonical(self)
    }

    /// Parses a block line, demanding canonical bytes.
    pub fn parse_line(line: &[u8]) -> Result<Block, RejectReason> {
        let block: Block = serde_json::from_slice(line).map_err(|_| RejectReason::Malformed)?;
        if block.to_line() != line || !is_lower_hex(&block.prev_hash, 64) || !is_lower_hex(&block.block_hash, 64) {
            return Err(RejectReason::Malformed);
        }
        Ok(block)
    }

    /// Checks that apply to a block in isolation.
    fn check_self(&self) -> Result<(), RejectReason> {
        if self.computed_hash().as_deref() != Some(self.block_hash.as_str()) {
            return Err(RejectReason::BadHash);
        }
        match (self.index, self.events.is_empty()) {
            (0, _) if self.prev_hash != ZERO_HASH || !self.events.is_empty() => Err(RejectReason::BadLinkage),
            (1.., true) => Err(RejectReason::EmptyBlock),
            _ => Ok(()),
        }
    }
}

/// Folds a block's events into a copy of `states`, checking sequence contiguity.
fn fold_block(states: &StateMap, head_seq: u64, block: &Block) -> Result<(StateMap, u64), RejectReason> {
    let mut next = states.clone();
    let mut seq = head_seq;
    for event in &block.events {
        if event.global_seq != seq + 1 || !event.private_fields.is_empty() {
            return Err(RejectReason::SeqGap);
        }
        apply_into(&mut next, event).map_err(|_| RejectReason::InvalidTransition)?;
        seq += 1;
    }
    Ok((next, seq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum HostedBy {
    Fmi,
    #[serde(rename = "self")]
    SelfHosted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    /// Re-delivery of a block already held; nothing changes.
    Stale,
    Rejected(RejectReason),
}

#[derive(Debug, Clone)]
pub struct LedgerNode {
    pub owner: String,
    pub hosted_by: HostedBy,
    chain: Vec<Block>,
    state_view: StateMap,
    events: Vec<BusinessEvent>,
    received_blocks: u64,
    received_events: u64,
}

impl LedgerNode {
    pub fn new(owner: impl Into<String>, hosted_by: HostedBy) -> Self {
        LedgerNode {
            owner: owner.into(),
            hosted_by,
            chain: vec![Block::genesis()],
            state_view: StateMap::new(),
            events: Vec::new(),
            received_blocks: 0,
            received_events: 0,
        }
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn state_view(&self) -> &StateMap {
        &self.state_view
    }

    pub fn head(&self) -> &Block {
        self.chain.last().expect("chain holds genesis")
    }

    pub fn head_hash(&self) -> &str {
        &self.head().block_hash
    }

    pub fn state_digest(&self) -> String {
        state_digest(&self.state_view)
    }

    pub fn validate_and_append(&mut self, block: &Block) -> AppendOutcome {
        let len = self.chain.len() as u64;
        if block.index < len {
            return if *block == self.chain[block.index as usize] {
                AppendOutcome::Stale
            } else {
                AppendOutcome::Rejected(RejectReason::BadLinkage)
            };
        }
        if let Err(reason) = block.check_self() {
            return AppendOutcome::Rejected(reason);
        }
        if block.index != len || block.prev_hash != self.head().block_hash {
            return AppendOutcome::Rejected(RejectReason::BadLinkage);
        }
        match fold_block(&self.state_view, self.events.len() as u64, block) {
            Ok((states, _)) => {
                self.state_view = states;
                self.events.extend(block.events.iter().cloned());
                self.chain.push(block.clone());
                AppendOutcome::Appended
            }
            Err(reason) => AppendOutcome::Rejected(reason),
        }
    }

    /// Receives a block as wire bytes.
    pub fn receive_line(&mut self, line: &[u8]) -> AppendOutcome {
        self.received_blocks += 1;
        match Block::parse_line(line) {
            Ok(block) => {
                self.received_events += block.events.len() as u64;
                self.validate_and_append(&block)
            }
            Err(reason) => AppendOutcome::Rejected(reason),
        }
    }

    /// Block messages received over the wire, and the events they carried.
    pub fn received(&self) -> (u64, u64) {
        (self.received_blocks, self.received_events)
    }

    pub fn chain_lines(&self) -> Vec<u8> {
        chain_to_lines(&self.chain)
    }

    /// Writes `node-<owner>-chain.jsonl` into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        std::fs::write(dir.as_ref().join(format!("node-{}-chain.jsonl", self.owner)), self.chain_lines())
    }
}

impl EventSource for LedgerNode {
    fn head_seq(&self) -> u64 {
        self.events.len() as u64
    }

    fn poll(&self, cursor: Cursor, max_events: usize) -> Result<(Vec<BusinessEvent>, Cursor), PollError> {
        poll_slice(&self.events, cursor, max_events)
    }
}

pub fn chain_to_lines(chain: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    for block in chain {
        out.extend(block.to_line());
        out.push(b'\n');
    }
    out
}

/// First position at which a chain fails verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("chain invalid at block {index}: {reason}")]
pub struct ChainFault {
    pub index: u64,
    pub reason: RejectReason,
}

/// Full re-walk: indices, hashes, linkage, replay validity and globalSeq contiguity.
pub fn verify_chain(chain: &[Block]) -> Result<(), ChainFault> {
    if chain.is_empty() {
        return Err(ChainFault { index: 0, reason: RejectReason::Malformed });
    }
    let mut states = StateMap::new();
    let mut seq = 0;
    let mut prev_hash = ZERO_HASH;
    for (position, block) in chain.iter().enumerate() {
        let index = position as u64;
        let fault = |reason| ChainFault { index, reason };
        block.check_self().map_err(fault)?;
        if block.index != index || block.prev_hash != prev_hash {
            return Err(fault(RejectReason::BadLinkage));
        }
        (states, seq) = fold_block(&states, seq, block).map_err(fault)?;
        prev_hash = &block.block_hash;
    }
    Ok(())
}

/// Verifies persisted chain bytes. Line `k` (including its terminating
/// newline) is block `k`; any byte that does not parse as a canonical block
/// faults at its line.
pub fn verify_chain_lines(bytes: &[u8]) -> Result<Vec<Block>, ChainFault> {
    let body = match bytes.strip_suffix(b"\n") {
        Some(body) => body,
        None => {
            let index = bytes.split(|b| *b == b'\n').count() as u64 - 1;
            return Err(ChainFault { index, reason: RejectReason::Malformed });
        }
    };
    let mut chain = Vec::new();
    for (k, line) in body.split(|b| *b == b'\n').enumerate() {
        let block = Block::parse_line(line).map_err(|reason| ChainFault { index: k as u64, reason })?;
        chain.push(block);
    }
    verify_chain(&chain)?;
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProposeError {
    #[error("no pending events to propose")]
    EmptyProposal,
}

/// The FMI's single orderer. Accepted events wait in `pending` until the next
/// proposal; the FMI's own ledger node appends every proposed block directly.
#[derive(Debug, Clone)]
pub struct Orderer {
    sequencer: Sequencer,
    pending: Vec<BusinessEvent>,
    fmi_node: LedgerNode,
}

impl Orderer {
    pub fn new(id_mode: IdMode) -> Self {
        Orderer {
            sequencer: Sequencer::new(id_mode),
            pending: Vec::new(),
            fmi_node: LedgerNode::new(FMI, HostedBy::Fmi),
        }
    }

    /// Validates against the state including pending events; rejected
    /// instructions never reach a block.
    pub fn submit(&mut self, instruction: &SubmissionInstruction) -> Result<BusinessEvent, SubmitError> {
        let event = self.sequencer.sequence(instruction)?;
        self.pending.push(event.clone());
        Ok(event)
    }

    pub fn pending(&self) -> &[BusinessEvent] {
        &self.pending
    }

    pub fn propose_block(&mut self) -> Result<Block, ProposeError> {
        if self.pending.is_empty() {
            return Err(ProposeError::EmptyProposal);
        }
        let head = self.fmi_node.head();
        let block = Block::form(head.index + 1, head.block_hash.clone(), std::mem::take(&mut self.pending));
        let outcome = self.fmi_node.validate_and_append(&block);
        assert_eq!(outcome, AppendOutcome::Appended, "orderer formed an invalid block");
        Ok(block)
    }

    /// The FMI's ledger node, which plays the central store's role.
    pub fn fmi_node(&self) -> &LedgerNode {
        &self.fmi_node
    }
}
