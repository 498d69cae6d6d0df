//! The FMI's central authoritative data store.
//!
//! Submissions pass through a [`Sequencer`], which validates them against the
//! materialized trade states and assigns identifiers, lineage and global
//! sequence. Accepted events are appended to an append-only log that
//! consumers read through cursor polling with at-least-once semantics.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::canonical::{self, sha256_hex};
use crate::event::{self, format_iso_date, parse_iso_date, BusinessEvent, EventError, EventId, EventType, TradeId};
use crate::state::{apply_event, replay, ApplyError, ReplayError, StateMap};

/// How event identifiers are minted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdMode {
    /// Deterministic: derived from the seed and the global sequence number.
    Seeded(u64),
    /// Random v4 UUIDs, for demos where reproducibility does not matter.
    Random,
}

impl IdMode {
    pub fn event_id(self, global_seq: u64) -> EventId {
        let hex = match self {
            IdMode::Seeded(seed) => {
                sha256_hex(format!("adsim/event-id/{seed}/{global_seq}").as_bytes())[..32].to_string()
            }
            IdMode::Random => uuid::Uuid::new_v4().simple().to_string(),
        };
        hex.parse().expect("32 lowercase hex chars")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstructionKind {
    NewTrade,
    Lifecycle,
}

/// A trade submission or lifecycle instruction arriving at the FMI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SubmissionInstruction {
    pub kind: InstructionKind,
    pub trade_id: TradeId,
    pub event_type: EventType,
    pub payload: BTreeMap<String, String>,
    /// Origin tag, e.g. "ecn" or "voice".
    pub source: String,
    #[serde(with = "iso_date")]
    pub effective_date: NaiveDate,
}

mod iso_date {
    use super::*;
    use serde::{de::Error, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_iso_date(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let s = String::deserialize(d)?;
        parse_iso_date(&s).ok_or_else(|| D::Error::custom(format!("bad date {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown trade {0}")]
    UnknownTrade(TradeId),
    #[error("trade {0} already exists")]
    DuplicateTrade(TradeId),
    #[error("instruction kind does not match event type {0}")]
    KindMismatch(EventType),
    #[error(transparent)]
    Rejected(#[from] ApplyError),
}

impl SubmitError {
    pub fn code(&self) -> &'static str {
        match self {
            SubmitError::UnknownTrade(_) => "UnknownTrade",
            SubmitError::DuplicateTrade(_) => "DuplicateTrade",
            SubmitError::KindMismatch(_) => "KindMismatch",
            SubmitError::Rejected(e) => e.code(),
        }
    }
}

/// Validation plus identifier, lineage and sequence assignment. Shared by the
/// central store and the ledger orderer so both models mint identical events
/// for an identical instruction stream.
#[derive(Debug, Clone)]
pub struct Sequencer {
    id_mode: IdMode,
    head_seq: u64,
    states: StateMap,
}

impl Sequencer {
    pub fn new(id_mode: IdMode) -> Self {
        Sequencer { id_mode, head_seq: 0, states: StateMap::new() }
    }

    pub fn head_seq(&self) -> u64 {
        self.head_seq
    }

    pub fn states(&self) -> &StateMap {
        &self.states
    }

    /// Validates `instr`; on success commits the new state and returns the event.
    pub fn sequence(&mut self, instr: &SubmissionInstruction) -> Result<BusinessEvent, SubmitError> {
        let is_new = instr.kind == InstructionKind::NewTrade;
        if is_new != (instr.event_type == EventType::Execution) {
            return Err(SubmitError::KindMismatch(instr.event_type));
        }
        let prior = self.states.get(&instr.trade_id);
        match (is_new, prior) {
            (true, Some(_)) => return Err(SubmitError::DuplicateTrade(instr.trade_id.clone())),
            (false, None) => return Err(SubmitError::UnknownTrade(instr.trade_id.clone())),
            _ => {}
        }
        let global_seq = self.head_seq + 1;
        let event = BusinessEvent {
            event_id: self.id_mode.event_id(global_seq),
            trade_id: instr.trade_id.clone(),
            event_type: instr.event_type,
            version: prior.map_or(1, |p| p.version + 1),
            previous_event_id: prior.map(|p| p.last_event_id.clone()),
            global_seq,
            effective_date: instr.effective_date,
            payload: instr.payload.clone(),
            private_fields: BTreeMap::new(),
        };
        let next = apply_event(prior, &event)?;
        self.states.insert(event.trade_id.clone(), next);
        self.head_seq = global_seq;
        Ok(event)
    }
}

/// Position in a log: the highest globalSeq already consumed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cursor(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PollError {
    #[error("cursor {cursor} is ahead of head {head}")]
    CursorAhead { cursor: u64, head: u64 },
    #[error("maxEvents must be positive")]
    ZeroMax,
}

impl PollError {
    pub fn code(&self) -> &'static str {
        match self {
            PollError::CursorAhead { .. } => "CursorAhead",
            PollError::ZeroMax => "InvalidMax",
        }
    }
}

/// Anything a broker-dealer can consume events from: the central store or a
/// ledger node.
pub trait EventSource {
    fn head_seq(&self) -> u64;
    fn poll(&self, cursor: Cursor, max_events: usize) -> Result<(Vec<BusinessEvent>, Cursor), PollError>;
}

/// Cursor arithmetic over a log whose entry `i` has globalSeq `i + 1`.
pub fn poll_slice(
    log: &[BusinessEvent],
    cursor: Cursor,
    max_events: usize,
) -> Result<(Vec<BusinessEvent>, Cursor), PollError> {
    let head = log.len() as u64;
    if max_events == 0 {
        return Err(PollError::ZeroMax);
    }
    if cursor.0 > head {
        return Err(PollError::CursorAhead { cursor: cursor.0, head });
    }
    let k = (max_events as u64).min(head - cursor.0);
    let start = cursor.0 as usize;
    let events = log[start..start + k as usize].to_vec();
    Ok((events, Cursor(cursor.0 + k)))
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: u64, source: EventError },
    #[error("line {line} carries globalSeq {global_seq}")]
    Sequence { line: u64, global_seq: u64 },
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Debug, Clone)]
pub struct CentralAds {
    sequencer: Sequencer,
    log: Vec<BusinessEvent>,
}

impl CentralAds {
    pub fn new(id_mode: IdMode) -> Self {
        CentralAds { sequencer: Sequencer::new(id_mode), log: Vec::new() }
    }

    pub fn submit(&mut self, instruction: &SubmissionInstruction) -> Result<BusinessEvent, SubmitError> {
        let event = self.sequencer.sequence(instruction)?;
        self.log.push(event.clone());
        Ok(event)
    }

    pub fn head_seq(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn entries(&self) -> &[BusinessEvent] {
        &self.log
    }

    /// Materialized states; always equal to `replay(entries())`.
    pub fn snapshot(&self) -> StateMap {
        self.sequencer.states().clone()
    }

    /// Canonical log file content: one event per line, line n has globalSeq n.
    pub fn log_bytes(&self) -> Vec<u8> {
        events_to_lines(&self.log)
    }

    pub fn write_log(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.log_bytes())
    }

    /// Rebuilds a store from an `ads.log` file, checking every line.
    pub fn load_log(path: impl AsRef<Path>, id_mode: IdMode) -> Result<Self, LogError> {
        let events = read_event_lines(io::BufReader::new(fs::File::open(path)?))?;
        for (i, e) in events.iter().enumerate() {
            let line = i as u64 + 1;
            if e.global_seq != line {
                return Err(LogError::Sequence { line, global_seq: e.global_seq });
            }
        }
        let states = replay(&events)?;
        let sequencer = Sequencer { id_mode, head_seq: events.len() as u64, states };
        Ok(CentralAds { sequencer, log: events })
    }
}

impl EventSource for CentralAds {
    fn head_seq(&self) -> u64 {
        CentralAds::head_seq(self)
    }

    fn poll(&self, cursor: Cursor, max_events: usize) -> Result<(Vec<BusinessEvent>, Cursor), PollError> {
        poll_slice(&self.log, cursor, max_events)
    }
}

/// Newline-terminated canonical events.
pub fn events_to_lines(events: &[BusinessEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in events {
        out.extend(event::canonical_bytes(e).expect("logged events satisfy invariants"));
        out.push(b'\n');
    }
    out
}

/// Reads canonical event lines, rejecting any line not already canonical.
pub fn read_event_lines(reader: impl BufRead) -> Result<Vec<BusinessEvent>, LogError> {
    let mut events = Vec::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let event = event::parse_canonical(&line).map_err(|source| LogError::Parse { line: i as u64 + 1, source })?;
        events.push(event);
    }
    Ok(events)
}

/// Single-writer, many-reader handle. Writes serialize through the lock;
/// readers always see a complete prefix of the log.
#[derive(Debug, Clone)]
pub struct SharedCentralAds(Arc<RwLock<CentralAds>>);

impl SharedCentralAds {
    pub fn new(ads: CentralAds) -> Self {
        SharedCentralAds(Arc::new(RwLock::new(ads)))
    }

    pub fn submit(&self, instruction: &SubmissionInstruction) -> Result<BusinessEvent, SubmitError> {
        self.0.write().submit(instruction)
    }

    pub fn snapshot(&self) -> StateMap {
        self.0.read().snapshot()
    }

    pub fn read<R>(&self, f: impl FnOnce(&CentralAds) -> R) -> R {
        f(&self.0.read())
    }
}

impl EventSource for SharedCentralAds {
    fn head_seq(&self) -> u64 {
        self.0.read().head_seq()
    }

    fn poll(&self, cursor: Cursor, max_events: usize) -> Result<(Vec<BusinessEvent>, Cursor), PollError> {
        self.0.read().poll(cursor, max_events)
    }
}

/// Writes a state map as canonical JSON followed by a newline.
pub fn write_snapshot(states: &StateMap, mut out: impl Write) -> io::Result<()> {
    out.write_all(&canonical::to_canonical(states))?;
    out.write_all(b"\n")
}
