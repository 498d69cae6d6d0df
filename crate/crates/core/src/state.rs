//! Trade state machine and event-log replay.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canonical::{self, u64_str};
use crate::decimal::Decimal;
use crate::event::{check_payload, format_iso_date, BusinessEvent, EventId, EventType, PayloadError, TradeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TradeStatus {
    Executed,
    Confirmed,
    Settled,
    Terminated,
}

impl TradeStatus {
    pub const ALL: [TradeStatus; 4] =
        [TradeStatus::Executed, TradeStatus::Confirmed, TradeStatus::Settled, TradeStatus::Terminated];
}

impl fmt::Display for TradeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The transition table. `None` for `from` means the trade does not exist yet.
pub fn transition(from: Option<TradeStatus>, event: EventType) -> Option<TradeStatus> {
    use EventType::*;
    use TradeStatus::*;
    match (from, event) {
        (None, Execution) => Some(Executed),
        (None, _) | (Some(_), Execution) => None,
        (Some(Terminated), _) => None,
        (Some(Executed), Confirmation) => Some(Confirmed),
        (Some(s @ (Executed | Confirmed)), Enrichment) => Some(s),
        (Some(Confirmed), CollateralMargin | Novation) => Some(Confirmed),
        (Some(Confirmed), Settlement) => Some(Settled),
        (Some(_), Termination) => Some(Terminated),
        (Some(_), Confirmation | Enrichment | CollateralMargin | Settlement | Novation) => None,
    }
}

/// Current authoritative state of one trade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TradeState {
    pub trade_id: TradeId,
    pub status: TradeStatus,
    #[serde(with = "u64_str")]
    pub version: u64,
    pub last_event_id: EventId,
    pub economics: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("{event_type} not allowed from {}", from.map(|s| s.to_string()).unwrap_or_else(|| "<none>".into()))]
    InvalidTransition { from: Option<TradeStatus>, event_type: EventType },
    #[error("lineage gap on {trade_id}: expected version {expected_version}, got {got_version}")]
    LineageGap { trade_id: TradeId, expected_version: u64, got_version: u64 },
    #[error("missing payload field: {0}")]
    MissingPayloadField(PayloadError),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

impl ApplyError {
    pub fn code(&self) -> &'static str {
        match self {
            ApplyError::InvalidTransition { .. } => "InvalidTransition",
            ApplyError::LineageGap { .. } => "LineageGap",
            ApplyError::MissingPayloadField(_) => "MissingPayloadField",
            ApplyError::InvalidPayload(_) => "InvalidPayload",
        }
    }
}

fn check_lineage(prior: Option<&TradeState>, event: &BusinessEvent) -> Result<(), ApplyError> {
    let (expected_version, expected_prev) = match prior {
        None => (1, None),
        Some(p) => (p.version + 1, Some(&p.last_event_id)),
    };
    let same_trade = prior.is_none_or(|p| p.trade_id == event.trade_id);
    if !same_trade || event.version != expected_version || event.previous_event_id.as_ref() != expected_prev {
        return Err(ApplyError::LineageGap {
            trade_id: event.trade_id.clone(),
            expected_version,
            got_version: event.version,
        });
    }
    Ok(())
}

/// Applies one event to a trade's prior state.
///
/// Lineage is checked first so that a missed delivery surfaces as
/// `LineageGap` rather than as a spurious transition error.
pub fn apply_event(prior: Option<&TradeState>, event: &BusinessEvent) -> Result<TradeState, ApplyError> {
    check_lineage(prior, event)?;
    let from = prior.map(|p| p.status);
    let status = transition(from, event.event_type)
        .ok_or(ApplyError::InvalidTransition { from, event_type: event.event_type })?;
    check_payload(event.event_type, &event.payload).map_err(|e| match e {
        PayloadError::Missing { .. } => ApplyError::MissingPayloadField(e),
        PayloadError::Invalid { .. } => ApplyError::InvalidPayload(e.to_string()),
    })?;

    let mut economics = prior.map(|p| p.economics.clone()).unwrap_or_default();
    let field = |k: &str| event.payload[k].clone();
    match event.event_type {
        EventType::Execution => {
            economics.extend(event.payload.clone());
            economics.insert("tradeDate".into(), format_iso_date(event.effective_date));
            economics.insert("collateralPosted".into(), "0".into());
        }
        EventType::Confirmation => {}
        EventType::Enrichment => economics.extend(event.payload.clone()),
        EventType::CollateralMargin => {
            let posted: Decimal = economics
                .get("collateralPosted")
                .map(String::as_str)
                .unwrap_or("0")
                .parse()
                .map_err(|e| ApplyError::InvalidPayload(format!("collateralPosted: {e}")))?;
            let amount: Decimal = field("collateralAmount")
                .parse()
                .map_err(|e| ApplyError::InvalidPayload(format!("collateralAmount: {e}")))?;
            economics.insert("collateralPosted".into(), (&posted + &amount).to_string());
            economics.insert("collateralCurrency".into(), field("currency"));
        }
        EventType::Settlement => {
            economics.insert("settlementDate".into(), field("settlementDate"));
        }
        EventType::Novation => {
            let old = field("oldParty");
            let mut replaced = false;
            for role in ["buyerParty", "sellerParty"] {
                if let Some(party) = economics.get_mut(role) {
                    if *party == old {
                        *party = field("newParty");
                        replaced = true;
                    }
                }
            }
            if !replaced {
                return Err(ApplyError::InvalidPayload(format!("oldParty {old:?} is not a party to the trade")));
            }
        }
        EventType::Termination => {
            economics.insert("terminationReason".into(), field("terminationReason"));
        }
    }

    Ok(TradeState {
        trade_id: event.trade_id.clone(),
        status,
        version: event.version,
        last_event_id: event.event_id.clone(),
        economics,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayFault {
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error("events out of order: globalSeq follows {previous}")]
    OutOfOrder { previous: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("replay failed at globalSeq {global_seq}: {fault}")]
pub struct ReplayError {
    pub global_seq: u64,
    pub fault: ReplayFault,
}

pub type StateMap = BTreeMap<TradeId, TradeState>;

/// Folds a globally ordered event list into per-trade states.
pub fn replay(events: &[BusinessEvent]) -> Result<StateMap, ReplayError> {
    let mut states = StateMap::new();
    let mut last_seq = 0;
    for event in events {
        if event.global_seq <= last_seq {
            return Err(ReplayError {
                global_seq: event.global_seq,
                fault: ReplayFault::OutOfOrder { previous: last_seq },
            });
        }
        last_seq = event.global_seq;
        apply_into(&mut states, event).map_err(|e| ReplayError { global_seq: event.global_seq, fault: e.into() })?;
    }
    Ok(states)
}

/// Applies `event` to the matching entry of `states`, leaving the map
/// untouched on error.
pub fn apply_into(states: &mut StateMap, event: &BusinessEvent) -> Result<(), ApplyError> {
    let next = apply_event(states.get(&event.trade_id), event)?;
    states.insert(event.trade_id.clone(), next);
    Ok(())
}

/// Canonical serialization of a state map.
pub fn state_map_bytes(states: &StateMap) -> Vec<u8> {
    canonical::to_canonical(states)
}

/// SHA-256 of [`state_map_bytes`].
pub fn state_digest(states: &StateMap) -> String {
    canonical::sha256_hex(&state_map_bytes(states))
}
