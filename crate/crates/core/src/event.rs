//! The standardized business-event vocabulary and its canonical wire form.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::canonical::{self, is_lower_hex, u64_str};
use crate::decimal::is_decimal;

/// 32 lowercase hex characters, unique across the system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EventId(String);

impl EventId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EventId {
    type Error = EventError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if is_lower_hex(&s, 32) {
            Ok(EventId(s))
        } else {
            Err(EventError::InvariantViolation(format!("eventId {s:?} is not 32 lowercase hex chars")))
        }
    }
}

impl FromStr for EventId {
    type Err = EventError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventId::try_from(s.to_string())
    }
}

impl From<EventId> for String {
    fn from(id: EventId) -> String {
        id.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TradeId(String);

impl TradeId {
    pub fn new(id: impl Into<String>) -> Result<Self, EventError> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_control) {
            return Err(EventError::InvariantViolation(format!("invalid tradeId {id:?}")));
        }
        Ok(TradeId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TradeId {
    type Error = EventError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        TradeId::new(s)
    }
}

impl From<TradeId> for String {
    fn from(id: TradeId) -> String {
        id.0
    }
}

impl fmt::Display for TradeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    Execution,
    Confirmation,
    Enrichment,
    CollateralMargin,
    Settlement,
    Novation,
    Termination,
}

impl EventType {
    pub const ALL: [EventType; 7] = [
        EventType::Execution,
        EventType::Confirmation,
        EventType::Enrichment,
        EventType::CollateralMargin,
        EventType::Settlement,
        EventType::Novation,
        EventType::Termination,
    ];

    /// Payload fields this event type must carry. Enrichment has no fixed
    /// fields but must carry at least one.
    pub fn required_fields(self) -> &'static [&'static str] {
        match self {
            EventType::Execution => &["quantity", "price", "currency", "productRef", "buyerParty", "sellerParty"],
            EventType::Confirmation | EventType::Enrichment => &[],
            EventType::CollateralMargin => &["collateralAmount", "currency"],
            EventType::Settlement => &["settlementDate"],
            EventType::Novation => &["oldParty", "newParty"],
            EventType::Termination => &["terminationReason"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventType::Execution => "Execution",
            EventType::Confirmation => "Confirmation",
            EventType::Enrichment => "Enrichment",
            EventType::CollateralMargin => "CollateralMargin",
            EventType::Settlement => "Settlement",
            EventType::Novation => "Novation",
            EventType::Termination => "Termination",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventType {
    type Err = EventError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| EventError::InvariantViolation(format!("unknown eventType {s:?}")))
    }
}

/// Payload fields that must hold a fixed-point decimal string.
pub const DECIMAL_FIELDS: [&str; 3] = ["quantity", "price", "collateralAmount"];
/// Payload fields that must hold an ISO-8601 calendar date.
pub const DATE_FIELDS: [&str; 1] = ["settlementDate"];

/// Economics keys owned by the state machine; enrichment may not overwrite them.
pub const RESERVED_ECONOMICS: [&str; 11] = [
    "quantity",
    "price",
    "currency",
    "productRef",
    "buyerParty",
    "sellerParty",
    "tradeDate",
    "collateralPosted",
    "collateralCurrency",
    "settlementDate",
    "terminationReason",
];

/// Prefix under which broker-dealer private fields are joined into views.
pub const PRIVATE_PREFIX: &str = "private.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("{event_type} payload is missing required field {field:?}")]
    Missing { event_type: EventType, field: String },
    #[error("{event_type} payload field {field:?}: {reason}")]
    Invalid { event_type: EventType, field: String, reason: String },
}

/// Checks a payload against the requirement table.
///
/// Non-enrichment events carry exactly their required fields. Enrichment
/// carries at least one field, none of them reserved.
pub fn check_payload(event_type: EventType, payload: &BTreeMap<String, String>) -> Result<(), PayloadError> {
    let invalid = |field: &str, reason: &str| PayloadError::Invalid {
        event_type,
        field: field.to_string(),
        reason: reason.to_string(),
    };
    if event_type == EventType::Enrichment {
        if payload.is_empty() {
            return Err(PayloadError::Missing { event_type, field: "<any>".into() });
        }
        for key in payload.keys() {
            if key.is_empty() {
                return Err(invalid(key, "empty field name"));
            }
            if RESERVED_ECONOMICS.contains(&key.as_str()) || key.starts_with(PRIVATE_PREFIX) {
                return Err(invalid(key, "reserved field name"));
            }
        }
        return Ok(());
    }
    let required = event_type.required_fields();
    for field in required {
        if !payload.contains_key(*field) {
            return Err(PayloadError::Missing { event_type, field: field.to_string() });
        }
    }
    for (key, value) in payload {
        if !required.contains(&key.as_str()) {
            return Err(invalid(key, "not part of this event type's payload"));
        }
        if DECIMAL_FIELDS.contains(&key.as_str()) && !is_decimal(value) {
            return Err(invalid(key, "not a fixed-point decimal string"));
        }
        if DATE_FIELDS.contains(&key.as_str()) && parse_iso_date(value).is_none() {
            return Err(invalid(key, "not an ISO-8601 date"));
        }
    }
    Ok(())
}

/// Strict `YYYY-MM-DD` parse.
pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    (format_iso_date(date) == s).then_some(date)
}

pub fn format_iso_date(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EventError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("unparseable event: {0}")]
    Parse(String),
}

/// One standardized lifecycle event on a trade.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusinessEvent {
    pub event_id: EventId,
    pub trade_id: TradeId,
    pub event_type: EventType,
    pub version: u64,
    pub previous_event_id: Option<EventId>,
    pub global_seq: u64,
    pub effective_date: NaiveDate,
    pub payload: BTreeMap<String, String>,
    /// Broker-dealer-local enrichment. Never serialized canonically and never
    /// present in an authoritative log.
    pub private_fields: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct EventWire {
    event_id: EventId,
    trade_id: TradeId,
    event_type: EventType,
    #[serde(with = "u64_str")]
    version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    previous_event_id: Option<EventId>,
    #[serde(with = "u64_str")]
    global_seq: u64,
    effective_date: String,
    payload: BTreeMap<String, String>,
}

impl BusinessEvent {
    /// Checks the field invariants required for persistence.
    pub fn validate(&self) -> Result<(), EventError> {
        let fail = |msg: String| Err(EventError::InvariantViolation(msg));
        if self.version == 0 {
            return fail("version must be positive".into());
        }
        if self.global_seq == 0 {
            return fail("globalSeq must be positive".into());
        }
        let genesis = self.version == 1;
        if genesis != self.previous_event_id.is_none() {
            return fail("previousEventId must be absent iff version = 1".into());
        }
        if genesis != (self.event_type == EventType::Execution) {
            return fail("version = 1 iff eventType = Execution".into());
        }
        check_payload(self.event_type, &self.payload).map_err(|e| EventError::InvariantViolation(e.to_string()))
    }

    fn to_wire(&self) -> EventWire {
        EventWire {
            event_id: self.event_id.clone(),
            trade_id: self.trade_id.clone(),
            event_type: self.event_type,
            version: self.version,
            previous_event_id: self.previous_event_id.clone(),
            global_seq: self.global_seq,
            effective_date: format_iso_date(self.effective_date),
            payload: self.payload.clone(),
        }
    }

    /// Copy with private fields stripped, the only form an authoritative log stores.
    pub fn authoritative(&self) -> BusinessEvent {
        BusinessEvent { private_fields: BTreeMap::new(), ..self.clone() }
    }
}

/// Canonical JSON bytes: the wire/file form and the hash preimage.
pub fn canonical_bytes(event: &BusinessEvent) -> Result<Vec<u8>, EventError> {
    event.validate()?;
    Ok(canonical::to_canonical(&event.to_wire()))
}

/// SHA-256 over [`canonical_bytes`], lowercase hex.
pub fn event_hash(event: &BusinessEvent) -> Result<String, EventError> {
    Ok(canonical::sha256_hex(&canonical_bytes(event)?))
}

/// Parses an event from JSON and checks its invariants. Accepts any key order
/// or whitespace; use [`parse_canonical`] to also demand bit-exact input.
pub fn parse_event(bytes: &[u8]) -> Result<BusinessEvent, EventError> {
    let wire: EventWire = serde_json::from_slice(bytes).map_err(|e| EventError::Parse(e.to_string()))?;
    from_wire(wire)
}

fn from_wire(wire: EventWire) -> Result<BusinessEvent, EventError> {
    let effective_date = parse_iso_date(&wire.effective_date)
        .ok_or_else(|| EventError::InvariantViolation(format!("effectiveDate {:?}", wire.effective_date)))?;
    let event = BusinessEvent {
        event_id: wire.event_id,
        trade_id: wire.trade_id,
        event_type: wire.event_type,
        version: wire.version,
        previous_event_id: wire.previous_event_id,
        global_seq: wire.global_seq,
        effective_date,
        payload: wire.payload,
        private_fields: BTreeMap::new(),
    };
    event.validate()?;
    Ok(event)
}

/// Parses an event and requires the input to already be in canonical form.
pub fn parse_canonical(bytes: &[u8]) -> Result<BusinessEvent, EventError> {
    let event = parse_event(bytes)?;
    if canonical_bytes(&event)? != bytes {
        return Err(EventError::Parse("input is not in canonical form".into()));
    }
    Ok(event)
}

impl Serialize for BusinessEvent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_wire().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BusinessEvent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = EventWire::deserialize(d)?;
        from_wire(wire).map_err(serde::de::Error::custom)
    }
}
