//! Synonym mapping between the standard trade model and a broker-dealer's
//! internal data model (IDM).
//!
//! The IDM is deliberately divergent: renamed columns, compact dates,
//! proprietary status codes, and only the mapped subset of fields.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::canonical::u64_str;
use crate::decimal::{is_canonical, Decimal};
use crate::event::{parse_iso_date, EventId, TradeId};
use crate::state::{TradeState, TradeStatus};

pub const COL_TRADE_ID: &str = "TRD_ID";
pub const COL_STATUS: &str = "STATUS_CD";
pub const COL_VERSION: &str = "VER_NUM";
const FIXED_COLUMNS: [&str; 3] = [COL_TRADE_ID, COL_STATUS, COL_VERSION];

pub fn status_code(status: TradeStatus) -> &'static str {
    match status {
        TradeStatus::Executed => "NEW",
        TradeStatus::Confirmed => "CONF",
        TradeStatus::Settled => "SETL",
        TradeStatus::Terminated => "TERM",
    }
}

pub fn status_from_code(code: &str) -> Option<TradeStatus> {
    TradeStatus::ALL.into_iter().find(|s| status_code(*s) == code)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MappingError {
    #[error("field {field:?} cannot be mapped (value {value:?})")]
    UnmappableField { field: String, value: Option<String> },
    #[error("unknown status code {0:?}")]
    UnknownStatusCode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynonymMapError {
    #[error("duplicate standard field {0:?}")]
    DuplicateStandardField(String),
    #[error("duplicate IDM column {0:?}")]
    DuplicateColumn(String),
    #[error("IDM column {0:?} collides with a fixed column")]
    ReservedColumn(String),
}

/// A value converter. Each is a bijection between its forward domain and its
/// inverse domain; inputs outside the domain are rejected, never coerced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Converter {
    Identity,
    /// `YYYY-MM-DD` ↔ `YYYYMMDD`.
    DateCompact,
    /// Canonical decimal with at most 2 fraction digits ↔ exactly 2 fraction digits.
    DecimalScale2,
}

impl Converter {
    pub fn forward(self, value: &str) -> Option<String> {
        match self {
            Converter::Identity => Some(value.to_string()),
            Converter::DateCompact => parse_iso_date(value).map(|d| d.format("%Y%m%d").to_string()),
            Converter::DecimalScale2 => {
                if !is_canonical(value) {
                    return None;
                }
                value.parse::<Decimal>().ok()?.to_fixed(2)
            }
        }
    }

    pub fn inverse(self, value: &str) -> Option<String> {
        match self {
            Converter::Identity => Some(value.to_string()),
            Converter::DateCompact => {
                if value.len() != 8 || !value.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                let iso = format!("{}-{}-{}", &value[..4], &value[4..6], &value[6..]);
                parse_iso_date(&iso).map(|_| iso)
            }
            Converter::DecimalScale2 => {
                let d: Decimal = value.parse().ok()?;
                let canonical = d.to_string();
                // only the exact image of a canonical value is in the domain
                (self.forward(&canonical).as_deref() == Some(value)).then_some(canonical)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SynonymEntry {
    pub standard_field_path: String,
    pub idm_column_name: String,
    pub converter_id: Converter,
}

impl SynonymEntry {
    pub fn new(standard: &str, column: &str, converter: Converter) -> Self {
        SynonymEntry {
            standard_field_path: standard.to_string(),
            idm_column_name: column.to_string(),
            converter_id: converter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SynonymMapWire", into = "SynonymMapWire")]
pub struct SynonymMap {
    entries: Vec<SynonymEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynonymMapWire {
    entries: Vec<SynonymEntry>,
}

impl TryFrom<SynonymMapWire> for SynonymMap {
    type Error = SynonymMapError;

    fn try_from(w: SynonymMapWire) -> Result<Self, Self::Error> {
        SynonymMap::new(w.entries)
    }
}

impl From<SynonymMap> for SynonymMapWire {
    fn from(m: SynonymMap) -> Self {
        SynonymMapWire { entries: m.entries }
    }
}

impl SynonymMap {
    pub fn new(entries: Vec<SynonymEntry>) -> Result<Self, SynonymMapError> {
        let mut fields = BTreeSet::new();
        let mut columns = BTreeSet::new();
        for e in &entries {
            if FIXED_COLUMNS.contains(&e.idm_column_name.as_str()) {
                return Err(SynonymMapError::ReservedColumn(e.idm_column_name.clone()));
            }
            if !fields.insert(e.standard_field_path.as_str()) {
                return Err(SynonymMapError::DuplicateStandardField(e.standard_field_path.clone()));
            }
            if !columns.insert(e.idm_column_name.as_str()) {
                return Err(SynonymMapError::DuplicateColumn(e.idm_column_name.clone()));
            }
        }
        Ok(SynonymMap { entries })
    }

    /// The mapping used by default broker-dealer configurations.
    pub fn standard() -> Self {
        use Converter::*;
        SynonymMap::new(vec![
            SynonymEntry::new("tradeDate", "TRD_DT", DateCompact),
            SynonymEntry::new("quantity", "QTY", Identity),
            SynonymEntry::new("price", "PX", DecimalScale2),
            SynonymEntry::new("currency", "CCY", Identity),
            SynonymEntry::new("productRef", "PROD_CD", Identity),
            SynonymEntry::new("buyerParty", "BUY_CPTY", Identity),
            SynonymEntry::new("sellerParty", "SELL_CPTY", Identity),
            SynonymEntry::new("collateralPosted", "COLL_AMT", Identity),
        ])
        .expect("standard map is well formed")
    }

    pub fn entries(&self) -> &[SynonymEntry] {
        &self.entries
    }

    pub fn entry_for_field(&self, field: &str) -> Option<&SynonymEntry> {
        self.entries.iter().find(|e| e.standard_field_path == field)
    }
}

/// A trade record in a broker-dealer's proprietary format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdmRecord {
    pub trd_id: String,
    /// Proprietary status code; kept as text so corrupt records stay representable.
    pub status_cd: String,
    pub ver_num: u64,
    /// One column per synonym entry.
    pub columns: BTreeMap<String, String>,
}

impl Serialize for IdmRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = Map::new();
        for (k, v) in &self.columns {
            map.insert(k.clone(), Value::String(v.clone()));
        }
        map.insert(COL_TRADE_ID.into(), Value::String(self.trd_id.clone()));
        map.insert(COL_STATUS.into(), Value::String(self.status_cd.clone()));
        map.insert(COL_VERSION.into(), Value::String(self.ver_num.to_string()));
        Value::Object(map).serialize(s)
    }
}

impl<'de> Deserialize<'de> for IdmRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let map = BTreeMap::<String, String>::deserialize(d)?;
        let mut columns = map;
        let mut take = |k: &str| columns.remove(k).ok_or_else(|| D::Error::custom(format!("missing column {k}")));
        let trd_id = take(COL_TRADE_ID)?;
        let status_cd = take(COL_STATUS)?;
        let ver = take(COL_VERSION)?;
        let ver_num = u64_str::parse_u64(&ver).ok_or_else(|| D::Error::custom(format!("bad {COL_VERSION} {ver:?}")))?;
        Ok(IdmRecord { trd_id, status_cd, ver_num, columns })
    }
}

/// A (possibly partial) view of a trade: a full [`TradeState`] or the subset
/// recoverable from an IDM record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TradeView {
    pub trade_id: TradeId,
    pub status: TradeStatus,
    #[serde(with = "u64_str")]
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_event_id: Option<EventId>,
    pub fields: BTreeMap<String, String>,
}

impl TradeState {
    /// Full view of this state.
    pub fn to_view(&self) -> TradeView {
        TradeView {
            trade_id: self.trade_id.clone(),
            status: self.status,
            version: self.version,
            last_event_id: Some(self.last_event_id.clone()),
            fields: self.economics.clone(),
        }
    }

    /// This state restricted to the mapped fields plus status and version, the
    /// shape [`from_idm`] recovers.
    pub fn restrict(&self, map: &SynonymMap) -> TradeView {
        TradeView {
            trade_id: self.trade_id.clone(),
            status: self.status,
            version: self.version,
            last_event_id: None,
            fields: map
                .entries()
                .iter()
                .filter_map(|e| {
                    self.economics.get(&e.standard_field_path).map(|v| (e.standard_field_path.clone(), v.clone()))
                })
                .collect(),
        }
    }
}

/// Transforms a trade state into the internal data model.
pub fn to_idm(state: &TradeState, map: &SynonymMap) -> Result<IdmRecord, MappingError> {
    let mut columns = BTreeMap::new();
    for e in map.entries() {
        let value = state
            .economics
            .get(&e.standard_field_path)
            .ok_or_else(|| MappingError::UnmappableField { field: e.standard_field_path.clone(), value: None })?;
        let converted = e.converter_id.forward(value).ok_or_else(|| MappingError::UnmappableField {
            field: e.standard_field_path.clone(),
            value: Some(value.clone()),
        })?;
        columns.insert(e.idm_column_name.clone(), converted);
    }
    Ok(IdmRecord {
        trd_id: state.trade_id.as_str().to_string(),
        status_cd: status_code(state.status).to_string(),
        ver_num: state.version,
        columns,
    })
}

/// Recovers the shared fields of a trade from an IDM record.
pub fn from_idm(record: &IdmRecord, map: &SynonymMap) -> Result<TradeView, MappingError> {
    let status =
        status_from_code(&record.status_cd).ok_or_else(|| MappingError::UnknownStatusCode(record.status_cd.clone()))?;
    let trade_id = TradeId::new(record.trd_id.clone()).map_err(|_| MappingError::UnmappableField {
        field: COL_TRADE_ID.into(),
        value: Some(record.trd_id.clone()),
    })?;
    let mut fields = BTreeMap::new();
    for e in map.entries() {
        fields.insert(e.standard_field_path.clone(), inverse_column(record, e)?);
    }
    Ok(TradeView { trade_id, status, version: record.ver_num, last_event_id: None, fields })
}

/// Normalizes one mapped column back into its standard-model value.
pub fn inverse_column(record: &IdmRecord, entry: &SynonymEntry) -> Result<String, MappingError> {
    let raw = record
        .columns
        .get(&entry.idm_column_name)
        .ok_or_else(|| MappingError::UnmappableField { field: entry.standard_field_path.clone(), value: None })?;
    entry.converter_id.inverse(raw).ok_or_else(|| MappingError::UnmappableField {
        field: entry.standard_field_path.clone(),
        value: Some(raw.clone()),
    })
}
