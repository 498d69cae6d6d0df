//! Break detection between a broker-dealer's internal store and an
//! authoritative view of the same trades.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canonical::{self, sha256_hex, u64_str};
use crate::node::InternalDataStore;
use crate::state::{state_digest, StateMap, TradeState};
use crate::synonym::{inverse_column, status_from_code, IdmRecord, MappingError, SynonymMap};

/// Stand-in internal value for a column that cannot be normalized.
pub const UNPARSEABLE: &str = "UNPARSEABLE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BreakKind {
    MissingInInternal,
    MissingInAuthoritative,
    FieldMismatch,
    VersionLag,
}

impl BreakKind {
    pub const ALL: [BreakKind; 4] = [
        BreakKind::MissingInInternal,
        BreakKind::MissingInAuthoritative,
        BreakKind::FieldMismatch,
        BreakKind::VersionLag,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Break {
    pub trade_id: String,
    pub kind: BreakKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authoritative_value: Option<String>,
}

impl Break {
    pub fn missing(kind: BreakKind, trade_id: impl Into<String>) -> Self {
        Break { trade_id: trade_id.into(), kind, field_path: None, internal_value: None, authoritative_value: None }
    }

    pub fn version_lag(trade_id: impl Into<String>, internal: u64, authoritative: u64) -> Self {
        Break {
            trade_id: trade_id.into(),
            kind: BreakKind::VersionLag,
            field_path: None,
            internal_value: Some(internal.to_string()),
            authoritative_value: Some(authoritative.to_string()),
        }
    }

    pub fn mismatch(
        trade_id: impl Into<String>,
        field: impl Into<String>,
        internal: Option<String>,
        authoritative: Option<String>,
    ) -> Self {
        Break {
            trade_id: trade_id.into(),
            kind: BreakKind::FieldMismatch,
            field_path: Some(field.into()),
            internal_value: internal,
            authoritative_value: authoritative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BreakReport {
    pub run_id: String,
    #[serde(with = "u64_str")]
    pub compared_trades: u64,
    pub breaks: Vec<Break>,
}

impl BreakReport {
    pub fn counts(&self) -> BTreeMap<BreakKind, u64> {
        let mut counts: BTreeMap<BreakKind, u64> = BreakKind::ALL.into_iter().map(|k| (k, 0)).collect();
        for b in &self.breaks {
            *counts.entry(b.kind).or_default() += 1;
        }
        counts
    }

    pub fn is_clean(&self) -> bool {
        self.breaks.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        canonical::to_canonical(self)
    }

    pub fn file_name(&self) -> String {
        format!("recon-{}.json", self.run_id)
    }

    /// Writes `recon-<runId>.json` into `dir` and returns its path.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> io::Result<PathBuf> {
        let path = dir.as_ref().join(self.file_name());
        std::fs::write(&path, self.to_bytes())?;
        Ok(path)
    }
}

/// Compares trade-id sets, then versions, then status and every mapped field
/// after normalizing the IDM side. A version lag suppresses field comparison
/// for that trade: the internal record is a stale copy, not a corrupt one.
pub fn reconcile(internal: &InternalDataStore, authoritative: &StateMap, map: &SynonymMap) -> BreakReport {
    let mut breaks = Vec::new();
    let auth: BTreeMap<&str, &TradeState> = authoritative.iter().map(|(id, s)| (id.as_str(), s)).collect();
    let ids: BTreeSet<&str> = auth.keys().copied().chain(internal.records.keys().map(String::as_str)).collect();
    for id in &ids {
        match (internal.records.get(*id), auth.get(id)) {
            (None, Some(_)) => breaks.push(Break::missing(BreakKind::MissingInInternal, *id)),
            (Some(_), None) => breaks.push(Break::missing(BreakKind::MissingInAuthoritative, *id)),
            (Some(record), Some(state)) => compare_trade(record, state, map, &mut breaks),
            (None, None) => unreachable!(),
        }
    }
    breaks.sort();
    BreakReport { run_id: run_id(internal, authoritative, map), compared_trades: ids.len() as u64, breaks }
}

fn compare_trade(record: &IdmRecord, state: &TradeState, map: &SynonymMap, out: &mut Vec<Break>) {
    let id = record.trd_id.as_str();
    if record.ver_num < state.version {
        out.push(Break::version_lag(id, record.ver_num, state.version));
        return;
    }
    if record.ver_num > state.version {
        out.push(Break::mismatch(id, "version", Some(record.ver_num.to_string()), Some(state.version.to_string())));
    }
    let status = status_from_code(&record.status_cd);
    if status != Some(state.status) {
        let internal = status.map_or_else(|| UNPARSEABLE.to_string(), |s| s.to_string());
        out.push(Break::mismatch(id, "status", Some(internal), Some(state.status.to_string())));
    }
    for entry in map.entries() {
        let field = &entry.standard_field_path;
        let internal = match inverse_column(record, entry) {
            Ok(v) => Some(v),
            Err(MappingError::UnmappableField { value: None, .. }) => None,
            Err(_) => Some(UNPARSEABLE.to_string()),
        };
        let authoritative = state.economics.get(field).cloned();
        if internal != authoritative {
            out.push(Break::mismatch(id, field.clone(), internal, authoritative));
        }
    }
}

fn run_id(internal: &InternalDataStore, authoritative: &StateMap, map: &SynonymMap) -> String {
    let mut preimage = internal.to_jsonl();
    preimage.extend(state_digest(authoritative).as_bytes());
    preimage.extend(canonical::to_canonical(map));
    sha256_hex(&preimage)[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central::fixtures::{lifecycle, new_trade};
    use crate::central::{CentralAds, IdMode};
    use crate::event::{EventType, TradeId};
    use crate::synonym::to_idm;
    use proptest::prelude::*;

    fn agreeing() -> (InternalDataStore, StateMap, SynonymMap) {
        let mut ads = CentralAds::new(IdMode::Seeded(3));
        ads.submit(&new_trade("T1", "100", "101.25")).unwrap();
        ads.submit(&new_trade("T2", "7", "99.5")).unwrap();
        ads.submit(&new_trade("T3", "1", "1")).unwrap();
        ads.submit(&lifecycle("T1", EventType::Confirmation, &[])).unwrap();
        let map = SynonymMap::standard();
        let states = ads.snapshot();
        let mut store = InternalDataStore::default();
        for s in states.values() {
            store.upsert(to_idm(s, &map).unwrap());
        }
        (store, states, map)
    }

    #[test]
    fn identical_views_have_no_breaks() {
        let (store, states, map) = agreeing();
        let report = reconcile(&store, &states, &map);
        assert!(report.is_clean());
        assert_eq!(report.compared_trades, 3);
        assert_eq!(report, reconcile(&store, &states, &map));
        assert!(report.file_name().starts_with("recon-"));
    }

    #[test]
    fn set_differences() {
        let (mut store, mut states, map) = agreeing();
        store.records.remove("T2");
        let t3 = states.remove(&TradeId::new("T3").unwrap()).unwrap();
        let report = reconcile(&store, &states, &map);
        assert_eq!(
            report.breaks,
            vec![
                Break::missing(BreakKind::MissingInInternal, "T2"),
                Break::missing(BreakKind::MissingInAuthoritative, "T3")
            ]
        );
        assert_eq!(t3.version, 1);
    }

    #[test]
    fn field_mismatch_and_unparseable() {
        let (mut store, states, map) = agreeing();
        store.records.get_mut("T1").unwrap().columns.insert("QTY".into(), "10".into());
        store.records.get_mut("T2").unwrap().columns.insert("TRD_DT".into(), "15/03/2021".into());
        let report = reconcile(&store, &states, &map);
        assert_eq!(
            report.breaks,
            vec![
                Break::mismatch("T1", "quantity", Some("10".into()), Some("100".into())),
                Break::mismatch("T2", "tradeDate", Some(UNPARSEABLE.into()), Some("2021-03-15".into())),
            ]
        );
    }

    #[test]
    fn version_lag_and_ahead() {
        let (mut store, states, map) = agreeing();
        let t1 = store.records.get_mut("T1").unwrap();
        t1.ver_num = 1;
        t1.status_cd = "NEW".into();
        let t2 = store.records.get_mut("T2").unwrap();
        t2.ver_num = 4;
        t2.status_cd = "XXXX".into();
        let report = reconcile(&store, &states, &map);
        assert_eq!(
            report.breaks,
            vec![
                Break::version_lag("T1", 1, 2),
                Break::mismatch("T2", "status", Some(UNPARSEABLE.into()), Some("Executed".into())),
                Break::mismatch("T2", "version", Some("4".into()), Some("1".into())),
            ]
        );
        assert_eq!(report.counts()[&BreakKind::VersionLag], 1);
    }

    #[test]
    fn report_serialization_is_canonical() {
        let (mut store, states, map) = agreeing();
        store.records.remove("T1");
        let report = reconcile(&store, &states, &map);
        let bytes = report.to_bytes();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains(r#"{"kind":"MissingInInternal","tradeId":"T1"}"#), "{text}");
        let back: BreakReport = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
    }

    proptest! {
        // Injecting a known discrepancy set into agreeing views yields exactly that set.
        #[test]
        fn completeness(drop_t1 in any::<bool>(), qty in proptest::option::of("[1-9][0-9]{0,3}"), lag in any::<bool>()) {
            let (mut store, states, map) = agreeing();
            let mut expected = Vec::new();
            if drop_t1 {
                store.records.remove("T1");
                expected.push(Break::missing(BreakKind::MissingInInternal, "T1"));
            }
            if let Some(q) = qty.filter(|q| q != "7") {
                store.records.get_mut("T2").unwrap().columns.insert("QTY".into(), q.clone());
                expected.push(Break::mismatch("T2", "quantity", Some(q), Some("7".into())));
            }
            if lag && !drop_t1 {
                let r = store.records.get_mut("T1").unwrap();
                r.ver_num = 1;
                r.columns.insert("PX".into(), "0.00".into());
                expected.push(Break::version_lag("T1", 1, 2));
            }
            expected.sort();
            prop_assert_eq!(reconcile(&store, &states, &map).breaks, expected);
        }
    }
}
