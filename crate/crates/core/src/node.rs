//! Broker-dealer node.
//!
//! A node consumes business events from the central API or a ledger node,
//! keeps a local event log and optionally replicated trades, transforms trades
//! into the internal data model for legacy applications, and serves per-app
//! views. The eight adoption scenarios are eight canonical configurations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::canonical::{self, sha256_hex};
use crate::central::{events_to_lines, Cursor, EventSource, PollError};
use crate::event::{BusinessEvent, EventId, TradeId, PRIVATE_PREFIX};
use crate::state::{apply_event, replay, state_digest, ApplyError, StateMap, TradeState};
use crate::synonym::{from_idm, to_idm, IdmRecord, MappingError, SynonymMap, TradeView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 8] = [
        ScenarioId::S1,
        ScenarioId::S2,
        ScenarioId::S3,
        ScenarioId::S4,
        ScenarioId::S5,
        ScenarioId::S6,
        ScenarioId::S7,
        ScenarioId::S8,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    /// s5–s8 belong to the decentralised (ledger) model.
    pub fn is_decentralised(self) -> bool {
        self.number() >= 5
    }

    /// Position within its model: s1/s5 → 1, …, s4/s8 → 4.
    pub fn integration_level(self) -> u8 {
        (self.number() - 1) % 4 + 1
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("configuration violates {scenario}: {reason}")]
    ScenarioViolation { scenario: ScenarioId, reason: String },
}

impl FromStr for ScenarioId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| ConfigError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventSourceKind {
    CentralApi,
    OwnLedgerNode,
    FmiHostedLedgerNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LocalAdsMode {
    None,
    EventLogOnly,
    ReplicatedTrades,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Routing {
    Cdm,
    Idm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NodeConfig {
    pub scenario_id: ScenarioId,
    pub event_source: EventSourceKind,
    pub local_ads: LocalAdsMode,
    pub app_routing: BTreeMap<String, Routing>,
    pub synonym_map: SynonymMap,
}

pub const APP_RISK: &str = "risk";
pub const APP_SETTLEMENTS: &str = "settlements";

/// Canonical configuration for a scenario.
pub fn configure(scenario: ScenarioId) -> NodeConfig {
    let event_source = match scenario.number() {
        1..=4 => EventSourceKind::CentralApi,
        5 | 6 => EventSourceKind::FmiHostedLedgerNode,
        _ => EventSourceKind::OwnLedgerNode,
    };
    let level = scenario.integration_level();
    let local_ads = if level == 1 { LocalAdsMode::EventLogOnly } else { LocalAdsMode::ReplicatedTrades };
    let (risk, settlements) = match level {
        1 | 2 => (Routing::Idm, Routing::Idm),
        3 => (Routing::Cdm, Routing::Idm),
        _ => (Routing::Cdm, Routing::Cdm),
    };
    NodeConfig {
        scenario_id: scenario,
        event_source,
        local_ads,
        app_routing: BTreeMap::from([(APP_RISK.into(), risk), (APP_SETTLEMENTS.into(), settlements)]),
        synonym_map: SynonymMap::standard(),
    }
}

/// [`configure`] from a textual scenario id such as `"s3"`.
pub fn configure_str(scenario: &str) -> Result<NodeConfig, ConfigError> {
    Ok(configure(scenario.parse()?))
}

impl NodeConfig {
    /// Checks the scenario invariant table. App routing may be customized as
    /// long as the scenario's routing shape (all idm / mixed / all cdm) holds.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = self.scenario_id;
        let violation = |reason: &str| Err(ConfigError::ScenarioViolation { scenario: s, reason: reason.into() });
        let canonical = configure(s);
        if self.event_source != canonical.event_source {
            return violation("event source");
        }
        if self.local_ads != canonical.local_ads {
            return violation("local ADS mode");
        }
        let cdm = self.app_routing.values().filter(|r| **r == Routing::Cdm).count();
        let idm = self.app_routing.len() - cdm;
        let ok = match s.integration_level() {
            1 | 2 => cdm == 0,
            3 => cdm > 0 && idm > 0,
            _ => idm == 0,
        };
        if !ok {
            return violation("app routing");
        }
        Ok(())
    }

    pub fn has_idm_apps(&self) -> bool {
        self.app_routing.values().any(|r| *r == Routing::Idm)
    }
}

/// Proprietary-format trade records plus an idempotency guard.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InternalDataStore {
    pub records: BTreeMap<String, IdmRecord>,
    pub applied_event_ids: BTreeSet<EventId>,
}

impl InternalDataStore {
    /// Inserts or replaces a record. VER_NUM never decreases for a TRD_ID.
    pub fn upsert(&mut self, record: IdmRecord) -> bool {
        match self.records.get(&record.trd_id) {
            Some(existing) if existing.ver_num > record.ver_num => false,
            _ => {
                self.records.insert(record.trd_id.clone(), record);
                true
            }
        }
    }

    /// One canonical record per line, ordered by TRD_ID.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for record in self.records.values() {
            out.extend(canonical::to_canonical(record));
            out.push(b'\n');
        }
        out
    }

    pub fn from_jsonl(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        let mut store = InternalDataStore::default();
        for line in bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
            let record: IdmRecord = serde_json::from_slice(line)?;
            store.records.insert(record.trd_id.clone(), record);
        }
        Ok(store)
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_jsonl())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalAds {
    pub event_log: Vec<BusinessEvent>,
    /// Present iff the node keeps replicated trades.
    pub trades: Option<StateMap>,
    pub private_store: BTreeMap<TradeId, BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NodeError {
    #[error("unknown app {0:?}")]
    UnknownApp(String),
    #[error("app {0:?} reads standard events but the node keeps no replicated trades")]
    NoLocalAds(String),
    #[error("unknown trade {0}")]
    UnknownTrade(TradeId),
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestError {
    pub global_seq: u64,
    pub event_id: EventId,
    pub error: NodeError,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub applied: usize,
    pub duplicates: usize,
    pub errors: Vec<IngestError>,
}

impl IngestSummary {
    pub fn has_gap(&self) -> bool {
        self.errors.iter().any(|e| matches!(e.error, NodeError::Apply(ApplyError::LineageGap { .. })))
    }
}

/// Outcome of one consumer poll step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PollStep {
    /// Events returned by the source.
    pub served: usize,
    /// Events handed to ingest after the delivery channel.
    pub delivered: usize,
    pub summary: IngestSummary,
    pub progressed: bool,
}

#[derive(Debug, Clone)]
pub struct BdNode {
    pub id: String,
    config: NodeConfig,
    local: LocalAds,
    /// Fold used by the ETL transform when no replicated trades are kept.
    /// Working memory of the transformer, never exported.
    etl_states: StateMap,
    internal: Option<InternalDataStore>,
    seen: BTreeSet<EventId>,
    applied_seqs: BTreeSet<u64>,
    contiguous: u64,
    read_cursor: u64,
    retried_at: Option<u64>,
    received: u64,
}

impl BdNode {
    pub fn new(id: impl Into<String>, config: NodeConfig) -> Self {
        let trades = (config.local_ads == LocalAdsMode::ReplicatedTrades).then(StateMap::new);
        let internal = config.has_idm_apps().then(InternalDataStore::default);
        BdNode {
            id: id.into(),
            config,
            local: LocalAds { trades, ..LocalAds::default() },
            etl_states: StateMap::new(),
            internal,
            seen: BTreeSet::new(),
            applied_seqs: BTreeSet::new(),
            contiguous: 0,
            read_cursor: 0,
            retried_at: None,
            received: 0,
        }
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn local_ads(&self) -> &LocalAds {
        &self.local
    }

    pub fn internal(&self) -> Option<&InternalDataStore> {
        self.internal.as_ref()
    }

    pub fn internal_mut(&mut self) -> Option<&mut InternalDataStore> {
        self.internal.as_mut()
    }

    /// Highest globalSeq up to which every event has been applied.
    pub fn contiguous_seq(&self) -> u64 {
        self.contiguous
    }

    /// Events handed to [`BdNode::ingest`] so far, duplicates included.
    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn read_cursor(&self) -> u64 {
        self.read_cursor
    }

    fn current_states(&self) -> &StateMap {
        self.local.trades.as_ref().unwrap_or(&self.etl_states)
    }

    fn current_states_mut(&mut self) -> &mut StateMap {
        self.local.trades.as_mut().unwrap_or(&mut self.etl_states)
    }

    /// Applies a batch in globalSeq order. Errors are collected per event and
    /// never abort the batch; already-seen events are counted and skipped.
    pub fn ingest(&mut self, batch: &[BusinessEvent]) -> IngestSummary {
        let mut summary = IngestSummary::default();
        self.received += batch.len() as u64;
        for event in batch {
            if self.seen.contains(&event.event_id) {
                summary.duplicates += 1;
                continue;
            }
            let fail = |error: NodeError| IngestError {
                global_seq: event.global_seq,
                event_id: event.event_id.clone(),
                error,
            };
            let next = match apply_event(self.current_states().get(&event.trade_id), event) {
                Ok(next) => next,
                Err(e) => {
                    summary.errors.push(fail(e.into()));
                    continue;
                }
            };
            let idm = self.internal.is_some().then(|| to_idm(&next, &self.config.synonym_map));
            self.current_states_mut().insert(event.trade_id.clone(), next);
            if self.config.local_ads != LocalAdsMode::None {
                self.local.event_log.push(event.authoritative());
            }
            self.seen.insert(event.event_id.clone());
            self.applied_seqs.insert(event.global_seq);
            while self.applied_seqs.remove(&(self.contiguous + 1)) {
                self.contiguous += 1;
            }
            summary.applied += 1;
            match (idm, self.internal.as_mut()) {
                (Some(Ok(record)), Some(store)) => {
                    store.upsert(record);
                    store.applied_event_ids.insert(event.event_id.clone());
                }
                (Some(Err(e)), _) => summary.errors.push(fail(e.into())),
                _ => {}
            }
        }
        summary
    }

    /// One consumer step: poll the source, pass events through `deliver`
    /// (the transport, where faults live), ingest.
    ///
    /// Reads advance from the highest position seen. When a hole opens below
    /// it, the next step re-polls once from the last contiguous position.
    pub fn poll_step(
        &mut self,
        source: &impl EventSource,
        max_events: usize,
        deliver: impl FnOnce(Vec<BusinessEvent>) -> Vec<BusinessEvent>,
    ) -> Result<PollStep, PollError> {
        let recovering = self.contiguous < self.read_cursor && self.retried_at != Some(self.contiguous);
        let from = if recovering {
            self.retried_at = Some(self.contiguous);
            self.contiguous
        } else {
            self.read_cursor
        };
        let (events, next) = source.poll(Cursor(from), max_events)?;
        let served = events.len();
        let delivered = deliver(events);
        let summary = self.ingest(&delivered);
        let before = self.read_cursor;
        self.read_cursor = self.read_cursor.max(next.0);
        Ok(PollStep {
            served,
            delivered: delivered.len(),
            progressed: self.read_cursor > before || summary.applied > 0,
            summary,
        })
    }

    /// True when the node has read everything up to `head` and has no
    /// recovery poll pending.
    pub fn is_idle(&self, head: u64) -> bool {
        self.read_cursor >= head && (self.contiguous >= self.read_cursor || self.retried_at == Some(self.contiguous))
    }

    /// View of the trades an application consumes.
    pub fn app_view(&self, app_id: &str) -> Result<BTreeMap<TradeId, TradeView>, NodeError> {
        let routing = self.config.app_routing.get(app_id).ok_or_else(|| NodeError::UnknownApp(app_id.to_string()))?;
        match routing {
            Routing::Cdm => {
                let trades = self.local.trades.as_ref().ok_or_else(|| NodeError::NoLocalAds(app_id.to_string()))?;
                Ok(trades
                    .iter()
                    .map(|(id, state)| {
                        let mut view = state.to_view();
                        if let Some(private) = self.local.private_store.get(id) {
                            for (k, v) in private {
                                view.fields.insert(format!("{PRIVATE_PREFIX}{k}"), v.clone());
                            }
                        }
                        (id.clone(), view)
                    })
                    .collect())
            }
            Routing::Idm => {
                let store = self.internal.as_ref().expect("idm-routed app implies an internal store");
                store
                    .records
                    .values()
                    .map(|r| from_idm(r, &self.config.synonym_map).map(|v| (v.trade_id.clone(), v)))
                    .collect::<Result<_, _>>()
                    .map_err(NodeError::from)
            }
        }
    }

    /// Merges broker-dealer private fields for a trade (last writer wins).
    /// The authoritative event log is never touched.
    pub fn enrich_private(
        &mut self,
        trade_id: &TradeId,
        fields: BTreeMap<String, String>,
    ) -> Result<&BTreeMap<String, String>, NodeError> {
        if !self.current_states().contains_key(trade_id) {
            return Err(NodeError::UnknownTrade(trade_id.clone()));
        }
        let entry = self.local.private_store.entry(trade_id.clone()).or_default();
        entry.extend(fields);
        Ok(entry)
    }

    /// The trade states implied by this node's local ADS: replicated trades
    /// when kept, otherwise a replay of the event log.
    pub fn ads_states(&self) -> StateMap {
        match &self.local.trades {
            Some(trades) => trades.clone(),
            None => replay(&self.local.event_log).expect("the local log only holds applied events"),
        }
    }

    pub fn ads_digest(&self) -> String {
        state_digest(&self.ads_states())
    }

    pub fn idm_digest(&self) -> Option<String> {
        self.internal.as_ref().map(InternalDataStore::digest)
    }

    /// Digest over the event log's canonical lines.
    pub fn log_digest(&self) -> String {
        sha256_hex(&events_to_lines(&self.local.event_log))
    }

    /// Distinct persisted trade-data stores: the local ADS (log or replica)
    /// and the internal data store.
    pub fn store_count(&self) -> usize {
        usize::from(self.config.local_ads != LocalAdsMode::None) + usize::from(self.internal.is_some())
    }

    /// Writes `node-<id>-internal.jsonl` (when an internal store exists) and
    /// `node-<id>-ads.jsonl` into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        if let Some(store) = &self.internal {
            std::fs::write(dir.join(format!("node-{}-internal.jsonl", self.id)), store.to_jsonl())?;
        }
        std::fs::write(dir.join(format!("node-{}-ads.jsonl", self.id)), events_to_lines(&self.local.event_log))
    }
}

/// A node shared between an ingestion context and concurrent readers. Each
/// batch is applied under one write lock, so readers see post-batch states.
#[derive(Debug, Clone)]
pub struct SharedBdNode(Arc<RwLock<BdNode>>);

impl SharedBdNode {
    pub fn new(node: BdNode) -> Self {
        SharedBdNode(Arc::new(RwLock::new(node)))
    }

    pub fn ingest(&self, batch: &[BusinessEvent]) -> IngestSummary {
        self.0.write().ingest(batch)
    }

    pub fn app_view(&self, app_id: &str) -> Result<BTreeMap<TradeId, TradeView>, NodeError> {
        self.0.read().app_view(app_id)
    }

    pub fn enrich_private(&self, trade_id: &TradeId, fields: BTreeMap<String, String>) -> Result<(), NodeError> {
        self.0.write().enrich_private(trade_id, fields).map(|_| ())
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut BdNode) -> R) -> R {
        f(&mut self.0.write())
    }
}

/// Replicated-trades state, for callers that only need the standard view.
pub fn trades_of(node: &BdNode) -> Option<&BTreeMap<TradeId, TradeState>> {
    node.local.trades.as_ref()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central::fixtures::{lifecycle, new_trade};
    use crate::central::{CentralAds, IdMode};
    use crate::event::{event_hash, EventType};
    use crate::state::TradeStatus;

    fn central_with(instrs: &[crate::central::SubmissionInstruction]) -> CentralAds {
        let mut ads = CentralAds::new(IdMode::Seeded(11));
        for i in instrs {
            ads.submit(i).unwrap();
        }
        ads
    }

    fn t1_exec_conf() -> CentralAds {
        central_with(&[new_trade("T1", "100", "101.25"), lifecycle("T1", EventType::Confirmation, &[])])
    }

    #[test]
    fn configure_table() {
        let s1 = configure_str("s1").unwrap();
        assert_eq!(s1.event_source, EventSourceKind::CentralApi);
        assert_eq!(s1.local_ads, LocalAdsMode::EventLogOnly);
        assert!(s1.app_routing.values().all(|r| *r == Routing::Idm));
        let s8 = configure_str("s8").unwrap();
        assert_eq!(s8.event_source, EventSourceKind::OwnLedgerNode);
        assert_eq!(s8.local_ads, LocalAdsMode::ReplicatedTrades);
        assert!(s8.app_routing.values().all(|r| *r == Routing::Cdm));
        assert_eq!(configure_str("s9"), Err(ConfigError::UnknownScenario("s9".into())));
        assert_eq!(configure_str("s5").unwrap().event_source, EventSourceKind::FmiHostedLedgerNode);
        assert_eq!(configure_str("s6").unwrap().local_ads, LocalAdsMode::ReplicatedTrades);
        for s in ScenarioId::ALL {
            configure(s).validate().unwrap();
        }
    }

    #[test]
    fn config_validation() {
        let mut c = configure(ScenarioId::S3);
        c.app_routing.insert(APP_RISK.into(), Routing::Idm);
        assert!(c.validate().is_err(), "s3 must stay mixed");
        let mut c = configure(ScenarioId::S2);
        c.local_ads = LocalAdsMode::EventLogOnly;
        assert!(c.validate().is_err());
        let json = canonical::to_canonical_string(&configure(ScenarioId::S3));
        let back: NodeConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, configure(ScenarioId::S3));
        assert!(json.contains(r#""eventSource":"centralApi""#));
        assert!(json.contains(r#""scenarioId":"s3""#));
    }

    #[test]
    fn duplicate_ingest_is_a_no_op() {
        let ads = central_with(&[new_trade("T1", "100", "101.25")]);
        let mut node = BdNode::new("bd1", configure(ScenarioId::S2));
        let first = node.ingest(ads.entries());
        assert_eq!((first.applied, first.duplicates), (1, 0));
        let before = (node.log_digest(), node.ads_digest(), node.idm_digest());
        let second = node.ingest(ads.entries());
        assert_eq!((second.applied, second.duplicates), (0, 1));
        assert_eq!(before, (node.log_digest(), node.ads_digest(), node.idm_digest()));
    }

    #[test]
    fn s2_pipeline() {
        let ads = t1_exec_conf();
        let mut node = BdNode::new("bd2", configure(ScenarioId::S2));
        let summary = node.ingest(ads.entries());
        assert!(summary.errors.is_empty());
        let t1 = TradeId::new("T1").unwrap();
        assert_eq!(node.internal().unwrap().records["T1"].status_cd, "CONF");
        let trade = &trades_of(&node).unwrap()[&t1];
        assert_eq!((trade.status, trade.version), (TradeStatus::Confirmed, 2));
    }

    #[test]
    fn s1_keeps_log_but_no_trades() {
        let ads = t1_exec_conf();
        let mut node = BdNode::new("bd1", configure(ScenarioId::S1));
        node.ingest(ads.entries());
        assert!(trades_of(&node).is_none());
        assert_eq!(node.local_ads().event_log.len(), 2);
        assert_eq!(node.internal().unwrap().records["T1"].status_cd, "CONF");
        assert_eq!(node.ads_states(), ads.snapshot());
        assert_eq!(node.store_count(), 2);
    }

    #[test]
    fn s4_has_single_store() {
        let mut node = BdNode::new("bd4", configure(ScenarioId::S4));
        node.ingest(t1_exec_conf().entries());
        assert!(node.internal().is_none());
        assert_eq!(node.store_count(), 1);
    }

    #[test]
    fn app_views_by_routing() {
        let ads = t1_exec_conf();
        let mut node = BdNode::new("bd3", configure(ScenarioId::S3));
        node.ingest(ads.entries());
        let t1 = TradeId::new("T1").unwrap();
        let idm = node.app_view(APP_SETTLEMENTS).unwrap();
        let mapped: BTreeSet<&str> =
            node.config().synonym_map.entries().iter().map(|e| e.standard_field_path.as_str()).collect();
        assert!(idm[&t1].fields.keys().all(|k| mapped.contains(k.as_str())));
        assert_eq!(idm[&t1], ads.snapshot()[&t1].restrict(&node.config().synonym_map));
        let cdm = node.app_view(APP_RISK).unwrap();
        assert_eq!(cdm[&t1], ads.snapshot()[&t1].to_view());
        assert_eq!(node.app_view("nope"), Err(NodeError::UnknownApp("nope".into())));

        let mut cfg = configure(ScenarioId::S1);
        cfg.app_routing.insert(APP_RISK.into(), Routing::Cdm);
        let mut s1 = BdNode::new("bd1", cfg);
        s1.ingest(ads.entries());
        assert_eq!(s1.app_view(APP_RISK), Err(NodeError::NoLocalAds(APP_RISK.into())));
    }

    #[test]
    fn private_enrichment_is_separate() {
        let ads = t1_exec_conf();
        let mut node = BdNode::new("bd4", configure(ScenarioId::S4));
        node.ingest(ads.entries());
        let t1 = TradeId::new("T1").unwrap();
        let hashes: Vec<String> = node.local_ads().event_log.iter().map(|e| event_hash(e).unwrap()).collect();
        let log = node.log_digest();
        node.enrich_private(&t1, BTreeMap::from([("desk".into(), "rates".into()), ("book".into(), "B1".into())]))
            .unwrap();
        let merged = node.enrich_private(&t1, BTreeMap::from([("desk".into(), "credit".into())])).unwrap();
        assert_eq!(merged["desk"], "credit");
        assert_eq!(merged["book"], "B1");
        let view = node.app_view(APP_RISK).unwrap();
        assert_eq!(view[&t1].fields["private.desk"], "credit");
        assert_eq!(view[&t1].fields["quantity"], "100");
        assert_eq!(log, node.log_digest());
        let after: Vec<String> = node.local_ads().event_log.iter().map(|e| event_hash(e).unwrap()).collect();
        assert_eq!(hashes, after);
        assert_eq!(
            node.enrich_private(&TradeId::new("T9").unwrap(), BTreeMap::new()),
            Err(NodeError::UnknownTrade(TradeId::new("T9").unwrap()))
        );
    }

    #[test]
    fn gap_recovery_repolls_once() {
        let ads = central_with(&[
            new_trade("T1", "100", "101.25"),
            new_trade("T2", "5", "99"),
            lifecycle("T1", EventType::Confirmation, &[]),
            lifecycle("T2", EventType::Confirmation, &[]),
        ]);
        let mut node = BdNode::new("bd2", configure(ScenarioId::S2));
        // first delivery loses seq 1
        let step = node.poll_step(&ads, 10, |evs| evs.into_iter().filter(|e| e.global_seq != 1).collect()).unwrap();
        assert_eq!(step.served, 4);
        assert_eq!(step.delivered, 3);
        assert!(step.summary.has_gap());
        assert_eq!(node.contiguous_seq(), 0);
        assert!(!node.is_idle(4));
        // recovery re-poll gets it back
        let step = node.poll_step(&ads, 10, |evs| evs).unwrap();
        assert_eq!(step.summary.applied, 2);
        assert_eq!(step.summary.duplicates, 2);
        assert_eq!(node.contiguous_seq(), 4);
        assert!(node.is_idle(4));
        assert_eq!(node.ads_states(), ads.snapshot());
    }

    #[test]
    fn permanent_loss_stops_after_one_retry() {
        let ads = central_with(&[new_trade("T1", "100", "101.25"), lifecycle("T1", EventType::Confirmation, &[])]);
        let mut node = BdNode::new("bd1", configure(ScenarioId::S1));
        let drop1 = |evs: Vec<BusinessEvent>| evs.into_iter().filter(|e| e.global_seq != 1).collect();
        node.poll_step(&ads, 10, drop1).unwrap();
        assert!(!node.is_idle(2));
        node.poll_step(&ads, 10, drop1).unwrap();
        assert!(node.is_idle(2));
        assert!(node.internal().unwrap().records.is_empty());
    }

    #[test]
    fn internal_store_versions_never_decrease() {
        let mut store = InternalDataStore::default();
        let rec = |v| IdmRecord { trd_id: "T1".into(), status_cd: "NEW".into(), ver_num: v, columns: BTreeMap::new() };
        assert!(store.upsert(rec(2)));
        assert!(!store.upsert(rec(1)));
        assert_eq!(store.records["T1"].ver_num, 2);
        let bytes = store.to_jsonl();
        assert_eq!(InternalDataStore::from_jsonl(&bytes).unwrap().records, store.records);
    }

    #[test]
    fn concurrent_views_see_whole_batches() {
        let ads = t1_exec_conf();
        let node = SharedBdNode::new(BdNode::new("bd4", configure(ScenarioId::S4)));
        let events = ads.entries().to_vec();
        std::thread::scope(|s| {
            let writer = node.clone();
            s.spawn(move || writer.ingest(&events));
            let reader = node.clone();
            s.spawn(move || {
                for _ in 0..100 {
                    let view = reader.app_view(APP_RISK).unwrap();
                    // batch is applied atomically: either nothing or both events
                    assert!(view.is_empty() || view.values().next().unwrap().version == 2);
                }
            });
        });
    }
}
