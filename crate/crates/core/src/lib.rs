//! Post-trade authoritative data store simulator.
//!
//! An FMI sequences standardized trade-lifecycle events into an authoritative
//! log (centrally, or ordered into a hash-chained replicated ledger), and
//! broker-dealer nodes consume them under eight adoption scenarios, optionally
//! transforming them into a proprietary internal data model that then has to
//! be reconciled.

pub mod canonical;
pub mod central;
pub mod decimal;
pub mod event;
pub mod harness;
pub mod ledger;
pub mod node;
pub mod recon;
pub mod state;
pub mod synonym;
pub mod wire;

pub use event::{canonical_bytes, event_hash, BusinessEvent, EventId, EventType, TradeId};
pub use state::{apply_event, replay, ApplyError, StateMap, TradeState, TradeStatus};
pub use synonym::{from_idm, to_idm, Converter, IdmRecord, SynonymMap, TradeView};
