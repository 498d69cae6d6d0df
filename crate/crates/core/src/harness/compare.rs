//! Side-by-side comparison of a centralised and a decentralised run.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::canonical::{self, u64_str};
use crate::harness::run::{MessageCounts, Model, RunReport};

pub const COMPARISON_SCHEMA: &str = "adsim/comparison-report/1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("reports come from different seeds ({0} vs {1})")]
    SeedMismatch(u64, u64),
    #[error("need one centralised and one decentralised report")]
    ModelMismatch,
}

/// Each check compares an instrumented counter against a closed-form value
/// or against the counters kept independently on the receiving side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CrossChecks {
    /// apiDeliveries = Σ over broker-dealers of events received.
    pub api_deliveries_match_receipts: bool,
    /// apiDeliveries = brokerDealers × headSeq.
    pub api_deliveries_closed_form: bool,
    /// blockBroadcasts = blocks × (registeredNodes − 1) = Σ blocks received.
    pub block_broadcasts_closed_form: bool,
    /// totalEventsTransferred = blocks × (registeredNodes − 1) × avgEventsPerBlock = Σ events received.
    pub events_transferred_closed_form: bool,
}

impl CrossChecks {
    pub fn all(&self) -> bool {
        self.api_deliveries_match_receipts
            && self.api_deliveries_closed_form
            && self.block_broadcasts_closed_form
            && self.events_transferred_closed_form
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelCosts {
    pub run_id: String,
    pub converged: bool,
    pub state_digest: String,
    #[serde(with = "u64_str")]
    pub broker_dealers: u64,
    #[serde(with = "u64_str")]
    pub head_seq: u64,
    #[serde(with = "u64_str")]
    pub blocks: u64,
    #[serde(with = "u64_str")]
    pub registered_nodes: u64,
    pub message_counts: MessageCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ComparisonReport {
    pub schema: String,
    #[serde(with = "u64_str")]
    pub seed: u64,
    /// Central snapshot digest equals the FMI ledger node's state digest.
    pub equivalent: bool,
    pub centralised: ModelCosts,
    pub decentralised: ModelCosts,
    /// Exact rational, rendered `n` or `n/d`.
    pub avg_events_per_block: String,
    pub cross_checks: CrossChecks,
}

impl ComparisonReport {
    pub fn to_bytes(&self) -> Vec<u8> {
        canonical::to_canonical(self)
    }
}

fn costs(r: &RunReport) -> ModelCosts {
    ModelCosts {
        run_id: r.run_id.clone(),
        converged: r.converged,
        state_digest: r.authoritative_digest.clone(),
        broker_dealers: r.per_node.len() as u64,
        head_seq: r.head_seq,
        blocks: r.blocks,
        registered_nodes: r.registered_nodes,
        message_counts: r.message_counts,
    }
}

pub fn avg_events_per_block(r: &RunReport) -> Ratio<u64> {
    if r.blocks == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(r.head_seq, r.blocks)
    }
}

/// Reports may be given in either order.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<ComparisonReport, CompareError> {
    let (c, d) = match (a.model, b.model) {
        (Model::Centralised, Model::Decentralised) => (a, b),
        (Model::Decentralised, Model::Centralised) => (b, a),
        _ => return Err(CompareError::ModelMismatch),
    };
    if c.seed != d.seed {
        return Err(CompareError::SeedMismatch(a.seed, b.seed));
    }
    let received: u64 = c.per_node.iter().map(|n| n.events_received).sum();
    let fanout = d.registered_nodes.saturating_sub(1);
    let blocks_received: u64 = d.per_node.iter().filter_map(|n| n.ledger_blocks_received).map(|x| x.0).sum();
    let events_received: u64 = d.per_node.iter().filter_map(|n| n.ledger_events_received).map(|x| x.0).sum();
    let avg = avg_events_per_block(d);
    let transfer_formula = Ratio::from_integer(d.blocks * fanout) * avg;
    let dm = &d.message_counts;
    let cross_checks = CrossChecks {
        api_deliveries_match_receipts: c.message_counts.api_deliveries == received,
        api_deliveries_closed_form: c.message_counts.api_deliveries == c.per_node.len() as u64 * c.head_seq,
        block_broadcasts_closed_form: dm.block_broadcasts == d.blocks * fanout
            && dm.block_broadcasts == blocks_received,
        events_transferred_closed_form: transfer_formula == Ratio::from_integer(dm.total_events_transferred)
            && dm.total_events_transferred == events_received,
    };
    Ok(ComparisonReport {
        schema: COMPARISON_SCHEMA.to_string(),
        seed: c.seed,
        equivalent: c.authoritative_digest == d.authoritative_digest,
        centralised: costs(c),
        decentralised: costs(d),
        avg_events_per_block: avg.to_string(),
        cross_checks,
    })
}
