//! Fault specifications injected into the transport between FMI and nodes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::canonical::{self, u64_str};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NodeSeq {
    pub node_id: String,
    #[serde(with = "u64_str")]
    pub global_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BlockCorruption {
    #[serde(with = "u64_str")]
    pub block_index: u64,
    #[serde(with = "u64_str")]
    pub byte_offset: u64,
}

/// Drops are permanent: every delivery of that event to that node is lost.
/// Duplicates re-deliver an event (and, in the ledger model, the block that
/// carries it) a second time. Corruptions flip the low bit of one byte of a
/// block's wire form in every broadcast copy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FaultSpec {
    #[serde(default)]
    pub drop_deliveries: Vec<NodeSeq>,
    #[serde(default)]
    pub corrupt_block: Vec<BlockCorruption>,
    #[serde(default)]
    pub duplicate_deliveries: Vec<NodeSeq>,
}

impl FaultSpec {
    pub fn none() -> Self {
        FaultSpec::default()
    }

    pub fn is_empty(&self) -> bool {
        self.drop_deliveries.is_empty() && self.corrupt_block.is_empty() && self.duplicate_deliveries.is_empty()
    }

    pub fn digest(&self) -> String {
        canonical::digest_of(self)
    }

    pub fn drops_for(&self, node_id: &str) -> BTreeSet<u64> {
        seqs_for(&self.drop_deliveries, node_id)
    }

    pub fn duplicates_for(&self, node_id: &str) -> BTreeSet<u64> {
        seqs_for(&self.duplicate_deliveries, node_id)
    }

    pub fn corruptions_of(&self, block_index: u64) -> impl Iterator<Item = u64> + '_ {
        self.corrupt_block.iter().filter(move |c| c.block_index == block_index).map(|c| c.byte_offset)
    }
}

fn seqs_for(list: &[NodeSeq], node_id: &str) -> BTreeSet<u64> {
    list.iter().filter(|f| f.node_id == node_id).map(|f| f.global_seq).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let spec: FaultSpec = serde_json::from_str(r#"{"dropDeliveries":[{"nodeId":"bd1","globalSeq":"3"}]}"#).unwrap();
        assert_eq!(spec.drops_for("bd1"), BTreeSet::from([3]));
        assert!(spec.duplicates_for("bd1").is_empty());
        assert_eq!(
            canonical::to_canonical_string(&spec),
            r#"{"corruptBlock":[],"dropDeliveries":[{"globalSeq":"3","nodeId":"bd1"}],"duplicateDeliveries":[]}"#
        );
        assert!(serde_json::from_str::<FaultSpec>(r#"{"dropDeliveries":[{"nodeId":"a","globalSeq":3}]}"#).is_err());
    }
}
