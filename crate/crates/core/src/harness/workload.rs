//! Seeded workload generation.
//!
//! The generator walks the transition table, so every instruction it emits is
//! accepted by the FMI. Trades are interleaved: at each step it either opens
//! the next trade or advances a randomly chosen open one.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canonical::{self, u64_str, U64Str};
use crate::central::{IdMode, InstructionKind, Sequencer, SubmissionInstruction};
use crate::decimal::Decimal;
use crate::event::{format_iso_date, EventType, TradeId};
use crate::ledger::FMI;
use crate::node::ScenarioId;
use crate::state::{transition, TradeStatus};

const CURRENCIES: [&str; 4] = ["USD", "EUR", "GBP", "JPY"];
const PRODUCTS: [&str; 5] = ["IRS-5Y", "IRS-10Y", "CDS-5Y", "FXF-3M", "XCS-2Y"];
const PARTIES: [&str; 6] = ["BD-A", "BD-B", "BD-C", "BD-D", "BD-E", "BD-F"];
const ENRICH_KEYS: [&str; 4] = ["book", "desk", "strategy", "uti"];
const TERMINATION_REASONS: [&str; 3] = ["maturity", "earlyTermination", "compression"];
const SOURCES: [&str; 2] = ["ecn", "voice"];
const MAX_TRADES: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CountRange {
    #[serde(with = "u64_str")]
    pub min: u64,
    #[serde(with = "u64_str")]
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BrokerDealer {
    pub node_id: String,
    pub scenario_id: ScenarioId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(with = "u64_str")]
    pub seed: u64,
    #[serde(with = "u64_str")]
    pub num_trades: u64,
    /// Lifecycle events drawn per trade after its Execution (uniform, inclusive).
    pub lifecycle_events_per_trade: CountRange,
    pub broker_dealers: Vec<BrokerDealer>,
    pub event_type_weights: BTreeMap<EventType, U64Str>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid workload spec: {0}")]
pub struct InvalidSpec(pub String);

pub fn default_weights() -> BTreeMap<EventType, U64Str> {
    [
        (EventType::Confirmation, 6),
        (EventType::Enrichment, 2),
        (EventType::CollateralMargin, 3),
        (EventType::Settlement, 3),
        (EventType::Novation, 1),
        (EventType::Termination, 1),
    ]
    .into_iter()
    .map(|(t, w)| (t, U64Str(w)))
    .collect()
}

/// Node ids become file-name components, so they are restricted to a safe alphabet.
pub fn is_valid_node_id(id: &str) -> bool {
    !id.is_empty() && id != FMI && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl WorkloadSpec {
    /// A spec with the default lifecycle range (2–4) and weights.
    pub fn new(seed: u64, num_trades: u64, broker_dealers: Vec<BrokerDealer>) -> Self {
        WorkloadSpec {
            seed,
            num_trades,
            lifecycle_events_per_trade: CountRange { min: 2, max: 4 },
            broker_dealers,
            event_type_weights: default_weights(),
        }
    }

    pub fn validate(&self) -> Result<(), InvalidSpec> {
        let bad = |msg: String| Err(InvalidSpec(msg));
        let range = self.lifecycle_events_per_trade;
        if range.min > range.max {
            return bad(format!("lifecycle range min {} exceeds max {}", range.min, range.max));
        }
        if self.num_trades > MAX_TRADES {
            return bad(format!("numTrades above {MAX_TRADES}"));
        }
        if self.event_type_weights.contains_key(&EventType::Execution) {
            return bad("Execution is not a lifecycle event and takes no weight".into());
        }
        if range.max > 0 && self.event_type_weights.values().all(|w| w.0 == 0) {
            return bad("all lifecycle weights are zero".into());
        }
        let mut ids = BTreeSet::new();
        for bd in &self.broker_dealers {
            if !is_valid_node_id(&bd.node_id) {
                return bad(format!("invalid node id {:?}", bd.node_id));
            }
            if !ids.insert(&bd.node_id) {
                return bad(format!("duplicate node id {:?}", bd.node_id));
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        canonical::digest_of(self)
    }
}

/// Parses `bd1=s1,bd2=s4`.
pub fn parse_node_list(csv: &str) -> Result<Vec<BrokerDealer>, InvalidSpec> {
    csv.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (id, scenario) =
                pair.split_once('=').ok_or_else(|| InvalidSpec(format!("expected nodeId=sK, got {pair:?}")))?;
            let scenario_id = scenario.trim().parse().map_err(|e| InvalidSpec(format!("{e}")))?;
            Ok(BrokerDealer { node_id: id.trim().to_string(), scenario_id })
        })
        .collect()
}

fn trade_id(n: u64) -> TradeId {
    TradeId::new(format!("T{n:06}")).expect("non-empty id")
}

/// A random canonical decimal with two fraction digits at most.
fn amount(rng: &mut ChaCha8Rng, max_units: u64) -> String {
    let cents = rng.gen_range(1..=max_units * 100);
    let d: Decimal = format!("{}.{:02}", cents / 100, cents % 100).parse().expect("well-formed");
    d.to_string()
}

struct Walk {
    rng: ChaCha8Rng,
    /// Tracks trade states; also proves every emitted instruction is accepted.
    fmi: Sequencer,
    base_date: NaiveDate,
}

impl Walk {
    fn date(&self, step: usize) -> NaiveDate {
        self.base_date + Days::new(step as u64 / 20)
    }

    fn execution(&mut self, trade: &TradeId, step: usize) -> SubmissionInstruction {
        let rng = &mut self.rng;
        let buyer = *PARTIES.choose(rng).unwrap();
        let seller = *PARTIES.iter().filter(|p| **p != buyer).choose(rng).unwrap();
        let payload = BTreeMap::from([
            ("quantity".to_string(), amount(rng, 5000)),
            ("price".to_string(), amount(rng, 200)),
            ("currency".to_string(), CURRENCIES.choose(rng).unwrap().to_string()),
            ("productRef".to_string(), PRODUCTS.choose(rng).unwrap().to_string()),
            ("buyerParty".to_string(), buyer.to_string()),
            ("sellerParty".to_string(), seller.to_string()),
        ]);
        self.instruction(InstructionKind::NewTrade, trade, EventType::Execution, payload, step)
    }

    fn lifecycle(&mut self, trade: &TradeId, event_type: EventType, step: usize) -> SubmissionInstruction {
        let state = &self.fmi.states()[trade];
        let rng = &mut self.rng;
        let mut payload = BTreeMap::new();
        match event_type {
            EventType::Enrichment => {
                let n = rng.gen_range(1..=2);
                for key in ENRICH_KEYS.choose_multiple(rng, n) {
                    payload.insert(key.to_string(), format!("{key}-{}", rng.gen_range(1..100)));
                }
            }
            EventType::CollateralMargin => {
                payload.insert("collateralAmount".into(), amount(rng, 1000));
                payload.insert("currency".into(), state.economics["currency"].clone());
            }
            EventType::Settlement => {
                let date = self.base_date + Days::new(step as u64 / 20 + 2);
                payload.insert("settlementDate".into(), format_iso_date(date));
            }
            EventType::Novation => {
                let side = if rng.gen_bool(0.5) { "buyerParty" } else { "sellerParty" };
                let old = state.economics[side].clone();
                let taken = [&state.economics["buyerParty"], &state.economics["sellerParty"]];
                let new = PARTIES.iter().filter(|p| !taken.iter().any(|t| t.as_str() == **p)).choose(rng).unwrap();
                payload.insert("oldParty".into(), old);
                payload.insert("newParty".into(), new.to_string());
            }
            EventType::Termination => {
                payload.insert("terminationReason".into(), TERMINATION_REASONS.choose(rng).unwrap().to_string());
            }
            EventType::Confirmation | EventType::Execution => {}
        }
        self.instruction(InstructionKind::Lifecycle, trade, event_type, payload, step)
    }

    fn instruction(
        &mut self,
        kind: InstructionKind,
        trade: &TradeId,
        event_type: EventType,
        payload: BTreeMap<String, String>,
        step: usize,
    ) -> SubmissionInstruction {
        let instr = SubmissionInstruction {
            kind,
            trade_id: trade.clone(),
            event_type,
            payload,
            source: SOURCES.choose(&mut self.rng).unwrap().to_string(),
            effective_date: self.date(step),
        };
        self.fmi.sequence(&instr).expect("generator emits only valid instructions");
        instr
    }
}

struct OpenTrade {
    id: TradeId,
    remaining: u64,
}

pub fn generate_workload(spec: &WorkloadSpec) -> Result<Vec<SubmissionInstruction>, InvalidSpec> {
    spec.validate()?;
    let mut walk = Walk {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        fmi: Sequencer::new(IdMode::Seeded(spec.seed)),
        base_date: NaiveDate::from_ymd_opt(2021, 3, 15).expect("valid date"),
    };
    let lifecycle_types: Vec<(EventType, u64)> =
        spec.event_type_weights.iter().filter(|(_, w)| w.0 > 0).map(|(t, w)| (*t, w.0)).collect();
    let range = spec.lifecycle_events_per_trade;
    let mut out = Vec::new();
    let mut next_trade = 1;
    let mut open: Vec<OpenTrade> = Vec::new();
    while next_trade <= spec.num_trades || !open.is_empty() {
        let can_open = next_trade <= spec.num_trades;
        let pick = walk.rng.gen_range(0..open.len() + usize::from(can_open));
        if pick == open.len() {
            let id = trade_id(next_trade);
            next_trade += 1;
            out.push(walk.execution(&id, out.len()));
            let remaining = walk.rng.gen_range(range.min..=range.max);
            if remaining > 0 {
                open.push(OpenTrade { id, remaining });
            }
            continue;
        }
        let status = walk.fmi.states()[&open[pick].id].status;
        let allowed: Vec<(EventType, u64)> =
            lifecycle_types.iter().copied().filter(|(t, _)| transition(Some(status), *t).is_some()).collect();
        if allowed.is_empty() {
            open.remove(pick);
            continue;
        }
        let dist = WeightedIndex::new(allowed.iter().map(|(_, w)| *w)).expect("positive weights");
        let event_type = allowed[dist.sample(&mut walk.rng)].0;
        let id = open[pick].id.clone();
        out.push(walk.lifecycle(&id, event_type, out.len()));
        open[pick].remaining -= 1;
        if open[pick].remaining == 0 || walk.fmi.states()[&id].status == TradeStatus::Terminated {
            open.remove(pick);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64, trades: u64) -> WorkloadSpec {
        WorkloadSpec::new(seed, trades, vec![BrokerDealer { node_id: "bd1".into(), scenario_id: ScenarioId::S1 }])
    }

    #[test]
    fn deterministic_per_seed() {
        let a = canonical::to_canonical(&generate_workload(&spec(42, 50)).unwrap());
        let b = canonical::to_canonical(&generate_workload(&spec(42, 50)).unwrap());
        let c = canonical::to_canonical(&generate_workload(&spec(43, 50)).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_workload() {
        assert!(generate_workload(&spec(1, 0)).unwrap().is_empty());
    }

    #[test]
    fn size_is_about_four_events_per_trade() {
        let n = generate_workload(&spec(42, 50)).unwrap().len();
        assert!((150..=250).contains(&n), "{n}");
        let executions =
            generate_workload(&spec(42, 50)).unwrap().iter().filter(|i| i.event_type == EventType::Execution).count();
        assert_eq!(executions, 50);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(1, 5);
        s.lifecycle_events_per_trade = CountRange { min: 3, max: 1 };
        assert!(generate_workload(&s).is_err());
        let mut s = spec(1, 5);
        s.event_type_weights.insert(EventType::Execution, U64Str(1));
        assert!(s.validate().is_err());
        let mut s = spec(1, 5);
        s.broker_dealers.push(s.broker_dealers[0].clone());
        assert!(s.validate().is_err());
        let mut s = spec(1, 5);
        s.broker_dealers[0].node_id = "../x".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = spec(7, 3);
        let json = canonical::to_canonical_string(&s);
        assert!(json.contains(r#""eventTypeWeights":{"CollateralMargin":"3""#), "{json}");
        let back: WorkloadSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn node_list_parsing() {
        let nodes = parse_node_list("a=s1, b=s8").unwrap();
        assert_eq!(nodes[1], BrokerDealer { node_id: "b".into(), scenario_id: ScenarioId::S8 });
        assert!(parse_node_list("a:s1").is_err());
        assert!(parse_node_list("a=s9").is_err());
    }
}
