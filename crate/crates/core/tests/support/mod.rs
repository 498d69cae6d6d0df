//! Independent oracles used by the integration and acceptance tests.
//!
//! Nothing here calls into the state machine, decimal arithmetic or the
//! canonical serializer of the crate under test. Inputs are raw event lines.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use adsim_core::central::{events_to_lines, CentralAds, IdMode};
use adsim_core::harness::faults::{BlockCorruption, FaultSpec, NodeSeq};
use adsim_core::harness::run::{Authority, RunOutcome, INSTRUCTIONS_PER_TICK};
use adsim_core::harness::workload::{generate_workload, BrokerDealer, WorkloadSpec};
use adsim_core::node::ScenarioId;
use adsim_core::recon::{Break, BreakKind};
use adsim_core::state::state_map_bytes;
use adsim_core::BusinessEvent;
use rand::{Rng, RngCore};
use serde_json::{json, Map, Value};

/// Allowed rows of the lifecycle table: (from, event, to). `-` is "no trade".
pub const TABLE: &[(&str, &str, &str)] = &[
    ("-", "Execution", "Executed"),
    ("Executed", "Confirmation", "Confirmed"),
    ("Executed", "Enrichment", "Executed"),
    ("Confirmed", "Enrichment", "Confirmed"),
    ("Confirmed", "CollateralMargin", "Confirmed"),
    ("Confirmed", "Settlement", "Settled"),
    ("Confirmed", "Novation", "Confirmed"),
    ("Executed", "Termination", "Terminated"),
    ("Confirmed", "Termination", "Terminated"),
    ("Settled", "Termination", "Terminated"),
];

pub const STATUSES: [&str; 4] = ["Executed", "Confirmed", "Settled", "Terminated"];
pub const EVENT_TYPES: [&str; 7] =
    ["Execution", "Confirmation", "Enrichment", "CollateralMargin", "Settlement", "Novation", "Termination"];

pub fn table_lookup(from: &str, event: &str) -> Option<&'static str> {
    TABLE.iter().find(|(f, e, _)| *f == from && *e == event).map(|(_, _, t)| *t)
}

// Fixed-point at 10 fraction digits; enough for every generated amount.
const SCALE: u32 = 10;

fn parse_fixed(s: &str) -> i128 {
    let (neg, body) = s.strip_prefix('-').map_or((false, s), |b| (true, b));
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    assert!(frac.len() <= SCALE as usize, "{s}");
    let padded = format!("{frac:0<width$}", width = SCALE as usize);
    let v = int.parse::<i128>().unwrap() * 10i128.pow(SCALE) + padded.parse::<i128>().unwrap();
    if neg {
        -v
    } else {
        v
    }
}

fn render_fixed(v: i128) -> String {
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    let unit = 10u128.pow(SCALE);
    let frac = format!("{:0width$}", a % unit, width = SCALE as usize);
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        format!("{sign}{}", a / unit)
    } else {
        format!("{sign}{}.{frac}", a / unit)
    }
}

pub fn decimal_add(a: &str, b: &str) -> String {
    render_fixed(parse_fixed(a) + parse_fixed(b))
}

fn s<'a>(v: &'a Value, k: &str) -> &'a str {
    v[k].as_str().unwrap_or_else(|| panic!("field {k} missing in {v}"))
}

fn step(prior: Option<&Value>, e: &Value) -> Result<Value, String> {
    let version: u64 = s(e, "version").parse().unwrap();
    match prior {
        None if version != 1 || e.get("previousEventId").is_some() => return Err("lineage".into()),
        Some(p) if version != s(p, "version").parse::<u64>().unwrap() + 1 => return Err("lineage".into()),
        Some(p) if e.get("previousEventId") != p.get("lastEventId") => return Err("lineage".into()),
        _ => {}
    }
    let from = prior.map_or("-", |p| s(p, "status"));
    let kind = s(e, "eventType");
    let to = table_lookup(from, kind).ok_or_else(|| format!("{kind} from {from}"))?;
    let payload = e["payload"].as_object().unwrap();
    let mut econ: Map<String, Value> = prior.map(|p| p["economics"].as_object().unwrap().clone()).unwrap_or_default();
    let pf = |k: &str| payload[k].clone();
    match kind {
        "Execution" => {
            econ.extend(payload.clone());
            econ.insert("tradeDate".into(), e["effectiveDate"].clone());
            econ.insert("collateralPosted".into(), json!("0"));
        }
        "Enrichment" => econ.extend(payload.clone()),
        "CollateralMargin" => {
            let posted = econ.get("collateralPosted").and_then(Value::as_str).unwrap_or("0").to_string();
            econ.insert(
                "collateralPosted".into(),
                json!(decimal_add(&posted, payload["collateralAmount"].as_str().unwrap())),
            );
            econ.insert("collateralCurrency".into(), pf("currency"));
        }
        "Settlement" => {
            econ.insert("settlementDate".into(), pf("settlementDate"));
        }
        "Novation" => {
            let mut hit = false;
            for role in ["buyerParty", "sellerParty"] {
                if econ.get(role) == Some(&pf("oldParty")) {
                    econ.insert(role.into(), pf("newParty"));
                    hit = true;
                }
            }
            if !hit {
                return Err("novation of a non-party".into());
            }
        }
        "Termination" => {
            econ.insert("terminationReason".into(), pf("terminationReason"));
        }
        _ => {}
    }
    Ok(json!({
        "economics": econ,
        "lastEventId": e["eventId"],
        "status": to,
        "tradeId": e["tradeId"],
        "version": version.to_string(),
    }))
}

pub fn parse_lines(log: &[u8]) -> Vec<Value> {
    log.split(|b| *b == b'\n').filter(|l| !l.is_empty()).map(|l| serde_json::from_slice(l).unwrap()).collect()
}

/// Brute force: every trade is rebuilt from scratch by rescanning the whole log.
pub fn fold_oracle(log: &[u8]) -> Result<Value, String> {
    let events = parse_lines(log);
    let trades: BTreeSet<String> = events.iter().map(|e| s(e, "tradeId").to_string()).collect();
    let mut out = Map::new();
    for t in trades {
        let mut state: Option<Value> = None;
        for e in events.iter().filter(|e| s(e, "tradeId") == t) {
            state = Some(step(state.as_ref(), e)?);
        }
        out.insert(t, state.unwrap());
    }
    Ok(Value::Object(out))
}

/// Same fold, but per trade stops at the first event the node never saw.
pub fn truncated_fold(log: &[u8], lost: &BTreeSet<u64>) -> Value {
    let events = parse_lines(log);
    let mut out = Map::new();
    let mut dead = BTreeSet::new();
    for e in &events {
        let t = s(e, "tradeId").to_string();
        let seq: u64 = s(e, "globalSeq").parse().unwrap();
        if dead.contains(&t) || lost.contains(&seq) {
            dead.insert(t);
            continue;
        }
        let next = step(out.get(&t), e).expect("authoritative log folds");
        out.insert(t, next);
    }
    Value::Object(out)
}

/// serde_json's map is sorted and compact output has no whitespace, which for
/// all-string documents is exactly the canonical form.
pub fn render(v: &Value) -> Vec<u8> {
    serde_json::to_vec(v).unwrap()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

pub fn nodes(scenarios: &[ScenarioId]) -> Vec<BrokerDealer> {
    scenarios.iter().enumerate().map(|(i, s)| BrokerDealer { node_id: format!("bd{i}"), scenario_id: *s }).collect()
}

/// Sequences a workload through a fresh central store.
pub fn sequenced(spec: &WorkloadSpec) -> Vec<BusinessEvent> {
    let mut ads = CentralAds::new(IdMode::Seeded(spec.seed));
    for instr in generate_workload(spec).unwrap() {
        ads.submit(&instr).unwrap();
    }
    ads.entries().to_vec()
}

pub fn authority_log(outcome: &RunOutcome) -> Vec<u8> {
    match &outcome.authority {
        Authority::Central(ads) => events_to_lines(ads.entries()),
        Authority::Ledger(node) => {
            let events: Vec<BusinessEvent> = node.chain().iter().flat_map(|b| b.events.clone()).collect();
            events_to_lines(&events)
        }
    }
}

/// Expected breaks for a node that never received `lost`: a trade whose first
/// lost event is its genesis is missing; otherwise the node lags at the
/// version just before the first loss.
pub fn expected_breaks(log: &[u8], lost: &BTreeSet<u64>) -> Vec<Break> {
    let events = parse_lines(log);
    let mut final_version: BTreeMap<String, u64> = BTreeMap::new();
    let mut first_lost: BTreeMap<String, u64> = BTreeMap::new();
    for e in &events {
        let t = s(e, "tradeId").to_string();
        let v: u64 = s(e, "version").parse().unwrap();
        let seq: u64 = s(e, "globalSeq").parse().unwrap();
        final_version.insert(t.clone(), v);
        if lost.contains(&seq) {
            first_lost.entry(t).or_insert(v);
        }
    }
    let mut out: Vec<Break> = first_lost
        .into_iter()
        .map(|(t, v)| {
            if v == 1 {
                Break::missing(BreakKind::MissingInInternal, t)
            } else {
                Break::version_lag(t.clone(), v - 1, final_version[&t])
            }
        })
        .collect();
    out.sort();
    out
}

/// Global sequence numbers carried by ledger block `index` when blocks are
/// cut every `per_block` events.
pub fn block_seqs(index: u64, per_block: u64, head: u64) -> std::ops::RangeInclusive<u64> {
    let first = (index - 1) * per_block + 1;
    first..=(index * per_block).min(head)
}

/// Seqs a node never applies: its own drops, plus everything from the first
/// corrupted block onwards (ledger nodes never get past a rejected block).
pub fn lost_seqs(faults: &FaultSpec, node_id: &str, head: u64) -> BTreeSet<u64> {
    let mut lost = faults.drops_for(node_id);
    if let Some(first) = faults.corrupt_block.iter().map(|c| c.block_index).min() {
        let from = *block_seqs(first, INSTRUCTIONS_PER_TICK as u64, head).start();
        lost.extend(from..=head);
    }
    lost
}

/// Random faults over a fault-free run's shape. `block_lens[k-1]` is the wire
/// length of block k; empty in the centralised model.
pub fn random_faults(rng: &mut impl Rng, node_ids: &[String], head: u64, block_lens: &[usize]) -> FaultSpec {
    let mut spec = FaultSpec::none();
    let pick = |rng: &mut dyn RngCore| NodeSeq {
        node_id: node_ids[rng.gen_range(0..node_ids.len())].clone(),
        global_seq: rng.gen_range(1..=head),
    };
    for _ in 0..rng.gen_range(0..=3) {
        spec.drop_deliveries.push(pick(rng));
    }
    for _ in 0..rng.gen_range(0..=2) {
        spec.duplicate_deliveries.push(pick(rng));
    }
    if !block_lens.is_empty() && rng.gen_bool(0.25) {
        let k = rng.gen_range(1..=block_lens.len());
        spec.corrupt_block
            .push(BlockCorruption { block_index: k as u64, byte_offset: rng.gen_range(0..block_lens[k - 1]) as u64 });
    }
    if spec.drop_deliveries.is_empty() && spec.corrupt_block.is_empty() {
        spec.drop_deliveries.push(pick(rng));
    }
    spec
}

/// Compares every node of a faulted run against the fault-diff oracle.
/// Returns the mismatches; empty means the run matched exactly.
pub fn oracle_mismatches(outcome: &RunOutcome, faults: &FaultSpec) -> Vec<String> {
    let log = authority_log(outcome);
    let head = outcome.report.head_seq;
    let mut out = Vec::new();
    for node in &outcome.nodes {
        let lost = lost_seqs(faults, &node.id, head);
        let expected_state = render(&truncated_fold(&log, &lost));
        if state_map_bytes(&node.ads_states()) != expected_state {
            out.push(format!("{}: local ADS differs from the truncated fold", node.id));
        }
        match (node.internal(), outcome.recon.get(&node.id)) {
            (Some(_), Some(report)) => {
                let expected = expected_breaks(&log, &lost);
                if report.breaks != expected {
                    out.push(format!("{}: breaks {:?} expected {:?}", node.id, report.breaks, expected));
                }
            }
            (None, None) => {}
            _ => out.push(format!("{}: reconciliation ran for a node without a store or vice versa", node.id)),
        }
        let per_node = outcome.report.per_node.iter().find(|n| n.node_id == node.id).unwrap();
        let any_break = per_node.break_counts.values().any(|c| c.0 > 0);
        if !lost.is_empty() && outcome.report.converged {
            out.push(format!("{}: lost {} events but the run converged", node.id, lost.len()));
        }
        if !lost.is_empty() && node.internal().is_some() && !any_break {
            out.push(format!("{}: lost events without a break", node.id));
        }
    }
    out
}
