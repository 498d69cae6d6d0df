mod support;

use adsim_core::central::events_to_lines;
use adsim_core::harness::workload::WorkloadSpec;
use adsim_core::node::ScenarioId::*;
use adsim_core::state::{state_map_bytes, transition, TradeStatus};
use adsim_core::{replay, EventType};

use support::*;

#[test]
fn decimal_oracle_self_check() {
    assert_eq!(decimal_add("0", "250.75"), "250.75");
    assert_eq!(decimal_add("250.75", "49.25"), "300");
    assert_eq!(decimal_add("1.1", "-1.1"), "0");
    assert_eq!(decimal_add("-3", "1.5"), "-1.5");
    assert_eq!(decimal_add("0.0000000001", "0.0000000009"), "0.000000001");
}

#[test]
fn crate_table_matches_oracle_table() {
    let from: Vec<(Option<TradeStatus>, &str)> = std::iter::once((None, "-"))
        .chain(TradeStatus::ALL.into_iter().zip(STATUSES).map(|(s, n)| (Some(s), n)))
        .collect();
    let mut allowed = 0;
    for (status, status_name) in from {
        for (event, event_name) in EventType::ALL.into_iter().zip(EVENT_TYPES) {
            assert_eq!(event.to_string(), event_name);
            let got = transition(status, event).map(|s| s.to_string());
            let want = table_lookup(status_name, event_name).map(str::to_string);
            assert_eq!(got, want, "{status_name} x {event_name}");
            allowed += usize::from(want.is_some());
        }
    }
    assert_eq!(allowed, TABLE.len());
}

#[test]
fn replay_equals_brute_force_fold() {
    for seed in 0..15 {
        let spec = WorkloadSpec::new(seed, 30, nodes(&[S1]));
        let events = sequenced(&spec);
        let log = events_to_lines(&events);
        let oracle = render(&fold_oracle(&log).unwrap());
        assert_eq!(state_map_bytes(&replay(&events).unwrap()), oracle, "seed {seed}");
    }
}

#[test]
fn oracle_rejects_what_the_crate_rejects() {
    let spec = WorkloadSpec::new(3, 10, nodes(&[S1]));
    let events = sequenced(&spec);
    // Drop each event in turn; the remaining log always breaks lineage on
    // the same trade unless the dropped event was the trade's last.
    for skip in 0..events.len() {
        let mut rest = events.clone();
        let gone = rest.remove(skip);
        let ours = replay(&rest).is_ok();
        let theirs = fold_oracle(&events_to_lines(&rest)).is_ok();
        assert_eq!(ours, theirs, "skip seq {}", gone.global_seq);
        let is_last = !events[skip + 1..].iter().any(|e| e.trade_id == gone.trade_id);
        assert_eq!(ours, is_last, "skip seq {}", gone.global_seq);
    }
}
