//! Multi-context runs: the FMI and every node run on their own threads and
//! talk only through the shared read API or block messages. Message counts
//! depend on scheduling here, so only final states are reported.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, TryRecvError};
use std::thread;

use crate::central::{CentralAds, EventSource, IdMode, SharedCentralAds, SubmissionInstruction};
use crate::harness::run::{check_config, idm_view_digest, Model, RunError, INSTRUCTIONS_PER_TICK, POLL_MAX};
use crate::harness::workload::{generate_workload, WorkloadSpec};
use crate::ledger::{HostedBy, LedgerNode, Orderer};
use crate::node::{configure, BdNode, SharedBdNode};
use crate::state::state_digest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeFinal {
    pub state_digest: String,
    pub idm_view_digest: Option<String>,
    pub ledger_head_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadedOutcome {
    pub authoritative_digest: String,
    pub fmi_head_hash: Option<String>,
    pub nodes: BTreeMap<String, NodeFinal>,
}

fn finals(node: &BdNode, ledger: Option<&LedgerNode>) -> NodeFinal {
    NodeFinal {
        state_digest: node.ads_digest(),
        idm_view_digest: idm_view_digest(node),
        ledger_head_hash: ledger.map(|l| l.head_hash().to_string()),
    }
}

pub fn run_threaded(model: Model, workload: &WorkloadSpec) -> Result<ThreadedOutcome, RunError> {
    check_config(model, workload)?;
    let instructions = generate_workload(workload)?;
    let id_mode = IdMode::Seeded(workload.seed);
    let nodes: Vec<BdNode> =
        workload.broker_dealers.iter().map(|bd| BdNode::new(bd.node_id.clone(), configure(bd.scenario_id))).collect();
    Ok(match model {
        Model::Centralised => centralised(id_mode, &instructions, nodes),
        Model::Decentralised => decentralised(id_mode, &instructions, nodes),
    })
}

fn centralised(id_mode: IdMode, instructions: &[SubmissionInstruction], nodes: Vec<BdNode>) -> ThreadedOutcome {
    let ads = SharedCentralAds::new(CentralAds::new(id_mode));
    let done = AtomicBool::new(false);
    let shared: Vec<SharedBdNode> = nodes.into_iter().map(SharedBdNode::new).collect();
    thread::scope(|s| {
        for node in &shared {
            let (ads, done) = (&ads, &done);
            let apps: Vec<String> = node.with(|n| n.config().app_routing.keys().cloned().collect());
            let finished = AtomicBool::new(false);
            s.spawn(move || {
                let reader = node.clone();
                thread::scope(|inner| {
                    inner.spawn(|| {
                        while !finished.load(Ordering::Acquire) {
                            for app in &apps {
                                // Each view is a consistent post-batch state; errors
                                // (cdm app without replicated trades) are expected.
                                let _ = reader.app_view(app);
                            }
                            thread::yield_now();
                        }
                    });
                    loop {
                        let submitted_all = done.load(Ordering::Acquire);
                        let head = ads.head_seq();
                        let idle = node.with(|n| {
                            if !n.is_idle(head) {
                                n.poll_step(ads, POLL_MAX, |e| e).expect("cursor within head");
                            }
                            n.is_idle(head)
                        });
                        if submitted_all && idle {
                            break;
                        }
                        if idle {
                            thread::yield_now();
                        }
                    }
                    finished.store(true, Ordering::Release);
                });
            });
        }
        for instr in instructions {
            ads.submit(instr).expect("generated instructions are valid");
        }
        done.store(true, Ordering::Release);
    });
    ThreadedOutcome {
        authoritative_digest: state_digest(&ads.snapshot()),
        fmi_head_hash: None,
        nodes: shared.iter().map(|n| n.with(|n| (n.id.clone(), finals(n, None)))).collect(),
    }
}

fn decentralised(id_mode: IdMode, instructions: &[SubmissionInstruction], nodes: Vec<BdNode>) -> ThreadedOutcome {
    let mut orderer = Orderer::new(id_mode);
    let results = thread::scope(|s| {
        let mut senders = Vec::new();
        let mut handles = Vec::new();
        for mut node in nodes {
            let (tx, rx) = mpsc::channel::<Vec<u8>>();
            senders.push(tx);
            handles.push(s.spawn(move || {
                let hosted = if node.config().scenario_id.number() <= 6 { HostedBy::Fmi } else { HostedBy::SelfHosted };
                let mut ledger = LedgerNode::new(node.id.clone(), hosted);
                loop {
                    let mut closed = false;
                    loop {
                        match rx.try_recv() {
                            Ok(line) => {
                                ledger.receive_line(&line);
                            }
                            Err(TryRecvError::Empty) => break,
                            Err(TryRecvError::Disconnected) => {
                                closed = true;
                                break;
                            }
                        }
                    }
                    while !node.is_idle(ledger.head_seq()) {
                        node.poll_step(&ledger, POLL_MAX, |e| e).expect("cursor within head");
                    }
                    if closed {
                        break;
                    }
                    if let Ok(line) = rx.recv() {
                        ledger.receive_line(&line);
                    }
                }
                (node.id.clone(), finals(&node, Some(&ledger)))
            }));
        }
        for batch in instructions.chunks(INSTRUCTIONS_PER_TICK) {
            for instr in batch {
                orderer.submit(instr).expect("generated instructions are valid");
            }
            let line = orderer.propose_block().expect("batch is non-empty").to_line();
            for tx in &senders {
                tx.send(line.clone()).expect("node thread alive");
            }
        }
        drop(senders);
        handles.into_iter().map(|h| h.join().expect("node thread")).collect::<BTreeMap<_, _>>()
    });
    let fmi = orderer.fmi_node();
    ThreadedOutcome {
        authoritative_digest: fmi.state_digest(),
        fmi_head_hash: Some(fmi.head_hash().to_string()),
        nodes: results,
    }
}
