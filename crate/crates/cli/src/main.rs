//! `adsim`: run scenarios, reconcile stores, verify chains, compare models.
//!
//! Exit status is 0 when the check passes (converged, zero breaks, valid
//! chain, equivalent), 1 when it does not, and 2 on usage or input errors.

use std::fs;
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adsim_core::canonical;
use adsim_core::central::{read_event_lines, CentralAds, IdMode, SharedCentralAds};
use adsim_core::harness::threaded::run_threaded;
use adsim_core::harness::workload::parse_node_list;
use adsim_core::harness::{compare, execute, FaultSpec, Model, RunReport, WorkloadSpec};
use adsim_core::ledger::verify_chain_lines;
use adsim_core::node::{configure, InternalDataStore, NodeConfig, ScenarioId};
use adsim_core::recon::reconcile;
use adsim_core::wire::serve_tcp;
use adsim_core::{replay, StateMap, SynonymMap};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adsim", version, about = "Post-trade authoritative data store simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded workload through the FMI and a set of broker-dealer nodes.
    Run {
        #[arg(long)]
        model: Model,
        /// Comma-separated `nodeId=sK` pairs.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        trades: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        faults: Option<PathBuf>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory to receive every node store, chain and reconciliation report.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Minimum lifecycle events per trade.
        #[arg(long, default_value_t = 2)]
        min_lifecycle: u64,
        /// Maximum lifecycle events per trade.
        #[arg(long, default_value_t = 4)]
        max_lifecycle: u64,
    },
    /// Run the same workload with one thread per node and print final digests.
    RunThreaded {
        #[arg(long)]
        model: Model,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        trades: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Reconcile an internal store against an authoritative view.
    Reconcile {
        /// IDM records, one canonical JSON object per line.
        #[arg(long)]
        internal: PathBuf,
        /// A state snapshot (JSON object) or an event log (JSON lines).
        #[arg(long)]
        authoritative: PathBuf,
        /// A synonym map, or a node configuration that carries one.
        #[arg(long)]
        synonyms: PathBuf,
        /// Where `recon-<runId>.json` is written.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Verify a persisted chain file.
    VerifyChain {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Compare a centralised and a decentralised run report.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the canonical node configuration of a scenario.
    Config { scenario: ScenarioId },
    /// Serve a central store over newline-delimited JSON on TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7400")]
        listen: String,
        #[arg(long)]
        seed: u64,
        /// Event log to load before serving.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn workload(scenario: &str, trades: u64, seed: u64) -> Result<WorkloadSpec> {
    Ok(WorkloadSpec::new(seed, trades, parse_node_list(scenario)?))
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { model, scenario, trades, seed, faults, out, export, min_lifecycle, max_lifecycle } => {
            let mut spec = workload(&scenario, trades, seed)?;
            spec.lifecycle_events_per_trade.min = min_lifecycle;
            spec.lifecycle_events_per_trade.max = max_lifecycle;
            let faults = match faults {
                Some(path) => serde_json::from_slice(&read(&path)?).context("parsing fault spec")?,
                None => FaultSpec::none(),
            };
            let outcome = execute(model, &spec, &faults)?;
            if let Some(dir) = export {
                outcome.export(&dir).with_context(|| format!("exporting to {}", dir.display()))?;
            }
            emit(&outcome.report.to_bytes(), out.as_deref())?;
            Ok(outcome.report.converged)
        }
        Command::RunThreaded { model, scenario, trades, seed } => {
            let outcome = run_threaded(model, &workload(&scenario, trades, seed)?)?;
            println!("authoritative {}", outcome.authoritative_digest);
            let mut agree = true;
            for (id, node) in &outcome.nodes {
                println!("{id} {}", node.state_digest);
                agree &= node.state_digest == outcome.authoritative_digest;
            }
            Ok(agree)
        }
        Command::Reconcile { internal, authoritative, synonyms, out_dir } => {
            let store = InternalDataStore::from_jsonl(&read(&internal)?).context("parsing internal store")?;
            let states = load_authoritative(&read(&authoritative)?)?;
            let map = load_synonyms(&read(&synonyms)?)?;
            let report = reconcile(&store, &states, &map);
            let path = report.write_to(&out_dir)?;
            println!(
                "{} trades compared, {} breaks, report {}",
                report.compared_trades,
                report.breaks.len(),
                path.display()
            );
            Ok(report.is_clean())
        }
        Command::VerifyChain { chain } => match verify_chain_lines(&read(&chain)?) {
            Ok(blocks) => {
                let head = &blocks[blocks.len() - 1];
                println!("ok {} blocks, head {}", blocks.len(), head.block_hash);
                Ok(true)
            }
            Err(fault) => {
                println!("firstBadIndex {} ({})", fault.index, fault.reason);
                Ok(false)
            }
        },
        Command::Compare { a, b, out } => {
            let a: RunReport = serde_json::from_slice(&read(&a)?).context("parsing report a")?;
            let b: RunReport = serde_json::from_slice(&read(&b)?).context("parsing report b")?;
            let report = compare(&a, &b)?;
            emit(&report.to_bytes(), out.as_deref())?;
            Ok(report.equivalent)
        }
        Command::Config { scenario } => {
            emit(&canonical::to_canonical(&configure(scenario)), None)?;
            Ok(true)
        }
        Command::Serve { listen, seed, log } => {
            let ads = match log {
                Some(path) => CentralAds::load_log(&path, IdMode::Seeded(seed))?,
                None => CentralAds::new(IdMode::Seeded(seed)),
            };
            let listener = TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
            eprintln!("serving on {}", listener.local_addr()?);
            serve_tcp(SharedCentralAds::new(ads), listener)?;
            Ok(true)
        }
    }
}

fn load_authoritative(bytes: &[u8]) -> Result<StateMap> {
    if let Ok(states) = serde_json::from_slice::<StateMap>(bytes) {
        return Ok(states);
    }
    let events =
        read_event_lines(BufReader::new(bytes)).context("authoritative file is neither a snapshot nor an event log")?;
    Ok(replay(&events)?)
}

fn load_synonyms(bytes: &[u8]) -> Result<SynonymMap> {
    if let Ok(map) = serde_json::from_slice::<SynonymMap>(bytes) {
        return Ok(map);
    }
    match serde_json::from_slice::<NodeConfig>(bytes) {
        Ok(config) => Ok(config.synonym_map),
        Err(e) => bail!("synonyms file is neither a synonym map nor a node configuration: {e}"),
    }
}
