//! Scenario execution: drive the action script against an election,
//! close with integrity checks, and assemble the run artifacts.

use crate::chain::{verify_chain, Block, Payload};
use crate::consensus::{filter_valid_ballots, ConsensusError};
use crate::election::{CastOutcome, Credential, ElectionError, ElectionState};
use crate::hash::{sha256, to_hex};
use crate::identity::Coordinates;
use crate::report::{
    render_text, ActionReport, AuditReport, GroupReport, NodeTally, ProposalReport,
    RevealReportEntry, TallyDoc,
};
use crate::scenario::{ActionKind, Scenario};
use std::fs;
use std::io;
use std::path::Path;

/// Everything a finished run produced. `exit_code` is 0 for a clean run
/// and 2 when any integrity issue was recorded.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: AuditReport,
    pub chain_log: String,
    pub notifications_log: String,
}

fn is_integrity_fault(err: &ElectionError) -> bool {
    matches!(
        err,
        ElectionError::Consensus(ConsensusError::Divergence { .. })
            | ElectionError::TallyDivergence { .. }
    )
}

fn describe_cast(outcome: &CastOutcome) -> String {
    match outcome {
        CastOutcome::Accepted {
            ballot_number,
            block_ref,
        } => format!("accepted ballot {ballot_number} as block {block_ref}"),
        CastOutcome::Rejected { stage, detail } => format!("rejected at {stage}: {detail}"),
    }
}

fn fingerprint_credential(state: &ElectionState, nid: &str) -> Credential {
    match state.registry().get(nid) {
        Some(record) => Credential::Fingerprint(record.coordinates.clone()),
        None => Credential::Fingerprint(Coordinates::new()),
    }
}

/// Run one scenario to completion. Scripted failures (bad credentials,
/// missed windows, byzantine rejections) are recorded, not errors; an
/// `Err` here means the scenario itself could not be executed. Integrity
/// faults halt the script but still produce artifacts, with exit code 2.
pub fn run_scenario(
    scenario: &Scenario,
    seed_override: Option<u64>,
    parallel: bool,
) -> Result<RunOutcome, ElectionError> {
    let mut config = scenario.config.clone();
    if let Some(seed) = seed_override {
        config.rng_seed = seed;
    }
    let mut state = ElectionState::new(
        config,
        scenario.registrations.clone(),
        &scenario.peer_policies,
        parallel,
    )?;

    let mut actions: Vec<ActionReport> = Vec::new();
    let mut integrity: Vec<String> = Vec::new();
    let mut halted = false;

    for entry in &scenario.actions {
        if halted {
            actions.push(ActionReport {
                at: entry.at,
                actor: entry.actor.clone(),
                action: entry.action.describe(),
                outcome: "skipped (integrity halt)".into(),
            });
            continue;
        }
        state.advance_to(entry.at)?;
        let mut cast = |state: &mut ElectionState,
                        credential: &Credential,
                        nominee: &str|
         -> Result<String, ElectionError> {
            match state.cast_vote(&entry.actor, credential, nominee) {
                Ok(outcome) => Ok(describe_cast(&outcome)),
                Err(err) if is_integrity_fault(&err) => {
                    let msg = err.to_string();
                    integrity.push(msg.clone());
                    halted = true;
                    Ok(format!("halted: {msg}"))
                }
                Err(err) => Err(err),
            }
        };
        let outcome = match &entry.action {
            ActionKind::Vote(nominee) => {
                let credential = fingerprint_credential(&state, &entry.actor);
                cast(&mut state, &credential, nominee)?
            }
            ActionKind::VoteWithPin(nominee) => {
                let credential = if state.registry().get(&entry.actor).is_some() {
                    Credential::Pin(state.request_pin(&entry.actor)?)
                } else {
                    Credential::Pin(String::new())
                };
                cast(&mut state, &credential, nominee)?
            }
            ActionKind::Tamper { block_ref, bit } => {
                state.tamper_ballot_bit(*block_ref, *bit)?;
                "applied".into()
            }
            ActionKind::Noop => "clock advanced".into(),
        };
        actions.push(ActionReport {
            at: entry.at,
            actor: entry.actor.clone(),
            action: entry.action.describe(),
            outcome,
        });
    }

    let mut reveals: Vec<RevealReportEntry> = Vec::new();
    let mut tallies: Vec<NodeTally> = Vec::new();
    if !halted {
        let close = state.config().end + state.config().grace;
        if state.clock() < close {
            state.advance_to(close)?;
        }
        match state.reveal_and_tally() {
            Ok(summary) => {
                reveals = summary.records.iter().map(RevealReportEntry::from).collect();
                tallies = summary.tallies.iter().map(NodeTally::from).collect();
            }
            Err(err) if is_integrity_fault(&err) => {
                integrity.push(err.to_string());
            }
            Err(err) => return Err(err),
        }
    }

    let difficulty = state.config().difficulty;
    let peer0 = &state.network().peers()[0];
    if let Err(chain_break) = verify_chain(peer0.chain().blocks(), difficulty) {
        integrity.push(format!("chain verification failed: {chain_break}"));
    }
    if !state.network().chains_identical() {
        integrity.push("peer chains differ".into());
    }
    match filter_valid_ballots(
        state.proposed_blocks(),
        state.genesis_block(),
        difficulty,
        &state.validation_context(),
    ) {
        Ok(valid) => {
            let on_chain: Vec<Block> = peer0
                .chain()
                .blocks()
                .iter()
                .filter(|b| matches!(b.payload, Payload::Ballot(_)))
                .cloned()
                .collect();
            if valid != on_chain {
                integrity.push(format!(
                    "audit mismatch: honest replay admits {} ballot blocks, chain carries {}",
                    valid.len(),
                    on_chain.len()
                ));
            }
        }
        Err(err) => integrity.push(format!("audit replay failed: {err}")),
    }

    let chain_log = peer0.chain().to_log_string();
    let chain_digest = to_hex(&sha256(chain_log.as_bytes()));
    let exit_code = if integrity.is_empty() { 0 } else { 2 };
    let report = AuditReport {
        seed: state.config().rng_seed,
        peer_count: scenario.peer_policies.len() as u32,
        peer_policies: scenario
            .peer_policies
            .iter()
            .map(|p| p.to_string())
            .collect(),
        group_count: state.config().group_count,
        exit_code,
        chain_digest,
        integrity,
        groups: state
            .groups()
            .iter()
            .map(|g| GroupReport {
                group_id: g.group_id,
                st: g.st,
                et: g.et,
                members: g.members.iter().cloned().collect(),
            })
            .collect(),
        actions,
        proposals: state
            .proposal_records()
            .iter()
            .map(ProposalReport::from)
            .collect(),
        reveals,
        tally: tallies,
    };
    Ok(RunOutcome {
        exit_code,
        report,
        chain_log,
        notifications_log: state.notifications().to_log_string(),
    })
}

/// Write the five artifacts into `outdir`, creating it if needed:
/// chain.log, notifications.log, report.toml, tally.toml, report.txt.
pub fn write_artifacts(outdir: &Path, outcome: &RunOutcome) -> io::Result<()> {
    fs::create_dir_all(outdir)?;
    fs::write(outdir.join("chain.log"), &outcome.chain_log)?;
    fs::write(outdir.join("notifications.log"), &outcome.notifications_log)?;
    let report_toml = toml::to_string_pretty(&outcome.report).map_err(io::Error::other)?;
    fs::write(outdir.join("report.toml"), report_toml)?;
    let tally_doc = TallyDoc {
        node: outcome.report.tally.clone(),
    };
    let tally_toml = toml::to_string_pretty(&tally_doc).map_err(io::Error::other)?;
    fs::write(outdir.join("tally.toml"), tally_toml)?;
    fs::write(outdir.join("report.txt"), render_text(&outcome.report))?;
    Ok(())
}
