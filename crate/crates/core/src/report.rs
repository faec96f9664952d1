//! The audit report written after a run: a machine-readable TOML document
//! plus plain-text renderings, including a per-ballot lookup.

use crate::chain::{Block, Payload};
use crate::election::{ProposalRecord, RevealOutcome, RevealRecord, Tally};
use crate::hash::to_hex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Everything an operator needs to audit one run. Serialized as
/// `report.toml`; scalar fields come before the table arrays so the
/// document stays valid TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub seed: u64,
    pub peer_count: u32,
    pub peer_policies: Vec<String>,
    pub group_count: u32,
    pub exit_code: i32,
    /// SHA-256 over the bytes of `chain.log`.
    pub chain_digest: String,
    #[serde(default)]
    pub integrity: Vec<String>,
    #[serde(default)]
    pub groups: Vec<GroupReport>,
    #[serde(default)]
    pub actions: Vec<ActionReport>,
    #[serde(default)]
    pub proposals: Vec<ProposalReport>,
    #[serde(default)]
    pub reveals: Vec<RevealReportEntry>,
    #[serde(default)]
    pub tally: Vec<NodeTally>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group_id: u32,
    pub st: u64,
    pub et: u64,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionReport {
    pub at: u64,
    pub actor: String,
    pub action: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalReport {
    pub at: u64,
    pub ballot_number: u64,
    pub block_ref: u64,
    pub accepted: bool,
    pub verdicts: Vec<VerdictReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub peer: u32,
    pub accept: bool,
    #[serde(default)]
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealReportEntry {
    pub ballot_number: u64,
    pub broadcast_ref: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counted: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTally {
    pub id: u32,
    pub counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub excluded: Vec<ExcludedEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedEntry {
    pub ballot: u64,
    pub reason: String,
}

/// The standalone tally document written as `tally.toml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyDoc {
    #[serde(default)]
    pub node: Vec<NodeTally>,
}

impl From<&Tally> for NodeTally {
    fn from(tally: &Tally) -> Self {
        Self {
            id: tally.node_id,
            counts: tally.counts.clone(),
            excluded: tally
                .excluded
                .iter()
                .map(|(ballot, reason)| ExcludedEntry {
                    ballot: *ballot,
                    reason: reason.to_string(),
                })
                .collect(),
        }
    }
}

impl From<&ProposalRecord> for ProposalReport {
    fn from(record: &ProposalRecord) -> Self {
        Self {
            at: record.at,
            ballot_number: record.ballot_number,
            block_ref: record.block_ref,
            accepted: record.accepted,
            verdicts: record
                .verdicts
                .iter()
                .map(|v| VerdictReport {
                    peer: v.peer_id,
                    accept: v.accept,
                    reasons: v.reasons.iter().map(|r| r.to_string()).collect(),
                })
                .collect(),
        }
    }
}

impl From<&RevealRecord> for RevealReportEntry {
    fn from(record: &RevealRecord) -> Self {
        let (counted, excluded) = match &record.outcome {
            RevealOutcome::Counted(nominee) => (Some(nominee.clone()), None),
            RevealOutcome::Excluded(reason) => (None, Some(reason.to_string())),
        };
        Self {
            ballot_number: record.ballot_number,
            broadcast_ref: record.broadcast_ref,
            counted,
            excluded,
        }
    }
}

/// Render the report as the human-readable `report.txt`.
pub fn render_text(report: &AuditReport) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "election run report").unwrap();
    writeln!(w, "seed: {}", report.seed).unwrap();
    writeln!(
        w,
        "peers: {} ({})",
        report.peer_count,
        report.peer_policies.join(", ")
    )
    .unwrap();
    writeln!(w, "groups: {}", report.group_count).unwrap();
    writeln!(w, "exit code: {}", report.exit_code).unwrap();
    writeln!(w).unwrap();

    writeln!(w, "group schedule:").unwrap();
    for group in &report.groups {
        writeln!(
            w,
            "  group {}: window [{}, {}), members {}",
            group.group_id,
            group.st,
            group.et,
            group.members.join(", ")
        )
        .unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "actions:").unwrap();
    for action in &report.actions {
        writeln!(
            w,
            "  at {} {} {}: {}",
            action.at, action.actor, action.action, action.outcome
        )
        .unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "consensus rounds:").unwrap();
    for proposal in &report.proposals {
        let accepts = proposal.verdicts.iter().filter(|v| v.accept).count();
        let rejects = proposal.verdicts.len() - accepts;
        writeln!(
            w,
            "  at {} ballot {} as block {}: {} {}-{}",
            proposal.at,
            proposal.ballot_number,
            proposal.block_ref,
            if proposal.accepted {
                "accepted"
            } else {
                "discarded"
            },
            accepts,
            rejects
        )
        .unwrap();
        for verdict in &proposal.verdicts {
            if !verdict.accept {
                writeln!(
                    w,
                    "    peer {} rejected: {}",
                    verdict.peer,
                    verdict.reasons.join(",")
                )
                .unwrap();
            }
        }
    }
    writeln!(w).unwrap();

    writeln!(w, "reveals:").unwrap();
    for reveal in &report.reveals {
        let outcome = match (&reveal.counted, &reveal.excluded) {
            (Some(nominee), _) => format!("counted for {nominee}"),
            (None, Some(reason)) => format!("excluded ({reason})"),
            (None, None) => "unknown".to_string(),
        };
        writeln!(
            w,
            "  ballot {} (block {}): {}",
            reveal.ballot_number, reveal.broadcast_ref, outcome
        )
        .unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "tally:").unwrap();
    if let Some(node) = report.tally.first() {
        for (nominee, count) in &node.counts {
            writeln!(w, "  {nominee}: {count}").unwrap();
        }
        for entry in &node.excluded {
            writeln!(w, "  excluded ballot {}: {}", entry.ballot, entry.reason).unwrap();
        }
        writeln!(
            w,
            "  ({} node tallies, all identical)",
            report.tally.len()
        )
        .unwrap();
    } else {
        writeln!(w, "  (no tally; the run did not reach the reveal phase)").unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "chain digest: {}", report.chain_digest).unwrap();
    if report.integrity.is_empty() {
        writeln!(w, "integrity: clean").unwrap();
    } else {
        writeln!(w, "integrity issues:").unwrap();
        for issue in &report.integrity {
            writeln!(w, "  - {issue}").unwrap();
        }
    }
    out
}

/// Render everything known about one ballot number: the stored block, the
/// consensus verdicts, and the post-reveal decode.
pub fn render_ballot(report: &AuditReport, blocks: &[Block], ballot_number: u64) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "ballot {ballot_number}").unwrap();

    let proposal = report
        .proposals
        .iter()
        .find(|p| p.ballot_number == ballot_number);
    let Some(proposal) = proposal else {
        writeln!(w, "  not found: no consensus round used this number").unwrap();
        return out;
    };

    let block = blocks.iter().find(|b| match &b.payload {
        Payload::Ballot(ballot) => ballot.ballot_number == ballot_number,
        _ => false,
    });
    match block {
        Some(block) => {
            let Payload::Ballot(ballot) = &block.payload else {
                unreachable!("filtered to ballot payloads");
            };
            writeln!(w, "  block ref: {}", block.header.ref_number).unwrap();
            writeln!(w, "  timestamp: {}", block.header.timestamp).unwrap();
            writeln!(w, "  nonce: {}", block.header.nonce).unwrap();
            writeln!(w, "  block hash: {}", to_hex(&block.hash())).unwrap();
            writeln!(w, "  voter digest: {}", ballot.voter_digest.to_hex()).unwrap();
            writeln!(w, "  ballot string: {}", ballot.ballot_string.bits()).unwrap();
        }
        None => {
            writeln!(w, "  not on chain (proposal was discarded)").unwrap();
        }
    }

    writeln!(
        w,
        "  consensus at {}: {}",
        proposal.at,
        if proposal.accepted {
            "accepted"
        } else {
            "discarded"
        }
    )
    .unwrap();
    for verdict in &proposal.verdicts {
        if verdict.accept {
            writeln!(w, "    peer {}: accept", verdict.peer).unwrap();
        } else {
            writeln!(
                w,
                "    peer {}: reject ({})",
                verdict.peer,
                verdict.reasons.join(",")
            )
            .unwrap();
        }
    }

    match report
        .reveals
        .iter()
        .find(|r| r.ballot_number == ballot_number)
    {
        Some(reveal) => match (&reveal.counted, &reveal.excluded) {
            (Some(nominee), _) => {
                writeln!(w, "  revealed choice: {nominee}").unwrap();
            }
            (None, Some(reason)) => {
                writeln!(w, "  revealed choice: excluded ({reason})").unwrap();
            }
            (None, None) => {
                writeln!(w, "  revealed choice: unknown").unwrap();
            }
        },
        None => {
            writeln!(w, "  revealed choice: none (ballot never reached reveal)").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> AuditReport {
        AuditReport {
            seed: 42,
            peer_count: 3,
            peer_policies: vec!["honest".into(), "honest".into(), "always-reject".into()],
            group_count: 1,
            exit_code: 0,
            chain_digest: "deadbeef".into(),
            integrity: vec![],
            groups: vec![GroupReport {
                group_id: 0,
                st: 1_000,
                et: 2_000,
                members: vec!["NID-001".into(), "NID-002".into()],
            }],
            actions: vec![ActionReport {
                at: 1_100,
                actor: "NID-001".into(),
                action: "vote A".into(),
                outcome: "accepted ballot 1 as block 1".into(),
            }],
            proposals: vec![ProposalReport {
                at: 1_100,
                ballot_number: 1,
                block_ref: 1,
                accepted: true,
                verdicts: vec![
                    VerdictReport {
                        peer: 0,
                        accept: true,
                        reasons: vec![],
                    },
                    VerdictReport {
                        peer: 1,
                        accept: true,
                        reasons: vec![],
                    },
                    VerdictReport {
                        peer: 2,
                        accept: false,
                        reasons: vec!["byzantine-policy".into()],
                    },
                ],
            }],
            reveals: vec![RevealReportEntry {
                ballot_number: 1,
                broadcast_ref: 1,
                counted: Some("A".into()),
                excluded: None,
            }],
            tally: vec![NodeTally {
                id: 0,
                counts: [("A".to_string(), 1), ("B".to_string(), 0)]
                    .into_iter()
                    .collect(),
                excluded: vec![],
            }],
        }
    }

    #[test]
    fn report_round_trips_through_toml() {
        let report = sample_report();
        let text = toml::to_string_pretty(&report).unwrap();
        let back: AuditReport = toml::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn tally_doc_round_trips_through_toml() {
        let doc = TallyDoc {
            node: sample_report().tally,
        };
        let text = toml::to_string(&doc).unwrap();
        let back: TallyDoc = toml::from_str(&text).unwrap();
        assert_eq!(back, doc);

        let empty = TallyDoc { node: vec![] };
        let text = toml::to_string(&empty).unwrap();
        let back: TallyDoc = toml::from_str(&text).unwrap();
        assert_eq!(back, empty);
    }

    #[test]
    fn text_rendering_carries_the_key_lines() {
        let text = render_text(&sample_report());
        assert!(text.contains("seed: 42"));
        assert!(text.contains("peers: 3 (honest, honest, always-reject)"));
        assert!(text.contains("at 1100 ballot 1 as block 1: accepted 2-1"));
        assert!(text.contains("peer 2 rejected: byzantine-policy"));
        assert!(text.contains("ballot 1 (block 1): counted for A"));
        assert!(text.contains("A: 1"));
        assert!(text.contains("integrity: clean"));
    }

    #[test]
    fn ballot_lookup_reports_missing_numbers() {
        let text = render_ballot(&sample_report(), &[], 9);
        assert!(text.contains("ballot 9"));
        assert!(text.contains("not found"));
    }

    #[test]
    fn ballot_lookup_renders_verdicts_without_the_block() {
        let text = render_ballot(&sample_report(), &[], 1);
        assert!(text.contains("not on chain"));
        assert!(text.contains("peer 2: reject (byzantine-policy)"));
        assert!(text.contains("revealed choice: A"));
    }
}
