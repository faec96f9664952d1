//! Scenario files: a TOML description of one election run, covering the
//! configuration, the voter roll, the peer lineup, and a timed action
//! script.

use crate::chain::MAX_DIFFICULTY;
use crate::consensus::PeerPolicy;
use crate::election::{ElectionConfig, NomineeSpec};
use crate::identity::{Registration, DEFAULT_PIN_TTL};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("actions must be ordered by time: action {index} at {at} comes after {prev}")]
    ActionsUnsorted { index: usize, at: u64, prev: u64 },
    #[error("tamper actions must use actor \"external\"; action {index} uses \"{actor}\"")]
    TamperActor { index: usize, actor: String },
    #[error("action {index} votes for unknown nominee \"{nominee}\"")]
    UnknownNominee { index: usize, nominee: String },
    #[error("peer id {peer} out of range for {count} peers")]
    PeerOutOfRange { peer: u32, count: u32 },
    #[error("peer {0} is listed as both always-reject and always-accept")]
    PeerPolicyConflict(u32),
    #[error("difficulty {got} exceeds the maximum of {max}")]
    DifficultyTooHigh { got: u32, max: u32 },
    #[error("peer count must be at least 1")]
    NoPeers,
}

/// One scripted step. Unknown actor NIDs are allowed here; they surface
/// as eligibility rejections at run time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionEntry {
    pub at: u64,
    pub actor: String,
    pub action: ActionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    /// Cast a fingerprint-authenticated vote for the named nominee.
    Vote(String),
    /// Request a PIN, then cast with it.
    VoteWithPin(String),
    /// Flip one stored ballot bit on every peer, bypassing consensus.
    Tamper { block_ref: u64, bit: u32 },
    /// Advance the clock without doing anything.
    Noop,
}

impl ActionKind {
    pub fn describe(&self) -> String {
        match self {
            ActionKind::Vote(nominee) => format!("vote {nominee}"),
            ActionKind::VoteWithPin(nominee) => format!("vote-with-pin {nominee}"),
            ActionKind::Tamper { block_ref, bit } => {
                format!("tamper block {block_ref} bit {bit}")
            }
            ActionKind::Noop => "noop".to_string(),
        }
    }
}

/// A fully validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ElectionConfig,
    pub registrations: Vec<Registration>,
    pub peer_policies: Vec<PeerPolicy>,
    pub actions: Vec<ActionEntry>,
}

fn default_grid() -> [u16; 2] {
    [16, 16]
}

fn default_pin_ttl() -> u64 {
    DEFAULT_PIN_TTL
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    config: ConfigSection,
    nominees: Vec<NomineeSection>,
    voters: Vec<VoterSection>,
    peers: PeersSection,
    #[serde(default)]
    actions: Vec<ActionEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigSection {
    start: u64,
    end: u64,
    grace: u64,
    groups: u32,
    ballot_bits: u32,
    difficulty: u32,
    seed: u64,
    #[serde(default = "default_grid")]
    grid: [u16; 2],
    #[serde(default = "default_pin_ttl")]
    pin_ttl: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NomineeSection {
    id: String,
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VoterSection {
    nid: String,
    name: String,
    contact: String,
    coordinates: Vec<(u16, u16)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PeersSection {
    count: u32,
    #[serde(default)]
    always_reject: Vec<u32>,
    #[serde(default)]
    always_accept: Vec<u32>,
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text)?;

    if file.config.difficulty > MAX_DIFFICULTY {
        return Err(ScenarioError::DifficultyTooHigh {
            got: file.config.difficulty,
            max: MAX_DIFFICULTY,
        });
    }
    if file.peers.count == 0 {
        return Err(ScenarioError::NoPeers);
    }
    for &peer in file.peers.always_reject.iter().chain(&file.peers.always_accept) {
        if peer >= file.peers.count {
            return Err(ScenarioError::PeerOutOfRange {
                peer,
                count: file.peers.count,
            });
        }
    }
    let rejecting: BTreeSet<u32> = file.peers.always_reject.iter().copied().collect();
    for &peer in &file.peers.always_accept {
        if rejecting.contains(&peer) {
            return Err(ScenarioError::PeerPolicyConflict(peer));
        }
    }
    let accepting: BTreeSet<u32> = file.peers.always_accept.iter().copied().collect();
    let peer_policies = (0..file.peers.count)
        .map(|i| {
            if rejecting.contains(&i) {
                PeerPolicy::AlwaysReject
            } else if accepting.contains(&i) {
                PeerPolicy::AlwaysAccept
            } else {
                PeerPolicy::Honest
            }
        })
        .collect();

    let nominee_ids: BTreeSet<&str> = file.nominees.iter().map(|n| n.id.as_str()).collect();
    let mut prev_at = 0;
    for (index, entry) in file.actions.iter().enumerate() {
        if entry.at < prev_at {
            return Err(ScenarioError::ActionsUnsorted {
                index,
                at: entry.at,
                prev: prev_at,
            });
        }
        prev_at = entry.at;
        match &entry.action {
            ActionKind::Vote(nominee) | ActionKind::VoteWithPin(nominee) => {
                if !nominee_ids.contains(nominee.as_str()) {
                    return Err(ScenarioError::UnknownNominee {
                        index,
                        nominee: nominee.clone(),
                    });
                }
            }
            ActionKind::Tamper { .. } => {
                if entry.actor != "external" {
                    return Err(ScenarioError::TamperActor {
                        index,
                        actor: entry.actor.clone(),
                    });
                }
            }
            ActionKind::Noop => {}
        }
    }

    let config = ElectionConfig {
        start: file.config.start,
        end: file.config.end,
        grace: file.config.grace,
        group_count: file.config.groups,
        ballot_bits: file.config.ballot_bits,
        difficulty: file.config.difficulty,
        rng_seed: file.config.seed,
        grid: (file.config.grid[0], file.config.grid[1]),
        pin_ttl: file.config.pin_ttl,
        nominees: file
            .nominees
            .into_iter()
            .map(|n| NomineeSpec {
                label: n.label.unwrap_or_else(|| n.id.clone()),
                id: n.id,
            })
            .collect(),
    };
    let registrations = file
        .voters
        .into_iter()
        .map(|v| Registration {
            nid: v.nid,
            name: v.name,
            coordinates: v.coordinates.into_iter().collect(),
            contact: v.contact,
        })
        .collect();

    Ok(Scenario {
        config,
        registrations,
        peer_policies,
        actions: file.actions,
    })
}

/// Read and parse a scenario file from disk.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[config]
start = 1000
end = 2000
grace = 300
groups = 2
ballot_bits = 16
difficulty = 4
seed = 42

[[nominees]]
id = "A"
label = "Alpha Party"

[[nominees]]
id = "B"

[[voters]]
nid = "NID-001"
name = "Voter One"
contact = "v1@sim"
coordinates = [[1, 2], [3, 4]]

[[voters]]
nid = "NID-002"
name = "Voter Two"
contact = "v2@sim"
coordinates = [[5, 6]]

[peers]
count = 5
always_reject = [3]
always_accept = [4]

[[actions]]
at = 1100
actor = "NID-001"
action = { vote = "A" }

[[actions]]
at = 1200
actor = "NID-002"
action = { vote-with-pin = "B" }

[[actions]]
at = 1300
actor = "external"
action = { tamper = { block_ref = 1, bit = 3 } }

[[actions]]
at = 1400
actor = "external"
action = "noop"
"#;

    #[test]
    fn parses_the_full_format() {
        let scenario = parse_scenario(SAMPLE).unwrap();
        assert_eq!(scenario.config.start, 1_000);
        assert_eq!(scenario.config.group_count, 2);
        assert_eq!(scenario.config.grid, (16, 16), "default grid");
        assert_eq!(scenario.config.pin_ttl, 300, "default ttl");
        assert_eq!(scenario.config.nominees.len(), 2);
        assert_eq!(scenario.config.nominees[0].label, "Alpha Party");
        assert_eq!(scenario.config.nominees[1].label, "B", "label defaults to id");
        assert_eq!(scenario.registrations.len(), 2);
        assert_eq!(
            scenario.registrations[0].coordinates,
            [(1, 2), (3, 4)].into_iter().collect()
        );
        assert_eq!(
            scenario.peer_policies,
            vec![
                PeerPolicy::Honest,
                PeerPolicy::Honest,
                PeerPolicy::Honest,
                PeerPolicy::AlwaysReject,
                PeerPolicy::AlwaysAccept,
            ]
        );
        assert_eq!(scenario.actions.len(), 4);
        assert_eq!(scenario.actions[0].action, ActionKind::Vote("A".into()));
        assert_eq!(
            scenario.actions[1].action,
            ActionKind::VoteWithPin("B".into())
        );
        assert_eq!(
            scenario.actions[2].action,
            ActionKind::Tamper {
                block_ref: 1,
                bit: 3
            }
        );
        assert_eq!(scenario.actions[3].action, ActionKind::Noop);
    }

    #[test]
    fn optional_sections_take_defaults() {
        let text = r#"
[config]
start = 10
end = 20
grace = 5
groups = 1
ballot_bits = 16
difficulty = 0
seed = 1
grid = [4, 4]
pin_ttl = 60

[[nominees]]
id = "A"

[[voters]]
nid = "N1"
name = "One"
contact = "one@sim"
coordinates = [[0, 0]]

[peers]
count = 3
"#;
        let scenario = parse_scenario(text).unwrap();
        assert_eq!(scenario.config.grid, (4, 4));
        assert_eq!(scenario.config.pin_ttl, 60);
        assert_eq!(scenario.peer_policies, vec![PeerPolicy::Honest; 3]);
        assert!(scenario.actions.is_empty());
    }

    fn with_actions(actions: &str) -> String {
        let mut text = String::new();
        for line in SAMPLE.lines() {
            if line.starts_with("[[actions]]") {
                break;
            }
            text.push_str(line);
            text.push('\n');
        }
        text.push_str(actions);
        text
    }

    #[test]
    fn rejects_unsorted_actions() {
        let text = with_actions(
            r#"
[[actions]]
at = 1200
actor = "NID-001"
action = { vote = "A" }

[[actions]]
at = 1100
actor = "NID-002"
action = { vote = "B" }
"#,
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::ActionsUnsorted {
                index: 1,
                at: 1_100,
                prev: 1_200
            })
        ));
    }

    #[test]
    fn rejects_tamper_with_a_voter_actor() {
        let text = with_actions(
            r#"
[[actions]]
at = 1100
actor = "NID-001"
action = { tamper = { block_ref = 1, bit = 0 } }
"#,
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::TamperActor { index: 0, .. })
        ));
    }

    #[test]
    fn rejects_votes_for_unknown_nominees() {
        let text = with_actions(
            r#"
[[actions]]
at = 1100
actor = "NID-001"
action = { vote = "Z" }
"#,
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::UnknownNominee { index: 0, .. })
        ));
    }

    #[test]
    fn rejects_bad_peer_tables() {
        let text = SAMPLE.replace("always_reject = [3]", "always_reject = [9]");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::PeerOutOfRange { peer: 9, count: 5 })
        ));

        let text = SAMPLE.replace("always_accept = [4]", "always_accept = [3]");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::PeerPolicyConflict(3))
        ));

        let text = SAMPLE.replace("count = 5", "count = 0");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::NoPeers)));
    }

    #[test]
    fn rejects_excessive_difficulty() {
        let text = SAMPLE.replace("difficulty = 4", "difficulty = 30");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::DifficultyTooHigh { got: 30, max: 24 })
        ));
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = SAMPLE.replace("seed = 42", "seed = 42\nmystery = 1");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Toml(_))));
    }

    #[test]
    fn unknown_actor_nids_are_allowed_at_parse_time() {
        let text = with_actions(
            r#"
[[actions]]
at = 1100
actor = "NID-GHOST"
action = { vote = "A" }
"#,
        );
        assert!(parse_scenario(&text).is_ok());
    }
}
