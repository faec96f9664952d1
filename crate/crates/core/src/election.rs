//! Election lifecycle: group scheduling, phased vote casting through peer
//! consensus, the grace window for voters who missed their slot, and the
//! reveal phase that opens commitments and tallies per peer.

use crate::ballot::{
    assign_codes, decode_choice, encode_ballot, Ballot, BallotError, CodePlan,
};
use crate::chain::{
    Block, ChainError, ChainState, GenesisPayload, GenesisVoter, NomineeEntry, Payload,
    SiblingPayload, SiblingVault, MAX_DIFFICULTY,
};
use crate::consensus::{
    ConsensusError, Network, PeerPolicy, ValidationContext, Verdict,
};
use crate::hash::ZERO_HASH;
use crate::identity::{
    Coordinates, IdentityError, Nid, PinAuthority, PinOutcome, Registration, Registry,
};
use crate::notify::NotificationSink;
use crate::rng::{shuffle, DrawSource, SeededDraws};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ElectionError {
    #[error("voting window is empty: start {start}, end {end}")]
    EmptyVotingWindow { start: u64, end: u64 },
    #[error("group count must be at least 1")]
    NoGroups,
    #[error("{groups} groups cannot be filled by {voters} voters")]
    MoreGroupsThanVoters { groups: u32, voters: usize },
    #[error("voting window of {window} ticks cannot host {groups} group slots")]
    WindowTooNarrow { window: u64, groups: u32 },
    #[error("no voters registered")]
    NoVoters,
    #[error("clock cannot move backwards from {now} to {target}")]
    ClockBackwards { now: u64, target: u64 },
    #[error("cannot {action} in the {phase} phase")]
    WrongPhase { action: &'static str, phase: Phase },
    #[error("tallies diverged between peers {a} and {b}")]
    TallyDivergence { a: u32, b: u32 },
    #[error(transparent)]
    Ballot(#[from] BallotError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

/// One nominee as configured: a stable id and a display label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NomineeSpec {
    pub id: String,
    pub label: String,
}

/// Full election setup; times are integer ticks on a simulated clock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElectionConfig {
    pub start: u64,
    pub end: u64,
    /// Extra window after `end` for voters who missed their group slot.
    pub grace: u64,
    pub group_count: u32,
    pub ballot_bits: u32,
    pub difficulty: u32,
    pub rng_seed: u64,
    pub grid: (u16, u16),
    pub pin_ttl: u64,
    pub nominees: Vec<NomineeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PreVoting,
    Voting,
    Grace,
    Reveal,
    Closed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::PreVoting => "pre-voting",
            Phase::Voting => "voting",
            Phase::Grace => "grace",
            Phase::Reveal => "reveal",
            Phase::Closed => "closed",
        };
        f.write_str(s)
    }
}

/// A voter group with its scheduled slot [st, et). The flag is raised
/// while the slot is open and at least one member still has to vote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub group_id: u32,
    pub members: BTreeSet<Nid>,
    pub st: u64,
    pub et: u64,
    pub flag: bool,
}

/// Split voters into near-equal groups and hand each group one slice of
/// [start, end). Membership and slice order are both drawn from the
/// deterministic source, so neither leaks registration order.
pub fn partition_groups(
    nids: &[Nid],
    group_count: u32,
    start: u64,
    end: u64,
    draws: &mut dyn DrawSource,
) -> Vec<Group> {
    let mut shuffled: Vec<Nid> = nids.to_vec();
    shuffle(&mut shuffled, draws);
    let mut window_of: Vec<u32> = (0..group_count).collect();
    shuffle(&mut window_of, draws);

    let g = group_count as usize;
    let base = shuffled.len() / g;
    let extra = shuffled.len() % g;
    let slot = (end - start) / group_count as u64;

    let mut groups = Vec::with_capacity(g);
    let mut cursor = 0;
    for (gid, &w) in window_of.iter().enumerate() {
        let size = base + usize::from(gid < extra);
        let members: BTreeSet<Nid> = shuffled[cursor..cursor + size].iter().cloned().collect();
        cursor += size;
        let st = start + u64::from(w) * slot;
        let et = if w == group_count - 1 {
            end
        } else {
            start + u64::from(w + 1) * slot
        };
        groups.push(Group {
            group_id: gid as u32,
            members,
            st,
            et,
            flag: false,
        });
    }
    groups
}

/// How a voter proves identity at the booth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Credential {
    Fingerprint(Coordinates),
    Pin(String),
}

/// Why condition 1 (eligibility and window) turned a voter away.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition1Failure {
    NotEligible,
    WindowClosed,
    AlreadyVoted,
}

impl fmt::Display for Condition1Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition1Failure::NotEligible => "not-eligible",
            Condition1Failure::WindowClosed => "window-closed",
            Condition1Failure::AlreadyVoted => "already-voted",
        };
        f.write_str(s)
    }
}

/// Where in the casting pipeline a rejection happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectStage {
    Condition1,
    Identity,
    Encode,
    Consensus,
}

impl fmt::Display for RejectStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectStage::Condition1 => "condition1",
            RejectStage::Identity => "identity",
            RejectStage::Encode => "encoding",
            RejectStage::Consensus => "consensus",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CastOutcome {
    Accepted { ballot_number: u64, block_ref: u64 },
    Rejected { stage: RejectStage, detail: String },
}

/// One consensus round as the audit trail records it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposalRecord {
    pub at: u64,
    pub ballot_number: u64,
    pub block_ref: u64,
    pub accepted: bool,
    pub verdicts: Vec<Verdict>,
}

/// Why a committed ballot did not reach the count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    MissingSibling,
    MalformedReveal,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExclusionReason::MissingSibling => "missing-sibling",
            ExclusionReason::MalformedReveal => "malformed-reveal",
        };
        f.write_str(s)
    }
}

/// One node's count. Every configured nominee appears in `counts`, zero
/// included; `excluded` lists committed ballots that could not be opened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub node_id: u32,
    pub counts: BTreeMap<String, u64>,
    pub excluded: Vec<(u64, ExclusionReason)>,
}

impl Tally {
    /// Result equality; which node computed it does not matter.
    pub fn matches(&self, other: &Tally) -> bool {
        self.counts == other.counts && self.excluded == other.excluded
    }

    pub fn total_counted(&self) -> u64 {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevealOutcome {
    Counted(String),
    Excluded(ExclusionReason),
}

/// The fate of one committed ballot at reveal time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealRecord {
    pub ballot_number: u64,
    pub broadcast_ref: u64,
    pub outcome: RevealOutcome,
}

/// Everything the reveal phase produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealSummary {
    pub records: Vec<RevealRecord>,
    pub tallies: Vec<Tally>,
}

fn tally_one(chain: &ChainState, plan: &CodePlan, node_id: u32) -> (Tally, Vec<RevealRecord>) {
    let mut counts: BTreeMap<String, u64> =
        plan.nominees().map(|n| (n.to_string(), 0)).collect();
    let mut excluded = Vec::new();
    let mut records = Vec::new();
    let siblings: BTreeMap<u64, &SiblingPayload> =
        chain.siblings().map(|(_, s)| (s.broadcast_ref, s)).collect();
    for (block_ref, ballot) in chain.ballots() {
        let outcome = match siblings.get(&block_ref) {
            None => RevealOutcome::Excluded(ExclusionReason::MissingSibling),
            Some(sib) => match decode_choice(plan, &ballot.ballot_string, &sib.opening) {
                Ok(nominee) => RevealOutcome::Counted(nominee),
                Err(_) => RevealOutcome::Excluded(ExclusionReason::MalformedReveal),
            },
        };
        match &outcome {
            RevealOutcome::Counted(nominee) => {
                *counts.get_mut(nominee).expect("nominee from plan") += 1;
            }
            RevealOutcome::Excluded(reason) => excluded.push((ballot.ballot_number, *reason)),
        }
        records.push(RevealRecord {
            ballot_number: ballot.ballot_number,
            broadcast_ref: block_ref,
            outcome,
        });
    }
    (
        Tally {
            node_id,
            counts,
            excluded,
        },
        records,
    )
}

/// The running election: registry, schedule, peer network, commitment
/// vault, and the simulated clock.
pub struct ElectionState {
    config: ElectionConfig,
    registry: Registry,
    plan: CodePlan,
    groups: Vec<Group>,
    group_of: BTreeMap<Nid, u32>,
    phase: Phase,
    clock: u64,
    network: Network,
    genesis: Block,
    draws: SeededDraws,
    pins: PinAuthority,
    sink: NotificationSink,
    vault: SiblingVault,
    voted: BTreeSet<Nid>,
    grace_nids: BTreeSet<Nid>,
    next_ballot_number: u64,
    proposed_blocks: Vec<Block>,
    proposal_records: Vec<ProposalRecord>,
}

impl ElectionState {
    pub fn new(
        config: ElectionConfig,
        registrations: Vec<Registration>,
        peer_policies: &[PeerPolicy],
        parallel: bool,
    ) -> Result<Self, ElectionError> {
        if config.start >= config.end {
            return Err(ElectionError::EmptyVotingWindow {
                start: config.start,
                end: config.end,
            });
        }
        if config.group_count == 0 {
            return Err(ElectionError::NoGroups);
        }
        if !config.ballot_bits.is_multiple_of(2) {
            return Err(BallotError::OddBallotWidth(config.ballot_bits).into());
        }
        if config.difficulty > MAX_DIFFICULTY {
            return Err(ChainError::DifficultyOutOfRange(config.difficulty).into());
        }
        let ids: Vec<String> = config.nominees.iter().map(|n| n.id.clone()).collect();
        let plan = assign_codes(&ids)?;
        if config.ballot_bits / 2 < plan.code_len() {
            return Err(BallotError::ChoiceHalfTooSmall {
                ballot_bits: config.ballot_bits,
                code_len: plan.code_len(),
            }
            .into());
        }

        let mut registry = Registry::build(registrations, config.grid)?;
        if registry.is_empty() {
            return Err(ElectionError::NoVoters);
        }
        if config.group_count as usize > registry.len() {
            return Err(ElectionError::MoreGroupsThanVoters {
                groups: config.group_count,
                voters: registry.len(),
            });
        }
        let window = config.end - config.start;
        if window < u64::from(config.group_count) {
            return Err(ElectionError::WindowTooNarrow {
                window,
                groups: config.group_count,
            });
        }

        let mut draws = SeededDraws::from_seed(config.rng_seed);
        let nids: Vec<Nid> = registry.nids().cloned().collect();
        let groups = partition_groups(
            &nids,
            config.group_count,
            config.start,
            config.end,
            &mut draws,
        );
        let mut group_of = BTreeMap::new();
        for group in &groups {
            for nid in &group.members {
                registry.set_group(nid, group.group_id);
                group_of.insert(nid.clone(), group.group_id);
            }
        }

        let nominees = plan
            .assignments()
            .iter()
            .map(|(id, code)| NomineeEntry {
                id: id.clone(),
                label: config
                    .nominees
                    .iter()
                    .find(|n| &n.id == id)
                    .map(|n| n.label.clone())
                    .unwrap_or_else(|| id.clone()),
                code: code.clone(),
            })
            .collect();
        let voters = registry
            .iter()
            .map(|rec| GenesisVoter {
                digest: registry.digest_of(&rec.nid).expect("registered"),
                coordinates: rec.coordinates.clone(),
                binary_value: rec.binary_value.clone(),
            })
            .collect();
        let genesis_payload = GenesisPayload {
            start: config.start,
            end: config.end,
            grace: config.grace,
            ballot_bits: config.ballot_bits,
            grid: config.grid,
            nominees,
            voters,
        };
        let genesis = Block::forge(
            0,
            ZERO_HASH,
            config.start,
            Payload::Genesis(genesis_payload),
            config.difficulty,
        );
        let network = Network::new(peer_policies, genesis.clone(), config.difficulty, parallel)?;

        let mut sink = NotificationSink::new();
        for group in &groups {
            for nid in &group.members {
                let rec = registry.get(nid).expect("member registered");
                sink.record(
                    0,
                    &rec.contact,
                    format!(
                        "assigned to group {}: voting window [{}, {})",
                        group.group_id, group.st, group.et
                    ),
                );
            }
        }

        let pin_authority = PinAuthority::new(config.pin_ttl);
        let mut state = Self {
            pins: pin_authority,
            config,
            registry,
            plan,
            groups,
            group_of,
            phase: Phase::PreVoting,
            clock: 0,
            network,
            genesis,
            draws,
            sink,
            vault: SiblingVault::new(),
            voted: BTreeSet::new(),
            grace_nids: BTreeSet::new(),
            next_ballot_number: 1,
            proposed_blocks: Vec::new(),
            proposal_records: Vec::new(),
        };
        state.refresh_phase();
        Ok(state)
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn plan(&self) -> &CodePlan {
        &self.plan
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group_of(&self, nid: &str) -> Option<u32> {
        self.group_of.get(nid).copied()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn genesis_block(&self) -> &Block {
        &self.genesis
    }

    pub fn notifications(&self) -> &NotificationSink {
        &self.sink
    }

    pub fn proposed_blocks(&self) -> &[Block] {
        &self.proposed_blocks
    }

    pub fn proposal_records(&self) -> &[ProposalRecord] {
        &self.proposal_records
    }

    pub fn has_voted(&self, nid: &str) -> bool {
        self.voted.contains(nid)
    }

    pub fn grace_nids(&self) -> &BTreeSet<Nid> {
        &self.grace_nids
    }

    pub fn vault(&self) -> &SiblingVault {
        &self.vault
    }

    fn all_voted(&self) -> bool {
        self.voted.len() == self.registry.len()
    }

    /// Move the simulated clock forward and apply due phase transitions.
    pub fn advance_to(&mut self, target: u64) -> Result<(), ElectionError> {
        if target < self.clock {
            return Err(ElectionError::ClockBackwards {
                now: self.clock,
                target,
            });
        }
        self.clock = target;
        self.refresh_phase();
        Ok(())
    }

    fn refresh_phase(&mut self) {
        loop {
            let next = match self.phase {
                Phase::PreVoting if self.clock >= self.config.start => Phase::Voting,
                Phase::Voting if self.clock >= self.config.end => {
                    if !self.all_voted() {
                        self.open_grace();
                        Phase::Grace
                    } else {
                        Phase::Reveal
                    }
                }
                Phase::Grace
                    if self.all_voted()
                        || self.clock >= self.config.end + self.config.grace =>
                {
                    Phase::Reveal
                }
                _ => break,
            };
            self.phase = next;
        }
        self.refresh_flags();
    }

    fn refresh_flags(&mut self) {
        for group in &mut self.groups {
            let pending = group.members.iter().any(|nid| !self.voted.contains(nid));
            group.flag = group.st <= self.clock && self.clock < group.et && pending;
        }
    }

    /// Authorize every voter who missed the window and tell them about the
    /// grace slot. Runs exactly once, when voting ends short of complete.
    fn open_grace(&mut self) {
        let until = self.config.end + self.config.grace;
        let non_voters: BTreeSet<Nid> = self
            .registry
            .nids()
            .filter(|nid| !self.voted.contains(*nid))
            .cloned()
            .collect();
        for nid in &non_voters {
            let rec = self.registry.get(nid).expect("registered");
            self.sink.record(
                self.config.end,
                &rec.contact,
                format!("voting window missed; grace window open until {until}"),
            );
        }
        self.grace_nids = non_voters;
    }

    fn window_open_for(&self, nid: &str) -> bool {
        match self.phase {
            Phase::Voting => self
                .group_of
                .get(nid)
                .is_some_and(|&gid| self.groups[gid as usize].flag),
            Phase::Grace => {
                self.grace_nids.contains(nid)
                    && self.config.end <= self.clock
                    && self.clock < self.config.end + self.config.grace
            }
            _ => false,
        }
    }

    /// The standalone admission check: registered, inside an open window,
    /// and not recorded as having voted.
    pub fn check_condition1(&self, nid: &str) -> Result<(), Condition1Failure> {
        if self.registry.get(nid).is_none() {
            return Err(Condition1Failure::NotEligible);
        }
        if !self.window_open_for(nid) {
            return Err(Condition1Failure::WindowClosed);
        }
        if self.voted.contains(nid) {
            return Err(Condition1Failure::AlreadyVoted);
        }
        Ok(())
    }

    /// Issue a PIN to the voter's contact channel for booths without a
    /// working fingerprint reader.
    pub fn request_pin(&mut self, nid: &str) -> Result<String, ElectionError> {
        Ok(self
            .pins
            .issue(&self.registry, nid, self.clock, &mut self.draws, &mut self.sink)?)
    }

    /// The peer validation context as of now; grace authorizations are
    /// included once the grace window has opened.
    pub fn validation_context(&self) -> ValidationContext {
        let mut windows = BTreeMap::new();
        for group in &self.groups {
            for nid in &group.members {
                let digest = self.registry.digest_of(nid).expect("member registered");
                windows.insert(digest, (group.st, group.et));
            }
        }
        ValidationContext {
            ballot_bits: self.config.ballot_bits,
            eligible: self.registry.all_digests(),
            windows,
            grace_digests: self
                .grace_nids
                .iter()
                .filter_map(|nid| self.registry.digest_of(nid))
                .collect(),
            grace_window: (self.config.end, self.config.end + self.config.grace),
            overall: (self.config.start, self.config.end + self.config.grace),
        }
    }

    /// Run the full casting pipeline for one voter at the current clock:
    /// admission, identity proof, ballot encoding, block forging, and the
    /// consensus round. A repeated vote attempt is deliberately let
    /// through to consensus, where the counted-once predicate rejects it.
    pub fn cast_vote(
        &mut self,
        nid: &str,
        credential: &Credential,
        nominee_id: &str,
    ) -> Result<CastOutcome, ElectionError> {
        let rejected = |stage, detail: String| Ok(CastOutcome::Rejected { stage, detail });

        let Some(record) = self.registry.get(nid).cloned() else {
            return rejected(
                RejectStage::Condition1,
                Condition1Failure::NotEligible.to_string(),
            );
        };
        if !self.window_open_for(nid) {
            return rejected(
                RejectStage::Condition1,
                Condition1Failure::WindowClosed.to_string(),
            );
        }

        match credential {
            Credential::Fingerprint(sample) => {
                if sample != &record.coordinates {
                    return rejected(RejectStage::Identity, "fingerprint-mismatch".into());
                }
            }
            Credential::Pin(pin) => {
                if let PinOutcome::Rejected(why) = self.pins.verify(nid, pin, self.clock) {
                    return rejected(RejectStage::Identity, format!("pin-{why}"));
                }
            }
        }

        let digest = self.registry.digest_of(nid).expect("registered");
        let (ballot_string, opening) =
            match encode_ballot(&self.plan, nominee_id, self.config.ballot_bits, &mut self.draws)
            {
                Ok(encoded) => encoded,
                Err(err) => return rejected(RejectStage::Encode, err.to_string()),
            };

        let ballot_number = self.next_ballot_number;
        self.next_ballot_number += 1;
        let block_ref = self.network.next_ref();
        let block = Block::forge(
            block_ref,
            self.network.tip_hash(),
            self.clock,
            Payload::Ballot(Ballot {
                ballot_number,
                voter_digest: digest,
                ballot_string,
            }),
            self.config.difficulty,
        );
        self.proposed_blocks.push(block.clone());
        let ctx = self.validation_context();
        let outcome = self.network.propose(&block, &ctx)?;
        self.proposal_records.push(ProposalRecord {
            at: self.clock,
            ballot_number,
            block_ref,
            accepted: outcome.accepted,
            verdicts: outcome.verdicts.clone(),
        });

        if outcome.accepted {
            self.vault.hold(digest, block_ref, opening);
            self.voted.insert(nid.to_string());
            self.refresh_phase();
            Ok(CastOutcome::Accepted {
                ballot_number,
                block_ref,
            })
        } else {
            let mut reasons: Vec<String> = Vec::new();
            for verdict in &outcome.verdicts {
                for reason in &verdict.reasons {
                    let s = reason.to_string();
                    if !reasons.contains(&s) {
                        reasons.push(s);
                    }
                }
            }
            rejected(RejectStage::Consensus, reasons.join(","))
        }
    }

    /// Drop a vaulted commitment so its ballot can never be opened.
    /// Models a voter (or their booth) withholding the reveal.
    pub fn withhold_sibling(&mut self, nid: &str) -> Result<bool, ElectionError> {
        let digest = self
            .registry
            .digest_of(nid)
            .ok_or_else(|| IdentityError::UnknownNid(nid.to_string()))?;
        Ok(self.vault.withhold(&digest))
    }

    /// Flip a stored ballot bit on every peer, bypassing consensus.
    pub fn tamper_ballot_bit(&mut self, block_ref: u64, bit: u32) -> Result<(), ElectionError> {
        Ok(self.network.tamper_ballot_bit(block_ref, bit)?)
    }

    /// Publish every vaulted sibling block, then count on every peer.
    /// All tallies must agree; the election closes on success.
    pub fn reveal_and_tally(&mut self) -> Result<RevealSummary, ElectionError> {
        if self.phase != Phase::Reveal {
            return Err(ElectionError::WrongPhase {
                action: "reveal",
                phase: self.phase,
            });
        }
        for pending in self.vault.drain_ordered() {
            let own_ref = self.network.next_ref();
            let block = Block::forge(
                own_ref,
                self.network.tip_hash(),
                self.clock,
                Payload::Sibling(SiblingPayload {
                    voter: pending.voter,
                    broadcast_ref: pending.broadcast_ref,
                    own_ref,
                    opening: pending.opening,
                }),
                self.config.difficulty,
            );
            self.network.apply_everywhere(&block)?;
        }

        let mut tallies = Vec::with_capacity(self.network.peer_count());
        let mut records = Vec::new();
        for peer in self.network.peers() {
            let (tally, peer_records) = tally_one(peer.chain(), &self.plan, peer.peer_id());
            if peer.peer_id() == 0 {
                records = peer_records;
            }
            tallies.push(tally);
        }
        for pair in tallies.windows(2) {
            if !pair[0].matches(&pair[1]) {
                return Err(ElectionError::TallyDivergence {
                    a: pair[0].node_id,
                    b: pair[1].node_id,
                });
            }
        }
        self.phase = Phase::Closed;
        Ok(RevealSummary { records, tallies })
    }
}
