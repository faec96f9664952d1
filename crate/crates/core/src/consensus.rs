//! Simulated peer network: independent validation of proposed ballot
//! blocks and majority acceptance.
//!
//! Every peer holds its own chain copy. An honest peer checks four
//! predicates in a fixed order: correct format (including proof of work
//! and link integrity), a known voter digest, a timestamp inside the
//! voter's window, and no earlier ballot from the same digest. A proposal
//! is accepted only when strictly more than half of all peers accept; an
//! accepted block is appended by every peer.

use crate::chain::{nonce_is_minimal, Block, ChainError, ChainState, GenesisPayload, Payload};
use crate::hash::sha256;
use crate::identity::VoterDigest;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("network needs at least one peer")]
    NoPeers,
    #[error("peer {peer_id} failed to apply block {ref_number}: {source}")]
    Divergence {
        peer_id: u32,
        ref_number: u64,
        source: ChainError,
    },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("no block {0} on the chain")]
    TamperUnknownBlock(u64),
    #[error("block {0} is not a ballot block")]
    TamperNotBallot(u64),
    #[error("bit {bit} out of range for a {width}-bit ballot string")]
    TamperBitOutOfRange { bit: u32, width: u32 },
}

/// How a peer decides on proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerPolicy {
    Honest,
    AlwaysReject,
    AlwaysAccept,
}

impl fmt::Display for PeerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PeerPolicy::Honest => "honest",
            PeerPolicy::AlwaysReject => "always-reject",
            PeerPolicy::AlwaysAccept => "always-accept",
        };
        f.write_str(s)
    }
}

/// A failed validation predicate, in the validator's naming.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    CorrectFormat,
    AllSignature,
    CastOnTime,
    NotBeenCounted,
    Policy,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::CorrectFormat => "isCorrectFormat",
            RejectReason::AllSignature => "hasAllSignature",
            RejectReason::CastOnTime => "isCastOnTime",
            RejectReason::NotBeenCounted => "hasNotBeenCounted",
            RejectReason::Policy => "byzantine-policy",
        };
        f.write_str(s)
    }
}

/// One peer's decision on one proposal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub peer_id: u32,
    pub accept: bool,
    pub reasons: Vec<RejectReason>,
}

/// Everything a peer needs to judge timeliness and eligibility, keyed by
/// voter digest only; peers never see NIDs, names or contact addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationContext {
    pub ballot_bits: u32,
    pub eligible: BTreeSet<VoterDigest>,
    /// Per-voter group window [st, et).
    pub windows: BTreeMap<VoterDigest, (u64, u64)>,
    /// Digests authorized to vote during the grace window.
    pub grace_digests: BTreeSet<VoterDigest>,
    /// The grace window [ET, ET+grace).
    pub grace_window: (u64, u64),
    /// The whole election window [ST, ET+grace).
    pub overall: (u64, u64),
}

impl ValidationContext {
    /// Degraded context for auditing a chain file on its own: group
    /// windows are not recorded on chain, so every eligible digest is
    /// checked against the whole election window.
    pub fn file_audit(genesis: &GenesisPayload) -> Self {
        let overall = (genesis.start, genesis.end + genesis.grace);
        let eligible = genesis.voter_digests();
        let windows = eligible.iter().map(|&d| (d, overall)).collect();
        Self {
            ballot_bits: genesis.ballot_bits,
            eligible,
            windows,
            grace_digests: BTreeSet::new(),
            grace_window: (genesis.end, genesis.end + genesis.grace),
            overall,
        }
    }
}

/// One node in the simulated network.
#[derive(Debug, Clone)]
pub struct PeerNode {
    peer_id: u32,
    policy: PeerPolicy,
    chain: ChainState,
    seen_digests: BTreeSet<VoterDigest>,
    seen_numbers: BTreeSet<u64>,
}

impl PeerNode {
    pub fn new(
        peer_id: u32,
        policy: PeerPolicy,
        genesis: Block,
        difficulty: u32,
    ) -> Result<Self, ChainError> {
        Ok(Self {
            peer_id,
            policy,
            chain: ChainState::new(genesis, difficulty)?,
            seen_digests: BTreeSet::new(),
            seen_numbers: BTreeSet::new(),
        })
    }

    pub fn peer_id(&self) -> u32 {
        self.peer_id
    }

    pub fn policy(&self) -> PeerPolicy {
        self.policy
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    fn failed_predicates(&self, block: &Block, ctx: &ValidationContext) -> Vec<RejectReason> {
        let Payload::Ballot(ballot) = &block.payload else {
            return vec![RejectReason::CorrectFormat];
        };
        let mut reasons = Vec::new();
        let difficulty = self.chain.difficulty();

        let format_ok = ballot.ballot_string.width() == ctx.ballot_bits
            && ballot.ballot_number > 0
            && !self.seen_numbers.contains(&ballot.ballot_number)
            && block.header.ref_number == self.chain.next_ref()
            && block.header.prev_hash == self.chain.tip_hash()
            && sha256(&block.payload.encode()) == block.header.payload_hash
            && block.header.meets_target(difficulty)
            && nonce_is_minimal(&block.header, difficulty);
        if !format_ok {
            reasons.push(RejectReason::CorrectFormat);
        }

        let digest = ballot.voter_digest;
        if !ctx.eligible.contains(&digest) {
            reasons.push(RejectReason::AllSignature);
        }

        let ts = block.header.timestamp;
        let in_group = ctx
            .windows
            .get(&digest)
            .is_some_and(|&(st, et)| st <= ts && ts < et);
        let in_grace = ctx.grace_digests.contains(&digest)
            && ctx.grace_window.0 <= ts
            && ts < ctx.grace_window.1;
        let in_overall = ctx.overall.0 <= ts && ts < ctx.overall.1;
        if !((in_group || in_grace) && in_overall) {
            reasons.push(RejectReason::CastOnTime);
        }

        if self.seen_digests.contains(&digest) {
            reasons.push(RejectReason::NotBeenCounted);
        }
        reasons
    }

    /// Judge a proposal. Honest peers apply the predicate suite; byzantine
    /// policies answer without looking.
    pub fn validate(&self, block: &Block, ctx: &ValidationContext) -> Verdict {
        match self.policy {
            PeerPolicy::AlwaysAccept => Verdict {
                peer_id: self.peer_id,
                accept: true,
                reasons: Vec::new(),
            },
            PeerPolicy::AlwaysReject => Verdict {
                peer_id: self.peer_id,
                accept: false,
                reasons: vec![RejectReason::Policy],
            },
            PeerPolicy::Honest => {
                let reasons = self.failed_predicates(block, ctx);
                Verdict {
                    peer_id: self.peer_id,
                    accept: reasons.is_empty(),
                    reasons,
                }
            }
        }
    }

    /// Append an accepted block to the local chain and index it.
    pub fn apply(&mut self, block: &Block) -> Result<(), ChainError> {
        self.chain.append(block.clone())?;
        if let Payload::Ballot(ballot) = &block.payload {
            self.seen_digests.insert(ballot.voter_digest);
            self.seen_numbers.insert(ballot.ballot_number);
        }
        Ok(())
    }
}

/// Outcome of one proposal round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposalOutcome {
    pub accepted: bool,
    pub verdicts: Vec<Verdict>,
}

impl ProposalOutcome {
    pub fn accept_count(&self) -> usize {
        self.verdicts.iter().filter(|v| v.accept).count()
    }

    pub fn reject_count(&self) -> usize {
        self.verdicts.len() - self.accept_count()
    }

    /// For audit logs: "accepted 5-2" or "discarded 2-3".
    pub fn summary(&self) -> String {
        format!(
            "{} {}-{}",
            if self.accepted { "accepted" } else { "discarded" },
            self.accept_count(),
            self.reject_count()
        )
    }
}

/// The full peer set and the majority rule.
#[derive(Debug, Clone)]
pub struct Network {
    peers: Vec<PeerNode>,
    parallel: bool,
}

impl Network {
    pub fn new(
        policies: &[PeerPolicy],
        genesis: Block,
        difficulty: u32,
        parallel: bool,
    ) -> Result<Self, ConsensusError> {
        if policies.is_empty() {
            return Err(ConsensusError::NoPeers);
        }
        let mut peers = Vec::with_capacity(policies.len());
        for (i, &policy) in policies.iter().enumerate() {
            peers.push(PeerNode::new(i as u32, policy, genesis.clone(), difficulty)?);
        }
        Ok(Self { peers, parallel })
    }

    pub fn peer_count(&self) -> usize {
        self.peers.len()
    }

    pub fn peers(&self) -> &[PeerNode] {
        &self.peers
    }

    pub fn peer(&self, peer_id: u32) -> Option<&PeerNode> {
        self.peers.get(peer_id as usize)
    }

    pub fn parallel(&self) -> bool {
        self.parallel
    }

    /// The tip hash shared by all peers (they are asserted identical).
    pub fn tip_hash(&self) -> crate::hash::Hash256 {
        self.peers[0].chain.tip_hash()
    }

    pub fn next_ref(&self) -> u64 {
        self.peers[0].chain.next_ref()
    }

    /// Collect verdicts from every peer, apply the strict-majority rule,
    /// and on acceptance append the block everywhere.
    pub fn propose(
        &mut self,
        block: &Block,
        ctx: &ValidationContext,
    ) -> Result<ProposalOutcome, ConsensusError> {
        let mut verdicts: Vec<Verdict> = if self.parallel {
            self.peers
                .par_iter()
                .map(|p| p.validate(block, ctx))
                .collect()
        } else {
            self.peers.iter().map(|p| p.validate(block, ctx)).collect()
        };
        verdicts.sort_by_key(|v| v.peer_id);
        let accepts = verdicts.iter().filter(|v| v.accept).count();
        let accepted = accepts * 2 > self.peers.len();
        if accepted {
            self.apply_everywhere(block)?;
        }
        Ok(ProposalOutcome { accepted, verdicts })
    }

    /// Append a block on every peer without a vote; used for sibling
    /// blocks, which are published rather than proposed.
    pub fn apply_everywhere(&mut self, block: &Block) -> Result<(), ConsensusError> {
        for peer in &mut self.peers {
            peer.apply(block).map_err(|source| ConsensusError::Divergence {
                peer_id: peer.peer_id,
                ref_number: block.header.ref_number,
                source,
            })?;
        }
        Ok(())
    }

    /// Flip one ballot-string bit of an already-appended ballot block on
    /// every peer, leaving headers untouched. Models an attacker editing
    /// stored data; chain verification must catch it afterwards.
    pub fn tamper_ballot_bit(&mut self, block_ref: u64, bit: u32) -> Result<(), ConsensusError> {
        for peer in &mut self.peers {
            let block = peer
                .chain
                .fault_inject_block_mut(block_ref)
                .ok_or(ConsensusError::TamperUnknownBlock(block_ref))?;
            let Payload::Ballot(ballot) = &mut block.payload else {
                return Err(ConsensusError::TamperNotBallot(block_ref));
            };
            let width = ballot.ballot_string.width();
            if bit >= width {
                return Err(ConsensusError::TamperBitOutOfRange { bit, width });
            }
            let mut bits: Vec<u8> = ballot.ballot_string.bits().bytes().collect();
            bits[bit as usize] ^= b'0' ^ b'1';
            ballot.ballot_string =
                crate::ballot::BallotString::from_bits(String::from_utf8(bits).expect("ascii"))
                    .expect("bit flip keeps the string binary");
        }
        Ok(())
    }

    /// True iff every peer's serialized chain is byte-identical.
    pub fn chains_identical(&self) -> bool {
        let reference = self.peers[0].chain.to_log_string();
        self.peers
            .iter()
            .all(|p| p.chain.to_log_string() == reference)
    }
}

/// Re-run the four predicates over a proposal sequence against a fresh
/// chain and return the blocks that pass, in order. Used as an
/// independent audit of what consensus admitted.
pub fn filter_valid_ballots(
    proposals: &[Block],
    genesis: &Block,
    difficulty: u32,
    ctx: &ValidationContext,
) -> Result<Vec<Block>, ChainError> {
    let mut referee = PeerNode::new(0, PeerPolicy::Honest, genesis.clone(), difficulty)?;
    let mut valid = Vec::new();
    for block in proposals {
        if referee.validate(block, ctx).accept {
            referee.apply(block)?;
            valid.push(block.clone());
        }
    }
    Ok(valid)
}
