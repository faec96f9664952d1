//! Proof-of-work blocks and the append-only chain.
//!
//! A block header is 88 canonical bytes: reference number, parent header
//! hash, payload hash, timestamp and nonce, all big-endian. The header
//! hash must carry a configured number of leading zero bits, and the
//! stored nonce must be the smallest one that achieves it, so every block
//! has exactly one valid header for a given payload and timestamp.
//! Chains are persisted as one hex-encoded block per line.

use crate::ballot::{Ballot, BallotError, BallotString, CodePlan, OpeningValue};
use crate::codec::{CodecError, Reader, Writer};
use crate::hash::{leading_zero_bits, sha256, Hash256, ZERO_HASH};
use crate::identity::{Coordinates, VoterDigest};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Highest supported difficulty (leading zero bits).
pub const MAX_DIFFICULTY: u32 = 24;

const TAG_GENESIS: u8 = 0;
const TAG_BALLOT: u8 = 1;
const TAG_SIBLING: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("ballot field: {0}")]
    Ballot(#[from] BallotError),
    #[error("chain log line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("chain log holds no blocks")]
    EmptyChain,
    #[error("expected block {expected}, got ref number {got}")]
    RefMismatch { expected: u64, got: u64 },
    #[error("block {ref_number} does not link to the current tip")]
    PrevHashMismatch { ref_number: u64 },
    #[error("block {ref_number} payload hash does not match its payload")]
    PayloadHashMismatch { ref_number: u64 },
    #[error("block {ref_number} header misses the difficulty target")]
    PowUnsatisfied { ref_number: u64 },
    #[error("first block does not carry the election genesis")]
    MissingGenesis,
    #[error("block {ref_number} carries a second genesis payload")]
    UnexpectedGenesis { ref_number: u64 },
    #[error("difficulty {0} outside supported range 0..={MAX_DIFFICULTY}")]
    DifficultyOutOfRange(u32),
}

/// What a full-chain verification found wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainFault {
    RefSequence,
    PrevHash,
    PayloadHash,
    PowTarget,
    NonceNotMinimal,
    MissingGenesis,
    UnexpectedGenesis,
}

impl fmt::Display for ChainFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChainFault::RefSequence => "ref-sequence",
            ChainFault::PrevHash => "prev-hash",
            ChainFault::PayloadHash => "payload-hash",
            ChainFault::PowTarget => "pow-target",
            ChainFault::NonceNotMinimal => "nonce-not-minimal",
            ChainFault::MissingGenesis => "missing-genesis",
            ChainFault::UnexpectedGenesis => "unexpected-genesis",
        };
        f.write_str(s)
    }
}

/// First defect found while verifying a chain, and where.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainBreak {
    pub ref_number: u64,
    pub fault: ChainFault,
}

impl fmt::Display for ChainBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "broken({}, {})", self.ref_number, self.fault)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub ref_number: u64,
    pub prev_hash: Hash256,
    pub payload_hash: Hash256,
    pub timestamp: u64,
    pub nonce: u64,
}

impl BlockHeader {
    /// Fixed 88-byte big-endian layout, the sole input to the header hash.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.ref_number);
        w.put_hash(&self.prev_hash);
        w.put_hash(&self.payload_hash);
        w.put_u64(self.timestamp);
        w.put_u64(self.nonce);
        w.into_bytes()
    }

    pub fn hash(&self) -> Hash256 {
        sha256(&self.canonical_bytes())
    }

    pub fn meets_target(&self, difficulty: u32) -> bool {
        leading_zero_bits(&self.hash()) >= difficulty
    }
}

/// True iff no nonce smaller than the stored one also meets the target.
pub fn nonce_is_minimal(header: &BlockHeader, difficulty: u32) -> bool {
    let mut probe = *header;
    for candidate in 0..header.nonce {
        probe.nonce = candidate;
        if probe.meets_target(difficulty) {
            return false;
        }
    }
    true
}

/// Search nonces from zero and return the first header that meets the
/// target, making the mined nonce canonical for its inputs.
pub fn mine(
    ref_number: u64,
    prev_hash: Hash256,
    payload_hash: Hash256,
    timestamp: u64,
    difficulty: u32,
) -> BlockHeader {
    let mut header = BlockHeader {
        ref_number,
        prev_hash,
        payload_hash,
        timestamp,
        nonce: 0,
    };
    while !header.meets_target(difficulty) {
        header.nonce += 1;
    }
    header
}

/// A registered voter as the genesis block publishes it: digest and
/// fingerprint data only, never the NID, name or contact address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisVoter {
    pub digest: VoterDigest,
    pub coordinates: Coordinates,
    pub binary_value: String,
}

/// One nominee as recorded in the genesis block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NomineeEntry {
    pub id: String,
    pub label: String,
    pub code: String,
}

/// Election parameters and the eligibility list, fixed before voting opens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisPayload {
    pub start: u64,
    pub end: u64,
    pub grace: u64,
    pub ballot_bits: u32,
    pub grid: (u16, u16),
    pub nominees: Vec<NomineeEntry>,
    pub voters: Vec<GenesisVoter>,
}

impl GenesisPayload {
    pub fn code_plan(&self) -> Result<CodePlan, BallotError> {
        CodePlan::from_assignments(
            self.nominees
                .iter()
                .map(|n| (n.id.clone(), n.code.clone()))
                .collect(),
        )
    }

    pub fn voter_digests(&self) -> BTreeSet<VoterDigest> {
        self.voters.iter().map(|v| v.digest).collect()
    }

    pub fn label_of(&self, nominee_id: &str) -> Option<&str> {
        self.nominees
            .iter()
            .find(|n| n.id == nominee_id)
            .map(|n| n.label.as_str())
    }
}

/// A reveal: the opening value for the ballot block at `broadcast_ref`,
/// published as block `own_ref`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiblingPayload {
    pub voter: VoterDigest,
    pub broadcast_ref: u64,
    pub own_ref: u64,
    pub opening: OpeningValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Genesis(GenesisPayload),
    Ballot(Ballot),
    Sibling(SiblingPayload),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Genesis(_) => "genesis",
            Payload::Ballot(_) => "ballot",
            Payload::Sibling(_) => "sibling",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Payload::Genesis(g) => {
                w.put_u8(TAG_GENESIS);
                w.put_u64(g.start);
                w.put_u64(g.end);
                w.put_u64(g.grace);
                w.put_u32(g.ballot_bits);
                w.put_u16(g.grid.0);
                w.put_u16(g.grid.1);
                w.put_count(g.nominees.len());
                for n in &g.nominees {
                    w.put_str(&n.id);
                    w.put_str(&n.label);
                    w.put_str(&n.code);
                }
                w.put_count(g.voters.len());
                for v in &g.voters {
                    w.put_hash(v.digest.as_bytes());
                    w.put_count(v.coordinates.len());
                    for &(row, col) in &v.coordinates {
                        w.put_u16(row);
                        w.put_u16(col);
                    }
                    w.put_str(&v.binary_value);
                }
            }
            Payload::Ballot(b) => {
                w.put_u8(TAG_BALLOT);
                w.put_u64(b.ballot_number);
                w.put_hash(b.voter_digest.as_bytes());
                w.put_str(b.ballot_string.bits());
            }
            Payload::Sibling(s) => {
                w.put_u8(TAG_SIBLING);
                w.put_hash(s.voter.as_bytes());
                w.put_u64(s.broadcast_ref);
                w.put_u64(s.own_ref);
                w.put_count(s.opening.len());
                for &index in s.opening.indexes() {
                    w.put_u32(index);
                }
            }
        }
        w.into_bytes()
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, ChainError> {
        let tag_offset = r.offset();
        let tag = r.take_u8("payload tag")?;
        match tag {
            TAG_GENESIS => {
                let start = r.take_u64("genesis start")?;
                let end = r.take_u64("genesis end")?;
                let grace = r.take_u64("genesis grace")?;
                let ballot_bits = r.take_u32("genesis ballot bits")?;
                let rows = r.take_u16("genesis grid rows")?;
                let cols = r.take_u16("genesis grid cols")?;
                let nominee_count = r.take_count("genesis nominee count", 12)?;
                let mut nominees = Vec::with_capacity(nominee_count);
                for _ in 0..nominee_count {
                    nominees.push(NomineeEntry {
                        id: r.take_str("nominee id")?,
                        label: r.take_str("nominee label")?,
                        code: r.take_str("nominee code")?,
                    });
                }
                let voter_count = r.take_count("genesis voter count", 40)?;
                let mut voters = Vec::with_capacity(voter_count);
                for _ in 0..voter_count {
                    let digest = VoterDigest::from_bytes(r.take_hash("voter digest")?);
                    let coord_count = r.take_count("coordinate count", 4)?;
                    let mut coordinates = Coordinates::new();
                    for _ in 0..coord_count {
                        let row = r.take_u16("coordinate row")?;
                        let col = r.take_u16("coordinate col")?;
                        coordinates.insert((row, col));
                    }
                    let binary_value = r.take_str("voter binary value")?;
                    voters.push(GenesisVoter {
                        digest,
                        coordinates,
                        binary_value,
                    });
                }
                Ok(Payload::Genesis(GenesisPayload {
                    start,
                    end,
                    grace,
                    ballot_bits,
                    grid: (rows, cols),
                    nominees,
                    voters,
                }))
            }
            TAG_BALLOT => {
                let ballot_number = r.take_u64("ballot number")?;
                let voter_digest = VoterDigest::from_bytes(r.take_hash("ballot voter digest")?);
                let bits = r.take_str("ballot bits")?;
                Ok(Payload::Ballot(Ballot {
                    ballot_number,
                    voter_digest,
                    ballot_string: BallotString::from_bits(bits)?,
                }))
            }
            TAG_SIBLING => {
                let voter = VoterDigest::from_bytes(r.take_hash("sibling voter digest")?);
                let broadcast_ref = r.take_u64("sibling broadcast ref")?;
                let own_ref = r.take_u64("sibling own ref")?;
                let count = r.take_count("opening index count", 4)?;
                let mut indexes = Vec::with_capacity(count);
                for _ in 0..count {
                    indexes.push(r.take_u32("opening index")?);
                }
                Ok(Payload::Sibling(SiblingPayload {
                    voter,
                    broadcast_ref,
                    own_ref,
                    opening: OpeningValue::new(indexes),
                }))
            }
            other => Err(CodecError::UnknownTag {
                offset: tag_offset,
                tag: other,
                what: "payload tag",
            }
            .into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub payload: Payload,
}

impl Block {
    /// Hash the payload, mine the smallest nonce, and assemble the block.
    pub fn forge(
        ref_number: u64,
        prev_hash: Hash256,
        timestamp: u64,
        payload: Payload,
        difficulty: u32,
    ) -> Self {
        let payload_hash = sha256(&payload.encode());
        let header = mine(ref_number, prev_hash, payload_hash, timestamp, difficulty);
        Self { header, payload }
    }

    pub fn hash(&self) -> Hash256 {
        self.header.hash()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut bytes = self.header.canonical_bytes();
        bytes.extend_from_slice(&self.payload.encode());
        bytes
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ChainError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader {
            ref_number: r.take_u64("ref number")?,
            prev_hash: r.take_hash("prev hash")?,
            payload_hash: r.take_hash("payload hash")?,
            timestamp: r.take_u64("timestamp")?,
            nonce: r.take_u64("nonce")?,
        };
        let payload = Payload::decode_from(&mut r)?;
        r.finish()?;
        Ok(Self { header, payload })
    }
}

/// Verify structural integrity block by block, then nonce minimality.
///
/// Cheap checks run first across the whole chain so a defect is reported
/// at the block that carries it (or its immediate successor for a broken
/// link) before any nonce re-search happens.
pub fn verify_chain(blocks: &[Block], difficulty: u32) -> Result<(), ChainBreak> {
    if blocks.is_empty() {
        return Err(ChainBreak {
            ref_number: 0,
            fault: ChainFault::MissingGenesis,
        });
    }
    let mut prev_hash = ZERO_HASH;
    for (i, block) in blocks.iter().enumerate() {
        let ref_number = i as u64;
        let fail = |fault| ChainBreak { ref_number, fault };
        if block.header.ref_number != ref_number {
            return Err(fail(ChainFault::RefSequence));
        }
        if block.header.prev_hash != prev_hash {
            return Err(fail(ChainFault::PrevHash));
        }
        match (&block.payload, i) {
            (Payload::Genesis(_), 0) => {}
            (_, 0) => return Err(fail(ChainFault::MissingGenesis)),
            (Payload::Genesis(_), _) => return Err(fail(ChainFault::UnexpectedGenesis)),
            _ => {}
        }
        if sha256(&block.payload.encode()) != block.header.payload_hash {
            return Err(fail(ChainFault::PayloadHash));
        }
        if !block.header.meets_target(difficulty) {
            return Err(fail(ChainFault::PowTarget));
        }
        prev_hash = block.header.hash();
    }
    for block in blocks {
        if !nonce_is_minimal(&block.header, difficulty) {
            return Err(ChainBreak {
                ref_number: block.header.ref_number,
                fault: ChainFault::NonceNotMinimal,
            });
        }
    }
    Ok(())
}

/// One node's copy of the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    blocks: Vec<Block>,
    difficulty: u32,
}

impl ChainState {
    /// Start a chain from its genesis block.
    pub fn new(genesis: Block, difficulty: u32) -> Result<Self, ChainError> {
        if difficulty > MAX_DIFFICULTY {
            return Err(ChainError::DifficultyOutOfRange(difficulty));
        }
        if !matches!(genesis.payload, Payload::Genesis(_)) {
            return Err(ChainError::MissingGenesis);
        }
        if genesis.header.ref_number != 0 {
            return Err(ChainError::RefMismatch {
                expected: 0,
                got: genesis.header.ref_number,
            });
        }
        if genesis.header.prev_hash != ZERO_HASH {
            return Err(ChainError::PrevHashMismatch { ref_number: 0 });
        }
        let mut chain = Self {
            blocks: Vec::new(),
            difficulty,
        };
        chain.check_block_body(&genesis)?;
        chain.blocks.push(genesis);
        Ok(chain)
    }

    /// Rebuild a node from blocks, verifying the whole chain first.
    pub fn from_blocks(blocks: Vec<Block>, difficulty: u32) -> Result<Self, ChainBreak> {
        verify_chain(&blocks, difficulty)?;
        Ok(Self { blocks, difficulty })
    }

    fn check_block_body(&self, block: &Block) -> Result<(), ChainError> {
        let ref_number = block.header.ref_number;
        if sha256(&block.payload.encode()) != block.header.payload_hash {
            return Err(ChainError::PayloadHashMismatch { ref_number });
        }
        if !block.header.meets_target(self.difficulty) {
            return Err(ChainError::PowUnsatisfied { ref_number });
        }
        Ok(())
    }

    /// Append a block at the tip, checking its links and proof of work.
    pub fn append(&mut self, block: Block) -> Result<(), ChainError> {
        let expected = self.blocks.len() as u64;
        if block.header.ref_number != expected {
            return Err(ChainError::RefMismatch {
                expected,
                got: block.header.ref_number,
            });
        }
        if block.header.prev_hash != self.tip_hash() {
            return Err(ChainError::PrevHashMismatch {
                ref_number: block.header.ref_number,
            });
        }
        if matches!(block.payload, Payload::Genesis(_)) {
            return Err(ChainError::UnexpectedGenesis {
                ref_number: block.header.ref_number,
            });
        }
        self.check_block_body(&block)?;
        self.blocks.push(block);
        Ok(())
    }

    pub fn difficulty(&self) -> u32 {
        self.difficulty
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn get(&self, ref_number: u64) -> Option<&Block> {
        self.blocks.get(ref_number as usize)
    }

    /// Test-and-fault-injection hook: hand out a mutable block without any
    /// integrity checks. Simulation code uses this only to model tampering.
    pub fn fault_inject_block_mut(&mut self, ref_number: u64) -> Option<&mut Block> {
        self.blocks.get_mut(ref_number as usize)
    }

    pub fn tip_hash(&self) -> Hash256 {
        self.blocks
            .last()
            .map(|b| b.header.hash())
            .unwrap_or(ZERO_HASH)
    }

    pub fn next_ref(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn genesis(&self) -> &GenesisPayload {
        match &self.blocks[0].payload {
            Payload::Genesis(g) => g,
            _ => unreachable!("chain construction guarantees a genesis head"),
        }
    }

    /// Digests that already have a ballot block on this chain.
    pub fn ballot_digests(&self) -> BTreeSet<VoterDigest> {
        self.ballots().map(|(_, b)| b.voter_digest).collect()
    }

    /// Ballot numbers already on this chain.
    pub fn ballot_numbers(&self) -> BTreeSet<u64> {
        self.ballots().map(|(_, b)| b.ballot_number).collect()
    }

    pub fn ballots(&self) -> impl Iterator<Item = (u64, &Ballot)> {
        self.blocks.iter().filter_map(|b| match &b.payload {
            Payload::Ballot(p) => Some((b.header.ref_number, p)),
            _ => None,
        })
    }

    pub fn ballot_by_number(&self, ballot_number: u64) -> Option<(u64, &Ballot)> {
        self.ballots().find(|(_, b)| b.ballot_number == ballot_number)
    }

    pub fn siblings(&self) -> impl Iterator<Item = (u64, &SiblingPayload)> {
        self.blocks.iter().filter_map(|b| match &b.payload {
            Payload::Sibling(p) => Some((b.header.ref_number, p)),
            _ => None,
        })
    }

    /// One hex-encoded block per line.
    pub fn to_log_string(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(&hex::encode(block.encode()));
            out.push('\n');
        }
        out
    }
}

/// Parse a chain log (structure only; run `verify_chain` for integrity).
pub fn parse_chain_log(text: &str) -> Result<Vec<Block>, ChainError> {
    let mut blocks = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let bytes = hex::decode(line).map_err(|_| ChainError::BadLine {
            line: i + 1,
            reason: "invalid hex".into(),
        })?;
        let block = Block::decode(&bytes).map_err(|e| ChainError::BadLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        blocks.push(block);
    }
    if blocks.is_empty() {
        return Err(ChainError::EmptyChain);
    }
    Ok(blocks)
}

/// A reveal held back until the reveal phase opens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingSibling {
    pub voter: VoterDigest,
    pub broadcast_ref: u64,
    pub opening: OpeningValue,
}

/// Stores opening values for accepted ballots until release. Nothing in
/// here is serialized anywhere before the reveal phase.
#[derive(Debug, Clone, Default)]
pub struct SiblingVault {
    pending: BTreeMap<u64, PendingSibling>,
}

impl SiblingVault {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hold(&mut self, voter: VoterDigest, broadcast_ref: u64, opening: OpeningValue) {
        let previous = self.pending.insert(
            broadcast_ref,
            PendingSibling {
                voter,
                broadcast_ref,
                opening,
            },
        );
        debug_assert!(previous.is_none(), "one sibling per ballot block");
    }

    /// Drop the pending reveal for a voter, simulating a client that never
    /// publishes its sibling. Returns true if one was held.
    pub fn withhold(&mut self, voter: &VoterDigest) -> bool {
        let key = self
            .pending
            .values()
            .find(|p| &p.voter == voter)
            .map(|p| p.broadcast_ref);
        match key {
            Some(k) => self.pending.remove(&k).is_some(),
            None => false,
        }
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingSibling> {
        self.pending.values()
    }

    pub fn holds(&self, voter: &VoterDigest) -> bool {
        self.pending.values().any(|p| &p.voter == voter)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Remove and return all pending reveals ordered by ballot reference.
    pub fn drain_ordered(&mut self) -> Vec<PendingSibling> {
        std::mem::take(&mut self.pending).into_values().collect()
    }
}
