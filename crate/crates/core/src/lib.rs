//! Deterministic multi-peer election simulator.
//!
//! The protocol keeps every cast choice secret until the election closes:
//! a ballot hides a constant-weight nominee code at random indexes of its
//! choice half, the index tuple (the opening value) stays in a private
//! sibling record, and only after voting ends are the siblings broadcast
//! so every peer can decode and tally the same result. Blocks are
//! hash-linked and mined with a leading-zero-bit proof of work; a simulated
//! peer network accepts each ballot block by strict majority.
//!
//! Modules follow the protocol surface: [`identity`] (voter registration,
//! fingerprint digests, PIN fallback), [`ballot`] (nominee codes and ballot
//! strings), [`chain`] (blocks, mining, the sibling vault), [`consensus`]
//! (peer validation and majority acceptance), [`election`] (the phased
//! state machine), and [`scenario`]/[`runner`]/[`report`] (the scripted
//! simulation harness).

pub mod ballot;
pub mod chain;
pub mod codec;
pub mod consensus;
pub mod election;
pub mod hash;
pub mod identity;
pub mod notify;
pub mod report;
pub mod rng;
pub mod runner;
pub mod scenario;

pub use ballot::{
    assign_codes, decode_choice, encode_ballot, Ballot, BallotError, BallotString,
    FormatValidator, OpeningValue,
};
pub use chain::{
    mine, parse_chain_log, verify_chain, Block, BlockHeader, ChainBreak, ChainError, ChainState,
    GenesisPayload, Payload, SiblingVault,
};
pub use consensus::{
    filter_valid_ballots, ConsensusError, Network, PeerNode, PeerPolicy, RejectReason,
    ValidationContext, Verdict,
};
pub use election::{
    partition_groups, CastOutcome, Credential, ElectionConfig, ElectionError, ElectionState,
    NomineeSpec, Phase, RevealSummary, Tally,
};
pub use identity::{binarize_fingerprint, voter_digest, Registration, Registry, VoterDigest};
pub use report::{render_ballot, render_text, AuditReport};
pub use runner::{run_scenario, write_artifacts, RunOutcome};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
