//! Voter registration, fingerprint binarization, voter digests and the
//! PIN fallback path.
//!
//! A fingerprint is a set of (row, col) grid cells. Binarization writes one
//! bit per cell in row-major order; the SHA-256 of that ASCII bit string is
//! the voter's only identity on chain. The national ID, name and contact
//! address never leave the registry.

use crate::hash::{sha256, Hash256};
use crate::notify::NotificationSink;
use crate::rng::DrawSource;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// National identification number: the voter's lookup token, never on chain.
pub type Nid = String;

/// Fingerprint cell coordinates, kept sorted so comparisons are canonical.
pub type Coordinates = BTreeSet<(u16, u16)>;

/// Default PIN validity in simulated seconds.
pub const DEFAULT_PIN_TTL: u64 = 300;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("coordinate ({row}, {col}) outside {rows}x{cols} grid")]
    CoordinateOutOfRange {
        row: u16,
        col: u16,
        rows: u16,
        cols: u16,
    },
    #[error("binary value is empty")]
    EmptyBinaryValue,
    #[error("binary value contains non-binary character at position {at}")]
    NonBinaryCharacter { at: usize },
    #[error("duplicate NID {0} in registry")]
    DuplicateNid(Nid),
    #[error("voters {0} and {1} share identical fingerprint coordinates")]
    DuplicateCoordinates(Nid, Nid),
    #[error("unknown NID {0}")]
    UnknownNid(Nid),
}

/// SHA-256 of a voter's fingerprint binary value; the on-chain identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoterDigest(Hash256);

impl VoterDigest {
    pub fn from_bytes(bytes: Hash256) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &Hash256 {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        crate::hash::to_hex(&self.0)
    }
}

impl fmt::Display for VoterDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for VoterDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VoterDigest({})", self.to_hex())
    }
}

/// A registered voter. `binary_value` is precomputed at registration so
/// vote time never re-runs the conversion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoterRecord {
    pub nid: Nid,
    pub name: String,
    pub coordinates: Coordinates,
    pub binary_value: String,
    pub contact: String,
    pub group_id: Option<u32>,
}

/// Registration input before binarization.
#[derive(Debug, Clone)]
pub struct Registration {
    pub nid: Nid,
    pub name: String,
    pub coordinates: Coordinates,
    pub contact: String,
}

/// Converts a fingerprint pattern to its binary value: one bit per grid
/// cell, row-major, 1 iff the cell holds a coordinate point.
pub fn binarize_fingerprint(
    coordinates: &Coordinates,
    grid: (u16, u16),
) -> Result<String, IdentityError> {
    let (rows, cols) = grid;
    for &(row, col) in coordinates {
        if row >= rows || col >= cols {
            return Err(IdentityError::CoordinateOutOfRange {
                row,
                col,
                rows,
                cols,
            });
        }
    }
    let mut bits = vec![b'0'; rows as usize * cols as usize];
    for &(row, col) in coordinates {
        bits[row as usize * cols as usize + col as usize] = b'1';
    }
    Ok(String::from_utf8(bits).expect("ascii bits"))
}

/// SHA-256 digest of the ASCII '0'/'1' binary value.
pub fn voter_digest(binary_value: &str) -> Result<VoterDigest, IdentityError> {
    if binary_value.is_empty() {
        return Err(IdentityError::EmptyBinaryValue);
    }
    if let Some(at) = binary_value.bytes().position(|b| b != b'0' && b != b'1') {
        return Err(IdentityError::NonBinaryCharacter { at });
    }
    Ok(VoterDigest(sha256(binary_value.as_bytes())))
}

/// The eligibility list keyed by NID, with digest and coordinate indexes.
#[derive(Debug, Clone)]
pub struct Registry {
    grid: (u16, u16),
    records: BTreeMap<Nid, VoterRecord>,
    digests: BTreeMap<Nid, VoterDigest>,
    by_digest: BTreeMap<VoterDigest, Nid>,
}

impl Registry {
    /// Binarize and index all registrations; duplicate NIDs or duplicate
    /// coordinate sets are integrity errors at load time.
    pub fn build(registrations: Vec<Registration>, grid: (u16, u16)) -> Result<Self, IdentityError> {
        let mut records = BTreeMap::new();
        let mut digests = BTreeMap::new();
        let mut by_digest: BTreeMap<VoterDigest, Nid> = BTreeMap::new();
        for reg in registrations {
            let binary_value = binarize_fingerprint(&reg.coordinates, grid)?;
            let digest = voter_digest(&binary_value)?;
            if records.contains_key(&reg.nid) {
                return Err(IdentityError::DuplicateNid(reg.nid));
            }
            if let Some(prev) = by_digest.get(&digest) {
                return Err(IdentityError::DuplicateCoordinates(prev.clone(), reg.nid));
            }
            by_digest.insert(digest, reg.nid.clone());
            digests.insert(reg.nid.clone(), digest);
            records.insert(
                reg.nid.clone(),
                VoterRecord {
                    nid: reg.nid,
                    name: reg.name,
                    coordinates: reg.coordinates,
                    binary_value,
                    contact: reg.contact,
                    group_id: None,
                },
            );
        }
        Ok(Self {
            grid,
            records,
            digests,
            by_digest,
        })
    }

    pub fn grid(&self) -> (u16, u16) {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, nid: &str) -> Option<&VoterRecord> {
        self.records.get(nid)
    }

    pub fn digest_of(&self, nid: &str) -> Option<VoterDigest> {
        self.digests.get(nid).copied()
    }

    pub fn nid_of_digest(&self, digest: &VoterDigest) -> Option<&Nid> {
        self.by_digest.get(digest)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VoterRecord> {
        self.records.values()
    }

    pub fn nids(&self) -> impl Iterator<Item = &Nid> {
        self.records.keys()
    }

    pub fn all_digests(&self) -> BTreeSet<VoterDigest> {
        self.digests.values().copied().collect()
    }

    pub fn set_group(&mut self, nid: &str, group_id: u32) {
        if let Some(rec) = self.records.get_mut(nid) {
            rec.group_id = Some(group_id);
        }
    }

    /// Exact coordinate-set match against the registered fingerprints.
    /// Tolerance matching is deliberately not offered.
    pub fn match_fingerprint(&self, sample: &Coordinates) -> Option<&VoterRecord> {
        self.records
            .values()
            .find(|rec| &rec.coordinates == sample)
    }
}

/// A single-use PIN sent to the voter's contact channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinChallenge {
    pub nid: Nid,
    pub pin: String,
    pub issued_at: u64,
    pub ttl: u64,
    consumed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinOutcome {
    Accepted,
    Rejected(PinRejection),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinRejection {
    /// TTL elapsed before verification.
    Expired,
    /// Challenge already accepted once.
    Consumed,
    /// Submitted PIN does not match.
    Mismatch,
    /// No challenge issued for this voter.
    NoChallenge,
}

impl fmt::Display for PinRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PinRejection::Expired => "expired",
            PinRejection::Consumed => "consumed",
            PinRejection::Mismatch => "mismatch",
            PinRejection::NoChallenge => "no-challenge",
        };
        f.write_str(s)
    }
}

/// Issues and verifies PIN challenges; one active challenge per voter.
#[derive(Debug, Default)]
pub struct PinAuthority {
    ttl: u64,
    active: BTreeMap<Nid, PinChallenge>,
}

impl PinAuthority {
    pub fn new(ttl: u64) -> Self {
        Self {
            ttl,
            active: BTreeMap::new(),
        }
    }

    /// Draw a 6-digit PIN, record the delivery in the sink, and remember
    /// the challenge. Re-issuing replaces any previous challenge.
    pub fn issue(
        &mut self,
        registry: &Registry,
        nid: &str,
        now: u64,
        draws: &mut dyn DrawSource,
        sink: &mut NotificationSink,
    ) -> Result<String, IdentityError> {
        let record = registry
            .get(nid)
            .ok_or_else(|| IdentityError::UnknownNid(nid.to_string()))?;
        let pin = format!("{:06}", draws.draw_index(1_000_000));
        sink.record(
            now,
            &record.contact,
            format!("verification pin {pin} (valid {}s)", self.ttl),
        );
        self.active.insert(
            nid.to_string(),
            PinChallenge {
                nid: nid.to_string(),
                pin: pin.clone(),
                issued_at: now,
                ttl: self.ttl,
                consumed: false,
            },
        );
        Ok(pin)
    }

    /// Accept iff the PIN matches, the TTL has not elapsed, and the
    /// challenge has not been consumed. Acceptance consumes the challenge;
    /// a mismatch leaves it usable.
    pub fn verify(&mut self, nid: &str, submitted: &str, now: u64) -> PinOutcome {
        let Some(challenge) = self.active.get_mut(nid) else {
            return PinOutcome::Rejected(PinRejection::NoChallenge);
        };
        if challenge.consumed {
            return PinOutcome::Rejected(PinRejection::Consumed);
        }
        if now > challenge.issued_at + challenge.ttl {
            return PinOutcome::Rejected(PinRejection::Expired);
        }
        if challenge.pin != submitted {
            return PinOutcome::Rejected(PinRejection::Mismatch);
        }
        challenge.consumed = true;
        PinOutcome::Accepted
    }
}
