//! Commit-reveal ballot encoding.
//!
//! Every nominee is assigned a constant-weight binary code. A cast ballot
//! carries an N-bit string whose left half hides the chosen nominee's code
//! at secret positions and whose right half is random noise. The position
//! list (the opening value) stays with the voter until the reveal phase;
//! without it the ballot string carries no information about the choice,
//! because every nominee's code can be read out of any reachable choice
//! half under some position list.

use crate::identity::VoterDigest;
use crate::rng::DrawSource;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BallotError {
    #[error("cannot assign codes to zero nominees")]
    NoNominees,
    #[error("duplicate nominee id {0}")]
    DuplicateNominee(String),
    #[error("unknown nominee id {0}")]
    UnknownNominee(String),
    #[error("ballot width {0} is not an even number")]
    OddBallotWidth(u32),
    #[error("ballot width {ballot_bits} leaves no room for a {code_len}-bit code in the choice half")]
    ChoiceHalfTooSmall { ballot_bits: u32, code_len: u32 },
    #[error("ballot string is empty")]
    EmptyBallot,
    #[error("ballot string contains non-binary character at position {at}")]
    NonBinaryCharacter { at: usize },
    #[error("opening value has {got} indexes, code length is {expected}")]
    OpeningLength { expected: u32, got: u32 },
    #[error("opening index {index} outside choice half of width {half}")]
    OpeningIndexOutOfRange { index: u32, half: u32 },
    #[error("opening index {index} appears more than once")]
    OpeningIndexRepeated { index: u32 },
    #[error("extracted code {0} is not assigned to any nominee")]
    CodeNotAssigned(String),
}

/// C(n, k) in u128; the code search only ever needs small n.
fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Constant-weight code assignment for an election's nominees.
///
/// All codes share one length and one Hamming weight, so no ballot is
/// distinguishable by how many set bits its choice half carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodePlan {
    code_len: u32,
    weight: u32,
    assignments: Vec<(String, String)>,
    by_code: BTreeMap<String, String>,
}

/// Pick the shortest workable code length, then assign one weight-w code
/// per nominee in declaration order.
///
/// Length search starts at 2 bits and grows until some weight in [1, n-1]
/// offers at least as many codes as there are nominees. The central weight
/// is tried first; remaining weights are scanned outward from the center,
/// preferring the smaller weight on ties. Codes are the first K weight-w
/// strings in descending numeric order.
pub fn assign_codes(nominee_ids: &[String]) -> Result<CodePlan, BallotError> {
    let count = nominee_ids.len() as u128;
    if count == 0 {
        return Err(BallotError::NoNominees);
    }
    {
        let mut seen = BTreeSet::new();
        for id in nominee_ids {
            if !seen.insert(id) {
                return Err(BallotError::DuplicateNominee(id.clone()));
            }
        }
    }

    let mut code_len = 2u32;
    let weight = loop {
        let preferred = code_len.div_ceil(2);
        if binomial(code_len, preferred) >= count {
            break preferred;
        }
        let mut candidates: Vec<u32> = (1..code_len).collect();
        candidates.sort_by_key(|&w| ((2 * w as i64 - code_len as i64).unsigned_abs(), w));
        if let Some(&w) = candidates
            .iter()
            .find(|&&w| w != preferred && binomial(code_len, w) >= count)
        {
            break w;
        }
        code_len += 1;
    };

    let mut codes = Vec::with_capacity(nominee_ids.len());
    for value in (0..(1u64 << code_len)).rev() {
        if value.count_ones() == weight {
            codes.push(format!("{value:0width$b}", width = code_len as usize));
            if codes.len() == nominee_ids.len() {
                break;
            }
        }
    }

    let assignments: Vec<(String, String)> = nominee_ids.iter().cloned().zip(codes).collect();
    let by_code = assignments
        .iter()
        .map(|(id, code)| (code.clone(), id.clone()))
        .collect();
    Ok(CodePlan {
        code_len,
        weight,
        assignments,
        by_code,
    })
}

impl CodePlan {
    /// Rebuild a plan from stored (nominee, code) pairs, e.g. when loading
    /// a genesis block.
    pub fn from_assignments(assignments: Vec<(String, String)>) -> Result<Self, BallotError> {
        if assignments.is_empty() {
            return Err(BallotError::NoNominees);
        }
        let code_len = assignments[0].1.len() as u32;
        let weight = assignments[0].1.bytes().filter(|&b| b == b'1').count() as u32;
        let mut by_code = BTreeMap::new();
        for (id, code) in &assignments {
            if by_code.insert(code.clone(), id.clone()).is_some() {
                return Err(BallotError::DuplicateNominee(id.clone()));
            }
        }
        Ok(Self {
            code_len,
            weight,
            assignments,
            by_code,
        })
    }

    pub fn code_len(&self) -> u32 {
        self.code_len
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn nominee_count(&self) -> usize {
        self.assignments.len()
    }

    pub fn code_of(&self, nominee_id: &str) -> Option<&str> {
        self.assignments
            .iter()
            .find(|(id, _)| id == nominee_id)
            .map(|(_, code)| code.as_str())
    }

    pub fn nominee_of(&self, code: &str) -> Option<&str> {
        self.by_code.get(code).map(String::as_str)
    }

    /// Nominee ids in declaration order.
    pub fn nominees(&self) -> impl Iterator<Item = &str> {
        self.assignments.iter().map(|(id, _)| id.as_str())
    }

    pub fn assignments(&self) -> &[(String, String)] {
        &self.assignments
    }
}

/// An encoded N-bit string, validated binary and even-width. The left
/// half is the choice half, the right half is the random half.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallotString {
    bits: String,
}

impl BallotString {
    pub fn from_bits(bits: String) -> Result<Self, BallotError> {
        if bits.is_empty() {
            return Err(BallotError::EmptyBallot);
        }
        if let Some(at) = bits.bytes().position(|b| b != b'0' && b != b'1') {
            return Err(BallotError::NonBinaryCharacter { at });
        }
        if !bits.len().is_multiple_of(2) {
            return Err(BallotError::OddBallotWidth(bits.len() as u32));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &str {
        &self.bits
    }

    pub fn width(&self) -> u32 {
        self.bits.len() as u32
    }

    pub fn choice_half(&self) -> &str {
        &self.bits[..self.bits.len() / 2]
    }

    pub fn random_half(&self) -> &str {
        &self.bits[self.bits.len() / 2..]
    }
}

impl fmt::Display for BallotString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bits)
    }
}

/// A cast ballot: its reference number, the caster's digest, and the
/// encoded string. This is the payload of a ballot block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ballot {
    pub ballot_number: u64,
    pub voter_digest: VoterDigest,
    pub ballot_string: BallotString,
}

/// The voter's secret: the ordered choice-half positions holding the code
/// bits. Published in the sibling block at reveal time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpeningValue(Vec<u32>);

impl OpeningValue {
    pub fn new(indexes: Vec<u32>) -> Self {
        Self(indexes)
    }

    pub fn indexes(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for OpeningValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{idx}")?;
        }
        write!(f, ")")
    }
}

/// Encode a vote for `nominee_id` into a fresh ballot string.
///
/// Draw order is fixed: code positions first (redrawing on any collision
/// until distinct), then one filler bit shared by every unused choice-half
/// position, then the random half left to right.
pub fn encode_ballot(
    plan: &CodePlan,
    nominee_id: &str,
    ballot_bits: u32,
    draws: &mut dyn DrawSource,
) -> Result<(BallotString, OpeningValue), BallotError> {
    let code = plan
        .code_of(nominee_id)
        .ok_or_else(|| BallotError::UnknownNominee(nominee_id.to_string()))?;
    if !ballot_bits.is_multiple_of(2) {
        return Err(BallotError::OddBallotWidth(ballot_bits));
    }
    let half = ballot_bits / 2;
    if half < plan.code_len {
        return Err(BallotError::ChoiceHalfTooSmall {
            ballot_bits,
            code_len: plan.code_len,
        });
    }

    let mut positions: Vec<u32> = Vec::with_capacity(plan.code_len as usize);
    while positions.len() < plan.code_len as usize {
        let candidate = draws.draw_index(half as usize) as u32;
        if !positions.contains(&candidate) {
            positions.push(candidate);
        }
    }
    let filler = draws.draw_bit();

    let mut bits = vec![if filler == 1 { b'1' } else { b'0' }; half as usize];
    for (code_bit, &pos) in code.bytes().zip(positions.iter()) {
        bits[pos as usize] = code_bit;
    }
    for _ in 0..half {
        bits.push(if draws.draw_bit() == 1 { b'1' } else { b'0' });
    }

    let ballot_string = BallotString {
        bits: String::from_utf8(bits).expect("ascii bits"),
    };
    Ok((ballot_string, OpeningValue(positions)))
}

/// Read the code bits back out of a ballot string using an opening value
/// and map them to the nominee they were assigned to.
pub fn decode_choice(
    plan: &CodePlan,
    ballot_string: &BallotString,
    opening: &OpeningValue,
) -> Result<String, BallotError> {
    if opening.len() as u32 != plan.code_len {
        return Err(BallotError::OpeningLength {
            expected: plan.code_len,
            got: opening.len() as u32,
        });
    }
    let half = ballot_string.width() / 2;
    let mut seen = Vec::with_capacity(opening.len());
    let mut code = String::with_capacity(opening.len());
    for &index in opening.indexes() {
        if index >= half {
            return Err(BallotError::OpeningIndexOutOfRange { index, half });
        }
        if seen.contains(&index) {
            return Err(BallotError::OpeningIndexRepeated { index });
        }
        seen.push(index);
        code.push(ballot_string.bits.as_bytes()[index as usize] as char);
    }
    plan.nominee_of(&code)
        .map(str::to_string)
        .ok_or(BallotError::CodeNotAssigned(code))
}

/// Why a ballot failed format validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatIssue {
    Width { expected: u32, got: u32 },
    NumberNotPositive,
    DuplicateNumber(u64),
}

impl fmt::Display for FormatIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatIssue::Width { expected, got } => {
                write!(f, "length (expected {expected} bits, got {got})")
            }
            FormatIssue::NumberNotPositive => f.write_str("number-not-positive"),
            FormatIssue::DuplicateNumber(n) => write!(f, "duplicate-number ({n})"),
        }
    }
}

/// Stateful ballot format check: width against the configured N, a
/// positive ballot number never seen before. Choice-content checks are
/// impossible before reveal by design; binary characters and the digest
/// width are enforced by the field types themselves.
#[derive(Debug, Clone)]
pub struct FormatValidator {
    ballot_bits: u32,
    seen_numbers: BTreeSet<u64>,
}

impl FormatValidator {
    pub fn new(ballot_bits: u32) -> Self {
        Self {
            ballot_bits,
            seen_numbers: BTreeSet::new(),
        }
    }

    /// Validate one ballot; a valid ballot's number is recorded so a later
    /// repeat is flagged.
    pub fn check(&mut self, ballot: &Ballot) -> Result<(), FormatIssue> {
        if ballot.ballot_string.width() != self.ballot_bits {
            return Err(FormatIssue::Width {
                expected: self.ballot_bits,
                got: ballot.ballot_string.width(),
            });
        }
        if ballot.ballot_number == 0 {
            return Err(FormatIssue::NumberNotPositive);
        }
        if !self.seen_numbers.insert(ballot.ballot_number) {
            return Err(FormatIssue::DuplicateNumber(ballot.ballot_number));
        }
        Ok(())
    }
}
