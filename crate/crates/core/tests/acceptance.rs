//! Acceptance suite. Each test guards one headline guarantee of the
//! simulator and prints a single summary line on success (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::time::{Duration, Instant};

use ballotchain::ballot::{
    assign_codes, decode_choice, encode_ballot, Ballot, BallotString, CodePlan, OpeningValue,
};
use ballotchain::chain::{
    parse_chain_log, verify_chain, Block, BlockHeader, GenesisPayload, GenesisVoter, NomineeEntry,
    Payload, SiblingPayload,
};
use ballotchain::consensus::{filter_valid_ballots, Network, PeerPolicy, ValidationContext};
use ballotchain::election::{
    CastOutcome, Credential, ElectionConfig, ElectionState, ExclusionReason, NomineeSpec, Phase,
    RejectStage, RevealOutcome,
};
use ballotchain::hash::{sha256, Hash256, ZERO_HASH};
use ballotchain::identity::{voter_digest, Coordinates, Registration, VoterDigest};
use ballotchain::rng::{DrawSource, ScriptedDraws, SeededDraws};
use ballotchain::runner::{run_scenario, write_artifacts};
use ballotchain::scenario::{parse_scenario, ActionEntry, ActionKind, Scenario};

fn ids(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn coords_of(i: usize) -> Coordinates {
    let r = i as u16;
    Coordinates::from([(r, 0), (r, 5), (r + 1, 9)])
}

fn registrations(count: usize) -> Vec<Registration> {
    (0..count)
        .map(|i| Registration {
            nid: format!("NID-{i:04}"),
            name: format!("Voter {i}"),
            coordinates: coords_of(i),
            contact: format!("voter{i}@example.test"),
        })
        .collect()
}

fn election_fixture(policies: &[PeerPolicy], voters: usize, difficulty: u32) -> ElectionState {
    let config = ElectionConfig {
        start: 1000,
        end: 2000,
        grace: 300,
        group_count: 1,
        ballot_bits: 16,
        difficulty,
        rng_seed: 77,
        grid: (16, 16),
        pin_ttl: 300,
        nominees: ["A", "B", "C"]
            .map(|id| NomineeSpec {
                id: id.into(),
                label: id.into(),
            })
            .to_vec(),
    };
    ElectionState::new(config, registrations(voters), policies, false).unwrap()
}

#[test]
fn commit_reveal_round_trip_randomized() {
    let started = Instant::now();
    let mut draws = SeededDraws::from_seed(0xACCE55);
    let widths = [16u32, 32, 64];
    let cases = 10_000;
    for _ in 0..cases {
        let count = 1 + draws.draw_index(8);
        let nominee_ids: Vec<String> = (0..count).map(|i| format!("N{i}")).collect();
        let plan = assign_codes(&nominee_ids).unwrap();
        let ballot_bits = widths[draws.draw_index(widths.len())];
        let nominee = &nominee_ids[draws.draw_index(count)];
        let (ballot, opening) = encode_ballot(&plan, nominee, ballot_bits, &mut draws).unwrap();
        assert_eq!(decode_choice(&plan, &ballot, &opening).unwrap(), *nominee);
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("[acceptance 1/9] commit/reveal round trip: pass ({cases} randomized cases in {elapsed:?})");
}

#[test]
fn pinned_encoding_fixture() {
    let nominee_ids = ids(&["A", "B", "C", "D", "E", "F"]);
    let plan = assign_codes(&nominee_ids).unwrap();
    assert_eq!(plan.code_of("A"), Some("1100"));
    let mut draws = ScriptedDraws::new([4usize, 5, 7, 0], [1u8, 0, 1, 1, 0, 0, 1, 0, 1]);
    let (ballot, opening) = encode_ballot(&plan, "A", 16, &mut draws).unwrap();
    assert_eq!(ballot.bits(), "0111111001100101");
    assert_eq!(ballot.choice_half(), "01111110");
    assert_eq!(ballot.random_half(), "01100101");
    assert_eq!(opening.indexes(), &[4, 5, 7, 0]);
    assert_eq!(opening.to_string(), "(4,5,7,0)");
    assert_eq!(decode_choice(&plan, &ballot, &opening).unwrap(), "A");
    println!(
        "[acceptance 2/9] pinned encoding fixture: pass (code 1100 at (4,5,7,0) with filler 1 \
         gives 0111111001100101)"
    );
}

#[test]
fn committed_ballots_stay_ambiguous() {
    let started = Instant::now();
    let nominee_ids = ids(&["A", "B", "C", "D", "E", "F"]);
    let plan = assign_codes(&nominee_ids).unwrap();
    assert_eq!(plan.code_len(), 4);
    assert_eq!(plan.weight(), 2);

    let half = 8usize;
    let mut tuples: Vec<[usize; 4]> = Vec::new();
    for a in 0..half {
        for b in 0..half {
            for c in 0..half {
                for d in 0..half {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        tuples.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    assert_eq!(tuples.len(), 1680);

    // Exhaust every ordered index tuple, both filler bits, and a 4-bit
    // nonce space for the random half; the reachable full-string set must
    // not depend on which nominee was encoded.
    let mut supports: Vec<BTreeSet<String>> = Vec::new();
    for nominee in &nominee_ids {
        let mut reachable = BTreeSet::new();
        for tuple in &tuples {
            for filler in 0u8..2 {
                for nonce in 0u8..16 {
                    let mut bits = vec![filler];
                    bits.extend((0..8).map(|i| if i < 4 { 0 } else { (nonce >> (7 - i)) & 1 }));
                    let mut draws = ScriptedDraws::new(tuple.to_vec(), bits);
                    let (ballot, opening) =
                        encode_ballot(&plan, nominee, 16, &mut draws).unwrap();
                    assert_eq!(decode_choice(&plan, &ballot, &opening).unwrap(), *nominee);
                    reachable.insert(ballot.bits().to_string());
                }
            }
        }
        supports.push(reachable);
    }
    for support in &supports[1..] {
        assert_eq!(support, &supports[0]);
    }
    assert_eq!(supports[0].len(), 896);

    // Every reachable choice half must open to every nominee under some
    // ordered tuple, so the commitment alone pins down nothing.
    let halves: BTreeSet<&str> = supports[0].iter().map(|s| &s[..8]).collect();
    assert_eq!(halves.len(), 56);
    for half_bits in &halves {
        let ballot = BallotString::from_bits(format!("{half_bits}00000000")).unwrap();
        for nominee in &nominee_ids {
            let found = tuples.iter().any(|tuple| {
                let opening = OpeningValue::new(tuple.iter().map(|&i| i as u32).collect());
                decode_choice(&plan, &ballot, &opening).ok().as_deref() == Some(nominee.as_str())
            });
            assert!(found, "choice half {half_bits} cannot open to {nominee}");
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "[acceptance 3/9] committed ballots stay ambiguous: pass (6 nominees share one \
         896-string support; all 56 choice halves open to every nominee; {elapsed:?})"
    );
}

fn count_leading_zero_bits(hash: &Hash256) -> u32 {
    let mut zeros = 0;
    for byte in hash {
        if *byte == 0 {
            zeros += 8;
        } else {
            zeros += byte.leading_zeros();
            break;
        }
    }
    zeros
}

fn header_digest(header: &BlockHeader) -> Hash256 {
    sha256(&header.canonical_bytes())
}

fn smallest_working_nonce(header: &BlockHeader, difficulty: u32) -> u64 {
    let mut probe = *header;
    for nonce in 0u64.. {
        probe.nonce = nonce;
        if count_leading_zero_bits(&header_digest(&probe)) >= difficulty {
            return nonce;
        }
    }
    unreachable!("some nonce always meets the target");
}

/// Reference admission filter, written separately from the library: walks
/// the proposals once and keeps those that a rulebook reading admits.
fn oracle_filter(
    proposals: &[Block],
    genesis: &Block,
    difficulty: u32,
    ctx: &ValidationContext,
) -> Vec<Block> {
    let mut accepted = Vec::new();
    let mut tip_hash = header_digest(&genesis.header);
    let mut next_ref = 1u64;
    let mut used_digests: BTreeSet<VoterDigest> = BTreeSet::new();
    let mut used_numbers: BTreeSet<u64> = BTreeSet::new();
    for block in proposals {
        let Payload::Ballot(ballot) = &block.payload else {
            continue;
        };
        let header = &block.header;
        let sound = header.ref_number == next_ref
            && header.prev_hash == tip_hash
            && header.payload_hash == sha256(&block.payload.encode())
            && count_leading_zero_bits(&header_digest(header)) >= difficulty
            && smallest_working_nonce(header, difficulty) == header.nonce;
        let format = ballot.ballot_string.width() == ctx.ballot_bits
            && ballot.ballot_number > 0
            && !used_numbers.contains(&ballot.ballot_number);
        let signed = ctx.eligible.contains(&ballot.voter_digest);
        let ts = header.timestamp;
        let in_group = ctx
            .windows
            .get(&ballot.voter_digest)
            .is_some_and(|&(st, et)| st <= ts && ts < et);
        let in_grace = ctx.grace_digests.contains(&ballot.voter_digest)
            && ctx.grace_window.0 <= ts
            && ts < ctx.grace_window.1;
        let on_time = (in_group || in_grace) && ctx.overall.0 <= ts && ts < ctx.overall.1;
        let fresh = !used_digests.contains(&ballot.voter_digest);
        if sound && format && signed && on_time && fresh {
            used_digests.insert(ballot.voter_digest);
            used_numbers.insert(ballot.ballot_number);
            tip_hash = header_digest(header);
            next_ref += 1;
            accepted.push(block.clone());
        }
    }
    accepted
}

struct ConsensusFixture {
    genesis: Block,
    plan: CodePlan,
    digests: Vec<VoterDigest>,
    ctx: ValidationContext,
    difficulty: u32,
}

fn group_window(voter_index: usize) -> (u64, u64) {
    if voter_index < 3 {
        (1000, 1500)
    } else {
        (1500, 2000)
    }
}

fn consensus_fixture(difficulty: u32, grace_authorized: bool) -> ConsensusFixture {
    let nominee_ids = ids(&["A", "B", "C"]);
    let plan = assign_codes(&nominee_ids).unwrap();
    let binary_values: Vec<String> = (0..6).map(|i| format!("{:06b}", i + 1)).collect();
    let digests: Vec<VoterDigest> = binary_values
        .iter()
        .map(|value| voter_digest(value).unwrap())
        .collect();
    let voters = digests
        .iter()
        .enumerate()
        .map(|(i, &digest)| GenesisVoter {
            digest,
            coordinates: Coordinates::from([(i as u16, 2 * i as u16 + 1)]),
            binary_value: binary_values[i].clone(),
        })
        .collect();
    let nominees = plan
        .assignments()
        .iter()
        .map(|(id, code)| NomineeEntry {
            id: id.clone(),
            label: id.clone(),
            code: code.clone(),
        })
        .collect();
    let payload = GenesisPayload {
        start: 1000,
        end: 2000,
        grace: 300,
        ballot_bits: 16,
        grid: (16, 16),
        nominees,
        voters,
    };
    let genesis = Block::forge(0, ZERO_HASH, 1000, Payload::Genesis(payload), difficulty);
    let mut windows = BTreeMap::new();
    for (i, &digest) in digests.iter().enumerate() {
        windows.insert(digest, group_window(i));
    }
    let grace_digests = if grace_authorized {
        BTreeSet::from([digests[4], digests[5]])
    } else {
        BTreeSet::new()
    };
    let ctx = ValidationContext {
        ballot_bits: 16,
        eligible: digests.iter().copied().collect(),
        windows,
        grace_digests,
        grace_window: (2000, 2300),
        overall: (1000, 2300),
    };
    ConsensusFixture {
        genesis,
        plan,
        digests,
        ctx,
        difficulty,
    }
}

fn policy_mix(index: usize) -> Vec<PeerPolicy> {
    use PeerPolicy::{AlwaysAccept as A, AlwaysReject as R, Honest as H};
    match index % 6 {
        0 => vec![H; 5],
        1 => vec![H, H, H, H, R],
        2 => vec![H, H, H, R, R],
        3 => vec![H, H, H, H, A],
        4 => vec![H, H, H, R, A],
        _ => vec![H, H, H, H, H, R, R],
    }
}

fn bump_to_non_minimal_nonce(block: &mut Block, difficulty: u32) {
    let mut nonce = block.header.nonce + 1;
    loop {
        block.header.nonce = nonce;
        if count_leading_zero_bits(&header_digest(&block.header)) >= difficulty {
            return;
        }
        nonce += 1;
    }
}

fn forge_proposal(
    kind: usize,
    fixture: &ConsensusFixture,
    net: &Network,
    draws: &mut SeededDraws,
    next_number: &mut u64,
) -> Block {
    let nominee_ids = ["A", "B", "C"];
    let nominee = nominee_ids[draws.draw_index(nominee_ids.len())];
    let difficulty = fixture.difficulty;

    let k = draws.draw_index(6);
    let (st, et) = group_window(k);
    let mut digest = fixture.digests[k];
    let mut ts = st + draws.draw_index((et - st) as usize) as u64;
    let mut width = 16u32;
    let mut number = *next_number;
    *next_number += 1;
    let mut link = (net.next_ref(), net.tip_hash());

    match kind {
        0..=2 => {}
        3 => {
            digest = fixture.digests[4 + draws.draw_index(2)];
            ts = 2000 + draws.draw_index(300) as u64;
        }
        4 => {
            digest = voter_digest(&format!("{:010b}", 512 + draws.draw_index(512))).unwrap();
        }
        5 => ts = 2300 + draws.draw_index(500) as u64,
        6 => ts = 500 + draws.draw_index(500) as u64,
        7 => {
            digest = fixture.digests[draws.draw_index(3)];
            ts = 1500 + draws.draw_index(500) as u64;
        }
        8 => {
            digest = fixture.digests[0];
            ts = 1000 + draws.draw_index(500) as u64;
        }
        9 => {
            if number > 1 {
                number -= 1;
            }
        }
        10 => width = 14,
        11 => link = (1, fixture.genesis.hash()),
        12 | 13 => {}
        _ => unreachable!("draw bound matches the menu"),
    }

    if kind == 13 {
        let payload = Payload::Sibling(SiblingPayload {
            voter: digest,
            broadcast_ref: 1,
            own_ref: link.0,
            opening: OpeningValue::new(vec![0, 1, 2]),
        });
        return Block::forge(link.0, link.1, ts, payload, difficulty);
    }

    let (ballot_string, _) = encode_ballot(&fixture.plan, nominee, width, draws).unwrap();
    let ballot = Ballot {
        ballot_number: number,
        voter_digest: digest,
        ballot_string,
    };
    let mut block = Block::forge(link.0, link.1, ts, Payload::Ballot(ballot), difficulty);
    if kind == 12 {
        bump_to_non_minimal_nonce(&mut block, difficulty);
    }
    block
}

#[test]
fn consensus_filter_matches_independent_oracle() {
    let scenario_count = 24;
    let mut total_proposals = 0usize;
    let mut total_admitted = 0usize;
    for s in 0..scenario_count {
        let difficulty = if s % 5 == 0 { 2 } else { 0 };
        let fixture = consensus_fixture(difficulty, s % 3 == 0);
        let policies = policy_mix(s);
        let mut net = Network::new(&policies, fixture.genesis.clone(), difficulty, false).unwrap();
        let mut draws = SeededDraws::from_seed(4000 + s as u64);
        let mut next_number = 1u64;
        let mut proposals: Vec<Block> = Vec::new();
        for _ in 0..12 {
            let kind = draws.draw_index(14);
            let block = forge_proposal(kind, &fixture, &net, &mut draws, &mut next_number);
            net.propose(&block, &fixture.ctx).unwrap();
            proposals.push(block);
        }
        let filtered =
            filter_valid_ballots(&proposals, &fixture.genesis, difficulty, &fixture.ctx).unwrap();
        let expected = oracle_filter(&proposals, &fixture.genesis, difficulty, &fixture.ctx);
        assert_eq!(filtered, expected, "scenario {s}: filter disagrees with the oracle");
        let chained: Vec<Block> = net.peers()[0].chain().blocks()[1..].to_vec();
        assert_eq!(filtered, chained, "scenario {s}: chain disagrees with the filter");
        assert!(net.chains_identical(), "scenario {s}: peers diverged");
        total_proposals += proposals.len();
        total_admitted += filtered.len();
    }
    println!(
        "[acceptance 4/9] consensus filter matches an independent oracle: pass \
         ({scenario_count} scenarios, {total_proposals} proposals, {total_admitted} admitted; \
         filter == oracle == chain)"
    );
}

#[test]
fn peers_converge_and_rejecting_majority_censors() {
    use PeerPolicy::{AlwaysReject as R, Honest as H};

    let mut st = election_fixture(&[H, H, H, H, H, R, R], 6, 3);
    st.advance_to(1000).unwrap();
    let votes = [
        ("NID-0000", "A"),
        ("NID-0001", "B"),
        ("NID-0002", "A"),
        ("NID-0003", "C"),
        ("NID-0004", "A"),
        ("NID-0005", "B"),
    ];
    for (i, (nid, nominee)) in votes.iter().enumerate() {
        let credential = if i % 3 == 2 {
            Credential::Pin(st.request_pin(nid).unwrap())
        } else {
            Credential::Fingerprint(coords_of(i))
        };
        let outcome = st.cast_vote(nid, &credential, nominee).unwrap();
        assert!(
            matches!(outcome, CastOutcome::Accepted { .. }),
            "vote by {nid} was not chained: {outcome:?}"
        );
        let record = st.proposal_records().last().unwrap();
        assert!(record.accepted);
        assert_eq!(record.verdicts.iter().filter(|v| !v.accept).count(), 2);
    }
    st.advance_to(2000).unwrap();
    assert_eq!(st.phase(), Phase::Reveal);
    let summary = st.reveal_and_tally().unwrap();
    assert_eq!(summary.tallies.len(), 7);
    for tally in &summary.tallies[1..] {
        assert!(tally.matches(&summary.tallies[0]));
    }
    let counts = &summary.tallies[0].counts;
    assert_eq!(counts["A"], 3);
    assert_eq!(counts["B"], 2);
    assert_eq!(counts["C"], 1);
    assert!(summary.tallies.iter().all(|t| t.excluded.is_empty()));
    let reference = st.network().peers()[0].chain().to_log_string();
    for peer in &st.network().peers()[1..] {
        assert_eq!(peer.chain().to_log_string(), reference);
    }
    assert_eq!(st.network().peers()[0].chain().len(), 13);
    verify_chain(st.network().peers()[0].chain().blocks(), 3).unwrap();

    let mut censored = election_fixture(&[H, H, R, R, R], 3, 0);
    censored.advance_to(1000).unwrap();
    for (i, nid) in ["NID-0000", "NID-0001", "NID-0002"].iter().enumerate() {
        let outcome = censored
            .cast_vote(nid, &Credential::Fingerprint(coords_of(i)), "A")
            .unwrap();
        match outcome {
            CastOutcome::Rejected { stage, detail } => {
                assert!(matches!(stage, RejectStage::Consensus));
                assert!(detail.contains("byzantine-policy"));
            }
            CastOutcome::Accepted { .. } => panic!("vote chained despite a rejecting majority"),
        }
    }
    for peer in censored.network().peers() {
        assert_eq!(peer.chain().len(), 1, "a censored ballot reached a chain");
    }
    assert!(censored.vault().is_empty());
    censored.advance_to(2300).unwrap();
    assert_eq!(censored.phase(), Phase::Reveal);
    let empty = censored.reveal_and_tally().unwrap();
    assert!(empty.records.is_empty());
    assert!(empty
        .tallies
        .iter()
        .all(|t| t.total_counted() == 0 && t.excluded.is_empty()));
    println!(
        "[acceptance 5/9] convergence and censorship: pass (7 peers with 2 rejectors agree on \
         chain and tally; a 3-of-5 rejecting majority chained nothing)"
    );
}

#[test]
fn every_single_bit_mutation_is_detected() {
    let started = Instant::now();
    let difficulty = 12;
    let fixture = consensus_fixture(difficulty, false);
    let mut draws = SeededDraws::from_seed(0xC6);
    let mut blocks = vec![fixture.genesis.clone()];
    let mut openings = Vec::new();
    for i in 0..6u64 {
        let nominee = ["A", "B", "C"][i as usize % 3];
        let (ballot_string, opening) =
            encode_ballot(&fixture.plan, nominee, 16, &mut draws).unwrap();
        openings.push(opening);
        let ballot = Ballot {
            ballot_number: i + 1,
            voter_digest: fixture.digests[i as usize],
            ballot_string,
        };
        let prev = blocks.last().unwrap().hash();
        blocks.push(Block::forge(
            i + 1,
            prev,
            1100 + 150 * i,
            Payload::Ballot(ballot),
            difficulty,
        ));
    }
    for (i, opening) in openings.into_iter().take(3).enumerate() {
        let own_ref = blocks.len() as u64;
        let prev = blocks.last().unwrap().hash();
        let payload = Payload::Sibling(SiblingPayload {
            voter: fixture.digests[i],
            broadcast_ref: i as u64 + 1,
            own_ref,
            opening,
        });
        blocks.push(Block::forge(own_ref, prev, 2400, payload, difficulty));
    }
    assert_eq!(blocks.len(), 10);
    verify_chain(&blocks, difficulty).unwrap();

    let mut mutations = 0u64;
    let mut parse_caught = 0u64;
    let mut verify_caught = 0u64;
    for (i, block) in blocks.iter().enumerate() {
        let bytes = block.encode();
        for bit in 0..bytes.len() * 8 {
            let mut mutated = bytes.clone();
            mutated[bit / 8] ^= 1 << (bit % 8);
            mutations += 1;
            match Block::decode(&mutated) {
                Err(_) => parse_caught += 1,
                Ok(candidate) => {
                    let mut tampered = blocks.clone();
                    tampered[i] = candidate;
                    let broken = verify_chain(&tampered, difficulty)
                        .expect_err("a single-bit mutation survived verification");
                    let horizon = ((i + 1).min(blocks.len() - 1)) as u64;
                    assert!(
                        broken.ref_number <= horizon,
                        "block {i} bit {bit}: detected only at block {}",
                        broken.ref_number
                    );
                    verify_caught += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    println!(
        "[acceptance 6/9] single-bit tamper detection: pass ({mutations} mutations over 10 \
         blocks at difficulty {difficulty}: {parse_caught} caught by parsing, {verify_caught} \
         by verification, 0 escapes; {elapsed:?})"
    );
}

fn contains_subslice(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|window| window == needle)
}

fn opening_needle(opening: &OpeningValue) -> Vec<u8> {
    let mut needle = (opening.len() as u32).to_be_bytes().to_vec();
    for &index in opening.indexes() {
        needle.extend_from_slice(&index.to_be_bytes());
    }
    needle
}

#[test]
fn sibling_vault_discipline() {
    use PeerPolicy::{AlwaysReject as R, Honest as H};

    // A consensus-rejected first vote must leave nothing in the vault.
    let mut censored = election_fixture(&[H, H, R, R, R], 3, 0);
    censored.advance_to(1000).unwrap();
    let outcome = censored
        .cast_vote("NID-0000", &Credential::Fingerprint(coords_of(0)), "A")
        .unwrap();
    assert!(matches!(outcome, CastOutcome::Rejected { .. }));
    assert!(censored.vault().is_empty());

    // Five registered voters and four votes: the group window stays open
    // for the fifth, so a duplicate attempt reaches the consensus round.
    let mut st = election_fixture(&[H; 5], 5, 0);
    st.advance_to(1000).unwrap();
    for (i, nominee) in ["A", "B", "B", "C"].iter().enumerate() {
        let nid = format!("NID-{i:04}");
        let outcome = st
            .cast_vote(&nid, &Credential::Fingerprint(coords_of(i)), nominee)
            .unwrap();
        assert!(matches!(outcome, CastOutcome::Accepted { .. }));
    }
    assert_eq!(st.vault().len(), 4);

    // A rejected double vote must not add a second sibling.
    let dup = st
        .cast_vote("NID-0001", &Credential::Fingerprint(coords_of(1)), "C")
        .unwrap();
    match dup {
        CastOutcome::Rejected { stage, detail } => {
            assert!(matches!(stage, RejectStage::Consensus));
            assert!(detail.contains("hasNotBeenCounted"));
        }
        CastOutcome::Accepted { .. } => panic!("double vote was chained"),
    }
    assert_eq!(st.vault().len(), 4);

    // Before the reveal, no serialized block anywhere may contain any
    // vaulted opening in its wire encoding, and no sibling block exists.
    let needles: Vec<(VoterDigest, Vec<u8>)> = st
        .vault()
        .pending()
        .map(|pending| (pending.voter, opening_needle(&pending.opening)))
        .collect();
    assert_eq!(needles.len(), 4);
    let mut serialized: Vec<Vec<u8>> = Vec::new();
    for peer in st.network().peers() {
        for block in peer.chain().blocks() {
            assert!(
                !matches!(block.payload, Payload::Sibling(_)),
                "sibling block published before the reveal"
            );
            serialized.push(block.encode());
        }
    }
    for block in st.proposed_blocks() {
        serialized.push(block.encode());
    }
    for (_, needle) in &needles {
        for bytes in &serialized {
            assert!(
                !contains_subslice(bytes, needle),
                "opening bytes leaked before the reveal"
            );
        }
    }

    // Withhold one sibling; its ballot must be excluded and nothing else.
    let withheld_digest = st.registry().digest_of("NID-0002").unwrap();
    assert!(st.withhold_sibling("NID-0002").unwrap());
    st.advance_to(2300).unwrap();
    let summary = st.reveal_and_tally().unwrap();
    for tally in &summary.tallies {
        assert!(tally.matches(&summary.tallies[0]));
        assert_eq!(tally.counts["A"], 1);
        assert_eq!(tally.counts["B"], 1);
        assert_eq!(tally.counts["C"], 1);
        assert_eq!(tally.excluded.len(), 1);
        assert!(matches!(tally.excluded[0].1, ExclusionReason::MissingSibling));
        assert_eq!(tally.total_counted() + tally.excluded.len() as u64, 4);
    }
    let excluded: Vec<_> = summary
        .records
        .iter()
        .filter(|r| matches!(r.outcome, RevealOutcome::Excluded(_)))
        .collect();
    assert_eq!(excluded.len(), 1);

    // Published siblings must carry their opening bytes, proving the
    // needle encoding above actually matches the wire format; the
    // withheld opening must still be absent everywhere.
    let chain = st.network().peers()[0].chain();
    let published: Vec<Vec<u8>> = chain
        .blocks()
        .iter()
        .filter(|b| matches!(b.payload, Payload::Sibling(_)))
        .map(|b| b.encode())
        .collect();
    assert_eq!(published.len(), 3);
    for (voter, needle) in &needles {
        let hits = published
            .iter()
            .filter(|bytes| contains_subslice(bytes, needle))
            .count();
        if *voter == withheld_digest {
            assert_eq!(hits, 0, "withheld opening was published");
        } else {
            assert!(hits >= 1, "published sibling lost its opening bytes");
        }
    }
    println!(
        "[acceptance 7/9] sibling discipline: pass (rejected votes vault nothing; no opening \
         bytes serialize before the reveal; a withheld sibling excludes exactly its own ballot)"
    );
}

fn determinism_scenario_text() -> &'static str {
    r#"
[config]
start = 1000
end = 2000
grace = 300
groups = 2
ballot_bits = 16
difficulty = 4
seed = 2024

[[nominees]]
id = "A"
label = "Alpha Party"

[[nominees]]
id = "B"
label = "Beta Party"

[[nominees]]
id = "C"

[[voters]]
nid = "NID-0000"
name = "Voter 0"
contact = "voter0@example.test"
coordinates = [[0, 1], [2, 3], [4, 5]]

[[voters]]
nid = "NID-0001"
name = "Voter 1"
contact = "voter1@example.test"
coordinates = [[1, 1], [3, 3]]

[[voters]]
nid = "NID-0002"
name = "Voter 2"
contact = "voter2@example.test"
coordinates = [[2, 7], [5, 5], [9, 0]]

[[voters]]
nid = "NID-0003"
name = "Voter 3"
contact = "voter3@example.test"
coordinates = [[3, 8]]

[[voters]]
nid = "NID-0004"
name = "Voter 4"
contact = "voter4@example.test"
coordinates = [[4, 2], [4, 3]]

[[voters]]
nid = "NID-0005"
name = "Voter 5"
contact = "voter5@example.test"
coordinates = [[5, 12], [6, 1], [7, 7]]

[peers]
count = 5
always_reject = [4]

[[actions]]
at = 1100
actor = "NID-0000"
action = { vote = "A" }

[[actions]]
at = 1150
actor = "NID-0001"
action = { vote-with-pin = "B" }

[[actions]]
at = 1200
actor = "NID-0002"
action = { vote = "A" }

[[actions]]
at = 1400
actor = "external"
action = "noop"

[[actions]]
at = 1600
actor = "NID-0003"
action = { vote = "C" }

[[actions]]
at = 1650
actor = "NID-0002"
action = { vote = "B" }

[[actions]]
at = 1700
actor = "NID-0004"
action = { vote-with-pin = "B" }

[[actions]]
at = 2050
actor = "NID-0005"
action = { vote = "A" }

[[actions]]
at = 2100
actor = "NID-0000"
action = { vote = "C" }
"#
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let scenario = parse_scenario(determinism_scenario_text()).unwrap();
    let first = run_scenario(&scenario, None, false).unwrap();
    let second = run_scenario(&scenario, None, false).unwrap();
    let parallel = run_scenario(&scenario, None, true).unwrap();
    assert_eq!(first.exit_code, 0, "integrity: {:?}", first.report.integrity);

    let dir = tempfile::tempdir().unwrap();
    let paths = [
        dir.path().join("one"),
        dir.path().join("two"),
        dir.path().join("three"),
    ];
    write_artifacts(&paths[0], &first).unwrap();
    write_artifacts(&paths[1], &second).unwrap();
    write_artifacts(&paths[2], &parallel).unwrap();
    for name in [
        "chain.log",
        "notifications.log",
        "report.toml",
        "tally.toml",
        "report.txt",
    ] {
        let reference = fs::read(paths[0].join(name)).unwrap();
        assert!(!reference.is_empty());
        assert_eq!(
            reference,
            fs::read(paths[1].join(name)).unwrap(),
            "{name} differs between identical reruns"
        );
        assert_eq!(
            reference,
            fs::read(paths[2].join(name)).unwrap(),
            "{name} differs under parallel peer validation"
        );
    }
    println!(
        "[acceptance 8/9] byte-identical artifacts: pass (two sequential runs and one parallel \
         run agree on all five files)"
    );
}

#[test]
fn large_election_stays_inside_budget() {
    let started = Instant::now();
    let nominees = ["A", "B", "C", "D", "E"];
    let config = ElectionConfig {
        start: 1000,
        end: 11000,
        grace: 500,
        group_count: 10,
        ballot_bits: 64,
        difficulty: 0,
        rng_seed: 99,
        grid: (40, 40),
        pin_ttl: 300,
        nominees: nominees
            .map(|id| NomineeSpec {
                id: id.into(),
                label: id.into(),
            })
            .to_vec(),
    };
    let voters: Vec<Registration> = (0..1000)
        .map(|i| Registration {
            nid: format!("NID-{i:04}"),
            name: format!("Voter {i}"),
            coordinates: Coordinates::from([((i / 40) as u16, (i % 40) as u16)]),
            contact: format!("voter{i}@example.test"),
        })
        .collect();
    let policies = vec![PeerPolicy::Honest; 5];

    // First pass learns the drawn group schedule; the scenario then votes
    // every member at the opening tick of its own group slot.
    let probe = ElectionState::new(config.clone(), voters.clone(), &policies, false).unwrap();
    let mut groups = probe.groups().to_vec();
    groups.sort_by_key(|g| g.st);
    let mut actions = Vec::new();
    for group in &groups {
        for (i, nid) in group.members.iter().enumerate() {
            actions.push(ActionEntry {
                at: group.st,
                actor: nid.clone(),
                action: ActionKind::Vote(nominees[i % nominees.len()].to_string()),
            });
        }
    }
    assert_eq!(actions.len(), 1000);
    drop(probe);

    let scenario = Scenario {
        config,
        registrations: voters,
        peer_policies: policies,
        actions,
    };
    let outcome = run_scenario(&scenario, None, false).unwrap();
    assert_eq!(outcome.exit_code, 0, "integrity: {:?}", outcome.report.integrity);

    assert_eq!(outcome.report.tally.len(), 5);
    for node in &outcome.report.tally {
        let counted: u64 = node.counts.values().sum();
        assert!(node.excluded.is_empty());
        assert_eq!(counted + node.excluded.len() as u64, 1000);
        assert_eq!(node.counts, outcome.report.tally[0].counts);
    }
    let blocks = parse_chain_log(&outcome.chain_log).unwrap();
    assert_eq!(blocks.len(), 2001);
    let random_halves: BTreeSet<&str> = blocks
        .iter()
        .filter_map(|b| match &b.payload {
            Payload::Ballot(ballot) => Some(ballot.ballot_string.random_half()),
            _ => None,
        })
        .collect();
    assert_eq!(random_halves.len(), 1000, "random halves collided at this width");

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    println!(
        "[acceptance 9/9] large election under budget: pass (1000 voters, 10 groups, 5 peers, \
         {} blocks, identical conserved tallies on every node; {elapsed:?})",
        blocks.len()
    );
}
