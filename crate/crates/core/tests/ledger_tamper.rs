mod common;

use fedjudge::ledger::{Chain, Ed25519, Payload, SignatureScheme, Verdict};
use fedjudge::Error;

#[test]
fn fixture_verifies_and_roundtrips() {
    let (chain, _) = common::ledger_fixture();
    assert_eq!(chain.verify(), Verdict::Valid);
    let bytes = chain.export_binary();
    let back: Chain = Chain::import_binary(&bytes).unwrap();
    assert_eq!(back, chain);
    assert_eq!(back.export_binary(), bytes);
    assert_eq!(chain.export_text().lines().count(), 10);
}

#[test]
fn every_single_byte_tamper_is_detected() {
    let (chain, _) = common::ledger_fixture();
    let clean = chain.export_binary();
    for pos in 0..clean.len() {
        for mask in [0x01u8, 0x80, 0xff] {
            let mut bytes = clean.clone();
            bytes[pos] ^= mask;
            assert!(common::tamper_detected(&bytes), "byte {pos} xor {mask:#04x} went unnoticed");
        }
    }
}

#[test]
fn in_memory_tamper_names_the_block() {
    let (mut chain, _) = common::ledger_fixture();
    if let Payload::ScreeningVoteList { votes, .. } = &mut chain.blocks_mut()[7].payload {
        votes[1] = 1;
    }
    match chain.verify() {
        Verdict::Invalid { index, .. } => assert_eq!(index, 7),
        Verdict::Valid => panic!("edited vote list verified"),
    }
}

#[test]
fn forged_appends_are_rejected() {
    let (full, keys) = common::ledger_fixture();
    let outsider = Ed25519::keygen(999);
    for k in 1..full.len() {
        let mut prefix: Chain = Chain::import_binary(&full.export_binary()).unwrap();
        prefix.blocks_mut().truncate(k);
        let original = &full.blocks()[k];
        let signer = original.signer.unwrap();

        let wrong_key = &keys[(signer as usize + 1) % keys.len()];
        for key in [wrong_key, &outsider] {
            let block = prefix.seal(original.payload.clone(), signer, key);
            assert!(matches!(prefix.append(block), Err(Error::Authentication(_))), "block {k}");
        }

        let mut bad_sig = original.clone();
        bad_sig.signature[0] ^= 1;
        assert!(matches!(prefix.append(bad_sig), Err(Error::Authentication(_))));

        let mut off_roster = prefix.seal(original.payload.clone(), 7, &outsider);
        off_roster.signer = Some(7);
        assert!(matches!(prefix.append(off_roster), Err(Error::Authentication(_))));

        prefix.append(original.clone()).unwrap();
    }
}

#[test]
fn payloads_signed_for_another_client_are_rejected() {
    let (mut chain, keys) = common::ledger_fixture();
    let payload = Payload::ScreeningVoteList { client: 2, round: 2, votes: vec![0, 0, 0] };
    let block = chain.seal(payload, 1, &keys[1]);
    assert!(matches!(chain.append(block), Err(Error::Authentication(_))));
}
