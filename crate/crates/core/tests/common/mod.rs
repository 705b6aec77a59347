#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fedjudge::ledger::{Chain, Ed25519, ForestConfig, GenesisInfo, Payload, RosterEntry, SignatureScheme};
use fedjudge::nn::{self, Architecture, ParamVector, Sample};

pub type SigningKey = <Ed25519 as SignatureScheme>::SigningKey;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Genesis plus nine signed blocks from three clients, one of every payload kind.
pub fn ledger_fixture() -> (Chain, Vec<SigningKey>) {
    let keys: Vec<SigningKey> = (0..3).map(|i| Ed25519::keygen(100 + i)).collect();
    let roster = keys
        .iter()
        .enumerate()
        .map(|(i, k)| RosterEntry {
            signing_key: Ed25519::public_key(k),
            elgamal_key: vec![i as u8; 8],
        })
        .collect();
    let mut chain = Chain::genesis(GenesisInfo {
        model_digest: [1; 32],
        public_digest: [2; 32],
        forest: ForestConfig {
            n_trees: 100,
            subsample: 0,
            score_threshold: 0.5,
        },
        group_params: b"fixture-group".to_vec(),
        roster,
    })
    .unwrap();
    for (signer, payload) in fixture_payloads() {
        let block = chain.seal(payload, signer, &keys[signer as usize]);
        chain.append(block).unwrap();
    }
    assert_eq!(chain.len(), 10);
    (chain, keys)
}

fn fixture_payloads() -> Vec<(u32, Payload)> {
    vec![
        (0, Payload::ModelSubmission { client: 0, round: 1, param_digest: [10; 32] }),
        (1, Payload::ModelSubmission { client: 1, round: 1, param_digest: [11; 32] }),
        (2, Payload::JudgeSubmission { client: 2, forest_digest: [12; 32] }),
        (0, Payload::JudgeBallotList { client: 0, ballots: vec![vec![1, 2, 3], vec![4, 5, 6]] }),
        (1, Payload::DecryptionShareSet { client: 1, shares: vec![vec![7; 4], vec![8; 4]] }),
        (0, Payload::JudgeElection { winner: 1, totals: vec![2, 3, 1], forest_digest: [13; 32] }),
        (2, Payload::ScreeningVoteList { client: 2, round: 1, votes: vec![1, 0, 1] }),
        (1, Payload::ScreeningVoteList { client: 1, round: 1, votes: vec![1, 1, 1] }),
        (0, Payload::AggregationResult { round: 1, param_digest: [14; 32], accepted: vec![0, 2] }),
    ]
}

/// True when the tampered log either fails to parse or fails verification.
pub fn tamper_detected(bytes: &[u8]) -> bool {
    match Chain::<Ed25519>::import_binary(bytes) {
        Ok(chain) => !chain.verify().is_valid(),
        Err(_) => true,
    }
}

/// Random small network, model and batch.
pub fn random_problem(seed: u64) -> (Architecture, ParamVector, Vec<Sample>) {
    let mut r = rng(seed);
    let dim = r.gen_range(1..=6);
    let hidden: Vec<usize> = (0..r.gen_range(1..=2)).map(|_| r.gen_range(1..=6)).collect();
    let arch = Architecture::new(dim, hidden).unwrap();
    let model = nn::init_model(&arch, r.gen()).unwrap();
    let batch = (0..r.gen_range(1..=8))
        .map(|i| Sample {
            id: i,
            features: (0..dim).map(|_| r.gen_range(-2.0..2.0)).collect(),
            label: r.gen_range(0..=1),
        })
        .collect();
    (arch, model, batch)
}

/// Largest relative error between analytic and central-difference gradients.
pub fn gradient_check(seed: u64) -> f64 {
    let (arch, model, batch) = random_problem(seed);
    let analytic = nn::compute_gradients(&arch, &model, &batch).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for j in 0..model.len() {
        let mut plus = model.clone();
        plus.0[j] += h;
        let mut minus = model.clone();
        minus.0[j] -= h;
        let numeric = (nn::loss(&arch, &plus, &batch).unwrap()
            - nn::loss(&arch, &minus, &batch).unwrap())
            / (2.0 * h);
        let scale = analytic[j].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[j] - numeric).abs() / scale);
    }
    worst
}

/// Column sums of a vote matrix, computed directly.
pub fn column_sums(votes: &[Vec<u8>], items: usize) -> Vec<u32> {
    (0..items)
        .map(|j| votes.iter().map(|row| u32::from(row[j])).sum())
        .collect()
}

/// Row-major `rows x cols` 0/1 matrix from the bits of `code`.
pub fn matrix_from_bits(code: u64, rows: usize, cols: usize) -> Vec<Vec<u8>> {
    (0..rows)
        .map(|i| (0..cols).map(|j| ((code >> (i * cols + j)) & 1) as u8).collect())
        .collect()
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<u8>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| r.gen_range(0..=1)).collect())
        .collect()
}
