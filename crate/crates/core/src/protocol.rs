//! Round orchestration: local training, judge election, update screening
//! and FedAvg aggregation, with every step posted to the ledger.
//!
//! A round runs four phases separated by barriers:
//!
//! 1. submission: every client trains one local epoch from the global model
//!    and posts the digest of its update;
//! 2. judge election (first round only): every client trains a judge,
//!    scores every candidate, posts encrypted ballots and decryption shares;
//!    the candidate with the largest decrypted total wins, ties going to the
//!    lowest index;
//! 3. screening: every client runs each update past the elected judge and
//!    posts a signed 0/1 vote list; an update passes with strictly more than
//!    half of all clients voting 1;
//! 4. aggregation: accepted updates are averaged, weighted by local data size.
//!
//! Within a phase blocks are appended in client-id order. Outcome blocks
//! (election result, aggregation result) are published by client 0; every
//! client can recompute them from the chain.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crypto::{
    combine_decrypt, combine_pks, encrypt_vote, hom_add, keygen, partial_decrypt, Ciphertext,
    DecryptionShare, DlogTable, KeyPair, PrimeOrderGroup,
};
use crate::error::{config_err, input_err, Error, Result};
use crate::iforest::{JudgeForest, Verdict};
use crate::judge::{self, JudgeEvalConfig, JudgeTrainConfig, PublicData, StageTimings};
use crate::ledger::{
    Chain, ClientId, Ed25519, ForestConfig, GenesisInfo, Payload, RosterEntry, SignatureScheme,
};
use crate::nn::{self, Architecture, LabeledDataset, ParamVector, TrainConfig};
use crate::util::{self, Digest32};

const SEED_SIGNING: u64 = 0x5167_0000_0000;
const SEED_ELGAMAL: u64 = 0xE1C0_0000_0000;
const SEED_LOCAL: u64 = 0x10CA_0000_0000;
const SEED_JUDGE: u64 = 0x7D6E_0000_0000;
const SEED_EVAL: u64 = 0xE7A1_0000_0000;
const SEED_ENCRYPT: u64 = 0xE5C7_0000_0000;
const SEED_SCREEN: u64 = 0x5C4E_0000_0000;
const SEED_FORGE: u64 = 0xF049_0000_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Submission,
    JudgeElection,
    Screening,
    Aggregation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundState {
    /// Number of completed rounds; the next round is `round + 1`.
    pub round: u32,
    pub global: ParamVector,
    pub judge_digest: Option<Digest32>,
    pub roster_len: usize,
    pub phase: Phase,
}

/// Per-client local data sizes for weighted averaging.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationWeights {
    n_k: Vec<usize>,
}

impl AggregationWeights {
    pub fn new(n_k: Vec<usize>) -> Result<Self> {
        if n_k.is_empty() {
            return Err(Error::RoundFailure("no accepted updates to aggregate".into()));
        }
        if let Some(k) = n_k.iter().position(|&n| n == 0) {
            return input_err(format!("client weight {k} has no data points"));
        }
        Ok(Self { n_k })
    }

    pub fn counts(&self) -> &[usize] {
        &self.n_k
    }

    pub fn total(&self) -> usize {
        self.n_k.iter().sum()
    }

    /// `n_k / n` for every client.
    pub fn fractions(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.n_k.iter().map(|&k| k as f64 / n).collect()
    }
}

/// `Σ_k (n_k / n) · w_k`, coordinatewise.
///
/// Each coordinate is clamped to the inputs' range there, so rounding can
/// never leave the convex hull.
pub fn fedavg(updates: &[&ParamVector], weights: &AggregationWeights) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(Error::RoundFailure("no accepted updates to aggregate".into()));
    }
    if updates.len() != weights.counts().len() {
        return input_err(format!(
            "{} updates but {} weights",
            updates.len(),
            weights.counts().len()
        ));
    }
    let len = updates[0].len();
    if let Some(k) = updates.iter().position(|u| u.len() != len) {
        return input_err(format!(
            "update {k} has {} parameters, expected {len}",
            updates[k].len()
        ));
    }
    let fractions = weights.fractions();
    let out = (0..len)
        .map(|i| {
            let mut acc = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (u, f) in updates.iter().zip(&fractions) {
                let w = u.0[i];
                acc += f * w;
                lo = lo.min(w);
                hi = hi.max(w);
            }
            acc.clamp(lo, hi)
        })
        .collect();
    Ok(ParamVector(out))
}

/// Column sums of a vote matrix (`votes[client][item]`).
pub fn tally_plaintext(votes: &[Vec<u8>], items: usize) -> Result<Vec<u32>> {
    let mut totals = vec![0u32; items];
    for (i, row) in votes.iter().enumerate() {
        if row.len() != items {
            return input_err(format!(
                "client {i} cast {} votes, expected {items}",
                row.len()
            ));
        }
        for (t, &v) in totals.iter_mut().zip(row) {
            if v > 1 {
                return input_err(format!("client {i} cast vote {v}"));
            }
            *t += u32::from(v);
        }
    }
    Ok(totals)
}

/// Indices whose vote count is strictly above half of `n_voters`.
pub fn majority_accepted(totals: &[u32], n_voters: usize) -> Vec<usize> {
    totals
        .iter()
        .enumerate()
        .filter(|(_, &t)| 2 * t as usize > n_voters)
        .map(|(j, _)| j)
        .collect()
}

/// Screening outcome for a full vote matrix: an update is accepted iff
/// strictly more than half of the voters passed it.
pub fn update_acceptance(votes: &[Vec<u8>], n_updates: usize) -> Result<Vec<usize>> {
    let totals = tally_plaintext(votes, n_updates)?;
    Ok(majority_accepted(&totals, votes.len()))
}

/// Argmax of the totals, ties to the lowest index.
pub fn select_winner(totals: &[u32]) -> Result<usize> {
    let Some(&best) = totals.iter().max() else {
        return Err(Error::Protocol("no judge candidates".into()));
    };
    Ok(totals.iter().position(|&t| t == best).unwrap())
}

/// Encrypts every vote under the joint key, sums ciphertexts per column,
/// collects one decryption share per key holder and decodes the totals.
pub fn tally_encrypted<G: PrimeOrderGroup>(
    group: &G,
    keys: &[KeyPair<G>],
    votes: &[Vec<u8>],
    items: usize,
    seed: u64,
) -> Result<Vec<u32>> {
    let pk = combine_pks(group, &keys.iter().map(|k| k.pk).collect::<Vec<_>>())?;
    let ballots = votes
        .iter()
        .enumerate()
        .map(|(i, row)| encrypt_row(group, &pk, row, util::sub_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let sums = homomorphic_sum(group, &ballots, items)?;
    let shares: Vec<Vec<DecryptionShare<G>>> = keys
        .iter()
        .map(|k| sums.iter().map(|c| partial_decrypt(group, &k.sk, c)).collect())
        .collect();
    decode_totals(group, &sums, &shares, &DlogTable::new(group, votes.len()))
}

fn encrypt_row<G: PrimeOrderGroup>(
    group: &G,
    pk: &G::Element,
    row: &[u8],
    seed: u64,
) -> Result<Vec<Ciphertext<G>>> {
    let mut rng = util::rng_from(seed);
    row.iter()
        .map(|&v| encrypt_vote(group, pk, v, &group.random_scalar(&mut rng)))
        .collect()
}

fn homomorphic_sum<G: PrimeOrderGroup>(
    group: &G,
    ballots: &[Vec<Ciphertext<G>>],
    items: usize,
) -> Result<Vec<Ciphertext<G>>> {
    let zero = Ciphertext {
        a: group.identity(),
        b: group.identity(),
    };
    let mut sums = vec![zero; items];
    for (i, row) in ballots.iter().enumerate() {
        if row.len() != items {
            return Err(Error::Protocol(format!(
                "client {i} posted {} ballots, expected {items}",
                row.len()
            )));
        }
        for (s, c) in sums.iter_mut().zip(row) {
            *s = hom_add(group, s, c);
        }
    }
    Ok(sums)
}

fn decode_totals<G: PrimeOrderGroup>(
    group: &G,
    sums: &[Ciphertext<G>],
    shares: &[Vec<DecryptionShare<G>>],
    table: &DlogTable,
) -> Result<Vec<u32>> {
    sums.iter()
        .enumerate()
        .map(|(j, c)| {
            let column: Vec<_> = shares
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    s.get(j).cloned().ok_or_else(|| {
                        Error::Protocol(format!("client {i} posted no share for candidate {j}"))
                    })
                })
                .collect::<Result<_>>()?;
            let gv = combine_decrypt(group, c, &column, shares.len())?;
            Ok(table.lookup(group, &gv)? as u32)
        })
        .collect()
}

/// How a client misbehaves, if at all, when posting its screening votes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScreeningFault {
    #[default]
    None,
    /// Posts no vote list.
    Silent,
    /// Posts a vote list signed with a key not on the roster.
    BadSignature,
}

/// What one client does in one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClientBehavior {
    /// Train on the client's poisoned dataset instead of its clean one.
    pub attack: bool,
    /// Vote 1 for fellow colluders' judges and updates and 0 for everyone else's.
    pub collude: bool,
    pub fault: ScreeningFault,
}

impl ClientBehavior {
    pub fn honest() -> Self {
        Self::default()
    }
}

#[derive(Clone, Debug)]
pub struct Participant {
    pub data: LabeledDataset,
    pub poisoned: Option<LabeledDataset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub arch: Architecture,
    /// Local training; the seed is replaced per client and round.
    pub local_train: TrainConfig,
    /// Judge training; the seed is replaced per client.
    pub judge_train: JudgeTrainConfig,
    pub judge_eval: JudgeEvalConfig,
    pub screen_batch_size: usize,
    /// When false, no judge is elected and every update is accepted.
    pub screening: bool,
    pub seed: u64,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.local_train.validate()?;
        self.judge_train.validate()?;
        self.judge_eval.validate()?;
        if self.screen_batch_size == 0 {
            return config_err("screen_batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingsMs {
    pub train: f64,
    pub features: f64,
    pub forest: f64,
}

impl From<StageTimings> for TimingsMs {
    fn from(t: StageTimings) -> Self {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        Self {
            train: ms(t.train),
            features: ms(t.features),
            forest: ms(t.forest),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectionReport {
    pub winner: u32,
    pub totals: Vec<u32>,
    pub forest_digest: String,
    /// Judge-creation time of client 0.
    pub timings: TimingsMs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    /// Judge verdict (+1 benign, −1 anomalous) per update; absent when screening is off.
    pub verdicts: Option<Vec<i8>>,
    pub vote_totals: Vec<u32>,
    pub accepted: Vec<ClientId>,
    /// Clients whose vote list was missing or rejected and counted as all zeros.
    pub abstained: Vec<ClientId>,
    pub election: Option<ElectionReport>,
    pub aggregation_failed: bool,
    pub global_accuracy: f64,
    pub chain_len: usize,
}

/// The federation: clients, their keys, the ledger and the round state.
pub struct Federation<G: PrimeOrderGroup> {
    cfg: FederationConfig,
    group: G,
    public: PublicData,
    m0: ParamVector,
    holdout: LabeledDataset,
    participants: Vec<Participant>,
    signing: Vec<<Ed25519 as SignatureScheme>::SigningKey>,
    elgamal: Vec<KeyPair<G>>,
    joint_pk: G::Element,
    chain: Chain,
    state: RoundState,
    judge: Option<JudgeForest>,
}

impl<G: PrimeOrderGroup> Federation<G> {
    /// Generates keys, publishes the genesis block and sets the global model to `m0`.
    pub fn new(
        cfg: FederationConfig,
        group: G,
        public: PublicData,
        m0: ParamVector,
        holdout: LabeledDataset,
        participants: Vec<Participant>,
    ) -> Result<Self> {
        cfg.validate()?;
        if participants.is_empty() {
            return config_err("federation needs at least one client");
        }
        if m0.len() != cfg.arch.param_count() {
            return input_err(format!(
                "initial model has {} parameters, architecture needs {}",
                m0.len(),
                cfg.arch.param_count()
            ));
        }
        for (i, p) in participants.iter().enumerate() {
            p.data.validate()?;
            if p.data.dim() != cfg.arch.input_dim {
                return input_err(format!("client {i} data has the wrong dimension"));
            }
            if let Some(poisoned) = &p.poisoned {
                if poisoned.len() != p.data.len() {
                    return input_err(format!("client {i} poisoned data changes the dataset size"));
                }
            }
        }
        let n = participants.len() as u64;
        let signing: Vec<_> = (0..n)
            .map(|i| Ed25519::keygen(util::sub_seed(cfg.seed, SEED_SIGNING + i)))
            .collect();
        let elgamal: Vec<_> = (0..n)
            .map(|i| keygen(&group, util::sub_seed(cfg.seed, SEED_ELGAMAL + i)))
            .collect();
        let joint_pk = combine_pks(&group, &elgamal.iter().map(|k| k.pk).collect::<Vec<_>>())?;

        let mut public_bytes = public.train.digest().to_vec();
        public_bytes.extend_from_slice(&public.test.digest());
        let forest = &cfg.judge_train.forest;
        let genesis = GenesisInfo {
            model_digest: m0.digest(),
            public_digest: util::sha256(&public_bytes),
            forest: ForestConfig {
                n_trees: forest.n_trees as u64,
                subsample: forest.subsample.unwrap_or(0) as u64,
                score_threshold: forest.score_threshold,
            },
            group_params: group.params_bytes(),
            roster: signing
                .iter()
                .zip(&elgamal)
                .map(|(s, e)| RosterEntry {
                    signing_key: Ed25519::public_key(s),
                    elgamal_key: group.encode(&e.pk),
                })
                .collect(),
        };
        let chain = Chain::genesis(genesis)?;
        let state = RoundState {
            round: 0,
            global: m0.clone(),
            judge_digest: None,
            roster_len: participants.len(),
            phase: Phase::Submission,
        };
        Ok(Self {
            cfg,
            group,
            public,
            m0,
            holdout,
            participants,
            signing,
            elgamal,
            joint_pk,
            chain,
            state,
            judge: None,
        })
    }

    pub fn state(&self) -> &RoundState {
        &self.state
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn judge(&self) -> Option<&JudgeForest> {
        self.judge.as_ref()
    }

    pub fn n_clients(&self) -> usize {
        self.participants.len()
    }

    fn post(&mut self, payload: Payload, signer: usize) -> Result<()> {
        let block = self.chain.seal(payload, signer as ClientId, &self.signing[signer]);
        self.chain.append(block)
    }

    /// Runs one full round. On error the chain keeps every block appended
    /// before the failing phase and the global model is unchanged.
    pub fn run_round(&mut self, behaviors: &[ClientBehavior]) -> Result<RoundReport> {
        let n = self.n_clients();
        if behaviors.len() != n {
            return input_err(format!("{} behaviors for {n} clients", behaviors.len()));
        }
        for (i, b) in behaviors.iter().enumerate() {
            if b.attack && self.participants[i].poisoned.is_none() {
                return input_err(format!("client {i} attacks but has no poisoned data"));
            }
        }
        let round = self.state.round + 1;

        self.state.phase = Phase::Submission;
        let updates = self.local_updates(behaviors, round)?;
        for (i, u) in updates.iter().enumerate() {
            self.post(
                Payload::ModelSubmission {
                    client: i as ClientId,
                    round,
                    param_digest: u.digest(),
                },
                i,
            )?;
        }

        let mut election = None;
        if self.cfg.screening && self.judge.is_none() {
            self.state.phase = Phase::JudgeElection;
            election = Some(self.elect_judge(behaviors)?);
        }

        self.state.phase = Phase::Screening;
        let (verdicts, vote_totals, accepted, abstained) = match &self.judge {
            Some(judge) => {
                let verdicts = self.screen(judge, &updates)?;
                let (totals, abstained) = self.screening_votes(&verdicts, behaviors, round)?;
                let accepted = majority_accepted(&totals, n);
                (Some(verdicts), totals, accepted, abstained)
            }
            None => (None, vec![n as u32; n], (0..n).collect(), Vec::new()),
        };

        self.state.phase = Phase::Aggregation;
        let picked: Vec<&ParamVector> = accepted.iter().map(|&k| &updates[k]).collect();
        let aggregation_failed = picked.is_empty();
        if !aggregation_failed {
            let weights = AggregationWeights::new(
                accepted
                    .iter()
                    .map(|&k| self.participants[k].data.len())
                    .collect(),
            )?;
            self.state.global = fedavg(&picked, &weights)?;
        }
        let accepted: Vec<ClientId> = accepted.iter().map(|&k| k as ClientId).collect();
        self.post(
            Payload::AggregationResult {
                round,
                param_digest: self.state.global.digest(),
                accepted: accepted.clone(),
            },
            0,
        )?;

        self.state.round = round;
        self.state.phase = Phase::Submission;
        let global_accuracy = nn::evaluate_accuracy(&self.cfg.arch, &self.state.global, &self.holdout)?;
        Ok(RoundReport {
            round,
            verdicts: verdicts.map(|v| v.iter().map(|x| x.as_i8()).collect()),
            vote_totals,
            accepted,
            abstained: abstained.into_iter().map(|k| k as ClientId).collect(),
            election,
            aggregation_failed,
            global_accuracy,
            chain_len: self.chain.len(),
        })
    }

    fn local_updates(&self, behaviors: &[ClientBehavior], round: u32) -> Result<Vec<ParamVector>> {
        let local_seed = util::sub_seed(self.cfg.seed, SEED_LOCAL + u64::from(round));
        self.participants
            .par_iter()
            .zip(behaviors)
            .enumerate()
            .map(|(i, (p, b))| {
                let data = if b.attack {
                    p.poisoned.as_ref().unwrap()
                } else {
                    &p.data
                };
                let cfg = TrainConfig {
                    seed: util::sub_seed(local_seed, i as u64),
                    ..self.cfg.local_train.clone()
                };
                nn::train(&self.cfg.arch, &self.state.global, data, &cfg).map(|(m, _)| m)
            })
            .collect()
    }

    fn elect_judge(&mut self, behaviors: &[ClientBehavior]) -> Result<ElectionReport> {
        let n = self.n_clients();
        let mut candidates = Vec::with_capacity(n);
        let mut timings = StageTimings::default();
        for i in 0..n {
            let cfg = JudgeTrainConfig {
                seed: util::sub_seed(self.cfg.seed, SEED_JUDGE + i as u64),
                ..self.cfg.judge_train.clone()
            };
            let build = judge::train_judge(&self.cfg.arch, &self.public, &self.m0, &cfg)?;
            if i == 0 {
                timings = build.timings;
            }
            candidates.push(build.forest);
        }
        for (i, c) in candidates.iter().enumerate() {
            self.post(
                Payload::JudgeSubmission {
                    client: i as ClientId,
                    forest_digest: c.digest(),
                },
                i,
            )?;
        }

        let votes: Vec<Vec<u8>> = (0..n)
            .into_par_iter()
            .map(|i| {
                if behaviors[i].collude {
                    return Ok((0..n).map(|j| u8::from(behaviors[j].collude)).collect());
                }
                let probes = judge::probe_features(
                    &self.cfg.arch,
                    &self.public.test,
                    &self.m0,
                    &self.cfg.judge_eval,
                    util::sub_seed(self.cfg.seed, SEED_EVAL + i as u64),
                )?;
                Ok(candidates
                    .iter()
                    .map(|c| judge::vote_on_probes(c, &probes, self.cfg.judge_eval.pass_fraction))
                    .collect())
            })
            .collect::<Result<_>>()?;
        let (winner, totals) = self.judge_consensus(&votes)?;

        let forest = candidates.swap_remove(winner);
        let forest_digest = forest.digest();
        self.post(
            Payload::JudgeElection {
                winner: winner as u32,
                totals: totals.clone(),
                forest_digest,
            },
            0,
        )?;
        self.state.judge_digest = Some(forest_digest);
        self.judge = Some(forest);
        Ok(ElectionReport {
            winner: winner as u32,
            totals,
            forest_digest: util::hex(&forest_digest),
            timings: timings.into(),
        })
    }

    /// Encrypted election over `votes[client][candidate]`. Ballots and
    /// shares travel through the chain and are decoded from it; the decoded
    /// totals must equal the plaintext column sums.
    pub fn judge_consensus(&mut self, votes: &[Vec<u8>]) -> Result<(usize, Vec<u32>)> {
        let n = self.n_clients();
        if votes.len() != n {
            return input_err(format!("{} ballot rows for {n} clients", votes.len()));
        }
        let items = n;
        let phase_start = self.chain.len();
        for (i, row) in votes.iter().enumerate() {
            let seed = util::sub_seed(self.cfg.seed, SEED_ENCRYPT + i as u64);
            let ballots = encrypt_row(&self.group, &self.joint_pk, row, seed)?;
            self.post(
                Payload::JudgeBallotList {
                    client: i as ClientId,
                    ballots: ballots.iter().map(|c| c.to_bytes(&self.group)).collect(),
                },
                i,
            )?;
        }

        let mut posted: Vec<Option<Vec<Ciphertext<G>>>> = vec![None; n];
        for block in &self.chain.blocks()[phase_start..] {
            if let Payload::JudgeBallotList { client, ballots } = &block.payload {
                let row = ballots
                    .iter()
                    .map(|b| Ciphertext::from_bytes(&self.group, b))
                    .collect::<Result<Vec<_>>>()?;
                posted[*client as usize] = Some(row);
            }
        }
        let ballots = posted
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::Protocol(format!("client {i} posted no ballot list"))))
            .collect::<Result<Vec<_>>>()?;
        let sums = homomorphic_sum(&self.group, &ballots, items)?;

        let share_start = self.chain.len();
        for i in 0..n {
            let shares = sums
                .iter()
                .map(|c| partial_decrypt(&self.group, &self.elgamal[i].sk, c).to_bytes(&self.group))
                .collect();
            self.post(
                Payload::DecryptionShareSet {
                    client: i as ClientId,
                    shares,
                },
                i,
            )?;
        }
        let mut shares: Vec<Option<Vec<DecryptionShare<G>>>> = vec![None; n];
        for block in &self.chain.blocks()[share_start..] {
            if let Payload::DecryptionShareSet { client, shares: s } = &block.payload {
                let row = s
                    .iter()
                    .map(|b| DecryptionShare::from_bytes(&self.group, b))
                    .collect::<Result<Vec<_>>>()?;
                shares[*client as usize] = Some(row);
            }
        }
        let shares = shares
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| Error::Protocol(format!("client {i} posted no decryption shares"))))
            .collect::<Result<Vec<_>>>()?;

        let totals = decode_totals(&self.group, &sums, &shares, &DlogTable::new(&self.group, n))?;
        let shadow = tally_plaintext(votes, items)?;
        if totals != shadow {
            return Err(Error::Protocol(format!(
                "decrypted totals {totals:?} differ from plaintext sums {shadow:?}"
            )));
        }
        Ok((select_winner(&totals)?, totals))
    }

    /// Honest verdict on every update. All clients share the public batch
    /// order, so each would compute exactly these features.
    fn screen(&self, judge: &JudgeForest, updates: &[ParamVector]) -> Result<Vec<Verdict>> {
        let seed = util::sub_seed(self.cfg.seed, SEED_SCREEN);
        updates
            .par_iter()
            .map(|u| {
                judge::screen_update(
                    &self.cfg.arch,
                    judge,
                    u,
                    &self.public.test,
                    self.cfg.screen_batch_size,
                    seed,
                )
            })
            .collect()
    }

    fn screening_votes(
        &mut self,
        verdicts: &[Verdict],
        behaviors: &[ClientBehavior],
        round: u32,
    ) -> Result<(Vec<u32>, Vec<usize>)> {
        let n = self.n_clients();
        let phase_start = self.chain.len();
        for (i, b) in behaviors.iter().enumerate() {
            let votes: Vec<u8> = if b.collude {
                behaviors.iter().map(|o| u8::from(o.collude)).collect()
            } else {
                verdicts.iter().map(|v| u8::from(*v == Verdict::Benign)).collect()
            };
            let payload = Payload::ScreeningVoteList {
                client: i as ClientId,
                round,
                votes,
            };
            match b.fault {
                ScreeningFault::None => self.post(payload, i)?,
                ScreeningFault::Silent => {}
                ScreeningFault::BadSignature => {
                    let forged = Ed25519::keygen(util::sub_seed(self.cfg.seed, SEED_FORGE + i as u64));
                    let block = self.chain.seal(payload, i as ClientId, &forged);
                    match self.chain.append(block) {
                        Err(Error::Authentication(_)) => {}
                        Err(e) => return Err(e),
                        Ok(()) => {
                            return Err(Error::Protocol(format!(
                                "forged vote list of client {i} was accepted"
                            )))
                        }
                    }
                }
            }
        }

        let mut lists: Vec<Vec<u8>> = vec![vec![0; n]; n];
        let mut present = vec![false; n];
        for block in &self.chain.blocks()[phase_start..] {
            if let Payload::ScreeningVoteList { client, votes, .. } = &block.payload {
                let c = *client as usize;
                if votes.len() == n && votes.iter().all(|&v| v <= 1) {
                    lists[c] = votes.clone();
                    present[c] = true;
                }
            }
        }
        let abstained = (0..n).filter(|&i| !present[i]).collect();
        Ok((tally_plaintext(&lists, n)?, abstained))
    }
}
