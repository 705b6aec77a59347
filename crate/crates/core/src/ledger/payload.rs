use serde_json::{json, Value};

use super::ClientId;
use crate::error::{Error, Result};
use crate::util::{hex, put_bytes, Digest32, Reader};

#[derive(Clone, Debug, PartialEq)]
pub struct RosterEntry {
    pub signing_key: Vec<u8>,
    pub elgamal_key: Vec<u8>,
}

/// Forest hyperparameters announced at genesis. `subsample == 0` means automatic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: u64,
    pub subsample: u64,
    pub score_threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenesisInfo {
    pub model_digest: Digest32,
    pub public_digest: Digest32,
    pub forest: ForestConfig,
    pub group_params: Vec<u8>,
    pub roster: Vec<RosterEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Genesis(GenesisInfo),
    ModelSubmission {
        client: ClientId,
        round: u32,
        param_digest: Digest32,
    },
    JudgeSubmission {
        client: ClientId,
        forest_digest: Digest32,
    },
    /// One encrypted pass/fail ballot per candidate judge.
    JudgeBallotList {
        client: ClientId,
        ballots: Vec<Vec<u8>>,
    },
    /// One decryption share per candidate tally.
    DecryptionShareSet {
        client: ClientId,
        shares: Vec<Vec<u8>>,
    },
    JudgeElection {
        winner: u32,
        totals: Vec<u32>,
        forest_digest: Digest32,
    },
    /// One pass (1) / fail (0) per model update.
    ScreeningVoteList {
        client: ClientId,
        round: u32,
        votes: Vec<u8>,
    },
    AggregationResult {
        round: u32,
        param_digest: Digest32,
        accepted: Vec<ClientId>,
    },
}

fn put_u32s(out: &mut Vec<u8>, xs: &[u32]) {
    out.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_blobs(out: &mut Vec<u8>, blobs: &[Vec<u8>]) {
    out.extend_from_slice(&(blobs.len() as u64).to_le_bytes());
    for b in blobs {
        put_bytes(out, b);
    }
}

fn read_u32s(r: &mut Reader<'_>) -> Result<Vec<u32>> {
    let n = r.u64()?;
    (0..n).map(|_| r.u32()).collect()
}

fn read_blobs(r: &mut Reader<'_>) -> Result<Vec<Vec<u8>>> {
    let n = r.u64()?;
    (0..n).map(|_| r.bytes().map(<[u8]>::to_vec)).collect()
}

impl Payload {
    /// The client a payload speaks for, when it has one.
    pub fn client(&self) -> Option<ClientId> {
        match self {
            Payload::ModelSubmission { client, .. }
            | Payload::JudgeSubmission { client, .. }
            | Payload::JudgeBallotList { client, .. }
            | Payload::DecryptionShareSet { client, .. }
            | Payload::ScreeningVoteList { client, .. } => Some(*client),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Genesis(_) => "genesis",
            Payload::ModelSubmission { .. } => "model_submission",
            Payload::JudgeSubmission { .. } => "judge_submission",
            Payload::JudgeBallotList { .. } => "judge_ballot_list",
            Payload::DecryptionShareSet { .. } => "decryption_share_set",
            Payload::JudgeElection { .. } => "judge_election",
            Payload::ScreeningVoteList { .. } => "screening_vote_list",
            Payload::AggregationResult { .. } => "aggregation_result",
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Payload::Genesis(g) => {
                out.push(0);
                out.extend_from_slice(&g.model_digest);
                out.extend_from_slice(&g.public_digest);
                out.extend_from_slice(&g.forest.n_trees.to_le_bytes());
                out.extend_from_slice(&g.forest.subsample.to_le_bytes());
                out.extend_from_slice(&g.forest.score_threshold.to_le_bytes());
                put_bytes(&mut out, &g.group_params);
                out.extend_from_slice(&(g.roster.len() as u64).to_le_bytes());
                for e in &g.roster {
                    put_bytes(&mut out, &e.signing_key);
                    put_bytes(&mut out, &e.elgamal_key);
                }
            }
            Payload::ModelSubmission {
                client,
                round,
                param_digest,
            } => {
                out.push(1);
                out.extend_from_slice(&client.to_le_bytes());
                out.extend_from_slice(&round.to_le_bytes());
                out.extend_from_slice(param_digest);
            }
            Payload::JudgeSubmission {
                client,
                forest_digest,
            } => {
                out.push(2);
                out.extend_from_slice(&client.to_le_bytes());
                out.extend_from_slice(forest_digest);
            }
            Payload::JudgeBallotList { client, ballots } => {
                out.push(3);
                out.extend_from_slice(&client.to_le_bytes());
                put_blobs(&mut out, ballots);
            }
            Payload::DecryptionShareSet { client, shares } => {
                out.push(4);
                out.extend_from_slice(&client.to_le_bytes());
                put_blobs(&mut out, shares);
            }
            Payload::JudgeElection {
                winner,
                totals,
                forest_digest,
            } => {
                out.push(5);
                out.extend_from_slice(&winner.to_le_bytes());
                put_u32s(&mut out, totals);
                out.extend_from_slice(forest_digest);
            }
            Payload::ScreeningVoteList {
                client,
                round,
                votes,
            } => {
                out.push(6);
                out.extend_from_slice(&client.to_le_bytes());
                out.extend_from_slice(&round.to_le_bytes());
                put_bytes(&mut out, votes);
            }
            Payload::AggregationResult {
                round,
                param_digest,
                accepted,
            } => {
                out.push(7);
                out.extend_from_slice(&round.to_le_bytes());
                out.extend_from_slice(param_digest);
                put_u32s(&mut out, accepted);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let payload = match r.u8()? {
            0 => {
                let model_digest = r.digest()?;
                let public_digest = r.digest()?;
                let forest = ForestConfig {
                    n_trees: r.u64()?,
                    subsample: r.u64()?,
                    score_threshold: r.f64()?,
                };
                let group_params = r.bytes()?.to_vec();
                let n = r.u64()?;
                let roster = (0..n)
                    .map(|_| {
                        Ok(RosterEntry {
                            signing_key: r.bytes()?.to_vec(),
                            elgamal_key: r.bytes()?.to_vec(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Payload::Genesis(GenesisInfo {
                    model_digest,
                    public_digest,
                    forest,
                    group_params,
                    roster,
                })
            }
            1 => Payload::ModelSubmission {
                client: r.u32()?,
                round: r.u32()?,
                param_digest: r.digest()?,
            },
            2 => Payload::JudgeSubmission {
                client: r.u32()?,
                forest_digest: r.digest()?,
            },
            3 => Payload::JudgeBallotList {
                client: r.u32()?,
                ballots: read_blobs(&mut r)?,
            },
            4 => Payload::DecryptionShareSet {
                client: r.u32()?,
                shares: read_blobs(&mut r)?,
            },
            5 => Payload::JudgeElection {
                winner: r.u32()?,
                totals: read_u32s(&mut r)?,
                forest_digest: r.digest()?,
            },
            6 => Payload::ScreeningVoteList {
                client: r.u32()?,
                round: r.u32()?,
                votes: r.bytes()?.to_vec(),
            },
            7 => Payload::AggregationResult {
                round: r.u32()?,
                param_digest: r.digest()?,
                accepted: read_u32s(&mut r)?,
            },
            t => return Err(Error::Decode(format!("unknown payload tag {t}"))),
        };
        if !r.is_empty() {
            return Err(Error::Decode("trailing bytes after payload".into()));
        }
        Ok(payload)
    }

    pub fn to_record(&self) -> Value {
        let hexes = |v: &[Vec<u8>]| v.iter().map(|b| hex(b)).collect::<Vec<_>>();
        let body = match self {
            Payload::Genesis(g) => json!({
                "model_digest": hex(&g.model_digest),
                "public_digest": hex(&g.public_digest),
                "forest": {
                    "n_trees": g.forest.n_trees,
                    "subsample": g.forest.subsample,
                    "score_threshold": g.forest.score_threshold,
                },
                "group_params": hex(&g.group_params),
                "roster": g.roster.iter().map(|e| json!({
                    "signing_key": hex(&e.signing_key),
                    "elgamal_key": hex(&e.elgamal_key),
                })).collect::<Vec<_>>(),
            }),
            Payload::ModelSubmission {
                client,
                round,
                param_digest,
            } => json!({"client": client, "round": round, "param_digest": hex(param_digest)}),
            Payload::JudgeSubmission {
                client,
                forest_digest,
            } => json!({"client": client, "forest_digest": hex(forest_digest)}),
            Payload::JudgeBallotList { client, ballots } => {
                json!({"client": client, "ballots": hexes(ballots)})
            }
            Payload::DecryptionShareSet { client, shares } => {
                json!({"client": client, "shares": hexes(shares)})
            }
            Payload::JudgeElection {
                winner,
                totals,
                forest_digest,
            } => json!({"winner": winner, "totals": totals, "forest_digest": hex(forest_digest)}),
            Payload::ScreeningVoteList {
                client,
                round,
                votes,
            } => json!({"client": client, "round": round, "votes": votes}),
            Payload::AggregationResult {
                round,
                param_digest,
                accepted,
            } => json!({"round": round, "param_digest": hex(param_digest), "accepted": accepted}),
        };
        json!({"kind": self.kind(), "body": body})
    }
}
