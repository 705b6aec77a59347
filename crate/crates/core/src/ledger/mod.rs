//! Append-only, hash-linked, signed ledger.
//!
//! Block encoding (all integers little-endian):
//!
//! ```text
//! index u64 | prev_hash [32] | signer (0u8 | 1u8 u32) | payload (u64 len, bytes) | signature (u64 len, bytes)
//! ```
//!
//! A block's digest is SHA-256 over that encoding. Signatures cover
//! `"block" | index | prev_hash | signer | payload`. The genesis block is the
//! only unsigned block; later blocks are authenticated against the roster
//! published in it.
//!
//! The binary log is `"FJCHAIN1" | count u64 | (len u64, block bytes)*`.

mod payload;
mod sign;

use std::marker::PhantomData;

use serde_json::json;

pub use payload::{ForestConfig, GenesisInfo, Payload, RosterEntry};
pub use sign::{Ed25519, SignatureScheme};

use crate::error::{config_err, Error, Result};
use crate::util::{self, hex, put_bytes, Digest32, Reader};

pub type ClientId = u32;

const LOG_MAGIC: &[u8; 8] = b"FJCHAIN1";

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Digest32,
    pub signer: Option<ClientId>,
    pub payload: Payload,
    pub signature: Vec<u8>,
}

fn signing_bytes(index: u64, prev_hash: &Digest32, signer: Option<ClientId>, payload: &Payload) -> Vec<u8> {
    let mut out = b"block".to_vec();
    out.extend_from_slice(&index.to_le_bytes());
    out.extend_from_slice(prev_hash);
    write_signer(&mut out, signer);
    put_bytes(&mut out, &payload.to_bytes());
    out
}

fn write_signer(out: &mut Vec<u8>, signer: Option<ClientId>) {
    match signer {
        None => out.push(0),
        Some(id) => {
            out.push(1);
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
}

impl Block {
    pub fn signing_bytes(&self) -> Vec<u8> {
        signing_bytes(self.index, &self.prev_hash, self.signer, &self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.index.to_le_bytes());
        out.extend_from_slice(&self.prev_hash);
        write_signer(&mut out, self.signer);
        put_bytes(&mut out, &self.payload.to_bytes());
        put_bytes(&mut out, &self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let index = r.u64()?;
        let prev_hash = r.digest()?;
        let signer = match r.u8()? {
            0 => None,
            1 => Some(r.u32()?),
            t => return Err(Error::Decode(format!("bad signer tag {t}"))),
        };
        let payload = Payload::from_bytes(r.bytes()?)?;
        let signature = r.bytes()?.to_vec();
        if !r.is_empty() {
            return Err(Error::Decode("trailing bytes after block".into()));
        }
        Ok(Self {
            index,
            prev_hash,
            signer,
            payload,
            signature,
        })
    }

    pub fn digest(&self) -> Digest32 {
        util::sha256(&self.to_bytes())
    }

    /// One human-readable JSON record.
    pub fn to_record(&self) -> serde_json::Value {
        json!({
            "index": self.index,
            "digest": hex(&self.digest()),
            "prev_hash": hex(&self.prev_hash),
            "signer": self.signer,
            "payload": self.payload.to_record(),
            "signature": hex(&self.signature),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid { index: u64, cause: String },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

#[derive(Clone, Debug)]
pub struct Chain<S: SignatureScheme = Ed25519> {
    blocks: Vec<Block>,
    _scheme: PhantomData<S>,
}

impl<S: SignatureScheme> PartialEq for Chain<S> {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

impl<S: SignatureScheme> Chain<S> {
    pub fn genesis(info: GenesisInfo) -> Result<Self> {
        if info.roster.is_empty() {
            return config_err("genesis roster is empty");
        }
        let block = Block {
            index: 0,
            prev_hash: [0; 32],
            signer: None,
            payload: Payload::Genesis(info),
            signature: Vec::new(),
        };
        Ok(Self {
            blocks: vec![block],
            _scheme: PhantomData,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip_digest(&self) -> Digest32 {
        self.blocks.last().map(Block::digest).unwrap_or([0; 32])
    }

    pub fn genesis_info(&self) -> Option<&GenesisInfo> {
        match self.blocks.first().map(|b| &b.payload) {
            Some(Payload::Genesis(info)) => Some(info),
            _ => None,
        }
    }

    /// Builds the next block on the current tip, signed by `signer`.
    pub fn seal(&self, payload: Payload, signer: ClientId, key: &S::SigningKey) -> Block {
        let index = self.blocks.len() as u64;
        let prev_hash = self.tip_digest();
        let signature = S::sign(key, &signing_bytes(index, &prev_hash, Some(signer), &payload));
        Block {
            index,
            prev_hash,
            signer: Some(signer),
            payload,
            signature,
        }
    }

    fn check_signed(&self, block: &Block) -> std::result::Result<(), String> {
        let info = self.genesis_info().ok_or("chain has no genesis block")?;
        let Some(signer) = block.signer else {
            return Err("unsigned non-genesis block".into());
        };
        let entry = info
            .roster
            .get(signer as usize)
            .ok_or_else(|| format!("signer {signer} is not on the roster"))?;
        if matches!(block.payload, Payload::Genesis(_)) {
            return Err("genesis payload after block 0".into());
        }
        if let Some(client) = block.payload.client() {
            if client != signer {
                return Err(format!("payload of client {client} signed by {signer}"));
            }
        }
        if !S::verify(&entry.signing_key, &block.signing_bytes(), &block.signature) {
            return Err(format!("signature of client {signer} does not verify"));
        }
        Ok(())
    }

    /// Appends `block` if it extends the tip and its signature verifies.
    pub fn append(&mut self, block: Block) -> Result<()> {
        let expected = self.blocks.len() as u64;
        if block.index != expected {
            return Err(Error::Ordering(format!(
                "block index {} does not extend a chain of length {expected}",
                block.index
            )));
        }
        if block.prev_hash != self.tip_digest() {
            return Err(Error::Ordering(format!(
                "block {} links to {}, tip is {}",
                block.index,
                hex(&block.prev_hash),
                hex(&self.tip_digest())
            )));
        }
        self.check_signed(&block).map_err(Error::Authentication)?;
        self.blocks.push(block);
        Ok(())
    }

    /// Walks links and signatures, reporting the first failure.
    pub fn verify(&self) -> Verdict {
        let invalid = |index: u64, cause: String| Verdict::Invalid { index, cause };
        let Some(genesis) = self.blocks.first() else {
            return invalid(0, "empty chain".into());
        };
        match &genesis.payload {
            Payload::Genesis(info) if !info.roster.is_empty() => {}
            _ => return invalid(0, "block 0 is not a genesis block".into()),
        }
        if genesis.index != 0
            || genesis.prev_hash != [0; 32]
            || genesis.signer.is_some()
            || !genesis.signature.is_empty()
        {
            return invalid(0, "malformed genesis header".into());
        }
        for k in 1..self.blocks.len() {
            let block = &self.blocks[k];
            if block.index != k as u64 {
                return invalid(k as u64, format!("index {} at position {k}", block.index));
            }
            if block.prev_hash != self.blocks[k - 1].digest() {
                return invalid(k as u64, format!("hash link to block {} broken", k - 1));
            }
            if let Err(cause) = self.check_signed(block) {
                return invalid(k as u64, cause);
            }
        }
        Verdict::Valid
    }

    pub fn export_binary(&self) -> Vec<u8> {
        let mut out = LOG_MAGIC.to_vec();
        out.extend_from_slice(&(self.blocks.len() as u64).to_le_bytes());
        for b in &self.blocks {
            put_bytes(&mut out, &b.to_bytes());
        }
        out
    }

    /// Parses a binary log. Structure only; call [`Chain::verify`] afterwards.
    pub fn import_binary(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(LOG_MAGIC.len())? != LOG_MAGIC {
            return Err(Error::Decode("not a chain log".into()));
        }
        let count = r.u64()?;
        let mut blocks = Vec::new();
        for k in 0..count {
            let raw = r.bytes()?;
            let block = Block::from_bytes(raw)
                .map_err(|e| Error::Decode(format!("block {k}: {e}")))?;
            blocks.push(block);
        }
        if !r.is_empty() {
            return Err(Error::Decode(format!(
                "trailing bytes after block {} at offset {}",
                count.saturating_sub(1),
                r.position()
            )));
        }
        Ok(Self {
            blocks,
            _scheme: PhantomData,
        })
    }

    /// One JSON record per line.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&b.to_record().to_string());
            out.push('\n');
        }
        out
    }

    /// Test hook: direct access for tamper experiments.
    #[doc(hidden)]
    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster(n: u64) -> (Vec<<Ed25519 as SignatureScheme>::SigningKey>, GenesisInfo) {
        let keys: Vec<_> = (0..n).map(Ed25519::keygen).collect();
        let info = GenesisInfo {
            model_digest: [1; 32],
            public_digest: [2; 32],
            forest: ForestConfig {
                n_trees: 100,
                subsample: 0,
                score_threshold: 0.5,
            },
            group_params: b"modp".to_vec(),
            roster: keys
                .iter()
                .map(|k| RosterEntry {
                    signing_key: Ed25519::public_key(k),
                    elgamal_key: vec![4; 8],
                })
                .collect(),
        };
        (keys, info)
    }

    fn vote(client: ClientId) -> Payload {
        Payload::ScreeningVoteList {
            client,
            round: 1,
            votes: vec![1, 0, 1],
        }
    }

    #[test]
    fn genesis_is_deterministic() {
        let (_, info) = roster(3);
        let a: Chain = Chain::genesis(info.clone()).unwrap();
        let b: Chain = Chain::genesis(info.clone()).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.tip_digest(), b.tip_digest());
        let mut other = info;
        other.model_digest[0] ^= 1;
        assert_ne!(Chain::<Ed25519>::genesis(other).unwrap().tip_digest(), a.tip_digest());
        let mut empty = roster(1).1;
        empty.roster.clear();
        assert!(matches!(Chain::<Ed25519>::genesis(empty), Err(Error::Config(_))));
    }

    #[test]
    fn append_rules() {
        let (keys, info) = roster(3);
        let mut chain: Chain = Chain::genesis(info).unwrap();
        let b1 = chain.seal(vote(0), 0, &keys[0]);
        chain.append(b1.clone()).unwrap();
        assert_eq!(chain.len(), 2);

        // signed with the wrong key
        let forged = chain.seal(vote(1), 1, &keys[2]);
        assert!(matches!(chain.append(forged), Err(Error::Authentication(_))));

        // impersonation: client 2 posts a list in client 1's name
        let spoof = chain.seal(vote(1), 2, &keys[2]);
        assert!(matches!(chain.append(spoof), Err(Error::Authentication(_))));

        // replay
        assert!(matches!(chain.append(b1), Err(Error::Ordering(_))));

        let b2 = chain.seal(vote(1), 1, &keys[1]);
        chain.append(b2).unwrap();
        assert!(chain.verify().is_valid());
    }

    #[test]
    fn stale_link_is_an_ordering_error() {
        let (keys, info) = roster(2);
        let mut chain: Chain = Chain::genesis(info).unwrap();
        let mut b = chain.seal(vote(0), 0, &keys[0]);
        b.prev_hash[3] ^= 0xff;
        assert!(matches!(chain.append(b), Err(Error::Ordering(_))));
    }

    #[test]
    fn binary_and_text_export() {
        let (keys, info) = roster(2);
        let mut chain: Chain = Chain::genesis(info).unwrap();
        for k in 0..4u32 {
            let b = chain.seal(vote(k % 2), k % 2, &keys[(k % 2) as usize]);
            chain.append(b).unwrap();
        }
        let bytes = chain.export_binary();
        let back = Chain::<Ed25519>::import_binary(&bytes).unwrap();
        assert_eq!(back, chain);
        assert!(back.verify().is_valid());
        let text = chain.export_text();
        assert_eq!(text.lines().count(), 5);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["payload"]["kind"], "genesis");
    }

    #[test]
    fn payload_tamper_is_caught() {
        let (keys, info) = roster(2);
        let mut chain: Chain = Chain::genesis(info).unwrap();
        for k in 0..3u32 {
            let b = chain.seal(vote(k % 2), k % 2, &keys[(k % 2) as usize]);
            chain.append(b).unwrap();
        }
        chain.blocks_mut()[2].payload = Payload::ScreeningVoteList {
            client: 1,
            round: 1,
            votes: vec![0, 0, 0],
        };
        match chain.verify() {
            Verdict::Invalid { index, .. } => assert!(index == 2 || index == 3),
            Verdict::Valid => panic!("tamper not detected"),
        }
    }
}
