use std::collections::HashMap;

use super::PrimeOrderGroup;
use crate::error::{input_err, Error, Result};
use crate::util::{self, Reader};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair<G: PrimeOrderGroup> {
    pub sk: G::Scalar,
    pub pk: G::Element,
}

/// `(g^r, g^m * pk^r)`; multiplying ciphertexts adds the plaintexts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ciphertext<G: PrimeOrderGroup> {
    pub a: G::Element,
    pub b: G::Element,
}

pub type EncryptedBallot<G> = Ciphertext<G>;
pub type EncryptedTally<G> = Ciphertext<G>;

/// `a^sk_i` for one participant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecryptionShare<G: PrimeOrderGroup>(pub G::Element);

impl<G: PrimeOrderGroup> Ciphertext<G> {
    pub fn to_bytes(&self, group: &G) -> Vec<u8> {
        let mut out = group.encode(&self.a);
        out.extend(group.encode(&self.b));
        out
    }

    pub fn from_bytes(group: &G, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 2 * G::ELEMENT_LEN {
            return Err(Error::Decode(format!(
                "ciphertext needs {} bytes, got {}",
                2 * G::ELEMENT_LEN,
                bytes.len()
            )));
        }
        let mut r = Reader::new(bytes);
        Ok(Self {
            a: group.decode(r.take(G::ELEMENT_LEN)?)?,
            b: group.decode(r.take(G::ELEMENT_LEN)?)?,
        })
    }
}

impl<G: PrimeOrderGroup> DecryptionShare<G> {
    pub fn to_bytes(&self, group: &G) -> Vec<u8> {
        group.encode(&self.0)
    }

    pub fn from_bytes(group: &G, bytes: &[u8]) -> Result<Self> {
        group.decode(bytes).map(Self)
    }
}

/// Secret key uniform in `[1, q)` from a seeded generator.
pub fn keygen<G: PrimeOrderGroup>(group: &G, seed: u64) -> KeyPair<G> {
    let mut rng = util::rng_from(seed);
    let sk = group.random_nonzero_scalar(&mut rng);
    KeyPair {
        sk,
        pk: group.g_pow(&sk),
    }
}

/// Product of all public keys; decrypting under it needs every share.
pub fn combine_pks<G: PrimeOrderGroup>(group: &G, pks: &[G::Element]) -> Result<G::Element> {
    let Some((first, rest)) = pks.split_first() else {
        return input_err("cannot combine an empty set of public keys");
    };
    Ok(rest.iter().fold(*first, |acc, pk| group.op(&acc, pk)))
}

pub fn encrypt_vote<G: PrimeOrderGroup>(
    group: &G,
    pk_group: &G::Element,
    vote: u8,
    r: &G::Scalar,
) -> Result<EncryptedBallot<G>> {
    if vote > 1 {
        return input_err(format!("ballot value must be 0 or 1, got {vote}"));
    }
    let gm = group.g_pow(&group.scalar_from_u64(u64::from(vote)));
    Ok(Ciphertext {
        a: group.g_pow(r),
        b: group.op(&gm, &group.pow(pk_group, r)),
    })
}

pub fn hom_add<G: PrimeOrderGroup>(
    group: &G,
    x: &Ciphertext<G>,
    y: &Ciphertext<G>,
) -> EncryptedTally<G> {
    Ciphertext {
        a: group.op(&x.a, &y.a),
        b: group.op(&x.b, &y.b),
    }
}

pub fn partial_decrypt<G: PrimeOrderGroup>(
    group: &G,
    sk: &G::Scalar,
    c: &Ciphertext<G>,
) -> DecryptionShare<G> {
    DecryptionShare(group.pow(&c.a, sk))
}

/// Strips all `expected` shares off `c`, leaving `g^V`.
pub fn combine_decrypt<G: PrimeOrderGroup>(
    group: &G,
    c: &Ciphertext<G>,
    shares: &[DecryptionShare<G>],
    expected: usize,
) -> Result<G::Element> {
    if shares.len() != expected {
        return Err(Error::Protocol(format!(
            "collective decryption needs all {expected} shares, got {}",
            shares.len()
        )));
    }
    let mask = shares
        .iter()
        .fold(group.identity(), |acc, s| group.op(&acc, &s.0));
    Ok(group.op(&c.b, &group.invert(&mask)))
}

/// Lookup table `g^v -> v` for `v` in `0..=max`.
#[derive(Clone, Debug)]
pub struct DlogTable {
    max: usize,
    table: HashMap<Vec<u8>, usize>,
}

impl DlogTable {
    pub fn new<G: PrimeOrderGroup>(group: &G, max: usize) -> Self {
        let mut table = HashMap::with_capacity(max + 1);
        let mut acc = group.identity();
        let g = group.generator();
        for v in 0..=max {
            table.insert(group.encode(&acc), v);
            acc = group.op(&acc, &g);
        }
        Self { max, table }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn lookup<G: PrimeOrderGroup>(&self, group: &G, y: &G::Element) -> Result<usize> {
        self.table.get(&group.encode(y)).copied().ok_or_else(|| {
            Error::Protocol(format!(
                "tally is not g^v for any v <= {}; malformed ballots",
                self.max
            ))
        })
    }
}
