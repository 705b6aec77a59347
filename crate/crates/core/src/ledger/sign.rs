use ed25519_dalek::{Signature, Signer as _, SigningKey, VerifyingKey};

use crate::util;

/// Digital signatures as used by the ledger: seeded key generation, signing
/// and verification over byte strings.
pub trait SignatureScheme {
    type SigningKey: Send + Sync;

    fn keygen(seed: u64) -> Self::SigningKey;
    fn public_key(key: &Self::SigningKey) -> Vec<u8>;
    fn sign(key: &Self::SigningKey, msg: &[u8]) -> Vec<u8>;
    fn verify(public_key: &[u8], msg: &[u8], signature: &[u8]) -> bool;
}

/// Ed25519 with keys derived from a 64-bit seed (deterministic, for simulation).
#[derive(Clone, Copy, Debug, Default)]
pub struct Ed25519;

impl SignatureScheme for Ed25519 {
    type SigningKey = SigningKey;

    fn keygen(seed: u64) -> SigningKey {
        let mut material = b"ledger-signing-key".to_vec();
        material.extend_from_slice(&seed.to_le_bytes());
        SigningKey::from_bytes(&util::sha256(&material))
    }

    fn public_key(key: &SigningKey) -> Vec<u8> {
        key.verifying_key().to_bytes().to_vec()
    }

    fn sign(key: &SigningKey, msg: &[u8]) -> Vec<u8> {
        key.sign(msg).to_bytes().to_vec()
    }

    fn verify(public_key: &[u8], msg: &[u8], signature: &[u8]) -> bool {
        let Ok(pk_bytes) = <[u8; 32]>::try_from(public_key) else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_bytes(&pk_bytes) else {
            return false;
        };
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        vk.verify_strict(msg, &sig).is_ok()
    }
}
