//! Exponential ElGamal over prime-order groups.
//!
//! [`PrimeOrderGroup`] is the abstract contract. Two backends implement it:
//! [`ModPGroup`], the quadratic-residue subgroup of a safe prime below 2^63
//! (small enough to inspect by hand), and [`Ristretto`], the prime-order
//! Ristretto255 group.

mod elgamal;
mod modp;
mod ristretto;

pub use elgamal::{
    combine_decrypt, combine_pks, encrypt_vote, hom_add, keygen, partial_decrypt, Ciphertext,
    DecryptionShare, DlogTable, EncryptedBallot, EncryptedTally, KeyPair,
};
pub use modp::ModPGroup;
pub use ristretto::Ristretto;

use std::fmt::Debug;

use rand::RngCore;

use crate::Result;

pub trait PrimeOrderGroup: Clone + Debug + Send + Sync + 'static {
    type Element: Copy + Eq + Debug + Send + Sync;
    type Scalar: Copy + Eq + Debug + Send + Sync;

    /// Length of [`PrimeOrderGroup::encode`] output.
    const ELEMENT_LEN: usize;

    fn name(&self) -> &'static str;

    fn identity(&self) -> Self::Element;
    fn generator(&self) -> Self::Element;
    fn op(&self, a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn invert(&self, a: &Self::Element) -> Self::Element;
    fn pow(&self, a: &Self::Element, k: &Self::Scalar) -> Self::Element;

    fn scalar_from_u64(&self, v: u64) -> Self::Scalar;
    fn scalar_add(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    /// Uniform in `[0, q)`.
    fn random_scalar(&self, rng: &mut dyn RngCore) -> Self::Scalar;

    fn encode(&self, a: &Self::Element) -> Vec<u8>;
    /// Rejects byte strings that are not canonical encodings of group members.
    fn decode(&self, bytes: &[u8]) -> Result<Self::Element>;

    /// Canonical description of the group, recorded at genesis.
    fn params_bytes(&self) -> Vec<u8>;

    fn g_pow(&self, k: &Self::Scalar) -> Self::Element {
        self.pow(&self.generator(), k)
    }

    fn random_nonzero_scalar(&self, rng: &mut dyn RngCore) -> Self::Scalar {
        let zero = self.scalar_from_u64(0);
        loop {
            let k = self.random_scalar(rng);
            if k != zero {
                return k;
            }
        }
    }
}
