use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::RngCore;

use super::PrimeOrderGroup;
use crate::error::{Error, Result};

/// Ristretto255, a prime-order group built on Curve25519.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ristretto;

impl PrimeOrderGroup for Ristretto {
    type Element = RistrettoPoint;
    type Scalar = Scalar;

    const ELEMENT_LEN: usize = 32;

    fn name(&self) -> &'static str {
        "ristretto255"
    }

    fn identity(&self) -> RistrettoPoint {
        RistrettoPoint::identity()
    }

    fn generator(&self) -> RistrettoPoint {
        RISTRETTO_BASEPOINT_POINT
    }

    fn op(&self, a: &RistrettoPoint, b: &RistrettoPoint) -> RistrettoPoint {
        a + b
    }

    fn invert(&self, a: &RistrettoPoint) -> RistrettoPoint {
        -a
    }

    fn pow(&self, a: &RistrettoPoint, k: &Scalar) -> RistrettoPoint {
        a * k
    }

    fn scalar_from_u64(&self, v: u64) -> Scalar {
        Scalar::from(v)
    }

    fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a + b
    }

    fn random_scalar(&self, rng: &mut dyn RngCore) -> Scalar {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Scalar::from_bytes_mod_order_wide(&wide)
    }

    fn encode(&self, a: &RistrettoPoint) -> Vec<u8> {
        a.compress().to_bytes().to_vec()
    }

    fn decode(&self, bytes: &[u8]) -> Result<RistrettoPoint> {
        CompressedRistretto::from_slice(bytes)
            .ok()
            .and_then(|c| c.decompress())
            .ok_or_else(|| Error::Decode("invalid ristretto255 encoding".into()))
    }

    fn params_bytes(&self) -> Vec<u8> {
        b"ristretto255".to_vec()
    }
}
