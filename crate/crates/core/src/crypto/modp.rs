use rand::{Rng, RngCore};

use super::PrimeOrderGroup;
use crate::error::{config_err, Error, Result};

/// Order-`q` subgroup of `Z_p^*` for a safe prime `p = 2q + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModPGroup {
    p: u64,
    q: u64,
    g: u64,
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

impl ModPGroup {
    /// Largest safe prime below 2^62, generator 4.
    pub const P62: u64 = 4_611_686_018_427_377_339;

    pub fn new(p: u64, g: u64) -> Result<Self> {
        if p >= 1 << 63 {
            return config_err("modulus must be below 2^63");
        }
        if !is_prime(p) || !is_prime((p - 1) / 2) {
            return config_err(format!("{p} is not a safe prime"));
        }
        let q = (p - 1) / 2;
        if g <= 1 || g >= p || pow_mod(g, q, p) != 1 {
            return config_err(format!("{g} does not generate the order-{q} subgroup"));
        }
        Ok(Self { p, q, g })
    }

    pub fn p62() -> Self {
        Self::new(Self::P62, 4).expect("built-in group parameters are valid")
    }

    /// p = 2039, q = 1019: exponents small enough to check by hand.
    pub fn toy() -> Self {
        Self::new(2039, 4).expect("built-in group parameters are valid")
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn order(&self) -> u64 {
        self.q
    }
}

impl PrimeOrderGroup for ModPGroup {
    type Element = u64;
    type Scalar = u64;

    const ELEMENT_LEN: usize = 8;

    fn name(&self) -> &'static str {
        "modp"
    }

    fn identity(&self) -> u64 {
        1
    }

    fn generator(&self) -> u64 {
        self.g
    }

    fn op(&self, a: &u64, b: &u64) -> u64 {
        mul_mod(*a, *b, self.p)
    }

    fn invert(&self, a: &u64) -> u64 {
        // a^(q-1) = a^-1 inside the order-q subgroup
        pow_mod(*a, self.q - 1, self.p)
    }

    fn pow(&self, a: &u64, k: &u64) -> u64 {
        pow_mod(*a, *k, self.p)
    }

    fn scalar_from_u64(&self, v: u64) -> u64 {
        v % self.q
    }

    fn scalar_add(&self, a: &u64, b: &u64) -> u64 {
        ((*a as u128 + *b as u128) % self.q as u128) as u64
    }

    fn random_scalar(&self, rng: &mut dyn RngCore) -> u64 {
        rng.gen_range(0..self.q)
    }

    fn encode(&self, a: &u64) -> Vec<u8> {
        a.to_le_bytes().to_vec()
    }

    fn decode(&self, bytes: &[u8]) -> Result<u64> {
        let raw: [u8; 8] = bytes
            .try_into()
            .map_err(|_| Error::Decode(format!("group element needs 8 bytes, got {}", bytes.len())))?;
        let a = u64::from_le_bytes(raw);
        if a == 0 || a >= self.p || pow_mod(a, self.q, self.p) != 1 {
            return Err(Error::Decode(format!("{a} is not in the order-q subgroup")));
        }
        Ok(a)
    }

    fn params_bytes(&self) -> Vec<u8> {
        let mut out = b"modp".to_vec();
        out.extend_from_slice(&self.p.to_le_bytes());
        out.extend_from_slice(&self.g.to_le_bytes());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality() {
        let primes = [2u64, 3, 5, 1019, 2039, 1_000_000_007, ModPGroup::P62];
        for p in primes {
            assert!(is_prime(p), "{p}");
        }
        for c in [0u64, 1, 4, 561, 2047, 1_000_000_007 * 3, ModPGroup::P62 - 2] {
            assert!(!is_prime(c), "{c}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModPGroup::new(2039, 2039).is_err());
        assert!(ModPGroup::new(2039, 1).is_err());
        assert!(ModPGroup::new(23, 5).is_err()); // 5 is a non-residue mod 23
        assert!(ModPGroup::new(29, 4).is_err()); // 14 is not prime
        assert!(ModPGroup::new(23, 4).is_ok());
    }

    #[test]
    fn group_laws_in_toy_group() {
        let g = ModPGroup::toy();
        assert_eq!(g.pow(&g.generator(), &g.order()), 1);
        for k in 0..50u64 {
            let x = g.g_pow(&k);
            assert_eq!(g.op(&x, &g.invert(&x)), 1);
            assert_eq!(g.decode(&g.encode(&x)).unwrap(), x);
        }
        // 2039 - 1 is a non-residue, so it must not decode
        assert!(g.decode(&2038u64.to_le_bytes()).is_err());
        assert!(g.decode(&[1, 2, 3]).is_err());
    }
}
