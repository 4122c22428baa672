//! Word-sized modular arithmetic over NTT-friendly primes.
//!
//! Every residue is kept in canonical form `[0, q)`. Products are reduced
//! with a Barrett reduction against the precomputed `floor(2^128 / q)`.

use crate::error::{Error, Result};

/// Largest modulus width accepted. Keeps `2q` and `q * 4` comfortably inside a `u64`.
pub const MAX_MODULUS_BITS: u32 = 60;

/// An odd prime `q ≡ 1 (mod 2N)` together with its reduction constant and
/// the ring-dimension dependent constants used by the NTT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Modulus {
    q: u64,
    ratio_lo: u64,
    ratio_hi: u64,
    ring_dim: usize,
    two_n_root: u64,
    n_inv: u64,
}

impl Modulus {
    /// Builds the modulus for ring dimension `ring_dim` (a power of two).
    pub fn new(q: u64, ring_dim: usize) -> Result<Self> {
        if ring_dim < 2 || !ring_dim.is_power_of_two() {
            return Err(Error::InvalidRingDim(ring_dim));
        }
        if q < 3 || q % 2 == 0 {
            return Err(Error::InvalidModulus {
                q,
                reason: "must be an odd prime",
            });
        }
        if 64 - q.leading_zeros() > MAX_MODULUS_BITS {
            return Err(Error::InvalidModulus {
                q,
                reason: "wider than 60 bits",
            });
        }
        if !is_prime(q) {
            return Err(Error::InvalidModulus {
                q,
                reason: "not prime",
            });
        }
        let two_n = 2 * ring_dim as u64;
        if (q - 1) % two_n != 0 {
            return Err(Error::InvalidModulus {
                q,
                reason: "not congruent to 1 mod 2N",
            });
        }
        let ratio = u128::MAX / q as u128;
        let mut m = Modulus {
            q,
            ratio_lo: ratio as u64,
            ratio_hi: (ratio >> 64) as u64,
            ring_dim,
            two_n_root: 0,
            n_inv: 0,
        };
        m.two_n_root = m.find_two_n_root();
        m.n_inv = m.inv(ring_dim as u64 % q)?;
        Ok(m)
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn ring_dim(&self) -> usize {
        self.ring_dim
    }

    /// Primitive `2N`-th root of unity `ψ`.
    #[inline]
    pub fn two_n_root(&self) -> u64 {
        self.two_n_root
    }

    /// `N⁻¹ mod q`.
    #[inline]
    pub fn n_inv(&self) -> u64 {
        self.n_inv
    }

    pub fn bits(&self) -> u32 {
        64 - self.q.leading_zeros()
    }

    fn find_two_n_root(&self) -> u64 {
        let two_n = 2 * self.ring_dim as u64;
        let exp = (self.q - 1) / two_n;
        // q prime and 2N | q-1 guarantee a generator exists, so this terminates.
        (2..self.q)
            .map(|x| self.pow(x, exp))
            .find(|&psi| self.pow(psi, self.ring_dim as u64) == self.q - 1)
            .expect("prime modulus has a primitive 2N-th root")
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        debug_assert!(a < self.q);
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    /// Barrett reduction of an arbitrary 128-bit value.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x0 = x as u64;
        let x1 = (x >> 64) as u64;
        // High 128 bits of x * ratio, dropping the lowest partial product's low word.
        let carry = ((x0 as u128 * self.ratio_lo as u128) >> 64) as u64;
        let t = x0 as u128 * self.ratio_hi as u128 + carry as u128;
        let t_lo = t as u64;
        let t_hi = (t >> 64) as u64;
        let s = x1 as u128 * self.ratio_lo as u128 + t_lo as u128;
        let quot = x1
            .wrapping_mul(self.ratio_hi)
            .wrapping_add(t_hi)
            .wrapping_add((s >> 64) as u64);
        let mut r = x0.wrapping_sub(quot.wrapping_mul(self.q));
        while r >= self.q {
            r -= self.q;
        }
        r
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.q {
            x
        } else {
            self.reduce_u128(x as u128)
        }
    }

    /// Maps a signed integer to its residue.
    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        let r = self.reduce(x.unsigned_abs());
        if x < 0 {
            self.neg(r)
        } else {
            r
        }
    }

    pub fn reduce_i128(&self, x: i128) -> u64 {
        let r = self.reduce_u128(x.unsigned_abs());
        if x < 0 {
            self.neg(r)
        } else {
            r
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        self.reduce_u128(a as u128 * b as u128)
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut base = self.reduce(base);
        let mut acc = 1 % self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse by the extended Euclidean algorithm.
    pub fn inv(&self, a: u64) -> Result<u64> {
        let a = self.reduce(a);
        let (mut r0, mut r1) = (self.q as i128, a as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let quot = r0 / r1;
            (r0, r1) = (r1, r0 - quot * r1);
            (t0, t1) = (t1, t0 - quot * t1);
        }
        if r0 != 1 {
            return Err(Error::NoInverse(a, self.q));
        }
        Ok(t0.rem_euclid(self.q as i128) as u64)
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.q / 2 {
            a as i64 - self.q as i64
        } else {
            a as i64
        }
    }
}

pub fn mod_add(a: u64, b: u64, m: &Modulus) -> u64 {
    m.add(a, b)
}

pub fn mod_sub(a: u64, b: u64, m: &Modulus) -> u64 {
    m.sub(a, b)
}

pub fn mod_mul(a: u64, b: u64, m: &Modulus) -> u64 {
    m.mul(a, b)
}

pub fn mod_pow(a: u64, e: u64, m: &Modulus) -> u64 {
    m.pow(a, e)
}

pub fn mod_inv(a: u64, m: &Modulus) -> Result<u64> {
    m.inv(a)
}

fn mul_mod_u64(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, n: u64) -> u64 {
    let mut acc = 1 % n;
    b %= n;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, n);
        }
        b = mul_mod_u64(b, b, n);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Returns `count` distinct primes of exactly `bit_width` bits, each `≡ 1 mod 2·ring_dim`,
/// scanning downward from the top of the range.
pub fn find_ntt_primes(bit_width: u32, ring_dim: usize, count: usize) -> Result<Vec<Modulus>> {
    if ring_dim < 2 || !ring_dim.is_power_of_two() {
        return Err(Error::InvalidRingDim(ring_dim));
    }
    let two_n = 2 * ring_dim as u64;
    let none = Error::NotEnoughPrimes {
        bits: bit_width,
        modulus: two_n,
        wanted: count,
        found: 0,
    };
    if !(2..=MAX_MODULUS_BITS).contains(&bit_width) {
        return Err(none);
    }
    let lo = 1u64 << (bit_width - 1);
    let hi = (1u64 << bit_width) - 1;
    if hi < two_n + 1 {
        return Err(none);
    }
    let mut out = Vec::with_capacity(count);
    let mut k = (hi - 1) / two_n;
    while out.len() < count && k > 0 {
        let q = k * two_n + 1;
        if q < lo {
            break;
        }
        if is_prime(q) {
            out.push(Modulus::new(q, ring_dim)?);
        }
        k -= 1;
    }
    if out.len() < count {
        return Err(Error::NotEnoughPrimes {
            bits: bit_width,
            modulus: two_n,
            wanted: count,
            found: out.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_primes(bits: u32, two_n: u64) -> Vec<u64> {
        let lo = 1u64 << (bits - 1);
        let hi = 1u64 << bits;
        (lo..hi)
            .rev()
            .filter(|q| q % two_n == 1)
            .filter(|&q| (2..).take_while(|d| d * d <= q).all(|d| q % d != 0))
            .collect()
    }

    #[test]
    fn largest_14_bit_primes() {
        // 12289 = 3·2^12 + 1 is the largest 14-bit prime only once 2N = 2^12;
        // for N = 16 the scan finds 16193 = 506·32 + 1 first.
        let expect = brute_force_primes(14, 32);
        assert_eq!(expect[0], 16193);
        let got = find_ntt_primes(14, 16, 1).unwrap();
        assert_eq!(got[0].value(), 16193);
        assert_eq!(find_ntt_primes(14, 2048, 1).unwrap()[0].value(), 12289);
        assert_eq!(brute_force_primes(14, 4096), vec![12289]);
        let got: Vec<u64> = find_ntt_primes(14, 16, expect.len())
            .unwrap()
            .iter()
            .map(Modulus::value)
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn exhausted_search_space() {
        // 5-bit numbers ≡ 1 mod 64 do not exist.
        assert!(matches!(
            find_ntt_primes(5, 32, 1),
            Err(Error::NotEnoughPrimes { .. })
        ));
        let all = brute_force_primes(14, 32).len();
        assert!(matches!(
            find_ntt_primes(14, 16, all + 1),
            Err(Error::NotEnoughPrimes { found, .. }) if found == all
        ));
    }

    #[test]
    fn set_a_shaped_primes() {
        let ps = find_ntt_primes(54, 1 << 13, 5).unwrap();
        assert_eq!(ps.len(), 5);
        for w in ps.windows(2) {
            assert!(w[0].value() > w[1].value());
        }
        for p in &ps {
            assert_eq!(p.bits(), 54);
            assert_eq!(p.value() % (1 << 14), 1);
            assert!(is_prime(p.value()));
        }
    }

    #[test]
    fn identities() {
        let m = Modulus::new(12289, 16).unwrap();
        assert_eq!(mod_mul(0, 1234, &m), 0);
        assert_eq!(mod_inv(1, &m).unwrap(), 1);
        assert_eq!(mod_inv(0, &m), Err(Error::NoInverse(0, 12289)));
        assert_eq!(m.mul(m.n_inv(), 16), 1);
    }

    #[test]
    fn rejects_bad_moduli() {
        assert!(Modulus::new(12289, 12).is_err());
        assert!(Modulus::new(12288, 16).is_err());
        assert!(Modulus::new(12289 * 3, 16).is_err());
        // 97 ≡ 1 mod 32 but not mod 64.
        assert!(Modulus::new(97, 16).is_ok());
        assert!(Modulus::new(97, 32).is_err());
    }

    #[test]
    fn barrett_matches_wide_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mods: Vec<Modulus> = [20, 40, 54, 60]
            .into_iter()
            .map(|b| find_ntt_primes(b, 1 << 10, 1).unwrap()[0])
            .collect();
        for i in 0..1_000_000 {
            let m = &mods[i % mods.len()];
            let q = m.value();
            let a = rng.gen_range(0..q);
            let b = rng.gen_range(0..q);
            let want = ((a as u128 * b as u128) % q as u128) as u64;
            assert_eq!(m.mul(a, b), want, "q={q} a={a} b={b}");
        }
        for _ in 0..100_000 {
            let x: u128 = rng.gen();
            let m = &mods[3];
            assert_eq!(m.reduce_u128(x) as u128, x % m.value() as u128);
        }
    }

    #[test]
    fn root_is_primitive_exhaustive() {
        for log_n in 1..=8 {
            let n = 1usize << log_n;
            for m in find_ntt_primes(30, n, 2).unwrap() {
                let psi = m.two_n_root();
                assert_eq!(m.pow(psi, 2 * n as u64), 1);
                assert_eq!(m.pow(psi, n as u64), m.value() - 1);
                let mut acc = 1;
                for k in 1..2 * n {
                    acc = m.mul(acc, psi);
                    assert_ne!(acc, 1, "psi^{k} = 1 for n={n}");
                }
            }
        }
    }

    #[test]
    fn signed_reduction_and_center() {
        let m = Modulus::new(97, 16).unwrap();
        assert_eq!(m.reduce_i64(-1), 96);
        assert_eq!(m.reduce_i64(-97 * 3 - 5), 92);
        assert_eq!(m.reduce_i128(-(1i128 << 100)), {
            let p = m.pow(2, 100);
            m.neg(p)
        });
        assert_eq!(m.center(96), -1);
        assert_eq!(m.center(48), 48);
        assert_eq!(m.center(49), -48);
    }

    proptest::proptest! {
        #[test]
        fn inverse_roundtrip(a in 1u64..(1 << 54)) {
            let m = find_ntt_primes(54, 1 << 4, 1).unwrap()[0];
            let a = m.reduce(a);
            proptest::prop_assume!(a != 0);
            proptest::prop_assert_eq!(m.mul(a, m.inv(a).unwrap()), 1);
        }

        #[test]
        fn add_sub_roundtrip(a in 0u64..12289, b in 0u64..12289) {
            let m = Modulus::new(12289, 16).unwrap();
            proptest::prop_assert_eq!(m.sub(m.add(a, b), b), a);
            proptest::prop_assert_eq!(m.add(a, m.neg(a)), 0);
        }
    }
}
