//! The negacyclic ring `Z_q[x]/(x^N + 1)`.
//!
//! The forward NTT takes natural-order coefficients to bit-reversed evaluations:
//! position `p` of an NTT-domain polynomial holds `a(ψ^(2·bitrev(p) + 1))`.
//! The inverse transform undoes exactly that layout.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::modarith::Modulus;

/// Default slot-rotation generator. Has order `N/2` modulo `2N` for every power-of-two `N`.
pub const GENERATOR: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Domain {
    Coefficient,
    Ntt,
}

/// Reverses the lowest `bits` bits of `x`.
#[inline]
pub fn bitrev(x: usize, bits: u32) -> usize {
    if bits == 0 {
        return 0;
    }
    x.reverse_bits() >> (usize::BITS - bits)
}

/// `R_q` for one modulus: the modulus plus its NTT twiddle tables.
#[derive(Debug)]
pub struct Ring {
    modulus: Modulus,
    log_n: u32,
    /// `ψ^bitrev(k)` for the forward butterflies.
    psi_rev: Vec<u64>,
    /// `ψ^-bitrev(k)` for the inverse butterflies.
    psi_inv_rev: Vec<u64>,
    /// Last inverse stage twiddle with `N⁻¹` folded in.
    last_inv_scaled: u64,
}

impl Ring {
    pub fn new(modulus: Modulus) -> Arc<Self> {
        let n = modulus.ring_dim();
        let log_n = n.trailing_zeros();
        let psi = modulus.two_n_root();
        let psi_inv = modulus.inv(psi).expect("root of unity is invertible");
        let mut psi_rev = vec![0; n];
        let mut psi_inv_rev = vec![0; n];
        let (mut p, mut pi) = (1u64, 1u64);
        for k in 0..n {
            let r = bitrev(k, log_n);
            psi_rev[r] = p;
            psi_inv_rev[r] = pi;
            p = modulus.mul(p, psi);
            pi = modulus.mul(pi, psi_inv);
        }
        let last_inv_scaled = modulus.mul(psi_inv_rev[1], modulus.n_inv());
        Arc::new(Ring {
            modulus,
            log_n,
            psi_rev,
            psi_inv_rev,
            last_inv_scaled,
        })
    }

    #[inline]
    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    #[inline]
    pub fn q(&self) -> u64 {
        self.modulus.value()
    }

    #[inline]
    pub fn n(&self) -> usize {
        1 << self.log_n
    }

    #[inline]
    pub fn log_n(&self) -> u32 {
        self.log_n
    }

    /// In-place forward negacyclic NTT (Cooley-Tukey, bit-reversed output).
    pub fn forward(&self, a: &mut [u64]) {
        let m = &self.modulus;
        let n = a.len();
        debug_assert_eq!(n, self.n());
        let mut t = n;
        let mut groups = 1;
        while groups < n {
            t >>= 1;
            for i in 0..groups {
                let s = self.psi_rev[groups + i];
                let base = 2 * i * t;
                for j in base..base + t {
                    let u = a[j];
                    let v = m.mul(a[j + t], s);
                    a[j] = m.add(u, v);
                    a[j + t] = m.sub(u, v);
                }
            }
            groups <<= 1;
        }
    }

    /// In-place inverse NTT (Gentleman-Sande). `N⁻¹` is folded into the last stage.
    pub fn inverse(&self, a: &mut [u64]) {
        let m = &self.modulus;
        let n = a.len();
        debug_assert_eq!(n, self.n());
        let mut t = 1;
        let mut groups = n >> 1;
        while groups > 1 {
            for i in 0..groups {
                let s = self.psi_inv_rev[groups + i];
                let base = 2 * i * t;
                for j in base..base + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = m.add(u, v);
                    a[j + t] = m.mul(m.sub(u, v), s);
                }
            }
            t <<= 1;
            groups >>= 1;
        }
        let n_inv = m.n_inv();
        let half = n >> 1;
        for j in 0..half {
            let u = a[j];
            let v = a[j + half];
            a[j] = m.mul(m.add(u, v), n_inv);
            a[j + half] = m.mul(m.sub(u, v), self.last_inv_scaled);
        }
    }
}

/// A slot rotation offset and its Galois element `g^r mod 2N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RotationIndex {
    r: usize,
    galois: u64,
    ring_dim: usize,
}

impl RotationIndex {
    /// Offset `r` is reduced modulo `N/2`.
    pub fn new(r: usize, ring_dim: usize) -> Self {
        Self::with_generator(r, ring_dim, GENERATOR)
    }

    pub fn with_generator(r: usize, ring_dim: usize, generator: u64) -> Self {
        assert!(ring_dim >= 2 && ring_dim.is_power_of_two());
        let two_n = 2 * ring_dim as u64;
        assert!(generator % 2 == 1, "generator must be odd");
        let slots = (ring_dim / 2).max(1);
        let r = r % slots;
        let mut galois = 1u64;
        for _ in 0..r {
            galois = galois * generator % two_n;
        }
        // Odd Galois elements keep ((g(2i+1) mod 2N) - 1)/2 integral.
        assert!(galois % 2 == 1);
        RotationIndex {
            r,
            galois,
            ring_dim,
        }
    }

    #[inline]
    pub fn offset(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn galois(&self) -> u64 {
        self.galois
    }

    pub fn ring_dim(&self) -> usize {
        self.ring_dim
    }

    /// The rotation undoing this one.
    pub fn inverse(&self) -> Self {
        let slots = (self.ring_dim / 2).max(1);
        RotationIndex::new((slots - self.r) % slots, self.ring_dim)
    }

    /// Natural NTT index whose value lands at natural index `i`:
    /// `j = ((g_r(2i+1) mod 2N) - 1)/2`.
    #[inline]
    pub fn eval_source_index(&self, i: usize) -> usize {
        let two_n = 2 * self.ring_dim as u64;
        let e = (self.galois * (2 * i as u64 + 1)) % two_n;
        ((e - 1) / 2) as usize
    }

    /// Storage permutation for the bit-reversed NTT layout:
    /// `out[p] = in[perm[p]]`.
    pub fn eval_permutation(&self) -> Vec<usize> {
        let n = self.ring_dim;
        let bits = n.trailing_zeros();
        let mut perm = vec![0; n];
        for i in 0..n {
            perm[bitrev(i, bits)] = bitrev(self.eval_source_index(i), bits);
        }
        perm
    }
}

#[derive(Debug, Clone)]
pub struct Poly {
    ring: Arc<Ring>,
    coeffs: Vec<u64>,
    domain: Domain,
}

impl PartialEq for Poly {
    fn eq(&self, other: &Self) -> bool {
        self.ring.q() == other.ring.q()
            && self.domain == other.domain
            && self.coeffs == other.coeffs
    }
}

impl Eq for Poly {}

impl Poly {
    pub fn zero(ring: &Arc<Ring>, domain: Domain) -> Self {
        Poly {
            ring: ring.clone(),
            coeffs: vec![0; ring.n()],
            domain,
        }
    }

    /// Wraps residues; every entry must already be below `q`.
    pub fn from_residues(ring: &Arc<Ring>, coeffs: Vec<u64>, domain: Domain) -> Result<Self> {
        if coeffs.len() != ring.n() {
            return Err(Error::DimensionMismatch(coeffs.len(), ring.n()));
        }
        if let Some(&bad) = coeffs.iter().find(|&&c| c >= ring.q()) {
            return Err(Error::OutOfRange(format!(
                "residue {bad} >= modulus {}",
                ring.q()
            )));
        }
        Ok(Poly {
            ring: ring.clone(),
            coeffs,
            domain,
        })
    }

    /// Coefficient-domain polynomial from signed integer coefficients.
    pub fn from_signed(ring: &Arc<Ring>, coeffs: &[i64]) -> Result<Self> {
        if coeffs.len() != ring.n() {
            return Err(Error::DimensionMismatch(coeffs.len(), ring.n()));
        }
        let m = ring.modulus();
        Ok(Poly {
            ring: ring.clone(),
            coeffs: coeffs.iter().map(|&c| m.reduce_i64(c)).collect(),
            domain: Domain::Coefficient,
        })
    }

    #[inline]
    pub fn ring(&self) -> &Arc<Ring> {
        &self.ring
    }

    #[inline]
    pub fn modulus(&self) -> &Modulus {
        self.ring.modulus()
    }

    #[inline]
    pub fn q(&self) -> u64 {
        self.ring.q()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn domain(&self) -> Domain {
        self.domain
    }

    #[inline]
    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [u64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<u64> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    fn expect_domain(&self, d: Domain) -> Result<()> {
        if self.domain != d {
            return Err(Error::DomainMismatch {
                expected: d,
                found: self.domain,
            });
        }
        Ok(())
    }

    fn compatible(&self, other: &Poly) -> Result<()> {
        if self.q() != other.q() {
            return Err(Error::ModulusMismatch(self.q(), other.q()));
        }
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch(self.n(), other.n()));
        }
        other.expect_domain(self.domain)
    }

    pub fn ntt(&self) -> Result<Poly> {
        self.expect_domain(Domain::Coefficient)?;
        let mut out = self.clone();
        self.ring.forward(&mut out.coeffs);
        out.domain = Domain::Ntt;
        Ok(out)
    }

    pub fn intt(&self) -> Result<Poly> {
        self.expect_domain(Domain::Ntt)?;
        let mut out = self.clone();
        self.ring.inverse(&mut out.coeffs);
        out.domain = Domain::Coefficient;
        Ok(out)
    }

    /// Converts in place to `d` (no-op when already there).
    pub fn set_domain(&mut self, d: Domain) {
        match (self.domain, d) {
            (Domain::Coefficient, Domain::Ntt) => self.ring.forward(&mut self.coeffs),
            (Domain::Ntt, Domain::Coefficient) => self.ring.inverse(&mut self.coeffs),
            _ => {}
        }
        self.domain = d;
    }

    pub fn pointwise_add(&self, other: &Poly) -> Result<Poly> {
        self.compatible(other)?;
        let m = self.modulus();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| m.add(a, b))
            .collect();
        Ok(Poly {
            coeffs,
            ..self.clone_shell()
        })
    }

    pub fn pointwise_sub(&self, other: &Poly) -> Result<Poly> {
        self.compatible(other)?;
        let m = self.modulus();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| m.sub(a, b))
            .collect();
        Ok(Poly {
            coeffs,
            ..self.clone_shell()
        })
    }

    /// Entrywise product. In the NTT domain this is the negacyclic product;
    /// in the coefficient domain it is a plain Hadamard product.
    pub fn pointwise_mul(&self, other: &Poly) -> Result<Poly> {
        self.compatible(other)?;
        let m = self.modulus();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| m.mul(a, b))
            .collect();
        Ok(Poly {
            coeffs,
            ..self.clone_shell()
        })
    }

    pub fn scalar_mul(&self, c: u64) -> Poly {
        let m = self.modulus();
        let c = m.reduce(c);
        Poly {
            coeffs: self.coeffs.iter().map(|&a| m.mul(a, c)).collect(),
            ..self.clone_shell()
        }
    }

    pub fn neg(&self) -> Poly {
        let m = self.modulus();
        Poly {
            coeffs: self.coeffs.iter().map(|&a| m.neg(a)).collect(),
            ..self.clone_shell()
        }
    }

    pub fn add_assign(&mut self, other: &Poly) -> Result<()> {
        self.compatible(other)?;
        let m = *self.modulus();
        for (a, &b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a = m.add(*a, b);
        }
        Ok(())
    }

    /// `self += a ⊙ b`.
    pub fn mul_acc(&mut self, a: &Poly, b: &Poly) -> Result<()> {
        self.compatible(a)?;
        self.compatible(b)?;
        let m = *self.modulus();
        for ((acc, &x), &y) in self.coeffs.iter_mut().zip(&a.coeffs).zip(&b.coeffs) {
            *acc = m.add(*acc, m.mul(x, y));
        }
        Ok(())
    }

    fn clone_shell(&self) -> Poly {
        Poly {
            ring: self.ring.clone(),
            coeffs: Vec::new(),
            domain: self.domain,
        }
    }

    /// `p(x) ↦ p(x^{g_r}) mod (x^N + 1)`.
    pub fn automorphism_coef(&self, rot: &RotationIndex) -> Result<Poly> {
        self.expect_domain(Domain::Coefficient)?;
        let n = self.n();
        if rot.ring_dim() != n {
            return Err(Error::DimensionMismatch(rot.ring_dim(), n));
        }
        let m = self.modulus();
        let two_n = 2 * n as u64;
        let mut out = vec![0; n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            let k = (rot.galois() * i as u64 % two_n) as usize;
            if k >= n {
                out[k - n] = m.neg(c);
            } else {
                out[k] = c;
            }
        }
        Ok(Poly {
            coeffs: out,
            ..self.clone_shell()
        })
    }

    /// The same map applied to bit-reversed evaluations: a pure index permutation.
    pub fn automorphism_eval(&self, rot: &RotationIndex) -> Result<Poly> {
        self.expect_domain(Domain::Ntt)?;
        if rot.ring_dim() != self.n() {
            return Err(Error::DimensionMismatch(rot.ring_dim(), self.n()));
        }
        let perm = rot.eval_permutation();
        Ok(self.permuted(&perm))
    }

    /// `out[p] = self[perm[p]]`, keeping the domain tag.
    pub fn permuted(&self, perm: &[usize]) -> Poly {
        Poly {
            coeffs: perm.iter().map(|&src| self.coeffs[src]).collect(),
            ..self.clone_shell()
        }
    }

    /// Automorphism in whichever domain the polynomial is in.
    pub fn automorphism(&self, rot: &RotationIndex) -> Result<Poly> {
        match self.domain {
            Domain::Coefficient => self.automorphism_coef(rot),
            Domain::Ntt => self.automorphism_eval(rot),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modarith::find_ntt_primes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring(bits: u32, n: usize) -> Arc<Ring> {
        Ring::new(find_ntt_primes(bits, n, 1).unwrap()[0])
    }

    fn random_poly(r: &Arc<Ring>, rng: &mut impl Rng) -> Poly {
        let c = (0..r.n()).map(|_| rng.gen_range(0..r.q())).collect();
        Poly::from_residues(r, c, Domain::Coefficient).unwrap()
    }

    fn schoolbook(a: &Poly, b: &Poly) -> Vec<u64> {
        let m = a.modulus();
        let n = a.n();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let p = m.mul(a.coeffs()[i], b.coeffs()[j]);
                let k = i + j;
                if k < n {
                    out[k] = m.add(out[k], p);
                } else {
                    out[k - n] = m.sub(out[k - n], p);
                }
            }
        }
        out
    }

    #[test]
    fn bitrev_small() {
        assert_eq!(bitrev(1, 3), 4);
        assert_eq!(bitrev(4, 4), 2);
        assert_eq!(bitrev(0, 0), 0);
        assert_eq!(bitrev(6, 3), 3);
    }

    #[test]
    fn ntt_layout_matches_direct_evaluation() {
        let r = ring(30, 16);
        let m = *r.modulus();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_poly(&r, &mut rng);
        let e = p.ntt().unwrap();
        for pos in 0..16 {
            let x = m.pow(m.two_n_root(), 2 * bitrev(pos, 4) as u64 + 1);
            let mut acc = 0;
            for &c in p.coeffs().iter().rev() {
                acc = m.add(m.mul(acc, x), c);
            }
            assert_eq!(e.coeffs()[pos], acc, "position {pos}");
        }
    }

    #[test]
    fn roundtrip_all_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for log_n in 4..=13 {
            let n = 1 << log_n;
            for bits in [30, 54] {
                let r = ring(bits, n);
                for _ in 0..3 {
                    let p = random_poly(&r, &mut rng);
                    assert_eq!(p.ntt().unwrap().intt().unwrap(), p);
                }
            }
        }
        let r = ring(54, 1 << 10);
        for _ in 0..100 {
            let p = random_poly(&r, &mut rng);
            assert_eq!(p.ntt().unwrap().intt().unwrap(), p);
        }
    }

    #[test]
    fn zero_transforms_to_zero() {
        let r = ring(40, 64);
        assert!(Poly::zero(&r, Domain::Coefficient).ntt().unwrap().is_zero());
    }

    #[test]
    fn pointwise_product_is_negacyclic_convolution() {
        let r = ring(40, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_poly(&r, &mut rng);
            let b = random_poly(&r, &mut rng);
            let prod = a
                .ntt()
                .unwrap()
                .pointwise_mul(&b.ntt().unwrap())
                .unwrap()
                .intt()
                .unwrap();
            assert_eq!(prod.coeffs(), schoolbook(&a, &b).as_slice());
        }
    }

    #[test]
    fn negacyclic_wrap_sign() {
        let r = ring(40, 64);
        let mut top = vec![0i64; 64];
        top[63] = 1;
        let mut x = vec![0i64; 64];
        x[1] = 1;
        let a = Poly::from_signed(&r, &top).unwrap().ntt().unwrap();
        let b = Poly::from_signed(&r, &x).unwrap().ntt().unwrap();
        let p = a.pointwise_mul(&b).unwrap().intt().unwrap();
        let mut want = vec![0i64; 64];
        want[0] = -1;
        assert_eq!(p, Poly::from_signed(&r, &want).unwrap());
    }

    #[test]
    fn domain_and_modulus_checks() {
        let r = ring(40, 16);
        let r2 = ring(30, 16);
        let a = Poly::zero(&r, Domain::Coefficient);
        assert!(matches!(a.intt(), Err(Error::DomainMismatch { .. })));
        assert!(matches!(
            a.automorphism_eval(&RotationIndex::new(1, 16)),
            Err(Error::DomainMismatch { .. })
        ));
        let b = Poly::zero(&r2, Domain::Coefficient);
        assert!(matches!(
            a.pointwise_add(&b),
            Err(Error::ModulusMismatch(..))
        ));
        let c = Poly::zero(&r, Domain::Ntt);
        assert!(matches!(
            a.pointwise_mul(&c),
            Err(Error::DomainMismatch { .. })
        ));
    }

    #[test]
    fn identities() {
        let r = ring(40, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_poly(&r, &mut rng);
        let z = Poly::zero(&r, Domain::Coefficient);
        assert_eq!(p.pointwise_add(&z).unwrap(), p);
        assert_eq!(p.scalar_mul(1), p);
        assert_eq!(p.pointwise_sub(&p).unwrap(), z);
        let id = RotationIndex::new(0, 64);
        assert_eq!(p.automorphism_coef(&id).unwrap(), p);
        let e = p.ntt().unwrap();
        assert_eq!(e.automorphism_eval(&id).unwrap(), e);
    }

    #[test]
    fn x_maps_to_x5() {
        let r = Ring::new(crate::modarith::Modulus::new(97, 8).unwrap());
        let mut x = vec![0i64; 8];
        x[1] = 1;
        let p = Poly::from_signed(&r, &x).unwrap();
        let rot = RotationIndex::new(1, 8);
        assert_eq!(rot.galois(), 5);
        let mut x5 = vec![0i64; 8];
        x5[5] = 1;
        assert_eq!(
            p.automorphism_coef(&rot).unwrap(),
            Poly::from_signed(&r, &x5).unwrap()
        );
        // x^3 -> x^15 = -x^7
        let mut x3 = vec![0i64; 8];
        x3[3] = 1;
        let mut want = vec![0i64; 8];
        want[7] = -1;
        assert_eq!(
            Poly::from_signed(&r, &x3)
                .unwrap()
                .automorphism_coef(&rot)
                .unwrap(),
            Poly::from_signed(&r, &want).unwrap()
        );
    }

    #[test]
    fn automorphisms_compose() {
        let n = 64;
        let r = ring(40, n);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = random_poly(&r, &mut rng);
            let r1 = rng.gen_range(0..n / 2);
            let r2 = rng.gen_range(0..n / 2);
            let two = p
                .automorphism_coef(&RotationIndex::new(r1, n))
                .unwrap()
                .automorphism_coef(&RotationIndex::new(r2, n))
                .unwrap();
            let one = p
                .automorphism_coef(&RotationIndex::new(r1 + r2, n))
                .unwrap();
            assert_eq!(two, one);
        }
    }

    #[test]
    fn eval_automorphism_matches_transform_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for log_n in [4, 6, 8, 10] {
            let n = 1 << log_n;
            let r = ring(40, n);
            let cases = if n == 16 { 200 } else { 1000 };
            for c in 0..cases {
                let p = random_poly(&r, &mut rng);
                let rot = RotationIndex::new(if n == 16 && c == 0 { 3 } else { rng.gen_range(0..n / 2) }, n);
                let want = p.automorphism_coef(&rot).unwrap().ntt().unwrap();
                let got = p.ntt().unwrap().automorphism_eval(&rot).unwrap();
                assert_eq!(got, want, "n={n} r={}", rot.offset());
            }
        }
    }

    #[test]
    fn eval_permutation_is_bijective() {
        for log_n in 1..=10 {
            let n = 1usize << log_n;
            for r in 0..(n / 2).max(1) {
                let perm = RotationIndex::new(r, n).eval_permutation();
                let mut seen = vec![false; n];
                for &p in &perm {
                    assert!(!seen[p]);
                    seen[p] = true;
                }
                if r == 0 {
                    assert!(perm.iter().enumerate().all(|(i, &p)| i == p));
                }
            }
        }
    }

    #[test]
    fn inverse_rotation_undoes() {
        let n = 32;
        let r = ring(40, n);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_poly(&r, &mut rng).ntt().unwrap();
        for off in 0..n / 2 {
            let rot = RotationIndex::new(off, n);
            let back = p
                .automorphism_eval(&rot.inverse())
                .unwrap()
                .automorphism_eval(&rot)
                .unwrap();
            assert_eq!(back, p);
        }
    }
}
