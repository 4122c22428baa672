//! RNS-CKKS over the tower in [`crate::rns`]: encoding, keys, encryption,
//! key switching and rotation.
//!
//! Ciphertexts, plaintexts and keys are kept in the NTT domain. Key switching
//! follows Decompose → inner product with the switching key → ModDown.

pub mod encoding;
pub mod serial;

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ring::{Domain, Poly, RotationIndex};
use crate::rns::{BasisView, RnsBasis, RnsPoly};
pub use encoding::Encoder;

/// Coefficient bound for integer encodings.
const MAX_ENCODED: f64 = (1u64 << 62) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct CkksParams {
    pub log_n: u32,
    /// `L + 1`.
    pub q_count: usize,
    pub alpha: usize,
    /// Bit width of every prime.
    pub bits: u32,
    /// Default encoding scale `Δ`.
    pub scale: f64,
    /// Standard deviation of the error distribution.
    pub sigma: f64,
}

impl CkksParams {
    /// `N = 2^10`, `L + 1 = 5`, `α = 5`, 54-bit primes, `Δ = 2^40`.
    pub fn toy() -> Self {
        CkksParams {
            log_n: 10,
            q_count: 5,
            alpha: 5,
            bits: 54,
            scale: 2f64.powi(40),
            sigma: 3.2,
        }
    }

    pub fn n(&self) -> usize {
        1 << self.log_n
    }

    pub fn beta(&self) -> usize {
        self.q_count.div_ceil(self.alpha)
    }
}

/// Parameters plus the modulus tower and encoder built from them.
#[derive(Debug)]
pub struct CkksContext {
    params: CkksParams,
    basis: RnsBasis,
    encoder: Encoder,
}

#[derive(Debug, Clone)]
pub struct SecretKey {
    coeffs: Vec<i64>,
    /// `s` over the full `PQ` tower, NTT domain.
    ntt: RnsPoly,
}

impl SecretKey {
    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn ntt(&self) -> &RnsPoly {
        &self.ntt
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub b: RnsPoly,
    pub a: RnsPoly,
}

/// `β` pairs over `PQ` in the NTT domain. A hoisted key stores `φ_r⁻¹(swk_r)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchingKey {
    pub digits: Vec<(RnsPoly, RnsPoly)>,
    pub hoist_offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plaintext {
    pub poly: RnsPoly,
    pub scale: f64,
}

impl Plaintext {
    pub fn level(&self) -> usize {
        self.poly.level()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub c0: RnsPoly,
    pub c1: RnsPoly,
    pub scale: f64,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.c0.level()
    }
}

/// Rotation keys by offset, in plain and hoisted form.
#[derive(Debug, Clone, Default)]
pub struct RotationKeys {
    plain: HashMap<usize, SwitchingKey>,
    hoisted: HashMap<usize, SwitchingKey>,
}

impl RotationKeys {
    pub fn insert(&mut self, offset: usize, key: SwitchingKey, hoisted: bool) {
        if hoisted {
            self.hoisted.insert(offset, key);
        } else {
            self.plain.insert(offset, key);
        }
    }

    pub fn plain(&self, offset: usize) -> Result<&SwitchingKey> {
        self.plain.get(&offset).ok_or(Error::MissingKey {
            offset,
            kind: "plain",
        })
    }

    pub fn hoisted(&self, offset: usize) -> Result<&SwitchingKey> {
        self.hoisted.get(&offset).ok_or(Error::MissingKey {
            offset,
            kind: "hoisted",
        })
    }

    pub fn plain_offsets(&self) -> BTreeSet<usize> {
        self.plain.keys().copied().collect()
    }

    pub fn hoisted_offsets(&self) -> BTreeSet<usize> {
        self.hoisted.keys().copied().collect()
    }
}

fn sample_ternary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    (0..n).map(|_| rng.gen_range(-1i64..=1)).collect()
}

fn sample_gaussian<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Vec<i64> {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let cut = 6.0 * sigma;
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= cut {
                break x.round() as i64;
            }
        })
        .collect()
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Self> {
        let n = params.n();
        if n < 4 {
            return Err(Error::InvalidRingDim(n));
        }
        let basis = RnsBasis::generate(n, params.q_count, params.alpha, params.bits)?;
        let encoder = Encoder::new(n);
        Ok(CkksContext {
            params,
            basis,
            encoder,
        })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn basis(&self) -> &RnsBasis {
        &self.basis
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn slots(&self) -> usize {
        self.n() / 2
    }

    pub fn max_level(&self) -> usize {
        self.basis.max_level()
    }

    pub fn rotation(&self, r: usize) -> RotationIndex {
        RotationIndex::new(r, self.n())
    }

    fn uniform<R: Rng + ?Sized>(&self, view: BasisView, rng: &mut R) -> RnsPoly {
        let limbs = self
            .basis
            .indices(view)
            .into_iter()
            .map(|i| {
                let ring = self.basis.ring(i);
                let c = (0..self.n()).map(|_| rng.gen_range(0..ring.q())).collect();
                Poly::from_residues(ring, c, Domain::Ntt).expect("uniform residues are reduced")
            })
            .collect();
        self.basis.from_limbs(limbs, view).expect("view-shaped limbs")
    }

    fn small_ntt(&self, coeffs: &[i64], view: BasisView) -> RnsPoly {
        let mut p = self
            .basis
            .from_signed(coeffs, view)
            .expect("coefficient count equals N");
        p.set_domain(Domain::Ntt);
        p
    }

    /// Encodes `N/2` real slots at `scale` over `view`.
    pub fn encode_at(&self, v: &[f64], scale: f64, view: BasisView) -> Result<Plaintext> {
        if v.len() != self.slots() {
            return Err(Error::DimensionMismatch(v.len(), self.slots()));
        }
        let m = self.encoder.encode_real(v, scale);
        if let Some(&bad) = m.iter().find(|c| !c.is_finite() || c.abs() >= MAX_ENCODED) {
            return Err(Error::Overflow(bad));
        }
        let ints: Vec<i64> = m.iter().map(|&c| c as i64).collect();
        Ok(Plaintext {
            poly: self.small_ntt(&ints, view),
            scale,
        })
    }

    /// Encodes at the default scale over the top `Q` level.
    pub fn encode(&self, v: &[f64]) -> Result<Plaintext> {
        self.encode_at(v, self.params.scale, BasisView::q(self.max_level()))
    }

    /// Centered integer coefficients of an RNS polynomial, as floats.
    pub fn centered_coeffs(&self, p: &RnsPoly) -> Vec<f64> {
        let p = p.to_domain(Domain::Coefficient);
        let limbs = p.limbs();
        if limbs.len() == 1 {
            let m = limbs[0].modulus();
            return limbs[0].coeffs().iter().map(|&c| m.center(c) as f64).collect();
        }
        let moduli: Vec<u64> = limbs.iter().map(Poly::q).collect();
        let big = moduli
            .iter()
            .fold(BigUint::one(), |acc, &q| acc * BigUint::from(q));
        let half = &big >> 1u32;
        let terms: Vec<(BigUint, u64)> = limbs
            .iter()
            .map(|l| {
                let m = l.modulus();
                let hat = &big / BigUint::from(m.value());
                let hat_mod = (&hat % BigUint::from(m.value())).to_u64().unwrap_or(0);
                let inv = m.inv(hat_mod).expect("coprime moduli");
                (hat, inv)
            })
            .collect();
        (0..self.n())
            .map(|t| {
                let mut acc = BigUint::zero();
                for (l, (hat, inv)) in limbs.iter().zip(&terms) {
                    acc += hat * BigUint::from(l.modulus().mul(l.coeffs()[t], *inv));
                }
                acc %= &big;
                if acc > half {
                    -((&big - acc).to_f64().unwrap_or(f64::INFINITY))
                } else {
                    acc.to_f64().unwrap_or(f64::INFINITY)
                }
            })
            .collect()
    }

    pub fn decode(&self, pt: &Plaintext) -> Vec<f64> {
        let coeffs = self.centered_coeffs(&pt.poly);
        self.encoder.decode_real(&coeffs, pt.scale)
    }

    pub fn keygen<R: Rng + ?Sized>(&self, rng: &mut R) -> (SecretKey, PublicKey) {
        let coeffs = sample_ternary(self.n(), rng);
        let ntt = self.small_ntt(&coeffs, BasisView::pq(self.max_level()));
        let sk = SecretKey { coeffs, ntt };
        let q_view = BasisView::q(self.max_level());
        let a = self.uniform(q_view, rng);
        let e = self.small_ntt(&sample_gaussian(self.n(), self.params.sigma, rng), q_view);
        let s = self.secret_at(&sk, q_view);
        let b = e.sub(&a.mul(&s).expect("same view")).expect("same view");
        (sk, PublicKey { b, a })
    }

    fn secret_at(&self, sk: &SecretKey, view: BasisView) -> RnsPoly {
        self.basis.restrict(&sk.ntt, view).expect("secret spans the tower")
    }

    /// Public-key encryption: `(u·b + e_0 + m, u·a + e_1)`.
    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        pt: &Plaintext,
        pk: &PublicKey,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let view = pt.poly.view();
        if view.with_p {
            return Err(Error::BasisMismatch("plaintext must be over Q".into()));
        }
        let b = self.basis.restrict(&pk.b, view)?;
        let a = self.basis.restrict(&pk.a, view)?;
        let u = self.small_ntt(&sample_ternary(self.n(), rng), view);
        let e0 = self.small_ntt(&sample_gaussian(self.n(), self.params.sigma, rng), view);
        let e1 = self.small_ntt(&sample_gaussian(self.n(), self.params.sigma, rng), view);
        let c0 = u.mul(&b)?.add(&e0)?.add(&pt.poly)?;
        let c1 = u.mul(&a)?.add(&e1)?;
        Ok(Ciphertext {
            c0,
            c1,
            scale: pt.scale,
        })
    }

    /// Secret-key encryption: `(−a·s + e + m, a)`.
    pub fn encrypt_symmetric<R: Rng + ?Sized>(
        &self,
        pt: &Plaintext,
        sk: &SecretKey,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let view = pt.poly.view();
        let a = self.uniform(view, rng);
        let e = self.small_ntt(&sample_gaussian(self.n(), self.params.sigma, rng), view);
        let s = self.secret_at(sk, view);
        let c0 = e.sub(&a.mul(&s)?)?.add(&pt.poly)?;
        Ok(Ciphertext {
            c0,
            c1: a,
            scale: pt.scale,
        })
    }

    pub fn decrypt(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Plaintext> {
        if ct.c0.view() != ct.c1.view() {
            return Err(Error::LevelMismatch(ct.c0.level(), ct.c1.level()));
        }
        let s = self.secret_at(sk, ct.c1.view());
        let mut m = ct.c0.clone();
        m.mul_acc(&ct.c1, &s)?;
        Ok(Plaintext {
            poly: m,
            scale: ct.scale,
        })
    }

    /// Encrypt-free decode helper: `decode(decrypt(ct))`.
    pub fn decrypt_decode(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Vec<f64>> {
        Ok(self.decode(&self.decrypt(ct, sk)?))
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        if a.level() != b.level() {
            return Err(Error::LevelMismatch(a.level(), b.level()));
        }
        Ok(Ciphertext {
            c0: a.c0.add(&b.c0)?,
            c1: a.c1.add(&b.c1)?,
            scale: a.scale,
        })
    }

    /// `(f·c_0, f·c_1)`; the output scale is the product of both scales.
    pub fn pt_ct_mult(&self, f: &Plaintext, ct: &Ciphertext) -> Result<Ciphertext> {
        let pv = f.poly.view();
        let cv = ct.c0.view();
        if pv.level < cv.level || pv.with_p != cv.with_p {
            return Err(Error::LevelMismatch(pv.level, cv.level));
        }
        let fp = self.basis.restrict(&f.poly, cv)?;
        Ok(Ciphertext {
            c0: ct.c0.mul(&fp)?,
            c1: ct.c1.mul(&fp)?,
            scale: f.scale * ct.scale,
        })
    }

    /// Divides by the top modulus of the ciphertext's level.
    pub fn rescale(&self, ct: &Ciphertext) -> Result<Ciphertext> {
        let l = ct.level();
        if l == 0 {
            return Err(Error::SingleLimb);
        }
        let ql = self.basis.q_moduli()[l].value() as f64;
        let r = |p: &RnsPoly| -> Result<RnsPoly> {
            let mut out = self.basis.rescale(&p.to_domain(Domain::Coefficient))?;
            out.set_domain(Domain::Ntt);
            Ok(out)
        };
        Ok(Ciphertext {
            c0: r(&ct.c0)?,
            c1: r(&ct.c1)?,
            scale: ct.scale / ql,
        })
    }

    /// Gadget residues of digit `b` over `PQ_L`: `P mod q_j` on group `b`, else 0.
    fn gadget(&self, b: usize) -> Vec<u64> {
        let top = self.max_level();
        let group = self.basis.group(b, top);
        self.basis
            .indices(BasisView::pq(top))
            .into_iter()
            .map(|i| {
                if group.contains(&i) {
                    self.basis.p_mod_q(i - self.basis.alpha())
                } else {
                    0
                }
            })
            .collect()
    }

    /// Key switching `s_from → s_to`, both given over `PQ_L` in NTT form.
    pub fn swk_gen<R: Rng + ?Sized>(
        &self,
        s_from: &RnsPoly,
        s_to: &RnsPoly,
        rng: &mut R,
    ) -> Result<SwitchingKey> {
        let view = BasisView::pq(self.max_level());
        if s_from.view() != view || s_to.view() != view {
            return Err(Error::BasisMismatch("switching keys span PQ_L".into()));
        }
        let digits = (0..self.basis.beta())
            .map(|b| {
                let a = self.uniform(view, rng);
                let e = self.small_ntt(&sample_gaussian(self.n(), self.params.sigma, rng), view);
                let g = self.basis.scale_limbs(s_from, &self.gadget(b));
                let k0 = e.sub(&a.mul(s_to)?)?.add(&g)?;
                Ok((k0, a))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SwitchingKey {
            digits,
            hoist_offset: 0,
        })
    }

    /// Key for `φ_r(s) → s`. The hoisted form stores `φ_r⁻¹` of both parts.
    pub fn rotation_keygen<R: Rng + ?Sized>(
        &self,
        sk: &SecretKey,
        r: usize,
        hoisted: bool,
        rng: &mut R,
    ) -> Result<SwitchingKey> {
        let rot = self.rotation(r);
        let from = sk.ntt.automorphism(&rot)?;
        let mut key = self.swk_gen(&from, &sk.ntt, rng)?;
        if hoisted {
            key = self.hoist_key(&key, r)?;
        }
        Ok(key)
    }

    /// Applies `φ_r⁻¹` to every key polynomial.
    pub fn hoist_key(&self, key: &SwitchingKey, r: usize) -> Result<SwitchingKey> {
        let inv = self.rotation(r).inverse();
        let digits = key
            .digits
            .iter()
            .map(|(k0, k1)| Ok((k0.automorphism(&inv)?, k1.automorphism(&inv)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SwitchingKey {
            digits,
            hoist_offset: self.rotation(r).offset(),
        })
    }

    /// Generates plain and/or hoisted keys for each offset.
    pub fn rotation_keys<R: Rng + ?Sized>(
        &self,
        sk: &SecretKey,
        offsets: &BTreeSet<usize>,
        plain: bool,
        hoisted: bool,
        rng: &mut R,
    ) -> Result<RotationKeys> {
        let mut keys = RotationKeys::default();
        for &r in offsets {
            let r = r % self.slots();
            if plain {
                keys.insert(r, self.rotation_keygen(sk, r, false, rng)?, false);
            }
            if hoisted {
                keys.insert(r, self.rotation_keygen(sk, r, true, rng)?, true);
            }
        }
        Ok(keys)
    }

    /// Decompose of an NTT-domain `Q` polynomial: INTT, ModUp per digit, NTT.
    pub fn decompose(&self, c: &RnsPoly) -> Result<Vec<RnsPoly>> {
        let coef = c.to_domain(Domain::Coefficient);
        let mut digits = self.basis.decompose(&coef)?;
        for d in &mut digits {
            d.set_domain(Domain::Ntt);
        }
        Ok(digits)
    }

    /// `(Σ_b d_b·swk_{b,0}, Σ_b d_b·swk_{b,1})` over `PQ`, NTT domain.
    pub fn key_switch(&self, digits: &[RnsPoly], swk: &SwitchingKey) -> Result<(RnsPoly, RnsPoly)> {
        if digits.is_empty() || digits.len() > swk.digits.len() {
            return Err(Error::DigitCountMismatch {
                expected: swk.digits.len(),
                found: digits.len(),
            });
        }
        let view = digits[0].view();
        if digits.len() != self.basis.beta_at(view.level) {
            return Err(Error::DigitCountMismatch {
                expected: self.basis.beta_at(view.level),
                found: digits.len(),
            });
        }
        let mut acc0 = self.basis.zero(view, Domain::Ntt);
        let mut acc1 = self.basis.zero(view, Domain::Ntt);
        for (d, (k0, k1)) in digits.iter().zip(&swk.digits) {
            let (k0, k1) = if k0.view() == view {
                (k0.clone(), k1.clone())
            } else {
                (self.basis.restrict(k0, view)?, self.basis.restrict(k1, view)?)
            };
            acc0.mul_acc(d, &k0)?;
            acc1.mul_acc(d, &k1)?;
        }
        Ok((acc0, acc1))
    }

    /// ModDown of an NTT-domain `PQ` polynomial, returned in NTT form.
    pub fn moddown(&self, c: &RnsPoly) -> Result<RnsPoly> {
        let mut out = self.basis.moddown(&c.to_domain(Domain::Coefficient))?;
        out.set_domain(Domain::Ntt);
        Ok(out)
    }

    /// Combined ModDown and rescale of an NTT-domain `PQ` polynomial.
    pub fn moddown_rescale(&self, c: &RnsPoly) -> Result<RnsPoly> {
        let mut out = self.basis.moddown_rescale(&c.to_domain(Domain::Coefficient))?;
        out.set_domain(Domain::Ntt);
        Ok(out)
    }

    /// `P·c` lifted to `PQ`: zero on the `P` limbs.
    pub fn mul_by_p(&self, c: &RnsPoly) -> Result<RnsPoly> {
        let view = c.view();
        if view.with_p {
            return Err(Error::BasisMismatch("already over PQ".into()));
        }
        let mut limbs: Vec<Poly> = (0..self.basis.alpha())
            .map(|i| Poly::zero(self.basis.ring(i), c.domain()))
            .collect();
        limbs.extend(
            c.limbs()
                .iter()
                .enumerate()
                .map(|(j, l)| l.scalar_mul(self.basis.p_mod_q(j))),
        );
        self.basis.from_limbs(limbs, BasisView::pq(view.level))
    }

    /// Fig. 1 key switching of `c` (NTT, over `Q`) including ModDown.
    pub fn switch(&self, c: &RnsPoly, swk: &SwitchingKey) -> Result<(RnsPoly, RnsPoly)> {
        let digits = self.decompose(c)?;
        let (k0, k1) = self.key_switch(&digits, swk)?;
        Ok((self.moddown(&k0)?, self.moddown(&k1)?))
    }

    /// Non-hoisted rotation: `φ_r` on both parts, then key switching of `c_1`.
    pub fn rotate(&self, ct: &Ciphertext, r: usize, keys: &RotationKeys) -> Result<Ciphertext> {
        let r = r % self.slots();
        if r == 0 {
            return Ok(ct.clone());
        }
        let rot = self.rotation(r);
        let key = keys.plain(r)?;
        let c0 = ct.c0.automorphism(&rot)?;
        let c1 = ct.c1.automorphism(&rot)?;
        let (k0, k1) = self.switch(&c1, key)?;
        Ok(Ciphertext {
            c0: c0.add(&k0)?,
            c1: k1,
            scale: ct.scale,
        })
    }

    /// Hoisted rotation of one ciphertext by many offsets with a single Decompose.
    pub fn rotate_hoisted(
        &self,
        ct: &Ciphertext,
        offsets: &[usize],
        keys: &RotationKeys,
    ) -> Result<Vec<Ciphertext>> {
        let digits = self.decompose(&ct.c1)?;
        let a0 = self.mul_by_p(&ct.c0)?;
        offsets
            .iter()
            .map(|&r| {
                let r = r % self.slots();
                if r == 0 {
                    return Ok(ct.clone());
                }
                let rot = self.rotation(r);
                let (x0, x1) = self.key_switch(&digits, keys.hoisted(r)?)?;
                let a = a0.add(&x0)?.automorphism(&rot)?;
                let b = x1.automorphism(&rot)?;
                Ok(Ciphertext {
                    c0: self.moddown(&a)?,
                    c1: self.moddown(&b)?,
                    scale: ct.scale,
                })
            })
            .collect()
    }
}
