//! RNS towers over `Q = q_0⋯q_L` and `P = p_0⋯p_{α-1}`, with fast basis
//! conversion, decomposition (ModUp), ModDown and rescale.
//!
//! Limbs are ordered `[p_0, …, p_{α-1}, q_0, …, q_L]` when the `P` part is
//! present. Global modulus indices follow the same order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::modarith::{find_ntt_primes, Modulus};
use crate::ring::{Domain, Poly, Ring, RotationIndex};

/// Precomputed constants for converting from a source set of moduli into
/// every modulus of the tower.
#[derive(Debug)]
pub struct BconvTable {
    src: Vec<usize>,
    src_moduli: Vec<Modulus>,
    /// `[q̂_j⁻¹]_{q_j}` per source modulus.
    qhat_inv: Vec<u64>,
    /// `q̂_j mod m` for every tower modulus `m` (rows) and source `j` (columns).
    qhat_mod: Vec<Vec<u64>>,
}

impl BconvTable {
    fn new(src: &[usize], all: &[Modulus]) -> Result<Self> {
        let src_moduli: Vec<Modulus> = src.iter().map(|&i| all[i]).collect();
        let mut qhat_inv = Vec::with_capacity(src.len());
        for (j, mj) in src_moduli.iter().enumerate() {
            let mut prod = 1u64;
            for (k, mk) in src_moduli.iter().enumerate() {
                if k != j {
                    prod = mj.mul(prod, mj.reduce(mk.value()));
                }
            }
            qhat_inv.push(mj.inv(prod)?);
        }
        let qhat_mod = all
            .iter()
            .map(|m| {
                (0..src.len())
                    .map(|j| {
                        src_moduli
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != j)
                            .fold(1u64, |acc, (_, mk)| m.mul(acc, m.reduce(mk.value())))
                    })
                    .collect()
            })
            .collect();
        Ok(BconvTable {
            src: src.to_vec(),
            src_moduli,
            qhat_inv,
            qhat_mod,
        })
    }

    pub fn source(&self) -> &[usize] {
        &self.src
    }

    /// Converts coefficient-domain limbs over the source set into the
    /// tower moduli listed in `dst` (global indices).
    pub fn apply(&self, src: &[&Poly], dst: &[usize], rings: &[Arc<Ring>]) -> Vec<Poly> {
        let n = src[0].n();
        let k = src.len();
        // y_j = [a_j · q̂_j⁻¹]_{q_j}, stored coefficient-major for locality.
        let mut y = vec![0u64; n * k];
        for (j, (limb, m)) in src.iter().zip(&self.src_moduli).enumerate() {
            let inv = self.qhat_inv[j];
            for (t, &a) in limb.coeffs().iter().enumerate() {
                y[t * k + j] = m.mul(a, inv);
            }
        }
        dst.iter()
            .map(|&d| {
                let ring = &rings[d];
                let m = ring.modulus();
                let row = &self.qhat_mod[d];
                let coeffs = (0..n)
                    .map(|t| {
                        let ys = &y[t * k..(t + 1) * k];
                        ys.iter()
                            .zip(row)
                            .fold(0u64, |acc, (&yj, &h)| m.add(acc, m.mul(m.reduce(yj), h)))
                    })
                    .collect();
                Poly::from_residues(ring, coeffs, Domain::Coefficient)
                    .expect("bconv output is reduced")
            })
            .collect()
    }
}

/// Which part of the tower a polynomial lives over: optionally all of `P`,
/// plus `q_0..=q_level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisView {
    pub with_p: bool,
    pub level: usize,
}

impl BasisView {
    pub fn q(level: usize) -> Self {
        BasisView {
            with_p: false,
            level,
        }
    }

    pub fn pq(level: usize) -> Self {
        BasisView {
            with_p: true,
            level,
        }
    }
}

/// The modulus tower and its conversion constants.
#[derive(Debug)]
pub struct RnsBasis {
    n: usize,
    alpha: usize,
    q_count: usize,
    /// All rings in global order `[p.., q..]`.
    rings: Vec<Arc<Ring>>,
    moduli: Vec<Modulus>,
    /// `P mod q_j` and `P⁻¹ mod q_j`.
    p_mod_q: Vec<u64>,
    p_inv_mod_q: Vec<u64>,
    /// `q_l⁻¹ mod q_j` indexed `[l][j]` for `j < l`.
    q_inv: Vec<Vec<u64>>,
    /// `(P·q_l)⁻¹ mod q_j` indexed `[l][j]` for `j < l`.
    pq_inv: Vec<Vec<u64>>,
    tables: Mutex<HashMap<Vec<usize>, Arc<BconvTable>>>,
}

impl RnsBasis {
    pub fn new(q_moduli: Vec<Modulus>, p_moduli: Vec<Modulus>) -> Result<Self> {
        if q_moduli.is_empty() {
            return Err(Error::BasisMismatch("Q needs at least one modulus".into()));
        }
        if p_moduli.is_empty() {
            return Err(Error::BasisMismatch("P needs at least one modulus".into()));
        }
        let n = q_moduli[0].ring_dim();
        let moduli: Vec<Modulus> = p_moduli.iter().chain(&q_moduli).copied().collect();
        for (i, a) in moduli.iter().enumerate() {
            if a.ring_dim() != n {
                return Err(Error::DimensionMismatch(a.ring_dim(), n));
            }
            if moduli[..i].iter().any(|b| b.value() == a.value()) {
                return Err(Error::BasisOverlap(a.value()));
            }
        }
        let alpha = p_moduli.len();
        let q_count = q_moduli.len();
        let rings: Vec<Arc<Ring>> = moduli.iter().map(|&m| Ring::new(m)).collect();
        let mut p_mod_q = Vec::with_capacity(q_count);
        let mut p_inv_mod_q = Vec::with_capacity(q_count);
        for qj in &q_moduli {
            let p = p_moduli
                .iter()
                .fold(1u64, |acc, pi| qj.mul(acc, qj.reduce(pi.value())));
            p_mod_q.push(p);
            p_inv_mod_q.push(qj.inv(p)?);
        }
        let mut q_inv = Vec::with_capacity(q_count);
        let mut pq_inv = Vec::with_capacity(q_count);
        for (l, ql) in q_moduli.iter().enumerate() {
            let mut row = Vec::with_capacity(l);
            let mut prow = Vec::with_capacity(l);
            for (j, qj) in q_moduli[..l].iter().enumerate() {
                let inv = qj.inv(qj.reduce(ql.value()))?;
                row.push(inv);
                prow.push(qj.mul(inv, p_inv_mod_q[j]));
            }
            q_inv.push(row);
            pq_inv.push(prow);
        }
        Ok(RnsBasis {
            n,
            alpha,
            q_count,
            rings,
            moduli,
            p_mod_q,
            p_inv_mod_q,
            q_inv,
            pq_inv,
            tables: Mutex::new(HashMap::new()),
        })
    }

    /// `L+1` primes for `Q` followed by `α` primes for `P`, all of `bits` bits,
    /// taken largest-first.
    pub fn generate(ring_dim: usize, q_count: usize, alpha: usize, bits: u32) -> Result<Self> {
        let mut primes = find_ntt_primes(bits, ring_dim, q_count + alpha)?;
        let p = primes.split_off(q_count);
        RnsBasis::new(primes, p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// Number of digit groups at the top level.
    pub fn beta(&self) -> usize {
        self.q_count.div_ceil(self.alpha)
    }

    /// Digit groups when only `q_0..=q_level` are active.
    pub fn beta_at(&self, level: usize) -> usize {
        (level + 1).div_ceil(self.alpha)
    }

    /// `L`: index of the top `Q` modulus.
    pub fn max_level(&self) -> usize {
        self.q_count - 1
    }

    pub fn q_count(&self) -> usize {
        self.q_count
    }

    pub fn q_moduli(&self) -> &[Modulus] {
        &self.moduli[self.alpha..]
    }

    pub fn p_moduli(&self) -> &[Modulus] {
        &self.moduli[..self.alpha]
    }

    pub fn ring(&self, global: usize) -> &Arc<Ring> {
        &self.rings[global]
    }

    pub fn q_ring(&self, j: usize) -> &Arc<Ring> {
        &self.rings[self.alpha + j]
    }

    pub fn p_mod_q(&self, j: usize) -> u64 {
        self.p_mod_q[j]
    }

    /// Global modulus indices of a view, in limb order.
    pub fn indices(&self, view: BasisView) -> Vec<usize> {
        let start = if view.with_p { 0 } else { self.alpha };
        (start..self.alpha + view.level + 1).collect()
    }

    pub fn limb_count(&self, view: BasisView) -> usize {
        view.level + 1 + if view.with_p { self.alpha } else { 0 }
    }

    /// Global indices of the `Q` moduli in digit group `b` at `level`.
    pub fn group(&self, b: usize, level: usize) -> Vec<usize> {
        let lo = b * self.alpha;
        let hi = ((b + 1) * self.alpha).min(level + 1);
        (self.alpha + lo..self.alpha + hi).collect()
    }

    /// Conversion table from the given source moduli (global indices), cached.
    pub fn table(&self, src: &[usize]) -> Result<Arc<BconvTable>> {
        let mut cache = self.tables.lock().expect("bconv cache poisoned");
        if let Some(t) = cache.get(src) {
            return Ok(t.clone());
        }
        let t = Arc::new(BconvTable::new(src, &self.moduli)?);
        cache.insert(src.to_vec(), t.clone());
        Ok(t)
    }

    /// Eq. (3): fast conversion of coefficient-domain limbs from `src` to `dst`
    /// (both lists of global indices).
    pub fn bconv(&self, limbs: &[&Poly], src: &[usize], dst: &[usize]) -> Result<Vec<Poly>> {
        if limbs.len() != src.len() {
            return Err(Error::BasisMismatch(format!(
                "{} limbs for {} source moduli",
                limbs.len(),
                src.len()
            )));
        }
        if let Some(&d) = dst.iter().find(|d| src.contains(d)) {
            return Err(Error::BasisOverlap(self.moduli[d].value()));
        }
        for (l, &i) in limbs.iter().zip(src) {
            if l.q() != self.moduli[i].value() {
                return Err(Error::ModulusMismatch(l.q(), self.moduli[i].value()));
            }
            if l.domain() != Domain::Coefficient {
                return Err(Error::DomainMismatch {
                    expected: Domain::Coefficient,
                    found: l.domain(),
                });
            }
        }
        let table = self.table(src)?;
        Ok(table.apply(limbs, dst, &self.rings))
    }

    fn expect_coefficient(c: &RnsPoly) -> Result<()> {
        if c.domain() != Domain::Coefficient {
            return Err(Error::DomainMismatch {
                expected: Domain::Coefficient,
                found: c.domain(),
            });
        }
        Ok(())
    }

    /// ModUp of every digit group: digit `b` keeps group `b` verbatim and
    /// fills the remaining `P ∪ Q_level` moduli by fast conversion.
    pub fn decompose(&self, c: &RnsPoly) -> Result<Vec<RnsPoly>> {
        if c.view.with_p {
            return Err(Error::BasisMismatch("decompose expects a Q-basis input".into()));
        }
        Self::expect_coefficient(c)?;
        let level = c.view.level;
        let all = self.indices(BasisView::pq(level));
        (0..self.beta_at(level))
            .map(|b| {
                let group = self.group(b, level);
                let src: Vec<&Poly> = group.iter().map(|&g| &c.limbs[g - self.alpha]).collect();
                let dst: Vec<usize> = all.iter().copied().filter(|i| !group.contains(i)).collect();
                let mut converted = self.bconv(&src, &group, &dst)?.into_iter();
                let limbs = all
                    .iter()
                    .map(|i| {
                        if group.contains(i) {
                            c.limbs[i - self.alpha].clone()
                        } else {
                            converted.next().expect("one converted limb per target")
                        }
                    })
                    .collect();
                Ok(RnsPoly {
                    limbs,
                    view: BasisView::pq(level),
                })
            })
            .collect()
    }

    /// Eq. (4): `out_j = P⁻¹ (c_{q_j} − BConv_{P→Q}(c_P)_j)`.
    pub fn moddown(&self, c: &RnsPoly) -> Result<RnsPoly> {
        if !c.view.with_p {
            return Err(Error::BasisMismatch("moddown expects a PQ-basis input".into()));
        }
        Self::expect_coefficient(c)?;
        let level = c.view.level;
        let p_idx: Vec<usize> = (0..self.alpha).collect();
        let q_idx = self.indices(BasisView::q(level));
        let src: Vec<&Poly> = c.limbs[..self.alpha].iter().collect();
        let conv = self.bconv(&src, &p_idx, &q_idx)?;
        let limbs = conv
            .iter()
            .enumerate()
            .map(|(j, cv)| {
                let m = self.q_moduli()[j];
                let inv = self.p_inv_mod_q[j];
                let coeffs = c.limbs[self.alpha + j]
                    .coeffs()
                    .iter()
                    .zip(cv.coeffs())
                    .map(|(&a, &b)| m.mul(m.sub(a, b), inv))
                    .collect();
                Poly::from_residues(self.q_ring(j), coeffs, Domain::Coefficient)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RnsPoly {
            limbs,
            view: BasisView::q(level),
        })
    }

    /// Eq. (1): `out_j = q_l⁻¹ (c_j − c_l) mod q_j`, dropping the top limb.
    pub fn rescale(&self, c: &RnsPoly) -> Result<RnsPoly> {
        if c.view.with_p {
            return Err(Error::BasisMismatch("rescale expects a Q-basis input".into()));
        }
        Self::expect_coefficient(c)?;
        let l = c.view.level;
        if l == 0 {
            return Err(Error::SingleLimb);
        }
        let top = &c.limbs[l];
        let limbs = (0..l)
            .map(|j| {
                let m = self.q_moduli()[j];
                let inv = self.q_inv[l][j];
                let coeffs = c.limbs[j]
                    .coeffs()
                    .iter()
                    .zip(top.coeffs())
                    .map(|(&a, &t)| m.mul(m.sub(a, m.reduce(t)), inv))
                    .collect();
                Poly::from_residues(self.q_ring(j), coeffs, Domain::Coefficient)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RnsPoly {
            limbs,
            view: BasisView::q(l - 1),
        })
    }

    /// ModDown and rescale in one pass: divides a `PQ_l` polynomial by `P·q_l`,
    /// converting from `P ∪ {q_l}` into `Q_{l-1}`.
    pub fn moddown_rescale(&self, c: &RnsPoly) -> Result<RnsPoly> {
        if !c.view.with_p {
            return Err(Error::BasisMismatch("expects a PQ-basis input".into()));
        }
        Self::expect_coefficient(c)?;
        let l = c.view.level;
        if l == 0 {
            return Err(Error::SingleLimb);
        }
        let mut src_idx: Vec<usize> = (0..self.alpha).collect();
        src_idx.push(self.alpha + l);
        let src: Vec<&Poly> = src_idx.iter().map(|&i| &c.limbs[i]).collect();
        let q_idx = self.indices(BasisView::q(l - 1));
        let conv = self.bconv(&src, &src_idx, &q_idx)?;
        let limbs = conv
            .iter()
            .enumerate()
            .map(|(j, cv)| {
                let m = self.q_moduli()[j];
                let inv = self.pq_inv[l][j];
                let coeffs = c.limbs[self.alpha + j]
                    .coeffs()
                    .iter()
                    .zip(cv.coeffs())
                    .map(|(&a, &b)| m.mul(m.sub(a, b), inv))
                    .collect();
                Poly::from_residues(self.q_ring(j), coeffs, Domain::Coefficient)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RnsPoly {
            limbs,
            view: BasisView::q(l - 1),
        })
    }

    /// RNS form of a small signed integer polynomial over `view`.
    pub fn from_signed(&self, coeffs: &[i64], view: BasisView) -> Result<RnsPoly> {
        let limbs = self
            .indices(view)
            .into_iter()
            .map(|i| Poly::from_signed(&self.rings[i], coeffs))
            .collect::<Result<Vec<_>>>()?;
        Ok(RnsPoly { limbs, view })
    }

    pub fn zero(&self, view: BasisView, domain: Domain) -> RnsPoly {
        RnsPoly {
            limbs: self
                .indices(view)
                .into_iter()
                .map(|i| Poly::zero(&self.rings[i], domain))
                .collect(),
            view,
        }
    }

    /// Wraps limbs, checking they match the view's moduli.
    pub fn from_limbs(&self, limbs: Vec<Poly>, view: BasisView) -> Result<RnsPoly> {
        let idx = self.indices(view);
        if idx.len() != limbs.len() {
            return Err(Error::BasisMismatch(format!(
                "{} limbs for a {}-limb basis",
                limbs.len(),
                idx.len()
            )));
        }
        for (l, i) in limbs.iter().zip(idx) {
            if l.q() != self.moduli[i].value() {
                return Err(Error::ModulusMismatch(l.q(), self.moduli[i].value()));
            }
            if l.n() != self.n {
                return Err(Error::DimensionMismatch(l.n(), self.n));
            }
        }
        if limbs.windows(2).any(|w| w[0].domain() != w[1].domain()) {
            return Err(Error::BasisMismatch("limbs in mixed domains".into()));
        }
        Ok(RnsPoly { limbs, view })
    }

    /// Drops the `P` limbs and any `Q` limbs above `level`.
    pub fn restrict(&self, c: &RnsPoly, view: BasisView) -> Result<RnsPoly> {
        if view.level > c.view.level || (view.with_p && !c.view.with_p) {
            return Err(Error::BasisMismatch(format!(
                "cannot restrict {:?} to {view:?}",
                c.view
            )));
        }
        let offset = if c.view.with_p { 0 } else { self.alpha };
        let limbs = self
            .indices(view)
            .into_iter()
            .map(|i| c.limbs[i - offset].clone())
            .collect();
        Ok(RnsPoly { limbs, view })
    }

    /// Multiplies by an integer given as one residue per limb of `c`'s view.
    pub fn scale_limbs(&self, c: &RnsPoly, residues: &[u64]) -> RnsPoly {
        RnsPoly {
            limbs: c
                .limbs
                .iter()
                .zip(residues)
                .map(|(l, &r)| l.scalar_mul(r))
                .collect(),
            view: c.view,
        }
    }
}

/// A polynomial over several moduli, one limb each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnsPoly {
    limbs: Vec<Poly>,
    view: BasisView,
}

impl RnsPoly {
    pub fn limbs(&self) -> &[Poly] {
        &self.limbs
    }

    pub fn limbs_mut(&mut self) -> &mut [Poly] {
        &mut self.limbs
    }

    pub fn into_limbs(self) -> Vec<Poly> {
        self.limbs
    }

    pub fn view(&self) -> BasisView {
        self.view
    }

    pub fn level(&self) -> usize {
        self.view.level
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    pub fn domain(&self) -> Domain {
        self.limbs[0].domain()
    }

    pub fn n(&self) -> usize {
        self.limbs[0].n()
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(Poly::is_zero)
    }

    fn compatible(&self, other: &RnsPoly) -> Result<()> {
        if self.view != other.view {
            return Err(Error::BasisMismatch(format!(
                "{:?} vs {:?}",
                self.view, other.view
            )));
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &RnsPoly,
        f: impl Fn(&Poly, &Poly) -> Result<Poly>,
    ) -> Result<RnsPoly> {
        self.compatible(other)?;
        let limbs = self
            .limbs
            .iter()
            .zip(&other.limbs)
            .map(|(a, b)| f(a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(RnsPoly {
            limbs,
            view: self.view,
        })
    }

    pub fn add(&self, other: &RnsPoly) -> Result<RnsPoly> {
        self.zip_with(other, Poly::pointwise_add)
    }

    pub fn sub(&self, other: &RnsPoly) -> Result<RnsPoly> {
        self.zip_with(other, Poly::pointwise_sub)
    }

    pub fn mul(&self, other: &RnsPoly) -> Result<RnsPoly> {
        self.zip_with(other, Poly::pointwise_mul)
    }

    pub fn add_assign(&mut self, other: &RnsPoly) -> Result<()> {
        self.compatible(other)?;
        for (a, b) in self.limbs.iter_mut().zip(&other.limbs) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// `self += a ⊙ b`, limb by limb.
    pub fn mul_acc(&mut self, a: &RnsPoly, b: &RnsPoly) -> Result<()> {
        self.compatible(a)?;
        self.compatible(b)?;
        for ((acc, x), y) in self.limbs.iter_mut().zip(&a.limbs).zip(&b.limbs) {
            acc.mul_acc(x, y)?;
        }
        Ok(())
    }

    pub fn neg(&self) -> RnsPoly {
        RnsPoly {
            limbs: self.limbs.iter().map(Poly::neg).collect(),
            view: self.view,
        }
    }

    pub fn set_domain(&mut self, d: Domain) {
        for l in &mut self.limbs {
            l.set_domain(d);
        }
    }

    pub fn to_domain(&self, d: Domain) -> RnsPoly {
        let mut out = self.clone();
        out.set_domain(d);
        out
    }

    pub fn automorphism(&self, rot: &RotationIndex) -> Result<RnsPoly> {
        let limbs = self
            .limbs
            .iter()
            .map(|l| l.automorphism(rot))
            .collect::<Result<Vec<_>>>()?;
        Ok(RnsPoly {
            limbs,
            view: self.view,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::{BigInt, BigUint};
    use num_traits::{One, Signed, ToPrimitive, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_basis(n: usize, q_bits: u32, q_count: usize, alpha: usize) -> RnsBasis {
        RnsBasis::generate(n, q_count, alpha, q_bits).unwrap()
    }

    fn product(ms: &[Modulus]) -> BigUint {
        ms.iter().fold(BigUint::one(), |acc, m| acc * m.value())
    }

    /// CRT reconstruction of coefficient `t` in `[0, ∏ q)`.
    fn crt(limbs: &[Poly], t: usize) -> BigUint {
        let ms: Vec<Modulus> = limbs.iter().map(|l| *l.modulus()).collect();
        let big = product(&ms);
        let mut acc = BigUint::zero();
        for (l, m) in limbs.iter().zip(&ms) {
            let hat = &big / m.value();
            let hat_mod = (&hat % m.value()).to_u64().unwrap();
            let inv = m.inv(hat_mod).unwrap();
            acc += hat * m.mul(l.coeffs()[t], inv);
        }
        acc % big
    }

    fn centered(x: &BigUint, modulus: &BigUint) -> BigInt {
        let x = BigInt::from(x.clone());
        let m = BigInt::from(modulus.clone());
        if &x * 2 > m {
            x - m
        } else {
            x
        }
    }

    fn random_q_poly(b: &RnsBasis, level: usize, rng: &mut impl Rng) -> RnsPoly {
        let limbs = b
            .indices(BasisView::q(level))
            .into_iter()
            .map(|i| {
                let r = b.ring(i);
                let c = (0..b.n()).map(|_| rng.gen_range(0..r.q())).collect();
                Poly::from_residues(r, c, Domain::Coefficient).unwrap()
            })
            .collect();
        b.from_limbs(limbs, BasisView::q(level)).unwrap()
    }

    fn random_pq_poly(b: &RnsBasis, level: usize, rng: &mut impl Rng) -> RnsPoly {
        let limbs = b
            .indices(BasisView::pq(level))
            .into_iter()
            .map(|i| {
                let r = b.ring(i);
                let c = (0..b.n()).map(|_| rng.gen_range(0..r.q())).collect();
                Poly::from_residues(r, c, Domain::Coefficient).unwrap()
            })
            .collect();
        b.from_limbs(limbs, BasisView::pq(level)).unwrap()
    }

    #[test]
    fn precomputed_inverses_verify() {
        let b = toy_basis(16, 20, 4, 2);
        let all: Vec<usize> = (2..6).collect();
        let t = b.table(&all).unwrap();
        for (j, &gj) in all.iter().enumerate() {
            let m = b.moduli[gj];
            assert_eq!(m.mul(t.qhat_mod[gj][j], t.qhat_inv[j]), 1);
        }
        assert_eq!(b.beta(), 2);
        assert_eq!(b.group(1, 3), vec![4, 5]);
        assert_eq!(b.group(1, 2), vec![4]);
    }

    #[test]
    fn rejects_duplicate_moduli() {
        let q = find_ntt_primes(20, 16, 2).unwrap();
        assert!(matches!(
            RnsBasis::new(q.clone(), vec![q[0]]),
            Err(Error::BasisOverlap(_))
        ));
    }

    #[test]
    fn bconv_toy_crt_example() {
        // q = {17, 97}, p = {193}, a = 1000.
        let n = 8;
        let m = |q| Modulus::new(q, n).unwrap();
        let b = RnsBasis::new(vec![m(17), m(97)], vec![m(193)]).unwrap();
        let mut coeffs = vec![0i64; n];
        coeffs[0] = 1000;
        let c = b.from_signed(&coeffs, BasisView::q(1)).unwrap();
        let src: Vec<&Poly> = c.limbs().iter().collect();
        let out = b.bconv(&src, &[1, 2], &[0]).unwrap();
        let got = out[0].coeffs()[0];
        let ok: Vec<u64> = (0..2).map(|u| (1000 + u * 1649) % 193).collect();
        assert!(ok.contains(&got), "got {got}, expected one of {ok:?}");
    }

    #[test]
    fn bconv_zero_and_overlap() {
        let b = toy_basis(16, 20, 3, 1);
        let z = b.zero(BasisView::q(2), Domain::Coefficient);
        let src: Vec<&Poly> = z.limbs().iter().collect();
        let out = b.bconv(&src, &[1, 2, 3], &[0]).unwrap();
        assert!(out[0].is_zero());
        assert!(matches!(
            b.bconv(&src, &[1, 2, 3], &[0, 3]),
            Err(Error::BasisOverlap(_))
        ));
    }

    #[test]
    fn bconv_single_source_is_exact() {
        let b = toy_basis(16, 20, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_q_poly(&b, 0, &mut rng);
        let out = b.bconv(&[&c.limbs()[0]], &[1], &[0, 2]).unwrap();
        for (o, d) in out.iter().zip([0usize, 2]) {
            let m = b.moduli[d];
            for t in 0..16 {
                assert_eq!(o.coeffs()[t], m.reduce(c.limbs()[0].coeffs()[t]));
            }
        }
    }

    #[test]
    fn bconv_overshoot_bounded_by_source_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = toy_basis(64, 20, 4, 2);
        let src_idx = vec![2, 3, 4, 5];
        let src_moduli = b.q_moduli().to_vec();
        let q1 = product(&src_moduli);
        let mut cases = 0;
        while cases < 1000 {
            let c = random_q_poly(&b, 3, &mut rng);
            let src: Vec<&Poly> = c.limbs().iter().collect();
            let out = b.bconv(&src, &src_idx, &[0, 1]).unwrap();
            for t in 0..64 {
                let a = crt(c.limbs(), t);
                // The unreduced sum Σ [a_j q̂_j⁻¹]_{q_j} q̂_j = a + u·Q₁ as an integer.
                let mut sum = BigUint::zero();
                for (j, m) in src_moduli.iter().enumerate() {
                    let hat = &q1 / m.value();
                    let inv = m.inv((&hat % m.value()).to_u64().unwrap()).unwrap();
                    sum += hat * m.mul(c.limbs()[j].coeffs()[t], inv);
                }
                let diff = &sum - &a;
                assert!((&diff % &q1).is_zero());
                let u = (diff / &q1).to_u64().unwrap();
                assert!(u <= 3, "u = {u}");
                for (o, d) in out.iter().zip([0, 1]) {
                    let p = b.moduli[d].value();
                    assert_eq!((&sum % p).to_u64().unwrap(), o.coeffs()[t]);
                }
                cases += 1;
            }
        }
    }

    #[test]
    fn decompose_digits_keep_groups_and_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = toy_basis(16, 20, 2, 1);
        let c = random_q_poly(&b, 1, &mut rng);
        let digits = b.decompose(&c).unwrap();
        assert_eq!(digits.len(), 2);
        for (bi, d) in digits.iter().enumerate() {
            assert_eq!(d.limb_count(), 3);
            assert_eq!(d.limbs()[1 + bi], c.limbs()[bi]);
        }
        // Σ_b digit_b · (Q/Q_b)·[(Q/Q_b)⁻¹]_{Q_b} ≡ c + kQ over PQ. Each digit carries
        // an overshoot u_b·Q_b with u_b < |Q_b|, so |k| ≤ β + Σ_b |Q_b|·Q_b.
        let q = product(b.q_moduli());
        let pq = product(&b.moduli);
        for t in 0..16 {
            let mut sum = BigUint::zero();
            for (bi, d) in digits.iter().enumerate() {
                let qb = b.q_moduli()[bi].value();
                let hat = &q / qb;
                let inv = b.q_moduli()[bi]
                    .inv((&hat % qb).to_u64().unwrap())
                    .unwrap();
                sum += crt(d.limbs(), t) * hat * inv;
            }
            let sum = sum % &pq;
            let a = crt(c.limbs(), t);
            let diff = centered(&((&sum + &pq - &a) % &pq), &pq);
            let qi = BigInt::from(q.clone());
            assert!((&diff % &qi).is_zero(), "not a multiple of Q");
            let bound: u64 = 2 + b.q_moduli().iter().map(|m| m.value()).sum::<u64>();
            assert!((diff / qi).abs() <= BigInt::from(bound));
        }
    }

    #[test]
    fn decompose_single_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = toy_basis(16, 20, 3, 3);
        let c = random_q_poly(&b, 2, &mut rng);
        let d = b.decompose(&c).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(&d[0].limbs()[3..], c.limbs());
        let src: Vec<&Poly> = c.limbs().iter().collect();
        let ext = b.bconv(&src, &[3, 4, 5], &[0, 1, 2]).unwrap();
        assert_eq!(&d[0].limbs()[..3], ext.as_slice());
    }

    #[test]
    fn moddown_error_bounded_by_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = toy_basis(16, 20, 3, 2);
        let p = product(b.p_moduli());
        let q = product(b.q_moduli());
        let pq = &p * &q;
        let mut cases = 0;
        while cases < 1000 {
            let c = random_pq_poly(&b, 2, &mut rng);
            let d = b.moddown(&c).unwrap();
            for t in 0..16 {
                let x = centered(&crt(c.limbs(), t), &pq);
                let y = centered(&crt(d.limbs(), t), &q);
                let err = y * BigInt::from(p.clone()) - x;
                assert!(err.abs() <= BigInt::from(p.clone()) * 2u32, "err {err}");
                cases += 1;
            }
        }
    }

    #[test]
    fn moddown_exact_multiple() {
        let b = toy_basis(16, 20, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m: Vec<i64> = (0..16).map(|_| rng.gen_range(-1000..1000)).collect();
        let lifted = b.from_signed(&m, BasisView::pq(1)).unwrap();
        let p = b.p_moduli()[0].value();
        let residues: Vec<u64> = b
            .indices(BasisView::pq(1))
            .into_iter()
            .map(|i| b.moduli[i].reduce(p))
            .collect();
        let c = b.scale_limbs(&lifted, &residues);
        assert_eq!(b.moddown(&c).unwrap(), b.from_signed(&m, BasisView::q(1)).unwrap());
        let z = b.zero(BasisView::pq(1), Domain::Coefficient);
        assert!(b.moddown(&z).unwrap().is_zero());
    }

    #[test]
    fn rescale_error_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = toy_basis(16, 20, 4, 1);
        let q = product(b.q_moduli());
        let q_low = product(&b.q_moduli()[..3]);
        let ql = BigInt::from(b.q_moduli()[3].value());
        let mut cases = 0;
        while cases < 1000 {
            let c = random_q_poly(&b, 3, &mut rng);
            let r = b.rescale(&c).unwrap();
            assert_eq!(r.level(), 2);
            for t in 0..16 {
                let x = centered(&crt(c.limbs(), t), &q);
                let y = centered(&crt(r.limbs(), t), &q_low);
                let err = y * &ql - x;
                assert!(err.abs() <= ql, "err {err}");
                cases += 1;
            }
        }
    }

    #[test]
    fn rescale_divisible_and_degenerate() {
        let b = toy_basis(16, 20, 3, 1);
        let v: Vec<i64> = (0..16).map(|i| i as i64 * 7 - 50).collect();
        let ql = b.q_moduli()[2].value();
        let lifted = b.from_signed(&v, BasisView::q(2)).unwrap();
        let residues: Vec<u64> = b.q_moduli().iter().map(|m| m.reduce(ql)).collect();
        let c = b.scale_limbs(&lifted, &residues);
        assert_eq!(b.rescale(&c).unwrap(), b.from_signed(&v, BasisView::q(1)).unwrap());
        let z = b.zero(BasisView::q(2), Domain::Coefficient);
        assert!(b.rescale(&z).unwrap().is_zero());
        let single = b.zero(BasisView::q(0), Domain::Coefficient);
        assert!(matches!(b.rescale(&single), Err(Error::SingleLimb)));
    }

    #[test]
    fn combined_moddown_rescale_matches_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = toy_basis(16, 20, 3, 2);
        let p = product(b.p_moduli());
        let q = product(b.q_moduli());
        let ql = b.q_moduli()[2].value();
        let q_low = product(&b.q_moduli()[..2]);
        let div = BigInt::from(&p * ql);
        for _ in 0..100 {
            let c = random_pq_poly(&b, 2, &mut rng);
            let d = b.moddown_rescale(&c).unwrap();
            for t in 0..16 {
                let x = centered(&crt(c.limbs(), t), &(&p * &q));
                let y = centered(&crt(d.limbs(), t), &q_low);
                let err = y * &div - x;
                assert!(err.abs() <= &div * 3u32);
            }
        }
    }
}
