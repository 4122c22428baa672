//! Homomorphic linear transforms: the diagonal method, BSGS, double-hoisted
//! BSGS and triple-hoisted BSGS.
//!
//! Every evaluator records an [`OpTrace`]. ModDown is counted per polynomial,
//! Decompose per input polynomial, and `cwise_mult_limbs` counts limb-sized
//! coefficient-wise products (key inner products and plaintext products).
//! Rotations by offset 0 are the identity and never touch a key.

mod plan;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::ckks::{Ciphertext, CkksContext, Plaintext, PublicKey, RotationKeys, SecretKey};
use crate::error::{Error, Result};
use crate::ring::Domain;
use crate::rns::RnsPoly;
pub use plan::{mat_vec, tile, DiagMatrix, LtPlan, Method};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OpTrace {
    pub decompose: u64,
    pub moddown: u64,
    pub rescale: u64,
    pub cwise_mult_limbs: u64,
    /// Number of switching-key inner products.
    pub key_switches: u64,
    pub key_offsets: BTreeSet<usize>,
}

impl OpTrace {
    pub fn distinct_keys(&self) -> usize {
        self.key_offsets.len()
    }
}

/// Evaluates linear transforms with a fixed context and key set.
pub struct LtEvaluator<'a> {
    ctx: &'a CkksContext,
    keys: &'a RotationKeys,
}

struct Tracer<'a> {
    ctx: &'a CkksContext,
    trace: OpTrace,
}

impl<'a> Tracer<'a> {
    fn decompose(&mut self, c: &RnsPoly) -> Result<Vec<RnsPoly>> {
        self.trace.decompose += 1;
        self.ctx.decompose(c)
    }

    fn moddown(&mut self, c: &RnsPoly) -> Result<RnsPoly> {
        self.trace.moddown += 1;
        self.ctx.moddown(c)
    }

    fn key_switch(
        &mut self,
        digits: &[RnsPoly],
        keys: &RotationKeys,
        offset: usize,
        hoisted: bool,
    ) -> Result<(RnsPoly, RnsPoly)> {
        let key = if hoisted {
            keys.hoisted(offset)?
        } else {
            keys.plain(offset)?
        };
        self.trace.key_switches += 1;
        self.trace.key_offsets.insert(offset);
        self.trace.cwise_mult_limbs += 2 * (digits.len() * digits[0].limb_count()) as u64;
        self.ctx.key_switch(digits, key)
    }

    /// `acc += (a, b)·f`.
    fn mul_acc(
        &mut self,
        acc: &mut (RnsPoly, RnsPoly),
        a: &RnsPoly,
        b: &RnsPoly,
        f: &RnsPoly,
    ) -> Result<()> {
        self.trace.cwise_mult_limbs += 2 * a.limb_count() as u64;
        acc.0.mul_acc(a, f)?;
        acc.1.mul_acc(b, f)
    }

    /// Final line: combined ModDown of both parts and rescale by `q_L`.
    fn finish(&mut self, c0: &RnsPoly, c1: &RnsPoly, scale: f64) -> Result<Ciphertext> {
        self.trace.moddown += 2;
        self.trace.rescale += 1;
        let ql = self.ctx.basis().q_moduli()[c0.level()].value() as f64;
        Ok(Ciphertext {
            c0: self.ctx.moddown_rescale(c0)?,
            c1: self.ctx.moddown_rescale(c1)?,
            scale: scale / ql,
        })
    }

    /// Non-hoisted rotation with full key switching.
    fn rotate(&mut self, ct: &Ciphertext, r: usize, keys: &RotationKeys) -> Result<Ciphertext> {
        if r % self.ctx.slots() == 0 {
            return Ok(ct.clone());
        }
        let rot = self.ctx.rotation(r);
        let c0 = ct.c0.automorphism(&rot)?;
        let c1 = ct.c1.automorphism(&rot)?;
        let digits = self.decompose(&c1)?;
        let (k0, k1) = self.key_switch(&digits, keys, r, false)?;
        let k0 = self.moddown(&k0)?;
        let k1 = self.moddown(&k1)?;
        Ok(Ciphertext {
            c0: c0.add(&k0)?,
            c1: k1,
            scale: ct.scale,
        })
    }
}

fn zero_pair(ctx: &CkksContext, like: &RnsPoly) -> (RnsPoly, RnsPoly) {
    (
        ctx.basis().zero(like.view(), Domain::Ntt),
        ctx.basis().zero(like.view(), Domain::Ntt),
    )
}

impl<'a> LtEvaluator<'a> {
    pub fn new(ctx: &'a CkksContext, keys: &'a RotationKeys) -> Self {
        LtEvaluator { ctx, keys }
    }

    fn check(&self, plan: &LtPlan, diags: &[Plaintext], method: Method) -> Result<()> {
        if plan.method() != method {
            return Err(Error::PlanMismatch(format!(
                "expected a {method} plan, got {plan}"
            )));
        }
        if diags.len() != plan.n() {
            return Err(Error::PlanMismatch(format!(
                "{} diagonals for n = {}",
                diags.len(),
                plan.n()
            )));
        }
        if plan.n() > self.ctx.slots() {
            return Err(Error::DimensionTooLarge {
                n: plan.n(),
                slots: self.ctx.slots(),
            });
        }
        Ok(())
    }

    fn tracer(&self) -> Tracer<'a> {
        Tracer {
            ctx: self.ctx,
            trace: OpTrace::default(),
        }
    }

    /// Dispatches on the plan's method.
    pub fn eval(
        &self,
        ct: &Ciphertext,
        diags: &[Plaintext],
        plan: &LtPlan,
    ) -> Result<(Ciphertext, OpTrace)> {
        match plan.method() {
            Method::Diagonal => self.diagonal(ct, diags, plan),
            Method::Bsgs => self.bsgs(ct, diags, plan),
            Method::DhBsgs => self.dh_bsgs(ct, diags, plan),
            Method::ThBsgs => self.th_bsgs(ct, diags, plan),
        }
    }

    /// `Σ_i Rot(ct, i)·f_i` with all rotations hoisted over one Decompose and
    /// the accumulation kept over `PQ` until a single final ModDown.
    pub fn diagonal(
        &self,
        ct: &Ciphertext,
        diags: &[Plaintext],
        plan: &LtPlan,
    ) -> Result<(Ciphertext, OpTrace)> {
        self.check(plan, diags, Method::Diagonal)?;
        let ctx = self.ctx;
        let mut t = self.tracer();
        let d = t.decompose(&ct.c1)?;
        let a0 = ctx.mul_by_p(&ct.c0)?;
        let b0 = ctx.mul_by_p(&ct.c1)?;
        let mut acc = zero_pair(ctx, &a0);
        t.mul_acc(&mut acc, &a0, &b0, &diags[0].poly)?;
        for (i, f) in diags.iter().enumerate().skip(1) {
            let rot = ctx.rotation(i);
            let (x0, x1) = t.key_switch(&d, self.keys, i, true)?;
            let a = a0.add(&x0)?.automorphism(&rot)?;
            let b = x1.automorphism(&rot)?;
            t.mul_acc(&mut acc, &a, &b, &f.poly)?;
        }
        let out = t.finish(&acc.0, &acc.1, ct.scale * diags[0].scale)?;
        Ok((out, t.trace))
    }

    /// Eq. (5) with ordinary (non-hoisted) rotations and products over `Q`.
    pub fn bsgs(
        &self,
        ct: &Ciphertext,
        diags: &[Plaintext],
        plan: &LtPlan,
    ) -> Result<(Ciphertext, OpTrace)> {
        self.check(plan, diags, Method::Bsgs)?;
        let (n1, n2) = (plan.factors()[0], plan.factors()[1]);
        let ctx = self.ctx;
        let mut t = self.tracer();
        let view = ct.c0.view();
        let baby = (0..n1)
            .map(|i| t.rotate(ct, i, self.keys))
            .collect::<Result<Vec<_>>>()?;
        let mut total: Option<Ciphertext> = None;
        for j in 0..n2 {
            let mut acc = zero_pair(ctx, &ct.c0);
            for (i, b) in baby.iter().enumerate() {
                let f = ctx.basis().restrict(&diags[n1 * j + i].poly, view)?;
                t.mul_acc(&mut acc, &b.c0, &b.c1, &f)?;
            }
            let inner = Ciphertext {
                c0: acc.0,
                c1: acc.1,
                scale: ct.scale * diags[0].scale,
            };
            let rotated = t.rotate(&inner, n1 * j, self.keys)?;
            total = Some(match total {
                None => rotated,
                Some(s) => ctx.add(&s, &rotated)?,
            });
        }
        let total = total.expect("n2 >= 1");
        t.trace.rescale += 1;
        let out = ctx.rescale(&total)?;
        Ok((out, t.trace))
    }

    /// Algorithm 1 (double hoisting).
    pub fn dh_bsgs(
        &self,
        ct: &Ciphertext,
        diags: &[Plaintext],
        plan: &LtPlan,
    ) -> Result<(Ciphertext, OpTrace)> {
        self.check(plan, diags, Method::DhBsgs)?;
        let (n1, n2) = (plan.factors()[0], plan.factors()[1]);
        let ctx = self.ctx;
        let mut t = self.tracer();
        // Lines 1-2.
        let d = t.decompose(&ct.c1)?;
        let mut a = vec![ctx.mul_by_p(&ct.c0)?];
        let mut b = vec![ctx.mul_by_p(&ct.c1)?];
        // Lines 3-5.
        for i in 1..n1 {
            let rot = ctx.rotation(i);
            let (x0, x1) = t.key_switch(&d, self.keys, i, true)?;
            a.push(a[0].add(&x0)?.automorphism(&rot)?);
            b.push(x1.automorphism(&rot)?);
        }
        // Lines 6-13.
        let mut c = zero_pair(ctx, &a[0]);
        for j in 0..n2 {
            let mut u = zero_pair(ctx, &a[0]);
            for i in 0..n1 {
                t.mul_acc(&mut u, &a[i], &b[i], &diags[n1 * j + i].poly)?;
            }
            if j == 0 {
                c.0.add_assign(&u.0)?;
                c.1.add_assign(&u.1)?;
                continue;
            }
            let r = n1 * j;
            let rot = ctx.rotation(r);
            let u1 = t.moddown(&u.1)?;
            let dj = t.decompose(&u1)?;
            let (x0, x1) = t.key_switch(&dj, self.keys, r, true)?;
            c.0.add_assign(&u.0.add(&x0)?.automorphism(&rot)?)?;
            c.1.add_assign(&x1.automorphism(&rot)?)?;
        }
        // Line 14.
        let out = t.finish(&c.0, &c.1, ct.scale * diags[0].scale)?;
        Ok((out, t.trace))
    }

    /// Algorithm 2 (triple hoisting).
    pub fn th_bsgs(
        &self,
        ct: &Ciphertext,
        diags: &[Plaintext],
        plan: &LtPlan,
    ) -> Result<(Ciphertext, OpTrace)> {
        self.check(plan, diags, Method::ThBsgs)?;
        let (n1, n2, n3) = (plan.factors()[0], plan.factors()[1], plan.factors()[2]);
        let ctx = self.ctx;
        let mut t = self.tracer();
        // Lines 1-2.
        let d0 = t.decompose(&ct.c1)?;
        let mut a = vec![ctx.mul_by_p(&ct.c0)?];
        let mut b = vec![ctx.mul_by_p(&ct.c1)?];
        let mut d = vec![d0];
        // Lines 3-7.
        for i in 1..n1 {
            let rot = ctx.rotation(i);
            let (x0, x1) = t.key_switch(&d[0], self.keys, i, true)?;
            a.push(a[0].add(&x0)?.automorphism(&rot)?);
            let bi = x1.automorphism(&rot)?;
            let bi_down = t.moddown(&bi)?;
            d.push(t.decompose(&bi_down)?);
            b.push(bi);
        }
        // Lines 8-11: index n1·j + i.
        a.resize(n1 * n2, a[0].clone());
        b.resize(n1 * n2, b[0].clone());
        for i in 0..n1 {
            for j in 1..n2 {
                let r = n1 * j;
                let rot = ctx.rotation(r);
                let (x0, x1) = t.key_switch(&d[i], self.keys, r, true)?;
                a[r + i] = a[i].add(&x0)?.automorphism(&rot)?;
                b[r + i] = x1.automorphism(&rot)?;
            }
        }
        drop(d);
        // Line 12.
        let block = n1 * n2;
        let mut c = zero_pair(ctx, &a[0]);
        for i in 0..block {
            t.mul_acc(&mut c, &a[i], &b[i], &diags[i].poly)?;
        }
        // Lines 13-18.
        for k in 1..n3 {
            let r = block * k;
            let rot = ctx.rotation(r);
            let mut u = zero_pair(ctx, &a[0]);
            for i in 0..block {
                t.mul_acc(&mut u, &a[i], &b[i], &diags[r + i].poly)?;
            }
            let u1 = t.moddown(&u.1)?;
            let dk = t.decompose(&u1)?;
            let (x0, x1) = t.key_switch(&dk, self.keys, r, true)?;
            c.0.add_assign(&u.0.add(&x0)?.automorphism(&rot)?)?;
            c.1.add_assign(&x1.automorphism(&rot)?)?;
        }
        // Line 19.
        let out = t.finish(&c.0, &c.1, ct.scale * diags[0].scale)?;
        Ok((out, t.trace))
    }
}

/// Result of one method in an equivalence run.
#[derive(Debug, Clone, Serialize)]
pub struct MethodRun {
    pub plan: String,
    pub method: Method,
    pub factors: Vec<usize>,
    pub max_error: f64,
    pub trace: OpTrace,
    pub seconds: f64,
    #[serde(skip)]
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub runs: Vec<MethodRun>,
    /// `(i, j, max slotwise difference)` over the first `n` slots.
    pub pairwise: Vec<(usize, usize, f64)>,
}

impl EquivalenceReport {
    pub fn max_pairwise(&self) -> f64 {
        self.pairwise.iter().map(|p| p.2).fold(0.0, f64::max)
    }

    pub fn max_error(&self) -> f64 {
        self.runs.iter().map(|r| r.max_error).fold(0.0, f64::max)
    }
}

/// Keys and encryption state shared by several transforms.
pub struct LtSession {
    pub ctx: CkksContext,
    pub sk: SecretKey,
    pub pk: PublicKey,
    pub keys: RotationKeys,
    rng: ChaCha20Rng,
}

impl LtSession {
    /// Generates keys covering every plan's rotation offsets.
    pub fn new(ctx: CkksContext, plans: &[LtPlan], seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (sk, pk) = ctx.keygen(&mut rng);
        let mut plain = BTreeSet::new();
        let mut hoisted = BTreeSet::new();
        for p in plans {
            if p.n() > ctx.slots() {
                return Err(Error::DimensionTooLarge {
                    n: p.n(),
                    slots: ctx.slots(),
                });
            }
            if p.uses_hoisted_keys() {
                hoisted.extend(p.rotation_offsets());
            } else {
                plain.extend(p.rotation_offsets());
            }
        }
        let mut keys = ctx.rotation_keys(&sk, &plain, true, false, &mut rng)?;
        let hk = ctx.rotation_keys(&sk, &hoisted, false, true, &mut rng)?;
        for r in hk.hoisted_offsets() {
            keys.insert(r, hk.hoisted(r)?.clone(), true);
        }
        Ok(LtSession {
            ctx,
            sk,
            pk,
            keys,
            rng,
        })
    }

    /// Encrypts `v` zero-padded to `n` and tiled over all slots.
    pub fn encrypt_vector(&mut self, v: &[f64], n: usize) -> Result<Ciphertext> {
        if n > self.ctx.slots() || v.len() > n {
            return Err(Error::DimensionTooLarge {
                n: n.max(v.len()),
                slots: self.ctx.slots(),
            });
        }
        let mut padded = v.to_vec();
        padded.resize(n, 0.0);
        let pt = self.ctx.encode(&tile(&padded, self.ctx.slots()))?;
        self.ctx.encrypt(&pt, &self.pk, &mut self.rng)
    }

    pub fn decrypt_vector(&self, ct: &Ciphertext, n: usize) -> Result<Vec<f64>> {
        let mut out = self.ctx.decrypt_decode(ct, &self.sk)?;
        out.truncate(n);
        Ok(out)
    }

    /// Runs `plan` on `F·v` and returns the decrypted first `n` slots.
    pub fn run(
        &self,
        ct: &Ciphertext,
        dm: &DiagMatrix,
        plan: &LtPlan,
    ) -> Result<(Vec<f64>, OpTrace, Ciphertext)> {
        let diags = dm.encode(&self.ctx, plan)?;
        let (out, trace) = LtEvaluator::new(&self.ctx, &self.keys).eval(ct, &diags, plan)?;
        Ok((self.decrypt_vector(&out, plan.n())?, trace, out))
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs every plan on the same encrypted `v` and compares against `F·v`
/// and against each other.
pub fn lt_equivalence_check(
    session: &mut LtSession,
    f: &[Vec<f64>],
    v: &[f64],
    plans: &[LtPlan],
) -> Result<EquivalenceReport> {
    let dm = DiagMatrix::diagonalize(f, session.ctx.slots())?;
    let n = dm.n();
    let mut padded = v.to_vec();
    padded.resize(n, 0.0);
    let expected = mat_vec(&dm.to_matrix(), &padded);
    let ct = session.encrypt_vector(&padded, n)?;
    let mut runs = Vec::new();
    for plan in plans {
        let start = std::time::Instant::now();
        let (out, trace, _) = session.run(&ct, &dm, plan)?;
        runs.push(MethodRun {
            plan: plan.to_string(),
            method: plan.method(),
            factors: plan.factors().to_vec(),
            max_error: max_abs_diff(&out, &expected),
            trace,
            seconds: start.elapsed().as_secs_f64(),
            output: out,
        });
    }
    let mut pairwise = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            pairwise.push((i, j, max_abs_diff(&runs[i].output, &runs[j].output)));
        }
    }
    Ok(EquivalenceReport { n, runs, pairwise })
}
