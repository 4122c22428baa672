//! Event-counting model of the six-phase TH-BSGS datapath.
//!
//! The simulator walks the loop nest of each phase, batch by batch and limb
//! chunk by limb chunk, and meters every off-chip transfer in limbs. In
//! compute mode it also carries the real polynomials through an off-chip
//! store, so its output can be checked against the reference evaluator.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ckks::{Ciphertext, CkksContext, Plaintext, RotationKeys};
use crate::costmodel::{self, Category, HeParams, ParallelismConfig, PhaseRow, PhaseTable};
use crate::error::{Error, Result};
use crate::helt::{LtPlan, OpTrace};
use crate::ring::Domain;
use crate::rns::RnsPoly;

/// Logical off-chip objects, for conservation checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Object {
    Input,
    A,
    B,
    D,
    U,
    Acc,
    Output,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ObjectTraffic {
    pub written: u64,
    pub read: u64,
}

/// Per-phase access counters and on-chip residency, in limbs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryMeter {
    pub phases: [PhaseRow; 6],
    /// Number of loop rounds executed per phase.
    pub rounds: [u64; 6],
    #[serde(skip)]
    pub objects: BTreeMap<(Object, usize), ObjectTraffic>,
    #[serde(skip)]
    current: u64,
    #[serde(skip)]
    phase: usize,
}

impl Default for MemoryMeter {
    fn default() -> Self {
        MemoryMeter {
            phases: [PhaseRow::default(); 6],
            rounds: [0; 6],
            objects: BTreeMap::new(),
            current: 0,
            phase: 0,
        }
    }
}

impl MemoryMeter {
    fn row(&mut self) -> &mut PhaseRow {
        &mut self.phases[self.phase]
    }

    fn begin(&mut self, phase: usize) {
        self.phase = phase - 1;
        self.current = 0;
    }

    fn read(&mut self, c: Category, limbs: u64) {
        debug_assert_ne!(c, Category::PolyWrite);
        *self.row().get_mut(c) += limbs;
    }

    fn read_obj(&mut self, o: Object, idx: usize, limbs: u64) {
        self.read(Category::PolyRead, limbs);
        self.objects.entry((o, idx)).or_default().read += limbs;
    }

    fn write_obj(&mut self, o: Object, idx: usize, limbs: u64) {
        self.row().poly_write += limbs;
        self.objects.entry((o, idx)).or_default().written += limbs;
    }

    fn alloc(&mut self, limbs: u64) {
        self.current += limbs;
        let peak = &mut self.phases[self.phase].peak_onchip;
        *peak = (*peak).max(self.current);
    }

    fn free(&mut self, limbs: u64) {
        self.current -= limbs;
    }

    fn round(&mut self) {
        self.rounds[self.phase] += 1;
    }

    pub fn table(&self) -> PhaseTable {
        PhaseTable {
            phases: self.phases,
        }
    }

    pub fn offchip_total(&self) -> u64 {
        self.table().offchip_total()
    }
}

/// Real inputs for compute mode. Diagonals must be encoded for the plan.
pub struct ComputeInputs<'a> {
    pub ctx: &'a CkksContext,
    pub ct: &'a Ciphertext,
    pub keys: &'a RotationKeys,
    pub diags: &'a [Plaintext],
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub params: HeParams,
    pub factors: Vec<usize>,
    pub config: ParallelismConfig,
    pub meter: MemoryMeter,
    pub trace: OpTrace,
    #[serde(skip)]
    pub output: Option<Ciphertext>,
}

/// Shape of a compute-mode context as cost-model parameters.
pub fn params_of(ctx: &CkksContext, ct: &Ciphertext, n: usize) -> Result<HeParams> {
    let b = ctx.basis();
    let w = b.q_moduli().iter().map(|m| m.bits()).max().unwrap_or(0);
    HeParams::new(ctx.n(), ct.level() + 1, b.alpha(), w, n)
}

/// Off-chip working set of compute mode.
#[derive(Default)]
struct Store {
    a: Vec<Option<RnsPoly>>,
    b: Vec<Option<RnsPoly>>,
    d: Vec<Option<Vec<RnsPoly>>>,
    u: Vec<Option<(RnsPoly, RnsPoly)>>,
    acc: Option<(RnsPoly, RnsPoly)>,
}

fn take<T: Clone>(v: &[Option<T>], i: usize) -> T {
    v[i].clone().expect("object written in an earlier phase")
}

/// Chunks of `0..total` of size at most `step`.
fn chunks(total: usize, step: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..total)
        .step_by(step.max(1))
        .map(move |s| s..(s + step.max(1)).min(total))
}

struct Sim<'a, 'b> {
    p: &'a HeParams,
    c: &'a ParallelismConfig,
    n1: usize,
    n2: usize,
    n3: usize,
    k: u64,
    q: u64,
    beta: u64,
    meter: MemoryMeter,
    trace: OpTrace,
    io: Option<&'a ComputeInputs<'b>>,
    store: Store,
    capacity: [u64; 6],
}

impl<'a, 'b> Sim<'a, 'b> {
    fn check_capacity(&self, phase: usize) -> Result<()> {
        let needed = self.meter.phases[phase - 1].peak_onchip;
        if needed > self.capacity[phase - 1] {
            return Err(Error::OnchipOverflow {
                phase,
                needed,
                declared: self.capacity[phase - 1],
            });
        }
        Ok(())
    }

    fn key_switch(
        &mut self,
        digits: &[RnsPoly],
        offset: usize,
    ) -> Result<(RnsPoly, RnsPoly)> {
        let io = self.io.expect("compute mode");
        self.trace.key_switches += 1;
        self.trace.key_offsets.insert(offset);
        self.trace.cwise_mult_limbs += 2 * (digits.len() * digits[0].limb_count()) as u64;
        io.ctx.key_switch(digits, io.keys.hoisted(offset)?)
    }

    /// Lines 1-5.
    fn phase1(&mut self) -> Result<()> {
        self.meter.begin(1);
        let (k, q, beta) = (self.k, self.q, self.beta);
        let (m1, l1) = (self.c.m[0], self.c.l[0]);
        self.meter.read(Category::NttTwiddle, 2 * k);
        for _ in 0..2 {
            self.meter.read_obj(Object::Input, 0, q);
        }
        self.meter.alloc(2 * q);
        for limbs in chunks(k as usize, l1) {
            let l = limbs.len() as u64;
            self.meter.alloc((beta + 4) * l);
            // a_0, b_0 and the first digit set leave chip once per chunk.
            self.meter.write_obj(Object::A, 0, l);
            self.meter.write_obj(Object::B, 0, l);
            self.meter.write_obj(Object::D, 0, beta * l);
            for batch in chunks(self.n1.saturating_sub(1), m1) {
                self.meter.round();
                let mb = batch.len() as u64;
                self.meter.alloc((4 * beta + 6) * mb * l);
                self.meter.read(Category::SwitchingKey, 2 * beta * mb * l);
                for j in batch {
                    self.meter.write_obj(Object::A, j + 1, l);
                    self.meter.write_obj(Object::B, j + 1, l);
                }
                self.meter.free((4 * beta + 6) * mb * l);
            }
            self.meter.free((beta + 4) * l);
        }
        if let Some(io) = self.io {
            let ctx = io.ctx;
            self.trace.decompose += 1;
            let d0 = ctx.decompose(&io.ct.c1)?;
            let a0 = ctx.mul_by_p(&io.ct.c0)?;
            let b0 = ctx.mul_by_p(&io.ct.c1)?;
            let s = &mut self.store;
            s.a = vec![None; self.n1 * self.n2];
            s.b = vec![None; self.n1 * self.n2];
            s.d = vec![None; self.n1];
            for i in 1..self.n1 {
                let rot = ctx.rotation(i);
                let (x0, x1) = self.key_switch(&d0, i)?;
                self.store.a[i] = Some(a0.add(&x0)?.automorphism(&rot)?);
                self.store.b[i] = Some(x1.automorphism(&rot)?);
            }
            self.store.a[0] = Some(a0);
            self.store.b[0] = Some(b0);
            self.store.d[0] = Some(d0);
        }
        self.check_capacity(1)
    }

    /// Lines 6-7: ModDown and Decompose of every `b_i`, `i ≥ 1`.
    fn phase2(&mut self) -> Result<()> {
        self.meter.begin(2);
        let (k, q, beta) = (self.k, self.q, self.beta);
        let alpha = self.p.alpha as u64;
        let (m2, l2) = (self.c.m[1], self.c.l[1]);
        self.meter.alloc(2 * l2 as u64);
        for batch in chunks(self.n1.saturating_sub(1), m2) {
            self.meter.round();
            let mb = batch.len() as u64;
            self.meter.read(Category::NttTwiddle, k);
            self.meter.alloc(mb * (2 * q + alpha + 2 * beta * l2 as u64));
            for j in batch {
                let i = j + 1;
                self.meter.read_obj(Object::B, i, k);
                self.meter.write_obj(Object::D, i, beta * k);
                if let Some(io) = self.io {
                    self.trace.moddown += 1;
                    self.trace.decompose += 1;
                    let bi = take(&self.store.b, i);
                    let down = io.ctx.moddown(&bi)?;
                    self.store.d[i] = Some(io.ctx.decompose(&down)?);
                }
            }
            self.meter.free(mb * (2 * q + alpha + 2 * beta * l2 as u64));
        }
        self.check_capacity(2)
    }

    /// Lines 8-11: middle-layer hoisted rotations.
    fn phase3(&mut self) -> Result<()> {
        self.meter.begin(3);
        let (k, beta) = (self.k, self.beta);
        let (m3, m4, l3) = (self.c.m[2], self.c.m[3], self.c.l[2]);
        for keys in chunks(self.n2.saturating_sub(1), m3) {
            let kb = keys.len() as u64;
            let js: Vec<usize> = keys.map(|x| x + 1).collect();
            self.meter.read(Category::SwitchingKey, 2 * beta * kb * k);
            for rows in chunks(self.n1, m4) {
                let rb = rows.len() as u64;
                for limbs in chunks(k as usize, l3) {
                    self.meter.round();
                    let l = limbs.len() as u64;
                    let buf = 2 * l * ((beta + 1) * rb + 2 * beta * kb + 2 * kb * rb);
                    self.meter.alloc(buf);
                    for i in rows.clone() {
                        self.meter.read_obj(Object::A, i, l);
                        self.meter.read_obj(Object::D, i, beta * l);
                        for &j in &js {
                            self.meter.write_obj(Object::A, self.n1 * j + i, l);
                            self.meter.write_obj(Object::B, self.n1 * j + i, l);
                        }
                    }
                    self.meter.free(buf);
                }
                if let Some(io) = self.io {
                    for i in rows.clone() {
                        let ai = take(&self.store.a, i);
                        let di = take(&self.store.d, i);
                        for &j in &js {
                            let r = self.n1 * j;
                            let rot = io.ctx.rotation(r);
                            let (x0, x1) = self.key_switch(&di, r)?;
                            self.store.a[r + i] = Some(ai.add(&x0)?.automorphism(&rot)?);
                            self.store.b[r + i] = Some(x1.automorphism(&rot)?);
                        }
                    }
                }
            }
        }
        self.store.d.clear();
        self.check_capacity(3)
    }

    /// Lines 12-14: sums of products for every outer index `k`, with
    /// partial sums spilled between chunks of `m5` pairs `(a_i, b_i)`.
    fn phase4(&mut self) -> Result<()> {
        self.meter.begin(4);
        let k = self.k;
        let (m5, l4) = (self.c.m[4], self.c.l[3] as u64);
        let block = self.n1 * self.n2;
        self.meter.read(Category::NttTwiddle, k);
        self.meter.alloc(5 * l4);
        if self.io.is_some() {
            self.store.u = vec![None; self.n3];
        }
        for (ci, pairs) in chunks(block, m5).enumerate() {
            self.meter.round();
            let pb = pairs.len() as u64;
            self.meter.alloc(6 * pb * l4);
            for i in pairs.clone() {
                self.meter.read_obj(Object::A, i, k);
                self.meter.read_obj(Object::B, i, k);
            }
            for kk in 0..self.n3 {
                if ci > 0 {
                    self.meter.read_obj(Object::U, kk, 2 * k);
                }
                self.meter.read(Category::LtMatrix, pb * k);
                self.meter.write_obj(Object::U, kk, 2 * k);
                if let Some(io) = self.io {
                    let mut acc = match self.store.u[kk].take() {
                        Some(u) => u,
                        None => {
                            let view = take(&self.store.a, 0).view();
                            let z = io.ctx.basis().zero(view, Domain::Ntt);
                            (z.clone(), z)
                        }
                    };
                    for i in pairs.clone() {
                        let ai = self.store.a[i].as_ref().expect("written");
                        let bi = self.store.b[i].as_ref().expect("written");
                        let f = &io.diags[block * kk + i].poly;
                        self.trace.cwise_mult_limbs += 2 * ai.limb_count() as u64;
                        acc.0.mul_acc(ai, f)?;
                        acc.1.mul_acc(bi, f)?;
                    }
                    self.store.u[kk] = Some(acc);
                }
            }
            self.meter.free(6 * pb * l4);
        }
        self.store.a.clear();
        self.store.b.clear();
        self.check_capacity(4)
    }

    /// Lines 15-18 over `k` in batches of `m6`; `k = 0` passes `U_0` through
    /// as the initial accumulator.
    fn phase5(&mut self) -> Result<()> {
        self.meter.begin(5);
        let (k, beta) = (self.k, self.beta);
        let (m6, l5) = (self.c.m[5], self.c.l[4] as u64);
        let m6u = m6 as u64;
        self.meter.alloc(m6u * k + (5 * beta * m6u + 2 * m6u + 6) * l5 + 2 * l5);
        for (bi, batch) in chunks(self.n3, m6).enumerate() {
            self.meter.round();
            self.meter.read(Category::NttTwiddle, k);
            if bi > 0 {
                self.meter.read_obj(Object::Acc, 0, 2 * k);
            }
            for kk in batch {
                self.meter.read_obj(Object::U, kk, 2 * k);
                if kk > 0 {
                    self.meter.read(Category::SwitchingKey, 2 * beta * k);
                }
                if let Some(io) = self.io {
                    let u = self.store.u[kk].take().expect("written in phase 4");
                    if kk == 0 {
                        self.store.acc = Some(u);
                        continue;
                    }
                    let r = self.n1 * self.n2 * kk;
                    let rot = io.ctx.rotation(r);
                    self.trace.moddown += 1;
                    self.trace.decompose += 1;
                    let u1 = io.ctx.moddown(&u.1)?;
                    let d = io.ctx.decompose(&u1)?;
                    let (x0, x1) = self.key_switch(&d, r)?;
                    let acc = self.store.acc.as_mut().expect("k = 0 comes first");
                    acc.0.add_assign(&u.0.add(&x0)?.automorphism(&rot)?)?;
                    acc.1.add_assign(&x1.automorphism(&rot)?)?;
                }
            }
            self.meter.write_obj(Object::Acc, 0, 2 * k);
        }
        self.check_capacity(5)
    }

    /// Line 19: combined ModDown and rescale.
    fn phase6(&mut self) -> Result<Option<Ciphertext>> {
        self.meter.begin(6);
        let k = self.k;
        self.meter.round();
        self.meter.alloc(2 * k);
        self.meter.read(Category::NttTwiddle, k);
        self.meter.read_obj(Object::Acc, 0, 2 * k);
        // Rescaling drops q_L, so L limbs per polynomial go back out.
        self.meter.write_obj(Object::Output, 0, 2 * (self.q - 1));
        self.meter.free(2 * k);
        self.check_capacity(6)?;
        let Some(io) = self.io else { return Ok(None) };
        let (c0, c1) = self.store.acc.take().expect("phase 5 ran");
        self.trace.moddown += 2;
        self.trace.rescale += 1;
        let ql = io.ctx.basis().q_moduli()[c0.level()].value() as f64;
        Ok(Some(Ciphertext {
            c0: io.ctx.moddown_rescale(&c0)?,
            c1: io.ctx.moddown_rescale(&c1)?,
            scale: io.ct.scale * io.diags[0].scale / ql,
        }))
    }
}

/// Runs the datapath. Without `inputs` only shapes are walked.
pub fn simulate(
    p: &HeParams,
    plan: &LtPlan,
    config: &ParallelismConfig,
    inputs: Option<&ComputeInputs<'_>>,
) -> Result<SimReport> {
    config.validate(p, plan)?;
    if let Some(io) = inputs {
        let shape = params_of(io.ctx, io.ct, plan.n())?;
        if (shape.ring_dim, shape.q_count, shape.alpha) != (p.ring_dim, p.q_count, p.alpha) {
            return Err(Error::PlanMismatch(format!(
                "compute inputs have shape {shape:?}, run declared {p:?}"
            )));
        }
        if io.diags.len() != plan.n() {
            return Err(Error::PlanMismatch(format!(
                "{} diagonals for n = {}",
                io.diags.len(),
                plan.n()
            )));
        }
    }
    let f = plan.factors();
    let mut sim = Sim {
        p,
        c: config,
        n1: f[0],
        n2: f[1],
        n3: f[2],
        k: p.pq_limbs(),
        q: p.q_count as u64,
        beta: p.beta as u64,
        meter: MemoryMeter::default(),
        trace: OpTrace::default(),
        io: inputs,
        store: Store::default(),
        capacity: costmodel::peak_onchip(p, plan, config)?,
    };
    sim.phase1()?;
    sim.phase2()?;
    sim.phase3()?;
    sim.phase4()?;
    sim.phase5()?;
    let output = sim.phase6()?;
    Ok(SimReport {
        params: p.clone(),
        factors: f.to_vec(),
        config: *config,
        meter: sim.meter,
        trace: sim.trace,
        output,
    })
}

/// Where a known delta comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    /// The closed-form cell is ambiguous as published.
    OpenQuestion,
    /// The closed form does not count a transfer the schedule needs, or
    /// counts one it cannot perform.
    ModelDeviation,
}

/// A known difference between the simulator and the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WhitelistEntry {
    pub phase: usize,
    pub category: Category,
    pub kind: DeltaKind,
    pub reason: &'static str,
}

pub const WHITELIST: [WhitelistEntry; 4] = [
    WhitelistEntry {
        phase: 1,
        kind: DeltaKind::ModelDeviation,
        category: Category::PolyWrite,
        reason: "the digits d_0 of line 1 are written for phase 3, which reads d_i for every i < n1'; the closed form omits this beta(L+1+alpha) write",
    },
    WhitelistEntry {
        phase: 2,
        kind: DeltaKind::OpenQuestion,
        category: Category::NttTwiddle,
        reason: "twiddles are reloaded per batch of m2 ModDown/Decompose operations; the closed form divides by m1",
    },
    WhitelistEntry {
        phase: 3,
        kind: DeltaKind::ModelDeviation,
        category: Category::PolyWrite,
        reason: "only the new pairs a_{n1'j+i}, b_{n1'j+i} with j >= 1 are written, 2n1'(n2'-1)(L+1+alpha); the closed form counts 2n1'n2'(L+1+alpha)",
    },
    WhitelistEntry {
        phase: 6,
        kind: DeltaKind::ModelDeviation,
        category: Category::PolyWrite,
        reason: "the rescaled output has L limbs per polynomial, 2L; the closed form counts 2(L+1)",
    },
];

pub fn whitelisted(phase: usize, category: Category) -> Option<&'static WhitelistEntry> {
    WHITELIST
        .iter()
        .find(|w| w.phase == phase && w.category == category)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDelta {
    pub phase: usize,
    pub category: String,
    pub simulated: u64,
    pub model: u64,
    pub delta: i64,
    pub whitelisted: bool,
    pub kind: Option<DeltaKind>,
    pub reason: Option<&'static str>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffReport {
    pub params: HeParams,
    pub factors: Vec<usize>,
    pub config: String,
    /// Every cell, including zero deltas.
    pub cells: Vec<CellDelta>,
    /// Simulated peak on-chip per phase against the closed form.
    pub peak_simulated: [u64; 6],
    pub peak_model: [u64; 6],
}

impl DiffReport {
    pub fn nonzero(&self) -> impl Iterator<Item = &CellDelta> {
        self.cells.iter().filter(|c| c.delta != 0)
    }

    pub fn unexplained(&self) -> impl Iterator<Item = &CellDelta> {
        self.nonzero().filter(|c| !c.whitelisted)
    }

    /// Nonzero cells outside the open-question list.
    pub fn strict_violations(&self) -> impl Iterator<Item = &CellDelta> {
        self.nonzero()
            .filter(|c| c.kind != Some(DeltaKind::OpenQuestion))
    }

    fn peaks_within(&self) -> bool {
        self.peak_simulated
            .iter()
            .zip(&self.peak_model)
            .all(|(s, m)| s <= m)
    }

    /// Only open-question cells may differ.
    pub fn passed_strict(&self) -> bool {
        self.strict_violations().next().is_none() && self.peaks_within()
    }

    /// Every nonzero cell is whitelisted.
    pub fn passed(&self) -> bool {
        self.unexplained().next().is_none() && self.peaks_within()
    }
}

/// Compares a shape-only simulation with `config` against the closed form
/// evaluated with `model_config`.
pub fn compare(
    p: &HeParams,
    plan: &LtPlan,
    config: &ParallelismConfig,
    model_config: &ParallelismConfig,
) -> Result<DiffReport> {
    let sim = simulate(p, plan, config, None)?;
    let model = costmodel::offchip_access(p, plan, model_config)?;
    let mut cells = Vec::new();
    for phase in 1..=6 {
        for c in Category::ALL {
            let s = sim.meter.phases[phase - 1].get(c);
            let m = model.phases[phase - 1].get(c);
            let w = whitelisted(phase, c);
            cells.push(CellDelta {
                phase,
                category: c.name().to_string(),
                simulated: s,
                model: m,
                delta: s as i64 - m as i64,
                whitelisted: w.is_some(),
                kind: w.map(|w| w.kind),
                reason: w.map(|w| w.reason),
            });
        }
    }
    Ok(DiffReport {
        params: p.clone(),
        factors: plan.factors().to_vec(),
        config: config.to_string(),
        cells,
        peak_simulated: std::array::from_fn(|i| sim.meter.phases[i].peak_onchip),
        peak_model: std::array::from_fn(|i| model.phases[i].peak_onchip),
    })
}

pub fn validate_against_model(
    p: &HeParams,
    plan: &LtPlan,
    config: &ParallelismConfig,
) -> Result<DiffReport> {
    compare(p, plan, config, config)
}

/// Closed-form round counts: the ceiling products of the phase descriptions.
pub fn expected_rounds(p: &HeParams, plan: &LtPlan, c: &ParallelismConfig) -> [u64; 6] {
    let f = plan.factors();
    let (n1, n2, n3) = (f[0], f[1], f[2]);
    let k = p.pq_limbs() as usize;
    let cd = |a: usize, b: usize| a.div_ceil(b) as u64;
    [
        cd(k, c.l[0]) * cd(n1 - 1, c.m[0]),
        cd(n1 - 1, c.m[1]),
        cd(n1, c.m[3]) * cd(n2 - 1, c.m[2]) * cd(k, c.l[2]),
        cd(n1 * n2, c.m[4]),
        cd(n3, c.m[5]),
        1,
    ]
}
