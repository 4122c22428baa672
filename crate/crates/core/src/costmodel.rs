//! Closed-form operation counts (per method) and the six-phase memory model
//! of the TH-BSGS datapath, plus factor and parallelism searches.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::helt::{LtPlan, Method};

/// HE and LT shape: ring dimension, `L+1` moduli, `α`, `β`, modulus width and
/// LT dimension `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HeParams {
    pub ring_dim: usize,
    pub q_count: usize,
    pub alpha: usize,
    pub beta: usize,
    pub w: u32,
    pub n: usize,
}

impl HeParams {
    pub fn new(ring_dim: usize, q_count: usize, alpha: usize, w: u32, n: usize) -> Result<Self> {
        if ring_dim < 4 || !ring_dim.is_power_of_two() {
            return Err(Error::InvalidRingDim(ring_dim));
        }
        if q_count == 0 || alpha == 0 {
            return Err(Error::ConfigOutOfRange("L+1 and alpha must be positive".into()));
        }
        if n == 0 || !n.is_power_of_two() || n > ring_dim / 2 {
            return Err(Error::DimensionTooLarge {
                n,
                slots: ring_dim / 2,
            });
        }
        if w == 0 || w > 64 {
            return Err(Error::ConfigOutOfRange(format!("w = {w}")));
        }
        Ok(HeParams {
            ring_dim,
            q_count,
            alpha,
            beta: q_count.div_ceil(alpha),
            w,
            n,
        })
    }

    /// Named parameter sets: `toy`, `set-a`, `set-b`, `set-c`.
    pub fn named(name: &str) -> Result<Self> {
        Ok(NamedSet::from_str(name)?.params())
    }

    /// `L + 1 + α`: limbs of a polynomial over `PQ`.
    pub fn pq_limbs(&self) -> u64 {
        (self.q_count + self.alpha) as u64
    }

    pub fn log_n(&self) -> u32 {
        self.ring_dim.trailing_zeros()
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.ring_dim, self.q_count, self.alpha, self.w, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedSet {
    Toy,
    SetA,
    SetB,
    SetC,
}

impl NamedSet {
    pub const ALL: [NamedSet; 4] = [NamedSet::Toy, NamedSet::SetA, NamedSet::SetB, NamedSet::SetC];
    pub const TABLE: [NamedSet; 3] = [NamedSet::SetA, NamedSet::SetB, NamedSet::SetC];

    pub fn name(self) -> &'static str {
        match self {
            NamedSet::Toy => "toy",
            NamedSet::SetA => "set-a",
            NamedSet::SetB => "set-b",
            NamedSet::SetC => "set-c",
        }
    }

    pub fn params(self) -> HeParams {
        let (log_n, q, a, log_lt) = match self {
            NamedSet::Toy => (10, 5, 5, 6),
            NamedSet::SetA => (13, 5, 5, 12),
            NamedSet::SetB => (15, 16, 8, 14),
            NamedSet::SetC => (16, 32, 12, 15),
        };
        HeParams::new(1 << log_n, q, a, 54, 1 << log_lt).expect("valid named set")
    }

    /// TH-BSGS factors of the datapath evaluation.
    pub fn factors(self) -> [usize; 3] {
        match self {
            NamedSet::Toy => [4, 4, 4],
            NamedSet::SetA => [8, 64, 8],
            NamedSet::SetB => [16, 128, 8],
            NamedSet::SetC => [16, 128, 16],
        }
    }

    pub fn plan(self) -> LtPlan {
        let [a, b, c] = self.factors();
        LtPlan::th_bsgs(a, b, c).expect("valid factors")
    }

    pub fn parallelism(self) -> ParallelismConfig {
        // (m1,l1), (m2,l2), (m4,m3,l3), (m5,l4), (m6,l5), dp
        let (m1, l1, m2, l2, m4, m3, l3, m5, l4, m6, l5, dp) = match self {
            NamedSet::Toy => (1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 4),
            NamedSet::SetA => (7, 5, 7, 10, 1, 63, 1, 103, 1, 8, 5, 2),
            NamedSet::SetB => (4, 2, 1, 12, 1, 11, 1, 25, 1, 4, 1, 8),
            NamedSet::SetC => (1, 1, 1, 1, 1, 4, 1, 12, 1, 1, 1, 16),
        };
        ParallelismConfig {
            m: [m1, m2, m3, m4, m5, m6],
            l: [l1, l2, l3, l4, l5],
            dp,
        }
    }
}

impl FromStr for NamedSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        NamedSet::ALL
            .into_iter()
            .find(|n| n.name() == key)
            .ok_or_else(|| Error::ConfigOutOfRange(format!("unknown parameter set {s:?}")))
    }
}

impl fmt::Display for NamedSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which TH-BSGS Decompose/ModDown counts to report. The algorithm listing
/// gives `n1+n3-1` and `n1+n3`; the comparison table prints one more of each.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    #[default]
    Algorithm,
    Table,
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm" | "alg2" => Ok(Convention::Algorithm),
            "table" | "table1" => Ok(Convention::Table),
            _ => Err(Error::ConfigOutOfRange(format!("unknown convention {s:?}"))),
        }
    }
}

/// How residues are packed when converting limbs to bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Packing {
    /// `N·w/8` bytes per limb.
    #[default]
    BitPacked,
    /// `N·⌈w/8⌉` bytes per limb.
    ByteAligned,
}

/// Polynomials per switching key; the key column counts one of them.
pub const KEY_POLYS: u64 = 2;

impl Packing {
    pub fn limb_bytes(self, p: &HeParams) -> f64 {
        match self {
            Packing::BitPacked => p.ring_dim as f64 * p.w as f64 / 8.0,
            Packing::ByteAligned => (p.ring_dim * p.w.div_ceil(8) as usize) as f64,
        }
    }
}

/// Operation counts and key size of one method and factorization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub method: Method,
    pub factors: Vec<usize>,
    pub decompose: u64,
    pub moddown: u64,
    /// Limb-sized coefficient-wise products: key term plus diagonal term.
    pub cwise_key_limbs: u64,
    pub cwise_diag_limbs: u64,
    /// Per-polynomial key limbs (the key column).
    pub switching_key_limbs: u64,
    pub distinct_keys: u64,
    pub key_bytes: f64,
    pub modmuls: u64,
}

impl CostReport {
    pub fn cwise_mult_limbs(&self) -> u64 {
        self.cwise_key_limbs + self.cwise_diag_limbs
    }

    pub fn key_gib(&self) -> f64 {
        self.key_bytes / (1u64 << 30) as f64
    }
}

/// Modular multiplications of one Decompose: INTT of `L+1` limbs, then per
/// digit group a BConv (`N·a` for the `q̂⁻¹` scaling plus `N·a·dst`) and NTTs
/// of the `dst = L+1+α-a` new limbs.
pub fn decompose_modmuls(p: &HeParams) -> u64 {
    let n = p.ring_dim as u64;
    let ntt = n / 2 * p.log_n() as u64;
    let k = p.pq_limbs();
    let mut total = p.q_count as u64 * ntt;
    let mut left = p.q_count;
    while left > 0 {
        let a = left.min(p.alpha) as u64;
        let dst = k - a;
        total += n * a + n * a * dst + dst * ntt;
        left -= a as usize;
    }
    total
}

/// Modular multiplications of one single-polynomial ModDown: INTT of the `α`
/// P-limbs, BConv to `L+1` limbs, NTT, and the `P⁻¹` scaling.
pub fn moddown_modmuls(p: &HeParams) -> u64 {
    let n = p.ring_dim as u64;
    let ntt = n / 2 * p.log_n() as u64;
    let a = p.alpha as u64;
    let q = p.q_count as u64;
    a * ntt + n * a + n * a * q + q * ntt + n * q
}

/// Evaluates the closed-form counts of `plan`.
pub fn complexity(p: &HeParams, plan: &LtPlan, conv: Convention, packing: Packing) -> Result<CostReport> {
    if plan.n() != p.n {
        return Err(Error::BadFactors(format!(
            "plan {plan} is for n = {}, parameters have n = {}",
            plan.n(),
            p.n
        )));
    }
    let f: Vec<u64> = plan.factors().iter().map(|&x| x as u64).collect();
    let n = p.n as u64;
    let k = p.pq_limbs();
    let q = p.q_count as u64;
    let beta = p.beta as u64;
    let (decompose, moddown, rotations, diag_limbs) = match plan.method() {
        Method::Diagonal => (1, 2, n - 1, k),
        Method::Bsgs => {
            let r = f[0] + f[1] - 2;
            (r, 2 * r, r, q)
        }
        Method::DhBsgs => (f[1], f[1] + 1, f[0] + f[1] - 2, k),
        Method::ThBsgs => {
            let extra = u64::from(conv == Convention::Table);
            (
                f[0] + f[2] - 1 + extra,
                f[0] + f[2] + extra,
                f[0] + f[1] + f[2] - 3,
                k,
            )
        }
    };
    let switching_key_limbs = beta * rotations * k;
    let cwise_key_limbs = 2 * switching_key_limbs;
    let cwise_diag_limbs = 2 * n * diag_limbs;
    let ring = p.ring_dim as u64;
    let modmuls = decompose * decompose_modmuls(p)
        + moddown * moddown_modmuls(p)
        + ring * (cwise_key_limbs + cwise_diag_limbs);
    Ok(CostReport {
        method: plan.method(),
        factors: plan.factors().to_vec(),
        decompose,
        moddown,
        cwise_key_limbs,
        cwise_diag_limbs,
        switching_key_limbs,
        distinct_keys: rotations,
        key_bytes: (switching_key_limbs * KEY_POLYS) as f64 * packing.limb_bytes(p),
        modmuls,
    })
}

fn pow2_divisors(n: usize) -> impl Iterator<Item = usize> {
    (0..=n.trailing_zeros()).map(|e| 1usize << e)
}

/// All power-of-two factorizations of `n` with the method's arity.
pub fn factorizations(method: Method, n: usize) -> Vec<LtPlan> {
    let mut out = Vec::new();
    match method {
        Method::Diagonal => out.extend(LtPlan::diagonal(n)),
        Method::Bsgs | Method::DhBsgs => {
            for a in pow2_divisors(n) {
                out.extend(LtPlan::new(method, n, &[a, n / a]));
            }
        }
        Method::ThBsgs => {
            for a in pow2_divisors(n) {
                for b in pow2_divisors(n / a) {
                    out.extend(LtPlan::new(method, n, &[a, b, n / a / b]));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    MinKeys,
    MinCompute,
    Pareto,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-keys" | "min_keys" => Ok(Objective::MinKeys),
            "min-compute" | "min_compute" => Ok(Objective::MinCompute),
            "pareto" => Ok(Objective::Pareto),
            _ => Err(Error::ConfigOutOfRange(format!("unknown objective {s:?}"))),
        }
    }
}

/// Ties on the objective go to the smallest `n1`, then the smallest `n2`.
pub fn search_factors(method: Method, p: &HeParams, objective: Objective) -> Result<Vec<LtPlan>> {
    let cost = |plan: &LtPlan| complexity(p, plan, Convention::Algorithm, Packing::default());
    match objective {
        Objective::Pareto => Ok(sweep(method, p)),
        Objective::MinKeys | Objective::MinCompute => {
            let mut best: Option<(u64, LtPlan)> = None;
            for plan in factorizations(method, p.n) {
                let c = cost(&plan)?;
                let score = if objective == Objective::MinKeys {
                    c.switching_key_limbs
                } else {
                    c.modmuls
                };
                // Enumeration is in increasing (n1, n2) order.
                if best.as_ref().map_or(true, |(s, _)| score < *s) {
                    best = Some((score, plan));
                }
            }
            Ok(best.map(|(_, plan)| vec![plan]).unwrap_or_default())
        }
    }
}

/// The factorizations drawn for one method, by increasing `n2`. TH-BSGS
/// splits `n/n2` into `n1 ≈ n3`, taking the cheaper of the two splits when
/// `log(n/n2)` is odd; BSGS contributes its single balanced point.
pub fn sweep(method: Method, p: &HeParams) -> Vec<LtPlan> {
    let n = p.n;
    let modmuls = |plan: &LtPlan| {
        complexity(p, plan, Convention::Algorithm, Packing::default())
            .map(|c| c.modmuls)
            .unwrap_or(u64::MAX)
    };
    match method {
        Method::Diagonal => factorizations(method, n),
        Method::Bsgs => {
            let e = n.trailing_zeros();
            LtPlan::bsgs(1 << (e / 2), n >> (e / 2)).into_iter().collect()
        }
        Method::DhBsgs => pow2_divisors(n)
            .filter(|&b| b < n)
            .filter_map(|b| LtPlan::dh_bsgs(n / b, b).ok())
            .collect(),
        Method::ThBsgs => pow2_divisors(n)
            .filter_map(|b| {
                let rest = n / b;
                let e = rest.trailing_zeros();
                let lo = 1usize << (e / 2);
                let hi = 1usize << e.div_ceil(2);
                let a = LtPlan::th_bsgs(lo, b, rest / lo).ok()?;
                let c = LtPlan::th_bsgs(hi, b, rest / hi).ok()?;
                Some(if modmuls(&c) < modmuls(&a) { c } else { a })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub method: Method,
    pub factors: Vec<usize>,
    pub key_limbs: u64,
    pub key_bytes: f64,
    pub modmuls: u64,
    pub min_memory: bool,
    pub best_tradeoff: bool,
}

/// Key size against modular multiplications for each method's sweep, with
/// the minimum-memory and lowest-computation points marked.
pub fn tradeoff_curve(methods: &[Method], p: &HeParams, packing: Packing) -> Result<Vec<TradeoffPoint>> {
    let mut out = Vec::new();
    for &m in methods {
        let mut pts = Vec::new();
        for plan in sweep(m, p) {
            let c = complexity(p, &plan, Convention::Algorithm, packing)?;
            pts.push(TradeoffPoint {
                method: m,
                factors: c.factors.clone(),
                key_limbs: c.switching_key_limbs,
                key_bytes: c.key_bytes,
                modmuls: c.modmuls,
                min_memory: false,
                best_tradeoff: false,
            });
        }
        // First minimum wins; the sweep is ordered by n2 and the smaller n1
        // of a reversed pair comes first among equal key counts.
        let pick = |key: &dyn Fn(&TradeoffPoint) -> (u64, u64)| {
            pts.iter()
                .enumerate()
                .min_by(|a, b| {
                    key(a.1)
                        .cmp(&key(b.1))
                        .then(a.1.factors[0].cmp(&b.1.factors[0]))
                })
                .map(|(i, _)| i)
        };
        let mem = pick(&|t| (t.key_limbs, t.modmuls));
        let fast = pick(&|t| (t.modmuls, t.key_limbs));
        if let Some(i) = mem {
            pts[i].min_memory = true;
        }
        if let Some(i) = fast {
            pts[i].best_tradeoff = true;
        }
        out.extend(pts);
    }
    Ok(out)
}

/// Ratio of the DH-BSGS to TH-BSGS key size at their best-tradeoff points.
pub fn best_tradeoff_ratio(points: &[TradeoffPoint]) -> Option<f64> {
    let best = |m| {
        points
            .iter()
            .find(|t| t.method == m && t.best_tradeoff)
            .map(|t| t.key_limbs as f64)
    };
    Some(best(Method::DhBsgs)? / best(Method::ThBsgs)?)
}

/// Parallelism of the six datapath phases: `m1..m6`, `l1..l5` and `dp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ParallelismConfig {
    pub m: [usize; 6],
    pub l: [usize; 5],
    pub dp: usize,
}

impl ParallelismConfig {
    pub fn ones() -> Self {
        ParallelismConfig {
            m: [1; 6],
            l: [1; 5],
            dp: 1,
        }
    }

    /// Parses `m1,m2,m3,m4,m5,m6,l1,l2,l3,l4,l5`.
    pub fn parse_list(s: &str) -> Result<Self> {
        let vals = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::ConfigOutOfRange(format!("bad parallelism value {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 11 {
            return Err(Error::ConfigOutOfRange(format!(
                "parallelism takes 11 values m1..m6,l1..l5, got {}",
                vals.len()
            )));
        }
        let mut c = ParallelismConfig::ones();
        c.m.copy_from_slice(&vals[..6]);
        c.l.copy_from_slice(&vals[6..]);
        Ok(c)
    }

    /// Upper bounds of each `m` for a plan; empty loops still allow 1.
    pub fn m_bounds(plan: &LtPlan) -> [usize; 6] {
        let f = plan.factors();
        let (n1, n2, n3) = (f[0], f[1], f[2]);
        [
            (n1 - 1).max(1),
            (n1 - 1).max(1),
            (n2 - 1).max(1),
            n1,
            n1 * n2,
            n3,
        ]
    }

    pub fn validate(&self, p: &HeParams, plan: &LtPlan) -> Result<()> {
        if plan.method() != Method::ThBsgs {
            return Err(Error::PlanMismatch(format!("datapath model needs a TH-BSGS plan, got {plan}")));
        }
        if plan.n() != p.n {
            return Err(Error::PlanMismatch(format!("plan {plan} does not cover n = {}", p.n)));
        }
        let k = p.pq_limbs() as usize;
        for (i, &l) in self.l.iter().enumerate() {
            if l == 0 || l > k {
                return Err(Error::ConfigOutOfRange(format!("l{} = {l} not in 1..={k}", i + 1)));
            }
        }
        for (i, (&m, hi)) in self.m.iter().zip(Self::m_bounds(plan)).enumerate() {
            if m == 0 || m > hi {
                return Err(Error::ConfigOutOfRange(format!("m{} = {m} not in 1..={hi}", i + 1)));
            }
        }
        if self.dp == 0 || !self.dp.is_power_of_two() || self.dp * self.dp > p.ring_dim {
            return Err(Error::ConfigOutOfRange(format!("dp = {}", self.dp)));
        }
        Ok(())
    }
}

impl fmt::Display for ParallelismConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.m.iter().chain(&self.l).map(usize::to_string).collect();
        write!(f, "{}", v.join(","))
    }
}

/// Off-chip access columns of the datapath model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    NttTwiddle,
    LtMatrix,
    SwitchingKey,
    PolyRead,
    PolyWrite,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::NttTwiddle,
        Category::LtMatrix,
        Category::SwitchingKey,
        Category::PolyRead,
        Category::PolyWrite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::NttTwiddle => "ntt",
            Category::LtMatrix => "lt_matrix",
            Category::SwitchingKey => "switching_key",
            Category::PolyRead => "poly_read",
            Category::PolyWrite => "poly_write",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One phase row: five access columns and the peak on-chip size, in limbs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseRow {
    pub ntt: u64,
    pub lt_matrix: u64,
    pub switching_key: u64,
    pub poly_read: u64,
    pub poly_write: u64,
    pub peak_onchip: u64,
}

impl PhaseRow {
    pub fn get(&self, c: Category) -> u64 {
        match c {
            Category::NttTwiddle => self.ntt,
            Category::LtMatrix => self.lt_matrix,
            Category::SwitchingKey => self.switching_key,
            Category::PolyRead => self.poly_read,
            Category::PolyWrite => self.poly_write,
        }
    }

    pub fn get_mut(&mut self, c: Category) -> &mut u64 {
        match c {
            Category::NttTwiddle => &mut self.ntt,
            Category::LtMatrix => &mut self.lt_matrix,
            Category::SwitchingKey => &mut self.switching_key,
            Category::PolyRead => &mut self.poly_read,
            Category::PolyWrite => &mut self.poly_write,
        }
    }

    pub fn offchip(&self) -> u64 {
        Category::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

/// Table of six phase rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseTable {
    pub phases: [PhaseRow; 6],
}

impl PhaseTable {
    pub fn offchip_total(&self) -> u64 {
        self.phases.iter().map(PhaseRow::offchip).sum()
    }

    pub fn peak_onchip(&self) -> u64 {
        self.phases.iter().map(|r| r.peak_onchip).max().unwrap_or(0)
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Off-chip access of one phase (1-based) in limbs. Fractional terms are
/// rounded up, matching the iteration counts of the phase descriptions.
pub fn phase_offchip(p: &HeParams, plan: &LtPlan, c: &ParallelismConfig, phase: usize) -> PhaseRow {
    let f = plan.factors();
    let (n1, n2, n3) = (f[0] as u64, f[1] as u64, f[2] as u64);
    let k = p.pq_limbs();
    let q = p.q_count as u64;
    let beta = p.beta as u64;
    let n = p.n as u64;
    let m = c.m.map(|x| x as u64);
    let mut row = PhaseRow::default();
    match phase {
        1 => {
            row.ntt = 2 * k;
            row.switching_key = 2 * (n1 - 1) * beta * k;
            row.poly_read = 2 * q;
            row.poly_write = 2 * n1 * k;
        }
        2 => {
            row.ntt = ceil_div(n1 - 1, m[0]) * k;
            row.poly_read = (n1 - 1) * k;
            row.poly_write = (n1 - 1) * beta * k;
        }
        3 => {
            row.switching_key = 2 * (n2 - 1) * beta * k;
            row.poly_read = ceil_div(n2 - 1, m[2]) * n1 * (beta + 1) * k;
            row.poly_write = 2 * n1 * n2 * k;
        }
        4 => {
            let chunks = ceil_div(n1 * n2, m[4]);
            row.ntt = k;
            row.lt_matrix = n * k;
            row.poly_read = 2 * (n1 * n2 + (chunks - 1) * n3) * k;
            row.poly_write = 2 * chunks * n3 * k;
        }
        5 => {
            let batches = ceil_div(n3, m[5]);
            row.ntt = batches * k;
            row.switching_key = 2 * (n3 - 1) * beta * k;
            row.poly_read = 2 * (n3 + batches - 1) * k;
            row.poly_write = 2 * batches * k;
        }
        6 => {
            row.ntt = k;
            row.poly_read = 2 * k;
            row.poly_write = 2 * q;
        }
        _ => panic!("phase {phase} out of range"),
    }
    row.peak_onchip = phase_peak(p, c, phase);
    row
}

/// Peak on-chip requirement of one phase in limbs.
pub fn phase_peak(p: &HeParams, c: &ParallelismConfig, phase: usize) -> u64 {
    let k = p.pq_limbs();
    let q = p.q_count as u64;
    let a = p.alpha as u64;
    let beta = p.beta as u64;
    let [m1, m2, m3, m4, m5, m6] = c.m.map(|x| x as u64);
    let [l1, l2, l3, l4, l5] = c.l.map(|x| x as u64);
    match phase {
        1 => 2 * q + (beta + 4) * l1 + (4 * beta + 6) * m1 * l1,
        2 => m2 * (2 * q + a + 2 * beta * l2) + 2 * l2,
        3 => 2 * l3 * ((beta + 1) * m4 + 2 * beta * m3 + 2 * m3 * m4),
        4 => 6 * m5 * l4 + 5 * l4,
        5 => m6 * k + (5 * beta * m6 + 2 * m6 + 6) * l5 + 2 * l5,
        6 => 2 * k,
        _ => panic!("phase {phase} out of range"),
    }
}

pub fn offchip_access(p: &HeParams, plan: &LtPlan, c: &ParallelismConfig) -> Result<PhaseTable> {
    c.validate(p, plan)?;
    Ok(PhaseTable {
        phases: std::array::from_fn(|i| phase_offchip(p, plan, c, i + 1)),
    })
}

pub fn peak_onchip(p: &HeParams, plan: &LtPlan, c: &ParallelismConfig) -> Result<[u64; 6]> {
    c.validate(p, plan)?;
    Ok(std::array::from_fn(|i| phase_peak(p, c, i + 1)))
}

/// The `(m, l)` entries each phase owns, as indices into `m` and `l`.
fn phase_knobs(phase: usize) -> (&'static [usize], &'static [usize]) {
    match phase {
        1 => (&[0], &[0]),
        2 => (&[1], &[1]),
        3 => (&[2, 3], &[2]),
        4 => (&[4], &[3]),
        5 => (&[5], &[4]),
        _ => (&[], &[]),
    }
}

/// Minimizes total off-chip limbs subject to every phase peak fitting in
/// `budget_bytes`. Phases own disjoint knobs, so each is searched on its own.
/// Among equal totals the lexicographically largest setting wins, so an
/// unconstrained search ends at maximal parallelism.
pub fn search_parallelism(
    p: &HeParams,
    plan: &LtPlan,
    budget_bytes: f64,
    packing: Packing,
    dp: usize,
) -> Result<ParallelismConfig> {
    let budget_limbs = (budget_bytes / packing.limb_bytes(p)).floor();
    let budget = if budget_limbs >= u64::MAX as f64 {
        u64::MAX
    } else {
        budget_limbs as u64
    };
    let mut cfg = ParallelismConfig::ones();
    cfg.dp = dp;
    cfg.validate(p, plan)?;
    if phase_peak(p, &cfg, 6) > budget {
        return Err(Error::Infeasible(budget_bytes as u64));
    }
    let bounds = ParallelismConfig::m_bounds(plan);
    let k = p.pq_limbs() as usize;
    for phase in 1..=5 {
        let (ms, ls) = phase_knobs(phase);
        let mut best: Option<(u64, Vec<usize>)> = None;
        // Odometer over this phase's knobs.
        let mut ranges: Vec<usize> = ms.iter().map(|&i| bounds[i]).collect();
        ranges.extend(ls.iter().map(|_| k));
        let mut idx = vec![1usize; ranges.len()];
        loop {
            let mut trial = cfg;
            for (j, &i) in ms.iter().enumerate() {
                trial.m[i] = idx[j];
            }
            for (j, &i) in ls.iter().enumerate() {
                trial.l[i] = idx[ms.len() + j];
            }
            if phase_peak(p, &trial, phase) <= budget {
                let cost = phase_offchip(p, plan, &trial, phase).offchip();
                let better = match &best {
                    None => true,
                    Some((c, v)) => cost < *c || (cost == *c && idx > *v),
                };
                if better {
                    best = Some((cost, idx.clone()));
                }
            }
            let mut d = 0;
            while d < idx.len() {
                if idx[d] < ranges[d] {
                    idx[d] += 1;
                    break;
                }
                idx[d] = 1;
                d += 1;
            }
            if d == idx.len() {
                break;
            }
        }
        let (_, v) = best.ok_or(Error::Infeasible(budget_bytes as u64))?;
        for (j, &i) in ms.iter().enumerate() {
            cfg.m[i] = v[j];
        }
        for (j, &i) in ls.iter().enumerate() {
            cfg.l[i] = v[ms.len() + j];
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_c_params() -> HeParams {
        NamedSet::SetC.params()
    }

    #[test]
    fn named_sets_bind_to_rows() {
        let a = HeParams::named("set-a").unwrap();
        assert_eq!((a.ring_dim, a.q_count, a.alpha, a.beta, a.w), (1 << 13, 5, 5, 1, 54));
        let b = HeParams::named("SET-B").unwrap();
        assert_eq!((b.ring_dim, b.q_count, b.alpha, b.beta), (1 << 15, 16, 8, 2));
        let c = set_c_params();
        assert_eq!((c.ring_dim, c.q_count, c.alpha, c.beta, c.n), (1 << 16, 32, 12, 3, 1 << 15));
        assert!(HeParams::named("set-d").is_err());
        for s in NamedSet::ALL {
            let cfg = s.parallelism();
            cfg.validate(&s.params(), &s.plan()).unwrap();
        }
    }

    #[test]
    fn key_limbs_th_and_dh() {
        let p = set_c_params();
        let th = complexity(&p, &LtPlan::th_bsgs(16, 128, 16).unwrap(), Convention::Algorithm, Packing::BitPacked).unwrap();
        assert_eq!(th.switching_key_limbs, 20724);
        let dh = complexity(&p, &LtPlan::dh_bsgs(512, 64).unwrap(), Convention::Algorithm, Packing::BitPacked).unwrap();
        assert_eq!(dh.switching_key_limbs, 75768);
        let ratio = dh.switching_key_limbs as f64 / th.switching_key_limbs as f64;
        assert!((ratio - 3.656).abs() < 1e-3);
        // 17.08 and 62.43 GiB with bit-packed 54-bit residues.
        assert!((th.key_gib() - 17.08).abs() < 0.01, "{}", th.key_gib());
        assert!((dh.key_gib() - 62.43).abs() < 0.01, "{}", dh.key_gib());
    }

    #[test]
    fn table_convention_adds_one() {
        let p = set_c_params();
        let plan = LtPlan::th_bsgs(16, 128, 16).unwrap();
        let a = complexity(&p, &plan, Convention::Algorithm, Packing::BitPacked).unwrap();
        let t = complexity(&p, &plan, Convention::Table, Packing::BitPacked).unwrap();
        assert_eq!((a.decompose, a.moddown), (31, 32));
        assert_eq!((t.decompose, t.moddown), (32, 33));
    }

    #[test]
    fn cwise_terms_per_method() {
        let p = NamedSet::Toy.params();
        let (k, q, b) = (10, 5, 1);
        let d = complexity(&p, &LtPlan::diagonal(64).unwrap(), Convention::Algorithm, Packing::BitPacked).unwrap();
        assert_eq!(d.cwise_mult_limbs(), 2 * b * 63 * k + 2 * 64 * k);
        let s = complexity(&p, &LtPlan::bsgs(8, 8).unwrap(), Convention::Algorithm, Packing::BitPacked).unwrap();
        assert_eq!(s.cwise_mult_limbs(), 2 * b * 14 * k + 2 * 64 * q);
        assert_eq!((s.decompose, s.moddown), (14, 28));
        assert!(complexity(&p, &LtPlan::bsgs(8, 16).unwrap(), Convention::Algorithm, Packing::BitPacked).is_err());
    }

    #[test]
    fn factor_search() {
        let p = HeParams::new(1 << 13, 5, 5, 54, 1 << 12).unwrap();
        let th = search_factors(Method::ThBsgs, &p, Objective::MinKeys).unwrap();
        assert_eq!(th[0].factors(), &[16, 16, 16]);
        let bs = search_factors(Method::Bsgs, &p, Objective::MinKeys).unwrap();
        assert_eq!(bs[0].factors(), &[64, 64]);
        // (1, 2) and (2, 1) tie on keys; the smaller n1 is kept.
        let tiny = HeParams::new(64, 2, 1, 54, 2).unwrap();
        let dh = search_factors(Method::DhBsgs, &tiny, Objective::MinKeys).unwrap();
        assert_eq!(dh[0].factors(), &[1, 2]);
    }

    #[test]
    fn tradeoff_frontier() {
        let p = set_c_params();
        let pts = tradeoff_curve(&[Method::Bsgs, Method::DhBsgs, Method::ThBsgs], &p, Packing::BitPacked).unwrap();
        let of = |m| pts.iter().filter(move |t: &&TradeoffPoint| t.method == m);
        assert_eq!(of(Method::Bsgs).count(), 1);
        let dh_best = of(Method::DhBsgs).find(|t| t.best_tradeoff).unwrap();
        let th_best = of(Method::ThBsgs).find(|t| t.best_tradeoff).unwrap();
        assert_eq!(dh_best.factors, vec![512, 64]);
        assert_eq!(th_best.factors, vec![16, 128, 16]);
        assert!((best_tradeoff_ratio(&pts).unwrap() - 3.656).abs() < 0.01);
        assert_eq!(of(Method::ThBsgs).find(|t| t.min_memory).unwrap().factors, vec![32, 32, 32]);
        for d in of(Method::DhBsgs) {
            assert!(of(Method::ThBsgs).any(|t| t.key_limbs <= d.key_limbs && t.modmuls <= d.modmuls));
        }
    }

    #[test]
    fn table_iv_plug_ins() {
        let p = set_c_params();
        let plan = NamedSet::SetC.plan();
        let t = offchip_access(&p, &plan, &NamedSet::SetC.parallelism()).unwrap();
        assert_eq!(t.phases[5].poly_write, 64);
        // 2·(16-1)·3·(32+12)
        assert_eq!(t.phases[0].switching_key, 3960);
        assert_eq!(t.phases[5].peak_onchip, 2 * 44);
        let mut one = ParallelismConfig::ones();
        one.dp = 4;
        let toy = NamedSet::Toy.params();
        let peak = peak_onchip(&toy, &NamedSet::Toy.plan(), &one).unwrap();
        assert_eq!(peak[0], 2 * 5 + 5 + 10);
    }

    #[test]
    fn peaks_are_monotone() {
        let p = NamedSet::SetB.params();
        let base = NamedSet::SetB.parallelism();
        for phase in 1..=6 {
            let v0 = phase_peak(&p, &base, phase);
            for i in 0..6 {
                let mut c = base;
                c.m[i] += 1;
                assert!(phase_peak(&p, &c, phase) >= v0);
            }
            for i in 0..5 {
                let mut c = base;
                c.l[i] += 1;
                assert!(phase_peak(&p, &c, phase) >= v0);
            }
        }
    }

    #[test]
    fn config_validation() {
        let p = NamedSet::SetA.params();
        let plan = NamedSet::SetA.plan();
        let mut c = NamedSet::SetA.parallelism();
        c.m[2] = 64;
        assert!(matches!(offchip_access(&p, &plan, &c), Err(Error::ConfigOutOfRange(_))));
        let mut c = NamedSet::SetA.parallelism();
        c.l[0] = 11;
        assert!(c.validate(&p, &plan).is_err());
        assert!(ParallelismConfig::parse_list("1,2,3").is_err());
        let c = ParallelismConfig::parse_list("7,7,63,1,103,8,5,10,1,1,5").unwrap();
        assert_eq!(c.m, NamedSet::SetA.parallelism().m);
        assert_eq!(c.l, NamedSet::SetA.parallelism().l);
    }

    #[test]
    fn parallelism_search_limits() {
        let p = NamedSet::Toy.params();
        let plan = NamedSet::Toy.plan();
        let unlimited = search_parallelism(&p, &plan, f64::INFINITY, Packing::BitPacked, 4).unwrap();
        assert_eq!(unlimited.m, ParallelismConfig::m_bounds(&plan));
        assert_eq!(unlimited.l, [10; 5]);
        let floor = 2.0 * 10.0 * Packing::BitPacked.limb_bytes(&p);
        assert!(matches!(
            search_parallelism(&p, &plan, floor - 1.0, Packing::BitPacked, 4),
            Err(Error::Infeasible(_))
        ));
    }

    /// Joint exhaustive search over all knobs at a small shape.
    #[test]
    fn parallelism_search_matches_exhaustive() {
        let p = HeParams::new(1 << 8, 3, 2, 54, 32).unwrap();
        let plan = LtPlan::th_bsgs(2, 4, 4).unwrap();
        let lb = Packing::BitPacked.limb_bytes(&p);
        for budget in [30.0, 45.0, 80.0] {
            let got = search_parallelism(&p, &plan, budget * lb, Packing::BitPacked, 2).unwrap();
            let got_cost = offchip_access(&p, &plan, &got).unwrap().offchip_total();
            let bounds = ParallelismConfig::m_bounds(&plan);
            let mut best = u64::MAX;
            let k = 5;
            let mut c = ParallelismConfig::ones();
            c.dp = 2;
            for m in 0..bounds.iter().product::<usize>() {
                let mut r = m;
                for (i, &b) in bounds.iter().enumerate() {
                    c.m[i] = r % b + 1;
                    r /= b;
                }
                for l in 0..k * k * k * k * k {
                    let mut r = l;
                    for i in 0..5 {
                        c.l[i] = r % k + 1;
                        r /= k;
                    }
                    let t = offchip_access(&p, &plan, &c).unwrap();
                    if t.peak_onchip() <= budget as u64 {
                        best = best.min(t.offchip_total());
                    }
                }
            }
            assert_eq!(got_cost, best, "budget {budget}");
        }
    }
}
