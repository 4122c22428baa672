use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::ckks::{CkksContext, Plaintext};
use crate::error::{Error, Result};
use crate::rns::BasisView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Diagonal,
    Bsgs,
    DhBsgs,
    ThBsgs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Diagonal, Method::Bsgs, Method::DhBsgs, Method::ThBsgs];

    pub fn name(self) -> &'static str {
        match self {
            Method::Diagonal => "diagonal",
            Method::Bsgs => "bsgs",
            Method::DhBsgs => "dh-bsgs",
            Method::ThBsgs => "th-bsgs",
        }
    }

    /// Number of decomposition factors the method takes.
    pub fn arity(self) -> usize {
        match self {
            Method::Diagonal => 1,
            Method::Bsgs | Method::DhBsgs => 2,
            Method::ThBsgs => 3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::BadFactors(format!("unknown method {s:?}")))
    }
}

/// A method together with its factorization of `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LtPlan {
    method: Method,
    n: usize,
    factors: Vec<usize>,
}

impl LtPlan {
    pub fn new(method: Method, n: usize, factors: &[usize]) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::BadFactors(format!("n = {n} is not a power of two")));
        }
        let factors = if method == Method::Diagonal && factors.is_empty() {
            vec![n]
        } else {
            factors.to_vec()
        };
        if factors.len() != method.arity() {
            return Err(Error::BadFactors(format!(
                "{method} takes {} factors, got {}",
                method.arity(),
                factors.len()
            )));
        }
        if factors.iter().any(|&f| f == 0) {
            return Err(Error::BadFactors("factors must be positive".into()));
        }
        let prod = factors
            .iter()
            .try_fold(1usize, |acc, &f| acc.checked_mul(f))
            .ok_or_else(|| Error::BadFactors("factor product overflows".into()))?;
        if prod != n {
            return Err(Error::BadFactors(format!(
                "factors {factors:?} multiply to {prod}, not {n}"
            )));
        }
        Ok(LtPlan { method, n, factors })
    }

    pub fn diagonal(n: usize) -> Result<Self> {
        Self::new(Method::Diagonal, n, &[n])
    }

    pub fn bsgs(n1: usize, n2: usize) -> Result<Self> {
        Self::new(Method::Bsgs, n1 * n2, &[n1, n2])
    }

    pub fn dh_bsgs(n1: usize, n2: usize) -> Result<Self> {
        Self::new(Method::DhBsgs, n1 * n2, &[n1, n2])
    }

    pub fn th_bsgs(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        Self::new(Method::ThBsgs, n1 * n2 * n3, &[n1, n2, n3])
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    /// Diagonals sharing one outer pre-rotation: index `m` is pre-rotated by
    /// `-(m / block)·block`.
    pub fn prerotation_block(&self) -> usize {
        match self.method {
            Method::Diagonal => self.n,
            Method::Bsgs | Method::DhBsgs => self.factors[0],
            Method::ThBsgs => self.factors[0] * self.factors[1],
        }
    }

    /// Distinct rotation offsets the method needs keys for.
    pub fn rotation_offsets(&self) -> BTreeSet<usize> {
        let f = &self.factors;
        match self.method {
            Method::Diagonal => (1..self.n).collect(),
            Method::Bsgs | Method::DhBsgs => (1..f[0]).chain((1..f[1]).map(|j| f[0] * j)).collect(),
            Method::ThBsgs => (1..f[0])
                .chain((1..f[1]).map(|j| f[0] * j))
                .chain((1..f[2]).map(|k| f[0] * f[1] * k))
                .collect(),
        }
    }

    /// BSGS uses ordinary rotations; the others use hoisted keys.
    pub fn uses_hoisted_keys(&self) -> bool {
        self.method != Method::Bsgs
    }
}

impl fmt::Display for LtPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fs: Vec<String> = self.factors.iter().map(usize::to_string).collect();
        write!(f, "{}({})", self.method, fs.join(","))
    }
}

/// The `n` generalized diagonals of an `n×n` matrix, each tiled across all slots:
/// slot `t` of diagonal `i` holds `F[t mod n][(t + i) mod n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagMatrix {
    n: usize,
    slots: usize,
    diagonals: Vec<Vec<f64>>,
}

impl DiagMatrix {
    /// Zero-pads `F` to the next power of two `n ≥ rows, cols`.
    pub fn diagonalize(f: &[Vec<f64>], slots: usize) -> Result<Self> {
        let rows = f.len();
        let cols = f.iter().map(Vec::len).max().unwrap_or(0);
        let n = rows.max(cols).max(1).next_power_of_two();
        if n > slots {
            return Err(Error::DimensionTooLarge { n, slots });
        }
        let entry = |r: usize, c: usize| f.get(r).and_then(|row| row.get(c)).copied().unwrap_or(0.0);
        let diagonals = (0..n)
            .map(|i| (0..slots).map(|t| entry(t % n, (t + i) % n)).collect())
            .collect();
        Ok(DiagMatrix {
            n,
            slots,
            diagonals,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self, i: usize) -> &[f64] {
        &self.diagonals[i]
    }

    /// Rebuilds the `n×n` matrix from the first tile of each diagonal.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, d) in self.diagonals.iter().enumerate() {
            for t in 0..self.n {
                m[t][(t + i) % self.n] = d[t];
            }
        }
        m
    }

    /// Encodes every diagonal over `PQ_L` at scale `q_L` and applies the plan's pre-rotation
    /// `φ_{-s}` as an exact slot permutation of the encoded polynomial.
    pub fn encode(&self, ctx: &CkksContext, plan: &LtPlan) -> Result<Vec<Plaintext>> {
        if plan.n() != self.n {
            return Err(Error::PlanMismatch(format!(
                "plan is for n = {}, matrix has n = {}",
                plan.n(),
                self.n
            )));
        }
        if self.slots != ctx.slots() {
            return Err(Error::DimensionMismatch(self.slots, ctx.slots()));
        }
        let block = plan.prerotation_block();
        let view = BasisView::pq(ctx.max_level());
        // Scale q_L, so the final rescale returns the ciphertext to its
        // input scale.
        let scale = ctx.basis().q_moduli()[ctx.max_level()].value() as f64;
        self.diagonals
            .iter()
            .enumerate()
            .map(|(m, d)| {
                let mut pt = ctx.encode_at(d, scale, view)?;
                let shift = (m / block) * block;
                if shift % ctx.slots() != 0 {
                    let rot = ctx.rotation(shift).inverse();
                    pt.poly = pt.poly.automorphism(&rot)?;
                }
                Ok(pt)
            })
            .collect()
    }
}

/// Plain `F·v` over the reals.
pub fn mat_vec(f: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    f.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Repeats `v` (length dividing `slots`) to fill every slot.
pub fn tile(v: &[f64], slots: usize) -> Vec<f64> {
    (0..slots).map(|t| v[t % v.len()]).collect()
}
