//! Banked-memory automorphism in the NTT domain.
//!
//! An NTT-domain polynomial is stored across `dp` banks: bank `f`, address
//! `n_f` holds the natural-order evaluation `A_idx` with
//! `idx = bitrev(f·N/dp + n_f, log N)`. For the usual bit-reversed NTT output
//! this is simply the storage array cut into `dp` contiguous blocks.
//!
//! A coefficient at natural index `idx` moves to
//! `idx' = ((g_r(2·idx+1) mod 2N) - 1)/2`. The split
//! `idx = i_f·N/dp + j_f·dp + k_f` lets the bank of `idx'` depend on `k_f`
//! alone, so every step of the schedule touches each bank exactly once.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ring::{bitrev, Poly, RotationIndex};

/// `dp` memory banks holding one NTT-domain polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankLayout {
    n: usize,
    dp: usize,
    banks: Vec<Vec<u64>>,
}

fn log2(x: usize) -> u32 {
    x.trailing_zeros()
}

impl BankLayout {
    /// An empty layout; checks that `dp` is a power of two with `dp² ≤ N`.
    pub fn new(n: usize, dp: usize) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidRingDim(n));
        }
        if dp == 0 || !dp.is_power_of_two() || dp * dp > n {
            return Err(Error::OutOfRange(format!(
                "dp = {dp} must be a power of two with dp^2 <= N = {n}"
            )));
        }
        Ok(BankLayout {
            n,
            dp,
            banks: vec![vec![0; n / dp]; dp],
        })
    }

    /// Splits the bit-reversed storage array of an NTT-domain polynomial.
    pub fn from_ntt_storage(values: &[u64], dp: usize) -> Result<Self> {
        let mut layout = Self::new(values.len(), dp)?;
        let per = layout.bank_len();
        for (f, bank) in layout.banks.iter_mut().enumerate() {
            bank.copy_from_slice(&values[f * per..(f + 1) * per]);
        }
        Ok(layout)
    }

    pub fn from_poly(p: &Poly, dp: usize) -> Result<Self> {
        if p.domain() != crate::ring::Domain::Ntt {
            return Err(Error::DomainMismatch {
                expected: crate::ring::Domain::Ntt,
                found: p.domain(),
            });
        }
        Self::from_ntt_storage(p.coeffs(), dp)
    }

    /// Concatenates the banks back into storage order.
    pub fn flatten(&self) -> Vec<u64> {
        self.banks.concat()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dp(&self) -> usize {
        self.dp
    }

    pub fn bank_len(&self) -> usize {
        self.n / self.dp
    }

    pub fn banks(&self) -> &[Vec<u64>] {
        &self.banks
    }

    pub fn get(&self, f: usize, n_f: usize) -> u64 {
        self.banks[f][n_f]
    }

    fn check(&self, f: usize, n_f: usize) -> Result<()> {
        if f >= self.dp || n_f >= self.bank_len() {
            return Err(Error::OutOfRange(format!(
                "position ({f}, {n_f}) outside {} banks of {}",
                self.dp,
                self.bank_len()
            )));
        }
        Ok(())
    }

    /// Natural evaluation index stored at bank `f`, address `n_f`.
    pub fn source_index(&self, f: usize, n_f: usize) -> Result<usize> {
        self.check(f, n_f)?;
        Ok(bitrev(f * self.bank_len() + n_f, log2(self.n)))
    }

    /// `(i_f, j_f, k_f)` with `idx = i_f·N/dp + j_f·dp + k_f`.
    pub fn split_index(&self, idx: usize) -> (usize, usize, usize) {
        let per = self.bank_len();
        (idx / per, (idx % per) / self.dp, idx % self.dp)
    }

    /// Bank and address holding natural index `idx`.
    pub fn position_of(&self, idx: usize) -> (usize, usize) {
        let p = bitrev(idx, log2(self.n));
        (p / self.bank_len(), p % self.bank_len())
    }

    /// Every quantity of the index decomposition for one source position.
    pub fn target(&self, f: usize, n_f: usize, r: usize) -> Result<PermTarget> {
        let idx = self.source_index(f, n_f)?;
        let (i_f, j_f, k_f) = self.split_index(idx);
        let rot = RotationIndex::new(r, self.n);
        let g = rot.galois() as usize;
        let per = self.bank_len();
        let dp = self.dp;
        // g·k_f + (g-1)/2 = t_f·N/dp + u_f·dp + v_f
        let head = g * k_f + (g - 1) / 2;
        let t_f = head / per;
        let u_f = (head % per) / dp;
        let v_f = head % dp;
        // Both bracketed terms are reduced separately, so the middle one can
        // carry into the top digit; the outer reduction mod N absorbs it.
        let top = ((g * i_f + t_f) % dp) * per;
        let mid = ((g * j_f + u_f) % per) * dp;
        let idx_new = (top + mid + v_f) % self.n;
        let (i_new, j_new, k_new) = self.split_index(idx_new);
        let (f_new, n_new) = self.position_of(idx_new);
        Ok(PermTarget {
            f,
            n_f,
            r: rot.offset(),
            galois: g as u64,
            idx,
            i_f,
            j_f,
            k_f,
            t_f,
            u_f,
            v_f,
            idx_new,
            i_new,
            j_new,
            k_new,
            f_new,
            n_new,
        })
    }

    /// The same target by direct index arithmetic, without the split.
    pub fn target_naive(&self, f: usize, n_f: usize, r: usize) -> Result<(usize, usize)> {
        let idx = self.source_index(f, n_f)?;
        let rot = RotationIndex::new(r, self.n);
        Ok(self.position_of(rot.eval_source_index(idx)))
    }

    /// Bank map `f -> f'` for rotation `r`; independent of the address.
    pub fn bank_map(&self, r: usize) -> Vec<usize> {
        let g = RotationIndex::new(r, self.n).galois() as usize;
        let bits = log2(self.dp);
        (0..self.dp)
            .map(|f| {
                let k = bitrev(f, bits);
                bitrev((g * k + (g - 1) / 2) % self.dp, bits)
            })
            .collect()
    }
}

/// Decomposition of one source position and its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PermTarget {
    pub f: usize,
    pub n_f: usize,
    pub r: usize,
    pub galois: u64,
    pub idx: usize,
    pub i_f: usize,
    pub j_f: usize,
    pub k_f: usize,
    pub t_f: usize,
    pub u_f: usize,
    pub v_f: usize,
    pub idx_new: usize,
    pub i_new: usize,
    pub j_new: usize,
    pub k_new: usize,
    pub f_new: usize,
    pub n_new: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Move {
    pub src_bank: usize,
    pub src_addr: usize,
    pub dst_bank: usize,
    pub dst_addr: usize,
}

/// One read per bank; each value is written back one step later, after the
/// next step's reads, so at most `dp` values are in flight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MoveStep {
    /// Indexed by lane; lane `l` reads from a distinct bank.
    pub moves: Vec<Move>,
}

/// In-place schedule realizing `automorphism_eval` by rotation `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub n: usize,
    pub dp: usize,
    pub r: usize,
    pub steps: Vec<MoveStep>,
}

impl BankLayout {
    /// The scatter realizing `automorphism_eval(r)`. `automorphism_eval`
    /// gathers with `g_r`, so the scatter walks the inverse rotation.
    fn scatter_target(&self, f: usize, n_f: usize, r: usize) -> (usize, usize) {
        let inv = RotationIndex::new(r, self.n).inverse().offset();
        let t = self
            .target(f, n_f, inv)
            .expect("positions come from the layout");
        (t.f_new, t.n_new)
    }

    /// Cycle-following schedule. Each lane follows its chain of
    /// destinations; when the next position was already read, the lane writes
    /// there and restarts at the lowest unread address of that bank.
    pub fn schedule(&self, r: usize) -> Schedule {
        let per = self.bank_len();
        let dp = self.dp;
        let mut read = vec![vec![false; per]; dp];
        let mut next_free = vec![0usize; dp];
        let mut lowest_unread = |read: &Vec<Vec<bool>>, bank: usize| -> usize {
            while read[bank][next_free[bank]] {
                next_free[bank] += 1;
            }
            next_free[bank]
        };
        let mut steps = Vec::with_capacity(per);
        // Lane l starts in bank l.
        let mut pos: Vec<(usize, usize)> = (0..dp).map(|f| (f, 0)).collect();
        for step in 0..per {
            if step > 0 {
                for p in pos.iter_mut() {
                    let (b, a) = *p;
                    let (nb, na) = self.scatter_target(b, a, r);
                    *p = if read[nb][na] {
                        (nb, lowest_unread(&read, nb))
                    } else {
                        (nb, na)
                    };
                }
            }
            let mut moves = Vec::with_capacity(dp);
            for &(b, a) in &pos {
                read[b][a] = true;
                let (db, da) = self.scatter_target(b, a, r);
                moves.push(Move {
                    src_bank: b,
                    src_addr: a,
                    dst_bank: db,
                    dst_addr: da,
                });
            }
            steps.push(MoveStep { moves });
        }
        Schedule {
            n: self.n,
            dp,
            r: RotationIndex::new(r, self.n).offset(),
            steps,
        }
    }

    /// Executes a schedule in place with a one-step write delay.
    pub fn apply(&mut self, schedule: &Schedule) -> Result<ApplyStats> {
        if schedule.n != self.n || schedule.dp != self.dp {
            return Err(Error::DimensionMismatch(schedule.n, self.n));
        }
        let per = self.bank_len();
        let mut reads = vec![vec![0u32; per]; self.dp];
        let mut writes = vec![vec![0u32; per]; self.dp];
        let mut in_flight: Vec<(Move, u64)> = Vec::new();
        let mut max_in_flight = 0;
        for step in &schedule.steps {
            let fresh: Vec<(Move, u64)> = step
                .moves
                .iter()
                .map(|m| {
                    reads[m.src_bank][m.src_addr] += 1;
                    (*m, self.banks[m.src_bank][m.src_addr])
                })
                .collect();
            for (m, v) in in_flight.drain(..) {
                if reads[m.dst_bank][m.dst_addr] == 0 {
                    return Err(Error::OutOfRange(format!(
                        "write to unread ({}, {})",
                        m.dst_bank, m.dst_addr
                    )));
                }
                writes[m.dst_bank][m.dst_addr] += 1;
                self.banks[m.dst_bank][m.dst_addr] = v;
            }
            in_flight = fresh;
            max_in_flight = max_in_flight.max(in_flight.len());
        }
        for (m, v) in in_flight {
            writes[m.dst_bank][m.dst_addr] += 1;
            self.banks[m.dst_bank][m.dst_addr] = v;
        }
        let once = |c: &Vec<Vec<u32>>| c.iter().flatten().all(|&x| x == 1);
        Ok(ApplyStats {
            steps: schedule.steps.len(),
            max_in_flight,
            every_read_once: once(&reads),
            every_write_once: once(&writes),
        })
    }

    /// Per step and output bank, the lane whose value is routed there.
    pub fn mux_controls(&self, schedule: &Schedule) -> Vec<Vec<usize>> {
        schedule
            .steps
            .iter()
            .map(|s| {
                let mut sel = vec![usize::MAX; self.dp];
                for (lane, m) in s.moves.iter().enumerate() {
                    sel[m.dst_bank] = lane;
                }
                sel
            })
            .collect()
    }

    /// Executes the schedule through `dp`-to-1 selectors: output bank `b`
    /// takes lane `sel[b]` of the previous step's reads.
    pub fn apply_with_mux(&mut self, schedule: &Schedule, controls: &[Vec<usize>]) -> Result<()> {
        if controls.len() != schedule.steps.len() {
            return Err(Error::DimensionMismatch(controls.len(), schedule.steps.len()));
        }
        let mut pending: Option<(usize, Vec<u64>)> = None;
        let retire = |banks: &mut Vec<Vec<u64>>, k: usize, vals: Vec<u64>| {
            for (b, &lane) in controls[k].iter().enumerate() {
                let m = schedule.steps[k].moves[lane];
                debug_assert_eq!(m.dst_bank, b);
                banks[b][m.dst_addr] = vals[lane];
            }
        };
        for (k, step) in schedule.steps.iter().enumerate() {
            let vals: Vec<u64> = step
                .moves
                .iter()
                .map(|m| self.banks[m.src_bank][m.src_addr])
                .collect();
            if let Some((pk, pv)) = pending.take() {
                retire(&mut self.banks, pk, pv);
            }
            pending = Some((k, vals));
        }
        if let Some((pk, pv)) = pending {
            retire(&mut self.banks, pk, pv);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ApplyStats {
    pub steps: usize,
    pub max_in_flight: usize,
    pub every_read_once: bool,
    pub every_write_once: bool,
}

impl fmt::Display for Schedule {
    /// One line per move: `step, src_bank, src_addr, dst_bank, dst_addr`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "step,src_bank,src_addr,dst_bank,dst_addr")?;
        for (k, s) in self.steps.iter().enumerate() {
            for m in &s.moves {
                writeln!(
                    f,
                    "{k},{},{},{},{}",
                    m.src_bank, m.src_addr, m.dst_bank, m.dst_addr
                )?;
            }
        }
        Ok(())
    }
}
