//! `HLT1` binary container for ciphertexts, plaintexts and switching keys.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "HLT1"
//! header_len u32
//! header:
//!   kind          u8   1 = ciphertext, 2 = switching key, 3 = plaintext
//!   domain        u8   0 = coefficient, 1 = NTT
//!   log_n         u8
//!   with_p        u8   0 or 1
//!   level         u32
//!   scale         f64
//!   hoist_offset  u32
//!   moduli_count  u32
//!   moduli        moduli_count × u64
//!   poly_count    u32
//! limbs:     poly_count × moduli_count × N × u64
//! ```

use crate::error::{Error, Result};
use crate::ring::{Domain, Poly};
use crate::rns::{BasisView, RnsPoly};

use super::{Ciphertext, CkksContext, Plaintext, SwitchingKey};

pub const MAGIC: &[u8; 4] = b"HLT1";
/// Upper bound on `log_n` accepted by the decoder.
pub const MAX_LOG_N: u8 = 17;
const MAX_MODULI: u32 = 256;
const MAX_POLYS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Ciphertext = 1,
    SwitchingKey = 2,
    Plaintext = 3,
}

impl Kind {
    fn from_u8(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Kind::Ciphertext),
            2 => Ok(Kind::SwitchingKey),
            3 => Ok(Kind::Plaintext),
            _ => Err(Error::Decode(format!("unknown object kind {b}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Ciphertext => "ciphertext",
            Kind::SwitchingKey => "switching-key",
            Kind::Plaintext => "plaintext",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub kind: Kind,
    pub domain: Domain,
    pub log_n: u8,
    pub with_p: bool,
    pub level: u32,
    pub scale: f64,
    pub hoist_offset: u32,
    pub moduli: Vec<u64>,
    pub poly_count: u32,
}

/// A decoded container before it is bound to a context.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Header,
    /// `polys[p][limb][coeff]`.
    pub polys: Vec<Vec<Vec<u64>>>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Decode(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let h = &self.header;
        let mut head = Vec::new();
        head.push(h.kind as u8);
        head.push(match h.domain {
            Domain::Coefficient => 0,
            Domain::Ntt => 1,
        });
        head.push(h.log_n);
        head.push(h.with_p as u8);
        head.extend_from_slice(&h.level.to_le_bytes());
        head.extend_from_slice(&h.scale.to_le_bytes());
        head.extend_from_slice(&h.hoist_offset.to_le_bytes());
        head.extend_from_slice(&(h.moduli.len() as u32).to_le_bytes());
        for q in &h.moduli {
            head.extend_from_slice(&q.to_le_bytes());
        }
        head.extend_from_slice(&h.poly_count.to_le_bytes());

        let mut out = Vec::with_capacity(8 + head.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(head.len() as u32).to_le_bytes());
        out.extend_from_slice(&head);
        for poly in &self.polys {
            for limb in poly {
                for c in limb {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses and bounds-checks a container. Allocation is bounded by the
    /// input length.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Decode("bad magic".into()));
        }
        let header_len = r.u32()? as usize;
        let head_bytes = r.take(header_len)?;
        let mut h = Reader {
            buf: head_bytes,
            pos: 0,
        };
        let kind = Kind::from_u8(h.u8()?)?;
        let domain = match h.u8()? {
            0 => Domain::Coefficient,
            1 => Domain::Ntt,
            d => return Err(Error::Decode(format!("unknown domain {d}"))),
        };
        let log_n = h.u8()?;
        if !(2..=MAX_LOG_N).contains(&log_n) {
            return Err(Error::Decode(format!("log_n {log_n} out of range")));
        }
        let with_p = match h.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Decode(format!("bad with_p flag {b}"))),
        };
        let level = h.u32()?;
        let scale = f64::from_bits(h.u64()?);
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::Decode(format!("bad scale {scale}")));
        }
        let hoist_offset = h.u32()?;
        let moduli_count = h.u32()?;
        if moduli_count == 0 || moduli_count > MAX_MODULI {
            return Err(Error::Decode(format!("moduli count {moduli_count}")));
        }
        let mut moduli = Vec::with_capacity(moduli_count as usize);
        for _ in 0..moduli_count {
            let q = h.u64()?;
            if q < 2 {
                return Err(Error::Decode(format!("modulus {q}")));
            }
            moduli.push(q);
        }
        let poly_count = h.u32()?;
        if poly_count == 0 || poly_count > MAX_POLYS {
            return Err(Error::Decode(format!("poly count {poly_count}")));
        }
        if h.pos != head_bytes.len() {
            return Err(Error::Decode("trailing header bytes".into()));
        }
        if (level as usize) >= moduli.len() {
            return Err(Error::Decode(format!(
                "level {level} needs more than {} moduli",
                moduli.len()
            )));
        }
        let n = 1usize << log_n;
        let words = (poly_count as usize)
            .checked_mul(moduli.len())
            .and_then(|x| x.checked_mul(n))
            .ok_or_else(|| Error::Decode("size overflow".into()))?;
        let remaining = bytes.len() - r.pos;
        if remaining != words * 8 {
            return Err(Error::Decode(format!(
                "expected {} payload bytes, found {remaining}",
                words * 8
            )));
        }
        let mut polys = Vec::with_capacity(poly_count as usize);
        for _ in 0..poly_count {
            let mut limbs = Vec::with_capacity(moduli.len());
            for &q in &moduli {
                let mut limb = Vec::with_capacity(n);
                for _ in 0..n {
                    let c = r.u64()?;
                    if c >= q {
                        return Err(Error::Decode(format!("residue {c} >= modulus {q}")));
                    }
                    limb.push(c);
                }
                limbs.push(limb);
            }
            polys.push(limbs);
        }
        Ok(Container {
            header: Header {
                kind,
                domain,
                log_n,
                with_p,
                level,
                scale,
                hoist_offset,
                moduli,
                poly_count,
            },
            polys,
        })
    }
}

fn pack(polys: &[&RnsPoly]) -> Vec<Vec<Vec<u64>>> {
    polys
        .iter()
        .map(|p| p.limbs().iter().map(|l| l.coeffs().to_vec()).collect())
        .collect()
}

fn header(ctx: &CkksContext, kind: Kind, p: &RnsPoly, scale: f64, hoist: usize, count: usize) -> Header {
    Header {
        kind,
        domain: p.domain(),
        log_n: ctx.params().log_n as u8,
        with_p: p.view().with_p,
        level: p.level() as u32,
        scale,
        hoist_offset: hoist as u32,
        moduli: p.limbs().iter().map(Poly::q).collect(),
        poly_count: count as u32,
    }
}

impl CkksContext {
    pub fn serialize_ciphertext(&self, ct: &Ciphertext) -> Vec<u8> {
        Container {
            header: header(self, Kind::Ciphertext, &ct.c0, ct.scale, 0, 2),
            polys: pack(&[&ct.c0, &ct.c1]),
        }
        .encode()
    }

    pub fn serialize_plaintext(&self, pt: &Plaintext) -> Vec<u8> {
        Container {
            header: header(self, Kind::Plaintext, &pt.poly, pt.scale, 0, 1),
            polys: pack(&[&pt.poly]),
        }
        .encode()
    }

    pub fn serialize_switching_key(&self, key: &SwitchingKey) -> Vec<u8> {
        let polys: Vec<&RnsPoly> = key.digits.iter().flat_map(|(a, b)| [a, b]).collect();
        Container {
            header: header(
                self,
                Kind::SwitchingKey,
                polys[0],
                1.0,
                key.hoist_offset,
                polys.len(),
            ),
            polys: pack(&polys),
        }
        .encode()
    }

    /// Binds decoded limbs to this context, checking the modulus chain.
    fn bind(&self, c: &Container, kind: Kind) -> Result<Vec<RnsPoly>> {
        let h = &c.header;
        if h.kind != kind {
            return Err(Error::Decode(format!(
                "expected a {}, found a {}",
                kind.name(),
                h.kind.name()
            )));
        }
        if u32::from(h.log_n) != self.params().log_n {
            return Err(Error::Decode(format!(
                "ring dimension 2^{} does not match context 2^{}",
                h.log_n,
                self.params().log_n
            )));
        }
        let level = h.level as usize;
        if level > self.max_level() {
            return Err(Error::Decode(format!("level {level} above context maximum")));
        }
        let view = if h.with_p {
            BasisView::pq(level)
        } else {
            BasisView::q(level)
        };
        let want: Vec<u64> = self
            .basis()
            .indices(view)
            .into_iter()
            .map(|i| self.basis().ring(i).q())
            .collect();
        if want != h.moduli {
            return Err(Error::Decode("modulus chain does not match context".into()));
        }
        c.polys
            .iter()
            .map(|limbs| {
                let polys = limbs
                    .iter()
                    .zip(self.basis().indices(view))
                    .map(|(l, i)| Poly::from_residues(self.basis().ring(i), l.clone(), h.domain))
                    .collect::<Result<Vec<_>>>()?;
                self.basis().from_limbs(polys, view)
            })
            .collect()
    }

    pub fn deserialize_ciphertext(&self, bytes: &[u8]) -> Result<Ciphertext> {
        let c = Container::decode(bytes)?;
        let mut polys = self.bind(&c, Kind::Ciphertext)?;
        if polys.len() != 2 {
            return Err(Error::Decode(format!("ciphertext with {} polys", polys.len())));
        }
        let c1 = polys.pop().expect("two polys");
        let c0 = polys.pop().expect("two polys");
        Ok(Ciphertext {
            c0,
            c1,
            scale: c.header.scale,
        })
    }

    pub fn deserialize_plaintext(&self, bytes: &[u8]) -> Result<Plaintext> {
        let c = Container::decode(bytes)?;
        let mut polys = self.bind(&c, Kind::Plaintext)?;
        if polys.len() != 1 {
            return Err(Error::Decode(format!("plaintext with {} polys", polys.len())));
        }
        Ok(Plaintext {
            poly: polys.pop().expect("one poly"),
            scale: c.header.scale,
        })
    }

    pub fn deserialize_switching_key(&self, bytes: &[u8]) -> Result<SwitchingKey> {
        let c = Container::decode(bytes)?;
        let polys = self.bind(&c, Kind::SwitchingKey)?;
        if polys.len() % 2 != 0 || polys.len() / 2 != self.basis().beta() {
            return Err(Error::Decode(format!("switching key with {} polys", polys.len())));
        }
        let mut it = polys.into_iter();
        let mut digits = Vec::new();
        while let (Some(a), Some(b)) = (it.next(), it.next()) {
            digits.push((a, b));
        }
        Ok(SwitchingKey {
            digits,
            hoist_offset: c.header.hoist_offset as usize,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::CkksParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn small_ctx() -> CkksContext {
        CkksContext::new(CkksParams {
            log_n: 5,
            q_count: 3,
            alpha: 2,
            bits: 30,
            scale: 2f64.powi(20),
            sigma: 3.2,
        })
        .unwrap()
    }

    #[test]
    fn ciphertext_roundtrip() {
        let ctx = small_ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (sk, pk) = ctx.keygen(&mut rng);
        let pt = ctx.encode(&vec![0.25; ctx.slots()]).unwrap();
        let ct = ctx.encrypt(&pt, &pk, &mut rng).unwrap();
        let bytes = ctx.serialize_ciphertext(&ct);
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(ctx.deserialize_ciphertext(&bytes).unwrap(), ct);
        let ptb = ctx.serialize_plaintext(&pt);
        assert_eq!(ctx.deserialize_plaintext(&ptb).unwrap(), pt);
        let key = ctx.rotation_keygen(&sk, 3, true, &mut rng).unwrap();
        let kb = ctx.serialize_switching_key(&key);
        assert_eq!(ctx.deserialize_switching_key(&kb).unwrap(), key);
        // Kind confusion is rejected.
        assert!(ctx.deserialize_plaintext(&bytes).is_err());
    }

    #[test]
    fn corrupted_inputs_rejected() {
        let ctx = small_ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (_, pk) = ctx.keygen(&mut rng);
        let ct = ctx
            .encrypt(&ctx.encode(&vec![0.5; ctx.slots()]).unwrap(), &pk, &mut rng)
            .unwrap();
        let bytes = ctx.serialize_ciphertext(&ct);
        for cut in [0, 3, 7, 20, bytes.len() - 1] {
            assert!(Container::decode(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Container::decode(&bad).is_err());
        // Residue above its modulus.
        let mut bad = bytes.clone();
        let last = bad.len() - 8;
        bad[last..].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(Container::decode(&bad).is_err());
        // Foreign modulus chain.
        let other = CkksContext::new(CkksParams {
            bits: 31,
            ..ctx.params().clone()
        })
        .unwrap();
        assert!(other.deserialize_ciphertext(&bytes).is_err());
    }
}
