//! Voronoi constellations `Λ_f ∩ V(pΓ)` over Construction-A lattices.
//!
//! A message `m = (u, s)` with `u ∈ F_p^k` and `0 ≤ s_i < t_{i,i}` selects the
//! coset leader `x' = c + ps`, where `c` is the systematic codeword of `u`.
//! Encoding folds `x'` into the Voronoi region of `Λ = pΓ`; demapping inverts
//! this with one backward pass over the columns of `Γ`'s generator.

use std::fmt;

use num_bigint::BigUint;
use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{mod_p, FieldVec, Prime};
use crate::lattice::{DirectSumQuantizer, Searcher, TriangularGen};
use crate::ldpc::ParityCheck;
use crate::leech::ShapingLattice;

/// An element of `F_p^k × S`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    pub u: FieldVec,
    pub s: Vec<i64>,
}

impl Message {
    pub fn new(u: FieldVec, s: Vec<i64>) -> Self {
        Message { u, s }
    }

    /// The all-zero message.
    pub fn zero(code: &VoronoiCode) -> Self {
        Message {
            u: FieldVec::zeros(code.k(), code.p()),
            s: vec![0; code.n()],
        }
    }

    /// Uniform message: every symbol of `u` and every `s_i` independently.
    pub fn random<R: Rng + ?Sized>(code: &VoronoiCode, rng: &mut R) -> Self {
        let p = code.p().get();
        let u = (0..code.k()).map(|_| rng.random_range(0..p)).collect();
        let s = code.s_bounds().iter().map(|&t| rng.random_range(0..t)).collect();
        Message {
            u: FieldVec::from_raw(u, code.p()),
            s,
        }
    }

    /// Checks lengths, the field of `u`, and `0 ≤ s_i < t_{i,i}`.
    pub fn validate(&self, code: &VoronoiCode) -> Result<()> {
        if self.u.p() != code.p() {
            return Err(Error::InvalidMessage(format!(
                "u is over F_{}, code over F_{}",
                self.u.p(),
                code.p()
            )));
        }
        if self.u.len() != code.k() {
            return Err(Error::LengthMismatch {
                expected: code.k(),
                got: self.u.len(),
            });
        }
        if self.s.len() != code.n() {
            return Err(Error::LengthMismatch {
                expected: code.n(),
                got: self.s.len(),
            });
        }
        for (i, (&s, &t)) in self.s.iter().zip(code.s_bounds()).enumerate() {
            if !(0..t).contains(&s) {
                return Err(Error::InvalidMessage(format!("s[{i}] = {s} outside [0, {t})")));
            }
        }
        Ok(())
    }

    /// Parses `u_1 ... u_k | s_1 ... s_n`.
    pub fn parse(line: &str, p: Prime) -> Result<Self> {
        let (u_part, s_part) = line
            .split_once('|')
            .ok_or_else(|| Error::InvalidMessage("missing '|' separator".into()))?;
        let bad = |t: &str| Error::InvalidMessage(format!("bad token {t:?}"));
        let u = u_part
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|_| bad(t)))
            .collect::<Result<Vec<_>>>()?;
        let s = s_part
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|_| bad(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Message {
            u: FieldVec::new(u, p)?,
            s,
        })
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for u in self.u.as_slice() {
            write!(f, "{u} ")?;
        }
        write!(f, "|")?;
        for s in &self.s {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

/// A Voronoi constellation: `Λ_f = C + pZ^n` shaped by `Λ = pΓ`.
#[derive(Clone, Debug)]
pub struct VoronoiCode {
    h: ParityCheck,
    gamma: TriangularGen,
    /// Nearest-point search for `pΓ`, split into independent blocks.
    coarse: DirectSumQuantizer,
}

impl VoronoiCode {
    /// Shaping with an arbitrary triangular `Γ`, searched as one block.
    pub fn new(h: ParityCheck, gamma: TriangularGen) -> Result<Self> {
        let coarse = DirectSumQuantizer::new(gamma.scaled(h.p().as_i64())?, 1);
        Self::assemble(h, gamma, coarse)
    }

    /// Shaping with `Γ = block^{⊕copies}`.
    pub fn with_blocks(h: ParityCheck, block: &TriangularGen, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidParams("at least one shaping block required".into()));
        }
        let coarse = DirectSumQuantizer::new(block.scaled(h.p().as_i64())?, copies);
        Self::assemble(h, block.direct_sum(copies), coarse)
    }

    /// Cubic shaping `Γ = Z^n`; the constellation is the centered code.
    pub fn cubic(h: ParityCheck) -> Result<Self> {
        let n = h.n();
        Self::with_blocks(h, &TriangularGen::identity(1), n)
    }

    /// Leech shaping `Γ = αΛ24^{⊕ℓ}`.
    pub fn leech(h: ParityCheck, shaping: &ShapingLattice) -> Result<Self> {
        if shaping.p() != h.p() {
            return Err(Error::InvalidParams(format!(
                "shaping built for p = {}, code has p = {}",
                shaping.p(),
                h.p()
            )));
        }
        Self::assemble(h, shaping.gamma().clone(), shaping.quantizer().clone())
    }

    fn assemble(h: ParityCheck, gamma: TriangularGen, coarse: DirectSumQuantizer) -> Result<Self> {
        if gamma.dim() != h.n() {
            return Err(Error::LengthMismatch {
                expected: h.n(),
                got: gamma.dim(),
            });
        }
        Ok(VoronoiCode { h, gamma, coarse })
    }

    pub fn h(&self) -> &ParityCheck {
        &self.h
    }

    pub fn gamma(&self) -> &TriangularGen {
        &self.gamma
    }

    pub fn coarse(&self) -> &DirectSumQuantizer {
        &self.coarse
    }

    pub fn p(&self) -> Prime {
        self.h.p()
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn k(&self) -> usize {
        self.h.k()
    }

    /// Exclusive bounds `t_{i,i}` of the `s` components.
    pub fn s_bounds(&self) -> &[i64] {
        self.gamma.diagonal()
    }

    /// `M = p^k · vol(Γ) = vol(Λ)/vol(Λ_f)`, exactly.
    pub fn cardinality(&self) -> BigUint {
        BigUint::from(self.p().get()).pow(self.k() as u32) * self.gamma.volume()
    }

    /// `log2(M)/n` in bits per dimension.
    pub fn code_rate(&self) -> f64 {
        log2_big(&self.cardinality()) / self.n() as f64
    }

    /// `x' = c + ps`.
    pub fn coset_leader(&self, m: &Message) -> Result<Vec<i64>> {
        m.validate(self)?;
        let c = self.h.encode_systematic(&m.u)?;
        let p = self.p().as_i64();
        Ok(c.as_slice().iter().zip(&m.s).map(|(&c, &s)| c as i64 + p * s).collect())
    }

    /// `x = x' - Q_Λ(x')`.
    pub fn encode(&self, m: &Message) -> Result<Vec<i64>> {
        let mut x = self.coset_leader(m)?;
        self.fold_in_place(&mut x, &mut Searcher::new());
        Ok(x)
    }

    /// Nearest point of `Λ = pΓ`.
    pub fn quantize(&self, y: &[f64]) -> Vec<i64> {
        self.coarse.quantize(y)
    }

    /// `x - Q_Λ(x)`: the representative of `x + Λ` in the Voronoi region.
    pub fn fold(&self, x: &[i64]) -> Vec<i64> {
        let mut out = x.to_vec();
        self.fold_in_place(&mut out, &mut Searcher::new());
        out
    }

    pub fn fold_in_place(&self, x: &mut [i64], searcher: &mut Searcher) {
        let y: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut q = vec![0; x.len()];
        self.coarse.quantize_into(&y, &mut q, searcher);
        x.iter_mut().zip(&q).for_each(|(a, b)| *a -= b);
    }

    /// Recovers the message of any point of `Λ_f`; only its coset mod `Λ`
    /// matters.
    pub fn demap(&self, x: &[i64]) -> Result<Message> {
        self.demap_traced(x).map(|(m, _)| m)
    }

    /// As [`demap`](Self::demap), also returning the largest number of
    /// off-diagonal generator entries used for a single coordinate.
    pub fn demap_traced(&self, x: &[i64]) -> Result<(Message, usize)> {
        let n = self.n();
        if x.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let p = self.p();
        let c = mod_p(x, p);
        if !self.h.is_codeword(c.as_slice()) {
            return Err(Error::NotConstellationPoint);
        }
        let pi = p.as_i64();
        // (x - c) is divisible by p by construction of c.
        let r: Vec<i64> = x.iter().zip(c.as_slice()).map(|(&x, &c)| (x - c as i64) / pi).collect();

        let mut s = vec![0; n];
        let mut z = vec![0; n];
        let mut touched = 0;
        for i in (0..n).rev() {
            let col = self.gamma.col_lower(i);
            touched = touched.max(col.len());
            let acc = r[i] + col.iter().map(|&(j, t)| z[j] * t).sum::<i64>();
            let t = self.gamma.diagonal()[i];
            s[i] = acc.rem_euclid(t);
            let num = s[i] - acc;
            if num % t != 0 {
                return Err(Error::NotConstellationPoint);
            }
            z[i] = num / t;
        }
        let u = FieldVec::from_raw(c.as_slice()[..self.k()].to_vec(), p);
        Ok((Message { u, s }, touched))
    }
}

/// `log2` of an arbitrary-precision integer, from its leading 64 bits.
pub fn log2_big(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 64 {
        return (v.iter_u64_digits().next().unwrap_or(0) as f64).log2();
    }
    let shift = bits - 64;
    let top = (v >> shift).iter_u64_digits().next().unwrap_or(0);
    (top as f64).log2() + shift as f64
}
