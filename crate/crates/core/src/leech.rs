//! The integer Leech lattice and direct-sum shaping lattices built from it.
//!
//! `G24` is the standard lower-triangular Leech generator in MOG coordinates
//! with every coordinate multiplied by `sqrt(8)`, so it is an integer matrix
//! with determinant `2^36` and minimum squared norm 32.

use std::sync::{Arc, OnceLock};

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::field::Prime;
use crate::lattice::{DirectSumQuantizer, NearestPoint, Searcher, TriangularGen};

pub const LEECH_DIM: usize = 24;

#[rustfmt::skip]
pub const G24_ROWS: [[i64; LEECH_DIM]; LEECH_DIM] = [
    [ 8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 2, 2, 2, 2, 2, 2, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 0, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 0, 0, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 2, 2, 2, 2, 0, 0, 0, 0, 2, 2, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 2, 2, 0, 0, 2, 2, 0, 0, 2, 2, 0, 0, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 2, 0, 2, 0, 2, 0, 2, 0, 2, 0, 2, 0, 2, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 2, 0, 0, 2, 2, 0, 0, 2, 2, 0, 0, 2, 2, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0],
    [ 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0],
    [ 2, 0, 2, 0, 2, 0, 0, 2, 2, 2, 0, 0, 0, 0, 0, 0, 2, 2, 0, 0, 0, 0, 0, 0],
    [ 2, 0, 0, 2, 2, 2, 0, 0, 2, 0, 2, 0, 0, 0, 0, 0, 2, 0, 2, 0, 0, 0, 0, 0],
    [ 2, 2, 0, 0, 2, 0, 2, 0, 2, 0, 0, 2, 0, 0, 0, 0, 2, 0, 0, 2, 0, 0, 0, 0],
    [ 0, 2, 2, 2, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0],
    [ 0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 0, 0, 2, 2, 0, 0, 2, 2, 0, 0, 2, 2, 0, 0],
    [ 0, 0, 0, 0, 0, 0, 0, 0, 2, 0, 2, 0, 2, 0, 2, 0, 2, 0, 2, 0, 2, 0, 2, 0],
    [-3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
];

/// Squared minimum norm of the integer Leech lattice.
pub const LEECH_MIN_NORM: i64 = 32;

/// Squared covering radius of the integer Leech lattice, twice the squared
/// packing radius.
pub const LEECH_COVERING_RADIUS2: f64 = 16.0;

/// Nonzero entries per column of a generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

pub fn column_stats(gen: &TriangularGen) -> ColumnStats {
    let counts: Vec<usize> = (0..gen.dim()).map(|j| gen.column_nonzeros(j)).collect();
    ColumnStats {
        mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        min: *counts.iter().min().unwrap(),
        max: *counts.iter().max().unwrap(),
    }
}

/// The validated 24-dimensional Leech generator.
#[derive(Clone, Debug)]
pub struct LeechGen {
    g24: TriangularGen,
}

impl LeechGen {
    pub fn g24(&self) -> &TriangularGen {
        &self.g24
    }

    pub fn column_stats(&self) -> ColumnStats {
        column_stats(&self.g24)
    }

    /// The diagonal `g_1, ..., g_24`.
    pub fn diagonal(&self) -> &[i64] {
        self.g24.diagonal()
    }

    /// Nearest-point decoder for `scale · G24`.
    pub fn quantizer(&self, scale: i64) -> Result<LeechQuantizer> {
        Ok(LeechQuantizer {
            gen: self.g24.scaled(scale)?,
            scale,
        })
    }
}

/// Builds `G24` and checks every invariant of the scaled Leech lattice:
/// triangular shape, determinant `2^36`, norms divisible by 16 (via the Gram
/// matrix), minimum norm 32 by enumeration, and the column statistics.
pub fn load_g24() -> Result<LeechGen> {
    let rows: Vec<Vec<i64>> = G24_ROWS.iter().map(|r| r.to_vec()).collect();
    let g24 = TriangularGen::from_dense(&rows).map_err(|e| Error::LeechInvariant(e.to_string()))?;
    let fail = |msg: String| Err(Error::LeechInvariant(msg));

    if g24.volume() != BigUint::from(1u64 << 36) {
        return fail(format!("determinant {} != 2^36", g24.volume()));
    }
    // ‖Σ z_i b_i‖² = Σ z_i² ‖b_i‖² + 2 Σ_{i<j} z_i z_j <b_i, b_j>, so every
    // norm is ≡ 0 mod 16 iff the Gram diagonal is ≡ 0 mod 16 and the
    // off-diagonal is ≡ 0 mod 8.
    for i in 0..LEECH_DIM {
        for j in 0..=i {
            let g: i64 = (0..LEECH_DIM).map(|c| rows[i][c] * rows[j][c]).sum();
            let modulus = if i == j { 16 } else { 8 };
            if g % modulus != 0 {
                return fail(format!("Gram entry ({i}, {j}) = {g} not divisible by {modulus}"));
            }
        }
    }
    if let Some(v) = shortest_nonzero_below(&g24, LEECH_MIN_NORM as f64) {
        return fail(format!("nonzero vector of squared norm {v} < {LEECH_MIN_NORM}"));
    }
    if !rows
        .iter()
        .any(|r| r.iter().map(|x| x * x).sum::<i64>() == LEECH_MIN_NORM)
    {
        return fail("no generator row attains the minimum norm".into());
    }
    let stats = column_stats(&g24);
    if stats.min != 1 || stats.max != 21 || (stats.mean - 5.625).abs() > 1e-12 {
        return fail(format!("column statistics {stats:?}"));
    }
    Ok(LeechGen { g24 })
}

/// Shared, validated copy of `G24`.
///
/// # Panics
///
/// Panics if the embedded matrix fails validation.
pub fn leech() -> &'static LeechGen {
    static LEECH: OnceLock<LeechGen> = OnceLock::new();
    LEECH.get_or_init(|| load_g24().expect("embedded Leech generator is invalid"))
}

/// Smallest squared norm below `bound` among nonzero lattice vectors, if any.
fn shortest_nonzero_below(gen: &TriangularGen, bound: f64) -> Option<f64> {
    let origin = vec![0.0; gen.dim()];
    let mut shortest: Option<f64> = None;
    Searcher::new().for_each_within(gen, &origin, bound, |z, d| {
        if z.iter().any(|&c| c != 0) {
            shortest = Some(shortest.map_or(d, |s| s.min(d)));
        }
    });
    shortest
}

/// Counts lattice vectors with squared norm strictly below `bound`.
pub fn count_vectors_below(gen: &TriangularGen, bound: f64) -> usize {
    let origin = vec![0.0; gen.dim()];
    let mut count = 0;
    Searcher::new().for_each_within(gen, &origin, bound, |_, _| count += 1);
    count
}

/// The binary Golay code in the coordinate order of `G24`, as 24-bit masks
/// (bit `i` is coordinate `i`). Spanned by `(r / 2) mod 2` over the even
/// lattice vectors `r`, taken as the rows of `G24` with odd rows doubled.
pub fn golay_code() -> &'static [u32] {
    static GOLAY: OnceLock<Vec<u32>> = OnceLock::new();
    GOLAY.get_or_init(|| {
        let mut basis: Vec<u32> = Vec::new();
        for row in &G24_ROWS {
            let k = if row.iter().all(|x| x % 2 == 0) { 1 } else { 2 };
            let mut w = row
                .iter()
                .enumerate()
                .filter(|(_, &x)| (k * x / 2) % 2 != 0)
                .fold(0u32, |w, (i, _)| w | 1 << i);
            for &b in &basis {
                w = w.min(w ^ b);
            }
            if w != 0 {
                basis.push(w);
                basis.sort_unstable_by(|a, b| b.cmp(a));
            }
        }
        let mut words = vec![0u32];
        for b in basis {
            let span: Vec<u32> = words.iter().map(|w| w ^ b).collect();
            words.extend(span);
        }
        words.sort_unstable();
        words
    })
}

/// Membership in the integer Leech lattice:
/// `x = m·1 + 2c + 4y` with `m ∈ {0, 1}`, `c` a Golay codeword and `Σy ≡ m (mod 2)`.
pub fn is_leech_point(x: &[i64]) -> bool {
    if x.len() != LEECH_DIM {
        return false;
    }
    let m = x[0].rem_euclid(2);
    if x.iter().any(|v| v.rem_euclid(2) != m) {
        return false;
    }
    let c = x
        .iter()
        .enumerate()
        .filter(|(_, &v)| ((v - m) / 2).rem_euclid(2) == 1)
        .fold(0u32, |w, (i, _)| w | 1 << i);
    if golay_code().binary_search(&c).is_err() {
        return false;
    }
    let sum: i64 = x.iter().map(|&v| (v - m - 2 * ((v - m) / 2).rem_euclid(2)) / 4).sum();
    sum.rem_euclid(2) == m
}

/// Offset applied (in unit scale) before decoding so that no input lies on a
/// Voronoi boundary; makes the decoder exactly translation-equivariant.
const PERTURBATION: f64 = 1e-6;

fn perturbation() -> &'static [f64; LEECH_DIM] {
    static W: OnceLock<[f64; LEECH_DIM]> = OnceLock::new();
    W.get_or_init(|| {
        const PRIMES: [u32; LEECH_DIM] = [
            2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
        ];
        std::array::from_fn(|i| {
            let r = (PRIMES[i] as f64).sqrt();
            PERTURBATION * (r - r.floor() - 0.5)
        })
    })
}

/// Best representative of residue `a mod 4` for one coordinate.
#[derive(Clone, Copy, Default)]
struct Choice {
    t: f64,
    cost: f64,
    parity: u8,
    /// Extra cost of the nearest representative with the opposite parity.
    flip: f64,
    flip_t: f64,
}

impl Choice {
    fn new(u: f64, a: f64) -> Self {
        let r = ((u - a) / 4.0).round();
        let t = a + 4.0 * r;
        let flip_t = if u >= t { t + 4.0 } else { t - 4.0 };
        let cost = (u - t) * (u - t);
        Choice {
            t,
            cost,
            parity: (r as i64 & 1) as u8,
            flip: (u - flip_t) * (u - flip_t) - cost,
            flip_t,
        }
    }
}

/// Per-octet sums of cost, parity and minimum flip penalty over all 256
/// patterns of Golay bits.
struct OctetTables {
    cost: [[f64; 256]; 3],
    parity: [[u8; 256]; 3],
    flip: [[f64; 256]; 3],
}

impl OctetTables {
    fn new() -> Box<Self> {
        Box::new(OctetTables {
            cost: [[0.0; 256]; 3],
            parity: [[0; 256]; 3],
            flip: [[0.0; 256]; 3],
        })
    }

    fn fill(&mut self, choices: &[[Choice; 2]; LEECH_DIM]) {
        let mut on = [f64::INFINITY; 256];
        let mut off = [f64::INFINITY; 256];
        for o in 0..3 {
            let ch = &choices[8 * o..8 * o + 8];
            let (cost, parity, flip) = (&mut self.cost[o], &mut self.parity[o], &mut self.flip[o]);
            cost[0] = ch.iter().map(|c| c[0].cost).sum();
            parity[0] = ch.iter().fold(0, |p, c| p ^ c[0].parity);
            on[0] = f64::INFINITY;
            off[0] = f64::INFINITY;
            for b in 1..256usize {
                let low = b.trailing_zeros() as usize;
                let rest = b & (b - 1);
                let c = &ch[low];
                cost[b] = cost[rest] + c[1].cost - c[0].cost;
                parity[b] = parity[rest] ^ c[1].parity ^ c[0].parity;
                on[b] = on[rest].min(c[1].flip);
                off[b] = off[rest].min(c[0].flip);
            }
            for b in 0..256 {
                flip[b] = on[b].min(off[!b & 0xff]);
            }
        }
    }
}

/// Exact nearest-point decoder for `s · Λ24`: for each of the 8192 cosets
/// `m·1 + 2c + 4Z^24` it keeps the best point with the required parity,
/// using per-octet lookup tables.
#[derive(Clone, Debug)]
pub struct LeechQuantizer {
    gen: TriangularGen,
    scale: i64,
}

impl LeechQuantizer {
    pub fn scale(&self) -> i64 {
        self.scale
    }

    /// Nearest Leech point to `u` in unit scale, written into `out`.
    fn decode_unit(&self, u: &[f64; LEECH_DIM], out: &mut [f64; LEECH_DIM]) {
        let words = golay_code();
        let mut tables = OctetTables::new();
        let mut best = (f64::INFINITY, 0usize, 0u32);
        let mut best_choices = [[Choice::default(); 2]; LEECH_DIM];
        for m in 0..2 {
            let a = m as f64;
            let choices: [[Choice; 2]; LEECH_DIM] =
                std::array::from_fn(|i| [Choice::new(u[i], a), Choice::new(u[i], a + 2.0)]);
            tables.fill(&choices);
            let t = &*tables;
            let mut found = false;
            for &c in words {
                let (b0, b1, b2) = ((c & 0xff) as usize, (c >> 8 & 0xff) as usize, (c >> 16) as usize);
                let mut cost = t.cost[0][b0] + t.cost[1][b1] + t.cost[2][b2];
                if (t.parity[0][b0] ^ t.parity[1][b1] ^ t.parity[2][b2]) as usize != m {
                    cost += t.flip[0][b0].min(t.flip[1][b1]).min(t.flip[2][b2]);
                }
                if cost < best.0 {
                    best = (cost, m, c);
                    found = true;
                }
            }
            if found {
                best_choices = choices;
            }
        }
        let (_, m, c) = best;
        let mut parity = 0;
        let mut flip = (f64::INFINITY, 0);
        for (i, ch) in best_choices.iter().enumerate() {
            let ch = &ch[(c >> i & 1) as usize];
            out[i] = ch.t;
            parity ^= ch.parity;
            if ch.flip < flip.0 {
                flip = (ch.flip, i);
            }
        }
        if parity as usize != m {
            out[flip.1] = best_choices[flip.1][(c >> flip.1 & 1) as usize].flip_t;
        }
    }
}

impl NearestPoint for LeechQuantizer {
    fn gen(&self) -> &TriangularGen {
        &self.gen
    }

    fn closest_into(&self, y: &[f64], out: &mut [i64], _: &mut Searcher) -> f64 {
        assert_eq!(y.len(), LEECH_DIM, "dimension mismatch");
        let s = self.scale as f64;
        let w = perturbation();
        let u: [f64; LEECH_DIM] = std::array::from_fn(|i| y[i] / s + w[i]);
        let mut t = [0.0; LEECH_DIM];
        self.decode_unit(&u, &mut t);
        let mut dist2 = 0.0;
        for ((o, &v), &ti) in out.iter_mut().zip(y).zip(&t) {
            *o = ti as i64 * self.scale;
            dist2 += (v - *o as f64).powi(2);
        }
        dist2
    }
}

/// The shaping lattice `pΓ` with `Γ = α Λ24^{⊕ℓ}`.
#[derive(Clone, Debug)]
pub struct ShapingLattice {
    ell: usize,
    alpha: i64,
    p: Prime,
    /// Generator of `Γ`: `ℓ` diagonal copies of `α G24`.
    gamma: TriangularGen,
    /// Quantizer of `pΓ`, one `pαG24` block at a time.
    quantizer: DirectSumQuantizer,
}

impl ShapingLattice {
    pub fn new(leech: &LeechGen, ell: usize, alpha: i64, p: Prime) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidParams("ell must be positive".into()));
        }
        let block = leech.g24().scaled(alpha)?;
        let quantizer = DirectSumQuantizer::from_block(Arc::new(leech.quantizer(alpha * p.as_i64())?), ell);
        Ok(ShapingLattice {
            ell,
            alpha,
            p,
            gamma: block.direct_sum(ell),
            quantizer,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn alpha(&self) -> i64 {
        self.alpha
    }

    pub fn p(&self) -> Prime {
        self.p
    }

    pub fn dim(&self) -> usize {
        LEECH_DIM * self.ell
    }

    pub fn gamma(&self) -> &TriangularGen {
        &self.gamma
    }

    pub fn quantizer(&self) -> &DirectSumQuantizer {
        &self.quantizer
    }

    /// Nearest point of `pΓ`: `ℓ` independent 24-dimensional searches against
    /// the integer generator `pαG24`.
    pub fn quantize_shaping(&self, y: &[f64]) -> Vec<i64> {
        self.quantizer.quantize(y)
    }

    /// Exclusive upper bounds `α g_i` of the message components `s_i`.
    pub fn s_set_bounds(&self) -> Vec<i64> {
        self.gamma.diagonal().to_vec()
    }
}
