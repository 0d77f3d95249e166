//! Integer lattices with lower-triangular generators.
//!
//! Lattice points are row vectors `x = zT` with `z ∈ Z^n`. Because `T` is
//! lower triangular, coordinate `j` of `x` only depends on `z_j, ..., z_{n-1}`,
//! which is what the closest-point enumeration and the demapper exploit.

use std::fmt::{self, Write as _};
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Relative tolerance under which two candidate distances count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Lower-triangular integer generator with positive diagonal, stored sparsely.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriangularGen {
    diag: Vec<i64>,
    /// Strictly-lower nonzeros of each row, `(column, value)` by column.
    rows: Vec<Vec<(usize, i64)>>,
    /// Strictly-lower nonzeros of each column, `(row, value)` by row.
    cols: Vec<Vec<(usize, i64)>>,
}

impl TriangularGen {
    /// Builds a generator from its strictly-lower rows and its diagonal.
    pub fn from_sparse(diag: Vec<i64>, mut rows: Vec<Vec<(usize, i64)>>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidGenerator("empty generator".into()));
        }
        if rows.len() != n {
            return Err(Error::InvalidGenerator(format!(
                "{} rows for dimension {n}",
                rows.len()
            )));
        }
        if let Some(i) = diag.iter().position(|&d| d <= 0) {
            return Err(Error::InvalidGenerator(format!(
                "diagonal entry {i} is {} (must be positive)",
                diag[i]
            )));
        }
        let mut cols = vec![Vec::new(); n];
        for (i, row) in rows.iter_mut().enumerate() {
            row.retain(|&(_, v)| v != 0);
            row.sort_unstable_by_key(|&(j, _)| j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidGenerator(format!("row {i}: repeated column {}", w[0].0)));
                }
            }
            for &(j, v) in row.iter() {
                if j >= i {
                    return Err(Error::InvalidGenerator(format!(
                        "entry ({i}, {j}) lies on or above the diagonal"
                    )));
                }
                cols[j].push((i, v));
            }
        }
        Ok(TriangularGen { diag, rows, cols })
    }

    /// Builds a generator from a dense square matrix (rows are basis vectors).
    pub fn from_dense(m: &[Vec<i64>]) -> Result<Self> {
        let n = m.len();
        let mut diag = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (i, row) in m.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGenerator(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(j) = (i + 1..n).find(|&j| row[j] != 0) {
                return Err(Error::InvalidGenerator(format!(
                    "entry ({i}, {j}) lies above the diagonal"
                )));
            }
            diag.push(row[i]);
            rows.push(row[..i].iter().enumerate().map(|(j, &v)| (j, v)).collect());
        }
        Self::from_sparse(diag, rows)
    }

    /// Generator of `Z^n`.
    pub fn identity(n: usize) -> Self {
        Self::from_sparse(vec![1; n], vec![Vec::new(); n]).expect("identity is valid")
    }

    /// Generator of `alpha * Λ`.
    pub fn scaled(&self, alpha: i64) -> Result<Self> {
        if alpha <= 0 {
            return Err(Error::InvalidGenerator(format!("scale {alpha} must be positive")));
        }
        let scale = |v: &[(usize, i64)]| v.iter().map(|&(j, x)| (j, alpha * x)).collect();
        Ok(TriangularGen {
            diag: self.diag.iter().map(|&d| alpha * d).collect(),
            rows: self.rows.iter().map(|r| scale(r)).collect(),
            cols: self.cols.iter().map(|c| scale(c)).collect(),
        })
    }

    /// Block-diagonal generator of the direct sum of `copies` copies.
    pub fn direct_sum(&self, copies: usize) -> Self {
        let d = self.dim();
        let shift = |v: &[(usize, i64)], off: usize| v.iter().map(|&(j, x)| (j + off, x)).collect();
        let mut out = TriangularGen {
            diag: Vec::with_capacity(d * copies),
            rows: Vec::with_capacity(d * copies),
            cols: Vec::with_capacity(d * copies),
        };
        for b in 0..copies {
            let off = b * d;
            out.diag.extend_from_slice(&self.diag);
            out.rows.extend(self.rows.iter().map(|r| shift(r, off)));
            out.cols.extend(self.cols.iter().map(|c| shift(c, off)));
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        match j.cmp(&i) {
            std::cmp::Ordering::Equal => self.diag[i],
            std::cmp::Ordering::Greater => 0,
            std::cmp::Ordering::Less => self.rows[i]
                .binary_search_by_key(&j, |&(c, _)| c)
                .map_or(0, |k| self.rows[i][k].1),
        }
    }

    #[inline]
    pub fn diagonal(&self) -> &[i64] {
        &self.diag
    }

    /// Strictly-lower nonzeros `(column, t_ij)` of row `i`.
    #[inline]
    pub fn row_lower(&self, i: usize) -> &[(usize, i64)] {
        &self.rows[i]
    }

    /// Strictly-lower nonzeros `(row, t_ij)` of column `j`.
    #[inline]
    pub fn col_lower(&self, j: usize) -> &[(usize, i64)] {
        &self.cols[j]
    }

    /// Nonzero entries of column `j`, diagonal included.
    pub fn column_nonzeros(&self, j: usize) -> usize {
        self.cols[j].len() + 1
    }

    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut row = vec![0; n];
                row[i] = self.diag[i];
                for &(j, v) in &self.rows[i] {
                    row[j] = v;
                }
                row
            })
            .collect()
    }

    /// `vol(Λ) = |det T|`, the product of the diagonal.
    pub fn volume(&self) -> BigUint {
        self.diag.iter().fold(BigUint::from(1u32), |acc, &d| acc * d as u64)
    }

    pub fn log2_volume(&self) -> f64 {
        self.diag.iter().map(|&d| (d as f64).log2()).sum()
    }

    /// `vol(Λ)^(2/n)`.
    pub fn normalized_volume(&self) -> f64 {
        (2.0 * self.log2_volume() / self.dim() as f64).exp2()
    }

    /// The lattice point `zT`.
    pub fn point(&self, z: &[i64]) -> Vec<i64> {
        let mut x = vec![0; self.dim()];
        self.point_into(z, &mut x);
        x
    }

    pub(crate) fn point_into(&self, z: &[i64], x: &mut [i64]) {
        debug_assert_eq!(z.len(), self.dim());
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = z[j] * self.diag[j] + self.cols[j].iter().map(|&(i, t)| z[i] * t).sum::<i64>();
        }
    }

    /// Plain-text form: `n`, then `n` rows of `n` integers.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.dim());
        for row in self.to_dense() {
            let line: Vec<String> = row.iter().map(i64::to_string).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        let mut n = None;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let ints = crate::ldpc::parse_ints::<i64>(&line, i + 1)?;
            match n {
                None => match ints[..] {
                    [d] if d > 0 => n = Some(d as usize),
                    _ => return Err(Error::parse(i + 1, "expected the dimension")),
                },
                Some(d) => {
                    if ints.len() != d {
                        return Err(Error::parse(i + 1, format!("expected {d} entries")));
                    }
                    rows.push(ints);
                }
            }
        }
        match n {
            Some(d) if rows.len() == d => Self::from_dense(&rows),
            Some(d) => Err(Error::parse(0, format!("expected {d} rows, found {}", rows.len()))),
            None => Err(Error::parse(1, "missing dimension")),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Noise variance per real dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if sigma2 > 0.0 && sigma2.is_finite() {
            Ok(NoiseModel { sigma2 })
        } else {
            Err(Error::InvalidParams(format!(
                "noise variance {sigma2} must be positive"
            )))
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// One-sided noise spectral density `N_0 = 2σ²`.
    pub fn n0(&self) -> f64 {
        2.0 * self.sigma2
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Volume-to-noise ratio `ν / (2πe σ²)` for normalized volume `ν = vol^(2/n)`.
pub fn vnr(normalized_volume: f64, sigma2: f64) -> f64 {
    normalized_volume / (2.0 * std::f64::consts::PI * std::f64::consts::E * sigma2)
}

pub fn vnr_db(normalized_volume: f64, sigma2: f64) -> f64 {
    to_db(vnr(normalized_volume, sigma2))
}

/// Largest tolerable noise variance `ν / (2πe)` (the Poltyrev limit).
pub fn poltyrev_sigma_max(normalized_volume: f64) -> f64 {
    normalized_volume / (2.0 * std::f64::consts::PI * std::f64::consts::E)
}

/// A lattice point near a target, with its coefficient vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSolution {
    pub coeffs: Vec<i64>,
    pub point: Vec<i64>,
    pub dist2: f64,
}

/// Real lower-triangular factor `L` searched by [`Searcher`]: level `j` of
/// the point `zL` depends on `z_j, ..., z_{n-1}` only.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchBasis {
    diag: Vec<f64>,
    /// Strictly-lower nonzeros of each row, `(column, value)`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl SearchBasis {
    pub fn from_gen(gen: &TriangularGen) -> Self {
        SearchBasis {
            diag: gen.diag.iter().map(|&d| d as f64).collect(),
            rows: gen
                .rows
                .iter()
                .map(|r| r.iter().map(|&(j, v)| (j, v as f64)).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

/// Reusable buffers for depth-first Schnorr–Euchner enumeration.
///
/// Levels run from `n-1` down to `0`. `partial[j]` holds
/// `Σ_{i>j} z_i l_{i,j}` for the coefficients currently fixed above level `j`.
#[derive(Clone, Debug, Default)]
pub struct Searcher {
    center: Vec<f64>,
    partial: Vec<f64>,
    dist: Vec<f64>,
    z: Vec<i64>,
    step: Vec<i64>,
    best: Vec<i64>,
}

impl Searcher {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        self.center.resize(n, 0.0);
        self.partial.clear();
        self.partial.resize(n, 0.0);
        self.dist.resize(n + 1, 0.0);
        self.dist[n] = 0.0;
        self.z.resize(n, 0);
        self.step.resize(n, 0);
        self.best.resize(n, 0);
    }

    #[inline]
    fn enter(&mut self, basis: &SearchBasis, y: &[f64], level: usize) {
        let c = (y[level] - self.partial[level]) / basis.diag[level];
        let z = c.round();
        self.center[level] = c;
        self.z[level] = z as i64;
        self.step[level] = if c >= z { 1 } else { -1 };
        for &(j, t) in &basis.rows[level] {
            self.partial[j] += z * t;
        }
    }

    #[inline]
    fn next_sibling(&mut self, basis: &SearchBasis, level: usize) {
        let step = self.step[level];
        self.z[level] += step;
        self.step[level] = -step - step.signum();
        let delta = step as f64;
        for &(j, t) in &basis.rows[level] {
            self.partial[j] += delta * t;
        }
    }

    #[inline]
    fn retract(&mut self, basis: &SearchBasis, level: usize) {
        let z = self.z[level] as f64;
        for &(j, t) in &basis.rows[level] {
            self.partial[j] -= z * t;
        }
    }

    #[inline]
    fn level_dist(&self, basis: &SearchBasis, level: usize) -> f64 {
        let diff = (self.center[level] - self.z[level] as f64) * basis.diag[level];
        self.dist[level + 1] + diff * diff
    }

    /// Closest point of the lattice generated by `basis` among those within
    /// squared distance `radius2` (use infinity for no bound); `None` if
    /// there is none. Candidates tied with the incumbent within
    /// [`TIE_TOLERANCE`] replace it when `prefer(candidate, incumbent)` holds.
    /// Without a bound, the first leaf reached is the successive-rounding
    /// (Babai) point, which seeds the search radius.
    pub fn closest_by<F>(
        &mut self,
        basis: &SearchBasis,
        y: &[f64],
        radius2: f64,
        mut prefer: F,
    ) -> Option<(Vec<i64>, f64)>
    where
        F: FnMut(&[i64], &[i64]) -> bool,
    {
        let n = basis.dim();
        assert_eq!(y.len(), n, "dimension mismatch");
        self.reset(n);
        let mut best = radius2;
        let mut found = false;
        let mut level = n - 1;
        self.enter(basis, y, level);
        loop {
            let d = self.level_dist(basis, level);
            if d <= best * (1.0 + TIE_TOLERANCE) {
                if level == 0 {
                    if d < best * (1.0 - TIE_TOLERANCE) || !found || prefer(&self.z, &self.best) {
                        best = if found { best.min(d) } else { d };
                        found = true;
                        self.best.copy_from_slice(&self.z);
                    }
                    self.next_sibling(basis, 0);
                } else {
                    self.dist[level] = d;
                    level -= 1;
                    self.enter(basis, y, level);
                }
            } else {
                if level == n - 1 {
                    break;
                }
                self.retract(basis, level);
                level += 1;
                self.next_sibling(basis, level);
            }
        }
        found.then(|| (self.best.clone(), best))
    }

    /// Exact closest point of the lattice generated by `gen`, searched on
    /// `gen` itself. Among tied candidates the lexicographically smallest
    /// lattice point wins, so `y - Q(y)` always lands in the same half-open
    /// Voronoi cell and folding is idempotent.
    pub fn closest(&mut self, gen: &TriangularGen, y: &[f64]) -> (Vec<i64>, f64) {
        let basis = SearchBasis::from_gen(gen);
        self.closest_by(&basis, y, f64::INFINITY, |a, b| gen.point(a) < gen.point(b))
            .expect("an unbounded search always finds a point")
    }

    /// Calls `visit(z, dist2)` for every lattice point with squared distance
    /// to `y` strictly below `radius2`.
    pub fn for_each_within<F: FnMut(&[i64], f64)>(
        &mut self,
        gen: &TriangularGen,
        y: &[f64],
        radius2: f64,
        mut visit: F,
    ) {
        let basis = SearchBasis::from_gen(gen);
        let n = gen.dim();
        assert_eq!(y.len(), n, "dimension mismatch");
        self.reset(n);
        let mut level = n - 1;
        self.enter(&basis, y, level);
        loop {
            let d = self.level_dist(&basis, level);
            if d < radius2 {
                if level == 0 {
                    visit(&self.z, d);
                    self.next_sibling(&basis, 0);
                } else {
                    self.dist[level] = d;
                    level -= 1;
                    self.enter(&basis, y, level);
                }
            } else {
                if level == n - 1 {
                    break;
                }
                self.retract(&basis, level);
                level += 1;
                self.next_sibling(&basis, level);
            }
        }
    }
}

/// Exact nearest lattice point to `y`, searched on the triangular generator.
pub fn closest_point(gen: &TriangularGen, y: &[f64]) -> LatticeSolution {
    let (coeffs, dist2) = Searcher::new().closest(gen, y);
    let point = gen.point(&coeffs);
    LatticeSolution { coeffs, point, dist2 }
}

/// Nearest-plane successive rounding from the last coordinate down.
pub fn babai_round(gen: &TriangularGen, y: &[f64]) -> LatticeSolution {
    let n = gen.dim();
    assert_eq!(y.len(), n, "dimension mismatch");
    let mut partial = vec![0.0; n];
    let mut coeffs = vec![0; n];
    let mut dist2 = 0.0;
    for level in (0..n).rev() {
        let c = (y[level] - partial[level]) / gen.diag[level] as f64;
        let z = c.round();
        coeffs[level] = z as i64;
        dist2 += ((c - z) * gen.diag[level] as f64).powi(2);
        for &(j, t) in &gen.rows[level] {
            partial[j] += z * t as f64;
        }
    }
    let point = gen.point(&coeffs);
    LatticeSolution { coeffs, point, dist2 }
}

/// A nearest-point map for one lattice, shared between threads.
///
/// Implementations must be translation-equivariant, `Q(y + λ) = Q(y) + λ`
/// for lattice points `λ`, including on cell boundaries, so that folding
/// `y - Q(y)` is idempotent.
pub trait NearestPoint: Send + Sync + fmt::Debug {
    fn gen(&self) -> &TriangularGen;

    /// Writes the chosen lattice point into `out`; returns `‖y - out‖²`.
    fn closest_into(&self, y: &[f64], out: &mut [i64], searcher: &mut Searcher) -> f64;

    fn dim(&self) -> usize {
        self.gen().dim()
    }

    fn closest(&self, y: &[f64]) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        self.closest_into(y, &mut out, &mut Searcher::new());
        out
    }
}

/// Generic nearest-point search: coordinate-wise rounding for diagonal
/// generators, Schnorr–Euchner enumeration otherwise. Ties go to the
/// lexicographically smallest point.
#[derive(Clone, Debug)]
pub struct BlockQuantizer {
    gen: TriangularGen,
    basis: SearchBasis,
    diagonal: bool,
}

impl BlockQuantizer {
    pub fn new(gen: TriangularGen) -> Self {
        BlockQuantizer {
            basis: SearchBasis::from_gen(&gen),
            diagonal: gen.rows.iter().all(Vec::is_empty),
            gen,
        }
    }
}

impl NearestPoint for BlockQuantizer {
    fn gen(&self) -> &TriangularGen {
        &self.gen
    }

    fn closest_into(&self, y: &[f64], out: &mut [i64], searcher: &mut Searcher) -> f64 {
        assert_eq!(y.len(), self.dim(), "dimension mismatch");
        if self.diagonal {
            let mut dist2 = 0.0;
            for ((o, &v), &t) in out.iter_mut().zip(y).zip(&self.gen.diag) {
                *o = (v / t as f64 - 0.5).ceil() as i64 * t;
                dist2 += (v - *o as f64).powi(2);
            }
            return dist2;
        }
        let gen = &self.gen;
        let (z, dist2) = searcher
            .closest_by(&self.basis, y, f64::INFINITY, |a, b| gen.point(a) < gen.point(b))
            .expect("an unbounded search always finds a point");
        gen.point_into(&z, out);
        dist2
    }
}

/// Quantizer for a direct sum of copies of a low-dimensional lattice.
#[derive(Clone, Debug)]
pub struct DirectSumQuantizer {
    block: Arc<dyn NearestPoint>,
    copies: usize,
}

impl DirectSumQuantizer {
    pub fn new(block: TriangularGen, copies: usize) -> Self {
        Self::from_block(Arc::new(BlockQuantizer::new(block)), copies)
    }

    pub fn from_block(block: Arc<dyn NearestPoint>, copies: usize) -> Self {
        DirectSumQuantizer { block, copies }
    }

    pub fn block_quantizer(&self) -> &dyn NearestPoint {
        self.block.as_ref()
    }

    pub fn block(&self) -> &TriangularGen {
        self.block.gen()
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn dim(&self) -> usize {
        self.block.dim() * self.copies
    }

    /// Nearest lattice point, computed block by block.
    pub fn quantize(&self, y: &[f64]) -> Vec<i64> {
        let mut out = vec![0; y.len()];
        self.quantize_into(y, &mut out, &mut Searcher::new());
        out
    }

    pub fn quantize_into(&self, y: &[f64], out: &mut [i64], searcher: &mut Searcher) {
        let d = self.block.dim();
        assert_eq!(y.len(), self.dim(), "dimension mismatch");
        for (yb, ob) in y.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.block.closest_into(yb, ob, searcher);
        }
    }
}

/// Monte-Carlo shaping-gain estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapingGainEstimate {
    pub samples: usize,
    /// Mean of `‖x‖²/n` over the Voronoi region.
    pub second_moment: f64,
    pub std_err: f64,
    pub gain_db: f64,
    /// 95% interval on the gain, from the standard error of the second moment.
    pub ci_low_db: f64,
    pub ci_high_db: f64,
}

const MC_CHUNK: usize = 4096;

/// Estimates `γ_s = n vol^(1+2/n) / (12 ∫_V ‖x‖²)` by folding uniform samples
/// of the fundamental parallelepiped into the Voronoi region.
///
/// Samples are drawn in fixed chunks, each from its own ChaCha stream, so the
/// estimate does not depend on `workers`.
pub fn shaping_gain_mc(gen: &TriangularGen, samples: usize, seed: u64, workers: usize) -> Result<ShapingGainEstimate> {
    shaping_gain_mc_with(&BlockQuantizer::new(gen.clone()), samples, seed, workers)
}

/// As [`shaping_gain_mc`], with a prepared quantizer.
pub fn shaping_gain_mc_with(
    quantizer: &dyn NearestPoint,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<ShapingGainEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidParams(format!("{samples} samples < 1000")));
    }
    let gen = quantizer.gen();
    let n = gen.dim();
    let chunks = samples.div_ceil(MC_CHUNK);
    let run = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let count = MC_CHUNK.min(samples - c * MC_CHUNK);
                let mut searcher = Searcher::new();
                let mut xi = vec![0.0; n];
                let mut u = vec![0.0; n];
                let mut q = vec![0; n];
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..count {
                    xi.iter_mut().for_each(|v| *v = rng.random::<f64>());
                    for (j, uj) in u.iter_mut().enumerate() {
                        *uj = xi[j] * gen.diag[j] as f64
                            + gen.cols[j].iter().map(|&(i, t)| xi[i] * t as f64).sum::<f64>();
                    }
                    let s = quantizer.closest_into(&u, &mut q, &mut searcher) / n as f64;
                    sum += s;
                    sum_sq += s * s;
                }
                (sum, sum_sq)
            })
            .collect::<Vec<_>>()
    };
    let parts = with_workers(workers, run)?;
    let (sum, sum_sq) = parts.iter().fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
    let count = samples as f64;
    let mean = sum / count;
    let var = (sum_sq / count - mean * mean).max(0.0) * count / (count - 1.0);
    let std_err = (var / count).sqrt();
    let gain = |m: f64| to_db(gen.normalized_volume() / (12.0 * m));
    Ok(ShapingGainEstimate {
        samples,
        second_moment: mean,
        std_err,
        gain_db: gain(mean),
        ci_low_db: gain(mean + 1.96 * std_err),
        ci_high_db: gain((mean - 1.96 * std_err).max(f64::MIN_POSITIVE)),
    })
}

/// Runs `f` on a dedicated rayon pool with `workers` threads.
pub(crate) fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TriangularGen {
        TriangularGen::from_dense(&[vec![2, 0], vec![1, 2]]).unwrap()
    }

    #[test]
    fn folding_is_idempotent_on_ties() {
        let gens = [
            small(),
            small().scaled(3).unwrap(),
            TriangularGen::identity(1).scaled(4).unwrap(),
        ];
        for gen in &gens {
            let n = gen.dim();
            let mut searcher = Searcher::new();
            let span = 13i64;
            let total = (2 * span + 1).pow(n as u32);
            for idx in 0..total {
                let y: Vec<f64> = (0..n)
                    .map(|j| ((idx / (2 * span + 1).pow(j as u32)) % (2 * span + 1) - span) as f64)
                    .collect();
                let (z, _) = searcher.closest(gen, &y);
                let q = gen.point(&z);
                let folded: Vec<f64> = y.iter().zip(&q).map(|(a, &b)| a - b as f64).collect();
                let (z2, _) = searcher.closest(gen, &folded);
                assert!(z2.iter().all(|&c| c == 0), "{y:?} -> {folded:?}");
                let quant = DirectSumQuantizer::new(gen.clone(), 1).quantize(&y);
                assert_eq!(quant, q);
            }
        }
    }

    #[test]
    fn generator_validation() {
        assert!(TriangularGen::from_dense(&[vec![1, 1], vec![0, 1]]).is_err());
        assert!(TriangularGen::from_dense(&[vec![0, 0], vec![1, 1]]).is_err());
        assert!(TriangularGen::from_dense(&[vec![-1]]).is_err());
        assert!(TriangularGen::from_dense(&[vec![1, 0]]).is_err());
        assert!(TriangularGen::from_dense(&[]).is_err());
    }

    #[test]
    fn volumes() {
        assert_eq!(TriangularGen::identity(7).volume(), BigUint::from(1u32));
        assert_eq!(small().volume(), BigUint::from(4u32));
        assert_eq!(small().scaled(3).unwrap().volume(), BigUint::from(36u32));
        assert_eq!(small().direct_sum(3).volume(), BigUint::from(64u32));
        assert!((small().normalized_volume() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn direct_sum_layout() {
        let t = small().direct_sum(2);
        assert_eq!(
            t.to_dense(),
            vec![vec![2, 0, 0, 0], vec![1, 2, 0, 0], vec![0, 0, 2, 0], vec![0, 0, 1, 2]]
        );
        assert_eq!(t.get(3, 2), 1);
        assert_eq!(t.get(2, 3), 0);
        assert_eq!(t.column_nonzeros(0), 2);
        assert_eq!(t.column_nonzeros(1), 1);
    }

    #[test]
    fn vnr_definitions() {
        let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
        assert!((vnr(two_pi_e, 1.0) - 1.0).abs() < 1e-15);
        assert!(vnr_db(two_pi_e, 1.0).abs() < 1e-12);
        assert!((vnr(3.0, 0.5) / vnr(3.0, 1.0) - 2.0).abs() < 1e-12);
        assert!((poltyrev_sigma_max(two_pi_e) - 1.0).abs() < 1e-15);
        let nu = 13f64.powf(4.0 / 3.0);
        assert!((vnr(nu, poltyrev_sigma_max(nu)) - 1.0).abs() < 1e-15);
        assert!(NoiseModel::new(0.0).is_err());
        assert_eq!(NoiseModel::new(2.0).unwrap().n0(), 4.0);
    }

    #[test]
    fn integer_lattice_rounding() {
        let id = TriangularGen::identity(2);
        let sol = closest_point(&id, &[0.6, -0.2]);
        assert_eq!(sol.point, vec![1, 0]);
        assert_eq!(babai_round(&id, &[0.6, -0.2]).point, vec![1, 0]);
    }

    #[test]
    fn lattice_points_are_fixed() {
        let t = small();
        for z in [[0, 0], [1, -1], [-3, 2]] {
            let x = t.point(&z);
            let y: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let sol = closest_point(&t, &y);
            assert_eq!(sol.point, x);
            assert_eq!(sol.dist2, 0.0);
            assert_eq!(babai_round(&t, &y).point, x);
        }
    }

    #[test]
    fn enumeration_counts_small_vectors() {
        // Z^2: points with ‖x‖² < 2 are 0 and the 4 unit vectors.
        let mut count = 0;
        Searcher::new().for_each_within(&TriangularGen::identity(2), &[0.0, 0.0], 1.5, |_, _| count += 1);
        assert_eq!(count, 5);
    }

    #[test]
    fn direct_sum_quantizer_matches_full_search() {
        let q = DirectSumQuantizer::new(small(), 3);
        let full = small().direct_sum(3);
        let y = [0.3, 1.9, -2.2, 0.7, 5.1, -0.4];
        assert_eq!(q.quantize(&y), closest_point(&full, &y).point);
        let cube = DirectSumQuantizer::new(TriangularGen::from_dense(&[vec![13]]).unwrap(), 3);
        assert_eq!(cube.quantize(&[6.4, -6.6, 20.0]), vec![0, -13, 26]);
    }

    #[test]
    fn text_roundtrip() {
        let t = small().direct_sum(2).scaled(5).unwrap();
        let back = TriangularGen::read_from(t.to_text().as_bytes()).unwrap();
        assert_eq!(back, t);
        assert!(TriangularGen::read_from("2\n1 0\n".as_bytes()).is_err());
        assert!(TriangularGen::read_from("2\n1 1\n0 1\n".as_bytes()).is_err());
    }

    #[test]
    fn shaping_gain_of_cubic_lattice_is_zero() {
        let est = shaping_gain_mc(&TriangularGen::identity(4), 20_000, 1, 1).unwrap();
        assert!(est.gain_db.abs() < 0.05, "{est:?}");
        assert!(est.ci_low_db <= est.gain_db && est.gain_db <= est.ci_high_db);
        assert!(shaping_gain_mc(&TriangularGen::identity(4), 10, 1, 1).is_err());
    }
}
