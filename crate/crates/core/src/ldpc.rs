//! Dual-diagonal nonbinary LDPC codes.
//!
//! The parity-check matrix has the shape `H = (L | R)` where `L` is a sparse
//! `(n-k) x k` block with constant column degree `d_c` and row degree `d_r`,
//! and `R` is square and dual-diagonal (nonzero only on its diagonal and first
//! subdiagonal). The dual-diagonal block makes the code systematically
//! encodable by forward substitution in time linear in `n`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{FieldVec, Prime};

/// Upper bound on single-edge repairs when removing 4-cycles.
pub const MAX_GIRTH_REPAIRS: usize = 10_000;

/// Parameters of a dual-diagonal code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodeParams {
    pub k: usize,
    pub p: Prime,
    pub d_c: usize,
    pub d_r: usize,
    pub seed: u64,
}

impl CodeParams {
    pub fn new(k: usize, p: Prime, d_c: usize, d_r: usize, seed: u64) -> Result<Self> {
        let params = CodeParams { k, p, d_c, d_r, seed };
        params.validate()?;
        Ok(params)
    }

    /// Parameters for blocklength `n`; `k = n d_r / (d_c + d_r)` must be integral.
    pub fn with_blocklength(n: usize, p: Prime, d_c: usize, d_r: usize, seed: u64) -> Result<Self> {
        if d_c == 0 || d_r == 0 {
            return Err(Error::InvalidParams("degrees must be positive".into()));
        }
        if !(n * d_r).is_multiple_of(d_c + d_r) {
            return Err(Error::InvalidParams(format!(
                "n = {n} is incompatible with d_c = {d_c}, d_r = {d_r}"
            )));
        }
        let params = Self::new(n * d_r / (d_c + d_r), p, d_c, d_r, seed)?;
        debug_assert_eq!(params.n(), n);
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if self.d_c == 0 || self.d_r == 0 {
            return Err(Error::InvalidParams("degrees must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be positive".into()));
        }
        if !(self.k * self.d_c).is_multiple_of(self.d_r) {
            return Err(Error::InvalidParams(format!(
                "k d_c / d_r = {} * {} / {} is not an integer",
                self.k, self.d_c, self.d_r
            )));
        }
        Ok(())
    }

    /// Number of parity checks, `n - k = k d_c / d_r`.
    pub fn checks(&self) -> usize {
        self.k * self.d_c / self.d_r
    }

    pub fn n(&self) -> usize {
        self.k + self.checks()
    }

    /// `d_r / (d_r + d_c)`.
    pub fn rate(&self) -> f64 {
        self.d_r as f64 / (self.d_r + self.d_c) as f64
    }
}

/// Sparse parity-check matrix `H = (L | R)` over `F_p`.
///
/// Each row lists `(column, coefficient)` pairs sorted by column. Row `i`
/// ends with the parity columns `k+i-1` (for `i >= 1`) and `k+i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheck {
    params: CodeParams,
    rows: Vec<Vec<(usize, u32)>>,
}

impl ParityCheck {
    /// Assembles and validates a matrix against every structural invariant.
    pub fn from_rows(params: CodeParams, mut rows: Vec<Vec<(usize, u32)>>) -> Result<Self> {
        params.validate()?;
        for row in rows.iter_mut() {
            row.sort_unstable_by_key(|&(c, _)| c);
        }
        let h = ParityCheck { params, rows };
        h.validate()?;
        Ok(h)
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn p(&self) -> Prime {
        self.params.p
    }

    pub fn num_checks(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, u32)>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[(usize, u32)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n() as f64
    }

    /// Checks shape, dual-diagonal structure, regularity of `L` and girth.
    pub fn validate(&self) -> Result<()> {
        let (n, k, p) = (self.n(), self.k(), self.p().get());
        let m = n - k;
        let bad = |msg: String| Err(Error::InvalidMatrix(msg));
        if self.rows.len() != m {
            return bad(format!("expected {m} rows, found {}", self.rows.len()));
        }
        let mut col_degree = vec![0usize; k];
        for (i, row) in self.rows.iter().enumerate() {
            let mut left = 0;
            let mut right = Vec::with_capacity(2);
            for (j, &(c, h)) in row.iter().enumerate() {
                if c >= n {
                    return bad(format!("row {i}: column {c} out of range"));
                }
                if j > 0 && row[j - 1].0 == c {
                    return bad(format!("row {i}: repeated column {c}"));
                }
                if h == 0 || h >= p {
                    return bad(format!("row {i}: coefficient {h} is not a nonzero residue"));
                }
                if c < k {
                    left += 1;
                    col_degree[c] += 1;
                } else {
                    right.push(c);
                }
            }
            let expected: Vec<usize> = if i == 0 { vec![k] } else { vec![k + i - 1, k + i] };
            if right != expected {
                return bad(format!(
                    "row {i}: parity columns {right:?} are not dual-diagonal (expected {expected:?})"
                ));
            }
            if left != self.params.d_r {
                return bad(format!(
                    "row {i}: {left} left entries, expected d_r = {}",
                    self.params.d_r
                ));
            }
        }
        if let Some(c) = col_degree.iter().position(|&d| d != self.params.d_c) {
            return bad(format!(
                "column {c} has degree {}, expected d_c = {}",
                col_degree[c], self.params.d_c
            ));
        }
        if let Some((a, b)) = self.find_four_cycle() {
            return bad(format!("rows {a} and {b} share two columns (4-cycle)"));
        }
        Ok(())
    }

    /// Returns a pair of rows sharing at least two columns, if any.
    pub fn find_four_cycle(&self) -> Option<(usize, usize)> {
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); self.n()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, _) in row {
                col_rows[c].push(i);
            }
        }
        let mut seen = vec![usize::MAX; self.rows.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, _) in row {
                for &other in &col_rows[c] {
                    if other <= i {
                        continue;
                    }
                    if seen[other] == i {
                        return Some((i, other));
                    }
                    seen[other] = i;
                }
            }
        }
        None
    }

    /// `H c^T mod p`, in time proportional to the number of nonzeros.
    pub fn syndrome(&self, c: &FieldVec) -> Result<FieldVec> {
        self.check_word(c, self.n())?;
        let p = self.p();
        let x = c.as_slice();
        let s = self
            .rows
            .iter()
            .map(|row| row.iter().fold(0u32, |acc, &(col, h)| p.add(acc, p.mul(h, x[col]))))
            .collect();
        Ok(FieldVec::from_raw(s, p))
    }

    /// Whether `c` satisfies every parity check.
    pub fn is_codeword(&self, c: &[u32]) -> bool {
        let p = self.p();
        c.len() == self.n()
            && self
                .rows
                .iter()
                .all(|row| row.iter().fold(0u32, |acc, &(col, h)| p.add(acc, p.mul(h, c[col]))) == 0)
    }

    /// Systematic encoding by forward substitution through the dual diagonal.
    pub fn encode_systematic(&self, u: &FieldVec) -> Result<FieldVec> {
        self.check_word(u, self.k())?;
        let (k, p) = (self.k(), self.p());
        let mut c = Vec::with_capacity(self.n());
        c.extend_from_slice(u.as_slice());
        c.resize(self.n(), 0);
        for (i, row) in self.rows.iter().enumerate() {
            let (&(diag_col, diag), rest) = row.split_last().expect("rows are nonempty");
            debug_assert_eq!(diag_col, k + i);
            let acc = rest.iter().fold(0u32, |acc, &(col, h)| p.add(acc, p.mul(h, c[col])));
            c[k + i] = p.mul(p.neg(acc), p.inv(diag)?);
        }
        Ok(FieldVec::from_raw(c, p))
    }

    fn check_word(&self, v: &FieldVec, len: usize) -> Result<()> {
        if v.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: v.len(),
            });
        }
        if v.p() != self.p() {
            return Err(Error::InvalidParams(format!(
                "vector over F_{} used with a code over F_{}",
                v.p(),
                self.p()
            )));
        }
        Ok(())
    }

    /// Plain-text form: header `p n k d_c d_r seed`, then `row (col:coeff)*`.
    pub fn to_text(&self) -> String {
        let CodeParams { p, d_c, d_r, seed, .. } = self.params;
        let mut out = format!("{} {} {} {} {} {}\n", p, self.n(), self.k(), d_c, d_r, seed);
        for (i, row) in self.rows.iter().enumerate() {
            write!(out, "{i}").unwrap();
            for &(c, h) in row {
                write!(out, " {c}:{h}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
                    if !line.trim().is_empty() {
                        break (i + 1, line);
                    }
                }
                None => return Err(Error::parse(1, "missing header")),
            }
        };
        let fields = parse_ints::<u64>(&header.1, header.0)?;
        let [p, n, k, d_c, d_r, seed] = fields[..] else {
            return Err(Error::parse(header.0, "header must be `p n k d_c d_r seed`"));
        };
        let params = CodeParams::new(k as usize, Prime::new(p as u32)?, d_c as usize, d_r as usize, seed)?;
        if params.n() != n as usize {
            return Err(Error::parse(header.0, format!("n = {n} inconsistent with k, d_c, d_r")));
        }
        let mut rows = vec![None; params.checks()];
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let mut tokens = line.split_whitespace();
            let Some(idx) = tokens.next() else { continue };
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad row index `{idx}`")))?;
            let entries = tokens
                .map(|tok| {
                    let (c, h) = tok
                        .split_once(':')
                        .ok_or_else(|| Error::parse(lineno, format!("bad entry `{tok}`")))?;
                    let c = c
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad column `{c}`")))?;
                    let h = h
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad coefficient `{h}`")))?;
                    Ok((c, h))
                })
                .collect::<Result<Vec<_>>>()?;
            let slot = rows
                .get_mut(idx)
                .ok_or_else(|| Error::parse(lineno, format!("row index {idx} out of range")))?;
            if slot.replace(entries).is_some() {
                return Err(Error::parse(lineno, format!("duplicate row {idx}")));
            }
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::InvalidMatrix(format!("row {i} missing"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(params, rows)
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

pub(crate) fn parse_ints<T: std::str::FromStr>(line: &str, lineno: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::parse(lineno, format!("bad integer `{t}`")))
        })
        .collect()
}

/// Builds a dual-diagonal parity-check matrix.
///
/// For `d_r = 1`, `L` is `d_c` stacked random `k x k` permutation matrices;
/// otherwise `L` is a random `(d_c, d_r)`-regular bipartite graph drawn from
/// the configuration model. In both cases 4-cycles (and, for the
/// configuration model, repeated edges) are removed by resampling single
/// edges, at most [`MAX_GIRTH_REPAIRS`] times. Nonzero coefficients come from
/// [`CoefficientSampler`]. The result depends only on `params`.
pub fn build_code(params: CodeParams) -> Result<ParityCheck> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let left = build_left_block(&params, &mut rng)?;
    let (k, d_r) = (params.k, params.d_r);
    let mut sampler = CoefficientSampler::new(params.p);
    let mut rows = Vec::with_capacity(params.checks());
    for (i, edges) in left.chunks(d_r).enumerate() {
        let mut support: Vec<usize> = edges.to_vec();
        support.sort_unstable();
        if i > 0 {
            support.push(k + i - 1);
        }
        support.push(k + i);
        let coeffs = sampler.sample(support.len(), &mut rng)?;
        rows.push(support.into_iter().zip(coeffs).collect());
    }
    let h = ParityCheck { params, rows };
    debug_assert!(h.validate().is_ok());
    Ok(h)
}

/// Column indices of `L`, grouped by row (`d_r` consecutive entries per row).
fn build_left_block(params: &CodeParams, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let CodeParams { k, d_c, d_r, .. } = *params;
    let m = params.checks();
    let mut cols: Vec<usize> = Vec::with_capacity(m * d_r);
    if d_r == 1 {
        for _ in 0..d_c {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(rng);
            cols.extend(perm);
        }
    } else {
        cols.extend((0..k).flat_map(|c| std::iter::repeat_n(c, d_c)));
        cols.shuffle(rng);
    }

    let mut repairs = 0;
    loop {
        let bad = violating_rows(&cols, m, d_r, k);
        if bad.is_empty() {
            return Ok(cols);
        }
        for row in bad {
            if repairs == MAX_GIRTH_REPAIRS {
                return Err(Error::GirthUnsatisfiable);
            }
            repairs += 1;
            let edge = row * d_r + rng.random_range(0..d_r);
            // Swapping within a permutation block keeps the stacked structure.
            let partner = if d_r == 1 {
                (row / k) * k + rng.random_range(0..k)
            } else {
                rng.random_range(0..cols.len())
            };
            cols.swap(edge, partner);
        }
    }
}

/// Rows of `L` involved in a repeated edge or a 4-cycle of `H`.
fn violating_rows(cols: &[usize], m: usize, d_r: usize, k: usize) -> Vec<usize> {
    let row = |r: usize| &cols[r * d_r..(r + 1) * d_r];
    let mut bad = vec![false; m];
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for r in 0..m {
        for &c in row(r) {
            if col_rows[c].last() == Some(&r) {
                bad[r] = true;
            } else {
                col_rows[c].push(r);
            }
        }
    }
    // Consecutive rows already share a parity column.
    for r in 1..m {
        if row(r).iter().any(|c| row(r - 1).contains(c)) {
            bad[r] = true;
        }
    }
    if d_r > 1 {
        let mut seen = vec![usize::MAX; m];
        for r in 0..m {
            for &c in row(r) {
                for &other in &col_rows[c] {
                    if other == r {
                        continue;
                    }
                    if seen[other] == r {
                        bad[r.max(other)] = true;
                    }
                    seen[other] = r;
                }
            }
        }
    }
    bad.iter().enumerate().filter_map(|(r, &b)| b.then_some(r)).collect()
}

/// Squared minimum Euclidean norm of the nonzero codewords of the
/// single-parity-check code `{x : Σ h_i x_i = 0}`, with symbols embedded as
/// centered representatives in `(-p/2, p/2]`.
///
/// Enumerates the `p^(t-1)` choices of the first `t - 1` symbols and solves
/// for the last. Returns `None` for an empty tuple or a zero coefficient.
pub fn spc_min_distance2(coeffs: &[u32], p: Prime) -> Option<i64> {
    let (&last, head) = coeffs.split_last()?;
    if coeffs.iter().any(|&h| h % p.get() == 0) {
        return None;
    }
    let neg_inv_last = p.neg(p.inv(last).ok()?);
    let q = p.get();
    let mut x = vec![0u32; head.len()];
    let mut best = i64::MAX;
    loop {
        // Next vector in lexicographic order over F_p^(t-1).
        let mut i = 0;
        while i < x.len() {
            x[i] += 1;
            if x[i] < q {
                break;
            }
            x[i] = 0;
            i += 1;
        }
        if i == x.len() {
            break;
        }
        let acc = head
            .iter()
            .zip(&x)
            .fold(0u32, |acc, (&h, &xi)| p.add(acc, p.mul(h, xi)));
        let x_last = p.mul(neg_inv_last, acc);
        let norm: i64 = x
            .iter()
            .chain(std::iter::once(&x_last))
            .map(|&v| p.center(v).pow(2))
            .sum();
        best = best.min(norm);
    }
    Some(best)
}

/// Whether a coefficient tuple gives minimum distance strictly above `sqrt(2)`.
pub fn coefficients_qualify(coeffs: &[u32], p: Prime) -> bool {
    matches!(spc_min_distance2(coeffs, p), Some(d) if d > 2)
}

/// Draws a tuple of nonzero coefficients for a parity check whose support is
/// `row_support`, uniformly among tuples whose single-parity-check code has
/// minimum Euclidean distance greater than `sqrt(2)`.
pub fn optimize_row_coeffs<R: Rng + ?Sized>(row_support: &[usize], p: Prime, rng: &mut R) -> Result<Vec<u32>> {
    CoefficientSampler::new(p).qualifying_sample(row_support.len(), rng)
}

/// Cached uniform sampler over qualifying coefficient tuples.
#[derive(Debug)]
pub struct CoefficientSampler {
    p: Prime,
    tables: HashMap<usize, Vec<Vec<u32>>>,
}

/// Above this many candidate tuples, sample by rejection instead of tabulating.
const TABULATE_LIMIT: usize = 1 << 16;
const REJECTION_ATTEMPTS: usize = 100_000;

impl CoefficientSampler {
    pub fn new(p: Prime) -> Self {
        CoefficientSampler {
            p,
            tables: HashMap::new(),
        }
    }

    /// Qualifying tuple if one exists; otherwise a uniformly random nonzero
    /// tuple. The fallback only triggers for tiny fields (`p < 2t + 1`), where
    /// every tuple has two coefficients equal up to sign.
    pub fn sample<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> Result<Vec<u32>> {
        match self.qualifying_sample(t, rng) {
            Err(Error::NoQualifyingCoefficients { .. }) => {
                let q = self.p.get();
                Ok((0..t).map(|_| rng.random_range(1..q)).collect())
            }
            other => other,
        }
    }

    /// Uniform draw from the qualifying set, or an error if it is empty.
    pub fn qualifying_sample<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> Result<Vec<u32>> {
        let p = self.p;
        let none = || Error::NoQualifyingCoefficients { t, p: p.get() };
        if t == 0 {
            return Err(none());
        }
        let candidates = (p.as_usize() - 1).checked_pow(t as u32);
        if candidates.is_some_and(|c| c <= TABULATE_LIMIT) {
            let table = self.tables.entry(t).or_insert_with(|| qualifying_tuples(t, p));
            if table.is_empty() {
                return Err(none());
            }
            return Ok(table[rng.random_range(0..table.len())].clone());
        }
        let q = p.get();
        for _ in 0..REJECTION_ATTEMPTS {
            let tuple: Vec<u32> = (0..t).map(|_| rng.random_range(1..q)).collect();
            if coefficients_qualify(&tuple, p) {
                return Ok(tuple);
            }
        }
        Err(none())
    }
}

fn qualifying_tuples(t: usize, p: Prime) -> Vec<Vec<u32>> {
    let q = p.get();
    let mut tuple = vec![1u32; t];
    let mut out = Vec::new();
    loop {
        if coefficients_qualify(&tuple, p) {
            out.push(tuple.clone());
        }
        let mut i = 0;
        while i < t {
            tuple[i] += 1;
            if tuple[i] < q {
                break;
            }
            tuple[i] = 1;
            i += 1;
        }
        if i == t {
            return out;
        }
    }
}
