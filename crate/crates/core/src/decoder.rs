//! Channel beliefs, nonbinary belief propagation, MMSE scaling and lifting.

use crate::error::{Error, Result};
use crate::field::{FieldVec, Prime};
use crate::ldpc::ParityCheck;

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Per-coordinate probability vectors over `F_p`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBeliefs {
    p: Prime,
    probs: Vec<f64>,
}

impl SymbolBeliefs {
    /// Validates that every row is a distribution (sum 1 within `1e-9`).
    pub fn new(probs: Vec<f64>, p: Prime) -> Result<Self> {
        let q = p.as_usize();
        if !probs.len().is_multiple_of(q) {
            return Err(Error::InvalidParams(format!(
                "{} probabilities do not split into rows of {q}",
                probs.len()
            )));
        }
        for (i, row) in probs.chunks_exact(q).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!("row {i} is not a distribution")));
            }
        }
        Ok(SymbolBeliefs { p, probs })
    }

    pub fn uniform(n: usize, p: Prime) -> Self {
        let q = p.as_usize();
        SymbolBeliefs {
            p,
            probs: vec![1.0 / q as f64; n * q],
        }
    }

    /// Point masses on the symbols of `c`.
    pub fn delta(c: &FieldVec) -> Self {
        let q = c.p().as_usize();
        let mut probs = vec![0.0; c.len() * q];
        for (i, &a) in c.as_slice().iter().enumerate() {
            probs[i * q + a as usize] = 1.0;
        }
        SymbolBeliefs { p: c.p(), probs }
    }

    pub fn p(&self) -> Prime {
        self.p
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.p.as_usize()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        let q = self.p.as_usize();
        &self.probs[i * q..(i + 1) * q]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [f64] {
        let q = self.p.as_usize();
        &mut self.probs[i * q..(i + 1) * q]
    }

    /// Most likely symbol per coordinate; the smallest symbol wins ties.
    pub fn hard_decision(&self) -> FieldVec {
        let q = self.p.as_usize();
        let c = self.probs.chunks_exact(q).map(argmax).collect();
        FieldVec::from_raw(c, self.p)
    }
}

fn argmax(row: &[f64]) -> u32 {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = a;
        }
    }
    best as u32
}

/// `P(a | y_i) ∝ Σ exp(-(y_i - t)² / 2σ²)` over the `window` integers
/// `t ≡ a (mod p)` nearest to `y_i`.
pub fn channel_beliefs(y: &[f64], sigma2: f64, p: Prime, window: usize) -> Result<SymbolBeliefs> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParams(format!(
            "noise variance {sigma2} must be positive"
        )));
    }
    if window == 0 {
        return Err(Error::InvalidParams("belief window must be at least 1".into()));
    }
    let q = p.as_usize();
    let pf = p.as_i64() as f64;
    let mut probs = vec![0.0; y.len() * q];
    let mut dists = Vec::with_capacity(2 * window + 1);
    let mut logw = vec![0.0; q * window];
    for (&yi, row) in y.iter().zip(probs.chunks_exact_mut(q)) {
        let mut max = f64::NEG_INFINITY;
        for a in 0..q {
            let m0 = ((yi - a as f64) / pf).round();
            dists.clear();
            let reach = window as i64;
            for dm in -reach..=reach {
                let t = a as f64 + pf * (m0 + dm as f64);
                dists.push((yi - t) * (yi - t));
            }
            dists.sort_by(f64::total_cmp);
            for (w, &d) in logw[a * window..(a + 1) * window].iter_mut().zip(&dists) {
                *w = -d / (2.0 * sigma2);
                max = max.max(*w);
            }
        }
        for a in 0..q {
            row[a] = logw[a * window..(a + 1) * window]
                .iter()
                .map(|&w| (w - max).exp())
                .sum();
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(SymbolBeliefs { p, probs })
}

/// Wiener coefficient `snr / (1 + snr)`.
pub fn wiener_coefficient(snr: f64) -> f64 {
    snr / (1.0 + snr)
}

/// `w y` with `w = snr / (1 + snr)`.
pub fn mmse_scale(y: &[f64], snr: f64) -> Vec<f64> {
    let w = wiener_coefficient(snr);
    y.iter().map(|&v| w * v).collect()
}

/// `x̂_i = ĉ_i + p round((y_i - ĉ_i) / p)`.
pub fn lift_to_lattice(c_hat: &FieldVec, y: &[f64], p: Prime) -> Result<Vec<i64>> {
    if c_hat.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: c_hat.len(),
            got: y.len(),
        });
    }
    let pf = p.as_i64() as f64;
    Ok(c_hat
        .as_slice()
        .iter()
        .zip(y)
        .map(|(&c, &yi)| {
            let c = c as i64;
            c + p.as_i64() * ((yi - c as f64) / pf).round() as i64
        })
        .collect())
}

/// Result of one BP run.
#[derive(Clone, Debug, PartialEq)]
pub struct BpOutput {
    pub c_hat: FieldVec,
    pub converged: bool,
    pub iterations: usize,
}

/// A decoded lattice point.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub x_hat: Vec<i64>,
    pub c_hat: FieldVec,
    pub converged: bool,
    pub iterations: usize,
}

/// Flooding sum-product decoder over the Tanner graph of `H`, with reusable
/// message buffers. Check updates run in the `h x` domain, where a check is
/// a cyclic convolution over `Z_p`.
#[derive(Clone, Debug)]
pub struct BpDecoder<'a> {
    h: &'a ParityCheck,
    max_iter: usize,
    /// Edges of check `i` are `row_start[i]..row_start[i + 1]`.
    row_start: Vec<usize>,
    edge_var: Vec<usize>,
    edge_coeff: Vec<u32>,
    /// Edge ids incident to each variable.
    var_edges: Vec<Vec<usize>>,
    /// `mul[h][x] = h x mod p`.
    mul: Vec<Vec<usize>>,
    v2c: Vec<f64>,
    c2v: Vec<f64>,
    post: Vec<f64>,
    scratch: CheckScratch,
}

#[derive(Clone, Debug, Default)]
struct CheckScratch {
    sigma: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    doubled: Vec<f64>,
    out: Vec<f64>,
}

impl<'a> BpDecoder<'a> {
    pub fn new(h: &'a ParityCheck, max_iter: usize) -> Self {
        let p = h.p();
        let q = p.as_usize();
        let mut row_start = vec![0];
        let mut edge_var = Vec::with_capacity(h.nnz());
        let mut edge_coeff = Vec::with_capacity(h.nnz());
        let mut var_edges = vec![Vec::new(); h.n()];
        for row in h.rows() {
            for &(v, c) in row {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
                edge_coeff.push(c);
            }
            row_start.push(edge_var.len());
        }
        let mul = (0..q as u32)
            .map(|a| (0..q as u32).map(|x| p.mul(a, x) as usize).collect())
            .collect();
        let e = edge_var.len();
        BpDecoder {
            h,
            max_iter,
            row_start,
            edge_var,
            edge_coeff,
            var_edges,
            mul,
            v2c: vec![0.0; e * q],
            c2v: vec![0.0; e * q],
            post: vec![0.0; h.n() * q],
            scratch: CheckScratch::default(),
        }
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
    }

    /// Runs BP from the channel beliefs. The hard decision is checked before
    /// the first iteration and after every iteration.
    pub fn decode(&mut self, prior: &SymbolBeliefs) -> Result<BpOutput> {
        let n = self.h.n();
        let q = self.h.p().as_usize();
        if prior.len() != n || prior.p() != self.h.p() {
            return Err(Error::LengthMismatch {
                expected: n,
                got: prior.len(),
            });
        }
        for (e, &v) in self.edge_var.iter().enumerate() {
            self.v2c[e * q..(e + 1) * q].copy_from_slice(prior.get(v));
        }
        self.post.copy_from_slice(&prior.probs);
        let mut c_hat = self.hard_decision();
        if self.h.is_codeword(c_hat.as_slice()) {
            return Ok(BpOutput {
                c_hat,
                converged: true,
                iterations: 0,
            });
        }
        for it in 1..=self.max_iter {
            for i in 0..self.h.num_checks() {
                self.check_update(i);
            }
            for v in 0..n {
                self.variable_update(v, prior.get(v));
            }
            c_hat = self.hard_decision();
            if self.h.is_codeword(c_hat.as_slice()) {
                return Ok(BpOutput {
                    c_hat,
                    converged: true,
                    iterations: it,
                });
            }
        }
        Ok(BpOutput {
            c_hat,
            converged: false,
            iterations: self.max_iter,
        })
    }

    /// Posterior marginals from the last run.
    pub fn posteriors(&self) -> SymbolBeliefs {
        SymbolBeliefs {
            p: self.h.p(),
            probs: self.post.clone(),
        }
    }

    fn hard_decision(&self) -> FieldVec {
        let q = self.h.p().as_usize();
        FieldVec::from_raw(self.post.chunks_exact(q).map(argmax).collect(), self.h.p())
    }

    /// Extrinsic messages of check `i`: for each edge, the distribution of
    /// `-Σ_{others} h x` mapped back through `h^{-1}`.
    fn check_update(&mut self, i: usize) {
        let q = self.h.p().as_usize();
        let (lo, hi) = (self.row_start[i], self.row_start[i + 1]);
        let d = hi - lo;
        let s = &mut self.scratch;
        s.sigma.resize(d * q, 0.0);
        s.prefix.resize(d * q, 0.0);
        s.suffix.resize(d * q, 0.0);
        s.doubled.resize(2 * q, 0.0);
        s.out.resize(q, 0.0);

        // sigma_e(h_e x) = v2c_e(x)
        for k in 0..d {
            let e = lo + k;
            let mul = &self.mul[self.edge_coeff[e] as usize];
            let src = &self.v2c[e * q..(e + 1) * q];
            let dst = &mut s.sigma[k * q..(k + 1) * q];
            for x in 0..q {
                dst[mul[x]] = src[x];
            }
        }
        // prefix_k = sigma_0 * ... * sigma_k, suffix_k = sigma_k * ... * sigma_{d-1}
        s.prefix[..q].copy_from_slice(&s.sigma[..q]);
        for k in 1..d.saturating_sub(1) {
            let (done, rest) = s.prefix.split_at_mut(k * q);
            convolve(
                &done[(k - 1) * q..],
                &s.sigma[k * q..(k + 1) * q],
                &mut s.doubled,
                &mut rest[..q],
            );
        }
        s.suffix[(d - 1) * q..].copy_from_slice(&s.sigma[(d - 1) * q..]);
        for k in (1..d.saturating_sub(1)).rev() {
            let (head, done) = s.suffix.split_at_mut((k + 1) * q);
            convolve(
                &s.sigma[k * q..(k + 1) * q],
                &done[..q],
                &mut s.doubled,
                &mut head[k * q..],
            );
        }

        for k in 0..d {
            // Distribution of the sum of all other terms.
            if d == 1 {
                s.out.fill(0.0);
                s.out[0] = 1.0;
            } else if k == 0 {
                s.out.copy_from_slice(&s.suffix[q..2 * q]);
            } else if k == d - 1 {
                s.out.copy_from_slice(&s.prefix[(d - 2) * q..(d - 1) * q]);
            } else {
                convolve(
                    &s.prefix[(k - 1) * q..k * q],
                    &s.suffix[(k + 1) * q..(k + 2) * q],
                    &mut s.doubled,
                    &mut s.out,
                );
            }
            // c2v_e(x) = out(-h_e x)
            let e = lo + k;
            let mul = &self.mul[self.edge_coeff[e] as usize];
            let dst = &mut self.c2v[e * q..(e + 1) * q];
            for x in 0..q {
                let w = mul[x];
                dst[x] = s.out[if w == 0 { 0 } else { q - w }];
            }
            normalize(dst);
        }
    }

    fn variable_update(&mut self, v: usize, prior: &[f64]) {
        let q = self.h.p().as_usize();
        let edges = &self.var_edges[v];
        let post = &mut self.post[v * q..(v + 1) * q];
        post.copy_from_slice(prior);
        for &e in edges {
            for (a, &m) in post.iter_mut().zip(&self.c2v[e * q..(e + 1) * q]) {
                *a *= m;
            }
        }
        normalize(post);
        for &e in edges {
            let dst = &mut self.v2c[e * q..(e + 1) * q];
            dst.copy_from_slice(prior);
            for &f in edges {
                if f != e {
                    for (a, &m) in dst.iter_mut().zip(&self.c2v[f * q..(f + 1) * q]) {
                        *a *= m;
                    }
                }
            }
            normalize(dst);
        }
    }
}

/// Cyclic convolution `out[k] = Σ_i a[i] b[(k - i) mod p]`.
fn convolve(a: &[f64], b: &[f64], doubled: &mut [f64], out: &mut [f64]) {
    let q = out.len();
    doubled[..q].copy_from_slice(&b[..q]);
    doubled[q..2 * q].copy_from_slice(&b[..q]);
    out.fill(0.0);
    for (i, &ai) in a[..q].iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        // b[(k - i) mod p] = doubled[k - i + q]
        let shifted = &doubled[q - i..2 * q - i];
        for (o, &bv) in out.iter_mut().zip(shifted) {
            *o += ai * bv;
        }
    }
}

/// Rescales to sum 1; an all-zero vector becomes uniform.
fn normalize(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        let u = 1.0 / v.len() as f64;
        v.fill(u);
    }
}

/// Decodes `y` into a point of `C + pZ^n`. With `snr` set, BP and the lift
/// run on `w y`, and the beliefs use the effective variance `w σ²`.
pub fn decode(
    decoder: &mut BpDecoder<'_>,
    y: &[f64],
    sigma2: f64,
    window: usize,
    snr: Option<f64>,
) -> Result<DecodeResult> {
    let p = decoder.h.p();
    let (y_eff, var) = match snr {
        Some(snr) => {
            if !(snr > 0.0) {
                return Err(Error::InvalidParams(format!("snr {snr} must be positive")));
            }
            (mmse_scale(y, snr), wiener_coefficient(snr) * sigma2)
        }
        None => (y.to_vec(), sigma2),
    };
    let beliefs = channel_beliefs(&y_eff, var, p, window)?;
    let out = decoder.decode(&beliefs)?;
    let x_hat = lift_to_lattice(&out.c_hat, &y_eff, p)?;
    Ok(DecodeResult {
        x_hat,
        c_hat: out.c_hat,
        converged: out.converged,
        iterations: out.iterations,
    })
}
