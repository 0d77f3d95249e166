//! Monte-Carlo harness: infinite-constellation and Voronoi-constellation
//! sweeps, power estimation, unit conversions and result files.
//!
//! Every frame draws from its own ChaCha stream keyed by `(seed, frame)`, so
//! error counts do not depend on the number of workers, and all sweep points
//! see the same messages and noise directions.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::decoder::{self, BpDecoder, DEFAULT_MAX_ITER, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::field::{FieldVec, Prime};
use crate::lattice::{from_db, poltyrev_sigma_max, to_db, with_workers, Searcher, TriangularGen};
use crate::ldpc::{build_code, CodeParams, ParityCheck};
use crate::leech::{leech, ShapingLattice, LEECH_DIM};
use crate::voronoi::{Message, VoronoiCode};

/// Upper end (exclusive) of the `pZ^n` shift coefficients in infinite mode.
pub const SHIFT_RANGE: i64 = 10;

const POWER_CHUNK: usize = 1024;
const POWER_STREAM: u64 = 1 << 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Infinite,
    Voronoi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shaping {
    Leech,
    Cubic,
}

/// Experiment parameters; every field is also a config key.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: usize,
    pub p: u32,
    pub d_c: usize,
    pub d_r: usize,
    pub alpha: i64,
    /// Number of Leech blocks; must equal `n / 24` when given.
    pub ell: Option<usize>,
    pub shaping: Shaping,
    /// Operating points: VNR in dB (infinite) or Eb/N0 in dB (Voronoi).
    pub sweep: Vec<f64>,
    /// Maximum frames per point.
    pub trials: usize,
    /// Coordinate errors after which a point stops early.
    pub target_errors: usize,
    pub max_iter: usize,
    pub mmse: bool,
    pub seed: u64,
    pub workers: usize,
    pub window: usize,
    pub power_samples: usize,
    /// Samples for shaping-gain estimation.
    pub samples: usize,
    /// Record wall time per point; disable for byte-identical reruns.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Infinite,
            n: 9999,
            p: 13,
            d_c: 2,
            d_r: 1,
            alpha: 1,
            ell: None,
            shaping: Shaping::Leech,
            sweep: Vec::new(),
            trials: 1000,
            target_errors: 100,
            max_iter: DEFAULT_MAX_ITER,
            mmse: false,
            seed: 1,
            workers: 1,
            window: DEFAULT_WINDOW,
            power_samples: 10_000,
            samples: 1_000_000,
            timing: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}"))),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => {
                self.mode = match value {
                    "infinite" => Mode::Infinite,
                    "voronoi" => Mode::Voronoi,
                    _ => return Err(Error::Config(format!("unknown mode {value:?}"))),
                }
            }
            "shaping" => {
                self.shaping = match value {
                    "leech" => Shaping::Leech,
                    "cubic" => Shaping::Cubic,
                    _ => return Err(Error::Config(format!("unknown shaping {value:?}"))),
                }
            }
            "n" => self.n = parse_value(key, value)?,
            "p" => self.p = parse_value(key, value)?,
            "d_c" => self.d_c = parse_value(key, value)?,
            "d_r" => self.d_r = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "ell" => self.ell = Some(parse_value(key, value)?),
            "sweep" => {
                self.sweep = value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| parse_value(key, t))
                    .collect::<Result<_>>()?
            }
            "trials" => self.trials = parse_value(key, value)?,
            "target_errors" => self.target_errors = parse_value(key, value)?,
            "max_iter" => self.max_iter = parse_value(key, value)?,
            "mmse" => self.mmse = parse_bool(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "workers" => self.workers = parse_value(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            "power_samples" => self.power_samples = parse_value(key, value)?,
            "samples" => self.samples = parse_value(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        Prime::new(self.p).map_err(|e| Error::Config(e.to_string()))?;
        CodeParams::with_blocklength(self.n, Prime::new(self.p)?, self.d_c, self.d_r, self.seed)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.alpha < 1 {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if self.sweep.iter().any(|v| !v.is_finite()) {
            return bad("sweep points must be finite".into());
        }
        if self.mode == Mode::Voronoi {
            if self.power_samples < 1000 {
                return bad(format!("power_samples = {} < 1000", self.power_samples));
            }
            if self.shaping == Shaping::Leech {
                if !self.n.is_multiple_of(LEECH_DIM) {
                    return bad(format!("n = {} is not divisible by {LEECH_DIM}", self.n));
                }
                if let Some(ell) = self.ell {
                    if ell * LEECH_DIM != self.n {
                        return bad(format!("ell = {ell} does not match n = {}", self.n));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn prime(&self) -> Result<Prime> {
        Prime::new(self.p)
    }

    pub fn code_params(&self) -> Result<CodeParams> {
        CodeParams::with_blocklength(self.n, self.prime()?, self.d_c, self.d_r, self.seed)
    }

    pub fn build_code(&self) -> Result<ParityCheck> {
        build_code(self.code_params()?)
    }

    /// The shaped constellation described by the config.
    pub fn build_voronoi(&self) -> Result<VoronoiCode> {
        self.shape(self.build_code()?)
    }

    /// Applies the configured shaping to an existing code.
    pub fn shape(&self, h: ParityCheck) -> Result<VoronoiCode> {
        if h.n() != self.n || h.p().get() != self.p {
            return Err(Error::Config(format!(
                "code has n = {}, p = {}; config has n = {}, p = {}",
                h.n(),
                h.p(),
                self.n,
                self.p
            )));
        }
        match self.shaping {
            Shaping::Leech => {
                let shaping = ShapingLattice::new(leech(), self.n / LEECH_DIM, self.alpha, self.prime()?)?;
                VoronoiCode::leech(h, &shaping)
            }
            Shaping::Cubic => VoronoiCode::with_blocks(h, &TriangularGen::identity(1).scaled(self.alpha)?, self.n),
        }
    }
}

/// `σ² = ν / (2πe · vnr)`.
pub fn sigma2_from_vnr_db(vnr_db: f64, normalized_volume: f64) -> f64 {
    poltyrev_sigma_max(normalized_volume) / from_db(vnr_db)
}

pub fn vnr_db_from_sigma2(sigma2: f64, normalized_volume: f64) -> f64 {
    to_db(poltyrev_sigma_max(normalized_volume) / sigma2)
}

/// `σ² = P / (2 R Eb/N0)`, with `E_b = P / R` per dimension and `N_0 = 2σ²`.
pub fn sigma2_from_ebn0_db(ebn0_db: f64, power: f64, rate: f64) -> f64 {
    power / (2.0 * rate * from_db(ebn0_db))
}

pub fn ebn0_db_from_sigma2(sigma2: f64, power: f64, rate: f64) -> f64 {
    to_db(power / (2.0 * rate * sigma2))
}

/// Symbol error rate of `pZ`: `2Q(p / 2σ)`.
pub fn pz_bound(p: f64, sigma2: f64) -> f64 {
    libm::erfc(p / (2.0 * (2.0 * sigma2).sqrt()))
}

/// Eb/N0 in dB at which `R = ½ log2(1 + snr)`.
pub fn capacity_ebn0_db(rate: f64) -> f64 {
    to_db(((2.0 * rate).exp2() - 1.0) / (2.0 * rate))
}

/// Monte-Carlo estimate of the average power per dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerEstimate {
    pub samples: usize,
    pub power: f64,
    pub std_err: f64,
}

/// Mean of `‖x‖²/n` over uniformly drawn encoded messages.
pub fn estimate_power(code: &VoronoiCode, samples: usize, seed: u64, workers: usize) -> Result<PowerEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidParams(format!("{samples} samples < 1000")));
    }
    let n = code.n() as f64;
    let chunks = samples.div_ceil(POWER_CHUNK);
    let parts = with_workers(workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(POWER_STREAM | c as u64);
                let count = POWER_CHUNK.min(samples - c * POWER_CHUNK);
                let mut searcher = Searcher::new();
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..count {
                    let m = Message::random(code, &mut rng);
                    let mut x = code.coset_leader(&m)?;
                    code.fold_in_place(&mut x, &mut searcher);
                    let e = x.iter().map(|&v| (v * v) as f64).sum::<f64>() / n;
                    sum += e;
                    sum_sq += e * e;
                }
                Ok((sum, sum_sq))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let (sum, sum_sq) = parts.iter().fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
    let count = samples as f64;
    let mean = sum / count;
    let var = (sum_sq / count - mean * mean).max(0.0) * count / (count - 1.0);
    Ok(PowerEstimate {
        samples,
        power: mean,
        std_err: (var / count).sqrt(),
    })
}

/// Counters for one sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointRecord {
    pub point_db: f64,
    pub sigma2: f64,
    pub frames: usize,
    /// Integer coordinates with `x̂_i ≠ x_i`.
    pub coord_errors: usize,
    /// Coordinates with `ĉ_i ≠ c_i` over `F_p`.
    pub symbol_errors: usize,
    pub frame_errors: usize,
    pub iterations: usize,
    pub seconds: f64,
    /// `2Q(p / 2σ)` at this noise level.
    pub pz_bound: f64,
}

impl PointRecord {
    pub fn ser(&self, n: usize) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.coord_errors as f64 / (self.frames * n) as f64
        }
    }

    pub fn fer(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.frame_errors as f64 / self.frames as f64
        }
    }

    pub fn mean_iters(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.iterations as f64 / self.frames as f64
        }
    }
}

/// Outcome of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub mode: Mode,
    pub n: usize,
    pub p: u32,
    /// Information rate in bits per dimension.
    pub rate: f64,
    /// Estimated constellation power (Voronoi mode).
    pub power: Option<PowerEstimate>,
    pub points: Vec<PointRecord>,
}

impl SweepResult {
    /// Eb/N0 in dB at capacity for this rate (Voronoi mode).
    pub fn capacity_ebn0_db(&self) -> f64 {
        capacity_ebn0_db(self.rate)
    }

    /// Points whose SER rises above the previous one by more than twice the
    /// combined binomial standard error.
    pub fn monotonicity_warnings(&self) -> Vec<usize> {
        let se = |r: &PointRecord| {
            let s = r.ser(self.n);
            (s * (1.0 - s) / (r.frames.max(1) * self.n) as f64).sqrt()
        };
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].ser(self.n) > w[0].ser(self.n) + 2.0 * (se(&w[0]) + se(&w[1])))
            .map(|(i, _)| i + 1)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct FrameOutcome {
    coord_errors: usize,
    symbol_errors: usize,
    frame_error: bool,
    iterations: usize,
}

/// Per-frame RNG: stream `frame + 1` of the seed (stream 0 builds the code).
pub fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64 + 1);
    rng
}

/// Runs frames in index order, in parallel batches, and keeps exactly the
/// prefix of frames up to the one where the error target is reached.
fn run_point<F>(cfg: &ExperimentConfig, frame: F) -> Result<(Vec<FrameOutcome>, f64)>
where
    F: Fn(usize) -> Result<FrameOutcome> + Sync,
{
    let start = Instant::now();
    let batch = (4 * cfg.workers).max(8);
    let mut kept = Vec::new();
    let mut errors = 0;
    with_workers(cfg.workers, || -> Result<()> {
        let mut next = 0;
        while next < cfg.trials {
            let end = (next + batch).min(cfg.trials);
            let outcomes = (next..end).into_par_iter().map(&frame).collect::<Result<Vec<_>>>()?;
            for o in outcomes {
                errors += o.coord_errors;
                kept.push(o);
                if errors >= cfg.target_errors {
                    return Ok(());
                }
            }
            next = end;
        }
        Ok(())
    })??;
    let seconds = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    Ok((kept, seconds))
}

fn summarize(point_db: f64, sigma2: f64, p: u32, outcomes: &[FrameOutcome], seconds: f64) -> PointRecord {
    PointRecord {
        point_db,
        sigma2,
        frames: outcomes.len(),
        coord_errors: outcomes.iter().map(|o| o.coord_errors).sum(),
        symbol_errors: outcomes.iter().map(|o| o.symbol_errors).sum(),
        frame_errors: outcomes.iter().filter(|o| o.frame_error).count(),
        iterations: outcomes.iter().map(|o| o.iterations).sum(),
        seconds,
        pz_bound: pz_bound(p as f64, sigma2),
    }
}

fn add_noise(x: &[i64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    x.iter()
        .map(|&v| v as f64 + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// SER versus VNR for the unshaped lattice `C + pZ^n`.
pub fn run_infinite(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.mode != Mode::Infinite {
        return Err(Error::Config("run_infinite needs mode = infinite".into()));
    }
    let h = cfg.build_code()?;
    let p = h.p();
    let n = h.n();
    // vol(Λ_f)^{2/n} = p^{2(1-R)}
    let nu = (2.0 * (n - h.k()) as f64 / n as f64 * (p.get() as f64).log2()).exp2();
    let mut points = Vec::with_capacity(cfg.sweep.len());
    for &vnr_db in &cfg.sweep {
        let sigma2 = sigma2_from_vnr_db(vnr_db, nu);
        let sigma = sigma2.sqrt();
        let (outcomes, seconds) = run_point(cfg, |f| {
            let mut rng = frame_rng(cfg.seed, f);
            let u: Vec<u32> = (0..h.k()).map(|_| rng.random_range(0..p.get())).collect();
            let c = h.encode_systematic(&FieldVec::new(u, p)?)?;
            let x: Vec<i64> = c
                .as_slice()
                .iter()
                .map(|&c| c as i64 + p.as_i64() * rng.random_range(0..SHIFT_RANGE))
                .collect();
            let y = add_noise(&x, sigma, &mut rng);
            let mut dec = BpDecoder::new(&h, cfg.max_iter);
            let res = decoder::decode(&mut dec, &y, sigma2, cfg.window, None)?;
            Ok(tally(
                &x,
                &res.x_hat,
                c.as_slice(),
                res.c_hat.as_slice(),
                res.iterations,
                false,
            ))
        })?;
        points.push(summarize(vnr_db, sigma2, p.get(), &outcomes, seconds));
    }
    Ok(SweepResult {
        mode: Mode::Infinite,
        n,
        p: p.get(),
        rate: h.rate() * (p.get() as f64).log2(),
        power: None,
        points,
    })
}

fn tally(x: &[i64], x_hat: &[i64], c: &[u32], c_hat: &[u32], iterations: usize, message_error: bool) -> FrameOutcome {
    let coord_errors = x.iter().zip(x_hat).filter(|(a, b)| a != b).count();
    FrameOutcome {
        coord_errors,
        symbol_errors: c.iter().zip(c_hat).filter(|(a, b)| a != b).count(),
        frame_error: coord_errors > 0 || message_error,
        iterations,
    }
}

/// SER versus Eb/N0 for a shaped constellation.
pub fn run_voronoi(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.mode != Mode::Voronoi {
        return Err(Error::Config("run_voronoi needs mode = voronoi".into()));
    }
    let code = cfg.build_voronoi()?;
    let power = estimate_power(&code, cfg.power_samples, cfg.seed, cfg.workers)?;
    run_voronoi_with(cfg, &code, power)
}

/// As [`run_voronoi`], with a prebuilt code and a known power.
pub fn run_voronoi_with(cfg: &ExperimentConfig, code: &VoronoiCode, power: PowerEstimate) -> Result<SweepResult> {
    let p = code.p();
    let n = code.n();
    let rate = code.code_rate();
    let mut points = Vec::with_capacity(cfg.sweep.len());
    for &ebn0_db in &cfg.sweep {
        let sigma2 = sigma2_from_ebn0_db(ebn0_db, power.power, rate);
        let sigma = sigma2.sqrt();
        let snr = cfg.mmse.then_some(power.power / sigma2);
        let (outcomes, seconds) = run_point(cfg, |f| {
            let mut rng = frame_rng(cfg.seed, f);
            let m = Message::random(code, &mut rng);
            let mut searcher = Searcher::new();
            let mut x = code.coset_leader(&m)?;
            code.fold_in_place(&mut x, &mut searcher);
            let y = add_noise(&x, sigma, &mut rng);
            let mut dec = BpDecoder::new(code.h(), cfg.max_iter);
            let res = decoder::decode(&mut dec, &y, sigma2, cfg.window, snr)?;
            let mut x_hat = res.x_hat;
            code.fold_in_place(&mut x_hat, &mut searcher);
            let message_error = code.demap(&x_hat).map_or(true, |back| back != m);
            let c = crate::field::mod_p(&x, p);
            Ok(tally(
                &x,
                &x_hat,
                c.as_slice(),
                res.c_hat.as_slice(),
                res.iterations,
                message_error,
            ))
        })?;
        points.push(summarize(ebn0_db, sigma2, p.get(), &outcomes, seconds));
    }
    Ok(SweepResult {
        mode: Mode::Voronoi,
        n,
        p: p.get(),
        rate,
        power: Some(power),
        points,
    })
}

/// Runs the sweep selected by `cfg.mode`.
pub fn run(cfg: &ExperimentConfig) -> Result<SweepResult> {
    match cfg.mode {
        Mode::Infinite => run_infinite(cfg),
        Mode::Voronoi => run_voronoi(cfg),
    }
}

pub const CSV_HEADER: &str = "point_db,sigma2,frames,coord_errors,ser,frame_errors,fer,mean_iters,seconds";

pub fn results_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.points {
        let _ = writeln!(
            out,
            "{},{:e},{},{},{:e},{},{:e},{},{}",
            r.point_db,
            r.sigma2,
            r.frames,
            r.coord_errors,
            r.ser(result.n),
            r.frame_errors,
            r.fer(),
            r.mean_iters(),
            r.seconds
        );
    }
    out
}

/// Companion script path: `results.csv` → `results.plot.py`.
pub fn plot_script_path(csv: &Path) -> PathBuf {
    csv.with_extension("plot.py")
}

fn plot_script(result: &SweepResult, csv_name: &str) -> String {
    let (xlabel, reference) = match result.mode {
        Mode::Infinite => (
            "VNR (dB)",
            format!(
                "ax.axvline(0.0, color='k', ls=':', label='Poltyrev limit')\n\
                 ax.semilogy(x, [math.erfc({p} / (2 * math.sqrt(2 * s))) for s in s2], 'k--', label='2Q(p/2σ)')\n",
                p = result.p
            ),
        ),
        Mode::Voronoi => (
            "Eb/N0 (dB)",
            format!(
                "ax.axvline({:.4}, color='k', ls=':', label='capacity')\n",
                result.capacity_ebn0_db()
            ),
        ),
    };
    format!(
        "import csv\nimport math\nimport os\n\nimport matplotlib.pyplot as plt\n\n\
         here = os.path.dirname(os.path.abspath(__file__))\n\
         with open(os.path.join(here, {csv_name:?})) as f:\n    rows = list(csv.DictReader(f))\n\
         x = [float(r['point_db']) for r in rows]\n\
         s2 = [float(r['sigma2']) for r in rows]\n\
         ser = [float(r['ser']) for r in rows]\n\n\
         fig, ax = plt.subplots()\n\
         ax.semilogy(x, ser, 'o-', label='n = {n}')\n\
         {reference}\
         ax.set_xlabel({xlabel:?})\n\
         ax.set_ylabel('SER')\n\
         ax.grid(True, which='both')\n\
         ax.legend()\n\
         fig.savefig(os.path.join(here, {png:?}))\n",
        n = result.n,
        png = format!("{}.png", csv_name.trim_end_matches(".csv")),
    )
}

/// Writes the CSV and its plot script; returns the script path.
pub fn emit_results(result: &SweepResult, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    std::fs::write(path, results_csv(result)).map_err(|e| Error::io(path, e))?;
    let script = plot_script_path(path);
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    std::fs::write(&script, plot_script(result, &name)).map_err(|e| Error::io(&script, e))?;
    Ok(script)
}
