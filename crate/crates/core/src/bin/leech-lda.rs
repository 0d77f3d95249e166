use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leech_lda::lattice::{shaping_gain_mc_with, BlockQuantizer, NearestPoint, TriangularGen};
use leech_lda::ldpc::ParityCheck;
use leech_lda::leech::{column_stats, load_g24};
use leech_lda::sim::{self, ExperimentConfig, Mode, Shaping, SweepResult};
use leech_lda::voronoi::{Message, VoronoiCode};
use leech_lda::Error;

#[derive(Parser)]
#[command(
    name = "leech-lda",
    version,
    about = "LDA lattices with Leech-lattice Voronoi shaping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Plain-text key = value configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dual-diagonal parity-check matrix.
    BuildCode(Common),
    /// Check the embedded Leech generator and optionally export it.
    ValidateLeech(Common),
    /// Encode messages (one `u | s` record per line) into lattice points.
    Encode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Parity-check matrix written by build-code; rebuilt from the config otherwise.
        #[arg(long)]
        code: Option<PathBuf>,
    },
    /// Map lattice points (one per line) back to messages.
    Demap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        code: Option<PathBuf>,
    },
    /// SER versus VNR for the infinite constellation.
    SimInfinite(Common),
    /// SER versus Eb/N0 for the Voronoi constellation.
    SimVoronoi(Common),
    /// Monte-Carlo shaping gain of G24 (shaping = leech) or Z^24 (shaping = cubic).
    ShapingGain {
        #[command(flatten)]
        common: Common,
        /// Custom lower-triangular generator in matrix text form.
        #[arg(long)]
        generator: Option<PathBuf>,
    },
}

/// Error classes mapped onto exit codes.
enum Failure {
    Config(String),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::NotPrime(_)
            | Error::PrimeTooLarge(_) => Failure::Config(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Config(e.to_string())),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| Failure::Config(format!("{}: {e}", path.display()))))
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .collect()
}

fn voronoi_code(cfg: &ExperimentConfig, code: Option<&Path>) -> Result<VoronoiCode, Failure> {
    match code {
        Some(path) => Ok(cfg.shape(ParityCheck::load(path)?)?),
        None => Ok(cfg.build_voronoi()?),
    }
}

fn report(result: &SweepResult, out: Option<&Path>) -> Result<(), Failure> {
    match result.mode {
        sim::Mode::Infinite => eprintln!("n = {}, rate {:.5} bits/dim", result.n, result.rate),
        sim::Mode::Voronoi => {
            let power = result.power.expect("Voronoi sweeps estimate power");
            eprintln!(
                "n = {}, R_C = {:.5} bits/dim, capacity at Eb/N0 = {:.3} dB, P = {:.4} ± {:.4}",
                result.n,
                result.rate,
                result.capacity_ebn0_db(),
                power.power,
                power.std_err
            );
        }
    }
    for r in &result.points {
        eprintln!(
            "{:>8.3} dB  frames {:>6}  SER {:.3e}  FER {:.3e}  2Q(p/2σ) {:.3e}  iters {:.1}",
            r.point_db,
            r.frames,
            r.ser(result.n),
            r.fer(),
            r.pz_bound,
            r.mean_iters()
        );
    }
    for i in result.monotonicity_warnings() {
        eprintln!("warning: SER increases at point {i} beyond Monte-Carlo noise");
    }
    match out {
        Some(path) => {
            let script = sim::emit_results(result, path)?;
            eprintln!("wrote {} and {}", path.display(), script.display());
            Ok(())
        }
        None => write_output(None, &sim::results_csv(result)),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::BuildCode(common) => {
            let cfg = load_config(&common)?;
            let h = cfg.build_code()?;
            eprintln!(
                "n = {}, k = {}, p = {}, nnz = {}, rate = {:.4}",
                h.n(),
                h.k(),
                h.p(),
                h.nnz(),
                h.rate()
            );
            write_output(common.out.as_deref(), &h.to_text())
        }
        Command::ValidateLeech(common) => {
            let g = load_g24().map_err(|e| Failure::Validation(e.to_string()))?;
            let stats = column_stats(g.g24());
            eprintln!(
                "G24 ok: det = {}, minimum norm 32, column nonzeros mean {:.3} min {} max {}",
                g.g24().volume(),
                stats.mean,
                stats.min,
                stats.max
            );
            if let Some(path) = &common.out {
                write_output(Some(path), &g.g24().to_text())?;
            }
            Ok(())
        }
        Command::Encode { common, input, code } => {
            let mut cfg = load_config(&common)?;
            cfg.mode = Mode::Voronoi;
            cfg.validate()?;
            let vc = voronoi_code(&cfg, code.as_deref())?;
            let mut text = String::new();
            for line in read_lines(&input)? {
                let m = Message::parse(&line, vc.p())?;
                let x = vc.encode(&m)?;
                let row: Vec<String> = x.iter().map(i64::to_string).collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
            write_output(common.out.as_deref(), &text)
        }
        Command::Demap { common, input, code } => {
            let mut cfg = load_config(&common)?;
            cfg.mode = Mode::Voronoi;
            cfg.validate()?;
            let vc = voronoi_code(&cfg, code.as_deref())?;
            let mut text = String::new();
            for (i, line) in read_lines(&input)?.iter().enumerate() {
                let x = line
                    .split_whitespace()
                    .map(|t| t.parse::<i64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| Failure::Config(format!("line {}: {e}", i + 1)))?;
                text.push_str(&vc.demap(&x)?.to_string());
                text.push('\n');
            }
            write_output(common.out.as_deref(), &text)
        }
        Command::SimInfinite(common) => {
            let mut cfg = load_config(&common)?;
            cfg.mode = Mode::Infinite;
            report(&sim::run_infinite(&cfg)?, common.out.as_deref())
        }
        Command::SimVoronoi(common) => {
            let mut cfg = load_config(&common)?;
            cfg.mode = Mode::Voronoi;
            cfg.validate()?;
            report(&sim::run_voronoi(&cfg)?, common.out.as_deref())
        }
        Command::ShapingGain { common, generator } => {
            let cfg = load_config(&common)?;
            let quantizer: Box<dyn NearestPoint> = match (&generator, cfg.shaping) {
                (Some(path), _) => Box::new(BlockQuantizer::new(TriangularGen::load(path)?)),
                (None, Shaping::Leech) => Box::new(
                    load_g24()
                        .map_err(|e| Failure::Validation(e.to_string()))?
                        .quantizer(1)?,
                ),
                (None, Shaping::Cubic) => Box::new(BlockQuantizer::new(TriangularGen::identity(24))),
            };
            let est = shaping_gain_mc_with(quantizer.as_ref(), cfg.samples, cfg.seed, cfg.workers)?;
            let text = format!(
                "samples = {}\nsecond_moment = {}\nstd_err = {}\ngain_db = {:.4}\nci95_db = [{:.4}, {:.4}]\n",
                est.samples, est.second_moment, est.std_err, est.gain_db, est.ci_low_db, est.ci_high_db
            );
            write_output(common.out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
