//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run a subset with `cargo test --release --test acceptance -- 3 5`.

use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leech_lda::field::{FieldVec, Prime};
use leech_lda::lattice::{shaping_gain_mc, shaping_gain_mc_with, TriangularGen};
use leech_lda::ldpc::{CodeParams, ParityCheck};
use leech_lda::leech::{column_stats, count_vectors_below, leech, load_g24};
use leech_lda::sim::{
    capacity_ebn0_db, estimate_power, results_csv, run, run_voronoi_with, ExperimentConfig, Mode, PointRecord,
    PowerEstimate, SweepResult,
};
use leech_lda::voronoi::{Message, VoronoiCode};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Verdict); 10] = [
        (1, "coset leaders cover the quotient bijectively", coset_bijection),
        (2, "demap inverts encode", roundtrip),
        (3, "Leech generator identity", leech_identity),
        (4, "shaping gain of G24 and Z^24", shaping_gain),
        (5, "rate formula and capacity anchor", rate_formula),
        (6, "infinite constellation waterfall and bound", infinite_constellation),
        (7, "Voronoi constellation reaches SER < 1e-4", voronoi_constellation),
        (8, "MMSE scaling shifts the waterfall", mmse_shift),
        (9, "encode + demap scale linearly in n", linear_complexity),
        (10, "results independent of worker count", determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        println!(
            "{} {id:>2} {name}: {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

/// A small random instance: dual-diagonal code and random triangular `Γ`.
struct Instance {
    code: VoronoiCode,
    gamma: Vec<Vec<i64>>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    // (k, d_c, d_r) shapes with n <= 4 that admit a girth-6 dual-diagonal matrix.
    const SHAPES: [(usize, usize, usize); 4] = [(1, 1, 1), (2, 1, 2), (2, 1, 1), (3, 1, 3)];
    let (k, d_c, d_r) = SHAPES[rng.random_range(0..SHAPES.len())];
    let p = Prime::new([2, 3][rng.random_range(0..2)]).unwrap();
    let params = CodeParams::new(k, p, d_c, d_r, 0).unwrap();
    let (n, m) = (params.n(), params.checks());
    let mut left: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        left.swap(i, rng.random_range(0..=i));
    }
    let mut coeff = || rng.random_range(1..p.get());
    let rows: Vec<Vec<(usize, u32)>> = (0..m)
        .map(|i| {
            let mut row: Vec<(usize, u32)> = left[i * d_r..(i + 1) * d_r].iter().map(|&c| (c, coeff())).collect();
            if i > 0 {
                row.push((k + i - 1, coeff()));
            }
            row.push((k + i, coeff()));
            row
        })
        .collect();
    let h = ParityCheck::from_rows(params, rows).unwrap();
    let gamma: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match j {
                    _ if j < i => rng.random_range(-3..=3),
                    _ if j == i => rng.random_range(1..=3),
                    _ => 0,
                })
                .collect()
        })
        .collect();
    let code = VoronoiCode::new(h, TriangularGen::from_dense(&gamma).unwrap()).unwrap();
    Instance { code, gamma }
}

/// Unique representative of `x + pΓ` in the box `0 <= x_j < p γ_jj`.
fn reduce_mod_coarse(x: &[i64], gamma: &[Vec<i64>], p: i64) -> Vec<i64> {
    let mut x = x.to_vec();
    for j in (0..x.len()).rev() {
        let q = x[j].div_euclid(p * gamma[j][j]);
        for (xi, g) in x.iter_mut().zip(&gamma[j]) {
            *xi -= q * p * g;
        }
    }
    x
}

/// Every vector of the box `0 <= x_j < bounds_j`.
fn box_points(bounds: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for &b in bounds {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..b).map(move |t| {
                    let mut w = v.clone();
                    w.push(t);
                    w
                })
            })
            .collect();
    }
    out
}

fn all_messages(code: &VoronoiCode) -> Vec<Message> {
    let p = code.p();
    let us = box_points(&vec![p.as_i64(); code.k()]);
    let ss = box_points(code.s_bounds());
    us.iter()
        .flat_map(|u| {
            let u = FieldVec::new(u.iter().map(|&v| v as u32).collect(), p).unwrap();
            ss.iter().map(move |s| Message::new(u.clone(), s.clone()))
        })
        .collect()
}

fn coset_bijection() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let instances = 250;
    let mut failures = 0;
    let mut classes = 0;
    for _ in 0..instances {
        let Instance { code, gamma } = random_instance(&mut rng);
        let p = code.p().as_i64();
        let bounds: Vec<i64> = (0..code.n()).map(|j| p * gamma[j][j]).collect();
        let quotient: HashSet<Vec<i64>> = box_points(&bounds)
            .into_iter()
            .filter(|x| {
                code.h()
                    .is_codeword(&x.iter().map(|&v| v.rem_euclid(p) as u32).collect::<Vec<_>>())
            })
            .collect();
        let mut hit = HashSet::new();
        let mut ok = true;
        for m in all_messages(&code) {
            let leader = code.coset_leader(&m).unwrap();
            let x = code.encode(&m).unwrap();
            let r = reduce_mod_coarse(&leader, &gamma, p);
            ok &= reduce_mod_coarse(&x, &gamma, p) == r;
            ok &= quotient.contains(&r);
            ok &= hit.insert(r);
        }
        ok &= hit.len() == quotient.len();
        classes += quotient.len();
        failures += usize::from(!ok);
    }
    verdict(
        failures == 0,
        format!("{instances} instances, {classes} cosets checked, {failures} failures"),
    )
}

fn voronoi_config(n: usize) -> ExperimentConfig {
    let cfg = ExperimentConfig {
        mode: Mode::Voronoi,
        n,
        p: 13,
        alpha: 1,
        ..ExperimentConfig::default()
    };
    cfg.validate().unwrap();
    cfg
}

fn roundtrip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut small = 0;
    let mut failures = 0;
    for _ in 0..100 {
        let Instance { code, .. } = random_instance(&mut rng);
        for m in all_messages(&code) {
            small += 1;
            failures += usize::from(code.demap(&code.encode(&m).unwrap()).ok() != Some(m));
        }
    }
    let code = voronoi_config(240).build_voronoi().unwrap();
    let messages = 10_000;
    for _ in 0..messages {
        let m = Message::random(&code, &mut rng);
        failures += usize::from(code.demap(&code.encode(&m).unwrap()).ok() != Some(m));
    }
    verdict(
        failures == 0,
        format!("{small} exhaustive small-instance messages + {messages} at n = 240, {failures} failures"),
    )
}

fn leech_identity() -> Verdict {
    let g = match load_g24() {
        Ok(g) => g,
        Err(e) => return verdict(false, e.to_string()),
    };
    let g24 = g.g24();
    let det_ok = g24.volume() == BigUint::from(1u64 << 36);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let bad_norms = (0..1000)
        .filter(|_| {
            let z: Vec<i64> = (0..24).map(|_| rng.random_range(-5..=5)).collect();
            g24.point(&z).iter().map(|v| v * v).sum::<i64>() % 16 != 0
        })
        .count();
    let below_32 = count_vectors_below(g24, 32.0) - 1;
    let at_32 = count_vectors_below(g24, 32.5) - 1 - below_32;
    let stats = column_stats(g24);
    let stats_ok = stats.min == 1 && stats.max == 21 && (stats.mean - 5.625).abs() < 1e-12;
    verdict(
        det_ok && bad_norms == 0 && below_32 == 0 && at_32 > 0 && stats_ok,
        format!(
            "det {}, {bad_norms}/1000 norms not ≡ 0 mod 16, {below_32} nonzero vectors below 32, \
             {at_32} of norm 32, column nonzeros avg {} min {} max {}",
            g24.volume(),
            stats.mean,
            stats.min,
            stats.max
        ),
    )
}

fn shaping_gain() -> Verdict {
    let samples = 1_000_000;
    let q = leech().quantizer(1).unwrap();
    let g24 = shaping_gain_mc_with(&q, samples, 404, 1).unwrap();
    let z24 = shaping_gain_mc(&TriangularGen::identity(24), samples, 405, 1).unwrap();
    verdict(
        (g24.gain_db - 1.03).abs() <= 0.05 && z24.gain_db.abs() <= 0.02,
        format!(
            "G24 {:.4} dB [{:.4}, {:.4}], Z^24 {:.4} dB over {samples} samples",
            g24.gain_db, g24.ci_low_db, g24.ci_high_db, z24.gain_db
        ),
    )
}

fn rate_formula() -> Verdict {
    let code = voronoi_config(240).build_voronoi().unwrap();
    let rate = code.code_rate();
    let capacity = capacity_ebn0_db(rate);
    verdict(
        (rate - 2.7337).abs() <= 1e-4 && (capacity - 8.98).abs() <= 0.01,
        format!("R_C = {rate:.5} bits/dim (target 2.7337 ± 0.0001), capacity at Eb/N0 = {capacity:.3} dB"),
    )
}

/// One-sided 95% upper limit on the coordinate error rate.
fn ser_upper(r: &PointRecord, n: usize) -> f64 {
    let e = r.coord_errors as f64;
    (e + 1.96 * e.sqrt() + 3.0) / (r.frames * n) as f64
}

fn curve(result: &SweepResult) -> String {
    result
        .points
        .iter()
        .map(|r| format!("{:.2}:{:.2e}", r.point_db, r.ser(result.n)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn infinite_constellation() -> Verdict {
    let cfg = ExperimentConfig {
        mode: Mode::Infinite,
        n: 9999,
        p: 13,
        d_c: 2,
        d_r: 1,
        sweep: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
        trials: 40,
        target_errors: 100,
        seed: 606,
        ..ExperimentConfig::default()
    };
    let result = run(&cfg).unwrap();
    let n = result.n;
    let bound_ok = result.points.iter().all(|r| ser_upper(r, n) >= r.pz_bound);
    let mut best_drop: f64 = 0.0;
    for (i, a) in result.points.iter().enumerate() {
        for b in &result.points[i + 1..] {
            if b.point_db - a.point_db <= 0.5 + 1e-9 {
                best_drop = best_drop.max(a.ser(n) / ser_upper(b, n));
            }
        }
    }
    verdict(
        bound_ok && best_drop >= 1e3,
        format!(
            "SER {}; bound respected: {bound_ok}; largest drop within 0.5 dB {:.2} decades",
            curve(&result),
            best_drop.log10()
        ),
    )
}

/// The n = 10008 Leech constellation shared by the Voronoi criteria.
fn large_constellation() -> &'static (ExperimentConfig, VoronoiCode, PowerEstimate) {
    static LARGE: OnceLock<(ExperimentConfig, VoronoiCode, PowerEstimate)> = OnceLock::new();
    LARGE.get_or_init(|| {
        let mut cfg = voronoi_config(10_008);
        cfg.seed = 707;
        let code = cfg.build_voronoi().unwrap();
        let power = estimate_power(&code, 2000, cfg.seed, 1).unwrap();
        (cfg, code, power)
    })
}

fn voronoi_constellation() -> Verdict {
    let (base, code, power) = large_constellation();
    let cfg = ExperimentConfig {
        sweep: vec![9.9, 10.1, 10.3, 10.5],
        trials: 20,
        target_errors: 100,
        ..base.clone()
    };
    let result = run_voronoi_with(&cfg, code, *power).unwrap();
    let reached = result
        .points
        .iter()
        .find(|r| r.point_db <= 10.5 && ser_upper(r, result.n) < 1e-4)
        .map(|r| r.point_db);
    verdict(
        reached.is_some(),
        format!(
            "P = {:.3}, SER {}; SER < 1e-4 (95% upper limit) first at {:?} dB, {:.2} dB from capacity {:.2} dB",
            power.power,
            curve(&result),
            reached,
            reached.map_or(f64::NAN, |db| db - result.capacity_ebn0_db()),
            result.capacity_ebn0_db()
        ),
    )
}

/// Point where log SER falls through `level`, by linear interpolation in dB.
/// A point without errors counts as half an error.
fn crossing(result: &SweepResult, level: f64) -> Option<f64> {
    let log_ser = |r: &PointRecord| (r.ser(result.n).max(0.5 / (r.frames * result.n) as f64)).log10();
    result.points.windows(2).find_map(|w| {
        let (a, b) = (log_ser(&w[0]), log_ser(&w[1]));
        let l = level.log10();
        (a >= l && b < l).then(|| w[0].point_db + (a - l) / (a - b) * (w[1].point_db - w[0].point_db))
    })
}

fn mmse_shift() -> Verdict {
    let (base, code, power) = large_constellation();
    let cfg = ExperimentConfig {
        sweep: (0..8).map(|i| 9.75 + 0.05 * i as f64).collect(),
        trials: 12,
        target_errors: usize::MAX,
        ..base.clone()
    };
    let off = run_voronoi_with(&cfg, code, *power).unwrap();
    let on = run_voronoi_with(&ExperimentConfig { mmse: true, ..cfg }, code, *power).unwrap();
    let levels = [1e-1, 10f64.powf(-4.0 / 3.0), 10f64.powf(-5.0 / 3.0), 1e-2];
    let shifts: Vec<Option<f64>> = levels
        .iter()
        .map(|&l| Some(crossing(&off, l)? - crossing(&on, l)?))
        .collect();
    let mean = shifts
        .iter()
        .copied()
        .sum::<Option<f64>>()
        .map(|s| s / levels.len() as f64);
    verdict(
        mean.is_some_and(|d| (0.03..=0.15).contains(&d)),
        format!(
            "off {}; on {}; shift at SER 1e-1..1e-2 {:?} dB, mean {:?} dB",
            curve(&off),
            curve(&on),
            shifts
                .iter()
                .map(|s| s.map(|d| (d * 1000.0).round() / 1000.0))
                .collect::<Vec<_>>(),
            mean.map(|d| (d * 1000.0).round() / 1000.0)
        ),
    )
}

fn linear_complexity() -> Verdict {
    let sizes = [240usize, 2400, 24_000];
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut times = Vec::new();
    for &n in &sizes {
        let code = voronoi_config(n).build_voronoi().unwrap();
        let reps = (240_000 / n).max(10);
        let messages: Vec<Message> = (0..reps).map(|_| Message::random(&code, &mut rng)).collect();
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            for m in &messages {
                let x = code.encode(m).unwrap();
                assert_eq!(&code.demap(&x).unwrap(), m);
            }
            best = best.min(start.elapsed().as_secs_f64() / reps as f64);
        }
        times.push(best);
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    verdict(
        (slope - 1.0).abs() <= 0.15,
        format!(
            "per-message time {} ; fitted exponent {slope:.3}",
            sizes
                .iter()
                .zip(&times)
                .map(|(n, t)| format!("n={n}: {:.3} ms", t * 1e3))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn determinism() -> Verdict {
    let configs = [
        ExperimentConfig {
            mode: Mode::Infinite,
            n: 999,
            sweep: vec![0.0, 0.5, 1.5],
            trials: 24,
            target_errors: 50,
            seed: 1010,
            timing: false,
            ..ExperimentConfig::default()
        },
        ExperimentConfig {
            mode: Mode::Voronoi,
            n: 240,
            sweep: vec![8.0, 10.0, 12.0],
            trials: 24,
            target_errors: 50,
            mmse: true,
            power_samples: 2000,
            seed: 1011,
            timing: false,
            ..ExperimentConfig::default()
        },
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for cfg in configs {
        let runs: Vec<SweepResult> = [1, 8, 1]
            .iter()
            .map(|&w| {
                run(&ExperimentConfig {
                    workers: w,
                    ..cfg.clone()
                })
                .unwrap()
            })
            .collect();
        let csv: Vec<String> = runs.iter().map(results_csv).collect();
        let counts = |r: &SweepResult| -> Vec<(usize, usize, usize)> {
            r.points
                .iter()
                .map(|p| (p.frames, p.coord_errors, p.frame_errors))
                .collect()
        };
        let same = csv.iter().all(|c| c == &csv[0]) && runs.iter().all(|r| counts(r) == counts(&runs[0]));
        ok &= same;
        detail.push(format!(
            "{:?} n = {}: {:?} identical = {same}",
            cfg.mode,
            cfg.n,
            counts(&runs[0])
        ));
    }
    verdict(ok, detail.join("; "))
}
