use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use leech_lda::lattice::TriangularGen;
use leech_lda::ldpc::ParityCheck;
use leech_lda::sim::{ExperimentConfig, CSV_HEADER};
use leech_lda::voronoi::Message;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leech-lda"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn build_code_writes_a_valid_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "n = 48\np = 13\nseed = 4\n");
    let out_path = dir.path().join("h.txt");
    let out = cli(&["build-code", "--config", &cfg, "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let h = ParityCheck::load(&out_path).unwrap();
    assert_eq!((h.n(), h.k(), h.p().get()), (48, 16, 13));
    assert_eq!(h.params().seed, 4);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "n = 48\nseed = 4\n");
    let a = cli(&["build-code", "--config", &cfg, "--seed", "9"]);
    let expected = ExperimentConfig::parse("n = 48\nseed = 9\n").unwrap();
    expected.validate().unwrap();
    assert_eq!(
        String::from_utf8(a.stdout).unwrap(),
        expected.build_code().unwrap().to_text()
    );
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "p = 12\n",
        "n = 50\n",
        "colour = blue\n",
        "trials = many\n",
        "workers = 0\n",
    ] {
        let cfg = write(dir.path(), "bad.cfg", text);
        let out = cli(&["build-code", "--config", &cfg]);
        assert_eq!(code(&out), 1, "{text:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = dir.path().join("absent.cfg");
    assert_eq!(code(&cli(&["sim-infinite", "--config", missing.to_str().unwrap()])), 1);
}

#[test]
fn validate_leech_exports_generator() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g24.txt");
    let out = cli(&["validate-leech", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let g = TriangularGen::load(&path).unwrap();
    assert_eq!(g.dim(), 24);
    assert_eq!(g.volume(), num_bigint::BigUint::from(1u64 << 36));
}

#[test]
fn encode_demap_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = "n = 48\np = 13\nseed = 2\n";
    let cfg = write(dir.path(), "c.cfg", cfg_text);
    let h_path = dir.path().join("h.txt");
    assert_eq!(
        code(&cli(&[
            "build-code",
            "--config",
            &cfg,
            "--out",
            h_path.to_str().unwrap()
        ])),
        0
    );

    let mut parsed = ExperimentConfig::parse(cfg_text).unwrap();
    parsed.mode = leech_lda::sim::Mode::Voronoi;
    let vc = parsed.shape(ParityCheck::load(&h_path).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let messages: Vec<String> = (0..20).map(|_| Message::random(&vc, &mut rng).to_string()).collect();
    let msg_path = write(dir.path(), "m.txt", &(messages.join("\n") + "\n"));

    let x_path = dir.path().join("x.txt");
    let out = cli(&[
        "encode",
        "--config",
        &cfg,
        "--code",
        h_path.to_str().unwrap(),
        "--input",
        &msg_path,
        "--out",
        x_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let points = fs::read_to_string(&x_path).unwrap();
    assert_eq!(points.lines().count(), 20);

    let out = cli(&[
        "demap",
        "--config",
        &cfg,
        "--code",
        h_path.to_str().unwrap(),
        "--input",
        x_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let decoded: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(decoded, messages);

    // Without --code the matrix is rebuilt from the same seed.
    let out = cli(&["demap", "--config", &cfg, "--input", x_path.to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 20);
}

#[test]
fn invalid_points_and_messages_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "n = 48\np = 13\n");
    let mut point = vec!["0"; 48];
    point[5] = "1";
    let x = write(dir.path(), "x.txt", &(point.join(" ") + "\n"));
    assert_eq!(code(&cli(&["demap", "--config", &cfg, "--input", &x])), 2);

    let u = vec!["0"; 16].join(" ");
    let mut s = vec!["0"; 48];
    s[0] = "8";
    let m = write(dir.path(), "m.txt", &format!("{u} | {}\n", s.join(" ")));
    assert_eq!(code(&cli(&["encode", "--config", &cfg, "--input", &m])), 2);
}

#[test]
fn sim_infinite_writes_csv_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.cfg",
        "mode = infinite\nn = 300\nsweep = 0.5, 3\ntrials = 4\ntiming = false\n",
    );
    let csv = dir.path().join("r.csv");
    let out = cli(&["sim-infinite", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(dir.path().join("r.plot.py").exists());
}

#[test]
fn shaping_gain_of_cubic_lattice_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "shaping = cubic\nsamples = 20000\n");
    let out = cli(&["shaping-gain", "--config", &cfg]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let gain: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("gain_db = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(gain.abs() < 0.05, "{gain}");
}
