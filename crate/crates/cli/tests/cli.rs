use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 7
freqs = [3e9]

[grid]
nx = 10
ny = 10
extent = 0.15

[sensors]
layout = "ring"
radius = 0.8
P = 4
Q = 16

[inversion]
max_iters = 4

[surrogate]
layers = [16]
epochs = 30
patience = 30
n_per_config = 4
"#;

fn scatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scatlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = scatlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/fresnel_sample.txt")
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn forward_invert_eval_render() {
    let w = Workspace::new();
    let (cfg, bundle, run) = (w.path("c.toml"), w.path("bundle"), w.path("run.json"));
    ok(&["forward", "--config", s(&cfg), "--out", s(&bundle), "--set", "synthetic.lambda=[2.0, 0.0]"]);
    assert!(bundle.join("manifest.toml").exists());
    assert!(bundle.join("fields_k0_p3.csv").exists());

    let stdout = ok(&[
        "invert", "--config", s(&cfg), "--data", s(&bundle), "--out", s(&run), "--beta", "0.5",
        "--trace", s(&w.path("trace.csv")),
    ]);
    assert!(stdout.contains("Δ = "), "{stdout}");
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&run).unwrap()).unwrap();
    assert_eq!(record["config"]["inversion"]["beta"], 0.5);
    let iterations = record["iterations"].as_u64().unwrap() as usize;
    let trace = std::fs::read_to_string(w.path("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + iterations);

    assert_eq!(ok(&["eval", s(&run), s(&run)]).trim(), "Δ = 0");
    let delta = ok(&["eval", s(&run), s(&bundle)]);
    let value: f64 = delta.trim().trim_start_matches("Δ = ").parse().unwrap();
    assert!(value > 0.0 && value.is_finite());

    let out = w.path("render");
    ok(&["render", s(&run), "--out-dir", s(&out), "--truth", s(&bundle)]);
    for f in ["permittivity.png", "trace.csv", "error.png"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn replaying_a_record_reproduces_it() {
    let w = Workspace::new();
    let (cfg, bundle) = (w.path("c.toml"), w.path("bundle"));
    ok(&["forward", "--config", s(&cfg), "--out", s(&bundle), "--seed", "11", "--set", "synthetic.snr_db=30"]);
    let (a, b) = (w.path("a.json"), w.path("b.json"));
    ok(&["invert", "--config", s(&cfg), "--data", s(&bundle), "--out", s(&a), "--max-iters", "3"]);
    ok(&["invert", "--config", s(&a), "--data", s(&bundle), "--out", s(&b)]);
    let ra = scatlab::io::RunRecord::load(&a).unwrap();
    let rb = scatlab::io::RunRecord::load(&b).unwrap();
    assert_eq!(ra.config, rb.config);
    assert!(ra.max_deviation(&rb) <= 1e-10);

    // Same seed, same noisy data; a different seed changes it.
    let again = w.path("again");
    ok(&["forward", "--config", s(&cfg), "--out", s(&again), "--seed", "11", "--set", "synthetic.snr_db=30"]);
    let read = |d: &Path| std::fs::read_to_string(d.join("fields_k0_p0.csv")).unwrap();
    assert_eq!(read(&bundle), read(&again));
    ok(&["forward", "--config", s(&cfg), "--out", s(&again), "--seed", "12", "--set", "synthetic.snr_db=30"]);
    assert_ne!(read(&bundle), read(&again));
}

#[test]
fn surrogate_pipeline_runs_end_to_end() {
    let w = Workspace::new();
    let (cfg, set, model, bundle) = (w.path("c.toml"), w.path("train.json"), w.path("m.bin"), w.path("b"));
    ok(&["gen-train", "--config", s(&cfg), "--out", s(&set)]);
    ok(&["train-surrogate", "--config", s(&cfg), "--data", s(&set), "--out", s(&model)]);
    let head = std::fs::read(&model).unwrap();
    assert!(head.starts_with(b"SCATLAB-MLP-1\n"));
    ok(&["forward", "--config", s(&cfg), "--out", s(&bundle)]);
    let run = w.path("n.json");
    ok(&[
        "invert", "--config", s(&cfg), "--data", s(&bundle), "--out", s(&run), "--surrogate-mode", "neural",
        "--model", s(&model),
    ]);
    // A model trained for another grid is refused.
    let out = scatlab(&[
        "invert", "--config", s(&cfg), "--data", s(&bundle), "--out", s(&run), "--surrogate-mode", "neural",
        "--model", s(&model), "--set", "grid.nx=12", "--set", "grid.ny=12",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"model_mismatch\""));
}

#[test]
fn import_fresnel_fixture() {
    let w = Workspace::new();
    let out = w.path("fresnel");
    let stdout = ok(&["import-fresnel", s(&fixture()), "--out", s(&out)]);
    assert!(stdout.contains("8 transmitters, 241 receivers each"), "{stdout}");
    let bundle = scatlab::io::DatasetBundle::import(&out).unwrap();
    assert_eq!(bundle.manifest.rx_counts, vec![241; 8]);
    assert_eq!(bundle.manifest.frequencies_hz, vec![4e9]);

    let bad = scatlab(&["import-fresnel", s(&fixture()), "--out", s(&out), "--column-map", "tx=1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn errors_are_machine_readable() {
    let w = Workspace::new();
    let bad = w.path("bad.toml");
    std::fs::write(&bad, "[inversion]\nbetta = 1e-3\n").unwrap();
    let out = scatlab(&["invert", "--config", s(&bad), "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("betta"));

    let out = scatlab(&["invert", "--config", s(&w.path("c.toml")), "--data", s(&w.path("nope")), "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "io");

    let out = scatlab(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
}
