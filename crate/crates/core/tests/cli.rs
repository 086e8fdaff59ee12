use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use epn::data::SceneArchive;
use epn::manifest::{sha256_file, RunManifest};
use epn::metrics::MetricReport;
use epn::predict::PredictionRecord;
use epn::train::{read_log, Checkpoint};

fn epn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epn"))
        .args(args)
        .current_dir(dir)
        .env_remove("EPN_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SYNTH: &str = "num_scenes = 4\nvehicles_per_scene = 4\nseed = 3\n";
const TRAIN: &str = "[train]\nbatch_size = 8\nepochs = 2\nval_limit = 4\n";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("synth.toml"), SYNTH).unwrap();
        std::fs::write(dir.path().join("run.toml"), TRAIN).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        epn(self.dir.path(), args)
    }

    fn prepared(&self) -> &Self {
        ok(&self.run(&["prepare-data", "--synthetic-config", "synth.toml", "--out", "scenes.json"]));
        self
    }

    fn trained(&self, out: &str, extra: &[&str]) -> &Self {
        let mut args = vec!["train", "--data", "scenes.json", "--config", "run.toml", "--out", out];
        args.extend(extra);
        ok(&self.run(&args));
        self
    }
}

#[test]
fn prepare_data_writes_archive_summary_and_manifest() {
    let ws = Workspace::new();
    let out = ws.run(&["prepare-data", "--synthetic-config", "synth.toml", "--out", "scenes.json"]);
    ok(&out);
    let archive = SceneArchive::load(&ws.path("scenes.json")).unwrap();
    let (tr, va, te) = archive.split.counts();
    let n = tr + va + te;
    assert_eq!((tr, va, te), epn::data::split::split_sizes(n, (7, 1, 2)));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("train {tr}")) && stdout.contains(&format!("test {te}")), "{stdout}");
    let manifest = RunManifest::load(&ws.path("scenes.json.manifest.json")).unwrap();
    assert_eq!(manifest.command, "prepare-data");
    assert_eq!(manifest.seed, 42);
    assert_eq!(archive.header.manifest.as_deref(), Some("scenes.json.manifest.json"));
}

#[test]
fn highd_table_is_downsampled_to_five_hz() {
    let ws = Workspace::new();
    let mut csv = String::from("id,frame,x,y,width,height,xVelocity,yVelocity,xAcceleration,laneId\n");
    for id in 1..=3 {
        for frame in 0..250 {
            let x = 100.0 + 15.0 * id as f64 + 25.0 * frame as f64 / 25.0;
            csv.push_str(&format!("{id},{frame},{x:.3},10.0,4.5,1.8,25,0,0,2\n"));
        }
    }
    std::fs::write(ws.path("tracks.csv"), csv).unwrap();
    ok(&ws.run(&["prepare-data", "--input", "tracks.csv", "--schema", "highd", "--out", "h.json"]));
    let archive = SceneArchive::load(&ws.path("h.json")).unwrap();
    assert_eq!(archive.header.hz, 5.0);
    let w = archive.split.all().next().expect("at least one window");
    // 25 m/s at 5 Hz: 5 m per step.
    let s = &w.target.states;
    assert!((s[1].y - s[0].y - 5.0).abs() < 1e-9);
}

#[test]
fn missing_input_fails_with_message() {
    let ws = Workspace::new();
    let out = ws.run(&["prepare-data", "--input", "nope.csv", "--schema", "ngsim", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
    let out = ws.run(&["plot", "--prediction-record", "missing.json", "--out", "f.svg"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!ws.path("f.svg").exists());
}

#[test]
fn malformed_table_is_a_data_error_with_line() {
    let ws = Workspace::new();
    std::fs::write(ws.path("bad.csv"), "vehicle_id,timestamp,x,y\n1,0.0,0,0\n1,oops,0,1\n").unwrap();
    let out = ws.run(&["prepare-data", "--input", "bad.csv", "--source-hz", "5", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("bad.csv"), "{err}");
}

#[test]
fn bad_config_exits_with_config_code() {
    let ws = Workspace::new();
    ws.prepared();
    std::fs::write(ws.path("broken.toml"), "[train]\nbatch_size = 0\n").unwrap();
    let out = ws.run(&["train", "--data", "scenes.json", "--config", "broken.toml", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_divergence_code() {
    let ws = Workspace::new();
    ws.prepared();
    std::fs::write(ws.path("hot.toml"), "[train]\nbatch_size = 8\nlearning_rate = 1e300\nclip_norm = 1e300\nprecision = \"f64\"\n").unwrap();
    let out = ws.run(&["train", "--data", "scenes.json", "--config", "hot.toml", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn train_evaluate_predict_plot_round_trip() {
    let ws = Workspace::new();
    ws.prepared().trained("m.ckpt", &[]);
    for f in ["m.ckpt", "m.ckpt.last", "m.ckpt.log.jsonl", "m.ckpt.manifest.json"] {
        assert!(ws.path(f).exists(), "{f} missing");
    }
    let manifest = RunManifest::load(&ws.path("m.ckpt.manifest.json")).unwrap();
    assert_eq!(manifest.checkpoint_sha256.unwrap(), sha256_file(&ws.path("m.ckpt")).unwrap());
    let ckpt = Checkpoint::load(&ws.path("m.ckpt")).unwrap();
    assert_eq!(ckpt.manifest.as_deref(), Some("m.ckpt.manifest.json"));
    let log = read_log(&ws.path("m.ckpt.log.jsonl")).unwrap();
    assert_eq!(log.iter().filter(|r| r.split == "val").count(), 2);

    let mut ade = Vec::new();
    for k in ["1", "6"] {
        let report = format!("r{k}.json");
        let out = ws.run(&["evaluate", "--data", "scenes.json", "--checkpoint", "m.ckpt", "--k", k, "--report", &report]);
        ok(&out);
        let r: MetricReport = serde_json::from_str(&std::fs::read_to_string(ws.path(&report)).unwrap()).unwrap();
        let horizons: Vec<&str> = r.rmse_at.iter().map(|(h, _)| h.as_str()).collect();
        assert_eq!(horizons, ["1s", "2s", "3s", "4s", "5s"]);
        assert!(String::from_utf8_lossy(&out.stdout).contains("5s"));
        ade.push(r.ade);
    }
    assert!(ade[1] <= ade[0], "best-of-6 {} > best-of-1 {}", ade[1], ade[0]);

    let archive = SceneArchive::load(&ws.path("scenes.json")).unwrap();
    let id = archive.split.test[0].window_id.to_string();
    ok(&ws.run(&["predict", "--data", "scenes.json", "--checkpoint", "m.ckpt", "--scene-id", &id, "--k", "6", "--out", "p.json"]));
    let record = PredictionRecord::load(&ws.path("p.json")).unwrap();
    assert_eq!(record.entries.len(), 1);
    assert_eq!(record.entries[0].prediction.hypotheses.len(), 6);

    ok(&ws.run(&["plot", "--prediction-record", "p.json", "--out", "a.svg"]));
    ok(&ws.run(&["plot", "--prediction-record", "p.json", "--out", "b.svg"]));
    let a = std::fs::read(ws.path("a.svg")).unwrap();
    assert_eq!(a, std::fs::read(ws.path("b.svg")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().matches(r#"class="hypothesis""#).count(), 6);
}

#[test]
fn evaluate_rejects_mismatched_config() {
    let ws = Workspace::new();
    ws.prepared().trained("m.ckpt", &["--max-steps", "1"]);
    std::fs::write(ws.path("other.toml"), "[model]\nlatent_width = 8\n").unwrap();
    let out = ws.run(&["evaluate", "--data", "scenes.json", "--checkpoint", "m.ckpt", "--config", "other.toml"]);
    assert_eq!(out.status.code(), Some(5));
    std::fs::write(ws.path("junk.ckpt"), "{}").unwrap();
    let out = ws.run(&["evaluate", "--data", "scenes.json", "--checkpoint", "junk.ckpt"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn resumed_training_reproduces_the_logged_curve() {
    let ws = Workspace::new();
    ws.prepared().trained("full.ckpt", &[]);
    ws.trained("half.ckpt", &["--epochs", "1"]);
    ok(&ws.run(&["train", "--data", "scenes.json", "--resume", "half.ckpt.last", "--epochs", "2", "--out", "half.ckpt"]));
    let full = read_log(&ws.path("full.ckpt.log.jsonl")).unwrap();
    let resumed = read_log(&ws.path("half.ckpt.log.jsonl")).unwrap();
    assert_eq!(full, resumed);
    let a = Checkpoint::load(&ws.path("full.ckpt.last")).unwrap();
    let b = Checkpoint::load(&ws.path("half.ckpt.last")).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn no_plan_flag_removes_the_plan_pathway() {
    let ws = Workspace::new();
    ws.prepared().trained("np.ckpt", &["--no-plan", "--max-steps", "1"]);
    let ckpt = Checkpoint::load(&ws.path("np.ckpt")).unwrap();
    assert!(!ckpt.train.ablation.use_plan);
    assert!(ckpt.params.iter().all(|p| !p.name.starts_with("plan.")));
    assert!(ckpt.params.iter().any(|p| p.name.starts_with("pool.plan.")));
}

#[test]
fn data_dir_variable_supplies_the_default_archive() {
    let ws = Workspace::new();
    ws.prepared();
    let elsewhere = tempfile::tempdir().unwrap();
    std::fs::write(elsewhere.path().join("run.toml"), TRAIN).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_epn"))
        .args(["train", "--config", "run.toml", "--max-steps", "1", "--out", "m.ckpt"])
        .current_dir(elsewhere.path())
        .env("EPN_DATA_DIR", ws.dir.path())
        .output()
        .unwrap();
    ok(&out);
    let manifest = RunManifest::load(&elsewhere.path().join("m.ckpt.manifest.json")).unwrap();
    assert_eq!(manifest.inputs[0], ws.path("scenes.json").display().to_string());
}
