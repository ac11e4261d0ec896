use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

use ismf_core::geometry::{enumerate_images, Shoebox, Vec3};

fn ismf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ismf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Relative path -> SHA-256 of every file under `root`.
fn checksums(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&path).unwrap())));
            }
        }
    }
    out
}

const SCENE: &str = r#"
fs = 16000.0
max_order = 2
mode = "advanced"
room = [5.0, 4.0, 3.0]
source = [1.0, 1.5, 1.6]
source_pattern = { kind = "talker" }

[absorption]
default = [0.1, 0.15, 0.2, 0.3, 0.4, 0.5]
floor = 0.2

[[mics]]
position = [3.0, 2.0, 1.2]
pattern = { kind = "cardioid", order = 1, a = 0.5 }
look = [-1.0, 0.0, 0.0]

[[mics]]
position = [3.1, 2.0, 1.2]
"#;

#[test]
fn rir_table_has_one_row_per_image_and_decomposes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.toml");
    std::fs::write(&scene, SCENE).unwrap();
    let wav = dir.path().join("out/rir.wav");
    let out = ismf(&[
        "rir",
        scene.to_str().unwrap(),
        "--out",
        wav.to_str().unwrap(),
        "--check",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(wav.is_file());
    assert!(dir.path().join("out/rir.json").is_file());
    let table = std::fs::read_to_string(dir.path().join("out/rir.images.tsv")).unwrap();
    let room = Shoebox::new(5.0, 4.0, 3.0).unwrap();
    let images = enumerate_images(&room, Vec3::new(1.0, 1.5, 1.6), 2).unwrap();
    assert_eq!(table.lines().count() - 1, images.len());
    for (line, img) in table.lines().skip(1).zip(&images) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 14);
        assert_eq!(cols[1].parse::<u32>().unwrap(), img.order);
        let r: f64 = cols[5].parse().unwrap();
        assert!((r - img.position.distance(Vec3::new(3.05, 2.0, 1.2))).abs() < 1e-5);
    }
    assert!(stdout(&out).contains("decomposition"));
}

#[test]
fn order_zero_gives_a_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.toml");
    std::fs::write(&scene, SCENE.replace("max_order = 2", "max_order = 0")).unwrap();
    let table = dir.path().join("t.tsv");
    let wav = dir.path().join("r.wav");
    let out = ismf(&[
        "rir",
        scene.to_str().unwrap(),
        "--out",
        wav.to_str().unwrap(),
        "--table",
        table.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(table).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0\t0\t0\t0\t0\t"));
}

#[test]
fn scene_errors_are_located_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.toml");
    std::fs::write(&scene, SCENE.replace("max_order = 2", "max_order = \"two\"")).unwrap();
    let out = ismf(&[
        "rir",
        scene.to_str().unwrap(),
        "--out",
        dir.path().join("r.wav").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    std::fs::write(&scene, SCENE.replace("[1.0, 1.5, 1.6]", "[7.0, 1.5, 1.6]")).unwrap();
    let out = ismf(&[
        "rir",
        scene.to_str().unwrap(),
        "--out",
        dir.path().join("r.wav").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("source"), "{}", stderr(&out));
}

#[test]
fn gen_validates_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ds");
    let missing = dir.path().join("no-such-speech");
    let out = ismf(&[
        "gen",
        "--mode",
        "naive",
        "--n",
        "2",
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--speech-dir",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("speech directory"));
    assert!(!out_dir.exists());

    let out = ismf(&["gen", "--mode", "naive", "--n", "2", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"));

    let out = ismf(&[
        "gen",
        "--mode",
        "loud",
        "--n",
        "2",
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\nmode = \"naive\"\nn = 2\nout = \"ds\"\nworkers = 0\n").unwrap();
    let out = ismf(&["gen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.exists());
}

#[test]
fn gen_eval_report_round_trip_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "profile = \"voicehome\"\nmode = \"advanced\"\nn = 4\nseed = 7\nmax_order = 4\n\n[noise]\nsnr_mean_db = 30.0\n",
    )
    .unwrap();
    let gen = |out: &Path, workers: &str| {
        let o = ismf(&[
            "gen",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    };
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    gen(&a, "1");
    gen(&b, "1");
    gen(&c, "3");
    let sums = checksums(&a);
    assert_eq!(sums.len(), 1 + 2 * 4);
    assert_eq!(sums, checksums(&b));
    assert_eq!(sums, checksums(&c));
    let manifest = std::fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert!(manifest.contains("# snr_mean_db=30.0"));
    assert!(manifest.contains("# max_order=4"));

    let results = dir.path().join("a.tsv");
    let o = ismf(&[
        "eval",
        a.join("manifest.tsv").to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = std::fs::read(&results).unwrap();
    let o = ismf(&[
        "eval",
        a.join("manifest.tsv").to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(first, std::fs::read(&results).unwrap());

    let json = dir.path().join("report.json");
    let o = ismf(&["report", results.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    assert_eq!(table.lines().filter(|l| l.starts_with("a ")).count(), 1);
    assert!(!table.contains("McNemar"));
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(record["rows"].as_array().unwrap().len(), 1);
    assert_eq!(record["comparisons"].as_array().unwrap().len(), 0);

    let o = ismf(&[
        "report",
        results.to_str().unwrap(),
        results.to_str().unwrap(),
        "--names",
        "x,y",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let cmp = &record["comparisons"][0];
    assert_eq!(cmp["mcnemar_p"].as_f64(), Some(1.0));
    assert_eq!(cmp["mae_difference"]["mean"].as_f64(), Some(0.0));
}

#[test]
fn eval_and_report_reject_wrong_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.tsv");
    std::fs::write(&bogus, "# ISMF-RES v1\n#fields\tid\n").unwrap();
    let out = ismf(&[
        "eval",
        bogus.to_str().unwrap(),
        "--out",
        dir.path().join("r.tsv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("ISMF-MAN"), "{}", stderr(&out));
    let out = ismf(&["report", bogus.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let out = ismf(&["report", dir.path().join("missing.tsv").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn runtime_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.toml");
    // A nearly reflection-free room whose reverberation exceeds the length cap.
    let long = SCENE
        .replace("default = [0.1, 0.15, 0.2, 0.3, 0.4, 0.5]", "default = 0.0001")
        .replace("floor = 0.2", "");
    std::fs::write(&scene, long).unwrap();
    let out = ismf(&[
        "rir",
        scene.to_str().unwrap(),
        "--out",
        dir.path().join("r.wav").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("too long"));
}
