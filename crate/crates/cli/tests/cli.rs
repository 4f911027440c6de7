//! End-to-end CLI checks through the real binary: determinism, identity
//! plumbing, exit codes, and output formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn murk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_murk"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = murk().args(args).output().expect("spawn murk");
    assert!(
        out.status.success(),
        "murk {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn dir_digest(dir: &Path, skip_timing: bool) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap().flatten() {
            let p = entry.path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(dir, &mut files);
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let bytes = if skip_timing && rel.ends_with("loss.csv") {
                strip_last_column(&fs::read(&p).unwrap())
            } else {
                fs::read(&p).unwrap()
            };
            (rel, bytes)
        })
        .collect()
}

/// Drop the trailing (timing) column of a CSV byte blob.
fn strip_last_column(bytes: &[u8]) -> Vec<u8> {
    let text = String::from_utf8_lossy(bytes);
    text.lines()
        .map(|l| match l.rfind(',') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}

#[test]
fn synth_is_byte_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for out in [&a, &b] {
        let out_s = out.display().to_string();
        run_ok(&[
            "synth", "--kind", "underwater", "--n", "3", "--size", "20x16", "--ext", "ppm",
            "--seed", "9", "--out", &out_s, "--quiet",
        ]);
    }
    assert_eq!(dir_digest(&a, false), dir_digest(&b, false));

    let c_s = c.display().to_string();
    run_ok(&[
        "synth", "--kind", "underwater", "--n", "3", "--size", "20x16", "--ext", "ppm",
        "--seed", "10", "--out", &c_s, "--quiet",
    ]);
    assert_ne!(dir_digest(&a, false), dir_digest(&c, false));
}

#[test]
fn prepare_prints_counts_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    run_ok(&[
        "synth", "--kind", "noise", "--sigma", "25", "--n", "2", "--size", "16x16", "--ext", "ppm",
        "--seed", "3", "--out", &raw.display().to_string(), "--quiet",
    ]);

    let p1 = tmp.path().join("prep1");
    let out = run_ok(&[
        "prepare", "--data", &raw.display().to_string(), "--out", &p1.display().to_string(),
        "--ext", "ppm", "--seed", "5", "--quiet",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("train=5 test=5"), "stdout: {stdout}");

    let p2 = tmp.path().join("prep2");
    run_ok(&[
        "prepare", "--data", &raw.display().to_string(), "--out", &p2.display().to_string(),
        "--ext", "ppm", "--seed", "5", "--quiet",
    ]);
    assert_eq!(dir_digest(&p1, false), dir_digest(&p2, false));
}

#[test]
fn enhance_identity_reproduces_input_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    run_ok(&[
        "synth", "--kind", "underwater", "--n", "2", "--size", "24x18", "--ext", "ppm",
        "--seed", "4", "--out", &raw.display().to_string(), "--quiet",
    ]);
    let out_dir = tmp.path().join("enhanced");
    let output = run_ok(&[
        "enhance", "--method", "identity", "--in", &raw.join("corrupted").display().to_string(),
        "--out", &out_dir.display().to_string(), "--time", "--quiet",
    ]);
    for entry in fs::read_dir(raw.join("corrupted")).unwrap().flatten() {
        let name = entry.file_name();
        assert_eq!(
            fs::read(entry.path()).unwrap(),
            fs::read(out_dir.join(&name)).unwrap(),
            "identity enhancement altered {name:?}"
        );
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mean") && stdout.contains("ms"), "--time output: {stdout}");
    assert!(out_dir.join("run-config.txt").exists());
}

#[test]
fn enhance_dcp_and_directory_outputs_match_names() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    run_ok(&[
        "synth", "--kind", "underwater", "--n", "3", "--size", "20x20", "--ext", "ppm",
        "--seed", "6", "--out", &raw.display().to_string(), "--quiet",
    ]);
    let out_dir = tmp.path().join("dcp");
    run_ok(&[
        "enhance", "--method", "dcp", "--in", &raw.join("corrupted").display().to_string(),
        "--out", &out_dir.display().to_string(), "--quiet",
    ]);
    let mut in_names: Vec<_> = fs::read_dir(raw.join("corrupted"))
        .unwrap()
        .flatten()
        .map(|e| e.file_name())
        .collect();
    let mut out_names: Vec<_> = fs::read_dir(&out_dir)
        .unwrap()
        .flatten()
        .map(|e| e.file_name())
        .filter(|n| n != "run-config.txt")
        .collect();
    in_names.sort();
    out_names.sort();
    assert_eq!(in_names, out_names);
}

#[test]
fn corrupt_input_skips_with_warning_or_aborts_with_strict() {
    let tmp = tempfile::tempdir().unwrap();
    let in_dir = tmp.path().join("in");
    fs::create_dir_all(&in_dir).unwrap();
    fs::write(in_dir.join("bad.ppm"), b"P6\n5 5\n255\nshort").unwrap();
    // A valid image alongside, so the non-strict run still succeeds.
    run_ok(&[
        "synth", "--kind", "noise", "--n", "1", "--size", "12x12", "--ext", "ppm",
        "--seed", "2", "--out", &tmp.path().join("ok").display().to_string(), "--quiet",
    ]);
    fs::copy(
        tmp.path().join("ok/corrupted/synth0000.ppm"),
        in_dir.join("good.ppm"),
    )
    .unwrap();

    let out_dir = tmp.path().join("out");
    let output = murk()
        .args([
            "enhance", "--method", "identity", "--in", &in_dir.display().to_string(),
            "--out", &out_dir.display().to_string(), "--quiet",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("skipping"));

    let strict = murk()
        .args([
            "enhance", "--method", "identity", "--strict", "--in", &in_dir.display().to_string(),
            "--out", &tmp.path().join("out2").display().to_string(), "--quiet",
        ])
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(3), "strict mode must exit 3 on bad data");
}

#[test]
fn eval_reports_identity_and_dcp_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    run_ok(&[
        "synth", "--kind", "underwater", "--n", "3", "--size", "24x24", "--ext", "ppm",
        "--seed", "8", "--out", &raw.display().to_string(), "--quiet",
    ]);
    let prep = tmp.path().join("prep");
    run_ok(&[
        "prepare", "--data", &raw.display().to_string(), "--out", &prep.display().to_string(),
        "--ext", "ppm", "--seed", "8", "--quiet",
    ]);
    let report = tmp.path().join("report.csv");
    let out = run_ok(&[
        "eval", "--manifest", &prep.join("manifest.tsv").display().to_string(),
        "--with-identity", "--baseline", "dcp",
        "--report", &report.display().to_string(), "--quiet",
    ]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("Method") && table.contains("PSNR") && table.contains("SSIM"));
    assert!(table.contains("identity") && table.contains("dcp"));

    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("method,id,psnr_db,ssim,elapsed_ms"));
    // 2 methods × test rows (1 base × 5 angles).
    assert_eq!(csv.lines().count(), 1 + 2 * 5, "csv:\n{csv}");
}

#[test]
fn bad_flags_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = murk()
        .args([
            "synth", "--kind", "blizzard", "--n", "1",
            "--out", &tmp.path().join("x").display().to_string(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blizzard"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("murk.cfg");
    fs::write(&cfg, "# fixture config\nn = 4\nsize = 10x10\next = ppm\n").unwrap();
    let out_dir = tmp.path().join("out");
    // --n 2 overrides the config's n = 4; size comes from the file.
    let out = run_ok(&[
        "synth", "--kind", "noise", "--config", &cfg.display().to_string(), "--n", "2",
        "--out", &out_dir.display().to_string(), "--seed", "1", "--quiet",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("pairs=2"));
    let img = murk_core::data::io::load_image(&out_dir.join("corrupted/synth0000.ppm")).unwrap();
    assert_eq!((img.width(), img.height()), (10, 10));
}

#[test]
fn training_roundtrip_with_tiny_model() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    run_ok(&[
        "synth", "--kind", "noise", "--sigma", "30", "--n", "2", "--size", "12x12", "--ext", "ppm",
        "--seed", "13", "--out", &raw.display().to_string(), "--quiet",
    ]);
    let prep = tmp.path().join("prep");
    run_ok(&[
        "prepare", "--data", &raw.display().to_string(), "--out", &prep.display().to_string(),
        "--ext", "ppm", "--seed", "13", "--quiet",
    ]);
    let manifest = prep.join("manifest.tsv").display().to_string();

    let run_dir = tmp.path().join("run1");
    let out = run_ok(&[
        "pretrain", "--manifest", &manifest, "--out", &run_dir.display().to_string(),
        "--epochs", "2", "--lr", "1e-4", "--seed", "21",
        "--channels", "2", "--patch", "2", "--enc-layers", "1", "--dec-layers", "1",
        "--heads", "2", "--ffn-mult", "2", "--quiet",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("steps=10"), "2 epochs x 5 train pairs: {stdout}");
    assert!(run_dir.join("model.ckpt").exists());
    assert!(run_dir.join("ckpt-epoch-001.ckpt").exists());
    let loss_csv = fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert!(loss_csv.starts_with("step,epoch,task,loss,elapsed_ms"));
    assert_eq!(loss_csv.lines().count(), 1 + 10);

    // Determinism modulo the timing column.
    let run_dir2 = tmp.path().join("run2");
    run_ok(&[
        "pretrain", "--manifest", &manifest, "--out", &run_dir2.display().to_string(),
        "--epochs", "2", "--lr", "1e-4", "--seed", "21",
        "--channels", "2", "--patch", "2", "--enc-layers", "1", "--dec-layers", "1",
        "--heads", "2", "--ffn-mult", "2", "--quiet",
    ]);
    assert_eq!(dir_digest(&run_dir, true), dir_digest(&run_dir2, true));

    // lr=0 fine-tune leaves the checkpoint bytes unchanged.
    let ft = tmp.path().join("ft");
    run_ok(&[
        "finetune", "--checkpoint", &run_dir.join("model.ckpt").display().to_string(),
        "--manifest", &manifest, "--task", "underwater", "--epochs", "1", "--lr", "0",
        "--out", &ft.display().to_string(), "--seed", "2", "--quiet",
    ]);
    assert_eq!(
        fs::read(run_dir.join("model.ckpt")).unwrap(),
        fs::read(ft.join("model.ckpt")).unwrap(),
        "lr=0 fine-tune must not change weights"
    );

    // Enhancing with the trained checkpoint preserves extents.
    let enh = tmp.path().join("enh");
    run_ok(&[
        "enhance", "--model", &run_dir.join("model.ckpt").display().to_string(),
        "--in", &raw.join("corrupted").display().to_string(),
        "--out", &enh.display().to_string(), "--quiet",
    ]);
    let img = murk_core::data::io::load_image(&enh.join("synth0000.ppm")).unwrap();
    assert_eq!((img.width(), img.height()), (12, 12));
}

#[test]
fn gradcheck_negative_control_exits_nonzero() {
    // Tiny sweep so the control stays fast; the full run lives in the
    // acceptance suite.
    let ok = murk()
        .args(["gradcheck", "--samples", "1", "--instances", "1", "--mode", "f64", "--quiet"])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "healthy gradcheck failed: {}",
        String::from_utf8_lossy(&ok.stdout)
    );
    let bad = murk()
        .args([
            "gradcheck", "--samples", "1", "--instances", "1", "--mode", "f64", "--corrupt",
            "--quiet",
        ])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(4), "sabotage must exit 4");
    assert!(String::from_utf8_lossy(&bad.stderr).contains("matmul"));
}
