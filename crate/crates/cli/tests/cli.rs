use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wsdscope::diag::{to_csv, RunDir};
use wsdscope::train::list_checkpoints;

const BIN: &str = env!("CARGO_BIN_EXE_wsdscope");

fn desk() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn wsdscope")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A short desk run: 600 steps, decay start at 390.
fn short_run(dir: &Path) {
    let out = run(&[
        "train",
        desk().to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "steps=600",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn train_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    short_run(&a);
    short_run(&b);
    for f in ["losses.csv", "heldout.csv", "manifest"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ck_a = list_checkpoints(&a).unwrap();
    assert!(ck_a.iter().any(|(s, _)| *s == 390));
    for ((sa, pa), (sb, pb)) in ck_a.iter().zip(list_checkpoints(&b).unwrap()) {
        assert_eq!(*sa, sb);
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("r");
    let bad_key = run(&[
        "train",
        desk().to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--set",
        "bogus=1",
    ]);
    assert_eq!(code(&bad_key), 2);
    assert!(stderr(&bad_key).contains("bogus"));

    let missing = run(&["train", "/nonexistent.cfg", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&missing), 2);

    let usage = run(&["train"]);
    assert_eq!(code(&usage), 2);
}

#[test]
fn divergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        desk().to_str().unwrap(),
        "--out",
        tmp.path().join("r").to_str().unwrap(),
        "--set",
        "steps=300",
        "--set",
        "lr=1e30",
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn diagnostics_and_missing_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    short_run(&dir);
    let d = dir.to_str().unwrap();

    let out = run(&["diag", "interp", d]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["interp_stable.csv", "interp_cooldown.csv"] {
        let text = fs::read_to_string(dir.join("diag").join(f)).unwrap();
        assert_eq!(text.lines().count(), 1 + 25, "{f}");
    }

    let out = run(&["diag", "tau", d]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rd = RunDir::open(&dir, None).unwrap();
    let expected = to_csv(&rd.tau().unwrap());
    assert_eq!(fs::read_to_string(dir.join("diag/tau.csv")).unwrap(), expected);

    let out = run(&["report", d, "--out", tmp.path().join("rep").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "manifest",
        "interp_stable.csv",
        "sharpness.csv",
        "pca_stable.csv",
        "pca_cooldown.csv",
        "align.csv",
        "tau.csv",
        "cosine.csv",
        "norms.csv",
    ] {
        assert!(tmp.path().join("rep").join(f).is_file(), "{f}");
    }

    // leave one stable-phase checkpoint: PCA cannot run
    for (step, path) in list_checkpoints(&dir).unwrap() {
        if (150..390).contains(&step) {
            fs::remove_file(path).unwrap();
        }
    }
    let out = run(&["diag", "pca", d]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("needs 2"), "{}", stderr(&out));

    // the 80% stable point (342) went with them
    let out = run(&["diag", "interp", d]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("step 342"), "{}", stderr(&out));

    let out = run(&["diag", "norms", tmp.path().join("absent").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn resume_extends_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    short_run(&src);
    let dst = tmp.path().join("dst");
    let out = run(&[
        "resume",
        src.to_str().unwrap(),
        "--out",
        dst.to_str().unwrap(),
        "--steps",
        "1000",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let src_log = fs::read_to_string(src.join("losses.csv")).unwrap();
    let dst_log = fs::read_to_string(dst.join("losses.csv")).unwrap();
    assert_eq!(dst_log.lines().count(), 1 + 1001);
    // rows before the resume point are copied verbatim
    let prefix: Vec<&str> = src_log.lines().take(1 + 390).collect();
    assert_eq!(prefix, dst_log.lines().take(1 + 390).collect::<Vec<_>>());
    assert!(list_checkpoints(&dst).unwrap().iter().any(|(s, _)| *s == 1000));

    let missing = run(&[
        "resume",
        src.to_str().unwrap(),
        "--out",
        tmp.path().join("x").to_str().unwrap(),
        "--steps",
        "1000",
        "--from",
        "391",
    ]);
    assert_eq!(code(&missing), 3);
    assert!(stderr(&missing).contains("391"));

    let cosine = run(&[
        "resume",
        src.to_str().unwrap(),
        "--out",
        tmp.path().join("y").to_str().unwrap(),
        "--steps",
        "1000",
        "--from",
        "420",
    ]);
    assert_eq!(code(&cosine), 2, "resuming inside the cooldown must be refused");
}

#[test]
fn sweep_single_fraction() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sw");
    let out = run(&[
        "sweep",
        desk().to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "steps=600",
        "--fractions",
        "0.2",
        "--seeds",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut entries: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    entries.sort();
    assert_eq!(entries, ["cosine", "sweep.csv", "wsd_0.2"]);
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["0.2", "cosine"]);
}
