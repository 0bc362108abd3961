use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_outfitrank"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 12] = [
    "--d", "16", "--heads", "4", "--epochs", "1", "--batch-size", "8", "--eval-ratio", "3", "--ae-epochs", "1",
];

fn world(dir: &Path) -> (String, String) {
    let data = dir.join("world.txt");
    let prof = dir.join("cold.txt");
    ok(&[
        "gen", "--seed", "3", "--out", p(&data), "--profiles", p(&prof), "--users", "5", "--cold-users", "2",
        "--items-per-category", "15", "--positives-per-user", "13", "--cold-profile-size", "5",
    ]);
    (p(&data).to_string(), p(&prof).to_string())
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (data, prof) = world(dir.path());
    let out = dir.path().join("run");
    let outs = p(&out);

    let mut args = vec!["train-teacher", "--dataset", &data, "--out-dir", outs];
    args.extend(SMALL);
    let table = ok(&args);
    assert!(table.contains("test_auc"));
    let teacher = out.join("teacher.ckpt");
    assert!(teacher.exists() && out.join("teacher_report.kv").exists());

    let means = dir.path().join("means.txt");
    ok(&["cache", "--teacher", p(&teacher), "--dataset", &data, "--out", p(&means)]);
    assert!(fs::read_to_string(&means).unwrap().starts_with("outfitrank-teachermeans 1"));

    let sdir = dir.path().join("student");
    let mut args = vec![
        "train-student", "--dataset", &data, "--teacher", p(&teacher), "--means", p(&means), "--loss", "fnd_cl",
        "--hard-negatives", "true", "--out-dir", p(&sdir),
    ];
    args.extend(SMALL);
    ok(&args);
    let student = sdir.join("student.ckpt");
    assert!(student.exists());

    let tsv = dir.path().join("m.tsv");
    ok(&["eval", "--checkpoint", p(&student), "--dataset", &data, "--split", "test", "--mode", "hard", "--out", p(&tsv)]);
    let text = fs::read_to_string(&tsv).unwrap();
    assert!(text.starts_with("user\tn_pos\tn_neg\tauc\tndcg"));
    assert!(text.lines().last().unwrap().starts_with("mean\t"));

    let cold = dir.path().join("cold");
    ok(&[
        "coldstart", "--checkpoint", p(&teacher), "--dataset", &data, "--profiles", &prof, "--k", "5", "--strategy",
        "avg", "--repetitions", "3", "--out-dir", p(&cold),
    ]);
    assert!(cold.join("coldstart_k5_avg.kv").exists());

    let emb = dir.path().join("emb.txt");
    let msg = ok(&["export", "--checkpoint", p(&teacher), "--dataset", &data, "--out", p(&emb)]);
    assert!(msg.contains("dimension 16"));
    let first = fs::read(&emb).unwrap();
    ok(&["export", "--checkpoint", p(&teacher), "--dataset", &data, "--out", p(&emb)]);
    assert_eq!(first, fs::read(&emb).unwrap());

    let sw = dir.path().join("sweep");
    let mut args = vec![
        "sweep", "--axis", "alpha", "--value", "0.5", "--value", "2.0", "--dataset", &data, "--teacher", p(&teacher),
        "--loss", "fnd", "--out-dir", p(&sw),
    ];
    args.extend(SMALL);
    let table = ok(&args);
    assert!(table.contains("best by val_auc"));
    assert!(sw.join("sweep_alpha.txt").exists() && sw.join("alpha_0.5").join("report.kv").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = world(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("dataset = {data}\nepochs = 0\nd = 16\nheads = 4\nseed = 5\n# a comment\n")).unwrap();
    let out = dir.path().join("o");
    ok(&["train-teacher", "--config", p(&cfg), "--seed", "9", "--out-dir", p(&out)]);
    let kv = fs::read_to_string(out.join("teacher_report.kv")).unwrap();
    assert!(kv.contains("config.seed 9"));
    assert!(kv.contains("config.epochs 0"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // config error: distillation without a teacher
    let (data, _) = world(dir.path());
    let out = run(&["train-student", "--dataset", &data, "--loss", "fnd", "--epochs", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["train-teacher", "--dataset", &data, "--tier", "student-s"]);
    assert_eq!(out.status.code(), Some(2));
    // data error: malformed dataset
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "outfitrank-dataset 1\n[header]\nseed 1\n").unwrap();
    let out = run(&["train-teacher", "--dataset", p(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("section"));
    // missing file
    let out = run(&["eval", "--checkpoint", "/nonexistent.ckpt", "--dataset", &data]);
    assert_eq!(out.status.code(), Some(3));
    // bad usage
    let out = run(&["gen", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    ok(&["gen", "--seed", "4", "--out", p(&a), "--users", "3", "--items-per-category", "10", "--positives-per-user", "6"]);
    ok(&["gen", "--seed", "4", "--out", p(&b), "--users", "3", "--items-per-category", "10", "--positives-per-user", "6"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
