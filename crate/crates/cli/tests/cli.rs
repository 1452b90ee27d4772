use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lmcot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmcot")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_pgm(path: &Path, w: usize, h: usize, f: impl Fn(usize, usize) -> u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            bytes.push(f(x, y));
        }
    }
    fs::write(path, bytes).unwrap();
}

/// High-contrast checker pattern, shifted by `k` so every image differs.
fn textured(dir: &Path, k: usize) -> PathBuf {
    let p = dir.join(format!("face{k}.pgm"));
    write_pgm(&p, 48, 48, |x, y| if ((x + k) / 3 + y / 3).is_multiple_of(2) { 30 } else { 220 });
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn example_check_passes_and_is_stable() {
    let a = lmcot(&["example-check"]);
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert_eq!(stdout(&a).matches("PASS").count(), 5);
    assert_eq!(stdout(&lmcot(&["example-check"])), stdout(&a));
    let rec = stdout(&lmcot(&["example-check", "--format", "record"]));
    assert!(rec.lines().all(|l| l.starts_with("check loss=")));
}

#[test]
fn tampered_margin_fails_the_example_check() {
    let o = lmcot(&["example-check", "--m", "0.3"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn gradcheck_passes_and_oversized_step_fails() {
    for loss in ["lmcot", "arcface"] {
        let o = lmcot(&["gradcheck", "--loss", loss, "--trials", "100"]);
        assert_eq!(code(&o), 0, "{}", stdout(&o));
    }
    let o = lmcot(&["gradcheck", "--loss", "lmcot", "--trials", "10", "--h", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn usage_errors_exit_2_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = lmcot(&["train", "--loss", "nope", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    assert!(!out.exists());
    assert_eq!(code(&lmcot(&["gradcheck", "--loss", "nope"])), 2);
    assert_eq!(code(&lmcot(&["train", "--steps", "0", "--out", s(&out)])), 2);
    assert!(!out.exists());
    assert_eq!(code(&lmcot(&["no-such-command"])), 2);
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = lmcot(&["train", "--steps", "60", "--seed", "4", "--out", s(out)]);
        assert_eq!(code(&o), 0);
    }
    for f in ["report.txt", "model.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report = fs::read_to_string(a.join("report.txt")).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("step ")).count(), 60);
    assert!(report.lines().last().unwrap().starts_with("final metric=eer"));
    assert_eq!(fs::read_to_string(a.join("timing.csv")).unwrap().lines().count(), 61);
}

fn final_line(dir: &Path) -> (f64, f64) {
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    let last = report.lines().last().unwrap().to_string();
    let field = |k: &str| last.split(' ').find_map(|f| f.strip_prefix(k)).unwrap().parse::<f64>().unwrap();
    (field("initial="), field("final="))
}

#[test]
fn zero_learning_rate_leaves_the_metric_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&lmcot(&["train", "--steps", "20", "--lr", "0", "--out", s(dir.path())])), 0);
    let (initial, fin) = final_line(dir.path());
    assert_eq!(initial, fin);
}

#[test]
fn binary_training_reports_auc() {
    let dir = tempfile::tempdir().unwrap();
    let o = lmcot(&[
        "train",
        "--task",
        "live-spoof",
        "--loss",
        "double+margin-ce",
        "--steps",
        "50",
        "--lr",
        "0.1",
        "--batch",
        "32",
        "--hidden",
        "32",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.lines().last().unwrap().starts_with("final metric=auc"));
}

#[test]
fn eval_on_disjoint_scores() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    fs::write(&scores, "label,score\n1,0.9\n1,0.8\n1,0.75\n0,0.1\n0,0.3\n").unwrap();
    let out = dir.path().join("eval");
    let o = lmcot(&["eval", "--scores", s(&scores), "--out", s(&out), "--format", "record"]);
    assert_eq!(code(&o), 0);
    let line = stdout(&o);
    assert!(line.contains("eer=0.000000") && line.contains("auc=1.000000"), "{line}");
    assert!(fs::read_to_string(out.join("sweep.csv")).unwrap().starts_with("threshold,far,frr\n"));
    assert!(fs::read_to_string(out.join("histogram_genuine.csv")).unwrap().starts_with("bin_lo,bin_hi,count\n"));
}

#[test]
fn eval_rejects_malformed_scores() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    fs::write(&scores, "1,0.9\n0,oops\n").unwrap();
    let out = dir.path().join("eval");
    assert_eq!(code(&lmcot(&["eval", "--scores", s(&scores), "--out", s(&out)])), 3);
    assert!(!out.exists());
}

#[test]
fn retrieval_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("ranked.csv");
    fs::write(&f, "query,rank,correct,confidence\nq,1,1,0.9\nq,2,0,0.8\nq,3,1,0.7\n").unwrap();
    let o = stdout(&lmcot(&["retrieval-eval", "--ranked", s(&f), "--format", "record"]));
    assert!(o.contains("map_at_100=0.833333"), "{o}");
    fs::write(&f, "query,rank,correct,confidence\na,1,1,0.9\nb,1,0,0.8\n").unwrap();
    let o = stdout(&lmcot(&["retrieval-eval", "--ranked", s(&f), "--format", "record"]));
    assert!(o.contains("gap=0.500000"), "{o}");
}

#[test]
fn blank_enrollment_is_rejected_and_empty_gallery_gives_stranger() {
    let dir = tempfile::tempdir().unwrap();
    let blank = dir.path().join("blank.pgm");
    write_pgm(&blank, 48, 48, |_, _| 128);
    let gallery = dir.path().join("gallery.txt");
    let o = lmcot(&["enroll", "--gallery", s(&gallery), "--name", "ana", s(&blank)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("rejected reason=blurry"));
    let o = lmcot(&["auth", "--gallery", s(&gallery), "--frame", s(&blank)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).starts_with("stranger"));
}

#[test]
fn enrollment_caps_at_five_and_auth_accepts_the_owner() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<PathBuf> = (0..6).map(|k| textured(dir.path(), k)).collect();
    let gallery = dir.path().join("gallery.txt");
    let mut args = vec!["enroll", "--gallery", s(&gallery), "--name", "ana"];
    args.extend(images.iter().map(|p| s(p)));
    let o = lmcot(&args);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.matches("stored").count(), 5, "{text}");
    assert_eq!(text.matches("reason=capacity").count(), 1);

    let o = lmcot(&["auth", "--gallery", s(&gallery), "--frame", s(&images[0])]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).starts_with("accepted identity=ana"));

    let o = lmcot(&["auth", "--gallery", s(&gallery), "--frame", s(&images[0]), "--spoof-score", "0.65"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).starts_with("invalid-face"));
}

#[test]
fn trained_model_can_embed() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = lmcot(&["train", "--dim", "64", "--steps", "5", "--hidden", "16", "--embed-dim", "8", "--out", s(&run)]);
    assert_eq!(code(&o), 0);
    let model = run.join("model.txt");
    let gallery = dir.path().join("gallery.txt");
    let face = textured(dir.path(), 0);
    let o = lmcot(&["enroll", "--gallery", s(&gallery), "--name", "bo", "--model", s(&model), s(&face)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = lmcot(&["auth", "--gallery", s(&gallery), "--frame", s(&face), "--model", s(&model)]);
    assert_eq!(code(&o), 0);
}

#[test]
fn missing_files_exit_3() {
    let o = lmcot(&["auth", "--gallery", "/nonexistent/g.txt", "--frame", "/nonexistent/f.pgm"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&lmcot(&["retrieval-eval", "--ranked", "/nonexistent/r.csv"])), 3);
}
