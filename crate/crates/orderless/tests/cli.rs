use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn orderless(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orderless"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture() -> String {
    format!("{}/fixtures/divergence.txt", env!("CARGO_MANIFEST_DIR"))
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "[generator]\nn_classes = 5\nn_samples = 60\ncorrelation_pairs = [[0, 1, 0.5]]\nlabels_per_sample = [1, 3]\nfeature_dim = 6\ngrid_size = 2\n\n[train]\nhidden = 8\nembed = 4\nattention_dim = 4\nbatch_size = 8\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn gen_is_deterministic_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = orderless(&["gen", "--config", &cfg, "--seed", "3", "--out", "a.txt"], dir.path());
    assert!(a.status.success(), "{a:?}");
    assert!(stdout(&a).contains("60 samples, 5 classes"));
    orderless(&["gen", "--config", &cfg, "--seed", "3", "--out", "b.txt"], dir.path());
    let c = orderless(&["gen", "--config", &cfg, "--seed", "4", "--out", "c.txt"], dir.path());
    assert!(c.status.success());
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.txt"), read("b.txt"));
    assert_ne!(read("a.txt"), read("c.txt"));

    fs::write(dir.path().join("bad.toml"), "[generator]\nn_classes = 2\nlabels_per_sample = [1, 3]\n").unwrap();
    let bad = orderless(&["gen", "--config", "bad.toml"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("exceeds n_classes"));
}

#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert!(orderless(&["gen", "--config", &cfg, "--out", "d.txt"], dir.path()).status.success());
    let t = orderless(
        &["train", "--data", "d.txt", "--config", &cfg, "--strategy", "pla", "--epochs", "4", "--out", "run"],
        dir.path(),
    );
    assert!(t.status.success(), "{t:?}");
    let loss = fs::read_to_string(dir.path().join("run/loss.csv")).unwrap();
    assert!(loss.starts_with("iteration,loss\n"));
    // 60 samples, 6 held out, batches of 8 → 7 iterations per epoch.
    assert_eq!(loss.lines().count(), 1 + 4 * 7);
    let epochs = fs::read_to_string(dir.path().join("run/epochs.csv")).unwrap();
    assert!(epochs.starts_with("epoch,metric,value\n") && epochs.contains("3,o_f1,"));

    let e = orderless(
        &["eval", "--data", "d.txt", "--checkpoint", "run/checkpoint.txt", "--out", "ev", "--f1-mean", "harmonic"],
        dir.path(),
    );
    assert!(e.status.success(), "{e:?}");
    let metrics = fs::read_to_string(dir.path().join("ev/metrics.csv")).unwrap();
    let names: Vec<&str> = metrics.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        ["c_p", "c_r", "c_f1", "o_p", "o_r", "o_f1", "duplicate_ratio", "order_rigidness", "no_cooccurrence"]
    );
    let per_class = fs::read_to_string(dir.path().join("ev/per_class.csv")).unwrap();
    assert!(per_class.starts_with("class,name,tp,predicted,actual,precision,recall,f1,degenerate\n"));
    assert_eq!(per_class.lines().count(), 6);

    let missing = orderless(&["eval", "--data", "d.txt", "--checkpoint", "nope.txt"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn train_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert!(orderless(&["gen", "--config", &cfg, "--out", "d.txt"], dir.path()).status.success());
    let unknown = orderless(&["train", "--data", "d.txt", "--strategy", "alphabetical"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown strategy"));
    let zero = orderless(&["train", "--data", "d.txt", "--epochs", "0"], dir.path());
    assert_eq!(zero.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&zero.stderr).contains("epochs"));
    fs::write(dir.path().join("broken.txt"), "orderless-dataset v1 classes=1\n").unwrap();
    let broken = orderless(&["train", "--data", "broken.txt"], dir.path());
    assert_eq!(broken.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&broken.stderr).contains("line 1"));
}

#[test]
fn compare_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let args = |out: &'static str| {
        vec!["compare", "--config", cfg.as_str(), "--strategy", "frequent_first,pla", "--epochs", "2", "--no-timing", "--out", out]
    };
    assert!(orderless(&args("x"), dir.path()).status.success());
    assert!(orderless(&args("y"), dir.path()).status.success());
    for f in ["compare.csv", "loss_pla.csv", "epochs_frequent_first.csv"] {
        assert_eq!(fs::read(dir.path().join("x").join(f)).unwrap(), fs::read(dir.path().join("y").join(f)).unwrap());
    }
    let csv = fs::read_to_string(dir.path().join("x/compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "strategy,c_f1,o_f1,duplicate_ratio,order_rigidness,final_loss,align_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("frequent_first,") && lines[2].starts_with("pla,"));
}

#[test]
fn align_reproduces_the_divergence_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = orderless(&["align", &fixture(), "--labels", "A,B"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("mla: [A, B, end] loss 1.427"), "{text}");
    assert!(text.contains("pla: [B, A, end] loss 5.298"), "{text}");

    fs::write(dir.path().join("id.txt"), "classes A B end\n0.8 0.1 0.1\n0.1 0.8 0.1\n0.05 0.05 0.9\n").unwrap();
    let o = orderless(&["align", "id.txt", "--labels", "B,A"], dir.path());
    let text = stdout(&o);
    let mla = text.lines().find(|l| l.starts_with("mla")).unwrap();
    let pla = text.lines().find(|l| l.starts_with("pla")).unwrap();
    assert_eq!(mla.replace("mla", ""), pla.replace("pla", ""));

    fs::write(dir.path().join("bad.txt"), "classes A end\n0.5 0.5\n0.5 0.7\n").unwrap();
    let bad = orderless(&["align", "bad.txt", "--labels", "A"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 3"));
}

#[test]
fn bench_reports_positive_times() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = orderless(&["bench", "--config", &cfg, "--samples", "50", "--repeats", "2", "--out", "b"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(dir.path().join("b/bench.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v > 0.0 && v.is_finite(), "{line}");
    }
}
