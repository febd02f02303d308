//! End-to-end runs of the command-line interface on small phantom sets.

use std::fs;
use std::path::Path;
use std::process::Command;

use dilseg::checkpoint::Checkpoint;
use dilseg::cli::run;
use dilseg::container::{read_file, Payload};
use dilseg::dataset::{image_path, MANIFEST};

fn dilseg(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("dilseg").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = dilseg(args);
    assert_eq!(code, 0, "dilseg {:?} failed: {}", args, err);
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `count` 32x32 phantoms in the default proportions (12 gives 8 train,
/// 1 val, 3 test).
fn dataset(dir: &Path, count: usize) {
    ok(&["phantom", "--out", p(dir), "--count", &count.to_string(), "--size", "32", "--seed", "3"]);
}

fn small_dataset(dir: &Path) {
    dataset(dir, 12);
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["train", "--data", p(data), "--out", p(out), "--base-width", "2", "--batch-size", "4"];
    args.extend_from_slice(extra);
    ok(&args)
}

fn log_rows(out: &Path) -> Vec<String> {
    fs::read_to_string(out.join("train.log")).unwrap().lines().skip(1).map(String::from).collect()
}

#[test]
fn usage_errors_exit_with_two() {
    let (code, _, err) = dilseg(&["rf", "unet_plus"]);
    assert_eq!(code, 2);
    assert!(err.contains("unet_progressive"));
    assert_eq!(dilseg(&["grid", "--dilations", "0,1"]).0, 2);
    assert_eq!(dilseg(&["train", "--data", "x"]).0, 2);
    assert_eq!(dilseg(&["frobnicate"]).0, 2);
    assert_eq!(dilseg(&["--help"]).0, 0);
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_dilseg");
    let status = Command::new(exe).args(["rf", "unet_plus"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let missing = Command::new(exe).args(["eval", "--checkpoint", "/nonexistent/a.ckpt", "--data", "/nonexistent"]).status();
    assert_eq!(missing.unwrap().code(), Some(1));
    let out = Command::new(exe).args(["grid", "--dilations", "1,2,4"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("225/225"));
}

#[test]
fn receptive_field_reports() {
    let progressive = ok(&["rf", "unet_progressive"]);
    assert!(progressive.contains("headline RF: 241 px"), "{}", progressive);
    assert!(progressive.contains("coverage enc1"));
    let dilated = ok(&["rf", "unet_dilated"]);
    assert!(dilated.contains("headline RF: 261 px"), "{}", dilated);
    let full = ok(&["rf", "unet_progressive", "--accounting", "full"]);
    assert!(full.contains("369"));
    let sparse = ok(&["grid", "--dilations", "2,2,2", "--map"]);
    assert!(sparse.contains("49/169"));
    assert_eq!(sparse.lines().filter(|l| l.len() == 13).count(), 13);
}

#[test]
fn phantom_train_eval_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run_dir = tmp.path().join("run");
    // six test slices, enough pairs for the signed-rank test
    dataset(&data, 24);
    assert!(fs::read_to_string(data.join(MANIFEST)).unwrap().lines().count() >= 24);

    let summary = train(&data, &run_dir, &["--epochs", "2", "--seed", "1", "--quiet"]);
    assert!(summary.contains("2 epoch(s)"), "{}", summary);
    let rows = log_rows(&run_dir);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].split('\t').count(), 10);
    let best = run_dir.join("best.ckpt");
    assert!(best.exists() && run_dir.join("last.ckpt").exists());

    // truth scored against itself
    let truth = ok(&["eval", "--checkpoint", p(&best), "--data", p(&data), "--truth-as-prediction"]);
    for class in ["lumen", "wall"] {
        let row = truth.lines().find(|l| l.starts_with(class)).unwrap();
        assert!(row.contains("1.0000 ± 0.0000") && row.contains("0.0000 ± 0.0000"), "{}", row);
    }

    let csv = tmp.path().join("scores.csv");
    let report = ok(&["eval", "--checkpoint", p(&best), "--data", p(&data), "--csv", p(&csv)]);
    assert!(report.contains("ms per slice"), "{}", report);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("patient_id,class,dsc,assd_mm"));
    assert_eq!(text.lines().count(), 1 + 6 * 3);

    // a model compared with itself has only zero differences
    let same = ok(&["eval", "--checkpoint", p(&best), "--compare", p(&best), "--data", p(&data)]);
    assert!(same.contains("undefined (all differences zero)"), "{}", same);
    assert!(same.contains("time ratio"));

    let prefix = tmp.path().join("pred");
    ok(&["predict", "--checkpoint", p(&best), "--image", p(&image_path(&data, 0)), "--out", p(&prefix)]);
    let labels = read_file(&tmp.path().join("pred_lbl.dls")).unwrap();
    match labels.payload {
        Payload::U8(codes) => assert!(codes.iter().all(|&c| c < 4)),
        _ => panic!("label map is not u8"),
    }
    let planes: Vec<Vec<f32>> = ["background", "lumen", "wall", "tumor"]
        .iter()
        .map(|c| match read_file(&tmp.path().join(format!("pred_prob_{}.dls", c))).unwrap().payload {
            Payload::F32(v) => v,
            _ => panic!("probabilities are not f32"),
        })
        .collect();
    for i in 0..planes[0].len() {
        let total: f32 = planes.iter().map(|p| p[i]).sum();
        assert!((total - 1.0).abs() <= 1e-5, "pixel {} sums to {}", i, total);
    }
}

#[test]
fn plateau_shows_up_in_the_log() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let run_dir = tmp.path().join("run");
    train(&data, &run_dir, &["--epochs", "6", "--patience", "1", "--lr", "1e-6", "--quiet"]);
    let rows = log_rows(&run_dir);
    let reduced = rows.iter().find(|r| r.ends_with("lr_reduced")).expect("no reduction logged");
    let cols: Vec<&str> = reduced.split('\t').collect();
    let (lr, next): (f64, f64) = (cols[7].parse().unwrap(), cols[8].parse().unwrap());
    assert_eq!(next, lr / 2.0);
}

#[test]
fn runs_are_reproducible_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    train(&data, &a, &["--epochs", "3", "--seed", "9", "--quiet"]);
    train(&data, &b, &["--epochs", "3", "--seed", "9", "--quiet"]);
    let bytes = |dir: &Path| fs::read(dir.join("last.ckpt")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));

    train(&data, &c, &["--epochs", "2", "--seed", "9", "--quiet"]);
    let resume = c.join("last.ckpt");
    train(&data, &c, &["--epochs", "3", "--seed", "9", "--quiet", "--resume", p(&resume)]);
    assert_eq!(bytes(&c), bytes(&a));
    assert_eq!(log_rows(&c), log_rows(&a));
    assert_eq!(Checkpoint::load(&c.join("last.ckpt")).unwrap().epoch, 3);

    let (code, _, err) =
        dilseg(&["train", "--data", p(&data), "--out", p(&c), "--model", "unet_baseline", "--base-width", "2", "--resume", p(&resume)]);
    assert_eq!(code, 1);
    assert!(err.contains("not the requested"), "{}", err);
}

#[test]
fn config_files_feed_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg = tmp.path().join("phantom.cfg");
    fs::write(&cfg, "# small set\ncount = 6\nsize = 32\nratios = 4,1,1\nmax_tumors = 0\n").unwrap();
    let out = ok(&["phantom", "--out", p(&data), "--config", p(&cfg)]);
    assert!(out.contains("train 4, val 1, test 1"), "{}", out);

    let run_cfg = tmp.path().join("run.cfg");
    fs::write(&run_cfg, format!("data = {}\nout = {}\nmodel = unet_dilated\nepochs = 1\nbase_width = 2\n", p(&data), p(&tmp.path().join("r")))).unwrap();
    ok(&["train", "--config", p(&run_cfg), "--quiet"]);
    let ck = Checkpoint::load(&tmp.path().join("r").join("best.ckpt")).unwrap();
    assert_eq!(ck.spec.kind.name(), "unet_dilated");

    fs::write(&run_cfg, "colour = blue\n").unwrap();
    assert_eq!(dilseg(&["train", "--config", p(&run_cfg)]).0, 2);
}
