use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sren::data::{pgm, synth_texture};
use sren::tensorcore::srtn::Tensor;
use sren::tensorcore::{rotate_quarter_turns, FeatureMap};

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/mnist")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sren"))
        .args(args)
        .arg(format!("--output_dir={}", out.display()))
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn basis_default_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["basis"], dir.path()));
    let report = json(dir.path().join("report.json"));
    assert_eq!(report["atoms"], 45);
    assert!(report["round_trip_l2"].as_f64().unwrap() <= 1e-6);
    assert!(report["orthogonality_max_dev"].as_f64().unwrap() <= 1e-8);
    let atoms = Tensor::read(dir.path().join("atoms.srtn")).unwrap();
    assert_eq!(atoms.dims, vec![2, 45, 15, 15]);
}

#[test]
fn basis_with_zero_orders_has_one_atom() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(
        &["basis", "--basis.k1_max=0", "--basis.k2_max=0"],
        dir.path(),
    ));
    assert_eq!(json(dir.path().join("report.json"))["atoms"], 1);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{ not json").unwrap();
    let o = run(&["basis", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["basis", "--basis.bogus=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["basis", "--basis.b=0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn geometry_of_constant_image_is_not_confident() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("flat.pgm");
    pgm::write_pgm(&img, 32, 32, &vec![0.5; 32 * 32]).unwrap();
    ok(&run(
        &["geometry", "--image", img.to_str().unwrap()],
        dir.path(),
    ));
    let conf = Tensor::read(dir.path().join("confidence.srtn")).unwrap();
    let interior = |i: usize| (8..24).contains(&(i / 32)) && (8..24).contains(&(i % 32));
    for i in (0..32 * 32).filter(|&i| interior(i)) {
        assert_eq!(conf.data[i], 0.0, "pixel {i}");
    }
    assert!(dir.path().join("orientation.pgm").exists());
}

fn orientation_histogram(dir: &Path, name: &str, f: &FeatureMap) -> Vec<u64> {
    let img = dir.join(format!("{name}.srtn"));
    Tensor::new(vec![1, f.height(), f.width()], f.data().to_vec())
        .unwrap()
        .write(&img)
        .unwrap();
    let out = dir.join(name);
    ok(&run(&["geometry", "--image", img.to_str().unwrap()], &out));
    let report = json(out.join("geometry.json"));
    report["orientation_histogram"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect()
}

#[test]
fn geometry_is_reproducible_and_follows_quarter_turns() {
    let dir = tempfile::tempdir().unwrap();
    let f = synth_texture(48, [0.1, 0.35], 3, 0);
    let img = dir.path().join("texture.srtn");
    Tensor::new(vec![1, 48, 48], f.data().to_vec())
        .unwrap()
        .write(&img)
        .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run(&["geometry", "--image", img.to_str().unwrap()], &a));
    ok(&run(&["geometry", "--image", img.to_str().unwrap()], &b));
    for name in [
        "scale.srtn",
        "orientation.srtn",
        "confidence.srtn",
        "geometry.json",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let base = orientation_histogram(dir.path(), "base", &f);
    let turned = orientation_histogram(dir.path(), "turned", &rotate_quarter_turns(&f, 1));
    let quarter = base.len() / 4;
    let shifted = |k: usize| {
        (0..base.len())
            .map(|i| base[(i + base.len() - k) % base.len()])
            .collect::<Vec<_>>()
    };
    assert!(
        turned == shifted(quarter) || turned == shifted(3 * quarter),
        "{base:?} then {turned:?}"
    );
}

#[test]
fn unreadable_image_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["geometry", "--image", "/nonexistent/x.pgm"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let junk = dir.path().join("junk.pgm");
    fs::write(&junk, b"P7 nonsense").unwrap();
    assert_eq!(
        run(&["geometry", "--image", junk.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn missing_model_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-model");
    let o = run(&["eval", "--model", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn equivcheck_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(
        &[
            "equivcheck",
            "--harness.inputs=1",
            "--harness.layers=1",
            "--harness.channels=2",
            "--harness.size=64",
        ],
        dir.path(),
    ));
    let csv = fs::read_to_string(dir.path().join("equivariance.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run_id,layer,s,theta,tx,ty,crop,error"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in rows.iter().filter(|r| r[0].contains("-identity-")) {
        assert_eq!(r[7].parse::<f64>().unwrap(), 0.0);
    }
    let rot = rows
        .iter()
        .find(|r| r[0].starts_with("simconv-rot90-"))
        .unwrap();
    assert!(rot[7].parse::<f64>().unwrap() <= 1e-4);
}

#[test]
fn train_eval_sweep_gendata_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mnist = format!("--data.mnist_dir={}", mnist_dir().display());
    let common = [
        mnist.as_str(),
        "--data.train_size=12",
        "--data.test_size=6",
        "--train.epochs=1",
        "--train.batch_size=4",
        "--model.architecture.blocks=[[2],[3]]",
        "--seed=7",
    ];
    let with = |extra: &[&str]| -> Vec<String> {
        extra.iter().chain(&common).map(|s| s.to_string()).collect()
    };
    let args = with(&["train"]);
    ok(&run(
        &args.iter().map(String::as_str).collect::<Vec<_>>(),
        dir.path(),
    ));
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,loss,acc\n0,"));
    let model = dir.path().join("model");
    assert!(model.join("manifest.json").exists());

    let model_arg = format!("--model={}", model.display());
    for mode in ["plain", "r"] {
        let mode_arg = format!("--data.mode={mode}");
        let args = with(&["eval", &model_arg, &mode_arg]);
        let out = ok(&run(
            &args.iter().map(String::as_str).collect::<Vec<_>>(),
            dir.path(),
        ));
        assert!(out.contains("accuracy"));
    }
    let eval = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 3);
    assert!(eval.starts_with("mode,accuracy,correct,total\nplain,"));

    let args = with(&[
        "sweep",
        &model_arg,
        "--sweep.angles=[0,90]",
        "--sweep.scales=[1]",
    ]);
    ok(&run(
        &args.iter().map(String::as_str).collect::<Vec<_>>(),
        dir.path(),
    ));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);

    let args = with(&["gendata", "--data.mode=srt"]);
    ok(&run(
        &args.iter().map(String::as_str).collect::<Vec<_>>(),
        dir.path(),
    ));
    let data = dir.path().join("data-srt");
    let meta = json(data.join("dataset.json"));
    assert_eq!(meta["distortions"].as_array().unwrap().len(), 6);
    assert!(data.join("previews/00.pgm").exists());
}

#[test]
fn missing_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--data.mnist_dir=/nonexistent"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}
