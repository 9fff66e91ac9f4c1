//! End-to-end runs of the `rbm-ssd` binary.

use std::path::Path;
use std::process::{Command, Output};

use ssd_rbm::cli::{BENCH_HEADER, CHECKPOINT_FILE, METRICS_FILE, METRICS_HEADER, TIMING_FILE};
use ssd_rbm::data::load_matrix_file;

const SMALL: &str = "\
data = synthetic
synthetic_n_visible = 16
synthetic_n_hidden = 4
synthetic_n_train = 200
synthetic_n_test = 50
synthetic_burn_in = 50
n_hidden = 4
batch_size = 20
rule = ssd
step = 0.01
iterations = 60
eval_interval = 20
seed = 4
";

fn rbm_ssd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbm-ssd")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_then_eval_reproduces_final_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", SMALL);
    let out = dir.path().join("run");
    let r = rbm_ssd(&["train", "--config", &cfg, "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    let metrics = std::fs::read_to_string(out.join(METRICS_FILE)).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some(METRICS_HEADER));
    let rows: Vec<&str> = lines.collect();
    let iters: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["0", "20", "40", "60"]);

    let ckpt = out.join(CHECKPOINT_FILE);
    let e = rbm_ssd(&["eval", "--config", &cfg, "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    let eval = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    let sse = |row: &str| row.split(',').skip(3).take(2).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(sse(eval.lines().nth(1).unwrap()), sse(rows.last().unwrap()));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", &format!("{SMALL}cd_mode = pcd\n"));
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let r = rbm_ssd(&["train", "--config", &cfg, "--out", s(&out), "--deterministic"]);
        assert!(r.status.success());
        assert!(out.join(TIMING_FILE).exists());
        outputs
            .push((std::fs::read(out.join(METRICS_FILE)).unwrap(), std::fs::read(out.join(CHECKPOINT_FILE)).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    // Wall-clock times are kept out of the metrics file.
    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0")));
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", SMALL);
    let read = |seed: &str| {
        let out = dir.path().join(format!("seed{seed}"));
        assert!(rbm_ssd(&["train", "--config", &cfg, "--out", s(&out), "--seed", seed, "--deterministic"])
            .status
            .success());
        std::fs::read(out.join(CHECKPOINT_FILE)).unwrap()
    };
    assert_ne!(read("4"), read("5"));
}

#[test]
fn gen_data_bench_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", SMALL);
    let out = dir.path().join("data");
    assert!(rbm_ssd(&["gen-data", "--config", &cfg, "--out", s(&out)]).status.success());
    let train = load_matrix_file(out.join("train.rbmmat")).unwrap();
    assert_eq!((train.len(), train.n_visible()), (200, 16));
    assert_eq!(load_matrix_file(out.join("test.rbmmat")).unwrap().len(), 50);

    // Train from the written files instead of regenerating.
    let from_files = SMALL.replace(
        "data = synthetic",
        &format!(
            "data = matrix\ntrain_path = {}\ntest_path = {}",
            s(&out.join("train.rbmmat")),
            s(&out.join("test.rbmmat"))
        ),
    );
    let from_files: String =
        from_files.lines().filter(|l| !l.starts_with("synthetic_")).map(|l| format!("{l}\n")).collect();
    let cfg2 = write_config(dir.path(), "files.cfg", &from_files);
    assert!(rbm_ssd(&["train", "--config", &cfg2, "--out", s(&dir.path().join("files"))]).status.success());

    let b = rbm_ssd(&["bench", "--config", &cfg, "--iters", "10", "--out", s(&out)]);
    assert!(b.status.success());
    let bench = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(bench.lines().next(), Some(BENCH_HEADER));
    assert!(bench.lines().nth(1).unwrap().starts_with("ssd,bernoulli,"));

    let v = rbm_ssd(&["verify", "--trials", "30", "--seed", "2", "--out", s(&out)]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
    let bounds = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    assert!(bounds.starts_with("bound_id,trials,violations,max_slack,min_slack\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.cfg");
    assert_eq!(rbm_ssd(&["train", "--config", s(&missing)]).status.code(), Some(2));

    let bad_key = write_config(dir.path(), "bad.cfg", "n_hiden = 3\n");
    assert_eq!(rbm_ssd(&["train", "--config", &bad_key]).status.code(), Some(2));

    let bad_value = write_config(dir.path(), "neg.cfg", "batch_size = 0\n");
    assert_eq!(rbm_ssd(&["train", "--config", &bad_value]).status.code(), Some(2));

    let garbage = dir.path().join("garbage.rbmmat");
    std::fs::write(&garbage, b"RBMMAT1\n2 2 unit\n\x00\x00").unwrap();
    let data_cfg = write_config(dir.path(), "data.cfg", &format!("data = matrix\ntrain_path = {}\n", s(&garbage)));
    assert_eq!(rbm_ssd(&["train", "--config", &data_cfg]).status.code(), Some(3));

    let ckpt = dir.path().join("broken.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    let cfg = write_config(dir.path(), "run.cfg", SMALL);
    assert_eq!(rbm_ssd(&["eval", "--config", &cfg, "--checkpoint", s(&ckpt)]).status.code(), Some(3));

    assert_eq!(rbm_ssd(&["verify", "--trials", "0"]).status.code(), Some(2));
    assert!(!rbm_ssd(&["no-such-command"]).status.success());
}
