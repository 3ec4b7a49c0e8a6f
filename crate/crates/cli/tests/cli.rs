use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_swarmgame");

const TINY: &str = r#"
preset = "two-regions-desk"

[pinn]
pretrain_iters = 20
num_epoch = 40
samples = 200
boundary_samples = 100
minibatch = 64
boundary_minibatch = 32
hidden = [8, 8]

[dqn]
episodes = 20
minibatch = 8
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_rollout_compare_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write(dir, "tiny.toml", TINY);
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let train = dir.join("train");
    let out = run(&["train-pinn", "--config", &cfg, "--out-dir", &s(&train)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["value.sgnn", "loss.csv", "config.toml", "manifest.toml"] {
        assert!(train.join(f).exists(), "missing {f}");
    }
    let loss = std::fs::read_to_string(train.join("loss.csv")).unwrap();
    assert!(loss.starts_with("iteration,pde_loss,boundary_loss,lr,max_tau"));
    let manifest = std::fs::read_to_string(train.join("manifest.toml")).unwrap();
    assert!(manifest.contains("config_sha256"));

    let ckpt = s(&train.join("value.sgnn"));
    let roll = dir.join("roll");
    let out = run(&["rollout", "--config", &cfg, "--checkpoint", &ckpt, "--out-dir", &s(&roll)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(roll.join("trajectory_0.csv").exists());
    assert!(roll.join("finals.csv").exists());

    let cmp = dir.join("cmp");
    let out = run(&["compare", "--config", &cfg, "--checkpoint", &ckpt, "--count", "3", "--out-dir", &s(&cmp)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(cmp.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(std::fs::read_to_string(cmp.join("summary.txt")).unwrap().contains("starts 3"));

    for (kind, input) in [
        ("density", roll.join("trajectory_0.csv")),
        ("final", cmp.join("comparison.csv")),
        ("histogram", cmp.join("errors.csv")),
    ] {
        let svg = dir.join(format!("{kind}.svg"));
        let out = run(&["plot", "--kind", kind, "--input", &s(&input), "--out", &s(&svg)]);
        assert_eq!(code(&out), 0, "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
    }
}

#[test]
fn solve_bvp_on_symmetric_start() {
    let tmp = tempfile::tempdir().unwrap();
    let starts = write(tmp.path(), "starts.csv", "x1_1,x1_2,x2_1,x2_2\n0.5,0.5,0.5,0.5\n0.8,0.2,0.3,0.7\n");
    let out_dir = tmp.path().join("bvp");
    let out = run(&["solve-bvp", "--preset", "two-regions", "--starts", &starts, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("bvp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn train_dqn_writes_agents() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tiny.toml", TINY);
    let out_dir = tmp.path().join("dqn");
    let out = run(&["train-dqn", "--config", &cfg, "--count", "5", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["dqn_agent1.sgnn", "dqn_agent2.sgnn", "dqn_log.csv", "dqn_eval.csv"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["train-pinn", "--preset", "five-regions"])), 1);
    let missing = tmp.path().join("absent.csv");
    assert_eq!(code(&run(&["solve-bvp", "--starts", missing.to_str().unwrap()])), 1);
    let bad = write(tmp.path(), "bad.toml", "[pinn]\nno_such_field = 1\n");
    let out = run(&["train-pinn", "--config", &bad]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_field"));
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn divergence_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "blowup.toml",
        &TINY.replace("[pinn]\n", "[pinn]\nlr_start = 1e-3\nlr_end = 1.7976931348623157e308\n"),
    );
    let out_dir = tmp.path().join("train");
    let out = run(&["train-pinn", "--config", &cfg, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}
