use std::path::Path;
use std::process::{Command, Output};

fn hetsched(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetsched")).args(args).current_dir(cwd).env("RUST_LOG", "warn").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const CONFIG: &str = "job_files = data/sample.job
rm_files = data/sample.rm
schedulers = met, eft, etf, drm
episodes = 12
seeds = 0, 1
out_dir = out
drm.hidden = 16
";

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = hetsched(&["gen", "--tasks", "6", "--pes", "2", "--seed", "4", "--out", "data"], d);
    assert_eq!(code(&o), 0, "{o:?}");
    let job = std::fs::read_to_string(d.join("data/sample.job")).unwrap();
    let again = tempfile::tempdir().unwrap();
    hetsched(&["gen", "--tasks", "6", "--pes", "2", "--seed", "4", "--out", "."], again.path());
    assert_eq!(std::fs::read_to_string(again.path().join("sample.job")).unwrap(), job, "gen is deterministic");

    std::fs::write(d.join("exp.cfg"), CONFIG).unwrap();
    let o = hetsched(&["run", "--config", "exp.cfg"], d);
    assert_eq!(code(&o), 0, "{o:?}");
    assert!(stdout(&o).contains("drm"));
    let csv = std::fs::read_to_string(d.join("out/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12 * 4 * 2);

    let o = hetsched(&["compare", "--metrics", "out/metrics.csv", "--out", "curve.svg", "--window", "3"], d);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(std::fs::read_to_string(d.join("curve.svg")).unwrap().matches("<polyline").count(), 4);

    let o = hetsched(
        &["gantt", "--result", "out/episodes.jsonl", "--scheduler", "etf", "--seed", "1", "--format", "svg"],
        d,
    );
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(stdout(&o).matches("data-task=").count(), 6);
    let o = hetsched(
        &[
            "gantt",
            "--result",
            "out/episodes.jsonl",
            "--scheduler",
            "drm-greedy",
            "--format",
            "text",
            "--job",
            "data/sample.job",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{o:?}");
    assert!(stdout(&o).starts_with("makespan "));

    let o = hetsched(
        &[
            "saliency",
            "--checkpoint",
            "out/checkpoints/drm_seed0.json",
            "--job",
            "data/sample.job",
            "--rm",
            "data/sample.rm",
            "--out",
            "sal.svg",
            "--csv",
            "sal.csv",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(std::fs::read_to_string(d.join("sal.svg")).unwrap().matches("class=\"block-label\"").count(), 4);
    assert!(std::fs::read_to_string(d.join("sal.csv")).unwrap().starts_with("index,block,label,value\n"));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.cfg"), "job_files = a.job\nrm_files = a.rm\nepisodes = zero\n").unwrap();
    assert_eq!(code(&hetsched(&["run", "--config", "bad.cfg"], d)), 1);
    assert_eq!(code(&hetsched(&["run", "--config", "missing.cfg"], d)), 1);
    assert_eq!(code(&hetsched(&["run", "--bogus"], d)), 1);
    assert_eq!(code(&hetsched(&["gen", "--tasks", "0", "--out", "x"], d)), 1);
    assert_eq!(code(&hetsched(&["--help"], d)), 0);
}

#[test]
fn runtime_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("exp.cfg"), "job_files = nope.job\nrm_files = nope.rm\nschedulers = met\nepisodes = 2\n")
        .unwrap();
    let o = hetsched(&["run", "--config", "exp.cfg"], d);
    assert_eq!(code(&o), 2, "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.job"));
    assert_eq!(code(&hetsched(&["compare", "--metrics", "none.jsonl", "--out", "c.svg"], d)), 2);
    assert_eq!(code(&hetsched(&["gantt", "--result", "none.jsonl"], d)), 2);
}
