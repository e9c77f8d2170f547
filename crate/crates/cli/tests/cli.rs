use std::path::Path;
use std::process::{Command, Output};

fn brdpn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brdpn")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = brdpn(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(&["gen-data", "--preset", "smoke", "--seed", "7", "--out", s(d.path())]);
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(
            std::fs::read(a.path().join(&n)).unwrap(),
            std::fs::read(b.path().join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn smoke_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ckpt, res) = (dir.path().join("data"), dir.path().join("ckpt"), dir.path().join("res"));
    let common = ["--preset", "smoke"];
    let run = |extra: &[&str]| ok(&[extra, &common[..]].concat());

    run(&["gen-data", "--out", s(&data)]);
    let info = run(&["inspect", s(&data.join("train.bin"))]);
    assert!(info.contains("trajectories 4"), "{info}");
    assert!(info.contains("steps 20"), "{info}");
    assert!(info.contains("objects [4]"), "{info}");

    // evaluation before any training names the missing checkpoint
    let out = brdpn(&[&["eval", "--data", s(&data), "--checkpoints", s(&ckpt), "--out", s(&res)], &common[..]].concat());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("physics.ckpt"));

    let msg = run(&["train-physics", "--data", s(&data), "--out", s(&ckpt)]);
    assert!(msg.contains("best validation error"), "{msg}");
    assert!(ckpt.join("physics_report.csv").exists());
    let info = run(&["inspect", s(&ckpt.join("physics.ckpt"))]);
    assert!(info.starts_with("checkpoint physics"), "{info}");

    let listed = run(&[
        "eval",
        "--data",
        s(&data),
        "--checkpoints",
        s(&ckpt),
        "--out",
        s(&res),
        "--baseline",
        "propnet_n",
        "--baseline",
        "propnet_gt",
    ]);
    assert!(listed.contains("errors_sparse.csv"));
    let csv = std::fs::read_to_string(res.join("errors_sparse.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("trajectory_id,baseline,t_belief,error_cm"));
    // 2 trajectories x 2 baselines x 3 time points
    assert_eq!(lines.count(), 12);

    run(&["train-belief", "--data", s(&data), "--out", s(&ckpt)]);
    let info = run(&["inspect", s(&ckpt.join("belief.ckpt"))]);
    assert!(info.contains("recurrent true"), "{info}");
    let printed = run(&[
        "rollout",
        "--data",
        s(&data),
        "--checkpoints",
        s(&ckpt),
        "--out",
        s(&res),
        "--baseline",
        "brdpn",
        "--t",
        "5",
    ]);
    assert!(printed.contains("error_cm"), "{printed}");
    let svg = std::fs::read_to_string(res.join("rollout_test_sparse_0_brdpn_t5.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn config_file_overrides_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.txt");
    std::fs::write(&cfg, "# smaller\nscenes.train = 3\n").unwrap();
    let data = dir.path().join("data");
    ok(&["gen-data", "--preset", "smoke", "--config", s(&cfg), "--out", s(&data)]);
    let info = ok(&["inspect", s(&data.join("train.bin"))]);
    assert!(info.contains("trajectories 3"), "{info}");

    std::fs::write(&cfg, "no.such.key = 1\n").unwrap();
    let out = brdpn(&["gen-data", "--preset", "smoke", "--config", s(&cfg), "--out", s(&data)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = brdpn(&["gen-data", "--preset", "nonexistent", "--out", "unused"]);
    assert!(!out.status.success());
    let out = brdpn(&["inspect", "/definitely/not/here.bin"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing inputs"));
}
