use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn netflux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netflux")).args(args).current_dir(repo()).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ks_config(dir: &Path, extra: &str) -> String {
    let text = std::fs::read_to_string(repo().join("configs/ks_demo.toml")).unwrap();
    let path = dir.join("ks.toml");
    std::fs::write(&path, format!("{text}\n{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn ks_run_writes_outputs_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ks_config(tmp.path(), "");
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = netflux(&[
            "run",
            "--model",
            "ks",
            "--config",
            &cfg,
            "--steps",
            "10",
            "--snapshot-every",
            "5",
            "--render",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        dirs.push(out);
    }
    let diag = std::fs::read_to_string(dirs[0].join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 11);
    assert!(diag.starts_with("step,time,dt,newton_iterations,accepted"));
    for f in ["snapshot_000005.csv", "snapshot_000010.csv", "snapshot_final.csv", "birdview_u.svg", "birdview_phi.svg"] {
        assert!(dirs[0].join(f).exists(), "missing {f}");
    }
    for f in ["snapshot_final.csv", "diagnostics.csv", "masses.csv", "birdview_u.svg"] {
        let a = std::fs::read(dirs[0].join(f)).unwrap();
        let b = std::fs::read(dirs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
}

#[test]
fn missing_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = netflux(&["run", "--model", "ks", "--config", "does/not/exist.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("does/not/exist.toml"));
    assert!(!out.exists());
}

#[test]
fn refuses_non_empty_output_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ks_config(tmp.path(), "");
    let out = tmp.path().join("out");
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("keep.txt"), "x").unwrap();
    let args = ["run", "--model", "ks", "--config", &cfg, "--steps", "2", "--out", out.to_str().unwrap()];
    let o = netflux(&args);
    assert_eq!(code(&o), 1);
    assert!(!out.join("diagnostics.csv").exists());
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&netflux(&forced)), 0);
}

#[test]
fn newton_failure_in_fixed_mode_aborts_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ks_config(tmp.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace(
        "dt_init = 0.01",
        "dt_init = 0.01\n\n[time.newton]\nmax_iterations = 1\neps_abs = 1e-15",
    );
    std::fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = netflux(&["run", "--model", "ks", "--config", &cfg, "--steps", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.contains(",false"));
}

#[test]
fn convergence_exit_codes() {
    let o = netflux(&["convergence"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("observed spatial order"));
    assert_eq!(code(&netflux(&["convergence", "--sweep", "time"])), 0);
    assert_eq!(code(&netflux(&["convergence", "--levels", "4"])), 1);
    // time error dominates with huge steps, so the spatial order collapses
    let o = netflux(&["convergence", "--levels", "8,16,32,64", "--dt-factor", "1000"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn validate_config_reports_paths() {
    assert_eq!(code(&netflux(&["validate-config", "--model", "ooc", "--config", "configs/ooc_maze.toml"])), 0);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ks_config(tmp.path(), "[physical.extra]\nfoo = 1.0\n");
    let o = netflux(&["validate-config", "--model", "ks", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ks.toml"), "{}", stderr(&o));
}

#[test]
fn plot_geometry_and_describe() {
    let tmp = tempfile::tempdir().unwrap();
    let svg = tmp.path().join("maze.svg");
    let o = netflux(&[
        "plot-geometry",
        "--points",
        "data/maze_3_data/points.csv",
        "--lines",
        "data/maze_3_data/lines.csv",
        "--length-scale",
        "50",
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));

    let o = netflux(&[
        "geometry",
        "describe",
        "--points",
        "data/maze_3_data/points.csv",
        "--lines",
        "data/maze_3_data/lines.csv",
        "--length-scale",
        "50",
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("arcs: 29"));
}

#[test]
fn duplicate_tag_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let points = tmp.path().join("points.csv");
    let lines = tmp.path().join("lines.csv");
    std::fs::write(&points, "tag,x,y\nB1,0,0\nB2,1,0\nB1,2,0\n").unwrap();
    std::fs::write(&lines, "start_tag,end_tag\nB1,B2\n").unwrap();
    let svg = tmp.path().join("g.svg");
    let o = netflux(&[
        "plot-geometry",
        "--points",
        points.to_str().unwrap(),
        "--lines",
        lines.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("B1"), "{}", stderr(&o));
    assert!(!svg.exists());
}
