//! End-to-end CLI checks through the compiled binary: subcommand wiring,
//! file outputs, and the documented exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_doppler-odom"))
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("doppler-odom-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn kv(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no key {key} in output:\n{stdout}"))
        .to_string()
}

#[test]
fn synth_odom_eval_round_trip() {
    let dir = tmpdir("roundtrip");
    let scans = dir.join("scans");

    let out = bin()
        .args(["synth", "tunnel", "--out"])
        .arg(&scans)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plys: Vec<_> = std::fs::read_dir(&scans)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "ply")
        })
        .collect();
    assert_eq!(plys.len(), 8);
    assert!(scans.join("gt.tum").exists());

    let traj = dir.join("traj.tum");
    let out = bin()
        .arg("odom")
        .arg(&scans)
        .arg("--out")
        .arg(&traj)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(lines.lines().count(), 8);

    let report = dir.join("report.csv");
    let out = bin()
        .arg("eval")
        .arg(&traj)
        .arg(scans.join("gt.tum"))
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = stdout_of(&out);
    let mean_rte: f64 = kv(&stdout, "mean_rte_m").parse().unwrap();
    assert!(mean_rte < 1.0, "tunnel odometry way off: {mean_rte}");
    assert!(report.exists());
}

#[test]
fn eval_of_identical_trajectories_is_zero() {
    let dir = tmpdir("eval-zero");
    let scans = dir.join("scans");
    bin()
        .args(["synth", "intersection", "--out"])
        .arg(&scans)
        .status()
        .unwrap();
    let gt = scans.join("gt.tum");
    let report = dir.join("zeros.csv");
    let out = bin()
        .arg("eval")
        .arg(&gt)
        .arg(&gt)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = stdout_of(&out);
    let mean_rte: f64 = kv(&stdout, "mean_rte_m").parse().unwrap();
    let mean_rre: f64 = kv(&stdout, "mean_rre_deg").parse().unwrap();
    assert!(mean_rte < 1e-12);
    assert!(mean_rre < 1e-9);
}

#[test]
fn register_pair_outputs_pose_and_exit_codes() {
    let dir = tmpdir("register");
    let scans = dir.join("scans");
    let spec_path = dir.join("scene.toml");
    std::fs::write(&spec_path, doppler_odom_spec_dump()).unwrap();
    bin()
        .arg("synth")
        .arg(&spec_path)
        .arg("--out")
        .arg(&scans)
        .status()
        .unwrap();
    let mut plys: Vec<PathBuf> = std::fs::read_dir(&scans)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ply"))
        .collect();
    plys.sort();

    let out = bin()
        .arg("register")
        .arg(&plys[0])
        .arg(&plys[1])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = stdout_of(&out);
    assert_eq!(kv(&stdout, "converged"), "true");
    let t: Vec<f64> = kv(&stdout, "translation")
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    // ego covers 0.1 m between frames; the x component must reflect it
    assert!((t[0] + 0.1).abs() < 0.02, "t = {t:?}");

    // ablating the doppler residual still registers a mostly static pair
    let out = bin()
        .arg("register")
        .arg(&plys[0])
        .arg(&plys[1])
        .args(["--ablate", "dr"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin()
        .args(["synth", "no-such-preset", "--out", "/tmp/x-doppler-odom"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("highway"));

    let dir = tmpdir("usage");
    let out = bin()
        .arg("odom")
        .arg(&dir)
        .args(["--out", "/tmp/t.tum", "--ablate", "bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tmpdir("data-errors");
    let bad = dir.join("bad.ply");
    std::fs::write(&bad, "not a ply file\n").unwrap();
    let out = bin().arg("register").arg(&bad).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .arg("eval")
        .arg(dir.join("missing.tum"))
        .arg(dir.join("missing.tum"))
        .args(["--out"])
        .arg(dir.join("r.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_accepts_scene_spec_file_and_seed_override() {
    let dir = tmpdir("spec-file");
    // dump a preset, reload it through the file path branch
    let spec_path = dir.join("scene.toml");
    let spec = doppler_odom_spec_dump();
    std::fs::write(&spec_path, spec).unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .arg("synth")
        .arg(&spec_path)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "12345"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("gt.tum").exists());
}

fn doppler_odom_spec_dump() -> String {
    // a minimal hand-written scene: one wall, short hold, tiny frame count
    r#"
name = "mini"
scan_rate = 10.0
points_per_scan = 1500
n_frames = 2
seed = 5

[[static_surfaces]]
corner = [4.0, -10.0, -3.0]
edge_u = [0.0, 20.0, 0.0]
edge_v = [0.0, 0.0, 6.0]

[[static_surfaces]]
corner = [-12.0, -10.0, -3.0]
edge_u = [0.0, 20.0, 0.0]
edge_v = [0.0, 0.0, 6.0]

[[static_surfaces]]
corner = [-12.0, -10.0, -2.5]
edge_u = [16.0, 0.0, 0.0]
edge_v = [0.0, 20.0, 0.0]

[[trajectory]]
duration = 1.0
omega = [0.0, 0.0, 0.0]
v = [1.0, 0.0, 0.0]

[noise]
sigma_doppler = 0.0
sigma_range = 0.0
"#
    .to_string()
}

#[test]
fn odom_skips_unreadable_scans() {
    let dir = tmpdir("skip");
    let scans = dir.join("scans");
    bin()
        .args(["synth", "tunnel", "--out"])
        .arg(&scans)
        .status()
        .unwrap();
    std::fs::write(scans.join("0000000000000000001.ply"), "garbage").unwrap();
    let traj = dir.join("traj.tum");
    let out = bin()
        .arg("odom")
        .arg(&scans)
        .arg("--out")
        .arg(&traj)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipping unreadable"));
    assert_eq!(std::fs::read_to_string(&traj).unwrap().lines().count(), 8);
}

#[test]
fn existing_path_is_required_for_outputs() {
    // writing the trajectory into a missing directory is a data error
    let dir = tmpdir("outpath");
    let scans = dir.join("scans");
    bin()
        .args(["synth", "tunnel", "--out"])
        .arg(&scans)
        .status()
        .unwrap();
    let out = bin()
        .arg("odom")
        .arg(&scans)
        .arg("--out")
        .arg(dir.join("no/such/dir/traj.tum"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = Path::new("unused");
}
