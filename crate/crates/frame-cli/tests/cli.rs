//! End-to-end tests that drive the compiled `frame` binary the way a user
//! would: simulate worlds, merge maps, evaluate reports, and exercise the
//! documented exit-code contract (0 success, 1 unreadable or malformed
//! input, 2 pipeline failure).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use frame_core::io::read_frds;
use serde_json::Value;

fn frame_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_frame"))
}

fn run_frame(args: &[&str]) -> Output {
    frame_bin()
        .args(args)
        .output()
        .expect("frame binary should spawn")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_exit(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}\nstdout:\n{}\nstderr:\n{}",
        stdout_of(out),
        stderr_of(out)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("test paths are valid UTF-8")
}

/// Simulates the `disjoint` scenario once and shares the artifacts across
/// tests; the bundle also dumps per-step scans for the descriptors test.
fn disjoint_bundle() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir()
            .expect("tempdir")
            .keep();
        let out = run_frame(&[
            "simulate",
            "--scenario",
            "disjoint",
            "--seed",
            "7",
            "--dump-scans",
            "--out",
            path_str(&dir),
        ]);
        assert_exit(&out, 0, "shared disjoint simulation should succeed");
        dir
    })
}

/// The six positional merge arguments for merging a bundle's run with itself.
fn self_merge_args(bundle: &Path, label: &str) -> Vec<String> {
    let map = bundle.join(format!("{label}_map.pcd"));
    let traj = bundle.join(format!("{label}_traj.csv"));
    let desc = bundle.join(format!("{label}_desc.frds"));
    [&map, &traj, &desc, &map, &traj, &desc]
        .iter()
        .map(|p| path_str(p).to_owned())
        .collect()
}

fn read_report(path: &Path) -> Value {
    let text = fs::read_to_string(path).expect("report should exist");
    serde_json::from_str(&text).expect("report should be JSON")
}

/// Translation norm and rotation angle (degrees) of a row-major transform.
fn transform_magnitudes(report: &Value) -> (f64, f64) {
    let m: Vec<f64> = report["transform"]
        .as_array()
        .expect("transform is an array")
        .iter()
        .map(|v| v.as_f64().expect("transform entries are numbers"))
        .collect();
    assert_eq!(m.len(), 16, "transform should be a 4x4 row-major matrix");
    let t = (m[3] * m[3] + m[7] * m[7] + m[11] * m[11]).sqrt();
    let cos = ((m[0] + m[5] + m[10] - 1.0) / 2.0).clamp(-1.0, 1.0);
    (t, cos.acos().to_degrees())
}

#[test]
fn simulate_is_deterministic_and_writes_the_full_artifact_set() {
    let base = tempfile::tempdir().expect("tempdir");
    let twin = |name: &str, seed: &str| {
        let dir = base.path().join(name);
        let out = run_frame(&[
            "simulate",
            "--scenario",
            "disjoint",
            "--seed",
            seed,
            "--out",
            path_str(&dir),
        ]);
        assert_exit(&out, 0, "simulate should succeed");
        dir
    };
    let a = twin("a", "11");
    let b = twin("b", "11");
    let c = twin("c", "12");

    for name in [
        "world_0.stl",
        "world_1.stl",
        "floor-bot_map.pcd",
        "floor-bot_traj.csv",
        "floor-bot_desc.frds",
        "ceiling-bot_map.pcd",
        "ceiling-bot_traj.csv",
        "ceiling-bot_desc.frds",
        "sidecar.json",
    ] {
        assert!(a.join(name).exists(), "missing artifact {name}");
        let bytes_a = fs::read(a.join(name)).unwrap();
        let bytes_b = fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} should be byte-identical across reruns");
    }
    let map_a = fs::read(a.join("floor-bot_map.pcd")).unwrap();
    let map_c = fs::read(c.join("floor-bot_map.pcd")).unwrap();
    assert_ne!(map_a, map_c, "a different seed should change the map");
}

#[test]
fn merging_disjoint_worlds_fails_with_a_staged_error() {
    let bundle = disjoint_bundle();
    let out_dir = tempfile::tempdir().expect("tempdir");
    // Run the merge at the radius the scenario was designed for, which the
    // sidecar records for exactly this purpose.
    let sidecar: Value = serde_json::from_str(
        &fs::read_to_string(bundle.join("sidecar.json")).unwrap(),
    )
    .unwrap();
    let radius = sidecar["sphere_radius"].as_f64().unwrap().to_string();
    let args: Vec<String> = [
        "floor-bot_map.pcd",
        "floor-bot_traj.csv",
        "floor-bot_desc.frds",
        "ceiling-bot_map.pcd",
        "ceiling-bot_traj.csv",
        "ceiling-bot_desc.frds",
    ]
    .iter()
    .map(|n| path_str(&bundle.join(n)).to_owned())
    .collect();
    let mut cmd_args = vec!["merge".to_owned()];
    cmd_args.extend(args);
    cmd_args.extend([
        "--radius".to_owned(),
        radius,
        "--out".to_owned(),
        path_str(out_dir.path()).to_owned(),
    ]);
    let arg_refs: Vec<&str> = cmd_args.iter().map(String::as_str).collect();
    let out = run_frame(&arg_refs);

    assert_exit(&out, 2, "merging unrelated maps must fail as a pipeline error");
    let err = stderr_of(&out);
    assert!(err.contains("stage "), "stderr should name the failing stage: {err}");
    assert!(
        err.contains("no discriminative overlap")
            || err.contains("initial guess outside capture range"),
        "stderr should carry a recognized failure: {err}"
    );
    assert!(
        !out_dir.path().join("merged.pcd").exists(),
        "a failed merge must not leave a merged map behind"
    );
}

#[test]
fn merging_a_run_with_itself_recovers_identity_and_writes_all_artifacts() {
    let bundle = disjoint_bundle();
    let out_dir = tempfile::tempdir().expect("tempdir");
    let mut args = vec!["merge".to_owned()];
    args.extend(self_merge_args(bundle, "floor-bot"));
    args.extend(["--out".to_owned(), path_str(out_dir.path()).to_owned()]);
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run_frame(&arg_refs);
    assert_exit(&out, 0, "self-merge should succeed");

    for name in ["merged.pcd", "initial_alignment.pcd", "report.json"] {
        assert!(out_dir.path().join(name).exists(), "missing output {name}");
    }
    let report = read_report(&out_dir.path().join("report.json"));
    let (t, angle) = transform_magnitudes(&report);
    assert!(t < 0.05, "self-merge translation should be near zero, got {t}");
    assert!(angle < 0.5, "self-merge rotation should be near zero, got {angle}");
    assert!(
        report.get("overlap_percent").is_none(),
        "overlap is only evaluated when ground truth is supplied"
    );
    assert_eq!(report["config"]["command"], "merge");
    assert_eq!(report["config"]["raw_eq9"], false);

    // The eval command tolerates sidecar entries without ground truth (the
    // disjoint pair has none) by printing dashes instead of errors.
    let eval_dir = tempfile::tempdir().expect("tempdir");
    let out = run_frame(&[
        "eval",
        "--gt",
        path_str(&bundle.join("sidecar.json")),
        "--out",
        path_str(eval_dir.path()),
        path_str(&out_dir.path().join("report.json")),
    ]);
    assert_exit(&out, 0, "eval should succeed without ground truth");
    let table = stdout_of(&out);
    assert!(table.contains("OVERLAP (%) & T_e (m) & R_e (deg) & TIME (s)"));
    assert!(table.contains('-'), "missing ground truth should print dashes");
    let csv = fs::read_to_string(eval_dir.path().join("eval.csv")).unwrap();
    assert!(csv.starts_with("merge,overlap_percent,t_e_m,r_e_deg,time_s"));
}

#[test]
fn raw_translation_variant_also_recovers_identity() {
    let bundle = disjoint_bundle();
    let out_dir = tempfile::tempdir().expect("tempdir");
    let mut args = vec!["merge".to_owned()];
    args.extend(self_merge_args(bundle, "ceiling-bot"));
    args.extend([
        "--raw-eq9".to_owned(),
        "--out".to_owned(),
        path_str(out_dir.path()).to_owned(),
    ]);
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run_frame(&arg_refs);
    assert_exit(&out, 0, "raw-translation self-merge should succeed");
    let report = read_report(&out_dir.path().join("report.json"));
    let (t, angle) = transform_magnitudes(&report);
    assert!(t < 0.05, "translation should stay near zero, got {t}");
    assert!(angle < 0.5, "rotation should stay near zero, got {angle}");
    assert_eq!(report["config"]["raw_eq9"], true);
}

#[test]
fn a_missing_input_file_exits_one_and_names_it() {
    let ghost = "/nonexistent/frame-test/ghost_map.pcd";
    let out = run_frame(&[
        "merge", ghost, "b.csv", "c.frds", "d.pcd", "e.csv", "f.frds",
    ]);
    assert_exit(&out, 1, "a missing input is an input error");
    let err = stderr_of(&out);
    assert!(err.contains(ghost), "stderr should name the missing file: {err}");

    let out = run_frame(&["simulate", "--scenario", "figment"]);
    assert_exit(&out, 1, "an unknown scenario is an input error");
    assert!(stderr_of(&out).contains("figment"));
}

#[test]
fn a_malformed_map_exits_one_with_a_byte_offset() {
    let dir = tempfile::tempdir().expect("tempdir");
    let bad = dir.path().join("broken_map.pcd");
    fs::write(&bad, "this is not a point cloud\n").unwrap();
    let out = run_frame(&[
        "merge",
        path_str(&bad),
        "b.csv",
        "c.frds",
        "d.pcd",
        "e.csv",
        "f.frds",
    ]);
    assert_exit(&out, 1, "a malformed input is an input error");
    let err = stderr_of(&out);
    assert!(err.contains("parse error in"), "stderr: {err}");
    assert!(err.contains("broken_map.pcd"), "stderr should name the file: {err}");
    assert!(err.contains("at byte"), "stderr should carry a byte offset: {err}");
}

#[test]
fn merge_recursive_rejects_a_non_triple_file_list() {
    let out = run_frame(&[
        "merge-recursive",
        "a.pcd",
        "a.csv",
        "a.frds",
        "b.pcd",
        "b.csv",
        "b.frds",
        "stray.pcd",
    ]);
    assert_exit(&out, 2, "a dangling non-triple argument list is rejected");
    assert!(stderr_of(&out).contains("triples"));
}

#[test]
fn custom_world_specs_drive_simulate_merge_and_eval_end_to_end() {
    let dir = tempfile::tempdir().expect("tempdir");
    let world = dir.path().join("world.json");
    fs::write(
        &world,
        r#"{
          "nodes": [
            {"x": 0.0,  "y": 0.0,  "z": 0.0},
            {"x": 30.0, "y": 0.0,  "z": 0.0},
            {"x": 60.0, "y": 0.0,  "z": 0.0},
            {"x": 30.0, "y": 20.0, "z": 0.0}
          ],
          "edges": [
            {"a": 0, "b": 1, "width": 7.0, "height": 4.5},
            {"a": 1, "b": 2, "width": 5.5, "height": 4.0},
            {"a": 1, "b": 3, "width": 4.0, "height": 3.5}
          ],
          "roughness_amplitude": 0.04,
          "seed": 21
        }"#,
    )
    .unwrap();
    let config = r#"{
            "channels": 16,
            "vertical_fov_deg": 30.0,
            "azimuth_step_deg": 1.40625,
            "max_range": 50.0,
            "noise_sigma": 0.02,
            "seed": 3
          }"#;
    let run_a = dir.path().join("eastward.json");
    fs::write(
        &run_a,
        format!(
            r#"{{
          "label": "eastward",
          "waypoints": [{{"x": 5.0, "y": 0.0, "z": 1.0}}, {{"x": 55.0, "y": 0.0, "z": 1.0}}],
          "config": {config}
        }}"#
        ),
    )
    .unwrap();
    let run_b = dir.path().join("westward.json");
    fs::write(
        &run_b,
        format!(
            r#"{{
          "label": "westward",
          "waypoints": [{{"x": 55.0, "y": 0.0, "z": 1.0}}, {{"x": 5.0, "y": 0.0, "z": 1.0}}],
          "config": {config},
          "frame": {{"yaw": 3.141592653589793, "translation": [4.0, -2.0, 0.0]}}
        }}"#
        ),
    )
    .unwrap();

    let sim_dir = dir.path().join("sim");
    let out = run_frame(&[
        "simulate",
        "--world",
        path_str(&world),
        "--runs",
        path_str(&run_a),
        "--runs",
        path_str(&run_b),
        "--seed",
        "5",
        "--out",
        path_str(&sim_dir),
    ]);
    assert_exit(&out, 0, "custom simulation should succeed");
    assert!(sim_dir.join("world_0.stl").exists());

    let merge_dir = dir.path().join("merge");
    let mut args = vec!["merge".to_owned()];
    for name in [
        "eastward_map.pcd",
        "eastward_traj.csv",
        "eastward_desc.frds",
        "westward_map.pcd",
        "westward_traj.csv",
        "westward_desc.frds",
    ] {
        args.push(path_str(&sim_dir.join(name)).to_owned());
    }
    args.extend([
        "--gt".to_owned(),
        path_str(&sim_dir.join("sidecar.json")).to_owned(),
        "--out".to_owned(),
        path_str(&merge_dir).to_owned(),
    ]);
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run_frame(&arg_refs);
    assert_exit(&out, 0, "custom-world merge should succeed");
    let report = read_report(&merge_dir.join("report.json"));
    let t_e = report["t_e"].as_f64().expect("t_e should be evaluated");
    let r_e = report["r_e"].as_f64().expect("r_e should be evaluated");
    assert!(t_e <= 0.2, "translation error too large: {t_e}");
    assert!(r_e <= 1.5, "rotation error too large: {r_e}");

    let eval_dir = dir.path().join("eval");
    let out = run_frame(&[
        "eval",
        "--gt",
        path_str(&sim_dir.join("sidecar.json")),
        "--out",
        path_str(&eval_dir),
        path_str(&merge_dir.join("report.json")),
    ]);
    assert_exit(&out, 0, "eval should succeed");
    let table = stdout_of(&out);
    assert!(table.contains("OVERLAP (%) & T_e (m) & R_e (deg) & TIME (s)"));
    let csv = fs::read_to_string(eval_dir.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "one header plus one merge row:\n{csv}");
}

#[test]
fn descriptor_command_reproduces_simulated_records() {
    let bundle = disjoint_bundle();
    let dir = tempfile::tempdir().expect("tempdir");
    let rebuilt = dir.path().join("rebuilt.frds");
    let images = dir.path().join("depth");
    let out = run_frame(&[
        "descriptors",
        "--traj",
        path_str(&bundle.join("floor-bot_traj.csv")),
        "--scans",
        path_str(&bundle.join("floor-bot_scans")),
        "--out",
        path_str(&rebuilt),
        "--dump-images",
        path_str(&images),
    ]);
    assert_exit(&out, 0, "descriptor recomputation should succeed");
    assert!(images.join("depth_000000.pgm").exists());

    let original = read_frds(&bundle.join("floor-bot_desc.frds")).unwrap();
    let recomputed = read_frds(&rebuilt).unwrap();
    assert_eq!(original.len(), recomputed.len());
    for (a, b) in original.iter().zip(&recomputed) {
        assert_eq!(a.timestep, b.timestep);
        assert!(a.position.distance(&b.position) < 1e-9);
        let dq = a.query.distance(&b.query);
        let dw: f64 = a
            .orient
            .values()
            .iter()
            .zip(b.orient.values())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(dq < 1e-3, "query descriptor drifted by {dq} at step {}", a.timestep);
        assert!(dw < 1e-2, "orientation descriptor drifted by {dw} at step {}", a.timestep);
    }
}

#[test]
fn thread_cap_env_is_respected_and_recorded() {
    let bundle = disjoint_bundle();
    let out_dir = tempfile::tempdir().expect("tempdir");
    let mut args = vec!["merge".to_owned()];
    args.extend(self_merge_args(bundle, "floor-bot"));
    args.extend(["--out".to_owned(), path_str(out_dir.path()).to_owned()]);
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = frame_bin()
        .args(&arg_refs)
        .env("FRAME_THREADS", "1")
        .output()
        .expect("frame binary should spawn");
    assert_exit(&out, 0, "single-threaded merge should succeed");
    let report = read_report(&out_dir.path().join("report.json"));
    assert_eq!(report["config"]["threads"], 1);
}
