use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cotex(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotex"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn cotex")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = cotex(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_mesh_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = cotex(&["texture", "--mesh", "does/not/exist.obj"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exist.obj"));
}

#[test]
fn unknown_config_key_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "# comment\nviews = 5\nshininess = 3\n").unwrap();
    let out = cotex(&["render", "-c", "run.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.cfg:3"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "views = 5\nout_dir = from_file\n").unwrap();
    ok(&["render", "-c", "run.cfg", "--views", "3", "--out_dir", "r"], dir.path());
    assert!(!dir.path().join("from_file").exists());
    let pngs = fs::read_dir(dir.path().join("r")).unwrap().count();
    assert_eq!(pngs, 9);
}

#[test]
fn render_writes_three_images_per_view() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["render", "--out_dir", "r"], dir.path());
    let mut names: Vec<String> = fs::read_dir(dir.path().join("r"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 27);
    assert!(names.iter().all(|n| n.ends_with(".png")));
    for k in 0..9 {
        for kind in ["color", "depth", "score"] {
            assert!(names.contains(&format!("view{k}_{kind}.png")));
        }
    }
}

#[test]
fn depth_image_matches_sphere_geometry() {
    // Normalized sphere of radius 1 seen head on from distance 2.5: the center
    // pixel lies about 1.5 away, which encodes as 255 * (1 - 1.5 / 5).
    let dir = tempfile::tempdir().unwrap();
    ok(&["render", "--out_dir", "r", "--elevation", "0", "--image_scale", "2"], dir.path());
    let depth = image::open(dir.path().join("r/view0_depth.png")).unwrap().to_luma8();
    let (w, h) = depth.dimensions();
    assert_eq!((w, h), (64, 64));
    // Facets sit slightly inside the unit sphere, so allow a small excess.
    let lo: f64 = 255.0 * (1.0 - 1.55 / 5.0);
    let hi: f64 = 255.0 * (1.0 - 1.5 / 5.0) + 0.5;
    for (x, y) in [(31, 31), (32, 32), (31, 32)] {
        let v = depth.get_pixel(x, y)[0] as f64;
        assert!(v >= lo.floor() && v <= hi.ceil(), "pixel ({x},{y}) = {v}");
    }
    assert_eq!(depth.get_pixel(0, 0)[0], 0);
    assert_eq!(depth.get_pixel(w - 1, h - 1)[0], 0);
    // Depth grows toward the silhouette.
    assert!(depth.get_pixel(32, 32)[0] > depth.get_pixel(32, 50)[0]);
}

#[test]
fn texture_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["texture", "--out_dir", "a", "--seed", "3"], dir.path());
    ok(&["texture", "--out_dir", "b", "--seed", "3"], dir.path());
    for file in ["texture.ply", "texture_initial.ply", "trajectory.csv", "summary.json", "renders/az080.png"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
    ok(&["texture", "--out_dir", "c", "--seed", "4"], dir.path());
    let a = fs::read(dir.path().join("a/trajectory.csv")).unwrap();
    let c = fs::read(dir.path().join("c/trajectory.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn default_texture_run_resolves_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["texture", "--out_dir", "t", "--stats_csv", "true"], dir.path());
    let t = dir.path().join("t");
    let summary = json(&t.join("summary.json"));
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["fusion_steps"], 45);
    assert_eq!(summary["residual_flags"], 0);
    assert!(summary["flagged_vertices"].as_u64().unwrap() > 0);
    assert!(!t.join("FAILED").exists());
    assert!(t.join("variance_stats.csv").exists());
    let traj = fs::read_to_string(t.join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("step,policy,std_pre,std_post_raster,std_post_va"));
    assert_eq!(lines.count(), 50);
    let ply = fs::read(t.join("texture.ply")).unwrap();
    assert!(ply.starts_with(b"ply\n"));
}

#[test]
fn failed_run_leaves_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let out = cotex(&["texture", "--out_dir", "t", "--mesh", "missing.obj"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let marker = fs::read_to_string(dir.path().join("t/FAILED")).unwrap();
    assert!(marker.contains("stage: setup"), "{marker}");
    assert!(marker.contains("missing.obj"), "{marker}");
}

#[test]
fn broken_inpainting_program_skips_views() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["texture", "--out_dir", "t", "--inpainter", "./no-such-filler"], dir.path());
    assert!(out.status.success());
    let summary = json(&dir.path().join("t/summary.json"));
    let views = summary["refinement"].as_array().unwrap();
    assert!(views.iter().any(|v| v["error"].is_string()));
    assert!(summary["residual_flags"].as_u64().unwrap() > 0);
}

#[test]
fn skipping_fusion_produces_more_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["detect-conflicts", "--out_dir", "fused"], dir.path());
    ok(&["detect-conflicts", "--out_dir", "plain", "--fusion_fraction", "0"], dir.path());
    let fused = json(&dir.path().join("fused/conflicts.json"))["flagged_vertices"].as_u64().unwrap();
    let plain = json(&dir.path().join("plain/conflicts.json"))["flagged_vertices"].as_u64().unwrap();
    assert!(plain > fused, "plain {plain} vs fused {fused}");
    let masks = fs::read_dir(dir.path().join("fused/masks")).unwrap().count();
    assert_eq!(masks, 4);
}

#[test]
fn analyze_variance_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["analyze-variance", "--out_dir", "a"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("45 fusion steps"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("a/variance_trajectory.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(csv.lines().next(), Some("step,baseline,mvar_no_va,mvar_va"));
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().enumerate().all(|(k, r)| r[0] == (k + 1) as f64 && r.len() == 4));
    assert!(dir.path().join("a/variance_trajectory.png").exists());
}

#[test]
fn policies_share_the_initial_noise() {
    let dir = tempfile::tempdir().unwrap();
    for policy in ["baseline", "mvar_no_va", "mvar_va"] {
        ok(&["texture", "--out_dir", policy, "--policy", policy, "--steps", "10"], dir.path());
    }
    let first = |p: &str| -> String {
        let csv = fs::read_to_string(dir.path().join(p).join("trajectory.csv")).unwrap();
        csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().to_string()
    };
    assert_eq!(first("baseline"), first("mvar_no_va"));
    assert_eq!(first("baseline"), first("mvar_va"));
}
