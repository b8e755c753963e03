use std::path::Path;

use reframe_cli::run;
use reframe_core::io;

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("reframe").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = d.join("scene");
    assert_eq!(cli(&["synth", "--scene", "checker_plane", "--frames", "12", "--out", p(&scene)]), 0);
    assert_eq!(cli(&["lift", "--scene", p(&scene), "--out", p(&d.join("pm"))]), 0);
    let traj = d.join("traj.json");
    assert_eq!(
        cli(&["traj", "--preset", "truck", "--param", "total_offset=0.3", "--scene", p(&scene), "--out", p(&traj)]),
        0
    );
    assert_eq!(
        cli(&[
            "flow", "--scene", p(&scene), "--target", p(&traj), "--pointmaps", p(&d.join("pm")), "--out",
            p(&d.join("flow")),
        ]),
        0
    );
    assert_eq!(
        cli(&["warp", "--scene", p(&scene), "--flow", p(&d.join("flow")), "--out", p(&d.join("warp"))]),
        0
    );
    let count = |prefix: &str| {
        std::fs::read_dir(d.join("warp"))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_str().unwrap().starts_with(prefix))
            .count()
    };
    assert_eq!(count("warped_"), 12);
    assert_eq!(count("holes_"), 12);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("warp/warp_report.json")).unwrap()).unwrap();
    assert_eq!(report["frames"].as_array().unwrap().len(), 12);
    // truck moves frame 0 nowhere and the last frame furthest
    assert_eq!(report["frames"][0]["hole_fraction"], 0.0);
    assert!(report["frames"][11]["hole_fraction"].as_f64().unwrap() > 0.0);

    // flowing from pointmaps and from the scene directly agree
    assert_eq!(
        cli(&["flow", "--scene", p(&scene), "--target", p(&traj), "--out", p(&d.join("flow2"))]),
        0
    );
    for t in [0, 5, 11] {
        let a = io::read_flo(&d.join(format!("flow/flow_{t:04}.flo"))).unwrap();
        let b = io::read_flo(&d.join(format!("flow2/flow_{t:04}.flo"))).unwrap();
        for (x, y) in a.vectors.as_slice().iter().zip(b.vectors.as_slice()) {
            assert!((x - y).norm() < 1e-3);
        }
    }

    assert_eq!(
        cli(&["pe", "--scene", p(&scene), "--flow", p(&d.join("flow")), "--channels", "8", "--out", p(&d.join("pe"))]),
        0
    );
    let t = io::read_camt(&d.join("pe/pe_0003.camt")).unwrap();
    assert_eq!(t.dims, vec![96, 128, 8]);
    assert!(d.join("pe/coords_identity.camt").exists());

    let report = d.join("eval.json");
    assert_eq!(
        cli(&[
            "eval", "--pred", p(&d.join("warp")), "--gt", p(&scene.join("frames")), "--metrics", "psnr,ssim",
            "--out", p(&report),
        ]),
        0
    );
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["mask"], "full");
    assert_eq!(v["metrics"]["psnr"]["per_frame"].as_array().unwrap().len(), 12);
    assert_eq!(v["metrics"]["psnr"]["per_frame"][0], 99.0);
}

#[test]
fn identity_target_gives_zero_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = d.join("scene");
    assert_eq!(cli(&["synth", "--scene", "two_planes", "--frames", "3", "--pan", "0.1", "--out", p(&scene)]), 0);
    // the scene's own cameras are the identity target
    assert_eq!(
        cli(&[
            "flow", "--scene", p(&scene), "--target", p(&scene.join("cameras.json")), "--out", p(&d.join("flow")),
        ]),
        0
    );
    for t in 0..3 {
        let f = io::read_flo(&d.join(format!("flow/flow_{t:04}.flo"))).unwrap();
        assert!(f.valid.as_slice().iter().all(|v| *v));
        assert!(f.vectors.as_slice().iter().all(|v| v.x == 0.0 && v.y == 0.0));
    }
    std::fs::write(d.join("id.json"), r#"{"R":[[1,0,0],[0,1,0],[0,0,1]],"t":[0,0,0]}"#).unwrap();
    assert_eq!(
        cli(&["flow", "--scene", p(&scene), "--rel", p(&d.join("id.json")), "--out", p(&d.join("flow_rel"))]),
        0
    );
    let bytes = std::fs::read(d.join("flow_rel/flow_0001.flo")).unwrap();
    assert!(bytes[12..].iter().all(|b| *b == 0));
}

fn hole_fractions(report: &Path) -> Vec<f64> {
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    v["frames"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["hole_fraction"].as_f64().unwrap())
        .collect()
}

#[test]
fn all_frame_fills_more_than_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = d.join("scene");
    assert_eq!(cli(&["synth", "--scene", "two_planes", "--frames", "6", "--pan", "0.08", "--out", p(&scene)]), 0);
    std::fs::write(d.join("rel.json"), r#"{"R":[[1,0,0],[0,1,0],[0,0,1]],"t":[-0.2,0,0]}"#).unwrap();
    let rel = d.join("rel.json");
    for mode in ["per-frame", "all-frame"] {
        assert_eq!(
            cli(&["warp", "--scene", p(&scene), "--mode", mode, "--rel", p(&rel), "--out", p(&d.join(mode))]),
            0
        );
    }
    let per = hole_fractions(&d.join("per-frame/warp_report.json"));
    let all = hole_fractions(&d.join("all-frame/warp_report.json"));
    for (a, b) in all.iter().zip(&per) {
        assert!(a <= b, "{all:?} vs {per:?}");
    }
    assert!(all.iter().sum::<f64>() < per.iter().sum::<f64>());
}

#[test]
fn pose_from_matches_writes_camera_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = d.join("scene");
    assert_eq!(cli(&["synth", "--scene", "textured_sphere", "--frames", "1", "--out", p(&scene)]), 0);
    let mut matches = Vec::new();
    for y in (5..90).step_by(6) {
        for x in (5..120).step_by(6) {
            matches.push(format!(r#"{{"src":[{x},{y}],"tgt":[{x},{y}]}}"#));
        }
    }
    std::fs::write(d.join("m.json"), format!("[{}]", matches.join(","))).unwrap();
    let out = d.join("pose.json");
    assert_eq!(
        cli(&["--seed", "7", "pose", "--scene", p(&scene), "--matches", p(&d.join("m.json")), "--out", p(&out)]),
        0
    );
    let file = io::read_camera_json(&out).unwrap();
    let pose = file.frames[0].pose().unwrap();
    assert!(pose.translation().norm() < 1e-6);
    assert!((pose.rotation() - nalgebra::Matrix3::identity()).norm() < 1e-6);
}

#[test]
fn keyframe_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let kf = d.join("kf.json");
    std::fs::write(
        &kf,
        r#"{"intrinsics":{"fx":100,"fy":100,"cx":63.5,"cy":47.5,"width":128,"height":96},
            "frames":[{"index":0,"R":[[1,0,0],[0,1,0],[0,0,1]],"t":[0,0,0]},
                      {"index":10,"R":[[1,0,0],[0,1,0],[0,0,1]],"t":[1,0,0]}]}"#,
    )
    .unwrap();
    let out = d.join("traj.json");
    assert_eq!(cli(&["traj", "--keyframes", p(&kf), "--frames", "12", "--out", p(&out)]), 0);
    let traj = io::read_camera_json(&out).unwrap().to_trajectory().unwrap();
    assert_eq!(traj.len(), 12);
    assert!((traj.poses[5].translation().x - 0.5).abs() < 1e-12);
    assert_eq!(traj.poses[11].translation().x, 1.0);
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["warp", "--help"]), 0);
    assert_eq!(cli(&[]), 2);
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["warp", "--scene", "x", "--bogus"]), 2);
    // missing target source
    assert_eq!(cli(&["warp", "--scene", "x", "--out", "y"]), 2);
    // missing input directory
    assert_eq!(cli(&["lift", "--scene", "/nonexistent/scene", "--out", "/tmp/x"]), 2);
    assert_eq!(cli(&["synth", "--scene", "cube", "--out", "/tmp/x"]), 2);

    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    std::fs::create_dir_all(&scene).unwrap();
    // present but broken scene: processing error
    std::fs::write(scene.join("cameras.json"), "{").unwrap();
    assert_eq!(cli(&["lift", "--scene", p(&scene), "--out", p(&dir.path().join("o"))]), 1);
}
