use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use freespace_core::geom3d::CameraModel;
use freespace_core::scenegen::SceneSpec;

fn freespace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freespace"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = freespace(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two-frame version of the default scene at 160×120.
fn small_scene(dir: &Path, flip_rate: f64) -> std::path::PathBuf {
    let mut spec = SceneSpec::acceptance();
    spec.camera = CameraModel::new(131.25, 131.25, 80.0, 60.0, 160, 120).unwrap();
    spec.trajectory.truncate(2);
    spec.label_flip_rate = flip_rate;
    let path = dir.join("scene.json");
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let seq = dir.join("seq");
    ok(&["synth", "--scene", s(&path), "--out", s(&seq)]);
    seq
}

#[test]
fn synth_writes_a_sequence() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = small_scene(tmp.path(), 0.1);
    for f in ["camera.json", "scene.json"] {
        assert!(seq.join(f).is_file(), "{f}");
    }
    for k in 0..2 {
        for f in ["image.ppm", "probs.pfm2", "cloud.ply", "pose.json", "gt.pgm"] {
            assert!(seq.join(format!("frame_{k:03}")).join(f).is_file(), "{f}");
        }
    }
    assert!(!seq.join("frame_002").exists());
}

#[test]
fn stages_compose_to_the_pipeline_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = small_scene(tmp.path(), 0.2);
    let full = tmp.path().join("full");
    let out = ok(&["pipeline", "--input", s(&seq), "--out", s(&full)]);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("frame=0 energy="), "{log}");
    assert!(log.contains("frame=1 energy="), "{log}");

    let camera = seq.join("camera.json");
    for k in 0..2usize {
        let fd = seq.join(format!("frame_{k:03}"));
        let st = tmp.path().join(format!("stage_{k}"));
        let pose = fd.join("pose.json");
        ok(&["fit-plane", "--cloud", s(&fd.join("cloud.ply")), "--pose", s(&pose), "--out", s(&st)]);
        let plane = st.join("plane.json");
        ok(&[
            "fit-boxes", "--cloud", s(&fd.join("cloud.ply")), "--pose", s(&pose), "--plane", s(&plane), "--out",
            s(&st),
        ]);
        let boxes = st.join("boxes.json");
        let id = k.to_string();
        let (image, probs) = (fd.join("image.ppm"), fd.join("probs.pfm2"));
        let mut args = vec![
            "segment", "--camera", s(&camera), "--pose", s(&pose), "--image", s(&image), "--probs",
            s(&probs), "--plane", s(&plane), "--boxes", s(&boxes), "--frame-id", &id,
        ];
        let prev = tmp.path().join(format!("stage_{}", k.wrapping_sub(1)));
        let (pp, pb) = (prev.join("plane.json"), prev.join("boxes.json"));
        if k > 0 {
            args.extend(["--prev-plane", s(&pp), "--prev-boxes", s(&pb)]);
        }
        args.extend(["--out", s(&st)]);
        ok(&args);
        ok(&[
            "backproject", "--camera", s(&camera), "--pose", s(&pose), "--plane", s(&plane), "--mask",
            s(&st.join("mask.pgm")), "--frame-id", &id, "--out", s(&st),
        ]);

        let fo = full.join(format!("frame_{k:03}"));
        for f in ["plane.json", "boxes.json", "mask.pgm", "overlay.ppm", "freespace.ply"] {
            assert_eq!(fs::read(st.join(f)).unwrap(), fs::read(fo.join(f)).unwrap(), "frame {k}: {f}");
        }
    }

    let m: serde_json::Value = serde_json::from_slice(&fs::read(full.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["frames"].as_array().unwrap().len(), 2);
    let f = m["aggregate"]["fval"].as_f64().unwrap();
    assert!(f > 0.9, "{f}");
}

#[test]
fn pipeline_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = small_scene(tmp.path(), 0.2);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["pipeline", "--input", s(&seq), "--out", s(&a)]);
    ok(&["pipeline", "--input", s(&seq), "--out", s(&b)]);
    for f in ["mask.pgm", "freespace.ply"] {
        for k in 0..2 {
            let rel = format!("frame_{k:03}/{f}");
            assert_eq!(fs::read(a.join(&rel)).unwrap(), fs::read(b.join(&rel)).unwrap());
        }
    }
}

#[test]
fn eval_prints_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = small_scene(tmp.path(), 0.0);
    let gt = seq.join("frame_000/gt.pgm");
    let out = ok(&["eval", "--pred", s(&gt), "--gt", s(&gt), "--out", s(&tmp.path().join("e"))]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["fval"].as_f64(), Some(1.0));
    assert!(tmp.path().join("e/metrics.json").is_file());
}

#[test]
fn missing_input_is_exit_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = small_scene(tmp.path(), 0.0);
    fs::remove_file(seq.join("frame_001/probs.pfm2")).unwrap();
    let out = freespace(&["pipeline", "--input", s(&seq), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frame_001/probs.pfm2"), "{err}");
}

#[test]
fn no_plane_is_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = tmp.path().join("c.ply");
    fs::write(
        &cloud,
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 -1.6 5\n1 -1.6 6\n",
    )
    .unwrap();
    let pose = tmp.path().join("pose.json");
    fs::write(&pose, r#"{"rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0]}"#).unwrap();
    let out = freespace(&["fit-plane", "--cloud", s(&cloud), "--pose", s(&pose), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_is_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"bootstrap_threshold": 1.5}"#).unwrap();
    let out = freespace(&["fit-plane", "--cloud", "x.ply", "--pose", "p.json", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bootstrap threshold"), "{err}");
}
