use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use mbgs::formats::{self, KeyframeFile};
use mbgs_core::geometry::{Quat, Vec3};
use mbgs_core::keyframe::{Keyframe, KeyframeTrack};

fn mbgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbgs")).args(args).output().expect("run mbgs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let o = mbgs(&["--help"]);
    assert_eq!(code(&o), 0);
    for sub in ["init-graph", "fit", "animate", "render", "check-grad", "serve", "synth"] {
        assert!(text(&o.stdout).contains(sub), "help lists {sub}");
    }
    assert!(!text(&o.stdout).contains("sabotage"));
    assert_eq!(code(&mbgs(&[])), 1);
    assert_eq!(code(&mbgs(&["fit", "--no-such-flag"])), 1);
    assert_eq!(code(&mbgs(&["teleport"])), 1);
    assert_eq!(code(&mbgs(&["fit", "--manifest", "m.json", "--graph", "g.json", "--out", "o.json", "--iters", "many"])), 1);
}

#[test]
fn missing_and_malformed_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = mbgs(&["fit", "--manifest", s(&missing), "--graph", s(&missing), "--out", s(&dir.path().join("o.json"))]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("missing.json"), "{}", text(&o.stderr));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, b"{\"format_version\": 1, \"frames\": ").unwrap();
    let o = mbgs(&["init-graph", "--manifest", s(&bad), "--out", s(&dir.path().join("g.json"))]);
    assert_eq!(code(&o), 2);

    let future = dir.path().join("future.json");
    std::fs::write(&future, br#"{"format_version": 99, "frames": {"pattern": "f{frame}.ply", "count": 2}, "canonical_index": 0, "correspondence": true}"#).unwrap();
    let o = mbgs(&["init-graph", "--manifest", s(&future), "--out", s(&dir.path().join("g.json"))]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("99"), "{}", text(&o.stderr));
}

#[test]
fn missing_frame_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = mbgs::synth::generate(mbgs::synth::SynthKind::Sheet, dir.path(), 0).unwrap();
    std::fs::remove_file(dir.path().join("frames/frame_0004.ply")).unwrap();
    let o = mbgs(&["fit", "--manifest", s(&out.manifest), "--graph", s(&out.graph), "--out", s(&dir.path().join("o.json"))]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("frame_0004.ply"), "{}", text(&o.stderr));
}

#[test]
fn gradient_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(code(&mbgs(&["synth", "gradcheck", "--out", d])), 0);
    let (m, g) = (dir.path().join("manifest.json"), dir.path().join("graph.json"));
    let o = mbgs(&["check-grad", "--manifest", s(&m), "--graph", s(&g)]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("max relative error"));
    let o = mbgs(&["check-grad", "--manifest", s(&m), "--graph", s(&g), "--sabotage"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn divergent_fit_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mbgs::synth::generate(mbgs::synth::SynthKind::Chain, dir.path(), 0).unwrap();
    let o = mbgs(&[
        "fit", "--manifest", s(&out.manifest), "--graph", s(&out.graph), "--out", s(&dir.path().join("o.json")),
        "--iters", "40", "--lr", "1e300",
    ]);
    assert_eq!(code(&o), 3, "{}", text(&o.stderr));
    assert!(!dir.path().join("o.json").exists());
}

#[test]
fn pipeline_from_synthetic_data_to_frames() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    assert_eq!(code(&mbgs(&["synth", "chain", "--out", s(dir.path())])), 0);

    let o = mbgs(&["init-graph", "--manifest", s(&p("manifest.json")), "--out", s(&p("init.json")), "--iters", "50"]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let (graph, _) = formats::load_graph_spec(&p("init.json")).unwrap();
    assert!(graph.topology.is_tree());
    assert_eq!(graph.topology.joint_count(), 4);

    let o = mbgs(&[
        "fit", "--manifest", s(&p("manifest.json")), "--graph", s(&p("init.json")), "--out", s(&p("fit.json")), "--iters", "30",
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("initial loss") && stdout.contains("final loss"), "{stdout}");
    let ckpt = formats::load_checkpoint(&p("fit.json")).unwrap();
    assert!(ckpt.history.last().unwrap() <= ckpt.history.first().unwrap());

    let o = mbgs(&[
        "fit", "--manifest", s(&p("manifest.json")), "--checkpoint", s(&p("fit.json")), "--out", s(&p("fit2.json")), "--iters", "10",
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));

    assert_eq!(code(&mbgs(&["render", "--checkpoint", s(&p("fit.json")), "--frame", "3", "--out", s(&p("f3.png"))])), 0);
    assert!(std::fs::read(p("f3.png")).unwrap().starts_with(b"\x89PNG"));
    assert_eq!(code(&mbgs(&["render", "--checkpoint", s(&p("fit.json")), "--frame", "99", "--out", s(&p("x.png"))])), 2);

    let topo = &ckpt.scene.graph.topology;
    let mut track = KeyframeTrack::new();
    let mut bent = ckpt.scene.canonical().clone();
    if let mbgs_core::graph::Theta::Tree(t) = &mut bent {
        t.rotations[1] = Quat::from_axis_angle(Vec3::Z, 0.7);
    }
    for (time, theta) in [(0.0, ckpt.scene.canonical().clone()), (1.0, bent)] {
        let key = Keyframe { time, theta, link_lengths: ckpt.scene.graph.link_lengths.clone() };
        track.push(topo, key).unwrap();
    }
    formats::write_json(&p("keys.json"), &KeyframeFile::new(&track)).unwrap();
    let o = mbgs(&[
        "animate", "--checkpoint", s(&p("fit.json")), "--keyframes", s(&p("keys.json")), "--out", s(&p("anim")), "--frames", "4",
        "--format", "ppm",
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    for i in 0..4 {
        assert!(std::fs::read(p("anim").join(format!("frame_{i:04}.ppm"))).unwrap().starts_with(b"P6"));
    }
    let o = mbgs(&[
        "animate", "--checkpoint", s(&p("fit.json")), "--keyframes", s(&p("keys.json")), "--out", s(&p("anim1")), "--frames", "1",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn serve_reports_its_address_and_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = mbgs::synth::generate(mbgs::synth::SynthKind::Chain, dir.path(), 0).unwrap();
    let ckpt = dir.path().join("arm.json");
    assert_eq!(
        code(&mbgs(&["fit", "--manifest", s(&out.manifest), "--graph", s(&out.graph), "--out", s(&ckpt), "--iters", "5"])),
        0
    );
    let mut child = Command::new(env!("CARGO_BIN_EXE_mbgs"))
        .args(["serve", "--port", "0", "--scene", s(&ckpt), "--export-dir", s(&dir.path().join("exports"))])
        .env("MBGS_THREADS", "3")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let result = std::panic::catch_unwind(|| {
        assert!(line.contains("with 3 worker threads"), "{line}");
        let addr = line.split_whitespace().nth(2).unwrap().to_string();
        let (status, body) = mbgs::server::client::http_get(&addr, "/scenes").unwrap();
        assert_eq!(status, 200);
        assert!(text(&body).contains("\"arm\""));
    });
    child.kill().unwrap();
    let _ = child.wait();
    if let Err(p) = result {
        std::panic::resume_unwind(p);
    }
}

#[test]
fn serve_needs_a_readable_scene() {
    let o = mbgs(&["serve", "--port", "0", "--scene", "/nonexistent/scene.json"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&mbgs(&["serve", "--port", "0"])), 1);
}
