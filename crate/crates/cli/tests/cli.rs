use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vdc_core::metrics::CSV_HEADER;

fn vdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdc"))
        .args(args)
        .args(["--threads", "1"])
        .output()
        .expect("spawn vdc")
}

fn ok(args: &[&str]) -> Output {
    let out = vdc(args);
    assert!(
        out.status.success(),
        "vdc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("data.txt"), "frames = 3\nwidth = 16\nheight = 16\noracle_samples = 32\n").unwrap();
        std::fs::write(
            root.join("inv.txt"),
            "samples = 8\nepochs_a = 2\nepochs_b = 2\nepochs_c = 1\nood_resolution = 8\nood_channels = 4\n\
             ood_hidden = 8\nphi_dim = 4\nupsampler_hidden = 4\n",
        )
        .unwrap();
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn generator(&self) -> PathBuf {
        let out = self.p("gen.ckpt");
        ok(&["pretrain", "--out", s(&out), "--steps", "20", "--decoder-hidden", "8"]);
        out
    }

    fn dataset(&self) -> PathBuf {
        let out = self.p("data");
        ok(&["gen-dataset", "--config", s(&self.p("data.txt")), "--out", s(&out)]);
        out
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = vdc(&["pretrain", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let out = vdc(&["render", "--gen", "/nonexistent/g", "--dataset", "/nonexistent/d", "--inv", "/x", "--out", "/y"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error["), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn pretraining_is_deterministic_and_writes_a_manifest() {
    let f = Fixture::new();
    let a = f.p("a.ckpt");
    let b = f.p("b.ckpt");
    for out in [&a, &b] {
        ok(&["pretrain", "--out", s(out), "--steps", "20", "--decoder-hidden", "8", "--seed", "4"]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let manifest = std::fs::read_to_string(f.p("a.ckpt.manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 4") && manifest.contains("generator_hash = "), "{manifest}");
}

#[test]
fn staged_inversion_resumes_and_feeds_every_command() {
    let f = Fixture::new();
    let gen = f.generator();
    let data = f.dataset();
    let inv = f.p("inv.ckpt");
    let cfg = f.p("inv.txt");
    let base = ["--gen", s(&gen), "--dataset", s(&data)];
    ok(&[&["invert"][..], &base, &["--config", s(&cfg), "--out", s(&inv), "--stage", "a"]].concat());
    let after_a = std::fs::read(&inv).unwrap();
    let resumed = ok(&[&["invert"][..], &base, &["--config", s(&cfg), "--out", s(&inv), "--resume", s(&inv)]].concat());
    let text = String::from_utf8_lossy(&resumed.stdout);
    assert!(!text.contains("stage a") && text.contains("stage b") && text.contains("stage c"), "{text}");
    assert_ne!(std::fs::read(&inv).unwrap(), after_a);

    // Evaluation reads the checkpoint without changing it.
    let before = std::fs::read(&inv).unwrap();
    let report = f.p("metrics.csv");
    ok(&[&["eval"][..], &base, &["--inv", s(&inv), "--report", s(&report)]].concat());
    assert_eq!(std::fs::read(&inv).unwrap(), before);
    let csv = std::fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 4);

    let view = [&base[..], &["--inv", s(&inv), "--frame", "1"]].concat();
    ok(&[&["render"][..], &view, &["--out", s(&f.p("r.ppm"))]].concat());
    ok(&[&["remove-ood"][..], &view, &["--out", s(&f.p("c.ppm")), "--hr"]].concat());
    ok(&[&["edit"][..], &view, &["--out", s(&f.p("e.ppm")), "--direction", "radius", "--strength", "-1"]].concat());
    ok(&["novel-view", "--gen", s(&gen), "--inv", s(&inv), "--azimuth", "0.3", "--width", "8", "--height", "8", "--out", s(&f.p("n.ppm"))]);
    for (name, w) in [("r.ppm", 16), ("c.ppm", 32), ("e.ppm", 16), ("n.ppm", 16)] {
        let img = vdc_core::image::Image::load_pnm(&f.p(name)).unwrap();
        assert_eq!(img.width, w, "{name}");
    }

    let bad = vdc(&[&["edit"][..], &view, &["--out", s(&f.p("x.ppm")), "--direction", "smile", "--strength", "1"]].concat());
    assert_eq!(bad.status.code(), Some(1));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("radius") && err.contains("color"), "{err}");
    let far = vdc(&[&["edit"][..], &view, &["--out", s(&f.p("x.ppm")), "--direction", "radius", "--strength", "9"]].concat());
    assert_eq!(far.status.code(), Some(1));
}
