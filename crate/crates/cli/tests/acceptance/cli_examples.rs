use hotdic::config::PipelineConfig;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hotdic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hotdic"))
        .args(args)
        .output()
        .expect("spawn hotdic")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    jsonschema::validator_for(&read_json(&path)).unwrap()
}

fn assert_valid(schema_name: &str, doc: &Path) {
    let v = schema(schema_name);
    let json = read_json(doc);
    let errors: Vec<String> = v.iter_errors(&json).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", doc.display());
}

/// Writes a config giving small, dense speckle so every subset has texture.
fn small_config(dir: &Path, size: usize) -> PathBuf {
    let path = dir.join("small.conf");
    fs::write(
        &path,
        format!("speckle.width = {size}\nspeckle.height = {size}\nspeckle.dot_density = 20.0\n"),
    )
    .unwrap();
    path
}

#[test]
fn shipped_default_config_is_canonical() {
    let text = include_str!("../../default.conf");
    assert_eq!(text, PipelineConfig::default().to_flat_string());
    assert_eq!(PipelineConfig::parse(text).unwrap(), PipelineConfig::default());
}

#[test]
fn empty_input_list_is_usage_error() {
    for cmd in ["fuse", "average", "mig"] {
        let out = hotdic(&[cmd]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
    }
}

#[test]
fn unknown_flag_and_bad_config_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hotdic(&["fuse", "--bogus", "x.pgm"]).status.code(), Some(2));
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "fusion.no_such_key = 1\n").unwrap();
    let out = hotdic(&["--config", s(&bad), "mig", "x.pgm"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(hotdic(&["--nsr", "-1", "mig", "x.pgm"]).status.code(), Some(2));
}

#[test]
fn fuse_one_image_writes_output_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 96);
    assert!(hotdic(&["--config", s(&cfg), "--out", s(d), "synth", "--kind", "under"]).status.success());
    let out_dir = d.join("fused");
    let out = hotdic(&["--out", s(&out_dir), "fuse", s(&d.join("under_000.pgm"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("under_000_fused.pgm").is_file());
    let manifest = out_dir.join("manifest.json");
    assert_valid("manifest.schema.json", &manifest);
    let m = read_json(&manifest);
    assert_eq!(m["command"], "fuse");
    assert_eq!(m["inputs"][0]["status"], "ok");
    let r = read_json(&out_dir.join("report.json"));
    assert!(r["files"][0]["mig_after"].as_f64().unwrap() > r["files"][0]["mig_before"].as_f64().unwrap());
}

#[test]
fn fuse_continues_past_bad_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 64);
    assert!(hotdic(&["--config", s(&cfg), "--out", s(d), "synth", "--count", "2"]).status.success());
    let missing = d.join("missing.pgm");
    let out = hotdic(&[
        "--out",
        s(&d.join("o")),
        "--jobs",
        "1",
        "fuse",
        s(&d.join("speckle_000.pgm")),
        s(&missing),
        s(&d.join("speckle_001.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let m = read_json(&d.join("o/manifest.json"));
    let statuses: Vec<&str> = m["inputs"].as_array().unwrap().iter().map(|f| f["status"].as_str().unwrap()).collect();
    assert_eq!(statuses, ["ok", "failed", "ok"]);
    assert!(d.join("o/speckle_001_fused.pgm").is_file());
}

#[test]
fn fuse_improves_mig_on_underexposed_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 128);
    let synth = hotdic(&["--config", s(&cfg), "--out", s(d), "--seed", "100", "synth", "--kind", "under", "--count", "10"]);
    assert!(synth.status.success());
    let mut args: Vec<String> = vec!["--out".into(), s(&d.join("f")).into(), "fuse".into()];
    args.extend((0..10).map(|i| s(&d.join(format!("under_{i:03}.pgm"))).to_string()));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    assert!(hotdic(&argv).status.success());
    let r = read_json(&d.join("f/report.json"));
    assert!(r["mig_improved"].as_u64().unwrap() >= 9, "{r}");
}

#[test]
fn fsim_identical_prints_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(hotdic(&["--out", s(d), "synth"]).status.success());
    let img = d.join("speckle_000.pgm");
    let out = hotdic(&["--out", s(&d.join("o")), "fsim", "--ref", s(&img), "--target", s(&img)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "1.000000\n");
}

#[test]
fn fsim_undefined_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.pgm");
    let mut bytes = b"P5\n64 64\n255\n".to_vec();
    bytes.extend(std::iter::repeat(128u8).take(64 * 64));
    fs::write(&flat, bytes).unwrap();
    let out = hotdic(&["--out", s(dir.path()), "fsim", "--ref", s(&flat), "--target", s(&flat)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dic_identical_reports_full_edca() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 128);
    assert!(hotdic(&["--config", s(&cfg), "--out", s(d), "synth"]).status.success());
    let img = d.join("speckle_000.pgm");
    let o = d.join("dic");
    let out = hotdic(&["--out", s(&o), "dic", "--ref", s(&img), "--def", s(&img)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&o.join("report.json"));
    assert_eq!(r["edca"].as_f64(), Some(100.0));
    let csv = fs::read_to_string(o.join("dic.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,u,v,zncc,exx,eyy,gxy,valid"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len() as u64, r["nodes"].as_u64().unwrap());
    assert!(rows.iter().all(|l| l.split(',').count() == 9));
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 64);
    for kind in ["speckle", "over", "haze"] {
        let a = d.join(format!("{kind}_a"));
        let b = d.join(format!("{kind}_b"));
        for o in [&a, &b] {
            let out = hotdic(&["--config", s(&cfg), "--out", s(o), "--seed", "9", "synth", "--kind", kind, "--count", "3", "--noise", "0.01"]);
            assert!(out.status.success());
        }
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for n in names.iter().filter(|n| n.to_string_lossy().ends_with(".pgm")) {
            assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{kind} {n:?}");
        }
        assert_eq!(read_json(&a.join("manifest.json"))["seeds"], read_json(&b.join("manifest.json"))["seeds"]);
    }
}

#[test]
fn average_accepts_file_output_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 64);
    assert!(hotdic(&["--config", s(&cfg), "--out", s(d), "synth", "--count", "2"]).status.success());
    let mean = d.join("avg/mean.pgm");
    let out = hotdic(&["--out", s(&mean), "average", s(&d.join("speckle_000.pgm")), s(&d.join("speckle_001.pgm"))]);
    assert!(out.status.success());
    assert!(mean.is_file());
    assert_valid("manifest.schema.json", &d.join("avg/manifest.json"));
}

#[test]
fn restore_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 64);
    assert!(hotdic(&["--config", s(&cfg), "--out", s(d), "synth", "--kind", "haze"]).status.success());
    let o = d.join("r");
    let out = hotdic(&["--out", s(&o), "--nsr", "0.02", "restore", "--ref", s(&d.join("reference.pgm")), "--target", s(&d.join("haze_000.pgm"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&o.join("report.json"));
    assert_eq!(r["nsr"].as_f64(), Some(0.02));
    assert!(r["report"]["final_fsim"].as_f64().unwrap() >= r["report"]["initial_fsim"].as_f64().unwrap());
    assert!(o.join("haze_000_restored.pgm").is_file());
}

#[test]
fn mig_reports_unreadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(hotdic(&["--out", s(d), "synth"]).status.success());
    let junk = d.join("junk.pgm");
    fs::write(&junk, b"not an image").unwrap();
    let out = hotdic(&["--out", s(&d.join("m")), "mig", s(&d.join("speckle_000.pgm")), s(&junk)]);
    assert_eq!(out.status.code(), Some(1));
    let r = read_json(&d.join("m/report.json"));
    assert_eq!(r[0]["status"], "ok");
    assert_eq!(r[1]["status"], "failed");
}

#[test]
fn experiment_haze_requires_fifteen_frames() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 64);
    assert!(hotdic(&["--config", s(&cfg), "--out", s(d), "synth", "--kind", "haze", "--count", "14"]).status.success());
    let mut args: Vec<String> = vec!["--out".into(), s(&d.join("e")).into(), "experiment-haze".into(), "--ref".into(), s(&d.join("reference.pgm")).into()];
    args.extend((0..14).map(|i| s(&d.join(format!("haze_{i:03}.pgm"))).to_string()));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = hotdic(&argv);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("15"));
}

#[test]
fn experiment_haze_identical_frames_give_zero_strain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, 96);
    assert!(hotdic(&["--config", s(&cfg), "--out", s(d), "synth"]).status.success());
    let img = s(&d.join("speckle_000.pgm")).to_string();
    let mut args: Vec<String> = vec!["--out".into(), s(&d.join("e")).into(), "experiment-haze".into(), "--ref".into(), img.clone()];
    args.extend(std::iter::repeat(img).take(15));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = hotdic(&argv);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = d.join("e/report.json");
    assert_valid("experiment-report.schema.json", &report);
    assert_valid("manifest.schema.json", &d.join("e/manifest.json"));
    let r = read_json(&report);
    for strategy in ["fused", "averaged", "restored"] {
        for c in ["abs_exx", "abs_eyy", "abs_gxy"] {
            let v = r[strategy][c].as_f64().unwrap();
            assert!(v < 1.0, "{strategy}.{c} = {v}");
        }
    }
}

#[test]
fn experiment_haze_rejects_unknown_order() {
    let out = hotdic(&["experiment-haze", "--ref", "a.pgm", "--order", "sideways", "b.pgm"]);
    assert_eq!(out.status.code(), Some(2));
}
