use std::path::PathBuf;
use std::process::{Command, Output};

fn frac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frac")).args(args).output().expect("spawn frac")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("frac-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn resolution_lists_the_cell_sizes() {
    let text = stdout(&frac(&["resolution"]));
    assert!(text.lines().next().unwrap().contains("range_m"));
    assert!(text.contains("14.98962"), "{text}");
}

#[test]
fn codec_round_trips_through_a_frame_file() {
    let hex = "0123456789abcdef0123456789abcdef0123456789abcdef0123456789abcdef012345";
    let frame = scratch("frame.txt");
    stdout(&frac(&["codec", "encode", "--hex", hex, "--out", frame.to_str().unwrap()]));
    let decoded = stdout(&frac(&["codec", "decode", "--frame", frame.to_str().unwrap()]));
    assert!(decoded.contains(hex), "{decoded}");
}

#[test]
fn synth_then_estimate_finds_the_targets() {
    let snap = scratch("snap.bin");
    stdout(&frac(&["synth", "--snr", "30", "--out", snap.to_str().unwrap()]));
    assert!(snap.with_extension("bin.meta").exists());
    let csv = stdout(&frac(&["estimate", "--input", snap.to_str().unwrap(), "--algo", "omp"]));
    assert_eq!(csv.lines().count(), 4, "{csv}");
}

#[test]
fn json_output_follows_the_extension() {
    let out = scratch("crlb.json");
    stdout(&frac(&["crlb", "--snr", "10,20", "--out", out.to_str().unwrap()]));
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(value.is_array() || value.is_object());
}

#[test]
fn input_errors_exit_with_two() {
    assert_eq!(frac(&["estimate", "--algo", "nonsense"]).status.code(), Some(2));
    let cfg = scratch("bad.cfg");
    std::fs::write(&cfg, "p: 8\nk: 9\n").unwrap();
    assert_eq!(frac(&["--config", cfg.to_str().unwrap(), "resolution"]).status.code(), Some(2));
}
