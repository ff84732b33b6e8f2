use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use carotid::io::read_mask;

fn carotid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carotid")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(code(&carotid(&[])), 1);
    assert_eq!(code(&carotid(&["rasterize", "--bogus"])), 1);
    assert_eq!(code(&carotid(&["--help"])), 0);
    assert_eq!(code(&carotid(&["hemo", "--waveform", "w.csv"])), 1);
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = carotid(&["--out-dir", s(dir.path()), "hemo", "--wss", s(&dir.path().join("absent.csv"))]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = carotid(&["--out-dir", s(dir.path()), "split", "--data", s(&dir.path().join("nowhere"))]);
    assert_eq!(code(&o), 1, "an empty dataset is a validation error");
}

#[test]
fn invalid_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let li = dir.path().join("li.txt");
    let ma = dir.path().join("ma.txt");
    fs::write(&li, "2 3\n7 3\n").unwrap();
    fs::write(&ma, "2 6\n7 6\n").unwrap();
    let o = carotid(&["--out-dir", s(dir.path()), "cimt", "--li", s(&li), "--ma", s(&ma), "--kappa", "-1"]);
    assert_eq!(code(&o), 1);
    fs::write(&li, "2 3\nnot a point\n").unwrap();
    let o = carotid(&["--out-dir", s(dir.path()), "rasterize", "--li", s(&li), "--ma", s(&ma)]);
    assert_eq!(code(&o), 1);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "dropout_rate = 1.5\n").unwrap();
    assert_eq!(code(&carotid(&["--config", s(&cfg), "gradcheck", "--points", "1"])), 1);
}

#[test]
fn rasterize_and_cimt_single_pair() {
    let dir = tempfile::tempdir().unwrap();
    let li = dir.path().join("li.txt");
    let ma = dir.path().join("ma.txt");
    fs::write(&li, "2 3\n7 3\n").unwrap();
    fs::write(&ma, "2 6\n7 6\n").unwrap();
    let out = dir.path().join("out");
    let o = carotid(&[
        "--out-dir", s(&out), "rasterize", "--li", s(&li), "--ma", s(&ma), "--height", "10", "--width", "10",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_mask(&out.join("mask.pgm")).unwrap().count_foreground(), 15);

    let o = carotid(&[
        "--out-dir", s(&out), "cimt", "--li", s(&li), "--ma", s(&ma), "--kappa", "0.06", "--height", "10", "--width",
        "10",
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("cimt.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "input");
    assert_eq!(row[1], "0.180000");
}

#[test]
fn hemo_on_constant_shear() {
    let dir = tempfile::tempdir().unwrap();
    let wss = dir.path().join("wss.csv");
    fs::write(&wss, "t,tau_x\n0,1.5\n0.5,1.5\n1,1.5\n").unwrap();
    let o = carotid(&["--out-dir", s(dir.path()), "hemo", "--wss", s(&wss)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("biomarkers.txt")).unwrap();
    assert_eq!(text, "tawss=1.500000\nosi=0.000000\nrrt=0.666667\n");

    fs::write(&wss, "t,tau_x\n0,0\n0.5,0\n1,0\n").unwrap();
    assert_eq!(code(&carotid(&["--out-dir", s(dir.path()), "hemo", "--wss", s(&wss)])), 1);
}

#[test]
fn physiological_womersley_waveform_runs() {
    let dir = tempfile::tempdir().unwrap();
    let wave = dir.path().join("q.csv");
    let mut text = String::from("t,q\n");
    for k in 0..=200 {
        let t = k as f64 / 200.0;
        text.push_str(&format!("{t},{:e}\n", 6e-6 + 3e-6 * (std::f64::consts::TAU * t).sin()));
    }
    fs::write(&wave, text).unwrap();
    let o = carotid(&["--out-dir", s(dir.path()), "hemo", "--waveform", s(&wave), "--radius", "0.003"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let wss = fs::read_to_string(dir.path().join("wss.csv")).unwrap();
    assert_eq!(wss.lines().count(), 202);
}

#[test]
fn gradcheck_reports_failure_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = carotid(&["--out-dir", s(dir.path()), "gradcheck", "--points", "3"]);
    assert_eq!(code(&o), 0);
    let o = carotid(&["--out-dir", s(dir.path()), "gradcheck", "--points", "3", "--tolerance", "1e-20"]);
    assert_eq!(code(&o), 1);
    let csv = fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert!(csv.starts_with("kernel,points,max_relative_error,pass\n"));
    assert_eq!(csv.lines().count(), 7);
}
