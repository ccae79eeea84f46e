use std::process::{Command, Output};

use tempfile::TempDir;

fn tinyturbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tinyturbo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tinyturbo(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn split_metadata(csv: &str) -> (serde_json::Value, Vec<&str>) {
    let mut lines = csv.lines();
    let first = lines.next().unwrap();
    let meta = serde_json::from_str(first.strip_prefix("# ").expect("metadata line")).unwrap();
    (meta, lines.collect())
}

#[test]
fn encode_zero_message() {
    let dir = TempDir::new().unwrap();
    let msgs = path(&dir, "zero.txt");
    std::fs::write(&msgs, "0".repeat(40) + "\n").unwrap();
    let bits = ok(&["encode", &msgs, "--bits"]);
    assert_eq!(bits.trim(), "0".repeat(132));
    let symbols = ok(&["encode", &msgs]);
    let values: Vec<f64> = symbols
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(values, vec![-1.0; 132]);
}

#[test]
fn rate_half_length() {
    let msg = "1".repeat(200) + "\n";
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "m.txt");
    std::fs::write(&file, msg).unwrap();
    let bits = ok(&[
        "encode",
        &file,
        "--bits",
        "--k",
        "200",
        "--puncture",
        "rate-half",
    ]);
    assert_eq!(bits.trim().len(), 412);
}

#[test]
fn encode_channel_decode_round_trip() {
    let dir = TempDir::new().unwrap();
    let (msgs, llr) = (path(&dir, "m.txt"), path(&dir, "llr.txt"));
    ok(&[
        "encode",
        "--random",
        "20",
        "--llr",
        "--snr",
        "6",
        "--seed",
        "3",
        "--messages-out",
        &msgs,
        "--out",
        &llr,
    ]);
    let frames = std::fs::read_to_string(&llr).unwrap();
    assert_eq!(frames.lines().count(), 20);
    assert!(frames.lines().all(|l| l.split_whitespace().count() == 132));
    for precision in ["f64", "f32"] {
        let decoded = ok(&["decode", "--llr-in", &llr, "--precision", precision]);
        assert_eq!(decoded, std::fs::read_to_string(&msgs).unwrap());
    }
    let post = ok(&[
        "decode",
        "--llr-in",
        &llr,
        "--decoder",
        "map:2",
        "--posterior",
    ]);
    assert_eq!(post.lines().next().unwrap().split_whitespace().count(), 40);

    let csv = ok(&[
        "compare",
        "--llr-in",
        &llr,
        "--messages",
        &msgs,
        "--decoder",
        "tinyturbo",
        "--decoder",
        "maxlog:3",
    ]);
    let (meta, rows) = split_metadata(&csv);
    assert_eq!(meta["command"], "external");
    assert_eq!(rows[0], "decoder,frames,bit_errors,block_errors,ber,bler");
    assert_eq!(rows[1], "tinyturbo,20,0,0,0e0,0e0");
    assert_eq!(rows[2], "maxlog3,20,0,0,0e0,0e0");
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate",
        "--snr",
        "-1,0.5",
        "--frames",
        "300",
        "--seed",
        "9",
        "--decoder",
        "maxlog:2",
    ];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    let (meta, rows) = split_metadata(&a);
    assert_eq!(meta["seed"], 9);
    assert_eq!(rows[0], "snr_db,frames,bit_errors,block_errors,ber,bler");
    assert_eq!(rows.len(), 3);
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        let frames: u64 = cols[1].parse().unwrap();
        let bits: u64 = cols[2].parse().unwrap();
        let ber: f64 = cols[4].parse().unwrap();
        assert!(frames <= 300);
        assert!((ber - bits as f64 / (frames as f64 * 40.0)).abs() < 1e-12);
    }
}

#[test]
fn config_file_drives_compare() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "exp.toml");
    std::fs::write(
        &cfg,
        r#"
seed = 5
snr = [2.0]
max_frames = 200
min_block_errors = 0

[code]
interleaver = { k = 40 }
trellis = "757"

[channel]
kind = "bursty"
sigma_b = 5.0
rho = 0.01

[[decoder]]
weights = "preset"

[[decoder]]
label = "classic"
algorithm = "map"
iterations = 2
"#,
    )
    .unwrap();
    let csv = ok(&["compare", "--config", &cfg]);
    let (meta, rows) = split_metadata(&csv);
    assert_eq!(meta["channel"]["kind"], "bursty");
    assert_eq!(meta["code"]["trellis"], "757");
    assert_eq!(
        rows[0],
        "snr_db,frames,tinyturbo_bit_errors,tinyturbo_block_errors,tinyturbo_ber,tinyturbo_bler,\
         classic_bit_errors,classic_block_errors,classic_ber,classic_bler"
    );
    assert!(rows[1].starts_with("2,200,"));
    assert!(meta["paired"][0][0]["p_a_better"].is_number());
}

#[test]
fn analyze_deterministic_burst() {
    let csv = ok(&[
        "analyze",
        "--channel",
        "burst",
        "--snr",
        "3",
        "--trials",
        "50",
        "--decoder",
        "tinyturbo",
    ]);
    let (meta, rows) = split_metadata(&csv);
    assert_eq!(meta["channel"]["kind"], "deterministic_burst");
    assert_eq!(meta["channel"]["position"], 56);
    assert_eq!(rows[0], "position,tinyturbo_mean,tinyturbo_std");
    assert_eq!(rows.len(), 41);
}

#[test]
fn train_writes_weights_and_curves() {
    let dir = TempDir::new().unwrap();
    let (weights, curves) = (path(&dir, "w.json"), path(&dir, "curves.csv"));
    ok(&[
        "train",
        "--steps",
        "3",
        "--batch",
        "8",
        "--snr",
        "-1",
        "--lr",
        "0.01",
        "--seed",
        "2",
        "--validate-every",
        "3",
        "--val-frames",
        "50",
        "--out",
        &weights,
        "--curves",
        &curves,
    ]);
    let w: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&weights).unwrap()).unwrap();
    assert_eq!(w["scheme"], "shared");
    assert_eq!(w["iterations"], 3);
    assert_eq!(w["weights"].as_array().unwrap().len(), 3);
    assert_eq!(w["weights"][0].as_array().unwrap().len(), 6);
    let text = std::fs::read_to_string(&curves).unwrap();
    let (meta, rows) = split_metadata(&text);
    assert_eq!(meta["train"]["batch_size"], 8);
    assert_eq!(rows[0], "step,loss,val_ber");
    assert_eq!(rows.len(), 4);
    assert!(rows[3].split(',').nth(2).unwrap().parse::<f64>().is_ok());

    let pos = path(&dir, "p.json");
    ok(&[
        "train",
        "--steps",
        "1",
        "--batch",
        "4",
        "--scheme",
        "positional",
        "--loss",
        "mse",
        "--base",
        "map",
        "--out",
        &pos,
        "--curves",
        &path(&dir, "c2.csv"),
    ]);
    let p: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&pos).unwrap()).unwrap();
    assert_eq!(p["scheme"], "positional");
    assert_eq!(p["K"], 40);
    assert_eq!(p["weights"][0][0].as_array().unwrap().len(), 40);

    let sim = ok(&[
        "simulate",
        "--decoder",
        &format!("{weights}@maxlog"),
        "--frames",
        "50",
    ]);
    assert!(split_metadata(&sim).0["decoders"][0]["label"] == "w");
}

#[test]
fn contract_errors_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let bad = path(&dir, "bad.txt");
    std::fs::write(&bad, "1.0 2.0 3.0\n").unwrap();
    let out = tinyturbo(&["decode", "--llr-in", &bad]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    assert!(!tinyturbo(&["simulate", "--k", "41"]).status.success());
    assert!(
        !tinyturbo(&["simulate", "--channel", "bursty", "--rho", "2"])
            .status
            .success()
    );
    assert!(
        !tinyturbo(&["train", "--steps", "0", "--out", &path(&dir, "w.json")])
            .status
            .success()
    );
    assert!(
        !tinyturbo(&["simulate", "--channel", "awgn", "--rho", "0.1"])
            .status
            .success()
    );
    assert!(!tinyturbo(&[
        "decode",
        "--decoder",
        &path(&dir, "missing.json"),
        "--llr-in",
        &bad
    ])
    .status
    .success());
    let msg = path(&dir, "m.txt");
    std::fs::write(&msg, "0101\n").unwrap();
    assert!(!tinyturbo(&["encode", &msg]).status.success());
}
