use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const FIG2: &str = include_str!("../presets/fig2.toml");

fn edgepir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgepir"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn fig2_retrieve_recovers_the_file() {
    let a = edgepir(&["retrieve", "--preset", "fig2"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let json: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(json["recovered"][0], "10110");
    assert_eq!(json["success"], true);
    assert_eq!(json["bits_from_mbs"], 0);

    let b = edgepir(&["retrieve", "--preset", "fig2"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn retrieve_checks_against_an_encoded_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("snap.bin");
    let snap_str = snap.to_str().unwrap();
    let enc = edgepir(&["encode", "--preset", "fig2", "--out", snap_str]);
    assert_eq!(code(&enc), 0);
    assert!(fs::metadata(&snap).unwrap().len() > 0);

    let cfg = FIG2.replace("[retrieve]\n", &format!("[retrieve]\nsnapshot = {snap_str:?}\n"));
    let path = write_config(dir.path(), "snap.toml", &cfg);
    let ret = edgepir(&["retrieve", "--config", &path]);
    assert_eq!(code(&ret), 0, "{}", String::from_utf8_lossy(&ret.stderr));
}

#[test]
fn encode_needs_an_output_path() {
    let out = edgepir(&["encode", "--preset", "fig2"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn privacy_holds_with_per_round_blinding() {
    let out = edgepir(&["verify-privacy", "--preset", "fig2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn privacy_fails_without_blinding() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["off", "shared"] {
        let path = write_config(dir.path(), "b.toml", &FIG2.replace("per-round", mode));
        let out = edgepir(&["verify-privacy", "--config", &path]);
        assert_eq!(code(&out), 4, "blinding {mode}");
    }
}

#[test]
fn config_and_constraint_errors_have_distinct_codes() {
    assert_eq!(code(&edgepir(&["rates", "--preset", "fig9"])), 2);
    assert_eq!(code(&edgepir(&["rates"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "typo.toml", &FIG2.replace("[scheme]\n", "[scheme]\nbogus = 1\n"));
    assert_eq!(code(&edgepir(&["rates", "--config", &path])), 2);

    let path = write_config(dir.path(), "budget.toml", &FIG2.replace("cache_size = 1.2", "cache_size = 0.5"));
    assert_eq!(code(&edgepir(&["retrieve", "--config", &path])), 3);

    let path = write_config(dir.path(), "n.toml", &FIG2.replace("n = 6\nblinding", "n = 7\nblinding"));
    assert_eq!(code(&edgepir(&["retrieve", "--config", &path])), 3);

    assert_eq!(code(&edgepir(&["sweep", "--preset", "fig2"])), 2);
}

#[test]
fn fig3_rates_match_the_grid() {
    let out = edgepir(&["rates", "--preset", "fig3"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    let row = rows.records().next().unwrap().unwrap();
    let get = |name: &str| row[header.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
    assert_eq!(get("R_noPIR"), 0.0);
    assert!((get("R_PIR") - 0.17355).abs() < 1e-4);
}

#[test]
fn fig3_sweep_is_deterministic_and_switches_placement() {
    let a = edgepir(&["sweep", "--preset", "fig3"]);
    assert_eq!(code(&a), 0);
    let b = edgepir(&["sweep", "--preset", "fig3"]);
    assert_eq!(a.stdout, b.stdout);

    let text = stdout(&a);
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(header[..7], ["M", "lambda", "T", "theta", "mu_star", "k_star", "n_star"]);
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 200);

    let t1 = |m: &str| rows.iter().find(|r| &r[col("T")] == "1" && r[col("M")].parse::<f64>().unwrap() == m.parse::<f64>().unwrap()).unwrap();
    assert_eq!((&t1("100")[col("n_star")], &t1("100")[col("k_star")]), ("3", "2"));
    assert_eq!((&t1("150")[col("n_star")], &t1("150")[col("k_star")]), ("2", "1"));
}

#[test]
fn fig5_reports_density_transitions() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("fig5.csv");
    let out = edgepir(&["sweep", "--preset", "fig5", "--out", csv_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let notes = stdout(&out);
    assert!(notes.contains("M=50 T=1 theta=0: no caching on [0.00001, 0.00008]"), "{notes}");
    assert!(notes.contains("(n,k)=(2,1) on [0.00013, 0.00036]"), "{notes}");
    let lines = fs::read_to_string(&csv_path).unwrap().lines().count();
    assert_eq!(lines, 1 + 3 * 50);
}

#[test]
fn simulate_agrees_with_closed_form() {
    let out = edgepir(&["simulate", "--preset", "fig3", "--trials", "5000", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["trials"], 5000);
    assert_eq!(json["within_3se"], true);
}
