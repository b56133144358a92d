use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qcrb_cli::commands::{self, report_file, runs_file};
use qcrb_cli::config::parse_config;
use qcrb_cli::pipeline;
use qcrb_core::estimation::{estimate_report, Fig2Row};
use qcrb_core::simulator::read_runs_csv;
use qcrb_core::states::{qfi, Model};
use serde_json::Value;

const MINIMAL: &str = r#"{"schema_version":1,"model":"coherent","phi_degrees":28,"p":0.85,"seed":11,"label":"run28"}"#;

fn qcrb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcrb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let bad = write_config(
        dir.path(),
        r#"{"schema_version":1,"model":"coherent","phi_degrees":100,"p":0.9,"seed":1}"#,
    );
    let o = qcrb(&["run", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("phi_degrees"));

    let unknown = write_config(
        dir.path(),
        r#"{"schema_version":1,"model":"coherent","phi_degrees":10,"p":0.9,"seed":1,"colour":1}"#,
    );
    let o = qcrb(&["run", "--config", s(&unknown), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown keys: colour"));

    let o = qcrb(&["run", "--config", s(&dir.path().join("missing.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));

    let good = write_config(dir.path(), MINIMAL);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = qcrb(&["run", "--config", s(&good), "--out", s(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(4));

    // windows with no coincidences leave the negativity undefined
    let o = qcrb(&["run", "--config", s(&good), "--out", s(&out), "--mean-total", "1e-6"]);
    assert_eq!(o.status.code(), Some(3));

    let o = qcrb(&["run", "--config", s(&good), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn outputs_match_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    assert!(qcrb(&["run", "--config", s(&config), "--out", s(&out)])
        .status
        .success());

    let cfg = &parse_config(MINIMAL).unwrap()[0];
    let acq = pipeline::simulate(cfg).unwrap();
    let expected = estimate_report(&acq.main, &acq.diagonal, cfg.phi(), Model::CoherentMixture).unwrap();

    // counts in the runs file are the simulated ones
    let records = read_runs_csv(fs::File::open(out.join(runs_file("run28"))).unwrap()).unwrap();
    let back = pipeline::split_records(cfg, &records).unwrap();
    assert_eq!(back, acq);

    let doc = read_json(&out.join(report_file("run28")));
    assert_eq!(doc["eps_hat_mean"].as_f64().unwrap(), expected.eps_hat_mean);
    assert_eq!(doc["var_times_K"].as_f64().unwrap(), expected.var_times_K.unwrap());
    assert_eq!(doc["eps_true"].as_f64().unwrap(), expected.eps_true.unwrap());
    assert_eq!(doc["mean_K"].as_f64().unwrap(), expected.mean_K);
    assert_eq!(doc["consistent_3sigma"].as_bool(), expected.consistent_3sigma);
    assert_eq!(doc["model"], "coherent");
    assert_eq!(doc["rng"], qcrb_core::rng::RNG_ID);
    for (i, f) in expected.fano.iter().enumerate() {
        assert_eq!(doc["fano"][i].as_f64(), *f);
    }
    for key in ["eps_hat_var", "qcrb_ref", "p_hat_mean", "p_hat_var", "eps_true_err"] {
        assert!(doc[key].is_number(), "{key}");
    }

    let werner = read_json(&out.join(commands::werner_file("run28")));
    assert_eq!(werner["rejected"], serde_json::json!(["werner"]));
    let w = estimate_report(&acq.main, &acq.diagonal, cfg.phi(), Model::Werner).unwrap();
    assert_eq!(werner["werner"]["eps_true"].as_f64(), w.eps_true);

    let row = Fig2Row::from_report(&expected).unwrap();
    let mut fig2 = Vec::new();
    qcrb_core::estimation::write_fig2_csv(&[row], &mut fig2).unwrap();
    assert_eq!(fs::read(out.join(commands::FIG2_FILE)).unwrap(), fig2);

    let fano = fs::read_to_string(out.join(commands::fano_file("run28"))).unwrap();
    assert!(fano.starts_with("outcome,mean,variance,fano\n0,"));
    assert_eq!(fano.lines().count(), 5);
}

#[test]
fn report_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let campaign = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_campaign.json");
    let (run_dir, report_dir) = (dir.path().join("run"), dir.path().join("report"));
    assert!(qcrb(&["run", "--config", campaign, "--out", s(&run_dir)])
        .status
        .success());
    let o = qcrb(&[
        "report",
        "--config",
        campaign,
        "--input",
        s(&run_dir),
        "--out",
        s(&report_dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut compared = 0;
    for entry in fs::read_dir(&report_dir).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(report_dir.join(&name)).unwrap(),
            fs::read(run_dir.join(&name)).unwrap(),
            "{name:?}"
        );
        compared += 1;
    }
    // 7 × (report, werner, fano) + fig2 + summary
    assert_eq!(compared, 23);

    let summary = read_json(&run_dir.join(commands::SUMMARY_FILE));
    let experiments = summary["experiments"].as_array().unwrap();
    assert_eq!(experiments.len(), 7);
    assert!(experiments.iter().all(|e| e["consistent_3sigma"] == true));
}

#[test]
fn seeds_and_flags_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let runs = |args: &[&str], name: &str| {
        let out = dir.path().join(name);
        let mut full = vec!["run", "--config", s(&config), "--out", s(&out)];
        full.extend_from_slice(args);
        assert!(qcrb(&full).status.success());
        fs::read(out.join(runs_file("run28"))).unwrap()
    };
    let base = runs(&[], "a");
    assert_eq!(base, runs(&["--seed", "11"], "b"));
    assert_ne!(base, runs(&["--seed", "12"], "c"));
    assert_ne!(base, runs(&["--no-shuffle"], "d"));
    let multi = runs(&["--multinomial", "--runs", "5", "--no-shuffle"], "e");
    let records = read_runs_csv(multi.as_slice()).unwrap();
    assert_eq!(records.len(), 10);
    assert!(records.iter().all(|r| r.counts.total() == 10_000));
    // the per-outcome shuffle keeps only the grand total
    let shuffled = read_runs_csv(runs(&["--multinomial", "--runs", "5"], "f").as_slice()).unwrap();
    assert_eq!(shuffled.iter().map(|r| r.counts.total()).sum::<u64>(), 100_000);
}

#[test]
fn werner_analysis_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schema_version":1,"model":"werner","phi_degrees":40,"p":0.92,"seed":3,"label":"w"}"#,
    );
    let out = dir.path().join("out");
    assert!(
        qcrb(&["run", "--config", s(&config), "--out", s(&out), "--model", "werner"])
            .status
            .success()
    );
    let doc = read_json(&out.join(report_file("w")));
    assert_eq!(doc["model"], "werner");
    assert_eq!(doc["consistent_3sigma"], true);
    let verdict = read_json(&out.join(commands::werner_file("w")));
    assert_eq!(verdict["rejected"], serde_json::json!(["coherent"]));
}

#[test]
fn fisher_scan_finds_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schema_version":1,"experiments":[
            {"model":"coherent","phi_degrees":28,"p":0.85,"seed":1,"label":"a","scan_step_degrees":5},
            {"model":"coherent","phi_degrees":45,"p":0.97,"seed":1,"label":"edge","scan_step_degrees":5}]}"#,
    );
    let out = dir.path().join("out");
    assert!(qcrb(&["fisher-scan", "--config", s(&config), "--out", s(&out)])
        .status
        .success());
    let scans = read_json(&out.join(commands::SCAN_SUMMARY_FILE));
    assert_eq!(scans[0]["near_optimum"], true);
    let best = scans[0]["best_value"].as_f64().unwrap();
    let eps = scans[0]["epsilon"].as_f64().unwrap();
    assert!((best * (1.0 - eps * eps) - 1.0).abs() < 1e-5);
    // ε = p sits on the pure boundary: flagged, not fatal
    assert!(scans[1]["skipped"].is_string());
    let grid = fs::read_to_string(out.join(commands::scan_file("a"))).unwrap();
    assert_eq!(grid.lines().count(), 1 + 36 * 36);
}

#[test]
fn qcrb_check_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    assert!(qcrb(&["qcrb-check", "--config", s(&config), "--out", s(&out)])
        .status
        .success());
    let checks = read_json(&out.join(commands::QCRB_CHECK_FILE));
    let q = qfi(&parse_config(MINIMAL).unwrap()[0].params()).unwrap();
    assert_eq!(checks[0]["qfi_numeric"].as_f64().unwrap(), q.h_numeric);
    assert_eq!(checks[0]["qfi_fixed_p"].as_f64().unwrap(), q.h_fixed_p);
    assert!((checks[0]["efficiency"].as_f64().unwrap() - 1.0).abs() < 1e-5);
}

#[test]
fn tomo_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schema_version":1,"model":"coherent","phi_degrees":45,"p":0.97,"seed":8,"label":"t"}"#,
    );
    let out = dir.path().join("out");
    assert!(qcrb(&["tomo", "--config", s(&config), "--out", s(&out)])
        .status
        .success());
    let doc = read_json(&out.join(commands::tomo_report_file("t")));
    let expected = pipeline::tomography(&parse_config(&fs::read_to_string(&config).unwrap()).unwrap()[0]).unwrap();
    assert_eq!(doc["fidelity"].as_f64().unwrap(), expected.summary.fidelity);
    assert_eq!(doc["trace_distance"].as_f64().unwrap(), expected.summary.trace_distance);
    let data =
        qcrb_core::tomography::TomoDataset::read_csv(fs::File::open(out.join(commands::tomo_data_file("t"))).unwrap())
            .unwrap();
    assert_eq!(data.entries.len(), 16);
    let rec = qcrb_core::tomography::linear_inversion(&data).unwrap();
    assert!(rec.matrix.max_abs_diff(&expected.reconstruction.matrix) < 1e-12);
}
