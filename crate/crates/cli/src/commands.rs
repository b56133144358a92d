//! Subcommand bodies. Each writes plain files into an output directory and
//! returns what it wrote so the binary can print a short table.

use std::fs;
use std::path::{Path, PathBuf};

use qcrb_core::estimation::{write_fig2_csv, DiscriminationVerdict, EstimationReport, Fig2Row};
use qcrb_core::format::sig;
use qcrb_core::measurement::{effective_fisher_information, fisher_information};
use qcrb_core::rng::RNG_ID;
use qcrb_core::simulator::{read_runs_csv, write_runs_csv, RunRecord};
use qcrb_core::states::{qfi, Model, D_EPS};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::error::CliError;
use crate::pipeline::{self, Acquisition, Analysis, FanoTable};

pub fn runs_file(label: &str) -> String {
    format!("{label}_runs.csv")
}
pub fn report_file(label: &str) -> String {
    format!("{label}_report.json")
}
pub fn werner_file(label: &str) -> String {
    format!("{label}_werner.json")
}
pub fn fano_file(label: &str) -> String {
    format!("{label}_fano.csv")
}
pub fn tomo_data_file(label: &str) -> String {
    format!("{label}_tomo.csv")
}
pub fn tomo_report_file(label: &str) -> String {
    format!("{label}_tomo.json")
}
pub fn scan_file(label: &str) -> String {
    format!("{label}_fisher_scan.csv")
}
pub const FIG2_FILE: &str = "fig2.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCAN_SUMMARY_FILE: &str = "fisher_scan.json";
pub const QCRB_CHECK_FILE: &str = "qcrb_check.json";

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Runs `f` over the experiments in parallel, keeping config order and
/// returning the first error in that order.
fn for_each<T: Send>(
    configs: &[ExperimentConfig],
    f: impl Fn(&ExperimentConfig) -> Result<T, CliError> + Sync + Send,
) -> Result<Vec<T>, CliError> {
    configs.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    schema_version: u64,
    label: &'a str,
    rng: &'static str,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    report: &'a EstimationReport,
}

#[derive(Serialize)]
struct ComparisonDoc<'a> {
    schema_version: u64,
    label: &'a str,
    rng: &'static str,
    coherent: &'a EstimationReport,
    werner: &'a EstimationReport,
    verdict: &'a DiscriminationVerdict,
    /// Models inconsistent with the data at 3σ.
    rejected: Vec<Model>,
}

/// One line of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct ExperimentSummary {
    pub label: String,
    /// Family the data were drawn from.
    pub model: Model,
    pub analysis_model: Model,
    pub phi_degrees: f64,
    pub p: f64,
    pub seed: u64,
    pub runs: usize,
    pub eps_true: Option<f64>,
    pub eps_hat_mean: f64,
    pub eps_hat_var: Option<f64>,
    pub var_times_K: Option<f64>,
    pub qcrb_ref: Option<f64>,
    /// `var_times_K / qcrb_ref`; 1 at the bound.
    pub qcrb_ratio: Option<f64>,
    pub consistent_3sigma: Option<bool>,
    pub coherent_consistent: Option<bool>,
    pub werner_consistent: Option<bool>,
}

impl ExperimentSummary {
    fn new(cfg: &ExperimentConfig, a: &Analysis) -> Self {
        let r = &a.report;
        let verdict = a.comparison.as_ref().map(|(_, v)| v);
        ExperimentSummary {
            label: cfg.label.clone(),
            model: cfg.model,
            analysis_model: r.model,
            phi_degrees: cfg.phi_degrees,
            p: cfg.p,
            seed: cfg.seed,
            runs: r.runs,
            eps_true: r.eps_true,
            eps_hat_mean: r.eps_hat_mean,
            eps_hat_var: r.eps_hat_var,
            var_times_K: r.var_times_K,
            qcrb_ref: r.qcrb_ref,
            qcrb_ratio: r
                .var_times_K
                .zip(r.qcrb_ref)
                .and_then(|(v, q)| (q > 0.0).then(|| v / q)),
            consistent_3sigma: r.consistent_3sigma,
            coherent_consistent: verdict.and_then(|v| v.consistent(Model::CoherentMixture)),
            werner_consistent: verdict.and_then(|v| v.consistent(Model::Werner)),
        }
    }
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    schema_version: u64,
    rng: &'static str,
    experiments: &'a [ExperimentSummary],
}

pub fn fano_csv(table: &FanoTable) -> Vec<u8> {
    let mut s = String::from("outcome,mean,variance,fano\n");
    for r in &table.rows {
        let fano = r.fano.map(|f| sig(f, 9)).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.outcome,
            sig(r.mean, 9),
            sig(r.variance, 9),
            fano
        ));
    }
    s.into_bytes()
}

fn write_analysis(dir: &Path, cfg: &ExperimentConfig, a: &Analysis) -> Result<(), CliError> {
    let doc = ReportDoc {
        schema_version: SCHEMA_VERSION,
        label: &cfg.label,
        rng: RNG_ID,
        config: cfg,
        report: &a.report,
    };
    write(dir, &report_file(&cfg.label), &json(&doc))?;
    write(dir, &fano_file(&cfg.label), &fano_csv(&a.fano))?;
    if let Some((alt, verdict)) = &a.comparison {
        let (coherent, werner) = match a.report.model {
            Model::CoherentMixture => (&a.report, alt),
            Model::Werner => (alt, &a.report),
        };
        let doc = ComparisonDoc {
            schema_version: SCHEMA_VERSION,
            label: &cfg.label,
            rng: RNG_ID,
            coherent,
            werner,
            verdict,
            rejected: verdict
                .models
                .iter()
                .filter(|m| m.consistent == Some(false))
                .map(|m| m.model)
                .collect(),
        };
        write(dir, &werner_file(&cfg.label), &json(&doc))?;
    }
    Ok(())
}

fn write_campaign(dir: &Path, analyses: &[(ExperimentSummary, Option<Fig2Row>)]) -> Result<(), CliError> {
    let rows: Vec<Fig2Row> = analyses.iter().filter_map(|(_, row)| *row).collect();
    let mut fig2 = Vec::new();
    write_fig2_csv(&rows, &mut fig2).expect("in-memory write");
    write(dir, FIG2_FILE, &fig2)?;
    let summaries: Vec<ExperimentSummary> = analyses.iter().map(|(s, _)| s.clone()).collect();
    let doc = SummaryDoc {
        schema_version: SCHEMA_VERSION,
        rng: RNG_ID,
        experiments: &summaries,
    };
    write(dir, SUMMARY_FILE, &json(&doc))
}

fn runs_csv(acq: &Acquisition) -> Result<Vec<u8>, CliError> {
    let records: Vec<RunRecord> = acq.main.iter().chain(&acq.diagonal).copied().collect();
    let mut buf = Vec::new();
    write_runs_csv(&records, &mut buf)?;
    Ok(buf)
}

fn analyse_and_write(
    dir: &Path,
    cfg: &ExperimentConfig,
    acq: &Acquisition,
    model: Model,
) -> Result<(ExperimentSummary, Option<Fig2Row>), CliError> {
    let analysis = pipeline::analyse(cfg, acq, model)?;
    write_analysis(dir, cfg, &analysis)?;
    Ok((
        ExperimentSummary::new(cfg, &analysis),
        Fig2Row::from_report(&analysis.report),
    ))
}

/// `run`: simulate, analyse under `model`, and write every per-experiment
/// file plus `fig2.csv` and `summary.json`.
pub fn cmd_run(configs: &[ExperimentConfig], out: &Path, model: Model) -> Result<Vec<ExperimentSummary>, CliError> {
    ensure_dir(out)?;
    let analyses = for_each(configs, |cfg| {
        let acq = pipeline::simulate(cfg)?;
        write(out, &runs_file(&cfg.label), &runs_csv(&acq)?)?;
        let result = analyse_and_write(out, cfg, &acq, model)?;
        if cfg.tomography {
            write_tomography(out, cfg)?;
        }
        if cfg.fisher_scan {
            write_scan(out, cfg)?;
        }
        Ok(result)
    })?;
    write_campaign(out, &analyses)?;
    Ok(analyses.into_iter().map(|(s, _)| s).collect())
}

/// `report`: re-analyse runs files from `input` without simulating.
pub fn cmd_report(
    configs: &[ExperimentConfig],
    input: &Path,
    out: &Path,
    model: Model,
) -> Result<Vec<ExperimentSummary>, CliError> {
    ensure_dir(out)?;
    let analyses = for_each(configs, |cfg| {
        let path = input.join(runs_file(&cfg.label));
        let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        let records = read_runs_csv(std::io::BufReader::new(file))?;
        let acq =
            pipeline::split_records(cfg, &records).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        analyse_and_write(out, cfg, &acq, model)
    })?;
    write_campaign(out, &analyses)?;
    Ok(analyses.into_iter().map(|(s, _)| s).collect())
}

fn write_tomography(dir: &Path, cfg: &ExperimentConfig) -> Result<pipeline::TomographySummary, CliError> {
    let t = pipeline::tomography(cfg)?;
    let mut data = Vec::new();
    t.dataset.write_csv(&mut data).expect("in-memory write");
    write(dir, &tomo_data_file(&cfg.label), &data)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        schema_version: u64,
        label: &'a str,
        rng: &'static str,
        #[serde(flatten)]
        summary: &'a pipeline::TomographySummary,
        /// Row-major `[re, im]` pairs of the unit-trace linear-inversion estimate.
        rho_raw: Vec<[f64; 2]>,
    }
    let rho_raw = t
        .reconstruction
        .matrix
        .0
        .iter()
        .flatten()
        .map(|z| [z.re, z.im])
        .collect();
    let doc = Doc {
        schema_version: SCHEMA_VERSION,
        label: &cfg.label,
        rng: RNG_ID,
        summary: &t.summary,
        rho_raw,
    };
    write(dir, &tomo_report_file(&cfg.label), &json(&doc))?;
    Ok(t.summary)
}

/// `tomo`: tomography outputs for every experiment.
pub fn cmd_tomo(
    configs: &[ExperimentConfig],
    out: &Path,
) -> Result<Vec<(String, pipeline::TomographySummary)>, CliError> {
    ensure_dir(out)?;
    for_each(configs, |cfg| Ok((cfg.label.clone(), write_tomography(out, cfg)?)))
}

/// Best grid point of one scan, or why the scan was skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub label: String,
    pub epsilon: f64,
    pub step_degrees: f64,
    pub best_alpha_degrees: Option<f64>,
    pub best_beta_degrees: Option<f64>,
    pub best_value: Option<f64>,
    /// `1/(1 − ε²)`.
    pub qfi: f64,
    /// The argmax lies within one grid step of `(±45°, ±45°)`.
    pub near_optimum: Option<bool>,
    pub skipped: Option<String>,
}

fn write_scan(dir: &Path, cfg: &ExperimentConfig) -> Result<ScanSummary, CliError> {
    let eps = cfg.params().epsilon();
    let mut summary = ScanSummary {
        label: cfg.label.clone(),
        epsilon: eps,
        step_degrees: cfg.scan_step_degrees,
        best_alpha_degrees: None,
        best_beta_degrees: None,
        best_value: None,
        qfi: 1.0 / (1.0 - eps * eps),
        near_optimum: None,
        skipped: None,
    };
    match pipeline::fisher_scan(cfg) {
        Err(reason) => summary.skipped = Some(reason),
        Ok(scan) => {
            let mut s = String::from("alpha_deg,beta_deg,fisher_eff\n");
            for (i, a) in scan.angles.iter().enumerate() {
                for (j, b) in scan.angles.iter().enumerate() {
                    s.push_str(&format!(
                        "{},{},{}\n",
                        sig(a.to_degrees(), 9),
                        sig(b.to_degrees(), 9),
                        sig(scan.values[i][j], 9)
                    ));
                }
            }
            write(dir, &scan_file(&cfg.label), s.as_bytes())?;
            let (a, b) = (scan.best.alpha.to_degrees(), scan.best.beta.to_degrees());
            let near = |x: f64| (x.abs() - 45.0).abs() <= cfg.scan_step_degrees + 1e-9;
            summary.best_alpha_degrees = Some(a);
            summary.best_beta_degrees = Some(b);
            summary.best_value = Some(scan.best_value);
            summary.near_optimum = Some(near(a) && near(b));
        }
    }
    Ok(summary)
}

/// `fisher-scan`: grid CSVs per experiment plus `fisher_scan.json`.
pub fn cmd_fisher_scan(configs: &[ExperimentConfig], out: &Path) -> Result<Vec<ScanSummary>, CliError> {
    ensure_dir(out)?;
    let scans = for_each(configs, |cfg| write_scan(out, cfg))?;
    write(out, SCAN_SUMMARY_FILE, &json(&scans))?;
    Ok(scans)
}

/// Information content of one configuration at its main setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcrbCheck {
    pub label: String,
    pub epsilon: f64,
    /// `(1 − ε²)⁻¹`.
    pub qfi_reference: f64,
    /// Nuisance-adjusted QFI from the SLD.
    pub qfi_numeric: Option<f64>,
    /// QFI at fixed `p`.
    pub qfi_fixed_p: Option<f64>,
    pub sld_residual: Option<f64>,
    /// Nuisance-adjusted classical Fisher information at the main setting.
    pub fisher_main: Option<f64>,
    pub fisher_main_fixed_p: Option<f64>,
    /// `fisher_main / qfi_reference`.
    pub efficiency: Option<f64>,
    pub error: Option<String>,
}

fn qcrb_check(cfg: &ExperimentConfig) -> QcrbCheck {
    let params = cfg.params();
    let eps = params.epsilon();
    let reference = 1.0 / (1.0 - eps * eps);
    let mut c = QcrbCheck {
        label: cfg.label.clone(),
        epsilon: eps,
        qfi_reference: reference,
        qfi_numeric: None,
        qfi_fixed_p: None,
        sld_residual: None,
        fisher_main: None,
        fisher_main_fixed_p: None,
        efficiency: None,
        error: None,
    };
    let mut errors = Vec::new();
    match qfi(&params) {
        Ok(q) => {
            c.qfi_numeric = Some(q.h_numeric);
            c.qfi_fixed_p = Some(q.h_fixed_p);
            c.sld_residual = Some(q.sld_residual);
        }
        Err(e) => errors.push(format!("qfi: {e}")),
    }
    let setting = cfg.main_setting();
    match effective_fisher_information(&params, &setting, D_EPS) {
        Ok(f) => {
            c.fisher_main = Some(f);
            c.efficiency = Some(f / reference);
        }
        Err(e) => errors.push(format!("fisher: {e}")),
    }
    c.fisher_main_fixed_p = fisher_information(&params, &setting, D_EPS).ok();
    if !errors.is_empty() {
        c.error = Some(errors.join("; "));
    }
    c
}

/// `qcrb-check`: writes `qcrb_check.json`.
pub fn cmd_qcrb_check(configs: &[ExperimentConfig], out: &Path) -> Result<Vec<QcrbCheck>, CliError> {
    ensure_dir(out)?;
    let checks: Vec<QcrbCheck> = configs.par_iter().map(qcrb_check).collect();
    write(out, QCRB_CHECK_FILE, &json(&checks))?;
    Ok(checks)
}

/// Reads a config file; unreadable files are I/O errors, bad content config errors.
pub fn load_config(path: &Path) -> Result<Vec<ExperimentConfig>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(PathBuf::from(path), e))?;
    crate::config::parse_config(&text)
}
