//! Experiment configuration: JSON documents with `schema_version: 1`, either
//! one experiment object or `{"schema_version": 1, "experiments": [...]}`.
//!
//! Angles are given in degrees here and converted to radians once.

use qcrb_core::measurement::MeasurementSetting;
use qcrb_core::simulator::{CountingModel, ShuffleMode};
use qcrb_core::states::{Model, StateParams};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const SCHEMA_VERSION: u64 = 1;

pub const DEFAULT_RUNS: usize = 30;
pub const DEFAULT_MEAN_TOTAL: f64 = 1e4;
pub const DEFAULT_WINDOW_SECONDS: f64 = 10.0;
pub const DEFAULT_TOMO_COUNTS: f64 = 1e5;
pub const DEFAULT_SCAN_STEP_DEGREES: f64 = 2.5;

const EXPERIMENT_KEYS: &[&str] = &[
    "schema_version",
    "label",
    "model",
    "phi_degrees",
    "p",
    "seed",
    "runs",
    "mean_total",
    "window_seconds",
    "main_setting_degrees",
    "diagonal_setting_degrees",
    "shuffle",
    "shuffle_mode",
    "counting",
    "compare_models",
    "tomography",
    "tomo_counts_per_setting",
    "fisher_scan",
    "scan_step_degrees",
];

/// One validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub label: String,
    /// Family the data are drawn from.
    pub model: Model,
    pub phi_degrees: f64,
    pub p: f64,
    pub seed: u64,
    pub runs: usize,
    pub mean_total: f64,
    pub window_seconds: f64,
    pub main_setting_degrees: [f64; 2],
    pub diagonal_setting_degrees: [f64; 2],
    pub shuffle: bool,
    pub shuffle_mode: ShuffleMode,
    pub counting: CountingModel,
    /// Also analyse under the other model and write the discrimination verdict.
    pub compare_models: bool,
    pub tomography: bool,
    pub tomo_counts_per_setting: f64,
    pub fisher_scan: bool,
    pub scan_step_degrees: f64,
}

impl ExperimentConfig {
    pub fn params(&self) -> StateParams {
        // validated at parse time
        StateParams::new(self.model, self.phi_degrees.to_radians(), self.p).expect("validated parameters")
    }

    pub fn phi(&self) -> f64 {
        self.phi_degrees.to_radians()
    }

    pub fn main_setting(&self) -> MeasurementSetting {
        let [a, b] = self.main_setting_degrees;
        MeasurementSetting::from_degrees(a, b)
    }

    pub fn diagonal_setting(&self) -> MeasurementSetting {
        let [a, b] = self.diagonal_setting_degrees;
        MeasurementSetting::from_degrees(a, b)
    }
}

#[derive(Deserialize)]
struct RawExperiment {
    label: Option<String>,
    model: Option<Model>,
    phi_degrees: Option<f64>,
    p: Option<f64>,
    seed: Option<u64>,
    runs: Option<usize>,
    mean_total: Option<f64>,
    window_seconds: Option<f64>,
    main_setting_degrees: Option<[f64; 2]>,
    diagonal_setting_degrees: Option<[f64; 2]>,
    shuffle: Option<bool>,
    shuffle_mode: Option<ShuffleMode>,
    counting: Option<CountingModel>,
    compare_models: Option<bool>,
    tomography: Option<bool>,
    tomo_counts_per_setting: Option<f64>,
    fisher_scan: Option<bool>,
    scan_step_degrees: Option<f64>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_unknown(obj: &Map<String, Value>, allowed: &[&str], context: &str) -> Result<(), CliError> {
    let unknown: Vec<&str> = obj
        .keys()
        .map(String::as_str)
        .filter(|k| !allowed.contains(k))
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(config_err(format!("{context}: unknown keys: {}", unknown.join(", "))))
    }
}

fn check_version(obj: &Map<String, Value>, required: bool) -> Result<(), CliError> {
    match obj.get("schema_version") {
        None if required => Err(config_err("missing schema_version")),
        None => Ok(()),
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION) => Ok(()),
        Some(v) => Err(config_err(format!(
            "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
        ))),
    }
}

fn in_range(field: &str, x: f64, lo: f64, hi: f64) -> Result<(), CliError> {
    if x.is_finite() && (lo..=hi).contains(&x) {
        Ok(())
    } else {
        Err(config_err(format!("{field} = {x} outside [{lo}, {hi}]")))
    }
}

fn positive(field: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(config_err(format!("{field} = {x} must be positive and finite")))
    }
}

fn default_label(index: usize, model: Model, phi: f64, p: f64) -> String {
    format!("{:02}_{}_phi{}_p{}", index + 1, model.name(), phi, p)
}

fn parse_experiment(obj: &Map<String, Value>, index: usize, context: &str) -> Result<ExperimentConfig, CliError> {
    check_unknown(obj, EXPERIMENT_KEYS, context)?;
    let raw: RawExperiment =
        serde_json::from_value(Value::Object(obj.clone())).map_err(|e| config_err(format!("{context}: {e}")))?;
    let field = |name: &str| format!("{context}: {name}");
    let missing = |name: &str| config_err(format!("{context}: missing required key {name}"));

    let model = raw.model.ok_or_else(|| missing("model"))?;
    let phi_degrees = raw.phi_degrees.ok_or_else(|| missing("phi_degrees"))?;
    in_range(&field("phi_degrees"), phi_degrees, 0.0, 45.0)?;
    let p = raw.p.ok_or_else(|| missing("p"))?;
    in_range(&field("p"), p, 0.0, 1.0)?;
    let seed = raw.seed.ok_or_else(|| missing("seed"))?;

    let runs = raw.runs.unwrap_or(DEFAULT_RUNS);
    if runs < 2 {
        return Err(config_err(format!("{}: runs = {runs} must be at least 2", context)));
    }
    let mean_total = raw.mean_total.unwrap_or(DEFAULT_MEAN_TOTAL);
    positive(&field("mean_total"), mean_total)?;
    let window_seconds = raw.window_seconds.unwrap_or(DEFAULT_WINDOW_SECONDS);
    positive(&field("window_seconds"), window_seconds)?;
    let main_setting_degrees = raw.main_setting_degrees.unwrap_or([-45.0, 45.0]);
    let diagonal_setting_degrees = raw.diagonal_setting_degrees.unwrap_or([0.0, 0.0]);
    for (name, [a, b]) in [
        ("main_setting_degrees", main_setting_degrees),
        ("diagonal_setting_degrees", diagonal_setting_degrees),
    ] {
        in_range(&field(name), a, -180.0, 180.0)?;
        in_range(&field(name), b, -180.0, 180.0)?;
    }
    let [a, b] = main_setting_degrees;
    let min_sin = (2.0 * a.to_radians())
        .sin()
        .abs()
        .min((2.0 * b.to_radians()).sin().abs());
    if min_sin < qcrb_core::estimation::MIN_SIN {
        return Err(config_err(format!(
            "{}: main_setting_degrees = [{a}, {b}] has sin 2α or sin 2β = 0; negativity is not identifiable",
            context
        )));
    }
    let tomo_counts_per_setting = raw.tomo_counts_per_setting.unwrap_or(DEFAULT_TOMO_COUNTS);
    positive(&field("tomo_counts_per_setting"), tomo_counts_per_setting)?;
    let scan_step_degrees = raw.scan_step_degrees.unwrap_or(DEFAULT_SCAN_STEP_DEGREES);
    in_range(&field("scan_step_degrees"), scan_step_degrees, 1e-3, 22.5)?;

    Ok(ExperimentConfig {
        label: raw.label.unwrap_or_else(|| default_label(index, model, phi_degrees, p)),
        model,
        phi_degrees,
        p,
        seed,
        runs,
        mean_total,
        window_seconds,
        main_setting_degrees,
        diagonal_setting_degrees,
        shuffle: raw.shuffle.unwrap_or(true),
        shuffle_mode: raw.shuffle_mode.unwrap_or_default(),
        counting: raw.counting.unwrap_or_default(),
        compare_models: raw.compare_models.unwrap_or(true),
        tomography: raw.tomography.unwrap_or(false),
        tomo_counts_per_setting,
        fisher_scan: raw.fisher_scan.unwrap_or(false),
        scan_step_degrees,
    })
}

fn valid_label(label: &str) -> bool {
    !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

/// Parses a config document into its experiments, defaults applied.
pub fn parse_config(text: &str) -> Result<Vec<ExperimentConfig>, CliError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| config_err(format!("invalid JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| config_err("config must be a JSON object"))?;
    check_version(obj, true)?;

    let experiments = if let Some(list) = obj.get("experiments") {
        check_unknown(obj, &["schema_version", "experiments"], "config")?;
        let list = list
            .as_array()
            .ok_or_else(|| config_err("experiments must be an array"))?;
        if list.is_empty() {
            return Err(config_err("experiments is empty"));
        }
        list.iter()
            .enumerate()
            .map(|(i, e)| {
                let context = format!("experiments[{i}]");
                let e = e
                    .as_object()
                    .ok_or_else(|| config_err(format!("{context} must be an object")))?;
                check_version(e, false)?;
                parse_experiment(e, i, &context)
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        vec![parse_experiment(obj, 0, "config")?]
    };

    let mut labels: Vec<&str> = Vec::new();
    for e in &experiments {
        if !valid_label(&e.label) {
            return Err(config_err(format!(
                "label {:?} may only contain ASCII letters, digits, '.', '_' and '-'",
                e.label
            )));
        }
        if labels.contains(&e.label.as_str()) {
            return Err(config_err(format!("duplicate label {:?}", e.label)));
        }
        labels.push(&e.label);
    }
    Ok(experiments)
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Experiment `i` gets seed `seed + i`.
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub mean_total: Option<f64>,
    pub no_shuffle: bool,
    pub multinomial: bool,
}

impl Overrides {
    pub fn apply(&self, experiments: &mut [ExperimentConfig]) -> Result<(), CliError> {
        if let Some(runs) = self.runs {
            if runs < 2 {
                return Err(config_err(format!("--runs = {runs} must be at least 2")));
            }
        }
        if let Some(m) = self.mean_total {
            positive("--mean-total", m)?;
        }
        for (i, e) in experiments.iter_mut().enumerate() {
            if let Some(seed) = self.seed {
                e.seed = seed.wrapping_add(i as u64);
            }
            if let Some(runs) = self.runs {
                e.runs = runs;
            }
            if let Some(m) = self.mean_total {
                e.mean_total = m;
            }
            if self.no_shuffle {
                e.shuffle = false;
            }
            if self.multinomial {
                e.counting = CountingModel::Multinomial;
            }
        }
        Ok(())
    }
}
