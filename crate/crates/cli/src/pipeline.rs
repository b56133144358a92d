//! Simulate → estimate → discriminate → tomography for one experiment.
//!
//! Every random draw comes from `Stream::new(config.seed)` forked by purpose,
//! so the outputs depend only on the config.

use qcrb_core::estimation::{
    estimate_report, fano_factors, model_discrimination, sample_stats, DiscriminationVerdict, EstimationReport,
};
use qcrb_core::measurement::{optimal_setting_scan, FisherScan, MeasurementSetting};
use qcrb_core::rng::Stream;
use qcrb_core::simulator::{run_experiment, shuffle_composition, RunConfig, RunRecord};
use qcrb_core::states::{make_state, Model};
use qcrb_core::tomography::{
    canonical_settings, compare_to_model, linear_inversion, project_to_physical, sample_dataset, ModelComparison,
    Reconstruction, TomoDataset,
};
use qcrb_core::{linalg, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

const MAIN_STREAM: u64 = 0;
const DIAGONAL_STREAM: u64 = 1;
const SHUFFLE_MAIN_STREAM: u64 = 2;
const SHUFFLE_DIAGONAL_STREAM: u64 = 3;
const TOMOGRAPHY_STREAM: u64 = 4;

/// Windows at the main and the `(0, 0)` setting, after optional shuffling.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub main: Vec<RunRecord>,
    pub diagonal: Vec<RunRecord>,
}

fn run_config(cfg: &ExperimentConfig, setting: MeasurementSetting, seed: u64) -> RunConfig {
    RunConfig {
        params: cfg.params(),
        setting,
        mean_total: cfg.mean_total,
        window_seconds: cfg.window_seconds,
        runs: cfg.runs,
        seed,
        counting: cfg.counting,
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Acquisition> {
    let root = Stream::new(cfg.seed);
    let seed_of = |purpose: u64| root.fork(purpose).next_u64();
    let main = run_experiment(&run_config(cfg, cfg.main_setting(), seed_of(MAIN_STREAM)))?;
    let diagonal = run_experiment(&run_config(cfg, cfg.diagonal_setting(), seed_of(DIAGONAL_STREAM)))?;
    if !cfg.shuffle {
        return Ok(Acquisition { main, diagonal });
    }
    Ok(Acquisition {
        main: shuffle_composition(&main, &root.fork(SHUFFLE_MAIN_STREAM), cfg.shuffle_mode)?,
        diagonal: shuffle_composition(&diagonal, &root.fork(SHUFFLE_DIAGONAL_STREAM), cfg.shuffle_mode)?,
    })
}

/// Splits records read back from a runs file by the config's settings and
/// restores the exact angles (the file stores 9 significant digits).
pub fn split_records(cfg: &ExperimentConfig, records: &[RunRecord]) -> std::result::Result<Acquisition, String> {
    const ANGLE_TOL: f64 = 1e-7;
    let close = |a: &MeasurementSetting, b: &MeasurementSetting| {
        (a.alpha - b.alpha).abs() <= ANGLE_TOL && (a.beta - b.beta).abs() <= ANGLE_TOL
    };
    let (main_s, diag_s) = (cfg.main_setting(), cfg.diagonal_setting());
    let mut acq = Acquisition {
        main: Vec::new(),
        diagonal: Vec::new(),
    };
    for r in records {
        if close(&r.setting, &main_s) {
            acq.main.push(RunRecord { setting: main_s, ..*r });
        } else if close(&r.setting, &diag_s) {
            acq.diagonal.push(RunRecord { setting: diag_s, ..*r });
        } else {
            return Err(format!(
                "run {} has angles ({}, {}) matching neither configured setting",
                r.run_index, r.setting.alpha, r.setting.beta
            ));
        }
    }
    Ok(acq)
}

fn other(model: Model) -> Model {
    match model {
        Model::CoherentMixture => Model::Werner,
        Model::Werner => Model::CoherentMixture,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// Report under the requested analysis model.
    pub report: EstimationReport,
    /// Both models and the verdict, when comparison is enabled.
    pub comparison: Option<(EstimationReport, DiscriminationVerdict)>,
    pub fano: FanoTable,
}

pub fn analyse(cfg: &ExperimentConfig, acq: &Acquisition, model: Model) -> Result<Analysis> {
    let report = estimate_report(&acq.main, &acq.diagonal, cfg.phi(), model)?;
    let comparison = if cfg.compare_models {
        let alt = estimate_report(&acq.main, &acq.diagonal, cfg.phi(), other(model))?;
        let (coherent, werner) = match model {
            Model::CoherentMixture => (&report, &alt),
            Model::Werner => (&alt, &report),
        };
        let verdict = model_discrimination(coherent, werner);
        Some((alt, verdict))
    } else {
        None
    };
    Ok(Analysis {
        report,
        comparison,
        fano: FanoTable::from_records(&acq.main)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FanoRow {
    pub outcome: usize,
    pub mean: f64,
    pub variance: f64,
    pub fano: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FanoTable {
    pub rows: Vec<FanoRow>,
}

impl FanoTable {
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        let fano = fano_factors(records)?;
        let rows = (0..4)
            .map(|t| {
                let xs: Vec<f64> = records.iter().map(|r| r.counts.k[t] as f64).collect();
                let s = sample_stats(&xs)?;
                Ok(FanoRow {
                    outcome: t,
                    mean: s.mean,
                    variance: s.variance.unwrap_or(0.0),
                    fano: fano[t],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FanoTable { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TomographySummary {
    /// Setting set used; a stand-in, as the hardware set is not known.
    pub settings: &'static str,
    pub counts_per_setting: f64,
    pub fidelity: f64,
    pub trace_distance: f64,
    pub negativity_gap: f64,
    pub negativity_reconstructed: f64,
    pub negativity_model: f64,
    pub min_eigenvalue_raw: f64,
    pub non_physical_raw: bool,
    pub raw_trace: f64,
}

pub struct TomographyOutcome {
    pub dataset: TomoDataset,
    pub reconstruction: Reconstruction,
    pub summary: TomographySummary,
}

pub fn tomography(cfg: &ExperimentConfig) -> Result<TomographyOutcome> {
    let params = cfg.params();
    let rho = make_state(&params);
    let stream = Stream::new(cfg.seed).fork(TOMOGRAPHY_STREAM);
    let dataset = sample_dataset(&rho, &canonical_settings(), cfg.tomo_counts_per_setting, &stream)?;
    let reconstruction = linear_inversion(&dataset)?;
    let physical = project_to_physical(&reconstruction.matrix)?;
    let ModelComparison {
        fidelity,
        trace_distance,
        negativity_gap,
    } = compare_to_model(&physical, &params)?;
    let summary = TomographySummary {
        settings: "canonical-16 {H,V,D,L}x{H,V,D,L} (stand-in set)",
        counts_per_setting: cfg.tomo_counts_per_setting,
        fidelity,
        trace_distance,
        negativity_gap,
        negativity_reconstructed: linalg::negativity(&physical),
        negativity_model: params.epsilon(),
        min_eigenvalue_raw: reconstruction.min_eigenvalue,
        non_physical_raw: reconstruction.non_physical,
        raw_trace: reconstruction.raw_trace,
    };
    Ok(TomographyOutcome {
        dataset,
        reconstruction,
        summary,
    })
}

/// Scan result, or the reason the scan was skipped.
pub fn fisher_scan(cfg: &ExperimentConfig) -> std::result::Result<FisherScan, String> {
    optimal_setting_scan(&cfg.params(), cfg.scan_step_degrees.to_radians()).map_err(|e| e.to_string())
}
