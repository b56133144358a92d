//! Seeded coincidence-count generator standing in for the photon source and
//! the coincidence electronics.
//!
//! Each window draws four independent Poisson counts with means
//! `mean_total · p_t`. Window `j`, outcome `t` always uses the stream
//! `Stream::new(seed).fork(j).fork(t)`, so output is bit-identical however
//! the windows are scheduled.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::format::sig;
use crate::measurement::{outcome_probabilities, MeasurementSetting, OutcomeDistribution};
use crate::rng::Stream;
use crate::states::{make_state, StateParams};

/// Means below this use sequential-search inversion, above it PTRS.
const INVERSION_LIMIT: f64 = 30.0;

/// Header of the runs CSV.
pub const RUNS_CSV_HEADER: [&str; 8] = ["run", "alpha_rad", "beta_rad", "k0", "k1", "k2", "k3", "window_s"];

/// Counts `(k0, k1, k2, k3)` from one acquisition window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CoincidenceVector {
    pub k: [u64; 4],
}

impl CoincidenceVector {
    pub fn new(k: [u64; 4]) -> Self {
        CoincidenceVector { k }
    }

    /// `K = Σ_t k_t`.
    pub fn total(&self) -> u64 {
        self.k.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountingModel {
    /// Independent Poisson counts per outcome; the total varies.
    #[default]
    Poisson,
    /// Fixed total `round(mean_total)` split multinomially.
    Multinomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: StateParams,
    pub setting: MeasurementSetting,
    /// Expected coincidences per window.
    pub mean_total: f64,
    /// Metadata only.
    pub window_seconds: f64,
    pub runs: usize,
    pub seed: u64,
    pub counting: CountingModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub run_index: usize,
    pub setting: MeasurementSetting,
    pub counts: CoincidenceVector,
    pub window_seconds: f64,
}

/// Poisson variate: inversion by sequential search below a mean of 30,
/// Hörmann's transformed rejection with squeeze (PTRS) above.
pub fn sample_poisson(mean: f64, rng: &mut Stream) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        let u = rng.next_f64();
        let mut k = 0u64;
        let mut term = libm::exp(-mean);
        let mut cdf = term;
        while u > cdf && k < 1000 {
            k += 1;
            term *= mean / k as f64;
            cdf += term;
        }
        return k;
    }
    let slam = libm::sqrt(mean);
    let loglam = libm::log(mean);
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.next_f64() - 0.5;
        let v = rng.next_f64();
        let us = 0.5 - u.abs();
        let k = libm::floor((2.0 * a / us + b) * u + mean + 0.43);
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = libm::log(v) + libm::log(inv_alpha) - libm::log(a / (us * us) + b);
        let rhs = -mean + k * loglam - libm::lgamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Independent Poisson counts with means `mean_total · p_t`; outcome `t`
/// draws from `rng.fork(t)`.
pub fn sample_counts(d: &OutcomeDistribution, mean_total: f64, rng: &Stream) -> Result<CoincidenceVector> {
    if !(mean_total > 0.0) || !mean_total.is_finite() {
        return Err(invalid(format!("mean_total = {mean_total} must be positive")));
    }
    let k = std::array::from_fn(|t| sample_poisson(mean_total * d.probs[t], &mut rng.fork(t as u64)));
    Ok(CoincidenceVector { k })
}

/// Fixed total `total` split by categorical draws from `rng`.
pub fn sample_counts_multinomial(d: &OutcomeDistribution, total: u64, rng: &Stream) -> CoincidenceVector {
    let mut stream = rng.fork(4);
    let cdf = [
        d.probs[0],
        d.probs[0] + d.probs[1],
        d.probs[0] + d.probs[1] + d.probs[2],
    ];
    let mut k = [0u64; 4];
    for _ in 0..total {
        let u = stream.next_f64();
        let t = cdf.iter().position(|&c| u < c).unwrap_or(3);
        k[t] += 1;
    }
    CoincidenceVector { k }
}

/// Simulates `config.runs` windows at one setting.
pub fn run_experiment(config: &RunConfig) -> Result<Vec<RunRecord>> {
    if config.runs == 0 {
        return Err(invalid("runs must be at least 1"));
    }
    if !(config.mean_total > 0.0) || !config.mean_total.is_finite() {
        return Err(invalid(format!("mean_total = {} must be positive", config.mean_total)));
    }
    let dist = outcome_probabilities(&make_state(&config.params), &config.setting);
    let root = Stream::new(config.seed);
    (0..config.runs)
        .into_par_iter()
        .map(|j| {
            let stream = root.fork(j as u64);
            let counts = match config.counting {
                CountingModel::Poisson => sample_counts(&dist, config.mean_total, &stream)?,
                CountingModel::Multinomial => {
                    sample_counts_multinomial(&dist, config.mean_total.round() as u64, &stream)
                }
            };
            Ok(RunRecord {
                run_index: j,
                setting: config.setting,
                counts,
                window_seconds: config.window_seconds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleMode {
    /// Each outcome column is permuted independently across windows.
    #[default]
    PerOutcome,
    /// Whole count vectors are permuted across windows.
    WholeVector,
}

fn fisher_yates<T>(items: &mut [T], rng: &mut Stream) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Randomizes the composition of the count vectors across windows.
///
/// Per-outcome multisets and grand totals are preserved exactly; record
/// positions and run indices stay in place.
pub fn shuffle_composition(records: &[RunRecord], rng: &Stream, mode: ShuffleMode) -> Result<Vec<RunRecord>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    if records.iter().any(|r| r.setting != first.setting) {
        return Err(Error::MixedSettings);
    }
    let mut out = records.to_vec();
    match mode {
        ShuffleMode::PerOutcome => {
            for t in 0..4 {
                let mut column: Vec<u64> = records.iter().map(|r| r.counts.k[t]).collect();
                fisher_yates(&mut column, &mut rng.fork(t as u64));
                for (rec, k) in out.iter_mut().zip(column) {
                    rec.counts.k[t] = k;
                }
            }
        }
        ShuffleMode::WholeVector => {
            let mut vectors: Vec<CoincidenceVector> = records.iter().map(|r| r.counts).collect();
            fisher_yates(&mut vectors, &mut rng.fork(4));
            for (rec, v) in out.iter_mut().zip(vectors) {
                rec.counts = v;
            }
        }
    }
    Ok(out)
}

/// Writes records as `run,alpha_rad,beta_rad,k0,k1,k2,k3,window_s`.
pub fn write_runs_csv<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(RUNS_CSV_HEADER).map_err(io)?;
    for r in records {
        let k = r.counts.k;
        w.write_record([
            r.run_index.to_string(),
            sig(r.setting.alpha, 9),
            sig(r.setting.beta, 9),
            k[0].to_string(),
            k[1].to_string(),
            k[2].to_string(),
            k[3].to_string(),
            sig(r.window_seconds, 9),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Reads the runs CSV written by [`write_runs_csv`].
pub fn read_runs_csv<R: Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(RUNS_CSV_HEADER.iter().copied()) {
        return Err(Error::Parse(format!("unexpected runs header: {header:?}")));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| -> Result<&str> {
            row.get(i)
                .ok_or_else(|| Error::Parse(format!("row {}: missing column {i}", line + 2)))
        };
        let float = |i: usize| -> Result<f64> {
            field(i)?
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))
        };
        let int = |i: usize| -> Result<u64> {
            field(i)?
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))
        };
        out.push(RunRecord {
            run_index: int(0)? as usize,
            setting: MeasurementSetting::new(float(1)?, float(2)?),
            counts: CoincidenceVector::new([int(3)?, int(4)?, int(5)?, int(6)?]),
            window_seconds: float(7)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::Model;
    use std::f64::consts::FRAC_PI_4;

    fn config(params: StateParams, setting: MeasurementSetting, mean_total: f64, runs: usize) -> RunConfig {
        RunConfig {
            params,
            setting,
            mean_total,
            window_seconds: 10.0,
            runs,
            seed: 2024,
            counting: CountingModel::Poisson,
        }
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn sample_counts_deterministic() {
        let d = OutcomeDistribution::new([0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = Stream::new(5).fork(3);
        assert_eq!(
            sample_counts(&d, 1000.0, &s).unwrap(),
            sample_counts(&d, 1000.0, &s).unwrap()
        );
        assert!(sample_counts(&d, 0.0, &s).is_err());
        assert!(sample_counts(&d, -1.0, &s).is_err());
    }

    #[test]
    fn zero_rate_outcomes_stay_zero() {
        let d = OutcomeDistribution::new([1.0, 0.0, 0.0, 0.0]).unwrap();
        let root = Stream::new(8);
        for j in 0..200 {
            let k = sample_counts(&d, 50.0, &root.fork(j)).unwrap().k;
            assert_eq!(&k[1..], &[0, 0, 0]);
        }
    }

    #[test]
    fn poisson_moments_both_branches() {
        // Poisson(λ): mean λ, variance λ; tolerance three standard errors.
        for &lambda in &[0.7f64, 4.0, 25.0, 29.9, 30.0, 75.0, 2500.0] {
            let n = 100_000;
            let root = Stream::new(lambda.to_bits());
            let xs: Vec<f64> = (0..n)
                .map(|i| sample_poisson(lambda, &mut root.fork(i)) as f64)
                .collect();
            let (mean, var) = moments(&xs);
            let se_mean = (lambda / n as f64).sqrt();
            let se_var = ((2.0 * lambda * lambda + lambda) / n as f64).sqrt();
            assert!((mean - lambda).abs() < 3.0 * se_mean, "λ={lambda} mean {mean}");
            assert!((var - lambda).abs() < 3.0 * se_var, "λ={lambda} var {var}");
        }
    }

    #[test]
    fn poisson_small_mean_pmf() {
        // P(0) = e^{-λ} for the inversion branch
        let lambda = 2.0;
        let n = 200_000u64;
        let root = Stream::new(99);
        let zeros = (0..n)
            .filter(|&i| sample_poisson(lambda, &mut root.fork(i)) == 0)
            .count() as f64;
        let p0 = (-lambda).exp();
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((zeros / n as f64 - p0).abs() < 4.0 * se);
    }

    #[test]
    fn uniform_distribution_law_of_large_numbers() {
        let d = OutcomeDistribution::uniform();
        let root = Stream::new(1);
        let n = 100_000;
        let draws: Vec<CoincidenceVector> = (0..n)
            .map(|j| sample_counts(&d, 100.0, &root.fork(j)).unwrap())
            .collect();
        for t in 0..4 {
            let xs: Vec<f64> = draws.iter().map(|c| c.k[t] as f64).collect();
            let (mean, var) = moments(&xs);
            assert!((mean - 25.0).abs() < 0.5, "{mean}");
            let fano = var / mean;
            assert!((0.97..=1.03).contains(&fano), "{fano}");
        }
    }

    #[test]
    fn run_experiment_replays() {
        let params = StateParams::coherent(FRAC_PI_4, 0.97).unwrap();
        let cfg = config(params, MeasurementSetting::optimal(), 1e4, 30);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(a, b);
        let idx: Vec<usize> = a.iter().map(|r| r.run_index).collect();
        assert_eq!(idx, (0..30).collect::<Vec<_>>());
        let other = run_experiment(&RunConfig {
            seed: 2025,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn pooled_anticorrelation_rate() {
        let params = StateParams::coherent(FRAC_PI_4, 0.97).unwrap();
        let recs = run_experiment(&config(params, MeasurementSetting::optimal(), 1e4, 30)).unwrap();
        let (mut anti, mut total) = (0u64, 0u64);
        for r in &recs {
            anti += r.counts.k[1] + r.counts.k[2];
            total += r.counts.total();
        }
        let rate = anti as f64 / total as f64;
        assert!((rate - 0.985).abs() <= 0.01, "{rate}");
    }

    #[test]
    fn diagonal_setting_has_no_cross_counts() {
        let params = StateParams::coherent(15f64.to_radians(), 0.88).unwrap();
        let recs = run_experiment(&config(params, MeasurementSetting::diagonal(), 1e4, 30)).unwrap();
        assert!(recs.iter().all(|r| r.counts.k[1] == 0 && r.counts.k[2] == 0));
    }

    #[test]
    fn multinomial_total_is_fixed() {
        let params = StateParams::new(Model::Werner, 0.3, 0.7).unwrap();
        let mut cfg = config(params, MeasurementSetting::optimal(), 2000.0, 10);
        cfg.counting = CountingModel::Multinomial;
        let recs = run_experiment(&cfg).unwrap();
        assert!(recs.iter().all(|r| r.counts.total() == 2000));
    }

    #[test]
    fn invalid_run_configs() {
        let params = StateParams::coherent(0.3, 0.9).unwrap();
        assert!(run_experiment(&config(params, MeasurementSetting::optimal(), 0.0, 3)).is_err());
        assert!(run_experiment(&config(params, MeasurementSetting::optimal(), 10.0, 0)).is_err());
    }

    fn sorted_columns(records: &[RunRecord]) -> Vec<Vec<u64>> {
        (0..4)
            .map(|t| {
                let mut c: Vec<u64> = records.iter().map(|r| r.counts.k[t]).collect();
                c.sort_unstable();
                c
            })
            .collect()
    }

    #[test]
    fn shuffle_preserves_multisets() {
        let params = StateParams::coherent(0.5, 0.9).unwrap();
        let recs = run_experiment(&config(params, MeasurementSetting::optimal(), 500.0, 30)).unwrap();
        let rng = Stream::new(4);
        for mode in [ShuffleMode::PerOutcome, ShuffleMode::WholeVector] {
            let shuffled = shuffle_composition(&recs, &rng, mode).unwrap();
            assert_eq!(sorted_columns(&recs), sorted_columns(&shuffled));
            assert_ne!(recs, shuffled);
            assert_eq!(shuffled, shuffle_composition(&recs, &rng, mode).unwrap());
            for t in 0..4 {
                let before: u64 = recs.iter().map(|r| r.counts.k[t]).sum();
                let after: u64 = shuffled.iter().map(|r| r.counts.k[t]).sum();
                assert_eq!(before, after);
            }
        }
        let single = &recs[..1];
        assert_eq!(
            shuffle_composition(single, &rng, ShuffleMode::PerOutcome).unwrap(),
            single
        );
    }

    #[test]
    fn shuffle_rejects_mixed_settings() {
        let params = StateParams::coherent(0.5, 0.9).unwrap();
        let mut recs = run_experiment(&config(params, MeasurementSetting::optimal(), 500.0, 3)).unwrap();
        recs[1].setting = MeasurementSetting::diagonal();
        assert_eq!(
            shuffle_composition(&recs, &Stream::new(1), ShuffleMode::PerOutcome),
            Err(Error::MixedSettings)
        );
    }

    #[test]
    fn runs_csv_layout_and_readback() {
        let params = StateParams::coherent(0.5, 0.9).unwrap();
        let recs = run_experiment(&config(params, MeasurementSetting::optimal(), 500.0, 2)).unwrap();
        let mut buf = Vec::new();
        write_runs_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("run,alpha_rad,beta_rad,k0,k1,k2,k3,window_s"));
        assert!(lines.next().unwrap().starts_with("0,-0.785398163,0.785398163,"));
        assert!(!text.contains('\r'));
        let back = read_runs_csv(buf.as_slice()).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.counts, b.counts);
            assert_eq!(a.run_index, b.run_index);
            assert!((a.setting.alpha - b.setting.alpha).abs() < 1e-8);
        }
        assert!(read_runs_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
