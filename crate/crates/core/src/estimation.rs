//! Negativity and mixing estimators, sample statistics, error propagation,
//! Fano factors and the 3σ model-consistency test.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::format::sig;
use crate::measurement::MeasurementSetting;
use crate::simulator::{CoincidenceVector, RunRecord};
use crate::states::{werner_negativity, Model};

/// Smallest `|sin 2α|`, `|sin 2β|` accepted by the estimators.
pub const MIN_SIN: f64 = 1e-6;
/// Width of the consistency band in standard errors of the mean.
pub const CONSISTENCY_SIGMAS: f64 = 3.0;

/// Sample mean and unbiased (divisor `M − 1`) variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    /// `None` for a single value.
    pub variance: Option<f64>,
    pub count: usize,
}

impl SampleStats {
    /// Standard error of the mean `sqrt(Var/M)`.
    pub fn standard_error(&self) -> Option<f64> {
        self.variance.map(|v| (v / self.count as f64).sqrt())
    }
}

pub fn sample_stats(values: &[f64]) -> Result<SampleStats> {
    if values.is_empty() {
        return Err(Error::EmptySample("no values"));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let variance = (values.len() >= 2).then(|| values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0));
    Ok(SampleStats {
        mean,
        variance,
        count: values.len(),
    })
}

/// `((k0 + k3) − (k1 + k2)) / K`, with the difference taken exactly in integers.
pub fn count_visibility(k: &CoincidenceVector) -> Result<f64> {
    let total = k.total();
    if total == 0 {
        return Err(Error::EmptySample("window with zero coincidences"));
    }
    let same = (k.k[0] + k.k[3]) as i128;
    let cross = (k.k[1] + k.k[2]) as i128;
    Ok((same - cross) as f64 / total as f64)
}

fn checked_sines(setting: &MeasurementSetting) -> Result<(f64, f64)> {
    let (sa, sb) = ((2.0 * setting.alpha).sin(), (2.0 * setting.beta).sin());
    if sa.abs() < MIN_SIN || sb.abs() < MIN_SIN {
        return Err(Error::DegenerateAngles {
            alpha: setting.alpha,
            beta: setting.beta,
        });
    }
    Ok((sa, sb))
}

/// `ε̂ = V̂ csc2α csc2β − cot2α cot2β`.
///
/// At `(−π/4, π/4)` this is `−V̂`; the general formula is used everywhere.
pub fn estimate_negativity(k: &CoincidenceVector, setting: &MeasurementSetting) -> Result<f64> {
    let (sa, sb) = checked_sines(setting)?;
    let v = count_visibility(k)?;
    let (ca, cb) = ((2.0 * setting.alpha).cos(), (2.0 * setting.beta).cos());
    Ok(v / (sa * sb) - (ca / sa) * (cb / sb))
}

/// `p̂ = ε̂ / (2 sqrt(q(1 − q)))` with `q = r3 / R` from the `(0, 0)` window.
pub fn estimate_mixing(r: &CoincidenceVector, eps_hat: f64) -> Result<f64> {
    let total = r.total();
    let r3 = r.k[3];
    if total == 0 || r3 == 0 || r3 == total {
        return Err(Error::DegenerateDiagonal { r3, total });
    }
    let q = r3 as f64 / total as f64;
    Ok(eps_hat / (2.0 * (q * (1.0 - q)).sqrt()))
}

/// `ε_t = ⟨p̂⟩ sin 2φ`.
pub fn true_negativity(phi: f64, p_hat_mean: f64) -> f64 {
    p_hat_mean * (2.0 * phi).sin()
}

/// `δε_t = sqrt(Var(p̂)) sin 2φ`.
pub fn true_negativity_error(phi: f64, p_hat_var: f64) -> f64 {
    p_hat_var.max(0.0).sqrt() * (2.0 * phi).sin()
}

/// First-order propagation of count fluctuations through `ε̂` at the
/// optimal setting:
/// `4[(k0+k3)²(δk1²+δk2²) + (k1+k2)²(δk0²+δk3²)] / K⁴` at the mean counts.
pub fn propagate_variance(mean_k: &[f64; 4], var_k: &[f64; 4]) -> Result<f64> {
    if mean_k.iter().any(|&m| m < 0.0) || var_k.iter().any(|&v| v < 0.0) {
        return Err(invalid("means and variances must be non-negative"));
    }
    let total: f64 = mean_k.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptySample("mean total count is zero"));
    }
    let same = mean_k[0] + mean_k[3];
    let cross = mean_k[1] + mean_k[2];
    Ok(4.0 * (same * same * (var_k[1] + var_k[2]) + cross * cross * (var_k[0] + var_k[3])) / total.powi(4))
}

/// `4(k0+k3)(k1+k2)/K³`: the propagated variance under Poisson statistics.
pub fn poisson_variance_closed_form(k: &CoincidenceVector) -> Result<f64> {
    let total = k.total();
    if total == 0 {
        return Err(Error::EmptySample("window with zero coincidences"));
    }
    let total = total as f64;
    let same = (k.k[0] + k.k[3]) as f64;
    let cross = (k.k[1] + k.k[2]) as f64;
    Ok(4.0 * same * cross / (total * total * total))
}

fn shared_setting(records: &[RunRecord]) -> Result<MeasurementSetting> {
    let first = records.first().ok_or(Error::EmptySample("no records"))?;
    if records.iter().any(|r| r.setting != first.setting) {
        return Err(Error::MixedSettings);
    }
    Ok(first.setting)
}

/// Per-outcome variance-to-mean ratio across windows; `None` where the mean is zero.
pub fn fano_factors(records: &[RunRecord]) -> Result<[Option<f64>; 4]> {
    if records.len() < 2 {
        return Err(Error::EmptySample("Fano factors need at least two records"));
    }
    shared_setting(records)?;
    let mut out = [None; 4];
    for (t, slot) in out.iter_mut().enumerate() {
        let xs: Vec<f64> = records.iter().map(|r| r.counts.k[t] as f64).collect();
        let stats = sample_stats(&xs)?;
        if stats.mean > 0.0 {
            *slot = stats.variance.map(|v| v / stats.mean);
        }
    }
    Ok(out)
}

/// Werner-model estimators `(p̂′, ε̂′)` from a `(0, 0)` window `r` and a
/// window `k` at `setting`:
/// `p̂′ = V̂(0,0)`, `x̂ = (V̂(S) − cos2α cos2β p̂′) csc2α csc2β`, `ε̂′ = −½ + ½p̂′ + x̂`.
pub fn estimate_werner(
    r: &CoincidenceVector,
    k: &CoincidenceVector,
    setting: &MeasurementSetting,
) -> Result<(f64, f64)> {
    let (sa, sb) = checked_sines(setting)?;
    let p_hat = count_visibility(r)?;
    let v = count_visibility(k)?;
    let (ca, cb) = ((2.0 * setting.alpha).cos(), (2.0 * setting.beta).cos());
    let coherence = (v - ca * cb * p_hat) / (sa * sb);
    Ok((p_hat, -0.5 + 0.5 * p_hat + coherence))
}

/// Per-configuration summary, serialized with fixed field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct EstimationReport {
    /// Analysis model.
    pub model: Model,
    pub runs: usize,
    pub eps_hat_mean: f64,
    pub eps_hat_var: Option<f64>,
    /// `Var(ε̂)·⟨K⟩`, to be compared with `qcrb_ref`.
    pub var_times_K: Option<f64>,
    /// `1 − ε_t² = 1/H(ε_t)`.
    pub qcrb_ref: Option<f64>,
    pub p_hat_mean: Option<f64>,
    pub p_hat_var: Option<f64>,
    pub eps_true: Option<f64>,
    pub eps_true_err: Option<f64>,
    pub mean_K: f64,
    pub fano: [Option<f64>; 4],
    pub consistent_3sigma: Option<bool>,
    /// Some individual `ε̂` fell outside `[0, 1]` (estimates are not clipped).
    pub eps_hat_out_of_range: bool,
}

impl EstimationReport {
    pub fn eps_hat(&self) -> SampleStats {
        SampleStats {
            mean: self.eps_hat_mean,
            variance: self.eps_hat_var,
            count: self.runs,
        }
    }
}

/// `|⟨ε̂⟩ − ε_t| ≤ 3 sqrt(Var(ε̂)/M)`.
pub fn is_consistent(eps_hat: &SampleStats, eps_true: f64) -> Option<bool> {
    let se = eps_hat.standard_error()?;
    Some((eps_hat.mean - eps_true).abs() <= CONSISTENCY_SIGMAS * se)
}

fn check_pairing(main: &[RunRecord], diagonal: &[RunRecord]) -> Result<MeasurementSetting> {
    let setting = shared_setting(main)?;
    shared_setting(diagonal)?;
    if main.len() != diagonal.len() {
        return Err(invalid(format!(
            "{} main windows but {} diagonal windows",
            main.len(),
            diagonal.len()
        )));
    }
    Ok(setting)
}

fn mean_total(records: &[RunRecord]) -> f64 {
    records.iter().map(|r| r.counts.total() as f64).sum::<f64>() / records.len() as f64
}

/// Builds the report for one configuration from paired main-setting and
/// `(0, 0)` windows, analysed under `model`. `phi` is the known preparation angle.
pub fn estimate_report(main: &[RunRecord], diagonal: &[RunRecord], phi: f64, model: Model) -> Result<EstimationReport> {
    let setting = check_pairing(main, diagonal)?;
    let (eps_values, p_values): (Vec<f64>, Option<Vec<f64>>) = match model {
        Model::CoherentMixture => {
            let eps = main
                .iter()
                .map(|r| estimate_negativity(&r.counts, &setting))
                .collect::<Result<Vec<_>>>()?;
            // a degenerate diagonal window leaves p̂ undefined for the whole configuration
            let p = diagonal
                .iter()
                .zip(&eps)
                .map(|(r, &e)| estimate_mixing(&r.counts, e))
                .collect::<Result<Vec<_>>>()
                .ok();
            (eps, p)
        }
        Model::Werner => {
            let pairs = diagonal
                .iter()
                .zip(main)
                .map(|(r, k)| estimate_werner(&r.counts, &k.counts, &setting))
                .collect::<Result<Vec<_>>>()?;
            let (p, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            (e, Some(p))
        }
    };

    let eps_hat = sample_stats(&eps_values)?;
    let p_hat = p_values.as_deref().map(sample_stats).transpose()?;
    let mean_k = mean_total(main);
    let sin2phi = (2.0 * phi).sin();

    let (eps_true, eps_true_err) = match (model, p_hat) {
        (_, None) => (None, None),
        (Model::CoherentMixture, Some(ps)) => (
            Some(true_negativity(phi, ps.mean)),
            ps.variance.map(|v| true_negativity_error(phi, v)),
        ),
        (Model::Werner, Some(ps)) => {
            let eps_t = werner_negativity(phi, ps.mean);
            let err = ps
                .variance
                .map(|v| if eps_t > 0.0 { v.sqrt() * (0.5 + sin2phi) } else { 0.0 });
            (Some(eps_t), err)
        }
    };

    Ok(EstimationReport {
        model,
        runs: eps_hat.count,
        eps_hat_mean: eps_hat.mean,
        eps_hat_var: eps_hat.variance,
        var_times_K: eps_hat.variance.map(|v| v * mean_k),
        qcrb_ref: eps_true.map(|e| 1.0 - e * e),
        p_hat_mean: p_hat.map(|s| s.mean),
        p_hat_var: p_hat.and_then(|s| s.variance),
        eps_true,
        eps_true_err,
        mean_K: mean_k,
        fano: if main.len() >= 2 {
            fano_factors(main)?
        } else {
            [None; 4]
        },
        consistent_3sigma: eps_true.and_then(|e| is_consistent(&eps_hat, e)),
        eps_hat_out_of_range: eps_values.iter().any(|e| !(0.0..=1.0).contains(e)),
    })
}

/// Per-model consistency of the same raw records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationVerdict {
    pub models: Vec<ModelVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVerdict {
    pub model: Model,
    pub eps_hat_mean: f64,
    pub eps_true: Option<f64>,
    pub halfwidth_3sigma: Option<f64>,
    pub consistent: Option<bool>,
}

impl DiscriminationVerdict {
    pub fn consistent(&self, model: Model) -> Option<bool> {
        self.models.iter().find(|m| m.model == model).and_then(|m| m.consistent)
    }
}

/// Applies the 3σ test to each report against its own model's `ε_t`.
pub fn model_discrimination(report_a: &EstimationReport, report_b: &EstimationReport) -> DiscriminationVerdict {
    let verdict = |r: &EstimationReport| {
        let stats = r.eps_hat();
        ModelVerdict {
            model: r.model,
            eps_hat_mean: r.eps_hat_mean,
            eps_true: r.eps_true,
            halfwidth_3sigma: stats.standard_error().map(|se| CONSISTENCY_SIGMAS * se),
            consistent: r.eps_true.and_then(|e| is_consistent(&stats, e)),
        }
    };
    DiscriminationVerdict {
        models: vec![verdict(report_a), verdict(report_b)],
    }
}

/// One point of the estimated-vs-actual negativity plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig2Row {
    pub eps_true: f64,
    pub eps_true_err: f64,
    pub eps_hat_mean: f64,
    /// `sqrt(Var(ε̂)·⟨K⟩)`.
    pub errbar: f64,
    /// `H(ε_t)^{-1/2} = sqrt(1 − ε_t²)`.
    pub qcrb_halfwidth: f64,
}

pub const FIG2_CSV_HEADER: [&str; 5] = ["eps_true", "eps_true_err", "eps_hat_mean", "errbar", "qcrb_halfwidth"];

impl Fig2Row {
    pub fn from_report(r: &EstimationReport) -> Option<Self> {
        let eps_true = r.eps_true?;
        Some(Fig2Row {
            eps_true,
            eps_true_err: r.eps_true_err.unwrap_or(0.0),
            eps_hat_mean: r.eps_hat_mean,
            errbar: r.var_times_K?.sqrt(),
            qcrb_halfwidth: (1.0 - eps_true * eps_true).max(0.0).sqrt(),
        })
    }
}

pub fn write_fig2_csv<W: Write>(rows: &[Fig2Row], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", FIG2_CSV_HEADER.join(","))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            sig(r.eps_true, 9),
            sig(r.eps_true_err, 9),
            sig(r.eps_hat_mean, 9),
            sig(r.errbar, 9),
            sig(r.qcrb_halfwidth, 9)
        )?;
    }
    Ok(())
}
