//! Four-outcome product POVM, outcome probabilities, correlation visibility
//! and classical Fisher information.
//!
//! Outcome `t = s + 2 s'` projects the first photon on `|α + sπ/2>` and the
//! second on `|β + s'π/2>`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{DensityMatrix, Ket2, Ket4, Mat4};
use crate::states::{phi_for_negativity, Model, StateParams};

/// Default grid step for [`optimal_setting_scan`].
pub const DEFAULT_SCAN_STEP: f64 = PI / 72.0;
/// Negativities closer than this to the pure boundary `ε = p` are not scanned.
pub const BOUNDARY_MARGIN: f64 = 1e-3;

/// Polarizer angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub alpha: f64,
    pub beta: f64,
}

impl MeasurementSetting {
    pub fn new(alpha: f64, beta: f64) -> Self {
        MeasurementSetting { alpha, beta }
    }

    pub fn from_degrees(alpha: f64, beta: f64) -> Self {
        Self::new(alpha.to_radians(), beta.to_radians())
    }

    /// `(−π/4, π/4)`, where the correlation estimator saturates the bound.
    pub fn optimal() -> Self {
        Self::from_degrees(-45.0, 45.0)
    }

    /// `(0, 0)`, used for the mixing estimate.
    pub fn diagonal() -> Self {
        Self::new(0.0, 0.0)
    }

    fn outcome_ket(&self, t: usize) -> Ket4 {
        let (s, s2) = ((t % 2) as f64, (t / 2) as f64);
        Ket4::product(
            &Ket2::linear(self.alpha + s * FRAC_PI_2),
            &Ket2::linear(self.beta + s2 * FRAC_PI_2),
        )
    }
}

/// Outcome probabilities `Tr[ρ Π_t]`, `t = 0..3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeDistribution {
    pub probs: [f64; 4],
}

impl OutcomeDistribution {
    pub fn new(probs: [f64; 4]) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid(format!("probabilities {probs:?} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("probabilities sum to {total}")));
        }
        Ok(OutcomeDistribution { probs })
    }

    pub fn uniform() -> Self {
        OutcomeDistribution { probs: [0.25; 4] }
    }
}

pub fn povm_element(t: usize, setting: &MeasurementSetting) -> Result<Mat4> {
    if t > 3 {
        return Err(invalid(format!("outcome index {t} not in 0..=3")));
    }
    Ok(setting.outcome_ket(t).projector())
}

fn raw_probabilities(rho: &Mat4, setting: &MeasurementSetting) -> [f64; 4] {
    std::array::from_fn(|t| rho.sandwich(&setting.outcome_ket(t).amplitudes()).re)
}

pub fn outcome_probabilities(rho: &DensityMatrix, setting: &MeasurementSetting) -> OutcomeDistribution {
    // round-off may leave -1e-17 on vanishing outcomes
    let probs = raw_probabilities(rho.matrix(), setting).map(|p| p.clamp(0.0, 1.0));
    OutcomeDistribution { probs }
}

/// `p0 − p1 − p2 + p3`.
pub fn visibility(d: &OutcomeDistribution) -> f64 {
    let p = d.probs;
    p[0] - p[1] - p[2] + p[3]
}

fn probabilities_at(model: Model, epsilon: f64, p: f64, setting: &MeasurementSetting) -> Result<[f64; 4]> {
    let params = StateParams::new(model, phi_for_negativity(model, epsilon, p)?, p)?;
    Ok(raw_probabilities(crate::states::make_state(&params).matrix(), setting))
}

/// Central differences of the outcome probabilities in `ε` (fixed `p`) or in
/// `p` (fixed `ε`, one-sided at the pure boundary).
fn derivative_probs(params: &StateParams, setting: &MeasurementSetting, d: f64, wrt_mixing: bool) -> Result<[f64; 4]> {
    let eps = params.epsilon();
    let (model, p) = (params.model, params.p);
    let eval = |e: f64, q: f64| probabilities_at(model, e, q, setting);
    let diff: [f64; 4] = if !wrt_mixing {
        let plus = eval(eps + d, p)?;
        let minus = eval(eps - d, p)?;
        std::array::from_fn(|t| (plus[t] - minus[t]) * 0.5 / d)
    } else if p + d <= 1.0 {
        let plus = eval(eps, p + d)?;
        let minus = eval(eps, p - d)?;
        std::array::from_fn(|t| (plus[t] - minus[t]) * 0.5 / d)
    } else {
        let f0 = eval(eps, p)?;
        let f1 = eval(eps, p - d)?;
        let f2 = eval(eps, p - 2.0 * d)?;
        std::array::from_fn(|t| (3.0 * f0[t] - 4.0 * f1[t] + f2[t]) * 0.5 / d)
    };
    Ok(diff)
}

fn check_fisher_domain(params: &StateParams, d_eps: f64) -> Result<()> {
    if !(d_eps > 0.0) {
        return Err(invalid(format!("finite-difference step {d_eps} must be positive")));
    }
    let eps = params.epsilon();
    let upper = match params.model {
        Model::CoherentMixture => params.p,
        Model::Werner => 1.5 * params.p - 0.5,
    };
    if eps - d_eps <= 0.0 || eps + d_eps >= upper {
        return Err(Error::DerivativeSingularity(format!(
            "negativity {eps} too close to the boundary of (0, {upper})"
        )));
    }
    Ok(())
}

const ZERO_PROB: f64 = 1e-12;
const ZERO_SLOPE: f64 = 1e-8;

/// `Σ_t a_t b_t / p_t` with vanishing outcomes dropped when both slopes
/// vanish too, and `+∞` when a vanishing outcome still moves.
fn fisher_sum(probs: &[f64; 4], da: &[f64; 4], db: &[f64; 4]) -> f64 {
    let mut acc = 0.0;
    for t in 0..4 {
        if probs[t] > ZERO_PROB {
            acc += da[t] * db[t] / probs[t];
        } else if da[t].abs() > ZERO_SLOPE || db[t].abs() > ZERO_SLOPE {
            return f64::INFINITY;
        }
    }
    acc
}

/// Classical Fisher information `Σ_t (∂_ε p_t)² / p_t` at fixed `p`.
///
/// Returns `+∞` when an outcome of zero probability has non-zero slope.
pub fn fisher_information(params: &StateParams, setting: &MeasurementSetting, d_eps: f64) -> Result<f64> {
    check_fisher_domain(params, d_eps)?;
    let probs = raw_probabilities(crate::states::make_state(params).matrix(), setting);
    let de = derivative_probs(params, setting, d_eps, false)?;
    Ok(fisher_sum(&probs, &de, &de))
}

/// Fisher information about `ε` with `p` treated as an unknown nuisance:
/// `F_εε − F_εp² / F_pp`.
///
/// Settings whose statistics do not depend on `p` reduce to the fixed-`p` value.
pub fn effective_fisher_information(params: &StateParams, setting: &MeasurementSetting, d_eps: f64) -> Result<f64> {
    check_fisher_domain(params, d_eps)?;
    let probs = raw_probabilities(crate::states::make_state(params).matrix(), setting);
    let de = derivative_probs(params, setting, d_eps, false)?;
    let dp = derivative_probs(params, setting, d_eps, true)?;
    let f_ee = fisher_sum(&probs, &de, &de);
    if !f_ee.is_finite() {
        return Ok(f_ee);
    }
    let f_pp = fisher_sum(&probs, &dp, &dp);
    if !f_pp.is_finite() || f_pp <= 1e-8 * f_ee.max(1.0) {
        return Ok(f_ee);
    }
    let f_ep = fisher_sum(&probs, &de, &dp);
    Ok((f_ee - f_ep * f_ep / f_pp).max(0.0))
}

/// Result of a grid search over polarizer angles.
#[derive(Debug, Clone)]
pub struct FisherScan {
    pub step: f64,
    /// Grid coordinates shared by both axes, starting at `−π/2`.
    pub angles: Vec<f64>,
    /// `values[i][j]` is the effective Fisher information at `(angles[i], angles[j])`.
    pub values: Vec<Vec<f64>>,
    pub best: MeasurementSetting,
    pub best_value: f64,
}

/// Exhaustive scan of [`effective_fisher_information`] over
/// `α, β ∈ [−π/2, π/2)` (projectors are π-periodic).
pub fn optimal_setting_scan(params: &StateParams, grid_step: f64) -> Result<FisherScan> {
    if !(grid_step > 0.0 && grid_step <= FRAC_PI_8 * (1.0 + 1e-12)) {
        return Err(invalid(format!("grid step {grid_step} outside (0, π/8]")));
    }
    let upper = match params.model {
        Model::CoherentMixture => params.p,
        Model::Werner => 1.5 * params.p - 0.5,
    };
    if params.epsilon() > upper - BOUNDARY_MARGIN {
        return Err(Error::DerivativeSingularity(format!(
            "negativity {} within {BOUNDARY_MARGIN} of the pure boundary",
            params.epsilon()
        )));
    }
    let n = (PI / grid_step - 1e-9).ceil() as usize;
    let angles: Vec<f64> = (0..n).map(|i| -FRAC_PI_2 + i as f64 * grid_step).collect();
    let values: Vec<Vec<f64>> = angles
        .par_iter()
        .map(|&a| {
            angles
                .iter()
                .map(|&b| effective_fisher_information(params, &MeasurementSetting::new(a, b), crate::states::D_EPS))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let (mut bi, mut bj, mut best_value) = (0, 0, f64::NEG_INFINITY);
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > best_value {
                (bi, bj, best_value) = (i, j, v);
            }
        }
    }
    Ok(FisherScan {
        step: grid_step,
        best: MeasurementSetting::new(angles[bi], angles[bj]),
        angles,
        values,
        best_value,
    })
}
