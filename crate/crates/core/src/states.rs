//! The two state families and the information geometry attached to them.
//!
//! * Coherent mixture: `p |ψ_φ><ψ_φ| + (1 − p) D_φ`, with
//!   `|ψ_φ> = cos φ |HH> + sin φ |VV>` and `D_φ` its dephased diagonal.
//!   Negativity is `ε = p sin 2φ`.
//! * Werner: `p |ψ_φ><ψ_φ| + (1 − p) I/4`, negativity
//!   `max(0, −½ + p/2 + p sin 2φ)`.
//!
//! Derivatives with respect to `ε` are taken at fixed `p` through `φ(ε)`.
//! Because `p` is unknown in practice, [`qfi`] also reports the
//! nuisance-adjusted information `1/[H⁻¹]_εε` of the `(ε, p)` QFI matrix,
//! which is the quantity that equals `(1 − ε²)⁻¹` for the coherent family.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{eig_hermitian, DensityMatrix, Ket4, Mat4};

/// Default central-difference step for `ε`.
pub const D_EPS: f64 = 1e-6;
/// Eigenvalue-pair cutoff `λ_m + λ_n` in the SLD sum.
pub const SLD_SUPPORT_CUTOFF: f64 = 1e-10;
/// Above this `p` the family is treated as pure (no mixing nuisance).
const PURE_P: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "coherent")]
    CoherentMixture,
    #[serde(rename = "werner")]
    Werner,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::CoherentMixture => "coherent",
            Model::Werner => "werner",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coherent" => Ok(Model::CoherentMixture),
            "werner" => Ok(Model::Werner),
            other => Err(invalid(format!("unknown model {other:?} (coherent|werner)"))),
        }
    }
}

/// Generator coordinates of a state: model, angle `phi` in `[0, π/4]`, mixing `p` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateParams {
    pub model: Model,
    pub phi: f64,
    pub p: f64,
}

impl StateParams {
    pub fn new(model: Model, phi: f64, p: f64) -> Result<Self> {
        check_phi(phi)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("mixing p = {p} outside [0, 1]")));
        }
        Ok(StateParams { model, phi, p })
    }

    pub fn coherent(phi: f64, p: f64) -> Result<Self> {
        Self::new(Model::CoherentMixture, phi, p)
    }

    pub fn werner(phi: f64, p: f64) -> Result<Self> {
        Self::new(Model::Werner, phi, p)
    }

    /// Parameters of `model` with negativity `epsilon` at mixing `p`.
    pub fn with_negativity(model: Model, epsilon: f64, p: f64) -> Result<Self> {
        Self::new(model, phi_for_negativity(model, epsilon, p)?, p)
    }

    pub fn epsilon(&self) -> f64 {
        negativity_closed_form(self)
    }
}

fn check_phi(phi: f64) -> Result<()> {
    // one ulp of slack so that 45f64.to_radians() is accepted
    if !(0.0..=FRAC_PI_4 * (1.0 + 1e-15)).contains(&phi) {
        return Err(invalid(format!("phi = {phi} rad outside [0, π/4]")));
    }
    Ok(())
}

/// `cos φ |HH> + sin φ |VV>`.
pub fn make_pure(phi: f64) -> Result<Ket4> {
    check_phi(phi)?;
    Ket4::from_real([phi.cos(), 0.0, 0.0, phi.sin()])
}

pub fn make_state(params: &StateParams) -> DensityMatrix {
    DensityMatrix::new(state_matrix(params.model, params.phi, params.p))
        .expect("family members satisfy the density-matrix invariants")
}

/// Unvalidated family member; used for finite differences that may step
/// just outside the validated parameter box.
fn state_matrix(model: Model, phi: f64, p: f64) -> Mat4 {
    let (s, c) = phi.sin_cos();
    match model {
        Model::CoherentMixture => {
            let mut m = Mat4::diag([c * c, 0.0, 0.0, s * s]);
            let coh = Complex64::new(p * s * c, 0.0);
            m[(0, 3)] = coh;
            m[(3, 0)] = coh;
            m
        }
        Model::Werner => {
            let psi = [c, 0.0, 0.0, s].map(|x| Complex64::new(x, 0.0));
            Mat4::outer(&psi, &psi).scale(p) + Mat4::identity().scale(0.25 * (1.0 - p))
        }
    }
}

/// Werner negativity without range validation.
pub fn werner_negativity(phi: f64, p: f64) -> f64 {
    (-0.5 + 0.5 * p + p * (2.0 * phi).sin()).max(0.0)
}

pub fn negativity_closed_form(params: &StateParams) -> f64 {
    match params.model {
        Model::CoherentMixture => params.p * (2.0 * params.phi).sin(),
        Model::Werner => werner_negativity(params.phi, params.p),
    }
}

/// `φ = ½ arcsin(ε/p)`: the angle giving negativity `epsilon` in the coherent family.
pub fn phi_from_negativity(epsilon: f64, p: f64) -> Result<f64> {
    phi_for_negativity(Model::CoherentMixture, epsilon, p)
}

/// Inverse of [`negativity_closed_form`] in `φ` at fixed `p`.
///
/// For Werner states zero negativity is attained on a whole interval of
/// angles; the boundary angle is returned.
pub fn phi_for_negativity(model: Model, epsilon: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || epsilon < 0.0 || !epsilon.is_finite() {
        return Err(invalid(format!("negativity {epsilon}, mixing {p} out of range")));
    }
    let sin2phi = match model {
        Model::CoherentMixture => {
            if epsilon == 0.0 {
                return Ok(0.0);
            }
            epsilon / p
        }
        Model::Werner => (epsilon + 0.5 - 0.5 * p) / p,
    };
    if !(0.0..=1.0).contains(&sin2phi) {
        return Err(Error::UnreachableNegativity { epsilon, p });
    }
    Ok(0.5 * sin2phi.asin())
}

fn family_at(model: Model, epsilon: f64, p: f64) -> Result<Mat4> {
    Ok(state_matrix(model, phi_for_negativity(model, epsilon, p)?, p))
}

fn check_interior(params: &StateParams, d_eps: f64) -> Result<f64> {
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
    Ok(eps)
}

/// `∂ρ/∂ε` at fixed `p` by central differences.
pub fn d_state_d_epsilon(params: &StateParams, d_eps: f64) -> Result<Mat4> {
    let eps = check_interior(params, d_eps)?;
    let plus = family_at(params.model, eps + d_eps, params.p)?;
    let minus = family_at(params.model, eps - d_eps, params.p)?;
    Ok((plus - minus).scale(0.5 / d_eps))
}

/// `∂ρ/∂p` at fixed `ε`; second-order one-sided when `p + d` leaves `[0, 1]`.
pub fn d_state_d_mixing(params: &StateParams, d: f64) -> Result<Mat4> {
    let eps = check_interior(params, D_EPS.min(d))?;
    let (model, p) = (params.model, params.p);
    if p + d <= 1.0 {
        let plus = family_at(model, eps, p + d)?;
        let minus = family_at(model, eps, p - d)?;
        Ok((plus - minus).scale(0.5 / d))
    } else {
        let f0 = family_at(model, eps, p)?;
        let f1 = family_at(model, eps, p - d)?;
        let f2 = family_at(model, eps, p - 2.0 * d)?;
        Ok((f0.scale(3.0) - f1.scale(4.0) + f2).scale(0.5 / d))
    }
}

/// Solves `∂ρ = ½(Lρ + ρL)` in the eigenbasis of `ρ`, dropping pairs with
/// `λ_m + λ_n` below [`SLD_SUPPORT_CUTOFF`].
pub fn sld_from_derivative(rho: &Mat4, drho: &Mat4) -> Result<Mat4> {
    let eig = eig_hermitian(rho)?;
    let vecs = eig.vectors.map(|v| v.amplitudes());
    let mut l = Mat4::zeros();
    for m in 0..4 {
        for n in 0..4 {
            let denom = eig.values[m] + eig.values[n];
            if denom <= SLD_SUPPORT_CUTOFF {
                continue;
            }
            // <m|∂ρ|n>
            let mut elem = Complex64::new(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    elem += vecs[m][i].conj() * drho[(i, j)] * vecs[n][j];
                }
            }
            let coeff = elem * (2.0 / denom);
            l = l + Mat4::outer(&vecs[m], &vecs[n]).scale_complex(coeff);
        }
    }
    Ok(l.hermitian_part())
}

/// Frobenius norm of `∂ρ − ½(Lρ + ρL)` restricted to eigenvector pairs of
/// `ρ` inside the support.
pub fn sld_residual(rho: &Mat4, drho: &Mat4, sld: &Mat4) -> Result<f64> {
    let eig = eig_hermitian(rho)?;
    let vecs = eig.vectors.map(|v| v.amplitudes());
    let r = *drho - (*sld * *rho + *rho * *sld).scale(0.5);
    let mut acc = 0.0;
    for m in 0..4 {
        for n in 0..4 {
            if eig.values[m] + eig.values[n] <= SLD_SUPPORT_CUTOFF {
                continue;
            }
            let mut elem = Complex64::new(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    elem += vecs[m][i].conj() * r[(i, j)] * vecs[n][j];
                }
            }
            acc += elem.norm_sqr();
        }
    }
    Ok(acc.sqrt())
}

/// Symmetric logarithmic derivative for `ε` at fixed `p`.
pub fn sld(params: &StateParams, d_eps: f64) -> Result<Mat4> {
    let rho = make_state(params);
    let drho = d_state_d_epsilon(params, d_eps)?;
    sld_from_derivative(rho.matrix(), &drho)
}

/// Symmetric logarithmic derivative for `p` at fixed `ε`.
pub fn sld_mixing(params: &StateParams, d: f64) -> Result<Mat4> {
    let rho = make_state(params);
    let drho = d_state_d_mixing(params, d)?;
    sld_from_derivative(rho.matrix(), &drho)
}

/// `Re Tr[ρ (L_a L_b + L_b L_a)/2]`.
fn qfi_entry(rho: &Mat4, la: &Mat4, lb: &Mat4) -> f64 {
    0.5 * (rho.trace_product(&(*la * *lb)) + rho.trace_product(&(*lb * *la))).re
}

#[derive(Debug, Clone)]
pub struct QfiResult {
    pub epsilon: f64,
    /// `(1 − ε²)⁻¹`; defined for the coherent family only.
    pub h_analytic: Option<f64>,
    /// Nuisance-adjusted QFI `H_εε − H_εp² / H_pp` (equal to `h_fixed_p` for pure states).
    pub h_numeric: f64,
    /// `Tr[ρ L_ε²]` with `L_ε` taken at fixed `p`.
    pub h_fixed_p: f64,
    /// `L_ε` at fixed `p`.
    pub sld: Mat4,
    /// Defining-equation residual of `sld`.
    pub sld_residual: f64,
}

impl QfiResult {
    /// `|h_numeric − h_analytic|`, when an analytic value exists.
    pub fn deviation(&self) -> Option<f64> {
        self.h_analytic.map(|h| (self.h_numeric - h).abs())
    }
}

pub fn qfi(params: &StateParams) -> Result<QfiResult> {
    let epsilon = params.epsilon();
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::DerivativeSingularity(format!(
            "QFI needs negativity in (0, 1), got {epsilon}"
        )));
    }
    let rho = make_state(params);
    let drho = d_state_d_epsilon(params, D_EPS)?;
    let l_eps = sld_from_derivative(rho.matrix(), &drho)?;
    let residual = sld_residual(rho.matrix(), &drho, &l_eps)?;
    let h_fixed_p = qfi_entry(rho.matrix(), &l_eps, &l_eps);

    let h_numeric = if params.p >= PURE_P {
        h_fixed_p
    } else {
        let l_p = sld_mixing(params, D_EPS)?;
        let h_ep = qfi_entry(rho.matrix(), &l_eps, &l_p);
        let h_pp = qfi_entry(rho.matrix(), &l_p, &l_p);
        if h_pp <= 1e-12 * h_fixed_p.max(1.0) {
            h_fixed_p
        } else {
            h_fixed_p - h_ep * h_ep / h_pp
        }
    };

    let h_analytic = match params.model {
        Model::CoherentMixture => Some(1.0 / (1.0 - epsilon * epsilon)),
        Model::Werner => None,
    };
    Ok(QfiResult {
        epsilon,
        h_analytic,
        h_numeric,
        h_fixed_p,
        sld: l_eps,
        sld_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{negativity, purity};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    #[test]
    fn pure_state_amplitudes() {
        let hh = make_pure(0.0).unwrap().amplitudes();
        assert_eq!(hh[0].re, 1.0);
        assert_eq!(hh[3].re, 0.0);
        let bell = make_pure(FRAC_PI_4).unwrap().amplitudes();
        assert_abs_diff_eq!(bell[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(bell[3].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        let k = make_pure(deg(15.0)).unwrap().amplitudes();
        assert_abs_diff_eq!(k[0].re, 0.965926, epsilon = 1e-6);
        assert_abs_diff_eq!(k[3].re, 0.258819, epsilon = 1e-6);
        assert!(make_pure(deg(50.0)).is_err());
        assert!(make_pure(-0.1).is_err());
    }

    #[test]
    fn family_special_cases() {
        let bell = make_state(&StateParams::coherent(FRAC_PI_4, 1.0).unwrap());
        let expected = make_pure(FRAC_PI_4).unwrap().projector();
        assert!(bell.matrix().max_abs_diff(&expected) < 1e-15);
        let dephased = make_state(&StateParams::coherent(FRAC_PI_4, 0.0).unwrap());
        assert!(dephased.matrix().max_abs_diff(&Mat4::diag([0.5, 0.0, 0.0, 0.5])) < 1e-15);
        let white = make_state(&StateParams::werner(FRAC_PI_4, 0.0).unwrap());
        assert!(white.matrix().max_abs_diff(&Mat4::identity().scale(0.25)) < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(StateParams::coherent(1.0, 0.5).is_err());
        assert!(StateParams::coherent(0.3, 1.2).is_err());
        assert!(StateParams::coherent(deg(45.0), 1.0).is_ok());
    }

    #[test]
    fn linalg_values_on_the_family() {
        let rho = make_state(&StateParams::coherent(deg(20.0), 0.88).unwrap());
        assert_abs_diff_eq!(negativity(&rho), 0.565653, epsilon = 1e-6);
        // 1 − (1 − 0.88²)·sin²40°/2
        assert_abs_diff_eq!(purity(&rho), 0.95339376, epsilon = 1e-8);
        let phi = deg(30.0);
        let rho = make_state(&StateParams::coherent(phi, 0.9).unwrap());
        let f = crate::linalg::fidelity_with_pure(&rho, &make_pure(phi).unwrap());
        assert_abs_diff_eq!(f, 0.9625, epsilon = 1e-12);
        let rho = make_state(&StateParams::coherent(FRAC_PI_4, 1.0).unwrap());
        assert_abs_diff_eq!(negativity(&rho), 1.0, epsilon = 1e-12);
        let rho = make_state(&StateParams::coherent(0.0, 0.9).unwrap());
        assert_abs_diff_eq!(negativity(&rho), 0.0, epsilon = 1e-12);
    }

    fn grid() -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 0..=9 {
            for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
                out.push((deg(5.0 * i as f64), p));
            }
        }
        out
    }

    #[test]
    fn closed_forms_match_direct_computation_on_grid() {
        for (phi, p) in grid() {
            for model in [Model::CoherentMixture, Model::Werner] {
                let params = StateParams::new(model, phi, p).unwrap();
                let rho = make_state(&params);
                assert_abs_diff_eq!(negativity(&rho), negativity_closed_form(&params), epsilon = 1e-12);
            }
            let rho = make_state(&StateParams::coherent(phi, p).unwrap());
            let closed = 1.0 - (1.0 - p * p) * (2.0 * phi).sin().powi(2) / 2.0;
            assert_abs_diff_eq!(purity(&rho), closed, epsilon = 1e-12);
        }
    }

    #[test]
    fn negativity_closed_form_examples() {
        let p = StateParams::coherent(deg(45.0), 0.97).unwrap();
        assert_abs_diff_eq!(negativity_closed_form(&p), 0.97, epsilon = 1e-15);
        let w = StateParams::werner(FRAC_PI_4, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(negativity_closed_form(&w), 0.0, epsilon = 1e-15);
        let w = StateParams::werner(FRAC_PI_4, 0.9).unwrap();
        assert_abs_diff_eq!(negativity_closed_form(&w), 0.85, epsilon = 1e-15);
    }

    #[test]
    fn phi_inverse() {
        assert_abs_diff_eq!(phi_from_negativity(1.0, 1.0).unwrap(), FRAC_PI_4, epsilon = 1e-15);
        assert_abs_diff_eq!(phi_from_negativity(0.5, 1.0).unwrap(), 0.261799, epsilon = 1e-6);
        assert!(matches!(
            phi_from_negativity(0.9, 0.8),
            Err(Error::UnreachableNegativity { .. })
        ));
        assert!(phi_from_negativity(0.1, 0.0).is_err());
        for i in 1..=20 {
            let p = 0.05 * i as f64;
            for j in 0..=10 {
                let eps = p * j as f64 / 10.0;
                let phi = phi_from_negativity(eps, p).unwrap();
                let back = negativity_closed_form(&StateParams::coherent(phi, p).unwrap());
                assert_abs_diff_eq!(back, eps, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sld_pure_state_trace_vanishes() {
        let params = StateParams::coherent(deg(30.0), 1.0).unwrap();
        let l = sld(&params, D_EPS).unwrap();
        let rho = make_state(&params);
        assert!(rho.matrix().trace_product(&l).norm() < 1e-8);
    }

    #[test]
    fn sld_boundary_is_singular() {
        let params = StateParams::coherent(0.0, 0.9).unwrap();
        assert!(matches!(sld(&params, D_EPS), Err(Error::DerivativeSingularity(_))));
        let params = StateParams::coherent(FRAC_PI_4, 0.9).unwrap();
        assert!(matches!(sld(&params, D_EPS), Err(Error::DerivativeSingularity(_))));
    }

    #[test]
    fn sld_mixed_fixed_p_and_effective() {
        let params = StateParams::with_negativity(Model::CoherentMixture, 0.5, 0.9).unwrap();
        let q = qfi(&params).unwrap();
        // Bloch-vector oracle for the fixed-p information: 1/(p² − ε²)
        assert_abs_diff_eq!(q.h_fixed_p, 1.0 / (0.81 - 0.25), epsilon = 1e-4);
        assert_abs_diff_eq!(q.h_numeric, 4.0 / 3.0, epsilon = 1e-4);
        assert!(q.sld_residual <= 1e-6);
    }

    #[test]
    fn sld_werner_residual() {
        let params = StateParams::with_negativity(Model::Werner, 0.5, 0.9).unwrap();
        let rho = make_state(&params);
        let drho = d_state_d_epsilon(&params, D_EPS).unwrap();
        let l = sld_from_derivative(rho.matrix(), &drho).unwrap();
        assert!(l.hermiticity_defect() < 1e-12);
        assert!(sld_residual(rho.matrix(), &drho, &l).unwrap() <= 1e-6);
        let q = qfi(&params).unwrap();
        assert!(q.h_analytic.is_none());
        assert!(q.h_numeric > 0.0);
    }

    #[test]
    fn qfi_examples() {
        let params = StateParams::coherent(deg(45.0), 0.97).unwrap();
        // ε = p: boundary of the coherent family at fixed p
        assert!(qfi(&params).is_err());
        let h = 1.0 / (1.0 - 0.97f64 * 0.97);
        assert_abs_diff_eq!(h, 16.920, epsilon = 1e-3);
        let params = StateParams::coherent(deg(28.0), 0.85).unwrap();
        let q = qfi(&params).unwrap();
        let ha = q.h_analytic.unwrap();
        assert!(q.deviation().unwrap() <= 1e-4 * ha, "{q:?}");
        let small = StateParams::with_negativity(Model::CoherentMixture, 1e-3, 1.0).unwrap();
        assert_abs_diff_eq!(qfi(&small).unwrap().h_analytic.unwrap(), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn qfi_depends_on_epsilon_only() {
        for i in 1..=9 {
            let eps = 0.1 * i as f64;
            for p in [0.7, 0.8, 0.9, 1.0] {
                if eps > p - 1e-3 {
                    continue;
                }
                let params = StateParams::with_negativity(Model::CoherentMixture, eps, p).unwrap();
                let q = qfi(&params).unwrap();
                let ha = q.h_analytic.unwrap();
                assert!(q.deviation().unwrap() <= 1e-4 * ha, "eps {eps} p {p}: {q:?}");
                assert_abs_diff_eq!(q.h_fixed_p, 1.0 / (p * p - eps * eps), epsilon = 1e-4 * q.h_fixed_p);
            }
        }
    }
}
