//! Linear-inversion two-qubit tomography from product projector rates.
//!
//! The default settings are the 16 products of {H, V, D, L} on each arm.
//! Reconstruction expands ρ in the projector frame, `ρ = Σ c_ν Π_ν`, with
//! `G c = m` for the Gram matrix `G_{μν} = Tr[Π_μ Π_ν]` and rates `m`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::format::sig;
use crate::linalg::{
    eig_hermitian, fidelity, fidelity_with_pure, negativity, trace_distance, DensityMatrix, Ket2, Mat4,
};
use crate::rng::Stream;
use crate::simulator::sample_poisson;
use crate::states::{make_pure, make_state, StateParams};

/// Largest Gram condition number accepted as well posed.
pub const MAX_GRAM_CONDITION: f64 = 1e3;
/// Dimension of the real space of 4×4 Hermitian operators.
const FRAME_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TomoSetting {
    pub a: Ket2,
    pub b: Ket2,
    pub label: String,
}

impl TomoSetting {
    pub fn projector(&self) -> Mat4 {
        crate::linalg::tensor_projector(&self.a, &self.b)
    }
}

fn single_qubit_states(names: &str) -> Vec<(char, Ket2)> {
    names
        .chars()
        .map(|c| {
            let k = match c {
                'H' => Ket2::h(),
                'V' => Ket2::v(),
                'D' => Ket2::d(),
                'L' => Ket2::l(),
                _ => unreachable!(),
            };
            (c, k)
        })
        .collect()
}

fn product_settings(names: &str) -> Vec<TomoSetting> {
    let states = single_qubit_states(names);
    let mut out = Vec::with_capacity(states.len() * states.len());
    for (ca, a) in &states {
        for (cb, b) in &states {
            out.push(TomoSetting {
                a: *a,
                b: *b,
                label: format!("{ca}{cb}"),
            });
        }
    }
    out
}

/// The 16 products of {H, V, D, L}; informationally complete.
pub fn canonical_settings() -> Vec<TomoSetting> {
    product_settings("HVDL")
}

/// The 9 products of the linear states {H, V, D}. They span only the
/// operators without a `Y` factor, so `YY` correlations are invisible and
/// inversion refuses them.
pub fn linear_settings() -> Vec<TomoSetting> {
    product_settings("HVD")
}

/// `G_{μν} = Tr[Π_μ Π_ν]`.
pub fn gram_matrix(settings: &[TomoSetting]) -> DMatrix<f64> {
    let projectors: Vec<Mat4> = settings.iter().map(TomoSetting::projector).collect();
    let n = projectors.len();
    DMatrix::from_fn(n, n, |i, j| projectors[i].trace_product(&projectors[j]).re)
}

/// Ratio of extreme singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= max * 1e-14 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomoDataset {
    pub entries: Vec<(TomoSetting, f64)>,
}

pub const TOMO_CSV_HEADER: [&str; 10] = [
    "label", "a_re0", "a_im0", "a_re1", "a_im1", "b_re0", "b_im0", "b_re1", "b_im1", "rate",
];

impl TomoDataset {
    pub fn new(entries: Vec<(TomoSetting, f64)>) -> Result<Self> {
        if let Some((s, r)) = entries.iter().find(|(_, r)| !(0.0..=1.0).contains(r)) {
            return Err(invalid(format!("rate {r} for setting {} outside [0, 1]", s.label)));
        }
        Ok(TomoDataset { entries })
    }

    pub fn settings(&self) -> Vec<TomoSetting> {
        self.entries.iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", TOMO_CSV_HEADER.join(","))?;
        for (s, rate) in &self.entries {
            let [a0, a1] = s.a.amplitudes();
            let [b0, b1] = s.b.amplitudes();
            let nums = [a0.re, a0.im, a1.re, a1.im, b0.re, b0.im, b1.re, b1.im, *rate];
            let fields: Vec<String> = nums.iter().map(|x| sig(*x, 17)).collect();
            writeln!(w, "{},{}", s.label, fields.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if header.iter().ne(TOMO_CSV_HEADER.iter().copied()) {
            return Err(Error::Parse(format!("unexpected tomography header: {header:?}")));
        }
        let mut entries = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let mut x = [0.0; 9];
            for (i, slot) in x.iter_mut().enumerate() {
                *slot = rec[i + 1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {:?}", line + 2, &rec[i + 1])))?;
            }
            let a = Ket2::new(Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]))?;
            let b = Ket2::new(Complex64::new(x[4], x[5]), Complex64::new(x[6], x[7]))?;
            entries.push((
                TomoSetting {
                    a,
                    b,
                    label: rec[0].to_string(),
                },
                x[8],
            ));
        }
        TomoDataset::new(entries)
    }
}

/// Noise-free rates `Tr[Π ρ]`.
pub fn exact_rates(rho: &DensityMatrix, settings: &[TomoSetting]) -> TomoDataset {
    let entries = settings
        .iter()
        .map(|s| (s.clone(), s.projector().trace_product(rho.matrix()).re.clamp(0.0, 1.0)))
        .collect();
    TomoDataset { entries }
}

/// Rates `k/N` with `k ~ Poisson(N Tr[Π ρ])`, one stream fork per setting.
pub fn sample_dataset(
    rho: &DensityMatrix,
    settings: &[TomoSetting],
    counts_per_setting: f64,
    stream: &Stream,
) -> Result<TomoDataset> {
    if !(counts_per_setting.is_finite() && counts_per_setting > 0.0) {
        return Err(invalid("counts per setting must be positive"));
    }
    let exact = exact_rates(rho, settings);
    let entries = exact
        .entries
        .into_iter()
        .enumerate()
        .map(|(i, (s, p))| {
            let k = sample_poisson(counts_per_setting * p, &mut stream.fork(i as u64));
            (s, (k as f64 / counts_per_setting).min(1.0))
        })
        .collect();
    Ok(TomoDataset { entries })
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Hermitian, unit trace; not necessarily PSD.
    pub matrix: Mat4,
    pub min_eigenvalue: f64,
    /// `min_eigenvalue < −1e-10`.
    pub non_physical: bool,
    /// Trace before renormalization.
    pub raw_trace: f64,
}

pub fn linear_inversion(data: &TomoDataset) -> Result<Reconstruction> {
    let settings = data.settings();
    if settings.len() != FRAME_SIZE {
        return Err(Error::IllPosedSettings(format!(
            "{} settings cannot span the {FRAME_SIZE}-dimensional operator space",
            settings.len()
        )));
    }
    let gram = gram_matrix(&settings);
    let cond = condition_number(&gram);
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::IllPosedSettings(format!(
            "{} settings with Gram condition number {cond:.3e}",
            settings.len()
        )));
    }
    let m = DVector::from_iterator(data.entries.len(), data.entries.iter().map(|(_, r)| *r));
    let c = gram
        .lu()
        .solve(&m)
        .ok_or_else(|| Error::IllPosedSettings("Gram matrix not invertible".into()))?;
    let mut rho = Mat4::zeros();
    for (s, ci) in settings.iter().zip(c.iter()) {
        rho = rho + s.projector().scale(*ci);
    }
    let rho = rho.hermitian_part();
    let raw_trace = rho.trace().re;
    if raw_trace.abs() < 1e-12 {
        return Err(invalid("reconstruction has zero trace"));
    }
    let rho = rho.scale(1.0 / raw_trace);
    let min_eigenvalue = eig_hermitian(&rho)?.values[0];
    Ok(Reconstruction {
        matrix: rho,
        min_eigenvalue,
        non_physical: min_eigenvalue < crate::linalg::PSD_SLACK,
        raw_trace,
    })
}

/// Clips negative eigenvalues to zero and renormalizes.
pub fn project_to_physical(h: &Mat4) -> Result<DensityMatrix> {
    let tr = h.trace().re;
    if (tr - 1.0).abs() > 1e-6 {
        return Err(invalid(format!("trace {tr} is not 1")));
    }
    let eig = eig_hermitian(h)?;
    let kept: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    let m = eig.reconstruct_with(|v| v.max(0.0) / kept);
    DensityMatrix::new(m.hermitian_part())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelComparison {
    pub fidelity: f64,
    pub trace_distance: f64,
    pub negativity_gap: f64,
}

pub fn compare_to_model(rho_rec: &DensityMatrix, params: &StateParams) -> Result<ModelComparison> {
    let model = make_state(params);
    let fid = if params.p >= 1.0 {
        fidelity_with_pure(rho_rec, &make_pure(params.phi)?)
    } else {
        fidelity(rho_rec, &model)
    };
    Ok(ModelComparison {
        fidelity: fid,
        trace_distance: trace_distance(rho_rec.matrix(), model.matrix())?,
        negativity_gap: (negativity(rho_rec) - params.epsilon()).abs(),
    })
}
