//! Exact small-scale complex linear algebra for two-qubit operators.
//!
//! Every operator lives on the polarization space of two photons with the
//! basis fixed as `(HH, HV, VH, VV)`: index `2 * i + j` where `i` is the
//! first photon and `j` the second. Partial transposition always acts on the
//! second factor.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Tolerance applied by constructors (norms, Hermiticity, trace).
pub const CONSTRUCT_TOL: f64 = 1e-12;
/// Smallest eigenvalue a density matrix may carry.
pub const PSD_SLACK: f64 = -1e-10;
/// Stopping threshold on the off-diagonal Frobenius norm in the Jacobi sweep.
pub const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Single-photon polarization ket in the `(|H>, |V>)` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ket2([Complex64; 2]);

impl Ket2 {
    pub fn new(h: Complex64, v: Complex64) -> Result<Self> {
        let ket = Ket2([h, v]);
        let norm = ket.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > CONSTRUCT_TOL {
            return Err(invalid(format!("Ket2 squared norm is {norm}, expected 1")));
        }
        Ok(ket)
    }

    /// Linear polarization at `angle` radians: `cos(angle)|H> + sin(angle)|V>`.
    pub fn linear(angle: f64) -> Self {
        Ket2([Complex64::new(angle.cos(), 0.0), Complex64::new(angle.sin(), 0.0)])
    }

    pub fn h() -> Self {
        Ket2([ONE, ZERO])
    }

    pub fn v() -> Self {
        Ket2([ZERO, ONE])
    }

    /// Diagonal polarization `(|H> + |V>)/sqrt(2)`.
    pub fn d() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Ket2([a, a])
    }

    /// Circular polarization `(|H> + i|V>)/sqrt(2)`.
    pub fn l() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Ket2([Complex64::new(a, 0.0), Complex64::new(0.0, a)])
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        self.0
    }

    fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Two-photon ket in the `(HH, HV, VH, VV)` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ket4([Complex64; 4]);

impl Ket4 {
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let ket = Ket4(amplitudes);
        let norm = ket.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > CONSTRUCT_TOL {
            return Err(invalid(format!("Ket4 squared norm is {norm}, expected 1")));
        }
        Ok(ket)
    }

    pub fn from_real(amplitudes: [f64; 4]) -> Result<Self> {
        Self::new(amplitudes.map(|x| Complex64::new(x, 0.0)))
    }

    /// Tensor product `a ⊗ b`.
    pub fn product(a: &Ket2, b: &Ket2) -> Self {
        let (a, b) = (a.0, b.0);
        Ket4([a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]])
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        self.0
    }

    /// `|self><self|`.
    pub fn projector(&self) -> Mat4 {
        Mat4::outer(&self.0, &self.0)
    }

    fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Dense 4×4 complex matrix, row major.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat4(pub [[Complex64; 4]; 4]);

impl Mat4 {
    pub fn zeros() -> Self {
        Mat4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn from_real(rows: [[f64; 4]; 4]) -> Self {
        Mat4(rows.map(|row| row.map(|x| Complex64::new(x, 0.0))))
    }

    pub fn diag(d: [f64; 4]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = Complex64::new(d[i], 0.0);
        }
        m
    }

    /// `|u><v|`.
    pub fn outer(u: &[Complex64; 4], v: &[Complex64; 4]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = u[i] * v[j].conj();
            }
        }
        m
    }

    /// Kronecker product of two 2×2 matrices.
    pub fn kron(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> Self {
        let mut m = Self::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m.0[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        m
    }

    pub fn dagger(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat4(self.0.map(|row| row.map(|z| z * s)))
    }

    pub fn scale_complex(&self, z: Complex64) -> Self {
        Mat4(self.0.map(|row| row.map(|x| x * z)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|row| row.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat4) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }

    /// `max |m_ij - conj(m_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.dagger())
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flat_map(|row| row.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `Tr[self · other]`.
    pub fn trace_product(&self, other: &Mat4) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..4 {
            for k in 0..4 {
                acc += self.0[i][k] * other.0[k][i];
            }
        }
        acc
    }

    /// `<v| self |v>`.
    pub fn sandwich(&self, v: &[Complex64; 4]) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..4 {
            let mut row = ZERO;
            for j in 0..4 {
                row += self.0[i][j] * v[j];
            }
            acc += v[i].conj() * row;
        }
        acc
    }

    /// Transpose of the second tensor factor: `((i,j),(k,l)) -> ((i,l),(k,j))`.
    pub fn partial_transpose_b(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m.0[2 * i + l][2 * k + j] = self.0[2 * i + j][2 * k + l];
                    }
                }
            }
        }
        m
    }

    /// Average with the adjoint, removing round-off anti-Hermitian parts.
    pub fn hermitian_part(&self) -> Self {
        (*self + self.dagger()).scale(0.5)
    }
}

impl fmt::Debug for Mat4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat4[")?;
        for row in &self.0 {
            write!(f, "  ")?;
            for z in row {
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Mat4 {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat4 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.0[i][j]
    }
}

impl Add for Mat4 {
    type Output = Mat4;
    fn add(self, rhs: Mat4) -> Mat4 {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] += rhs.0[i][j];
            }
        }
        m
    }
}

impl Sub for Mat4 {
    type Output = Mat4;
    fn sub(self, rhs: Mat4) -> Mat4 {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] -= rhs.0[i][j];
            }
        }
        m
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, rhs: Mat4) -> Mat4 {
        let mut m = Mat4::zeros();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..4 {
                    m.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        m
    }
}

/// A validated two-qubit density operator: Hermitian, unit trace, PSD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    pub fn new(m: Mat4) -> Result<Self> {
        if !m.is_finite() {
            return Err(invalid("density matrix has non-finite entries"));
        }
        let herm = m.hermiticity_defect();
        if herm > CONSTRUCT_TOL {
            return Err(invalid(format!("density matrix not Hermitian (defect {herm:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > CONSTRUCT_TOL || tr.im.abs() > CONSTRUCT_TOL {
            return Err(invalid(format!("density matrix trace is {tr}, expected 1")));
        }
        let min_eig = eig_hermitian(&m)?.values[0];
        if min_eig < PSD_SLACK {
            return Err(invalid(format!("density matrix not PSD (min eigenvalue {min_eig:e})")));
        }
        Ok(DensityMatrix(m))
    }

    /// `|psi><psi|`.
    pub fn pure(psi: &Ket4) -> Self {
        DensityMatrix(psi.projector())
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity().scale(0.25))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }
}

/// Eigen-decomposition of a 4×4 Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Ascending.
    pub values: [f64; 4],
    /// `vectors[i]` belongs to `values[i]`.
    pub vectors: [Ket4; 4],
}

impl Eigen {
    /// `Σ_i f(λ_i) |v_i><v_i|`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Mat4 {
        let mut m = Mat4::zeros();
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            m = m + v.projector().scale(f(*lambda));
        }
        m
    }
}

/// `|a><a| ⊗ |b><b|`.
pub fn tensor_projector(a: &Ket2, b: &Ket2) -> Mat4 {
    Ket4::product(a, b).projector()
}

/// Partial transpose on the second photon.
pub fn partial_transpose_b(rho: &DensityMatrix) -> Mat4 {
    rho.0.partial_transpose_b()
}

fn off_diagonal_norm(a: &Mat4) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                s += a.0[i][j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic complex Jacobi eigen-solver.
///
/// Each rotation first removes the phase of the pivot `a_pq`, then applies
/// the real symmetric Jacobi rotation that annihilates it.
pub fn eig_hermitian(h: &Mat4) -> Result<Eigen> {
    if !h.is_finite() {
        return Err(invalid("matrix has non-finite entries"));
    }
    let defect = h.hermiticity_defect();
    if defect > 1e-10 {
        return Err(invalid(format!("matrix not Hermitian (defect {defect:e})")));
    }
    let mut a = h.hermitian_part();
    let mut v = Mat4::identity();
    let scale = a.frobenius_norm();
    let threshold = JACOBI_TOL.max(1e-15 * scale);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) < threshold {
            break;
        }
        for p in 0..3 {
            for q in (p + 1)..4 {
                let apq = a.0[p][q];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let phase = apq / mag;
                let app = a.0[p][p].re;
                let aqq = a.0[q][q].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let mut j = Mat4::identity();
                j.0[p][p] = Complex64::new(c, 0.0);
                j.0[p][q] = Complex64::new(s, 0.0);
                j.0[q][p] = -phase.conj() * s;
                j.0[q][q] = phase.conj() * c;

                a = j.dagger() * a * j;
                a.0[p][q] = ZERO;
                a.0[q][p] = ZERO;
                for i in 0..4 {
                    a.0[i][i].im = 0.0;
                }
                v = v * j;
            }
        }
    }

    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&x, &y| a.0[x][x].re.total_cmp(&a.0[y][y].re));
    let values = order.map(|i| a.0[i][i].re);
    let vectors = order.map(|i| Ket4([v.0[0][i], v.0[1][i], v.0[2][i], v.0[3][i]]));
    Ok(Eigen { values, vectors })
}

/// `2 Σ |negative eigenvalues of ρ^{T_B}|`, i.e. `‖ρ^{T_B}‖₁ − 1`.
pub fn negativity(rho: &DensityMatrix) -> f64 {
    negativity_of_matrix(rho.matrix())
}

pub(crate) fn negativity_of_matrix(m: &Mat4) -> f64 {
    let eig = eig_hermitian(&m.partial_transpose_b().hermitian_part())
        .expect("partial transpose of a Hermitian matrix is Hermitian");
    2.0 * eig.values.iter().filter(|&&l| l < 0.0).map(|l| -l).sum::<f64>()
}

/// `Tr[ρ²]`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.0 .0.iter().flat_map(|row| row.iter()).map(|z| z.norm_sqr()).sum()
}

/// `<ψ|ρ|ψ>`.
pub fn fidelity_with_pure(rho: &DensityMatrix, psi: &Ket4) -> f64 {
    rho.0.sandwich(&psi.0).re.clamp(0.0, 1.0)
}

/// Square root of a PSD Hermitian matrix; negative round-off eigenvalues are clipped.
pub fn sqrt_psd(m: &Mat4) -> Result<Mat4> {
    let eig = eig_hermitian(m)?;
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(ρ) σ sqrt(ρ)))²`; reduces to `<ψ|σ|ψ>` for pure `ρ`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let root = sqrt_psd(rho.matrix()).expect("density matrix is Hermitian");
    let inner = (root * *sigma.matrix() * root).hermitian_part();
    let eig = eig_hermitian(&inner).expect("product is Hermitian");
    let tr: f64 = eig.values.iter().map(|l| l.max(0.0).sqrt()).sum();
    (tr * tr).clamp(0.0, 1.0)
}

/// `½ Σ |eigenvalues of (ρ − σ)|`.
pub fn trace_distance(rho: &Mat4, sigma: &Mat4) -> Result<f64> {
    let eig = eig_hermitian(&(*rho - *sigma).hermitian_part())?;
    Ok(0.5 * eig.values.iter().map(|l| l.abs()).sum::<f64>())
}
