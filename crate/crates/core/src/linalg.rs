//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Qubit 0 is the most
//! significant bit of a computational-basis index, so `kron(a, b)` puts `a`
//! on the lower-numbered qubits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Structural predicates used by the invariants of downstream modules.
pub trait MatrixProps {
    fn is_hermitian(&self, tol: f64) -> bool;
    fn is_unitary(&self, tol: f64) -> bool;
    fn is_psd(&self, tol: f64) -> bool;
    fn is_finite(&self) -> bool;
}

impl MatrixProps for CMatrix {
    fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && max_abs_diff(self, &self.adjoint()) <= tol
    }

    fn is_unitary(&self, tol: f64) -> bool {
        self.is_square()
            && max_abs_diff(&(self.adjoint() * self), &CMatrix::identity(self.nrows(), self.ncols()))
                <= tol
    }

    fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol.max(1e-12)) && min_eigenvalue(self) >= -tol
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Largest elementwise modulus of `a - b`. Returns infinity for shape mismatch.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `Tr[a b]` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Traces out the second tensor factor of a `(dim_a·dim_b)`-square matrix.
pub fn partial_trace_b(m: &CMatrix, dim_a: usize, dim_b: usize) -> Result<CMatrix> {
    let n = dim_a * dim_b;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(CMatrix::from_fn(dim_a, dim_a, |i, j| {
        (0..dim_b).map(|k| m[(i * dim_b + k, j * dim_b + k)]).sum()
    }))
}

/// Traces out the first tensor factor of a `(dim_a·dim_b)`-square matrix.
pub fn partial_trace_a(m: &CMatrix, dim_a: usize, dim_b: usize) -> Result<CMatrix> {
    let n = dim_a * dim_b;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(CMatrix::from_fn(dim_b, dim_b, |k, l| {
        (0..dim_a).map(|i| m[(i * dim_b + k, i * dim_b + l)]).sum()
    }))
}

/// Matrix exponential by scaling and squaring around a degree-13 Padé
/// approximant (nalgebra's implementation of Higham's algorithm).
pub fn expm(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expm needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let out = m.exp();
    if !out.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(out)
}

/// Eigendecomposition `h = V diag(values) V†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix) -> Self {
        // symmetrize first so round-off in h does not leak into the solver
        let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = sym.symmetric_eigen();
        Self { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
    }

    /// Rebuilds `V diag(f(λ)) V†`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let fj = f(lambda);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= fj);
        }
        scaled * self.vectors.adjoint()
    }
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    HermitianEigen::new(m).values.into_iter().fold(f64::INFINITY, f64::min)
}

/// `exp(-i t h)` for Hermitian `h`, exactly unitary up to round-off.
pub fn unitary_evolution(h: &CMatrix, t: f64) -> CMatrix {
    HermitianEigen::new(h).map(|lambda| C64::from_polar(1.0, -lambda * t))
}

/// Eigenvalues in `[-tol, 0)` are clamped to zero.
pub const PSD_CLAMP_TOL: f64 = 1e-12;

/// Principal square root of a Hermitian positive semidefinite matrix.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    psd_sqrt_tol(m, PSD_CLAMP_TOL)
}

pub fn psd_sqrt_tol(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    if !m.is_hermitian(1e-9 * (1.0 + m.norm())) {
        return Err(Error::NotHermitian("psd_sqrt argument"));
    }
    let eig = HermitianEigen::new(m);
    if let Some(&worst) = eig.values.iter().find(|&&l| l < -tol) {
        return Err(Error::NotPsd(worst));
    }
    Ok(eig.map(|l| C64::new(l.max(0.0).sqrt(), 0.0)))
}

/// Unit vector on `2^n` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let dim = amplitudes.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("state dimension {dim} is not a power of two")));
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidArgument("state has zero or non-finite norm".into()));
        }
        Ok(Self { amplitudes: amplitudes.unscale(norm) })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Self { amplitudes: v }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(&self.amplitudes * self.amplitudes.adjoint())
    }
}

/// Haar-random pure state on `n_qubits`, from normalized complex Gaussians.
pub fn haar_random_state(n_qubits: usize, seed: u64) -> PureState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_random_state_with(n_qubits, &mut rng)
}

pub fn haar_random_state_with(n_qubits: usize, rng: &mut impl rand::Rng) -> PureState {
    let dim = 1usize << n_qubits.max(1);
    loop {
        let v = CVector::from_fn(dim, |_, _| {
            C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        });
        if v.norm() > 1e-300 {
            return PureState::new(v).expect("non-degenerate Gaussian vector");
        }
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub const DEFAULT_TOL: f64 = 1e-9;

    /// Validates Hermiticity, unit trace and positivity within `tol`.
    pub fn new(m: CMatrix, tol: f64) -> Result<Self> {
        if !m.is_square() || !m.nrows().is_power_of_two() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square with power-of-two side, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        if !m.is_hermitian(tol) {
            return Err(Error::NotHermitian("density matrix"));
        }
        let tr = trace(&m);
        if (tr - ONE).norm() > tol {
            return Err(Error::InvalidArgument(format!("density matrix trace {tr} is not 1")));
        }
        let lo = min_eigenvalue(&m);
        if lo < -tol {
            return Err(Error::NotPsd(lo));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller knows to be a state up to round-off.
    pub fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        PureState::basis(dim, index).density()
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

impl From<&PureState> for DensityMatrix {
    fn from(psi: &PureState) -> Self {
        psi.density()
    }
}

pub fn pauli_i() -> CMatrix {
    CMatrix::identity(2, 2)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `|row⟩⟨col|` on a `dim`-dimensional space.
pub fn ket_bra(dim: usize, row: usize, col: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(row, col)] = ONE;
    m
}

/// Places a single-qubit operator on `qubit` of an `n_qubits` register.
pub fn embed_single(op: &CMatrix, qubit: usize, n_qubits: usize) -> CMatrix {
    assert!(qubit < n_qubits, "qubit {qubit} out of range for {n_qubits} qubits");
    let left = CMatrix::identity(1 << qubit, 1 << qubit);
    let right_dim = 1 << (n_qubits - qubit - 1);
    let right = CMatrix::identity(right_dim, right_dim);
    kron(&kron(&left, op), &right)
}

/// Column-stacking vectorization.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_iterator(m.len(), m.iter().copied())
}

pub fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_iterator(dim, dim, v.iter().copied())
}
