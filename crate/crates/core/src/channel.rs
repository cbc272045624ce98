//! Quantum channels: the channel induced by a Stinespring unitary, its
//! superoperator, repeated application for time extrapolation, and Choi-based
//! certification of complete positivity and trace preservation.

use crate::error::{Error, Result};
use crate::linalg::{
    kron, ket_bra, partial_trace_a, partial_trace_b, unvectorize, vectorize, CMatrix, DensityMatrix,
    HermitianEigen, MatrixProps, C64, ONE,
};

/// Linear map on `dim × dim` matrices in column-stacking representation:
/// `vec(Φ(ρ)) = matrix · vec(ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn new(dim: usize, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != dim * dim || matrix.ncols() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "superoperator on dim {dim} must be {0}x{0}",
                dim * dim
            )));
        }
        Ok(Self { dim, matrix })
    }

    /// `Σ_k conj(K_k) ⊗ K_k`.
    pub fn from_kraus(kraus: &[CMatrix]) -> Self {
        let dim = kraus[0].nrows();
        let mut matrix = CMatrix::zeros(dim * dim, dim * dim);
        for k in kraus {
            matrix += kron(&k.conjugate(), k);
        }
        Self { dim, matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: CMatrix::identity(dim * dim, dim * dim) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply_matrix(&self, m: &CMatrix) -> CMatrix {
        unvectorize(&(&self.matrix * vectorize(m)), self.dim)
    }

    /// Applies the map and re-symmetrizes away round-off.
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let out = self.apply_matrix(rho.matrix());
        DensityMatrix::from_matrix_unchecked((&out + out.adjoint()) * C64::new(0.5, 0.0))
    }

    /// `self ∘ other`, i.e. `other` acts first.
    pub fn compose(&self, other: &Self) -> Self {
        Self { dim: self.dim, matrix: &self.matrix * &other.matrix }
    }

    pub fn power(&self, n: usize) -> Self {
        let mut out = Self::identity(self.dim);
        for _ in 0..n {
            out = self.compose(&out);
        }
        out
    }

    /// `Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`, input factor first.
    pub fn choi(&self) -> CMatrix {
        let d = self.dim;
        let mut choi = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let image = self.apply_matrix(&ket_bra(d, i, j));
                choi += kron(&ket_bra(d, i, j), &image);
            }
        }
        choi
    }
}

/// Certificate computed from a Choi matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelCertificate {
    /// Smallest Choi eigenvalue; complete positivity needs this ≥ 0.
    pub min_choi_eigenvalue: f64,
    /// Max-abs distance of the output-traced Choi matrix from the identity.
    pub tp_residual: f64,
}

impl ChannelCertificate {
    pub fn from_choi(choi: &CMatrix, dim: usize) -> Result<Self> {
        let eig = HermitianEigen::new(choi);
        let min_choi_eigenvalue = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
        let reduced = partial_trace_b(choi, dim, dim)?;
        let tp_residual =
            crate::linalg::max_abs_diff(&reduced, &CMatrix::identity(dim, dim));
        Ok(Self { min_choi_eigenvalue, tp_residual })
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.min_choi_eigenvalue >= -tol && self.tp_residual <= tol
    }
}

/// Channel `ρ ↦ Tr_B[U (ρ ⊗ |0⟩⟨0|_B) U†]` defined by a unitary on the
/// system register (dimension `dim_a`, most significant) and ancilla register
/// (`dim_b`).
#[derive(Debug, Clone, PartialEq)]
pub struct StinespringChannel {
    u: CMatrix,
    dim_a: usize,
    dim_b: usize,
}

impl StinespringChannel {
    pub const UNITARY_TOL: f64 = 1e-10;

    pub fn new(u: CMatrix, dim_a: usize, dim_b: usize) -> Result<Self> {
        let n = dim_a * dim_b;
        if u.nrows() != n || u.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "unitary must be {n}x{n} for dim_a={dim_a}, dim_b={dim_b}"
            )));
        }
        if dim_b > dim_a * dim_a {
            return Err(Error::InvalidArgument(format!(
                "ancilla dimension {dim_b} exceeds dim_a² = {}",
                dim_a * dim_a
            )));
        }
        if !u.is_unitary(Self::UNITARY_TOL) {
            return Err(Error::InvalidArgument("dilation matrix is not unitary".into()));
        }
        Ok(Self { u, dim_a, dim_b })
    }

    pub fn identity(dim_a: usize, dim_b: usize) -> Self {
        let n = dim_a * dim_b;
        Self { u: CMatrix::identity(n, n), dim_a, dim_b }
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.u
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    /// Columns of `U` whose ancilla index is zero: `U (I_A ⊗ |0⟩_B)`.
    pub fn isometry(&self) -> CMatrix {
        CMatrix::from_fn(self.u.nrows(), self.dim_a, |row, i| self.u[(row, i * self.dim_b)])
    }

    /// Kraus operators `K_b = (I ⊗ ⟨b|) U (I ⊗ |0⟩)`, one per ancilla basis state.
    pub fn kraus(&self) -> Vec<CMatrix> {
        let v = self.isometry();
        (0..self.dim_b)
            .map(|b| CMatrix::from_fn(self.dim_a, self.dim_a, |i, j| v[(i * self.dim_b + b, j)]))
            .collect()
    }

    pub fn superoperator(&self) -> Superoperator {
        Superoperator::from_kraus(&self.kraus())
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim_a {
            return Err(Error::DimensionMismatch(format!(
                "state has dimension {}, channel acts on {}",
                rho.dim(),
                self.dim_a
            )));
        }
        Ok(())
    }

    /// One application with a fresh ancilla register in `|0…0⟩`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self.check_dim(rho)?;
        let mut out = CMatrix::zeros(self.dim_a, self.dim_a);
        for k in self.kraus() {
            out += &k * rho.matrix() * k.adjoint();
        }
        Ok(DensityMatrix::from_matrix_unchecked((&out + out.adjoint()) * C64::new(0.5, 0.0)))
    }

    /// Dual map `O ↦ Tr_B[U† (O ⊗ I) U (I ⊗ |0⟩⟨0|)] = Σ K_b† O K_b` acting on
    /// observables.
    pub fn pull_back(&self, observable: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim_a, self.dim_a);
        for k in self.kraus() {
            out += k.adjoint() * observable * &k;
        }
        out
    }

    /// States at `Δt, 2Δt, …, nΔt` by re-applying the channel, plus the number of
    /// fresh ancilla registers consumed.
    pub fn extrapolate(&self, rho0: &DensityMatrix, n: usize) -> Result<Extrapolation> {
        if n == 0 {
            return Err(Error::InvalidArgument("extrapolation needs n ≥ 1".into()));
        }
        self.check_dim(rho0)?;
        let sup = self.superoperator();
        let mut states = Vec::with_capacity(n);
        let mut current = rho0.clone();
        for _ in 0..n {
            current = sup.apply(&current);
            states.push(current.clone());
        }
        Ok(Extrapolation { states, ancilla_registers_used: n })
    }

    pub fn choi(&self) -> CMatrix {
        self.superoperator().choi()
    }

    pub fn certificate(&self) -> ChannelCertificate {
        ChannelCertificate::from_choi(&self.choi(), self.dim_a)
            .expect("choi matrix has consistent dimensions")
    }
}

#[derive(Debug, Clone)]
pub struct Extrapolation {
    pub states: Vec<DensityMatrix>,
    /// Ancilla registers entangled with the system and moved to storage; one
    /// per application.
    pub ancilla_registers_used: usize,
}

/// Reference evaluation of `Tr_B[U (ρ ⊗ |0⟩⟨0|) U†]` on the full register.
pub fn apply_dense(u: &CMatrix, rho: &CMatrix, dim_a: usize, dim_b: usize) -> Result<CMatrix> {
    let anc = ket_bra(dim_b, 0, 0);
    let joint = kron(rho, &anc);
    partial_trace_b(&(u * joint * u.adjoint()), dim_a, dim_b)
}

/// Maximally entangled projector `Σ_ij |ii⟩⟨jj|`, the Choi matrix of the identity.
pub fn unnormalized_bell_projector(dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim * dim, dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i * dim + i, j * dim + j)] = ONE;
        }
    }
    m
}

/// `Tr[m]` of the input factor of a Choi matrix.
pub fn choi_output_marginal(choi: &CMatrix, dim: usize) -> Result<CMatrix> {
    partial_trace_a(choi, dim, dim)
}
