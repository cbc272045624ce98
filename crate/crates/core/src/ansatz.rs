//! Parametrized Stinespring unitaries: a hardware-efficient gate ansatz, a
//! piecewise-constant pulse ansatz, and the Hamiltonian/decoherence split.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hardware::ControlOperator;
use crate::linalg::{kron, pauli_x, pauli_z, unitary_evolution, CMatrix, HermitianEigen, MatrixProps, C64};

/// `exp(−i τ_V H_V)`: the register idles under its drift.
pub fn entangling_gate(h_v: &CMatrix, tau_v: f64) -> Result<CMatrix> {
    if !h_v.is_hermitian(1e-12) {
        return Err(Error::NotHermitian("drift Hamiltonian"));
    }
    Ok(unitary_evolution(h_v, tau_v))
}

/// `Rz(c) Rx(b) Rz(a)` with `R_P(φ) = exp(−iφP/2)`.
pub fn zxz_rotation(a: f64, b: f64, c: f64) -> CMatrix {
    let rz = |phi: f64| unitary_evolution(&pauli_z(), phi / 2.0);
    let rx = unitary_evolution(&pauli_x(), b / 2.0);
    rz(c) * rx * rz(a)
}

/// Layers of per-qubit ZXZ rotations, each followed by a fixed entangler.
#[derive(Debug, Clone, PartialEq)]
pub struct GateAnsatz {
    pub n_qubits: usize,
    pub depth: usize,
    /// `[block][qubit][angle]`, flattened.
    pub theta: Vec<f64>,
    /// Duration of one layer of single-qubit gates (ms).
    pub tau_g: f64,
    /// Duration of one entangler (ms).
    pub tau_v: f64,
    pub u_ent: CMatrix,
}

impl GateAnsatz {
    pub fn new(n_qubits: usize, depth: usize, u_ent: CMatrix, tau_g: f64, tau_v: f64) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if u_ent.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch(format!("entangler must be {dim}x{dim}")));
        }
        if !u_ent.is_unitary(1e-12) {
            return Err(Error::InvalidArgument("entangler is not unitary".into()));
        }
        Ok(Self { n_qubits, depth, theta: vec![0.0; 3 * depth * n_qubits], tau_g, tau_v, u_ent })
    }

    /// Angles drawn uniformly from `(−spread, spread)`.
    pub fn randomize(&mut self, spread: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &mut self.theta {
            *t = rng.random_range(-spread..spread);
        }
    }

    pub fn n_params(&self) -> usize {
        3 * self.depth * self.n_qubits
    }

    /// `d (τ_g + τ_V)`.
    pub fn total_time(&self) -> f64 {
        self.depth as f64 * (self.tau_g + self.tau_v)
    }

    pub fn unitary(&self) -> CMatrix {
        self.unitary_with(&self.theta)
    }

    pub fn unitary_with(&self, theta: &[f64]) -> CMatrix {
        assert_eq!(theta.len(), self.n_params(), "parameter vector has wrong length");
        let dim = 1usize << self.n_qubits;
        let mut u = CMatrix::identity(dim, dim);
        for block in theta.chunks(3 * self.n_qubits) {
            let layer = block
                .chunks(3)
                .map(|a| zxz_rotation(a[0], a[1], a[2]))
                .reduce(|acc, g| kron(&acc, &g))
                .expect("at least one qubit");
            u = &self.u_ent * layer * u;
        }
        u
    }
}

/// Drift plus controllable terms of the register.
#[derive(Debug, Clone)]
pub struct PulseControls {
    drift: CMatrix,
    ops: Vec<ControlOperator>,
    generators: Vec<CMatrix>,
}

impl PulseControls {
    pub fn new(drift: CMatrix, ops: Vec<ControlOperator>) -> Result<Self> {
        if !drift.is_hermitian(1e-12) {
            return Err(Error::NotHermitian("drift Hamiltonian"));
        }
        if let Some(bad) = ops.iter().position(|o| o.q.shape() != drift.shape()) {
            return Err(Error::DimensionMismatch(format!("control operator {bad} does not match the drift")));
        }
        let generators = ops.iter().map(ControlOperator::generator).collect();
        Ok(Self { drift, ops, generators })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    pub fn ops(&self) -> &[ControlOperator] {
        &self.ops
    }

    /// `Q_r + Q_r†` per channel.
    pub fn generators(&self) -> &[CMatrix] {
        &self.generators
    }

    pub fn n_channels(&self) -> usize {
        self.ops.len()
    }

    /// `H_V + Σ_r z_r (Q_r + Q_r†)`.
    pub fn hamiltonian(&self, z: impl IntoIterator<Item = f64>) -> CMatrix {
        let mut h = self.drift.clone();
        for (g, zr) in self.generators.iter().zip(z) {
            if zr != 0.0 {
                h += g * C64::new(zr, 0.0);
            }
        }
        h
    }
}

/// Equidistant piecewise-constant real controls on `[0, τ_f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pub tau_f: f64,
    /// `R × N`: channel `r` holds `values[(r, j)]` on segment `j`.
    pub values: DMatrix<f64>,
    /// Weight of the pulse-energy penalty.
    pub lambda: f64,
}

impl PulseSchedule {
    /// All-zero pulses.
    pub fn zeros(n_channels: usize, n_segments: usize, tau_f: f64, lambda: f64) -> Self {
        Self { tau_f, values: DMatrix::zeros(n_channels, n_segments), lambda }
    }

    /// Values drawn uniformly from `(−spread, spread)`; zero spread leaves the
    /// schedule untouched.
    pub fn randomize(&mut self, spread: f64, seed: u64) {
        if spread > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.values.iter_mut().for_each(|z| *z = rng.random_range(-spread..spread));
        }
    }

    pub fn n_channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_segments(&self) -> usize {
        self.values.ncols()
    }

    pub fn segment_width(&self) -> f64 {
        self.tau_f / self.n_segments() as f64
    }

    /// Flattened channel-major parameter vector.
    pub fn params(&self) -> Vec<f64> {
        self.values.transpose().iter().copied().collect()
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        let values = DMatrix::from_row_slice(self.n_channels(), self.n_segments(), params);
        Self { values, ..self.clone() }
    }

    /// `(λ/2) Σ_r ∫ z_r² dτ`.
    pub fn energy_penalty(&self) -> f64 {
        0.5 * self.lambda * self.segment_width() * self.values.iter().map(|z| z * z).sum::<f64>()
    }

    fn check(&self, controls: &PulseControls) -> Result<()> {
        if self.n_channels() != controls.n_channels() {
            return Err(Error::DimensionMismatch(format!(
                "schedule has {} channels, controls have {}",
                self.n_channels(),
                controls.n_channels()
            )));
        }
        Ok(())
    }
}

/// Per-segment Hamiltonian eigensystems and propagators of a schedule.
#[derive(Debug, Clone)]
pub struct SegmentPropagators {
    pub width: f64,
    pub eigen: Vec<HermitianEigen>,
    /// `S_j = exp(−i Δτ H_j)`.
    pub steps: Vec<CMatrix>,
}

impl SegmentPropagators {
    pub fn new(s: &PulseSchedule, controls: &PulseControls) -> Result<Self> {
        s.check(controls)?;
        let width = s.segment_width();
        let eigen: Vec<HermitianEigen> = (0..s.n_segments())
            .map(|j| HermitianEigen::new(&controls.hamiltonian(s.values.column(j).iter().copied())))
            .collect();
        let steps = eigen.iter().map(|e| e.map(|l| C64::from_polar(1.0, -l * width))).collect();
        Ok(Self { width, eigen, steps })
    }

    /// `P_j = S_j ⋯ S_1` for `j = 0..=N` (`P_0 = I`).
    pub fn prefix_products(&self) -> Vec<CMatrix> {
        let dim = self.steps.first().map_or(1, |s| s.nrows());
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(CMatrix::identity(dim, dim));
        for s in &self.steps {
            let next = s * out.last().expect("non-empty");
            out.push(next);
        }
        out
    }
}

/// Solution of `i ∂_τ U = (H_V + H_c[z(τ)]) U`, `U(0) = I`, at the end of
/// segment `upto` (all segments when `None`).
pub fn pulse_propagate(s: &PulseSchedule, controls: &PulseControls, upto: Option<usize>) -> Result<CMatrix> {
    s.check(controls)?;
    let end = upto.unwrap_or(s.n_segments());
    if end > s.n_segments() {
        return Err(Error::InvalidArgument(format!("segment {end} beyond {}", s.n_segments())));
    }
    let width = s.segment_width();
    let mut u = CMatrix::identity(controls.dim(), controls.dim());
    for j in 0..end {
        let h = controls.hamiltonian(s.values.column(j).iter().copied());
        u = unitary_evolution(&h, width) * u;
    }
    Ok(u)
}

/// Propagator over segments `from..to` (0-based, half-open).
pub fn pulse_propagate_range(s: &PulseSchedule, controls: &PulseControls, from: usize, to: usize) -> Result<CMatrix> {
    s.check(controls)?;
    let width = s.segment_width();
    let mut u = CMatrix::identity(controls.dim(), controls.dim());
    for j in from..to.min(s.n_segments()) {
        let h = controls.hamiltonian(s.values.column(j).iter().copied());
        u = unitary_evolution(&h, width) * u;
    }
    Ok(u)
}

/// `U_dec · (U_H ⊗ I_B)`.
pub fn split_compose(u_h: &CMatrix, u_dec: &CMatrix) -> Result<CMatrix> {
    let (da, full) = (u_h.nrows(), u_dec.nrows());
    if !u_h.is_square() || !u_dec.is_square() || da == 0 || full % da != 0 {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose a {da}-dimensional Hamiltonian part into a {full}-dimensional dilation"
        )));
    }
    let db = full / da;
    Ok(u_dec * kron(u_h, &CMatrix::identity(db, db)))
}
