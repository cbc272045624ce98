//! Neutral-atom register model: always-on Rydberg interactions (drift) and the
//! laser control operators that drive individual atoms.
//!
//! Units: positions in µm, interaction coefficients in kHz·µmⁿ, so energies
//! come out in kHz and pair with times in ms. No factor 2π is inserted
//! anywhere; `exp(−i τ H)` takes `τ·H` directly as a phase in radians.

use crate::error::{Error, Result};
use crate::linalg::{embed_single, ket_bra, pauli_i, pauli_x, pauli_y, pauli_z, CMatrix, C64, I};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionKind {
    /// `C₆/R⁶ |11⟩⟨11|` per pair.
    VanDerWaals,
    /// `C₃/R³ (|01⟩⟨10| + h.c.)` per pair.
    Dipole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomGeometry {
    pub positions: Vec<[f64; 3]>,
    /// `C₆` or `C₃` depending on `kind`.
    pub coefficient: f64,
    pub kind: InteractionKind,
}

impl AtomGeometry {
    pub fn new(positions: Vec<[f64; 3]>, coefficient: f64, kind: InteractionKind) -> Result<Self> {
        let geom = Self { positions, coefficient, kind };
        for i in 0..geom.len() {
            for j in (i + 1)..geom.len() {
                if geom.distance(i, j) <= 0.0 {
                    return Err(Error::InvalidArgument(format!("atoms {i} and {j} share a position")));
                }
            }
        }
        Ok(geom)
    }

    /// Atoms along the x axis.
    pub fn line(n: usize, spacing: f64, coefficient: f64, kind: InteractionKind) -> Self {
        let positions = (0..n).map(|i| [i as f64 * spacing, 0.0, 0.0]).collect();
        Self::new(positions, coefficient, kind).expect("distinct positions")
    }

    pub fn equilateral_triangle(side: f64, coefficient: f64, kind: InteractionKind) -> Self {
        let h = side * 3f64.sqrt() / 2.0;
        Self::new(vec![[0.0, 0.0, 0.0], [side, 0.0, 0.0], [side / 2.0, h, 0.0]], coefficient, kind)
            .expect("distinct positions")
    }

    /// Five atoms with nearest-neighbour spacing `spacing`: the two system atoms
    /// on a unit square with two ancillas, a third ancilla capping the system
    /// pair.
    pub fn two_plus_three_cluster(spacing: f64, coefficient: f64, kind: InteractionKind) -> Self {
        let s = spacing;
        let positions = vec![
            [0.0, 0.0, 0.0],
            [s, 0.0, 0.0],
            [0.0, s, 0.0],
            [s, s, 0.0],
            [s / 2.0, -s * 3f64.sqrt() / 2.0, 0.0],
        ];
        Self::new(positions, coefficient, kind).expect("distinct positions")
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    fn power(&self) -> i32 {
        match self.kind {
            InteractionKind::VanDerWaals => 6,
            InteractionKind::Dipole => 3,
        }
    }

    pub fn pair_strength(&self, i: usize, j: usize) -> f64 {
        self.coefficient / self.distance(i, j).powi(self.power())
    }

    /// Characteristic interaction `C / min R^n`.
    pub fn characteristic_interaction(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                best = best.min(self.distance(i, j));
            }
        }
        if best.is_finite() {
            self.coefficient / best.powi(self.power())
        } else {
            0.0
        }
    }
}

/// Drift Hamiltonian of the `m`-atom register, each unordered pair counted once.
pub fn drift_hamiltonian(geom: &AtomGeometry, m: usize) -> Result<CMatrix> {
    if geom.len() != m {
        return Err(Error::DimensionMismatch(format!("geometry has {} atoms, register has {m}", geom.len())));
    }
    let dim = 1usize << m;
    let mut h = CMatrix::zeros(dim, dim);
    for i in 0..m {
        for j in (i + 1)..m {
            let r = geom.distance(i, j);
            if r <= 0.0 {
                return Err(Error::InvalidArgument(format!("atoms {i} and {j} share a position")));
            }
            let v = geom.pair_strength(i, j);
            match geom.kind {
                InteractionKind::VanDerWaals => {
                    for basis in 0..dim {
                        if bit(basis, i, m) && bit(basis, j, m) {
                            h[(basis, basis)] += C64::new(v, 0.0);
                        }
                    }
                }
                InteractionKind::Dipole => {
                    // |01⟩⟨10| + h.c. on (i, j)
                    for basis in 0..dim {
                        if !bit(basis, i, m) && bit(basis, j, m) {
                            let flipped = basis ^ mask(i, m) ^ mask(j, m);
                            h[(basis, flipped)] += C64::new(v, 0.0);
                            h[(flipped, basis)] += C64::new(v, 0.0);
                        }
                    }
                }
            }
        }
    }
    Ok(h)
}

fn mask(qubit: usize, m: usize) -> usize {
    1 << (m - 1 - qubit)
}

fn bit(basis: usize, qubit: usize, m: usize) -> bool {
    basis & mask(qubit, m) != 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Coupling,
    Detuning,
    /// Coupling and detuning on every atom.
    Rotational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlLabel {
    Coupling(usize),
    Detuning(usize),
}

/// Control operator `Q_r` on the full register together with its expansion
/// `Q_r = Σ_k c_k V_k` into unitaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOperator {
    pub q: CMatrix,
    pub unitary_parts: Vec<(C64, CMatrix)>,
    pub label: ControlLabel,
}

impl ControlOperator {
    /// `Q + Q†`, the Hermitian generator multiplying a real control value.
    pub fn generator(&self) -> CMatrix {
        &self.q + self.q.adjoint()
    }

    pub fn qubit(&self) -> usize {
        match self.label {
            ControlLabel::Coupling(q) | ControlLabel::Detuning(q) => q,
        }
    }

    /// Number of unitaries `K` in the expansion.
    pub fn k(&self) -> usize {
        self.unitary_parts.len()
    }
}

fn coupling(qubit: usize, m: usize) -> ControlOperator {
    let half = C64::new(0.5, 0.0);
    ControlOperator {
        q: embed_single(&ket_bra(2, 0, 1), qubit, m),
        unitary_parts: vec![
            (half, embed_single(&pauli_x(), qubit, m)),
            (half * I, embed_single(&pauli_y(), qubit, m)),
        ],
        label: ControlLabel::Coupling(qubit),
    }
}

fn detuning(qubit: usize, m: usize) -> ControlOperator {
    let half = C64::new(0.5, 0.0);
    ControlOperator {
        q: embed_single(&ket_bra(2, 1, 1), qubit, m),
        unitary_parts: vec![
            (half, embed_single(&pauli_i(), qubit, m)),
            (-half, embed_single(&pauli_z(), qubit, m)),
        ],
        label: ControlLabel::Detuning(qubit),
    }
}

/// Control operators for an `m`-atom register. Rotational control lists all
/// coupling operators first, then all detuning operators.
pub fn control_operators(m: usize, mode: ControlMode) -> Vec<ControlOperator> {
    match mode {
        ControlMode::Coupling => (0..m).map(|q| coupling(q, m)).collect(),
        ControlMode::Detuning => (0..m).map(|q| detuning(q, m)).collect(),
        ControlMode::Rotational => (0..m).map(|q| coupling(q, m)).chain((0..m).map(|q| detuning(q, m))).collect(),
    }
}

/// Restricts operators to the given atoms of a larger register.
pub fn control_operators_on(qubits: &[usize], m: usize, mode: ControlMode) -> Vec<ControlOperator> {
    let build = |f: fn(usize, usize) -> ControlOperator| qubits.iter().map(move |&q| f(q, m));
    match mode {
        ControlMode::Coupling => build(coupling).collect(),
        ControlMode::Detuning => build(detuning).collect(),
        ControlMode::Rotational => build(coupling).chain(build(detuning)).collect(),
    }
}

/// `H_c[z] = Σ_r z_r (Q_r + Q_r†)` for real controls. An effective detuning Δ
/// in the `−Δ|1⟩⟨1|` convention corresponds to `z = −Δ/2`.
pub fn control_hamiltonian(ops: &[ControlOperator], z: &[f64]) -> Result<CMatrix> {
    if ops.len() != z.len() {
        return Err(Error::DimensionMismatch(format!("{} control values for {} operators", z.len(), ops.len())));
    }
    let dim = ops.first().map_or(1, |o| o.q.nrows());
    let mut h = CMatrix::zeros(dim, dim);
    for (op, &zr) in ops.iter().zip(z) {
        h += op.generator() * C64::new(zr, 0.0);
    }
    Ok(h)
}

/// `Σ_k c_k V_k`, which must equal `Q_r`.
pub fn reconstruct(op: &ControlOperator) -> CMatrix {
    let dim = op.q.nrows();
    op.unitary_parts.iter().fold(CMatrix::zeros(dim, dim), |acc, (c, v)| acc + v * *c)
}
