//! Exact target evolution generated by a time-independent Lindblad equation,
//! closed-form single-qubit references, and training-data generation.

use crate::channel::Superoperator;
use crate::error::{Error, Result};
use crate::linalg::{
    embed_single, expm, ket_bra, kron, pauli_x, pauli_z, trace_of_product, vectorize, CMatrix,
    DensityMatrix, MatrixProps, PureState, C64, ONE,
};
use crate::training::{TrainingPair, TrainingSet};

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub op: CMatrix,
    pub rate: f64,
}

/// Hamiltonian plus weighted jump operators, `ħ = 1`, rates in `1/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    h: CMatrix,
    jumps: Vec<JumpOperator>,
}

impl LindbladModel {
    pub fn new(h: CMatrix, jumps: Vec<JumpOperator>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::DimensionMismatch("Hamiltonian must be square".into()));
        }
        if !h.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::NotHermitian("Hamiltonian"));
        }
        for (k, j) in jumps.iter().enumerate() {
            if j.op.shape() != h.shape() {
                return Err(Error::DimensionMismatch(format!("jump operator {k} has wrong shape")));
            }
            if !(j.rate >= 0.0 && j.rate.is_finite()) {
                return Err(Error::InvalidArgument(format!("jump rate {k} must be ≥ 0, got {}", j.rate)));
            }
        }
        Ok(Self { h, jumps })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h
    }

    pub fn jumps(&self) -> &[JumpOperator] {
        &self.jumps
    }

    /// Same Hamiltonian, no dissipation.
    pub fn hamiltonian_only(&self) -> Self {
        Self { h: self.h.clone(), jumps: Vec::new() }
    }
}

/// Generator `L` with `vec(∂ρ/∂t) = L vec(ρ)` under column stacking.
pub fn build_liouvillian(model: &LindbladModel) -> Result<CMatrix> {
    let d = model.dim();
    let h = model.hamiltonian();
    if !h.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::NotHermitian("Hamiltonian"));
    }
    let id = CMatrix::identity(d, d);
    let mut l = (kron(&id, h) - kron(&h.transpose(), &id)) * C64::new(0.0, -1.0);
    for JumpOperator { op, rate } in model.jumps() {
        let g = C64::new(*rate, 0.0);
        let gg = op.adjoint() * op;
        l += (kron(&op.conjugate(), op)
            - kron(&id, &gg) * C64::new(0.5, 0.0)
            - kron(&gg.transpose(), &id) * C64::new(0.5, 0.0))
            * g;
    }
    Ok(l)
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be finite and ≥ 0, got {t}")));
    }
    Ok(())
}

/// The exact channel `Φ_dt = exp(L dt)`.
#[derive(Debug, Clone)]
pub struct TargetChannel {
    model: LindbladModel,
    dt: f64,
    superoperator: Superoperator,
}

impl TargetChannel {
    pub fn new(model: LindbladModel, dt: f64) -> Result<Self> {
        check_time(dt)?;
        let l = build_liouvillian(&model)?;
        let superoperator = Superoperator::new(model.dim(), expm(&(l * C64::new(dt, 0.0)))?)?;
        Ok(Self { model, dt, superoperator })
    }

    pub fn model(&self) -> &LindbladModel {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn superoperator(&self) -> &Superoperator {
        &self.superoperator
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        self.superoperator.apply(rho)
    }

    /// `ρ(kΔt)` for `k = 1..=n`.
    pub fn evolve(&self, rho0: &DensityMatrix, n: usize) -> Vec<DensityMatrix> {
        let mut out = Vec::with_capacity(n);
        let mut current = rho0.clone();
        for _ in 0..n {
            current = self.apply(&current);
            out.push(current.clone());
        }
        out
    }
}

/// `ρ(t) = exp(L t) ρ0`.
pub fn propagate(model: &LindbladModel, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    check_time(t)?;
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} vs model dimension {}",
            rho0.dim(),
            model.dim()
        )));
    }
    let l = build_liouvillian(model)?;
    let prop = expm(&(l * C64::new(t, 0.0)))?;
    let out = crate::linalg::unvectorize(&(prop * vectorize(rho0.matrix())), model.dim());
    Ok(DensityMatrix::from_matrix_unchecked((&out + out.adjoint()) * C64::new(0.5, 0.0)))
}

/// `sinh(z)/z`, continuous at zero.
fn sinhc(z: C64) -> C64 {
    if z.norm() < 1e-6 {
        ONE + z * z / 6.0
    } else {
        z.sinh() / z
    }
}

/// Closed-form state of a qubit with `H = (Ω/2) X` decaying through `|0⟩⟨1|`
/// at rate `γ`.
///
/// The driven solution oscillates with `F = √(γ² − 16Ω²)`, which becomes
/// imaginary in the underdamped regime; complex arithmetic covers both
/// branches. Amplitude products are expanded so the expressions stay finite
/// when the initial state sits on the stationary population.
pub fn analytic_single_qubit(rho0: &DensityMatrix, gamma: f64, omega: f64, t: f64) -> Result<DensityMatrix> {
    if rho0.dim() != 2 {
        return Err(Error::DimensionMismatch("single-qubit state required".into()));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidArgument(format!("decay rate must be ≥ 0, got {gamma}")));
    }
    check_time(t)?;
    let m = rho0.matrix();
    let p00 = m[(0, 0)].re;
    let p01 = m[(0, 1)];

    if omega == 0.0 {
        let decay = (-gamma * t).exp();
        let coherence = (-0.5 * gamma * t).exp();
        let p11 = 1.0 - p00;
        let r00 = C64::new(p00 + p11 * (1.0 - decay), 0.0);
        let r01 = p01 * coherence;
        return Ok(DensityMatrix::from_matrix_unchecked(CMatrix::from_row_slice(
            2,
            2,
            &[r00, r01, r01.conj(), C64::new(p11 * decay, 0.0)],
        )));
    }

    let (g, w) = (gamma, omega);
    let norm = g * g + 2.0 * w * w;
    let f = C64::new(g * g - 16.0 * w * w, 0.0).sqrt();
    let quarter = f * (0.25 * t);
    let cosh = quarter.cosh();
    // sinh(tF/4)/F
    let sinh_over_f = sinhc(quarter) * (0.25 * t);
    let envelope = (-0.75 * g * t).exp();

    // population: B + (ρ00 − B) e^{-3γt/4}(cosh + C/F sinh)
    let b = (g * g + w * w) / norm;
    let amp = p00 - b;
    // (ρ00 − B)·C, fixed by the initial slope dρ00/dt = γρ11 − Ω Im ρ01
    let amp_c = 3.0 * g * amp + 4.0 * (g * (1.0 - p00) - w * p01.im);
    let r00 = b + envelope * (cosh * amp + sinh_over_f * amp_c).re;

    // coherence: B' + Re(ρ01) e^{-γt/2} + (i Im ρ01 − B') e^{-3γt/4}(cosh + C'/F sinh)
    let b_prime = C64::new(0.0, g * w / norm);
    let amp_prime = C64::new(0.0, p01.im) - b_prime;
    let d = (1.0 - p00) * g * g + (1.0 - 2.0 * p00) * w * w;
    let amp_c_prime = amp_prime * g - C64::new(0.0, 4.0 * w * d / norm);
    let r01 = b_prime
        + C64::new(p01.re * (-0.5 * g * t).exp(), 0.0)
        + (cosh * amp_prime + sinh_over_f * amp_c_prime) * envelope;

    Ok(DensityMatrix::from_matrix_unchecked(CMatrix::from_row_slice(
        2,
        2,
        &[C64::new(r00, 0.0), r01, r01.conj(), C64::new(1.0 - r00, 0.0)],
    )))
}

/// Two-qubit (system ⊗ ancilla) unitary whose induced channel is undriven
/// amplitude damping `exp(−γt)`; a partial SWAP between `|10⟩` and `|01⟩`.
pub fn exact_dilation_single_decay(gamma: f64, t: f64) -> CMatrix {
    let c = (-0.5 * gamma * t).exp();
    let s = (1.0 - (-gamma * t).exp()).max(0.0).sqrt();
    let mut u = CMatrix::identity(4, 4);
    u[(1, 1)] = C64::new(c, 0.0);
    u[(1, 2)] = C64::new(-s, 0.0);
    u[(2, 1)] = C64::new(s, 0.0);
    u[(2, 2)] = C64::new(c, 0.0);
    u
}

/// Exact traces `Tr[O ρ_n]` for every (state, observable) pair and every step
/// `n = 1..=n_steps` of `Φ_dt`.
pub fn make_training_set(
    model: &LindbladModel,
    initial_states: &[DensityMatrix],
    observables: &[CMatrix],
    n_steps: usize,
    dt: f64,
) -> Result<TrainingSet> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be ≥ 1".into()));
    }
    for (k, o) in observables.iter().enumerate() {
        if o.shape() != (model.dim(), model.dim()) {
            return Err(Error::DimensionMismatch(format!("observable {k} has wrong shape")));
        }
        if !o.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::NotHermitian("observable"));
        }
    }
    let target = TargetChannel::new(model.clone(), dt)?;
    let mut pairs = Vec::with_capacity(initial_states.len() * observables.len());
    for (s, rho0) in initial_states.iter().enumerate() {
        if rho0.dim() != model.dim() {
            return Err(Error::DimensionMismatch(format!("initial state {s} has wrong dimension")));
        }
        let trajectory = target.evolve(rho0, n_steps);
        for o in observables {
            let targets = trajectory.iter().map(|rho| trace_of_product(o, rho.matrix()).re).collect();
            pairs.push(TrainingPair { state: s, observable: o.clone(), targets });
        }
    }
    TrainingSet::new(initial_states.to_vec(), pairs, dt)
}

/// Computational basis states followed by `(|i⟩ + |j⟩)/√2` for all `i < j`.
pub fn basis_and_superposition_states(n_qubits: usize) -> Vec<DensityMatrix> {
    let dim = 1usize << n_qubits;
    let mut out: Vec<DensityMatrix> = (0..dim).map(|i| DensityMatrix::basis(dim, i)).collect();
    let s = C64::new(0.5f64.sqrt(), 0.0);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut v = crate::linalg::CVector::zeros(dim);
            v[i] = s;
            v[j] = s;
            out.push(PureState::new(v).expect("normalized").density());
        }
    }
    out
}

/// `count` Haar-random pure states drawn from one seeded stream.
pub fn haar_states(n_qubits: usize, count: usize, seed: u64) -> Vec<DensityMatrix> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| crate::linalg::haar_random_state_with(n_qubits, &mut rng).density()).collect()
}

/// Lowering operator `|0⟩⟨1|`.
pub fn sigma_minus() -> CMatrix {
    ket_bra(2, 0, 1)
}

/// Target channels used by the shipped experiments.
pub mod presets {
    use super::*;

    /// Qubit decaying `|1⟩ → |0⟩` at `gamma` under Rabi drive `(omega/2) X`.
    pub fn single_qubit_decay(gamma: f64, omega: f64) -> LindbladModel {
        LindbladModel::new(
            pauli_x() * C64::new(omega / 2.0, 0.0),
            vec![JumpOperator { op: sigma_minus(), rate: gamma }],
        )
        .expect("valid preset")
    }

    /// Decay `|+⟩ → |−⟩`: the jump operator is `|−⟩⟨+|`.
    pub fn plus_minus_decay(gamma: f64) -> LindbladModel {
        let s = 0.5f64.sqrt();
        let plus = crate::linalg::CVector::from_vec(vec![C64::new(s, 0.0), C64::new(s, 0.0)]);
        let minus = crate::linalg::CVector::from_vec(vec![C64::new(s, 0.0), C64::new(-s, 0.0)]);
        LindbladModel::new(
            CMatrix::zeros(2, 2),
            vec![JumpOperator { op: &minus * plus.adjoint(), rate: gamma }],
        )
        .expect("valid preset")
    }

    /// Two qubits with independent decay and an optional `V |11⟩⟨11|` coupling.
    pub fn two_qubit_decay(gamma0: f64, gamma1: f64, coupling: f64) -> LindbladModel {
        driven_two_qubit_decay([gamma0, gamma1], [0.0, 0.0], coupling)
    }

    /// Two decaying qubits with individual Rabi drives and `V |11⟩⟨11|` coupling.
    pub fn driven_two_qubit_decay(gammas: [f64; 2], omegas: [f64; 2], coupling: f64) -> LindbladModel {
        let mut h = ket_bra(4, 3, 3) * C64::new(coupling, 0.0);
        let mut jumps = Vec::new();
        for q in 0..2 {
            h += embed_single(&pauli_x(), q, 2) * C64::new(omegas[q] / 2.0, 0.0);
            jumps.push(JumpOperator { op: embed_single(&sigma_minus(), q, 2), rate: gammas[q] });
        }
        LindbladModel::new(h, jumps).expect("valid preset")
    }

    /// Computational-basis index of each level of the four-level cascade:
    /// `|0⟩→|00⟩, |1⟩→|01⟩, |2⟩→|11⟩, |3⟩→|10⟩`, so each decay flips one qubit.
    pub const FOUR_LEVEL_MAP: [usize; 4] = [0b00, 0b01, 0b11, 0b10];

    /// Cascade `3 → 2 → 1 → 0` with rates `[γ_{3→2}, γ_{2→1}, γ_{1→0}]`.
    pub fn four_level_cascade(rates: [f64; 3]) -> LindbladModel {
        let m = FOUR_LEVEL_MAP;
        let jumps = vec![
            JumpOperator { op: ket_bra(4, m[2], m[3]), rate: rates[0] },
            JumpOperator { op: ket_bra(4, m[1], m[2]), rate: rates[1] },
            JumpOperator { op: ket_bra(4, m[0], m[1]), rate: rates[2] },
        ];
        LindbladModel::new(CMatrix::zeros(4, 4), jumps).expect("valid preset")
    }

    /// Open transverse-field Ising chain `−B Σ X_i + J Σ Z_i Z_{i+1}` with
    /// per-site decay.
    pub fn tfim(field: f64, coupling: f64, gammas: &[f64]) -> LindbladModel {
        let n = gammas.len();
        let dim = 1 << n;
        let mut h = CMatrix::zeros(dim, dim);
        for i in 0..n {
            h -= embed_single(&pauli_x(), i, n) * C64::new(field, 0.0);
            if i + 1 < n {
                h += embed_single(&pauli_z(), i, n) * embed_single(&pauli_z(), i + 1, n) * C64::new(coupling, 0.0);
            }
        }
        let jumps = gammas
            .iter()
            .enumerate()
            .map(|(i, &rate)| JumpOperator { op: embed_single(&sigma_minus(), i, n), rate })
            .collect();
        LindbladModel::new(h, jumps).expect("valid preset")
    }

    pub fn zero(dim: usize) -> LindbladModel {
        LindbladModel::new(CMatrix::zeros(dim, dim), Vec::new()).expect("valid preset")
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;
    use crate::linalg::ZERO;
    use crate::channel::{apply_dense, ChannelCertificate};
    use crate::linalg::{haar_random_state_with, max_abs_diff, pauli_i};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut impl Rng, qubits: usize) -> DensityMatrix {
        let p: f64 = rng.random_range(0.0..1.0);
        let a = haar_random_state_with(qubits, rng).density().into_matrix();
        let b = haar_random_state_with(qubits, rng).density().into_matrix();
        DensityMatrix::from_matrix_unchecked(a * C64::new(p, 0.0) + b * C64::new(1.0 - p, 0.0))
    }

    fn random_model(rng: &mut impl Rng, dim: usize, n_jumps: usize) -> LindbladModel {
        let mut rand_mat = || {
            CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        };
        let a = rand_mat();
        let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        let ops: Vec<CMatrix> = (0..n_jumps).map(|_| rand_mat()).collect();
        let jumps = ops.into_iter().enumerate().map(|(k, op)| JumpOperator { op, rate: 0.1 + 0.2 * k as f64 }).collect();
        LindbladModel::new(h, jumps).unwrap()
    }

    #[test]
    fn empty_model_has_zero_generator() {
        let l = build_liouvillian(&zero(2)).unwrap();
        assert!(l.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn decay_generator_on_excited_state() {
        let gamma = 0.7;
        let model = LindbladModel::new(CMatrix::zeros(2, 2), vec![JumpOperator { op: sigma_minus(), rate: gamma }]).unwrap();
        let l = build_liouvillian(&model).unwrap();
        let out = l * vectorize(&ket_bra(2, 1, 1));
        let want = vectorize(&((ket_bra(2, 0, 0) - ket_bra(2, 1, 1)) * C64::new(gamma, 0.0)));
        assert!((out - want).norm() < 1e-15);
    }

    #[test]
    fn commutator_generator_matches_direct_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 4, 0);
        let l = build_liouvillian(&model).unwrap();
        for _ in 0..5 {
            let rho = random_state(&mut rng, 2).into_matrix();
            let h = model.hamiltonian();
            let want = (h * &rho - &rho * h) * C64::new(0.0, -1.0);
            let got = crate::linalg::unvectorize(&(&l * vectorize(&rho)), 4);
            assert!(max_abs_diff(&got, &want) < 1e-13);
        }
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(matches!(LindbladModel::new(sigma_minus(), vec![]), Err(Error::NotHermitian(_))));
        assert!(LindbladModel::new(pauli_z(), vec![JumpOperator { op: sigma_minus(), rate: -1.0 }]).is_err());
        assert!(propagate(&zero(2), &DensityMatrix::basis(2, 0), -1.0).is_err());
    }

    #[test]
    fn propagate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_state(&mut rng, 1);
        let model = single_qubit_decay(0.5, 0.5);
        assert!(max_abs_diff(propagate(&model, &rho, 0.0).unwrap().matrix(), rho.matrix()) < 1e-15);

        let out = propagate(&single_qubit_decay(0.5, 0.0), &DensityMatrix::basis(2, 1), 1.0).unwrap();
        assert!((out.matrix()[(1, 1)].re - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn undriven_closed_form_coherence_decay() {
        // ρ01(0) = 1/2 decays as exp(−γt/2)
        let plus = DensityMatrix::from_matrix_unchecked(CMatrix::from_element(2, 2, C64::new(0.5, 0.0)));
        for t in [0.0, 0.5, 1.0, 3.0] {
            let out = analytic_single_qubit(&plus, 0.5, 0.0, t).unwrap();
            assert!((out.matrix()[(0, 1)] - C64::new(0.5 * (-0.25 * t).exp(), 0.0)).norm() < 1e-15);
        }
        let rho = DensityMatrix::basis(2, 1);
        assert_eq!(analytic_single_qubit(&rho, 0.0, 0.0, 2.0).unwrap(), rho);
    }

    #[test]
    fn closed_form_agrees_with_liouvillian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (gamma, omega) in [(0.5, 0.5), (0.5, 0.0), (0.2, 0.8), (0.8, 0.1), (0.4, 0.1)] {
            let model = single_qubit_decay(gamma, omega);
            for _ in 0..10 {
                let rho = random_state(&mut rng, 1);
                for t in [0.5, 1.0, 2.0] {
                    let a = analytic_single_qubit(&rho, gamma, omega, t).unwrap();
                    let b = propagate(&model, &rho, t).unwrap();
                    assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-8, "γ={gamma} Ω={omega} t={t}");
                }
            }
        }
    }

    #[test]
    fn closed_form_handles_critical_damping() {
        // γ = 4Ω makes F vanish
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = single_qubit_decay(0.8, 0.2);
        let rho = random_state(&mut rng, 1);
        let a = analytic_single_qubit(&rho, 0.8, 0.2, 1.5).unwrap();
        let b = propagate(&model, &rho, 1.5).unwrap();
        assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-8);
    }

    #[test]
    fn closed_form_at_stationary_population() {
        // ρ00 equal to the stationary value makes the naive constant singular
        let (gamma, omega) = (0.5, 0.5);
        let b = (gamma * gamma + omega * omega) / (gamma * gamma + 2.0 * omega * omega);
        let rho = DensityMatrix::from_matrix_unchecked(CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(b, 0.0), ZERO, ZERO, C64::new(1.0 - b, 0.0)],
        ));
        let a = analytic_single_qubit(&rho, gamma, omega, 1.0).unwrap();
        let n = propagate(&single_qubit_decay(gamma, omega), &rho, 1.0).unwrap();
        assert!(max_abs_diff(a.matrix(), n.matrix()) < 1e-8);
    }

    #[test]
    fn exact_dilation_examples() {
        assert_eq!(exact_dilation_single_decay(0.5, 0.0), CMatrix::identity(4, 4));
        let u = exact_dilation_single_decay(1.0, 60.0);
        assert!(u.is_unitary(1e-12));
        assert!(u[(1, 1)].norm() < 1e-12 && u[(2, 2)].norm() < 1e-12);
        assert!((u[(1, 2)] + ONE).norm() < 1e-12);
        assert!((u[(2, 1)] - ONE).norm() < 1e-12);
    }

    #[test]
    fn exact_dilation_reproduces_undriven_decay() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (gamma, t) in [(0.5, 1.0), (0.3, 0.25), (2.0, 3.0)] {
            let u = exact_dilation_single_decay(gamma, t);
            assert!(u.is_unitary(1e-12));
            for _ in 0..20 {
                let rho = random_state(&mut rng, 1);
                let induced = apply_dense(&u, rho.matrix(), 2, 2).unwrap();
                let want = analytic_single_qubit(&rho, gamma, 0.0, t).unwrap();
                assert!(max_abs_diff(&induced, want.matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn training_set_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let states: Vec<_> = (0..3).map(|_| random_state(&mut rng, 1)).collect();
        let model = single_qubit_decay(0.5, 0.5);
        let ts = make_training_set(&model, &states, &[pauli_i()], 3, 0.4).unwrap();
        assert!(ts.pairs().iter().flat_map(|p| p.targets.iter()).all(|t| (t - 1.0).abs() < 1e-12));

        let ts = make_training_set(&single_qubit_decay(0.5, 0.0), &[DensityMatrix::basis(2, 1)], &[pauli_z()], 2, 1.0)
            .unwrap();
        // ⟨Z⟩ = P(0) − P(1) with P(1) = e^{−γt}
        let want = 1.0 - 2.0 * (-0.5f64).exp();
        assert!((ts.pairs()[0].targets[0] - want).abs() < 1e-13);

        let target = TargetChannel::new(model.clone(), 0.4).unwrap();
        let ts = make_training_set(&model, &states, &[pauli_x()], 2, 0.4).unwrap();
        let twice = target.apply(&target.apply(&states[1]));
        assert!((ts.pairs()[1].targets[1] - trace_of_product(&pauli_x(), twice.matrix()).re).abs() < 1e-13);

        assert!(make_training_set(&model, &states, &[sigma_minus()], 1, 0.4).is_err());
        assert!(make_training_set(&model, &states, &[pauli_z()], 0, 0.4).is_err());
    }

    #[test]
    fn preset_structure() {
        let pm = plus_minus_decay(0.5);
        let plus = basis_and_superposition_states(1)[2].clone();
        // |+⟩ relaxes to |−⟩
        let late = propagate(&pm, &plus, 40.0).unwrap();
        assert!((trace_of_product(&pauli_x(), late.matrix()).re + 1.0).abs() < 1e-8);

        let cascade = four_level_cascade([0.5, 0.4, 0.3]);
        for j in cascade.jumps() {
            // each jump flips exactly one qubit
            let (row, col) = (0..16).map(|k| (k / 4, k % 4)).find(|&(r, c)| j.op[(r, c)] != ZERO).unwrap();
            assert_eq!((row ^ col).count_ones(), 1);
        }

        let ising = tfim(0.5, 0.4, &[0.5, 0.3]);
        assert!(ising.hamiltonian().is_hermitian(1e-15));
        assert_eq!(ising.hamiltonian()[(0, 0)], C64::new(0.4, 0.0));
        assert_eq!(basis_and_superposition_states(2).len(), 10);
    }

    #[test]
    fn closed_form_dilation_composes_over_steps() {
        let (gamma, dt) = (0.5, 0.3);
        let c = crate::channel::StinespringChannel::new(exact_dilation_single_decay(gamma, dt), 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_state(&mut rng, 1);
        let ex = c.extrapolate(&rho, 10).unwrap();
        for (k, s) in ex.states.iter().enumerate() {
            let want = analytic_single_qubit(&rho, gamma, 0.0, dt * (k + 1) as f64).unwrap();
            assert!(max_abs_diff(s.matrix(), want.matrix()) < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn propagation_is_a_semigroup(seed in any::<u64>(), t in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, 4, 2);
            let rho = random_state(&mut rng, 2);
            let direct = propagate(&model, &rho, 2.0 * t).unwrap();
            let half = propagate(&model, &rho, t).unwrap();
            let twice = propagate(&model, &half, t).unwrap();
            prop_assert!(max_abs_diff(direct.matrix(), twice.matrix()) < 1e-10);
        }

        #[test]
        fn propagation_preserves_states(seed in any::<u64>(), t in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, 4, 3);
            let out = propagate(&model, &random_state(&mut rng, 2), t).unwrap();
            prop_assert!(DensityMatrix::new(out.into_matrix(), 1e-9).is_ok());
        }

        #[test]
        fn target_channel_is_cptp(seed in any::<u64>(), dt in 0.01f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, 2, 2);
            let target = TargetChannel::new(model, dt).unwrap();
            let cert = ChannelCertificate::from_choi(&target.superoperator().choi(), 2).unwrap();
            prop_assert!(cert.is_valid(1e-10), "{:?}", cert);
        }
    }
}
