//! Scoring learned channels: Bures distance, Pauli observables and
//! extrapolation error curves.

use rayon::prelude::*;

use crate::channel::StinespringChannel;
use crate::error::{Error, Result};
use crate::lindblad::{haar_states, TargetChannel};
use crate::linalg::{
    embed_single, ket_bra, kron, pauli_i, pauli_x, pauli_y, pauli_z, psd_sqrt, trace_of_product, CMatrix, DensityMatrix,
    MatrixProps,
};

/// Bures distance `√(2(1 − Tr[(√ρ σ √ρ)^{1/2}]))`, in `[0, √2]`.
///
/// Evaluated as `‖√ρ − √σ W‖_F` with `W` the unitary that maximizes
/// `Re Tr[√ρ √σ W]`, which keeps full relative accuracy for nearby states.
pub fn bures_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!("states of dimension {} and {}", rho.dim(), sigma.dim())));
    }
    let a = psd_sqrt(rho.matrix())?;
    let b = psd_sqrt(sigma.matrix())?;
    let svd = (&a * &b).svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let w = v_t.adjoint() * u.adjoint();
    Ok((a - b * w).norm().min(2f64.sqrt()))
}

/// All `4^m` Pauli strings, `I < X < Y < Z` per factor with qubit 0 leftmost.
pub fn pauli_strings(m: usize) -> Vec<CMatrix> {
    let single = [pauli_i(), pauli_x(), pauli_y(), pauli_z()];
    let mut out = vec![CMatrix::identity(1, 1)];
    for _ in 0..m {
        out = out.iter().flat_map(|p| single.iter().map(move |s| kron(p, s))).collect();
    }
    out
}

/// `Re Tr[o ρ]` for Hermitian `o`.
pub fn expectation(o: &CMatrix, rho: &DensityMatrix) -> Result<f64> {
    if o.shape() != (rho.dim(), rho.dim()) {
        return Err(Error::DimensionMismatch("observable and state differ in dimension".into()));
    }
    if !o.is_hermitian(1e-10) {
        return Err(Error::NotHermitian("observable"));
    }
    let t = trace_of_product(o, rho.matrix());
    debug_assert!(t.im.abs() < 1e-10 * (1.0 + o.norm()), "imaginary expectation {}", t.im);
    Ok(t.re)
}

/// Probability of finding `qubit` of an `m`-qubit register in `|1⟩`.
pub fn excitation(rho: &DensityMatrix, qubit: usize, m: usize) -> f64 {
    trace_of_product(&embed_single(&ket_bra(2, 1, 1), qubit, m), rho.matrix()).re
}

/// Total excitation `Σ_q P(q in |1⟩)`.
pub fn excitation_number(rho: &DensityMatrix) -> f64 {
    let m = rho.dim().trailing_zeros() as usize;
    (0..m).map(|q| excitation(rho, q, m)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    /// Step indices `k`; the curve is sampled at `t = kΔt`.
    pub steps: Vec<usize>,
    pub mean_bures: Vec<f64>,
    /// `[state][step]`.
    pub per_state_bures: Vec<Vec<f64>>,
}

impl ErrorCurve {
    fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.per_state_bures.iter().map(move |row| row[k])
    }

    pub fn min(&self) -> Vec<f64> {
        (0..self.steps.len()).map(|k| self.column(k).fold(f64::INFINITY, f64::min)).collect()
    }

    pub fn max(&self) -> Vec<f64> {
        (0..self.steps.len()).map(|k| self.column(k).fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    /// Same curve reported as `d²`.
    pub fn squared(&self) -> Self {
        let per_state_bures: Vec<Vec<f64>> =
            self.per_state_bures.iter().map(|row| row.iter().map(|d| d * d).collect()).collect();
        Self { steps: self.steps.clone(), mean_bures: mean_columns(&per_state_bures, self.steps.len()), per_state_bures }
    }
}

fn mean_columns(rows: &[Vec<f64>], n: usize) -> Vec<f64> {
    (0..n).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64).collect()
}

/// Exact and extrapolated states `ρ(kΔt)` for `k = 1..=n_steps`.
pub fn trajectories(
    target: &TargetChannel,
    learned: &StinespringChannel,
    rho0: &DensityMatrix,
    n_steps: usize,
) -> Result<(Vec<DensityMatrix>, Vec<DensityMatrix>)> {
    Ok((target.evolve(rho0, n_steps), learned.extrapolate(rho0, n_steps)?.states))
}

pub fn error_curve_for_states(
    target: &TargetChannel,
    learned: &StinespringChannel,
    states: &[DensityMatrix],
    n_steps: usize,
) -> Result<ErrorCurve> {
    if target.model().dim() != learned.dim_a() {
        return Err(Error::DimensionMismatch(format!(
            "target acts on dimension {}, learned channel on {}",
            target.model().dim(),
            learned.dim_a()
        )));
    }
    if states.is_empty() || n_steps == 0 {
        return Err(Error::InvalidArgument("error curve needs states and steps".into()));
    }
    let per_state_bures = states
        .par_iter()
        .map(|rho0| {
            let (exact, approx) = trajectories(target, learned, rho0, n_steps)?;
            exact.iter().zip(&approx).map(|(e, a)| bures_distance(e, a)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorCurve { steps: (1..=n_steps).collect(), mean_bures: mean_columns(&per_state_bures, n_steps), per_state_bures })
}

/// Mean Bures distance between exact and extrapolated evolution over
/// `n_states` seeded Haar-random pure states.
pub fn error_curve(
    target: &TargetChannel,
    learned: &StinespringChannel,
    n_states: usize,
    n_steps: usize,
    seed: u64,
) -> Result<ErrorCurve> {
    let m = learned.dim_a().trailing_zeros() as usize;
    error_curve_for_states(target, learned, &haar_states(m, n_states, seed), n_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{exact_dilation_single_decay, presets};
    use crate::linalg::{haar_random_state_with, max_abs_diff, unitary_evolution, CVector, PureState, C64};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mixed(qubits: usize, rng: &mut impl Rng) -> DensityMatrix {
        let dim = 1 << qubits;
        let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = &a * a.adjoint();
        let tr = crate::linalg::trace(&m);
        DensityMatrix::new(m / tr, 1e-9).unwrap()
    }

    fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMatrix {
        let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        unitary_evolution(&(&a + a.adjoint()), 1.0)
    }

    /// Textbook evaluation through the fidelity.
    fn naive_bures(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
        let s = psd_sqrt(rho.matrix()).unwrap();
        let inner = psd_sqrt(&(&s * sigma.matrix() * &s)).unwrap();
        (2.0 * (1.0 - crate::linalg::trace(&inner).re)).max(0.0).sqrt()
    }

    #[test]
    fn bures_examples() {
        let zero = DensityMatrix::basis(2, 0);
        let one = DensityMatrix::basis(2, 1);
        assert!(bures_distance(&zero, &zero).unwrap() < 1e-15);
        assert!((bures_distance(&zero, &one).unwrap() - 2f64.sqrt()).abs() < 1e-15);

        // |⟨0|φ⟩|² = 1/4
        let phi = PureState::new(CVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.75f64.sqrt(), 0.0)])).unwrap();
        let want = (2.0 * (1.0 - 0.5f64)).sqrt();
        assert!((bures_distance(&zero, &phi.density()).unwrap() - want).abs() < 1e-14);

        assert!(bures_distance(&zero, &DensityMatrix::basis(4, 0)).is_err());
    }

    #[test]
    fn bures_agrees_with_fidelity_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (a, b) = (random_mixed(2, &mut rng), random_mixed(2, &mut rng));
            assert!((bures_distance(&a, &b).unwrap() - naive_bures(&a, &b)).abs() < 1e-7);
        }
    }

    #[test]
    fn bures_resolves_nearby_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_mixed(1, &mut rng);
        let sigma = DensityMatrix::new(rho.matrix() * C64::new(1.0 - 1e-12, 0.0) + CMatrix::identity(2, 2) * C64::new(0.5e-12, 0.0), 1e-9)
            .unwrap();
        let d = bures_distance(&rho, &sigma).unwrap();
        assert!(d > 1e-14 && d < 1e-11, "{d}");
    }

    #[test]
    fn pauli_string_examples() {
        let one = pauli_strings(1);
        for (p, want) in one.iter().zip([pauli_i(), pauli_x(), pauli_y(), pauli_z()]) {
            assert_eq!(p, &want);
        }
        let two = pauli_strings(2);
        assert_eq!(two.len(), 16);
        assert_eq!(two[1 * 4 + 3], kron(&pauli_x(), &pauli_z()));
        for (i, p) in two.iter().enumerate() {
            for (j, q) in two.iter().enumerate() {
                let t = trace_of_product(p, q);
                let want = if i == j { 4.0 } else { 0.0 };
                assert!((t - C64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn expectation_examples() {
        let one = DensityMatrix::basis(2, 1);
        assert!((expectation(&pauli_i(), &one).unwrap() - 1.0).abs() < 1e-15);
        assert!((expectation(&pauli_z(), &one).unwrap() + 1.0).abs() < 1e-15);
        let plus = PureState::new(CVector::from_element(2, C64::new(0.5f64.sqrt(), 0.0))).unwrap().density();
        assert!((expectation(&pauli_x(), &plus).unwrap() - 1.0).abs() < 1e-15);
        assert!(expectation(&ket_bra(2, 0, 1), &plus).is_err());
        assert!((excitation(&DensityMatrix::basis(4, 0b10), 0, 2) - 1.0).abs() < 1e-15);
        assert!((excitation_number(&DensityMatrix::basis(8, 0b101)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_dilation_curve_vanishes() {
        let (gamma, dt) = (0.5, 0.25);
        let target = TargetChannel::new(presets::single_qubit_decay(gamma, 0.0), dt).unwrap();
        let learned = StinespringChannel::new(exact_dilation_single_decay(gamma, dt), 2, 2).unwrap();
        let curve = error_curve(&target, &learned, 10, 10, 3).unwrap();
        assert_eq!(curve.steps, (1..=10).collect::<Vec<_>>());
        assert!(curve.max().iter().all(|&d| d <= 1e-9), "{:?}", curve.max());

        let wrong = StinespringChannel::identity(2, 2);
        let curve = error_curve(&target, &wrong, 5, 4, 3).unwrap();
        assert!(curve.mean_bures.windows(2).all(|w| w[1] > w[0]));
        let sq = curve.squared();
        assert!((sq.mean_bures[0] - curve.per_state_bures.iter().map(|r| r[0] * r[0]).sum::<f64>() / 5.0).abs() < 1e-15);
        assert!(error_curve(&target, &StinespringChannel::identity(4, 2), 5, 4, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn bures_symmetry_and_bounds(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_mixed(2, &mut rng), haar_random_state_with(2, &mut rng).density());
            let d = bures_distance(&a, &b).unwrap();
            prop_assert!((d - bures_distance(&b, &a).unwrap()).abs() < 1e-10);
            prop_assert!((0.0..=2f64.sqrt()).contains(&d));
        }

        #[test]
        fn bures_triangle_inequality(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_mixed(1, &mut rng), random_mixed(1, &mut rng), random_mixed(1, &mut rng));
            let d = |x: &DensityMatrix, y: &DensityMatrix| bures_distance(x, y).unwrap();
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        }

        #[test]
        fn bures_unitary_invariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_mixed(2, &mut rng), random_mixed(2, &mut rng));
            let u = random_unitary(4, &mut rng);
            let rot = |x: &DensityMatrix| DensityMatrix::from_matrix_unchecked(&u * x.matrix() * u.adjoint());
            prop_assert!((bures_distance(&rot(&a), &rot(&b)).unwrap() - bures_distance(&a, &b).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn pauli_reconstruction(seed in any::<u64>(), m in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_mixed(m, &mut rng);
            let dim = 1usize << m;
            let rebuilt = pauli_strings(m).iter().fold(CMatrix::zeros(dim, dim), |acc, p| {
                acc + p * C64::new(expectation(p, &rho).unwrap() / dim as f64, 0.0)
            });
            prop_assert!(max_abs_diff(&rebuilt, rho.matrix()) < 1e-11);
        }
    }
}
