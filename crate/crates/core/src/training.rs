//! Losses, gradients and optimizers for fitting a Stinespring unitary to
//! expectation values of a target evolution.
//!
//! Gradients with respect to the unitary use the convention
//! `dJ = Re Tr[G† dU]`. For a single time step the costate of the pulse
//! problem is `P(τ_f) = −i G`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ansatz::{pulse_propagate, GateAnsatz, PulseControls, PulseSchedule, SegmentPropagators};
use crate::channel::{ChannelCertificate, StinespringChannel};
use crate::error::{Error, Result};
use crate::linalg::{kron, ket_bra, trace_of_product, CMatrix, DensityMatrix, MatrixProps, C64, I};

const HERMITIAN_TOL: f64 = 1e-10;

/// One measured sequence: observable `O_l` on the trajectory of state
/// `states[state]`, with `targets[n-1] = Tr[O_l ρ_{l,n}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub state: usize,
    pub observable: CMatrix,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    states: Vec<DensityMatrix>,
    pairs: Vec<TrainingPair>,
    dt: f64,
}

impl TrainingSet {
    pub fn new(states: Vec<DensityMatrix>, pairs: Vec<TrainingPair>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let dim = states.first().ok_or_else(|| Error::InvalidArgument("no training states".into()))?.dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch("training states differ in dimension".into()));
        }
        let n_steps = pairs.first().ok_or_else(|| Error::InvalidArgument("no training pairs".into()))?.targets.len();
        if n_steps == 0 {
            return Err(Error::InvalidArgument("pairs need at least one target".into()));
        }
        for (l, p) in pairs.iter().enumerate() {
            if p.state >= states.len() {
                return Err(Error::InvalidArgument(format!("pair {l} refers to missing state {}", p.state)));
            }
            if p.targets.len() != n_steps {
                return Err(Error::DimensionMismatch(format!("pair {l} has {} targets, expected {n_steps}", p.targets.len())));
            }
            if p.targets.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite);
            }
            if p.observable.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!("observable {l} has wrong shape")));
            }
            if !p.observable.is_hermitian(HERMITIAN_TOL) {
                return Err(Error::NotHermitian("observable"));
            }
        }
        Ok(Self { states, pairs, dt })
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.pairs[0].targets.len()
    }

    /// Number of pairs `L`.
    pub fn l_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    /// The first `n_steps` targets of every pair.
    pub fn truncated(&self, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > self.n_steps() {
            return Err(Error::InvalidArgument(format!("cannot truncate {} steps to {n_steps}", self.n_steps())));
        }
        let pairs = self
            .pairs
            .iter()
            .map(|p| TrainingPair { targets: p.targets[..n_steps].to_vec(), ..p.clone() })
            .collect();
        Ok(Self { pairs, ..self.clone() })
    }

    /// Adds the stationary state as an extra training state whose traces are
    /// constant over all steps.
    pub fn with_steady_state(mut self, rho_inf: DensityMatrix, observables: &[CMatrix]) -> Result<Self> {
        let index = self.states.len();
        let n_steps = self.n_steps();
        let extra: Vec<TrainingPair> = observables
            .iter()
            .map(|o| TrainingPair {
                state: index,
                observable: o.clone(),
                targets: vec![trace_of_product(o, rho_inf.matrix()).re; n_steps],
            })
            .collect();
        self.states.push(rho_inf);
        self.pairs.extend(extra);
        Self::new(self.states, self.pairs, self.dt)
    }
}

fn check_dims(channel: &StinespringChannel, ts: &TrainingSet) -> Result<()> {
    if channel.dim_a() != ts.dim() {
        return Err(Error::DimensionMismatch(format!(
            "channel acts on dimension {}, training states have {}",
            channel.dim_a(),
            ts.dim()
        )));
    }
    Ok(())
}

/// `ρ̃_{s,n}` for `n = 0..=n_steps` per training state.
fn trajectories(channel: &StinespringChannel, ts: &TrainingSet, n_steps: usize) -> Vec<Vec<CMatrix>> {
    let sup = channel.superoperator();
    ts.states
        .par_iter()
        .map(|rho| {
            let mut out = Vec::with_capacity(n_steps + 1);
            out.push(rho.matrix().clone());
            for n in 0..n_steps {
                let next = sup.apply_matrix(&out[n]);
                out.push(next);
            }
            out
        })
        .collect()
}

/// `r_{l,n} = Tr[O_l ρ̃_{l,n}] − Tr[O_l ρ_{l,n}]`, indexed `[l][n-1]`.
fn residuals(traj: &[Vec<CMatrix>], ts: &TrainingSet, n_steps: usize) -> Vec<Vec<f64>> {
    ts.pairs
        .iter()
        .map(|p| (1..=n_steps).map(|n| trace_of_product(&p.observable, &traj[p.state][n]).re - p.targets[n - 1]).collect())
        .collect()
}

fn sum_of_squares(channel: &StinespringChannel, ts: &TrainingSet, n_steps: usize) -> Result<f64> {
    check_dims(channel, ts)?;
    let traj = trajectories(channel, ts, n_steps);
    Ok(residuals(&traj, ts, n_steps).iter().flatten().map(|r| r * r).sum())
}

/// Single-step loss `Σ_l (Tr[O_l ρ̃_{l,1}] − Tr[O_l ρ_{l,1}])²`.
pub fn loss(channel: &StinespringChannel, ts: &TrainingSet) -> Result<f64> {
    sum_of_squares(channel, ts, 1)
}

/// Loss summed over every step of the training set, with `ρ̃_{l,n}` from
/// repeated application of the channel.
pub fn multistep_loss(channel: &StinespringChannel, ts: &TrainingSet) -> Result<f64> {
    sum_of_squares(channel, ts, ts.n_steps())
}

/// Central-difference gradient of `f` at `params`.
pub fn fd_gradient<F>(f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let all: Vec<usize> = (0..params.len()).collect();
    fd_gradient_on(f, params, eps, &all)
}

/// Central differences along the listed coordinates only; the others are zero.
pub fn fd_gradient_on<F>(f: F, params: &[f64], eps: f64, indices: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {eps}")));
    }
    let partials: Vec<Result<f64>> = indices
        .par_iter()
        .map(|&i| {
            let mut p = params.to_vec();
            p[i] = params[i] + eps;
            let up = f(&p);
            p[i] = params[i] - eps;
            let down = f(&p);
            if up.is_finite() && down.is_finite() {
                Ok((up - down) / (2.0 * eps))
            } else {
                Err(Error::NonFiniteObjective)
            }
        })
        .collect();
    let mut g = vec![0.0; params.len()];
    for (&i, d) in indices.iter().zip(partials) {
        g[i] = d?;
    }
    Ok(g)
}

fn dual(kraus: &[CMatrix], o: &CMatrix) -> CMatrix {
    kraus.iter().fold(CMatrix::zeros(o.nrows(), o.ncols()), |acc, k| acc + k.adjoint() * o * k)
}

/// `O_{l,k}` for `k = 0..=k_max`: `O_{l,0} = O_l` pulled back `k` times through
/// the dual channel.
pub fn pulled_back_observables(channel: &StinespringChannel, o: &CMatrix, k_max: usize) -> Vec<CMatrix> {
    let kraus = channel.kraus();
    let mut out = vec![o.clone()];
    for k in 0..k_max {
        let next = dual(&kraus, &out[k]);
        out.push(next);
    }
    out
}

fn frechet(channel: &StinespringChannel, ts: &TrainingSet, n_steps: usize) -> Result<CMatrix> {
    check_dims(channel, ts)?;
    let traj = trajectories(channel, ts, n_steps);
    let res = residuals(&traj, ts, n_steps);
    let (da, db) = (channel.dim_a(), channel.dim_b());
    let u = channel.unitary();
    let kraus = channel.kraus();
    let anc0 = ket_bra(db, 0, 0);
    let idb = CMatrix::identity(db, db);

    // Regrouped by state: Y_{s,m} = Σ_{n>m} Φ*^{n-1-m}(Σ_{l∈s} r_{l,n} O_l).
    let per_state: Vec<CMatrix> = (0..ts.states.len())
        .into_par_iter()
        .map(|s| {
            let weighted: Vec<CMatrix> = (0..n_steps)
                .map(|n| {
                    ts.pairs
                        .iter()
                        .zip(&res)
                        .filter(|(p, _)| p.state == s)
                        .fold(CMatrix::zeros(da, da), |acc, (p, r)| acc + &p.observable * C64::new(r[n], 0.0))
                })
                .collect();
            let mut acc = CMatrix::zeros(da * db, da * db);
            let mut y: Option<CMatrix> = None;
            for m in (0..n_steps).rev() {
                let next = match y {
                    None => weighted[m].clone(),
                    Some(prev) => &weighted[m] + dual(&kraus, &prev),
                };
                acc += kron(&next, &idb) * u * kron(&traj[s][m], &anc0);
                y = Some(next);
            }
            acc
        })
        .collect();
    let total = per_state.into_iter().fold(CMatrix::zeros(da * db, da * db), |acc, m| acc + m);
    Ok(total * C64::new(4.0, 0.0))
}

/// `δJ/δU` of the multi-step loss:
/// `4 Σ_n Σ_l Σ_k r_{l,n} (O_{l,k} ⊗ I) U (ρ̃_{l,n-k-1} ⊗ |0⟩⟨0|)`.
pub fn multistep_frechet(channel: &StinespringChannel, ts: &TrainingSet) -> Result<CMatrix> {
    frechet(channel, ts, ts.n_steps())
}

/// Terminal costate `P(τ_f) = −4i Σ_l r_l (O_l ⊗ I) U (ρ_{l,0} ⊗ |0⟩⟨0|)` of the
/// single-step loss.
pub fn adjoint_terminal(u_final: &CMatrix, ts: &TrainingSet, dim_a: usize, dim_b: usize) -> Result<CMatrix> {
    let channel = StinespringChannel::new(u_final.clone(), dim_a, dim_b)?;
    Ok(frechet(&channel, ts, 1)? * (-I))
}

/// Costate along the trajectory, `P(τ) = U(τ) U(τ_f)† P(τ_f)`.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub p_final: CMatrix,
}

impl AdjointState {
    pub fn at(&self, u_tau: &CMatrix, u_final: &CMatrix) -> CMatrix {
        u_tau * u_final.adjoint() * &self.p_final
    }
}

/// `(e^a − e^b)/(a − b)`, continuous across `a = b`.
fn divided_difference(a: C64, b: C64) -> C64 {
    let x = (a - b) * 0.5;
    let sinhc = if x.norm() < 1e-4 { 1.0 + x * x / 6.0 + x * x * x * x / 120.0 } else { x.sinh() / x };
    ((a + b) * 0.5).exp() * sinhc
}

/// Gradient of `Re Tr[G† U[z]] + (λ/2) Σ_{r,j} Δτ z_{r,j}²` with respect to the
/// segment values, for a fixed `G`.
pub fn gradient_from_frechet(
    s: &PulseSchedule,
    controls: &PulseControls,
    seg: &SegmentPropagators,
    g: &CMatrix,
) -> DMatrix<f64> {
    let prefix = seg.prefix_products();
    let n = s.n_segments();
    let width = seg.width;
    let x = g.adjoint() * &prefix[n];
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let m = &prefix[j] * &x * prefix[j + 1].adjoint();
            let eig = &seg.eigen[j];
            let w = &eig.vectors;
            let nm = w.adjoint() * m * w;
            let mu: Vec<C64> = eig.values.iter().map(|l| C64::new(0.0, -width * l)).collect();
            let dim = mu.len();
            let z = CMatrix::from_fn(dim, dim, |a, b| nm[(b, a)] * divided_difference(mu[a], mu[b]));
            let c = w * z.transpose() * w.adjoint();
            controls
                .generators()
                .iter()
                .enumerate()
                .map(|(r, gen)| (trace_of_product(&c, gen) * C64::new(0.0, -width)).re + s.lambda * width * s.values[(r, j)])
                .collect()
        })
        .collect();
    DMatrix::from_fn(s.n_channels(), n, |r, j| columns[j][r])
}

/// Multi-step loss plus pulse-energy penalty of a schedule.
pub fn pulse_objective(s: &PulseSchedule, controls: &PulseControls, ts: &TrainingSet, dim_b: usize) -> Result<f64> {
    let u = pulse_propagate(s, controls, None)?;
    let channel = StinespringChannel::new(u, ts.dim(), dim_b)?;
    Ok(multistep_loss(&channel, ts)? + s.energy_penalty())
}

/// Exact gradient of [`pulse_objective`] with respect to every segment value:
/// segment width times the integral average of `λ z_r + η_r(τ)`.
pub fn pulse_gradient(s: &PulseSchedule, controls: &PulseControls, ts: &TrainingSet, dim_b: usize) -> Result<DMatrix<f64>> {
    let seg = SegmentPropagators::new(s, controls)?;
    let u = seg.prefix_products().pop().expect("identity prefix");
    let channel = StinespringChannel::new(u, ts.dim(), dim_b)?;
    let g = multistep_frechet(&channel, ts)?;
    Ok(gradient_from_frechet(s, controls, &seg, &g))
}

/// `U(τ)` inside a schedule.
fn unitary_at(seg: &SegmentPropagators, prefix: &[CMatrix], tau: f64) -> CMatrix {
    let n = seg.steps.len();
    let j = ((tau / seg.width).floor().max(0.0) as usize).min(n - 1);
    let local = tau - j as f64 * seg.width;
    seg.eigen[j].map(|l| C64::from_polar(1.0, -l * local)) * &prefix[j]
}

fn trajectory_data(
    s: &PulseSchedule,
    controls: &PulseControls,
    tau: f64,
) -> Result<(SegmentPropagators, CMatrix, CMatrix)> {
    if !(0.0..=s.tau_f).contains(&tau) {
        return Err(Error::InvalidArgument(format!("τ = {tau} outside [0, {}]", s.tau_f)));
    }
    let seg = SegmentPropagators::new(s, controls)?;
    let prefix = seg.prefix_products();
    let u_tau = unitary_at(&seg, &prefix, tau);
    let u_final = prefix[s.n_segments()].clone();
    Ok((seg, u_tau, u_final))
}

/// `η_r(τ) = −Re Tr[Q_r† (P U† + U P†)]` with the costate of the multi-step
/// loss. The sign follows from `P(τ_f) = −i δJ/δU`.
pub fn eta_direct(s: &PulseSchedule, controls: &PulseControls, ts: &TrainingSet, dim_b: usize, tau: f64) -> Result<Vec<f64>> {
    let (_, u_tau, u_final) = trajectory_data(s, controls, tau)?;
    let channel = StinespringChannel::new(u_final.clone(), ts.dim(), dim_b)?;
    let adj = AdjointState { p_final: multistep_frechet(&channel, ts)? * (-I) };
    let p = adj.at(&u_tau, &u_final);
    let sym = &p * u_tau.adjoint() + &u_tau * p.adjoint();
    Ok(controls.ops().iter().map(|op| -trace_of_product(&op.q.adjoint(), &sym).re).collect())
}

/// `η_r(τ)` of the single-step loss from the expansion `Q_r = Σ_k c_k V_k`:
/// `Re Σ_l 4i r_l Σ_k c̄_k Tr[ρ̂_l(τ) [V_k†, Γ† (O_l ⊗ I) Γ]]` with
/// `ρ̂_l(τ) = U(τ)(ρ_l ⊗ |0⟩⟨0|)U(τ)†` and `Γ = U(τ_f) U(τ)†`.
pub fn eta_commutator(
    s: &PulseSchedule,
    controls: &PulseControls,
    ts: &TrainingSet,
    dim_b: usize,
    tau: f64,
) -> Result<Vec<f64>> {
    let (_, u_tau, u_final) = trajectory_data(s, controls, tau)?;
    let channel = StinespringChannel::new(u_final.clone(), ts.dim(), dim_b)?;
    check_dims(&channel, ts)?;
    let traj = trajectories(&channel, ts, 1);
    let res = residuals(&traj, ts, 1);
    let gamma = &u_final * u_tau.adjoint();
    let anc0 = ket_bra(dim_b, 0, 0);
    let idb = CMatrix::identity(dim_b, dim_b);
    let mut eta = vec![0.0; controls.n_channels()];
    for (p, r) in ts.pairs.iter().zip(&res) {
        let rho_hat = &u_tau * kron(ts.states[p.state].matrix(), &anc0) * u_tau.adjoint();
        let o_hat = gamma.adjoint() * kron(&p.observable, &idb) * &gamma;
        for (e, op) in eta.iter_mut().zip(controls.ops()) {
            let sum: C64 = op
                .unitary_parts
                .iter()
                .map(|(c, v)| {
                    let vd = v.adjoint();
                    let comm = &vd * &o_hat - &o_hat * &vd;
                    c.conj() * trace_of_product(&rho_hat, &comm)
                })
                .sum();
            *e += (C64::new(0.0, 4.0 * r[0]) * sum).re;
        }
    }
    Ok(eta)
}

/// Cost model for one gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QeCost {
    /// `3·d·m` for a depth-`d` gate ansatz on `m` qubits.
    Gate { depth: u64, qubits: u64 },
    /// One evaluation per sampled parameter.
    StochasticGate { batch: u64 },
    /// `N·K·R`.
    Pulse { segments: u64, parts: u64, channels: u64 },
    /// `½ N_s(N_s − 1)·K·L·R`.
    MultistepPulse { steps: u64, parts: u64, pairs: u64, channels: u64 },
}

pub fn qe_count(cost: &QeCost) -> u64 {
    match *cost {
        QeCost::Gate { depth, qubits } => 3 * depth * qubits,
        QeCost::StochasticGate { batch } => batch,
        QeCost::Pulse { segments, parts, channels } => segments * parts * channels,
        QeCost::MultistepPulse { steps, parts, pairs, channels } => steps * steps.saturating_sub(1) / 2 * parts * pairs * channels,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub fd_eps: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub armijo_max_backtracks: usize,
    /// Fraction of gate parameters updated per iteration; 1 is full descent.
    pub batch_fraction: f64,
    pub seed: u64,
    pub lambda: f64,
    pub initial_alpha: f64,
    /// With a value above 1, each line search starts from the last accepted
    /// step times this factor (capped at `max_alpha`) instead of `initial_alpha`.
    pub alpha_growth: f64,
    pub max_alpha: f64,
    /// Start each line search from the Barzilai–Borwein step `sᵀy / yᵀy` of
    /// the last two iterates when it is positive. Ignored for stochastic gate
    /// descent, whose successive gradients cover different coordinates.
    pub barzilai_borwein: bool,
    pub loss_tol: f64,
    pub stall_limit: usize,
    /// Stop once the cumulative #QE reaches this value.
    pub qe_budget: Option<u64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            fd_eps: 1e-5,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            armijo_max_backtracks: 25,
            batch_fraction: 1.0,
            seed: 0,
            lambda: 1e-3,
            initial_alpha: 1.0,
            alpha_growth: 1.0,
            max_alpha: 1.0,
            barzilai_borwein: false,
            loss_tol: 1e-10,
            stall_limit: 5,
            qe_budget: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fd_eps", self.fd_eps),
            ("armijo_c", self.armijo_c),
            ("initial_alpha", self.initial_alpha),
            ("max_alpha", self.max_alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::InvalidArgument(format!("armijo_shrink must lie in (0, 1), got {}", self.armijo_shrink)));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("batch_fraction must lie in (0, 1], got {}", self.batch_fraction)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.alpha_growth >= 1.0 && self.alpha_growth.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha_growth must be ≥ 1, got {}", self.alpha_growth)));
        }
        if !(self.loss_tol >= 0.0) {
            return Err(Error::InvalidArgument("loss_tol must be non-negative".into()));
        }
        if self.stall_limit == 0 {
            return Err(Error::InvalidArgument("stall_limit must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One optimizer iteration. `iter = 0` is the starting point; later records
/// hold the loss after the step, the norm of the gradient that produced it and
/// the accepted step length (0 for a stalled line search).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// Data loss `J`.
    pub loss: f64,
    /// `J` plus the pulse-energy penalty; the quantity the line search
    /// decreases.
    pub objective: f64,
    pub grad_norm: f64,
    pub alpha: f64,
    pub qe_cumulative: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
    Stalled,
    Budget,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIters => "max_iters",
            Self::Stalled => "stalled",
            Self::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageResult {
    pub label: &'static str,
    pub params: Vec<f64>,
    pub trace: Vec<IterRecord>,
    pub status: StopReason,
}

impl StageResult {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.loss)
    }
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub unitary: CMatrix,
    pub dim_a: usize,
    pub dim_b: usize,
    pub stages: Vec<StageResult>,
    /// Worst certificate over every accepted iterate of every stage.
    pub worst_certificate: ChannelCertificate,
}

impl Optimized {
    pub fn channel(&self) -> Result<StinespringChannel> {
        StinespringChannel::new(self.unitary.clone(), self.dim_a, self.dim_b)
    }

    pub fn status(&self) -> StopReason {
        self.stages.last().expect("at least one stage").status
    }

    pub fn final_loss(&self) -> f64 {
        self.stages.last().expect("at least one stage").final_loss()
    }

    /// Parameters of the final stage.
    pub fn params(&self) -> &[f64] {
        &self.stages.last().expect("at least one stage").params
    }

    pub fn combined_trace(&self) -> Vec<IterRecord> {
        combine_traces(&self.stages)
    }
}

/// All stages back to back, iterations numbered consecutively. The start
/// record of later stages is dropped.
pub fn combine_traces(stages: &[StageResult]) -> Vec<IterRecord> {
    let mut out: Vec<IterRecord> = Vec::new();
    for stage in stages {
        let skip = usize::from(!out.is_empty());
        let offset = out.last().map_or(0, |r| r.iter);
        out.extend(stage.trace.iter().skip(skip).map(|r| IterRecord { iter: r.iter + offset, ..*r }));
    }
    out
}

/// Pulse-parametrized dilation on `dim_a · dim_b`, with `dim_a` taken from
/// the training set.
#[derive(Debug, Clone)]
pub struct PulseProblem {
    pub controls: PulseControls,
    pub schedule: PulseSchedule,
    pub dim_b: usize,
}

#[derive(Debug, Clone)]
pub enum Problem {
    /// Gate ansatz on system and ancilla qubits; stochastic when
    /// `batch_fraction < 1`.
    Gate { ansatz: GateAnsatz, dim_b: usize },
    Pulse(PulseProblem),
    /// Stage 1 fits a system-only pulse to `hamiltonian_set` (the same data
    /// without dissipation) for at most `hamiltonian_iters` iterations; stage
    /// 2 freezes it and fits the full dilation.
    Split { hamiltonian: PulseProblem, hamiltonian_set: TrainingSet, hamiltonian_iters: usize, dissipative: PulseProblem },
}

#[derive(Debug, Clone, Copy)]
struct Value {
    objective: f64,
    loss: f64,
}

trait Objective: Sync {
    fn value(&self, p: &[f64]) -> Result<Value>;
    /// Gradient and its #QE cost.
    fn gradient(&self, p: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, u64)>;
    fn unitary(&self, p: &[f64]) -> Result<CMatrix>;
    fn dims(&self) -> (usize, usize);
}

struct GateObjective<'a> {
    ansatz: &'a GateAnsatz,
    ts: &'a TrainingSet,
    dim_b: usize,
    eps: f64,
    batch_fraction: f64,
}

impl Objective for GateObjective<'_> {
    fn value(&self, p: &[f64]) -> Result<Value> {
        let channel = StinespringChannel::new(self.ansatz.unitary_with(p), self.ts.dim(), self.dim_b)?;
        let loss = multistep_loss(&channel, self.ts)?;
        Ok(Value { objective: loss, loss })
    }

    fn gradient(&self, p: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, u64)> {
        let f = |q: &[f64]| self.value(q).map_or(f64::NAN, |v| v.objective);
        let n = p.len();
        if self.batch_fraction >= 1.0 {
            let cost = qe_count(&QeCost::Gate { depth: self.ansatz.depth as u64, qubits: self.ansatz.n_qubits as u64 });
            return Ok((fd_gradient(f, p, self.eps)?, cost));
        }
        let batch = ((self.batch_fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut indices = rand::seq::index::sample(rng, n, batch).into_vec();
        indices.sort_unstable();
        Ok((fd_gradient_on(f, p, self.eps, &indices)?, qe_count(&QeCost::StochasticGate { batch: batch as u64 })))
    }

    fn unitary(&self, p: &[f64]) -> Result<CMatrix> {
        Ok(self.ansatz.unitary_with(p))
    }

    fn dims(&self) -> (usize, usize) {
        (self.ts.dim(), self.dim_b)
    }
}

struct PulseObjective<'a> {
    problem: &'a PulseProblem,
    ts: &'a TrainingSet,
    lambda: f64,
    /// Fixed right factor `K` with `U_total = U[z] K`.
    prefix: Option<CMatrix>,
}

impl PulseObjective<'_> {
    fn schedule(&self, p: &[f64]) -> PulseSchedule {
        let mut s = self.problem.schedule.with_params(p);
        s.lambda = self.lambda;
        s
    }

    fn total(&self, u: CMatrix) -> CMatrix {
        match &self.prefix {
            Some(k) => u * k,
            None => u,
        }
    }

    fn cost(&self) -> u64 {
        let parts = self.problem.controls.ops().iter().map(|o| o.k()).max().unwrap_or(0) as u64;
        let channels = self.problem.controls.n_channels() as u64;
        let steps = self.ts.n_steps() as u64;
        if steps > 1 {
            qe_count(&QeCost::MultistepPulse { steps, parts, pairs: self.ts.l_count() as u64, channels })
        } else {
            qe_count(&QeCost::Pulse { segments: self.problem.schedule.n_segments() as u64, parts, channels })
        }
    }
}

impl Objective for PulseObjective<'_> {
    fn value(&self, p: &[f64]) -> Result<Value> {
        let s = self.schedule(p);
        let u = self.total(pulse_propagate(&s, &self.problem.controls, None)?);
        let channel = StinespringChannel::new(u, self.ts.dim(), self.problem.dim_b)?;
        let loss = multistep_loss(&channel, self.ts)?;
        Ok(Value { objective: loss + s.energy_penalty(), loss })
    }

    fn gradient(&self, p: &[f64], _rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, u64)> {
        let s = self.schedule(p);
        let seg = SegmentPropagators::new(&s, &self.problem.controls)?;
        let u = self.total(seg.prefix_products().pop().expect("identity prefix"));
        let channel = StinespringChannel::new(u, self.ts.dim(), self.problem.dim_b)?;
        let mut g = multistep_frechet(&channel, self.ts)?;
        if let Some(k) = &self.prefix {
            g *= k.adjoint();
        }
        let grad = gradient_from_frechet(&s, &self.problem.controls, &seg, &g);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObjective);
        }
        Ok((grad.transpose().iter().copied().collect(), self.cost()))
    }

    fn unitary(&self, p: &[f64]) -> Result<CMatrix> {
        Ok(self.total(pulse_propagate(&self.schedule(p), &self.problem.controls, None)?))
    }

    fn dims(&self) -> (usize, usize) {
        (self.ts.dim(), self.problem.dim_b)
    }
}

fn worse(a: ChannelCertificate, b: ChannelCertificate) -> ChannelCertificate {
    ChannelCertificate {
        min_choi_eigenvalue: a.min_choi_eigenvalue.min(b.min_choi_eigenvalue),
        tp_residual: a.tp_residual.max(b.tp_residual),
    }
}

fn certify(obj: &dyn Objective, p: &[f64]) -> Result<ChannelCertificate> {
    let (da, db) = obj.dims();
    Ok(StinespringChannel::new(obj.unitary(p)?, da, db)?.certificate())
}

/// Armijo-backtracked gradient descent.
fn descend(
    obj: &dyn Objective,
    label: &'static str,
    params: Vec<f64>,
    cfg: &OptimizerConfig,
    qe_offset: u64,
    cert: &mut ChannelCertificate,
) -> Result<StageResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut p = params;
    let mut v = obj.value(&p)?;
    if !v.objective.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    *cert = worse(*cert, certify(obj, &p)?);
    let mut qe = qe_offset;
    let mut trace =
        vec![IterRecord { iter: 0, loss: v.loss, objective: v.objective, grad_norm: 0.0, alpha: 0.0, qe_cumulative: qe }];
    let mut last_alpha = cfg.initial_alpha;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut stalls = 0;
    let mut status = StopReason::MaxIters;
    for iter in 1..=cfg.max_iters {
        if v.loss < cfg.loss_tol {
            status = StopReason::Converged;
            break;
        }
        if cfg.qe_budget.is_some_and(|b| qe >= b) {
            status = StopReason::Budget;
            break;
        }
        let (g, cost) = obj.gradient(&p, &mut rng)?;
        qe += cost;
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut alpha =
            if cfg.alpha_growth > 1.0 { (last_alpha * cfg.alpha_growth).min(cfg.max_alpha) } else { cfg.initial_alpha };
        if cfg.barzilai_borwein {
            if let Some((p_old, g_old)) = &previous {
                let (mut sy, mut yy) = (0.0, 0.0);
                for i in 0..p.len() {
                    let (si, yi) = (p[i] - p_old[i], g[i] - g_old[i]);
                    sy += si * yi;
                    yy += yi * yi;
                }
                if sy > 0.0 && yy > 0.0 {
                    alpha = (sy / yy).min(cfg.max_alpha);
                }
            }
            previous = Some((p.clone(), g.clone()));
        }
        let mut accepted = None;
        if g2 > 0.0 {
            for _ in 0..=cfg.armijo_max_backtracks {
                let trial: Vec<f64> = p.iter().zip(&g).map(|(x, d)| x - alpha * d).collect();
                let vt = obj.value(&trial)?;
                if vt.objective.is_finite() && vt.objective <= v.objective - cfg.armijo_c * alpha * g2 {
                    accepted = Some((trial, vt));
                    break;
                }
                alpha *= cfg.armijo_shrink;
            }
        }
        let step = match accepted {
            Some((trial, vt)) => {
                p = trial;
                v = vt;
                stalls = 0;
                last_alpha = alpha;
                *cert = worse(*cert, certify(obj, &p)?);
                alpha
            }
            None => {
                stalls += 1;
                0.0
            }
        };
        trace.push(IterRecord {
            iter,
            loss: v.loss,
            objective: v.objective,
            grad_norm: g2.sqrt(),
            alpha: step,
            qe_cumulative: qe,
        });
        if stalls >= cfg.stall_limit {
            status = StopReason::Stalled;
            break;
        }
    }
    if v.loss < cfg.loss_tol {
        status = StopReason::Converged;
    }
    Ok(StageResult { label, params: p, trace, status })
}

/// Fits the problem to `ts` and returns the learned unitary with per-stage
/// convergence traces. Deterministic for a fixed configuration.
pub fn optimize(problem: &Problem, cfg: &OptimizerConfig, ts: &TrainingSet) -> Result<Optimized> {
    cfg.validate()?;
    let mut cert = ChannelCertificate { min_choi_eigenvalue: f64::INFINITY, tp_residual: 0.0 };
    match problem {
        Problem::Gate { ansatz, dim_b } => {
            let obj = GateObjective { ansatz, ts, dim_b: *dim_b, eps: cfg.fd_eps, batch_fraction: cfg.batch_fraction };
            let cfg = OptimizerConfig { barzilai_borwein: cfg.barzilai_borwein && cfg.batch_fraction >= 1.0, ..cfg.clone() };
            let stage = descend(&obj, "gate", ansatz.theta.clone(), &cfg, 0, &mut cert)?;
            let unitary = obj.unitary(&stage.params)?;
            Ok(Optimized { unitary, dim_a: ts.dim(), dim_b: *dim_b, stages: vec![stage], worst_certificate: cert })
        }
        Problem::Pulse(pp) => {
            let obj = PulseObjective { problem: pp, ts, lambda: cfg.lambda, prefix: None };
            let stage = descend(&obj, "pulse", pp.schedule.params(), cfg, 0, &mut cert)?;
            let unitary = obj.unitary(&stage.params)?;
            Ok(Optimized { unitary, dim_a: ts.dim(), dim_b: pp.dim_b, stages: vec![stage], worst_certificate: cert })
        }
        Problem::Split { hamiltonian, hamiltonian_set, hamiltonian_iters, dissipative } => {
            if hamiltonian_set.dim() != ts.dim() {
                return Err(Error::DimensionMismatch("Hamiltonian training set acts on a different system".into()));
            }
            let first = PulseObjective { problem: hamiltonian, ts: hamiltonian_set, lambda: cfg.lambda, prefix: None };
            let cfg1 = OptimizerConfig { max_iters: *hamiltonian_iters, ..cfg.clone() };
            let stage1 = descend(&first, "hamiltonian", hamiltonian.schedule.params(), &cfg1, 0, &mut cert)?;
            let u_h = first.unitary(&stage1.params)?;
            let db = dissipative.dim_b;
            let qe1 = stage1.trace.last().map_or(0, |r| r.qe_cumulative);
            let second = PulseObjective {
                problem: dissipative,
                ts,
                lambda: cfg.lambda,
                prefix: Some(kron(&u_h, &CMatrix::identity(db, db))),
            };
            let stage2 = descend(&second, "dissipative", dissipative.schedule.params(), cfg, qe1, &mut cert)?;
            let unitary = second.unitary(&stage2.params)?;
            Ok(Optimized { unitary, dim_a: ts.dim(), dim_b: db, stages: vec![stage1, stage2], worst_certificate: cert })
        }
    }
}
