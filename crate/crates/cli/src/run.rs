//! Oracle generation, training and evaluation for one configured experiment.

use std::fmt;
use std::time::{Duration, Instant};

use qchannel::ansatz::{entangling_gate, GateAnsatz, PulseControls, PulseSchedule};
use qchannel::channel::{ChannelCertificate, StinespringChannel};
use qchannel::hardware::{control_operators, drift_hamiltonian};
use qchannel::lindblad::{
    basis_and_superposition_states, exact_dilation_single_decay, haar_states, make_training_set, TargetChannel,
};
use qchannel::linalg::{CMatrix, DensityMatrix};
use qchannel::metrics::{error_curve_for_states, excitation_number, pauli_strings, ErrorCurve};
use qchannel::training::{combine_traces, optimize, IterRecord, Problem, PulseProblem, StageResult, StopReason, TrainingSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ChannelConfig, ConfigError, ExperimentConfig, Method, PairCount, StateSet};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(qchannel::Error),
    Io(std::io::Error),
}

impl RunError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numerical(_) | RunError::Io(_) => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "invalid config: {e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<qchannel::Error> for RunError {
    fn from(e: qchannel::Error) -> Self {
        RunError::Numerical(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Excitation number of one evaluation state at `t = step·Δt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationRow {
    pub t: f64,
    pub state_index: usize,
    pub exact: f64,
    pub approx: f64,
}

/// Outcome of training and evaluating one method.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    pub config: ExperimentConfig,
    pub stages: Vec<StageResult>,
    /// Stages back to back with consecutive iteration numbers.
    pub trace: Vec<IterRecord>,
    pub status: StopReason,
    pub final_loss: f64,
    pub qe_total: u64,
    pub final_params: Vec<f64>,
    pub channel: StinespringChannel,
    pub certificate: ChannelCertificate,
    pub error_curve: ErrorCurve,
    pub populations: Vec<PopulationRow>,
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn config_hash(&self) -> String {
        self.config.hash()
    }
}

pub fn training_states(cfg: &ExperimentConfig) -> Vec<DensityMatrix> {
    let m = cfg.system_qubits();
    match cfg.training.states {
        StateSet::Haar => haar_states(m, cfg.training.n_states, cfg.training.state_seed),
        StateSet::BasisSuperposition => basis_and_superposition_states(m),
    }
}

pub fn evaluation_states(cfg: &ExperimentConfig) -> Vec<DensityMatrix> {
    haar_states(cfg.system_qubits(), cfg.evaluation.n_haar_states, cfg.evaluation.state_seed)
}

/// Training data for `model`; with `pair_count = "total"` a seeded subset of
/// pairs is kept.
pub fn training_set(cfg: &ExperimentConfig, model: &qchannel::lindblad::LindbladModel) -> Result<TrainingSet, RunError> {
    let t = &cfg.training;
    let states = training_states(cfg);
    let full = make_training_set(model, &states, &pauli_strings(cfg.system_qubits()), t.n_steps, t.dt)?;
    match t.pair_count {
        PairCount::PerStep => Ok(full),
        PairCount::Total => {
            let n = full.pairs().len();
            let keep = n.div_ceil(t.n_steps).max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(t.state_seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, keep).into_vec();
            idx.sort_unstable();
            let pairs = idx.into_iter().map(|i| full.pairs()[i].clone()).collect();
            Ok(TrainingSet::new(states, pairs, t.dt)?)
        }
    }
}

/// Builds the optimization problem for a trainable method.
pub fn problem(cfg: &ExperimentConfig, method: Method) -> Result<Problem, RunError> {
    let m = cfg.total_qubits();
    let dim_b = 1usize << cfg.hardware.ancillas;
    let drift = drift_hamiltonian(&cfg.geometry()?, m)?;
    match method {
        Method::Gate | Method::StochasticGate => {
            let g = &cfg.gate;
            let u_ent = entangling_gate(&drift, g.tau_v)?;
            let mut ansatz = GateAnsatz::new(m, g.depth, u_ent, g.tau_g, g.tau_v)?;
            ansatz.randomize(g.init_spread, cfg.seed);
            Ok(Problem::Gate { ansatz, dim_b })
        }
        Method::Pulse | Method::SplitPulse => {
            let p = &cfg.pulse;
            let controls = PulseControls::new(drift, control_operators(m, cfg.control_mode()))?;
            let mut schedule = PulseSchedule::zeros(controls.n_channels(), p.segments, p.tau_f, p.lambda);
            schedule.randomize(p.init_spread, cfg.seed);
            let dissipative = PulseProblem { controls, schedule, dim_b };
            if method == Method::Pulse {
                return Ok(Problem::Pulse(dissipative));
            }
            let s = &cfg.split;
            let m_a = cfg.system_qubits();
            let dim_a = 1usize << m_a;
            let controls = PulseControls::new(CMatrix::zeros(dim_a, dim_a), control_operators(m_a, cfg.control_mode()))?;
            let mut schedule = PulseSchedule::zeros(controls.n_channels(), s.segments, s.tau_f, p.lambda);
            schedule.randomize(s.init_spread, cfg.seed);
            let hamiltonian = PulseProblem { controls, schedule, dim_b: 1 };
            let hamiltonian_set = training_set(cfg, &cfg.model()?.hamiltonian_only())?;
            Ok(Problem::Split { hamiltonian, hamiltonian_set, hamiltonian_iters: s.iters, dissipative })
        }
        Method::ExactDilation => Err(ConfigError::new("methods", "exact_dilation has no trainable problem").into()),
    }
}

/// Trains and evaluates one method.
pub fn run_method(cfg: &ExperimentConfig, method: Method) -> Result<RunRecord, RunError> {
    cfg.validate()?;
    if !cfg.methods.contains(&method) {
        return Err(ConfigError::new("methods", format!("{} is not configured", method.as_str())).into());
    }
    let start = Instant::now();
    let model = cfg.model()?;
    let dt = cfg.training.dt;
    let (channel, stages, certificate) = if method == Method::ExactDilation {
        let gamma = match cfg.channel {
            ChannelConfig::SingleQubitDecay { gamma, .. } => gamma,
            _ => unreachable!("validated"),
        };
        let channel = StinespringChannel::new(exact_dilation_single_decay(gamma, dt), 2, 2)?;
        let cert = channel.certificate();
        (channel, Vec::new(), cert)
    } else {
        let ts = training_set(cfg, &model)?;
        let opt = optimize(&problem(cfg, method)?, &cfg.optimizer_config(method), &ts)?;
        (opt.channel()?, opt.stages, opt.worst_certificate)
    };
    let trace = combine_traces(&stages);
    let target = TargetChannel::new(model, dt)?;
    let states = evaluation_states(cfg);
    let steps = cfg.evaluation.steps;
    let error_curve = error_curve_for_states(&target, &channel, &states, steps)?;
    let mut populations = Vec::with_capacity(states.len() * (steps + 1));
    for (i, rho0) in states.iter().enumerate() {
        let exact = target.evolve(rho0, steps);
        let approx = channel.extrapolate(rho0, steps)?.states;
        let n0 = excitation_number(rho0);
        populations.push(PopulationRow { t: 0.0, state_index: i, exact: n0, approx: n0 });
        for (k, (e, a)) in exact.iter().zip(&approx).enumerate() {
            populations.push(PopulationRow {
                t: (k + 1) as f64 * dt,
                state_index: i,
                exact: excitation_number(e),
                approx: excitation_number(a),
            });
        }
    }
    let last = stages.last();
    Ok(RunRecord {
        method,
        config: cfg.clone(),
        status: last.map_or(StopReason::Converged, |s| s.status),
        final_loss: last.map_or(0.0, |s| s.final_loss()),
        qe_total: trace.last().map_or(0, |r| r.qe_cumulative),
        final_params: last.map_or_else(Vec::new, |s| s.params.clone()),
        trace,
        stages,
        channel,
        certificate,
        error_curve,
        populations,
        wall_time: start.elapsed(),
    })
}

/// Runs every configured method in order.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, RunError> {
    cfg.methods.iter().map(|&m| run_method(cfg, m)).collect()
}
