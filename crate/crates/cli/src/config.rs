//! Experiment configuration. One TOML file per experiment; every section
//! rejects unknown keys.

use std::fmt;
use std::path::Path;

use qchannel::hardware::{AtomGeometry, ControlMode, InteractionKind};
use qchannel::lindblad::{presets, JumpOperator, LindbladModel};
use qchannel::linalg::{CMatrix, C64};
use qchannel::training::OptimizerConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A configuration problem, reported against the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gate,
    StochasticGate,
    Pulse,
    SplitPulse,
    /// Skips training and evaluates the closed-form single-qubit decay dilation.
    ExactDilation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gate => "gate",
            Method::StochasticGate => "stochastic_gate",
            Method::Pulse => "pulse",
            Method::SplitPulse => "split_pulse",
            Method::ExactDilation => "exact_dilation",
        }
    }

    pub fn is_gate(self) -> bool {
        matches!(self, Method::Gate | Method::StochasticGate)
    }

    pub fn is_pulse(self) -> bool {
        matches!(self, Method::Pulse | Method::SplitPulse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Seeds parameter initialization and stochastic gate sampling.
    #[serde(default)]
    pub seed: u64,
    /// Each method is trained independently and exported to its own
    /// subdirectory.
    pub methods: Vec<Method>,
    pub channel: ChannelConfig,
    pub hardware: HardwareConfig,
    #[serde(default)]
    pub gate: GateConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    SingleQubitDecay {
        gamma: f64,
        #[serde(default)]
        omega: f64,
    },
    PlusMinusDecay {
        gamma: f64,
    },
    TwoQubitDecay {
        gammas: [f64; 2],
        #[serde(default)]
        coupling: f64,
    },
    DrivenTwoQubitDecay {
        gammas: [f64; 2],
        omegas: [f64; 2],
        #[serde(default)]
        coupling: f64,
    },
    FourLevel {
        /// Rates for 3→2, 2→1 and 1→0.
        rates: [f64; 3],
    },
    Tfim {
        field: f64,
        coupling: f64,
        /// One decay rate per spin.
        gammas: Vec<f64>,
    },
    Explicit {
        hamiltonian: MatrixSpec,
        #[serde(default)]
        jumps: Vec<JumpSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub op: MatrixSpec,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Line,
    Triangle,
    /// Two system atoms on a square with two ancillas, a third ancilla capping
    /// the pair. Five atoms.
    Cluster,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    VanDerWaals,
    Dipole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controls {
    Coupling,
    Detuning,
    Rotational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub ancillas: usize,
    pub layout: Layout,
    /// Nearest-neighbour distance in µm.
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Used with `layout = "explicit"`, system atoms first.
    #[serde(default)]
    pub positions: Vec<[f64; 3]>,
    /// `C₆` (kHz·µm⁶) or `C₃` (kHz·µm³).
    pub coefficient: f64,
    #[serde(default = "default_interaction")]
    pub interaction: Interaction,
    #[serde(default = "default_controls")]
    pub controls: Controls,
}

fn default_spacing() -> f64 {
    1.0
}

fn default_interaction() -> Interaction {
    Interaction::VanDerWaals
}

fn default_controls() -> Controls {
    Controls::Rotational
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub depth: usize,
    /// Duration of one rotation layer (ms).
    pub tau_g: f64,
    /// Entangler duration (ms).
    pub tau_v: f64,
    /// Initial angles are drawn uniformly from `[−init_spread, init_spread]`.
    pub init_spread: f64,
    /// Fraction of angles updated per iteration by `stochastic_gate`.
    pub batch_fraction: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { depth: 10, tau_g: 1.0, tau_v: 10.0, init_spread: 0.1, batch_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub segments: usize,
    /// Total pulse duration (ms).
    pub tau_f: f64,
    /// Energy penalty weight.
    pub lambda: f64,
    pub init_spread: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self { segments: 30, tau_f: 10.0, lambda: 1e-3, init_spread: 0.0 }
    }
}

/// System-only pulse fitted to the dissipation-free data before the full
/// dilation is trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub segments: usize,
    pub tau_f: f64,
    pub iters: usize,
    pub init_spread: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { segments: 5, tau_f: 1.0, iters: 200, init_spread: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSet {
    /// `n_states` Haar-random pure states drawn from `state_seed`.
    Haar,
    /// Computational basis states and the equal superpositions of every pair.
    BasisSuperposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCount {
    /// Every (state, observable) pair carries a target at every step.
    PerStep,
    /// The number of (state, observable, step) targets equals the number of
    /// (state, observable) combinations: a seeded subset of
    /// `⌈states·observables / n_steps⌉` pairs is kept.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub n_steps: usize,
    pub dt: f64,
    pub states: StateSet,
    #[serde(default = "default_n_states")]
    pub n_states: usize,
    #[serde(default)]
    pub state_seed: u64,
    #[serde(default = "default_pair_count")]
    pub pair_count: PairCount,
}

fn default_n_states() -> usize {
    10
}

fn default_pair_count() -> PairCount {
    PairCount::PerStep
}

/// Optimizer knobs; `seed`, `lambda` and `batch_fraction` come from the
/// experiment, pulse and gate sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub max_iters: usize,
    pub fd_eps: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub armijo_max_backtracks: usize,
    pub initial_alpha: f64,
    pub alpha_growth: f64,
    pub max_alpha: f64,
    pub barzilai_borwein: bool,
    pub loss_tol: f64,
    pub stall_limit: usize,
    pub qe_budget: Option<u64>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            max_iters: d.max_iters,
            fd_eps: d.fd_eps,
            armijo_c: d.armijo_c,
            armijo_shrink: d.armijo_shrink,
            armijo_max_backtracks: d.armijo_max_backtracks,
            initial_alpha: d.initial_alpha,
            alpha_growth: d.alpha_growth,
            max_alpha: d.max_alpha,
            barzilai_borwein: d.barzilai_borwein,
            loss_tol: d.loss_tol,
            stall_limit: d.stall_limit,
            qe_budget: d.qe_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Fresh Haar-random states for the error curve and population export.
    pub n_haar_states: usize,
    /// Extrapolation steps.
    pub steps: usize,
    pub state_seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { n_haar_states: 10, steps: 10, state_seed: 99 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Defaults to `runs/<name>`.
    pub dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| locate(text, s.start)).unwrap_or_default();
            ConfigError::new(field, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn system_qubits(&self) -> usize {
        match &self.channel {
            ChannelConfig::SingleQubitDecay { .. } | ChannelConfig::PlusMinusDecay { .. } => 1,
            ChannelConfig::TwoQubitDecay { .. }
            | ChannelConfig::DrivenTwoQubitDecay { .. }
            | ChannelConfig::FourLevel { .. } => 2,
            ChannelConfig::Tfim { gammas, .. } => gammas.len(),
            ChannelConfig::Explicit { hamiltonian, .. } => hamiltonian.re.len().max(1).trailing_zeros() as usize,
        }
    }

    pub fn total_qubits(&self) -> usize {
        self.system_qubits() + self.hardware.ancillas
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(ConfigError::new("name", "must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::new("methods", "at least one method is required"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(ConfigError::new("methods", format!("{} listed twice", m.as_str())));
            }
        }
        let model = self.model()?;
        let dim_a = model.dim();
        let m_a = self.system_qubits();
        if m_a == 0 {
            return Err(ConfigError::new("channel", "system must have at least one qubit"));
        }
        let m_b = self.hardware.ancillas;
        if m_b == 0 && self.methods.iter().any(|m| *m != Method::ExactDilation) {
            return Err(ConfigError::new("hardware.ancillas", "at least one ancilla qubit is required"));
        }
        if (1usize << m_b) > dim_a * dim_a {
            return Err(ConfigError::new(
                "hardware.ancillas",
                format!("ancilla dimension 2^{m_b} exceeds the dilation bound {}", dim_a * dim_a),
            ));
        }
        if self.methods.contains(&Method::ExactDilation) {
            match self.channel {
                ChannelConfig::SingleQubitDecay { omega, .. } if omega == 0.0 => {}
                _ => {
                    return Err(ConfigError::new(
                        "methods",
                        "exact_dilation requires channel.preset = \"single_qubit_decay\" with omega = 0",
                    ))
                }
            }
            if m_b != 1 {
                return Err(ConfigError::new("hardware.ancillas", "exact_dilation uses exactly one ancilla"));
            }
        }
        self.geometry()?;
        let t = &self.training;
        if t.n_steps == 0 {
            return Err(ConfigError::new("training.n_steps", "must be at least 1"));
        }
        positive("training.dt", t.dt)?;
        if t.n_states == 0 && t.states == StateSet::Haar {
            return Err(ConfigError::new("training.n_states", "must be at least 1"));
        }
        if self.methods.iter().any(|m| m.is_gate()) {
            let g = &self.gate;
            if g.depth == 0 {
                return Err(ConfigError::new("gate.depth", "must be at least 1"));
            }
            non_negative("gate.tau_g", g.tau_g)?;
            non_negative("gate.tau_v", g.tau_v)?;
            non_negative("gate.init_spread", g.init_spread)?;
            if !(g.batch_fraction > 0.0 && g.batch_fraction <= 1.0) {
                return Err(ConfigError::new("gate.batch_fraction", "must lie in (0, 1]"));
            }
        }
        if self.methods.iter().any(|m| m.is_pulse()) {
            let p = &self.pulse;
            if p.segments == 0 {
                return Err(ConfigError::new("pulse.segments", "must be at least 1"));
            }
            positive("pulse.tau_f", p.tau_f)?;
            non_negative("pulse.lambda", p.lambda)?;
            non_negative("pulse.init_spread", p.init_spread)?;
        }
        if self.methods.contains(&Method::SplitPulse) {
            let s = &self.split;
            if s.segments == 0 {
                return Err(ConfigError::new("split.segments", "must be at least 1"));
            }
            positive("split.tau_f", s.tau_f)?;
            non_negative("split.init_spread", s.init_spread)?;
        }
        let e = &self.evaluation;
        if e.n_haar_states == 0 {
            return Err(ConfigError::new("evaluation.n_haar_states", "must be at least 1"));
        }
        if e.steps == 0 {
            return Err(ConfigError::new("evaluation.steps", "must be at least 1"));
        }
        self.optimizer_config(Method::Pulse)
            .validate()
            .map_err(|e| ConfigError::new("optimizer", e.to_string()))?;
        Ok(())
    }

    /// Warnings that do not block a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Ok(model) = self.model() {
            let k = model.jumps().len();
            let needed = if k <= 1 { 0 } else { usize::BITS - (k - 1).leading_zeros() } as usize;
            if self.hardware.ancillas < needed.max(usize::from(k > 0)) {
                out.push(format!(
                    "hardware.ancillas = {} is fewer than the {} qubits needed for {k} jump operators",
                    self.hardware.ancillas,
                    needed.max(1)
                ));
            }
        }
        out
    }

    pub fn model(&self) -> Result<LindbladModel, ConfigError> {
        let model = match &self.channel {
            ChannelConfig::SingleQubitDecay { gamma, omega } => {
                non_negative("channel.gamma", *gamma)?;
                presets::single_qubit_decay(*gamma, *omega)
            }
            ChannelConfig::PlusMinusDecay { gamma } => {
                non_negative("channel.gamma", *gamma)?;
                presets::plus_minus_decay(*gamma)
            }
            ChannelConfig::TwoQubitDecay { gammas, coupling } => {
                for g in gammas {
                    non_negative("channel.gammas", *g)?;
                }
                presets::two_qubit_decay(gammas[0], gammas[1], *coupling)
            }
            ChannelConfig::DrivenTwoQubitDecay { gammas, omegas, coupling } => {
                for g in gammas {
                    non_negative("channel.gammas", *g)?;
                }
                presets::driven_two_qubit_decay(*gammas, *omegas, *coupling)
            }
            ChannelConfig::FourLevel { rates } => {
                for r in rates {
                    non_negative("channel.rates", *r)?;
                }
                presets::four_level_cascade(*rates)
            }
            ChannelConfig::Tfim { field, coupling, gammas } => {
                if gammas.is_empty() {
                    return Err(ConfigError::new("channel.gammas", "needs one rate per spin"));
                }
                for g in gammas {
                    non_negative("channel.gammas", *g)?;
                }
                presets::tfim(*field, *coupling, gammas)
            }
            ChannelConfig::Explicit { hamiltonian, jumps } => {
                let h = hamiltonian.to_matrix("channel.hamiltonian")?;
                if !h.nrows().is_power_of_two() || h.nrows() < 2 {
                    return Err(ConfigError::new("channel.hamiltonian", "dimension must be a power of two ≥ 2"));
                }
                let jumps = jumps
                    .iter()
                    .enumerate()
                    .map(|(i, j)| {
                        Ok(JumpOperator { op: j.op.to_matrix(&format!("channel.jumps[{i}].op"))?, rate: j.rate })
                    })
                    .collect::<Result<Vec<_>, ConfigError>>()?;
                LindbladModel::new(h, jumps).map_err(|e| ConfigError::new("channel", e.to_string()))?
            }
        };
        Ok(model)
    }

    pub fn geometry(&self) -> Result<AtomGeometry, ConfigError> {
        let h = &self.hardware;
        positive("hardware.spacing", h.spacing)?;
        if !h.coefficient.is_finite() {
            return Err(ConfigError::new("hardware.coefficient", "must be finite"));
        }
        let kind = match h.interaction {
            Interaction::VanDerWaals => InteractionKind::VanDerWaals,
            Interaction::Dipole => InteractionKind::Dipole,
        };
        let n = self.total_qubits();
        let expect = |required: usize, name: &str| {
            if n == required {
                Ok(())
            } else {
                Err(ConfigError::new(
                    "hardware.layout",
                    format!("{name} holds {required} atoms but the register has {n} qubits"),
                ))
            }
        };
        match h.layout {
            Layout::Line => Ok(AtomGeometry::line(n, h.spacing, h.coefficient, kind)),
            Layout::Triangle => {
                expect(3, "triangle")?;
                Ok(AtomGeometry::equilateral_triangle(h.spacing, h.coefficient, kind))
            }
            Layout::Cluster => {
                expect(5, "cluster")?;
                Ok(AtomGeometry::two_plus_three_cluster(h.spacing, h.coefficient, kind))
            }
            Layout::Explicit => {
                if h.positions.len() != n {
                    return Err(ConfigError::new(
                        "hardware.positions",
                        format!("{} positions given for {n} qubits", h.positions.len()),
                    ));
                }
                AtomGeometry::new(h.positions.clone(), h.coefficient, kind)
                    .map_err(|e| ConfigError::new("hardware.positions", e.to_string()))
            }
        }
    }

    pub fn control_mode(&self) -> ControlMode {
        match self.hardware.controls {
            Controls::Coupling => ControlMode::Coupling,
            Controls::Detuning => ControlMode::Detuning,
            Controls::Rotational => ControlMode::Rotational,
        }
    }

    pub fn optimizer_config(&self, method: Method) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            max_iters: o.max_iters,
            fd_eps: o.fd_eps,
            armijo_c: o.armijo_c,
            armijo_shrink: o.armijo_shrink,
            armijo_max_backtracks: o.armijo_max_backtracks,
            batch_fraction: if method == Method::StochasticGate { self.gate.batch_fraction } else { 1.0 },
            seed: self.seed,
            lambda: if method.is_pulse() { self.pulse.lambda } else { 0.0 },
            initial_alpha: o.initial_alpha,
            alpha_growth: o.alpha_growth,
            max_alpha: o.max_alpha,
            barzilai_borwein: o.barzilai_borwein,
            loss_tol: o.loss_tol,
            stall_limit: o.stall_limit,
            qe_budget: o.qe_budget,
        }
    }

    pub fn output_dir(&self) -> String {
        self.output.dir.clone().unwrap_or_else(|| format!("runs/{}", self.name))
    }
}

impl MatrixSpec {
    fn to_matrix(&self, field: &str) -> Result<CMatrix, ConfigError> {
        let n = self.re.len();
        if n == 0 || self.re.iter().any(|r| r.len() != n) {
            return Err(ConfigError::new(format!("{field}.re"), "must be a non-empty square matrix"));
        }
        if !self.im.is_empty() && (self.im.len() != n || self.im.iter().any(|r| r.len() != n)) {
            return Err(ConfigError::new(format!("{field}.im"), format!("must be {n}×{n} or omitted")));
        }
        let im = |i: usize, j: usize| if self.im.is_empty() { 0.0 } else { self.im[i][j] };
        Ok(CMatrix::from_fn(n, n, |i, j| C64::new(self.re[i][j], im(i, j))))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be non-negative, got {v}")))
    }
}

/// Dotted path of the TOML key enclosing byte offset `pos`, best effort.
fn locate(text: &str, pos: usize) -> String {
    let mut section = String::new();
    let mut key = String::new();
    let mut offset = 0;
    for line in text.lines() {
        if offset > pos {
            break;
        }
        let t = line.trim();
        if t.starts_with('[') {
            section = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
        offset += line.len() + 1;
    }
    match (section.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => section,
        (false, false) => format!("{section}.{key}"),
    }
}
