use qchannel::ansatz::{pulse_propagate, PulseControls, PulseSchedule};
use qchannel::channel::StinespringChannel;
use qchannel::hardware::{control_operators, drift_hamiltonian, AtomGeometry, ControlMode, InteractionKind};
use qchannel::lindblad::{exact_dilation_single_decay, haar_states, make_training_set, presets, TargetChannel};
use qchannel::metrics::{error_curve, error_curve_for_states, pauli_strings};
use qchannel::training::{optimize, OptimizerConfig, Problem, PulseProblem, StopReason};

fn decay_problem(n_seg: usize, spread: f64) -> (PulseProblem, qchannel::training::TrainingSet) {
    let model = presets::single_qubit_decay(0.5, 0.5);
    let ts = make_training_set(&model, &haar_states(1, 6, 3), &pauli_strings(1), 2, 0.25).unwrap();
    let geom = AtomGeometry::equilateral_triangle(1.0, 0.422, InteractionKind::VanDerWaals);
    let controls = PulseControls::new(drift_hamiltonian(&geom, 3).unwrap(), control_operators(3, ControlMode::Rotational))
        .unwrap();
    let mut schedule = PulseSchedule::zeros(controls.n_channels(), n_seg, 10.0, 0.0);
    schedule.randomize(spread, 3);
    (PulseProblem { controls, schedule, dim_b: 4 }, ts)
}

#[test]
fn pulse_training_reduces_extrapolation_error() {
    let (pp, ts) = decay_problem(20, 0.05);
    let target = TargetChannel::new(presets::single_qubit_decay(0.5, 0.5), 0.25).unwrap();
    let before = StinespringChannel::new(pulse_propagate(&pp.schedule, &pp.controls, None).unwrap(), 2, 4).unwrap();
    let cfg = OptimizerConfig {
        max_iters: 600,
        lambda: 1e-6,
        alpha_growth: 2.0,
        max_alpha: 1e4,
        barzilai_borwein: true,
        ..Default::default()
    };
    let opt = optimize(&Problem::Pulse(pp), &cfg, &ts).unwrap();
    let trace = opt.combined_trace();
    assert!(trace.windows(2).all(|w| w[1].objective <= w[0].objective));
    assert!(opt.worst_certificate.is_valid(1e-10));

    let after = opt.channel().unwrap();
    let e0 = error_curve(&target, &before, 5, 6, 11).unwrap();
    let e1 = error_curve(&target, &after, 5, 6, 11).unwrap();
    assert!(e1.mean_bures[5] < 0.5 * e0.mean_bures[5], "{:?} vs {:?}", e1.mean_bures, e0.mean_bures);
    assert!(trace.last().unwrap().loss < 0.1 * trace[0].loss);
}

#[test]
fn exact_dilation_matches_target_on_many_steps() {
    let target = TargetChannel::new(presets::single_qubit_decay(0.3, 0.0), 0.5).unwrap();
    let channel = StinespringChannel::new(exact_dilation_single_decay(0.3, 0.5), 2, 2).unwrap();
    let curve = error_curve_for_states(&target, &channel, &haar_states(1, 8, 21), 25).unwrap();
    assert!(curve.max().iter().all(|&b| b < 1e-7), "{:?}", curve.max());
    assert!(channel.certificate().is_valid(1e-12));
}

#[test]
fn budget_stops_training() {
    let (pp, ts) = decay_problem(6, 0.05);
    let cfg = OptimizerConfig { qe_budget: Some(500), ..Default::default() };
    let opt = optimize(&Problem::Pulse(pp), &cfg, &ts).unwrap();
    let last = opt.combined_trace().last().unwrap().qe_cumulative;
    assert_eq!(opt.status(), StopReason::Budget);
    assert!(last >= 500);
}
