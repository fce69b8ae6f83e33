use auvgp::plant::*;
use nalgebra::{Matrix3, Vector6};
use proptest::prelude::*;

fn neutral() -> PlantCoefficients {
    let mut c = PlantCoefficients::default();
    c.buoyancy = c.weight;
    c.r_b = c.r_g;
    c
}

fn simulate(plant: &Plant, start: PlantState, input: ControlInput, dt: f64, span: f64) -> PlantState {
    let steps = (span / dt).round() as usize;
    let mut s = start;
    for _ in 0..steps {
        s = plant.step(&s, &input, dt).unwrap();
    }
    s
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

#[test]
fn equilibrium_is_a_fixed_point_of_the_integrator() {
    let plant = Plant::new(neutral()).unwrap();
    let rest = PlantState::new(Vector6::zeros(), Vector6::zeros());
    for dt in [0.01, 0.05, 0.7] {
        let next = plant.step(&rest, &ControlInput::default(), dt).unwrap();
        assert_eq!(next, rest);
    }
}

#[test]
fn net_buoyancy_accelerates_upward() {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let rest = PlantState::new(Vector6::zeros(), Vector6::zeros());
    let g = plant.restoring_force(&rest.eta);
    assert!((g[2] - 7.0).abs() < 1e-12);
    let acc = plant
        .assemble_dynamics(&rest, &ControlInput::default())
        .unwrap();
    assert!(acc[2] < 0.0, "z points down, so rising means negative w-dot");
}

#[test]
fn terminal_surge_matches_drag_balance() {
    let plant = Plant::new(neutral()).unwrap();
    for n in [15.0, 25.0, 35.0] {
        let end = simulate(
            &plant,
            PlantState::cruise(1.0),
            ControlInput::new(n, 0.0, 0.0),
            0.05,
            400.0,
        );
        let expected = (plant.coefficients().k_fprop * n * n
            / plant.coefficients().quadratic_damping_linear[0])
            .sqrt();
        assert!((plant.terminal_surge(n) - expected).abs() < 1e-15);
        let rel = (end.nu[0] - expected).abs() / expected;
        assert!(rel < 1e-3, "n = {n}: u = {}, expected {expected}", end.nu[0]);
    }
}

#[test]
fn rk4_self_convergence_order() {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let mut start = PlantState::cruise(1.5);
    start.nu[1] = 0.1;
    start.nu[5] = 0.05;
    let input = ControlInput::new(30.0, 0.15, -0.1);
    let span = 10.0;
    let h = 0.2;
    let reference = simulate(&plant, start, input, h / 16.0, span);
    let err = |dt: f64| {
        let s = simulate(&plant, start, input, dt, span);
        ((s.nu - reference.nu).norm_squared() + (s.eta - reference.eta).norm_squared()).sqrt()
    };
    let (e1, e2, e3) = (err(h), err(h / 2.0), err(h / 4.0));
    let order1 = (e1 / e2).log2();
    let order2 = (e2 / e3).log2();
    assert!(order1 >= 3.5, "observed order {order1} (errors {e1:e}, {e2:e})");
    assert!(order2 >= 3.5, "observed order {order2} (errors {e2:e}, {e3:e})");
}

#[test]
fn kinetic_energy_never_increases_without_input() {
    let plant = Plant::new(neutral()).unwrap();
    let nu = Vector6::new(1.2, -0.3, 0.2, 0.4, -0.1, 0.25);
    let mut s = PlantState::new(Vector6::zeros(), nu);
    let mut energy = plant.kinetic_energy(&s.nu);
    for _ in 0..4000 {
        s = plant.step(&s, &ControlInput::default(), 0.05).unwrap();
        let e = plant.kinetic_energy(&s.nu);
        assert!(e <= energy + 1e-9, "energy rose from {energy} to {e}");
        energy = e;
    }
    assert!(energy < 0.05 * plant.kinetic_energy(&nu));
}

#[test]
fn rudder_mirror_gives_mirrored_lateral_response() {
    let mut c = PlantCoefficients::default();
    c.k_mprop = 0.0;
    let plant = Plant::new(c).unwrap();
    let start = PlantState::cruise(1.5);
    let dt = 0.05;
    let (mut a, mut b) = (start, start);
    let ia = ControlInput::new(25.0, 0.2, 0.05);
    let ib = ControlInput::new(25.0, -0.2, 0.05);
    for _ in 0..200 {
        a = plant.step(&a, &ia, dt).unwrap();
        b = plant.step(&b, &ib, dt).unwrap();
        for i in [0, 2, 4] {
            assert!((a.nu[i] - b.nu[i]).abs() < 1e-6);
        }
        for i in [1, 3, 5] {
            assert!((a.nu[i] + b.nu[i]).abs() < 1e-6);
        }
        assert!((a.yaw() + b.yaw()).abs() < 1e-6);
    }
    assert!(a.nu[5].abs() > 1e-3, "rudder must produce a yaw response");
}

#[test]
fn dynamics_are_bitwise_deterministic() {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let s = PlantState::new(
        Vector6::new(1.0, 2.0, 3.0, 0.1, -0.2, 0.3),
        Vector6::new(1.4, 0.1, -0.05, 0.02, 0.01, -0.03),
    );
    let input = ControlInput::new(22.0, 0.1, -0.2);
    let a = plant.assemble_dynamics(&s, &input).unwrap();
    let b = plant.clone().assemble_dynamics(&s, &input).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
}

#[test]
fn protocol_run_has_expected_length() {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let cfg = ExcitationConfig::default();
    let schedule = InputSchedule::for_experiment(Experiment::ChirpRampPropeller, &cfg, 2000.0);
    let log = run_experiment(&plant, &schedule, &SimulationSettings::default(), 2000.0, 1.5).unwrap();
    assert_eq!(log.len(), 1334);
    assert_eq!(*log.t.last().unwrap(), 1333.0 * 1.5);
    let rudder = log.input_channel(1);
    let elevator = log.input_channel(2);
    assert!(rudder.iter().all(|v| *v == rudder[0]));
    assert!(elevator.iter().all(|v| *v == elevator[0]));
    assert!(variance(&log.input_channel(0)) > 0.0);
}

#[test]
fn all_surface_experiment_excites_every_output() {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let cfg = ExcitationConfig::default();
    let schedule = InputSchedule::for_experiment(Experiment::ChirpRampAll, &cfg, 2000.0);
    let log = run_experiment(&plant, &schedule, &SimulationSettings::default(), 2000.0, 1.5).unwrap();
    for ch in 0..6 {
        assert!(variance(&log.output_channel(ch)) > 0.0, "channel {ch}");
    }
}

#[test]
fn long_runs_stay_within_physical_caps() {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let cfg = ExcitationConfig::default();
    for exp in [Experiment::ChirpStepAll, Experiment::ChirpRampAll] {
        let schedule = InputSchedule::for_experiment(exp, &cfg, 2000.0);
        let log =
            run_experiment(&plant, &schedule, &SimulationSettings::default(), 2000.0, 1.5).unwrap();
        assert!(log.within_caps(&VelocityCaps::default()), "{exp}");
    }
}

#[test]
fn runs_are_reproducible() {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let schedule =
        InputSchedule::for_experiment(Experiment::ChirpStepRudder, &ExcitationConfig::default(), 300.0);
    let settings = SimulationSettings::default();
    let a = run_experiment(&plant, &schedule, &settings, 300.0, 1.5).unwrap();
    let b = run_experiment(&plant, &schedule, &settings, 300.0, 1.5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn logged_inputs_are_held_between_samples() {
    // Re-integrating each sample interval with the logged command must
    // reproduce the next logged velocity exactly.
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let schedule =
        InputSchedule::for_experiment(Experiment::ChirpRampAll, &ExcitationConfig::default(), 60.0);
    let settings = SimulationSettings::default();
    let log = run_experiment(&plant, &schedule, &settings, 60.0, 1.5).unwrap();
    let mut s = PlantState::cruise(settings.initial_surge);
    for k in 0..log.len() - 1 {
        let input = ControlInput::from_array(log.inputs[k]);
        for _ in 0..30 {
            s = plant.step(&s, &input, 0.05).unwrap();
        }
        assert_eq!(s.nu.as_slice(), &log.outputs[k + 1]);
    }
}

#[test]
fn csv_file_round_trip() {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let schedule =
        InputSchedule::for_experiment(Experiment::ChirpStepAll, &ExcitationConfig::default(), 30.0);
    let log = run_experiment(&plant, &schedule, &SimulationSettings::default(), 30.0, 1.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    log.save_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().count(), log.len() + 1);
    assert_eq!(TrajectoryLog::load_csv(&path).unwrap(), log);
}

proptest! {
    #[test]
    fn rotation_block_is_a_proper_rotation(
        roll in -std::f64::consts::PI..std::f64::consts::PI,
        pitch in -(std::f64::consts::FRAC_PI_2 - GIMBAL_MARGIN)..(std::f64::consts::FRAC_PI_2 - GIMBAL_MARGIN),
        yaw in -std::f64::consts::PI..std::f64::consts::PI,
    ) {
        let r = rotation_matrix(roll, pitch, yaw);
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        prop_assert!(err < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kinematics_uses_rotation_for_linear_velocity(
        yaw in -3.0f64..3.0, pitch in -1.4f64..1.4, roll in -3.0f64..3.0,
        u in -2.0f64..2.0, v in -1.0f64..1.0, w in -1.0f64..1.0,
    ) {
        let eta = Vector6::new(0.0, 0.0, 0.0, roll, pitch, yaw);
        let nu = Vector6::new(u, v, w, 0.0, 0.0, 0.0);
        let d = kinematics(&eta, &nu).unwrap();
        let speed = (u * u + v * v + w * w).sqrt();
        prop_assert!((d.fixed_rows::<3>(0).norm() - speed).abs() < 1e-12);
        prop_assert!(d.fixed_rows::<3>(3).norm() == 0.0);
    }
}
