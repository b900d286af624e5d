use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::OnceLock;

use holosim::calibration::CalibrationTable;
use holosim::dynamics::IntegratorConfig;
use holosim::noise::ChargeNoiseSpec;
use holosim::tomography::{bell_state, extract_relative_phase, PhaseEstimate};
use holosim_cli::config::{CalibrationMode, Experiment, ScenarioConfig, Variant};
use holosim_cli::experiments::*;
use holosim_cli::output::{phase_sweep_csv, table1_csv, theta_sweep_csv};

fn table() -> &'static CalibrationTable {
    static TABLE: OnceLock<CalibrationTable> = OnceLock::new();
    TABLE.get_or_init(|| run_calibration(&ScenarioConfig::reference(Experiment::Calibrate), false).unwrap().table)
}

fn prepared() -> Prepared {
    Prepared { table: Some(table().clone()), report: None, warnings: Vec::new() }
}

fn small(experiment: Experiment) -> ScenarioConfig {
    let mut c = ScenarioConfig::reference(experiment);
    c.nmax = Some(3);
    c.calibration.mode = CalibrationMode::File;
    c.calibration.table = Some(table().clone());
    c
}

fn noise(points: usize) -> ChargeNoiseSpec {
    ChargeNoiseSpec { grid_points: [points, points], ..ChargeNoiseSpec::reference() }
}

#[test]
fn ideal_bell_state_exact() {
    let mut c = small(Experiment::Bell);
    c.bell_open = false;
    c.shots = 0;
    let r = run_bell(&c, &prepared()).unwrap();
    assert!(r.fidelity > 0.999, "{}", r.fidelity);
    assert!(r.phase.confident);
    assert!(r.pauli.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
}

#[test]
fn finite_t1_bell_state_below_ideal() {
    let mut c = small(Experiment::Bell);
    c.shots = 0;
    let open = run_bell(&c, &prepared()).unwrap();
    c.bell_open = false;
    let closed = run_bell(&c, &prepared()).unwrap();
    assert!(open.fidelity < closed.fidelity);
    assert!(open.fidelity > 0.98 && open.fidelity < 0.9975, "{}", open.fidelity);
    assert!(open.leakage > 1e-3);
    // squared fidelity lands in the 98–99% band
    assert!((0.98..0.99).contains(&open.fidelity.powi(2)), "{}", open.fidelity.powi(2));
}

#[test]
fn charge_noise_lowers_bell_fidelity() {
    let mut c = small(Experiment::Bell);
    c.bell_open = false;
    c.shots = 0;
    let clean = run_bell(&c, &prepared()).unwrap();
    c.noise = noise(7);
    let noisy = run_bell(&c, &prepared()).unwrap();
    assert!(clean.fidelity - noisy.fidelity > 0.03, "{} {}", clean.fidelity, noisy.fidelity);
}

#[test]
fn sampled_bell_fidelity_is_deterministic_per_seed() {
    let mut c = small(Experiment::Bell);
    c.bell_open = false;
    let a = run_bell(&c, &prepared()).unwrap();
    let b = run_bell(&c, &prepared()).unwrap();
    assert_eq!(a.fidelity, b.fidelity);
    c.seed = 2;
    let d = run_bell(&c, &prepared()).unwrap();
    assert_ne!(a.fidelity, d.fidelity);
    assert!(a.fidelity > 0.95 && d.fidelity > 0.95);
}

#[test]
fn ideal_theta_sweep_follows_sin_squared() {
    let mut c = small(Experiment::ThetaSweep);
    c.variants = vec![Variant::Ideal];
    c.fidelity_phases = 1;
    c.shots = 0;
    let pts = run_theta_sweep(&c, &prepared()).unwrap();
    assert_eq!(pts.len(), 30);
    for p in &pts {
        assert!((p.target - p.theta.sin().powi(2)).abs() < 1e-3, "θ = {}: {}", p.theta, p.target);
    }
    assert_eq!(pts[0].theta, 0.0);
    assert!(pts[0].target < 1e-6);
    assert!(pts[0].fidelity > 0.9999, "{}", pts[0].fidelity);
    assert!(theta_sweep_csv(&pts).starts_with("variant,theta_rad,"));
}

#[test]
fn charge_noise_curve_lies_below_t1_curve() {
    let mut c = small(Experiment::ThetaSweep);
    c.variants = vec![Variant::T1, Variant::T1Noise];
    c.theta_points = 4;
    c.fidelity_phases = 1;
    c.shots = 0;
    c.noise = noise(3);
    let pts = run_theta_sweep(&c, &prepared()).unwrap();
    let (t1, noisy) = pts.split_at(4);
    for (a, b) in t1.iter().zip(noisy) {
        assert_eq!(a.variant, Variant::T1);
        assert_eq!(b.variant, Variant::T1Noise);
        if a.theta > 0.2 {
            assert!(b.target < a.target, "θ = {}: {} vs {}", a.theta, b.target, a.target);
            assert!(b.fidelity < a.fidelity);
        }
    }
}

#[test]
fn phase_assembly_is_exact_on_ideal_states() {
    let thetas = [0.2 * PI, 0.3 * PI];
    let phis = phase_grid(8);
    let offset = [0.37, -1.2];
    let est: Vec<PhaseEstimate> = thetas
        .iter()
        .enumerate()
        .flat_map(|(i, _)| phis.iter().map(move |&p| extract_relative_phase(&bell_state(p + offset[i]), 0.3).unwrap()))
        .collect();
    let s = assemble_phase_sweep(&thetas, &phis, &est);
    for p in &s.points {
        assert!(p.error.unwrap().abs() < 1e-9, "{:?}", p);
    }
    assert!(s.mean.abs() < 1e-9 && s.std < 1e-9);
}

#[test]
fn exact_phase_sweep_tracks_set_phase() {
    let mut c = small(Experiment::PhaseSweep);
    c.bell_open = false;
    c.shots = 0;
    c.phase_theta_points = 2;
    let s = run_phase_sweep(&c, &prepared()).unwrap();
    assert_eq!(s.points.len(), 16);
    for p in &s.points {
        let e = p.error.unwrap();
        if p.phi_set == 0.0 {
            assert_eq!(e, 0.0);
        } else {
            // microradian drive crosstalk only
            assert!(e.abs() < 1e-4, "{:?}", p);
        }
    }
    assert!(phase_sweep_csv(&s).lines().count() == 17);
}

#[test]
fn sampled_phase_sweep_is_shot_noise_limited() {
    let mut c = small(Experiment::PhaseSweep);
    c.bell_open = false;
    c.phase_theta_points = 2;
    let s = run_phase_sweep(&c, &prepared()).unwrap();
    // single-shot-noise scale for 1000 shots on each correlator
    assert!(s.std > 1e-3 && s.std < 0.1, "{}", s.std);
    // the φ = 0 reference is shared by the 7 errors at each θ
    let mean_err = s.std * (1.0 / 14.0 + 0.5 / 2.0f64).sqrt();
    assert!(s.mean.abs() < 3.0 * mean_err, "{} {}", s.mean, s.std);
    assert!(s.points.iter().filter(|p| p.phi_set == 0.0).all(|p| p.error == Some(0.0)));
}

#[test]
fn table_rows_are_a_subspace_of_a_normalized_state() {
    let c = small(Experiment::Table1);
    let rows = [table1_unitary(&c, Some(table()), c.frame).unwrap(), table1_finite_t1(&c, Some(table()), false).unwrap()];
    for r in &rows {
        assert!(100.0 * r.populations.iter().sum::<f64>() <= 100.1);
        assert!((100.0 * r.trace - 100.0).abs() < 0.01, "{}", r.trace);
    }
    assert!(rows[0].populations[0] > 0.999);
    assert!(rows[1].populations[0] < rows[0].populations[0]);
    let csv = table1_csv(&Table1 { rows: rows.to_vec(), lab_check: None });
    assert!(csv.starts_with("row,gf0_pct,gg0_pct,eg0_pct,ge0_pct,gg1_pct,fg0_pct,sum_pct\n"));
}

#[test]
fn zero_width_noise_matches_the_noiseless_run() {
    let c = small(Experiment::Table1);
    let req = TransferRequest::new(&c, FRAC_PI_2, 0.0);
    let plain = simulate(&c, Some(table()), &req).unwrap();
    let spec = ChargeNoiseSpec { max_shift: [0.0, 0.0], ..ChargeNoiseSpec::reference() };
    let avg = charge_noise_average(&c, Some(table()), &req, &spec).unwrap();
    for (a, b) in avg.populations.iter().zip(final_density(&plain).populations()) {
        assert!((a - b).abs() < 1e-15, "{a} {b}");
    }
    // raw samples carry the integrator's norm drift
    for (a, b) in avg.populations.iter().zip(plain.final_populations()) {
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }
}

#[test]
fn worst_case_offset_leaves_resonator_population() {
    let mut c = small(Experiment::Timeseries);
    c.timeseries_offsets = [holosim::device::mhz(0.9), 0.0];
    c.timeseries_samples = 23;
    let t = run_timeseries(&c, &prepared()).unwrap();
    let last = t.result.final_populations();
    let gg1 = population_of(&c.device, last, [0, 0, 1]).unwrap();
    let gf0 = population_of(&c.device, last, [0, 2, 0]).unwrap();
    assert!(gg1 > 0.01 && gf0 < 0.98, "{gg1} {gf0}");
}

#[test]
fn swap_timeseries_peaks_at_half_in_the_resonator() {
    let c = small(Experiment::Timeseries);
    let t = run_timeseries(&c, &prepared()).unwrap();
    let gg1: Vec<f64> = t.result.populations.iter().map(|p| population_of(&c.device, p, [0, 0, 1]).unwrap()).collect();
    let peak = gg1.iter().cloned().fold(0.0, f64::max);
    assert!((peak - 0.5).abs() < 0.02, "{peak}");
    assert_eq!(population_of(&c.device, &t.result.populations[0], [2, 0, 0]).unwrap(), 1.0);
    assert_eq!(t.resonator.len(), 221);
}

#[test]
fn fixed_step_runs_are_byte_identical() {
    let mut c = small(Experiment::Timeseries);
    c.integrator = IntegratorConfig::fixed(10e-12);
    c.timeseries_samples = 45;
    let a = holosim_cli::output::timeseries_output(&run_timeseries(&c, &prepared()).unwrap()).unwrap();
    let b = holosim_cli::output::timeseries_output(&run_timeseries(&c, &prepared()).unwrap()).unwrap();
    assert_eq!(a.as_bytes(), b.as_bytes());
    assert!(a.starts_with("time_ns,gf0,gg0,eg0,ge0,gg1,fg0,resonator_n\n"));
}

#[test]
fn charge_noise_average_converges_with_grid() {
    let c = small(Experiment::Table1);
    let req = TransferRequest::new(&c, FRAC_PI_2, 0.0);
    let coarse = charge_noise_average(&c, Some(table()), &req, &noise(11)).unwrap();
    let fine = charge_noise_average(&c, Some(table()), &req, &noise(22)).unwrap();
    assert_eq!((coarse.points, fine.points), (121, 484));
    for (a, b) in coarse.populations.iter().zip(&fine.populations) {
        assert!(100.0 * (a - b).abs() < 0.5, "{a} {b}");
    }
}

#[test]
fn noise_averaging_requires_enabled_noise() {
    let c = small(Experiment::Table1);
    assert!(run_charge_noise_average(&c, &prepared(), &[FRAC_PI_4], false).is_err());
}

#[test]
fn target_state_is_pure_and_normalized() {
    let t = target_state(FRAC_PI_4, 0.3);
    assert!((t.trace() - 1.0).abs() < 1e-12);
    let est = extract_relative_phase(&t, 0.3).unwrap();
    assert!((est.phase.unwrap() - 0.3).abs() < 1e-12);
}
