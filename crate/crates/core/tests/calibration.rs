use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};
use std::sync::OnceLock;

use holosim::calibration::*;
use holosim::device::{to_ghz, DeviceParams};
use holosim::fit::linear_least_squares;
use holosim::holonomy::{params_from_theta_phi, VOLT};
use holosim::model::{DrivenModel, Frame};
use holosim::pulse::EnvelopeSpec;

fn model() -> &'static DrivenModel {
    static M: OnceLock<DrivenModel> = OnceLock::new();
    M.get_or_init(|| DrivenModel::truncated(&DeviceParams::reference(), Frame::Rwa, 3).unwrap())
}

fn shape() -> EnvelopeSpec {
    EnvelopeSpec::flat_top_gaussian(1.0, 206e-9, 3.5e-9).unwrap()
}

fn report() -> &'static CalibrationReport {
    static R: OnceLock<CalibrationReport> = OnceLock::new();
    R.get_or_init(|| {
        let mut cfg = CalibrationConfig::new(shape());
        cfg.amplitude_grid = vec![0.06, 0.09, 0.12, 0.15, 0.18, 0.21];
        cfg.theta_grid = Vec::new();
        calibrate(model(), &cfg).unwrap()
    })
}

fn transfer(table: Option<&CalibrationTable>) -> f64 {
    let d = drives_for(model().params(), table, FRAC_PI_2, 0.0, &shape()).unwrap();
    let r = model().clone().with_drives(&d).unwrap().evolve(&[2, 0, 0], &[0.0, shape().duration], &holosim::dynamics::IntegratorConfig::adaptive(1e-8, 1e-10), false).unwrap();
    let k = model().space().index_of(&[0, 2, 0]).unwrap();
    r.final_populations()[k]
}

#[test]
fn stark_curvature_is_negative_and_intercept_is_the_dressed_transition() {
    let r = report();
    for q in 0..2 {
        assert!(r.stark[q].poly.a < 0.0);
        let w0 = to_ghz(model().basis().f0g1_frequency(q).unwrap());
        assert!((r.stark[q].poly.b - w0).abs() < 0.5e-3, "q{q}: {} vs {}", r.stark[q].poly.b, w0);
    }
    // qubit 1 slope against −0.164 GHz/V²
    assert!((r.stark[0].poly.a / -0.164 - 1.0).abs() < 0.02, "{}", r.stark[0].poly.a);
}

#[test]
fn stark_shift_has_no_linear_term() {
    for (q, st) in report().stark.iter().enumerate() {
        let v: Vec<f64> = st.points.iter().map(|p| p.amplitude).collect();
        let c: Vec<f64> = st.points.iter().map(|p| to_ghz(p.center)).collect();
        let powers = [0, 1, 2, 4];
        let design = nalgebra::DMatrix::from_fn(v.len(), 4, |i, k| v[i].powi(powers[k]));
        let fit = linear_least_squares(&design, &c).unwrap();
        assert!(fit.params[1].abs() < 2.0 * fit.std_error(1), "q{q}: {} ± {}", fit.params[1], fit.std_error(1));
        assert!(fit.params[2] < 0.0);
    }
}

#[test]
fn rabi_calibration_hits_the_target_rate() {
    for rb in &report().rabi {
        assert!((rb.fitted_rate / 4.70e-3 - 1.0).abs() < 5e-3, "{}", rb.fitted_rate);
    }
}

#[test]
fn calibrated_amplitudes_satisfy_the_equal_rate_condition() {
    let r = report();
    let p = params_from_theta_phi(FRAC_PI_3, 0.0).unwrap();
    let d = drives_for(model().params(), Some(&r.table), FRAC_PI_3, 0.0, &shape()).unwrap();
    let cfg = RabiConfig::default();
    let lambda = p.lambdas();
    let rate = |q: usize| measure_rabi_rate(model(), &r.stark[q].poly, q, d[q].envelope.amplitude / VOLT, &cfg).unwrap().0 / lambda[q].norm();
    let (r1, r2) = (rate(0), rate(1));
    assert!((r1 - r2).abs() / r1 < 1e-3, "{r1} {r2}");
}

#[test]
fn calibration_improves_the_swap() {
    let table = &report().table;
    let calibrated = transfer(Some(table));
    let bare = transfer(None);
    assert!(calibrated > bare, "{calibrated} vs {bare}");
    assert!(calibrated > 0.999, "{calibrated}");
}

#[test]
fn bare_difference_frequency_of_qubit_one() {
    let f = to_ghz(DeviceParams::reference().bare_f0g1_frequency(0));
    assert!((f - 3.190).abs() < 1e-9);
    assert!((f - 3.196).abs() <= 6e-3 + 1e-12);
}
