use std::fs;
use std::path::Path;
use std::process::Command;

use holosim_cli::config::{CalibrationMode, Experiment, ScenarioConfig, Variant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_holosim"))
}

#[test]
fn empty_scenario_uses_reference_values() {
    let c = ScenarioConfig::from_toml("", Path::new(".")).unwrap();
    assert_eq!(c.experiment, Experiment::Table1);
    assert_eq!(c.calibration.mode, CalibrationMode::Full);
    assert!(!c.noise.enabled);
    assert_eq!(c.variants, vec![Variant::Ideal, Variant::T1, Variant::T1Noise]);
    assert!((c.pulse.duration - 220e-9).abs() < 1e-15);
}

#[test]
fn scenario_keys_are_parsed_in_their_units() {
    let text = r#"
experiment = "bell"
seed = 7
shots = 500
frame = "lab"

[pulse]
shape = "square"
duration_ns = 213

[noise]
enabled = true
max_shift_mhz = [0.5, 1.0]
grid_points = [5, 7]

[calibration]
mode = "single_tone"
rabi_rate_mhz = 4.69

[sweep]
variants = ["ideal", "t1"]
nmax = 3

[integrator]
fixed_step_ps = 5

[device]
t1_r_us = 10
"#;
    let c = ScenarioConfig::from_toml(text, Path::new(".")).unwrap();
    assert_eq!((c.experiment, c.seed, c.shots), (Experiment::Bell, 7, 500));
    assert_eq!(c.frame, holosim::model::Frame::Lab);
    assert!((c.pulse.duration - 213e-9).abs() < 1e-15);
    assert_eq!(c.noise.grid_points, [5, 7]);
    assert!((c.noise.max_shift[1] - holosim::device::mhz(1.0)).abs() < 1e-6);
    assert!((c.calibration.rabi_rate - 4.69e-3).abs() < 1e-15);
    assert_eq!(c.variants.len(), 2);
    assert_eq!(c.nmax, Some(3));
    assert_eq!(c.integrator.method, holosim::dynamics::Method::FixedStep);
    assert_eq!(c.integrator.fixed_step, 5e-12);
    assert!((c.device.t1_r - 10e-6).abs() < 1e-15);
}

#[test]
fn invalid_scenarios_are_rejected() {
    let base = Path::new(".");
    for text in [
        "unknown_key = 1",
        "[sweep]\ntheta_points = 0",
        "[sweep]\nvariants = []",
        "[sweep]\nvariants = [\"bogus\"]",
        "[noise]\ngrid_points = [0, 11]",
        "[noise]\nmax_shift_mhz = [-1.0, 1.0]",
        "[calibration]\nmode = \"file\"",
        "[calibration]\ntheta_rad = []",
        "[calibration]\ntable = \"missing.toml\"",
        "device_file = \"missing.toml\"",
        "frame = \"sideways\"",
        "[pulse]\nshape = \"triangle\"",
        "[integrator]\nrel_tol = -1",
    ] {
        assert!(ScenarioConfig::from_toml(text, base).is_err(), "{text}");
    }
}

#[test]
fn referenced_files_resolve_relative_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    use holosim::calibration::{CalibrationTable, StarkPoly};
    let table = CalibrationTable::single_tone([StarkPoly { a: -0.164, b: 3.196 }, StarkPoly { a: -0.094, b: 2.775 }], [0.17, 0.169], 4.7e-3);
    fs::write(dir.path().join("table.toml"), table.to_text()).unwrap();
    fs::write(dir.path().join("s.toml"), "[calibration]\ntable = \"table.toml\"\n").unwrap();
    let c = ScenarioConfig::load(&dir.path().join("s.toml")).unwrap();
    assert_eq!(c.calibration.mode, CalibrationMode::File);
    assert_eq!(c.calibration.table.unwrap(), table);
}

#[test]
fn timeseries_command_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    fs::write(&scenario, "[calibration]\nmode = \"single_tone\"\n[sweep]\nnmax = 3\n[timeseries]\nsamples = 12\n").unwrap();
    let run = |out: &str| {
        let status = bin()
            .args(["timeseries", "--config", scenario.to_str().unwrap(), "--out"])
            .arg(dir.path().join(out))
            .args(["--workers", "1", "--seed", "3"])
            .status()
            .unwrap();
        assert!(status.success());
        (fs::read(dir.path().join(out).join("timeseries.csv")).unwrap(), fs::read_to_string(dir.path().join(out).join("manifest.toml")).unwrap())
    };
    let (csv_a, manifest_a) = run("a");
    let (csv_b, _) = run("b");
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text.starts_with("time_ns,"));
    assert!(manifest_a.contains("experiment = \"timeseries\""));
    assert!(manifest_a.contains("seed = 3"));
    assert!(manifest_a.contains("name = \"timeseries.csv\""));
    assert!(manifest_a.contains("name = \"calibration_table.toml\""));
}

#[test]
fn bare_calibration_warns_and_bad_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    fs::write(&scenario, "[calibration]\nmode = \"bare\"\n[sweep]\nnmax = 3\n[timeseries]\nsamples = 3\n").unwrap();
    let out = bin().args(["timeseries", "--config", scenario.to_str().unwrap(), "--out"]).arg(dir.path().join("o")).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: no calibration table"));
    let out = bin().args(["bell", "--frame", "sideways"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["bell", "--config"]).arg(dir.path().join("nope.toml")).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn bundled_scenarios_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
        n += 1;
    }
    assert!(n >= 3);
    let reference = ScenarioConfig::load(&dir.join("reference.toml")).unwrap();
    let default = ScenarioConfig::reference(Experiment::Table1);
    let (a, b) = (&reference.device, &default.device);
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs();
    assert!(close(a.omega_r, b.omega_r) && close(a.t1_r, b.t1_r));
    for q in 0..2 {
        assert!(close(a.omega[q], b.omega[q]) && close(a.alpha[q], b.alpha[q]) && close(a.g[q], b.g[q]) && close(a.t1_q[q], b.t1_q[q]));
    }
    assert_eq!(a.space, b.space);
    assert_eq!(reference.calibration.theta_grid, default.calibration.theta_grid);
}
