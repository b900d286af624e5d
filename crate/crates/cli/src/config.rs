//! Scenario files: TOML with durations in ns, frequencies in GHz/MHz and T1
//! in µs. Every key is optional; see `ScenarioConfig::reference`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::Deserialize;

use holosim::calibration::CalibrationTable;
use holosim::device::{DeviceConfig, DeviceParams};
use holosim::dynamics::IntegratorConfig;
use holosim::model::Frame;
use holosim::noise::{ChargeNoiseConfig, ChargeNoiseSpec};
use holosim::pulse::EnvelopeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Calibrate,
    Bell,
    ThetaSweep,
    PhaseSweep,
    Table1,
    Timeseries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Single-tone spectroscopy, Rabi rates and the cross-Stark sweep.
    Full,
    /// Single-tone steps only.
    SingleTone,
    /// Bare dressed transition frequencies and the closed-form amplitude.
    Bare,
    /// Read from `calibration.table`.
    File,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub shots: Option<usize>,
    pub workers: Option<usize>,
    pub frame: Option<String>,
    pub output: Option<PathBuf>,
    pub device_file: Option<PathBuf>,
    pub device: Option<DeviceConfig>,
    pub pulse: Option<PulseFile>,
    pub noise: Option<ChargeNoiseConfig>,
    pub calibration: Option<CalibrationFile>,
    pub sweep: Option<SweepFile>,
    pub integrator: Option<IntegratorFile>,
    pub timeseries: Option<TimeseriesFile>,
    pub bell: Option<BellFile>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PulseFile {
    /// "flat_top" or "square".
    pub shape: Option<String>,
    pub flat_ns: Option<f64>,
    pub sigma_ns: Option<f64>,
    pub duration_ns: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub mode: Option<CalibrationMode>,
    pub table: Option<PathBuf>,
    pub nmax: Option<usize>,
    pub amplitudes_v: Option<Vec<f64>>,
    pub theta_rad: Option<Vec<f64>>,
    pub rabi_rate_mhz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub theta_points: Option<usize>,
    pub phase_points: Option<usize>,
    pub phase_theta_points: Option<usize>,
    pub fidelity_phases: Option<usize>,
    pub variants: Option<Vec<String>>,
    pub nmax: Option<usize>,
    pub noise_nmax: Option<usize>,
    pub lab_check: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IntegratorFile {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub fixed_step_ps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TimeseriesFile {
    pub theta_rad: Option<f64>,
    pub samples: Option<usize>,
    pub offsets_mhz: Option<[f64; 2]>,
    pub open: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BellFile {
    pub phi_rad: Option<f64>,
    pub open: Option<bool>,
}

/// Variants of the θ sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Ideal,
    T1,
    T1Noise,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ideal => "ideal",
            Variant::T1 => "t1",
            Variant::T1Noise => "t1_noise",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ideal" => Variant::Ideal,
            "t1" => Variant::T1,
            "t1_noise" => Variant::T1Noise,
            other => bail!("unknown sweep variant {other:?}"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationSettings {
    pub mode: CalibrationMode,
    pub table: Option<CalibrationTable>,
    pub nmax: usize,
    pub amplitudes: Vec<f64>,
    pub theta_grid: Vec<f64>,
    /// Target population-oscillation frequency (GHz).
    pub rabi_rate: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub device: DeviceParams,
    pub frame: Frame,
    pub pulse: EnvelopeSpec,
    pub noise: ChargeNoiseSpec,
    pub seed: u64,
    /// Shots per tomography setting; 0 uses the exact density matrix.
    pub shots: usize,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
    pub output: PathBuf,
    pub calibration: CalibrationSettings,
    pub integrator: IntegratorConfig,
    pub theta_points: usize,
    pub phase_points: usize,
    pub phase_theta_points: usize,
    pub fidelity_phases: usize,
    pub variants: Vec<Variant>,
    /// Excitation cap for sweep simulations; `None` is the full model.
    pub nmax: Option<usize>,
    pub noise_nmax: usize,
    pub lab_check: bool,
    pub timeseries_theta: f64,
    pub timeseries_samples: usize,
    pub timeseries_offsets: [f64; 2],
    pub timeseries_open: bool,
    pub bell_phi: f64,
    pub bell_open: bool,
}

impl ScenarioConfig {
    pub fn reference(experiment: Experiment) -> Self {
        Self {
            experiment,
            device: DeviceParams::reference(),
            frame: Frame::Rwa,
            pulse: EnvelopeSpec::flat_top_gaussian(1.0, 206e-9, 3.5e-9).expect("valid shape"),
            noise: ChargeNoiseSpec::disabled(),
            seed: 1,
            shots: 1000,
            workers: 0,
            output: PathBuf::from("out"),
            calibration: CalibrationSettings {
                mode: CalibrationMode::Full,
                table: None,
                nmax: 3,
                amplitudes: vec![0.06, 0.09, 0.12, 0.15, 0.18, 0.21],
                theta_grid: vec![std::f64::consts::PI / 6.0, std::f64::consts::PI / 3.0, std::f64::consts::FRAC_PI_2],
                rabi_rate: 4.70e-3,
            },
            integrator: IntegratorConfig::adaptive(1e-8, 1e-10),
            theta_points: 30,
            phase_points: 8,
            phase_theta_points: 4,
            fidelity_phases: 4,
            variants: vec![Variant::Ideal, Variant::T1, Variant::T1Noise],
            nmax: None,
            noise_nmax: 3,
            lab_check: true,
            timeseries_theta: std::f64::consts::FRAC_PI_2,
            timeseries_samples: 221,
            timeseries_offsets: [0.0, 0.0],
            timeseries_open: false,
            bell_phi: 0.0,
            bell_open: true,
        }
    }

    /// Parses a scenario; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let raw: ScenarioFile = toml::from_str(text).context("parsing scenario file")?;
        Self::from_file(raw, base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn from_file(raw: ScenarioFile, base: &Path) -> Result<Self> {
        let mut c = Self::reference(raw.experiment.unwrap_or(Experiment::Table1));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        c.device = match (raw.device_file, raw.device) {
            (Some(_), Some(_)) => bail!("give either device_file or a [device] table, not both"),
            (Some(f), None) => {
                let f = resolve(&f);
                let text = std::fs::read_to_string(&f).with_context(|| format!("device file {} does not exist", f.display()))?;
                DeviceParams::from_config_str(&text)?
            }
            (None, Some(d)) => d.into_params()?,
            (None, None) => DeviceParams::reference(),
        };
        if let Some(s) = raw.seed {
            c.seed = s;
        }
        if let Some(s) = raw.shots {
            c.shots = s;
        }
        if let Some(w) = raw.workers {
            c.workers = w;
        }
        if let Some(f) = raw.frame {
            c.frame = f.parse()?;
        }
        if let Some(o) = raw.output {
            c.output = o;
        }
        if let Some(p) = raw.pulse {
            c.pulse = pulse_from(&p)?;
        }
        if let Some(n) = raw.noise {
            c.noise = n.to_spec()?;
        }
        if let Some(cal) = raw.calibration {
            let s = &mut c.calibration;
            if let Some(m) = cal.mode {
                s.mode = m;
            }
            if let Some(t) = cal.table {
                let t = resolve(&t);
                let text = std::fs::read_to_string(&t).with_context(|| format!("calibration table {} does not exist", t.display()))?;
                s.table = Some(CalibrationTable::from_text(&text)?);
                if cal.mode.is_none() {
                    s.mode = CalibrationMode::File;
                }
            }
            if let Some(n) = cal.nmax {
                s.nmax = n;
            }
            if let Some(a) = cal.amplitudes_v {
                s.amplitudes = a;
            }
            if let Some(t) = cal.theta_rad {
                s.theta_grid = t;
            }
            if let Some(r) = cal.rabi_rate_mhz {
                s.rabi_rate = r * 1e-3;
            }
        }
        if let Some(i) = raw.integrator {
            let mut cfg = match i.fixed_step_ps {
                Some(ps) => IntegratorConfig::fixed(ps * 1e-12),
                None => IntegratorConfig::adaptive(c.integrator.rel_tol, c.integrator.abs_tol),
            };
            if let Some(r) = i.rel_tol {
                cfg.rel_tol = r;
            }
            if let Some(a) = i.abs_tol {
                cfg.abs_tol = a;
            }
            c.integrator = cfg;
        }
        if let Some(s) = raw.sweep {
            if let Some(v) = s.theta_points {
                c.theta_points = v;
            }
            if let Some(v) = s.phase_points {
                c.phase_points = v;
            }
            if let Some(v) = s.phase_theta_points {
                c.phase_theta_points = v;
            }
            if let Some(v) = s.fidelity_phases {
                c.fidelity_phases = v;
            }
            if let Some(v) = s.variants {
                c.variants = v.iter().map(|s| Variant::parse(s)).collect::<Result<_>>()?;
            }
            if let Some(v) = s.nmax {
                c.nmax = Some(v);
            }
            if let Some(v) = s.noise_nmax {
                c.noise_nmax = v;
            }
            if let Some(v) = s.lab_check {
                c.lab_check = v;
            }
        }
        if let Some(t) = raw.timeseries {
            if let Some(v) = t.theta_rad {
                c.timeseries_theta = v;
            }
            if let Some(v) = t.samples {
                c.timeseries_samples = v;
            }
            if let Some(v) = t.offsets_mhz {
                c.timeseries_offsets = v.map(holosim::device::mhz);
            }
            if let Some(v) = t.open {
                c.timeseries_open = v;
            }
        }
        if let Some(b) = raw.bell {
            if let Some(v) = b.phi_rad {
                c.bell_phi = v;
            }
            if let Some(v) = b.open {
                c.bell_open = v;
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.noise.validate()?;
        self.integrator.validate()?;
        let s = &self.calibration;
        if s.mode == CalibrationMode::File && s.table.is_none() {
            bail!("calibration mode \"file\" needs calibration.table");
        }
        if let Some(t) = &s.table {
            t.validate()?;
        }
        if s.amplitudes.len() < 3 {
            bail!("calibration needs at least three amplitudes");
        }
        if s.mode == CalibrationMode::Full && s.theta_grid.is_empty() {
            bail!("full calibration needs a nonempty θ grid");
        }
        if !(s.rabi_rate > 0.0) {
            bail!("Rabi rate must be positive");
        }
        if s.nmax < 2 || self.noise_nmax < 2 || self.nmax.is_some_and(|n| n < 2) {
            bail!("excitation caps below 2 cannot hold the transfer states");
        }
        for (name, v) in [
            ("theta_points", self.theta_points),
            ("phase_points", self.phase_points),
            ("phase_theta_points", self.phase_theta_points),
            ("fidelity_phases", self.fidelity_phases),
            ("timeseries samples", self.timeseries_samples),
        ] {
            if v == 0 {
                bail!("{name} must be nonempty");
            }
        }
        if self.timeseries_samples < 2 {
            bail!("timeseries needs at least two samples");
        }
        if self.variants.is_empty() {
            bail!("sweep variants must be nonempty");
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.timeseries_theta) {
            bail!("timeseries θ must lie in [0, π]");
        }
        Ok(())
    }
}

fn pulse_from(p: &PulseFile) -> Result<EnvelopeSpec> {
    let ns = |v: f64| v * 1e-9;
    Ok(match p.shape.as_deref().unwrap_or("flat_top") {
        "flat_top" => {
            let flat = ns(p.flat_ns.unwrap_or(206.0));
            let sigma = ns(p.sigma_ns.unwrap_or(3.5));
            match p.duration_ns {
                Some(d) => EnvelopeSpec::flat_top_gaussian_with_duration(1.0, flat, sigma, ns(d))?,
                None => EnvelopeSpec::flat_top_gaussian(1.0, flat, sigma)?,
            }
        }
        "square" => EnvelopeSpec::square(1.0, ns(p.duration_ns.unwrap_or(213.0)))?,
        other => bail!("unknown pulse shape {other:?}"),
    })
}
