//! End-to-end experiments on top of the holosim library.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use anyhow::{bail, Result};
use rayon::prelude::*;

use holosim::calibration::{calibrate, drives_for, CalibrationConfig, CalibrationReport, CalibrationTable};
use holosim::device::{DeviceParams, DrivePulse};
use holosim::dynamics::{linspace, EvolutionResult};
use holosim::linalg::{CMatrix, C64, ZERO};
use holosim::model::{DrivenModel, Frame};
use holosim::noise::{offset_drives, ChargeNoiseSpec};
use holosim::quantum::{fidelity, DensityMatrix, HilbertSpace};
use holosim::tomography::{
    extract_relative_phase, map_to_computational, pauli_vector, reconstruct_density_matrix, sample_all_settings, wrap_phase,
    PauliVector, PhaseEstimate, EG, GE, PHASE_POPULATION_THRESHOLD,
};

use crate::config::{CalibrationMode, ScenarioConfig, Variant};

pub const SOURCE: [usize; 3] = [2, 0, 0];

/// Population-table columns, in print order.
pub const TABLE1_STATES: [(&str, [usize; 3]); 6] = [
    ("gf0", [0, 2, 0]),
    ("gg0", [0, 0, 0]),
    ("eg0", [1, 0, 0]),
    ("ge0", [0, 1, 0]),
    ("gg1", [0, 0, 1]),
    ("fg0", [2, 0, 0]),
];

/// Drive calibration in effect for a run, plus the full report when it was
/// computed here.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: Option<CalibrationTable>,
    pub report: Option<CalibrationReport>,
    pub warnings: Vec<String>,
}

pub fn calibration_model(cfg: &ScenarioConfig) -> Result<DrivenModel> {
    Ok(DrivenModel::truncated(&cfg.device, Frame::Rwa, cfg.calibration.nmax)?)
}

pub fn calibration_config(cfg: &ScenarioConfig, cross: bool) -> CalibrationConfig {
    let mut c = CalibrationConfig::new(cfg.pulse);
    c.amplitude_grid = cfg.calibration.amplitudes.clone();
    c.rabi_rate = cfg.calibration.rabi_rate;
    c.theta_grid = if cross { cfg.calibration.theta_grid.clone() } else { Vec::new() };
    c
}

pub fn run_calibration(cfg: &ScenarioConfig, cross: bool) -> Result<CalibrationReport> {
    Ok(calibrate(&calibration_model(cfg)?, &calibration_config(cfg, cross))?)
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared> {
    let mut warnings = cfg.noise.warnings();
    let (table, report) = match cfg.calibration.mode {
        CalibrationMode::Full | CalibrationMode::SingleTone => {
            let r = run_calibration(cfg, cfg.calibration.mode == CalibrationMode::Full)?;
            (Some(r.table.clone()), Some(r))
        }
        CalibrationMode::File => (cfg.calibration.table.clone(), None),
        CalibrationMode::Bare => {
            warnings.push("no calibration table: driving at the undriven transition frequencies".into());
            (None, None)
        }
    };
    Ok(Prepared { table, report, warnings })
}

/// One two-tone pulse from `|fg0⟩`.
#[derive(Debug, Clone)]
pub struct TransferRequest {
    pub device: DeviceParams,
    pub theta: f64,
    pub phi: f64,
    pub offsets: [f64; 2],
    pub open: bool,
    pub nmax: Option<usize>,
    pub frame: Frame,
    /// Sample times; empty means start and end only.
    pub times: Vec<f64>,
}

impl TransferRequest {
    pub fn new(cfg: &ScenarioConfig, theta: f64, phi: f64) -> Self {
        Self {
            device: cfg.device.clone(),
            theta,
            phi,
            offsets: [0.0, 0.0],
            open: false,
            nmax: cfg.nmax,
            frame: cfg.frame,
            times: Vec::new(),
        }
    }

    pub fn open(mut self, open: bool) -> Self {
        self.open = open;
        self
    }

    pub fn nmax(mut self, nmax: Option<usize>) -> Self {
        self.nmax = nmax;
        self
    }
}

pub fn drives(cfg: &ScenarioConfig, table: Option<&CalibrationTable>, theta: f64, phi: f64) -> Result<[DrivePulse; 2]> {
    Ok(drives_for(&cfg.device, table, theta, phi, &cfg.pulse)?)
}

pub fn simulate(cfg: &ScenarioConfig, table: Option<&CalibrationTable>, req: &TransferRequest) -> Result<EvolutionResult> {
    let d = offset_drives(&drives(cfg, table, req.theta, req.phi)?, req.offsets);
    let model = match req.nmax {
        Some(n) => DrivenModel::truncated(&req.device, req.frame, n)?,
        None => DrivenModel::new(&req.device, req.frame)?,
    };
    let model = model.with_drives(&d)?;
    let times = if req.times.is_empty() { vec![0.0, cfg.pulse.duration] } else { req.times.clone() };
    Ok(model.evolve(&SOURCE, &times, &cfg.integrator, req.open)?)
}

pub fn final_density(result: &EvolutionResult) -> DensityMatrix {
    result.final_state().to_density_matrix()
}

/// Weighted average over a charge-noise grid.
#[derive(Debug, Clone)]
pub struct NoiseAverage {
    pub rho: DensityMatrix,
    pub populations: Vec<f64>,
    pub points: usize,
}

/// Final state averaged over the drive-frequency offsets of `spec`, each
/// weighted by its arcsine cell mass.
pub fn charge_noise_average(
    cfg: &ScenarioConfig,
    table: Option<&CalibrationTable>,
    base: &TransferRequest,
    spec: &ChargeNoiseSpec,
) -> Result<NoiseAverage> {
    let grid = spec.grid()?;
    let states: Vec<(f64, CMatrix)> = grid
        .par_iter()
        .map(|(off, w)| {
            let mut req = base.clone();
            req.offsets = [base.offsets[0] + off[0], base.offsets[1] + off[1]];
            req.times = Vec::new();
            let r = simulate(cfg, table, &req)?;
            Ok((*w, final_density(&r).matrix().clone()))
        })
        .collect::<Result<_>>()?;
    let space = base_space(&base.device);
    let n = space.total_dim();
    let mut acc = CMatrix::from_element(n, n, ZERO);
    for (w, m) in &states {
        acc += m * C64::new(*w, 0.0);
    }
    let rho = DensityMatrix::with_tolerance(space, acc, 1e-6)?;
    let populations = rho.populations();
    Ok(NoiseAverage { rho, populations, points: grid.len() })
}

fn base_space(device: &DeviceParams) -> HilbertSpace {
    device.space.clone()
}

/// Noise-averaged final state at each θ, at φ = 0.
pub fn run_charge_noise_average(cfg: &ScenarioConfig, prepared: &Prepared, thetas: &[f64], open: bool) -> Result<Vec<(f64, NoiseAverage)>> {
    if !cfg.noise.enabled {
        bail!("charge-noise averaging needs noise.enabled = true");
    }
    thetas
        .iter()
        .map(|&t| {
            let req = TransferRequest::new(cfg, t, 0.0).open(open).nmax(Some(cfg.noise_nmax));
            Ok((t, charge_noise_average(cfg, prepared.table.as_ref(), &req, &cfg.noise)?))
        })
        .collect()
}

pub fn population_of(device: &DeviceParams, pops: &[f64], labels: [usize; 3]) -> Result<f64> {
    Ok(pops[device.space.index_of(&labels)?])
}

/// Probability that `subsystem` is at `level`.
pub fn marginal(device: &DeviceParams, pops: &[f64], subsystem: usize, level: usize) -> f64 {
    pops.iter().enumerate().filter(|(k, _)| device.space.labels_of(*k)[subsystem] == level).map(|(_, p)| p).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub name: String,
    /// Fractions in `TABLE1_STATES` order.
    pub populations: [f64; 6],
    pub trace: f64,
}

impl Table1Row {
    fn from_pops(name: &str, device: &DeviceParams, pops: &[f64]) -> Result<Self> {
        let mut out = [0.0; 6];
        for (k, (_, l)) in TABLE1_STATES.iter().enumerate() {
            out[k] = population_of(device, pops, *l)?;
        }
        Ok(Self { name: name.into(), populations: out, trace: pops.iter().sum() })
    }
}

#[derive(Debug, Clone)]
pub struct Table1 {
    pub rows: Vec<Table1Row>,
    /// Unitary row repeated in the lab frame.
    pub lab_check: Option<Table1Row>,
}

pub const TABLE1_ROWS: [&str; 4] = ["unitary", "finite_t1", "qubit_t1_only", "finite_t1_charge_noise"];

pub fn table1_unitary(cfg: &ScenarioConfig, table: Option<&CalibrationTable>, frame: Frame) -> Result<Table1Row> {
    let mut req = TransferRequest::new(cfg, FRAC_PI_2, 0.0);
    req.frame = frame;
    let r = simulate(cfg, table, &req)?;
    Table1Row::from_pops(TABLE1_ROWS[0], &cfg.device, r.final_populations())
}

pub fn table1_finite_t1(cfg: &ScenarioConfig, table: Option<&CalibrationTable>, resonator_decay: bool) -> Result<Table1Row> {
    let mut req = TransferRequest::new(cfg, FRAC_PI_2, 0.0).open(true);
    let name = if resonator_decay {
        TABLE1_ROWS[1]
    } else {
        req.device = req.device.clone().with_t1(req.device.t1_q, f64::INFINITY);
        TABLE1_ROWS[2]
    };
    let r = simulate(cfg, table, &req)?;
    Table1Row::from_pops(name, &cfg.device, r.final_populations())
}

/// Finite T1 with charge dispersion; uses the scenario's noise grid, or
/// the reference ±0.9/±1.5 MHz grid when noise is disabled.
pub fn table1_charge_noise(cfg: &ScenarioConfig, table: Option<&CalibrationTable>) -> Result<Table1Row> {
    let spec = if cfg.noise.enabled { cfg.noise } else { ChargeNoiseSpec::reference() };
    let req = TransferRequest::new(cfg, FRAC_PI_2, 0.0).open(true).nmax(Some(cfg.noise_nmax));
    let avg = charge_noise_average(cfg, table, &req, &spec)?;
    Table1Row::from_pops(TABLE1_ROWS[3], &cfg.device, &avg.populations)
}

pub fn run_table1(cfg: &ScenarioConfig, prepared: &Prepared) -> Result<Table1> {
    let t = prepared.table.as_ref();
    let rows = vec![
        table1_unitary(cfg, t, cfg.frame)?,
        table1_finite_t1(cfg, t, true)?,
        table1_finite_t1(cfg, t, false)?,
        table1_charge_noise(cfg, t)?,
    ];
    let lab_check = if cfg.lab_check && cfg.frame == Frame::Rwa { Some(table1_unitary(cfg, t, Frame::Lab)?) } else { None };
    Ok(Table1 { rows, lab_check })
}

/// `cos θ |eg⟩ + e^{iφ} sin θ |ge⟩`.
pub fn target_state(theta: f64, phase: f64) -> DensityMatrix {
    let mut psi = nalgebra::DVector::from_element(4, ZERO);
    psi[EG] = C64::new(theta.cos(), 0.0);
    psi[GE] = C64::from_polar(theta.sin(), phase);
    let m = &psi * psi.adjoint();
    DensityMatrix::with_tolerance(HilbertSpace::new(vec![2, 2]).expect("valid dims"), m, 1e-9).expect("pure state")
}

/// Simulation settings shared by the tomography experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVariant {
    pub open: bool,
    pub noise: bool,
}

impl StateVariant {
    pub fn of(v: Variant) -> Self {
        match v {
            Variant::Ideal => Self { open: false, noise: false },
            Variant::T1 => Self { open: true, noise: false },
            Variant::T1Noise => Self { open: true, noise: true },
        }
    }
}

/// Full-space final state of the operation at (θ, φ).
pub fn final_state(cfg: &ScenarioConfig, table: Option<&CalibrationTable>, theta: f64, phi: f64, v: StateVariant) -> Result<DensityMatrix> {
    let req = TransferRequest::new(cfg, theta, phi).open(v.open);
    if v.noise {
        let spec = if cfg.noise.enabled { cfg.noise } else { ChargeNoiseSpec::reference() };
        let req = req.nmax(Some(cfg.nmax.map_or(cfg.noise_nmax, |n| n.min(cfg.noise_nmax))));
        Ok(charge_noise_average(cfg, table, &req, &spec)?.rho)
    } else {
        Ok(final_density(&simulate(cfg, table, &req)?))
    }
}

/// The computational-subspace state as measured: exact when `shots` is 0,
/// otherwise reconstructed from sampled tomography.
pub fn measure(rho: &DensityMatrix, shots: usize, seed: u64) -> Result<DensityMatrix> {
    if shots == 0 {
        return Ok(rho.clone());
    }
    Ok(reconstruct_density_matrix(&sample_all_settings(rho, shots, seed)?)?)
}

#[derive(Debug, Clone)]
pub struct BellReport {
    pub theta: f64,
    pub phi: f64,
    /// Systematic phase measured at φ = 0 and removed from the target.
    pub reference_phase: f64,
    /// Fidelity with leaked population counted as error.
    pub fidelity: f64,
    pub exact_fidelity: f64,
    /// Fidelity of the renormalized computational block.
    pub postselected_fidelity: f64,
    pub leakage: f64,
    pub pauli: PauliVector,
    pub phase: PhaseEstimate,
    pub measured: DensityMatrix,
    pub target: DensityMatrix,
    pub shots: usize,
}

/// Operation at `theta` from `|fg0⟩`, mapped, tomographed and compared with
/// the ideal target after removing the φ = 0 systematic phase.
pub fn tomography_run(
    cfg: &ScenarioConfig,
    table: Option<&CalibrationTable>,
    theta: f64,
    phi: f64,
    v: StateVariant,
    shots: usize,
    seed: u64,
) -> Result<BellReport> {
    let exact = map_to_computational(&final_state(cfg, table, theta, phi, v)?)?;
    let reference = if phi == 0.0 { exact.rho.clone() } else { map_to_computational(&final_state(cfg, table, theta, 0.0, v)?)?.rho };
    let reference_phase = extract_relative_phase(&reference, 0.0)?.phase.unwrap_or(0.0);
    let target = target_state(theta, phi + reference_phase);
    let measured = measure(&exact.rho, shots, seed)?;
    let postselected = fidelity(&target, &measured)?;
    let kept = (1.0 - exact.leakage).sqrt();
    Ok(BellReport {
        theta,
        phi,
        reference_phase,
        fidelity: kept * postselected,
        exact_fidelity: kept * fidelity(&target, &exact.rho)?,
        postselected_fidelity: postselected,
        leakage: exact.leakage,
        pauli: pauli_vector(&measured)?,
        phase: extract_relative_phase(&measured, PHASE_POPULATION_THRESHOLD)?,
        measured,
        target,
        shots,
    })
}

pub fn run_bell(cfg: &ScenarioConfig, prepared: &Prepared) -> Result<BellReport> {
    let v = StateVariant { open: cfg.bell_open, noise: cfg.noise.enabled };
    tomography_run(cfg, prepared.table.as_ref(), FRAC_PI_4, cfg.bell_phi, v, cfg.shots, cfg.seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaPoint {
    pub theta: f64,
    pub variant: Variant,
    /// `|f⟩` populations of the source (qubit 1) and target (qubit 2).
    pub source: f64,
    pub target: f64,
    pub resonator: f64,
    /// Fidelity averaged over the sweep's φ values, leakage counted as error.
    pub fidelity: f64,
}

pub fn theta_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        vec![FRAC_PI_2]
    } else {
        linspace(0.0, FRAC_PI_2, n)
    }
}

pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

pub fn run_theta_sweep(cfg: &ScenarioConfig, prepared: &Prepared) -> Result<Vec<ThetaPoint>> {
    let table = prepared.table.as_ref();
    let thetas = theta_grid(cfg.theta_points);
    let phis = phase_grid(cfg.fidelity_phases);
    let mut out = Vec::new();
    for &variant in &cfg.variants {
        let v = StateVariant::of(variant);
        let jobs: Vec<(usize, f64)> = thetas.iter().copied().enumerate().collect();
        let points: Vec<ThetaPoint> = jobs
            .par_iter()
            .map(|&(i, theta)| {
                let rho0 = final_state(cfg, table, theta, 0.0, v)?;
                let pops = rho0.populations();
                let mapped0 = map_to_computational(&rho0)?;
                let reference = mapped0.rho.clone();
                let reference_phase = extract_relative_phase(&reference, 0.0)?.phase.unwrap_or(0.0);
                let mut f = 0.0;
                for (k, &phi) in phis.iter().enumerate() {
                    let mapped = if phi == 0.0 { mapped0.clone() } else { map_to_computational(&final_state(cfg, table, theta, phi, v)?)? };
                    let seed = cfg.seed.wrapping_add((1000 * i + k) as u64);
                    let measured = measure(&mapped.rho, cfg.shots, seed)?;
                    f += (1.0 - mapped.leakage).sqrt() * fidelity(&target_state(theta, phi + reference_phase), &measured)?;
                }
                Ok(ThetaPoint {
                    theta,
                    variant,
                    source: marginal(&cfg.device, &pops, 0, 2),
                    target: marginal(&cfg.device, &pops, 1, 2),
                    resonator: 1.0 - marginal(&cfg.device, &pops, 2, 0),
                    fidelity: f / phis.len() as f64,
                })
            })
            .collect::<Result<_>>()?;
        out.extend(points);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub theta: f64,
    pub phi_set: f64,
    pub phi_measured: Option<f64>,
    /// Measured minus set phase after subtracting the φ = 0 point.
    pub error: Option<f64>,
    pub confident: bool,
}

#[derive(Debug, Clone)]
pub struct PhaseSweep {
    pub points: Vec<PhasePoint>,
    /// Mean and standard deviation of the errors away from φ = 0.
    pub mean: f64,
    pub std: f64,
}

pub fn phase_theta_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        vec![0.25 * PI]
    } else {
        linspace(0.19 * PI, 0.31 * PI, n)
    }
}

pub fn run_phase_sweep(cfg: &ScenarioConfig, prepared: &Prepared) -> Result<PhaseSweep> {
    let table = prepared.table.as_ref();
    let v = StateVariant { open: cfg.bell_open, noise: cfg.noise.enabled };
    let thetas = phase_theta_grid(cfg.phase_theta_points);
    let phis = phase_grid(cfg.phase_points);
    let jobs: Vec<(usize, usize)> = (0..thetas.len()).flat_map(|i| (0..phis.len()).map(move |k| (i, k))).collect();
    let measured: Vec<PhaseEstimate> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let mapped = map_to_computational(&final_state(cfg, table, thetas[i], phis[k], v)?)?.rho;
            let seed = cfg.seed.wrapping_add((1000 * i + k) as u64);
            Ok(extract_relative_phase(&measure(&mapped, cfg.shots, seed)?, PHASE_POPULATION_THRESHOLD)?)
        })
        .collect::<Result<_>>()?;
    Ok(assemble_phase_sweep(&thetas, &phis, &measured))
}

/// Phase errors from estimates in θ-major order, each θ referenced to its
/// φ = 0 entry (the first φ).
pub fn assemble_phase_sweep(thetas: &[f64], phis: &[f64], measured: &[PhaseEstimate]) -> PhaseSweep {
    let mut points = Vec::new();
    for (i, &theta) in thetas.iter().enumerate() {
        let reference = measured[i * phis.len()].phase;
        for (k, &phi) in phis.iter().enumerate() {
            let m = measured[i * phis.len() + k];
            let error = match (m.phase, reference) {
                (Some(p), Some(r)) => Some(wrap_phase(p - r - phi)),
                _ => None,
            };
            points.push(PhasePoint { theta, phi_set: phi, phi_measured: m.phase, error, confident: m.confident });
        }
    }
    let errs: Vec<f64> = points.iter().filter(|p| p.phi_set != 0.0).filter_map(|p| p.error).collect();
    let (mean, std) = mean_std(&errs);
    PhaseSweep { points, mean, std }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub const TIMESERIES_STATES: [(&str, [usize; 3]); 6] = TABLE1_STATES;

#[derive(Debug, Clone)]
pub struct Timeseries {
    pub result: EvolutionResult,
    /// Mean resonator photon number per sample.
    pub resonator: Vec<f64>,
}

pub fn run_timeseries(cfg: &ScenarioConfig, prepared: &Prepared) -> Result<Timeseries> {
    let mut req = TransferRequest::new(cfg, cfg.timeseries_theta, 0.0).open(cfg.timeseries_open);
    req.offsets = cfg.timeseries_offsets;
    req.times = linspace(0.0, cfg.pulse.duration, cfg.timeseries_samples);
    let result = simulate(cfg, prepared.table.as_ref(), &req)?;
    let space = result.space().clone();
    let resonator = result
        .populations
        .iter()
        .map(|p| p.iter().enumerate().map(|(k, v)| v * space.labels_of(k)[2] as f64).sum())
        .collect();
    Ok(Timeseries { result, resonator })
}
