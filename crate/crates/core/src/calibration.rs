//! Calibration of the two-tone drive against the simulated device:
//! single-tone ac-Stark spectroscopy, Rabi-rate amplitude calibration and
//! the two-tone cross-Stark frequency sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{effective_coupling, ghz, to_ghz, DeviceParams, DrivePulse, TWO_PI};
use crate::dynamics::{evolve_static, time_averaged_projection, IntegratorConfig};
use crate::error::{Error, Result};
use crate::fit::{
    eval_polynomial, fit_decaying_sinusoid, fit_even_quadratic, fit_gaussian_2d, fit_lorentzian, fit_polynomial, fit_quadratic_surface,
    quadratic_surface_peak, FitResult, Polarity,
};
use crate::holonomy::{params_from_theta_phi, synthesize_drives, DriveLimits, VOLT};
use crate::linalg::ONE;
use crate::model::DrivenModel;
use crate::pulse::EnvelopeSpec;

/// `ω_{f0↔g1}(V)/2π = a V² + b` with `a` in GHz/V² and `b` in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkPoly {
    pub a: f64,
    pub b: f64,
}

impl StarkPoly {
    /// Resonance angular frequency at amplitude `v`.
    pub fn frequency(&self, v: f64) -> f64 {
        ghz(self.a * v * v + self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub stark: [StarkPoly; 2],
    /// Per drive, coefficients `c₀ + c₁θ + c₂θ²` (GHz) of the two-tone
    /// frequency offset relative to the single-tone Stark prediction.
    pub cross_stark: [[f64; 3]; 2],
    /// Amplitude `V` at which a single tone produces `rabi_rate`.
    pub rabi_amp: [f64; 2],
    /// Target `|f0⟩ ↔ |g1⟩` population-oscillation frequency (GHz); the
    /// coupling `g̃` is half of it in angular units.
    pub rabi_rate: f64,
}

impl CalibrationTable {
    pub fn single_tone(stark: [StarkPoly; 2], rabi_amp: [f64; 2], rabi_rate: f64) -> Self {
        Self { stark, cross_stark: [[0.0; 3]; 2], rabi_amp, rabi_rate }
    }

    pub fn validate(&self) -> Result<()> {
        for q in 0..2 {
            let s = self.stark[q];
            if !(s.b > 0.0) || !s.a.is_finite() {
                return Err(Error::Config(format!("Stark polynomial of qubit {} needs b > 0 and finite a", q + 1)));
            }
            if !(self.rabi_amp[q] > 0.0) {
                return Err(Error::Config(format!("Rabi amplitude of qubit {} must be > 0", q + 1)));
            }
            if self.cross_stark[q].iter().any(|c| !c.is_finite()) {
                return Err(Error::Config("cross-Stark coefficients must be finite".into()));
            }
        }
        if !(self.rabi_rate > 0.0) {
            return Err(Error::Config("Rabi rate must be > 0".into()));
        }
        Ok(())
    }

    /// `|g̃ᵢ| / η` implied by the Rabi calibration.
    pub fn coupling_per_eta(&self, qubit: usize) -> Result<f64> {
        if qubit > 1 {
            return Err(Error::SubsystemOutOfRange { index: qubit, count: 2 });
        }
        Ok(0.5 * ghz(self.rabi_rate) / (self.rabi_amp[qubit] * VOLT))
    }

    /// Cross-Stark offset (rad/s) of drive `qubit` at rotation angle θ.
    pub fn cross_offset(&self, qubit: usize, theta: f64) -> f64 {
        ghz(eval_polynomial(&self.cross_stark[qubit], theta))
    }

    /// Drive frequency for amplitude `v` at rotation angle θ.
    pub fn drive_frequency(&self, qubit: usize, v: f64, theta: f64) -> f64 {
        self.stark[qubit].frequency(v) + self.cross_offset(qubit, theta)
    }

    pub fn without_cross_stark(&self) -> Self {
        Self { cross_stark: [[0.0; 3]; 2], ..self.clone() }
    }

    pub fn to_text(&self) -> String {
        let file = TableFile {
            stark_a_ghz_per_v2: [self.stark[0].a, self.stark[1].a],
            stark_b_ghz: [self.stark[0].b, self.stark[1].b],
            cross_stark_q1_ghz: self.cross_stark[0],
            cross_stark_q2_ghz: self.cross_stark[1],
            rabi_amp_v: self.rabi_amp,
            rabi_rate_ghz: self.rabi_rate,
        };
        let body = toml::to_string(&file).expect("plain numeric table serializes");
        format!(
            "# Calibration table. Stark fit: f = a V^2 + b (GHz, GHz/V^2).\n\
             # Cross-Stark offsets: c0 + c1 theta + c2 theta^2 (GHz).\n{body}"
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let f: TableFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let table = Self {
            stark: [
                StarkPoly { a: f.stark_a_ghz_per_v2[0], b: f.stark_b_ghz[0] },
                StarkPoly { a: f.stark_a_ghz_per_v2[1], b: f.stark_b_ghz[1] },
            ],
            cross_stark: [f.cross_stark_q1_ghz, f.cross_stark_q2_ghz],
            rabi_amp: f.rabi_amp_v,
            rabi_rate: f.rabi_rate_ghz,
        };
        table.validate()?;
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    stark_a_ghz_per_v2: [f64; 2],
    stark_b_ghz: [f64; 2],
    cross_stark_q1_ghz: [f64; 3],
    cross_stark_q2_ghz: [f64; 3],
    rabi_amp_v: [f64; 2],
    rabi_rate_ghz: f64,
}

/// Labels with qubit `q` in `|f⟩` and the other qubit and resonator empty.
fn f0_labels(qubit: usize) -> [usize; 3] {
    if qubit == 0 {
        [2, 0, 0]
    } else {
        [0, 2, 0]
    }
}

/// Model coordinates of every kept state with qubit `q` in `|f⟩`.
fn f_projector(model: &DrivenModel, qubit: usize) -> Vec<usize> {
    let space = model.space();
    (0..space.total_dim())
        .filter(|&k| space.labels_of(k)[qubit] == 2)
        .filter_map(|k| model.index_of(&space.labels_of(k)).ok())
        .collect()
}

fn check_qubit(qubit: usize) -> Result<()> {
    if qubit > 1 {
        return Err(Error::SubsystemOutOfRange { index: qubit, count: 2 });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectroscopyConfig {
    /// Length of the square spectroscopy pulse (s).
    pub duration: f64,
    /// Frequency points per scan.
    pub points: usize,
    /// Half span of the scan in units of the expected half linewidth `2g̃`.
    pub span_linewidths: f64,
    /// Lower bound on the half span (rad/s).
    pub min_half_span: f64,
}

impl Default for SpectroscopyConfig {
    fn default() -> Self {
        Self { duration: 2e-6, points: 41, span_linewidths: 5.0, min_half_span: TWO_PI * 2e6 }
    }
}

/// Time-averaged `|f⟩` population of `qubit` under a square single tone of
/// amplitude `v` at each frequency, starting from `|f0⟩`.
pub fn spectroscopy_scan(model: &DrivenModel, qubit: usize, v: f64, freqs: &[f64], duration: f64) -> Result<Vec<f64>> {
    check_qubit(qubit)?;
    let psi0 = model.initial_state(&f0_labels(qubit))?;
    let subset = f_projector(model, qubit);
    freqs
        .par_iter()
        .map(|&w| {
            let h = model.single_tone_hamiltonian(qubit, v * VOLT, w, ONE)?;
            Ok(time_averaged_projection(&h, psi0.amplitudes(), &subset, duration))
        })
        .collect()
}

/// Single-tone `|f0⟩ ↔ |g1⟩` resonance (rad/s) of `qubit` at amplitude `v`,
/// located as the minimum splitting of the two rotating-frame eigenstates
/// that carry the `|f0⟩` and `|g1⟩` weight. Searches `guess ± half_span`.
pub fn single_tone_resonance(model: &DrivenModel, qubit: usize, v: f64, guess: f64, half_span: f64) -> Result<f64> {
    check_qubit(qubit)?;
    let f0 = model.index_of(&f0_labels(qubit))?;
    let g1 = model.index_of(&[0, 0, 1])?;
    let gap = |w: f64| -> Result<f64> {
        let h = model.single_tone_hamiltonian(qubit, v * VOLT, w, ONE)?;
        let (values, vectors) = crate::linalg::eigh(&h);
        let weight = |k: usize| vectors[(f0, k)].norm_sqr() + vectors[(g1, k)].norm_sqr();
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)));
        Ok((values[order[0]] - values[order[1]]).abs())
    };
    // golden-section search
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (guess - half_span, guess + half_span);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (gap(c)?, gap(d)?);
    while (b - a) > 1e-9 * guess.abs().max(1.0) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = gap(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = gap(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectroscopyPoint {
    pub amplitude: f64,
    pub freqs: Vec<f64>,
    pub signal: Vec<f64>,
    /// Fitted resonance (rad/s) and its one-sigma uncertainty.
    pub center: f64,
    pub center_err: f64,
    pub hwhm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarkCalibration {
    pub poly: StarkPoly,
    pub points: Vec<SpectroscopyPoint>,
    /// Fit of the centers (GHz) to `a V² + b`.
    pub fit: FitResult,
    /// Fit of the centers (GHz) to `c₀ + c₁V + c₂V²`.
    pub with_linear_term: FitResult,
}

impl StarkCalibration {
    /// One-sigma uncertainty (rad/s) of the fitted curve at amplitude `v`.
    pub fn prediction_error(&self, v: f64) -> f64 {
        let c = &self.fit.covariance;
        let u = [v * v, 1.0];
        let var: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| u[i] * c[(i, j)] * u[j]).sum();
        ghz(var.max(0.0).sqrt())
    }
}

/// Single-tone Stark curve of `qubit`: a Lorentzian fit of the spectroscopy
/// dip at every amplitude, then a fit of the centers to `a V² + b`.
pub fn calibrate_single_stark(
    model: &DrivenModel,
    qubit: usize,
    amplitude_grid: &[f64],
    cfg: &SpectroscopyConfig,
) -> Result<StarkCalibration> {
    check_qubit(qubit)?;
    if amplitude_grid.len() < 3 || amplitude_grid.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("need at least three positive amplitudes".into()));
    }
    if cfg.points < 5 || !(cfg.duration > 0.0) {
        return Err(Error::InvalidArgument("spectroscopy needs ≥ 5 points and a positive duration".into()));
    }
    let mut grid = amplitude_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let undriven = model.basis().f0g1_frequency(qubit)?;
    let mut points: Vec<SpectroscopyPoint> = Vec::new();
    for &v in &grid {
        // scan centered on the extrapolation of the centers found so far
        let guess = match points.len() {
            0 => undriven,
            1 => points[0].center,
            _ => {
                let vs: Vec<f64> = points.iter().map(|p| p.amplitude).collect();
                let cs: Vec<f64> = points.iter().map(|p| p.center).collect();
                let f = fit_even_quadratic(&vs, &cs)?;
                f.params[0] * v * v + f.params[1]
            }
        };
        let gt = effective_coupling(model.params(), qubit, ONE, v * VOLT)?.norm();
        let half_span = (cfg.span_linewidths * 2.0 * gt).max(cfg.min_half_span);
        let freqs: Vec<f64> =
            (0..cfg.points).map(|k| guess - half_span + 2.0 * half_span * k as f64 / (cfg.points - 1) as f64).collect();
        let signal = spectroscopy_scan(model, qubit, v, &freqs, cfg.duration)?;
        // fit in MHz offsets from the guess for conditioning
        let x: Vec<f64> = freqs.iter().map(|w| (w - guess) / (TWO_PI * 1e6)).collect();
        let fit = fit_lorentzian(&x, &signal)?;
        points.push(SpectroscopyPoint {
            amplitude: v,
            center: guess + fit.params[0] * TWO_PI * 1e6,
            center_err: fit.std_error(0) * TWO_PI * 1e6,
            hwhm: fit.params[1] * TWO_PI * 1e6,
            freqs,
            signal,
        });
    }
    let vs: Vec<f64> = points.iter().map(|p| p.amplitude).collect();
    let centers: Vec<f64> = points.iter().map(|p| to_ghz(p.center)).collect();
    let fit = fit_even_quadratic(&vs, &centers)?;
    let with_linear_term = fit_polynomial(&vs, &centers, 2)?;
    Ok(StarkCalibration { poly: StarkPoly { a: fit.params[0], b: fit.params[1] }, points, fit, with_linear_term })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiConfig {
    /// Largest amplitude `V` tried.
    pub max_amplitude: f64,
    /// Relative tolerance on the fitted rate.
    pub rel_tol: f64,
    /// Samples per trace.
    pub samples: usize,
    /// Oscillation periods covered by a trace.
    pub periods: f64,
    pub max_iterations: usize,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self { max_amplitude: 1.0, rel_tol: 1e-7, samples: 161, periods: 4.0, max_iterations: 60 }
    }
}

/// `|f⟩` population of `qubit` after a resonant square tone of amplitude `v`
/// and frequency `freq`, for each duration in `times`.
pub fn rabi_trace(model: &DrivenModel, qubit: usize, v: f64, freq: f64, times: &[f64]) -> Result<Vec<f64>> {
    check_qubit(qubit)?;
    let psi0 = model.initial_state(&f0_labels(qubit))?;
    let subset = f_projector(model, qubit);
    let h = model.single_tone_hamiltonian(qubit, v * VOLT, freq, ONE)?;
    Ok(evolve_static(&h, psi0.amplitudes(), times).iter().map(|psi| subset.iter().map(|&k| psi[k].norm_sqr()).sum()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RabiCalibration {
    pub amplitude: f64,
    /// Fitted population-oscillation frequency (GHz).
    pub fitted_rate: f64,
    pub fit: Option<FitResult>,
    pub iterations: usize,
}

/// Fitted population-oscillation frequency (GHz) at amplitude `v`, with the
/// tone on the Stark-shifted resonance.
pub fn measure_rabi_rate(model: &DrivenModel, stark: &StarkPoly, qubit: usize, v: f64, cfg: &RabiConfig) -> Result<(f64, FitResult)> {
    let gt = effective_coupling(model.params(), qubit, ONE, v * VOLT)?.norm();
    if !(gt > 0.0) {
        return Err(Error::InvalidArgument("zero drive amplitude".into()));
    }
    // trace length from the perturbative estimate of the period π/g̃
    let tmax = cfg.periods * std::f64::consts::PI / gt;
    let times: Vec<f64> = (0..cfg.samples).map(|k| tmax * k as f64 / (cfg.samples - 1) as f64).collect();
    let pops = rabi_trace(model, qubit, v, stark.frequency(v), &times)?;
    let fit = fit_decaying_sinusoid(&times, &pops)?;
    Ok((fit.params[2] / TWO_PI / 1e9, fit))
}

/// Amplitude `V` at which the fitted `|f0⟩ ↔ |g1⟩` oscillation frequency
/// equals `target_rate` (GHz). Bracketing secant search (Illinois variant).
pub fn calibrate_rabi_rate(
    model: &DrivenModel,
    stark: &StarkPoly,
    qubit: usize,
    target_rate: f64,
    cfg: &RabiConfig,
) -> Result<RabiCalibration> {
    check_qubit(qubit)?;
    if target_rate == 0.0 {
        return Ok(RabiCalibration { amplitude: 0.0, fitted_rate: 0.0, fit: None, iterations: 0 });
    }
    if !(target_rate > 0.0) {
        return Err(Error::InvalidArgument("target rate must be ≥ 0".into()));
    }
    let rate = |v: f64| measure_rabi_rate(model, stark, qubit, v, cfg);
    // perturbative starting point: oscillation frequency 2g̃/2π
    let per_v = effective_coupling(model.params(), qubit, ONE, VOLT)?.norm() / std::f64::consts::PI / 1e9;
    let mut v0 = (target_rate / per_v).min(cfg.max_amplitude);
    let mut r0 = rate(v0)?;
    // widen to a bracket
    let mut v1 = v0 * (target_rate / r0.0);
    let mut iterations = 1;
    if v1 > cfg.max_amplitude {
        v1 = cfg.max_amplitude;
    }
    let mut r1 = rate(v1)?;
    while (r0.0 - target_rate) * (r1.0 - target_rate) > 0.0 {
        iterations += 1;
        if iterations > cfg.max_iterations || (v1 >= cfg.max_amplitude && r1.0 < target_rate) {
            return Err(Error::AmplitudeCeiling { required: v1 * VOLT, ceiling: cfg.max_amplitude * VOLT });
        }
        let next = (v1 * (1.0 + 0.05 * (target_rate / r1.0 - 1.0).signum())).min(cfg.max_amplitude);
        v0 = v1;
        r0 = std::mem::replace(&mut r1, rate(next)?);
        v1 = next;
    }
    let (mut a, mut fa) = (v0, r0);
    let (mut b, mut fb) = (v1, r1);
    let mut side = 0;
    loop {
        for (v, r) in [(a, &fa), (b, &fb)] {
            if ((r.0 - target_rate) / target_rate).abs() <= cfg.rel_tol {
                return Ok(RabiCalibration { amplitude: v, fitted_rate: r.0, fit: Some(r.1.clone()), iterations });
            }
        }
        iterations += 1;
        if iterations > cfg.max_iterations {
            return Err(Error::FitFailed("Rabi calibration did not converge".into()));
        }
        let (ga, gb) = (fa.0 - target_rate, fb.0 - target_rate);
        let mut c = b - gb * (b - a) / (gb - ga);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = rate(c)?;
        let gc = fc.0 - target_rate;
        if gc * gb < 0.0 {
            a = b;
            fa = fb;
            side = 0;
        } else if side == 1 {
            // Illinois: halve the stale endpoint's residual weight
            fa.0 = target_rate + 0.5 * (fa.0 - target_rate);
        } else {
            side = 1;
        }
        b = c;
        fb = fc;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossStarkConfig {
    /// Points per axis of the coarse sweep.
    pub grid_points: usize,
    /// Half span of the coarse sweep (rad/s).
    pub half_span: f64,
    /// Points per axis of the refinement sweep around the coarse optimum;
    /// 0 disables it. Its spacing is half the coarse spacing.
    pub refine_points: usize,
    /// Pulse shape of the operation (amplitude ignored).
    pub shape: EnvelopeSpec,
    pub integrator: IntegratorConfig,
}

impl CrossStarkConfig {
    pub fn new(shape: EnvelopeSpec) -> Self {
        Self {
            grid_points: 13,
            half_span: TWO_PI * 3e6,
            refine_points: 7,
            shape,
            integrator: IntegratorConfig::adaptive(1e-7, 1e-9),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMap {
    /// Offsets of drive 1 and drive 2 from the single-tone prediction (rad/s).
    pub offsets1: Vec<f64>,
    pub offsets2: Vec<f64>,
    /// `signal[i][j]` at `(offsets1[i], offsets2[j])`.
    pub signal: Vec<Vec<f64>>,
}

/// Final `|f⟩` population of qubit 1 after the two-tone pulse at angle θ
/// from `|gf0⟩`, on the grid of frequency offsets (rad/s) added to the
/// tones synthesized from `table`.
pub fn transfer_map(
    model: &DrivenModel,
    table: &CalibrationTable,
    theta: f64,
    offsets1: &[f64],
    offsets2: &[f64],
    cfg: &CrossStarkConfig,
) -> Result<TransferMap> {
    let params = params_from_theta_phi(theta, 0.0)?;
    let drives = synthesize_drives(&params, model.params(), Some(table), &cfg.shape, &DriveLimits::default())?;
    let subset: Vec<usize> = {
        let space = model.space();
        (0..space.total_dim()).filter(|&k| space.labels_of(k)[0] == 2).collect()
    };
    let duration = cfg.shape.duration;
    let jobs: Vec<(usize, usize)> = (0..offsets1.len()).flat_map(|i| (0..offsets2.len()).map(move |j| (i, j))).collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let mut d: [DrivePulse; 2] = drives;
            d[0].drive_freq += offsets1[i];
            d[1].drive_freq += offsets2[j];
            let run = model.clone().with_drives(&d)?;
            let res = run.evolve(&[0, 2, 0], &[0.0, duration], &cfg.integrator, false)?;
            let pops = res.final_populations();
            Ok(subset.iter().map(|&k| pops[k]).sum())
        })
        .collect::<Result<_>>()?;
    let signal = (0..offsets1.len()).map(|i| values[i * offsets2.len()..(i + 1) * offsets2.len()].to_vec()).collect();
    Ok(TransferMap { offsets1: offsets1.to_vec(), offsets2: offsets2.to_vec(), signal })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossStarkPoint {
    pub theta: f64,
    /// Fitted optimum offsets of drive 1 and 2 from the single-tone
    /// prediction (rad/s) and their one-sigma fit uncertainties.
    pub offset: [f64; 2],
    pub offset_err: [f64; 2],
    pub coarse: TransferMap,
    pub refined: Option<TransferMap>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossStarkCalibration {
    pub points: Vec<CrossStarkPoint>,
    /// Per drive, coefficients (GHz) of the quadratic fit in θ.
    pub poly: [[f64; 3]; 2],
    /// Largest refit residual per drive (rad/s).
    pub max_residual: [f64; 2],
}

fn symmetric_grid(center: f64, half_span: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| center - half_span + 2.0 * half_span * k as f64 / (n - 1) as f64).collect()
}

fn fit_map(map: &TransferMap) -> Result<(FitResult, [f64; 2], [f64; 2])> {
    let scale = TWO_PI * 1e6;
    let x: Vec<f64> = map.offsets1.iter().map(|v| v / scale).collect();
    let y: Vec<f64> = map.offsets2.iter().map(|v| v / scale).collect();
    let fit = fit_gaussian_2d(&x, &y, &map.signal, Polarity::Peak)?;
    let center = [fit.params[0] * scale, fit.params[1] * scale];
    let err = [fit.std_error(0) * scale, fit.std_error(1) * scale];
    Ok((fit, center, err))
}

fn fit_peak(map: &TransferMap) -> Result<(FitResult, [f64; 2], [f64; 2])> {
    let scale = TWO_PI * 1e6;
    let x: Vec<f64> = map.offsets1.iter().map(|v| v / scale).collect();
    let y: Vec<f64> = map.offsets2.iter().map(|v| v / scale).collect();
    let fit = fit_quadratic_surface(&x, &y, &map.signal)?;
    let (c, e) = quadratic_surface_peak(&fit)?;
    Ok((fit, [c[0] * scale, c[1] * scale], [e[0] * scale, e[1] * scale]))
}

/// Two-tone frequency sweeps at each θ: a 2-D Gaussian fit of a coarse
/// transfer map, then a quadratic-surface fit of a finer map around its
/// center, and a quadratic fit of the optimum offsets in θ.
pub fn calibrate_cross_stark(
    model: &DrivenModel,
    table: &CalibrationTable,
    theta_grid: &[f64],
    cfg: &CrossStarkConfig,
) -> Result<CrossStarkCalibration> {
    if theta_grid.is_empty() || theta_grid.iter().any(|&t| !(t > 0.0 && t <= std::f64::consts::FRAC_PI_2 + 1e-12)) {
        return Err(Error::InvalidArgument("θ grid must be nonempty and inside (0, π/2]".into()));
    }
    if cfg.grid_points < 6 || (cfg.refine_points != 0 && cfg.refine_points < 6) {
        return Err(Error::InvalidArgument("sweep grids need at least 6 points per axis".into()));
    }
    let base = table.without_cross_stark();
    let mut points = Vec::new();
    for &theta in theta_grid {
        let axis = symmetric_grid(0.0, cfg.half_span, cfg.grid_points);
        let coarse = transfer_map(model, &base, theta, &axis, &axis, cfg)?;
        let (mut fit, mut offset, mut offset_err) = fit_map(&coarse)?;
        let mut refined = None;
        if cfg.refine_points > 0 {
            let spacing = 2.0 * cfg.half_span / (cfg.grid_points - 1) as f64;
            let half = 0.25 * spacing * (cfg.refine_points - 1) as f64;
            let g1 = symmetric_grid(offset[0], half, cfg.refine_points);
            let g2 = symmetric_grid(offset[1], half, cfg.refine_points);
            let map = transfer_map(model, &base, theta, &g1, &g2, cfg)?;
            (fit, offset, offset_err) = fit_peak(&map)?;
            refined = Some(map);
        }
        points.push(CrossStarkPoint { theta, offset, offset_err, coarse, refined, fit });
    }
    let thetas: Vec<f64> = points.iter().map(|p| p.theta).collect();
    let degree = (thetas.len() - 1).min(2);
    let mut poly = [[0.0; 3]; 2];
    let mut max_residual = [0.0; 2];
    for q in 0..2 {
        let offs: Vec<f64> = points.iter().map(|p| to_ghz(p.offset[q])).collect();
        let f = fit_polynomial(&thetas, &offs, degree)?;
        for (k, c) in f.params.iter().enumerate() {
            poly[q][k] = *c;
        }
        max_residual[q] = thetas
            .iter()
            .zip(&offs)
            .map(|(&t, &o)| ghz((eval_polynomial(&poly[q], t) - o).abs()))
            .fold(0.0, f64::max);
    }
    Ok(CrossStarkCalibration { points, poly, max_residual })
}

/// Settings of the full calibration sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub amplitude_grid: Vec<f64>,
    pub spectroscopy: SpectroscopyConfig,
    /// Target population-oscillation frequency (GHz).
    pub rabi_rate: f64,
    pub rabi: RabiConfig,
    pub theta_grid: Vec<f64>,
    pub cross: CrossStarkConfig,
}

impl CalibrationConfig {
    pub fn new(shape: EnvelopeSpec) -> Self {
        Self {
            amplitude_grid: vec![0.06, 0.09, 0.12, 0.15, 0.18, 0.21],
            spectroscopy: SpectroscopyConfig::default(),
            rabi_rate: 4.70e-3,
            rabi: RabiConfig::default(),
            theta_grid: vec![std::f64::consts::PI / 6.0, std::f64::consts::PI / 3.0, std::f64::consts::FRAC_PI_2],
            cross: CrossStarkConfig::new(shape),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub table: CalibrationTable,
    pub stark: [StarkCalibration; 2],
    pub rabi: [RabiCalibration; 2],
    pub cross: Option<CrossStarkCalibration>,
}

/// Runs single-tone spectroscopy and Rabi calibration on both qubits and,
/// when the θ grid is nonempty, the cross-Stark sweep.
pub fn calibrate(model: &DrivenModel, cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    let s1 = calibrate_single_stark(model, 0, &cfg.amplitude_grid, &cfg.spectroscopy)?;
    let s2 = calibrate_single_stark(model, 1, &cfg.amplitude_grid, &cfg.spectroscopy)?;
    let r1 = calibrate_rabi_rate(model, &s1.poly, 0, cfg.rabi_rate, &cfg.rabi)?;
    let r2 = calibrate_rabi_rate(model, &s2.poly, 1, cfg.rabi_rate, &cfg.rabi)?;
    let mut table = CalibrationTable::single_tone([s1.poly, s2.poly], [r1.amplitude, r2.amplitude], cfg.rabi_rate);
    table.validate()?;
    let cross = if cfg.theta_grid.is_empty() {
        None
    } else {
        let c = calibrate_cross_stark(model, &table, &cfg.theta_grid, &cfg.cross)?;
        table.cross_stark = c.poly;
        Some(c)
    };
    Ok(CalibrationReport { table, stark: [s1, s2], rabi: [r1, r2], cross })
}

/// Drive pair for (θ, φ) on `device`, using `table` when given.
pub fn drives_for(
    device: &DeviceParams,
    table: Option<&CalibrationTable>,
    theta: f64,
    phi: f64,
    shape: &EnvelopeSpec,
) -> Result<[DrivePulse; 2]> {
    synthesize_drives(&params_from_theta_phi(theta, phi)?, device, table, shape, &DriveLimits::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Frame;

    fn model() -> DrivenModel {
        DrivenModel::truncated(&DeviceParams::reference(), Frame::Rwa, 4).unwrap()
    }

    #[test]
    fn table_text_round_trip() {
        let mut t = CalibrationTable::single_tone(
            [StarkPoly { a: -0.164, b: 3.196 }, StarkPoly { a: -0.2, b: 2.701 }],
            [0.15, 0.16],
            4.7e-3,
        );
        t.cross_stark = [[1e-5, -2e-6, 3e-7], [0.0, 1e-6, 0.0]];
        let back = CalibrationTable::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert!(CalibrationTable::from_text("stark_b_ghz = [1.0, 2.0]").is_err());
    }

    #[test]
    fn stark_shift_is_negative_and_quadratic() {
        let m = model();
        let w0 = m.basis().f0g1_frequency(0).unwrap();
        let cal = calibrate_single_stark(&m, 0, &[0.05, 0.1, 0.15], &SpectroscopyConfig::default()).unwrap();
        let shift: Vec<f64> = cal.points.iter().map(|p| p.center - w0).collect();
        assert!(shift.iter().all(|&s| s < 0.0), "{shift:?}");
        assert!((shift[1] / shift[0] - 4.0).abs() < 0.4, "{shift:?}");
        assert!(cal.poly.a < 0.0);
        assert!((ghz(cal.poly.b) - w0).abs() < TWO_PI * 0.5e6);
    }

    #[test]
    fn spectroscopy_centers_match_exact_resonance() {
        let m = model();
        let cal = calibrate_single_stark(&m, 1, &[0.06, 0.12, 0.18], &SpectroscopyConfig::default()).unwrap();
        for p in &cal.points {
            let exact = single_tone_resonance(&m, 1, p.amplitude, p.center, TWO_PI * 2e6).unwrap();
            assert!((p.center - exact).abs() < 3.0 * p.center_err.max(TWO_PI * 1e3), "{} vs {}", p.center, exact);
        }
    }

    #[test]
    fn rabi_amplitude_is_linear_in_target() {
        let m = model();
        let stark = calibrate_single_stark(&m, 1, &[0.04, 0.08, 0.12, 0.16], &SpectroscopyConfig::default()).unwrap();
        let cfg = RabiConfig::default();
        let a = calibrate_rabi_rate(&m, &stark.poly, 1, 2.35e-3, &cfg).unwrap();
        let b = calibrate_rabi_rate(&m, &stark.poly, 1, 4.70e-3, &cfg).unwrap();
        assert!((b.fitted_rate / 4.70e-3 - 1.0).abs() < 1e-6);
        assert!((b.amplitude / a.amplitude - 2.0).abs() < 0.04, "{} {}", a.amplitude, b.amplitude);
        let zero = calibrate_rabi_rate(&m, &stark.poly, 1, 0.0, &cfg).unwrap();
        assert_eq!(zero.amplitude, 0.0);
    }
}
