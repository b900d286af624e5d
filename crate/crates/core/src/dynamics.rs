//! Time evolution of pure and mixed states.
//!
//! Hamiltonians are supplied through the [`Hamiltonian`] trait. An
//! implementation may declare frame energies `E_k`; the integrators then
//! propagate the interaction-picture state `e^{iEt} ψ` and only the coupling
//! part has to be resolved by the step-size control. Collapse operators for
//! [`evolve_lindblad`] are given in the same basis as the Hamiltonian and are
//! moved into the frame automatically.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, CMatrix, CVector, SparseMatrix, C64, I, ZERO};
use crate::quantum::{DensityMatrix, HilbertSpace, Operator, QuantumState};

/// Time-dependent Hamiltonian `H(t) = diag(E) + V(t)`.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;

    /// Diagonal part treated exactly by moving to its interaction picture.
    fn frame_energies(&self) -> Option<&[f64]> {
        None
    }

    /// Writes `V(t)` (Schrödinger picture, without the frame diagonal) into
    /// `out`, which arrives cleared.
    fn coupling(&self, t: f64, out: &mut SparseMatrix);

    /// Largest oscillation frequency (Hz) present in the interaction-picture
    /// coupling, if it has to be resolved explicitly by the step size.
    fn max_frequency(&self) -> Option<f64> {
        None
    }

    /// Times at which `V(t)` has kinks or jumps.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Wraps a closure returning the full dense Hamiltonian.
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
    breakpoints: Vec<f64>,
}

impl<F: Fn(f64) -> CMatrix + Sync> FnHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f, breakpoints: Vec::new() }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }
}

impl<F: Fn(f64) -> CMatrix + Sync> Hamiltonian for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn coupling(&self, t: f64, out: &mut SparseMatrix) {
        let h = (self.f)(t);
        for c in 0..self.dim {
            for r in 0..self.dim {
                let v = h[(r, c)];
                if v != ZERO {
                    out.push(r, c, v);
                }
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Embedded 5(4) Runge–Kutta with adaptive steps and dense output.
    Adaptive,
    /// Classical 4th-order Runge–Kutta with a fixed nominal step; steps are
    /// shortened to land on sample times and breakpoints.
    FixedStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step (s); `f64::INFINITY` for none.
    pub max_step: f64,
    /// Nominal step for [`Method::FixedStep`] (s).
    pub fixed_step: f64,
    /// Norm / trace drift that aborts the evolution.
    pub drift_abort: f64,
    /// Eigenvalue floor below which a density matrix counts as unphysical.
    pub positivity_floor: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Adaptive,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            fixed_step: 1e-11,
            drift_abort: 1e-4,
            positivity_floor: -1e-6,
        }
    }
}

impl IntegratorConfig {
    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn fixed(step: f64) -> Self {
        Self { method: Method::FixedStep, fixed_step: step, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidArgument("integrator tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidArgument("max_step must be positive".into()));
        }
        if self.method == Method::FixedStep && !(self.fixed_step > 0.0 && self.fixed_step.is_finite()) {
            return Err(Error::InvalidArgument("fixed step must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Counters from one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

// DOPRI5 coefficients
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy_into(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..out.len() {
        let mut acc = ZERO;
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        out[i] = y[i] + acc * h;
    }
}

fn merged_stops(t0: f64, t1: f64, breakpoints: &[f64]) -> Vec<f64> {
    let span = (t1 - t0).abs().max(f64::MIN_POSITIVE);
    let mut stops: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > t0 + 1e-12 * span && b < t1 - 1e-12 * span)
        .collect();
    stops.push(t1);
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * span);
    stops
}

/// Integrates `y' = f(t, y)` from `times[0]`, calling `on_sample` with the
/// state at every entry of `times` (ascending).
pub fn integrate<F, S>(
    mut f: F,
    y0: &[C64],
    times: &[f64],
    breakpoints: &[f64],
    cfg: &IntegratorConfig,
    mut on_sample: S,
) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    cfg.validate()?;
    if times.is_empty() {
        return Err(Error::InvalidArgument("no sample times".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("sample times must be ascending".into()));
    }
    let t0 = times[0];
    let t_end = *times.last().unwrap();
    on_sample(0, t0, y0)?;
    if times.len() == 1 {
        return Ok(IntegrationStats::default());
    }
    match cfg.method {
        Method::Adaptive => dopri5(&mut f, y0, times, breakpoints, cfg, &mut on_sample),
        Method::FixedStep => {
            let mut stops: Vec<f64> = times[1..].to_vec();
            stops.extend(merged_stops(t0, t_end, breakpoints));
            stops.sort_by(f64::total_cmp);
            stops.dedup();
            rk4(&mut f, y0, times, &stops, cfg, &mut on_sample)
        }
    }
}

fn rk4<F, S>(f: &mut F, y0: &[C64], times: &[f64], stops: &[f64], cfg: &IntegratorConfig, on_sample: &mut S) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
    let mut stats = IntegrationStats::default();
    let mut t = times[0];
    let mut next_sample = 1;
    let h_nominal = cfg.fixed_step.min(cfg.max_step);
    for &stop in stops {
        let span = stop - t;
        if span <= 0.0 {
            continue;
        }
        let steps = (span / h_nominal).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let seg_start = t;
        let eps = 1e-12 * span;
        let mut f = |tt: f64, yy: &[C64], dd: &mut [C64]| f(tt.clamp(seg_start + eps, stop - eps), yy, dd);
        for s in 0..steps {
            let ts = seg_start + s as f64 * h;
            f(ts, &y, &mut k1);
            axpy_into(&mut tmp, &y, 0.5 * h, &[(1.0, &k1)]);
            f(ts + 0.5 * h, &tmp, &mut k2);
            axpy_into(&mut tmp, &y, 0.5 * h, &[(1.0, &k2)]);
            f(ts + 0.5 * h, &tmp, &mut k3);
            axpy_into(&mut tmp, &y, h, &[(1.0, &k3)]);
            f(ts + h, &tmp, &mut k4);
            for i in 0..n {
                y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
            stats.accepted += 1;
            stats.evaluations += 4;
        }
        t = stop;
        while next_sample < times.len() && times[next_sample] <= t {
            on_sample(next_sample, times[next_sample], &y)?;
            next_sample += 1;
        }
    }
    Ok(stats)
}

fn error_norm(y0: &[C64], y1: &[C64], err: &[C64], cfg: &IntegratorConfig) -> f64 {
    let mut acc = 0.0;
    for i in 0..y0.len() {
        let sc = cfg.abs_tol + cfg.rel_tol * y0[i].norm().max(y1[i].norm());
        let e = err[i].norm() / sc;
        acc += e * e;
    }
    (acc / y0.len() as f64).sqrt()
}

fn dopri5<F, S>(
    f: &mut F,
    y0: &[C64],
    times: &[f64],
    breakpoints: &[f64],
    cfg: &IntegratorConfig,
    on_sample: &mut S,
) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    let n = y0.len();
    let t_end = *times.last().unwrap();
    let stops = merged_stops(times[0], t_end, breakpoints);
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![ZERO; n]).collect();
    let mut y = y0.to_vec();
    let mut y1 = vec![ZERO; n];
    let mut tmp = vec![ZERO; n];
    let mut err = vec![ZERO; n];
    let mut dense: Vec<Vec<C64>> = (0..5).map(|_| vec![ZERO; n]).collect();
    let mut out = vec![ZERO; n];
    let mut stats = IntegrationStats::default();
    let mut t = times[0];
    let mut next_sample = 1;
    let mut h = 0.0;

    for &stop in &stops {
        // right/left limits at the segment ends
        let (lo, eps) = (t, 1e-12 * (stop - t));
        let mut f = |tt: f64, yy: &[C64], dd: &mut [C64]| f(tt.clamp(lo + eps, stop - eps), yy, dd);
        // restart the FSAL chain on each smooth segment
        f(t, &y, &mut k[0]);
        stats.evaluations += 1;
        if h <= 0.0 {
            let (first, tail) = k.split_at_mut(1);
            h = initial_step(&mut f, t, &y, &first[0], stop - t, cfg, &mut tmp, &mut tail[0]);
            stats.evaluations += 1;
        }
        let mut last_factor_rejected = false;
        while t < stop {
            let mut h_step = h.min(cfg.max_step);
            let remaining = stop - t;
            let last = h_step >= remaining * (1.0 - 1e-12);
            if last {
                h_step = remaining;
            }
            if h_step < 1e-14 * t.abs().max(remaining).max(1e-300) {
                return Err(Error::StepSizeUnderflow { t, step: h_step });
            }
            let (k1, rest) = k.split_first_mut().unwrap();
            let (k2, rest) = rest.split_first_mut().unwrap();
            let (k3, rest) = rest.split_first_mut().unwrap();
            let (k4, rest) = rest.split_first_mut().unwrap();
            let (k5, rest) = rest.split_first_mut().unwrap();
            let (k6, rest) = rest.split_first_mut().unwrap();
            let k7 = &mut rest[0];
            axpy_into(&mut tmp, &y, h_step, &[(A21, k1)]);
            f(t + C2 * h_step, &tmp, k2);
            axpy_into(&mut tmp, &y, h_step, &[(A31, k1), (A32, k2)]);
            f(t + C3 * h_step, &tmp, k3);
            axpy_into(&mut tmp, &y, h_step, &[(A41, k1), (A42, k2), (A43, k3)]);
            f(t + C4 * h_step, &tmp, k4);
            axpy_into(&mut tmp, &y, h_step, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
            f(t + C5 * h_step, &tmp, k5);
            axpy_into(&mut tmp, &y, h_step, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
            let t_new = if last { stop } else { t + h_step };
            f(t_new, &tmp, k6);
            axpy_into(&mut y1, &y, h_step, &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)]);
            f(t_new, &y1, k7);
            stats.evaluations += 6;
            for i in 0..n {
                err[i] = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h_step;
            }
            let e = error_norm(&y, &y1, &err, cfg);
            if !e.is_finite() {
                stats.rejected += 1;
                h = 0.1 * h_step;
                last_factor_rejected = true;
                continue;
            }
            if e <= 1.0 {
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = k1[i] * h_step - ydiff;
                    dense[0][i] = y[i];
                    dense[1][i] = ydiff;
                    dense[2][i] = bspl;
                    dense[3][i] = ydiff - k7[i] * h_step - bspl;
                    dense[4][i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h_step;
                }
                while next_sample < times.len() && times[next_sample] <= t_new {
                    let ts = times[next_sample];
                    let theta = ((ts - t) / h_step).clamp(0.0, 1.0);
                    let theta1 = 1.0 - theta;
                    for i in 0..n {
                        out[i] = dense[0][i]
                            + (dense[1][i] + (dense[2][i] + (dense[3][i] + dense[4][i] * theta1) * theta) * theta1) * theta;
                    }
                    if ts == t_new {
                        on_sample(next_sample, ts, &y1)?;
                    } else {
                        on_sample(next_sample, ts, &out)?;
                    }
                    next_sample += 1;
                }
                std::mem::swap(&mut y, &mut y1);
                let (first, tail) = k.split_at_mut(1);
                std::mem::swap(&mut first[0], &mut tail[5]);
                t = t_new;
                stats.accepted += 1;
                let mut factor = (0.9 * e.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
                if last_factor_rejected {
                    factor = factor.min(1.0);
                }
                last_factor_rejected = false;
                if !last {
                    h = h_step * factor;
                }
            } else {
                stats.rejected += 1;
                h = h_step * (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
                last_factor_rejected = true;
            }
        }
    }
    while next_sample < times.len() {
        on_sample(next_sample, times[next_sample], &y)?;
        next_sample += 1;
    }
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(f: &mut F, t: f64, y: &[C64], f0: &[C64], span: f64, cfg: &IntegratorConfig, tmp: &mut [C64], f1: &mut [C64]) -> f64
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len() as f64;
    let scale = |i: usize| cfg.abs_tol + cfg.rel_tol * y[i].norm();
    let d0 = (y.iter().enumerate().map(|(i, v)| (v.norm() / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v.norm() / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(cfg.max_step);
    for i in 0..y.len() {
        tmp[i] = y[i] + f0[i] * h0;
    }
    f(t + h0, tmp, f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .enumerate()
        .map(|(i, (a, b))| ((a - b).norm() / scale(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6 * span) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span).min(cfg.max_step)
}

/// Caches `e^{iE_k t}` and the interaction-picture coupling.
struct FrameCache<'a> {
    h: &'a dyn Hamiltonian,
    energies: Option<Vec<f64>>,
    phases: Vec<C64>,
    raw: SparseMatrix,
    phased: SparseMatrix,
}

impl<'a> FrameCache<'a> {
    fn new(h: &'a dyn Hamiltonian) -> Self {
        let n = h.dim();
        Self {
            h,
            energies: h.frame_energies().map(|e| e.to_vec()),
            phases: vec![C64::new(1.0, 0.0); n],
            raw: SparseMatrix::new(n),
            phased: SparseMatrix::new(n),
        }
    }

    fn update_phases(&mut self, t: f64) {
        if let Some(e) = &self.energies {
            for (p, &ek) in self.phases.iter_mut().zip(e) {
                *p = C64::from_polar(1.0, ek * t);
            }
        }
    }

    /// Interaction-picture coupling at `t`.
    fn coupling(&mut self, t: f64) -> &SparseMatrix {
        self.raw.clear();
        self.h.coupling(t, &mut self.raw);
        self.phased.clear();
        if self.energies.is_some() {
            self.update_phases(t);
            self.raw.phased_into(&self.phases, C64::new(1.0, 0.0), &mut self.phased);
            &self.phased
        } else {
            &self.raw
        }
    }
}

fn step_cap(h: &dyn Hamiltonian, cfg: &IntegratorConfig) -> IntegratorConfig {
    let mut cfg = *cfg;
    if let Some(f) = h.max_frequency() {
        if f > 0.0 {
            cfg.max_step = cfg.max_step.min(1.0 / (20.0 * f));
        }
    }
    cfg
}

/// Sampled trajectory. States are in the interaction picture of the
/// Hamiltonian's frame energies, which leaves basis populations unchanged.
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<SampledState>,
    /// Basis populations per sample, `populations[sample][basis index]`.
    pub populations: Vec<Vec<f64>>,
    pub stats: IntegrationStats,
}

#[derive(Debug, Clone)]
pub enum SampledState {
    Pure(QuantumState),
    Mixed(DensityMatrix),
}

impl SampledState {
    pub fn to_density_matrix(&self) -> DensityMatrix {
        match self {
            SampledState::Pure(psi) => psi.projector(),
            SampledState::Mixed(rho) => rho.clone(),
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        match self {
            SampledState::Pure(psi) => psi.amplitudes().iter().map(|a| a.norm_sqr()).collect(),
            SampledState::Mixed(rho) => rho.populations(),
        }
    }
}

impl EvolutionResult {
    pub fn final_state(&self) -> &SampledState {
        self.states.last().expect("at least one sample")
    }

    pub fn final_populations(&self) -> &[f64] {
        self.populations.last().expect("at least one sample")
    }

    pub fn space(&self) -> &HilbertSpace {
        match &self.states[0] {
            SampledState::Pure(psi) => psi.space(),
            SampledState::Mixed(rho) => rho.space(),
        }
    }

    /// Total population (norm² or trace) at each sample.
    pub fn total_population(&self) -> Vec<f64> {
        self.populations.iter().map(|p| p.iter().sum()).collect()
    }
}

/// Population series for the requested basis states (as per-subsystem
/// labels); `series[label][sample]`.
pub fn population_timeseries(result: &EvolutionResult, labels: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
    let space = result.space();
    labels
        .iter()
        .map(|l| {
            let idx = space.index_of(l)?;
            Ok(result.populations.iter().map(|p| p[idx].clamp(0.0, 1.0)).collect())
        })
        .collect()
}

/// CSV with a time column (ns) followed by one column per label.
pub fn timeseries_csv(result: &EvolutionResult, labels: &[Vec<usize>], names: &[String]) -> Result<String> {
    if labels.len() != names.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), found: names.len() });
    }
    let series = population_timeseries(result, labels)?;
    let mut s = String::from("time_ns");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (k, t) in result.times.iter().enumerate() {
        write!(s, "{:.6}", t * 1e9).unwrap();
        for col in &series {
            write!(s, ",{:.10}", col[k]).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

/// Integrates the Schrödinger equation `iψ' = H(t)ψ`.
pub fn evolve_schrodinger(h: &dyn Hamiltonian, psi0: &QuantumState, times: &[f64], cfg: &IntegratorConfig) -> Result<EvolutionResult> {
    let n = h.dim();
    if psi0.amplitudes().len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: psi0.amplitudes().len() });
    }
    let cfg = step_cap(h, cfg);
    let space = psi0.space().clone();
    let mut cache = FrameCache::new(h);
    let t0 = times.first().copied().unwrap_or(0.0);
    // ψ_I(t0) = e^{iE t0} ψ(t0)
    cache.update_phases(t0);
    let y0: Vec<C64> = psi0.amplitudes().iter().zip(&cache.phases).map(|(a, p)| a * p).collect();
    let mut states = Vec::with_capacity(times.len());
    let mut populations = Vec::with_capacity(times.len());
    let drift_abort = cfg.drift_abort;
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        dy.iter_mut().for_each(|v| *v = ZERO);
        let v = cache.coupling(t);
        v.mul_add(y, dy);
        for d in dy.iter_mut() {
            *d *= -I;
        }
    };
    let stats = integrate(rhs, &y0, times, &h.breakpoints(), &cfg, |_, t, y| {
        let norm_sqr: f64 = y.iter().map(|a| a.norm_sqr()).sum();
        let drift = (norm_sqr.sqrt() - 1.0).abs();
        if drift > drift_abort {
            return Err(Error::NormDrift { t, drift });
        }
        populations.push(y.iter().map(|a| a.norm_sqr()).collect());
        let psi = QuantumState::normalized(space.clone(), CVector::from_column_slice(y))?;
        states.push(SampledState::Pure(psi));
        Ok(())
    })?;
    Ok(EvolutionResult { times: times.to_vec(), states, populations, stats })
}

/// Integrates the Lindblad master equation
/// `ρ' = −i[H, ρ] + Σ (L ρ L† − ½{L†L, ρ})`.
pub fn evolve_lindblad(
    h: &dyn Hamiltonian,
    rho0: &DensityMatrix,
    collapse: &[Operator],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<EvolutionResult> {
    let n = h.dim();
    if rho0.matrix().nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rho0.matrix().nrows() });
    }
    for l in collapse {
        if l.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: l.dim() });
        }
    }
    let cfg = step_cap(h, cfg);
    let space = rho0.space().clone();
    let threshold = 1e-14;
    let ls: Vec<SparseMatrix> = collapse
        .iter()
        .map(|l| {
            let scale = l.matrix().iter().map(|v| v.norm()).fold(0.0, f64::max);
            SparseMatrix::from_dense(l.matrix(), threshold * scale)
        })
        .filter(|l| l.nnz() > 0)
        .collect();
    let mut ldl = CMatrix::zeros(n, n);
    for l in collapse {
        ldl += l.matrix().adjoint() * l.matrix();
    }
    // −(i/2) Σ L†L, folded into a non-Hermitian effective Hamiltonian
    let ldl_scale = ldl.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let anti = SparseMatrix::from_dense(&(ldl * C64::new(0.0, -0.5)), threshold * ldl_scale);

    let mut cache = FrameCache::new(h);
    let t0 = times.first().copied().unwrap_or(0.0);
    cache.update_phases(t0);
    let mut y0 = vec![ZERO; n * n];
    // row-major storage: each sparse entry then updates a contiguous row
    for r in 0..n {
        for c in 0..n {
            y0[r * n + c] = rho0.matrix()[(r, c)] * cache.phases[r] * cache.phases[c].conj();
        }
    }

    let has_frame = h.frame_energies().is_some();
    let mut heff = SparseMatrix::new(n);
    let mut lt = SparseMatrix::new(n);
    let mut ybuf = vec![ZERO; n * n];
    let mut mbuf = vec![ZERO; n * n];
    let mut mdag = vec![ZERO; n * n];
    let rhs = |t: f64, rho: &[C64], drho: &mut [C64]| {
        heff.clear();
        {
            let v = cache.coupling(t);
            v.scaled_into(-I, &mut heff);
        }
        if has_frame {
            anti.phased_into(&cache.phases, -I, &mut heff);
        } else {
            anti.scaled_into(-I, &mut heff);
        }
        // Y = −i H_eff ρ ; ρ' = Y + Y†
        ybuf.iter_mut().for_each(|v| *v = ZERO);
        heff.mul_rows_add(rho, &mut ybuf, n);
        for r in 0..n {
            for c in 0..n {
                drho[r * n + c] = ybuf[r * n + c] + ybuf[c * n + r].conj();
            }
        }
        for l in &ls {
            lt.clear();
            let lop = if has_frame {
                l.phased_into(&cache.phases, C64::new(1.0, 0.0), &mut lt);
                &lt
            } else {
                l
            };
            // M = L ρ, so M† = ρ L† and L M† = L ρ L†
            mbuf.iter_mut().for_each(|v| *v = ZERO);
            lop.mul_rows_add(rho, &mut mbuf, n);
            for r in 0..n {
                for c in 0..n {
                    mdag[r * n + c] = mbuf[c * n + r].conj();
                }
            }
            lop.mul_rows_add(&mdag, drho, n);
        }
    };

    let mut states = Vec::with_capacity(times.len());
    let mut populations = Vec::with_capacity(times.len());
    let stats = integrate(rhs, &y0, times, &h.breakpoints(), &cfg, |_, t, y| {
        let m = CMatrix::from_row_slice(n, n, y);
        let trace: f64 = (0..n).map(|k| m[(k, k)].re).sum();
        let drift = (trace - 1.0).abs();
        if drift > cfg.drift_abort {
            return Err(Error::NormDrift { t, drift });
        }
        let m = hermitian_part(&m);
        let rho = DensityMatrix::with_tolerance(space.clone(), m, f64::INFINITY)?;
        let min_eig = rho.min_eigenvalue();
        if min_eig < cfg.positivity_floor {
            return Err(Error::PositivityViolation { t, min_eigenvalue: min_eig });
        }
        populations.push(rho.populations());
        states.push(SampledState::Mixed(rho));
        Ok(())
    })?;
    Ok(EvolutionResult { times: times.to_vec(), states, populations, stats })
}

/// `exp(−iHt)ψ₀` at each requested time for a constant Hermitian `H`.
pub fn evolve_static(h: &CMatrix, psi0: &CVector, times: &[f64]) -> Vec<CVector> {
    let (values, vectors) = crate::linalg::eigh(h);
    let coeffs = vectors.adjoint() * psi0;
    times
        .iter()
        .map(|&t| {
            let phased = CVector::from_iterator(
                coeffs.len(),
                coeffs.iter().zip(values.iter()).map(|(c, &e)| c * C64::from_polar(1.0, -e * t)),
            );
            &vectors * phased
        })
        .collect()
}

/// Time average over `[0, T]` of `⟨ψ(t)|P|ψ(t)⟩` under a constant Hermitian
/// `H`, where `P` projects onto the basis states `subset`. Evaluated in
/// closed form from the eigendecomposition.
pub fn time_averaged_projection(h: &CMatrix, psi0: &CVector, subset: &[usize], duration: f64) -> f64 {
    let (values, vectors) = crate::linalg::eigh(h);
    let c = vectors.adjoint() * psi0;
    let n = values.len();
    let mut total = 0.0;
    for j in 0..n {
        for k in 0..n {
            let mut p = ZERO;
            for &s in subset {
                p += vectors[(s, j)].conj() * vectors[(s, k)];
            }
            if p == ZERO {
                continue;
            }
            let x = (values[j] - values[k]) * duration;
            // average of e^{i x τ/T} over τ ∈ [0, T]
            let w = if x.abs() < 1e-9 { C64::new(1.0, 0.5 * x) } else { (C64::from_polar(1.0, x) - 1.0) / (I * x) };
            total += (c[j].conj() * c[k] * p * w).re;
        }
    }
    total
}

/// Evenly spaced sample grid with `n` points on `[t0, t1]`.
pub fn linspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t1],
        _ => (0..n).map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64).collect(),
    }
}
