//! Device model: the driven two-transmon / bus-resonator Hamiltonian, the
//! second-order effective couplings of the `|f0⟩ ↔ |g1⟩` transitions, the
//! effective Λ-system Hamiltonian and the relaxation operators.
//!
//! Units are SI throughout: angular frequencies in rad/s, times in s. Config
//! files use GHz and µs and are converted on load.

use std::f64::consts::{PI, SQRT_2};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::pulse::EnvelopeSpec;
use crate::quantum::{lowering_operator, number_operator, HilbertSpace, Operator};

pub const TWO_PI: f64 = 2.0 * PI;

/// GHz → rad/s.
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// MHz → rad/s.
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

/// rad/s → MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / TWO_PI / 1e6
}

/// rad/s → GHz.
pub fn to_ghz(omega: f64) -> f64 {
    omega / TWO_PI / 1e9
}

/// Letters used for transmon levels in state labels.
const LEVEL_LETTERS: [char; 6] = ['g', 'e', 'f', 'h', 'i', 'j'];

/// Formats labels `[q1, q2, r]` as e.g. `"fg0"`.
pub fn state_label(labels: &[usize]) -> String {
    let mut s = String::new();
    let last = labels.len().saturating_sub(1);
    for (k, &l) in labels.iter().enumerate() {
        if k == last && labels.len() > 1 {
            s.push_str(&l.to_string());
        } else {
            s.push(LEVEL_LETTERS.get(l).copied().unwrap_or('?'));
        }
    }
    s
}

/// Parses a label such as `"gf0"` back into level indices.
pub fn parse_state_label(label: &str) -> Result<Vec<usize>> {
    let chars: Vec<char> = label.chars().collect();
    if chars.len() < 2 {
        return Err(Error::InvalidArgument(format!("state label {label:?} is too short")));
    }
    let mut labels = Vec::with_capacity(chars.len());
    for &c in &chars[..chars.len() - 1] {
        let level = LEVEL_LETTERS
            .iter()
            .position(|&l| l == c)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown transmon level {c:?} in {label:?}")))?;
        labels.push(level);
    }
    let photons = chars[chars.len() - 1]
        .to_digit(10)
        .ok_or_else(|| Error::InvalidArgument(format!("resonator level missing in {label:?}")))?;
    labels.push(photons as usize);
    Ok(labels)
}

/// Static device constants. Subsystem order is qubit 1, qubit 2, resonator.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    pub omega_r: f64,
    pub omega: [f64; 2],
    pub alpha: [f64; 2],
    pub g: [f64; 2],
    pub t1_q: [f64; 2],
    pub t1_r: f64,
    pub space: HilbertSpace,
}

impl DeviceParams {
    /// The two-transmon device with bus resonator studied in the holonomic
    /// two-qubit experiments (frequencies and couplings as measured).
    pub fn reference() -> Self {
        Self {
            omega_r: ghz(6.272),
            omega: [ghz(4.896), ghz(4.689)],
            alpha: [ghz(-0.330), ghz(-0.333)],
            g: [ghz(0.156), ghz(0.196)],
            t1_q: [42e-6, 56e-6],
            t1_r: 7e-6,
            space: HilbertSpace::transmon_pair(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.space.num_subsystems() != 3 {
            return Err(Error::InvalidArgument("device space must be [qubit, qubit, resonator]".into()));
        }
        for q in 0..2 {
            if !(self.alpha[q] < 0.0) {
                return Err(Error::InvalidArgument(format!("anharmonicity of qubit {} must be negative", q + 1)));
            }
            if !(self.t1_q[q] > 0.0) {
                return Err(Error::InvalidArgument(format!("T1 of qubit {} must be positive", q + 1)));
            }
            let delta = self.detuning(q);
            if delta.abs() <= 5.0 * self.g[q].abs() {
                return Err(Error::InvalidArgument(format!(
                    "qubit {} is not dispersive: |Δ| = {:.4} GHz ≤ 5 g",
                    q + 1,
                    to_ghz(delta.abs())
                )));
            }
        }
        if !(self.t1_r > 0.0) {
            return Err(Error::InvalidArgument("resonator T1 must be positive".into()));
        }
        Ok(())
    }

    /// Δᵢ = ωᵢ − ω_r.
    pub fn detuning(&self, qubit: usize) -> f64 {
        self.omega[qubit] - self.omega_r
    }

    /// Bare `|f0⟩ ↔ |g1⟩` difference frequency `2ωᵢ + αᵢ − ω_r`.
    pub fn bare_f0g1_frequency(&self, qubit: usize) -> f64 {
        2.0 * self.omega[qubit] + self.alpha[qubit] - self.omega_r
    }

    pub fn with_t1(mut self, t1_q: [f64; 2], t1_r: f64) -> Self {
        self.t1_q = t1_q;
        self.t1_r = t1_r;
        self
    }

    /// Parses a key-value (TOML) document with GHz frequencies and µs
    /// relaxation times. Missing keys keep the reference values; `inf`
    /// disables relaxation for that element.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let raw: DeviceConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.into_params()
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// File representation of [`DeviceParams`].
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub omega_r_ghz: Option<f64>,
    pub omega1_ghz: Option<f64>,
    pub omega2_ghz: Option<f64>,
    pub alpha1_ghz: Option<f64>,
    pub alpha2_ghz: Option<f64>,
    pub g1_ghz: Option<f64>,
    pub g2_ghz: Option<f64>,
    pub t1_q1_us: Option<f64>,
    pub t1_q2_us: Option<f64>,
    pub t1_r_us: Option<f64>,
    pub dims: Option<Vec<usize>>,
}

impl DeviceConfig {
    pub fn into_params(self) -> Result<DeviceParams> {
        let r = DeviceParams::reference();
        let f = |v: Option<f64>, default: f64| v.map(ghz).unwrap_or(default);
        let t = |v: Option<f64>, default: f64| v.map(|us| us * 1e-6).unwrap_or(default);
        let params = DeviceParams {
            omega_r: f(self.omega_r_ghz, r.omega_r),
            omega: [f(self.omega1_ghz, r.omega[0]), f(self.omega2_ghz, r.omega[1])],
            alpha: [f(self.alpha1_ghz, r.alpha[0]), f(self.alpha2_ghz, r.alpha[1])],
            g: [f(self.g1_ghz, r.g[0]), f(self.g2_ghz, r.g[1])],
            t1_q: [t(self.t1_q1_us, r.t1_q[0]), t(self.t1_q2_us, r.t1_q[1])],
            t1_r: t(self.t1_r_us, r.t1_r),
            space: match self.dims {
                Some(d) => HilbertSpace::new(d)?,
                None => r.space,
            },
        };
        params.validate()?;
        Ok(params)
    }
}

/// One microwave tone `Ωᵢ(t) = η(t)·Re[λᵢ e^{−i(ω_d t + φᵢ)}]`; for real
/// λ this is `λ η(t) cos(ω_d t + φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePulse {
    pub qubit: usize,
    pub envelope: EnvelopeSpec,
    pub drive_freq: f64,
    pub phase: f64,
    pub scale: C64,
}

impl DrivePulse {
    pub fn new(qubit: usize, envelope: EnvelopeSpec, drive_freq: f64) -> Self {
        Self { qubit, envelope, drive_freq, phase: 0.0, scale: C64::new(1.0, 0.0) }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_scale(mut self, scale: C64) -> Self {
        self.scale = scale;
        self
    }

    /// Real drive amplitude Ω(t) in rad/s.
    pub fn value(&self, t: f64) -> f64 {
        let eta = self.envelope.value(t);
        if eta == 0.0 {
            return 0.0;
        }
        eta * (self.scale * C64::from_polar(1.0, -(self.drive_freq * t + self.phase))).re
    }

    /// Coefficient of the co-rotating `b†` term, `η(t) λ e^{−i(ω_d t + φ)} / 2`.
    pub fn rotating_coefficient(&self, t: f64) -> C64 {
        let eta = self.envelope.value(t);
        self.scale * C64::from_polar(0.5 * eta, -(self.drive_freq * t + self.phase))
    }

    /// Peak |λ|·η in rad/s.
    pub fn peak_amplitude(&self) -> f64 {
        self.envelope.amplitude * self.scale.norm()
    }
}

fn check_qubit(qubit: usize) -> Result<()> {
    if qubit > 1 {
        return Err(Error::SubsystemOutOfRange { index: qubit, count: 2 });
    }
    Ok(())
}

/// Undriven Hamiltonian
/// `ω_r a†a + Σᵢ [ωᵢ bᵢ†bᵢ + (αᵢ/2) bᵢ†bᵢ†bᵢbᵢ + gᵢ(bᵢ†a + bᵢa†)]`.
pub fn static_hamiltonian(params: &DeviceParams) -> Result<Operator> {
    let space = &params.space;
    let a = lowering_operator(space, 2)?.into_matrix();
    let n_r = number_operator(space, 2)?.into_matrix();
    let mut h = n_r * C64::new(params.omega_r, 0.0);
    for q in 0..2 {
        let b = lowering_operator(space, q)?.into_matrix();
        let bd = b.adjoint();
        let n = number_operator(space, q)?.into_matrix();
        let kerr = &bd * &bd * &b * &b;
        h += n * C64::new(params.omega[q], 0.0);
        h += kerr * C64::new(0.5 * params.alpha[q], 0.0);
        h += (&bd * &a + &b * a.adjoint()) * C64::new(params.g[q], 0.0);
    }
    Operator::new(space.clone(), h)
}

/// `bᵢ + bᵢ†` for a qubit.
pub fn drive_operator(params: &DeviceParams, qubit: usize) -> Result<Operator> {
    check_qubit(qubit)?;
    let b = lowering_operator(&params.space, qubit)?.into_matrix();
    let x = &b + b.adjoint();
    Operator::new(params.space.clone(), x)
}

/// Lab-frame driven Hamiltonian at time `t`, with full cosine drives
/// `Ωᵢ(t)(bᵢ† + bᵢ)` (no rotating-wave approximation). Envelopes are
/// evaluated with all pulses starting at `t = 0`.
pub fn hamiltonian(params: &DeviceParams, drives: &[DrivePulse], t: f64) -> Result<Operator> {
    for d in drives {
        check_qubit(d.qubit)?;
    }
    let mut h = static_hamiltonian(params)?.into_matrix();
    for d in drives {
        let omega = d.value(t);
        if omega != 0.0 {
            h += drive_operator(params, d.qubit)?.into_matrix() * C64::new(omega, 0.0);
        }
    }
    Operator::new(params.space.clone(), h)
}

/// Second-order effective `|f0⟩ ↔ |g1⟩` coupling
/// `g̃ᵢ = gᵢ αᵢ λᵢ ηᵢ / (√2 Δᵢ (Δᵢ + αᵢ))`.
pub fn effective_coupling(params: &DeviceParams, qubit: usize, lambda: C64, eta: f64) -> Result<C64> {
    check_qubit(qubit)?;
    let delta = params.detuning(qubit);
    let alpha = params.alpha[qubit];
    let tol = 1e-12 * params.omega_r.abs();
    if delta.abs() <= tol {
        return Err(Error::Singular("qubit resonant with the bus (Δ = 0)"));
    }
    if (delta + alpha).abs() <= tol {
        return Err(Error::Singular("e-f transition resonant with the bus (Δ + α = 0)"));
    }
    let k = params.g[qubit] * alpha / (SQRT_2 * delta * (delta + alpha));
    Ok(lambda * (k * eta))
}

/// Envelope amplitude η that yields |g̃ᵢ| = `target` for |λ| = 1.
pub fn eta_for_coupling(params: &DeviceParams, qubit: usize, target: f64) -> Result<f64> {
    let per_unit = effective_coupling(params, qubit, C64::new(1.0, 0.0), 1.0)?;
    Ok(target / per_unit.norm())
}

/// Parameters of the effective Λ-system on `{|fg0⟩, |gf0⟩, |gg1⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub gtilde: [C64; 2],
    pub delta_fg0: f64,
    pub delta_gf0: f64,
}

impl EffectiveParams {
    pub fn resonant(gtilde: [C64; 2]) -> Self {
        Self { gtilde, delta_fg0: 0.0, delta_gf0: 0.0 }
    }

    /// Relative mismatch `|g̃₁/λ₁ − g̃₂/λ₂| / |g̃₁/λ₁|` of the equal-rate
    /// condition.
    pub fn equal_rate_mismatch(&self, lambda: [C64; 2]) -> f64 {
        let r1 = self.gtilde[0] / lambda[0];
        let r2 = self.gtilde[1] / lambda[1];
        (r1 - r2).norm() / r1.norm()
    }
}

/// 3×3 effective Hamiltonian in the basis `(|fg0⟩, |gf0⟩, |gg1⟩)`:
/// `Δ_fg0|fg0⟩⟨fg0| + Δ_gf0|gf0⟩⟨gf0| + g̃₁|fg0⟩⟨gg1| + g̃₂|gf0⟩⟨gg1| + h.c.`
pub fn effective_hamiltonian(eff: &EffectiveParams) -> Operator {
    let mut h = CMatrix::zeros(3, 3);
    h[(0, 0)] = C64::new(eff.delta_fg0, 0.0);
    h[(1, 1)] = C64::new(eff.delta_gf0, 0.0);
    h[(0, 2)] = eff.gtilde[0];
    h[(2, 0)] = eff.gtilde[0].conj();
    h[(1, 2)] = eff.gtilde[1];
    h[(2, 1)] = eff.gtilde[1].conj();
    h[(2, 2)] = ZERO;
    Operator::new(HilbertSpace::new(vec![3]).expect("valid"), h).expect("3x3")
}

/// Ladder relaxation `√(1/T1) b` for each qubit and the resonator. An
/// infinite T1 yields a zero operator.
pub fn collapse_operators(params: &DeviceParams) -> Result<Vec<Operator>> {
    let rates = [1.0 / params.t1_q[0], 1.0 / params.t1_q[1], 1.0 / params.t1_r];
    rates
        .iter()
        .enumerate()
        .map(|(subsystem, &rate)| {
            Ok(lowering_operator(&params.space, subsystem)?.scaled(C64::new(rate.sqrt(), 0.0)))
        })
        .collect()
}
