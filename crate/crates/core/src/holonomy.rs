//! Holonomic gate algebra on the Λ-system `{|fg0⟩, |gg1⟩, |gf0⟩}` and drive
//! synthesis for a target rotation.
//!
//! The coupling operator is `Â = λ₁|fg0⟩⟨gg1| + λ₂|gf0⟩⟨gg1| + h.c.`,
//! written in the basis order `(|fg0⟩, |gg1⟩, |gf0⟩)`. With
//! `|λ₁|² + |λ₂|² = 1` it satisfies `Â³ = Â`, so
//! `exp(−iGÂ) = I + Â²(cos G − 1) − iÂ sin G`. At `G = π` the restriction to
//! `{|fg0⟩, |gf0⟩}` equals the gate matrix
//! `[[cos θ, e^{iφ} sin θ], [e^{−iφ} sin θ, −cos θ]]` exactly, with no extra
//! global sign, for `λ₁/λ₂ = −e^{iφ} tan(θ/2)` in any gauge.

use std::f64::consts::{PI, TAU};

use crate::calibration::CalibrationTable;
use crate::device::{eta_for_coupling, DeviceParams, DrivePulse};
use crate::dynamics::{evolve_schrodinger, FnHamiltonian, IntegratorConfig, SampledState};
use crate::error::{Error, Result};
use crate::linalg::{operator_norm, unitary_exp, CMatrix, CVector, C64, I, ONE};
use crate::pulse::EnvelopeSpec;
use crate::quantum::{basis_state, HilbertSpace};

/// Tolerance on `|λ₁|² + |λ₂|² = 1`.
pub const NORM_TOL: f64 = 1e-12;

/// Basis position of `|fg0⟩`, `|gg1⟩` and `|gf0⟩` in the 3×3 matrices.
pub const FG0: usize = 0;
pub const GG1: usize = 1;
pub const GF0: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolonomyParams {
    pub lambda1: C64,
    pub lambda2: C64,
    pub theta: f64,
    pub phi: f64,
}

impl HolonomyParams {
    /// Builds parameters from a λ pair; θ and φ are derived.
    pub fn from_lambdas(lambda1: C64, lambda2: C64) -> Result<Self> {
        let norm = lambda1.norm_sqr() + lambda2.norm_sqr();
        if !((norm - 1.0).abs() <= NORM_TOL) {
            return Err(Error::InvalidArgument(format!("|λ₁|² + |λ₂|² = {norm}, expected 1")));
        }
        let (theta, phi) = angles(lambda1, lambda2);
        Ok(Self { lambda1, lambda2, theta, phi })
    }

    pub fn lambdas(&self) -> [C64; 2] {
        [self.lambda1, self.lambda2]
    }

    /// Fraction of `|fg⟩` population moved to `|gf⟩`, `sin²θ`.
    pub fn transfer_fraction(&self) -> f64 {
        self.theta.sin().powi(2)
    }
}

fn angles(lambda1: C64, lambda2: C64) -> (f64, f64) {
    let theta = 2.0 * lambda1.norm().atan2(lambda2.norm());
    let phi = if lambda1.norm() == 0.0 {
        0.0
    } else if lambda2.norm() == 0.0 {
        (-lambda1).arg()
    } else {
        (-lambda1 / lambda2).arg()
    };
    (theta, phi.rem_euclid(TAU))
}

/// `λ₂ = cos(θ/2)` (real, nonnegative) and `λ₁ = −e^{iφ} sin(θ/2)`. At
/// `θ = π` λ₂ vanishes and λ₁ carries only the phase.
pub fn params_from_theta_phi(theta: f64, phi: f64) -> Result<HolonomyParams> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::InvalidArgument(format!("θ = {theta} outside [0, π]")));
    }
    if !phi.is_finite() {
        return Err(Error::InvalidArgument("φ must be finite".into()));
    }
    let lambda2 = C64::new((0.5 * theta).cos(), 0.0);
    let lambda1 = -C64::from_polar((0.5 * theta).sin(), phi);
    Ok(HolonomyParams { lambda1, lambda2, theta, phi: phi.rem_euclid(TAU) })
}

/// Recovers `(θ, φ)` from the λ pair. φ is reported as 0 when `λ₁ = 0`.
pub fn theta_phi_from_params(params: &HolonomyParams) -> (f64, f64) {
    angles(params.lambda1, params.lambda2)
}

/// Two-qubit operation on `{|fg⟩, |gf⟩}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HolonomicGate {
    pub matrix: CMatrix,
}

impl HolonomicGate {
    pub fn unitarity_error(&self) -> f64 {
        operator_norm(&(self.matrix.adjoint() * &self.matrix - CMatrix::identity(2, 2)))
    }

    pub fn hermiticity_error(&self) -> f64 {
        operator_norm(&(self.matrix.adjoint() - &self.matrix))
    }

    pub fn involution_error(&self) -> f64 {
        operator_norm(&(&self.matrix * &self.matrix - CMatrix::identity(2, 2)))
    }

    pub fn determinant(&self) -> C64 {
        let m = &self.matrix;
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    }

    /// Image of `|fg⟩`.
    pub fn apply_to_fg(&self) -> [C64; 2] {
        [self.matrix[(0, 0)], self.matrix[(1, 0)]]
    }
}

pub fn gate_matrix(params: &HolonomyParams) -> HolonomicGate {
    let (s, c) = params.theta.sin_cos();
    let e = C64::from_polar(1.0, params.phi);
    let matrix = CMatrix::from_row_slice(2, 2, &[C64::new(c, 0.0), e * s, e.conj() * s, C64::new(-c, 0.0)]);
    HolonomicGate { matrix }
}

/// `Â` in the basis `(|fg0⟩, |gg1⟩, |gf0⟩)`.
pub fn a_matrix(params: &HolonomyParams) -> CMatrix {
    let mut a = CMatrix::zeros(3, 3);
    a[(FG0, GG1)] = params.lambda1;
    a[(GG1, FG0)] = params.lambda1.conj();
    a[(GF0, GG1)] = params.lambda2;
    a[(GG1, GF0)] = params.lambda2.conj();
    a
}

/// `exp(−iGÂ) = I + Â²(cos G − 1) − iÂ sin G`.
pub fn closed_form_propagator(params: &HolonomyParams, g: f64) -> CMatrix {
    let a = a_matrix(params);
    let a2 = &a * &a;
    CMatrix::identity(3, 3) + a2 * C64::new(g.cos() - 1.0, 0.0) - a * (I * g.sin())
}

/// Restriction of a 3×3 operator to `{|fg0⟩, |gf0⟩}`.
pub fn qubit_block(u: &CMatrix) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[u[(FG0, FG0)], u[(FG0, GF0)], u[(GF0, FG0)], u[(GF0, GF0)]])
}

/// Orthonormal pair `α|fg0⟩ + β|gf0⟩`, `β*|fg0⟩ − α*|gf0⟩`.
pub fn qubit_subspace_basis(alpha: C64, beta: C64) -> Result<[CVector; 2]> {
    let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
    if !(n > 0.0) {
        return Err(Error::InvalidArgument("α and β both vanish".into()));
    }
    let (alpha, beta) = (alpha / n, beta / n);
    let mut v1 = CVector::zeros(3);
    let mut v2 = CVector::zeros(3);
    v1[FG0] = alpha;
    v1[GF0] = beta;
    v2[FG0] = beta.conj();
    v2[GF0] = -alpha.conj();
    Ok([v1, v2])
}

/// Largest `|⟨ψⱼ(G)|Â|ψₖ(G)⟩|` over the grid, for the basis built from
/// `(α, β)` evolved by `exp(−iGÂ)`.
pub fn verify_parallel_transport(params: &HolonomyParams, g_grid: &[f64], alpha: C64, beta: C64) -> Result<f64> {
    parallel_transport_violation(&a_matrix(params), g_grid, alpha, beta)
}

/// As [`verify_parallel_transport`] for an arbitrary Hermitian generator
/// `h` (in units of g̃, so that G plays the role of time).
pub fn parallel_transport_violation(h: &CMatrix, g_grid: &[f64], alpha: C64, beta: C64) -> Result<f64> {
    if h.nrows() != 3 || h.ncols() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: h.nrows() });
    }
    let basis = qubit_subspace_basis(alpha, beta)?;
    let mut worst: f64 = 0.0;
    for &g in g_grid {
        let u = unitary_exp(h, g);
        let psi = [&u * &basis[0], &u * &basis[1]];
        for j in 0..2 {
            for k in 0..2 {
                let v = psi[j].dotc(&(h * &psi[k]));
                worst = worst.max(v.norm());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicityReport {
    pub cyclic: bool,
    pub leakage: f64,
}

/// Checks that `exp(−iGÂ)` at `G = π` maps `{|fg0⟩, |gf0⟩}` to itself.
pub fn verify_cyclicity(params: &HolonomyParams) -> CyclicityReport {
    cyclicity_at(params, PI)
}

/// Leakage onto `|gg1⟩` of the qubit basis states after area `g`.
pub fn cyclicity_at(params: &HolonomyParams, g: f64) -> CyclicityReport {
    let u = closed_form_propagator(params, g);
    let leakage = u[(GG1, FG0)].norm().max(u[(GG1, GF0)].norm());
    CyclicityReport { cyclic: leakage < 1e-12, leakage }
}

/// Drive-amplitude unit: envelope amplitude `V` corresponds to
/// `η = V · 2π · 1 GHz`.
pub const VOLT: f64 = TAU * 1e9;

/// Constraints on synthesized drives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveLimits {
    /// Ceiling on the peak envelope amplitude η (rad/s).
    pub max_eta: f64,
}

impl Default for DriveLimits {
    fn default() -> Self {
        Self { max_eta: VOLT }
    }
}

/// Builds the two tones realizing `params` with a shared envelope shape.
///
/// The envelope amplitude of `shape` is ignored; amplitudes are set so that
/// `∫√(|g̃₁|² + |g̃₂|²) dt = π` with `|g̃ᵢ| ∝ |λᵢ|`. With a calibration table
/// the coupling per unit amplitude comes from the Rabi calibration and the
/// frequencies from the Stark polynomials plus cross-Stark offsets;
/// without one, amplitudes follow the perturbative coupling formula and
/// the tones sit at the bare difference frequencies `2ωᵢ + αᵢ − ω_r`.
/// The relative phase is carried by drive 2: `φ₁ = 0`, `φ₂ = −φ`.
pub fn synthesize_drives(
    params: &HolonomyParams,
    device: &DeviceParams,
    calibration: Option<&CalibrationTable>,
    shape: &EnvelopeSpec,
    limits: &DriveLimits,
) -> Result<[DrivePulse; 2]> {
    let unit_area = shape.with_amplitude(1.0).area();
    if !(unit_area > 0.0) {
        return Err(Error::InvalidArgument("envelope has zero area".into()));
    }
    // common coupling envelope amplitude: g̃(t) = kappa · shape(t)
    let kappa = PI / unit_area;
    let mags = [params.lambda1.norm(), params.lambda2.norm()];
    let mut pulses = [DrivePulse::new(0, *shape, 0.0), DrivePulse::new(1, *shape, 0.0)];
    for q in 0..2 {
        let coupling = mags[q] * kappa;
        let (eta, freq) = match calibration {
            Some(cal) => {
                let eta = coupling / cal.coupling_per_eta(q)?;
                (eta, cal.drive_frequency(q, eta / VOLT, params.theta))
            }
            None => (eta_for_coupling(device, q, coupling)?, device.bare_f0g1_frequency(q)),
        };
        if eta > limits.max_eta {
            return Err(Error::AmplitudeCeiling { required: eta, ceiling: limits.max_eta });
        }
        let phase = if q == 0 { 0.0 } else { -params.phi };
        pulses[q] = DrivePulse::new(q, shape.with_amplitude(eta), freq).with_phase(phase).with_scale(ONE);
    }
    Ok(pulses)
}

/// Propagator of `H(t) = g̃(t)Â` integrated column by column, with
/// `g̃(t) ∝ shape(t)` scaled to total area `g`. Basis `(|fg0⟩, |gg1⟩, |gf0⟩)`;
/// at `G = π` it should reproduce [`closed_form_propagator`].
pub fn integrated_propagator(params: &HolonomyParams, shape: &EnvelopeSpec, g: f64, cfg: &IntegratorConfig) -> Result<CMatrix> {
    let unit_area = shape.with_amplitude(1.0).area();
    if !(unit_area > 0.0) {
        return Err(Error::InvalidArgument("envelope has zero area".into()));
    }
    let env = shape.with_amplitude(g / unit_area);
    let a = a_matrix(params);
    let h = FnHamiltonian::new(3, move |t| &a * C64::new(env.value(t), 0.0)).with_breakpoints(env.breakpoints());
    let space = HilbertSpace::new(vec![3])?;
    let mut u = CMatrix::zeros(3, 3);
    for k in 0..3 {
        let psi0 = basis_state(&space, &[k])?;
        let r = evolve_schrodinger(&h, &psi0, &[0.0, env.duration], cfg)?;
        let SampledState::Pure(psi) = r.final_state() else {
            return Err(Error::InvalidArgument("expected a pure state".into()));
        };
        u.set_column(k, psi.amplitudes());
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_deviation, ZERO};

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn theta_zero_gives_no_transfer() {
        let p = params_from_theta_phi(0.0, 1.3).unwrap();
        assert!(close(p.lambda1, ZERO, 1e-15));
        assert!(close(p.lambda2, ONE, 1e-15));
        let g = gate_matrix(&p);
        assert!(close(g.matrix[(0, 0)], ONE, 1e-15));
        assert!(close(g.matrix[(1, 1)], -ONE, 1e-15));
        assert!(g.matrix[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn worked_example_equal_lambdas() {
        let p = params_from_theta_phi(PI / 2.0, PI).unwrap();
        let r = 0.5f64.sqrt();
        assert!(close(p.lambda1, C64::new(r, 0.0), 1e-15));
        assert!(close(p.lambda2, C64::new(r, 0.0), 1e-15));
    }

    #[test]
    fn theta_pi_puts_weight_on_lambda1() {
        let p = params_from_theta_phi(PI, 0.4).unwrap();
        assert!(p.lambda2.norm() < 1e-15);
        assert!((p.lambda1.norm() - 1.0).abs() < 1e-15);
        let (t, f) = theta_phi_from_params(&p);
        assert!((t - PI).abs() < 1e-12 && (f - 0.4).abs() < 1e-12);
    }

    #[test]
    fn swap_and_bell_gates() {
        let x = gate_matrix(&params_from_theta_phi(PI / 2.0, 0.0).unwrap());
        assert!(x.matrix[(0, 0)].norm() < 1e-15);
        assert!(close(x.matrix[(0, 1)], ONE, 1e-15));
        let b = gate_matrix(&params_from_theta_phi(PI / 4.0, 0.0).unwrap());
        assert!((b.apply_to_fg()[1].norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gate_structure() {
        for k in 0..20 {
            let p = params_from_theta_phi(0.15 * k as f64, 0.7 * k as f64).unwrap();
            let g = gate_matrix(&p);
            assert!(g.unitarity_error() < 1e-12);
            assert!(g.hermiticity_error() < 1e-12);
            assert!(g.involution_error() < 1e-12);
            assert!(close(g.determinant(), -ONE, 1e-12));
        }
    }

    #[test]
    fn equal_lambda_swap_maps_fg_to_gf() {
        let p = params_from_theta_phi(PI / 2.0, PI).unwrap();
        let u = closed_form_propagator(&p, PI);
        // I − 2Â² with λ = 1/√2: −2 λ₁λ₂* = −1
        assert!(close(u[(GF0, FG0)], -ONE, 1e-15));
        assert!(u[(GG1, FG0)].norm() < 1e-15);
        assert!(u[(FG0, FG0)].norm() < 1e-15);
    }

    #[test]
    fn propagator_identity_at_zero_area() {
        let p = params_from_theta_phi(1.0, 2.0).unwrap();
        assert!(operator_norm(&(closed_form_propagator(&p, 0.0) - CMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn gauge_invariance_of_the_gate_block() {
        let p = params_from_theta_phi(0.9, 2.2).unwrap();
        let chi = C64::from_polar(1.0, 0.77);
        let q = HolonomyParams::from_lambdas(p.lambda1 * chi, p.lambda2 * chi).unwrap();
        let gate = gate_matrix(&p).matrix;
        assert!(operator_norm(&(qubit_block(&closed_form_propagator(&q, PI)) - &gate)) < 1e-14);
    }

    #[test]
    fn unnormalized_lambdas_rejected() {
        assert!(HolonomyParams::from_lambdas(ONE, ONE).is_err());
        assert!(params_from_theta_phi(-0.1, 0.0).is_err());
        assert!(params_from_theta_phi(PI + 0.1, 0.0).is_err());
    }

    #[test]
    fn a_matrix_is_hermitian() {
        let p = params_from_theta_phi(1.1, 0.3).unwrap();
        assert!(hermitian_deviation(&a_matrix(&p)) == 0.0);
    }

    #[test]
    fn half_area_is_not_cyclic() {
        let p = params_from_theta_phi(PI / 2.0, 0.0).unwrap();
        assert!(verify_cyclicity(&p).cyclic);
        let half = cyclicity_at(&p, PI / 2.0);
        assert!(!half.cyclic && half.leakage > 0.5);
    }

    #[test]
    fn lambda_zero_one_leaves_fg0() {
        let p = HolonomyParams::from_lambdas(ZERO, ONE).unwrap();
        let u = closed_form_propagator(&p, PI);
        assert!(close(u[(FG0, FG0)], ONE, 1e-15));
        assert!(verify_cyclicity(&p).leakage < 1e-12);
    }

    #[test]
    fn bare_synthesis_amplitudes() {
        let device = DeviceParams::reference();
        let shape = EnvelopeSpec::square(1.0, 213e-9).unwrap();
        let p = params_from_theta_phi(0.0, 0.0).unwrap();
        let d = synthesize_drives(&p, &device, None, &shape, &DriveLimits::default()).unwrap();
        assert_eq!(d[0].envelope.amplitude, 0.0);
        assert!((d[1].drive_freq - device.bare_f0g1_frequency(1)).abs() < 1e-6);
        let p = params_from_theta_phi(PI / 2.0, 0.5).unwrap();
        let d = synthesize_drives(&p, &device, None, &shape, &DriveLimits::default()).unwrap();
        assert!((d[1].phase + 0.5).abs() < 1e-15 && d[0].phase == 0.0);
        let tight = DriveLimits { max_eta: 1.0 };
        assert!(matches!(
            synthesize_drives(&p, &device, None, &shape, &tight),
            Err(Error::AmplitudeCeiling { .. })
        ));
    }
}
