//! Two-qubit state tomography in the `{g, e}` subspace: shot sampling in
//! nine pre-rotation settings, linear-inversion reconstruction with a PSD
//! projection, and Pauli and phase readouts.
//!
//! Sign convention: `Z|g⟩ = +|g⟩`, outcome bit 0 is `g`.

use std::fmt;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{eigh, kron, CMatrix, C64, I, ONE, ZERO};
use crate::quantum::{partial_trace, DensityMatrix, HilbertSpace};

/// Populations below this on either of `|eg⟩`, `|ge⟩` make a phase estimate
/// low-confidence.
pub const PHASE_POPULATION_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn pauli(self) -> CMatrix {
        match self {
            Axis::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Axis::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Axis::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    /// Pre-measurement π/2 rotation `R` with `R† Z R` equal to this Pauli.
    pub fn pre_rotation(self) -> CMatrix {
        let c = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        match self {
            // R_y(−π/2)
            Axis::X => CMatrix::from_row_slice(2, 2, &[c, c, -c, c]),
            // R_x(π/2)
            Axis::Y => CMatrix::from_row_slice(2, 2, &[c, -I * c, -I * c, c]),
            Axis::Z => CMatrix::identity(2, 2),
        }
    }

    fn label(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

/// Measurement axis of qubit 1 and qubit 2.
pub type BasisSetting = [Axis; 2];

/// The nine product settings, qubit 1 slowest.
pub fn tomography_settings() -> Vec<BasisSetting> {
    Axis::ALL.iter().flat_map(|&a| Axis::ALL.iter().map(move |&b| [a, b])).collect()
}

pub fn setting_label(s: BasisSetting) -> String {
    format!("{}{}", s[0].label(), s[1].label())
}

/// Single-shot outcomes of one setting; bit 1 means the qubit was found in `e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotRecord {
    pub setting: BasisSetting,
    pub outcomes: Vec<[u8; 2]>,
}

impl ShotRecord {
    pub fn shots(&self) -> usize {
        self.outcomes.len()
    }

    /// Counts of `gg, ge, eg, ee`.
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for o in &self.outcomes {
            c[2 * o[0] as usize + o[1] as usize] += 1;
        }
        c
    }

    /// Empirical `⟨σ_a⊗I⟩, ⟨I⊗σ_b⟩, ⟨σ_a⊗σ_b⟩`.
    pub fn correlators(&self) -> [f64; 3] {
        let n = self.shots() as f64;
        let mut s = [0.0; 3];
        for o in &self.outcomes {
            let z1 = 1.0 - 2.0 * o[0] as f64;
            let z2 = 1.0 - 2.0 * o[1] as f64;
            s[0] += z1;
            s[1] += z2;
            s[2] += z1 * z2;
        }
        s.map(|v| v / n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting,shot,q1,q2\n");
        let label = setting_label(self.setting);
        for (k, o) in self.outcomes.iter().enumerate() {
            out.push_str(&format!("{label},{k},{},{}\n", o[0], o[1]));
        }
        out
    }
}

fn two_qubit_space() -> HilbertSpace {
    HilbertSpace::new(vec![2, 2]).expect("valid dims")
}

fn check_two_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.space().dims() != [2, 2] {
        return Err(Error::InvalidArgument(format!("expected a two-qubit state, got dims {:?}", rho.space().dims())));
    }
    Ok(())
}

/// Born-rule probabilities of `gg, ge, eg, ee` after the pre-rotations.
pub fn outcome_probabilities(rho: &DensityMatrix, setting: BasisSetting) -> Result<[f64; 4]> {
    check_two_qubit(rho)?;
    let r = kron(&setting[0].pre_rotation(), &setting[1].pre_rotation());
    let rotated = &r * rho.matrix() * r.adjoint();
    Ok([0, 1, 2, 3].map(|k| rotated[(k, k)].re.max(0.0)))
}

/// Draws `shots` independent outcomes; identical seeds give identical records.
pub fn sample_shots(rho: &DensityMatrix, setting: BasisSetting, shots: usize, seed: u64) -> Result<ShotRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be positive".into()));
    }
    let p = outcome_probabilities(rho, setting)?;
    let dist = WeightedIndex::new(p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcomes = (0..shots)
        .map(|_| {
            let k = dist.sample(&mut rng);
            [(k >> 1) as u8, (k & 1) as u8]
        })
        .collect();
    Ok(ShotRecord { setting, outcomes })
}

/// All nine settings, each with a seed derived from `seed` and its position.
pub fn sample_all_settings(rho: &DensityMatrix, shots: usize, seed: u64) -> Result<Vec<ShotRecord>> {
    tomography_settings()
        .into_iter()
        .enumerate()
        .map(|(k, s)| sample_shots(rho, s, shots, seed.wrapping_mul(9).wrapping_add(k as u64)))
        .collect()
}

/// The 15 non-identity two-qubit Pauli expectations, ordered
/// `XI, YI, ZI, IX, IY, IZ, XX, XY, XZ, YX, YY, YZ, ZX, ZY, ZZ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliVector {
    pub values: [f64; 15],
}

/// `None` stands for the identity.
pub type PauliLabel = [Option<Axis>; 2];

impl PauliVector {
    pub fn labels() -> [PauliLabel; 15] {
        let mut out = [[None, None]; 15];
        let mut k = 0;
        for a in Axis::ALL {
            out[k] = [Some(a), None];
            k += 1;
        }
        for b in Axis::ALL {
            out[k] = [None, Some(b)];
            k += 1;
        }
        for a in Axis::ALL {
            for b in Axis::ALL {
                out[k] = [Some(a), Some(b)];
                k += 1;
            }
        }
        out
    }

    pub fn label_string(label: PauliLabel) -> String {
        label.iter().map(|a| a.map_or('I', Axis::label)).collect()
    }

    pub fn get(&self, label: PauliLabel) -> f64 {
        let k = Self::labels().iter().position(|l| *l == label).expect("non-identity label");
        self.values[k]
    }

    /// `¼ (I + Σ ⟨P⟩ P)`; Hermitian with unit trace but not necessarily PSD.
    pub fn linear_inversion(&self) -> CMatrix {
        let mut m = CMatrix::identity(4, 4);
        for (label, v) in Self::labels().iter().zip(&self.values) {
            m += pauli_matrix(*label) * C64::new(*v, 0.0);
        }
        m * C64::new(0.25, 0.0)
    }
}

pub fn pauli_matrix(label: PauliLabel) -> CMatrix {
    let one = |a: Option<Axis>| a.map_or_else(|| CMatrix::identity(2, 2), Axis::pauli);
    kron(&one(label[0]), &one(label[1]))
}

pub fn pauli_vector(rho: &DensityMatrix) -> Result<PauliVector> {
    check_two_qubit(rho)?;
    let labels = PauliVector::labels();
    let mut values = [0.0; 15];
    for (v, l) in values.iter_mut().zip(labels) {
        *v = rho.expectation(&pauli_matrix(l)).re.clamp(-1.0, 1.0);
    }
    Ok(PauliVector { values })
}

/// Pauli expectations averaged over every setting that measures them.
pub fn pauli_vector_from_records(records: &[ShotRecord]) -> Result<PauliVector> {
    let mut sums = [0.0; 15];
    let mut weights = [0usize; 15];
    let labels = PauliVector::labels();
    let mut add = |label: PauliLabel, value: f64, shots: usize| {
        let k = labels.iter().position(|l| *l == label).expect("non-identity label");
        sums[k] += value * shots as f64;
        weights[k] += shots;
    };
    for r in records {
        if r.outcomes.is_empty() {
            return Err(Error::InvalidArgument("record without shots".into()));
        }
        let [a, b] = r.setting;
        let c = r.correlators();
        add([Some(a), None], c[0], r.shots());
        add([None, Some(b)], c[1], r.shots());
        add([Some(a), Some(b)], c[2], r.shots());
    }
    let missing: Vec<String> =
        labels.iter().zip(&weights).filter(|(_, &w)| w == 0).map(|(l, _)| PauliVector::label_string(*l)).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteTomography(format!("no data for {}", missing.join(", "))));
    }
    let mut values = [0.0; 15];
    for k in 0..15 {
        values[k] = sums[k] / weights[k] as f64;
    }
    Ok(PauliVector { values })
}

/// Nearest-PSD projection by eigenvalue clipping and renormalization.
pub fn project_to_density_matrix(m: &CMatrix) -> Result<DensityMatrix> {
    let n = m.nrows();
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let (values, vectors) = eigh(&h);
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NotPositive(values.max()));
    }
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, clipped.iter().map(|v| C64::new(v / total, 0.0))));
    let rho = &vectors * d * vectors.adjoint();
    let rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let dims = if n == 4 { vec![2, 2] } else { vec![n] };
    DensityMatrix::new(HilbertSpace::new(dims)?, rho)
}

pub fn reconstruct_density_matrix(records: &[ShotRecord]) -> Result<DensityMatrix> {
    let pv = pauli_vector_from_records(records)?;
    project_to_density_matrix(&pv.linear_inversion())
}

/// Half the trace norm of the difference.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.space().total_dim() != b.space().total_dim() {
        return Err(Error::DimensionMismatch { expected: a.space().total_dim(), found: b.space().total_dim() });
    }
    Ok(0.5 * crate::linalg::trace_norm_hermitian(&(a.matrix() - b.matrix())))
}

pub const GG: usize = 0;
pub const GE: usize = 1;
pub const EG: usize = 2;
pub const EE: usize = 3;

/// `(|eg⟩ + e^{iφ}|ge⟩)/√2`.
pub fn bell_state(phi: f64) -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = nalgebra::DVector::from_element(4, ZERO);
    psi[EG] = C64::new(s, 0.0);
    psi[GE] = C64::from_polar(s, phi);
    let m = &psi * psi.adjoint();
    DensityMatrix::new(two_qubit_space(), m).expect("pure state")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    /// Phase of `|ge⟩` relative to `|eg⟩`; `None` when there is no coherence.
    pub phase: Option<f64>,
    pub confident: bool,
    /// Populations of `|eg⟩` and `|ge⟩`.
    pub populations: [f64; 2],
}

/// Relative phase `φ` of `|eg⟩ + e^{iφ}|ge⟩`, read from `ρ[ge, eg]`.
pub fn extract_relative_phase(rho: &DensityMatrix, threshold: f64) -> Result<PhaseEstimate> {
    check_two_qubit(rho)?;
    let populations = [rho.population(EG), rho.population(GE)];
    let c = rho.matrix()[(GE, EG)];
    let phase = if c.norm() > 1e-12 { Some(c.arg()) } else { None };
    let confident = phase.is_some() && populations.iter().all(|&p| p >= threshold);
    Ok(PhaseEstimate { phase, confident, populations })
}

/// Wraps into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let y = x.rem_euclid(t);
    if y > std::f64::consts::PI {
        y - t
    } else {
        y
    }
}

/// `|g⟩ ⊗ |g⟩` block after the `e ↔ f` π pulses on both qubits, with the
/// resonator traced out. The block is renormalized; the population outside
/// it is returned as leakage.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputationalState {
    pub rho: DensityMatrix,
    pub leakage: f64,
}

pub fn map_to_computational(rho: &DensityMatrix) -> Result<ComputationalState> {
    let dims = rho.space().dims().to_vec();
    if dims.len() != 3 || dims[0] < 3 || dims[1] < 3 {
        return Err(Error::InvalidArgument(format!("expected qubit, qubit, resonator dims with ≥ 3 levels, got {dims:?}")));
    }
    let qubits = partial_trace(rho, &[0, 1])?;
    let d2 = dims[1];
    // after the e↔f swap, the computational e level is the pre-pulse f level
    let level = |bit: usize| if bit == 0 { 0 } else { 2 };
    let idx = |k: usize| level(k >> 1) * d2 + level(k & 1);
    let block = CMatrix::from_fn(4, 4, |i, j| qubits.matrix()[(idx(i), idx(j))]);
    let kept = block.trace().re;
    if !(kept > 0.0) {
        return Err(Error::InvalidArgument("no population in the computational subspace".into()));
    }
    let m = (&block + block.adjoint()) * C64::new(0.5 / kept, 0.0);
    let rho = DensityMatrix::with_tolerance(two_qubit_space(), m, 1e-7)?;
    Ok(ComputationalState { rho, leakage: (1.0 - kept).max(0.0) })
}

impl fmt::Display for PauliVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (l, v)) in Self::labels().iter().zip(&self.values).enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}={v:+.4}", Self::label_string(*l))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{fidelity, QuantumState};

    fn product(a: usize, b: usize) -> DensityMatrix {
        let mut psi = nalgebra::DVector::from_element(4, ZERO);
        psi[2 * a + b] = ONE;
        DensityMatrix::from(&QuantumState::new(two_qubit_space(), psi).unwrap())
    }

    #[test]
    fn pre_rotations_map_z_onto_axis() {
        let z = Axis::Z.pauli();
        for a in Axis::ALL {
            let r = a.pre_rotation();
            let back = r.adjoint() * &z * &r;
            assert!((back - a.pauli()).norm() < 1e-14, "{a:?}");
        }
    }

    #[test]
    fn ground_state_measures_zero_in_z() {
        let rec = sample_shots(&product(0, 0), [Axis::Z, Axis::Z], 500, 3).unwrap();
        assert!(rec.outcomes.iter().all(|o| *o == [0, 0]));
    }

    #[test]
    fn bell_pauli_vector_by_hand() {
        let pv = pauli_vector(&bell_state(0.0)).unwrap();
        let x = Some(Axis::X);
        let y = Some(Axis::Y);
        let z = Some(Axis::Z);
        assert!((pv.get([x, x]) - 1.0).abs() < 1e-14);
        assert!((pv.get([y, y]) - 1.0).abs() < 1e-14);
        assert!((pv.get([z, z]) + 1.0).abs() < 1e-14);
        assert!(pv.get([z, None]).abs() < 1e-14 && pv.get([None, z]).abs() < 1e-14);
        let gg = pauli_vector(&product(0, 0)).unwrap();
        for (l, v) in PauliVector::labels().iter().zip(gg.values) {
            let want = if l.iter().all(|a| a.is_none() || *a == z) { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-14, "{}", PauliVector::label_string(*l));
        }
    }

    #[test]
    fn bell_zz_shots_are_anticorrelated() {
        let rec = sample_shots(&bell_state(0.4), [Axis::Z, Axis::Z], 2000, 11).unwrap();
        assert!(rec.outcomes.iter().all(|o| o[0] != o[1]));
        assert_eq!(rec.correlators()[2], -1.0);
    }

    #[test]
    fn sampling_is_seeded() {
        let rho = bell_state(1.0);
        let a = sample_shots(&rho, [Axis::X, Axis::Y], 300, 42).unwrap();
        let b = sample_shots(&rho, [Axis::X, Axis::Y], 300, 42).unwrap();
        let c = sample_shots(&rho, [Axis::X, Axis::Y], 300, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn exact_expectations_invert_exactly() {
        let rho = bell_state(0.7);
        let pv = pauli_vector(&rho).unwrap();
        let back = project_to_density_matrix(&pv.linear_inversion()).unwrap();
        assert!((back.matrix() - rho.matrix()).norm() < 1e-10);
    }

    #[test]
    fn missing_setting_is_rejected() {
        let mut recs = sample_all_settings(&bell_state(0.0), 10, 1).unwrap();
        recs.retain(|r| r.setting != [Axis::X, Axis::Y]);
        assert!(matches!(reconstruct_density_matrix(&recs), Err(Error::IncompleteTomography(_))));
    }

    #[test]
    fn mixed_state_reconstruction() {
        let rho = DensityMatrix::maximally_mixed(&two_qubit_space());
        let recs = sample_all_settings(&rho, 20000, 5).unwrap();
        let r = reconstruct_density_matrix(&recs).unwrap();
        assert!((r.trace() - 1.0).abs() < 1e-12);
        for v in eigh(r.matrix()).0.iter() {
            assert!((v - 0.25).abs() < 0.03, "{v}");
        }
    }

    #[test]
    fn phase_readout() {
        let third = std::f64::consts::FRAC_PI_3;
        let e = extract_relative_phase(&bell_state(third), PHASE_POPULATION_THRESHOLD).unwrap();
        assert!((e.phase.unwrap() - third).abs() < 1e-12 && e.confident);
        let e = extract_relative_phase(&product(1, 0), PHASE_POPULATION_THRESHOLD).unwrap();
        assert_eq!(e.phase, None);
        assert!(!e.confident);
    }

    #[test]
    fn computational_mapping_uses_f_as_e() {
        let space = HilbertSpace::new(vec![4, 4, 3]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = nalgebra::DVector::from_element(48, ZERO);
        psi[space.index_of(&[2, 0, 0]).unwrap()] = C64::new(s, 0.0);
        psi[space.index_of(&[0, 2, 0]).unwrap()] = C64::new(0.0, s);
        let rho = DensityMatrix::from(&QuantumState::new(space, psi).unwrap());
        let c = map_to_computational(&rho).unwrap();
        assert!(c.leakage < 1e-14);
        let f = fidelity(&bell_state(std::f64::consts::FRAC_PI_2), &c.rho).unwrap();
        assert!((f - 1.0).abs() < 1e-10);
    }
}
