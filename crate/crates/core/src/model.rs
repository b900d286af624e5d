//! The driven device expressed in its dressed eigenbasis.
//!
//! The undriven Hamiltonian conserves the total excitation number, so it is
//! diagonalized block by block and every eigenvector is tagged with the bare
//! product state it overlaps most. Dressed index `k` therefore corresponds to
//! bare label `space.labels_of(k)`, and populations reported by the
//! integrators are dressed-state populations.

use std::collections::BTreeMap;

use crate::device::{collapse_operators, drive_operator, static_hamiltonian, DeviceParams, DrivePulse, TWO_PI};
use crate::dynamics::{evolve_lindblad, evolve_schrodinger, EvolutionResult, Hamiltonian, IntegratorConfig, SampledState};
use crate::error::{Error, Result};
use crate::linalg::{eigh, CMatrix, CVector, SparseMatrix, C64, ZERO};
use crate::pulse::PulseSchedule;
use crate::quantum::{basis_state, DensityMatrix, HilbertSpace, Operator, QuantumState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    /// Co-rotating drive terms only.
    #[default]
    Rwa,
    /// Full cosine drives.
    Lab,
}

impl std::str::FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rwa" | "rotating" | "rotating_rwa" => Ok(Frame::Rwa),
            "lab" => Ok(Frame::Lab),
            other => Err(Error::InvalidArgument(format!("unknown frame {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DressedBasis {
    space: HilbertSpace,
    /// Energies relative to the dressed ground state (rad/s), bare-label order.
    energies: Vec<f64>,
    /// Columns are dressed states in the bare basis.
    vectors: CMatrix,
    excitations: Vec<usize>,
}

impl DressedBasis {
    pub fn new(params: &DeviceParams) -> Result<Self> {
        let space = params.space.clone();
        let n = space.total_dim();
        let h = static_hamiltonian(params)?.into_matrix();
        let excitations: Vec<usize> = (0..n).map(|k| space.labels_of(k).iter().sum()).collect();
        let mut blocks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, &e) in excitations.iter().enumerate() {
            blocks.entry(e).or_default().push(k);
        }
        let mut energies = vec![0.0; n];
        let mut vectors = CMatrix::zeros(n, n);
        for members in blocks.values() {
            let m = members.len();
            let block = CMatrix::from_fn(m, m, |r, c| h[(members[r], members[c])]);
            let (values, vecs) = eigh(&block);
            // greedy assignment by decreasing overlap
            let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(m * m);
            for eig in 0..m {
                for bare in 0..m {
                    pairs.push((vecs[(bare, eig)].norm_sqr(), eig, bare));
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut eig_done = vec![false; m];
            let mut bare_done = vec![false; m];
            for (_, eig, bare) in pairs {
                if eig_done[eig] || bare_done[bare] {
                    continue;
                }
                eig_done[eig] = true;
                bare_done[bare] = true;
                let target = members[bare];
                let phase = vecs[(bare, eig)];
                let fix = if phase.norm() > 0.0 { phase.conj() / phase.norm() } else { C64::new(1.0, 0.0) };
                energies[target] = values[eig];
                for (r, &row) in members.iter().enumerate() {
                    vectors[(row, target)] = vecs[(r, eig)] * fix;
                }
            }
        }
        let ground = energies[0];
        for e in &mut energies {
            *e -= ground;
        }
        Ok(Self { space, energies, vectors, excitations })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn excitation(&self, index: usize) -> usize {
        self.excitations[index]
    }

    pub fn energy(&self, labels: &[usize]) -> Result<f64> {
        Ok(self.energies[self.space.index_of(labels)?])
    }

    /// `E(to) − E(from)` in rad/s.
    pub fn transition(&self, from: &[usize], to: &[usize]) -> Result<f64> {
        Ok(self.energy(to)? - self.energy(from)?)
    }

    /// Undriven dressed `|f0⟩ ↔ |g1⟩` frequency of a qubit (rad/s).
    pub fn f0g1_frequency(&self, qubit: usize) -> Result<f64> {
        let mut f = vec![0, 0, 0];
        f[qubit] = 2;
        self.transition(&[0, 0, 1], &f)
    }

    /// Bare-basis operator → dressed basis.
    pub fn to_dressed(&self, op: &CMatrix) -> CMatrix {
        self.vectors.adjoint() * op * &self.vectors
    }

    /// Dressed-basis operator → bare basis.
    pub fn to_bare(&self, op: &CMatrix) -> CMatrix {
        &self.vectors * op * self.vectors.adjoint()
    }

    /// Dressed eigenstate with the given bare label.
    pub fn state(&self, labels: &[usize]) -> Result<QuantumState> {
        let k = self.space.index_of(labels)?;
        QuantumState::normalized(self.space.clone(), self.vectors.column(k).into_owned())
    }
}

/// A drive placed on the model's time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PlacedDrive {
    start: f64,
    pulse: DrivePulse,
}

/// Driven device in the interaction picture of the dressed energies.
///
/// Optionally the simulated space is restricted to dressed states with at
/// most `max_excitations` quanta; the model then works in reduced
/// coordinates and [`DrivenModel::expand`] maps results back to the full
/// tensor-product space.
#[derive(Debug, Clone)]
pub struct DrivenModel {
    params: DeviceParams,
    basis: DressedBasis,
    frame: Frame,
    kept: Vec<usize>,
    model_space: HilbertSpace,
    raising: [SparseMatrix; 2],
    full: [SparseMatrix; 2],
    excitations: Vec<usize>,
    energies: Vec<f64>,
    drives: Vec<PlacedDrive>,
}

const SPARSE_THRESHOLD: f64 = 1e-12;

fn restrict(m: &CMatrix, kept: &[usize]) -> CMatrix {
    CMatrix::from_fn(kept.len(), kept.len(), |r, c| m[(kept[r], kept[c])])
}

impl DrivenModel {
    pub fn new(params: &DeviceParams, frame: Frame) -> Result<Self> {
        Self::build(params, frame, None)
    }

    /// Model restricted to dressed states with at most `max_excitations`
    /// quanta in total.
    pub fn truncated(params: &DeviceParams, frame: Frame, max_excitations: usize) -> Result<Self> {
        Self::build(params, frame, Some(max_excitations))
    }

    fn build(params: &DeviceParams, frame: Frame, max_excitations: Option<usize>) -> Result<Self> {
        params.validate()?;
        let basis = DressedBasis::new(params)?;
        let n = basis.space().total_dim();
        let kept: Vec<usize> = (0..n).filter(|&k| max_excitations.is_none_or(|m| basis.excitation(k) <= m)).collect();
        if kept.len() < 2 {
            return Err(Error::InvalidArgument("excitation cap leaves fewer than two states".into()));
        }
        let model_space = if kept.len() == n { basis.space().clone() } else { HilbertSpace::new(vec![kept.len()])? };
        let excitations: Vec<usize> = kept.iter().map(|&k| basis.excitation(k)).collect();
        let m = kept.len();
        let mut raising = [SparseMatrix::new(m), SparseMatrix::new(m)];
        let mut full = [SparseMatrix::new(m), SparseMatrix::new(m)];
        for q in 0..2 {
            let x = restrict(&basis.to_dressed(drive_operator(params, q)?.matrix()), &kept);
            let up = CMatrix::from_fn(m, m, |r, c| if excitations[r] > excitations[c] { x[(r, c)] } else { ZERO });
            raising[q] = SparseMatrix::from_dense(&up, SPARSE_THRESHOLD);
            full[q] = SparseMatrix::from_dense(&x, SPARSE_THRESHOLD);
        }
        let energies = kept.iter().map(|&k| basis.energies()[k]).collect();
        Ok(Self { params: params.clone(), basis, frame, kept, model_space, raising, full, excitations, energies, drives: Vec::new() })
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn basis(&self) -> &DressedBasis {
        &self.basis
    }

    /// Full tensor-product space of the device.
    pub fn space(&self) -> &HilbertSpace {
        self.basis.space()
    }

    /// Space of the simulated coordinates (equal to [`Self::space`] unless
    /// truncated).
    pub fn model_space(&self) -> &HilbertSpace {
        &self.model_space
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn is_truncated(&self) -> bool {
        self.kept.len() != self.space().total_dim()
    }

    /// Model coordinate of the dressed state with bare label `labels`.
    pub fn index_of(&self, labels: &[usize]) -> Result<usize> {
        let full = self.space().index_of(labels)?;
        self.kept
            .binary_search(&full)
            .map_err(|_| Error::InvalidArgument(format!("state {labels:?} lies outside the excitation cap")))
    }

    /// Dressed basis state in model coordinates.
    pub fn initial_state(&self, labels: &[usize]) -> Result<QuantumState> {
        basis_state(&self.model_space, &self.model_space.labels_of(self.index_of(labels)?))
    }

    /// Replaces the drives with the pulses of a schedule.
    pub fn with_schedule(mut self, schedule: &PulseSchedule) -> Result<Self> {
        self.drives.clear();
        for sp in schedule.pulses() {
            self.add_drive(sp.start, sp.pulse)?;
        }
        Ok(self)
    }

    /// Replaces the drives with simultaneous pulses starting at `t = 0`.
    pub fn with_drives(mut self, drives: &[DrivePulse]) -> Result<Self> {
        self.drives.clear();
        for d in drives {
            self.add_drive(0.0, *d)?;
        }
        Ok(self)
    }

    fn add_drive(&mut self, start: f64, pulse: DrivePulse) -> Result<()> {
        if pulse.qubit > 1 {
            return Err(Error::SubsystemOutOfRange { index: pulse.qubit, count: 2 });
        }
        self.drives.push(PlacedDrive { start, pulse });
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.drives.iter().map(|d| d.start + d.pulse.envelope.duration).fold(0.0, f64::max)
    }

    /// Dressed collapse operators in model coordinates.
    pub fn collapse_operators(&self) -> Result<Vec<Operator>> {
        collapse_operators(&self.params)?
            .into_iter()
            .map(|l| Operator::new(self.model_space.clone(), restrict(&self.basis.to_dressed(l.matrix()), &self.kept)))
            .collect()
    }

    /// Rotating-frame Hamiltonian of a single constant-amplitude tone in the
    /// RWA, in model coordinates; time independent in the frame `ω_d N̂`.
    pub fn single_tone_hamiltonian(&self, qubit: usize, eta: f64, drive_freq: f64, scale: C64) -> Result<CMatrix> {
        if qubit > 1 {
            return Err(Error::SubsystemOutOfRange { index: qubit, count: 2 });
        }
        let n = self.kept.len();
        let mut h = CMatrix::zeros(n, n);
        for k in 0..n {
            h[(k, k)] = C64::new(self.energies[k] - drive_freq * self.excitations[k] as f64, 0.0);
        }
        let c = scale * (0.5 * eta);
        for (r, col, v) in self.raising[qubit].entries() {
            h[(r, col)] += v * c;
            h[(col, r)] += (v * c).conj();
        }
        Ok(h)
    }

    /// Maps a result in model coordinates back to the full device space.
    pub fn expand(&self, result: EvolutionResult) -> Result<EvolutionResult> {
        if !self.is_truncated() {
            return Ok(result);
        }
        let n = self.space().total_dim();
        let mut out = result.clone();
        for (sample, state) in result.states.iter().enumerate() {
            let mut pops = vec![0.0; n];
            for (r, &k) in self.kept.iter().enumerate() {
                pops[k] = result.populations[sample][r];
            }
            out.populations[sample] = pops;
            out.states[sample] = match state {
                SampledState::Pure(psi) => {
                    let mut amps = CVector::zeros(n);
                    for (r, &k) in self.kept.iter().enumerate() {
                        amps[k] = psi.amplitudes()[r];
                    }
                    SampledState::Pure(QuantumState::normalized(self.space().clone(), amps)?)
                }
                SampledState::Mixed(rho) => {
                    let mut m = CMatrix::zeros(n, n);
                    for (r, &kr) in self.kept.iter().enumerate() {
                        for (c, &kc) in self.kept.iter().enumerate() {
                            m[(kr, kc)] = rho.matrix()[(r, c)];
                        }
                    }
                    SampledState::Mixed(DensityMatrix::with_tolerance(self.space().clone(), m, f64::INFINITY)?)
                }
            };
        }
        Ok(out)
    }

    /// Evolves the dressed state `initial` under the drives, closed or with
    /// relaxation, and returns full-space results.
    pub fn evolve(&self, initial: &[usize], times: &[f64], cfg: &IntegratorConfig, open: bool) -> Result<EvolutionResult> {
        let psi0 = self.initial_state(initial)?;
        let result = if open {
            evolve_lindblad(self, &psi0.projector(), &self.collapse_operators()?, times, cfg)?
        } else {
            evolve_schrodinger(self, &psi0, times, cfg)?
        };
        self.expand(result)
    }
}

impl Hamiltonian for DrivenModel {
    fn dim(&self) -> usize {
        self.kept.len()
    }

    fn frame_energies(&self) -> Option<&[f64]> {
        Some(&self.energies)
    }

    fn coupling(&self, t: f64, out: &mut SparseMatrix) {
        for d in &self.drives {
            let local = t - d.start;
            let q = d.pulse.qubit;
            match self.frame {
                Frame::Rwa => {
                    let c = d.pulse.rotating_coefficient(local);
                    if c == ZERO {
                        continue;
                    }
                    let up = &self.raising[q];
                    up.scaled_into(c, out);
                    // lowering part: conjugate transpose of the raising part
                    for (r, col, v) in up.entries() {
                        out.push(col, r, (v * c).conj());
                    }
                }
                Frame::Lab => {
                    let omega = d.pulse.value(local);
                    if omega == 0.0 {
                        continue;
                    }
                    self.full[q].scaled_into(C64::new(omega, 0.0), out);
                }
            }
        }
    }

    fn max_frequency(&self) -> Option<f64> {
        match self.frame {
            Frame::Rwa => None,
            Frame::Lab => {
                let emax = self.energies.iter().cloned().fold(0.0, f64::max);
                let wmax = self.drives.iter().map(|d| d.pulse.drive_freq.abs()).fold(0.0, f64::max);
                Some((emax + wmax) / TWO_PI)
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = Vec::new();
        for d in &self.drives {
            for p in d.pulse.envelope.breakpoints() {
                b.push(d.start + p);
            }
        }
        b
    }
}
