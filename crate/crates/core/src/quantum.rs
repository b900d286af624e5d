//! Hilbert-space bookkeeping for composite qubit-qubit-resonator systems.
//!
//! Tensor indices are row-major: the first subsystem varies slowest and the
//! last (the resonator, by convention) fastest. For dims `[4, 4, 3]` the
//! state `|f g 0⟩` (labels `[2, 0, 0]`) sits at index `2·12 + 0·3 + 0 = 24`.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};

/// Tolerance used when validating user supplied states.
pub const STATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("a Hilbert space needs at least one subsystem".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(d));
        }
        Ok(Self { dims })
    }

    /// Two four-level transmons and a three-level bus resonator.
    pub fn transmon_pair() -> Self {
        Self { dims: vec![4, 4, 3] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn check_subsystem(&self, index: usize) -> Result<()> {
        if index >= self.dims.len() {
            return Err(Error::SubsystemOutOfRange { index, count: self.dims.len() });
        }
        Ok(())
    }

    /// Row-major tensor index of a product basis state.
    pub fn index_of(&self, labels: &[usize]) -> Result<usize> {
        if labels.len() != self.dims.len() {
            return Err(Error::DimensionMismatch { expected: self.dims.len(), found: labels.len() });
        }
        let mut index = 0;
        for (subsystem, (&label, &dim)) in labels.iter().zip(&self.dims).enumerate() {
            if label >= dim {
                return Err(Error::LabelOutOfRange { subsystem, label, dim });
            }
            index = index * dim + label;
        }
        Ok(index)
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn labels_of(&self, mut index: usize) -> Vec<usize> {
        let mut labels = vec![0; self.dims.len()];
        for (slot, &dim) in labels.iter_mut().zip(&self.dims).rev() {
            *slot = index % dim;
            index /= dim;
        }
        labels
    }

    /// The space spanned by the listed subsystems, in the listed order.
    pub fn subspace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidArgument("must keep at least one subsystem".into()));
        }
        for &k in keep {
            self.check_subsystem(k)?;
        }
        Self::new(keep.iter().map(|&k| self.dims[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        Self { space: space.clone(), matrix: CMatrix::identity(n, n) }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        Self { space: space.clone(), matrix: CMatrix::zeros(n, n) }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        Self { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { space: self.space.clone(), matrix: &self.matrix * s }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::hermitian_deviation(&self.matrix) <= tol
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Truncated annihilation operator on one subsystem, identity elsewhere.
/// `⟨n−1|b|n⟩ = √n`.
pub fn lowering_operator(space: &HilbertSpace, subsystem: usize) -> Result<Operator> {
    space.check_subsystem(subsystem)?;
    let n = space.total_dim();
    let mut matrix = CMatrix::zeros(n, n);
    for col in 0..n {
        let mut labels = space.labels_of(col);
        let level = labels[subsystem];
        if level == 0 {
            continue;
        }
        labels[subsystem] = level - 1;
        let row = space.index_of(&labels)?;
        matrix[(row, col)] = C64::new((level as f64).sqrt(), 0.0);
    }
    Ok(Operator { space: space.clone(), matrix })
}

/// Number operator `b†b` on one subsystem.
pub fn number_operator(space: &HilbertSpace, subsystem: usize) -> Result<Operator> {
    space.check_subsystem(subsystem)?;
    let n = space.total_dim();
    let mut matrix = CMatrix::zeros(n, n);
    for i in 0..n {
        matrix[(i, i)] = C64::new(space.labels_of(i)[subsystem] as f64, 0.0);
    }
    Ok(Operator { space: space.clone(), matrix })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    space: HilbertSpace,
    amplitudes: CVector,
}

impl QuantumState {
    pub fn new(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        let n = space.total_dim();
        if amplitudes.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: amplitudes.len() });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { space, amplitudes })
    }

    /// Normalizes `amplitudes` before validating.
    pub fn normalized(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::NotNormalized(0.0));
        }
        Self::new(space, amplitudes.unscale(norm))
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix {
            space: self.space.clone(),
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn inner(&self, other: &QuantumState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

/// Unit vector with a single amplitude at the product state `labels`
/// (levels g = 0, e = 1, f = 2 for transmons).
pub fn basis_state(space: &HilbertSpace, labels: &[usize]) -> Result<QuantumState> {
    let index = space.index_of(labels)?;
    let mut amplitudes = CVector::zeros(space.total_dim());
    amplitudes[index] = C64::new(1.0, 0.0);
    Ok(QuantumState { space: space.clone(), amplitudes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity at [`STATE_TOL`].
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(space, matrix, STATE_TOL)
    }

    pub fn with_tolerance(space: HilbertSpace, matrix: CMatrix, tol: f64) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.nrows().max(matrix.ncols()) });
        }
        let dev = linalg::hermitian_deviation(&matrix);
        if dev > tol {
            return Err(Error::NotHermitian(dev));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > tol || trace.im.abs() > tol {
            return Err(Error::BadTrace(trace.re));
        }
        let (values, _) = linalg::eigh(&matrix);
        let min = values.min();
        if min < -tol {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { space, matrix })
    }

    pub fn maximally_mixed(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::identity(n, n) * C64::new(1.0 / n as f64, 0.0),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn population(&self, index: usize) -> f64 {
        self.matrix[(index, index)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn expectation(&self, op: &CMatrix) -> C64 {
        (&self.matrix * op).trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigh(&self.matrix).0.min()
    }
}

impl From<&QuantumState> for DensityMatrix {
    fn from(psi: &QuantumState) -> Self {
        psi.projector()
    }
}

/// Reduced density matrix on the subsystems listed in `keep` (ascending
/// order is used for the result regardless of the order given).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let space = rho.space();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("must keep at least one subsystem".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    for &k in &kept {
        space.check_subsystem(k)?;
    }
    let traced: Vec<usize> = (0..space.num_subsystems()).filter(|s| !kept.contains(s)).collect();
    let kept_space = space.subspace(&kept)?;
    let traced_dims: Vec<usize> = traced.iter().map(|&t| space.dims()[t]).collect();
    let traced_total: usize = traced_dims.iter().product();
    let m = kept_space.total_dim();

    let full_index = |kept_labels: &[usize], traced_index: usize| -> usize {
        let mut labels = vec![0; space.num_subsystems()];
        for (slot, &k) in kept.iter().enumerate() {
            labels[k] = kept_labels[slot];
        }
        let mut rest = traced_index;
        for (slot, &t) in traced.iter().enumerate().rev() {
            labels[t] = rest % traced_dims[slot];
            rest /= traced_dims[slot];
        }
        labels.iter().zip(space.dims()).fold(0, |acc, (&l, &d)| acc * d + l)
    };

    let kept_labels: Vec<Vec<usize>> = (0..m).map(|i| kept_space.labels_of(i)).collect();
    let mut out = CMatrix::zeros(m, m);
    for t in 0..traced_total.max(1) {
        let rows: Vec<usize> = kept_labels.iter().map(|l| full_index(l, t)).collect();
        for (i, &ri) in rows.iter().enumerate() {
            for (j, &rj) in rows.iter().enumerate() {
                out[(i, j)] += rho.matrix[(ri, rj)];
            }
        }
    }
    Ok(DensityMatrix { space: kept_space, matrix: out })
}

/// Uhlmann fidelity `Tr √(√ρ_T ρ_M √ρ_T)` (root fidelity, no outer square).
pub fn fidelity(target: &DensityMatrix, measured: &DensityMatrix) -> Result<f64> {
    if target.space.total_dim() != measured.space.total_dim() {
        return Err(Error::DimensionMismatch {
            expected: target.space.total_dim(),
            found: measured.space.total_dim(),
        });
    }
    for rho in [target, measured] {
        let min = rho.min_eigenvalue();
        if min < -STATE_TOL {
            return Err(Error::NotPositive(min));
        }
    }
    let root = linalg::sqrt_psd(&target.matrix);
    let inner = &root * &measured.matrix * &root;
    let (values, _) = linalg::eigh(&inner);
    let f: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    #[test]
    fn qubit_lowering_matrix() {
        let space = HilbertSpace::new(vec![2]).unwrap();
        let b = lowering_operator(&space, 0).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), ONE, C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        assert_eq!(b.matrix(), &expected);
    }

    #[test]
    fn harmonic_ladder_entries() {
        let space = HilbertSpace::new(vec![3]).unwrap();
        let b = lowering_operator(&space, 0).unwrap();
        let m = b.matrix();
        assert_eq!(m[(0, 1)], ONE);
        assert!((m[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
        let nonzero = m.iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn resonator_commutator_on_full_space() {
        let space = HilbertSpace::transmon_pair();
        let a = lowering_operator(&space, 2).unwrap();
        assert_eq!(a.dim(), 48);
        let am = a.matrix();
        let comm = am * am.adjoint() - am.adjoint() * am;
        // [a, a†] = I except on the top resonator level where it is 1 − N
        for i in 0..48 {
            let m = space.labels_of(i)[2];
            let expected = if m == 2 { -2.0 } else { 1.0 };
            assert!((comm[(i, i)].re - expected).abs() < 1e-12, "index {i}");
            for j in 0..48 {
                if i != j {
                    assert!(comm[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_subsystem_rejected() {
        let space = HilbertSpace::transmon_pair();
        assert!(matches!(lowering_operator(&space, 3), Err(Error::SubsystemOutOfRange { .. })));
    }

    #[test]
    fn basis_state_indices() {
        let q = HilbertSpace::new(vec![2]).unwrap();
        let s = basis_state(&q, &[0]).unwrap();
        assert_eq!(s.amplitudes()[0], ONE);
        assert_eq!(s.amplitudes()[1].norm(), 0.0);

        let space = HilbertSpace::transmon_pair();
        assert_eq!(space.index_of(&[2, 0, 0]).unwrap(), 24);
        assert_eq!(space.index_of(&[0, 0, 1]).unwrap(), 1);
        let fg0 = basis_state(&space, &[2, 0, 0]).unwrap();
        assert_eq!(fg0.amplitudes()[24], ONE);
        assert!(matches!(basis_state(&space, &[4, 0, 0]), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn invalid_dims_rejected() {
        assert!(matches!(HilbertSpace::new(vec![4, 1]), Err(Error::InvalidDimension(1))));
    }

    #[test]
    fn trace_out_resonator_of_product_state() {
        let space = HilbertSpace::transmon_pair();
        let rho = basis_state(&space, &[0, 0, 1]).unwrap().projector();
        let reduced = partial_trace(&rho, &[0, 1]).unwrap();
        assert_eq!(reduced.space().dims(), &[4, 4]);
        let mut expected = CMatrix::zeros(16, 16);
        expected[(0, 0)] = ONE;
        assert!((reduced.matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn bell_marginal_is_mixed() {
        let space = HilbertSpace::transmon_pair();
        let fg = basis_state(&space, &[2, 0, 0]).unwrap();
        let gf = basis_state(&space, &[0, 2, 0]).unwrap();
        let psi = QuantumState::normalized(space, fg.amplitudes() + gf.amplitudes()).unwrap();
        let q1 = partial_trace(&psi.projector(), &[0]).unwrap();
        let p = q1.populations();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[2] - 0.5).abs() < 1e-15);
        assert!(q1.matrix()[(0, 2)].norm() < 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let q = HilbertSpace::new(vec![2]).unwrap();
        let zero = basis_state(&q, &[0]).unwrap().projector();
        let one = basis_state(&q, &[1]).unwrap().projector();
        let mixed = DensityMatrix::maximally_mixed(&q);
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&zero, &one).unwrap().abs() < 1e-12);
        assert!((fidelity(&zero, &mixed).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((fidelity(&mixed, &mixed).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_matrix_validation() {
        let q = HilbertSpace::new(vec![2]).unwrap();
        let bad_trace = CMatrix::identity(2, 2);
        assert!(matches!(DensityMatrix::new(q.clone(), bad_trace), Err(Error::BadTrace(_))));
        let not_psd = CMatrix::from_row_slice(2, 2, &[C64::new(1.5, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(q.clone(), not_psd), Err(Error::NotPositive(_))));
        let skew = CMatrix::from_row_slice(2, 2, &[C64::new(0.5, 0.0), C64::new(0.1, 0.0), C64::new(0.2, 0.0), C64::new(0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(q, skew), Err(Error::NotHermitian(_))));
    }
}
