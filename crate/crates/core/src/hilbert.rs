//! Dense complex linear algebra on a bipartite `collective ⊗ environment`
//! Hilbert space.
//!
//! Joint indices are ordered collective-major: the joint basis vector
//! `|k⟩ ⊗ |e⟩` sits at index `k * dim_e + e`. Natural units (ħ = 1) are used
//! throughout, so `U(t) = exp(-iHt)`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance on `‖ρ − ρ†‖_max` and on `|Tr ρ − 1|` for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Smallest eigenvalue a density matrix may have before it is rejected.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Tolerance on `‖H − H†‖_max` for evolution generators.
pub const GENERATOR_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    Collective,
    Environment,
    Joint,
}

/// Which factor of the bipartition an operator acts on, together with the
/// dimensions of both factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceTag {
    pub kind: SpaceKind,
    pub dim_k: usize,
    pub dim_e: usize,
}

impl SpaceTag {
    pub fn collective(dim_k: usize, dim_e: usize) -> Self {
        Self { kind: SpaceKind::Collective, dim_k, dim_e }
    }

    pub fn environment(dim_k: usize, dim_e: usize) -> Self {
        Self { kind: SpaceKind::Environment, dim_k, dim_e }
    }

    pub fn joint(dim_k: usize, dim_e: usize) -> Self {
        Self { kind: SpaceKind::Joint, dim_k, dim_e }
    }

    pub fn with_kind(self, kind: SpaceKind) -> Self {
        Self { kind, ..self }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SpaceKind::Collective => self.dim_k,
            SpaceKind::Environment => self.dim_e,
            SpaceKind::Joint => self.dim_k * self.dim_e,
        }
    }

    fn expect_kind(&self, kind: SpaceKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::SpaceMismatch { expected: self.with_kind(kind), found: *self })
        }
    }
}

/// A dense square matrix tagged with the space it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: SpaceTag,
    mat: CMatrix,
}

impl Operator {
    pub fn new(space: SpaceTag, mat: CMatrix) -> Result<Self> {
        let expected = space.dim();
        if expected == 0 || mat.nrows() != expected || mat.ncols() != expected {
            return Err(Error::DimensionMismatch {
                space,
                rows: mat.nrows(),
                cols: mat.ncols(),
                expected,
            });
        }
        Ok(Self { space, mat })
    }

    /// Callers guarantee the shape; used for results of closed operations.
    pub(crate) fn from_parts(space: SpaceTag, mat: CMatrix) -> Self {
        debug_assert_eq!(mat.nrows(), space.dim());
        debug_assert_eq!(mat.ncols(), space.dim());
        Self { space, mat }
    }

    pub fn zeros(space: SpaceTag) -> Self {
        let d = space.dim();
        Self::from_parts(space, CMatrix::zeros(d, d))
    }

    pub fn identity(space: SpaceTag) -> Self {
        let d = space.dim();
        Self::from_parts(space, CMatrix::identity(d, d))
    }

    pub fn from_real_diagonal(space: SpaceTag, diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mat = CMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(diag[i], 0.0) } else { ZERO });
        Self::new(space, mat)
    }

    pub fn from_real(space: SpaceTag, mat: &DMatrix<f64>) -> Result<Self> {
        Self::new(space, mat.map(|x| Complex64::new(x, 0.0)))
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn projector(space: SpaceTag, psi: &CVector) -> Result<Self> {
        Self::new(space, psi * psi.adjoint())
    }

    pub fn space(&self) -> SpaceTag {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    pub fn dagger(&self) -> Self {
        Self::from_parts(self.space, self.mat.adjoint())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::from_parts(self.space, &self.mat * factor)
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    /// `‖A − A†‖_max`.
    pub fn hermitian_defect(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_parts(self.space, hermitize(&self.mat))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.mat)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    /// `Tr(A B)`.
    pub fn trace_product(&self, other: &Operator) -> Complex64 {
        trace_of_product(&self.mat, &other.mat)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        let (vals, _) = hermitian_eigen(&self.mat);
        let mut v: Vec<f64> = vals.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `A ⊗ I(E)` for a collective operator.
    pub fn embed_collective(&self) -> Result<Operator> {
        self.space.expect_kind(SpaceKind::Collective)?;
        let id = Operator::identity(self.space.with_kind(SpaceKind::Environment));
        tensor(self, &id)
    }

    /// `I(K) ⊗ B` for an environment operator.
    pub fn embed_environment(&self) -> Result<Operator> {
        self.space.expect_kind(SpaceKind::Environment)?;
        let id = Operator::identity(self.space.with_kind(SpaceKind::Collective));
        tensor(&id, self)
    }

    fn assert_same_space(&self, other: &Operator, op: &str) {
        assert_eq!(self.space, other.space, "operator {op} across different spaces");
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs, "addition");
        Operator::from_parts(self.space, &self.mat + &rhs.mat)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs, "subtraction");
        Operator::from_parts(self.space, &self.mat - &rhs.mat)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs, "product");
        Operator::from_parts(self.space, &self.mat * &rhs.mat)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator::from_parts(self.space, -&self.mat)
    }
}

/// A Hermitian, unit-trace, positive-semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    /// Validates the density-matrix invariants. Hermiticity defects within
    /// [`HERMITIAN_TOL`] are silently symmetrized away.
    pub fn new(op: Operator) -> Result<Self> {
        let defect = op.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian { defect, tolerance: HERMITIAN_TOL });
        }
        let op = op.hermitian_part();
        let trace = op.trace().re;
        if (trace - 1.0).abs() > HERMITIAN_TOL {
            return Err(Error::NotNormalized { trace });
        }
        let min_eigenvalue = op.eigenvalues_hermitian()[0];
        if min_eigenvalue < -POSITIVITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(Self { op })
    }

    /// Normalizes `psi` and returns `|ψ⟩⟨ψ|`.
    pub fn pure(space: SpaceTag, psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter("state vector has zero norm".into()));
        }
        Self::new(Operator::projector(space, &(psi / Complex64::new(norm, 0.0)))?)
    }

    pub fn maximally_mixed(space: SpaceTag) -> Self {
        let d = space.dim() as f64;
        Self { op: Operator::identity(space).scale_real(1.0 / d) }
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn space(&self) -> SpaceTag {
        self.op.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.op.mat
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        self.op.trace_product(&self.op).re
    }
}

/// Kronecker product of a collective and an environment operator.
pub fn tensor(a: &Operator, b: &Operator) -> Result<Operator> {
    a.space.expect_kind(SpaceKind::Collective)?;
    b.space.expect_kind(SpaceKind::Environment)?;
    if a.space.dim_k != b.space.dim_k || a.space.dim_e != b.space.dim_e {
        return Err(Error::SpaceMismatch {
            expected: a.space.with_kind(SpaceKind::Environment),
            found: b.space,
        });
    }
    let joint = SpaceTag::joint(a.space.dim_k, a.space.dim_e);
    Ok(Operator::from_parts(joint, a.mat.kronecker(&b.mat)))
}

/// Partial trace over the environment factor.
pub fn trace_env(m: &Operator) -> Result<Operator> {
    m.space.expect_kind(SpaceKind::Joint)?;
    let (dk, de) = (m.space.dim_k, m.space.dim_e);
    let out = CMatrix::from_fn(dk, dk, |i, j| (0..de).map(|e| m.mat[(i * de + e, j * de + e)]).sum());
    Ok(Operator::from_parts(m.space.with_kind(SpaceKind::Collective), out))
}

/// Partial trace over the collective factor.
pub fn trace_collective(m: &Operator) -> Result<Operator> {
    m.space.expect_kind(SpaceKind::Joint)?;
    let (dk, de) = (m.space.dim_k, m.space.dim_e);
    let out = CMatrix::from_fn(de, de, |a, b| (0..dk).map(|k| m.mat[(k * de + a, k * de + b)]).sum());
    Ok(Operator::from_parts(m.space.with_kind(SpaceKind::Environment), out))
}

/// `[a, b] = ab − ba`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.space != b.space {
        return Err(Error::SpaceMismatch { expected: a.space, found: b.space });
    }
    Ok(Operator::from_parts(a.space, commutator_mat(&a.mat, &b.mat)))
}

/// `U ρ U†` with `U = exp(−iHt)`.
pub fn evolve_unitary(rho: &DensityMatrix, h: &Operator, t: f64) -> Result<DensityMatrix> {
    if h.space != rho.space() {
        return Err(Error::SpaceMismatch { expected: rho.space(), found: h.space });
    }
    let prop = Propagator::new(h)?;
    let evolved = prop.evolve(rho.operator(), t);
    DensityMatrix::new(evolved)
}

/// Cached eigendecomposition `H = V diag(ε) V†` of a Hermitian generator,
/// giving `exp(−iHt)` for any `t` without re-diagonalizing.
#[derive(Debug, Clone)]
pub struct Propagator {
    space: SpaceTag,
    energies: DVector<f64>,
    vectors: CMatrix,
}

impl Propagator {
    pub fn new(h: &Operator) -> Result<Self> {
        let defect = h.hermitian_defect();
        if defect > GENERATOR_TOL {
            return Err(Error::NotHermitian { defect, tolerance: GENERATOR_TOL });
        }
        let (energies, vectors) = hermitian_eigen(&h.mat);
        Ok(Self { space: h.space, energies, vectors })
    }

    pub fn space(&self) -> SpaceTag {
        self.space
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    pub fn unitary(&self, t: f64) -> CMatrix {
        let phases = self.energies.map(|e| Complex64::from_polar(1.0, -e * t));
        let scaled = CMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| self.vectors[(i, j)] * phases[j]);
        scaled * self.vectors.adjoint()
    }

    /// `V† M V`.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.vectors.adjoint() * m * &self.vectors
    }

    /// `V M V†`.
    pub fn from_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        &self.vectors * m * self.vectors.adjoint()
    }

    /// Elementwise factors `exp(−i(ε_a − ε_b)τ)` implementing `U(τ)·U†(τ)`
    /// conjugation in the eigenbasis.
    pub fn conjugation_phases(&self, tau: f64) -> CMatrix {
        let d = self.energies.len();
        CMatrix::from_fn(d, d, |a, b| Complex64::from_polar(1.0, -(self.energies[a] - self.energies[b]) * tau))
    }

    /// `U(t) m U†(t)`.
    pub fn evolve(&self, m: &Operator, t: f64) -> Operator {
        assert_eq!(m.space, self.space, "propagator applied across spaces");
        let in_basis = self.to_eigenbasis(&m.mat).component_mul(&self.conjugation_phases(t));
        Operator::from_parts(self.space, self.from_eigenbasis(&in_basis))
    }
}

/// Eigenvalues and unitary eigenvectors of the Hermitian part of `m`.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(m));
    (eig.eigenvalues, eig.eigenvectors)
}

/// Half the trace norm of `a − b`.
pub fn trace_distance(a: &Operator, b: &Operator) -> f64 {
    let diff = a - b;
    0.5 * diff.eigenvalues_hermitian().iter().map(|x| x.abs()).sum::<f64>()
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub(crate) fn commutator_mat(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub(crate) fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pauli_x(space: SpaceTag) -> Operator {
        Operator::new(space, CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])).unwrap()
    }

    fn pauli_y(space: SpaceTag) -> Operator {
        Operator::new(space, CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])).unwrap()
    }

    fn pauli_z(space: SpaceTag) -> Operator {
        Operator::from_real_diagonal(space, &[1.0, -1.0]).unwrap()
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let a = Operator::identity(SpaceTag::collective(2, 3));
        let b = Operator::identity(SpaceTag::environment(2, 3));
        let ab = tensor(&a, &b).unwrap();
        assert_eq!(ab.matrix(), &CMatrix::identity(6, 6));
        assert_eq!(ab.space(), SpaceTag::joint(2, 3));
    }

    #[test]
    fn tensor_of_diagonals() {
        let a = Operator::from_real_diagonal(SpaceTag::collective(2, 2), &[1.0, 0.0]).unwrap();
        let b = Operator::from_real_diagonal(SpaceTag::environment(2, 2), &[0.5, 0.5]).unwrap();
        let expected = Operator::from_real_diagonal(SpaceTag::joint(2, 2), &[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(tensor(&a, &b).unwrap(), expected);
    }

    #[test]
    fn tensor_sigma_x_sigma_z_hand_expanded() {
        let sx = pauli_x(SpaceTag::collective(2, 2));
        let sz = pauli_z(SpaceTag::environment(2, 2));
        // σx ⊗ σz = [[0, σz], [σz, 0]]
        let z = 0.0;
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                z, z, 1.0, z, //
                z, z, z, -1.0, //
                1.0, z, z, z, //
                z, -1.0, z, z,
            ],
        );
        let got = tensor(&sx, &sz).unwrap();
        assert_eq!(got.matrix(), &expected.map(|x| c(x, 0.0)));
    }

    #[test]
    fn tensor_rejects_wrong_kinds_and_mismatched_tags() {
        let a = Operator::identity(SpaceTag::collective(2, 3));
        let b = Operator::identity(SpaceTag::environment(2, 4));
        assert!(matches!(tensor(&a, &b), Err(Error::SpaceMismatch { .. })));
        assert!(tensor(&a, &a).is_err());
    }

    #[test]
    fn operator_new_rejects_wrong_shape() {
        let err = Operator::new(SpaceTag::joint(2, 3), CMatrix::zeros(5, 5)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 6, .. }));
    }

    #[test]
    fn trace_env_of_product_and_identity() {
        let rk = DensityMatrix::pure(SpaceTag::collective(2, 3), &CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)])).unwrap();
        let re = Operator::from_real_diagonal(SpaceTag::environment(2, 3), &[0.2, 0.3, 0.5]).unwrap();
        let joint = tensor(rk.operator(), &re).unwrap();
        let reduced = trace_env(&joint).unwrap();
        assert!(max_abs(&(reduced.matrix() - rk.matrix())) < 1e-15);
        assert!((&trace_collective(&joint).unwrap() - &re).max_abs() < 1e-15);

        let id = Operator::identity(SpaceTag::joint(2, 3));
        assert_eq!(trace_env(&id).unwrap(), Operator::identity(SpaceTag::collective(2, 3)).scale_real(3.0));
        assert_eq!(trace_collective(&id).unwrap(), Operator::identity(SpaceTag::environment(2, 3)).scale_real(2.0));
    }

    #[test]
    fn bell_state_reduces_to_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = CVector::from_vec(vec![c(s, 0.0), ZERO, ZERO, c(s, 0.0)]);
        let bell = DensityMatrix::pure(SpaceTag::joint(2, 2), &psi).unwrap();
        let reduced = trace_env(bell.operator()).unwrap();
        let half = Operator::identity(SpaceTag::collective(2, 2)).scale_real(0.5);
        assert!((&reduced - &half).max_abs() < 1e-15);
    }

    #[test]
    fn partial_traces_reject_non_joint() {
        let k = Operator::identity(SpaceTag::collective(2, 2));
        assert!(trace_env(&k).is_err());
        assert!(trace_collective(&k).is_err());
    }

    #[test]
    fn evolve_with_zero_generator_is_identity() {
        let space = SpaceTag::collective(2, 1);
        let rho = DensityMatrix::pure(space, &CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)])).unwrap();
        let out = evolve_unitary(&rho, &Operator::zeros(space), 3.7).unwrap();
        assert!((out.operator() - rho.operator()).max_abs() < 1e-15);
    }

    #[test]
    fn sigma_x_flips_qubit_at_half_pi() {
        let space = SpaceTag::collective(2, 1);
        let rho = DensityMatrix::new(Operator::from_real_diagonal(space, &[1.0, 0.0]).unwrap()).unwrap();
        let out = evolve_unitary(&rho, &pauli_x(space), FRAC_PI_2).unwrap();
        let flipped = Operator::from_real_diagonal(space, &[0.0, 1.0]).unwrap();
        assert!((out.operator() - &flipped).max_abs() < 1e-10);
    }

    #[test]
    fn evolve_rejects_non_hermitian_generator() {
        let space = SpaceTag::collective(2, 1);
        let rho = DensityMatrix::maximally_mixed(space);
        let h = Operator::new(space, CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])).unwrap();
        assert!(matches!(evolve_unitary(&rho, &h, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn pauli_commutator() {
        let space = SpaceTag::collective(2, 1);
        let got = commutator(&pauli_x(space), &pauli_y(space)).unwrap();
        let expected = pauli_z(space).scale(c(0.0, 2.0));
        assert!((&got - &expected).max_abs() < 1e-15);
        let id = Operator::identity(space);
        assert_eq!(commutator(&id, &pauli_y(space)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn truncated_ladder_commutator() {
        for n in 2..7 {
            let space = SpaceTag::collective(n, 1);
            let mut a = CMatrix::zeros(n, n);
            for k in 1..n {
                a[(k - 1, k)] = c((k as f64).sqrt(), 0.0);
            }
            let a = Operator::new(space, a).unwrap();
            let comm = commutator(&a, &a.dagger()).unwrap();
            let mut diag = vec![1.0; n];
            diag[n - 1] = 1.0 - n as f64;
            let expected = Operator::from_real_diagonal(space, &diag).unwrap();
            assert!((&comm - &expected).max_abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn commutator_rejects_space_mismatch() {
        let a = Operator::identity(SpaceTag::collective(2, 2));
        let b = Operator::identity(SpaceTag::environment(2, 2));
        assert!(commutator(&a, &b).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let space = SpaceTag::collective(2, 1);
        let not_unit = Operator::from_real_diagonal(space, &[0.5, 0.4]).unwrap();
        assert!(matches!(DensityMatrix::new(not_unit), Err(Error::NotNormalized { .. })));
        let negative = Operator::from_real_diagonal(space, &[1.5, -0.5]).unwrap();
        assert!(matches!(DensityMatrix::new(negative), Err(Error::NotPositive { .. })));
        let skew = Operator::new(space, CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), ZERO, c(0.5, 0.0)])).unwrap();
        assert!(matches!(DensityMatrix::new(skew), Err(Error::NotHermitian { .. })));

        let tiny = Operator::new(space, CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(1e-13, 0.0), ZERO, c(0.5, 0.0)])).unwrap();
        let rho = DensityMatrix::new(tiny).unwrap();
        assert_eq!(rho.operator().hermitian_defect(), 0.0);
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states_is_one() {
        let space = SpaceTag::collective(2, 1);
        let a = Operator::from_real_diagonal(space, &[1.0, 0.0]).unwrap();
        let b = Operator::from_real_diagonal(space, &[0.0, 1.0]).unwrap();
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-14);
    }
}
