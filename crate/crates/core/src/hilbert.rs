//! Operator algebra on a truncated cavity mode tensored with a two- or
//! three-level atom.
//!
//! Index layout is `atom_level * n_fock + photon_number`, with the atomic
//! levels ordered `g`, `e`, `s`. All quantities are in natural units with
//! the cavity frequency set to one.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative Hermiticity tolerance accepted by [`eigh`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Largest tolerated norm deficit of a truncated coherent state.
pub const COHERENT_NORM_TOL: f64 = 1e-10;

/// Atomic level labels in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AtomLevel {
    G = 0,
    E = 1,
    S = 2,
}

/// Shape of the truncated Hilbert space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceSpec {
    n_fock: usize,
    n_atom: usize,
}

impl SpaceSpec {
    pub fn new(n_fock: usize, n_atom: usize) -> Result<Self> {
        if n_fock < 2 {
            return Err(Error::InvalidSpace(format!(
                "n_fock must be at least 2, got {n_fock}"
            )));
        }
        if !(2..=3).contains(&n_atom) {
            return Err(Error::InvalidSpace(format!(
                "n_atom must be 2 or 3, got {n_atom}"
            )));
        }
        Ok(Self { n_fock, n_atom })
    }

    pub fn n_fock(&self) -> usize {
        self.n_fock
    }

    pub fn n_atom(&self) -> usize {
        self.n_atom
    }

    pub fn dim(&self) -> usize {
        self.n_fock * self.n_atom
    }

    pub fn has_auxiliary(&self) -> bool {
        self.n_atom == 3
    }

    /// Flat index of `|level, n>`.
    pub fn index(&self, level: AtomLevel, n: usize) -> usize {
        debug_assert!((level as usize) < self.n_atom && n < self.n_fock);
        level as usize * self.n_fock + n
    }

    /// The same space with a different Fock cutoff.
    pub fn with_fock(&self, n_fock: usize) -> Result<Self> {
        Self::new(n_fock, self.n_atom)
    }
}

/// Dense square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        Ok(Self { m })
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// `|i><j|` on a space of dimension `dim`.
    pub fn outer_basis(dim: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, j)] = ONE;
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `A - A^dagger`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                acc += (self.m[(i, j)] - self.m[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= HERMITIAN_TOL * self.frobenius_norm()
    }

    pub fn ensure_hermitian(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        let norm = self.frobenius_norm();
        if defect <= HERMITIAN_TOL * norm {
            Ok(())
        } else {
            Err(Error::NotHermitian { defect, norm })
        }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self {
            m: &self.m * &other.m - &other.m * &self.m,
        }
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self {
            m: self.m.kronecker(&other.m),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { m: &self.m * c }
    }

    /// `<bra| A |ket>`.
    pub fn sandwich(&self, bra: &StateVector, ket: &StateVector) -> C64 {
        bra.v.dotc(&(&self.m * &ket.v))
    }

    pub fn expectation(&self, psi: &StateVector) -> C64 {
        self.sandwich(psi, psi)
    }

    /// `tr(rho A)` for a density matrix `rho`.
    pub fn expectation_in(&self, rho: &Operator) -> C64 {
        let n = self.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += rho.m[(i, k)] * self.m[(k, i)];
            }
        }
        acc
    }

    pub fn apply(&self, psi: &StateVector) -> DVector<C64> {
        &self.m * &psi.v
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            })
        }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m + &rhs.m }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m - &rhs.m }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m * &rhs.m }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator {
            m: &self.m * C64::new(rhs, 0.0),
        }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        Operator { m: &self.m * rhs }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { m: -&self.m }
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    v: DVector<C64>,
}

impl StateVector {
    /// Normalizes `v`; rejects the zero vector.
    pub fn normalized(v: DVector<C64>) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParameter(
                "state vector has zero or non-finite norm".into(),
            ));
        }
        Ok(Self { v: v / C64::new(n, 0.0) })
    }

    pub fn from_amplitudes(amps: &[C64]) -> Result<Self> {
        Self::normalized(DVector::from_column_slice(amps))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = ONE;
        Self { v }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.v
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.v.dotc(&other.v)
    }

    pub fn overlap_sq(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self {
            v: self.v.kronecker(&other.v),
        }
    }

    /// `|self><self|`.
    pub fn projector(&self) -> Operator {
        Operator {
            m: &self.v * self.v.adjoint(),
        }
    }

    /// Normalized `a |self> + b |other>`.
    pub fn superpose(a: C64, x: &Self, b: C64, y: &Self) -> Result<Self> {
        Self::normalized(&x.v * a + &y.v * b)
    }
}

/// Standard operator set for one [`SpaceSpec`].
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub a: Operator,
    pub a_dag: Operator,
    pub number: Operator,
    pub x: Operator,
    pub y: Operator,
    pub sigma_x: Operator,
    pub sigma_y: Operator,
    pub sigma_z: Operator,
    pub projector_s: Operator,
    /// `|g><s|`, zero when the auxiliary level is absent.
    pub sigma_gs: Operator,
    /// `|e><s|`, zero when the auxiliary level is absent.
    pub sigma_es: Operator,
}

/// Truncated annihilation matrix on the cavity factor alone.
pub fn annihilation_matrix(n_fock: usize) -> DMatrix<C64> {
    let mut a = DMatrix::zeros(n_fock, n_fock);
    for n in 1..n_fock {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Lift an `n_atom x n_atom` matrix to the full space.
pub fn atomic_operator(space: &SpaceSpec, atom: &DMatrix<C64>) -> Result<Operator> {
    if atom.nrows() != space.n_atom || atom.ncols() != space.n_atom {
        return Err(Error::DimensionMismatch {
            expected: space.n_atom,
            got: atom.nrows(),
        });
    }
    Ok(Operator {
        m: atom.kronecker(&DMatrix::identity(space.n_fock, space.n_fock)),
    })
}

/// Lift an `n_fock x n_fock` matrix to the full space.
pub fn cavity_operator(space: &SpaceSpec, cav: &DMatrix<C64>) -> Result<Operator> {
    if cav.nrows() != space.n_fock || cav.ncols() != space.n_fock {
        return Err(Error::DimensionMismatch {
            expected: space.n_fock,
            got: cav.nrows(),
        });
    }
    Ok(Operator {
        m: DMatrix::<C64>::identity(space.n_atom, space.n_atom).kronecker(cav),
    })
}

/// Atomic Pauli matrices on the `{g, e}` block, padded with zeros for `s`.
///
/// `sigma_z = diag(-1, +1)` on `(g, e)` so that `e` is the upper level, and
/// `<g|sigma_y|e> = i`.
pub fn atomic_paulis(n_atom: usize) -> [DMatrix<C64>; 3] {
    let mut sx = DMatrix::zeros(n_atom, n_atom);
    let mut sy = DMatrix::zeros(n_atom, n_atom);
    let mut sz = DMatrix::zeros(n_atom, n_atom);
    sx[(0, 1)] = ONE;
    sx[(1, 0)] = ONE;
    sy[(0, 1)] = I;
    sy[(1, 0)] = -I;
    sz[(0, 0)] = -ONE;
    sz[(1, 1)] = ONE;
    [sx, sy, sz]
}

fn atomic_transition(n_atom: usize, to: usize, from: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(n_atom, n_atom);
    if to < n_atom && from < n_atom {
        m[(to, from)] = ONE;
    }
    m
}

pub fn make_operators(space: &SpaceSpec) -> OperatorSet {
    let na = space.n_atom;
    let a_c = annihilation_matrix(space.n_fock);
    let lift_c = |m: &DMatrix<C64>| Operator {
        m: DMatrix::<C64>::identity(na, na).kronecker(m),
    };
    let lift_a = |m: &DMatrix<C64>| Operator {
        m: m.kronecker(&DMatrix::<C64>::identity(space.n_fock, space.n_fock)),
    };
    let a = lift_c(&a_c);
    let a_dag = a.adjoint();
    let number = &a_dag * &a;
    let x = &a + &a_dag;
    let y = &(&a - &a_dag) * I;
    let [sx, sy, sz] = atomic_paulis(na);
    let s = AtomLevel::S as usize;
    OperatorSet {
        a,
        a_dag,
        number,
        x,
        y,
        sigma_x: lift_a(&sx),
        sigma_y: lift_a(&sy),
        sigma_z: lift_a(&sz),
        projector_s: lift_a(&atomic_transition(na, s, s)),
        sigma_gs: lift_a(&atomic_transition(na, AtomLevel::G as usize, s)),
        sigma_es: lift_a(&atomic_transition(na, AtomLevel::E as usize, s)),
    }
}

/// Coherent state `|alpha>` on the cavity factor (dimension `n_fock`).
///
/// Rejects `|alpha|^2 > n_fock / 4`, and also any cutoff that leaves a norm
/// deficit above [`COHERENT_NORM_TOL`] (the photon-number bound alone is not
/// sufficient for small cutoffs).
pub fn coherent_state(space: &SpaceSpec, alpha: C64) -> Result<StateVector> {
    let nf = space.n_fock;
    let a2 = alpha.norm_sqr();
    if a2 > nf as f64 / 4.0 {
        return Err(Error::Truncation(format!(
            "|alpha|^2 = {a2:.4} exceeds n_fock/4 = {:.4}",
            nf as f64 / 4.0
        )));
    }
    let mut v = DVector::zeros(nf);
    let mut c = C64::new((-a2 / 2.0).exp(), 0.0);
    v[0] = c;
    for n in 1..nf {
        c = c * alpha / (n as f64).sqrt();
        v[n] = c;
    }
    let deficit = 1.0 - v.norm_squared();
    if deficit > COHERENT_NORM_TOL {
        return Err(Error::Truncation(format!(
            "coherent state alpha = {alpha} loses {deficit:.3e} of its norm at n_fock = {nf}"
        )));
    }
    StateVector::normalized(v)
}

/// Fock state `|n>` on the cavity factor.
pub fn fock_state(space: &SpaceSpec, n: usize) -> Result<StateVector> {
    if n >= space.n_fock {
        return Err(Error::Truncation(format!(
            "Fock level {n} outside cutoff {}",
            space.n_fock
        )));
    }
    Ok(StateVector::basis(space.n_fock, n))
}

/// `atom ⊗ cavity` with atomic amplitudes ordered `g, e, s`.
pub fn product_state(space: &SpaceSpec, atom: &[C64], cavity: &StateVector) -> Result<StateVector> {
    if atom.len() != space.n_atom {
        return Err(Error::DimensionMismatch {
            expected: space.n_atom,
            got: atom.len(),
        });
    }
    if cavity.dim() != space.n_fock {
        return Err(Error::DimensionMismatch {
            expected: space.n_fock,
            got: cavity.dim(),
        });
    }
    Ok(StateVector::from_amplitudes(atom)?.kron(cavity))
}

/// Eigen-decomposition of a Hermitian operator with a fixed phase convention.
#[derive(Clone, Debug, PartialEq)]
pub struct DressedBasis {
    energies: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl DressedBasis {
    /// Number of retained eigenpairs.
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Dimension of the ambient space.
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, m: usize) -> f64 {
        self.energies[m]
    }

    /// Transition frequency `omega_m - omega_n`.
    pub fn omega(&self, m: usize, n: usize) -> f64 {
        self.energies[m] - self.energies[n]
    }

    /// Columns are eigenvectors.
    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    pub fn state(&self, m: usize) -> StateVector {
        StateVector {
            v: self.vectors.column(m).into_owned(),
        }
    }

    /// The lowest `cap` eigenpairs.
    pub fn truncated(&self, cap: usize) -> Self {
        let cap = cap.min(self.len());
        Self {
            energies: self.energies[..cap].to_vec(),
            vectors: self.vectors.columns(0, cap).into_owned(),
        }
    }

    /// Matrix elements `<m|A|n>` over the retained levels.
    pub fn project_operator(&self, a: &Operator) -> Result<DMatrix<C64>> {
        a.check_dim(self.dim())?;
        Ok(self.vectors.adjoint() * (a.matrix() * &self.vectors))
    }

    /// Coordinates `<m|psi>` over the retained levels.
    pub fn project_state(&self, psi: &StateVector) -> Result<DVector<C64>> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.dim(),
            });
        }
        Ok(self.vectors.adjoint() * &psi.v)
    }

    /// Map a dressed-frame matrix back to the ambient space.
    pub fn lift_operator(&self, m: &DMatrix<C64>) -> Result<Operator> {
        if m.nrows() != self.len() || m.ncols() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: m.nrows(),
            });
        }
        Ok(Operator {
            m: &self.vectors * m * self.vectors.adjoint(),
        })
    }

    /// `V diag(E) V^dagger`.
    pub fn reconstruct(&self) -> Operator {
        let mut scaled = self.vectors.clone();
        for (j, e) in self.energies.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*e);
        }
        Operator {
            m: scaled * self.vectors.adjoint(),
        }
    }

    /// Largest deviation of `V^dagger V` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.adjoint() * &self.vectors;
        let n = g.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// Exchange two eigenpairs (used only for quasi-degenerate relabelling).
    pub fn swap_levels(&mut self, i: usize, j: usize) {
        self.energies.swap(i, j);
        self.vectors.swap_columns(i, j);
    }

    /// Replace the eigenvectors of levels `i` and `j` by a unitary mix of
    /// the two. Only meaningful inside a degenerate pair.
    pub fn rotate_pair(&mut self, i: usize, j: usize, u: [[C64; 2]; 2]) {
        let vi = self.vectors.column(i).into_owned();
        let vj = self.vectors.column(j).into_owned();
        self.vectors.set_column(i, &(&vi * u[0][0] + &vj * u[1][0]));
        self.vectors.set_column(j, &(&vi * u[0][1] + &vj * u[1][1]));
    }
}

/// Hermitian eigen-decomposition with ascending eigenvalues.
///
/// Each eigenvector is rephased so that its largest-magnitude amplitude is
/// real and positive; magnitudes equal to within a relative `1e-10` count
/// as ties and the lowest index wins. Identical inputs give bitwise
/// identical outputs.
pub fn eigh(h: &Operator) -> Result<DressedBasis> {
    h.ensure_hermitian()?;
    let n = h.dim();
    let sym = (h.matrix() + h.matrix().adjoint()) * C64::new(0.5, 0.0);

    let (values, vectors): (Vec<f64>, DMatrix<C64>) = if sym.iter().all(|z| z.im == 0.0) {
        let real = sym.map(|z| z.re);
        let eig = SymmetricEigen::new(real);
        (
            eig.eigenvalues.iter().copied().collect(),
            eig.eigenvectors.map(|x| C64::new(x, 0.0)),
        )
    } else {
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));

    let mut sorted = DMatrix::zeros(n, n);
    let mut energies = Vec::with_capacity(n);
    for (col, &src) in order.iter().enumerate() {
        energies.push(values[src]);
        let mut v = vectors.column(src).into_owned();
        fix_phase(&mut v);
        sorted.set_column(col, &v);
    }
    Ok(DressedBasis {
        energies,
        vectors: sorted,
    })
}

fn fix_phase(v: &mut DVector<C64>) {
    let max = v.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    let p = v[pivot];
    let phase = p.conj() / p.norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
    v[pivot] = C64::new(p.norm(), 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_spaces() {
        assert!(SpaceSpec::new(1, 2).is_err());
        assert!(SpaceSpec::new(4, 4).is_err());
        assert_eq!(SpaceSpec::new(5, 3).unwrap().dim(), 15);
    }

    #[test]
    fn ladder_vacuum_element() {
        let space = SpaceSpec::new(2, 2).unwrap();
        let ops = make_operators(&space);
        let aad = &ops.a * &ops.a_dag;
        let vac = StateVector::basis(space.dim(), space.index(AtomLevel::G, 0));
        assert!((aad.expectation(&vac) - ONE).norm() < 1e-15);
    }

    #[test]
    fn truncated_commutator_defect_sits_in_top_corner() {
        for nf in [4, 8, 16] {
            let space = SpaceSpec::new(nf, 2).unwrap();
            let ops = make_operators(&space);
            let c = ops.x.commutator(&ops.y);
            // Y = i(a - a^dag) gives [X, Y] = -2i away from the cutoff
            let defect = &c - &Operator::identity(space.dim()).scale(C64::new(0.0, -2.0));
            for i in 0..space.dim() {
                for j in 0..space.dim() {
                    let top = i == j && i % nf == nf - 1;
                    if !top {
                        assert!(defect.get(i, j).norm() < 1e-12);
                    }
                }
            }
            let corner = defect.get(nf - 1, nf - 1).norm();
            assert!((corner - 2.0 * nf as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn minus_state_is_sigma_x_eigenvector() {
        let space = SpaceSpec::new(3, 2).unwrap();
        let ops = make_operators(&space);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let vac = fock_state(&space, 0).unwrap();
        // |-> = (|up> - |down>)/sqrt2 with down = g, up = e
        let minus = product_state(&space, &[C64::new(-r, 0.0), C64::new(r, 0.0)], &vac).unwrap();
        let sx = ops.sigma_x.expectation(&minus);
        assert!((sx + ONE).norm() < 1e-14);
    }

    #[test]
    fn atomic_ops_vanish_on_auxiliary_level() {
        let space = SpaceSpec::new(3, 3).unwrap();
        let ops = make_operators(&space);
        let s0 = StateVector::basis(space.dim(), space.index(AtomLevel::S, 0));
        for op in [&ops.sigma_x, &ops.sigma_y, &ops.sigma_z] {
            assert!(op.apply(&s0).norm() == 0.0);
        }
        assert!((ops.projector_s.expectation(&s0) - ONE).norm() == 0.0);
        let two = SpaceSpec::new(3, 2).unwrap();
        assert_eq!(make_operators(&two).projector_s.frobenius_norm(), 0.0);
    }

    #[test]
    fn coherent_state_basics() {
        let space = SpaceSpec::new(40, 2).unwrap();
        let vac = coherent_state(&space, ZERO).unwrap();
        assert_eq!(vac.amplitudes()[0], ONE);
        let c = coherent_state(&space, C64::new(1.0, 0.0)).unwrap();
        let a = annihilation_matrix(40);
        let n = a.adjoint() * &a;
        let mean = c.amplitudes().dotc(&(&n * c.amplitudes())).re;
        assert!((mean - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coherent_overlap_law() {
        let space = SpaceSpec::new(64, 2).unwrap();
        let a = 1.3;
        let p = coherent_state(&space, C64::new(a, 0.0)).unwrap();
        let m = coherent_state(&space, C64::new(-a, 0.0)).unwrap();
        let ov = p.inner(&m).re;
        assert!((ov - (-2.0 * a * a).exp()).abs() < 1e-12);
        assert!((ov - 3.4047e-2).abs() < 1e-6);
    }

    #[test]
    fn coherent_state_guard() {
        let space = SpaceSpec::new(8, 2).unwrap();
        assert!(coherent_state(&space, C64::new(1.5, 0.0)).is_err());
        // within n_fock/4 but the norm deficit is far above tolerance
        assert!(coherent_state(&space, C64::new(1.2, 0.0)).is_err());
    }

    #[test]
    fn eigh_half_sigma_z() {
        let space = SpaceSpec::new(2, 2).unwrap();
        let ops = make_operators(&space);
        let b = eigh(&(&ops.sigma_z * 0.5)).unwrap();
        assert_eq!(b.energies(), &[-0.5, -0.5, 0.5, 0.5]);
        assert!(b.orthonormality_defect() < 1e-14);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let space = SpaceSpec::new(3, 2).unwrap();
        let ops = make_operators(&space);
        assert!(matches!(eigh(&ops.a), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eigh_phase_and_reconstruction_for_complex_input() {
        let space = SpaceSpec::new(6, 2).unwrap();
        let ops = make_operators(&space);
        let h = &(&(&ops.number + &(&ops.sigma_y * 0.3)) + &(&ops.y * 0.2)) + &(&ops.sigma_z * 0.1);
        let b = eigh(&h).unwrap();
        let rec = &b.reconstruct() - &h;
        assert!(rec.frobenius_norm() < 1e-10 * h.frobenius_norm());
        assert!(b.orthonormality_defect() < 1e-10);
        for w in b.energies().windows(2) {
            assert!(w[0] <= w[1]);
        }
        for m in 0..b.len() {
            let v = b.state(m);
            let max = v.amplitudes().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let pivot = v.amplitudes().iter().position(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap();
            assert_eq!(v.amplitudes()[pivot].im, 0.0);
            assert!(v.amplitudes()[pivot].re > 0.0);
        }
        let again = eigh(&h).unwrap();
        assert_eq!(b, again);
    }
}
