//! Rabi-type Hamiltonians for an atom coupled to a single cavity mode.
//!
//! Two representations are supported. In the bare representation the atom
//! is written in the `{down, up}` basis in which the coupling `lambda X sigma_x`
//! is defined:
//!
//! `H = wc a^dag a + eps/2 sz + Delta/2 sx + lambda X sx - Lambda/2 X`
//!
//! In the diagonal-atom representation the atomic term is rotated to
//! `wq/2 sz'` and the coupling becomes `lambda X (cos(theta) sx' + sin(theta) sz')`
//! with `wq = sqrt(eps^2 + Delta^2)` and `theta = atan2(Delta, eps)`. The
//! auxiliary level `s`, when present, only adds `ws |s><s|`.
//!
//! Atomic storage order is `(g, e, s)`; in the bare representation `g` and
//! `e` stand for `down` and `up`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{
    coherent_state, eigh, make_operators, DressedBasis, Operator, SpaceSpec, StateVector, C64, ONE,
    ZERO,
};
use crate::io::fmt_float;

/// Gap below which two levels are treated as numerically degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Physical parameters in units of the cavity frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub omega_c: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub lambda_drive: f64,
    pub omega_s: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            omega_c: 1.0,
            epsilon: 0.0,
            delta: 0.0,
            lambda: 0.0,
            lambda_drive: 0.0,
            omega_s: 0.0,
        }
    }
}

impl ModelParams {
    pub fn omega_q(&self) -> f64 {
        self.epsilon.hypot(self.delta)
    }

    pub fn theta(&self) -> f64 {
        self.delta.atan2(self.epsilon)
    }

    /// `sqrt(wq wc) / 2`, reported for orientation only.
    pub fn critical_coupling(&self) -> f64 {
        (self.omega_q() * self.omega_c).sqrt() / 2.0
    }

    /// Displacement `lambda / wc` of the undriven polarized states.
    pub fn alpha(&self) -> f64 {
        self.lambda / self.omega_c
    }

    /// Coherent amplitude attached to the `sigma_x = m` branch:
    /// `-(m lambda - Lambda/2) / wc`.
    pub fn branch_displacement(&self, m: f64) -> f64 {
        -(m * self.lambda - self.lambda_drive / 2.0) / self.omega_c
    }

    /// Parameters with the atomic splitting expressed through `(wq, theta)`.
    pub fn with_polar_atom(mut self, omega_q: f64, theta: f64) -> Self {
        self.epsilon = omega_q * theta.cos();
        self.delta = omega_q * theta.sin();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_c", self.omega_c),
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("lambda", self.lambda),
            ("Lambda_drive", self.lambda_drive),
            ("omega_s", self.omega_s),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        if self.omega_c <= 0.0 {
            return Err(Error::InvalidParameter("omega_c must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParameter("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Representation of the atomic factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisChoice {
    Bare,
    DiagonalAtom,
}

/// Columns are the `(g', e')` states of the chosen representation written in
/// bare `(down, up)` coordinates.
pub fn atomic_frame(p: &ModelParams, choice: BasisChoice) -> [[f64; 2]; 2] {
    match choice {
        BasisChoice::Bare => [[1.0, 0.0], [0.0, 1.0]],
        BasisChoice::DiagonalAtom => {
            let (s, c) = (p.theta() / 2.0).sin_cos();
            [[c, s], [-s, c]]
        }
    }
}

/// Express bare atomic amplitudes `(down, up)` in the chosen representation.
pub fn to_atomic_frame(p: &ModelParams, choice: BasisChoice, bare: [C64; 2]) -> [C64; 2] {
    let u = atomic_frame(p, choice);
    [
        bare[0] * u[0][0] + bare[1] * u[1][0],
        bare[0] * u[0][1] + bare[1] * u[1][1],
    ]
}

pub fn build_hamiltonian(space: &SpaceSpec, p: &ModelParams, choice: BasisChoice) -> Result<Operator> {
    p.validate()?;
    let ops = make_operators(space);
    let mut h = &ops.number * p.omega_c;
    match choice {
        BasisChoice::Bare => {
            h = &h + &(&ops.sigma_z * (p.epsilon / 2.0));
            h = &h + &(&ops.sigma_x * (p.delta / 2.0));
            h = &h + &(&(&ops.x * &ops.sigma_x) * p.lambda);
        }
        BasisChoice::DiagonalAtom => {
            let wq = p.omega_q();
            if wq == 0.0 {
                return Err(Error::InvalidParameter(
                    "diagonal-atom representation needs a non-zero atomic splitting".into(),
                ));
            }
            let (s, c) = p.theta().sin_cos();
            let coupling = &(&ops.sigma_x * c) + &(&ops.sigma_z * s);
            h = &h + &(&ops.sigma_z * (wq / 2.0));
            h = &h + &(&(&ops.x * &coupling) * p.lambda);
        }
    }
    if p.lambda_drive != 0.0 {
        h = &h - &(&ops.x * (p.lambda_drive / 2.0));
    }
    if space.has_auxiliary() {
        h = &h + &(&ops.projector_s * p.omega_s);
    }
    Ok(h)
}

fn branch_state(space: &SpaceSpec, p: &ModelParams, choice: BasisChoice, m: f64) -> Result<StateVector> {
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    // sigma_x eigenstates in (down, up): |+> = (d + u)/sqrt2, |-> = (u - d)/sqrt2
    let bare = if m > 0.0 { [r, r] } else { [-r, r] };
    let [g, e] = to_atomic_frame(p, choice, bare);
    let mut atom = vec![g, e];
    if space.has_auxiliary() {
        atom.push(ZERO);
    }
    let cav = coherent_state(space, C64::new(p.branch_displacement(m), 0.0))?;
    Ok(StateVector::from_amplitudes(&atom)?.kron(&cav))
}

/// `(|P_->, |P_+>) = (|-> |alpha_->, |+> |alpha_+>)` with
/// `alpha_m = -(m lambda - Lambda/2)/wc`.
pub fn polarized_states(
    space: &SpaceSpec,
    p: &ModelParams,
    choice: BasisChoice,
) -> Result<(StateVector, StateVector)> {
    p.validate()?;
    Ok((branch_state(space, p, choice, -1.0)?, branch_state(space, p, choice, 1.0)?))
}

/// `(|E_->, |E_+>) = ((P_+ - P_-)/sqrt2, (P_+ + P_-)/sqrt2)`.
pub fn entangled_states(
    space: &SpaceSpec,
    p: &ModelParams,
    choice: BasisChoice,
) -> Result<(StateVector, StateVector)> {
    let (pm, pp) = polarized_states(space, p, choice)?;
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    Ok((
        StateVector::superpose(r, &pp, -r, &pm)?,
        StateVector::superpose(r, &pp, r, &pm)?,
    ))
}

/// `exp(i pi (a^dag a + |e><e|))` in the bare atomic basis; `+1` on `s`.
pub fn parity_operator(space: &SpaceSpec) -> Operator {
    let nf = space.n_fock();
    let mut m = DMatrix::zeros(space.dim(), space.dim());
    for level in 0..space.n_atom() {
        let atom_sign = if level == 1 { -1.0 } else { 1.0 };
        for n in 0..nf {
            let photon_sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let i = level * nf + n;
            m[(i, i)] = C64::new(atom_sign * photon_sign, 0.0);
        }
    }
    Operator::from_matrix(m).expect("square by construction")
}

/// Analytic spectrum when `eps = 0`: `wc n - (m lambda - Lambda/2)^2/wc + m Delta/2`
/// for `m = +-1`, sorted ascending, `n < n_max`.
pub fn exact_longitudinal_energies(p: &ModelParams, n_max: usize) -> Result<Vec<f64>> {
    p.validate()?;
    if p.epsilon != 0.0 {
        return Err(Error::InvalidParameter(
            "closed-form spectrum requires epsilon = 0".into(),
        ));
    }
    let mut e = Vec::with_capacity(2 * n_max);
    for m in [-1.0_f64, 1.0] {
        let shift = (m * p.lambda - p.lambda_drive / 2.0).powi(2) / p.omega_c;
        for n in 0..n_max {
            e.push(p.omega_c * n as f64 - shift + m * p.delta / 2.0);
        }
    }
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Splitting `sqrt(Delta^2 + eps_R^2)` of the two-state reduction with
/// `eps_R = eps exp(-2 alpha^2)`.
pub fn reduced_splitting(p: &ModelParams) -> f64 {
    let eps_r = p.epsilon * (-2.0 * p.alpha().powi(2)).exp();
    p.delta.hypot(eps_r)
}

/// `exp(-4 N (lambda/wc)^2)` for `N` atoms.
pub fn dicke_overlap_suppression(n_atoms: usize, lambda_over_wc: f64) -> f64 {
    (-4.0 * n_atoms as f64 * lambda_over_wc * lambda_over_wc).exp()
}

/// Diagonalized model.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub space: SpaceSpec,
    pub params: ModelParams,
    pub choice: BasisChoice,
    pub basis: DressedBasis,
}

impl Spectrum {
    pub fn gap(&self) -> f64 {
        self.basis.omega(1, 0)
    }
}

pub fn diagonalize(space: &SpaceSpec, p: &ModelParams, choice: BasisChoice) -> Result<Spectrum> {
    let h = build_hamiltonian(space, p, choice)?;
    let mut basis = eigh(&h)?;
    order_lowest_pair(space, p, choice, &mut basis)?;
    Ok(Spectrum {
        space: *space,
        params: *p,
        choice,
        basis,
    })
}

/// Diagonalize and confirm that the lowest `levels` eigenvalues move by less
/// than `tol` when the Fock cutoff is raised by half. Returns the spectrum
/// at the original cutoff and the observed shift.
pub fn diagonalize_checked(
    space: &SpaceSpec,
    p: &ModelParams,
    choice: BasisChoice,
    levels: usize,
    tol: f64,
) -> Result<(Spectrum, f64)> {
    let spec = diagonalize(space, p, choice)?;
    let big = space.with_fock(space.n_fock() + space.n_fock().div_ceil(2))?;
    let h = build_hamiltonian(&big, p, choice)?;
    let reference = eigh(&h)?;
    let k = levels.min(spec.basis.len());
    let shift = (0..k)
        .map(|i| (spec.basis.energy(i) - reference.energy(i)).abs())
        .fold(0.0, f64::max);
    if shift > tol {
        return Err(Error::Truncation(format!(
            "lowest {k} levels shift by {shift:.3e} when n_fock grows from {} to {}",
            space.n_fock(),
            big.n_fock()
        )));
    }
    Ok((spec, shift))
}

/// Fix the gauge of a numerically degenerate ground pair so labels vary
/// continuously along sweeps. With parity symmetry the pair is rotated into
/// parity eigenstates (even first); otherwise the member closer to `|P_->`
/// is placed first.
fn order_lowest_pair(
    space: &SpaceSpec,
    p: &ModelParams,
    choice: BasisChoice,
    basis: &mut DressedBasis,
) -> Result<()> {
    if basis.len() < 2 || basis.omega(1, 0) >= DEGENERACY_TOL {
        return Ok(());
    }
    let parity_symmetric =
        p.delta == 0.0 && p.lambda_drive == 0.0 && choice == BasisChoice::Bare;
    if parity_symmetric {
        let par = parity_operator(space);
        let (v0, v1) = (basis.state(0), basis.state(1));
        let p00 = par.sandwich(&v0, &v0).re;
        let p11 = par.sandwich(&v1, &v1).re;
        let p01 = par.sandwich(&v0, &v1);
        // eigenvector of the 2x2 parity block with eigenvalue +1
        let (a, b) = if p01.norm() < 1e-14 {
            if p00 >= p11 {
                (ONE, ZERO)
            } else {
                (ZERO, ONE)
            }
        } else {
            let lam = 0.5 * (p00 + p11) + (0.25 * (p00 - p11).powi(2) + p01.norm_sqr()).sqrt();
            let (x, y) = (p01, C64::new(lam - p00, 0.0));
            let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
            (x / n, y / n)
        };
        // second column orthogonal to the first
        basis.rotate_pair(0, 1, [[a, -b.conj()], [b, a.conj()]]);
    } else {
        let (pm, _) = polarized_states(space, p, choice)?;
        if basis.state(1).overlap_sq(&pm) > basis.state(0).overlap_sq(&pm) {
            basis.swap_levels(0, 1);
        }
    }
    Ok(())
}

/// Swept model parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    Lambda,
    Epsilon,
    Delta,
    LambdaDrive,
    OmegaS,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::Epsilon => "epsilon",
            Self::Delta => "delta",
            Self::LambdaDrive => "Lambda_drive",
            Self::OmegaS => "omega_s",
        }
    }

    pub fn apply(&self, p: &ModelParams, v: f64) -> ModelParams {
        let mut q = *p;
        match self {
            Self::Lambda => q.lambda = v,
            Self::Epsilon => q.epsilon = v,
            Self::Delta => q.delta = v,
            Self::LambdaDrive => q.lambda_drive = v,
            Self::OmegaS => q.omega_s = v,
        }
        q
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Self::Lambda),
            "epsilon" => Ok(Self::Epsilon),
            "delta" => Ok(Self::Delta),
            "Lambda_drive" | "lambda_drive" => Ok(Self::LambdaDrive),
            "omega_s" => Ok(Self::OmegaS),
            other => Err(Error::InvalidParameter(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub levels: usize,
    pub relative_to_ground: bool,
    pub choice: BasisChoice,
    /// Tolerance of the enlarged-cutoff check; `None` skips it.
    pub convergence_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub energies: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub relative_to_ground: bool,
    pub rows: Vec<SweepRow>,
    /// `sqrt(wq wc)/2` when it does not vary along the sweep.
    pub critical_coupling: Option<f64>,
}

impl SweepTable {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.rows.first().map_or(0, |r| r.energies.len());
        let mut header = vec![self.parameter.name().to_string()];
        header.extend((0..k).map(|i| format!("E{i}")));
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let mut cells = vec![fmt_float(row.value)];
            cells.extend(row.energies.iter().map(|&e| fmt_float(e)));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Column `i` of the table.
    pub fn level(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.energies[i]).collect()
    }
}

fn check_monotone(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("sweep grid has non-finite values".into()));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if up || down {
        Ok(())
    } else {
        Err(Error::InvalidParameter("sweep grid must be strictly monotone".into()))
    }
}

pub fn spectrum_sweep(space: &SpaceSpec, template: &ModelParams, sweep: &Sweep) -> Result<SweepTable> {
    check_monotone(&sweep.grid)?;
    if sweep.levels == 0 || sweep.levels > space.dim() {
        return Err(Error::InvalidParameter(format!(
            "levels must be in 1..={}, got {}",
            space.dim(),
            sweep.levels
        )));
    }
    let rows: Vec<Result<SweepRow>> = sweep
        .grid
        .par_iter()
        .map(|&v| {
            let p = sweep.parameter.apply(template, v);
            let spec = match sweep.convergence_tol {
                Some(tol) => diagonalize_checked(space, &p, sweep.choice, sweep.levels, tol).map(|x| x.0),
                None => diagonalize(space, &p, sweep.choice),
            }
            .map_err(|e| Error::AtGridPoint {
                parameter: sweep.parameter.name().into(),
                value: v,
                source: Box::new(e),
            })?;
            let e0 = spec.basis.energy(0);
            let energies = spec.basis.energies()[..sweep.levels]
                .iter()
                .map(|&e| if sweep.relative_to_ground { e - e0 } else { e })
                .collect();
            Ok(SweepRow { value: v, energies })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let critical_coupling = match sweep.parameter {
        SweepParameter::Epsilon | SweepParameter::Delta => None,
        _ => Some(template.critical_coupling()),
    };
    Ok(SweepTable {
        parameter: sweep.parameter,
        relative_to_ground: sweep.relative_to_ground,
        rows,
        critical_coupling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(nf: usize) -> SpaceSpec {
        SpaceSpec::new(nf, 2).unwrap()
    }

    #[test]
    fn decoupled_spectrum() {
        let p = ModelParams { delta: 0.2, ..Default::default() };
        let s = diagonalize(&space(10), &p, BasisChoice::Bare).unwrap();
        let e = s.basis.energies();
        assert!((e[0] + 0.1).abs() < 1e-12 && (e[1] - 0.1).abs() < 1e-12);
        assert!((e[2] - 0.9).abs() < 1e-12 && (e[3] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn longitudinal_ground_energy() {
        let p = ModelParams { delta: 0.2, lambda: 1.3, ..Default::default() };
        let s = diagonalize(&space(48), &p, BasisChoice::Bare).unwrap();
        assert!((s.basis.energy(0) + 1.79).abs() < 1e-9);
        assert!((s.gap() - 0.2).abs() < 1e-8);
    }

    #[test]
    fn representations_agree() {
        let p = ModelParams { epsilon: 0.3, delta: 0.4, lambda: 0.7, lambda_drive: 0.1, ..Default::default() };
        let a = diagonalize(&space(40), &p, BasisChoice::Bare).unwrap();
        let b = diagonalize(&space(40), &p, BasisChoice::DiagonalAtom).unwrap();
        for (x, y) in a.basis.energies().iter().zip(b.basis.energies()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_atom_needs_splitting() {
        let p = ModelParams { lambda: 0.5, lambda_drive: 0.2, ..Default::default() };
        assert!(build_hamiltonian(&space(10), &p, BasisChoice::DiagonalAtom).is_err());
        assert!(build_hamiltonian(&space(10), &p, BasisChoice::Bare).is_ok());
    }

    #[test]
    fn polarized_pair_is_orthogonal_and_reduces_at_zero_coupling() {
        let sp = space(30);
        let p = ModelParams { delta: 0.2, lambda: 1.0, ..Default::default() };
        let (pm, pp) = polarized_states(&sp, &p, BasisChoice::Bare).unwrap();
        assert!(pm.inner(&pp).norm() < 1e-15);
        let p0 = ModelParams::default();
        let (pm0, _) = polarized_states(&sp, &p0, BasisChoice::Bare).unwrap();
        let amps = pm0.amplitudes();
        assert!((amps[0].re + FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((amps[sp.n_fock()].re - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn entangled_pair_orthonormal() {
        let sp = space(40);
        let p = ModelParams { epsilon: 0.2, lambda: 1.3, ..Default::default() };
        let (em, ep) = entangled_states(&sp, &p, BasisChoice::Bare).unwrap();
        assert!(em.inner(&ep).norm() < 1e-15);
        assert!((em.norm() - 1.0).abs() < 1e-14);
        let s = diagonalize(&sp, &p, BasisChoice::Bare).unwrap();
        assert!(s.basis.state(0).overlap_sq(&em) >= 0.99);
    }

    #[test]
    fn parity_commutes_when_symmetric() {
        let sp = space(20);
        let p = ModelParams { epsilon: 0.4, lambda: 0.9, ..Default::default() };
        let h = build_hamiltonian(&sp, &p, BasisChoice::Bare).unwrap();
        assert!(h.commutator(&parity_operator(&sp)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn degenerate_pair_is_rotated_into_parity_states() {
        let sp = space(90);
        let p = ModelParams { epsilon: 0.2, lambda: 4.0, ..Default::default() };
        let s = diagonalize(&sp, &p, BasisChoice::Bare).unwrap();
        assert!(s.gap() < DEGENERACY_TOL);
        let par = parity_operator(&sp);
        assert!((par.expectation(&s.basis.state(0)).re - 1.0).abs() < 1e-8);
        assert!((par.expectation(&s.basis.state(1)).re + 1.0).abs() < 1e-8);
    }

    #[test]
    fn exact_energies_require_zero_bias() {
        let p = ModelParams { epsilon: 0.1, ..Default::default() };
        assert!(exact_longitudinal_energies(&p, 3).is_err());
    }

    #[test]
    fn reduced_splitting_limits() {
        let p = ModelParams { epsilon: 0.3, delta: 0.0, lambda: 0.0, ..Default::default() };
        assert!((reduced_splitting(&p) - 0.3).abs() < 1e-15);
        assert!((dicke_overlap_suppression(1, 1.3) - (-6.76f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sweep_rejects_unordered_grid_and_reports_grid_point() {
        let sp = space(8);
        let sw = Sweep {
            parameter: SweepParameter::Lambda,
            grid: vec![0.0, 0.5, 0.2],
            levels: 2,
            relative_to_ground: false,
            choice: BasisChoice::Bare,
            convergence_tol: None,
        };
        assert!(spectrum_sweep(&sp, &ModelParams::default(), &sw).is_err());
        let sw = Sweep { grid: vec![0.1, 1.5], ..sw };
        let err = spectrum_sweep(&sp, &ModelParams::default(), &Sweep { convergence_tol: Some(1e-8), ..sw })
            .unwrap_err();
        assert!(matches!(err, Error::AtGridPoint { value, .. } if value == 0.1 || value == 1.5));
    }
}
