//! Dressed-state master equation.
//!
//! A system operator `S` is split in the eigenbasis of the system
//! Hamiltonian into lowering, raising and diagonal parts. Every matrix
//! element `s_mn` with `n > m` becomes a jump `|m><n|` with rate
//! `gamma(w_nm) |s_mn|^2`, and every diagonal part `S_z` a dephasing term
//! `gamma_phi D[S_z]`, where `D[O] rho = (2 O rho O^dag - O^dag O rho - rho O^dag O) / 2`.
//! At finite temperature each lowering jump is weighted by `nbar + 1` and
//! paired with a raising jump weighted by `nbar`.
//!
//! The equation is propagated in the interaction picture of the dressed
//! energies. All dissipators above commute with that frame change, so only
//! an optional drive picks up the phases `exp(i (E_i - E_j) t)`.

pub mod integrator;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hilbert::{DressedBasis, Operator, C64, ONE, ZERO};
use integrator::{Dopri5, StepStats, Tolerances};

/// Largest accepted `|tr rho - 1|` at any output time.
pub const TRACE_TOL: f64 = 1e-7;
/// Most negative accepted eigenvalue of `rho` at any output time.
pub const POSITIVITY_TOL: f64 = 1e-6;
/// Transitions closer than this are flagged as quasi-degenerate.
pub const QUASI_DEGENERATE: f64 = 1e-6;

/// Frequency dependence of a relaxation rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralWeight {
    /// `gamma(w) = gamma`.
    Constant,
    /// `gamma(w) = gamma |w| / omega_ref`.
    Ohmic { omega_ref: f64 },
}

#[derive(Clone, Debug)]
pub struct NoiseChannel {
    pub name: String,
    pub op: Operator,
    pub gamma: f64,
    pub weight: SpectralWeight,
    pub gamma_phi: f64,
}

impl NoiseChannel {
    pub fn new(name: impl Into<String>, op: Operator, gamma: f64, gamma_phi: f64) -> Result<Self> {
        let ch = Self {
            name: name.into(),
            op,
            gamma,
            weight: SpectralWeight::Constant,
            gamma_phi,
        };
        ch.validate()?;
        Ok(ch)
    }

    pub fn with_weight(mut self, weight: SpectralWeight) -> Result<Self> {
        self.weight = weight;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.op.ensure_hermitian()?;
        for (what, v) in [("gamma", self.gamma), ("gamma_phi", self.gamma_phi)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "channel `{}`: {what} must be finite and non-negative, got {v}",
                    self.name
                )));
            }
        }
        if let SpectralWeight::Ohmic { omega_ref } = self.weight {
            if !(omega_ref.is_finite() && omega_ref > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "channel `{}`: ohmic reference frequency must be positive",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// `gamma(w)`.
    pub fn rate_at(&self, omega: f64) -> f64 {
        match self.weight {
            SpectralWeight::Constant => self.gamma,
            SpectralWeight::Ohmic { omega_ref } => self.gamma * omega.abs() / omega_ref,
        }
    }
}

/// Parts of an operator in a dressed basis. All matrices are expressed in
/// dressed coordinates.
#[derive(Clone, Debug)]
pub struct DressedDecomposition {
    /// Entries `s_mn` with `n > m`.
    pub minus: DMatrix<C64>,
    pub plus: DMatrix<C64>,
    pub z: DMatrix<C64>,
    pub elements: DMatrix<C64>,
}

impl DressedDecomposition {
    pub fn element(&self, m: usize, n: usize) -> C64 {
        self.elements[(m, n)]
    }
}

pub fn dressed_decompose(s: &Operator, basis: &DressedBasis) -> Result<DressedDecomposition> {
    let elements = basis.project_operator(s)?;
    let k = elements.nrows();
    let mut minus = DMatrix::zeros(k, k);
    let mut z = DMatrix::zeros(k, k);
    for n in 0..k {
        z[(n, n)] = elements[(n, n)];
        for m in 0..n {
            minus[(m, n)] = elements[(m, n)];
        }
    }
    let plus = minus.adjoint();
    Ok(DressedDecomposition {
        minus,
        plus,
        z,
        elements,
    })
}

/// Jump `|to><from|` with rate `rate`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpTerm {
    pub to: usize,
    pub from: usize,
    pub rate: f64,
    pub channel: usize,
}

impl JumpTerm {
    pub fn is_raising(&self) -> bool {
        self.to > self.from
    }
}

/// `rate D[diag(diagonal)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DephasingTerm {
    pub channel: usize,
    pub rate: f64,
    pub diagonal: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    basis: DressedBasis,
    channel_names: Vec<String>,
    jumps: Vec<JumpTerm>,
    dephasing: Vec<DephasingTerm>,
    temperature: f64,
    warnings: Vec<String>,
    /// `inflow[(m, n)]`: total rate from level `n` into level `m`.
    inflow: DMatrix<f64>,
    /// Real damping of each density-matrix element.
    damping: DMatrix<f64>,
}

/// Thermal occupation `1/(exp(w/T) - 1)`; zero at `T = 0`.
pub fn bose_occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = omega.abs() / temperature;
    if x > 700.0 {
        0.0
    } else {
        1.0 / x.exp_m1()
    }
}

/// Assemble the secular generator over the lowest `level_cap` levels.
/// `temperature` is `k_B T` in the same units as the energies.
pub fn build_generator(
    basis: &DressedBasis,
    channels: &[NoiseChannel],
    temperature: f64,
    level_cap: usize,
) -> Result<LindbladGenerator> {
    if channels.is_empty() {
        return Err(Error::InvalidParameter("at least one noise channel is required".into()));
    }
    if !(temperature.is_finite() && temperature >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be finite and non-negative, got {temperature}"
        )));
    }
    if level_cap < 2 || level_cap > basis.len() {
        return Err(Error::InvalidParameter(format!(
            "level_cap must be in 2..={}, got {level_cap}",
            basis.len()
        )));
    }
    let basis = basis.truncated(level_cap);
    let k = level_cap;
    let mut jumps = Vec::new();
    let mut dephasing = Vec::new();
    let mut warnings = Vec::new();

    for (c, ch) in channels.iter().enumerate() {
        ch.validate()?;
        let s = basis.project_operator(&ch.op)?;
        for n in 0..k {
            for m in 0..n {
                let w = basis.omega(n, m);
                let s2 = s[(m, n)].norm_sqr();
                if s2 == 0.0 {
                    continue;
                }
                if w.abs() < QUASI_DEGENERATE && s2 > 1e-24 {
                    warnings.push(format!(
                        "channel `{}` couples levels {m} and {n} split by only {w:.3e}; secular rates are unreliable there",
                        ch.name
                    ));
                }
                let base = ch.rate_at(w) * s2;
                if base == 0.0 {
                    continue;
                }
                // exact degeneracy: no thermal enhancement, constant-weight rate
                let exact_degenerate = w.abs() < 1e-12;
                let nbar = if exact_degenerate { 0.0 } else { bose_occupation(w, temperature) };
                let rate_down = if exact_degenerate { ch.rate_at(0.0) * s2 } else { base * (nbar + 1.0) };
                if rate_down > 0.0 {
                    jumps.push(JumpTerm { to: m, from: n, rate: rate_down, channel: c });
                }
                let rate_up = base * nbar;
                if rate_up > 0.0 {
                    jumps.push(JumpTerm { to: n, from: m, rate: rate_up, channel: c });
                }
            }
        }
        if ch.gamma_phi > 0.0 {
            let diagonal: Vec<f64> = (0..k).map(|i| s[(i, i)].re).collect();
            let d0 = diagonal[0];
            if diagonal.iter().any(|&d| d != d0) {
                dephasing.push(DephasingTerm {
                    channel: c,
                    rate: ch.gamma_phi,
                    diagonal,
                });
            }
        }
    }

    let mut inflow = DMatrix::zeros(k, k);
    let mut outflow = vec![0.0; k];
    for j in &jumps {
        inflow[(j.to, j.from)] += j.rate;
        outflow[j.from] += j.rate;
    }
    let mut damping = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut g = 0.5 * (outflow[i] + outflow[j]);
            for d in &dephasing {
                g += 0.5 * d.rate * (d.diagonal[i] - d.diagonal[j]).powi(2);
            }
            damping[(i, j)] = g;
        }
    }

    Ok(LindbladGenerator {
        basis,
        channel_names: channels.iter().map(|c| c.name.clone()).collect(),
        jumps,
        dephasing,
        temperature,
        warnings,
        inflow,
        damping,
    })
}

impl LindbladGenerator {
    pub fn basis(&self) -> &DressedBasis {
        &self.basis
    }

    pub fn level_cap(&self) -> usize {
        self.basis.len()
    }

    pub fn jump_terms(&self) -> &[JumpTerm] {
        &self.jumps
    }

    pub fn dephasing_terms(&self) -> &[DephasingTerm] {
        &self.dephasing
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn channel_name(&self, c: usize) -> &str {
        &self.channel_names[c]
    }

    /// Summed jump rate from `from` to `to` over all channels.
    pub fn total_rate(&self, to: usize, from: usize) -> f64 {
        self.inflow[(to, from)]
    }

    /// Project an ambient density matrix onto the retained dressed levels.
    pub fn dressed_density(&self, rho: &Operator) -> Result<Operator> {
        Operator::from_matrix(self.basis.project_operator(rho)?)
    }

    /// Dressed coordinates of an ambient operator.
    pub fn dressed_operator(&self, a: &Operator) -> Result<Operator> {
        Operator::from_matrix(self.basis.project_operator(a)?)
    }

    /// Time derivative in the Schroedinger picture, without drive.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let k = self.level_cap();
        let mut out = DMatrix::zeros(k, k);
        for j in 0..k {
            for i in 0..k {
                let w = self.basis.energy(i) - self.basis.energy(j);
                out[(i, j)] = rho[(i, j)] * C64::new(-self.damping[(i, j)], -w);
            }
        }
        for m in 0..k {
            let mut gain = 0.0;
            for n in 0..k {
                gain += self.inflow[(m, n)] * rho[(n, n)].re;
            }
            out[(m, m)] += gain;
        }
        out
    }

    /// Liouvillian in column-stacking convention (`vec(rho)[i + k j] = rho_ij`),
    /// assembled directly from the jump and dephasing operators.
    pub fn superoperator(&self) -> DMatrix<C64> {
        let k = self.level_cap();
        let id = DMatrix::<C64>::identity(k, k);
        let mut h = DMatrix::<C64>::zeros(k, k);
        for i in 0..k {
            h[(i, i)] = C64::new(self.basis.energy(i), 0.0);
        }
        let minus_i = C64::new(0.0, -1.0);
        // vec(A X B) = (B^T ⊗ A) vec(X)
        let mut l = (id.kronecker(&h) - h.transpose().kronecker(&id)) * minus_i;
        let mut add_dissipator = |op: &DMatrix<C64>, rate: f64| {
            let od = op.adjoint();
            let odo = &od * op;
            let term = op.conjugate().kronecker(op) * C64::new(1.0, 0.0)
                - (id.kronecker(&odo) + odo.transpose().kronecker(&id)) * C64::new(0.5, 0.0);
            l += term * C64::new(rate, 0.0);
        };
        for j in &self.jumps {
            let mut op = DMatrix::zeros(k, k);
            op[(j.to, j.from)] = ONE;
            add_dissipator(&op, j.rate);
        }
        for d in &self.dephasing {
            let op = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                k,
                d.diagonal.iter().map(|&x| C64::new(x, 0.0)),
            ));
            add_dissipator(&op, d.rate);
        }
        l
    }
}

/// Scalar time dependence of one drive term.
#[derive(Clone)]
pub struct Envelope {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support: Option<(f64, f64)>,
    max_step: Option<f64>,
}

impl std::fmt::Debug for Envelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Envelope")
            .field("support", &self.support)
            .field("max_step", &self.max_step)
            .finish()
    }
}

impl Envelope {
    /// `f` must vanish outside `support` when one is given.
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, support: Option<(f64, f64)>) -> Self {
        Self {
            f: Arc::new(f),
            support,
            max_step: None,
        }
    }

    /// Cap the integrator step while this envelope is active.
    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = Some(h);
        self
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.support {
            Some((a, b)) if t < a || t > b => 0.0,
            _ => (self.f)(t),
        }
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    fn active(&self, t0: f64, t1: f64) -> bool {
        match self.support {
            None => true,
            Some((a, b)) => t1 > a && t0 < b,
        }
    }
}

/// `c(t) A` with `A` an ambient Hermitian operator.
#[derive(Clone, Debug)]
pub struct DriveTerm {
    pub op: Operator,
    pub envelope: Envelope,
}

/// Instantaneous unitary `U = exp(-i G)` applied to the interaction-picture
/// state at `time`; `G` is a Hermitian matrix in dressed coordinates.
#[derive(Clone, Debug)]
pub struct Kick {
    pub time: f64,
    pub generator: Operator,
}

/// Time-dependent Hamiltonian added to the system Hamiltonian.
#[derive(Clone, Debug, Default)]
pub struct Drive {
    pub terms: Vec<DriveTerm>,
    pub kicks: Vec<Kick>,
}

impl Drive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_term(&mut self, op: Operator, envelope: Envelope) {
        self.terms.push(DriveTerm { op, envelope });
    }

    pub fn add_kick(&mut self, time: f64, generator: Operator) {
        self.kicks.push(Kick { time, generator });
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.kicks.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub tolerances: Tolerances,
    /// Named ambient operators whose expectation values are recorded.
    pub observables: Vec<(String, Operator)>,
    pub check_positivity: bool,
    /// Keep the density matrix at every output time.
    pub keep_states: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            observables: Vec::new(),
            check_positivity: true,
            keep_states: true,
        }
    }
}

/// Sampled solution. States are dressed-coordinate density matrices in the
/// Schroedinger picture.
#[derive(Clone, Debug)]
pub struct Trajectory {
    times: Vec<f64>,
    energies: Vec<f64>,
    states: Vec<Operator>,
    observables: Vec<(String, Vec<f64>)>,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Operator] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &Operator {
        &self.states[i]
    }

    /// The state at output `i` in the frame rotating with the dressed energies.
    pub fn rotating_state(&self, i: usize) -> Operator {
        to_rotating(&self.states[i], &self.energies, self.times[i])
    }

    pub fn observables(&self) -> &[(String, Vec<f64>)] {
        &self.observables
    }

    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Append a derived series.
    pub fn push_observable(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.times.len() {
            return Err(Error::DimensionMismatch {
                expected: self.times.len(),
                got: values.len(),
            });
        }
        self.observables.push((name.into(), values));
        Ok(())
    }

    /// `t,obs1,obs2,...`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.observables.iter().map(|(n, _)| n.clone()));
        writeln!(w, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![crate::io::fmt_float(*t)];
            row.extend(self.observables.iter().map(|(_, v)| crate::io::fmt_float(v[i])));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Flattened real/imaginary dump of the state at output `i`.
    pub fn write_state_csv<W: std::io::Write>(&self, w: W, i: usize) -> std::io::Result<()> {
        crate::io::write_matrix_csv(w, self.states[i].matrix())
    }
}

fn phase_vector(energies: &[f64], t: f64) -> Vec<C64> {
    energies.iter().map(|&e| C64::from_polar(1.0, e * t)).collect()
}

/// `rho~_ij = rho_ij exp(i (E_i - E_j) t)`.
pub fn to_rotating(rho: &Operator, energies: &[f64], t: f64) -> Operator {
    let ph = phase_vector(energies, t);
    let m = DMatrix::from_fn(rho.dim(), rho.dim(), |i, j| rho.get(i, j) * ph[i] * ph[j].conj());
    Operator::from_matrix(m).expect("square")
}

pub fn from_rotating(rho: &Operator, energies: &[f64], t: f64) -> Operator {
    let ph = phase_vector(energies, t);
    let m = DMatrix::from_fn(rho.dim(), rho.dim(), |i, j| rho.get(i, j) * ph[i].conj() * ph[j]);
    Operator::from_matrix(m).expect("square")
}

/// `exp(-i G)` for Hermitian `G`.
pub fn unitary_from_generator(g: &Operator) -> Result<DMatrix<C64>> {
    g.ensure_hermitian()?;
    let sym = (g.matrix() + g.matrix().adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let ph = C64::from_polar(1.0, -l);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= ph;
        }
    }
    Ok(scaled * v.adjoint())
}

/// `tr(A B)`.
fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let k = a.nrows();
    let mut acc = ZERO;
    for i in 0..k {
        for l in 0..k {
            acc += a[(i, l)] * b[(l, i)];
        }
    }
    acc
}

fn min_eigenvalue(rho: &DMatrix<C64>) -> f64 {
    let sym = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn validate_density(rho: &Operator) -> Result<()> {
    rho.ensure_hermitian()?;
    let drift = (rho.trace() - ONE).norm();
    if drift > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "initial density matrix has trace defect {drift:.3e}"
        )));
    }
    let me = min_eigenvalue(rho.matrix());
    if me < -1e-9 {
        return Err(Error::InvalidParameter(format!(
            "initial density matrix has negative eigenvalue {me:.3e}"
        )));
    }
    Ok(())
}

struct DressedDrive {
    ops: Vec<DMatrix<C64>>,
    envelopes: Vec<Envelope>,
}

/// Integrate the master equation. `rho0` is given in dressed coordinates
/// (dimension `level_cap`) at time `t_grid[0]`; the trajectory is sampled at
/// every entry of `t_grid`.
pub fn evolve(
    generator: &LindbladGenerator,
    drive: Option<&Drive>,
    rho0: &Operator,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let k = generator.level_cap();
    rho0.check_dim(k)?;
    validate_density(rho0)?;
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("time grid is empty".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    let energies = generator.basis.energies().to_vec();
    let empty = Drive::default();
    let drive = drive.unwrap_or(&empty);

    let dressed = DressedDrive {
        ops: drive
            .terms
            .iter()
            .map(|d| {
                d.op.ensure_hermitian()?;
                generator.basis.project_operator(&d.op)
            })
            .collect::<Result<_>>()?,
        envelopes: drive.terms.iter().map(|d| d.envelope.clone()).collect(),
    };
    let mut kicks: Vec<(f64, DMatrix<C64>)> = drive
        .kicks
        .iter()
        .map(|kk| {
            kk.generator.check_dim(k)?;
            Ok((kk.time, unitary_from_generator(&kk.generator)?))
        })
        .collect::<Result<_>>()?;
    kicks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let observables: Vec<(String, DMatrix<C64>)> = opts
        .observables
        .iter()
        .map(|(n, a)| Ok((n.clone(), generator.basis.project_operator(a)?)))
        .collect::<Result<_>>()?;

    // breakpoints: output times, envelope support edges and kick times
    let t0 = t_grid[0];
    let t_end = *t_grid.last().unwrap();
    let mut breaks: Vec<f64> = t_grid.to_vec();
    for env in &dressed.envelopes {
        if let Some((a, b)) = env.support() {
            breaks.extend([a, b]);
        }
    }
    breaks.extend(kicks.iter().map(|kk| kk.0));
    breaks.retain(|&t| t >= t0 && t <= t_end);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut y: Vec<C64> = to_rotating(rho0, &energies, t0).matrix().as_slice().to_vec();
    let mut dp = Dopri5::new(opts.tolerances, k * k);
    let mut traj = Trajectory {
        times: Vec::with_capacity(t_grid.len()),
        energies: energies.clone(),
        states: Vec::new(),
        observables: observables.iter().map(|(n, _)| (n.clone(), Vec::new())).collect(),
        max_trace_drift: 0.0,
        min_eigenvalue: f64::INFINITY,
        stats: StepStats::default(),
    };

    let mut next_out = 0usize;
    let mut next_kick = 0usize;
    let mut h_work = DMatrix::<C64>::zeros(k, k);
    let record = |t: f64, y: &[C64], traj: &mut Trajectory| -> Result<()> {
        let rot = Operator::from_matrix(DMatrix::from_column_slice(k, k, y)).expect("square");
        let rho = from_rotating(&rot, &energies, t);
        let drift = (rho.trace() - ONE).norm();
        traj.max_trace_drift = traj.max_trace_drift.max(drift);
        if drift > TRACE_TOL {
            return Err(Error::TraceDrift { t, drift });
        }
        if opts.check_positivity {
            let me = min_eigenvalue(rho.matrix());
            traj.min_eigenvalue = traj.min_eigenvalue.min(me);
            if me < -POSITIVITY_TOL {
                return Err(Error::Positivity { t, min_eig: me });
            }
        }
        for (slot, (_, a)) in traj.observables.iter_mut().zip(&observables) {
            slot.1.push(trace_product(rho.matrix(), a).re);
        }
        traj.times.push(t);
        if opts.keep_states {
            traj.states.push(rho);
        }
        Ok(())
    };

    let apply_kicks = |t: f64, y: &mut Vec<C64>, next_kick: &mut usize| {
        while *next_kick < kicks.len() && kicks[*next_kick].0 <= t {
            let u = &kicks[*next_kick].1;
            let r = DMatrix::from_column_slice(k, k, y);
            let r = u * r * u.adjoint();
            y.copy_from_slice(r.as_slice());
            *next_kick += 1;
        }
    };

    for (bi, &tb) in breaks.iter().enumerate() {
        if bi > 0 {
            let ta = breaks[bi - 1];
            let active: Vec<usize> = (0..dressed.envelopes.len())
                .filter(|&i| dressed.envelopes[i].active(ta, tb))
                .collect();
            let max_step = active
                .iter()
                .filter_map(|&i| dressed.envelopes[i].max_step)
                .fold(f64::INFINITY, f64::min);
            let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
                rhs_rotating(generator, &dressed, &active, &energies, &mut h_work, t, y, dy);
            };
            dp.integrate(rhs, ta, tb, &mut y, max_step)?;
        }
        apply_kicks(tb, &mut y, &mut next_kick);
        if next_out < t_grid.len() && t_grid[next_out] == tb {
            record(tb, &y, &mut traj)?;
            next_out += 1;
        }
    }
    traj.stats = dp.stats;
    Ok(traj)
}

#[allow(clippy::too_many_arguments)]
fn rhs_rotating(
    g: &LindbladGenerator,
    drive: &DressedDrive,
    active: &[usize],
    energies: &[f64],
    h: &mut DMatrix<C64>,
    t: f64,
    y: &[C64],
    dy: &mut [C64],
) {
    let k = energies.len();
    // dissipation: diagonal in the interaction picture
    for j in 0..k {
        for i in 0..k {
            dy[i + k * j] = y[i + k * j] * (-g.damping[(i, j)]);
        }
    }
    for m in 0..k {
        let mut gain = 0.0;
        for n in 0..k {
            gain += g.inflow[(m, n)] * y[n + k * n].re;
        }
        dy[m + k * m] += gain;
    }
    let mut any = false;
    h.fill(ZERO);
    for &a in active {
        let c = drive.envelopes[a].value(t);
        if c == 0.0 {
            continue;
        }
        any = true;
        let op = &drive.ops[a];
        for j in 0..k {
            for i in 0..k {
                h[(i, j)] += op[(i, j)] * c;
            }
        }
    }
    if !any {
        return;
    }
    let ph = phase_vector(energies, t);
    for j in 0..k {
        for i in 0..k {
            h[(i, j)] *= ph[i] * ph[j].conj();
        }
    }
    // -i [H, rho]
    for j in 0..k {
        for i in 0..k {
            let mut acc = ZERO;
            for l in 0..k {
                acc += h[(i, l)] * y[l + k * j] - y[i + k * l] * h[(l, j)];
            }
            dy[i + k * j] += C64::new(acc.im, -acc.re);
        }
    }
}
