//! Write-in and read-out of a flying qubit through a polarized-state memory.
//!
//! The atom carries an auxiliary level `s` that does not couple to the
//! cavity. A qubit `a|s,0> + b|s,1>` is transferred into the polarized pair
//! by two pi-pulses:
//!
//! * `p1` on `|s,1> <-> |P_->` through `sigma_gs = |g><s|`,
//! * `p2` on `|s,0> <-> |P_+>` through `sigma_es = |e><s|`,
//!
//! each normalized by its dressed matrix element so that the resonant
//! coupling is the bare envelope. Retrieval applies the same two pulses in
//! reverse order (`p2`-type first), which keeps the `p2` carrier away from
//! `|s,1>` while that level is still empty.
//!
//! Fidelities are evaluated in the frame rotating with the dressed
//! energies, on the two labelled levels of each logical subspace.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dd_filter::quadrature::adaptive;
use crate::error::{Error, Result};
use crate::hilbert::{fock_state, make_operators, product_state, AtomLevel, Operator, SpaceSpec, C64, ONE, ZERO};
use crate::io::fmt_float;
use crate::lindblad::{build_generator, evolve, Drive, Envelope, EvolveOptions, LindbladGenerator, NoiseChannel, Trajectory};
use crate::rabi_model::{diagonalize, polarized_states, BasisChoice, ModelParams, Spectrum};

/// Minimum overlap accepted when labelling a level.
pub const LABEL_GATE: f64 = 0.9;
/// Smallest drivable dressed matrix element.
pub const MIN_MATRIX_ELEMENT: f64 = 1e-6;
/// Gaussian envelopes are cut at this many widths from the center.
pub const ENVELOPE_CUT: f64 = 4.0;

/// Labelled dressed levels with their squared overlaps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelLabels {
    pub p_minus: (usize, f64),
    pub p_plus: (usize, f64),
    pub s0: (usize, f64),
    pub s1: (usize, f64),
}

/// Assign the dressed levels closest to `|P_->`, `|P_+>`, `|s,0>`, `|s,1>`.
pub fn resolve_transitions(spectrum: &Spectrum) -> Result<LevelLabels> {
    let space = spectrum.space;
    if !space.has_auxiliary() {
        return Err(Error::InvalidSpace("labelling requires the auxiliary level".into()));
    }
    let (pm, pp) = polarized_states(&space, &spectrum.params, spectrum.choice)?;
    let s_amp = [ZERO, ZERO, ONE];
    let s0 = product_state(&space, &s_amp, &fock_state(&space, 0)?)?;
    let s1 = product_state(&space, &s_amp, &fock_state(&space, 1)?)?;
    let basis = &spectrum.basis;
    let best = |target: &crate::hilbert::StateVector, name: &str| -> Result<(usize, f64)> {
        let coords = basis.project_state(target)?;
        let (i, ov) = coords
            .iter()
            .map(|z| z.norm_sqr())
            .enumerate()
            .fold((0, -1.0), |acc, (i, o)| if o > acc.1 { (i, o) } else { acc });
        if ov < LABEL_GATE {
            return Err(Error::Labeling(format!(
                "best overlap of {name} is {ov:.4} at level {i}, below the {LABEL_GATE} gate"
            )));
        }
        Ok((i, ov))
    };
    let labels = LevelLabels {
        p_minus: best(&pm, "P_-")?,
        p_plus: best(&pp, "P_+")?,
        s0: best(&s0, "|s,0>")?,
        s1: best(&s1, "|s,1>")?,
    };
    let idx = [labels.p_minus.0, labels.p_plus.0, labels.s0.0, labels.s1.0];
    for i in 0..4 {
        for j in 0..i {
            if idx[i] == idx[j] {
                return Err(Error::Labeling(format!("two labels share dressed level {}", idx[i])));
            }
        }
    }
    Ok(labels)
}

/// Atomic ladder operator used by a pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PulseOperator {
    /// `|g><s|`.
    Gs,
    /// `|e><s|`.
    Es,
}

impl PulseOperator {
    fn lowering(&self, space: &SpaceSpec) -> Operator {
        let ops = make_operators(space);
        match self {
            Self::Gs => ops.sigma_gs,
            Self::Es => ops.sigma_es,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gs => "sigma_gs",
            Self::Es => "sigma_es",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSpec {
    /// `(m, n)`: the pulse is normalized by `<m|sigma|n>`.
    pub transition: (usize, usize),
    pub operator: PulseOperator,
    pub center: f64,
    pub width: f64,
    pub area: f64,
}

/// A pulse resolved against a dressed basis.
#[derive(Clone, Debug)]
pub struct CalibratedPulse {
    pub spec: PulseSpec,
    pub carrier: f64,
    pub matrix_element: C64,
    /// Peak of the envelope.
    pub amplitude: f64,
    /// `(e^{-i phi} sigma + e^{i phi} sigma^dag) / |<m|sigma|n>|`, `phi = arg <m|sigma|n>`.
    pub operator: Operator,
}

/// `int_{-c}^{c} exp(-u^2/2) du` for the envelope cut `c`.
fn truncated_gaussian_norm() -> f64 {
    adaptive(&|u: f64| (-0.5 * u * u).exp(), -ENVELOPE_CUT, ENVELOPE_CUT, 1e-13, 30)
        .map(|e| e.value)
        .unwrap_or((2.0 * PI).sqrt())
}

/// Resolve carrier, normalization and amplitude of a Gaussian pulse.
pub fn pulse_hamiltonian(spec: &PulseSpec, spectrum: &Spectrum) -> Result<CalibratedPulse> {
    let (m, n) = spec.transition;
    let basis = &spectrum.basis;
    if m >= basis.len() || n >= basis.len() || m == n {
        return Err(Error::InvalidParameter(format!("invalid transition ({m}, {n})")));
    }
    if !(spec.area > 0.0 && spec.area.is_finite()) {
        return Err(Error::InvalidParameter("pulse area must be positive".into()));
    }
    if !(spec.width > 0.0 && spec.width.is_finite()) {
        return Err(Error::InvalidParameter("pulse width must be positive".into()));
    }
    let carrier = basis.omega(m, n).abs();
    if spec.width < 2.0 * PI / carrier {
        return Err(Error::InvalidParameter(format!(
            "pulse width {} is below one carrier period 2pi/{carrier:.4}",
            spec.width
        )));
    }
    let sigma = spec.operator.lowering(&spectrum.space);
    let element = sigma.sandwich(&basis.state(m), &basis.state(n));
    if element.norm() <= MIN_MATRIX_ELEMENT {
        return Err(Error::Undrivable { m, n, element: element.norm() });
    }
    let phase = element / element.norm();
    let op = &(&(&sigma * phase.conj()) + &(&sigma.adjoint() * phase)) * (1.0 / element.norm());
    let amplitude = spec.area / (spec.width * truncated_gaussian_norm());
    Ok(CalibratedPulse {
        spec: *spec,
        carrier,
        matrix_element: element,
        amplitude,
        operator: op,
    })
}

impl CalibratedPulse {
    pub fn window(&self) -> (f64, f64) {
        let h = ENVELOPE_CUT * self.spec.width;
        (self.spec.center - h, self.spec.center + h)
    }

    /// `eps(t) cos(w t)` restricted to the envelope window.
    pub fn envelope(&self) -> Envelope {
        let (t0, s, a, w) = (self.spec.center, self.spec.width, self.amplitude, self.carrier);
        Envelope::new(
            move |t| a * (-(t - t0).powi(2) / (2.0 * s * s)).exp() * (w * t).cos(),
            Some(self.window()),
        )
        .with_max_step(s / 2.0)
    }

    /// Rotating-wave limit: `(area/2)(|m><n| + |n><m|)` in dressed coordinates.
    pub fn ideal_generator(&self, level_cap: usize) -> Result<Operator> {
        let (m, n) = self.spec.transition;
        if m >= level_cap || n >= level_cap {
            return Err(Error::InvalidParameter(format!(
                "transition ({m}, {n}) lies outside the {level_cap} retained levels"
            )));
        }
        let mut g = DMatrix::zeros(level_cap, level_cap);
        g[(m, n)] = C64::new(self.spec.area / 2.0, 0.0);
        g[(n, m)] = C64::new(self.spec.area / 2.0, 0.0);
        Operator::from_matrix(g)
    }
}

/// How pulses enter the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PulseShape {
    /// Finite Gaussian envelopes on the full (non-RWA) pulse Hamiltonian.
    Gaussian,
    /// Instantaneous resonant rotations at the pulse centers.
    Ideal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolRates {
    pub gamma_atomic: f64,
    pub gamma_phi_atomic: f64,
    pub gamma_cavity: f64,
    pub gamma_phi_cavity: f64,
    pub gamma_se: f64,
    /// Dephasing of the auxiliary level at `gamma_phi_atomic`.
    pub s_dephasing: bool,
    pub temperature: f64,
}

impl Default for ProtocolRates {
    fn default() -> Self {
        Self {
            gamma_atomic: 1e-3,
            gamma_phi_atomic: 1e-6,
            gamma_cavity: 1e-5,
            gamma_phi_cavity: 1e-8,
            gamma_se: 1e-5,
            s_dephasing: true,
            temperature: 0.0,
        }
    }
}

impl ProtocolRates {
    pub fn zero() -> Self {
        Self {
            gamma_atomic: 0.0,
            gamma_phi_atomic: 0.0,
            gamma_cavity: 0.0,
            gamma_phi_cavity: 0.0,
            gamma_se: 0.0,
            s_dephasing: false,
            temperature: 0.0,
        }
    }

    /// Dephasing raised to the relaxation rates (no decoupling).
    pub fn without_decoupling(mut self) -> Self {
        self.gamma_phi_atomic = self.gamma_atomic;
        self.gamma_phi_cavity = self.gamma_cavity;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeDecayConfig {
    pub lambda: f64,
    pub n_fock: usize,
    pub level_cap: usize,
}

impl Default for FreeDecayConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            n_fock: 8,
            level_cap: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub model: ModelParams,
    pub n_fock: usize,
    pub level_cap: usize,
    pub rates: ProtocolRates,
    /// Input qubit `(a, b)` for `a|s,0> + b|s,1>`.
    pub amplitudes: (C64, C64),
    /// Rate converting the schedule `gamma t` into times.
    pub clock_rate: f64,
    /// Pulse centers in units of `clock_rate * t`.
    pub schedule: [f64; 4],
    pub pulse_width: f64,
    pub pulse_area: f64,
    pub pulse_shape: PulseShape,
    pub include_retrieval: bool,
    /// End of the sampled trace in units of `clock_rate * t`.
    pub t_end: f64,
    pub samples: usize,
    pub free_decay: FreeDecayConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            model: ModelParams {
                omega_c: 1.0,
                epsilon: 0.01,
                delta: 0.2,
                lambda: 1.3,
                lambda_drive: 0.0,
                omega_s: 1.7,
            },
            n_fock: 40,
            level_cap: 20,
            rates: ProtocolRates::default(),
            amplitudes: (C64::new(0.8f64.sqrt(), 0.0), C64::new(0.2f64.sqrt(), 0.0)),
            clock_rate: 1e-5,
            schedule: [7e-4, 14e-4, 2.7e-2, 2.76e-2],
            pulse_width: 16.0,
            pulse_area: PI,
            pulse_shape: PulseShape::Gaussian,
            include_retrieval: true,
            t_end: 2.9e-2,
            samples: 291,
            free_decay: FreeDecayConfig::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let (a, b) = self.amplitudes;
        if ((a.norm_sqr() + b.norm_sqr()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("|a|^2 + |b|^2 must equal 1".into()));
        }
        if self.schedule.windows(2).any(|w| !(w[1] > w[0])) || self.schedule[0] < 0.0 {
            return Err(Error::InvalidParameter("pulse schedule must be strictly increasing".into()));
        }
        if !(self.clock_rate > 0.0) {
            return Err(Error::InvalidParameter("clock rate must be positive".into()));
        }
        if self.samples < 2 || !(self.t_end > 0.0) {
            return Err(Error::InvalidParameter("trace needs t_end > 0 and at least 2 samples".into()));
        }
        let r = &self.rates;
        for v in [r.gamma_atomic, r.gamma_phi_atomic, r.gamma_cavity, r.gamma_phi_cavity, r.gamma_se, r.temperature] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter("rates must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn pulse_times(&self) -> [f64; 4] {
        self.schedule.map(|g| g / self.clock_rate)
    }

    /// End of the storage stage: last sample of the second pulse.
    pub fn storage_done(&self) -> f64 {
        let t = self.pulse_times()[1];
        match self.pulse_shape {
            PulseShape::Gaussian => t + ENVELOPE_CUT * self.pulse_width,
            PulseShape::Ideal => t,
        }
    }

    pub fn retrieval_done(&self) -> f64 {
        let t = self.pulse_times()[3];
        match self.pulse_shape {
            PulseShape::Gaussian => t + ENVELOPE_CUT * self.pulse_width,
            PulseShape::Ideal => t,
        }
    }
}

/// Everything needed to integrate one protocol run.
#[derive(Clone, Debug)]
pub struct PreparedProtocol {
    pub space: SpaceSpec,
    pub spectrum: Spectrum,
    pub labels: LevelLabels,
    pub pulses: Vec<CalibratedPulse>,
    pub generator: LindbladGenerator,
}

/// Channels for the three-level model: atomic Paulis, cavity quadratures,
/// `|s> <-> |e>` decay and auxiliary-level dephasing.
pub fn protocol_channels(space: &SpaceSpec, rates: &ProtocolRates) -> Result<Vec<NoiseChannel>> {
    let ops = make_operators(space);
    let mut ch = vec![
        NoiseChannel::new("sx", ops.sigma_x.clone(), rates.gamma_atomic, rates.gamma_phi_atomic)?,
        NoiseChannel::new("sy", ops.sigma_y.clone(), rates.gamma_atomic, rates.gamma_phi_atomic)?,
        NoiseChannel::new("sz", ops.sigma_z.clone(), rates.gamma_atomic, rates.gamma_phi_atomic)?,
        NoiseChannel::new("X", ops.x.clone(), rates.gamma_cavity, rates.gamma_phi_cavity)?,
        NoiseChannel::new("Y", ops.y.clone(), rates.gamma_cavity, rates.gamma_phi_cavity)?,
    ];
    if space.has_auxiliary() {
        let se = &ops.sigma_es + &ops.sigma_es.adjoint();
        ch.push(NoiseChannel::new("se", se, rates.gamma_se, 0.0)?);
        if rates.s_dephasing {
            ch.push(NoiseChannel::new("s", ops.projector_s.clone(), 0.0, rates.gamma_phi_atomic)?);
        }
    }
    Ok(ch)
}

pub fn prepare(cfg: &ProtocolConfig) -> Result<PreparedProtocol> {
    cfg.validate()?;
    let space = SpaceSpec::new(cfg.n_fock, 3)?;
    let spectrum = diagonalize(&space, &cfg.model, BasisChoice::DiagonalAtom)?;
    let labels = resolve_transitions(&spectrum)?;
    for (name, (i, _)) in [("P_-", labels.p_minus), ("P_+", labels.p_plus), ("|s,0>", labels.s0), ("|s,1>", labels.s1)] {
        if i >= cfg.level_cap {
            return Err(Error::InvalidParameter(format!(
                "{name} is dressed level {i}, outside level_cap = {}",
                cfg.level_cap
            )));
        }
    }
    let [t1, t2, t3, t4] = cfg.pulse_times();
    let spec = |transition, operator, center| PulseSpec {
        transition,
        operator,
        center,
        width: cfg.pulse_width,
        area: cfg.pulse_area,
    };
    let to_pm = (labels.p_minus.0, labels.s1.0);
    let to_pp = (labels.p_plus.0, labels.s0.0);
    let mut specs = vec![spec(to_pm, PulseOperator::Gs, t1), spec(to_pp, PulseOperator::Es, t2)];
    if cfg.include_retrieval {
        specs.push(spec(to_pp, PulseOperator::Es, t3));
        specs.push(spec(to_pm, PulseOperator::Gs, t4));
    }
    let pulses = specs
        .iter()
        .map(|s| pulse_hamiltonian(s, &spectrum))
        .collect::<Result<Vec<_>>>()?;
    let channels = protocol_channels(&space, &cfg.rates)?;
    let generator = build_generator(&spectrum.basis, &channels, cfg.rates.temperature, cfg.level_cap)?;
    Ok(PreparedProtocol {
        space,
        spectrum,
        labels,
        pulses,
        generator,
    })
}

impl PreparedProtocol {
    pub fn drive(&self, shape: PulseShape) -> Result<Drive> {
        let mut d = Drive::new();
        for p in &self.pulses {
            match shape {
                PulseShape::Gaussian => d.add_term(p.operator.clone(), p.envelope()),
                PulseShape::Ideal => d.add_kick(p.spec.center, p.ideal_generator(self.generator.level_cap())?),
            }
        }
        Ok(d)
    }

    /// `|psi><psi|` for `psi = a|s,0> + b|s,1>` in dressed coordinates.
    pub fn initial_state(&self, amplitudes: (C64, C64)) -> Operator {
        let k = self.generator.level_cap();
        let mut v = nalgebra::DVector::zeros(k);
        v[self.labels.s0.0] = amplitudes.0;
        v[self.labels.s1.0] = amplitudes.1;
        Operator::from_matrix(&v * v.adjoint()).expect("square")
    }
}

/// Fidelity of a rotating-frame state with `x0|i0> + x1|i1>` on the
/// two-level subspace `{i0, i1}`: `(renormalized, unnormalized)`.
pub fn subspace_fidelity(rho: &Operator, i0: usize, i1: usize, x0: C64, x1: C64) -> (f64, f64) {
    let r = |i, j| rho.get(i, j);
    let raw = (x0.conj() * r(i0, i0) * x0 + x0.conj() * r(i0, i1) * x1 + x1.conj() * r(i1, i0) * x0
        + x1.conj() * r(i1, i1) * x1)
        .re;
    let tr = r(i0, i0).re + r(i1, i1).re;
    let f = if tr > 1e-12 { raw / tr } else { 0.0 };
    (f.clamp(0.0, 1.0), raw.clamp(0.0, 1.0))
}

#[derive(Clone, Debug)]
pub struct FidelityTrace {
    pub times: Vec<f64>,
    pub clock_rate: f64,
    pub f_s: Vec<f64>,
    pub f_p: Vec<f64>,
    pub f_s_raw: Vec<f64>,
    pub f_p_raw: Vec<f64>,
    pub f_free: Vec<f64>,
    /// `F_P` once the second pulse has ended.
    pub storage_fidelity: f64,
    /// Population outside `{P_-, P_+}` at the same time.
    pub storage_leakage: f64,
    /// `F_s` once the last pulse has ended (`None` without retrieval).
    pub retrieval_fidelity: Option<f64>,
    pub retrieval_fidelity_raw: Option<f64>,
    pub labels: LevelLabels,
    pub pulses: Vec<CalibratedPulse>,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
    pub warnings: Vec<String>,
}

impl FidelityTrace {
    pub fn gamma_t(&self) -> Vec<f64> {
        self.times.iter().map(|t| t * self.clock_rate).collect()
    }

    /// Linear interpolation of a series at time `t`.
    pub fn interpolate(&self, series: &[f64], t: f64) -> Option<f64> {
        interpolate(&self.times, series, t)
    }

    /// `gamma_c_t,F_s,F_P,F_free`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "gamma_c_t,F_s,F_P,F_free")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_float(self.times[i] * self.clock_rate),
                fmt_float(self.f_s[i]),
                fmt_float(self.f_p[i]),
                fmt_float(self.f_free[i])
            )?;
        }
        Ok(())
    }

    /// Key/value diagnostics for a run manifest.
    pub fn manifest(&self) -> Vec<(String, String)> {
        let mut m = Vec::new();
        let l = &self.labels;
        for (name, (i, ov)) in [("P_minus", l.p_minus), ("P_plus", l.p_plus), ("s0", l.s0), ("s1", l.s1)] {
            m.push((format!("label.{name}.level"), i.to_string()));
            m.push((format!("label.{name}.overlap"), fmt_float(ov)));
        }
        for (k, p) in self.pulses.iter().enumerate() {
            let key = format!("pulse{}", k + 1);
            m.push((format!("{key}.transition"), format!("{}-{}", p.spec.transition.0, p.spec.transition.1)));
            m.push((format!("{key}.operator"), p.spec.operator.name().into()));
            m.push((format!("{key}.center"), fmt_float(p.spec.center)));
            m.push((format!("{key}.width"), fmt_float(p.spec.width)));
            m.push((format!("{key}.area"), fmt_float(p.spec.area)));
            m.push((format!("{key}.carrier"), fmt_float(p.carrier)));
            m.push((format!("{key}.matrix_element"), format!("{}{:+}i", fmt_float(p.matrix_element.re), p.matrix_element.im)));
            m.push((format!("{key}.amplitude"), fmt_float(p.amplitude)));
        }
        m.push(("storage_fidelity".into(), fmt_float(self.storage_fidelity)));
        m.push(("storage_leakage".into(), fmt_float(self.storage_leakage)));
        if let Some(f) = self.retrieval_fidelity {
            m.push(("retrieval_fidelity".into(), fmt_float(f)));
        }
        m.push(("max_trace_drift".into(), fmt_float(self.max_trace_drift)));
        m.push(("min_eigenvalue".into(), fmt_float(self.min_eigenvalue)));
        m
    }
}

fn interpolate(times: &[f64], series: &[f64], t: f64) -> Option<f64> {
    if times.is_empty() || t < times[0] || t > *times.last()? {
        return None;
    }
    let i = times.partition_point(|&x| x < t);
    if i < times.len() && times[i] == t {
        return Some(series[i]);
    }
    let (t0, t1) = (times[i - 1], times[i]);
    let w = (t - t0) / (t1 - t0);
    Some(series[i - 1] * (1.0 - w) + series[i] * w)
}

/// First time at which `series` falls below `threshold`, by linear
/// interpolation between samples.
pub fn time_to_threshold(times: &[f64], series: &[f64], threshold: f64) -> Option<f64> {
    for i in 1..series.len() {
        if series[i] < threshold && series[i - 1] >= threshold {
            let w = (series[i - 1] - threshold) / (series[i - 1] - series[i]);
            return Some(times[i - 1] + w * (times[i] - times[i - 1]));
        }
    }
    None
}

fn sample_grid(cfg: &ProtocolConfig, extra: &[f64]) -> Vec<f64> {
    let t_end = cfg.t_end / cfg.clock_rate;
    let mut g: Vec<f64> = (0..cfg.samples).map(|i| t_end * i as f64 / (cfg.samples - 1) as f64).collect();
    g.extend(extra.iter().copied().filter(|&t| t >= 0.0 && t <= t_end));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    g
}

fn protocol_trajectory(prep: &PreparedProtocol, cfg: &ProtocolConfig, times: &[f64]) -> Result<Trajectory> {
    let drive = prep.drive(cfg.pulse_shape)?;
    let rho0 = prep.initial_state(cfg.amplitudes);
    let opts = EvolveOptions {
        keep_states: true,
        ..Default::default()
    };
    evolve(&prep.generator, Some(&drive), &rho0, times, &opts)
}

/// Weak-coupling comparison: the lowest pair of a two-level atom at
/// `lambda = free.lambda`, without decoupling, encoding `a` on the ground level.
pub fn free_decay(cfg: &ProtocolConfig, times: &[f64]) -> Result<Vec<f64>> {
    let fd = cfg.free_decay;
    let space = SpaceSpec::new(fd.n_fock, 2)?;
    let p = ModelParams { lambda: fd.lambda, ..cfg.model };
    let spectrum = diagonalize(&space, &p, BasisChoice::DiagonalAtom)?;
    let rates = cfg.rates.without_decoupling();
    let channels = protocol_channels(&space, &rates)?;
    let gen = build_generator(&spectrum.basis, &channels, rates.temperature, fd.level_cap.min(space.dim()))?;
    let k = gen.level_cap();
    let (a, b) = cfg.amplitudes;
    let mut v = nalgebra::DVector::zeros(k);
    v[0] = a;
    v[1] = b;
    let rho0 = Operator::from_matrix(&v * v.adjoint()).expect("square");
    let opts = EvolveOptions {
        keep_states: true,
        ..Default::default()
    };
    let tr = evolve(&gen, None, &rho0, times, &opts)?;
    Ok((0..times.len())
        .map(|i| subspace_fidelity(&tr.rotating_state(i), 0, 1, a, b).0)
        .collect())
}

/// Full protocol run with the free-decay comparison evaluated in parallel.
pub fn run_protocol(cfg: &ProtocolConfig) -> Result<FidelityTrace> {
    let prep = prepare(cfg)?;
    let mut key_times = vec![cfg.storage_done()];
    if cfg.include_retrieval {
        key_times.push(cfg.retrieval_done());
    }
    let times = sample_grid(cfg, &key_times);
    let (traj, free) = rayon::join(
        || protocol_trajectory(&prep, cfg, &times),
        || free_decay(cfg, &times),
    );
    let traj = traj?;
    let f_free = free?;
    let (a, b) = cfg.amplitudes;
    let l = prep.labels;
    let mut f_s = Vec::with_capacity(times.len());
    let mut f_p = Vec::with_capacity(times.len());
    let mut f_s_raw = Vec::with_capacity(times.len());
    let mut f_p_raw = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let rot = traj.rotating_state(i);
        let (fs, fs_raw) = subspace_fidelity(&rot, l.s0.0, l.s1.0, a, b);
        let (fp, fp_raw) = subspace_fidelity(&rot, l.p_plus.0, l.p_minus.0, a, b);
        f_s.push(fs);
        f_s_raw.push(fs_raw);
        f_p.push(fp);
        f_p_raw.push(fp_raw);
    }
    let at = |t: f64| times.iter().position(|&x| (x - t).abs() < 1e-9);
    let i_store = at(cfg.storage_done()).ok_or_else(|| Error::InvalidParameter("storage time outside trace".into()))?;
    let rho_store = traj.state(i_store);
    let storage_leakage = 1.0 - rho_store.get(l.p_minus.0, l.p_minus.0).re - rho_store.get(l.p_plus.0, l.p_plus.0).re;
    let (retrieval_fidelity, retrieval_fidelity_raw) = if cfg.include_retrieval {
        match at(cfg.retrieval_done()) {
            Some(i) => (Some(f_s[i]), Some(f_s_raw[i])),
            None => (None, None),
        }
    } else {
        (None, None)
    };
    Ok(FidelityTrace {
        storage_fidelity: f_p[i_store],
        storage_leakage,
        retrieval_fidelity,
        retrieval_fidelity_raw,
        times,
        clock_rate: cfg.clock_rate,
        f_s,
        f_p,
        f_s_raw,
        f_p_raw,
        f_free,
        labels: l,
        pulses: prep.pulses,
        max_trace_drift: traj.max_trace_drift,
        min_eigenvalue: traj.min_eigenvalue,
        warnings: prep.generator.warnings().to_vec(),
    })
}

/// Storage-only run evolved to `t_max`; returns the times and `F_P`.
pub fn storage_decay(cfg: &ProtocolConfig, t_max: f64, samples: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut c = cfg.clone();
    c.include_retrieval = false;
    let prep = prepare(&c)?;
    let t0 = c.storage_done();
    if !(t_max > t0) || samples < 2 {
        return Err(Error::InvalidParameter("t_max must exceed the end of storage".into()));
    }
    let mut times = vec![0.0];
    times.extend((0..samples).map(|i| t0 + (t_max - t0) * i as f64 / (samples - 1) as f64));
    let tr = protocol_trajectory(&prep, &c, &times)?;
    let (a, b) = c.amplitudes;
    let l = prep.labels;
    let fp = (1..times.len())
        .map(|i| subspace_fidelity(&tr.rotating_state(i), l.p_plus.0, l.p_minus.0, a, b).0)
        .collect();
    Ok((times[1..].to_vec(), fp))
}

/// Memory and free-decay times for the fidelity to drop below `threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemoryAdvantage {
    /// Time after the end of storage; `None` when not reached by `t_max`.
    pub memory_time: Option<f64>,
    pub t_max: f64,
    pub free_time: Option<f64>,
}

impl MemoryAdvantage {
    /// Ratio, using `t_max` as a lower bound when the memory never crossed.
    pub fn ratio_lower_bound(&self) -> Option<f64> {
        let free = self.free_time?;
        Some(self.memory_time.unwrap_or(self.t_max) / free)
    }
}

pub fn memory_advantage(cfg: &ProtocolConfig, threshold: f64, t_max: f64, free_t_max: f64) -> Result<MemoryAdvantage> {
    let (mem, free) = rayon::join(
        || storage_decay(cfg, t_max, 401),
        || {
            let times: Vec<f64> = (0..=800).map(|i| free_t_max * i as f64 / 800.0).collect();
            free_decay(cfg, &times).map(|f| (times, f))
        },
    );
    let (mt, mf) = mem?;
    let (ft, ff) = free?;
    let t0 = mt[0];
    Ok(MemoryAdvantage {
        memory_time: time_to_threshold(&mt, &mf, threshold).map(|t| t - t0),
        t_max: t_max - t0,
        free_time: time_to_threshold(&ft, &ff, threshold),
    })
}

/// Stored-coherence loss after `hold` time units for the default rates
/// and for rates without decoupling: `(default_loss, no_dd_loss)`.
pub fn decoupling_comparison(cfg: &ProtocolConfig, hold: f64) -> Result<(f64, f64)> {
    let no_dd = ProtocolConfig {
        rates: cfg.rates.without_decoupling(),
        ..cfg.clone()
    };
    let run = |c: &ProtocolConfig| -> Result<f64> {
        let (t, f) = storage_decay(c, c.storage_done() + hold, 2)?;
        debug_assert_eq!(t.len(), 2);
        Ok(f[0] - f[1])
    };
    let pair: Vec<Result<f64>> = [cfg, &no_dd].par_iter().map(|c| run(c)).collect();
    let mut it = pair.into_iter();
    Ok((it.next().unwrap()?, it.next().unwrap()?))
}

/// One operator entry of the auxiliary-level admissibility report.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryEntry {
    pub name: String,
    /// `|<ge_+|O|ge_->|`.
    pub main_element: f64,
    /// Largest element of the `s`-involving part of `O` between the
    /// `ge_+-`, `es_+-` and `gs_+-` combinations.
    pub worst_auxiliary: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryReport {
    pub entries: Vec<AuxiliaryEntry>,
    pub omega_s_over_omega_q: f64,
    pub omega_s_over_gap: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Admissibility of the auxiliary level: for each 3x3 atomic operator the
/// `s`-involving matrix elements must stay below `10%` of the element
/// between `(|g> +- |e>)/sqrt2`, and the `s` frequency must sit well above
/// the qubit transition.
pub fn check_auxiliary_conditions(spectrum: &Spectrum, sigma_ops: &[(String, DMatrix<C64>)]) -> Result<AuxiliaryReport> {
    if !spectrum.space.has_auxiliary() {
        return Err(Error::InvalidSpace("auxiliary check requires n_atom = 3".into()));
    }
    let threshold = 0.1;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let combo = |i: usize, j: usize, sign: f64| {
        let mut v = nalgebra::DVector::<C64>::zeros(3);
        v[i] = C64::new(r, 0.0);
        v[j] = C64::new(sign * r, 0.0);
        v
    };
    let (g, e, s) = (AtomLevel::G as usize, AtomLevel::E as usize, AtomLevel::S as usize);
    let states = [
        combo(g, e, 1.0),
        combo(g, e, -1.0),
        combo(e, s, 1.0),
        combo(e, s, -1.0),
        combo(g, s, 1.0),
        combo(g, s, -1.0),
    ];
    let mut p_ge = DMatrix::<C64>::zeros(3, 3);
    p_ge[(g, g)] = ONE;
    p_ge[(e, e)] = ONE;
    let mut entries = Vec::new();
    for (name, o) in sigma_ops {
        if o.nrows() != 3 || o.ncols() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: o.nrows() });
        }
        let main = states[0].dotc(&(o * &states[1])).norm();
        let aux_part = o - &p_ge * o * &p_ge;
        let mut worst: f64 = 0.0;
        for x in &states {
            for y in &states {
                worst = worst.max(x.dotc(&(&aux_part * y)).norm());
            }
        }
        let ratio = if main > 0.0 {
            worst / main
        } else if worst > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        entries.push(AuxiliaryEntry {
            name: name.clone(),
            main_element: main,
            worst_auxiliary: worst,
            ratio,
            pass: ratio < threshold,
        });
    }
    let p = &spectrum.params;
    let gap = spectrum.gap();
    Ok(AuxiliaryReport {
        pass: entries.iter().all(|e| e.pass),
        entries,
        omega_s_over_omega_q: p.omega_s / p.omega_q(),
        omega_s_over_gap: p.omega_s / gap,
        threshold,
    })
}

/// The three atomic Pauli operators of the model, padded for `s`.
pub fn model_atomic_operators() -> Vec<(String, DMatrix<C64>)> {
    let [sx, sy, sz] = crate::hilbert::atomic_paulis(3);
    vec![("sx".into(), sx), ("sy".into(), sy), ("sz".into(), sz)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level_spectrum(split: f64) -> Spectrum {
        // an isolated transition: atom with |s> at `split`, no coupling
        let space = SpaceSpec::new(2, 3).unwrap();
        let p = ModelParams { epsilon: 0.0, delta: 0.0, lambda: 0.0, omega_s: split, omega_c: 10.0, ..Default::default() };
        crate::rabi_model::diagonalize(&space, &p, BasisChoice::Bare).unwrap()
    }

    fn rabi_transfer(area: f64) -> f64 {
        let spec = two_level_spectrum(2.0);
        // levels: 0 = |g,0>, 1 = |e,0>, 2 = |s,0> (all at 0 except s)
        let m = (0..spec.basis.len()).find(|&i| spec.basis.state(i).amplitudes()[0].norm() > 0.99).unwrap();
        let n = (0..spec.basis.len()).find(|&i| spec.basis.state(i).amplitudes()[4].norm() > 0.99).unwrap();
        let pulse = pulse_hamiltonian(
            &PulseSpec { transition: (m, n), operator: PulseOperator::Gs, center: 40.0, width: 8.0, area },
            &spec,
        )
        .unwrap();
        let ch = NoiseChannel::new("none", Operator::zeros(spec.space.dim()), 0.0, 0.0).unwrap();
        let gen = build_generator(&spec.basis, &[ch], 0.0, spec.basis.len()).unwrap();
        let mut d = Drive::new();
        d.add_term(pulse.operator.clone(), pulse.envelope());
        let rho0 = Operator::outer_basis(gen.level_cap(), n, n);
        let tr = evolve(&gen, Some(&d), &rho0, &[0.0, 80.0], &EvolveOptions::default()).unwrap();
        tr.state(1).get(m, m).re
    }

    #[test]
    fn pi_pulse_transfers_population() {
        assert!(rabi_transfer(PI) >= 0.999);
    }

    #[test]
    fn two_pi_pulse_returns_population() {
        assert!(rabi_transfer(2.0 * PI) <= 1e-3);
    }

    #[test]
    fn short_pulse_is_rejected() {
        let spec = two_level_spectrum(2.0);
        let r = pulse_hamiltonian(
            &PulseSpec { transition: (0, spec.basis.len() - 1), operator: PulseOperator::Gs, center: 10.0, width: 0.5, area: PI },
            &spec,
        );
        assert!(r.is_err());
    }

    #[test]
    fn undrivable_transition_is_reported() {
        let spec = two_level_spectrum(2.0);
        let s = (0..spec.basis.len()).find(|&i| spec.basis.state(i).amplitudes()[4].norm() > 0.99).unwrap();
        let g1 = (0..spec.basis.len()).find(|&i| spec.basis.state(i).amplitudes()[1].norm() > 0.99).unwrap();
        let r = pulse_hamiltonian(
            &PulseSpec { transition: (g1, s), operator: PulseOperator::Gs, center: 10.0, width: 8.0, area: PI },
            &spec,
        );
        assert!(matches!(r, Err(Error::Undrivable { .. })));
    }

    #[test]
    fn subspace_fidelity_bounds() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(2, 2)] = C64::new(0.5, 0.0);
        let rho = Operator::from_matrix(m).unwrap();
        let (f, raw) = subspace_fidelity(&rho, 0, 1, ONE, ZERO);
        assert_eq!((f, raw), (1.0, 0.5));
        let empty = Operator::zeros(3);
        assert_eq!(subspace_fidelity(&empty, 0, 1, ONE, ZERO).0, 0.0);
    }

    #[test]
    fn threshold_crossing_interpolates() {
        let t = [0.0, 1.0, 2.0];
        let f = [1.0, 0.95, 0.85];
        assert!((time_to_threshold(&t, &f, 0.9).unwrap() - 1.5).abs() < 1e-12);
        assert!(time_to_threshold(&t, &f, 0.5).is_none());
    }

    #[test]
    fn config_validation() {
        let c = ProtocolConfig { amplitudes: (ONE, ONE), ..Default::default() };
        assert!(c.validate().is_err());
        let c = ProtocolConfig { schedule: [1e-3, 5e-4, 2e-2, 3e-2], ..Default::default() };
        assert!(c.validate().is_err());
    }
}
