//! Dynamical-decoupling filter functions and the dephasing integral.
//!
//! Units here are SI (seconds, kelvin, rad/s). For a sequence of ideal
//! pi-pulses at fractions `delta_j` of the total time `tau`,
//!
//! `Y_N(z) = 1 + (-1)^(N+1) e^{iz} + 2 sum_j (-1)^j e^{i z delta_j}`,  `F(z) = |Y_N(z)|^2 / 2`,
//!
//! and the decay exponent is
//! `chi = int_0^inf dw S(w) F(w tau) / w^2 coth(hbar w / 2 k_B T)`.
//! A 1/f spectrum is parameterized as `S(2 pi f) = A / f`, i.e.
//! `S(w) = 2 pi A / w`.
//!
//! The integral is taken over `x = w tau` on logarithmic panels up to
//! `x = 8 pi`, then on panels of width `pi` up to the upper cutoff, each
//! refined by adaptive Gauss-Kronrod bisection when its error estimate is
//! too large.

pub mod quadrature;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{make_operators, SpaceSpec};
use crate::io::fmt_float;
use crate::rabi_model::{polarized_states, BasisChoice, ModelParams};
use quadrature::{adaptive, gk15};

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Target relative accuracy of [`chi`].
pub const CHI_REL_TOL: f64 = 1e-8;
/// Lower default cutoff as a multiple of `1/tau`.
pub const DEFAULT_F_MIN_TAU: f64 = 1e-2;
/// Upper default cutoff as a multiple of `max(N, 1)/tau`.
pub const DEFAULT_F_MAX_TAU: f64 = 1e3;
/// Lower cutoff (times `tau_FID`) at which the calibrated 1/f amplitude
/// equals 4.34e9 for `tau_FID = 10 us`, `T = 12 mK`; produced by
/// `examples/dd_cutoff_fit.rs`. Not a default: it spoils `alpha_1000`.
pub const REFIT_F_MIN_TAU: f64 = 4.709_719;

const LOG_PANELS_PER_DECADE: f64 = 24.0;
const LOG_REGION_END: f64 = 8.0 * PI;
const MAX_DEPTH: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpectrumKind {
    /// `S(w) = 2 pi A / w`.
    OneOverF,
    /// `S(w) = A w`.
    Ohmic,
    /// `S(w) = A`.
    White,
}

impl std::str::FromStr for SpectrumKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_over_f" | "1/f" => Ok(Self::OneOverF),
            "ohmic" => Ok(Self::Ohmic),
            "white" => Ok(Self::White),
            other => Err(Error::InvalidParameter(format!("unknown spectrum kind `{other}`"))),
        }
    }
}

impl SpectrumKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OneOverF => "one_over_f",
            Self::Ohmic => "ohmic",
            Self::White => "white",
        }
    }
}

/// Noise power spectral density with optional integration cutoffs in Hz.
/// Unset cutoffs resolve to `1e-2/tau` and `1e3 max(N,1)/tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpectrum {
    pub kind: SpectrumKind,
    pub amplitude: f64,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
}

impl NoiseSpectrum {
    pub fn new(kind: SpectrumKind, amplitude: f64) -> Self {
        Self {
            kind,
            amplitude,
            f_min: None,
            f_max: None,
        }
    }

    pub fn with_cutoffs(mut self, f_min: Option<f64>, f_max: Option<f64>) -> Self {
        self.f_min = f_min;
        self.f_max = f_max;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// `S(w)` in rad^2/s.
    pub fn density(&self, omega: f64) -> f64 {
        match self.kind {
            SpectrumKind::OneOverF => 2.0 * PI * self.amplitude / omega,
            SpectrumKind::Ohmic => self.amplitude * omega,
            SpectrumKind::White => self.amplitude,
        }
    }

    /// Cutoffs in Hz for a given sequence.
    pub fn resolved_cutoffs(&self, seq: &DdSequence) -> (f64, f64) {
        let n = seq.n_pulses().max(1) as f64;
        (
            self.f_min.unwrap_or(DEFAULT_F_MIN_TAU / seq.tau),
            self.f_max.unwrap_or(DEFAULT_F_MAX_TAU * n / seq.tau),
        )
    }

    fn validate(&self, seq: &DdSequence) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::InvalidParameter("spectrum amplitude must be >= 0".into()));
        }
        let (lo, hi) = self.resolved_cutoffs(seq);
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "cutoffs must satisfy 0 <= f_min < f_max, got [{lo}, {hi}]"
            )));
        }
        if self.kind == SpectrumKind::OneOverF && lo <= 0.0 {
            return Err(Error::InvalidParameter(
                "a 1/f spectrum needs a positive infrared cutoff".into(),
            ));
        }
        Ok(())
    }
}

/// Pulse sequence over a total time `tau` (s) at temperature `temperature` (K).
#[derive(Clone, Debug, PartialEq)]
pub struct DdSequence {
    fractions: Vec<f64>,
    equidistant: bool,
    pub tau: f64,
    pub temperature: f64,
}

impl DdSequence {
    /// `N` pulses at `delta_j = j/(N+1)`.
    pub fn equidistant(n: usize, tau: f64, temperature: f64) -> Result<Self> {
        let fractions = (1..=n).map(|j| j as f64 / (n + 1) as f64).collect();
        let mut s = Self::custom(fractions, tau, temperature)?;
        s.equidistant = true;
        Ok(s)
    }

    pub fn free_induction(tau: f64, temperature: f64) -> Result<Self> {
        Self::equidistant(0, tau, temperature)
    }

    pub fn custom(fractions: Vec<f64>, tau: f64, temperature: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(Error::InvalidParameter("temperature must be >= 0".into()));
        }
        if fractions.iter().any(|&d| !(d > 0.0 && d < 1.0)) || fractions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "pulse fractions must be strictly increasing inside (0, 1)".into(),
            ));
        }
        Ok(Self {
            fractions,
            equidistant: false,
            tau,
            temperature,
        })
    }

    pub fn n_pulses(&self) -> usize {
        self.fractions.len()
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let mut s = Self::custom(self.fractions.clone(), tau, self.temperature)?;
        s.equidistant = self.equidistant;
        Ok(s)
    }

    /// `Y_N(z)`.
    pub fn response(&self, z: f64) -> Complex64 {
        let n = self.n_pulses();
        let sign_last = if n % 2 == 0 { -1.0 } else { 1.0 };
        let mut y = Complex64::new(1.0, 0.0) + Complex64::from_polar(sign_last, z);
        if n == 0 {
            return y;
        }
        let r = -Complex64::from_polar(1.0, z / (n + 1) as f64);
        let one = Complex64::new(1.0, 0.0);
        let sum = if self.equidistant && (one - r).norm() >= 1e-3 {
            r * (one - r.powu(n as u32)) / (one - r)
        } else {
            self.fractions
                .iter()
                .enumerate()
                .map(|(j, &d)| {
                    let s = if j % 2 == 0 { -1.0 } else { 1.0 };
                    Complex64::from_polar(s, z * d)
                })
                .sum()
        };
        y += sum * 2.0;
        y
    }

    /// `F(z) = |Y_N(z)|^2 / 2`.
    pub fn filter(&self, z: f64) -> f64 {
        self.response(z).norm_sqr() / 2.0
    }
}

pub fn filter_function(seq: &DdSequence, z: f64) -> f64 {
    seq.filter(z)
}

/// `coth(x)` with a series guard for small `x`; `T = 0` maps to `coth = 1`.
pub fn thermal_factor(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 1.0;
    }
    let x = HBAR * omega / (2.0 * K_B * temperature);
    if x < 1e-4 {
        1.0 / x + x / 3.0
    } else if x > 20.0 {
        1.0
    } else {
        1.0 / x.tanh()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiResult {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

fn panel_edges(x_min: f64, x_max: f64) -> Vec<f64> {
    let mut edges = Vec::new();
    let log_end = LOG_REGION_END.min(x_max);
    if x_min < log_end {
        let start = if x_min > 0.0 { x_min } else { 1e-6_f64.min(log_end / 10.0) };
        if x_min == 0.0 {
            edges.push(0.0);
        }
        let decades = (log_end / start).log10();
        let n = ((decades * LOG_PANELS_PER_DECADE).ceil() as usize).max(1);
        for i in 0..n {
            edges.push(start * (log_end / start).powf(i as f64 / n as f64));
        }
    }
    let lin_start = x_min.max(log_end);
    let n_lin = ((x_max - lin_start) / PI).ceil().max(1.0) as usize;
    for i in 0..n_lin {
        edges.push(lin_start + (x_max - lin_start) * i as f64 / n_lin as f64);
    }
    edges.push(x_max);
    edges.dedup();
    edges
}

/// Decay exponent with diagnostics.
pub fn chi_detailed(seq: &DdSequence, spectrum: &NoiseSpectrum) -> Result<ChiResult> {
    spectrum.validate(seq)?;
    if spectrum.amplitude == 0.0 {
        return Ok(ChiResult { value: 0.0, error_estimate: 0.0, panels: 0 });
    }
    let tau = seq.tau;
    let (f_lo, f_hi) = spectrum.resolved_cutoffs(seq);
    let (x_min, x_max) = (2.0 * PI * f_lo * tau, 2.0 * PI * f_hi * tau);
    // integrand in x = w tau: S(x/tau) F(x) tau / x^2 coth(...)
    let integrand = |x: f64| {
        if x <= 0.0 {
            // finite limit only matters for white noise at x -> 0
            return 0.0;
        }
        let w = x / tau;
        spectrum.density(w) * seq.filter(x) * tau / (x * x) * thermal_factor(w, seq.temperature)
    };
    let edges = panel_edges(x_min, x_max);
    let estimates: Vec<_> = edges.windows(2).map(|w| (w[0], w[1], gk15(&integrand, w[0], w[1]))).collect();
    let total: f64 = estimates.iter().map(|e| e.2.value).sum();
    let err: f64 = estimates.iter().map(|e| e.2.error).sum();
    let target = CHI_REL_TOL * total.abs();
    if err <= target {
        return Ok(ChiResult { value: total, error_estimate: err, panels: estimates.len() });
    }
    let per_panel = target / estimates.len() as f64;
    let mut value = 0.0;
    let mut error = 0.0;
    for (a, b, est) in estimates {
        let refined = if est.error <= per_panel {
            est
        } else {
            adaptive(&integrand, a, b, per_panel, MAX_DEPTH)?
        };
        value += refined.value;
        error += refined.error;
    }
    Ok(ChiResult { value, error_estimate: error, panels: edges.len() - 1 })
}

pub fn chi(seq: &DdSequence, spectrum: &NoiseSpectrum) -> Result<f64> {
    Ok(chi_detailed(seq, spectrum)?.value)
}

/// Amplitude `A` making `chi(FID at tau_fid) = 1`.
pub fn calibrate_amplitude(
    tau_fid: f64,
    temperature: f64,
    kind: SpectrumKind,
    f_min: Option<f64>,
    f_max: Option<f64>,
) -> Result<f64> {
    let seq = DdSequence::free_induction(tau_fid, temperature)?;
    let unit = NoiseSpectrum::new(kind, 1.0).with_cutoffs(f_min, f_max);
    let chi0 = chi(&seq, &unit)?;
    if !(chi0 > 0.0 && chi0.is_finite()) {
        return Err(Error::OutOfRange(format!("unit-amplitude chi is {chi0}")));
    }
    Ok(1.0 / chi0)
}

/// `alpha_N = sqrt(chi_N)` for `N` equidistant pulses over `tau`.
pub fn suppression_factor(n_pulses: usize, tau: f64, temperature: f64, spectrum: &NoiseSpectrum) -> Result<f64> {
    let seq = DdSequence::equidistant(n_pulses, tau, temperature)?;
    Ok(chi(&seq, spectrum)?.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuppressionRow {
    pub n: usize,
    pub alpha: f64,
    pub chi: f64,
}

/// Evaluate `alpha_N` for several `N` in parallel; rows keep input order.
pub fn suppression_sweep(
    ns: &[usize],
    tau: f64,
    temperature: f64,
    spectrum: &NoiseSpectrum,
) -> Result<Vec<SuppressionRow>> {
    ns.par_iter()
        .map(|&n| {
            let seq = DdSequence::equidistant(n, tau, temperature)?;
            let c = chi(&seq, spectrum)?;
            Ok(SuppressionRow { n, alpha: c.sqrt(), chi: c })
        })
        .collect()
}

/// `N,alpha_N,chi_N`.
pub fn write_suppression_csv<W: std::io::Write>(mut w: W, rows: &[SuppressionRow]) -> std::io::Result<()> {
    writeln!(w, "N,alpha_N,chi_N")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.n, fmt_float(r.alpha), fmt_float(r.chi))?;
    }
    Ok(())
}

/// Largest displacement accepted by [`beta_amplification`].
pub const BETA_ALPHA_MAX: f64 = 3.0;

/// Pulse amplitude factor `beta = exp(2 alpha^2)` for driving the polarized
/// pair through bare atomic operators.
pub fn beta_amplification(alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    if alpha > BETA_ALPHA_MAX {
        return Err(Error::OutOfRange(format!(
            "alpha = {alpha} exceeds {BETA_ALPHA_MAX}; beta would exceed e^18"
        )));
    }
    Ok((2.0 * alpha * alpha).exp())
}

/// Atomic operators between the polarized states at `eps = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizedPauli {
    pub beta_inv: f64,
    /// `<P_+|sigma_y|P_->`, expected `i beta^-1`.
    pub sigma_y: Complex64,
    /// `<P_+|sigma_z|P_->`, expected `beta^-1` (a sigma_x-like element).
    pub sigma_z: Complex64,
}

pub fn polarized_pauli_elements(space: &SpaceSpec, alpha: f64) -> Result<PolarizedPauli> {
    let beta = beta_amplification(alpha)?;
    let p = ModelParams {
        lambda: alpha,
        ..Default::default()
    };
    let (pm, pp) = polarized_states(space, &p, BasisChoice::Bare)?;
    let ops = make_operators(space);
    Ok(PolarizedPauli {
        beta_inv: 1.0 / beta,
        sigma_y: ops.sigma_y.sandwich(&pp, &pm),
        sigma_z: ops.sigma_z.sandwich(&pp, &pm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_induction_filter() {
        let s = DdSequence::free_induction(1.0, 0.0).unwrap();
        for z in [0.0, 0.3, 2.0, 17.0] {
            assert!((s.filter(z) - 2.0 * (z / 2.0).sin().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_matches_direct_sum() {
        for n in [1usize, 2, 3, 8, 33] {
            let eq = DdSequence::equidistant(n, 1.0, 0.0).unwrap();
            let direct = DdSequence::custom(eq.fractions().to_vec(), 1.0, 0.0).unwrap();
            for i in 0..200 {
                let z = i as f64 * 0.37;
                assert!((eq.filter(z) - direct.filter(z)).abs() < 1e-10 * (1.0 + direct.filter(z)));
            }
        }
    }

    #[test]
    fn static_noise_refocused() {
        for n in 0..6 {
            assert!(DdSequence::equidistant(n, 1.0, 0.0).unwrap().filter(0.0) < 1e-28);
        }
    }

    #[test]
    fn thermal_factor_limits() {
        assert_eq!(thermal_factor(1e9, 0.0), 1.0);
        let x = HBAR * 10.0 / (2.0 * K_B * 1.0);
        assert!((thermal_factor(10.0, 1.0) - 1.0 / x).abs() / (1.0 / x) < 1e-12);
        assert_eq!(thermal_factor(1e20, 1e-3), 1.0);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(DdSequence::custom(vec![0.5, 0.4], 1.0, 0.0).is_err());
        assert!(DdSequence::equidistant(2, 0.0, 0.0).is_err());
        let seq = DdSequence::free_induction(1.0, 0.0).unwrap();
        let bad = NoiseSpectrum::new(SpectrumKind::OneOverF, 1.0).with_cutoffs(Some(0.0), None);
        assert!(chi(&seq, &bad).is_err());
        assert!(beta_amplification(3.5).is_err());
    }

    #[test]
    fn zero_amplitude_gives_zero() {
        let seq = DdSequence::equidistant(4, 1e-5, 0.012).unwrap();
        assert_eq!(chi(&seq, &NoiseSpectrum::new(SpectrumKind::OneOverF, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta_amplification(0.0).unwrap(), 1.0);
        assert!((beta_amplification(1.3).unwrap() - 3.38f64.exp()).abs() < 1e-12);
    }
}
