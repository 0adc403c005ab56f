//! Numbered acceptance criteria, each reported as a list of named checks.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dd_filter::{
    calibrate_amplitude, suppression_factor, suppression_sweep, DdSequence, NoiseSpectrum, SpectrumKind,
    REFIT_F_MIN_TAU,
};
use crate::error::Result;
use crate::hilbert::{coherent_state, make_operators, Operator, SpaceSpec, C64};
use crate::lindblad::{build_generator, evolve, EvolveOptions, NoiseChannel, Trajectory};
use crate::memory_protocol::{memory_advantage, run_protocol, ProtocolConfig, ProtocolRates, PulseShape};
use crate::rabi_model::{diagonalize, polarized_states, BasisChoice, ModelParams};
use crate::sensitivity::{default_grids, linspace, record_at, sweep_map, table1_residuals, Sector};

/// One named assertion inside a criterion.
#[derive(Clone, Debug)]
pub struct Check {
    pub label: String,
    pub detail: String,
    pub pass: bool,
    /// Reported for context only; does not affect the verdict.
    pub informational: bool,
}

impl Check {
    fn new(label: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            detail: detail.into(),
            pass,
            informational: false,
        }
    }

    fn info(label: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            informational: true,
            ..Self::new(label, true, detail)
        }
    }

    fn from_result(label: &str, r: Result<Check>) -> Self {
        r.unwrap_or_else(|e| Self::new(label, false, format!("error: {e}")))
    }
}

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CriterionReport {
    pub fn pass(&self) -> bool {
        self.elapsed <= self.budget && self.checks.iter().all(|c| c.pass || c.informational)
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        write!(
            f,
            "criterion {} [{}] {} ({:.1} s, budget {} s)",
            self.id,
            verdict,
            self.title,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )?;
        for c in &self.checks {
            let tag = match (c.informational, c.pass) {
                (true, _) => "info",
                (false, true) => "ok",
                (false, false) => "FAIL",
            };
            write!(f, "\n    {tag:>4}  {}: {}", c.label, c.detail)?;
        }
        Ok(())
    }
}

pub const CRITERIA: [u8; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

/// Run one criterion; `seed` drives the randomized inputs.
pub fn run_criterion(id: u8, seed: u64) -> CriterionReport {
    let start = Instant::now();
    let (title, budget, checks) = match id {
        1 => ("exact longitudinal oracle", 10, criterion_1()),
        2 => ("drive-term gap oracle", 10, criterion_2()),
        3 => ("displaced-state overlap law", 30, criterion_3()),
        4 => ("closed-form sensitivity table", 30, criterion_4()),
        5 => ("sensitivity map spot values", 600, criterion_5()),
        6 => ("master-equation correctness", 60, criterion_6(seed)),
        7 => ("decoupling constants", 300, criterion_7(seed)),
        8 => ("memory protocol properties", 600, criterion_8(seed)),
        _ => ("unknown criterion", 0, vec![Check::new("id", false, format!("no criterion {id}"))]),
    };
    CriterionReport {
        id,
        title,
        checks,
        elapsed: start.elapsed(),
        budget: Duration::from_secs(budget),
    }
}

fn bool_check(label: &str, pass: bool, detail: String) -> Check {
    Check::new(label, pass, detail)
}

fn criterion_1() -> Vec<Check> {
    let mut out = Vec::new();
    for lambda in [0.5, 1.0, 1.3] {
        let label = format!("lambda={lambda}");
        out.push(Check::from_result(&label, (|| {
            let sp = SpaceSpec::new(64, 2)?;
            let p = ModelParams { delta: 0.2, lambda, ..Default::default() };
            let spec = diagonalize(&sp, &p, BasisChoice::Bare)?;
            let (pm, pp) = polarized_states(&sp, &p, BasisChoice::Bare)?;
            let o0 = spec.basis.state(0).overlap_sq(&pm);
            let o1 = spec.basis.state(1).overlap_sq(&pp);
            let gap_err = (spec.gap() - 0.2).abs();
            Ok(bool_check(
                &label,
                o0 >= 1.0 - 1e-6 && o1 >= 1.0 - 1e-6 && gap_err < 1e-8,
                format!("overlaps {o0:.10}, {o1:.10}; |gap - Delta| = {gap_err:.2e}"),
            ))
        })()));
    }
    out
}

fn criterion_2() -> Vec<Check> {
    vec![Check::from_result("gap = 2 Lambda lambda", (|| {
        let sp = SpaceSpec::new(64, 2)?;
        let mut worst: f64 = 0.0;
        for l in linspace(0.1, 1.5, 20) {
            let p = ModelParams { lambda: l, lambda_drive: 0.2, ..Default::default() };
            let gap = diagonalize(&sp, &p, BasisChoice::Bare)?.gap();
            worst = worst.max((gap - 0.4 * l).abs());
        }
        Ok(bool_check("gap = 2 Lambda lambda", worst < 1e-8, format!("max deviation {worst:.2e} over 20 points")))
    })())]
}

fn criterion_3() -> Vec<Check> {
    let overlap = Check::from_result("<+a|-a> = exp(-2a^2)", (|| {
        let sp = SpaceSpec::new(64, 2)?;
        let mut worst: f64 = 0.0;
        for a in linspace(0.0, 1.5, 31) {
            let plus = coherent_state(&sp, C64::new(a, 0.0))?;
            let minus = coherent_state(&sp, C64::new(-a, 0.0))?;
            worst = worst.max((plus.inner(&minus).re - (-2.0 * a * a).exp()).abs());
        }
        Ok(bool_check("<+a|-a> = exp(-2a^2)", worst < 1e-8, format!("max deviation {worst:.2e} for a in [0, 1.5]")))
    })());
    let slope = Check::from_result("transverse gap slope", (|| {
        let sp = SpaceSpec::new(64, 2)?;
        let pts = linspace(1.0, 1.8, 9)
            .into_iter()
            .map(|a| {
                let p = ModelParams { epsilon: 0.1, lambda: a, ..Default::default() };
                Ok((a * a, diagonalize(&sp, &p, BasisChoice::Bare)?.gap().ln()))
            })
            .collect::<Result<Vec<_>>>()?;
        let s = fit_slope(&pts);
        Ok(bool_check("transverse gap slope", (s + 2.0).abs() <= 0.1, format!("d ln(gap) / d a^2 = {s:.5} (eps = 0.1)")))
    })());
    vec![overlap, slope]
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

fn criterion_4() -> Vec<Check> {
    let p_cols = Check::from_result("P columns at eps=0", (|| {
        let sp = SpaceSpec::new(64, 2)?;
        let p = ModelParams { delta: 0.2, lambda: 1.3, ..Default::default() };
        let r = table1_residuals(&sp, &p, Sector::Polarized)?;
        Ok(bool_check("P columns at eps=0", r.max_abs < 1e-6, format!("max residual {:.2e} at lambda = 1.3", r.max_abs)))
    })());
    let e_cols = Check::from_result("E columns at Delta=0", (|| {
        let sp = SpaceSpec::new(64, 2)?;
        let res = linspace(0.8, 1.5, 8)
            .into_iter()
            .map(|l| {
                let p = ModelParams { epsilon: 0.2, lambda: l, ..Default::default() };
                Ok(table1_residuals(&sp, &p, Sector::Entangled)?.max_abs)
            })
            .collect::<Result<Vec<_>>>()?;
        let monotone = res.windows(2).all(|w| w[1] < w[0]);
        let last = *res.last().unwrap_or(&f64::NAN);
        Ok(bool_check(
            "E columns at Delta=0",
            monotone && last < 0.05,
            format!("residuals {:.2e} -> {:.2e} over lambda in [0.8, 1.5], monotone = {monotone}", res[0], last),
        ))
    })());
    vec![p_cols, e_cols]
}

fn rel(x: f64, target: f64) -> f64 {
    (x - target).abs() / target.abs()
}

fn criterion_5() -> Vec<Check> {
    let mut out = Vec::new();
    out.push(Check::from_result("(1.3, pi/2, 0.2)", (|| {
        let sp = SpaceSpec::new(48, 2)?;
        let r = record_at(&sp, 0.2, 1.3, FRAC_PI_2)?;
        let x = r.channel("X").map_or(f64::NAN, |c| c.dephasing.powi(2));
        Ok(bool_check(
            "(1.3, pi/2, 0.2)",
            rel(r.max_relax_sq, 1.16e-3) < 0.2 && rel(x, 6.76) < 0.01,
            format!("max S_R^2 = {:.4e} (1.16e-3 +-20%), X S_D^2 = {x:.4} (6.76 +-1%)", r.max_relax_sq),
        ))
    })()));
    out.push(Check::from_result("(0.8, 0, 0.5)", (|| {
        let sp = SpaceSpec::new(48, 2)?;
        let r = record_at(&sp, 0.5, 0.8, 0.0)?;
        let x = r.channel("X").map_or(f64::NAN, |c| c.relaxation.powi(2));
        Ok(bool_check(
            "(0.8, 0, 0.5)",
            rel(r.max_dephase_sq, 7e-2) < 0.3 && rel(x, 2.47) < 0.05,
            format!("max S_D^2 = {:.4e} (7e-2 +-30%), X S_R^2 = {x:.4} (2.47 +-5%)", r.max_dephase_sq),
        ))
    })()));
    out.push(Check::from_result("61x61 maps", (|| {
        let start = Instant::now();
        let sp = SpaceSpec::new(48, 2)?;
        let (lambdas, thetas) = default_grids();
        let mut failures = 0;
        for wq in [0.2, 0.5] {
            let map = sweep_map(&sp, wq, &lambdas, &thetas)?;
            map.write_csv(std::io::sink())?;
            failures += map.failures().count();
        }
        let t = start.elapsed().as_secs_f64();
        Ok(bool_check("61x61 maps", failures == 0 && t < 600.0, format!("two maps in {t:.1} s, {failures} failed cells")))
    })()));
    out
}

fn physical(label: &str, runs: &[&Trajectory]) -> Check {
    let drift = runs.iter().map(|t| t.max_trace_drift).fold(0.0, f64::max);
    let min_eig = runs.iter().map(|t| t.min_eigenvalue).fold(f64::INFINITY, f64::min);
    bool_check(
        label,
        drift < 1e-7 && min_eig >= -1e-6,
        format!("max trace drift {drift:.2e}, min eigenvalue {min_eig:.2e} over {} runs", runs.len()),
    )
}

fn criterion_6(seed: u64) -> Vec<Check> {
    let result = (|| -> Result<Vec<Check>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sp = SpaceSpec::new(3, 2)?;
        let ops = make_operators(&sp);
        let p = ModelParams { epsilon: 0.3, delta: 0.2, lambda: 0.4, ..Default::default() };
        let spec = diagonalize(&sp, &p, BasisChoice::Bare)?;
        let ch = vec![
            NoiseChannel::new("sx", ops.sigma_x.clone(), 0.05, 0.02)?,
            NoiseChannel::new("sz", ops.sigma_z.clone(), 0.01, 0.03)?,
            NoiseChannel::new("X", ops.x.clone(), 0.03, 0.0)?,
        ];
        let mut runs = Vec::new();
        let mut worst: f64 = 0.0;
        for temperature in [0.0, 0.5] {
            let gen = build_generator(&spec.basis, &ch, temperature, sp.dim())?;
            let k = gen.level_cap();
            let l = gen.superoperator();
            let v = nalgebra::DVector::from_fn(k, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let v = &v / C64::new(v.norm(), 0.0);
            let rho0 = Operator::from_matrix(&v * v.adjoint())?;
            let times = [0.0, 1.0, 5.0, 20.0, 60.0];
            let tr = evolve(&gen, None, &rho0, &times, &EvolveOptions::default())?;
            let vec0 = nalgebra::DVector::from_column_slice(rho0.matrix().as_slice());
            for (i, &t) in times.iter().enumerate() {
                let exact = (&l * C64::new(t, 0.0)).exp() * &vec0;
                let d = tr.state(i).matrix().iter().zip(exact.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                worst = worst.max(d);
            }
            runs.push(tr);
        }
        let oracle = bool_check("(a) exp(L t) oracle, dim 6", worst < 1e-8, format!("max deviation {worst:.2e}"));

        let sp2 = SpaceSpec::new(2, 2)?;
        let p2 = ModelParams { omega_c: 10.0, epsilon: 1.0, ..Default::default() };
        let spec2 = diagonalize(&sp2, &p2, BasisChoice::Bare)?;
        let gamma = 0.02;
        let ops2 = make_operators(&sp2);
        let gen2 = build_generator(&spec2.basis, &[NoiseChannel::new("sx", ops2.sigma_x, gamma, 0.0)?], 0.0, 2)?;
        let times: Vec<f64> = (0..=50).map(|i| 4.0 * i as f64).collect();
        let tr2 = evolve(&gen2, None, &Operator::outer_basis(2, 1, 1), &times, &EvolveOptions::default())?;
        let dev = times
            .iter()
            .enumerate()
            .map(|(i, &t)| (tr2.state(i).get(1, 1).re - (-gamma * t).exp()).abs())
            .fold(0.0, f64::max);
        let decay = bool_check("(b) exp(-Gamma t) decay", dev < 1e-6, format!("max deviation {dev:.2e}"));
        runs.push(tr2);
        let refs: Vec<&Trajectory> = runs.iter().collect();
        Ok(vec![oracle, decay, physical("(c) trace and positivity", &refs)])
    })();
    result.unwrap_or_else(|e| vec![Check::new("master equation", false, format!("error: {e}"))])
}

const TAU_FID: f64 = 1e-5;
const T_DD: f64 = 12e-3;
const A_TARGET: f64 = 4.34e9;

fn criterion_7(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let calibrated = |f_min: Option<f64>| -> Result<(f64, f64)> {
        let a = calibrate_amplitude(TAU_FID, T_DD, SpectrumKind::OneOverF, f_min, None)?;
        let spec = NoiseSpectrum::new(SpectrumKind::OneOverF, a).with_cutoffs(f_min, None);
        Ok((a, suppression_factor(1000, TAU_FID, T_DD, &spec)?))
    };
    match calibrated(None) {
        Ok((a, alpha)) => {
            out.push(bool_check("A (default cutoffs)", rel(a, A_TARGET) <= 0.02, format!("A = {a:.4e}, target 4.34e9 +-2%")));
            out.push(bool_check(
                "alpha_1000 (default cutoffs)",
                (0.5e-3..=2e-3).contains(&alpha),
                format!("alpha_1000 = {alpha:.4e}, target 1e-3 within x2"),
            ));
        }
        Err(e) => out.push(Check::new("default cutoffs", false, format!("error: {e}"))),
    }
    match calibrated(Some(REFIT_F_MIN_TAU / TAU_FID)) {
        Ok((a, alpha)) => out.push(Check::info(
            "refit cutoff",
            format!("f_min tau = {REFIT_F_MIN_TAU}: A = {a:.4e} but alpha_1000 = {alpha:.4e}"),
        )),
        Err(e) => out.push(Check::info("refit cutoff", format!("error: {e}"))),
    }
    let hahn = DdSequence::equidistant(1, 1.0, 0.0);
    out.push(match hahn {
        Ok(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let worst = (0..1000)
                .map(|_| {
                    let z: f64 = rng.random_range(0.0..200.0);
                    (s.filter(z) - 8.0 * (z / 4.0).sin().powi(4)).abs()
                })
                .fold(0.0, f64::max);
            bool_check("Hahn identity", worst < 1e-12, format!("max deviation {worst:.2e} on 1000 random z"))
        }
        Err(e) => Check::new("Hahn identity", false, format!("error: {e}")),
    });
    out.push(Check::from_result("alpha_N non-increasing", (|| {
        let a = calibrate_amplitude(TAU_FID, T_DD, SpectrumKind::OneOverF, None, None)?;
        let ns: Vec<usize> = (0..=10).map(|k| 1usize << k).collect();
        let rows = suppression_sweep(&ns, TAU_FID, T_DD, &NoiseSpectrum::new(SpectrumKind::OneOverF, a))?;
        let ups: Vec<String> = rows
            .windows(2)
            .filter(|w| w[1].alpha > w[0].alpha)
            .map(|w| format!("N={} -> {}: {:.4} -> {:.4}", w[0].n, w[1].n, w[0].alpha, w[1].alpha))
            .collect();
        let detail = if ups.is_empty() {
            format!("alpha_1 = {:.4}, alpha_1024 = {:.3e}", rows[0].alpha, rows[rows.len() - 1].alpha)
        } else {
            format!("increases at {}", ups.join("; "))
        };
        Ok(bool_check("alpha_N non-increasing", ups.is_empty(), detail))
    })()));
    out
}

fn criterion_8(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let cfg = ProtocolConfig::default();
    match run_protocol(&cfg) {
        Ok(tr) => {
            out.push(bool_check(
                "(a) F_P after p2",
                tr.storage_fidelity >= 0.99,
                format!("F_P = {:.5}, leakage {:.2e}", tr.storage_fidelity, tr.storage_leakage),
            ));
            let t = 2.5e-2 / cfg.clock_rate;
            let (fp, ff) = (tr.interpolate(&tr.f_p, t), tr.interpolate(&tr.f_free, t));
            out.push(match (fp, ff) {
                (Some(fp), Some(ff)) => bool_check("(b) F_P > F_free at 2.5e-2", fp > ff, format!("F_P = {fp:.5}, F_free = {ff:.5}")),
                _ => Check::new("(b) F_P > F_free at 2.5e-2", false, "time outside trace"),
            });
            if let Some(f) = tr.retrieval_fidelity {
                out.push(Check::info("finite-pulse retrieval", format!("F_s after p4 = {f:.5} with dissipation")));
            }
            out.push(bool_check(
                "trace and positivity",
                tr.max_trace_drift < 1e-7 && tr.min_eigenvalue >= -1e-6,
                format!("drift {:.2e}, min eigenvalue {:.2e}", tr.max_trace_drift, tr.min_eigenvalue),
            ));
        }
        Err(e) => out.push(Check::new("(a, b) protocol run", false, format!("error: {e}"))),
    }
    out.push(Check::from_result("(c) round trip, 10 random qubits", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 1.0;
        for _ in 0..10 {
            let theta: f64 = rng.random_range(0.0..PI);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let c = ProtocolConfig {
                rates: ProtocolRates::zero(),
                pulse_shape: PulseShape::Ideal,
                amplitudes: (C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)),
                samples: 11,
                ..cfg.clone()
            };
            worst = worst.min(run_protocol(&c)?.retrieval_fidelity.unwrap_or(0.0));
        }
        Ok(bool_check("(c) round trip, 10 random qubits", worst >= 1.0 - 1e-3, format!("min F_s = {worst:.8} (ideal pulses)")))
    })()));
    out.push(Check::from_result("Gaussian round trip", (|| {
        let c = ProtocolConfig { rates: ProtocolRates::zero(), samples: 11, ..cfg.clone() };
        let f = run_protocol(&c)?.retrieval_fidelity.unwrap_or(0.0);
        Ok(Check::info("Gaussian round trip", format!("F_s = {f:.5} without dissipation, sigma_p = {}", c.pulse_width)))
    })()));
    out.push(Check::from_result("(d) time-to-0.9 ratio", (|| {
        let adv = memory_advantage(&cfg, 0.9, 3e5, 2000.0)?;
        let ratio = adv.ratio_lower_bound().unwrap_or(0.0);
        let mem = adv.memory_time.map_or(format!("> {:.3e}", adv.t_max), |t| format!("{t:.4e}"));
        let free = adv.free_time.map_or("not reached".to_string(), |t| format!("{t:.4e}"));
        Ok(bool_check("(d) time-to-0.9 ratio", ratio >= 100.0, format!("memory {mem}, free {free}, ratio {ratio:.1}")))
    })()));
    out
}
