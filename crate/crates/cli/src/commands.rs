//! One function per subcommand. Each reads its keys from the [`Config`],
//! runs the core computation and returns the files to emit together with a
//! short list of headline numbers.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use ultramem_core::dd_filter::{
    calibrate_amplitude, suppression_sweep, write_suppression_csv, NoiseSpectrum, SpectrumKind, DEFAULT_F_MIN_TAU,
};
use ultramem_core::hilbert::{SpaceSpec, C64};
use ultramem_core::io::fmt_float;
use ultramem_core::memory_protocol::{
    check_auxiliary_conditions, memory_advantage, model_atomic_operators, run_protocol, FreeDecayConfig,
    ProtocolConfig, ProtocolRates, PulseShape,
};
use ultramem_core::rabi_model::{diagonalize, spectrum_sweep, BasisChoice, ModelParams, Sweep, SweepParameter};
use ultramem_core::sensitivity::{linspace, sweep_map, table1_residuals, MapKind, Sector};

use crate::config::{Config, ConfigError};
use crate::CliError;

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Headline results, printed and copied into the manifest.
    pub results: Vec<(String, String)>,
    /// Acceptance criteria exercised by `--check`.
    pub criteria: &'static [u8],
}

fn artifact(name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Artifact, CliError> {
    let mut bytes = Vec::new();
    write(&mut bytes).map_err(|source| CliError::Output { path: name.into(), source })?;
    Ok(Artifact { name: name.into(), bytes })
}

fn model(cfg: &Config, base: ModelParams) -> Result<ModelParams, ConfigError> {
    Ok(ModelParams {
        omega_c: cfg.f64("model.omega_c", base.omega_c)?,
        epsilon: cfg.f64("model.epsilon", base.epsilon)?,
        delta: cfg.f64("model.delta", base.delta)?,
        lambda: cfg.f64("model.lambda", base.lambda)?,
        lambda_drive: cfg.f64("model.lambda_drive", base.lambda_drive)?,
        omega_s: cfg.f64("model.omega_s", base.omega_s)?,
    })
}

fn basis(cfg: &Config, key: &str, default: &str) -> Result<BasisChoice, ConfigError> {
    match cfg.string(key, default)?.as_str() {
        "bare" => Ok(BasisChoice::Bare),
        "diagonal" => Ok(BasisChoice::DiagonalAtom),
        other => Err(cfg.reject(key, format!("expected `bare` or `diagonal`, got `{other}`"))),
    }
}

pub fn spectrum(cfg: &Config) -> Result<Outcome, CliError> {
    let params = model(cfg, ModelParams { delta: 0.2, ..Default::default() })?;
    let space = SpaceSpec::new(cfg.usize("space.n_fock", 64)?, cfg.usize("space.n_atom", 2)?)?;
    let sweep = Sweep {
        parameter: cfg.parsed::<SweepParameter>("sweep.parameter", "lambda")?,
        grid: linspace(
            cfg.f64("sweep.start", 0.0)?,
            cfg.f64("sweep.stop", 1.5)?,
            cfg.usize("sweep.points", 61)?,
        ),
        levels: cfg.usize("sweep.levels", 6)?,
        relative_to_ground: cfg.bool("sweep.relative", true)?,
        choice: basis(cfg, "space.basis", "bare")?,
        convergence_tol: cfg.opt_f64("sweep.convergence_tol")?,
    };
    let table = spectrum_sweep(&space, &params, &sweep)?;
    let csv = artifact("spectrum.csv", |w| table.write_csv(w))?;

    let mut results = vec![("rows".to_string(), table.rows.len().to_string())];
    if let Some(lc) = table.critical_coupling {
        results.push(("critical_coupling".into(), fmt_float(lc)));
    }
    if sweep.levels >= 2 {
        let gaps: Vec<f64> = table.rows.iter().map(|r| r.energies[1] - r.energies[0]).collect();
        let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        results.push(("gap_min".into(), fmt_float(lo)));
        results.push(("gap_max".into(), fmt_float(hi)));
    }
    Ok(Outcome { artifacts: vec![csv], results, criteria: &[1, 2, 3] })
}

pub fn sensitivity_map(cfg: &Config) -> Result<Outcome, CliError> {
    let omega_q = cfg.f64("map.omega_q", 0.2)?;
    let space = SpaceSpec::new(cfg.usize("map.n_fock", 48)?, 2)?;
    let lambdas = linspace(
        cfg.f64("map.lambda_start", 0.0)?,
        cfg.f64("map.lambda_stop", 1.5)?,
        cfg.usize("map.lambda_points", 61)?,
    );
    let thetas = linspace(0.0, FRAC_PI_2, cfg.usize("map.theta_points", 61)?);
    let map = sweep_map(&space, omega_q, &lambdas, &thetas)?;

    const CSV: &str = "sensitivity_map.csv";
    let mut artifacts = vec![artifact(CSV, |w| map.write_csv(w))?];
    for kind in [MapKind::Relaxation, MapKind::Dephasing] {
        let name = format!("sensitivity_{}.gp", kind.name());
        artifacts.push(artifact(&name, |w| map.write_plot_script(w, CSV, kind))?);
    }
    let ok = || map.records.iter().filter(|r| r.error.is_none());
    let results = vec![
        ("points".to_string(), map.records.len().to_string()),
        ("failed_points".to_string(), map.failures().count().to_string()),
        ("degenerate_points".to_string(), ok().filter(|r| r.degenerate).count().to_string()),
        ("max_relax_sq".to_string(), fmt_float(ok().map(|r| r.max_relax_sq).fold(0.0, f64::max))),
        ("max_dephase_sq".to_string(), fmt_float(ok().map(|r| r.max_dephase_sq).fold(0.0, f64::max))),
    ];
    Ok(Outcome { artifacts, results, criteria: &[5] })
}

pub fn table1_check(cfg: &Config) -> Result<Outcome, CliError> {
    let alpha = cfg.f64("table1.alpha", 1.3)?;
    if alpha < 0.0 {
        return Err(cfg.reject("table1.alpha", "must be >= 0").into());
    }
    let space = SpaceSpec::new(cfg.usize("table1.n_fock", 64)?, 2)?;
    let longitudinal = ModelParams { delta: cfg.f64("table1.delta", 0.2)?, lambda: alpha, ..Default::default() };
    let transverse = ModelParams { epsilon: cfg.f64("table1.epsilon", 0.2)?, lambda: alpha, ..Default::default() };
    let sectors = [
        ("polarized", table1_residuals(&space, &longitudinal, Sector::Polarized)?),
        ("entangled", table1_residuals(&space, &transverse, Sector::Entangled)?),
    ];
    let csv = artifact("table1_check.csv", |w| {
        writeln!(w, "sector,channel,SR_numeric,SD_numeric,abs_dSR,abs_dSD")?;
        for (name, res) in &sectors {
            for (channel, v) in &res.rows {
                let cells: Vec<String> = v.iter().map(|&x| fmt_float(x)).collect();
                writeln!(w, "{name},{channel},{}", cells.join(","))?;
            }
        }
        Ok(())
    })?;
    let results = sectors
        .iter()
        .map(|(name, res)| (format!("max_residual_{name}"), fmt_float(res.max_abs)))
        .collect();
    Ok(Outcome { artifacts: vec![csv], results, criteria: &[4] })
}

pub fn dd(cfg: &Config) -> Result<Outcome, CliError> {
    let tau = cfg.f64("dd.tau_fid", 1e-5)?;
    let temperature = cfg.f64("dd.temperature", 12e-3)?;
    let kind = cfg.parsed::<SpectrumKind>("dd.kind", "one_over_f")?;
    let pulses = cfg.usize_list("dd.pulses", &[1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000])?;
    if pulses.is_empty() {
        return Err(cfg.reject("dd.pulses", "at least one pulse count is required").into());
    }
    if tau <= 0.0 {
        return Err(cfg.reject("dd.tau_fid", "must be positive").into());
    }
    let f_min = cfg.f64("dd.f_min_tau", DEFAULT_F_MIN_TAU)? / tau;
    let f_max = cfg.opt_f64("dd.f_max")?;

    let a = calibrate_amplitude(tau, temperature, kind, Some(f_min), f_max)?;
    let spectrum = NoiseSpectrum::new(kind, a).with_cutoffs(Some(f_min), f_max);
    let rows = suppression_sweep(&pulses, tau, temperature, &spectrum)?;

    let csv = artifact("dd_suppression.csv", |w| write_suppression_csv(w, &rows))?;
    let record = artifact("dd_calibration.txt", |w| {
        writeln!(w, "A={}", fmt_float(a))?;
        writeln!(w, "kind={}", kind.name())?;
        writeln!(w, "tau_fid={}", fmt_float(tau))?;
        writeln!(w, "temperature={}", fmt_float(temperature))?;
        writeln!(w, "f_min={}", fmt_float(f_min))?;
        match f_max {
            Some(f) => writeln!(w, "f_max={}", fmt_float(f)),
            None => writeln!(w, "f_max=1e3*max(N,1)/tau"),
        }
    })?;
    let mut results = vec![("A".to_string(), fmt_float(a))];
    results.extend(rows.iter().map(|r| (format!("alpha_{}", r.n), fmt_float(r.alpha))));
    Ok(Outcome { artifacts: vec![csv, record], results, criteria: &[7] })
}

fn protocol_config(cfg: &Config) -> Result<ProtocolConfig, ConfigError> {
    let base = ProtocolConfig::default();
    let a_sq = cfg.f64("protocol.a_squared", base.amplitudes.0.norm_sqr())?;
    if !(0.0..=1.0).contains(&a_sq) {
        return Err(cfg.reject("protocol.a_squared", "must lie in [0, 1]"));
    }
    let b_phase = cfg.f64("protocol.b_phase", 0.0)?;
    let schedule = cfg.f64_list("protocol.schedule", &base.schedule)?;
    let schedule: [f64; 4] = schedule
        .try_into()
        .map_err(|_| cfg.reject("protocol.schedule", "expected four pulse centers"))?;
    let pulse_shape = match cfg.string("protocol.pulse_shape", "gaussian")?.as_str() {
        "gaussian" => PulseShape::Gaussian,
        "ideal" => PulseShape::Ideal,
        other => return Err(cfg.reject("protocol.pulse_shape", format!("expected `gaussian` or `ideal`, got `{other}`"))),
    };
    let r = ProtocolRates::default();
    let fd = FreeDecayConfig::default();
    Ok(ProtocolConfig {
        model: model(cfg, base.model)?,
        n_fock: cfg.usize("protocol.n_fock", base.n_fock)?,
        level_cap: cfg.usize("protocol.level_cap", base.level_cap)?,
        rates: ProtocolRates {
            gamma_atomic: cfg.f64("rates.gamma_atomic", r.gamma_atomic)?,
            gamma_phi_atomic: cfg.f64("rates.gamma_phi_atomic", r.gamma_phi_atomic)?,
            gamma_cavity: cfg.f64("rates.gamma_cavity", r.gamma_cavity)?,
            gamma_phi_cavity: cfg.f64("rates.gamma_phi_cavity", r.gamma_phi_cavity)?,
            gamma_se: cfg.f64("rates.gamma_se", r.gamma_se)?,
            s_dephasing: cfg.bool("rates.s_dephasing", r.s_dephasing)?,
            temperature: cfg.f64("rates.temperature", r.temperature)?,
        },
        amplitudes: (C64::new(a_sq.sqrt(), 0.0), C64::from_polar((1.0 - a_sq).sqrt(), b_phase)),
        clock_rate: cfg.f64("protocol.clock_rate", base.clock_rate)?,
        schedule,
        pulse_width: cfg.f64("protocol.pulse_width", base.pulse_width)?,
        pulse_area: cfg.f64("protocol.pulse_area", base.pulse_area)?,
        pulse_shape,
        include_retrieval: cfg.bool("protocol.include_retrieval", base.include_retrieval)?,
        t_end: cfg.f64("protocol.t_end", base.t_end)?,
        samples: cfg.usize("protocol.samples", base.samples)?,
        free_decay: FreeDecayConfig {
            lambda: cfg.f64("free_decay.lambda", fd.lambda)?,
            n_fock: cfg.usize("free_decay.n_fock", fd.n_fock)?,
            level_cap: cfg.usize("free_decay.level_cap", fd.level_cap)?,
        },
    })
}

pub fn protocol(cfg: &Config) -> Result<Outcome, CliError> {
    let pc = protocol_config(cfg)?;
    let advantage = cfg.bool("advantage.enabled", true)?;
    let threshold = cfg.f64("advantage.threshold", 0.9)?;
    let t_max = cfg.f64("advantage.t_max", 3e5)?;
    let free_t_max = cfg.f64("advantage.free_t_max", 2000.0)?;

    let trace = run_protocol(&pc)?;
    let csv = artifact("protocol_trace.csv", |w| trace.write_csv(w))?;
    let mut results = trace.manifest();

    let space = SpaceSpec::new(pc.n_fock, 3)?;
    let spec = diagonalize(&space, &pc.model, BasisChoice::DiagonalAtom)?;
    let aux = check_auxiliary_conditions(&spec, &model_atomic_operators())?;
    results.push(("auxiliary.omega_s_over_omega_q".into(), fmt_float(aux.omega_s_over_omega_q)));
    results.push(("auxiliary.omega_s_over_gap".into(), fmt_float(aux.omega_s_over_gap)));
    for e in &aux.entries {
        results.push((format!("auxiliary.{}.ratio", e.name), fmt_float(e.ratio)));
    }
    results.push(("auxiliary.pass".into(), aux.pass.to_string()));

    if advantage {
        let adv = memory_advantage(&pc, threshold, t_max, free_t_max)?;
        let show = |t: Option<f64>| t.map_or_else(|| "not reached".to_string(), fmt_float);
        results.push(("advantage.memory_time".into(), show(adv.memory_time)));
        results.push(("advantage.free_time".into(), show(adv.free_time)));
        results.push(("advantage.ratio_lower_bound".into(), show(adv.ratio_lower_bound())));
    }
    Ok(Outcome { artifacts: vec![csv], results, criteria: &[6, 8] })
}
