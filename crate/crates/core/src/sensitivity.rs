//! Relaxation and pure-dephasing sensitivities of a two-level encoding.
//!
//! For a pair `(C_-, C_+)` and a channel operator `S`:
//! `S_R = |<C_+|S|C_->|` and `S_D = |<C_+|S|C_+> - <C_-|S|C_->| / 2`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{make_operators, Operator, SpaceSpec, StateVector};
use crate::io::fmt_float;
use crate::rabi_model::{
    diagonalize, entangled_states, polarized_states, BasisChoice, ModelParams, Spectrum, DEGENERACY_TOL,
};

/// Tolerance of the orthonormality check on input pairs.
pub const PAIR_TOL: f64 = 1e-8;

/// Names of the five standard channels, in output order.
pub const CANONICAL_NAMES: [&str; 5] = ["sx", "sy", "sz", "X", "Y"];

#[derive(Clone, Debug)]
pub struct Channel {
    pub name: String,
    pub op: Operator,
}

/// `sigma_x, sigma_y, sigma_z, X, Y` on `space`. The atomic operators act in
/// whatever atomic basis the Hamiltonian of interest was written in.
pub fn canonical_channels(space: &SpaceSpec) -> Vec<Channel> {
    let ops = make_operators(space);
    [ops.sigma_x, ops.sigma_y, ops.sigma_z, ops.x, ops.y]
        .into_iter()
        .zip(CANONICAL_NAMES)
        .map(|(op, name)| Channel { name: name.into(), op })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSensitivity {
    pub name: String,
    /// `S_R`.
    pub relaxation: f64,
    /// `S_D`.
    pub dephasing: f64,
}

fn check_pair(c_minus: &StateVector, c_plus: &StateVector) -> Result<()> {
    let defect = [
        (c_minus.norm() - 1.0).abs(),
        (c_plus.norm() - 1.0).abs(),
        c_minus.inner(c_plus).norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if defect > PAIR_TOL {
        Err(Error::NotOrthonormal { defect })
    } else {
        Ok(())
    }
}

pub fn sensitivities(
    c_minus: &StateVector,
    c_plus: &StateVector,
    channels: &[Channel],
) -> Result<Vec<ChannelSensitivity>> {
    check_pair(c_minus, c_plus)?;
    channels
        .iter()
        .map(|ch| {
            if ch.op.dim() != c_minus.dim() {
                return Err(Error::DimensionMismatch {
                    expected: c_minus.dim(),
                    got: ch.op.dim(),
                });
            }
            let r = ch.op.sandwich(c_plus, c_minus).norm();
            let d = (ch.op.expectation(c_plus) - ch.op.expectation(c_minus)).norm() / 2.0;
            Ok(ChannelSensitivity {
                name: ch.name.clone(),
                relaxation: r,
                dephasing: d,
            })
        })
        .collect()
}

/// Sensitivities inside an exactly degenerate pair: the channel is
/// diagonalized within the pair, so `S_R = 0` and `S_D` is half the
/// eigenvalue spread of the 2x2 block.
pub fn degenerate_sensitivities(
    c_minus: &StateVector,
    c_plus: &StateVector,
    channels: &[Channel],
) -> Result<Vec<ChannelSensitivity>> {
    check_pair(c_minus, c_plus)?;
    Ok(channels
        .iter()
        .map(|ch| {
            let a = ch.op.expectation(c_minus).re;
            let d = ch.op.expectation(c_plus).re;
            let b = ch.op.sandwich(c_minus, c_plus).norm();
            let spread = ((a - d).powi(2) + 4.0 * b * b).sqrt();
            ChannelSensitivity {
                name: ch.name.clone(),
                relaxation: 0.0,
                dephasing: spread / 2.0,
            }
        })
        .collect())
}

/// One row of the closed-form table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Table1Row {
    pub channel: &'static str,
    pub sr_e: f64,
    pub sd_e: f64,
    pub sr_p: f64,
    pub sd_p: f64,
}

/// Closed-form sensitivities of the entangled and polarized pairs with the
/// displaced-state overlap `exp(-2 alpha^2)` substituted.
pub fn table1_analytic(alpha: f64) -> Result<[Table1Row; 5]> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let o = (-2.0 * alpha * alpha).exp();
    let row = |channel, sr_e, sd_e, sr_p, sd_p| Table1Row { channel, sr_e, sd_e, sr_p, sd_p };
    Ok([
        row("sx", 1.0, 0.0, 0.0, 1.0),
        row("sy", o, 0.0, o, 0.0),
        row("sz", 0.0, o, o, 0.0),
        row("X", 2.0 * alpha, 0.0, 0.0, 2.0 * alpha),
        row("Y", 0.0, 0.0, 0.0, 0.0),
    ])
}

/// Which pair of table columns a numeric check targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sector {
    /// Longitudinal case, compared with the polarized columns.
    Polarized,
    /// Transverse case, compared with the entangled columns.
    Entangled,
}

#[derive(Clone, Debug)]
pub struct Table1Residual {
    pub sector: Sector,
    pub alpha: f64,
    /// Per channel: (numeric S_R, numeric S_D, |dS_R|, |dS_D|).
    pub rows: Vec<(String, [f64; 4])>,
    pub max_abs: f64,
}

/// Compare the numeric lowest dressed pair of the bare Hamiltonian `p`
/// against the closed-form columns for `alpha = lambda/wc`.
pub fn table1_residuals(space: &SpaceSpec, p: &ModelParams, sector: Sector) -> Result<Table1Residual> {
    let spec = diagonalize(space, p, BasisChoice::Bare)?;
    let (lo, hi) = (spec.basis.state(0), spec.basis.state(1));
    let numeric = sensitivities(&lo, &hi, &canonical_channels(space))?;
    let alpha = p.alpha();
    let table = table1_analytic(alpha)?;
    let mut rows = Vec::new();
    let mut max_abs: f64 = 0.0;
    for (n, t) in numeric.iter().zip(table.iter()) {
        let (r, d) = match sector {
            Sector::Polarized => (t.sr_p, t.sd_p),
            Sector::Entangled => (t.sr_e, t.sd_e),
        };
        let dr = (n.relaxation - r).abs();
        let dd = (n.dephasing - d).abs();
        max_abs = max_abs.max(dr).max(dd);
        rows.push((n.name.clone(), [n.relaxation, n.dephasing, dr, dd]));
    }
    Ok(Table1Residual {
        sector,
        alpha,
        rows,
        max_abs,
    })
}

/// Sensitivities of the analytic polarized and entangled pairs themselves.
pub fn analytic_pair_sensitivities(
    space: &SpaceSpec,
    p: &ModelParams,
) -> Result<(Vec<ChannelSensitivity>, Vec<ChannelSensitivity>)> {
    let ch = canonical_channels(space);
    let (pm, pp) = polarized_states(space, p, BasisChoice::Bare)?;
    let (em, ep) = entangled_states(space, p, BasisChoice::Bare)?;
    Ok((sensitivities(&em, &ep, &ch)?, sensitivities(&pm, &pp, &ch)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityRecord {
    pub lambda_over_wc: f64,
    pub theta: f64,
    pub channels: Vec<ChannelSensitivity>,
    /// `max_k S_R^2`.
    pub max_relax_sq: f64,
    /// `max_k S_D^2`.
    pub max_dephase_sq: f64,
    pub degenerate: bool,
    pub error: Option<String>,
}

impl SensitivityRecord {
    pub fn channel(&self, name: &str) -> Option<&ChannelSensitivity> {
        self.channels.iter().find(|c| c.name == name)
    }

    fn failed(lambda_over_wc: f64, theta: f64, e: Error) -> Self {
        Self {
            lambda_over_wc,
            theta,
            channels: Vec::new(),
            max_relax_sq: f64::NAN,
            max_dephase_sq: f64::NAN,
            degenerate: false,
            error: Some(e.to_string()),
        }
    }
}

/// Quantity plotted by a map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Relaxation,
    Dephasing,
}

impl MapKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Relaxation => "relaxation",
            Self::Dephasing => "dephasing",
        }
    }
}

/// Sensitivity of the lowest dressed pair of the diagonal-atom Hamiltonian.
pub fn record_at(space: &SpaceSpec, omega_q: f64, lambda: f64, theta: f64) -> Result<SensitivityRecord> {
    let p = ModelParams {
        lambda,
        ..Default::default()
    }
    .with_polar_atom(omega_q, theta);
    let spec = diagonalize(space, &p, BasisChoice::DiagonalAtom)?;
    record_from_spectrum(&spec, lambda, theta)
}

fn record_from_spectrum(spec: &Spectrum, lambda: f64, theta: f64) -> Result<SensitivityRecord> {
    let (lo, hi) = (spec.basis.state(0), spec.basis.state(1));
    let ch = canonical_channels(&spec.space);
    let degenerate = spec.gap() < DEGENERACY_TOL;
    let channels = if degenerate {
        degenerate_sensitivities(&lo, &hi, &ch)?
    } else {
        sensitivities(&lo, &hi, &ch)?
    };
    let max_relax_sq = channels.iter().map(|c| c.relaxation.powi(2)).fold(0.0, f64::max);
    let max_dephase_sq = channels.iter().map(|c| c.dephasing.powi(2)).fold(0.0, f64::max);
    Ok(SensitivityRecord {
        lambda_over_wc: lambda,
        theta,
        channels,
        max_relax_sq,
        max_dephase_sq,
        degenerate,
        error: None,
    })
}

/// Records on a `lambdas x thetas` grid, stored lambda-major.
#[derive(Clone, Debug)]
pub struct SensitivityMap {
    pub omega_q: f64,
    pub lambdas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub records: Vec<SensitivityRecord>,
}

/// `n` points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Default grids: lambda in [0, 1.5] step 0.025, theta in [0, pi/2] step pi/120.
pub fn default_grids() -> (Vec<f64>, Vec<f64>) {
    (linspace(0.0, 1.5, 61), linspace(0.0, std::f64::consts::FRAC_PI_2, 61))
}

fn check_grid(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() || g.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(format!(
            "{name} grid must be non-empty and strictly increasing"
        )));
    }
    Ok(())
}

pub fn sweep_map(space: &SpaceSpec, omega_q: f64, lambdas: &[f64], thetas: &[f64]) -> Result<SensitivityMap> {
    if !(omega_q.is_finite() && omega_q > 0.0) {
        return Err(Error::InvalidParameter("omega_q must be positive".into()));
    }
    check_grid("lambda", lambdas)?;
    check_grid("theta", thetas)?;
    let nt = thetas.len();
    let records = (0..lambdas.len() * nt)
        .into_par_iter()
        .map(|idx| {
            let (l, t) = (lambdas[idx / nt], thetas[idx % nt]);
            record_at(space, omega_q, l, t).unwrap_or_else(|e| SensitivityRecord::failed(l, t, e))
        })
        .collect();
    Ok(SensitivityMap {
        omega_q,
        lambdas: lambdas.to_vec(),
        thetas: thetas.to_vec(),
        records,
    })
}

impl SensitivityMap {
    pub fn record(&self, i_lambda: usize, i_theta: usize) -> &SensitivityRecord {
        &self.records[i_lambda * self.thetas.len() + i_theta]
    }

    pub fn failures(&self) -> impl Iterator<Item = &SensitivityRecord> {
        self.records.iter().filter(|r| r.error.is_some())
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header: Vec<String> = ["lambda", "theta", "max_relax_sq", "max_dephase_sq"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for n in CANONICAL_NAMES {
            header.push(format!("SR_{n}"));
            header.push(format!("SD_{n}"));
        }
        header.push("log10_max_relax_sq".into());
        header.push("log10_max_dephase_sq".into());
        writeln!(w, "{}", header.join(","))?;
        let log = |x: f64| fmt_float(x.max(1e-300).log10());
        for r in &self.records {
            let mut row = vec![
                fmt_float(r.lambda_over_wc),
                fmt_float(r.theta),
                fmt_float(r.max_relax_sq),
                fmt_float(r.max_dephase_sq),
            ];
            for n in CANONICAL_NAMES {
                match r.channel(n) {
                    Some(c) => {
                        row.push(fmt_float(c.relaxation));
                        row.push(fmt_float(c.dephasing));
                    }
                    None => row.extend(["nan".to_string(), "nan".to_string()]),
                }
            }
            row.push(log(r.max_relax_sq));
            row.push(log(r.max_dephase_sq));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Gnuplot-compatible contour description reading the CSV written by
    /// [`SensitivityMap::write_csv`].
    pub fn write_plot_script<W: std::io::Write>(&self, mut w: W, csv_name: &str, kind: MapKind) -> std::io::Result<()> {
        let column = match kind {
            MapKind::Relaxation => 15,
            MapKind::Dephasing => 16,
        };
        writeln!(w, "# log10 of the maximal {} sensitivity", kind.name())?;
        writeln!(w, "set datafile separator ','")?;
        writeln!(w, "set xlabel 'lambda/omega_c'")?;
        writeln!(w, "set ylabel 'theta'")?;
        writeln!(w, "set view map")?;
        writeln!(w, "set contour base")?;
        writeln!(w, "set cntrparam levels auto 12")?;
        writeln!(w, "set dgrid3d {},{}", self.thetas.len(), self.lambdas.len())?;
        writeln!(w, "set pm3d at b")?;
        writeln!(w, "splot '{csv_name}' every ::1 using 1:2:{column} with lines notitle")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_channel_is_silent() {
        let space = SpaceSpec::new(10, 2).unwrap();
        let p = ModelParams { lambda: 0.4, ..Default::default() };
        let (a, b) = polarized_states(&space, &p, BasisChoice::Bare).unwrap();
        let id = Channel { name: "id".into(), op: Operator::identity(space.dim()) };
        let s = sensitivities(&a, &b, &[id]).unwrap();
        assert!(s[0].relaxation < 1e-15 && s[0].dephasing < 1e-15);
    }

    #[test]
    fn rejects_non_orthogonal_pair() {
        let space = SpaceSpec::new(10, 2).unwrap();
        let a = StateVector::basis(space.dim(), 0);
        let ch = canonical_channels(&space);
        assert!(matches!(sensitivities(&a, &a, &ch), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn closed_forms_at_zero_and_finite_alpha() {
        let t = table1_analytic(0.0).unwrap();
        assert_eq!((t[1].sr_e, t[1].sr_p), (1.0, 1.0));
        assert_eq!((t[3].sr_e, t[3].sd_p), (0.0, 0.0));
        let t = table1_analytic(1.3).unwrap();
        assert!((t[2].sd_e - (-3.38f64).exp()).abs() < 1e-15);
        assert_eq!(t[4], Table1Row { channel: "Y", sr_e: 0.0, sd_e: 0.0, sr_p: 0.0, sd_p: 0.0 });
        assert!(table1_analytic(-0.1).is_err());
    }

    #[test]
    fn analytic_pairs_reproduce_table() {
        let space = SpaceSpec::new(50, 2).unwrap();
        for alpha in [0.0, 0.6, 1.3] {
            let p = ModelParams { lambda: alpha, ..Default::default() };
            let (e, pp) = analytic_pair_sensitivities(&space, &p).unwrap();
            let t = table1_analytic(alpha).unwrap();
            for i in 0..5 {
                assert!((e[i].relaxation - t[i].sr_e).abs() < 1e-10);
                assert!((e[i].dephasing - t[i].sd_e).abs() < 1e-10);
                assert!((pp[i].relaxation - t[i].sr_p).abs() < 1e-10);
                assert!((pp[i].dephasing - t[i].sd_p).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decoupled_column() {
        let space = SpaceSpec::new(12, 2).unwrap();
        for theta in [0.0, 0.7, FRAC_PI_2] {
            let r = record_at(&space, 0.3, 0.0, theta).unwrap();
            assert!((r.channel("sx").unwrap().relaxation - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_pair_has_no_relaxation() {
        let space = SpaceSpec::new(6, 2).unwrap();
        let ch = canonical_channels(&space);
        let a = StateVector::basis(space.dim(), 0);
        let b = StateVector::basis(space.dim(), space.n_fock());
        let s = degenerate_sensitivities(&a, &b, &ch).unwrap();
        assert!((s[0].dephasing - 1.0).abs() < 1e-15);
        assert!(s.iter().all(|c| c.relaxation == 0.0));
    }

    #[test]
    fn map_keeps_grid_order() {
        let space = SpaceSpec::new(16, 2).unwrap();
        let m = sweep_map(&space, 0.2, &[0.0, 0.3, 0.6], &[0.0, 1.0]).unwrap();
        assert_eq!(m.records.len(), 6);
        assert_eq!(m.record(2, 1).lambda_over_wc, 0.6);
        assert_eq!(m.record(2, 1).theta, 1.0);
        assert!(sweep_map(&space, 0.0, &[0.1], &[0.1]).is_err());
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda,theta,max_relax_sq,max_dephase_sq,SR_sx,SD_sx,"));
        assert_eq!(text.lines().count(), 7);
    }
}
