use std::f64::consts::FRAC_PI_2;

use ultramem_core::hilbert::{coherent_state, SpaceSpec, C64};
use ultramem_core::rabi_model::ModelParams;
use ultramem_core::sensitivity::{
    analytic_pair_sensitivities, canonical_channels, linspace, record_at, sensitivities, sweep_map,
    table1_analytic, table1_residuals, MapKind, Sector,
};

fn space(nf: usize) -> SpaceSpec {
    SpaceSpec::new(nf, 2).unwrap()
}

#[test]
fn coherent_overlap_law() {
    let sp = space(64);
    for i in 0..=15 {
        let a = 0.1 * i as f64;
        let plus = coherent_state(&sp, C64::new(a, 0.0)).unwrap();
        let minus = coherent_state(&sp, C64::new(-a, 0.0)).unwrap();
        assert!((plus.inner(&minus).re - (-2.0 * a * a).exp()).abs() < 1e-8, "alpha {a}");
    }
}

#[test]
fn polarized_columns_are_exact_in_the_longitudinal_case() {
    let sp = space(64);
    for lambda in [0.5, 1.3] {
        let p = ModelParams { delta: 0.2, lambda, ..Default::default() };
        let r = table1_residuals(&sp, &p, Sector::Polarized).unwrap();
        assert!(r.max_abs < 1e-6, "lambda {lambda}: {}", r.max_abs);
    }
}

#[test]
fn entangled_columns_are_approached_asymptotically() {
    let sp = space(64);
    let grid = linspace(0.8, 1.5, 8);
    let res: Vec<f64> = grid
        .iter()
        .map(|&lambda| {
            let p = ModelParams { epsilon: 0.2, lambda, ..Default::default() };
            table1_residuals(&sp, &p, Sector::Entangled).unwrap().max_abs
        })
        .collect();
    assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
    assert!(*res.last().unwrap() < 0.05);
}

#[test]
fn analytic_pairs_reproduce_the_table() {
    let sp = space(64);
    let alpha = 1.1;
    let (e, p) = analytic_pair_sensitivities(&sp, &ModelParams { lambda: alpha, ..Default::default() }).unwrap();
    let table = table1_analytic(alpha).unwrap();
    for ((row, es), ps) in table.iter().zip(&e).zip(&p) {
        assert_eq!(row.channel, es.name);
        assert!((es.relaxation - row.sr_e).abs() < 1e-9 && (es.dephasing - row.sd_e).abs() < 1e-9);
        assert!((ps.relaxation - row.sr_p).abs() < 1e-9 && (ps.dephasing - row.sd_p).abs() < 1e-9);
    }
}

#[test]
fn sensitivity_map_spot_values() {
    let sp = space(48);
    let r = record_at(&sp, 0.2, 1.3, FRAC_PI_2).unwrap();
    assert!((r.max_relax_sq - 1.16e-3).abs() / 1.16e-3 < 0.2);
    let x = r.channel("X").unwrap();
    assert!((x.dephasing.powi(2) - 6.76).abs() / 6.76 < 0.01);
    let r = record_at(&sp, 0.5, 0.8, 0.0).unwrap();
    assert!((r.max_dephase_sq - 7e-2).abs() / 7e-2 < 0.3);
    let x = r.channel("X").unwrap();
    assert!((x.relaxation.powi(2) - 2.47).abs() / 2.47 < 0.05);
}

#[test]
fn map_csv_and_plot_script() {
    let sp = space(24);
    let map = sweep_map(&sp, 0.2, &linspace(0.0, 1.0, 4), &linspace(0.0, FRAC_PI_2, 3)).unwrap();
    assert_eq!(map.records.len(), 12);
    assert_eq!(map.failures().count(), 0);
    let mut csv = Vec::new();
    map.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("lambda,theta,max_relax_sq,max_dephase_sq,SR_sx,SD_sx"));
    assert_eq!(header.split(',').count(), 16);
    assert_eq!(csv.lines().count(), 13);
    let mut gp = Vec::new();
    map.write_plot_script(&mut gp, "map.csv", MapKind::Dephasing).unwrap();
    assert!(String::from_utf8(gp).unwrap().contains("map.csv"));
}

#[test]
fn non_orthonormal_pair_is_rejected() {
    let sp = space(16);
    let a = coherent_state(&sp, C64::new(0.2, 0.0)).unwrap();
    let a = ultramem_core::hilbert::StateVector::basis(2, 0).kron(&a);
    assert!(sensitivities(&a, &a, &canonical_channels(&sp)).is_err());
}

#[test]
fn bad_grids_are_rejected() {
    let sp = space(16);
    assert!(sweep_map(&sp, 0.2, &[0.2, 0.1], &[0.0]).is_err());
    assert!(sweep_map(&sp, 0.0, &[0.1], &[0.0]).is_err());
}
