use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ultramem_core::dd_filter::{
    beta_amplification, calibrate_amplitude, chi, chi_detailed, polarized_pauli_elements, suppression_factor,
    DdSequence, NoiseSpectrum, SpectrumKind,
};
use ultramem_core::hilbert::SpaceSpec;

const TAU: f64 = 1e-5;
const TEMP: f64 = 12e-3;

fn fixture_chi() -> f64 {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/dd_chi_n1000.txt")).unwrap();
    text.lines()
        .find(|l| !l.starts_with('#') && !l.trim().is_empty())
        .unwrap()
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn hahn_echo_identity_on_random_arguments() {
    let s = DdSequence::equidistant(1, 1.0, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let z: f64 = rng.random_range(0.0..200.0);
        let exact = 8.0 * (z / 4.0).sin().powi(4);
        assert!((s.filter(z) - exact).abs() < 1e-12, "z = {z}");
    }
}

fn small_z_order(seq: &DdSequence) -> f64 {
    let (z1, z2) = (1e-2, 2e-2);
    (seq.filter(z2) / seq.filter(z1)).log2()
}

#[test]
fn filter_order_at_small_argument() {
    let fid = DdSequence::free_induction(1.0, 0.0).unwrap();
    assert!((small_z_order(&fid) - 2.0).abs() < 1e-3);
    let hahn = DdSequence::equidistant(1, 1.0, 0.0).unwrap();
    assert!((small_z_order(&hahn) - 4.0).abs() < 1e-3);
    // delta_j = j/(N+1) leaves a net static phase for even N
    let even = DdSequence::equidistant(2, 1.0, 0.0).unwrap();
    assert!((small_z_order(&even) - 2.0).abs() < 1e-3);
    // balanced two-pulse placement cancels the first two moments
    let balanced = DdSequence::custom(vec![0.25, 0.75], 1.0, 0.0).unwrap();
    assert!((small_z_order(&balanced) - 6.0).abs() < 1e-2);
}

#[test]
fn white_noise_free_induction_limit() {
    let s0 = 3.0e3;
    let seq = DdSequence::free_induction(TAU, 0.0).unwrap();
    let spec = NoiseSpectrum::new(SpectrumKind::White, s0).with_cutoffs(Some(0.0), None);
    let value = chi(&seq, &spec).unwrap();
    let exact = PI * s0 * TAU / 2.0;
    assert!((value - exact).abs() / exact < 1e-2, "{value} vs {exact}");
}

#[test]
fn chi_is_linear_in_amplitude_and_zero_at_zero() {
    let seq = DdSequence::equidistant(4, TAU, TEMP).unwrap();
    let one = chi(&seq, &NoiseSpectrum::new(SpectrumKind::OneOverF, 1.0)).unwrap();
    let many = chi(&seq, &NoiseSpectrum::new(SpectrumKind::OneOverF, 37.5)).unwrap();
    assert!((many / one - 37.5).abs() < 1e-10);
    assert_eq!(chi(&seq, &NoiseSpectrum::new(SpectrumKind::OneOverF, 0.0)).unwrap(), 0.0);
}

#[test]
fn n1000_matches_brute_force_fixture() {
    let seq = DdSequence::equidistant(1000, TAU, TEMP).unwrap();
    let r = chi_detailed(&seq, &NoiseSpectrum::new(SpectrumKind::OneOverF, 1.0)).unwrap();
    let reference = fixture_chi();
    assert!((r.value - reference).abs() / reference < 5e-3);
    assert!(r.error_estimate <= 1e-6 * r.value);
}

#[test]
fn calibration_round_trip_and_monotonicity() {
    let a = calibrate_amplitude(TAU, TEMP, SpectrumKind::OneOverF, None, None).unwrap();
    let seq = DdSequence::free_induction(TAU, TEMP).unwrap();
    let spec = NoiseSpectrum::new(SpectrumKind::OneOverF, a);
    assert!((chi(&seq, &spec).unwrap() - 1.0).abs() < 1e-4);
    assert!((suppression_factor(0, TAU, TEMP, &spec).unwrap() - 1.0).abs() < 1e-4);
    // fixed physical cutoffs so only tau changes
    let fixed = |tau: f64| calibrate_amplitude(tau, TEMP, SpectrumKind::OneOverF, Some(1e3), Some(1e8)).unwrap();
    assert!(fixed(2.0 * TAU) < fixed(TAU));
}

#[test]
fn suppression_ratios_do_not_depend_on_overall_scale() {
    let a = calibrate_amplitude(TAU, TEMP, SpectrumKind::OneOverF, None, None).unwrap();
    let base = NoiseSpectrum::new(SpectrumKind::OneOverF, a);
    let alpha = suppression_factor(8, TAU, TEMP, &base).unwrap();
    // calibrating against a reference spectrum of a different overall scale
    let fid = DdSequence::free_induction(TAU, TEMP).unwrap();
    let scale = 1e4;
    let recalibrated = scale / chi(&fid, &NoiseSpectrum::new(SpectrumKind::OneOverF, scale)).unwrap();
    let other = NoiseSpectrum::new(SpectrumKind::OneOverF, recalibrated);
    let alpha2 = suppression_factor(8, TAU, TEMP, &other).unwrap();
    assert!((alpha - alpha2).abs() / alpha < 1e-10);
}

#[test]
fn beta_and_rotated_pauli_elements() {
    assert_eq!(beta_amplification(0.0).unwrap(), 1.0);
    assert!((beta_amplification(1.3).unwrap() - 3.38f64.exp()).abs() < 1e-10);
    assert!(beta_amplification(3.5).is_err());
    assert!(beta_amplification(-0.1).is_err());
    let space = SpaceSpec::new(48, 2).unwrap();
    for alpha in [0.0, 0.6, 1.3] {
        let el = polarized_pauli_elements(&space, alpha).unwrap();
        assert!((el.sigma_y.im.abs() - el.beta_inv).abs() < 1e-10);
        assert!(el.sigma_y.re.abs() < 1e-12);
        assert!((el.sigma_z.norm() - el.beta_inv).abs() < 1e-10);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(DdSequence::equidistant(3, -1.0, 0.0).is_err());
    assert!(DdSequence::custom(vec![0.5, 0.2], 1.0, 0.0).is_err());
    assert!(DdSequence::custom(vec![1.0], 1.0, 0.0).is_err());
    let seq = DdSequence::free_induction(TAU, TEMP).unwrap();
    let bad = NoiseSpectrum::new(SpectrumKind::OneOverF, 1.0).with_cutoffs(Some(0.0), None);
    assert!(chi(&seq, &bad).is_err());
    assert!("pink".parse::<SpectrumKind>().is_err());
}
