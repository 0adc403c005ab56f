//! One-shot fit of the low-frequency cutoff of the 1/f spectrum against the
//! target amplitude `A = 4.34e9` (tau_FID = 10 us, T = 12 mK).
//!
//! Bisects `f_min * tau` on a log scale, then evaluates `alpha_1000` with the
//! fitted cutoff so both constants can be compared under one convention.
//!
//! Run with `cargo run --release -p ultramem --example dd_cutoff_fit`.

use ultramem_core::dd_filter::{calibrate_amplitude, suppression_factor, NoiseSpectrum, SpectrumKind};

const TAU: f64 = 1e-5;
const TEMP: f64 = 12e-3;
const TARGET: f64 = 4.34e9;

fn amplitude(f_min_tau: f64) -> f64 {
    calibrate_amplitude(TAU, TEMP, SpectrumKind::OneOverF, Some(f_min_tau / TAU), None).expect("quadrature")
}

fn main() {
    let (mut lo, mut hi) = (1e-2f64.ln(), 9e2f64.ln());
    println!("f_min*tau = 1e-2 -> A = {:.6e}", amplitude(1e-2));
    println!("f_min*tau = 9e2  -> A = {:.6e}", amplitude(9e2));
    if amplitude(hi.exp()) < TARGET {
        println!("target not reachable below f_max");
        return;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if amplitude(mid.exp()) < TARGET {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let fit = 0.5 * (lo + hi);
    let f_min = fit.exp() / TAU;
    let a = amplitude(fit.exp());
    println!("fitted f_min*tau = {:.6e} (f_min = {:.6e} Hz), A = {:.6e}", fit.exp(), f_min, a);
    let spec = NoiseSpectrum::new(SpectrumKind::OneOverF, a).with_cutoffs(Some(f_min), None);
    let alpha = suppression_factor(1000, TAU, TEMP, &spec).expect("quadrature");
    println!("alpha_1000 at fitted cutoff = {alpha:.6e}");
}
