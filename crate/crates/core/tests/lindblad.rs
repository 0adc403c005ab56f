use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ultramem_core::hilbert::{make_operators, Operator, SpaceSpec, C64};
use ultramem_core::lindblad::{build_generator, evolve, EvolveOptions, LindbladGenerator, NoiseChannel};
use ultramem_core::memory_protocol::time_to_threshold;
use ultramem_core::rabi_model::{diagonalize, BasisChoice, ModelParams};

fn random_pure_state(k: usize, seed: u64) -> Operator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(k, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let v = &v / C64::new(v.norm(), 0.0);
    Operator::from_matrix(&v * v.adjoint()).unwrap()
}

fn small_generator(temperature: f64) -> LindbladGenerator {
    let space = SpaceSpec::new(3, 2).unwrap();
    let p = ModelParams { epsilon: 0.3, delta: 0.2, lambda: 0.4, ..Default::default() };
    let spec = diagonalize(&space, &p, BasisChoice::Bare).unwrap();
    let ops = make_operators(&space);
    let ch = vec![
        NoiseChannel::new("sx", ops.sigma_x, 0.05, 0.02).unwrap(),
        NoiseChannel::new("sz", ops.sigma_z, 0.01, 0.03).unwrap(),
        NoiseChannel::new("X", ops.x, 0.03, 0.0).unwrap(),
    ];
    build_generator(&spec.basis, &ch, temperature, space.dim()).unwrap()
}

fn propagate(l: &DMatrix<C64>, rho0: &Operator, t: f64) -> DMatrix<C64> {
    let k = rho0.dim();
    let v = DVector::from_column_slice(rho0.matrix().as_slice());
    let out = (l * C64::new(t, 0.0)).exp() * v;
    DMatrix::from_column_slice(k, k, out.as_slice())
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn agrees_with_superoperator_exponential() {
    for temperature in [0.0, 0.5] {
        let gen = small_generator(temperature);
        let l = gen.superoperator();
        let rho0 = random_pure_state(gen.level_cap(), 7);
        let times = [0.0, 1.0, 5.0, 20.0, 60.0];
        let tr = evolve(&gen, None, &rho0, &times, &EvolveOptions::default()).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let d = max_diff(tr.state(i).matrix(), &propagate(&l, &rho0, t));
            assert!(d < 1e-8, "T={temperature} t={t}: deviation {d:.3e}");
        }
        assert!(tr.max_trace_drift < 1e-7);
        assert!(tr.min_eigenvalue >= -1e-6);
    }
}

#[test]
fn superoperator_preserves_trace() {
    let gen = small_generator(0.5);
    let l = gen.superoperator();
    let k = gen.level_cap();
    // vec(I)^dag L = 0
    for col in 0..k * k {
        let s: C64 = (0..k).map(|i| l[(i + k * i, col)]).sum();
        assert!(s.norm() < 1e-12);
    }
}

#[test]
fn ground_state_is_stationary_at_zero_temperature() {
    let gen = small_generator(0.0);
    let rho0 = Operator::outer_basis(gen.level_cap(), 0, 0);
    let d = gen.apply(rho0.matrix());
    assert!(d.iter().all(|z| z.norm() < 1e-14));
    let tr = evolve(&gen, None, &rho0, &[0.0, 100.0], &EvolveOptions::default()).unwrap();
    assert!(max_diff(tr.state(1).matrix(), rho0.matrix()) < 1e-10);
}

#[test]
fn thermal_state_is_stationary_for_detailed_balance() {
    // the cavity is far detuned, so the channel couples only the lowest two levels
    let space = SpaceSpec::new(2, 2).unwrap();
    let p = ModelParams { omega_c: 10.0, delta: 0.4, ..Default::default() };
    let spec = diagonalize(&space, &p, BasisChoice::Bare).unwrap();
    let ops = make_operators(&space);
    let t = 0.3;
    let gen = build_generator(&spec.basis, &[NoiseChannel::new("sz", ops.sigma_z, 0.1, 0.0).unwrap()], t, 2).unwrap();
    let w = spec.gap();
    let boltz = (-w / t).exp();
    let mut m = DMatrix::zeros(2, 2);
    m[(0, 0)] = C64::new(1.0 / (1.0 + boltz), 0.0);
    m[(1, 1)] = C64::new(boltz / (1.0 + boltz), 0.0);
    let d = gen.apply(&m);
    assert!(d.iter().all(|z| z.norm() < 1e-14), "{d}");
}

fn excited_half_life(lambda: f64, t_max: f64) -> f64 {
    let space = SpaceSpec::new(40, 2).unwrap();
    let p = ModelParams { delta: 0.2, lambda, ..Default::default() };
    let spec = diagonalize(&space, &p, BasisChoice::Bare).unwrap();
    let ops = make_operators(&space);
    let ch = vec![
        NoiseChannel::new("sx", ops.sigma_x, 1e-3, 0.0).unwrap(),
        NoiseChannel::new("sy", ops.sigma_y, 1e-3, 0.0).unwrap(),
        NoiseChannel::new("sz", ops.sigma_z, 1e-3, 0.0).unwrap(),
    ];
    let gen = build_generator(&spec.basis, &ch, 0.0, 4).unwrap();
    let times: Vec<f64> = (0..=2000).map(|i| t_max * i as f64 / 2000.0).collect();
    let rho0 = Operator::outer_basis(4, 1, 1);
    let tr = evolve(&gen, None, &rho0, &times, &EvolveOptions::default()).unwrap();
    assert!(tr.max_trace_drift < 1e-7 && tr.min_eigenvalue >= -1e-6);
    let pop: Vec<f64> = (0..times.len()).map(|i| tr.state(i).get(1, 1).re).collect();
    time_to_threshold(&times, &pop, 0.5).expect("population crosses one half")
}

#[test]
fn polarized_pair_outlives_bare_atom() {
    let bare = excited_half_life(0.0, 2000.0);
    assert!((bare - std::f64::consts::LN_2 / 2e-3).abs() / bare < 1e-3, "bare half-life {bare}");
    let polarized = excited_half_life(1.3, 1e6);
    assert!(polarized / bare >= 500.0, "ratio {}", polarized / bare);
}

#[test]
fn bare_two_level_decay_is_exponential() {
    let space = SpaceSpec::new(2, 2).unwrap();
    let p = ModelParams { omega_c: 10.0, epsilon: 1.0, ..Default::default() };
    let spec = diagonalize(&space, &p, BasisChoice::Bare).unwrap();
    let ops = make_operators(&space);
    let gamma = 0.02;
    let gen = build_generator(&spec.basis, &[NoiseChannel::new("sx", ops.sigma_x, gamma, 0.0).unwrap()], 0.0, 2).unwrap();
    let times: Vec<f64> = (0..=50).map(|i| i as f64 * 4.0).collect();
    let tr = evolve(&gen, None, &Operator::outer_basis(2, 1, 1), &times, &EvolveOptions::default()).unwrap();
    for (i, &t) in times.iter().enumerate() {
        assert!((tr.state(i).get(1, 1).re - (-gamma * t).exp()).abs() < 1e-6);
    }
}

#[test]
fn randomized_states_stay_physical() {
    let gen = small_generator(0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let rho0 = random_pure_state(gen.level_cap(), rng.random());
        let tr = evolve(&gen, None, &rho0, &[0.0, 3.0, 30.0, 300.0], &EvolveOptions::default()).unwrap();
        assert!(tr.max_trace_drift < 1e-7);
        assert!(tr.min_eigenvalue >= -1e-6);
    }
}
