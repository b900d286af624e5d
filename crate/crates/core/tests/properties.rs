use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use holosim::device::{hamiltonian, DeviceParams, DrivePulse};
use holosim::dynamics::{evolve_lindblad, evolve_schrodinger, linspace, FnHamiltonian, IntegratorConfig};
use holosim::holonomy::*;
use holosim::linalg::{hermitian_deviation, operator_norm, CMatrix, CVector, C64};
use holosim::pulse::EnvelopeSpec;
use holosim::quantum::*;
use holosim::tomography::{pauli_vector, PauliVector};

fn complex_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n).prop_map(move |v| CMatrix::from_iterator(n, n, v.into_iter().map(|(a, b)| C64::new(a, b))))
}

fn density(space: HilbertSpace) -> impl Strategy<Value = DensityMatrix> {
    let n = space.total_dim();
    complex_matrix(n).prop_filter_map("nonzero", move |g| {
        let m = &g * g.adjoint();
        let t = m.trace().re;
        (t > 1e-6).then(|| DensityMatrix::new(space.clone(), m / C64::new(t, 0.0)).unwrap())
    })
}

fn lambdas() -> impl Strategy<Value = HolonomyParams> {
    (0.0..PI, 0.0..TAU, 0.0..TAU).prop_map(|(t, p1, p2)| {
        HolonomyParams::from_lambdas(C64::from_polar((t / 2.0).sin(), p1), C64::from_polar((t / 2.0).cos(), p2)).unwrap()
    })
}

fn small_dims() -> impl Strategy<Value = Vec<usize>> {
    (2..=4usize, 2..=4usize, 2..=3usize).prop_map(|(a, b, c)| vec![a, b, c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lowering_adjoint_is_exact(dims in small_dims(), sub in 0..3usize) {
        let space = HilbertSpace::new(dims).unwrap();
        let b = lowering_operator(&space, sub).unwrap();
        let bd = b.dagger();
        prop_assert_eq!(bd.matrix(), &b.matrix().adjoint());
    }

    #[test]
    fn partial_trace_composes(rho in density(HilbertSpace::new(vec![3, 2, 2]).unwrap())) {
        let joint = partial_trace(&rho, &[0]).unwrap();
        let stepwise = partial_trace(&partial_trace(&rho, &[0, 1]).unwrap(), &[0]).unwrap();
        prop_assert!((joint.matrix() - stepwise.matrix()).norm() < 1e-12);
        let other = partial_trace(&partial_trace(&rho, &[0, 2]).unwrap(), &[0]).unwrap();
        prop_assert!((joint.matrix() - other.matrix()).norm() < 1e-12);
    }

    #[test]
    fn fidelity_is_bounded(a in density(HilbertSpace::new(vec![2, 2]).unwrap()), b in density(HilbertSpace::new(vec![2, 2]).unwrap())) {
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&f), "{}", f);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn envelope_is_nonnegative_and_linear(amp in 0.0..10.0f64, flat in 0.0..300e-9f64, sigma in 0.5e-9..10e-9f64, k in 0.0..5.0f64) {
        let s = EnvelopeSpec::flat_top_gaussian(amp, flat, sigma).unwrap();
        for t in linspace(-10e-9, s.duration + 10e-9, 400) {
            let v = s.value(t);
            prop_assert!(v >= 0.0);
            if t < 0.0 || t > s.duration {
                prop_assert_eq!(v, 0.0);
            }
        }
        let scaled = s.with_amplitude(amp * k);
        prop_assert!((scaled.area() - k * s.area()).abs() <= 1e-12 * (1.0 + k * s.area()));
        let peak = linspace(0.0, s.duration, 20001).into_iter().map(|t| s.value(t)).fold(0.0, f64::max);
        prop_assert!((peak - amp).abs() <= 1e-9 * amp.max(1.0));
    }

    #[test]
    fn device_hamiltonian_is_hermitian(e1 in 0.0..3e9f64, e2 in 0.0..3e9f64, f1 in 1e10..3e10f64, f2 in 1e10..3e10f64, ph in 0.0..TAU, t in 0.0..220e-9f64) {
        let p = DeviceParams::reference();
        let shape = EnvelopeSpec::flat_top_gaussian(1.0, 206e-9, 3.5e-9).unwrap();
        let d = [
            DrivePulse::new(0, shape.with_amplitude(e1), f1),
            DrivePulse::new(1, shape.with_amplitude(e2), f2).with_phase(ph),
        ];
        let h = hamiltonian(&p, &d, t).unwrap();
        prop_assert!(hermitian_deviation(h.matrix()) <= 1e-12 * operator_norm(h.matrix()));
    }

    #[test]
    fn a_cubed_is_a(p in lambdas()) {
        let a = a_matrix(&p);
        prop_assert!(operator_norm(&(&a * &a * &a - &a)) < 1e-14);
    }

    #[test]
    fn gate_is_unitary_hermitian_involutive(theta in 0.0..PI, phi in 0.0..TAU) {
        let g = gate_matrix(&params_from_theta_phi(theta, phi).unwrap());
        prop_assert!(g.unitarity_error() < 1e-12);
        prop_assert!(g.hermiticity_error() < 1e-12);
        prop_assert!(g.involution_error() < 1e-12);
    }

    #[test]
    fn theta_phi_round_trip(theta in 0.01..PI - 0.01, phi in 0.0..TAU - 1e-6) {
        let (t, f) = theta_phi_from_params(&params_from_theta_phi(theta, phi).unwrap());
        prop_assert!((t - theta).abs() < 1e-9);
        prop_assert!((f - phi).abs() < 1e-9 || (f - phi).abs() > TAU - 1e-9);
    }

    #[test]
    fn closed_form_closes_on_the_gate(p in lambdas()) {
        let u = closed_form_propagator(&p, PI);
        let g = gate_matrix(&p);
        prop_assert!((qubit_block(&u) - &g.matrix).norm() < 1e-12);
        prop_assert!(verify_cyclicity(&p).cyclic);
    }

    #[test]
    fn parallel_transport_holds(p in lambdas(), a in (-1.0..1.0f64, -1.0..1.0f64), b in (-1.0..1.0f64, -1.0..1.0f64)) {
        prop_assume!(a.0.abs() + a.1.abs() + b.0.abs() + b.1.abs() > 1e-3);
        let grid = linspace(0.0, PI, 100);
        let v = verify_parallel_transport(&p, &grid, C64::new(a.0, a.1), C64::new(b.0, b.1)).unwrap();
        prop_assert!(v < 1e-12, "{}", v);
    }

    #[test]
    fn pauli_vector_is_bounded_and_invertible(rho in density(HilbertSpace::new(vec![2, 2]).unwrap())) {
        let v = pauli_vector(&rho).unwrap();
        prop_assert!(v.values.iter().all(|x| x.abs() <= 1.0 + 1e-12));
        prop_assert!((v.linear_inversion() - rho.matrix()).norm() < 1e-12);
        let back = PauliVector { values: v.values };
        prop_assert_eq!(back, v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn integrated_lambda_system_matches_closed_form(p in lambdas(), g in 0.1..TAU, flat in 50e-9..250e-9f64, sigma in 1e-9..8e-9f64) {
        let shape = EnvelopeSpec::flat_top_gaussian(1.0, flat, sigma).unwrap();
        let u = integrated_propagator(&p, &shape, g, &IntegratorConfig::adaptive(1e-12, 1e-14)).unwrap();
        let d = operator_norm(&(u - closed_form_propagator(&p, g)));
        prop_assert!(d < 1e-8, "{}", d);
    }

    #[test]
    fn unitary_evolution_preserves_norm(h in complex_matrix(4), t in 0.1..5.0f64) {
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let hh = h.clone();
        let ham = FnHamiltonian::new(4, move |s| &hh * C64::new(s.cos(), 0.0));
        let space = HilbertSpace::new(vec![4]).unwrap();
        let psi = basis_state(&space, &[1]).unwrap();
        let r = evolve_schrodinger(&ham, &psi, &linspace(0.0, t, 11), &IntegratorConfig::adaptive(1e-10, 1e-12)).unwrap();
        for pops in &r.populations {
            prop_assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lindblad_preserves_trace_and_hermiticity(h in complex_matrix(3), rate in 0.0..2.0f64) {
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let hh = h.clone();
        let ham = FnHamiltonian::new(3, move |_| hh.clone());
        let space = HilbertSpace::new(vec![3]).unwrap();
        let l = lowering_operator(&space, 0).unwrap().scaled(C64::new(rate.sqrt(), 0.0));
        let rho0 = basis_state(&space, &[2]).unwrap().projector();
        let r = evolve_lindblad(&ham, &rho0, &[l], &linspace(0.0, 2.0, 9), &IntegratorConfig::adaptive(1e-10, 1e-12)).unwrap();
        for t in r.total_population() {
            prop_assert!((t - 1.0).abs() < 1e-6, "{}", t);
        }
        for s in &r.states {
            prop_assert!(hermitian_deviation(s.to_density_matrix().matrix()) < 1e-9);
        }
    }
}

#[test]
fn basis_states_are_orthonormal() {
    let space = HilbertSpace::transmon_pair();
    let n = space.total_dim();
    let states: Vec<CVector> = (0..n).map(|k| basis_state(&space, &space.labels_of(k)).unwrap().amplitudes().clone()).collect();
    for i in 0..n {
        for j in 0..n {
            let ip = states[i].dotc(&states[j]);
            assert_eq!(ip, C64::new(if i == j { 1.0 } else { 0.0 }, 0.0));
        }
    }
}

#[test]
fn transfer_fraction_is_sin_squared_on_thirty_points() {
    for theta in linspace(0.0, PI / 2.0, 30) {
        let p = params_from_theta_phi(theta, 0.7).unwrap();
        let u = closed_form_propagator(&p, PI);
        let moved = u[(GF0, FG0)].norm_sqr();
        assert!((moved - theta.sin().powi(2)).abs() < 1e-12);
        assert!((p.transfer_fraction() - theta.sin().powi(2)).abs() < 1e-12);
    }
}

#[test]
fn detuning_breaks_parallel_transport_proportionally() {
    let p = params_from_theta_phi(PI / 3.0, 0.4).unwrap();
    let grid = linspace(0.0, PI, 100);
    let (a, b) = (C64::new(0.6, 0.1), C64::new(-0.3, 0.7));
    let mut prev = 0.0;
    for delta in [1e-4, 1e-3, 1e-2] {
        let mut h = a_matrix(&p);
        h[(FG0, FG0)] += C64::new(delta, 0.0);
        let v = parallel_transport_violation(&h, &grid, a, b).unwrap();
        assert!(v > 0.1 * delta, "{delta}: {v}");
        if prev > 0.0 {
            assert!((v / prev - 10.0).abs() < 1.0, "{}", v / prev);
        }
        prev = v;
    }
}
