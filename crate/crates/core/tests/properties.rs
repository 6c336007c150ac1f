//! Randomized checks of the structural invariants of every module.

use catqaoa::bosonic_qaoa::{bosonic_qaoa_evolve, cat_prep_problem, single_ising_spec, BosonicAnnealSpec};
use catqaoa::channel::QubitChannel;
use catqaoa::dynamics::{evolve_density, evolve_ket, IntegratorConfig, PulseSchedule};
use catqaoa::fock::{
    annihilation_op, cat_basis, knr_hamiltonian, parity_op, FockDensityMatrix, FockKet, FockOperator, FockSpace,
    KnrParams,
};
use catqaoa::knr_gates::wrap_angle;
use catqaoa::linalg::{CMatrix, C64};
use catqaoa::qaoa::{
    approximation_ratio, compile, generate_erdos_renyi, ideal_statevector, noiseless_gate, run_qaoa, Backend,
    InputState, Mixer, QaoaParams,
};
use catqaoa::qubit_channel_sim::{apply_noisy_gate, run_circuit, NoisyGate, QubitState};
use catqaoa::tomography::{choi_to_kraus, choi_to_ptm, kraus_to_ptm, ptm_from_channel, ptm_to_choi};
use proptest::prelude::*;
use rand::Rng;

mod common;
use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn choi_kraus_ptm_triangle(seed in any::<u64>(), n in 1usize..=2, k in 1usize..=4) {
        let mut r = rng(seed);
        let ops = random_kraus(&mut r, 1 << n, k);
        let ptm = ptm_from_channel(&QubitChannel::from_kraus(&ops).unwrap()).unwrap();
        let choi = ptm_to_choi(&ptm);
        prop_assert!(max_diff(&choi_to_ptm(&choi).entries, &ptm.entries) < 1e-6);
        let kraus = choi_to_kraus(&choi).unwrap();
        prop_assert!(max_diff(&kraus_to_ptm(&kraus).unwrap().entries, &ptm.entries) < 1e-6);
        prop_assert!(cmax_diff(&ptm_to_choi(&kraus_to_ptm(&kraus).unwrap()).entries, &choi.entries) < 1e-6);
        prop_assert!(kraus.completeness_excess() < 1e-6);
    }

    #[test]
    fn ptm_composition_is_a_homomorphism(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let d = 1 << n;
        let a = QubitChannel::from_kraus(&random_kraus(&mut r, d, 3)).unwrap();
        let b = QubitChannel::from_kraus(&random_kraus(&mut r, d, 2)).unwrap();
        let (pa, pb) = (ptm_from_channel(&a).unwrap(), ptm_from_channel(&b).unwrap());
        let joint = ptm_from_channel(&a.then(&b).unwrap()).unwrap();
        prop_assert!(max_diff(&joint.entries, &pb.compose(&pa).unwrap().entries) < 1e-8);
    }

    #[test]
    fn trace_preservation_is_the_ptm_first_row(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let ptm = ptm_from_channel(&QubitChannel::from_kraus(&random_kraus(&mut r, 1 << n, 3)).unwrap()).unwrap();
        prop_assert!((ptm.entries[(0, 0)] - 1.0).abs() < 1e-12);
        for j in 1..ptm.entries.ncols() {
            prop_assert!(ptm.entries[(0, j)].abs() < 1e-12);
        }
        prop_assert!(ptm.is_trace_preserving(1e-10));
        // Scaling every Kraus operator down breaks it.
        let lossy: Vec<CMatrix> = random_kraus(&mut r, 1 << n, 2).iter().map(|a| a * C64::new(0.9, 0.0)).collect();
        prop_assert!(!ptm_from_channel(&QubitChannel::from_kraus(&lossy).unwrap()).unwrap().is_trace_preserving(1e-6));
    }

    #[test]
    fn knr_hamiltonian_is_hermitian_and_parity_even(
        kerr in 0.2f64..2.0, drive in 0.0f64..6.0, detuning in -3.0f64..3.0, phase in -3.0f64..3.0,
    ) {
        let s = FockSpace::single(14).unwrap();
        let h = knr_hamiltonian(s, &KnrParams { kerr, drive, detuning, phase }, 0).unwrap();
        prop_assert!(h.is_hermitian(1e-12));
        let real = knr_hamiltonian(s, &KnrParams { kerr, drive, detuning, phase: 0.0 }, 0).unwrap();
        let pi = parity_op(s, 0).unwrap();
        prop_assert!(real.commutator(&pi).unwrap().max_norm() < 1e-12);
        // The two-photon drive keeps parity for any phase.
        prop_assert!(h.commutator(&pi).unwrap().max_norm() < 1e-12);
    }

    #[test]
    fn cat_basis_is_orthonormal_and_satisfies_the_projected_identity(alpha in 0.4f64..2.0) {
        let s = FockSpace::single(40).unwrap();
        let b = cat_basis(s, alpha).unwrap();
        prop_assert!((b.ket0.norm() - 1.0).abs() < 1e-8);
        prop_assert!((b.ket1.norm() - 1.0).abs() < 1e-8);
        prop_assert!(b.ket0.inner(&b.ket1).unwrap().norm() < 1e-8);
        let a = annihilation_op(s, 0).unwrap();
        let lhs = b.projector.mul(&a).unwrap().mul(&b.projector).unwrap();
        let zc = C64::new(alpha / 2.0 * (b.eta + 1.0 / b.eta), 0.0);
        let yc = C64::new(0.0, alpha / 2.0 * (b.eta - 1.0 / b.eta));
        let rhs = b.pauli_z.scale(zc).add(&b.pauli_y.scale(yc)).unwrap();
        prop_assert!(cmax_diff(lhs.matrix(), rhs.matrix()) < 1e-8);
    }

    #[test]
    fn lindblad_evolution_keeps_trace_hermiticity_and_positivity(
        seed in any::<u64>(), rate in 0.0f64..0.5, t in 0.2f64..3.0,
    ) {
        let mut r = rng(seed);
        let s = FockSpace::single(6).unwrap();
        let mut sched = PulseSchedule::new(s, t).unwrap();
        sched.add_static(FockOperator::new(random_hermitian(&mut r, 6), s).unwrap()).unwrap();
        sched.add_collapse(annihilation_op(s, 0).unwrap(), rate).unwrap();
        sched.add_collapse(FockOperator::new(random_matrix(&mut r, 6, 6), s).unwrap(), 0.1 * rate).unwrap();
        let m = random_matrix(&mut r, 6, 6);
        let rho = &m * m.adjoint();
        let tr = rho.trace();
        let rho0 = FockDensityMatrix::new(rho / tr, s).unwrap();
        let out = evolve_density(&sched, &rho0, &IntegratorConfig::default()).unwrap();
        let rho = out.matrix();
        prop_assert!((out.trace() - C64::new(1.0, 0.0)).norm() < 1e-6);
        prop_assert!(cmax_diff(rho, &rho.adjoint()) < 1e-8);
        let herm = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
        let min_eig = herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min_eig > -1e-7, "{min_eig}");
    }

    #[test]
    fn static_ket_evolution_matches_matrix_exponential(seed in any::<u64>(), t in 0.1f64..2.0) {
        let mut r = rng(seed);
        let s = FockSpace::single(8).unwrap();
        let h = random_hermitian(&mut r, 8);
        let mut sched = PulseSchedule::new(s, t).unwrap();
        sched.add_static(FockOperator::new(h.clone(), s).unwrap()).unwrap();
        let psi0 = FockKet::normalized(random_matrix(&mut r, 8, 1).column(0).into_owned(), s).unwrap();
        let cfg = IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, ..Default::default() };
        let got = evolve_ket(&sched, &psi0, &cfg).unwrap();
        let u = (h * C64::new(0.0, -t)).exp();
        let want = u * psi0.amplitudes();
        let overlap = want.dotc(got.amplitudes()).norm_sqr();
        prop_assert!((1.0 - overlap).abs() < 1e-8, "{overlap}");
    }
}


proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compiled_circuits_match_direct_exponentials(seed in any::<u64>(), n in 1usize..=4, p in 1usize..=3) {
        let mut r = rng(seed);
        let problem = random_problem(&mut r, n);
        let params = random_params(&mut r, p);
        let want = oracle_state(&problem, &params);
        let sv = ideal_statevector(&problem, &params).unwrap();
        prop_assert!((1.0 - want.dotc(&sv).norm_sqr()).abs() < 1e-8);
        let circuit: Vec<NoisyGate> = compile(&problem, &params).iter().map(|g| noiseless_gate(g).unwrap()).collect();
        let rho = run_circuit(&circuit, &params.input.state(n).unwrap()).unwrap();
        let fid = (want.adjoint() * rho.rho() * &want)[(0, 0)].re;
        prop_assert!((1.0 - fid).abs() < 1e-8, "{fid}");
    }

    #[test]
    fn plus_with_x_mixer_equals_plus_i_with_y_mixer(seed in any::<u64>(), n in 1usize..=4, p in 1usize..=3) {
        let mut r = rng(seed);
        let problem = random_problem(&mut r, n);
        let a = QaoaParams { mixer: Mixer::X, input: InputState::Plus, ..random_params(&mut r, p) };
        let b = QaoaParams { mixer: Mixer::Y, input: InputState::PlusI, ..a.clone() };
        let da = run_qaoa(&problem, &a, Backend::Ideal).unwrap();
        let db = run_qaoa(&problem, &b, Backend::Ideal).unwrap();
        for (x, y) in da.probabilities.iter().zip(&db.probabilities) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn approximation_ratio_lies_in_unit_interval(seed in any::<u64>(), n in 2usize..=6, p in 1usize..=3) {
        let mut r = rng(seed);
        let g = generate_erdos_renyi(n, 0.6, seed).unwrap();
        prop_assume!(!g.edges.is_empty());
        let params = QaoaParams { mixer: Mixer::X, input: InputState::Plus, ..random_params(&mut r, p) };
        let dist = run_qaoa(&g.hamiltonian().unwrap(), &params, Backend::Ideal).unwrap();
        let ratio = approximation_ratio(&dist, &g.hamiltonian().unwrap(), g.c_max).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ratio), "{ratio}");
    }

    #[test]
    fn noisy_gate_application_is_deterministic(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let target = r.random_range(0..n);
        let gate = NoisyGate::new(
            catqaoa::knr_gates::target_unitary(catqaoa::knr_gates::GateKind::Rx, r.random_range(-3.0..3.0)),
            catqaoa::tomography::KrausSet { operators: random_kraus(&mut r, 2, 3), clipped: Vec::new() },
            vec![target],
        ).unwrap();
        let state = QubitState::plus_i(n).unwrap();
        let a = apply_noisy_gate(&state, &gate).unwrap();
        let b = apply_noisy_gate(&state, &gate).unwrap();
        prop_assert_eq!(a.rho(), b.rho());
        prop_assert!((a.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval(x in -100.0f64..100.0) {
        let w = wrap_angle(x);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        let k = ((x - w) / (2.0 * std::f64::consts::PI)).round();
        prop_assert!((x - w - 2.0 * std::f64::consts::PI * k).abs() < 1e-9);
    }
}

fn bosonic_spec(alpha: f64, e: f64) -> BosonicAnnealSpec {
    BosonicAnnealSpec { single_photon: vec![e], ..single_ising_spec(alpha) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bosonic_layers_preserve_the_norm(
        gammas in prop::collection::vec(-7.0f64..7.0, 1..4), seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let betas: Vec<f64> = gammas.iter().map(|_| r.random_range(-3.5..3.5)).collect();
        let s = FockSpace::single(16).unwrap();
        let psi = bosonic_qaoa_evolve(&bosonic_spec(1.5, 0.3), &gammas, &betas, s).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn vacuum_stays_even_without_single_photon_drive(
        gammas in prop::collection::vec(-7.0f64..7.0, 1..4), seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let betas: Vec<f64> = gammas.iter().map(|_| r.random_range(-3.5..3.5)).collect();
        let s = FockSpace::single(16).unwrap();
        let spec = bosonic_spec(1.5, 0.0);
        prop_assert!(spec.mixer_hamiltonian(s).unwrap().commutator(&parity_op(s, 0).unwrap()).unwrap().max_norm() < 1e-12);
        prop_assert!(spec.cost_hamiltonian(s).unwrap().commutator(&parity_op(s, 0).unwrap()).unwrap().max_norm() < 1e-12);
        // Every prefix of the sequence stays in the even sector.
        for k in 1..=gammas.len() {
            let psi = bosonic_qaoa_evolve(&spec, &gammas[..k], &betas[..k], s).unwrap();
            let odd: f64 = psi.amplitudes().iter().skip(1).step_by(2).map(|a| a.norm_sqr()).sum();
            prop_assert!(odd < 1e-20, "{odd}");
        }
        let prep = cat_prep_problem(16, 1.5).unwrap();
        let f = prep.fidelity(&gammas, &betas);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
    }
}
