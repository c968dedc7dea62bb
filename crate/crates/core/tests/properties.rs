use num_complex::Complex64;
use proptest::prelude::*;
use qbae::algebra::{doubled_up, flat_adjoint, CMat};
use qbae::bae::analyze;
use qbae::cli::SystemDescription;
use qbae::feedback::{
    optomech_qnd_report, partition_system, reduce_network, BeamsplitterParams, OptomechParams,
    PartitionedPlant,
};
use qbae::model::{annihilation_realization, quadrature_realization, SystemParams};
use qbae::qnd::{qnd_interaction_test, QND_TOL};
use qbae::sampling::*;
use qbae::transfer::evaluate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn realness(b: bool) -> Realness {
    if b {
        Realness::Real
    } else {
        Realness::Imaginary
    }
}

fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm() + b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn realizations_are_physical(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3) {
        let p = random_params(&mut rng(seed), n, m);
        prop_assert!(p.validate().is_valid());
        let ann = annihilation_realization(&p).unwrap();
        let real = quadrature_realization(&p).unwrap();
        let scale = 1.0 + ann.a.norm() + ann.b.norm().powi(2);
        prop_assert!(ann.realizability_residual() <= 1e-12 * scale);
        prop_assert!(real.realizability_residual() <= 1e-12 * scale);
        prop_assert!(ann.is_doubled_up(1e-12));
    }

    #[test]
    fn flat_adjoint_is_an_antihomomorphic_involution(seed in any::<u64>(), k in 1usize..=3) {
        let mut r = rng(seed);
        let x = doubled_up(&gaussian_complex(&mut r, k, k), &gaussian_complex(&mut r, k, k)).unwrap();
        let y = doubled_up(&gaussian_complex(&mut r, k, k), &gaussian_complex(&mut r, k, k)).unwrap();
        let (xf, yf) = (x.full(), y.full());
        let twice = flat_adjoint(&flat_adjoint(&xf).unwrap()).unwrap();
        prop_assert!(close(&twice, &xf, 1e-13));
        let lhs = flat_adjoint(&(&xf * &yf)).unwrap();
        let rhs = flat_adjoint(&yf).unwrap() * flat_adjoint(&xf).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
        prop_assert!(close(&x.flat_adjoint().full(), &flat_adjoint(&xf).unwrap(), 1e-13));
        let prod = x.mul(&y).unwrap();
        prop_assert!(close(&prod.full(), &(&xf * &yf), 1e-12));
    }

    #[test]
    fn bilateral_predictions_are_certified(
        seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, s in any::<bool>(), c in any::<bool>(),
    ) {
        let p = bilateral_instance(&mut rng(seed), n, m, realness(s), realness(c));
        let report = analyze(&p).unwrap();
        prop_assert!(!report.predictions.is_empty());
        prop_assert!(report.citations_consistent());
        prop_assert!(report.confirmed());
    }

    #[test]
    fn unilateral_predictions_are_certified(
        seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3,
        equal in any::<bool>(), s in any::<bool>(), c in any::<bool>(),
    ) {
        let rel = if equal { ReOmegaSign::Equal } else { ReOmegaSign::Opposite };
        let p = unilateral_instance(&mut rng(seed), n, m, rel, realness(s), realness(c));
        let report = analyze(&p).unwrap();
        prop_assert!(!report.predictions.is_empty());
        prop_assert!(report.confirmed());
    }

    #[test]
    fn any_system_predictions_hold(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2) {
        // Whatever a generic system predicts (usually nothing) must certify.
        let p = random_params(&mut rng(seed), n, m);
        prop_assert!(analyze(&p).unwrap().confirmed());
    }

    #[test]
    fn qnd_tests_agree(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3) {
        let p = random_params(&mut rng(seed), n, m);
        prop_assert!(qnd_interaction_test(&p, QND_TOL).agree());
        let q = qnd_instance(&mut rng(seed), n, m.min(n), false);
        let t = qnd_interaction_test(&q, QND_TOL);
        prop_assert!(t.agree() && t.verdict());
    }

    #[test]
    fn optomech_combination_survives_scaling(
        delta in 0.2f64..3.0, omega in 0.2f64..3.0, lambda in 0.1f64..3.0,
        kappa in 0.1f64..3.0, scale in 0.1f64..10.0,
    ) {
        // With opposite detunings and equal couplings the combination
        // λ₁q₁ + λ₂q₂ stays QND under a common rescaling of the couplings.
        let base = OptomechParams::new(delta, -delta, omega, lambda, lambda, kappa).unwrap();
        let scaled = OptomechParams::new(delta, -delta, omega, lambda * scale, lambda * scale, kappa).unwrap();
        let a = optomech_qnd_report(&base).unwrap();
        let b = optomech_qnd_report(&scaled).unwrap();
        prop_assert!(a.combination.is_qnd && b.combination.is_qnd);
        prop_assert!(a.controllability_residual <= 1e-9 && b.controllability_residual <= 1e-9);
    }

    #[test]
    fn reduced_networks_are_valid(seed in any::<u64>(), n in 1usize..=3, m1 in 1usize..=2, m2 in 1usize..=2) {
        let mut r = rng(seed);
        let p = random_params(&mut r, n, m1 + m2);
        let plant = partition_system(&p, m2).unwrap();
        let bs = BeamsplitterParams::new(random_unitary(&mut r, m2)).unwrap();
        if m1 != m2 {
            let err = reduce_network(&plant, &bs).unwrap_err();
            prop_assert!(matches!(err, qbae::Error::InvalidParams(_)));
            return Ok(());
        }
        match reduce_network(&plant, &bs) {
            Ok(red) => {
                prop_assert_eq!(red.m(), m1);
                prop_assert_eq!(red.n(), n);
                let v = red.validate();
                prop_assert!(v.is_valid(), "{:?}", v);
            }
            Err(qbae::Error::IllPosedLoop { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn open_loop_reduces_to_channel_restriction(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2) {
        // S12 = S21 = 0 and k21 = k22 = 0: the loop carries nothing back.
        let mut r = rng(seed);
        let s11 = random_unitary(&mut r, m);
        let (k11, k12) = (gaussian_complex(&mut r, m, n), gaussian_complex(&mut r, m, n));
        let om = random_hermitian(&mut r, n);
        let g = gaussian_complex(&mut r, n, n);
        let op = &g + g.transpose();
        let zero = CMat::zeros(m, m);
        let plant = PartitionedPlant::new(
            s11.clone(), zero.clone(), zero, random_unitary(&mut r, m),
            k11.clone(), k12.clone(), CMat::zeros(m, n), CMat::zeros(m, n),
            om.clone(), op.clone(),
        ).unwrap();
        let bs = BeamsplitterParams::new(random_unitary(&mut r, m)).unwrap();
        let red = quadrature_realization(&reduce_network(&plant, &bs).unwrap()).unwrap();
        let direct = quadrature_realization(&SystemParams::new(s11, k11, k12, om, op).unwrap()).unwrap();
        let u = rand_distr::Uniform::new(0.1, 3.0).unwrap();
        for _ in 0..10 {
            let s = Complex64::new(r.sample(u), r.sample(u));
            let (a, b) = (evaluate(&red, s).unwrap(), evaluate(&direct, s).unwrap());
            prop_assert!((&a - &b).norm() <= 1e-9 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn descriptions_round_trip_exactly(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3) {
        let p = random_params(&mut rng(seed), n, m);
        let desc = SystemDescription::from_system("random", &p);
        let back = SystemDescription::parse(&desc.to_json()).unwrap();
        prop_assert_eq!(&back, &desc);
        prop_assert_eq!(back.system().unwrap(), p);
    }
}
