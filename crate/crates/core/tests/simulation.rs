use qbae::bae::michelson;
use qbae::model::quadrature_realization;
use qbae::sampling::{qnd_instance, random_params};
use qbae::simulate::*;
use qbae::transfer::Quad;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn michelson_injection() {
    let real = quadrature_realization(&michelson(1.0, 1.0, 1.0).unwrap()).unwrap();
    let cfg = SimConfig::default_for(&real, 20.0, 0, 1).unwrap();
    let pulse = gaussian_pulse(&cfg, 1.0, 3.0, 0.5);
    let evaded = injection_bae_test(&real, Quad::P, Quad::Q, &pulse, &cfg).unwrap();
    let swapped = injection_bae_test(&real, Quad::Q, Quad::P, &pulse, &cfg).unwrap();
    println!("{} {}", evaded.deviation, swapped.deviation);
    assert!(evaded.deviation < 1e-8);
    assert!(swapped.deviation > 1e-2);
}

#[test]
fn martingale_qnd_and_control() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = qnd_instance(&mut rng, 2, 1, false);
    let real = quadrature_realization(&p).unwrap();
    let tau = characteristic_time(&real);
    let cfg = SimConfig::new(1e-2 * tau, 10.0 * tau, 11, 2000).unwrap();
    let init = InitialState::displaced_vacuum(RVec::from_element(4, 1.0));
    let t = std::time::Instant::now();
    let rep = martingale_check(&p, &cfg, &init).unwrap();
    println!("{:?} {:?}", rep, t.elapsed());
    assert!(rep.pass);
    let g = random_params(&mut rng, 2, 1);
    let realg = quadrature_realization(&g).unwrap();
    let tau = characteristic_time(&realg);
    let cfg = SimConfig::new(1e-2 * tau, 10.0 * tau, 11, 2000).unwrap();
    let rep = martingale_statistics(&g, &cfg, &init).unwrap();
    println!("{:?}", rep);
    assert!(!rep.pass);
}

#[test]
fn filter_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_params(&mut rng, 2, 2);
    let real = quadrature_realization(&p).unwrap();
    let tau = characteristic_time(&real);
    let cfg = SimConfig::default_for(&real, 20.0 * tau, 3, 200)
        .unwrap()
        .with_stride(100);
    let cfg = SimConfig {
        horizon: 10.0 * tau,
        ..cfg
    };
    let init = InitialState::vacuum(4);
    let tr = stochastic_trajectories(&real, &cfg, &init, None).unwrap();
    let f = gaussian_filter(&real, &tr, &cfg, &init, None).unwrap();
    let w = whiteness(&f.innovations, 10);
    println!("{} {:?}", f.min_uncertainty_eig, w);
    assert!(f.uncertainty_compatible());
    assert!(w.pass);
}
