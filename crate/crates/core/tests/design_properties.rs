use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riesz_core::oracle::Enumeration;
use riesz_core::orthogonalization::{gram_schmidt, DEFAULT_TOL};
use riesz_core::{BasisFunction, Design, Factor, FnFactor, Graph, ModelSpace, MomentProvider};

#[test]
fn bernoulli_marginal_frequencies() {
    let probs = vec![0.05, 0.3, 0.5, 0.9];
    let d = Design::bernoulli(probs.clone()).unwrap();
    let reps = 100_000u64;
    let mut counts = [0u64; 4];
    for seed in 0..reps {
        for (c, z) in counts.iter_mut().zip(d.sample(seed).coords()) {
            *c += *z as u64;
        }
    }
    for (c, p) in counts.iter().zip(&probs) {
        let freq = *c as f64 / reps as f64;
        assert!((freq - p).abs() <= 4.0 * (p * (1.0 - p) / reps as f64).sqrt(), "p = {p}: {freq}");
    }
}

#[test]
fn monte_carlo_moments_are_calibrated() {
    let design = Arc::new(Design::complete_randomization(8, 3).unwrap());
    let exact = MomentProvider::exact(design.clone());
    let g = Graph::cycle(8);
    let space = ModelSpace::linear_in_means(2, g.neighbors(2)).unwrap();
    let b = space.basis();
    let mut within = 0;
    for trial in 0..100u64 {
        let mc = MomentProvider::monte_carlo(design.clone(), 2_000, trial);
        let factors: [&dyn Factor; 2] = [&b[1], &b[2]];
        let want = exact.exact_moment(&factors).unwrap();
        let got = mc.moment(&factors).unwrap();
        if (got.value - want).abs() <= 5.0 * got.std_error {
            within += 1;
        }
    }
    assert!(within >= 99, "{within} of 100 within 5 standard errors");
}

#[test]
fn monte_carlo_is_deterministic_given_seed() {
    let design = Arc::new(Design::bernoulli_uniform(4, 0.3).unwrap());
    let f = FnFactor::new(vec![0, 1], |z: &[f64]| z[0] + 2.0 * z[1]);
    let a = MomentProvider::monte_carlo(design.clone(), 500, 42).moment(&[&f]).unwrap();
    let b = MomentProvider::monte_carlo(design, 500, 42).moment(&[&f]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exact_moments_repeat_identically() {
    let design = Arc::new(Design::bernoulli_uniform(6, 0.35).unwrap());
    let p = MomentProvider::exact(design);
    let s = ModelSpace::linear_in_means(0, &[1, 5]).unwrap();
    let b = s.basis();
    let first = p.exact_moment(&[&b[2], &b[2], &b[1]]).unwrap();
    assert!(p.cached_count() > 0);
    let again = p.exact_moment(&[&b[1], &b[2], &b[2]]).unwrap();
    assert_eq!(first.to_bits(), again.to_bits());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_moments_equal_enumeration(seed in any::<u64>(), p in 0.05..0.95f64, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let designs = [
            Design::bernoulli_uniform(7, p).unwrap(),
            Design::complete_randomization(7, m).unwrap(),
        ];
        let g = Graph::cycle(7);
        let pool: Vec<BasisFunction> = (0..7)
            .flat_map(|i| ModelSpace::linear_in_means(i, g.neighbors(i)).unwrap().basis().to_vec())
            .collect();
        for d in designs {
            let en = Enumeration::new(&d, 16).unwrap();
            let prov = MomentProvider::exact(Arc::new(d));
            let k = rng.random_range(1..=4);
            let picks: Vec<&dyn Factor> = (0..k).map(|_| &pool[rng.random_range(0..pool.len())] as &dyn Factor).collect();
            prop_assert!((prov.exact_moment(&picks).unwrap() - en.moment(&picks)).abs() <= 1e-12);
        }
    }

    #[test]
    fn orthonormalization_ignores_positive_rescaling(scale in 0.01..100.0f64, which in 0usize..3) {
        let design = Design::bernoulli(vec![0.3, 0.6, 0.45]).unwrap();
        let provider = MomentProvider::exact(Arc::new(design.clone()));
        let base = ModelSpace::linear_in_means(0, &[1, 2]).unwrap();
        let mut basis = base.basis().to_vec();
        basis[which] = basis[which].scaled(scale);
        let scaled = ModelSpace::new(0, basis).unwrap();
        let a = gram_schmidt(Arc::new(base), &provider, DEFAULT_TOL).unwrap();
        let b = gram_schmidt(Arc::new(scaled), &provider, DEFAULT_TOL).unwrap();
        prop_assert_eq!(a.b_o(), b.b_o());
        for (z, _) in design.enumerate_support(16).unwrap() {
            for &k in a.b_o() {
                prop_assert!((a.evaluate(k, z.coords()) - b.evaluate(k, z.coords())).abs() <= 1e-10);
            }
        }
        for t in 0..3 {
            prop_assert!(b.reconstruction_residual(t) <= 1e-10);
        }
    }
}
