mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riesz_core::oracle::Enumeration;
use riesz_core::positivity::test_second_order_positivity;
use riesz_core::variance::{simple_tensor, variance_functional_value, TermKind};

fn random_truth(rng: &mut ChaCha8Rng, dims: &[usize]) -> Vec<Vec<f64>> {
    dims.iter()
        .map(|&d| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

#[test]
fn representation_identity_by_enumeration() {
    for case in common::cases() {
        let pl = case.pipeline();
        let en = Enumeration::new(&case.design, 16).unwrap();
        for (i, rep) in pl.representors().iter().enumerate() {
            for (l, phi) in case.spaces[i].basis().iter().enumerate() {
                let got = en.expect(|z| rep.evaluate(z) * phi.evaluate(z));
                let want = pl.theta_values()[i][l];
                assert!((got - want).abs() <= 1e-9, "{} unit {i} basis {l}: {got} vs {want}", case.name);
            }
        }
    }
}

#[test]
fn unbiased_bound_valid_and_estimator_unbiased_for_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in common::cases() {
        let pl = case.pipeline();
        let dims: Vec<usize> = case.spaces.iter().map(|s| s.dimension()).collect();
        for _ in 0..25 {
            let truth = random_truth(&mut rng, &dims);
            let r = case.oracle(&pl, &truth);
            let tau = pl.estimand(&truth).unwrap();
            assert!((r.mean_estimate - tau).abs() <= 1e-9, "{}", case.name);
            let bound = r.bound.unwrap();
            assert!(bound >= r.variance - 1e-9, "{}: bound {bound} < variance {}", case.name, r.variance);
            assert!((r.mean_variance_estimate.unwrap() - bound).abs() <= 1e-9, "{}", case.name);
            assert!((pl.bound_value(&truth).unwrap() - bound).abs() <= 1e-9, "{}", case.name);
            assert!((pl.exact_variance(&truth).unwrap() - r.variance).abs() <= 1e-9, "{}", case.name);
        }
    }
}

#[test]
fn second_order_representor_identity_on_product_basis() {
    for case in common::cases() {
        let pl = case.pipeline();
        let en = Enumeration::new(&case.design, 16).unwrap();
        for (work, so) in pl.pairs().iter().zip(pl.second_order()) {
            let (bi, bj) = (case.spaces[so.i].basis(), case.spaces[so.j].basis());
            for (l, u) in bi.iter().enumerate() {
                for (k, v) in bj.iter().enumerate() {
                    let got = en.expect(|z| so.evaluate(z) * u.evaluate(z) * v.evaluate(z));
                    let want = work.bound[l * bj.len() + k];
                    assert!((got - want).abs() <= 1e-9, "{} pair ({}, {})", case.name, so.i, so.j);
                }
            }
        }
    }
}

#[test]
fn every_bound_term_is_second_order_positive() {
    for case in common::cases() {
        let pl = case.pipeline();
        let spec = pl.bound_spec().unwrap();
        for (idx, work) in pl.pairs().iter().enumerate() {
            for term in spec.terms(idx) {
                let table = match term.kind {
                    TermKind::Elementary { k, l } => work.table.functional(k, l).to_vec(),
                    TermKind::DiagonalRaw { k } => work.table.raw(k).unwrap().to_vec(),
                };
                assert!(test_second_order_positivity(&work.tortho, &table).unwrap().holds, "{}", case.name);
            }
            assert!(pl.second_order()[idx].positivity().holds);
        }
    }
}

#[test]
fn elementary_decomposition_matches_covariance_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in common::cases() {
        let pl = case.pipeline();
        for work in pl.pairs() {
            let (i, j) = (work.table.i, work.table.j);
            let u: Vec<f64> = (0..work.table.di).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..work.table.dj).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = simple_tensor(&u, &v);
            let direct =
                variance_functional_value(&pl.representors()[i], &pl.representors()[j], &t, pl.provider()).unwrap();
            let theta = work.table.variance_functional();
            let decomposed: f64 = theta.iter().zip(&t).map(|(a, b)| a * b).sum();
            assert!((direct - decomposed).abs() < 1e-10, "{}", case.name);
        }
    }
}

#[test]
fn diagonal_raw_functionals_always_positive() {
    for case in common::cases() {
        let pl = case.pipeline();
        for work in pl.pairs().iter().filter(|w| w.table.i == w.table.j) {
            for k in 0..work.table.di {
                if work.table.weight_i(k) == 0.0 {
                    continue;
                }
                let raw = work.table.raw(k).unwrap();
                assert!(test_second_order_positivity(&work.tortho, raw).unwrap().holds, "{}", case.name);
            }
        }
    }
}

#[test]
fn h_matrix_sharpness() {
    for case in common::cases() {
        let pl = case.pipeline();
        let h = pl.variance_matrix().unwrap();
        let v = h.top_eigenvector();
        let q = (&h.h * &v).dot(&v);
        assert!(q >= (1.0 - 1e-9) * h.lambda_max() - 1e-12, "{}", case.name);
        assert!(h.lambda_min() >= -1e-9 * h.lambda_max().max(1.0), "{}", case.name);
        assert!((&h.h - h.h.transpose()).abs().max() < 1e-10);
    }
}

#[test]
fn rmse_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in common::cases() {
        let pl = case.pipeline();
        let dims: Vec<usize> = case.spaces.iter().map(|s| s.dimension()).collect();
        for _ in 0..5 {
            let truth = random_truth(&mut rng, &dims);
            let d = pl.diagnostics(Some(&truth), 4.0, 4.0, None).unwrap();
            let rmse = d.exact_rmse.unwrap();
            assert!(rmse <= d.worst_case_rmse.unwrap() + 1e-9, "{}", case.name);
            assert!(rmse <= d.consistency_bound.unwrap() + 1e-9, "{}", case.name);
        }
    }
}

#[test]
fn variance_estimate_invariant_under_unit_relabeling() {
    // exchangeable units: permuting assignment and outcomes together
    let case = &common::cases()[2];
    let pl = case.pipeline();
    let n = case.spaces.len();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let z = case.design.sample(seed);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let perm: Vec<usize> = (0..n).map(|i| (i + 2) % n).collect();
        let pz = riesz_core::Assignment::new(perm.iter().map(|&k| z.coords()[k]).collect());
        let py: Vec<f64> = perm.iter().map(|&k| y[k]).collect();
        let a = pl.variance_estimate(&z, &y).unwrap().value;
        let b = pl.variance_estimate(&pz, &py).unwrap().value;
        assert!((a - b).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn oracle_unbiased_for_random_truths(seed in any::<u64>(), which in 0usize..8) {
        let cases = common::cases();
        let case = &cases[which % cases.len()];
        let pl = case.pipeline();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = case.spaces.iter().map(|s| s.dimension()).collect();
        let truth = random_truth(&mut rng, &dims);
        let r = case.oracle(&pl, &truth);
        prop_assert!((r.mean_estimate - pl.estimand(&truth).unwrap()).abs() <= 1e-9);
        prop_assert!(r.bound.unwrap() >= r.variance - 1e-9);
    }

    #[test]
    fn plugin_equals_representor(seed in any::<u64>(), y in -5.0..5.0f64) {
        let case = common::sutva(3, 0.3);
        let pl = case.pipeline();
        let z = case.design.sample(seed);
        for (o, r) in pl.orthos().iter().zip(pl.representors()) {
            let plug = riesz_core::riesz::plugin_outcome_estimate(o, r, &z, y);
            prop_assert!((plug.effect - r.evaluate(z.coords()) * y).abs() <= 1e-12);
        }
    }
}
