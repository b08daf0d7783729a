//! Positivity: a functional is identified under the design when it vanishes
//! on every design-null direction.

use serde::{Deserialize, Serialize};

use crate::designs::{Factor, MomentProvider};
use crate::error::{Error, Result};
use crate::functionals::EffectFunctional;
use crate::model_spaces::ModelSpace;
use crate::numeric::symmetric_eigen;
use crate::orthogonalization::{OrthoBasis, TensorOrthoBasis};

/// Relative slack on functional values: 1e-8 * (1 + max |theta(phi_k)|).
pub const FUNCTIONAL_RTOL: f64 = 1e-8;
/// lambda_min must exceed this multiple of lambda_max.
pub const EIGEN_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Index of the null direction in the (tensor) basis.
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub holds: bool,
    pub witnesses: Vec<Witness>,
    pub tolerance: f64,
}

fn functional_tolerance(values: &[f64]) -> f64 {
    FUNCTIONAL_RTOL * (1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Checks sum_s coeffs[k, s] * values[s] against zero for each null row k.
fn null_report(coeffs: &nalgebra::DMatrix<f64>, null_rows: &[usize], values: &[f64]) -> PositivityReport {
    let tolerance = functional_tolerance(values);
    let witnesses: Vec<Witness> = null_rows
        .iter()
        .map(|&k| Witness {
            index: k,
            value: coeffs.row(k).iter().zip(values).map(|(a, t)| a * t).sum(),
        })
        .filter(|w| w.value.abs() > tolerance)
        .collect();
    PositivityReport {
        holds: witnesses.is_empty(),
        witnesses,
        tolerance,
    }
}

/// First-order test from precomputed theta(phi_s) values.
pub fn positivity_from_values(ortho: &OrthoBasis, theta_values: &[f64]) -> Result<PositivityReport> {
    if theta_values.len() != ortho.dimension() {
        return Err(Error::LengthMismatch {
            expected: ortho.dimension(),
            found: theta_values.len(),
        });
    }
    Ok(null_report(ortho.coefficients(), ortho.b_z(), theta_values))
}

pub fn test_positivity(ortho: &OrthoBasis, functional: &EffectFunctional) -> Result<PositivityReport> {
    let values = functional.basis_values(ortho.space())?;
    positivity_from_values(ortho, &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongPositivity {
    pub holds: bool,
    pub smallest_eigenvalue: f64,
    pub largest_eigenvalue: f64,
}

/// Eigenvalue test on the Gram matrix E[phi_k phi_l].
pub fn test_strong_positivity(space: &ModelSpace, provider: &MomentProvider, tol: f64) -> Result<StrongPositivity> {
    if !provider.is_exact() {
        return Err(Error::InexactMoments);
    }
    let d = space.dimension();
    let basis = space.basis();
    let mut g = nalgebra::DMatrix::zeros(d, d);
    for k in 0..d {
        for l in 0..=k {
            let m = provider.exact_moment(&[&basis[k] as &dyn Factor, &basis[l]])?;
            g[(k, l)] = m;
            g[(l, k)] = m;
        }
    }
    let eig = symmetric_eigen(&g);
    Ok(StrongPositivity {
        holds: eig.min() > tol * eig.max(),
        smallest_eigenvalue: eig.min(),
        largest_eigenvalue: eig.max(),
    })
}

/// `values[l * dj + k]` is the functional at phi_{i,l} (x) phi_{j,k}.
pub fn test_second_order_positivity(tortho: &TensorOrthoBasis, values: &[f64]) -> Result<PositivityReport> {
    let m = tortho.di * tortho.dj;
    if values.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: values.len(),
        });
    }
    Ok(null_report(tortho.coefficients(), tortho.b_z(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{Assignment, Design};
    use crate::model_spaces::{BasisFunction, BasisKind};
    use crate::orthogonalization::{gram_schmidt, DEFAULT_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn provider(p: f64) -> MomentProvider {
        MomentProvider::exact(Arc::new(Design::bernoulli_uniform(1, p).unwrap()))
    }

    fn contrast() -> EffectFunctional {
        EffectFunctional::contrast(Assignment::new(vec![1.0]), Assignment::new(vec![0.0]))
    }

    #[test]
    fn contrast_holds_at_half() {
        let o = gram_schmidt(Arc::new(ModelSpace::sutva(0)), &provider(0.5), DEFAULT_TOL).unwrap();
        let r = test_positivity(&o, &contrast()).unwrap();
        assert!(r.holds);
        assert!(r.witnesses.is_empty());
    }

    #[test]
    fn contrast_fails_when_all_treated() {
        let o = gram_schmidt(Arc::new(ModelSpace::sutva(0)), &provider(1.0), DEFAULT_TOL).unwrap();
        let r = test_positivity(&o, &contrast()).unwrap();
        assert!(!r.holds);
        assert_eq!(r.witnesses, vec![Witness { index: 1, value: -1.0 }]);
    }

    #[test]
    fn treated_evaluation_holds_when_all_treated() {
        let o = gram_schmidt(Arc::new(ModelSpace::sutva(0)), &provider(1.0), DEFAULT_TOL).unwrap();
        let theta = EffectFunctional::evaluation(Assignment::new(vec![1.0]));
        assert!(test_positivity(&o, &theta).unwrap().holds);
    }

    #[test]
    fn strong_positivity_eigenvalues() {
        let s = test_strong_positivity(&ModelSpace::sutva(0), &provider(0.5), EIGEN_RTOL).unwrap();
        assert!(s.holds);
        assert!((s.smallest_eigenvalue - 0.5).abs() < 1e-15);
        let s = test_strong_positivity(&ModelSpace::sutva(0), &provider(1.0), EIGEN_RTOL).unwrap();
        assert!(!s.holds);
        assert_eq!(s.smallest_eigenvalue, 0.0);
    }

    #[test]
    fn duplicated_basis_fails_strong_positivity() {
        let z = BasisFunction::new(BasisKind::Coordinate { coord: 0 });
        let dup = BasisFunction::custom("z-again", vec![0], |x: &[f64]| x[0]);
        let s = ModelSpace::new(0, vec![BasisFunction::new(BasisKind::Constant), z, dup]).unwrap();
        assert!(!test_strong_positivity(&s, &provider(0.5), EIGEN_RTOL).unwrap().holds);
    }

    #[test]
    fn strong_positivity_implies_positivity_for_random_functionals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &p in &[0.0, 0.2, 0.5, 1.0] {
            let space = Arc::new(ModelSpace::linear_in_means(0, &[1, 2]).unwrap());
            let prov = MomentProvider::exact(Arc::new(Design::bernoulli_uniform(3, p).unwrap()));
            let strong = test_strong_positivity(&space, &prov, EIGEN_RTOL).unwrap();
            let o = gram_schmidt(space.clone(), &prov, DEFAULT_TOL).unwrap();
            for _ in 0..50 {
                let w: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
                let r = test_positivity(&o, &EffectFunctional::coefficient(w)).unwrap();
                if strong.holds {
                    assert!(r.holds);
                }
            }
            assert_eq!(strong.holds, o.b_z().is_empty());
        }
    }
}
