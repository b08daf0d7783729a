//! Effect functionals: linear maps from a model space to the reals,
//! evaluated on basis functions and extended by linearity.

use std::fmt;
use std::sync::Arc;

use crate::designs::{Assignment, Design, MomentProvider};
use crate::error::{Error, Result};
use crate::model_spaces::ModelSpace;

/// Default central-difference step for state derivatives.
pub const STATE_STEP: f64 = 1e-5;
/// Default central-difference step for design derivatives.
pub const DESIGN_STEP: f64 = 1e-4;

/// A one-parameter family of designs, pi -> Design.
#[derive(Clone)]
pub enum DesignPath {
    /// Bernoulli(pi) on every coordinate.
    BernoulliCommon { dimension: usize },
    Custom(Arc<dyn Fn(f64) -> Result<Design> + Send + Sync>),
}

impl DesignPath {
    pub fn design_at(&self, pi: f64) -> Result<Design> {
        match self {
            DesignPath::BernoulliCommon { dimension } => Design::bernoulli_uniform(*dimension, pi),
            DesignPath::Custom(f) => f(pi),
        }
    }
}

impl fmt::Debug for DesignPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignPath::BernoulliCommon { dimension } => write!(f, "BernoulliCommon({dimension})"),
            DesignPath::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FunctionalKind {
    /// f(treated) - f(control)
    Contrast { treated: Assignment, control: Assignment },
    /// sum_z w(z) f(z) over a finitely supported signed measure.
    Integration { measure: Vec<(Assignment, f64)> },
    /// Picks sum_k c_k a_k from the basis coefficients.
    Coefficient { weights: Vec<f64> },
    /// Directional derivative at `point`. When a basis function has no
    /// analytic derivative, `fallback` allows a central difference with `step`.
    Derivative {
        point: Assignment,
        direction: Vec<f64>,
        fallback: bool,
        step: f64,
    },
    /// d/dpi E_pi[f(Z)] at `at`, by central difference of exact moments.
    DesignDerivative { path: DesignPath, at: f64, step: f64 },
}

#[derive(Debug, Clone)]
pub struct EffectFunctional {
    kind: FunctionalKind,
}

impl EffectFunctional {
    pub fn new(kind: FunctionalKind) -> Result<Self> {
        match &kind {
            FunctionalKind::Integration { measure } => {
                if let Some((_, w)) = measure.iter().find(|(_, w)| !w.is_finite()) {
                    return Err(Error::InvalidSpace(format!("non-finite measure weight {w}")));
                }
            }
            FunctionalKind::Derivative { point, direction, step, .. } => {
                if point.dimension() != direction.len() {
                    return Err(Error::LengthMismatch {
                        expected: point.dimension(),
                        found: direction.len(),
                    });
                }
                if !(*step > 0.0) {
                    return Err(Error::InvalidSpace(format!("step {step} must be positive")));
                }
            }
            FunctionalKind::DesignDerivative { step, .. } if !(*step > 0.0) => {
                return Err(Error::InvalidSpace(format!("step {step} must be positive")));
            }
            _ => {}
        }
        Ok(EffectFunctional { kind })
    }

    pub fn contrast(treated: Assignment, control: Assignment) -> Self {
        EffectFunctional {
            kind: FunctionalKind::Contrast { treated, control },
        }
    }

    /// f(z): a point-mass integration functional.
    pub fn evaluation(at: Assignment) -> Self {
        EffectFunctional {
            kind: FunctionalKind::Integration {
                measure: vec![(at, 1.0)],
            },
        }
    }

    pub fn integration(measure: Vec<(Assignment, f64)>) -> Result<Self> {
        Self::new(FunctionalKind::Integration { measure })
    }

    pub fn coefficient(weights: Vec<f64>) -> Self {
        EffectFunctional {
            kind: FunctionalKind::Coefficient { weights },
        }
    }

    pub fn zero() -> Self {
        EffectFunctional {
            kind: FunctionalKind::Integration { measure: Vec::new() },
        }
    }

    /// Partial derivative along coordinate `coord` at `point`, analytic only.
    pub fn partial_derivative(point: Assignment, coord: usize) -> Result<Self> {
        let mut direction = vec![0.0; point.dimension()];
        if coord >= direction.len() {
            return Err(Error::IndexOutOfRange {
                index: coord,
                len: direction.len(),
            });
        }
        direction[coord] = 1.0;
        Self::new(FunctionalKind::Derivative {
            point,
            direction,
            fallback: false,
            step: STATE_STEP,
        })
    }

    pub fn design_derivative(path: DesignPath, at: f64) -> Self {
        EffectFunctional {
            kind: FunctionalKind::DesignDerivative {
                path,
                at,
                step: DESIGN_STEP,
            },
        }
    }

    /// Same functional with the finite-difference fallback switched on.
    pub fn allowing_finite_differences(mut self) -> Self {
        if let FunctionalKind::Derivative { fallback, .. } = &mut self.kind {
            *fallback = true;
        }
        self
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    /// theta(phi_k)
    pub fn apply_to_basis(&self, space: &ModelSpace, k: usize) -> Result<f64> {
        let phi = space.basis_function(k)?;
        match &self.kind {
            FunctionalKind::Contrast { treated, control } => {
                Ok(phi.evaluate(treated.coords()) - phi.evaluate(control.coords()))
            }
            FunctionalKind::Integration { measure } => {
                Ok(measure.iter().map(|(z, w)| w * phi.evaluate(z.coords())).sum())
            }
            FunctionalKind::Coefficient { weights } => {
                if weights.len() != space.dimension() {
                    return Err(Error::LengthMismatch {
                        expected: space.dimension(),
                        found: weights.len(),
                    });
                }
                Ok(weights[k])
            }
            FunctionalKind::Derivative {
                point,
                direction,
                fallback,
                step,
            } => {
                let z = point.coords();
                let mut total = 0.0;
                let mut analytic = true;
                for (c, &dir) in direction.iter().enumerate() {
                    if dir == 0.0 {
                        continue;
                    }
                    match phi.partial_derivative(z, c) {
                        Some(d) => total += dir * d,
                        None => {
                            analytic = false;
                            break;
                        }
                    }
                }
                if analytic {
                    return Ok(total);
                }
                if !fallback {
                    return Err(Error::NonDifferentiable(phi.id().to_string()));
                }
                let shift = |sign: f64| -> Vec<f64> {
                    z.iter().zip(direction).map(|(x, d)| x + sign * step * d).collect()
                };
                Ok((phi.evaluate(&shift(1.0)) - phi.evaluate(&shift(-1.0))) / (2.0 * step))
            }
            FunctionalKind::DesignDerivative { path, at, step } => {
                let expect = |pi: f64| -> Result<f64> {
                    let provider = MomentProvider::exact(Arc::new(path.design_at(pi)?));
                    provider.exact_moment(&[phi])
                };
                Ok((expect(at + step)? - expect(at - step)?) / (2.0 * step))
            }
        }
    }

    /// (theta(phi_0), ..., theta(phi_{d-1}))
    pub fn basis_values(&self, space: &ModelSpace) -> Result<Vec<f64>> {
        (0..space.dimension()).map(|k| self.apply_to_basis(space, k)).collect()
    }

    /// theta(sum_k a_k phi_k)
    pub fn apply(&self, space: &ModelSpace, coefficients: &[f64]) -> Result<f64> {
        if coefficients.len() != space.dimension() {
            return Err(Error::LengthMismatch {
                expected: space.dimension(),
                found: coefficients.len(),
            });
        }
        let values = self.basis_values(space)?;
        Ok(values.iter().zip(coefficients).map(|(t, a)| t * a).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_spaces::{BasisFunction, BasisKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one(z: f64) -> Assignment {
        Assignment::new(vec![z])
    }

    #[test]
    fn sutva_contrast() {
        let theta = EffectFunctional::contrast(one(1.0), one(0.0));
        let s = ModelSpace::sutva(0);
        assert_eq!(theta.apply(&s, &[3.0, 5.0]).unwrap(), -2.0);
    }

    #[test]
    fn coefficient_picks_slope() {
        let theta = EffectFunctional::coefficient(vec![0.0, 1.0]);
        let s = ModelSpace::sutva_linear(0);
        assert_eq!(theta.apply(&s, &[5.0, -2.0]).unwrap(), -2.0);
    }

    #[test]
    fn chebyshev_derivative_at_zero() {
        let s = ModelSpace::chebyshev(0, 0, 11);
        let theta = EffectFunctional::partial_derivative(one(0.0), 0).unwrap();
        let values = theta.basis_values(&s).unwrap();
        // basis index b holds U_b, i.e. the (b+1)-th function
        for (b, v) in values.iter().enumerate() {
            let k = (b + 1) as f64;
            assert!((v - (-k * (std::f64::consts::PI * k / 2.0).cos())).abs() < 1e-9, "k = {k}");
        }
        assert_eq!(values[1], 2.0);
        assert_eq!(values[3], -4.0);
    }

    #[test]
    fn integration_reduces_to_contrast() {
        let theta = EffectFunctional::integration(vec![(one(1.0), 1.0), (one(0.0), -1.0)]).unwrap();
        assert_eq!(theta.apply_to_basis(&ModelSpace::sutva(0), 0).unwrap(), 1.0);
    }

    #[test]
    fn design_derivative_of_bernoulli_mean() {
        let s = ModelSpace::sutva_linear(0);
        let theta = EffectFunctional::design_derivative(DesignPath::BernoulliCommon { dimension: 1 }, 0.5);
        assert!((theta.apply_to_basis(&s, 1).unwrap() - 1.0).abs() < 1e-8);
        assert!(theta.apply_to_basis(&s, 0).unwrap().abs() < 1e-8);
    }

    #[test]
    fn direct_effect_measure() {
        let z = |a: f64, b: f64| Assignment::new(vec![a, b]);
        let theta = EffectFunctional::integration(vec![
            (z(1.0, 1.0), 0.5),
            (z(1.0, 0.0), 0.5),
            (z(0.0, 1.0), -0.5),
            (z(0.0, 0.0), -0.5),
        ])
        .unwrap();
        assert_eq!(theta.apply_to_basis(&ModelSpace::sutva(0), 0).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch() {
        let theta = EffectFunctional::contrast(one(1.0), one(0.0));
        assert!(matches!(
            theta.apply(&ModelSpace::sutva(0), &[1.0]),
            Err(Error::LengthMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn non_differentiable_without_fallback() {
        let s = ModelSpace::sutva(0);
        let theta = EffectFunctional::partial_derivative(one(0.5), 0).unwrap();
        assert!(matches!(theta.apply_to_basis(&s, 0), Err(Error::NonDifferentiable(_))));
        let custom = BasisFunction::custom("cube", vec![0], |z: &[f64]| z[0].powi(3));
        let s = ModelSpace::new(0, vec![custom]).unwrap();
        let fd = EffectFunctional::partial_derivative(one(0.5), 0).unwrap().allowing_finite_differences();
        assert_relative_eq!(fd.apply_to_basis(&s, 0).unwrap(), 0.75, max_relative = 1e-8);
    }

    #[test]
    fn analytic_matches_finite_differences_on_polynomials() {
        for degree in 0..=12u32 {
            for &x in &[-0.8, -0.25, 0.3, 0.9] {
                let p = BasisFunction::new(BasisKind::Power { coord: 0, degree });
                let u = BasisFunction::new(BasisKind::ChebyshevU { coord: 0, degree });
                for f in [p, u] {
                    let analytic = f.partial_derivative(&[x], 0).unwrap();
                    let h = STATE_STEP;
                    let fd = (f.evaluate(&[x + h]) - f.evaluate(&[x - h])) / (2.0 * h);
                    assert!((analytic - fd).abs() <= 1e-6 * analytic.abs().max(1.0), "{} at {x}", f.id());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn apply_is_linear(a in prop::collection::vec(-10.0..10.0f64, 3),
                           b in prop::collection::vec(-10.0..10.0f64, 3),
                           lambda in -5.0..5.0f64) {
            let s = ModelSpace::linear_in_means(0, &[1, 2]).unwrap();
            let thetas = [
                EffectFunctional::contrast(Assignment::new(vec![1.0, 1.0, 0.0]), Assignment::new(vec![0.0, 0.0, 0.0])),
                EffectFunctional::coefficient(vec![0.0, 0.0, 1.0]),
                EffectFunctional::partial_derivative(Assignment::new(vec![0.2, 0.4, 0.6]), 1).unwrap(),
            ];
            for theta in &thetas {
                let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                let scaled: Vec<f64> = a.iter().map(|x| lambda * x).collect();
                let fa = theta.apply(&s, &a).unwrap();
                let fb = theta.apply(&s, &b).unwrap();
                prop_assert!((theta.apply(&s, &sum).unwrap() - fa - fb).abs() <= 1e-12 * (1.0 + fa.abs() + fb.abs()));
                prop_assert!((theta.apply(&s, &scaled).unwrap() - lambda * fa).abs() <= 1e-12 * (1.0 + (lambda * fa).abs()));
            }
        }
    }
}
